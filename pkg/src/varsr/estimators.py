"""Regression-layer loss estimators: MSE and the variance-adaptive estimator.

Both act on a residual matrix F = prediction - target (any shape; training
passes the whole mini-batch residual tensor). The variance-adaptive
estimator rescales every residual element by a single data-dependent slope

    s = 1 / (R + var(abs(F)))

where the variance is the population variance over all elements of F and R
is a positive stability constant. Large estimation errors inflate the
variance and flatten the slope (penalizing them); small errors steepen it.
The slope is treated as a constant of the current iteration: gradients do
not differentiate through var(abs(F)), so the influence is exactly s * x
and the loss is the matching quadratic (s/2) * sum(x^2).

MSE uses loss (1/2N) * sum(x^2) with gradient x / N, so the two estimators
always point in the same direction and differ by a positive batch scalar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, InvalidParameter

DEFAULT_STABILITY_R = 0.1  # convention, not a published value; CLI-overridable

MSE = "mse"
VAR_NORM = "var-norm"


@dataclass(frozen=True)
class LossEstimator:
    """Tagged choice of regression-layer estimator."""

    kind: str
    stability_r: float = DEFAULT_STABILITY_R

    def __post_init__(self):
        if self.kind not in (MSE, VAR_NORM):
            raise InvalidParameter(f"unknown estimator kind {self.kind!r}")
        if self.kind == VAR_NORM and not self.stability_r > 0:
            raise InvalidParameter(
                f"stability parameter must be positive, got {self.stability_r}"
            )

    @classmethod
    def mse(cls) -> "LossEstimator":
        return cls(MSE)

    @classmethod
    def var_norm(cls, stability_r: float = DEFAULT_STABILITY_R) -> "LossEstimator":
        return cls(VAR_NORM, stability_r)


@dataclass(frozen=True)
class LossEvaluation:
    loss: float
    gradient: np.ndarray  # same shape as F
    slope: float  # uniform per-element weight applied to F


def _check_residuals(F) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.size == 0:
        raise DegenerateInput("residual matrix is empty")
    return F


def var_abs(F) -> float:
    """Population variance of the element-wise absolute values of F."""
    F = _check_residuals(F)
    return float(np.var(np.abs(F)))


def varnorm_psi(F, stability_r: float) -> np.ndarray:
    """Influence values x / (R + var(abs(F))), one per residual element.

    The denominator is a single scalar computed from the whole matrix and
    applied uniformly.
    """
    if not stability_r > 0:
        raise InvalidParameter(f"stability parameter must be positive, got {stability_r}")
    F = _check_residuals(F)
    return F / (stability_r + var_abs(F))


def evaluate(est: LossEstimator, F) -> LossEvaluation:
    """Loss value, gradient field, and slope of an estimator on residuals F."""
    F = _check_residuals(F)
    sq_sum = float(np.sum(F * F))
    if est.kind == MSE:
        n = F.size
        return LossEvaluation(loss=sq_sum / (2 * n), gradient=F / n, slope=1.0 / n)
    slope = 1.0 / (est.stability_r + var_abs(F))
    return LossEvaluation(loss=0.5 * slope * sq_sum, gradient=slope * F, slope=slope)
