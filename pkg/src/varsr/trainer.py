"""Training-set assembly and the SGD loop.

Patch pairs couple a bicubic ILR luminance patch with its residual target
(HR minus ILR). Training pools pairs from all requested scale factors into
one dataset (a single network serves every factor), shuffles with a seeded
generator each epoch, and takes plain SGD steps with element-wise gradient
clipping. Runs are reproducible: same seed, data, and config give a
bit-identical final model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import estimators, network
from .errors import DegenerateInput, DivergenceDetected, InvalidParameter, ShapeMismatch
from .estimators import LossEstimator
from .image_core import ILR_SCALES, RgbImage, make_ilr, patch_grid, rgb_to_luminance
from .network import NetworkModel

PATCH_SIZE = 41
PATCHES_PER_IMAGE = 6

# Table-driven defaults: the adaptive estimator learns faster, so it ships
# with fewer epochs.
DEFAULT_EPOCHS = {estimators.MSE: 8, estimators.VAR_NORM: 5}
DEFAULT_MINI_BATCH = 64
DEFAULT_LEARNING_RATE = 0.1


def default_clip_theta(learning_rate: float) -> float:
    return 0.01 / learning_rate


@dataclass(frozen=True)
class PatchPair:
    """One training observation at a given scale factor."""

    ilr_patch: np.ndarray
    residual_target: np.ndarray
    scale: int
    source: str = ""


@dataclass(frozen=True)
class TrainingConfig:
    estimator: LossEstimator
    epochs: int
    mini_batch: int = DEFAULT_MINI_BATCH
    learning_rate: float = DEFAULT_LEARNING_RATE
    clip_theta: float | None = None  # None resolves to 0.01 / learning_rate
    scales: tuple = ILR_SCALES
    patch_size: int = PATCH_SIZE
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.mini_batch < 1:
            raise InvalidParameter("epochs and mini_batch must be >= 1")
        if not self.learning_rate >= 0:
            raise InvalidParameter("learning rate must be nonnegative")
        if not self.scales:
            raise InvalidParameter("at least one scale factor is required")
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))

    def resolved_clip_theta(self) -> float:
        if self.clip_theta is not None:
            return self.clip_theta
        return default_clip_theta(self.learning_rate if self.learning_rate > 0 else 1.0)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    rmse: float
    loss: float
    seconds: float


def build_dataset(
    images,
    scales=ILR_SCALES,
    patch_size: int = PATCH_SIZE,
    per_image_count: int = PATCHES_PER_IMAGE,
    names=None,
) -> list[PatchPair]:
    """Patch pairs for every (image, scale): exactly len(images) * count * len(scales).

    Per image: extract luminance, build the ILR at each scale, then cut HR
    and ILR with identical anchors and pair each ILR patch with the residual
    HR - ILR patch.
    """
    images = list(images)
    if not images:
        raise DegenerateInput("no input images")
    names = list(names) if names is not None else [f"image[{i}]" for i in range(len(images))]
    pairs = []
    for name, img in zip(names, images):
        if not isinstance(img, RgbImage):
            raise TypeError(f"{name}: expected RgbImage, got {type(img).__name__}")
        if img.height < patch_size or img.width < patch_size:
            raise DegenerateInput(
                f"{name}: {img.height}x{img.width} is smaller than patch size {patch_size}"
            )
        lum = rgb_to_luminance(img)
        grid = patch_grid(img.height, img.width, patch_size, per_image_count)
        for scale in scales:
            ilr = make_ilr(lum, scale)
            for r, c in grid.anchors:
                hr_patch = lum[r : r + patch_size, c : c + patch_size]
                ilr_patch = ilr[r : r + patch_size, c : c + patch_size]
                pairs.append(
                    PatchPair(
                        ilr_patch=ilr_patch.copy(),
                        residual_target=(hr_patch - ilr_patch),
                        scale=int(scale),
                        source=name,
                    )
                )
    return pairs


def epoch_rmse(predictions, targets) -> float:
    """Root of the mean squared element-wise difference."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise ShapeMismatch(
            f"predictions {predictions.shape} and targets {targets.shape} differ"
        )
    return float(np.sqrt(np.mean((predictions - targets) ** 2)))


def _batches(order, size):
    for start in range(0, len(order), size):
        yield order[start : start + size]


def train(model: NetworkModel, data, cfg: TrainingConfig, on_epoch=None):
    """Run SGD and return (trained model copy, per-epoch logs).

    The input model is left untouched. A zero learning rate is a no-op run:
    epochs still execute and log, but weights and provenance metadata come
    back bit-identical to the input's. ``on_epoch`` is called with each
    EpochLog as it completes. Raises DivergenceDetected as soon as a batch
    loss or any parameter stops being finite.
    """
    data = list(data)
    if not data:
        raise DegenerateInput("training dataset is empty")
    model = model.copy()
    if cfg.learning_rate > 0:
        model.estimator = cfg.estimator.kind
        model.scales = cfg.scales
        model.run = {"optimizer": "sgd", "seed": cfg.seed}

    theta = cfg.resolved_clip_theta()
    rng = np.random.default_rng(cfg.seed)
    logs = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(data))
        sq_sum = 0.0
        n_elem = 0
        batch_losses = []
        for b_idx, batch in enumerate(_batches(order, cfg.mini_batch)):
            x = np.stack([data[i].ilr_patch for i in batch])[:, None, :, :]
            t = np.stack([data[i].residual_target for i in batch])[:, None, :, :]
            residual, states = network._forward_states(model, x)
            f = residual - t
            ev = estimators.evaluate(cfg.estimator, f)
            if not np.isfinite(ev.loss):
                raise DivergenceDetected(epoch, b_idx, "non-finite loss")
            grads = network.backward(model, x, ev.gradient, _states=states)
            grads = network.clip_gradients(grads, theta)
            network.sgd_step(model, grads, cfg.learning_rate)
            sq_sum += float(np.sum(f * f))
            n_elem += f.size
            batch_losses.append(ev.loss)
        for layer in model.layers:
            if not (np.isfinite(layer.weights).all() and np.isfinite(layer.biases).all()):
                raise DivergenceDetected(epoch, None, "non-finite parameter")
        log = EpochLog(
            epoch=epoch,
            rmse=float(np.sqrt(sq_sum / n_elem)),
            loss=float(np.mean(batch_losses)),
            seconds=time.perf_counter() - t0,
        )
        logs.append(log)
        if on_epoch is not None:
            on_epoch(log)
    return model, logs
