"""Image substrate: color conversion, bicubic resampling, ILR construction, patches.

A "plane" throughout this package is a 2-D float64 numpy array in row-major
(height, width) order whose samples nominally live in [0, 1]. 8-bit values
exist only at the PNG boundary: v = v8 / 255 on read, round(v * 255) clamped
to [0, 255] on write.

Color math uses the BT.601 full-range YCbCr transform:

    Y  = 0.299 R + 0.587 G + 0.114 B
    Cb = 0.5 + (B - Y) / 1.772
    Cr = 0.5 + (R - Y) / 1.402

Resampling uses the cubic convolution kernel with a = -0.5 (Catmull-Rom
family), pixel-center coordinate alignment, and replicated (clamped) border
samples. Kernel weights form a partition of unity, so constant images are
resampled exactly at every scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DegenerateInput, InvalidParameter, ShapeMismatch

ILR_SCALES = (2, 3, 4)

_KR, _KG, _KB = 0.299, 0.587, 0.114


def _check_plane(p: np.ndarray, name: str = "plane") -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
        raise ShapeMismatch(f"{name} must be a nonempty 2-D array, got shape {p.shape}")
    return p


@dataclass(frozen=True)
class RgbImage:
    """Three same-sized planes holding red, green, and blue samples."""

    r: np.ndarray
    g: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        r = _check_plane(self.r, "r")
        g = _check_plane(self.g, "g")
        b = _check_plane(self.b, "b")
        if not (r.shape == g.shape == b.shape):
            raise ShapeMismatch(
                f"RGB planes must share dimensions, got {r.shape}/{g.shape}/{b.shape}"
            )
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "b", b)

    @property
    def height(self) -> int:
        return self.r.shape[0]

    @property
    def width(self) -> int:
        return self.r.shape[1]


@dataclass(frozen=True)
class PatchGrid:
    """Top-left anchors of fixed-size square patches inside a source image."""

    patch_size: int
    anchors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        anchors = tuple((int(r), int(c)) for r, c in self.anchors)
        if len(set(anchors)) != len(anchors):
            raise InvalidParameter("patch anchors must be pairwise distinct")
        object.__setattr__(self, "anchors", anchors)


def rgb_to_luminance(img: RgbImage) -> np.ndarray:
    """BT.601 luminance of an RGB image, clamped to [0, 1]."""
    y = _KR * img.r + _KG * img.g + _KB * img.b
    return np.clip(y, 0.0, 1.0)


def rgb_to_chroma(img: RgbImage) -> tuple[np.ndarray, np.ndarray]:
    """BT.601 full-range (Cb, Cr) planes of an RGB image, clamped to [0, 1]."""
    y = _KR * img.r + _KG * img.g + _KB * img.b
    cb = 0.5 + (img.b - y) / 1.772
    cr = 0.5 + (img.r - y) / 1.402
    return np.clip(cb, 0.0, 1.0), np.clip(cr, 0.0, 1.0)


def ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> RgbImage:
    """Invert the BT.601 full-range transform; output clamped to [0, 1]."""
    y = _check_plane(y, "y")
    cb = _check_plane(cb, "cb")
    cr = _check_plane(cr, "cr")
    if not (y.shape == cb.shape == cr.shape):
        raise ShapeMismatch("Y/Cb/Cr planes must share dimensions")
    r = y + 1.402 * (cr - 0.5)
    b = y + 1.772 * (cb - 0.5)
    g = (y - _KR * r - _KB * b) / _KG
    clip = lambda p: np.clip(p, 0.0, 1.0)
    return RgbImage(clip(r), clip(g), clip(b))


def _cubic_kernel(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel, vectorized over tap distances."""
    at = np.abs(t)
    near = (a + 2.0) * at**3 - (a + 3.0) * at**2 + 1.0
    far = a * at**3 - 5.0 * a * at**2 + 8.0 * a * at - 4.0 * a
    return np.where(at <= 1.0, near, np.where(at < 2.0, far, 0.0))


def _resample_matrix(n_src: int, n_dst: int) -> np.ndarray:
    """(n_dst, n_src) matrix applying 1-D cubic resampling along one axis.

    Destination center x maps to source coordinate (x + 0.5) * n_src/n_dst - 0.5;
    the four taps around it get kernel weights, with sample indices clamped
    into range at the borders (weights are kept, samples replicated).
    """
    scale = n_src / n_dst
    coords = (np.arange(n_dst) + 0.5) * scale - 0.5
    base = np.floor(coords).astype(np.int64)
    mat = np.zeros((n_dst, n_src))
    rows = np.arange(n_dst)
    for tap in range(-1, 3):
        idx = base + tap
        w = _cubic_kernel(coords - idx)
        np.add.at(mat, (rows, np.clip(idx, 0, n_src - 1)), w)
    return mat


def bicubic_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a plane to (out_h, out_w) with the a = -0.5 cubic kernel.

    Separable: rows first, then columns. The result is clamped to [0, 1].
    Exact on constant inputs; the identity when the size is unchanged.
    """
    src = _check_plane(src, "src")
    if out_h < 1 or out_w < 1:
        raise InvalidParameter(f"target size must be positive, got {out_h}x{out_w}")
    h, w = src.shape
    out = _resample_matrix(h, out_h) @ src @ _resample_matrix(w, out_w).T
    return np.clip(out, 0.0, 1.0)


def make_ilr(hr: np.ndarray, factor: int) -> np.ndarray:
    """Interpolated low-resolution version of ``hr`` at an integer scale factor.

    Downsamples to (floor(h/factor), floor(w/factor)) and resamples back to
    the original size, both bicubically. Output dimensions equal the input's.
    """
    hr = _check_plane(hr, "hr")
    if factor not in ILR_SCALES:
        raise InvalidParameter(f"scale factor must be one of {ILR_SCALES}, got {factor}")
    h, w = hr.shape
    if h < factor or w < factor:
        raise DegenerateInput(f"{h}x{w} image cannot be downsampled by {factor}")
    lr = bicubic_resize(hr, h // factor, w // factor)
    return bicubic_resize(lr, h, w)


def residual_target(hr: np.ndarray, ilr: np.ndarray) -> np.ndarray:
    """Element-wise hr - ilr. Not clamped; residual samples may be negative."""
    hr = _check_plane(hr, "hr")
    ilr = _check_plane(ilr, "ilr")
    if hr.shape != ilr.shape:
        raise ShapeMismatch(f"hr {hr.shape} and ilr {ilr.shape} differ in size")
    return hr - ilr


def patch_grid(height: int, width: int, patch_size: int, count: int) -> PatchGrid:
    """Deterministic near-uniform anchor grid for ``count`` square patches.

    Layout is ceil(sqrt(count)) columns by however many rows are needed,
    offsets evenly spaced as floor(j * (dim - patch) / (n - 1)). For the
    canonical count of 6 this yields a 2x3 corner-and-midpoint grid.
    """
    if count < 1:
        raise InvalidParameter(f"patch count must be >= 1, got {count}")
    if patch_size < 1:
        raise InvalidParameter(f"patch size must be >= 1, got {patch_size}")
    if height < patch_size or width < patch_size:
        raise DegenerateInput(
            f"{height}x{width} source smaller than patch size {patch_size}"
        )
    n_cols = math.isqrt(count)
    if n_cols * n_cols < count:
        n_cols += 1
    n_rows = -(-count // n_cols)

    def offsets(extent, n):
        span = extent - patch_size
        if n == 1:
            return [0]
        if span < n - 1:
            raise DegenerateInput(
                f"cannot place {n} distinct offsets in a span of {span} pixels"
            )
        return [span * j // (n - 1) for j in range(n)]

    rows = offsets(height, n_rows)
    cols = offsets(width, n_cols)
    anchors = [(r, c) for r in rows for c in cols][:count]
    return PatchGrid(patch_size, tuple(anchors))


def patchify(src: np.ndarray, patch_size: int, count: int) -> list[np.ndarray]:
    """Cut ``count`` patch_size x patch_size copies out of a plane.

    Patches are returned in row-major anchor order and are independent copies
    of the corresponding sub-arrays.
    """
    src = _check_plane(src, "src")
    grid = patch_grid(src.shape[0], src.shape[1], patch_size, count)
    p = patch_size
    return [src[r : r + p, c : c + p].copy() for r, c in grid.anchors]


def plane_to_u8(plane: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] plane to uint8: round(v * 255) clamped to [0, 255]."""
    return np.clip(np.round(np.asarray(plane) * 255.0), 0, 255).astype(np.uint8)


def u8_to_plane(u8: np.ndarray) -> np.ndarray:
    return np.asarray(u8, dtype=np.float64) / 255.0


def read_rgb_png(path) -> RgbImage:
    """Load an image file as an RgbImage of [0, 1] planes."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return RgbImage(
        u8_to_plane(arr[:, :, 0]), u8_to_plane(arr[:, :, 1]), u8_to_plane(arr[:, :, 2])
    )


def write_rgb_png(path, img: RgbImage) -> None:
    arr = np.stack([plane_to_u8(img.r), plane_to_u8(img.g), plane_to_u8(img.b)], axis=2)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_gray_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return u8_to_plane(np.asarray(im.convert("L")))


def write_gray_png(path, plane: np.ndarray) -> None:
    Image.fromarray(plane_to_u8(plane), mode="L").save(path, format="PNG")
