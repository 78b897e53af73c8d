"""
Image primitives: luma, resampling, convolution, kernels, and 8-bit I/O.

Conventions
-----------
* An image is a float ``(H, W, C)`` array with C in {1, 3} and values in [0, 1].
* A plane is a float ``(H, W)`` array (may be signed).
* Spatial filters use reflect borders that do not repeat the edge sample
  (``d c b | a b c d | c b a``), the same rule as ``torch.nn.ReflectionPad2d``.
* Resampling uses a corner-aligned grid: the first and last samples of the
  input and output coincide, so maps computed at one scale stay registered
  with images at another.
"""

from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .errors import ShapeError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0],
                             [1.0, -4.0, 1.0],
                             [0.0, 1.0, 0.0]])


def as_image(arr):
    """Coerce to a float64 ``(H, W, C)`` array clamped to [0, 1]."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ShapeError(f"expected HxW, HxWx1 or HxWx3 image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return np.clip(img, 0.0, 1.0)


def to_luma(img):
    """BT.601 luma of an RGB image."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"to_luma needs a 3-channel image, got shape {img.shape}")
    return img @ LUMA_WEIGHTS


def luma_plane(img):
    """Luma for RGB input, the single channel for grayscale input."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[:, :, 0]
    return to_luma(img)


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def _triangle(x):
    return np.clip(1.0 - np.abs(x), 0.0, None)


def _keys_cubic(x, a=-0.5):
    x = np.abs(x)
    out = np.zeros_like(x)
    near = x <= 1
    far = (x > 1) & (x < 2)
    out[near] = (a + 2) * x[near] ** 3 - (a + 3) * x[near] ** 2 + 1
    out[far] = a * x[far] ** 3 - 5 * a * x[far] ** 2 + 8 * a * x[far] - 4 * a
    return out


def _lanczos3(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < 3, np.sinc(x) * np.sinc(x / 3), 0.0)


_FILTERS = {
    "bilinear": (_triangle, 1.0),
    "bicubic": (_keys_cubic, 2.0),
    "lanczos": (_lanczos3, 3.0),
}


def mirror_index(idx, n):
    """Fold integer indices into [0, n) by reflection without edge repeat."""
    idx = np.asarray(idx)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


@lru_cache(maxsize=64)
def resample_matrix(n_in, n_out, method):
    """Dense ``(n_out, n_in)`` 1-D resampling operator.

    Rows sum to one, so constants are reproduced exactly. When shrinking,
    the filter is stretched by the step size to suppress aliasing.
    """
    if method not in _FILTERS:
        raise ValueError(f"unknown resampling method {method!r}; use one of {sorted(_FILTERS)}")
    kernel, support = _FILTERS[method]
    if n_out == 1:
        centers = np.array([(n_in - 1) / 2.0])
        step = float(n_in)
    else:
        step = (n_in - 1) / (n_out - 1)
        centers = np.arange(n_out) * step
    stretch = max(1.0, step)
    radius = support * stretch
    mat = np.zeros((n_out, n_in))
    for i, c in enumerate(centers):
        taps = np.arange(int(np.ceil(c - radius)), int(np.floor(c + radius)) + 1)
        w = kernel((taps - c) / stretch)
        np.add.at(mat[i], mirror_index(taps, n_in), w)
        mat[i] /= mat[i].sum()
    mat.setflags(write=False)
    return mat


def target_size(n, scale):
    out = Fraction(scale).limit_denominator(10_000) * n
    if out.denominator != 1:
        raise ValueError(f"scale {scale} does not map size {n} to an integer")
    return int(out)


def resample(img, scale, method="bicubic"):
    """Resize an image (or plane) by a rational factor on the corner-aligned grid."""
    arr = np.asarray(img, dtype=np.float64)
    if scale <= 0:
        raise ValueError("scale must be positive")
    h, w = arr.shape[:2]
    out_h, out_w = target_size(h, scale), target_size(w, scale)
    if out_h < 4 or out_w < 4:
        raise ValueError(f"resampled size {out_h}x{out_w} is below the 4x4 minimum")
    a_h = resample_matrix(h, out_h, method)
    a_w = resample_matrix(w, out_w, method)
    if arr.ndim == 2:
        out = a_h @ arr @ a_w.T
    else:
        # rows then columns; a single three-operand einsum would not factor the sum
        out = np.einsum("iwc,jw->ijc", np.tensordot(a_h, arr, axes=(1, 0)), a_w, optimize=True)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Convolution and kernels
# ---------------------------------------------------------------------------

def convolve2d(plane, kernel):
    """True 2-D convolution of a plane with an odd square kernel, reflect borders."""
    p = np.asarray(plane, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    if p.ndim != 2 or k.ndim != 2:
        raise ValueError("convolve2d expects 2-D plane and kernel")
    if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ValueError(f"kernel dimensions must be odd, got {k.shape}")
    if k.shape[0] > p.shape[0] or k.shape[1] > p.shape[1]:
        raise ValueError(f"kernel {k.shape} larger than plane {p.shape}")
    # scipy's 'mirror' mode is the edge-excluding reflection used everywhere here
    return ndimage.convolve(p, k, mode="mirror")


def convolve_image(img, kernel):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return convolve2d(img, kernel)
    return np.stack([convolve2d(img[:, :, c], kernel) for c in range(img.shape[2])], axis=2)


def gaussian_kernel(size, sigma):
    """Isotropic sampled Gaussian, normalized to unit sum."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be an odd integer >= 1, got {size}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = np.arange(size) - size // 2
    r2 = r[:, None] ** 2 + r[None, :] ** 2
    # subtract the min exponent so tiny sigmas stay finite at the center tap
    k = np.exp(-(r2 - r2.min()) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(plane, size, sigma):
    return convolve2d(plane, gaussian_kernel(size, sigma))


def laplacian_map(plane):
    """4-neighbour discrete Laplacian with reflect borders."""
    p = np.asarray(plane, dtype=np.float64)
    return ndimage.convolve(p, LAPLACIAN_KERNEL, mode="mirror")


# ---------------------------------------------------------------------------
# 8-bit file I/O
# ---------------------------------------------------------------------------

def load_image(path):
    """Read an 8-bit PNG/JPEG into a float image in [0, 1]."""
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        if im.mode in ("L", "I;16", "I", "F"):
            arr = np.asarray(im.convert("L"), dtype=np.float64)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def to_uint8(img):
    """Round half up to 8-bit after clamping."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8)


def save_image(path, img):
    from PIL import Image as PILImage

    arr = to_uint8(img)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    PILImage.fromarray(arr).save(path)
