"""
DoubleReblur focus measurement.

Given a foreground-focused and a background-focused view of the same scene,
estimate the blur relating them, reblur, measure where each view keeps more
high-frequency energy, and clean the resulting binary map with a closing and
a largest-region fill.
"""

import logging

import numpy as np
from scipy import ndimage

from .config import KernelEstConfig, ReblurParams
from .errors import DegenerateInputError, ShapeError
from .image_core import convolve2d, gaussian_blur, luma_plane

log = logging.getLogger(__name__)


def _symmetric_extend(plane):
    """Mirror-extend to a (2H-2, 2W-2) periodic tile.

    A reflect-border convolution of the plane equals a circular convolution
    of this tile, so spectral division does not see wrap-around seams.
    """
    p = plane
    if p.shape[0] > 2:
        p = np.concatenate([p, p[-2:0:-1]], axis=0)
    if p.shape[1] > 2:
        p = np.concatenate([p, p[:, -2:0:-1]], axis=1)
    return p


def _centered_crop(kernel_full, support):
    k = np.fft.fftshift(kernel_full)
    cy, cx = k.shape[0] // 2, k.shape[1] // 2
    r = support // 2
    if cy < r or cx < r:
        raise ShapeError(f"planes too small for kernel support {support}")
    return k[cy - r:cy + r + 1, cx - r:cx + r + 1]


def estimate_spread_kernel(i_fore, i_back, cfg=None):
    """Estimate the kernel ``h`` with ``i_back ~= i_fore * h``.

    Regularized spectral division ``B conj(F) / (|F|^2 + eps)`` on the
    mirror-extended planes. ``eps`` is the configured floor plus
    ``noise_scale`` times the residual variance left by a first,
    support-limited estimate, so identical inputs give a near-delta kernel
    while noisy pairs are damped. The ratio spectrum is then low-pass
    smoothed, transformed back, cropped to ``support``, clamped to be
    nonnegative and normalized to unit sum.
    """
    cfg = cfg or KernelEstConfig()
    f = np.asarray(i_fore, dtype=np.float64)
    b = np.asarray(i_back, dtype=np.float64)
    if f.shape != b.shape or f.ndim != 2:
        raise ShapeError(f"planes must be equal 2-D shapes, got {f.shape} and {b.shape}")
    if np.ptp(f) == 0 or np.ptp(b) == 0:
        raise DegenerateInputError("constant input plane: spread kernel is undefined")
    if min(f.shape) < cfg.support:
        raise ShapeError(f"planes {f.shape} smaller than kernel support {cfg.support}")

    spec_f = np.fft.fft2(_symmetric_extend(f), norm="ortho")
    spec_b = np.fft.fft2(_symmetric_extend(b), norm="ortho")
    power = np.abs(spec_f) ** 2
    cross = spec_b * np.conj(spec_f)

    eps = cfg.epsilon
    if cfg.noise_scale > 0:
        rough = _centered_crop(np.real(np.fft.ifft2(cross / (power + eps))), cfg.support)
        residual = b - convolve2d(f, rough)
        eps = eps + cfg.noise_scale * float(residual.var())

    ratio = cross / (power + eps)
    if cfg.lowpass_sigma > 0:
        ratio = (ndimage.gaussian_filter(ratio.real, cfg.lowpass_sigma, mode="wrap")
                 + 1j * ndimage.gaussian_filter(ratio.imag, cfg.lowpass_sigma, mode="wrap"))
    kernel = _centered_crop(np.real(np.fft.ifft2(ratio)), cfg.support)
    kernel = np.clip(kernel, 0.0, None)
    total = kernel.sum()
    if not np.isfinite(total) or total <= 0:
        raise DegenerateInputError("spread kernel estimate has no positive mass")
    return kernel / total


def reblur(plane, kernel):
    return convolve2d(plane, kernel)


def _normalize(s):
    hi = s.max()
    lo = s.min()
    if hi - lo <= 0:
        return np.zeros_like(s)
    return (s - lo) / (hi - lo)


def sharpness_map(reblurred, k_g):
    """Pixelwise change under a second, Gaussian reblur (sigma = k_g / 3)."""
    r = np.asarray(reblurred, dtype=np.float64)
    return np.abs(r - gaussian_blur(r, k_g, k_g / 3.0))


def sharpness_difference(reblurred, params, reference=None):
    """Sharpness plane in [0, 1].

    With one plane: ``|r - G(r)|`` min-max normalized. With a ``reference``
    plane (the other reblurred view): both change maps are averaged over a
    Gaussian window of width ``k_g`` and the positive part of their
    difference is normalized, so the result is high only where
    ``reblurred`` is the sharper view.
    """
    s = sharpness_map(reblurred, params.k_g)
    if reference is None:
        return _normalize(s)
    s_ref = sharpness_map(reference, params.k_g)
    energy = ndimage.gaussian_filter(s, params.k_g, mode="mirror")
    energy_ref = ndimage.gaussian_filter(s_ref, params.k_g, mode="mirror")
    diff = np.clip(energy - energy_ref, 0.0, None)
    hi = diff.max()
    # relative floor: differences at round-off level mean "no evidence"
    if hi <= 1e-12 * max(energy.max(), energy_ref.max(), 1e-300):
        return np.zeros_like(diff)
    return diff / hi


def segment_threshold(s, t):
    return (np.asarray(s) > t).astype(np.uint8)


def morph_close(d, k_d, k_e):
    """Square-element dilation (k_d) then erosion (k_e), reflect borders."""
    for name, k in (("k_d", k_d), ("k_e", k_e)):
        if k < 1 or k % 2 == 0:
            raise ValueError(f"{name} must be odd and >= 1, got {k}")
    m = np.asarray(d, dtype=np.uint8)
    m = ndimage.grey_dilation(m, size=(k_d, k_d), mode="mirror")
    m = ndimage.grey_erosion(m, size=(k_e, k_e), mode="mirror")
    return m


def largest_region_fill(d, f):
    """Keep the largest 4-connected foreground component and fill its interior holes."""
    d = np.asarray(d, dtype=np.uint8)
    if not f:
        return d
    labels, n = ndimage.label(d)
    if n == 0:
        return d
    sizes = np.bincount(labels.ravel())[1:]
    keep = labels == (1 + int(np.argmax(sizes)))
    return ndimage.binary_fill_holes(keep).astype(np.uint8)


def compute_decision_map(i_fore, i_back, params=None, cfg=None):
    """Binary foreground decision map at the input resolution.

    The complement ``1 - m`` is the background map.
    """
    params = params or ReblurParams()
    cfg = cfg or KernelEstConfig()
    y_f = luma_plane(i_fore)
    y_b = luma_plane(i_back)
    if y_f.shape != y_b.shape:
        raise ShapeError(f"input sizes differ: {y_f.shape} vs {y_b.shape}")

    kernel = estimate_spread_kernel(y_f, y_b, cfg)
    reblurred_b = reblur(y_b, kernel)
    reblurred_f = reblur(y_f, kernel)
    s = sharpness_difference(reblurred_f, params, reference=reblurred_b)
    d = segment_threshold(s, params.t)
    d = morph_close(d, params.k_d, params.k_e)
    m = largest_region_fill(d, params.f)

    if m.min() == m.max():
        log.warning("decision map is uniform (%d); falling back to an all-foreground map", int(m[0, 0]))
        m = np.ones_like(m)
    return m.astype(np.float64)

