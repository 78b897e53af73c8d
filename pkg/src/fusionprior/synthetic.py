"""Synthetic multi-focus data from an all-in-focus ground truth.

Each view keeps its in-focus region sharp and replaces the rest with a
Gaussian-defocused copy of the ground truth; optional downsampling and
additive noise then produce the low-resolution observations.
"""

import numpy as np

from .image_core import as_image, convolve_image, gaussian_kernel, resample


def defocus(img, sigma, size=None):
    size = size or 2 * int(np.ceil(3 * sigma)) + 1
    return convolve_image(img, gaussian_kernel(size, sigma))


def half_mask(height, width, side="left"):
    m = np.zeros((height, width))
    if side == "left":
        m[:, : width // 2] = 1.0
    else:
        m[:, width // 2:] = 1.0
    return m


def _observe(img, downscale, method, noise, rng):
    if downscale != 1:
        img = resample(img, 1 / downscale, method)
    if noise > 0:
        img = img + noise * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)


def split_focus_pair(gt, mask, sigma=2.0, downscale=1, method="lanczos", noise=0.0, seed=0):
    """Foreground view sharp where ``mask`` is 1, background view sharp elsewhere.

    Returns ``(i_fore, i_back, mask_lr)`` where ``mask_lr`` is the true
    foreground mask at the observation resolution.
    """
    gt = as_image(gt)
    mask = np.asarray(mask, dtype=np.float64)
    blurred = defocus(gt, sigma)
    m = mask[:, :, None]
    i_fore = m * gt + (1 - m) * blurred
    i_back = (1 - m) * gt + m * blurred
    rng = np.random.default_rng(seed)
    i_fore = _observe(i_fore, downscale, method, noise, rng)
    i_back = _observe(i_back, downscale, method, noise, rng)
    mask_lr = mask if downscale == 1 else resample(mask, 1 / downscale, "bilinear")
    return i_fore, i_back, (mask_lr > 0.5).astype(np.float64)


def band_masks(height, width, n_bands):
    """Vertical bands, one depth layer each."""
    edges = np.linspace(0, width, n_bands + 1).round().astype(int)
    masks = []
    for k in range(n_bands):
        m = np.zeros((height, width))
        m[:, edges[k]:edges[k + 1]] = 1.0
        masks.append(m)
    return masks


def focal_stack(gt, n_planes=4, sigma_step=1.5, downscale=1, method="lanczos", seed=0):
    """Stack where plane ``k`` is sharp in band ``k`` and defocus grows with band distance.

    Returns ``(planes, masks)`` with masks at the observation resolution.
    """
    gt = as_image(gt)
    h, w = gt.shape[:2]
    masks = band_masks(h, w, n_planes)
    blurred = {0: gt}
    for dist in range(1, n_planes):
        blurred[dist] = defocus(gt, sigma_step * dist)
    rng = np.random.default_rng(seed)
    planes = []
    for k in range(n_planes):
        img = np.zeros_like(gt)
        for j, m in enumerate(masks):
            img += m[:, :, None] * blurred[abs(j - k)]
        planes.append(_observe(img, downscale, method, 0.0, rng))
    if downscale != 1:
        masks = [(resample(m, 1 / downscale, "bilinear") > 0.5).astype(np.float64) for m in masks]
    return planes, masks
