"""Fusion losses on ``(N, C, H, W)`` tensors.

Every term is a mean over pixels and channels, so neither the image size nor
the channel count rescales it.
"""

import math

import torch
import torch.nn.functional as F

from .config import LossWeights
from .errors import NumericDivergenceError, ShapeError

_LAPLACIAN = torch.tensor([[0.0, 1.0, 0.0],
                           [1.0, -4.0, 1.0],
                           [0.0, 1.0, 0.0]])


def _same_shape(*tensors):
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"shape mismatch: {tuple(shape)} vs {tuple(t.shape)}")


def _as_map(m, like):
    """Broadcast a decision map ``(H, W)``, ``(N, 1, H, W)`` or ``(N, C, H, W)`` against ``like``."""
    m = torch.as_tensor(m, dtype=like.dtype)
    if m.ndim == 2:
        m = m[None, None]
    if m.shape[-2:] != like.shape[-2:]:
        raise ShapeError(f"decision map {tuple(m.shape[-2:])} does not match image {tuple(like.shape[-2:])}")
    return m


def laplacian(x):
    """Per-channel 4-neighbour Laplacian with reflect padding."""
    c = x.shape[1]
    k = _LAPLACIAN.to(x.dtype).expand(c, 1, 3, 3)
    return F.conv2d(F.pad(x, (1, 1, 1, 1), mode="reflect"), k, groups=c)


def content_loss(pred, i_fore, i_back, m, w=None):
    w = w or LossWeights()
    _same_shape(pred, i_fore, i_back)
    m = _as_map(m, pred)
    per_pixel = w.lambda1 * m * (pred - i_fore).abs() + w.lambda2 * (1 - m) * (pred - i_back).abs()
    return per_pixel.mean()


def joint_gradient_loss(pred, i_fore, i_back):
    _same_shape(pred, i_fore, i_back)
    target = torch.maximum(laplacian(i_fore), laplacian(i_back))
    return (laplacian(pred) - target).abs().mean()


def gradient_limit_loss(pred, signed=False):
    """Mean absolute forward difference along x plus along y.

    Each direction is averaged over its own valid differences, so a ramp of
    slope ``c`` scores exactly ``|c|``. ``signed=True`` gives the literal
    signed-sum variant, which can be negative.
    """
    dx = pred[..., :, 1:] - pred[..., :, :-1]
    dy = pred[..., 1:, :] - pred[..., :-1, :]
    if signed:
        return _safe_mean(dx) + _safe_mean(dy)
    return _safe_mean(dx.abs()) + _safe_mean(dy.abs())


def _safe_mean(t):
    return t.mean() if t.numel() else t.new_zeros(())


def total_loss(content, joint_grad, grad_limit, w=None):
    w = w or LossWeights()
    parts = (content, joint_grad, grad_limit)
    for name, part in zip(("content", "joint_grad", "grad_limit"), parts):
        value = float(part.detach())
        if not math.isfinite(value):
            raise NumericDivergenceError(f"non-finite {name} loss: {value}")
    return w.alpha * content + w.beta * joint_grad + w.gamma * grad_limit


def embedding_loss(m_hat, m, i_fore, i_back):
    """Agreement with the handcrafted map plus coverage of both inputs.

    Map terms are per pixel; image terms are averaged over channels first.
    """
    _same_shape(i_fore, i_back)
    m_hat = _as_map(m_hat, i_fore)
    m = _as_map(m, i_fore)
    map_term = (m_hat - m).abs().mean(dim=1)
    fore_term = (m_hat * i_fore - i_fore).abs().mean(dim=1)
    back_term = ((1 - m_hat) * i_back - i_back).abs().mean(dim=1)
    return (map_term + fore_term + back_term).mean()
