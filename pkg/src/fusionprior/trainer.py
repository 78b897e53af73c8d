"""Per-instance optimization loop that fuses and super-resolves a focus pair."""

import json
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .config import FusionConfig
from .doublereblur import compute_decision_map
from .embedding import optimize_decision_map
from .errors import NumericDivergenceError, ShapeError
from .image_core import as_image, resample
from .losses import content_loss, gradient_limit_loss, joint_gradient_loss, total_loss
from .skipnet import build_network, downsample_for_loss, image_to_tensor, min_input_size, pad_to_multiple, tensor_to_image

log = logging.getLogger(__name__)

TRACE_FIELDS = ("iteration", "content", "joint_grad", "grad_limit", "total")


@dataclass
class FusionResult:
    fused: np.ndarray
    decision_map: np.ndarray
    loss_trace: list = field(default_factory=list)
    wall_time: float = 0.0
    handcrafted_map: np.ndarray = None


def _pair(i_fore, i_back):
    i_fore, i_back = as_image(i_fore), as_image(i_back)
    if i_fore.shape != i_back.shape:
        raise ShapeError(f"input sizes differ: {i_fore.shape} vs {i_back.shape}")
    if min(i_fore.shape[:2]) < 8:
        raise ShapeError(f"inputs must be at least 8x8, got {i_fore.shape[:2]}")
    return i_fore, i_back


def prepare_input(i_fore, i_back, cfg=None):
    """Network input at ``scale`` times the input size, padded to a multiple of ``2**depth``."""
    cfg = cfg or FusionConfig()
    i_fore, i_back = _pair(i_fore, i_back)
    h, w, c = i_fore.shape
    if cfg.input_mode == "noise":
        rng = np.random.default_rng(cfg.seed)
        z = rng.uniform(0.0, 0.1, size=(h * cfg.scale, w * cfg.scale, c))
    else:
        z = resample(0.5 * (i_fore + i_back), cfg.scale, "bicubic")
    return pad_to_multiple(z, 2 ** cfg.network.depth, min_input_size(cfg.network))


def decision_map_for(i_fore, i_back, cfg):
    """Handcrafted map, then the learned refinement when enabled.

    Returns ``(map, handcrafted)``.
    """
    m = compute_decision_map(i_fore, i_back, cfg.reblur, cfg.kernel_est)
    if cfg.embedding is None:
        return m, m
    refined = optimize_decision_map(i_fore, i_back, m, cfg.embedding, cfg.network)
    return refined.decision_map, m


def fuse_pair(i_fore, i_back, cfg=None):
    cfg = cfg or FusionConfig()
    start = time.perf_counter()
    i_fore, i_back = _pair(i_fore, i_back)
    h, w, c = i_fore.shape
    out_h, out_w = h * cfg.scale, w * cfg.scale

    m, handcrafted = decision_map_for(i_fore, i_back, cfg)

    z = image_to_tensor(prepare_input(i_fore, i_back, cfg))
    net = build_network(replace(cfg.network, output_channels=c), seed=cfg.seed, in_channels=c)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    jitter = torch.Generator().manual_seed(cfg.seed + 1)

    f_t, b_t = image_to_tensor(i_fore), image_to_tensor(i_back)
    m_t = image_to_tensor(m)
    w_cfg = cfg.weights

    trace = []
    for it in range(1, cfg.iterations + 1):
        opt.zero_grad()
        z_in = z
        if cfg.noise_perturb_sigma > 0:
            z_in = z + cfg.noise_perturb_sigma * torch.randn(z.shape, generator=jitter, dtype=z.dtype)
        pred_hr = net(z_in)[..., :out_h, :out_w]
        pred_lr = downsample_for_loss(pred_hr, cfg.scale, cfg.downsample_method)
        l_con = content_loss(pred_lr, f_t, b_t, m_t, w_cfg)
        l_jg = joint_gradient_loss(pred_lr, f_t, b_t)
        l_gl = gradient_limit_loss(pred_hr, signed=w_cfg.signed_grad_limit)
        try:
            loss = total_loss(l_con, l_jg, l_gl, w_cfg)
        except NumericDivergenceError as exc:
            raise NumericDivergenceError(f"iteration {it}: {exc}", iteration=it) from None
        loss.backward()
        opt.step()
        record = (it,) + tuple(float(v.detach()) for v in (l_con, l_jg, l_gl, loss))
        trace.append(record)
        if log.isEnabledFor(logging.DEBUG):
            log.debug(json.dumps(dict(zip(TRACE_FIELDS, record))))

    with torch.no_grad():
        fused = tensor_to_image(net(z)[..., :out_h, :out_w])
    return FusionResult(np.clip(fused, 0.0, 1.0), m, trace, time.perf_counter() - start, handcrafted)


def fuse_stack(stack, cfg=None):
    """Adjacent-first cascade: fold the stack left to right.

    All but the last fusion run at scale 1; the last uses ``cfg.scale``.
    """
    cfg = cfg or FusionConfig()
    stack = list(stack)
    if len(stack) < 2:
        raise ValueError(f"fuse_stack needs at least 2 images, got {len(stack)}")
    shape = as_image(stack[0]).shape
    for k, img in enumerate(stack[1:], 1):
        if as_image(img).shape != shape:
            raise ShapeError(f"stack image {k} has shape {as_image(img).shape}, expected {shape}")
    acc = stack[0]
    result = None
    for k in range(1, len(stack)):
        last = k == len(stack) - 1
        step_cfg = cfg if last else replace(cfg, scale=1)
        result = fuse_pair(acc, stack[k], step_cfg)
        acc = result.fused
        log.info("stack fusion %d/%d done in %.1fs", k, len(stack) - 1, result.wall_time)
    return result
