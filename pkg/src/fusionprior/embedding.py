"""Learned refinement of a handcrafted decision map.

A one-channel generator is fitted so that its output agrees with the
handcrafted map while covering the content of both inputs; the map is
binarized once optimization ends.
"""

import json
import logging
from dataclasses import dataclass, replace

import numpy as np
import torch

from .config import EmbeddingConfig, NetworkConfig
from .errors import ShapeError
from .losses import embedding_loss
from .skipnet import build_network, image_to_tensor, min_input_size, pad_to_multiple

log = logging.getLogger(__name__)


@dataclass
class EmbeddingResult:
    decision_map: np.ndarray
    continuous_map: np.ndarray
    loss_trace: list


def embedding_input(i_fore, i_back, cfg):
    if cfg.input_mode == "noise":
        rng = np.random.default_rng(cfg.seed)
        return rng.uniform(0.0, 0.1, size=np.shape(i_fore))
    return 0.5 * (np.asarray(i_fore, dtype=np.float64) + np.asarray(i_back, dtype=np.float64))


def optimize_decision_map(i_fore, i_back, m_handcrafted, cfg=None, network=None):
    """Refine ``m_handcrafted`` and return an :class:`EmbeddingResult`.

    By default the continuous network output is optimized and thresholded
    at the end. ``cfg.straight_through`` instead thresholds inside the loop
    and passes gradients straight through the hard step.
    """
    cfg = cfg or EmbeddingConfig()
    i_fore = np.asarray(i_fore, dtype=np.float64)
    i_back = np.asarray(i_back, dtype=np.float64)
    if i_fore.ndim == 2:
        i_fore, i_back = i_fore[:, :, None], i_back[:, :, None]
    m_handcrafted = np.asarray(m_handcrafted, dtype=np.float64)
    if i_fore.shape != i_back.shape or m_handcrafted.shape != i_fore.shape[:2]:
        raise ShapeError(f"shape mismatch: {i_fore.shape}, {i_back.shape}, map {m_handcrafted.shape}")
    h, w = m_handcrafted.shape

    net_cfg = replace(network or NetworkConfig(), output_channels=1)
    net = build_network(net_cfg, seed=cfg.seed, in_channels=i_fore.shape[2])
    z = embedding_input(i_fore, i_back, cfg)
    z = image_to_tensor(pad_to_multiple(z, 2 ** net_cfg.depth, min_input_size(net_cfg)))
    f_t = image_to_tensor(i_fore)
    b_t = image_to_tensor(i_back)
    m_t = image_to_tensor(m_handcrafted)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)

    trace = []
    for it in range(1, cfg.iterations + 1):
        opt.zero_grad()
        m_hat = net(z)[..., :h, :w]
        if cfg.straight_through:
            hard = (m_hat > cfg.binarize_threshold).to(m_hat.dtype)
            m_hat = m_hat + (hard - m_hat).detach()
        loss = embedding_loss(m_hat, m_t, f_t, b_t)
        loss.backward()
        opt.step()
        trace.append((it, float(loss.detach())))
        log.debug(json.dumps({"stage": "embedding", "iteration": it, "L_opt": trace[-1][1]}))

    with torch.no_grad():
        continuous = net(z)[0, 0, :h, :w].double().numpy()
    binary = (continuous > cfg.binarize_threshold).astype(np.float64)
    return EmbeddingResult(binary, continuous, trace)
