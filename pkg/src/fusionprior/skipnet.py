"""
Encoder-decoder generator with per-scale skip projections, and the fixed
downsampler that sets the super-resolution factor.

Tensors follow the torch layout ``(N, C, H, W)``; helpers convert from and
to the numpy ``(H, W, C)`` image layout.
"""

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import NetworkConfig
from .errors import ShapeError
from .image_core import resample_matrix, target_size


def _norm(c):
    # batch statistics in every forward pass; there is no train/eval split
    return nn.BatchNorm2d(c, track_running_stats=False)


def _conv_unit(c_in, c_out, k, stride, slope, split):
    """Reflect-padded conv, or two 3x3 convs with norm/activation between them."""
    if not split or k == 3:
        return [nn.ReflectionPad2d(k // 2), nn.Conv2d(c_in, c_out, k, stride=stride)]
    return [nn.ReflectionPad2d(1), nn.Conv2d(c_in, c_out, 3),
            _norm(c_out), nn.LeakyReLU(slope),
            nn.ReflectionPad2d(1), nn.Conv2d(c_out, c_out, 3, stride=stride)]


class EncoderBlock(nn.Sequential):
    def __init__(self, c_in, c_out, k, slope, split):
        super().__init__(
            *_conv_unit(c_in, c_out, k, 1, slope, split), _norm(c_out), nn.LeakyReLU(slope),
            *_conv_unit(c_out, c_out, k, 2, slope, split), _norm(c_out), nn.LeakyReLU(slope),
        )


class DecoderBlock(nn.Module):
    def __init__(self, c_in, c_skip, c_out, k, slope, split):
        super().__init__()
        c_cat = c_in + c_skip
        self.body = nn.Sequential(
            _norm(c_cat),
            *_conv_unit(c_cat, c_out, k, 1, slope, split), _norm(c_out), nn.LeakyReLU(slope),
            *_conv_unit(c_out, c_out, k, 1, slope, split), _norm(c_out), nn.LeakyReLU(slope),
        )

    def forward(self, x, skip):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return self.body(torch.cat([x, skip], dim=1))


class SkipNet(nn.Module):
    """Symmetric encoder-decoder; output passes through a sigmoid."""

    def __init__(self, cfg: NetworkConfig, in_channels=3):
        super().__init__()
        self.cfg = cfg
        self.in_channels = in_channels
        k, slope, split = cfg.kernel_size, cfg.leaky_slope, cfg.use_split_conv
        widths = cfg.encoder_channels
        inputs = (in_channels,) + widths[:-1]
        self.encoders = nn.ModuleList(
            EncoderBlock(inputs[d], widths[d], k, slope, split) for d in range(cfg.depth))
        self.skips = nn.ModuleList(
            nn.Conv2d(inputs[d], cfg.skip_channels[d], 1) for d in range(cfg.depth))
        decoders = []
        for d in range(cfg.depth):
            c_in = widths[d + 1] if d + 1 < cfg.depth else widths[-1]
            decoders.append(DecoderBlock(c_in, cfg.skip_channels[d], widths[d], k, slope, split))
        self.decoders = nn.ModuleList(decoders)
        self.head = nn.Conv2d(widths[0], cfg.output_channels, 1)

    @property
    def multiple(self):
        return 2 ** self.cfg.depth

    def encode(self, x):
        skips = []
        for enc, proj in zip(self.encoders, self.skips):
            skips.append(proj(x))
            x = enc(x)
        return x, skips

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(f"expected (N, {self.in_channels}, H, W) input, got {tuple(x.shape)}")
        if x.shape[2] % self.multiple or x.shape[3] % self.multiple:
            raise ShapeError(f"input size {tuple(x.shape[2:])} not divisible by {self.multiple}; pad first")
        if min(x.shape[2:]) < min_input_size(self.cfg):
            raise ShapeError(f"input size {tuple(x.shape[2:])} below the minimum {min_input_size(self.cfg)}; pad first")
        x, skips = self.encode(x)
        for d in reversed(range(self.cfg.depth)):
            x = self.decoders[d](x, skips[d])
        return torch.sigmoid(self.head(x))


def init_parameters(net, seed):
    """Kaiming-uniform (fan-in) conv weights from a seeded generator, zero biases."""
    gen = torch.Generator().manual_seed(int(seed))
    slope = net.cfg.leaky_slope
    with torch.no_grad():
        for module in net.modules():
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_uniform_(module.weight, a=slope, nonlinearity="leaky_relu", generator=gen)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.BatchNorm2d):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)
    return net


def build_network(cfg=None, seed=0, in_channels=3, dtype=torch.float32):
    net = SkipNet(cfg or NetworkConfig(), in_channels=in_channels)
    init_parameters(net, seed)
    return net.to(dtype)


def parameter_count(net):
    return sum(p.numel() for p in net.parameters())


def image_to_tensor(img, dtype=torch.float32):
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None].to(dtype)


def tensor_to_image(t):
    return t.detach()[0].permute(1, 2, 0).cpu().double().numpy()


def forward(net, z):
    """Run the network on a numpy ``(H, W, C)`` input and return a numpy image."""
    with torch.no_grad():
        return tensor_to_image(net(image_to_tensor(z, next(net.parameters()).dtype)))


def downsample_for_loss(x, scale, method="lanczos"):
    """Fixed, differentiable resize by ``1/scale`` using the image_core operator.

    Accepts a torch tensor ``(N, C, H, W)`` or a numpy ``(H, W, C)`` image.
    """
    if scale not in (1, 2, 4):
        raise ValueError(f"scale must be 1, 2 or 4, got {scale}")
    if isinstance(x, np.ndarray):
        return tensor_to_image(downsample_for_loss(image_to_tensor(x, torch.float64), scale, method))
    h, w = x.shape[-2:]
    if h % scale or w % scale:
        raise ShapeError(f"size {h}x{w} not divisible by scale {scale}")
    if scale == 1:
        return x
    a_h = torch.tensor(np.array(resample_matrix(h, target_size(h, 1 / scale), method)), dtype=x.dtype)
    a_w = torch.tensor(np.array(resample_matrix(w, target_size(w, 1 / scale), method)), dtype=x.dtype)
    return torch.clamp(torch.einsum("ih,nchw,jw->ncij", a_h, x, a_w), 0.0, 1.0)


def save_checkpoint(path, net):
    """Write parameters as shape-tagged arrays in an ``.npz`` container."""
    arrays = {name: p.detach().cpu().numpy() for name, p in net.state_dict().items()}
    np.savez(path, **arrays)


def load_checkpoint(path, net):
    with np.load(path) as data:
        state = {name: torch.from_numpy(data[name]) for name in data.files}
    net.load_state_dict(state)
    return net


def min_input_size(cfg):
    """Smallest padded side length the network accepts.

    The deepest encoder block sees ``size / 2**(depth-1)`` pixels and its
    reflection padding must be smaller than that.
    """
    pad = 1 if cfg.use_split_conv else cfg.kernel_size // 2
    m = 2 ** cfg.depth
    need = 2 ** (cfg.depth - 1) * (pad + 1)
    return -(-need // m) * m


def pad_to_multiple(img, multiple, min_size=0):
    """Reflect-pad an ``(H, W, C)`` array at the bottom/right up to a multiple of ``multiple``.

    Each side is also grown to at least ``min_size``.
    """
    h, w = img.shape[:2]
    ph = max(-(-h // multiple) * multiple, min_size) - h
    pw = max(-(-w // multiple) * multiple, min_size) - w
    if ph == 0 and pw == 0:
        return img
    pad = ((0, ph), (0, pw)) + ((0, 0),) * (img.ndim - 2)
    # numpy folds repeatedly when the pad exceeds the image
    return np.pad(img, pad, mode="reflect")
