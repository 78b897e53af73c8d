import numpy as np
import pytest
import torch

from fusionprior.config import NetworkConfig
from fusionprior.errors import ShapeError
from fusionprior.image_core import resample
from fusionprior.skipnet import (
    build_network, downsample_for_loss, forward, image_to_tensor, load_checkpoint, min_input_size,
    pad_to_multiple, parameter_count, save_checkpoint,
)

TINY = NetworkConfig(depth=2, kernel_size=3, encoder_channels=(4, 8), skip_channels=(2, 2))


def closed_form_count(cfg, c_in, c_out):
    conv = lambda a, b, k: a * b * k * k + b
    bn = lambda c: 2 * c
    w = cfg.encoder_channels
    ins = (c_in,) + w[:-1]
    total = conv(w[0], c_out, 1)
    for d in range(cfg.depth):
        total += conv(ins[d], w[d], cfg.kernel_size) + conv(w[d], w[d], cfg.kernel_size) + 2 * bn(w[d])
        total += conv(ins[d], cfg.skip_channels[d], 1)
        c_cat = (w[d + 1] if d + 1 < cfg.depth else w[-1]) + cfg.skip_channels[d]
        total += bn(c_cat) + conv(c_cat, w[d], cfg.kernel_size) + conv(w[d], w[d], cfg.kernel_size) + 2 * bn(w[d])
    return total


def test_parameter_count_default():
    net = build_network(NetworkConfig())
    assert parameter_count(net) == closed_form_count(NetworkConfig(), 3, 3) == 3_718_059


def test_central_map_size():
    net = build_network(NetworkConfig())
    x = torch.rand(1, 3, 256, 256)
    center, skips = net.encode(x)
    assert center.shape[-2:] == (8, 8)
    assert [s.shape[-1] for s in skips] == [256, 128, 64, 32, 16]


def test_shape_and_range():
    net = build_network(NetworkConfig())
    out = forward(net, np.random.default_rng(0).random((64, 96, 3)))
    assert out.shape == (64, 96, 3)
    assert out.min() > 0 and out.max() < 1


def test_single_output_channel():
    net = build_network(NetworkConfig(output_channels=1), in_channels=3)
    assert forward(net, np.random.default_rng(0).random((64, 64, 3))).shape == (64, 64, 1)


def test_seeded_init():
    a, b = build_network(TINY, seed=5), build_network(TINY, seed=5)
    c = build_network(TINY, seed=6)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert any(not torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters()))


def test_indivisible_input():
    net = build_network(TINY)
    with pytest.raises(ShapeError):
        net(torch.rand(1, 3, 18, 16))
    with pytest.raises(ShapeError):
        net(torch.rand(1, 1, 16, 16))


def test_minimum_size():
    cfg = NetworkConfig()
    assert min_input_size(cfg) == 64
    net = build_network(cfg)
    with pytest.raises(ShapeError):
        net(torch.rand(1, 3, 32, 32))
    small = np.random.default_rng(0).random((8, 8, 3))
    padded = pad_to_multiple(small, 32, min_input_size(cfg))
    assert padded.shape == (64, 64, 3)
    assert np.array_equal(padded[:8, :8], small)


def test_split_conv_builds():
    cfg = NetworkConfig(depth=2, kernel_size=5, encoder_channels=(4, 8), skip_channels=(2, 2), use_split_conv=True)
    net = build_network(cfg)
    assert forward(net, np.random.default_rng(0).random((16, 16, 3))).shape == (16, 16, 3)
    assert not any(m.kernel_size == (5, 5) for m in net.modules() if isinstance(m, torch.nn.Conv2d))


def test_receptive_field_probe():
    net = build_network(TINY, dtype=torch.float64)
    z = np.random.default_rng(1).random((16, 16, 3))
    z2 = z.copy()
    z2[8, 8, 0] += 0.1
    assert np.abs(forward(net, z2) - forward(net, z)).max() > 1e-8


def test_parameter_gradients_match_finite_differences():
    cfg = NetworkConfig(depth=2, kernel_size=5, encoder_channels=(4, 8), skip_channels=(4, 4))
    net = build_network(cfg, seed=0, dtype=torch.float64)
    z = torch.rand(1, 3, 16, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
    net.zero_grad()
    net(z).sum().backward()
    rng = np.random.default_rng(0)
    # two steps: the larger can straddle a LeakyReLU kink, the smaller hits
    # round-off; a wrong gradient disagrees at both
    worst = 0.0
    with torch.no_grad():
        for p in net.parameters():
            flat = p.view(-1)
            grad = p.grad.view(-1)
            for i in rng.choice(flat.numel(), size=min(8, flat.numel()), replace=False):
                old = flat[i].item()
                an = grad[i].item()
                errs = []
                for h in (1e-5, 1e-6):
                    flat[i] = old + h
                    up = net(z).sum().item()
                    flat[i] = old - h
                    down = net(z).sum().item()
                    flat[i] = old
                    fd = (up - down) / (2 * h)
                    errs.append(abs(fd - an) / max(abs(fd), abs(an), 1e-4))
                worst = max(worst, min(errs))
    assert worst < 1e-3


def test_downsample_shape_and_constant():
    x = torch.full((1, 3, 512, 512), 0.3)
    y = downsample_for_loss(x, 2)
    assert y.shape == (1, 3, 256, 256)
    assert torch.allclose(y, torch.tensor(0.3), atol=1e-6)


def test_downsample_matches_resample():
    yy, xx = np.mgrid[0:64, 0:64] / 63.0
    img = np.stack([0.2 + 0.6 * xx, 0.1 + 0.5 * yy * xx, 0.9 - 0.7 * yy], axis=2)
    for method in ("bilinear", "bicubic", "lanczos"):
        assert np.allclose(downsample_for_loss(img, 2, method), resample(img, 0.5, method), atol=1e-6)


def test_downsample_errors():
    with pytest.raises(ValueError):
        downsample_for_loss(torch.rand(1, 1, 12, 12), 3)
    with pytest.raises(ShapeError):
        downsample_for_loss(torch.rand(1, 1, 10, 12), 4)


def test_downsample_is_differentiable():
    x = torch.rand(1, 1, 16, 16, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda t: downsample_for_loss(t * 0.5 + 0.25, 2), (x,))


def test_pad_to_multiple():
    z = np.random.default_rng(0).random((200, 200, 3))
    padded = pad_to_multiple(z, 32)
    assert padded.shape == (224, 224, 3)
    assert np.array_equal(padded[:200, :200], z)
    assert np.array_equal(padded[200, :200], z[198, :200])
    assert pad_to_multiple(z[:, :, 0][:, :, None], 8).shape == (200, 200, 1)


def test_checkpoint_roundtrip(tmp_path):
    a = build_network(TINY, seed=1)
    b = build_network(TINY, seed=2)
    save_checkpoint(tmp_path / "net.npz", a)
    load_checkpoint(tmp_path / "net.npz", b)
    z = image_to_tensor(np.random.default_rng(0).random((16, 16, 3)))
    with torch.no_grad():
        assert torch.equal(a(z), b(z))
