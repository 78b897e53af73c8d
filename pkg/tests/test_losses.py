import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from fusionprior.config import LossWeights
from fusionprior.errors import NumericDivergenceError, ShapeError
from fusionprior.image_core import laplacian_map
from fusionprior.losses import (
    content_loss, embedding_loss, gradient_limit_loss, joint_gradient_loss, laplacian, total_loss,
)


def rand(*shape, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(*shape, dtype=torch.float64, generator=g)


def fd_check(fn, x, h=1e-6):
    """Largest relative error between autograd and central differences."""
    x = x.clone().requires_grad_(True)
    fn(x).backward()
    an = x.grad.view(-1)
    worst = 0.0
    with torch.no_grad():
        flat = x.detach().clone().view(-1)
        for i in range(flat.numel()):
            old = flat[i].item()
            flat[i] = old + h
            up = fn(flat.view_as(x)).item()
            flat[i] = old - h
            down = fn(flat.view_as(x)).item()
            flat[i] = old
            fd = (up - down) / (2 * h)
            worst = max(worst, abs(fd - an[i].item()) / max(abs(fd), abs(an[i].item()), 1e-3))
    return worst


class TestContent:
    def test_exact_composite(self):
        f, b = rand(1, 3, 8, 8, seed=1), rand(1, 3, 8, 8, seed=2)
        m = (rand(8, 8, seed=3) > 0.5).double()
        assert content_loss(m * f + (1 - m) * b, f, b, m) == 0

    def test_hand_case(self):
        m = torch.tensor([[1.0, 1.0], [0.0, 0.0]])
        pred = torch.full((1, 1, 2, 2), 0.5)
        f, b = torch.full((1, 1, 2, 2), 0.7), torch.full((1, 1, 2, 2), 0.1)
        assert content_loss(pred, f, b, m).item() == pytest.approx(0.3, abs=1e-7)

    def test_swap_symmetry(self):
        p, f, b = rand(1, 3, 6, 6, seed=1), rand(1, 3, 6, 6, seed=2), rand(1, 3, 6, 6, seed=3)
        m = (rand(6, 6, seed=4) > 0.5).double()
        assert content_loss(p, f, b, m).item() == pytest.approx(content_loss(p, b, f, 1 - m).item(), abs=1e-15)

    def test_monotone(self):
        f, b = rand(1, 1, 4, 4, seed=1), rand(1, 1, 4, 4, seed=2)
        m = torch.ones(4, 4)
        p = f.clone()
        values = []
        for delta in (0.0, 0.1, 0.2):
            p[0, 0, 1, 1] = f[0, 0, 1, 1] + delta
            values.append(content_loss(p, f, b, m).item())
        assert values == sorted(values)

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            content_loss(rand(1, 3, 4, 4), rand(1, 3, 4, 5), rand(1, 3, 4, 4), torch.ones(4, 4))
        with pytest.raises(ShapeError):
            content_loss(rand(1, 3, 4, 4), rand(1, 3, 4, 4), rand(1, 3, 4, 4), torch.ones(3, 4))


class TestJointGradient:
    def test_zero_cases(self):
        x = rand(1, 3, 8, 8)
        assert joint_gradient_loss(x, x, x) == 0
        c = lambda v: torch.full((1, 1, 8, 8), v, dtype=torch.float64)
        assert joint_gradient_loss(c(0.1), c(0.5), c(0.9)) == 0

    def test_impulse_oracle(self):
        f = torch.zeros(1, 1, 7, 7, dtype=torch.float64)
        f[0, 0, 3, 3] = 1.0
        b = torch.zeros_like(f)
        pred = torch.full_like(f, 0.4)
        expected = np.maximum(laplacian_map(f[0, 0].numpy()), 0).sum() / 49
        assert joint_gradient_loss(pred, f, b).item() == pytest.approx(expected, abs=1e-12)

    def test_laplacian_matches_numpy(self):
        x = rand(1, 2, 9, 7)
        for c in range(2):
            assert np.allclose(laplacian(x)[0, c].numpy(), laplacian_map(x[0, c].numpy()))

    def test_signed_max(self):
        # the target is the signed maximum, so a strongly negative response loses to zero
        f = torch.zeros(1, 1, 5, 5, dtype=torch.float64)
        f[0, 0, 2, 2] = 1.0
        b = torch.zeros_like(f)
        target = torch.maximum(laplacian(f), laplacian(b))
        assert target[0, 0, 2, 2] == 0


class TestGradientLimit:
    def test_constant(self):
        assert gradient_limit_loss(torch.full((1, 3, 6, 6), 0.2)) == 0

    def test_ramp(self):
        c = 0.03
        ramp = (torch.arange(10, dtype=torch.float64) * c).expand(1, 1, 6, 10)
        assert gradient_limit_loss(ramp).item() == pytest.approx(c, abs=1e-12)
        assert gradient_limit_loss(-ramp + 1).item() == pytest.approx(c, abs=1e-12)

    def test_checkerboard(self):
        board = torch.tensor((np.indices((6, 6)).sum(0) % 2).astype(float))[None, None]
        brute = (sum(abs(board[0, 0, i, j + 1] - board[0, 0, i, j]) for i in range(6) for j in range(5)) / 30
                 + sum(abs(board[0, 0, i + 1, j] - board[0, 0, i, j]) for i in range(5) for j in range(6)) / 30)
        assert gradient_limit_loss(board).item() == pytest.approx(float(brute)) == pytest.approx(2.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_checkerboard_is_maximal(self, seed):
        x = rand(1, 1, 6, 6, seed=seed)
        assert gradient_limit_loss(x).item() <= 2.0

    def test_signed_variant(self):
        ramp = (torch.arange(8, dtype=torch.float64) * -0.1).expand(1, 1, 4, 8)
        assert gradient_limit_loss(ramp, signed=True).item() == pytest.approx(-0.1)


class TestTotal:
    def test_weights(self):
        one = torch.tensor(1.0)
        assert total_loss(one * 0, one * 0, one * 0).item() == 0
        assert total_loss(one, one, one).item() == pytest.approx(1.6)
        assert total_loss(2 * one, 2 * one, 2 * one).item() == pytest.approx(3.2)
        w = LossWeights(alpha=2, beta=0, gamma=1)
        assert total_loss(one, 5 * one, one, w).item() == pytest.approx(3.0)

    def test_divergence(self):
        with pytest.raises(NumericDivergenceError, match="joint_grad"):
            total_loss(torch.tensor(1.0), torch.tensor(float("nan")), torch.tensor(0.0))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_losses_nonnegative(seed):
    p, f, b = rand(1, 3, 6, 6, seed=seed), rand(1, 3, 6, 6, seed=seed + 1), rand(1, 3, 6, 6, seed=seed + 2)
    m = rand(6, 6, seed=seed + 3).round()
    assert content_loss(p, f, b, m) >= 0
    assert joint_gradient_loss(p, f, b) >= 0
    assert gradient_limit_loss(p) >= 0
    assert embedding_loss(rand(1, 1, 6, 6, seed=seed + 4), m, f, b) >= 0


class TestFiniteDifferences:
    f = rand(1, 3, 8, 8, seed=11)
    b = rand(1, 3, 8, 8, seed=12)
    m = (rand(8, 8, seed=13) > 0.5).double()
    pred = rand(1, 3, 8, 8, seed=14)

    def test_content(self):
        assert fd_check(lambda x: content_loss(x, self.f, self.b, self.m), self.pred) < 1e-3

    def test_joint_gradient(self):
        assert fd_check(lambda x: joint_gradient_loss(x, self.f, self.b), self.pred) < 1e-3

    def test_gradient_limit(self):
        assert fd_check(gradient_limit_loss, self.pred) < 1e-3

    def test_total(self):
        fn = lambda x: total_loss(content_loss(x, self.f, self.b, self.m), joint_gradient_loss(x, self.f, self.b),
                                  gradient_limit_loss(x))
        assert fd_check(fn, self.pred) < 1e-3

    def test_embedding(self):
        m_hat = rand(1, 1, 8, 8, seed=15)
        assert fd_check(lambda x: embedding_loss(x, self.m, self.f, self.b), m_hat) < 1e-3


class TestEmbeddingLoss:
    def test_zero_case(self):
        ones = torch.ones(1, 1, 4, 4)
        assert embedding_loss(ones, ones, rand(1, 3, 4, 4).float(), torch.zeros(1, 3, 4, 4)) == 0

    def test_hand_case(self):
        t = lambda v: torch.full((1, 1, 1, 1), v, dtype=torch.float64)
        assert embedding_loss(t(0.5), t(1.0), t(0.8), t(0.4)).item() == pytest.approx(1.1)

    def test_channel_average(self):
        t = lambda v: torch.full((1, 1, 1, 1), v, dtype=torch.float64)
        rgb = lambda v: torch.full((1, 3, 1, 1), v, dtype=torch.float64)
        assert embedding_loss(t(0.5), t(1.0), rgb(0.8), rgb(0.4)).item() == pytest.approx(1.1)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            embedding_loss(torch.ones(1, 1, 4, 4), torch.ones(1, 1, 4, 4), torch.ones(1, 3, 4, 4), torch.ones(1, 3, 5, 4))
