"""Forward values and finite-difference gradient oracles for every primitive."""

import math

import numpy as np
import pytest

from planet2 import diffcore as dc
from planet2.errors import NumericsError, ShapeError


def _rand(shape, rng, scale=1.0):
    return dc.parameter(rng.standard_normal(shape) * scale)


class TestForwardValues:
    def test_softmax_uniform(self):
        for n in (1, 3, 7):
            out = dc.softmax(dc.Tensor(np.zeros(n) + 3.7), axis=0)
            np.testing.assert_allclose(out.data, np.full(n, 1.0 / n), atol=1e-15)

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(0)
        out = dc.softmax(dc.Tensor(rng.standard_normal((5, 9))), axis=1)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-12)

    def test_gaussian_pdf_at_mean(self):
        out = dc.gaussian_pdf(2.5, 2.5, 1.0)
        assert out.item() == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-12)

    def test_gaussian_cdf_at_mean(self):
        out = dc.gaussian_cdf(7.0, 7.0, 3.2)
        assert out.item() == pytest.approx(0.5, abs=1e-14)

    def test_gaussian_cdf_tails(self):
        assert dc.gaussian_cdf(10.0, 0.0, 1.0).item() == pytest.approx(1.0, abs=1e-12)
        assert dc.gaussian_cdf(-10.0, 0.0, 1.0).item() == pytest.approx(0.0, abs=1e-12)

    def test_elu_offsets_bound_mdn_ranges(self):
        x = dc.Tensor(np.linspace(-50, 50, 1001))
        mu = dc.elu(x).data + 1.0
        sigma = dc.elu(x).data + 1.1
        assert (mu >= 0.0).all()
        assert (sigma >= 0.1 - 1e-15).all()

    def test_leaky_relu_slope(self):
        out = dc.leaky_relu(dc.Tensor(np.array([-2.0, 3.0])))
        np.testing.assert_allclose(out.data, [-0.02, 3.0])

    def test_masked_softmax_empty_row_is_zero(self):
        s = dc.Tensor(np.array([[1.0, 2.0], [5.0, -1.0]]))
        mask = np.array([[True, True], [False, False]])
        out = dc.masked_softmax(s, mask, axis=1)
        assert out.data[1].sum() == 0.0
        assert out.data[0].sum() == pytest.approx(1.0, abs=1e-12)

    def test_rank_limit_enforced(self):
        with pytest.raises(ShapeError):
            dc.Tensor(np.zeros((2, 2, 2, 2)))

    def test_nan_detection(self):
        with pytest.raises(NumericsError):
            dc.tlog(dc.Tensor(np.array([-1.0])))

    def test_sigma_must_be_positive(self):
        with pytest.raises(NumericsError):
            dc.gaussian_pdf(0.0, 0.0, -1.0)


class TestGradCheck:
    def test_square_at_three(self):
        x = dc.parameter(np.array([3.0]))
        err = dc.grad_check(lambda: dc.tsum(dc.mul(x, x)), [x], epsilon=1e-5)
        assert err < 1e-9
        assert x.grad[0] == pytest.approx(6.0, rel=1e-9)

    def test_softmax_linear_composition(self):
        rng = np.random.default_rng(7)
        w = _rand((4, 4), rng)
        x = dc.Tensor(rng.standard_normal((4, 4)))
        probe = dc.Tensor(rng.standard_normal((4, 4)))

        def f():
            return dc.tsum(dc.mul(dc.softmax(dc.matmul(x, w), axis=1), probe))

        assert dc.grad_check(f, [w], epsilon=1e-5) < 1e-6

    def test_gaussian_pdf_sigma_gradient(self):
        sigma = dc.parameter(np.array([2.0]))

        def f():
            return dc.tsum(dc.gaussian_pdf(1.0, 0.0, sigma))

        assert dc.grad_check(f, [sigma], epsilon=1e-5) < 1e-6

    @pytest.mark.parametrize("seed", range(5))
    def test_every_primitive_random_probes(self, seed):
        rng = np.random.default_rng(seed)
        a = _rand((3, 4), rng)
        b = _rand((3, 4), rng)
        c = _rand((4, 5), rng)
        d = dc.parameter(rng.uniform(0.5, 2.0, size=(3, 4)))
        mask = rng.uniform(size=(3, 4)) > 0.3
        mask[0] = False  # exercise the empty-row path
        idx = np.array([2, 0, 0, 1])
        probe2 = dc.Tensor(rng.standard_normal((3, 5)))
        probe3 = dc.Tensor(rng.standard_normal((4, 4)))

        cases = {
            "add": lambda: dc.tsum(dc.add(a, b)),
            "sub": lambda: dc.tsum(dc.sub(a, b)),
            "mul": lambda: dc.tsum(dc.mul(a, b)),
            "div": lambda: dc.tsum(dc.div(a, d)),
            "neg": lambda: dc.tsum(dc.neg(a)),
            "matmul": lambda: dc.tsum(dc.mul(dc.matmul(a, c), probe2)),
            "concat": lambda: dc.tsum(dc.mul(dc.concat([a, b], axis=0),
                                             dc.Tensor(np.ones((6, 4))))),
            "reshape": lambda: dc.tsum(dc.mul(dc.reshape(a, (4, 3)),
                                              dc.Tensor(np.ones((4, 3))))),
            "transpose": lambda: dc.tsum(dc.mul(dc.transpose(a, (1, 0)),
                                                dc.Tensor(np.ones((4, 3))))),
            "broadcast": lambda: dc.tsum(dc.mul(dc.broadcast_to(dc.reshape(a, (3, 1, 4)),
                                                                (3, 2, 4)),
                                                dc.Tensor(np.ones((3, 2, 4))))),
            "gather": lambda: dc.tsum(dc.mul(dc.gather_rows(a, idx), probe3)),
            "scatter": lambda: dc.tsum(dc.mul(dc.scatter_add_rows(probe3 * 0.0 + dc.gather_rows(a, idx), idx, 3),
                                              dc.Tensor(np.ones((3, 4))))),
            "sum_axis": lambda: dc.tsum(dc.mul(dc.tsum(a, axis=1),
                                               dc.Tensor(np.ones(3)))),
            "mean_axis": lambda: dc.tsum(dc.mul(dc.tmean(a, axis=0),
                                                dc.Tensor(np.ones(4)))),
            "softmax": lambda: dc.tsum(dc.mul(dc.softmax(a, axis=1), b)),
            "masked_softmax": lambda: dc.tsum(dc.mul(dc.masked_softmax(a, mask, axis=1), b)),
            "leaky_relu": lambda: dc.tsum(dc.leaky_relu(a)),
            "elu": lambda: dc.tsum(dc.elu(a)),
            "sigmoid": lambda: dc.tsum(dc.sigmoid(a)),
            "tanh": lambda: dc.tsum(dc.tanh(a)),
            "exp": lambda: dc.tsum(dc.texp(a)),
            "log": lambda: dc.tsum(dc.tlog(d)),
            "gaussian_pdf": lambda: dc.tsum(dc.gaussian_pdf(b, a, d)),
            "gaussian_cdf": lambda: dc.tsum(dc.gaussian_cdf(b, a, d)),
            "linear": lambda: dc.tsum(dc.mul(dc.linear(a, dc.transpose(c, (1, 0)), dc.tsum(c, axis=0)),
                                             probe2)),
        }
        for name, f in cases.items():
            err = dc.grad_check(f, [a, b, c, d], epsilon=1e-5)
            assert err < 1e-6, f"{name}: max relative error {err:.3e}"

    def test_shared_subgraph_accumulates(self):
        x = dc.parameter(np.array([1.7, -0.3]))

        def g(t):
            return dc.tsum(dc.mul(t, dc.sigmoid(t)))

        out = dc.add(g(x), g(x))
        out.backward()
        x2 = dc.parameter(x.data.copy())
        out2 = g(x2)
        out2.backward()
        np.testing.assert_allclose(x.grad, 2.0 * x2.grad, rtol=1e-12)

    def test_invariant_hundred_random_probes(self):
        rng = np.random.default_rng(99)
        worst = 0.0
        for _ in range(100):
            x = dc.parameter(rng.standard_normal((2, 3)))
            y = dc.parameter(rng.uniform(0.2, 2.0, size=(2, 3)))

            def f():
                z = dc.tanh(dc.add(dc.mul(x, y), dc.elu(x)))
                return dc.tsum(dc.mul(dc.gaussian_pdf(z, x, y),
                                      dc.sigmoid(dc.leaky_relu(x))))

            worst = max(worst, dc.grad_check(f, [x, y], epsilon=1e-5))
        assert worst < 1e-6


class TestNoGrad:
    def test_no_tape_recorded(self):
        x = dc.parameter(np.ones(3))
        with dc.no_grad():
            out = dc.tsum(dc.mul(x, x))
        assert out._vjp is None and not out.requires_grad
