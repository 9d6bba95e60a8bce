"""Backend parity: the compiled kernels must match the numpy reference."""
import numpy as np
import pytest

from mapprior import kernels
from mapprior.kernels import numpy_backend as nb

compiled = pytest.mark.skipif(kernels.BACKEND == "numpy",
                              reason="compiled kernels not built")


def _random_mask(rng, shape):
    additive = np.where(rng.random(shape) < 0.35, -1e9, 0.0)
    additive[0, :] = -1e9  # one dead row
    binary = (additive > -1e8).astype(np.float64)
    return np.ascontiguousarray(additive), np.ascontiguousarray(binary)


@compiled
class TestParity:
    def test_softmax_forward_backward(self):
        rng = np.random.default_rng(0)
        z = np.ascontiguousarray(rng.normal(size=(40, 17)))
        additive, binary = _random_mask(rng, z.shape)
        for mask in (None, (additive, binary)):
            a, b = (None, None) if mask is None else mask
            o1, d1 = kernels.softmax_forward(z, a, b)
            o2, d2 = nb.softmax_forward(z, a, b)
            np.testing.assert_allclose(o1, o2, rtol=1e-10, atol=1e-14)
            assert (d1 is None) == (d2 is None)
            if d1 is not None:
                assert np.array_equal(d1, d2)
            g = np.ascontiguousarray(rng.normal(size=z.shape))
            g1 = kernels.softmax_backward(g, o1, d1)
            g2 = nb.softmax_backward(g, o2, d2)
            np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-14)

    def test_softmax_exact_zeros_and_dead_rows(self):
        rng = np.random.default_rng(1)
        z = np.ascontiguousarray(rng.normal(size=(10, 8)))
        additive, binary = _random_mask(rng, z.shape)
        out, dead = kernels.softmax_forward(z, additive, binary)
        assert (out[binary == 0.0] == 0.0).all() or dead.any()
        live = ~dead
        assert (out[live][binary[live] == 0.0] == 0.0).all()
        assert np.allclose(out[dead], 1.0 / z.shape[1])

    def test_layer_norm(self):
        rng = np.random.default_rng(2)
        x = np.ascontiguousarray(rng.normal(size=(30, 16)))
        gamma = np.ascontiguousarray(rng.normal(size=16))
        beta = np.ascontiguousarray(rng.normal(size=16))
        o1, h1, s1 = kernels.layer_norm_forward(x, gamma, beta, 1e-5)
        o2, h2, s2 = nb.layer_norm_forward(x, gamma, beta, 1e-5)
        np.testing.assert_allclose(o1, o2, rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(s1, s2, rtol=1e-10)
        g = np.ascontiguousarray(rng.normal(size=x.shape))
        ga1 = kernels.layer_norm_backward(g, h1, s1, gamma)
        ga2 = nb.layer_norm_backward(g, h2, s2, gamma)
        for a, b in zip(ga1, ga2):
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-13)

    def test_gelu(self):
        rng = np.random.default_rng(3)
        x = np.ascontiguousarray(rng.normal(size=500) * 3)
        o1, t1 = kernels.gelu_forward(x)
        o2, t2 = nb.gelu_forward(x)
        np.testing.assert_allclose(o1, o2, rtol=1e-10, atol=1e-14)
        g = np.ascontiguousarray(rng.normal(size=500))
        np.testing.assert_allclose(kernels.gelu_backward(g, x, t1),
                                   nb.gelu_backward(g, x, t2),
                                   rtol=1e-10, atol=1e-14)

    def test_chamfer(self):
        rng = np.random.default_rng(4)
        a = np.ascontiguousarray(rng.normal(size=(37, 2)))
        b = np.ascontiguousarray(rng.normal(size=(23, 2)))
        assert np.isclose(kernels.chamfer_directed(a, b),
                          nb.chamfer_directed(a, b), rtol=1e-12)


class TestNumpyBackendSemantics:
    """Reference semantics hold regardless of which backend is active."""

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        z = np.ascontiguousarray(rng.normal(size=(12, 6)))
        out, dead = nb.softmax_forward(z)
        assert dead is None
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_layer_norm_zero_variance(self):
        x = np.full((2, 4), 3.0)
        out, xhat, inv = nb.layer_norm_forward(x, np.ones(4), np.zeros(4), 1e-5)
        assert np.allclose(out, 0.0)
        assert np.isfinite(inv).all()

    def test_chamfer_directed_exact(self):
        a = np.array([[0.0, 0.0], [0.0, 1.0]])
        b = np.array([[1.0, 0.0], [1.0, 1.0]])
        assert nb.chamfer_directed(a, b) == 1.0
