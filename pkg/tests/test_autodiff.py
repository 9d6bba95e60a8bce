import numpy as np
import pytest

from mapprior import autodiff as ad
from mapprior.autodiff import Adam, Node, ParamStore, SoftmaxMask
from mapprior.checkpoint import load_checkpoint, save_checkpoint
from mapprior.errors import DataError, NumericError

from oracles import finite_difference_gradients, max_relative_error


class TestForwardOps:
    def test_softmax_symmetry(self):
        out = ad.softmax_last_dim(ad.constant([[0.0, 0.0]]))
        assert np.allclose(out.value, [[0.5, 0.5]])

    def test_layer_norm_constant_row_is_zero(self):
        x = ad.constant(np.full((3, 8), 2.5))
        gamma = ad.constant(np.ones(8))
        beta = ad.constant(np.zeros(8))
        out = ad.layer_norm(x, gamma, beta)
        assert np.allclose(out.value, 0.0)

    def test_matmul_identity(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 5))
        out = ad.matmul(ad.constant(np.eye(5)), ad.constant(x))
        assert np.allclose(out.value, x)

    def test_matmul_shape_error_names_op(self):
        with pytest.raises(DataError, match="matmul"):
            ad.matmul(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((2, 3))))

    def test_add_shape_error(self):
        with pytest.raises(DataError, match="add"):
            ad.add(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((4, 5))))

    def test_rank_limit(self):
        with pytest.raises(DataError, match="rank"):
            ad.constant(np.zeros((2, 2, 2, 2)))

    def test_concat_split_round_trip(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 12))
        parts = ad.split_last_dim(ad.constant(x), 3)
        back = ad.concat_last_dim(parts)
        assert np.array_equal(back.value, x)

    def test_embedding_lookup_out_of_range(self):
        table = ad.constant(np.zeros((4, 2)))
        with pytest.raises(DataError, match="out of range"):
            ad.embedding_lookup(table, np.array([4]))


class TestMaskedSoftmax:
    def test_hard_masked_entries_exactly_zero(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(6, 9))
        additive = np.where(rng.random((6, 9)) < 0.4, ad.MASK_NEG, 0.0)
        additive[:, 0] = 0.0  # keep one live entry per row
        out = ad.softmax_last_dim(ad.constant(z), SoftmaxMask(additive))
        blocked = additive <= -1e8
        assert (out.value[blocked] == 0.0).all()
        assert np.allclose(out.value.sum(axis=1), 1.0)

    def test_fully_masked_row_uniform(self):
        z = np.zeros((2, 5))
        additive = np.zeros((2, 5))
        additive[1, :] = ad.MASK_NEG
        out = ad.softmax_last_dim(ad.constant(z), SoftmaxMask(additive))
        assert np.allclose(out.value[1], 0.2)

    def test_fully_masked_row_zero_gradient(self):
        z = ad.constant(np.random.default_rng(0).normal(size=(2, 4)))
        additive = np.zeros((2, 4))
        additive[0, :] = ad.MASK_NEG
        out = ad.softmax_last_dim(z, SoftmaxMask(additive))
        loss = ad.sum(ad.square(out))
        ad.backward(loss)
        assert np.allclose(z.grad[0], 0.0)
        assert not np.allclose(z.grad[1], 0.0)


class TestBackward:
    def test_quadratic(self):
        store = ParamStore()
        p = store.add("p", [1.0, 2.0])
        loss = ad.sum(ad.square(p))
        ad.backward(loss)
        assert np.allclose(p.grad, [2.0, 4.0])

    def test_mean_gradient(self):
        store = ParamStore()
        p = store.add("p", np.arange(4.0))
        ad.backward(ad.mean(p))
        assert np.allclose(p.grad, 0.25)

    def test_double_backward_rejected(self):
        store = ParamStore()
        p = store.add("p", [1.0])
        loss = ad.sum(ad.square(p))
        ad.backward(loss)
        with pytest.raises(DataError, match="zero_grads"):
            ad.backward(ad.sum(ad.square(p)))

    def test_explicit_accumulation(self):
        store = ParamStore()
        p = store.add("p", [1.0])
        ad.backward(ad.sum(ad.square(p)))
        ad.backward(ad.sum(ad.square(p)), accumulate=True)
        assert np.allclose(p.grad, [4.0])

    def test_scalar_loss_required(self):
        store = ParamStore()
        p = store.add("p", [1.0, 2.0])
        with pytest.raises(DataError, match="scalar"):
            ad.backward(ad.square(p))

    def test_shared_subgraph_fanout(self):
        store = ParamStore()
        p = store.add("p", [3.0])
        q = ad.square(p)
        loss = ad.sum(ad.add(q, q))
        ad.backward(loss)
        assert np.allclose(p.grad, [12.0])  # d(2p^2)/dp


def _random_composition_loss(store: ParamStore, rng) -> Node:
    """Small random graph touching every primitive."""
    w1 = store["w1"]
    w2 = store["w2"]
    gamma = store["gamma"]
    beta = store["beta"]
    table = store["table"]
    x = ad.constant(rng.normal(size=(6, 8)))
    h = ad.matmul(x, w1)
    h = ad.layer_norm(h, gamma, beta)
    h = ad.gelu(h)
    additive = np.where(rng.random((6, 6)) < 0.3, ad.MASK_NEG, 0.0)
    additive[:, 0] = 0.0
    scores = ad.scale(ad.matmul(h, ad.transpose_last(h)), 0.3)
    probs = ad.softmax_last_dim(scores, SoftmaxMask(additive))
    ctx = ad.matmul(probs, h)
    parts = ad.split_last_dim(ctx, 2)
    ctx = ad.concat_last_dim([parts[1], parts[0]])
    emb = ad.embedding_lookup(table, np.array([0, 2, 1, 2, 0, 1]))
    z = ad.mul(ad.add(ctx, emb), ad.constant(rng.normal(size=(6, 8))))
    z = ad.sub(z, ad.scale(emb, 0.5))
    heads = ad.split_heads(z, 2)
    z = ad.merge_heads(ad.matmul(heads, ad.transpose_last(heads)), 2,
                       batched=False)
    out = ad.matmul(z, w2)
    return ad.sqrt(ad.scale(ad.sum(ad.square(out)), 1.0 / out.value.size))


class TestGradientCheck:
    def test_random_composition_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        store = ParamStore()
        store.add("w1", rng.normal(size=(8, 8)) * 0.5)
        store.add("w2", rng.normal(size=(12, 4)) * 0.5)
        store.add("gamma", 1.0 + 0.1 * rng.normal(size=8))
        store.add("beta", 0.1 * rng.normal(size=8))
        store.add("table", rng.normal(size=(3, 8)) * 0.5)
        graph_rng = np.random.default_rng(21)
        loss = _random_composition_loss(store, graph_rng)
        ad.backward(loss)
        analytic = {n: p.grad.copy() for n, p in store.items()}
        store.zero_grads()

        def loss_value():
            return float(_random_composition_loss(
                store, np.random.default_rng(21)).value)

        numeric = finite_difference_gradients(loss_value, store, h=1e-5)
        for name in store.names():
            assert max_relative_error(analytic[name], numeric[name]) < 1e-4, name


class TestDeterminism:
    def test_forward_and_grad_bitwise(self):
        def run():
            rng = np.random.default_rng(3)
            store = ParamStore()
            w = store.add("w", rng.normal(size=(5, 5)))
            x = ad.constant(rng.normal(size=(4, 5)))
            loss = ad.mean(ad.square(ad.gelu(ad.matmul(x, w))))
            ad.backward(loss)
            return loss.value.copy(), w.grad.copy()
        l1, g1 = run()
        l2, g2 = run()
        assert l1.tobytes() == l2.tobytes()
        assert g1.tobytes() == g2.tobytes()


class TestAdam:
    def test_first_step_magnitude(self):
        store = ParamStore()
        p = store.add("p", [1.0])
        opt = Adam(store, lr=0.05)
        loss = ad.sum(ad.mul(p, ad.constant([3.0])))  # constant grad 3
        ad.backward(loss)
        opt.step()
        assert np.isclose(p.value[0], 1.0 - 0.05, rtol=1e-6)

    def test_zero_grad_leaves_param(self):
        store = ParamStore()
        p = store.add("p", [2.0])
        opt = Adam(store)
        loss = ad.sum(ad.mul(p, ad.constant([0.0])))
        ad.backward(loss)
        opt.step()
        assert p.value[0] == 2.0

    def test_determinism_ten_steps(self):
        def run():
            rng = np.random.default_rng(5)
            store = ParamStore()
            w = store.add("w", rng.normal(size=(4, 4)))
            opt = Adam(store, lr=1e-2)
            for _ in range(10):
                x = ad.constant(np.arange(8.0).reshape(2, 4))
                loss = ad.mean(ad.square(ad.matmul(x, w)))
                ad.backward(loss)
                opt.step()
                store.zero_grads()
            return w.value.copy()
        assert run().tobytes() == run().tobytes()

    def test_non_finite_grad_names_param(self):
        store = ParamStore()
        p = store.add("lonely", [1.0])
        opt = Adam(store)
        p.grad = np.array([np.inf])
        with pytest.raises(NumericError, match="lonely"):
            opt.step()


class TestParamStore:
    def test_duplicate_name_rejected(self):
        store = ParamStore()
        store.add("x", [1.0])
        with pytest.raises(DataError, match="duplicate"):
            store.add("x", [2.0])

    def test_sorted_iteration(self):
        store = ParamStore()
        for name in ("zz", "aa", "mm"):
            store.add(name, [0.0])
        assert store.names() == ["aa", "mm", "zz"]


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        store = ParamStore(seed=42)
        store.add("a.w", rng.normal(size=(3, 4)))
        store.add("b.v", rng.normal(size=(7,)))
        path = str(tmp_path / "ckpt.bin")
        save_checkpoint(path, store, config={"uve": {"dim": 4}})
        loaded, config = load_checkpoint(path)
        assert config == {"uve": {"dim": 4}}
        assert loaded.seed == 42
        for name, node in store.items():
            assert np.array_equal(loaded[name].value, node.value)

    def test_shape_verification(self, tmp_path):
        store = ParamStore()
        store.add("w", np.zeros((2, 2)))
        path = str(tmp_path / "ckpt.bin")
        save_checkpoint(path, store)
        with pytest.raises(DataError, match="shape"):
            load_checkpoint(path, expected_shapes={"w": (3, 3)})

    def test_deterministic_bytes(self, tmp_path):
        store = ParamStore(seed=1)
        store.add("w", np.arange(6.0).reshape(2, 3))
        p1, p2 = str(tmp_path / "a.bin"), str(tmp_path / "b.bin")
        save_checkpoint(p1, store, config={"k": 1})
        save_checkpoint(p2, store, config={"k": 1})
        assert open(p1, "rb").read() == open(p2, "rb").read()


class TestCheckFinite:
    def test_raises_on_nan(self):
        with pytest.raises(NumericError, match="somewhere"):
            ad.check_finite(np.array([1.0, np.nan]), "somewhere")
