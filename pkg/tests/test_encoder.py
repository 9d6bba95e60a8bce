import numpy as np
import pytest

from mapprior import autodiff as ad
from mapprior.encoder import (PriorFeatureBundle, UveConfig,
                              build_attention_masks, decode_coordinates,
                              encode, encode_tokens, expected_shapes,
                              fourier_features, hybrid_prior_embed,
                              init_params)
from mapprior.errors import DataError
from mapprior.vector_core import (ElementType, VectorMap, compute_directions,
                                  make_instance)

from oracles import finite_difference_gradients, max_relative_error

SMALL = UveConfig(m_intra=1, n_inter=1, dim=16, heads=2, ffn_dim=32,
                  max_instances=6, max_points=8)


def _line_map(xs, n_pts=4, types=None, span=18.0):
    insts = []
    for k, x in enumerate(xs):
        t = types[k] if types else ElementType.LANE_DIVIDER
        pts = [(x, y) for y in np.linspace(-span, span, n_pts)]
        insts.append(compute_directions(make_instance(pts, t)))
    return VectorMap(tuple(insts), frame="ego", source_tag="ground_truth")


class TestConfig:
    def test_dim_head_divisibility(self):
        with pytest.raises(DataError):
            UveConfig(dim=10, heads=4)

    def test_defaults_match_best_shape(self):
        cfg = UveConfig()
        assert (cfg.m_intra, cfg.n_inter, cfg.dim) == (2, 2, 64)

    def test_round_trip_dict(self):
        cfg = UveConfig(dim=32, heads=2, ffn_dim=64)
        assert UveConfig.from_dict(cfg.to_dict()) == cfg


class TestFourier:
    def test_origin(self):
        f = fourier_features(np.zeros((3, 2)), bands=4)
        assert np.allclose(f[:, :8], 0.0)   # sin block
        assert np.allclose(f[:, 8:], 1.0)   # cos block

    def test_width(self):
        f = fourier_features(np.zeros((5, 2)), bands=8)
        assert f.shape == (5, 32)


class TestHybridEmbedding:
    def test_empty_map(self):
        params = init_params(SMALL, seed=0)
        tokens = hybrid_prior_embed(VectorMap((), frame="ego"), SMALL, params)
        assert len(tokens) == 0
        bundle = encode(VectorMap((), frame="ego"), SMALL, params)
        assert bundle.n_instances == 0

    def test_one_vec_token_per_instance(self):
        params = init_params(SMALL, seed=0)
        tokens = hybrid_prior_embed(_line_map([-2, 2]), SMALL, params)
        assert tokens.is_vec.sum() == 2
        # the [VEC] token opens each block
        starts = np.flatnonzero(tokens.is_vec)
        assert np.array_equal(starts, [0, 5])

    def test_additive_structure(self):
        """Identical points in different instances differ only through the
        instance and position tables."""
        params = init_params(SMALL, seed=0)
        params["embed.instance"].value[:] = 0.0
        params["embed.position"].value[:] = 0.0
        vmap = _line_map([1.0, 1.0], n_pts=4)  # identical geometry
        tokens = hybrid_prior_embed(vmap, SMALL, params)
        emb = tokens.embeddings.value
        block = 5
        assert np.allclose(emb[1:block], emb[block + 1:2 * block], atol=1e-12)

    def test_capacity_overflow(self):
        params = init_params(SMALL, seed=0)
        with pytest.raises(DataError, match="capacity"):
            hybrid_prior_embed(_line_map([0, 1, 2, 3, 4, 5, 6]), SMALL, params)
        with pytest.raises(DataError, match="capacity"):
            hybrid_prior_embed(_line_map([0], n_pts=9), SMALL, params)

    def test_ego_frame_required(self):
        params = init_params(SMALL, seed=0)
        vmap = VectorMap((), frame="global")
        with pytest.raises(DataError, match="ego"):
            hybrid_prior_embed(vmap, SMALL, params)


class TestMasks:
    def test_block_diagonal_intra(self):
        params = init_params(SMALL, seed=0)
        tokens = hybrid_prior_embed(_line_map([-2, 2], n_pts=2), SMALL, params)
        intra, inter = build_attention_masks(tokens)
        assert intra.shape == (6, 6)
        assert (intra[:3, :3] == 0).all()
        assert (intra[3:, 3:] == 0).all()
        assert (intra[:3, 3:] == ad.MASK_NEG).all()
        assert (intra[3:, :3] == ad.MASK_NEG).all()
        assert (inter == 0).all()

    def test_single_instance_masks_equal(self):
        params = init_params(SMALL, seed=0)
        tokens = hybrid_prior_embed(_line_map([0.0], n_pts=5), SMALL, params)
        intra, inter = build_attention_masks(tokens)
        assert np.array_equal(intra, inter)

    def test_padded_rows_fully_masked(self):
        params = init_params(SMALL, seed=0)
        tokens = hybrid_prior_embed(_line_map([0.0], n_pts=4), SMALL, params,
                                    pad_instances=2, pad_points=4)
        intra, inter = build_attention_masks(tokens)
        pad_rows = ~tokens.valid
        assert pad_rows.any()
        assert (intra[pad_rows] == ad.MASK_NEG).all()
        assert (inter[pad_rows] == ad.MASK_NEG).all()
        # padded tokens still produce finite outputs (uniform fallback)
        states = encode_tokens(tokens, SMALL, params)
        assert np.isfinite(states.value).all()


class TestEncode:
    def test_zero_params_pass_through(self):
        params = init_params(SMALL, seed=0)
        for name, node in params.items():
            node.value[:] = 0.0
        vmap = _line_map([-2, 2])
        tokens = hybrid_prior_embed(vmap, SMALL, params)
        states = encode_tokens(tokens, SMALL, params)
        assert np.allclose(states.value, tokens.embeddings.value, atol=1e-12)

    def test_shape_contract(self):
        cfg = UveConfig(max_instances=8, max_points=20)
        params = init_params(cfg, seed=1)
        vmap = _line_map([-3, 0, 3], n_pts=20)
        bundle = encode(vmap, cfg, params)
        assert bundle.f_ins.shape == (3, 64)
        assert len(bundle.f_pt) == 3
        assert all(f.shape == (20, 64) for f in bundle.f_pt)

    def test_intra_isolation_bitwise(self):
        cfg = UveConfig(m_intra=2, n_inter=0, dim=16, heads=2, ffn_dim=32,
                        max_instances=4, max_points=8)
        params = init_params(cfg, seed=3)
        rng = np.random.default_rng(0)
        base = _line_map([-2.0, 2.0], n_pts=6)
        ref = encode(base, cfg, params)
        for _ in range(20):
            shift = rng.normal(0, 2.0, size=2)
            moved = list(base.instances)
            xy = moved[1].coords() + shift
            moved[1] = moved[1].with_coords(xy)
            vmap = VectorMap(tuple(moved), frame="ego")
            out = encode(vmap, cfg, params)
            assert out.f_ins[0].tobytes() == ref.f_ins[0].tobytes()
            assert out.f_pt[0].tobytes() == ref.f_pt[0].tobytes()

    def test_inter_layers_open_the_mask(self):
        cfg = UveConfig(m_intra=1, n_inter=1, dim=16, heads=2, ffn_dim=32,
                        max_instances=4, max_points=8)
        params = init_params(cfg, seed=3)
        base = _line_map([-2.0, 2.0], n_pts=6)
        ref = encode(base, cfg, params)
        moved = list(base.instances)
        moved[1] = moved[1].with_coords(moved[1].coords() + (1.0, 0.5))
        out = encode(VectorMap(tuple(moved), frame="ego"), cfg, params)
        assert out.f_pt[0].tobytes() != ref.f_pt[0].tobytes()

    def test_padding_invariance(self):
        params = init_params(SMALL, seed=5)
        vmap = _line_map([-1.0, 3.0], n_pts=4)
        tokens = hybrid_prior_embed(vmap, SMALL, params)
        states = encode_tokens(tokens, SMALL, params)
        padded = hybrid_prior_embed(vmap, SMALL, params, pad_instances=4,
                                    pad_points=7)
        pstates = encode_tokens(padded, SMALL, params)
        for b in range(2):
            rows = np.flatnonzero((tokens.instance_index == b) & tokens.valid)
            prows = np.flatnonzero((padded.instance_index == b) & padded.valid)
            assert np.allclose(states.value[rows], pstates.value[prows],
                               atol=1e-12)

    def test_deterministic(self):
        params = init_params(SMALL, seed=9)
        vmap = _line_map([0.0, 2.0])
        a = encode(vmap, SMALL, params)
        b = encode(vmap, SMALL, params)
        assert a.f_ins.tobytes() == b.f_ins.tobytes()

    def test_parameter_count_documented(self):
        # full default config; the learnable 2D position grid and four
        # attention/FFN layers dominate
        params = init_params(UveConfig(), seed=0)
        assert params.n_values() == 192002

    def test_expected_shapes_cover_params(self):
        cfg = UveConfig(m_intra=1, n_inter=2, dim=32, heads=4, ffn_dim=64)
        params = init_params(cfg, seed=0)
        shapes = expected_shapes(cfg)
        assert set(shapes) == set(params.names())
        for name, node in params.items():
            assert tuple(node.value.shape) == shapes[name]


class TestDecode:
    def test_zero_weights_give_bias(self):
        params = init_params(SMALL, seed=0)
        params["head.w1"].value[:] = 0.0
        params["head.w2"].value[:] = 0.0
        params["head.b1"].value[:] = 0.0
        params["head.b2"].value[:] = (0.5, -0.25)
        out = decode_coordinates(np.random.default_rng(0).normal(size=(7, 16)),
                                 params)
        assert np.allclose(out.value, [(0.5, -0.25)] * 7)

    def test_output_shape(self):
        params = init_params(SMALL, seed=0)
        out = decode_coordinates(np.zeros((5, 16)), params)
        assert out.value.shape == (5, 2)


class TestSlowPathGradients:
    def test_ragged_map_gradcheck(self):
        """Masked (non-uniform) attention path matches finite differences."""
        cfg = UveConfig(m_intra=1, n_inter=1, dim=8, heads=2, ffn_dim=16,
                        max_instances=3, max_points=6, fourier_bands=2)
        params = init_params(cfg, seed=2)
        insts = (
            compute_directions(make_instance([(0, -5), (0, 0), (0, 5)],
                                             "lane_divider")),
            compute_directions(make_instance([(3, -5), (3, 5)],
                                             "road_boundary")),
        )
        vmap = VectorMap(insts, frame="ego")

        def forward():
            tokens = hybrid_prior_embed(vmap, cfg, params, pad_instances=3,
                                        pad_points=4)
            states = encode_tokens(tokens, cfg, params)
            pts = ad.embedding_lookup(states, tokens.point_rows())
            out = decode_coordinates(pts, params)
            return ad.sqrt(ad.scale(ad.sum(ad.square(out)),
                                    1.0 / out.value.shape[0]))

        loss = forward()
        ad.backward(loss)
        analytic = {n: p.grad.copy() for n, p in params.items()}
        params.zero_grads()
        names = ["embed.point_proj.w", "embed.vec_token", "enc00.wq",
                 "enc01.wv", "enc01.ffn.w1", "head.w2", "embed.position"]
        numeric = finite_difference_gradients(
            lambda: float(forward().value), params, h=1e-5, names=names)
        for name in names:
            err = max_relative_error(analytic[name], numeric[name])
            assert err < 1e-4, (name, err)
