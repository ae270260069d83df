import numpy as np
import pytest

from dcl import mixing as mx
from dcl.rng import Rng


def test_condition_numbers_under_gate():
    params = mx.build_mixer(10, 10, 3, seed=0)
    assert all(c < mx.COND_LIMIT for c in params.condition_numbers())


def test_orthogonal_start_has_condition_one():
    rng = Rng(1)
    q = mx._orthogonal(6, rng)
    assert abs(np.linalg.cond(q) - 1.0) < 1e-8
    np.testing.assert_allclose(q @ q.T, np.eye(6), atol=1e-12)


def test_same_seed_identical_parameters():
    a = mx.build_mixer(5, 5, 3, seed=42)
    b = mx.build_mixer(5, 5, 3, seed=42)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    for ba, bb in zip(a.biases, b.biases):
        assert np.array_equal(ba, bb)


def test_identity_single_layer_forward():
    params = mx.MixerParams(weights=[np.eye(3)], biases=[np.zeros(3)],
                            slope=0.2, n=3, m=3)
    s = Rng(2).normal(30).reshape(10, 3)
    np.testing.assert_array_equal(mx.mixer_forward(params, s), s)


def test_bias_only_forward():
    b = np.array([1.0, -2.0])
    params = mx.MixerParams(weights=[np.eye(2)], biases=[b], slope=0.2, n=2, m=2)
    out = mx.mixer_forward(params, np.zeros((4, 2)))
    np.testing.assert_allclose(out, np.tile(b, (4, 1)))


def test_roundtrip_error_below_1e8():
    params = mx.build_mixer(10, 10, 3, seed=7)
    s = Rng(3).uniform(10_000 * 10).reshape(10_000, 10)
    back = mx.mixer_invert(params, mx.mixer_forward(params, s))
    assert np.abs(s - back).max() < 1e-8


def test_roundtrip_all_scenarios():
    from dcl import spaces as sp
    for scenario in sp.SCENARIOS:
        space = sp.LatentSpaceSpec(n=4, scenario=scenario)
        s = sp.sample_marginal(space, 10_000, Rng(4))
        params = mx.build_mixer(4, 4, 3, seed=11)
        back = mx.mixer_invert(params, mx.mixer_forward(params, s))
        assert np.abs(s - back).max() < 1e-8


def test_single_orthogonal_layer_tight_roundtrip():
    rng = Rng(5)
    q = mx._orthogonal(4, rng)
    params = mx.MixerParams(weights=[q], biases=[np.zeros(4)], slope=0.2, n=4, m=4)
    s = Rng(6).normal(400).reshape(100, 4)
    back = mx.mixer_invert(params, mx.mixer_forward(params, s))
    assert np.abs(s - back).max() < 1e-12


def test_leaky_activation_inverts_negatives():
    params = mx.MixerParams(weights=[np.eye(1), np.eye(1)],
                            biases=[np.zeros(1), np.zeros(1)],
                            slope=0.2, n=1, m=1)
    out = mx.mixer_forward(params, np.array([[-1.0]]))
    np.testing.assert_allclose(out, [[-0.2]])
    back = mx.mixer_invert(params, out)
    np.testing.assert_allclose(back, [[-1.0]], atol=1e-14)


def test_rectangular_embedding_and_inverse_refusal():
    params = mx.build_mixer(3, 5, 2, seed=8)
    s = Rng(7).normal(60).reshape(20, 3)
    x = mx.mixer_forward(params, s)
    assert x.shape == (20, 5)
    # isometric pad preserves pairwise distances of the final affine output
    with pytest.raises(mx.MixerError):
        mx.mixer_invert(params, x)


def test_n_larger_than_m_rejected():
    with pytest.raises(mx.MixerError):
        mx.build_mixer(5, 3, 2, seed=0)


def test_save_load_roundtrip(tmp_path):
    params = mx.build_mixer(4, 6, 3, seed=9)
    mx.save_mixer(params, tmp_path / "mixer")
    loaded = mx.load_mixer(tmp_path / "mixer")
    for wa, wb in zip(params.weights, loaded.weights):
        assert np.array_equal(wa, wb)
    np.testing.assert_array_equal(params.embed, loaded.embed)
    s = Rng(10).normal(40).reshape(10, 4)
    np.testing.assert_array_equal(mx.mixer_forward(params, s),
                                  mx.mixer_forward(loaded, s))
