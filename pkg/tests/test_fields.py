import numpy as np
import pytest

from nfc.autodiff import Graph, grad_check
from nfc.encoding import encoded_dim, probability_decode
from nfc.fields import (
    MlpSpec,
    eval_image_field,
    eval_radiance_field,
    init_model,
    load_checkpoint,
    save_checkpoint,
)

IMG_R = MlpSpec(in_dim=2, pos_freqs=6, widths=(32, 32))
IMG_C = MlpSpec(in_dim=2, pos_freqs=6, widths=(32, 32), head="classifier24")
RAD_R = MlpSpec(in_dim=3, pos_freqs=4, dir_freqs=2, widths=(32, 32), density=True)
RAD_C = MlpSpec(in_dim=3, pos_freqs=4, dir_freqs=2, widths=(32, 32), density=True, head="classifier24")


def unit_dirs(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def test_init_deterministic():
    a, b = init_model(IMG_C, 7), init_model(IMG_C, 7)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)


def test_biases_zero():
    m = init_model(RAD_C, 0)
    assert all(np.all(v == 0) for k, v in m.params.items() if k.endswith(".b"))


def test_weight_variance_matches_glorot_uniform():
    spec = MlpSpec(in_dim=2, pos_freqs=0, include_input=True, widths=(100, 100))
    w = init_model(spec, 3).params["trunk1.w"]  # 10k draws
    limit = np.sqrt(6.0 / 200)
    assert np.abs(w).max() <= limit
    assert abs(w.var() / (limit**2 / 3) - 1) < 0.05


def test_heads_share_trunk_and_differ_only_in_final_layer():
    r, c = init_model(IMG_R, 11), init_model(IMG_C, 11)
    for k in r.params:
        if not k.startswith("color."):
            assert np.array_equal(r.params[k], c.params[k])
    width = IMG_R.widths[-1]
    assert c.param_count() - r.param_count() == (width + 1) * (24 - 3)
    d_in = encoded_dim(2, 6)
    assert r.param_count() == (d_in + 1) * 32 + 33 * 32 + 33 * 3


def test_image_field_ranges_and_decode():
    rng = np.random.default_rng(0)
    xy = rng.uniform(size=(50, 2))
    out = eval_image_field(init_model(IMG_C, 1), xy)
    assert out.color.shape == (50, 3) and out.bits.shape == (50, 3, 8)
    assert np.all((out.color.data > 0) & (out.color.data < 1))
    assert np.array_equal(out.color.data, probability_decode(out.bits).data)
    assert eval_image_field(init_model(IMG_R, 1), xy).bits is None


def test_head_mismatch_raises():
    with pytest.raises(ValueError):
        eval_image_field(init_model(IMG_R, 0), np.zeros((1, 2)), head="classifier24")
    with pytest.raises(ValueError):
        eval_image_field(init_model(RAD_R, 0), np.zeros((1, 2)))


def test_density_nonnegative():
    rng = np.random.default_rng(1)
    sigma, out = eval_radiance_field(init_model(RAD_C, 2), rng.normal(size=(1000, 3)) * 2, unit_dirs(rng, 1000))
    assert sigma.shape == (1000,) and np.all(sigma.data >= 0)
    assert out.bits.shape == (1000, 3, 8)


def test_batch_permutation_equivariance():
    rng = np.random.default_rng(2)
    m = init_model(RAD_R, 3)
    x, d = rng.normal(size=(20, 3)), unit_dirs(rng, 20)
    perm = rng.permutation(20)
    s1, o1 = eval_radiance_field(m, x, d)
    s2, o2 = eval_radiance_field(m, x[perm], d[perm])
    np.testing.assert_allclose(s1.data[perm], s2.data, rtol=0, atol=1e-14)
    np.testing.assert_allclose(o1.color.data[perm], o2.color.data, rtol=0, atol=1e-14)


def test_non_unit_direction_rejected():
    with pytest.raises(ValueError):
        eval_radiance_field(init_model(RAD_R, 0), np.zeros((1, 3)), np.array([[0.0, 0.0, 2.0]]))


def test_density_gradient_first_layer_fd():
    rng = np.random.default_rng(4)
    m = init_model(RAD_R, 5)
    x, d = rng.normal(size=(6, 3)), unit_dirs(rng, 6)

    def f(w):
        params = m.constants()
        params["trunk0.w"] = w
        return eval_radiance_field(m, x, d, params)[0].sum()

    assert grad_check(f, m.params["trunk0.w"]) < 1e-4


def test_bind_gives_gradients_for_every_parameter():
    m = init_model(IMG_C, 0)
    g = Graph()
    p = m.bind(g)
    out = eval_image_field(m, np.random.default_rng(0).uniform(size=(8, 2)), p)
    grads = g.backward(out.color.sum())
    assert set(grads) == {t.node for t in p.values()}
    assert np.any(grads[p["trunk0.w"].node] != 0)


def test_checkpoint_roundtrip(tmp_path):
    m = init_model(RAD_C, 9)
    save_checkpoint(tmp_path / "m.ckpt", m, iteration=123)
    m2, it = load_checkpoint(tmp_path / "m.ckpt")
    assert it == 123 and m2.spec == m.spec and m2.seed == 9
    assert list(m2.params) == list(m.params)
    assert all(np.array_equal(m.params[k], m2.params[k]) for k in m.params)
    raw = (tmp_path / "m.ckpt").read_bytes()
    # parameter blob is little-endian float64 in declaration order at the tail
    assert raw.endswith(m.flat().astype("<f8").tobytes())


def test_checkpoint_bytes_deterministic(tmp_path):
    save_checkpoint(tmp_path / "a", init_model(IMG_R, 1), 5)
    save_checkpoint(tmp_path / "b", init_model(IMG_R, 1), 5)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_checkpoint_truncated(tmp_path):
    save_checkpoint(tmp_path / "a", init_model(IMG_R, 1))
    raw = (tmp_path / "a").read_bytes()
    (tmp_path / "b").write_bytes(raw[:-16])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "b")


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec(widths=(0,))
    with pytest.raises(ValueError):
        MlpSpec(head="softmax")
    with pytest.raises(ValueError):
        MlpSpec(in_dim=2, density=True)


def test_sigma_bias_init_only_touches_density_bias():
    base = MlpSpec(in_dim=3, density=True, widths=(8, 8))
    a = init_model(base, 0)
    b = init_model(MlpSpec(in_dim=3, density=True, widths=(8, 8), sigma_bias_init=-4.0), 0)
    assert np.all(b.params["sigma.b"] == -4.0)
    for k in a.params:
        if k != "sigma.b":
            assert np.array_equal(a.params[k], b.params[k])


def test_integer_sigma_bias_init_gives_float_params():
    m = init_model(MlpSpec(in_dim=3, density=True, widths=(8, 8), sigma_bias_init=-4), 0)
    assert all(v.dtype == np.float64 for v in m.params.values())


def test_view_independent_color_ignores_direction():
    spec = MlpSpec(in_dim=3, pos_freqs=4, dir_freqs=2, widths=(32, 32), density=True, view_dependent=False)
    m = init_model(spec, 0)
    assert m.params["view.w"].shape == (32, 16)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(10, 3))
    s1, o1 = eval_radiance_field(m, x, unit_dirs(rng, 10))
    s2, o2 = eval_radiance_field(m, x, unit_dirs(rng, 10))
    np.testing.assert_array_equal(s1.data, s2.data)
    np.testing.assert_array_equal(o1.color.data, o2.color.data)


def test_direction_count_must_match():
    m = init_model(RAD_R, 0)
    rng = np.random.default_rng(6)
    with pytest.raises(ValueError):
        eval_radiance_field(m, rng.normal(size=(6, 3)), unit_dirs(rng, 2), dir_repeat=2)
