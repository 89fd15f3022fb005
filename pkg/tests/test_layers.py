import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from charnmt import tensor as T
from charnmt.errors import DimensionError, VocabularyError
from charnmt.layers import GruParams, embed, gru_step, init_gru, project_softmax, run_gru
from charnmt.tensor import ParamSet, grad_check

from conftest import gru_scalar_loop


def make_gru(rng, n_in, n_h, scale=1.0):
    ps = ParamSet()
    init_gru(ps, "g", n_in, n_h, rng)
    for p in ps.values():
        p.data[...] = rng.uniform(-scale, scale, size=p.shape)
    return ps, GruParams.from_params(ps, "g")


# embed -----------------------------------------------------------------------

def test_embed_identity_table():
    np.testing.assert_array_equal(embed([0], T.Tensor(np.eye(3))).data, [[1, 0, 0]])


def test_embed_repeated_lookup():
    table = T.Tensor(np.random.default_rng(0).normal(size=(4, 3)))
    out = embed([2, 2], table).data
    np.testing.assert_array_equal(out[0], out[1])


def test_embed_matches_direct_indexing():
    E = np.random.default_rng(1).normal(size=(5, 3))
    out = embed([1, 0], T.Tensor(E)).data
    np.testing.assert_array_equal(out[0], E[:, 1])
    np.testing.assert_array_equal(out[1], E[:, 0])


def test_embed_out_of_range():
    with pytest.raises(VocabularyError):
        embed([3], T.Tensor(np.eye(3)))


# gru_step --------------------------------------------------------------------

def test_gru_zero_fixed_point():
    ps, p = make_gru(np.random.default_rng(0), 3, 4)
    for v in ps.values():
        v.data[...] = 0
    out = gru_step(np.array([0.3, -2.0, 1.0]), np.zeros(4), p).data
    np.testing.assert_array_equal(out, 0.0)


def test_gru_update_gate_saturation():
    rng = np.random.default_rng(2)
    ps, p = make_gru(rng, 3, 4)
    p.b_z.data[...] = 30.0
    x, h = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 4)
    r = 1 / (1 + np.exp(-(p.W_r.data @ x + p.U_r.data @ h + p.b_r.data)))
    cand = np.tanh(p.W_h.data @ x + p.U_h.data @ (r * h) + p.b_h.data)
    np.testing.assert_allclose(gru_step(x, h, p).data, cand, atol=1e-9, rtol=0)


def test_gru_matches_scalar_loop():
    rng = np.random.default_rng(3)
    _, p = make_gru(rng, 3, 3)
    x, h = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    expected = gru_scalar_loop(list(x), list(h), p)
    np.testing.assert_allclose(gru_step(x, h, p).data, expected, atol=1e-12, rtol=0)


def test_gru_batched_rows_match_single():
    rng = np.random.default_rng(4)
    _, p = make_gru(rng, 3, 5)
    X, H = rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, (4, 5))
    batched = gru_step(X, H, p).data
    for i in range(4):
        np.testing.assert_allclose(batched[i], gru_step(X[i], H[i], p).data, atol=1e-15)


def test_gru_shape_mismatch():
    _, p = make_gru(np.random.default_rng(0), 3, 4)
    with pytest.raises(DimensionError):
        gru_step(np.zeros(2), np.zeros(4), p)
    with pytest.raises(DimensionError):
        gru_step(np.zeros(3), np.zeros(5), p)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_gru_output_stays_in_open_interval(seed):
    rng = np.random.default_rng(seed)
    _, p = make_gru(rng, 4, 6, scale=3.0)
    h = rng.uniform(-0.999, 0.999, 6)
    out = gru_step(rng.uniform(-5, 5, 4), h, p).data
    assert (np.abs(out) < 1).all()


def test_run_gru_padding_does_not_leak():
    rng = np.random.default_rng(5)
    _, p = make_gru(rng, 2, 3)
    xs = rng.uniform(-1, 1, (2, 4, 2))
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=bool)
    for reverse in (False, True):
        full = run_gru(T.Tensor(xs), mask, p, reverse=reverse).data
        alone = run_gru(T.Tensor(xs[1:, :2]), mask[1:, :2], p, reverse=reverse).data
        np.testing.assert_allclose(full[1, :2], alone[0], atol=1e-15)


# project_softmax -------------------------------------------------------------

def test_projection_zero_weights_uniform():
    out = project_softmax(np.ones(5), T.Tensor(np.zeros((300, 5))), T.Tensor(np.zeros(300))).data
    np.testing.assert_allclose(out, 1 / 300, rtol=1e-14)


def test_projection_dominant_logit():
    b = np.zeros(10)
    b[7] = 30
    out = project_softmax(np.zeros(4), T.Tensor(np.zeros((10, 4))), T.Tensor(b)).data
    assert out[7] > 0.999


def test_projection_matches_extended_precision():
    rng = np.random.default_rng(6)
    W, b, s = rng.normal(size=(7, 4)), rng.normal(size=7), rng.normal(size=4)
    out = project_softmax(s, T.Tensor(W), T.Tensor(b)).data
    with mpmath.workdps(40):
        logits = [mpmath.fsum(mpmath.mpf(W[i, j]) * mpmath.mpf(s[j]) for j in range(4)) + mpmath.mpf(b[i])
                  for i in range(7)]
        z = mpmath.fsum(mpmath.exp(v) for v in logits)
        expected = [float(mpmath.exp(v) / z) for v in logits]
    np.testing.assert_allclose(out, expected, rtol=1e-13)


@given(st.integers(0, 10_000), st.floats(0.1, 40))
@settings(max_examples=40, deadline=None)
def test_projection_sums_to_one(seed, scale):
    rng = np.random.default_rng(seed)
    out = project_softmax(rng.normal(size=5) * scale, T.Tensor(rng.normal(size=(9, 5))),
                          T.Tensor(rng.normal(size=9))).data
    assert abs(out.sum() - 1) < 1e-12
    assert (out >= 0).all()


# gradient checks --------------------------------------------------------------

def test_embed_grad_check():
    ps = ParamSet()
    ps.add("E", np.random.default_rng(7).uniform(-1, 1, (4, 6)))
    w = np.random.default_rng(8).uniform(-1, 1, (3, 4))
    assert grad_check(lambda p: T.total(embed([5, 0, 5], p["E"]) * w), ps) < 1e-4


def test_gru_step_grad_check():
    rng = np.random.default_rng(9)
    ps, _ = make_gru(rng, 5, 6)
    ps.add("x", rng.uniform(-1, 1, (2, 5)))
    ps.add("h", rng.uniform(-1, 1, (2, 6)))
    w = rng.uniform(-1, 1, (2, 6))

    def loss(p):
        return T.total(gru_step(p["x"], p["h"], GruParams.from_params(p, "g")) * w)

    assert grad_check(loss, ps) < 1e-4


def test_project_softmax_grad_check():
    rng = np.random.default_rng(10)
    ps = ParamSet()
    ps.add("W", rng.uniform(-1, 1, (8, 6)))
    ps.add("b", rng.uniform(-1, 1, 8))
    ps.add("s", rng.uniform(-1, 1, 6))

    def loss(p):
        return T.total(T.log_softmax(T.linear(p["s"], p["W"], p["b"]))[3:4]) + \
            T.total(project_softmax(p["s"], p["W"], p["b"]) * np.arange(8.0))

    assert grad_check(loss, ps) < 1e-4
