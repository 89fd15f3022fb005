import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from charnmt import tensor as T
from charnmt.data import collate, make_pairs, build_vocab
from charnmt.errors import ConfigError, TrainingError
from charnmt.model import ModelConfig
from charnmt.synthetic import toy_corpus
from charnmt.tensor import Graph, ParamSet, Tensor
from charnmt.training import (AdamState, TrainConfig, Trainer, adam_step, clip_global_norm,
                              global_norm, l2_penalty, sequence_loss)


def scalar_adam(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam on one float, written out term by term."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
    return theta


# sequence_loss ---------------------------------------------------------------

def test_uniform_prediction_loss_is_log_k():
    lp = T.log_softmax(np.zeros((1, 1, 4)))
    loss = sequence_loss(lp, np.array([[2]]), np.array([[True]]))
    assert abs(loss.item() - math.log(4)) < 1e-15


def test_confident_prediction_leaves_only_regulariser():
    logits = np.full((1, 2, 3), -60.0)
    logits[0, 0, 1] = logits[0, 1, 2] = 60.0
    ps = ParamSet()
    ps.add("w", np.array([1.0, -2.0]))
    ps.add("b", np.array([5.0]), bias=True)
    loss = sequence_loss(T.log_softmax(logits), np.array([[1, 2]]), np.ones((1, 2), bool), ps, 0.1)
    assert abs(loss.item() - 0.5) < 1e-12


def test_l2_arithmetic():
    ps = ParamSet()
    ps.add("theta", np.array([2.0]))
    assert l2_penalty(ps, 0.5).item() == 2.0


def test_l2_skips_biases_counts_embeddings():
    ps = ParamSet()
    ps.add("src_embed", np.ones((2, 3)))
    ps.add("b", np.full(4, 10.0), bias=True)
    assert l2_penalty(ps, 1.0).item() == 6.0
    assert l2_penalty(ps, 0.0) is None


def test_masked_positions_do_not_change_loss():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(2, 4, 5))
    targets = rng.integers(0, 5, size=(2, 4))
    mask = np.array([[1, 1, 1, 0], [1, 1, 0, 0]], dtype=bool)
    base = sequence_loss(T.log_softmax(logits), targets, mask).item()
    for k in range(5):
        garbage = logits.copy()
        garbage[~mask] = rng.normal(size=(int((~mask).sum()), 5)) * 10 ** k
        other_targets = targets.copy()
        other_targets[~mask] = rng.integers(0, 5, size=int((~mask).sum()))
        assert sequence_loss(T.log_softmax(garbage), other_targets, mask).item() == base


def test_sequence_loss_averages_over_real_positions():
    lp = T.log_softmax(np.zeros((2, 3, 4)))
    mask = np.array([[1, 1, 1], [1, 0, 0]], dtype=bool)
    assert abs(sequence_loss(lp, np.zeros((2, 3), int), mask).item() - math.log(4)) < 1e-15


def test_sequence_loss_contract_errors():
    lp = T.log_softmax(np.zeros((1, 2, 3)))
    with pytest.raises(ValueError):
        sequence_loss(lp, np.zeros((1, 2), int), np.zeros((1, 2), bool))
    with pytest.raises(ValueError):
        sequence_loss(lp, np.zeros((1, 3), int), np.ones((1, 3), bool))


# clip_global_norm --------------------------------------------------------------

def test_clip_three_four():
    out = clip_global_norm({"g": np.array([3.0, 4.0])}, 1.0)
    np.testing.assert_array_equal(out["g"], [0.6, 0.8])


def test_clip_below_threshold_unchanged():
    g = {"g": np.array([0.3, 0.4])}
    out = clip_global_norm(g, 1.0)
    np.testing.assert_array_equal(out["g"], [0.3, 0.4])


def test_clip_is_joint_not_per_tensor():
    out = clip_global_norm({"a": np.array([3.0]), "b": np.array([4.0])}, 1.0)
    np.testing.assert_array_equal(out["a"], [0.6])
    np.testing.assert_array_equal(out["b"], [0.8])


def test_clip_rejects_non_positive_threshold():
    with pytest.raises(ValueError):
        clip_global_norm({"a": np.ones(1)}, 0.0)


@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, st.integers(1, 5), elements=st.floats(-1e3, 1e3)),
       st.floats(0.01, 10))
@settings(max_examples=100, deadline=None)
def test_clip_norm_bound_and_direction(a, b, threshold):
    grads = {"a": a, "b": b}
    out = clip_global_norm(grads, threshold)
    n = global_norm(out)
    assert n <= threshold + 1e-12 or n == global_norm(grads)
    before, after = np.concatenate([a, b]), np.concatenate([out["a"], out["b"]])
    if global_norm(grads) > threshold:
        cos = before @ after / (np.linalg.norm(before) * np.linalg.norm(after))
        assert abs(cos - 1) < 1e-12


# adam_step -------------------------------------------------------------------

def _single(value):
    ps = ParamSet()
    ps.add("w", np.array(value, dtype=np.float64))
    return ps


def test_adam_zero_gradient_keeps_params():
    ps = _single([1.0, -2.0, 3.0])
    state = AdamState.zeros_like(ps)
    for _ in range(3):
        adam_step(ps, {"w": np.zeros(3)}, state, 0.001)
    np.testing.assert_array_equal(ps["w"].data, [1.0, -2.0, 3.0])
    assert state.step == 3


def test_adam_first_step_closed_form():
    ps = _single([0.5])
    adam_step(ps, {"w": np.array([0.1])}, AdamState.zeros_like(ps), 0.001)
    delta = ps["w"].data[0] - 0.5
    assert abs(delta + 0.001) < 1e-5
    assert abs(delta + 0.001 * 0.1 / (0.1 + 1e-8)) < 1e-15


def test_adam_two_steps_match_scalar_oracle():
    rng = np.random.default_rng(1)
    theta = rng.normal(size=7)
    g = rng.normal(size=7)
    ps = _single(theta)
    state = AdamState.zeros_like(ps)
    for _ in range(2):
        adam_step(ps, {"w": g}, state, 0.001)
    for i in range(7):
        assert abs(ps["w"].data[i] - scalar_adam(theta[i], [g[i], g[i]], 0.001)) < 1e-12


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.floats(-5, 5))
@settings(max_examples=50, deadline=None)
def test_adam_is_elementwise(gs, theta0):
    ps = _single([theta0])
    state = AdamState.zeros_like(ps)
    for g in gs:
        adam_step(ps, {"w": np.array([g])}, state, 0.01)
    assert abs(ps["w"].data[0] - scalar_adam(theta0, gs, 0.01)) < 1e-12


def test_adam_rejects_shape_mismatch():
    ps = _single([1.0, 2.0])
    with pytest.raises(ValueError):
        adam_step(ps, {"w": np.zeros(3)}, AdamState.zeros_like(ps), 0.1)


# config ----------------------------------------------------------------------

def test_train_config_defaults_and_validation():
    cfg = TrainConfig()
    assert (cfg.learning_rate, cfg.l2, cfg.clip, cfg.budget) == (0.001, 1e-6, 1.0, 50_000)
    with pytest.raises(ConfigError):
        TrainConfig(variant="word")
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"bogus": 1})
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


# training loop ---------------------------------------------------------------

def toy_setup(variant="char", n=8, budget=400, seed=0, **sizes):
    src, trg = toy_corpus()
    src, trg = src[:n], trg[:n]
    sv, tv = build_vocab(src, ensure_space=True), build_vocab(trg)
    pairs = make_pairs(src, trg, sv, tv)
    dims = dict(embed=8, hidden=12, attn=8)
    dims.update(sizes)
    mc = ModelConfig(variant, len(sv), len(tv), sv.space_id, **dims)
    tc = TrainConfig(variant=variant, budget=budget, seed=seed, **dims)
    return Trainer(mc, tc), pairs


@pytest.mark.parametrize("seed", range(5))
def test_one_small_step_decreases_loss(seed):
    trainer, pairs = toy_setup("char2word" if seed % 2 else "char", n=4, seed=seed)
    trainer.config.learning_rate = 1e-4
    batch = collate(pairs)
    before, _ = trainer.batch_loss(batch)
    trainer.train_batch(batch)
    after, _ = trainer.batch_loss(batch)
    assert after < before


def test_epoch_covers_every_sample_once():
    trainer, pairs = toy_setup(n=16, budget=200)
    m = trainer.train_epoch(pairs)
    assert sorted(m.samples) == list(range(len(pairs)))
    assert m.batches > 1 and np.isfinite(m.loss)
    assert trainer.epoch == 1 and trainer.adam.step == m.batches


def test_fixed_seed_is_bit_identical():
    runs = []
    for _ in range(2):
        trainer, pairs = toy_setup(n=8, budget=300, seed=3)
        runs.append([trainer.train_epoch(pairs).loss for _ in range(3)])
        runs[-1].append(trainer.params["out.W_y"].data.tobytes())
    assert runs[0] == runs[1]


def test_single_pair_loss_decreases():
    trainer, pairs = toy_setup(n=1, budget=400, embed=16, hidden=32, attn=16)
    trainer.config.learning_rate = 0.01
    losses = [trainer.train_epoch(pairs).loss for _ in range(10)]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_non_finite_loss_aborts():
    trainer, pairs = toy_setup(n=2)
    trainer.params["out.b_y"].data[0] = np.nan
    with pytest.raises(TrainingError, match="batch 0"):
        trainer.train_batch(collate(pairs))


def test_empty_corpus_rejected():
    trainer, _ = toy_setup(n=2)
    with pytest.raises(ValueError):
        trainer.train_epoch([])
