"""Character decoder with additive attention.

At step t the decoder scores every annotation with
``v_a . tanh(W_a s_{t-1} + b_a + U_a h_j)``, normalises the scores into
weights, feeds ``[E' y_{t-1}; c_t]`` to its GRU and projects the new state
to a distribution over target characters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .encoders import EncoderOutput
from .errors import GradientError, VocabularyError
from .layers import GruParams, embed, gru_step, project_logits, project_softmax
from .tensor import ParamSet, Tensor


@dataclass
class DecoderState:
    s: Tensor
    step: int = 0


def init_state(enc: EncoderOutput, params: ParamSet) -> DecoderState:
    """``s_0 = tanh(W_init h_last + b_init)``.

    The projection bridges the encoder annotation size and the decoder state
    size, which generally differ.
    """
    s0 = T.tanh(T.linear(enc.last(), params["init.W"], params["init.b"]))
    return DecoderState(s0, 0)


def attend(state: DecoderState, enc: EncoderOutput, params: ParamSet) -> tuple[Tensor, Tensor]:
    """Attention weights (B, T) and context vectors (B, m_h) for one step."""
    if not enc.mask.any(axis=1).all():
        raise GradientError("attend: every encoder position is masked")
    query = T.linear(state.s, params["att.W_a"], params["att.b_a"])
    B, m_a = query.shape
    hidden = T.tanh(enc.keys + T.reshape(query, (B, 1, m_a)))
    scores = T.matmul(hidden, params["att.v_a"])
    weights = T.softmax(scores, mask=enc.mask)
    Tx = weights.shape[1]
    context = T.matmul(T.reshape(weights, (B, 1, Tx)), enc.annotations)
    return weights, T.reshape(context, (B, context.shape[-1]))


def _check_ids(ids: np.ndarray, params: ParamSet) -> None:
    vocab = params["trg_embed"].shape[1]
    if ids.min() < 0 or ids.max() >= vocab:
        raise VocabularyError(f"target id out of range for vocabulary of size {vocab}")


def _advance(state: DecoderState, prev_ids, enc: EncoderOutput,
             params: ParamSet) -> tuple[DecoderState, Tensor]:
    prev_ids = np.atleast_1d(np.asarray(prev_ids, dtype=np.int64))
    _check_ids(prev_ids, params)
    weights, context = attend(state, enc, params)
    x = T.concat([embed(prev_ids, params["trg_embed"]), context], axis=-1)
    s = gru_step(x, state.s, GruParams.from_params(params, "dec"))
    return DecoderState(s, state.step + 1), weights


def decode_step(state: DecoderState, prev_ids, enc: EncoderOutput,
                params: ParamSet) -> tuple[DecoderState, Tensor, Tensor]:
    """Advance one character: returns the new state, the output
    distribution (B, K) and the attention weights (B, T)."""
    new, weights = _advance(state, prev_ids, enc, params)
    probs = project_softmax(new.s, params["out.W_y"], params["out.b_y"])
    return new, probs, weights


def teacher_forced_logprobs(enc: EncoderOutput, trg_in: np.ndarray,
                            params: ParamSet) -> Tensor:
    """Log-probabilities (B, Ty, K) when the decoder is fed ``trg_in``.

    ``trg_in[:, t]`` is the ground-truth previous character (bos at t=0).
    The projection is applied to all states at once.
    """
    trg_in = np.asarray(trg_in, dtype=np.int64)
    state = init_state(enc, params)
    states = []
    for t in range(trg_in.shape[1]):
        state, _ = _advance(state, trg_in[:, t], enc, params)
        states.append(state.s)
    logits = project_logits(T.stack(states, axis=1), params["out.W_y"], params["out.b_y"])
    return T.log_softmax(logits)


@dataclass
class AttentionTrace:
    """Attention weights, one row per emitted symbol and one column per
    attended source unit."""

    weights: np.ndarray
    row_labels: list[str] = field(default_factory=list)
    col_labels: list[str] = field(default_factory=list)

    @classmethod
    def empty(cls) -> "AttentionTrace":
        return cls(np.zeros((0, 0)))

    def to_text(self) -> str:
        lines = ["\t".join(self.col_labels)]
        for label, row in zip(self.row_labels, self.weights):
            lines.append("\t".join([label] + [format(float(w), ".9g") for w in row]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AttentionTrace":
        lines = text.rstrip("\n").split("\n")
        cols = lines[0].split("\t")
        rows, data = [], []
        for line in lines[1:]:
            parts = line.split("\t")
            rows.append(parts[0])
            data.append([float(v) for v in parts[1:]])
        return cls(np.array(data, dtype=np.float64).reshape(len(rows), len(cols)), rows, cols)


@dataclass
class Decoded:
    ids: list[int]
    trace: AttentionTrace
    truncated: bool


def greedy_decode(enc: EncoderOutput, params: ParamSet, max_len: int,
                  bos: int, eos: int) -> list[Decoded]:
    """Argmax decoding for every sentence in ``enc``.

    Each sentence stops at its first eos (which is kept in ``ids``) or after
    ``max_len`` symbols, in which case ``truncated`` is set.
    """
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    B = enc.batch_size
    lengths = enc.lengths
    state = init_state(enc, params)
    prev = np.full(B, bos, dtype=np.int64)
    out: list[list[int]] = [[] for _ in range(B)]
    rows: list[list[np.ndarray]] = [[] for _ in range(B)]
    done = np.zeros(B, dtype=bool)
    for _ in range(max_len):
        state, probs, weights = decode_step(state, prev, enc, params)
        prev = probs.data.argmax(axis=-1)
        for b in np.flatnonzero(~done):
            out[b].append(int(prev[b]))
            rows[b].append(weights.data[b, :lengths[b]].copy())
            if prev[b] == eos:
                done[b] = True
        if done.all():
            break
    return [
        Decoded(out[b], AttentionTrace(np.array(rows[b]).reshape(len(rows[b]), lengths[b])),
                not done[b])
        for b in range(B)
    ]
