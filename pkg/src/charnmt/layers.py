"""Embeddings, the GRU cell and the softmax output projection."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import ParamSet, Tensor


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def init_embedding(params: ParamSet, name: str, dim: int, vocab_size: int,
                   rng: np.random.Generator) -> None:
    params.add(name, glorot(rng, dim, vocab_size))


def embed(ids, table: Tensor) -> Tensor:
    """Look up columns of a (dim, vocab) table.

    Equivalent to multiplying the table with one-hot columns.  ``ids`` may be
    a sequence or an integer matrix; the embedding axis is appended last.
    """
    return T.embedding(table, ids)


class GruParams(NamedTuple):
    W_z: Tensor
    U_z: Tensor
    b_z: Tensor
    W_r: Tensor
    U_r: Tensor
    b_r: Tensor
    W_h: Tensor
    U_h: Tensor
    b_h: Tensor

    @classmethod
    def from_params(cls, params: ParamSet, prefix: str) -> "GruParams":
        return cls(*(params[f"{prefix}.{f}"] for f in cls._fields))

    @property
    def hidden_size(self) -> int:
        return self.U_z.shape[0]


def init_gru(params: ParamSet, prefix: str, input_size: int, hidden: int,
             rng: np.random.Generator) -> None:
    for gate in ("z", "r", "h"):
        params.add(f"{prefix}.W_{gate}", glorot(rng, hidden, input_size))
        params.add(f"{prefix}.U_{gate}", glorot(rng, hidden, hidden))
        params.add(f"{prefix}.b_{gate}", np.zeros(hidden), bias=True)


def gru_inputs(x, p: GruParams) -> tuple[Tensor, Tensor, Tensor]:
    """Input-path pre-activations ``W x + b`` for the three gates.

    Works on any leading shape, so a whole padded sequence can be projected
    at once before the recurrence.
    """
    if x.shape[-1] != p.W_z.shape[1]:
        raise DimensionError(f"gru: input size {x.shape[-1]} != {p.W_z.shape[1]}")
    return T.linear(x, p.W_z, p.b_z), T.linear(x, p.W_r, p.b_r), T.linear(x, p.W_h, p.b_h)


def gru_recur(xz: Tensor, xr: Tensor, xh: Tensor, h_prev: Tensor, p: GruParams) -> Tensor:
    if h_prev.shape[-1] != p.hidden_size:
        raise DimensionError(f"gru: state size {h_prev.shape[-1]} != {p.hidden_size}")
    z = T.sigmoid(xz + T.linear(h_prev, p.U_z))
    r = T.sigmoid(xr + T.linear(h_prev, p.U_r))
    cand = T.tanh(xh + T.linear(r * h_prev, p.U_h))
    return h_prev + z * (cand - h_prev)


def gru_step(x, h_prev, p: GruParams) -> Tensor:
    """One GRU update ``h' = (1 - z) * h_prev + z * tanh(W x + U (r * h_prev) + b)``."""
    x, h_prev = T.as_tensor(x), T.as_tensor(h_prev)
    return gru_recur(*gru_inputs(x, p), h_prev, p)


def run_gru(xs: Tensor, mask: np.ndarray, p: GruParams, reverse: bool = False) -> Tensor:
    """Run a GRU over a padded batch ``xs`` of shape (B, L, in).

    Where ``mask`` is 0 the state is carried through unchanged, so right
    padding never leaks into the real positions of either direction.
    Returns the stacked states (B, L, hidden), starting from a zero state.
    """
    B, L = mask.shape
    xz, xr, xh = gru_inputs(xs, p)
    h = T.Tensor(np.zeros((B, p.hidden_size)))
    m = mask.astype(np.float64)[:, :, None]
    full = bool(mask.all())
    states: list[Tensor | None] = [None] * L
    steps = range(L - 1, -1, -1) if reverse else range(L)
    for t in steps:
        h_new = gru_recur(xz[:, t], xr[:, t], xh[:, t], h, p)
        h = h_new if full else h + (h_new - h) * m[:, t]
        states[t] = h
    return T.stack(states, axis=1)


def init_projection(params: ParamSet, prefix: str, hidden: int, n_classes: int,
                    rng: np.random.Generator) -> None:
    params.add(f"{prefix}.W_y", glorot(rng, n_classes, hidden))
    params.add(f"{prefix}.b_y", np.zeros(n_classes), bias=True)


def project_logits(s, W_y: Tensor, b_y: Tensor) -> Tensor:
    return T.linear(s, W_y, b_y)


def project_softmax(s, W_y: Tensor, b_y: Tensor) -> Tensor:
    """Class distribution ``softmax(W_y s + b_y)``."""
    return T.softmax(project_logits(s, W_y, b_y))
