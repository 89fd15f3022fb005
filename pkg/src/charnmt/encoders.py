"""Source encoders.

``char``: a bi-directional GRU over character embeddings, one annotation per
character.  ``char2word``: a forward character GRU whose states are sampled
at word boundaries and fed to a second bi-directional GRU, one annotation
per word.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import EmptyInputError
from .layers import GruParams, embed, run_gru
from .tensor import ParamSet, Tensor


@dataclass
class EncoderOutput:
    """Annotations for a batch of sources, padded on the right.

    ``annotations`` is (B, T, m_h), ``keys`` is (B, T, m_a) and holds the
    attention projection of every annotation, ``positions[b]`` maps each real
    row of sentence ``b`` to its source character index and ``mask`` flags
    the real rows.
    """

    annotations: Tensor
    keys: Tensor
    positions: list[list[int]]
    mask: np.ndarray

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    @property
    def batch_size(self) -> int:
        return self.mask.shape[0]

    def last(self) -> Tensor:
        """Final real annotation of every sentence, (B, m_h)."""
        rows = np.arange(self.batch_size)
        return self.annotations[rows, self.lengths - 1]


def as_batch(src) -> tuple[np.ndarray, np.ndarray]:
    """Normalise a single id sequence or an (ids, mask) pair to padded arrays."""
    if isinstance(src, tuple):
        ids, mask = src
        ids = np.asarray(ids, dtype=np.int64)
        mask = np.asarray(mask, dtype=bool)
    else:
        ids = np.asarray(src, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None, :]
        mask = np.ones(ids.shape, dtype=bool)
    if ids.size == 0 or not mask.any(axis=1).all():
        raise EmptyInputError("cannot encode an empty source sequence")
    return ids, mask


def attention_keys(annotations: Tensor, params: ParamSet) -> Tensor:
    return T.linear(annotations, params["att.U_a"])


def encode_char(src, params: ParamSet) -> EncoderOutput:
    """Bi-directional character encoder.

    Each annotation is the forward state after reading characters ``0..t``
    concatenated with the backward state after reading ``t..end``.
    """
    ids, mask = as_batch(src)
    x = embed(ids, params["src_embed"])
    fwd = run_gru(x, mask, GruParams.from_params(params, "enc_fwd"))
    bwd = run_gru(x, mask, GruParams.from_params(params, "enc_bwd"), reverse=True)
    H = T.concat([fwd, bwd], axis=-1)
    positions = [list(range(int(n))) for n in mask.sum(axis=1)]
    return EncoderOutput(H, attention_keys(H, params), positions, mask)


def word_boundaries(src_ids, space_id: int) -> list[int]:
    """Indices whose forward state summarises a word.

    The first space after each word, with runs of spaces collapsed, plus the
    last character so that the final word is always represented.
    """
    ids = list(src_ids)
    phi = [t for t in range(1, len(ids))
           if ids[t] == space_id and ids[t - 1] != space_id]
    if ids and (not phi or phi[-1] != len(ids) - 1):
        phi.append(len(ids) - 1)
    return phi


def encode_char2word(src, params: ParamSet, space_id: int) -> EncoderOutput:
    """Hierarchical encoder attending over word-level states."""
    ids, mask = as_batch(src)
    B = ids.shape[0]
    x = embed(ids, params["src_embed"])
    chars = run_gru(x, mask, GruParams.from_params(params, "char_fwd"))

    phis = [word_boundaries(ids[b, :n], space_id) for b, n in enumerate(mask.sum(axis=1))]
    K = max(len(p) for p in phis)
    index = np.zeros((B, K), dtype=np.int64)
    word_mask = np.zeros((B, K), dtype=bool)
    for b, p in enumerate(phis):
        index[b, :len(p)] = p
        word_mask[b, :len(p)] = True
    rows = np.repeat(np.arange(B)[:, None], K, axis=1)
    spaces = chars[rows, index]

    fwd = run_gru(spaces, word_mask, GruParams.from_params(params, "word_fwd"))
    bwd = run_gru(spaces, word_mask, GruParams.from_params(params, "word_bwd"), reverse=True)
    H = T.concat([fwd, bwd], axis=-1)
    return EncoderOutput(H, attention_keys(H, params), phis, word_mask)
