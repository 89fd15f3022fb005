"""Model configuration, parameter layout and the encode/decode entry points."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import BOS, EOS, Batch, pad_sequences
from .decoder import Decoded, greedy_decode, teacher_forced_logprobs
from .encoders import EncoderOutput, encode_char, encode_char2word
from .errors import ConfigError
from .layers import glorot, init_embedding, init_gru, init_projection
from .tensor import ParamSet, Tensor

VARIANTS = ("char", "char2word")


@dataclass
class ModelConfig:
    variant: str
    src_vocab: int
    trg_vocab: int
    space_id: int = 4
    embed: int = 256
    hidden: int = 400
    attn: int = 300

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for k in ("src_vocab", "trg_vocab", "embed", "hidden", "attn"):
            if getattr(self, k) <= 0:
                raise ConfigError(f"{k} must be positive")

    @property
    def annotation_size(self) -> int:
        return 2 * self.hidden

    def to_dict(self) -> dict:
        return asdict(self)


def init_params(cfg: ModelConfig, seed: int = 0) -> ParamSet:
    """Fresh parameters in a fixed order: encoder, attention, decoder, output."""
    rng = np.random.default_rng(seed)
    p = ParamSet()
    init_embedding(p, "src_embed", cfg.embed, cfg.src_vocab, rng)
    if cfg.variant == "char":
        init_gru(p, "enc_fwd", cfg.embed, cfg.hidden, rng)
        init_gru(p, "enc_bwd", cfg.embed, cfg.hidden, rng)
    else:
        init_gru(p, "char_fwd", cfg.embed, cfg.hidden, rng)
        init_gru(p, "word_fwd", cfg.hidden, cfg.hidden, rng)
        init_gru(p, "word_bwd", cfg.hidden, cfg.hidden, rng)
    m_h = cfg.annotation_size
    p.add("att.W_a", glorot(rng, cfg.attn, cfg.hidden))
    p.add("att.U_a", glorot(rng, cfg.attn, m_h))
    p.add("att.v_a", glorot(rng, cfg.attn, 1)[:, 0])
    p.add("att.b_a", np.zeros(cfg.attn), bias=True)
    p.add("init.W", glorot(rng, cfg.hidden, m_h))
    p.add("init.b", np.zeros(cfg.hidden), bias=True)
    init_embedding(p, "trg_embed", cfg.embed, cfg.trg_vocab, rng)
    init_gru(p, "dec", cfg.embed + m_h, cfg.hidden, rng)
    init_projection(p, "out", cfg.hidden, cfg.trg_vocab, rng)
    return p


def encode(cfg: ModelConfig, params: ParamSet, src) -> EncoderOutput:
    if cfg.variant == "char":
        return encode_char(src, params)
    return encode_char2word(src, params, cfg.space_id)


def batch_logprobs(cfg: ModelConfig, params: ParamSet, batch: Batch) -> Tensor:
    enc = encode(cfg, params, (batch.src, batch.src_mask))
    return teacher_forced_logprobs(enc, batch.decoder_inputs(), params)


def translate_ids(cfg: ModelConfig, params: ParamSet, sources: list[list[int]],
                  max_len: int, batch_size: int = 64) -> list[tuple[Decoded, list[int]]]:
    """Greedy translations for id sequences, batched by similar length.

    Returns, in input order, each decoded result with the source positions
    its attention columns refer to.
    """
    order = sorted(range(len(sources)), key=lambda i: len(sources[i]))
    results: list = [None] * len(sources)
    for k in range(0, len(order), batch_size):
        chunk = order[k:k + batch_size]
        ids, mask = pad_sequences([sources[i] for i in chunk])
        enc = encode(cfg, params, (ids, mask))
        for row, (i, dec) in enumerate(zip(chunk, greedy_decode(enc, params, max_len, BOS, EOS))):
            results[i] = (dec, enc.positions[row])
    return results
