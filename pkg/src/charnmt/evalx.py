"""Corpus BLEU and evaluation runs."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .data import Vocabulary, decode_ids, encode_text
from .decoder import AttentionTrace, Decoded
from .errors import ConfigError, EmptyInputError
from .model import ModelConfig, translate_ids
from .tensor import ParamSet


@dataclass
class BleuResult:
    score: float
    precisions: list[float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    matches: list[int] = field(default_factory=list)
    totals: list[int] = field(default_factory=list)

    def __str__(self) -> str:
        ps = "/".join(f"{100 * p:.1f}" for p in self.precisions)
        return (f"BLEU = {self.score:.2f}, {ps} (BP={self.brevity_penalty:.3f}, "
                f"ratio={self.hyp_len / max(self.ref_len, 1):.3f}, "
                f"hyp_len={self.hyp_len}, ref_len={self.ref_len})")


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
         max_n: int = 4) -> BleuResult:
    """Corpus BLEU with one reference per hypothesis and no smoothing.

    Clipped n-gram matches and n-gram totals are summed over the corpus
    before taking precisions; the brevity penalty uses total lengths.
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if not hypotheses:
        raise EmptyInputError("BLEU of an empty corpus is undefined")
    matches = [0] * max_n
    totals = [0] * max_n
    c = r = 0
    for hyp, ref in zip(hypotheses, references):
        c += len(hyp)
        r += len(ref)
        for n in range(1, max_n + 1):
            h, rc = _ngrams(hyp, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(k, rc[g]) for g, k in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    if c == 0:
        bp = 0.0
    elif c < r:
        bp = math.exp(1.0 - r / c)
    else:
        bp = 1.0
    if min(precisions) > 0 and bp > 0:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    else:
        score = 0.0
    return BleuResult(score, precisions, bp, c, r, matches, totals)


def bleu_text(hypotheses: Sequence[str], references: Sequence[str]) -> BleuResult:
    return bleu([h.split() for h in hypotheses], [r.split() for r in references])


def char_accuracy(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Position-wise character matches over the longer of each pair."""
    hit = total = 0
    for h, r in zip(hypotheses, references):
        hit += sum(a == b for a, b in zip(h, r))
        total += max(len(h), len(r))
    return hit / total if total else 1.0


@dataclass
class Evaluation:
    bleu: BleuResult
    hypotheses: list[str]
    decoded: list[Decoded]
    truncated: int


def translate(cfg: ModelConfig, params: ParamSet, sources: Sequence[str],
              src_vocab: Vocabulary, trg_vocab: Vocabulary, max_len: int,
              batch_size: int = 64) -> tuple[list[str], list[Decoded]]:
    """Greedy translations of raw source lines.  Empty lines translate to ''."""
    if len(src_vocab) != cfg.src_vocab or len(trg_vocab) != cfg.trg_vocab:
        raise ConfigError("vocabulary sizes do not match the model")
    idx = [i for i, s in enumerate(sources) if s]
    outs = translate_ids(cfg, params, [encode_text(sources[i], src_vocab) for i in idx],
                         max_len, batch_size)
    texts = [""] * len(sources)
    decoded: list[Decoded] = [Decoded([], AttentionTrace.empty(), False)] * len(sources)
    for i, (dec, _) in zip(idx, outs):
        texts[i] = decode_ids(dec.ids, trg_vocab)
        decoded[i] = dec
    return texts, decoded


def source_labels(source: str, positions: Sequence[int], variant: str) -> list[str]:
    """Column labels: single characters, or the word ending at each boundary."""
    if variant == "char":
        return [source[p] for p in positions]
    labels, start = [], 0
    for p in positions:
        labels.append(source[start:p + 1].strip(" "))
        start = p + 1
    return labels


def attention_trace(cfg: ModelConfig, params: ParamSet, source: str, src_vocab: Vocabulary,
                    trg_vocab: Vocabulary, max_len: int) -> tuple[AttentionTrace, Decoded]:
    """Decode one sentence and label its attention matrix for export."""
    if not source:
        raise EmptyInputError("cannot trace an empty source sentence")
    (dec, positions), = translate_ids(cfg, params, [encode_text(source, src_vocab)], max_len)
    trace = dec.trace
    trace.col_labels = source_labels(source, positions, cfg.variant)
    trace.row_labels = [trg_vocab.token(i) for i in dec.ids]
    return trace, dec


def evaluate(cfg: ModelConfig, params: ParamSet, sources: Sequence[str],
             references: Sequence[str], src_vocab: Vocabulary, trg_vocab: Vocabulary,
             max_len: int = 500) -> Evaluation:
    hyps, decoded = translate(cfg, params, sources, src_vocab, trg_vocab, max_len)
    return Evaluation(bleu_text(hyps, references), hyps, decoded,
                      sum(d.truncated for d in decoded))
