"""Character vocabularies, parallel corpora and dynamic batching."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, VocabularyError

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<bos>", "<eos>")

SRC_LIMIT = 250
TRG_LIMIT = 500
BATCH_BUDGET = 50_000


class Vocabulary:
    """Characters <-> ids, with pad/unk/bos/eos occupying ids 0-3."""

    def __init__(self, chars: Sequence[str], freqs: Sequence[int] | None = None):
        if len(set(chars)) != len(chars):
            raise VocabularyError("duplicate characters in vocabulary")
        self.chars = list(chars)
        self.freqs = list(freqs) if freqs is not None else [0] * len(chars)
        self._index = {c: i + len(RESERVED) for i, c in enumerate(self.chars)}

    def __len__(self) -> int:
        return len(RESERVED) + len(self.chars)

    def __contains__(self, ch: str) -> bool:
        return ch in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.chars == other.chars

    def id(self, ch: str) -> int:
        return self._index.get(ch, UNK)

    def token(self, i: int) -> str:
        if i < 0 or i >= len(self):
            raise VocabularyError(f"id {i} outside vocabulary of size {len(self)}")
        if i < len(RESERVED):
            return RESERVED[i]
        return self.chars[i - len(RESERVED)]

    @property
    def space_id(self) -> int:
        return self.id(" ")

    def dumps(self) -> str:
        """``id<TAB>code point<TAB>frequency`` per line, reserved ids first.

        Reserved entries carry their ``<name>`` in the code point column.
        """
        lines = [f"{i}\t{name}\t0" for i, name in enumerate(RESERVED)]
        for i, (c, f) in enumerate(zip(self.chars, self.freqs)):
            lines.append(f"{i + len(RESERVED)}\t{ord(c):x}\t{f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        chars, freqs = [], []
        for n, line in enumerate(text.splitlines()):
            idx, cp, freq = line.split("\t")
            if int(idx) != n:
                raise VocabularyError(f"vocabulary dump out of order at line {n + 1}")
            if n < len(RESERVED):
                if cp != RESERVED[n]:
                    raise VocabularyError(f"expected reserved entry {RESERVED[n]}, got {cp}")
                continue
            chars.append(chr(int(cp, 16)))
            freqs.append(int(freq))
        return cls(chars, freqs)


def build_vocab(texts: Iterable[str], k: int = 300, ensure_space: bool = False) -> Vocabulary:
    """The ``k`` most frequent characters; ties go to the lower code point."""
    counts = Counter()
    for line in texts:
        counts.update(line)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], ord(kv[0])))[:k]
    if ensure_space and k > 0 and all(c != " " for c, _ in ranked):
        # the source side needs the space for word boundaries
        ranked = ranked[:k - 1] + [(" ", counts[" "])]
    return Vocabulary([c for c, _ in ranked], [f for _, f in ranked])


def encode_text(text: str, vocab: Vocabulary) -> list[int]:
    return [vocab.id(c) for c in text]


def decode_ids(ids: Iterable[int], vocab: Vocabulary) -> str:
    """Text for a decoded id sequence, stopping at eos and dropping pad/bos."""
    out = []
    for i in ids:
        if i == EOS:
            break
        if i in (PAD, BOS):
            continue
        out.append(vocab.token(i))
    return "".join(out)


@dataclass
class SentencePair:
    source: str
    target: str
    src_ids: list[int]
    trg_ids: list[int]
    index: int = 0


def filter_pair(source: str, target: str, src_limit: int = SRC_LIMIT,
                trg_limit: int = TRG_LIMIT) -> bool:
    """True if the pair is kept: neither side exceeds its character limit."""
    return len(source) <= src_limit and len(target) <= trg_limit


def make_pairs(sources: Sequence[str], targets: Sequence[str], src_vocab: Vocabulary,
               trg_vocab: Vocabulary, src_limit: int = SRC_LIMIT,
               trg_limit: int = TRG_LIMIT) -> list[SentencePair]:
    if len(sources) != len(targets):
        raise ConfigError(f"corpus sides differ in length: {len(sources)} vs {len(targets)}")
    pairs = []
    for s, t in zip(sources, targets):
        if not s or not filter_pair(s, t, src_limit, trg_limit):
            continue
        pairs.append(SentencePair(s, t, encode_text(s, src_vocab),
                                  encode_text(t, trg_vocab) + [EOS], len(pairs)))
    return pairs


def read_lines(path) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such corpus file: {path}")
    lines = path.read_text(encoding="utf-8").split("\n")
    if lines[-1] == "":
        lines.pop()
    return lines


def load_parallel(src_path, trg_path) -> tuple[list[str], list[str]]:
    src, trg = read_lines(src_path), read_lines(trg_path)
    if len(src) != len(trg):
        raise ConfigError(f"{src_path} has {len(src)} lines but {trg_path} has {len(trg)}")
    return src, trg


@dataclass
class Batch:
    """Right-padded id matrices and masks.  ``trg`` ends each row with eos."""

    src: np.ndarray
    src_mask: np.ndarray
    trg: np.ndarray
    trg_mask: np.ndarray
    indices: list[int]

    @property
    def size(self) -> int:
        return self.src.shape[0]

    @property
    def cost(self) -> int:
        return padded_cost([self.src_mask.shape[1]], [self.trg_mask.shape[1]], self.size)

    def decoder_inputs(self) -> np.ndarray:
        """Ground-truth previous characters: bos followed by the shifted target."""
        out = np.full_like(self.trg, PAD)
        out[:, 0] = BOS
        out[:, 1:] = self.trg[:, :-1]
        return out


def padded_cost(src_lens, trg_lens, n: int) -> int:
    return n * (max(src_lens) + max(trg_lens))


def pad_sequences(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    L = max(len(s) for s in seqs)
    ids = np.full((len(seqs), L), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), L), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask


def collate(pairs: Sequence[SentencePair]) -> Batch:
    src, src_mask = pad_sequences([p.src_ids for p in pairs])
    trg, trg_mask = pad_sequences([p.trg_ids for p in pairs])
    return Batch(src, src_mask, trg, trg_mask, [p.index for p in pairs])


def pack_sorted(order: Sequence[int], src_lens: Sequence[int], trg_lens: Sequence[int],
                budget: float) -> list[list[int]]:
    """Greedily cut ``order`` into runs whose padded cost stays within budget."""
    groups: list[list[int]] = []
    cur: list[int] = []
    max_s = max_t = 0
    for i in order:
        s, t = src_lens[i], trg_lens[i]
        if s + t > budget:
            raise ConfigError(f"sample {i} (lengths {s}+{t}) exceeds the batch budget {budget}")
        ns, nt = max(max_s, s), max(max_t, t)
        if cur and (len(cur) + 1) * (ns + nt) > budget:
            groups.append(cur)
            cur, ns, nt = [], s, t
        cur.append(i)
        max_s, max_t = ns, nt
    if cur:
        groups.append(cur)
    return groups


def epoch_groups(src_lens: Sequence[int], trg_lens: Sequence[int], budget: float,
                 rng: np.random.Generator) -> list[list[int]]:
    """Shuffle, stable-sort by (source, target) length, pack, shuffle batches."""
    n = len(src_lens)
    perm = rng.permutation(n)
    order = sorted(perm.tolist(), key=lambda i: (src_lens[i], trg_lens[i]))
    groups = pack_sorted(order, src_lens, trg_lens, budget)
    return [groups[k] for k in rng.permutation(len(groups))]


def make_epoch_batches(pairs: Sequence[SentencePair], budget: float = BATCH_BUDGET,
                       rng: np.random.Generator | None = None) -> list[Batch]:
    if rng is None:
        rng = np.random.default_rng()
    src_lens = [len(p.src_ids) for p in pairs]
    trg_lens = [len(p.trg_ids) for p in pairs]
    groups = epoch_groups(src_lens, trg_lens, budget, rng)
    return [collate([pairs[i] for i in g]) for g in groups]


def padding_waste(groups: Sequence[Sequence[int]], src_lens, trg_lens) -> float:
    """Fraction of padded cells that hold padding, over a whole epoch."""
    padded = real = 0
    for g in groups:
        padded += padded_cost([src_lens[i] for i in g], [trg_lens[i] for i in g], len(g))
        real += sum(src_lens[i] + trg_lens[i] for i in g)
    return (padded - real) / padded if padded else 0.0


def random_groups(sizes: Sequence[int], n: int, rng: np.random.Generator) -> list[list[int]]:
    """Random assignment of ``n`` samples into batches of the given sizes."""
    perm = rng.permutation(n).tolist()
    out, k = [], 0
    for s in sizes:
        out.append(perm[k:k + s])
        k += s
    return out


__all__ = [
    "BATCH_BUDGET", "BOS", "Batch", "EOS", "PAD", "SentencePair", "UNK", "Vocabulary",
    "build_vocab", "collate", "decode_ids", "encode_text", "epoch_groups", "filter_pair",
    "load_parallel", "make_epoch_batches", "make_pairs", "pack_sorted", "padding_waste",
    "pad_sequences", "random_groups", "read_lines",
]
