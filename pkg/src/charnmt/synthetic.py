"""Synthetic parallel corpora and the bundled sample texts."""

from __future__ import annotations

from importlib import resources

import numpy as np

ALPHABET = "abcdefghijklmnopqrst"


def make_cipher(rng: np.random.Generator, alphabet: str = ALPHABET) -> dict[str, str]:
    """A random bijective substitution over ``alphabet`` with no fixed points."""
    while True:
        perm = rng.permutation(len(alphabet))
        if (perm != np.arange(len(alphabet))).all():
            return {a: alphabet[j] for a, j in zip(alphabet, perm)}


def encipher(text: str, cipher: dict[str, str]) -> str:
    return "".join(cipher.get(c, c) for c in text)


def random_word(rng: np.random.Generator, lo: int = 2, hi: int = 8,
                alphabet: str = ALPHABET) -> str:
    n = int(rng.integers(lo, hi + 1))
    return "".join(alphabet[i] for i in rng.integers(0, len(alphabet), size=n))


def cipher_corpus(n: int, seed: int = 0, words: tuple[int, int] = (1, 4),
                  word_len: tuple[int, int] = (2, 8),
                  cipher: dict[str, str] | None = None) -> tuple[list[str], list[str], dict]:
    """``n`` random sentences and their letter-by-letter substitutions."""
    rng = np.random.default_rng(seed)
    if cipher is None:
        cipher = make_cipher(np.random.default_rng(10_000 + seed))
    src = []
    for _ in range(n):
        k = int(rng.integers(words[0], words[1] + 1))
        src.append(" ".join(random_word(rng, *word_len) for _ in range(k)))
    return src, [encipher(s, cipher) for s in src], cipher


def cipher_task(n_train: int = 5000, n_test: int = 500, seed: int = 0, **kw):
    """Train and held-out splits sharing one cipher, without overlapping sources."""
    src, trg, cipher = cipher_corpus(n_train + n_test, seed, **kw)
    train = set(src[:n_train])
    test = [(s, t) for s, t in zip(src[n_train:], trg[n_train:]) if s not in train]
    return (src[:n_train], trg[:n_train]), ([s for s, _ in test], [t for _, t in test]), cipher


def rare_word_task(n_train: int, n_test: int, seed: int = 0, lexicon_size: int = 40,
                   rare_rate: float = 0.25):
    """Sentences over a small lexicon with a fixed word-for-word translation,
    sprinkled with random one-off words that translate letter by letter.

    Returns ``((train_src, train_trg), (test_src, test_trg))``.
    """
    rng = np.random.default_rng(seed)
    cipher = make_cipher(np.random.default_rng(20_000 + seed))
    lexicon = sorted({random_word(rng, 3, 6) for _ in range(lexicon_size)})
    translation = {w: random_word(rng, 3, 7) for w in lexicon}

    def sentence():
        src, trg = [], []
        for _ in range(int(rng.integers(3, 7))):
            if rng.random() < rare_rate:
                w = random_word(rng, 4, 8)
                src.append(w)
                trg.append(encipher(w, cipher))
            else:
                w = lexicon[int(rng.integers(len(lexicon)))]
                src.append(w)
                trg.append(translation[w])
        return " ".join(src), " ".join(trg)

    pairs = [sentence() for _ in range(n_train + n_test)]
    train, test = pairs[:n_train], pairs[n_train:]
    return ([s for s, _ in train], [t for _, t in train]), ([s for s, _ in test], [t for _, t in test])


def _read(name: str) -> list[str]:
    text = resources.files("charnmt.resources").joinpath(name).read_text(encoding="utf-8")
    return text.rstrip("\n").split("\n")


def toy_corpus() -> tuple[list[str], list[str]]:
    """32 short English-German sentence pairs."""
    return _read("toy.en"), _read("toy.de")


def english_sample() -> list[str]:
    """1,000 tokenised English sentences."""
    return _read("english_sample.txt")
