"""Loss, gradient clipping, Adam and the epoch loop."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import tensor as T
from .data import BATCH_BUDGET, Batch, SentencePair, make_epoch_batches
from .errors import ConfigError, TrainingError
from .model import VARIANTS, ModelConfig, batch_logprobs, init_params
from .tensor import Graph, ParamSet, Tensor

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    variant: str = "char2word"
    learning_rate: float = 0.001
    l2: float = 1e-6
    clip: float = 1.0
    budget: int = BATCH_BUDGET
    epochs: int = 10
    seed: int = 0
    embed: int = 256
    hidden: int = 400
    attn: int = 300
    max_len: int = 500

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for f in ("learning_rate", "clip", "budget", "embed", "hidden", "attn", "max_len"):
            if not getattr(self, f) > 0:
                raise ConfigError(f"{f} must be positive")
        if self.l2 < 0 or self.epochs < 0:
            raise ConfigError("l2 and epochs must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def l2_penalty(params: ParamSet, lam: float) -> Tensor | None:
    """``lam * sum(theta**2)`` over every non-bias parameter (embeddings included)."""
    if lam == 0:
        return None
    terms = [T.total(p * p) for p in params.values() if not p.bias]
    return T.scale(T.total(T.stack(terms)), lam)


def sequence_loss(logprobs: Tensor, targets: np.ndarray, mask: np.ndarray,
                  params: ParamSet | None = None, lam: float = 0.0) -> Tensor:
    """Mean negative log-likelihood over unmasked positions plus the L2 term.

    Masked positions are never read, so whatever the model puts there
    cannot affect the loss.
    """
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if logprobs.shape[:-1] != targets.shape or targets.shape != mask.shape:
        raise ValueError(f"shape mismatch: logprobs {logprobs.shape}, targets {targets.shape}, "
                         f"mask {mask.shape}")
    real = np.nonzero(mask)
    n = len(real[0])
    if n == 0:
        raise ValueError("sequence_loss: no unmasked target positions")
    picked = logprobs[real + (targets[real],)]
    loss = T.scale(T.total(picked), -1.0 / n)
    if params is not None:
        reg = l2_penalty(params, lam)
        if reg is not None:
            loss = loss + reg
    return loss


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))


def clip_global_norm(grads: dict[str, np.ndarray], threshold: float) -> dict[str, np.ndarray]:
    """Rescale all gradients jointly so their combined L2 norm is at most ``threshold``."""
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    norm = global_norm(grads)
    if norm <= threshold:
        return grads
    # multiply then divide: the result is correctly rounded when it is representable
    return {k: g * threshold / norm for k, g in grads.items()}


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ParamSet) -> "AdamState":
        return cls({k: np.zeros_like(p.data) for k, p in params.items()},
                   {k: np.zeros_like(p.data) for k, p in params.items()})


def adam_step(params: ParamSet, grads: dict[str, np.ndarray], state: AdamState,
              lr: float) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.data.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    batches: int
    tokens: int
    seconds: float
    samples: list[int]

    @property
    def tokens_per_sec(self) -> float:
        return self.tokens / self.seconds if self.seconds > 0 else float("inf")


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    """Batching randomness for one epoch, independent of how training got there."""
    return np.random.default_rng([seed, epoch])


class Trainer:
    """Parameters, optimiser state and counters of one training run."""

    def __init__(self, model: ModelConfig, config: TrainConfig,
                 params: ParamSet | None = None) -> None:
        self.model = model
        self.config = config
        self.params = params if params is not None else init_params(model, config.seed)
        self.adam = AdamState.zeros_like(self.params)
        self.epoch = 0

    def batch_loss(self, batch: Batch) -> tuple[float, dict[str, np.ndarray]]:
        with Graph() as g:
            logp = batch_logprobs(self.model, self.params, batch)
            loss = sequence_loss(logp, batch.trg, batch.trg_mask, self.params, self.config.l2)
        value = loss.item()
        if not np.isfinite(value):
            return value, {}
        return value, g.param_grads(loss)

    def train_batch(self, batch: Batch, batch_id: int = 0) -> float:
        value, grads = self.batch_loss(batch)
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at epoch {self.epoch + 1}, "
                                f"batch {batch_id} (samples {batch.indices[:8]}...)")
        grads = clip_global_norm(grads, self.config.clip)
        adam_step(self.params, grads, self.adam, self.config.learning_rate)
        return value

    def train_epoch(self, pairs: Sequence[SentencePair]) -> EpochMetrics:
        if not pairs:
            raise ValueError("cannot train on an empty corpus")
        rng = epoch_rng(self.config.seed, self.epoch)
        batches = make_epoch_batches(pairs, self.config.budget, rng)
        start = time.perf_counter()
        total_loss = 0.0
        tokens = 0
        seen: list[int] = []
        for k, batch in enumerate(batches):
            value = self.train_batch(batch, k)
            n = int(batch.trg_mask.sum())
            total_loss += value * n
            tokens += n
            seen.extend(batch.indices)
        self.epoch += 1
        elapsed = time.perf_counter() - start
        metrics = EpochMetrics(self.epoch, total_loss / tokens, len(batches), tokens, elapsed, seen)
        log.debug("epoch %d loss %.5f (%d batches, %.1fs)", self.epoch, metrics.loss,
                  metrics.batches, elapsed)
        return metrics
