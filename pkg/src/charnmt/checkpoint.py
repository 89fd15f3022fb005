"""Versioned binary checkpoints.

Layout: magic, format version (u32), header length (u64), a canonical JSON
header, then every tensor as little-endian float64 in header order.  The
header is written with sorted keys and Python's round-tripping float repr,
so load followed by save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Vocabulary
from .errors import ConfigError
from .model import ModelConfig
from .tensor import ParamSet
from .training import AdamState, TrainConfig, Trainer

MAGIC = b"CHARNMT\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    model: ModelConfig
    train: TrainConfig
    src_vocab: Vocabulary
    trg_vocab: Vocabulary
    params: ParamSet
    adam: AdamState
    epoch: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_trainer(cls, trainer: Trainer, src_vocab: Vocabulary, trg_vocab: Vocabulary,
                     extra: dict | None = None) -> "Checkpoint":
        return cls(trainer.model, trainer.config, src_vocab, trg_vocab, trainer.params,
                   trainer.adam, trainer.epoch, dict(extra or {}))

    def to_trainer(self) -> Trainer:
        trainer = Trainer(self.model, self.train, self.params)
        trainer.adam = self.adam
        trainer.epoch = self.epoch
        return trainer


def to_bytes(ckpt: Checkpoint) -> bytes:
    index = []
    blobs = []
    for group, arrays in (("param", ckpt.params.arrays()), ("adam_m", ckpt.adam.m),
                          ("adam_v", ckpt.adam.v)):
        for name, arr in arrays.items():
            entry = {"group": group, "name": name, "shape": list(arr.shape)}
            if group == "param":
                entry["bias"] = bool(ckpt.params[name].bias)
            index.append(entry)
            blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    header = {
        "format": FORMAT_VERSION,
        "model": ckpt.model.to_dict(),
        "train": ckpt.train.to_dict(),
        "src_vocab": ckpt.src_vocab.dumps(),
        "trg_vocab": ckpt.trg_vocab.dumps(),
        "epoch": ckpt.epoch,
        "adam": {"step": ckpt.adam.step, "beta1": ckpt.adam.beta1,
                 "beta2": ckpt.adam.beta2, "eps": ckpt.adam.eps},
        "extra": ckpt.extra,
        "tensors": index,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(head)) + head + b"".join(blobs)


def from_bytes(raw: bytes) -> Checkpoint:
    if len(raw) < _PREFIX.size:
        raise ConfigError("checkpoint is truncated")
    magic, version, n = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise ConfigError("not a checkpoint file")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format {version}")
    header = json.loads(raw[_PREFIX.size:_PREFIX.size + n].decode())
    offset = _PREFIX.size + n
    params = ParamSet()
    m, v = {}, {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise ConfigError("checkpoint is truncated")
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset = end
        if entry["group"] == "param":
            params.add(entry["name"], arr, bias=entry["bias"])
        elif entry["group"] == "adam_m":
            m[entry["name"]] = arr
        else:
            v[entry["name"]] = arr
    if offset != len(raw):
        raise ConfigError("trailing bytes after checkpoint tensors")
    a = header["adam"]
    return Checkpoint(
        ModelConfig(**header["model"]),
        TrainConfig.from_dict(header["train"]),
        Vocabulary.loads(header["src_vocab"]),
        Vocabulary.loads(header["trg_vocab"]),
        params,
        AdamState(m, v, a["step"], a["beta1"], a["beta2"], a["eps"]),
        header["epoch"],
        header["extra"],
    )


def save(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    os.replace(tmp, path)


def load(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such checkpoint: {path}")
    return from_bytes(path.read_bytes())
