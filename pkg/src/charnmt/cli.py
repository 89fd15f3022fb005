"""Command-line interface: ``charnmt {train,translate,evaluate,attend}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

from . import checkpoint as ckpt_io
from .data import build_vocab, load_parallel, make_pairs, read_lines
from .errors import ConfigError, EmptyInputError, TrainingError, VocabularyError
from .evalx import attention_trace, evaluate, translate
from .model import VARIANTS, ModelConfig
from .training import TrainConfig, Trainer

log = logging.getLogger("charnmt")

# flag name -> TrainConfig field
_OVERRIDES = {
    "variant": "variant", "seed": "seed", "budget": "budget", "hidden": "hidden",
    "embed": "embed", "attn": "attn", "epochs": "epochs", "lr": "learning_rate",
    "l2": "l2", "clip": "clip", "max_len": "max_len",
}


def resolve_config(args: argparse.Namespace) -> TrainConfig:
    """Defaults, then the ``--config`` JSON file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"no such config file: {path}")
        try:
            values.update(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
        known = {f.name for f in fields(TrainConfig)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    for flag, key in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    return TrainConfig(**values)


def _model_config(cfg: TrainConfig, src_vocab, trg_vocab) -> ModelConfig:
    return ModelConfig(cfg.variant, len(src_vocab), len(trg_vocab), src_vocab.space_id,
                       embed=cfg.embed, hidden=cfg.hidden, attn=cfg.attn)


def cmd_train(args: argparse.Namespace) -> int:
    out = Path(args.out)
    last = out / "last.ckpt"
    train_src, train_trg = load_parallel(args.train_src, args.train_trg)
    valid = None
    if args.valid_src or args.valid_trg:
        if not (args.valid_src and args.valid_trg):
            raise ConfigError("--valid-src and --valid-trg must be given together")
        valid = load_parallel(args.valid_src, args.valid_trg)

    if args.resume:
        state = ckpt_io.load(last)
        trainer = state.to_trainer()
        cfg = trainer.config
        if args.epochs is not None:
            cfg.epochs = args.epochs
        src_vocab, trg_vocab = state.src_vocab, state.trg_vocab
        best = state.extra.get("best_bleu")
    else:
        cfg = resolve_config(args)
        src_vocab = build_vocab(train_src, args.vocab_size, ensure_space=True)
        trg_vocab = build_vocab(train_trg, args.vocab_size)
        trainer = Trainer(_model_config(cfg, src_vocab, trg_vocab), cfg)
        best = None

    pairs = make_pairs(train_src, train_trg, src_vocab, trg_vocab)
    if not pairs:
        raise ConfigError("no training pairs left after filtering")
    out.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log else out / "train.jsonl"
    mode = "a" if args.resume else "w"
    with open(log_path, mode, encoding="utf-8") as logf:
        while trainer.epoch < cfg.epochs:
            metrics = trainer.train_epoch(pairs)
            bleu = None
            if valid is not None:
                result = evaluate(trainer.model, trainer.params, valid[0], valid[1],
                                  src_vocab, trg_vocab, cfg.max_len)
                bleu = result.bleu.score
            record = {"epoch": metrics.epoch, "loss": metrics.loss, "bleu": bleu,
                      "seconds": round(metrics.seconds, 3)}
            logf.write(json.dumps(record) + "\n")
            logf.flush()
            log.info("epoch %d loss %.5f bleu %s", metrics.epoch, metrics.loss,
                     "-" if bleu is None else f"{bleu:.2f}")
            improved = bleu is not None and (best is None or bleu > best)
            if improved:
                best = bleu
            state = ckpt_io.Checkpoint.from_trainer(trainer, src_vocab, trg_vocab,
                                                    {"best_bleu": best})
            ckpt_io.save(last, state)
            if improved or valid is None:
                ckpt_io.save(out / "best.ckpt", state)
            if args.save_every and metrics.epoch % args.save_every == 0:
                ckpt_io.save(out / f"epoch-{metrics.epoch:04d}.ckpt", state)
    return 0


def _load_for_inference(args):
    state = ckpt_io.load(args.checkpoint)
    max_len = args.max_len if args.max_len is not None else state.train.max_len
    return state, max_len


def cmd_translate(args: argparse.Namespace) -> int:
    state, max_len = _load_for_inference(args)
    if args.sentence is not None:
        lines = [args.sentence]
    elif args.input:
        lines = read_lines(args.input)
    else:
        lines = sys.stdin.read().split("\n")
        if lines and lines[-1] == "":
            lines.pop()
    texts, decoded = translate(state.model, state.params, lines, state.src_vocab,
                               state.trg_vocab, max_len)
    for i, (text, dec) in enumerate(zip(texts, decoded)):
        if dec.truncated:
            print(f"warning: line {i + 1} reached --max-len {max_len} without eos",
                  file=sys.stderr)
        sys.stdout.write(text + "\n")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    state, max_len = _load_for_inference(args)
    src, ref = load_parallel(args.src, args.ref)
    result = evaluate(state.model, state.params, src, ref, state.src_vocab,
                      state.trg_vocab, max_len)
    if args.hyp_out:
        Path(args.hyp_out).write_text("".join(h + "\n" for h in result.hypotheses),
                                      encoding="utf-8")
    print(result.bleu)
    if result.truncated:
        print(f"warning: {result.truncated} hypotheses hit --max-len", file=sys.stderr)
    return 0


def cmd_attend(args: argparse.Namespace) -> int:
    state, max_len = _load_for_inference(args)
    trace, dec = attention_trace(state.model, state.params, args.sentence,
                                 state.src_vocab, state.trg_vocab, max_len)
    if dec.truncated:
        print(f"warning: decoding reached --max-len {max_len} without eos", file=sys.stderr)
    text = trace.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="charnmt", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--train-src", required=True)
    t.add_argument("--train-trg", required=True)
    t.add_argument("--valid-src")
    t.add_argument("--valid-trg")
    t.add_argument("--out", "--checkpoint-dir", dest="out", required=True,
                   help="directory for last.ckpt, best.ckpt and the log")
    t.add_argument("--config")
    t.add_argument("--variant", choices=VARIANTS)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--budget", type=int)
    t.add_argument("--hidden", type=int)
    t.add_argument("--embed", type=int)
    t.add_argument("--attn", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--l2", type=float)
    t.add_argument("--clip", type=float)
    t.add_argument("--max-len", type=int)
    t.add_argument("--vocab-size", type=int, default=300)
    t.add_argument("--save-every", type=int, default=0,
                   help="also keep epoch-NNNN.ckpt every N epochs")
    t.add_argument("--log", help="JSON-lines log (default OUT/train.jsonl)")
    t.add_argument("--resume", action="store_true", help="continue from OUT/last.ckpt")
    t.set_defaults(func=cmd_train)

    for name, func, help_ in (("translate", cmd_translate, "translate sentences"),
                              ("evaluate", cmd_evaluate, "BLEU against references"),
                              ("attend", cmd_attend, "export an attention matrix")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--max-len", type=int)
        s.set_defaults(func=func)
        if name == "translate":
            g = s.add_mutually_exclusive_group()
            g.add_argument("--input", help="file with one sentence per line (default stdin)")
            g.add_argument("--sentence")
        elif name == "evaluate":
            s.add_argument("--src", required=True)
            s.add_argument("--ref", required=True)
            s.add_argument("--hyp-out")
        else:
            s.add_argument("--sentence", required=True)
            s.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, VocabularyError, EmptyInputError, TrainingError, OSError) as e:
        print(f"charnmt {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
