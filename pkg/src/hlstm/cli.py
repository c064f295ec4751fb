"""Command line: ``hlstm {train,eval,predict,synth,compare}``.

Settings resolve as command-line flag, then ``--config`` file (flat
``key=value`` lines, keys named like the long flags with ``-`` or ``_``),
then built-in default.  Errors print one line ``error:<category>: <message>``
to stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .data import parse_corpus
from .errors import ConfigError, HlstmError
from .synthetic import SyntheticSpec, generate_synthetic
from .training import TrainConfig

# flag dest -> (TrainConfig field or None, type, default)
SETTINGS = {
    "seed": ("seed", int, 42),
    "epochs": ("max_epochs", int, 200),
    "batch_size": ("batch_size", int, 10),
    "lr": ("learning_rate", float, 0.001),
    "hidden": ("hidden", int, 200),
    "word_dim": ("word_dim", int, 300),
    "aspect_dim": ("aspect_dim", int, 15),
    "patience": ("patience", int, 10),
    "dropout": ("dropout_rate", float, 0.5),
    "clip_norm": ("clip_norm", float, 5.0),
    "val_fraction": ("val_fraction", float, 0.1),
    "dtype": ("dtype", str, "float32"),
    "model": (None, str, "hlstm"),
    "min_count": (None, int, 1),
    "ambiguity": (None, float, 0.5),
    "reviews": (None, int, 500),
    "test_reviews": (None, int, 200),
    "holdout": (None, float, 0.2),
}
FLAGS = ("pretokenized", "none_aspect", "no_timing")


def read_config_file(path) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or (key not in SETTINGS and key not in FLAGS):
            raise ConfigError(f"{path}:{lineno}: unknown or malformed setting {line!r}")
        values[key] = value.strip()
    return values


def resolve(args) -> dict:
    """Merge flags over config file over defaults into a plain dict."""
    file_values = read_config_file(args.config) if args.config else {}
    out = {}
    for key, (_, typ, default) in SETTINGS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in file_values:
            try:
                out[key] = typ(file_values[key])
            except ValueError:
                raise ConfigError(f"config value for {key} is not a valid {typ.__name__}") from None
        else:
            out[key] = default
    for key in FLAGS:
        out[key] = bool(getattr(args, key, False)) or \
            file_values.get(key, "false").lower() in ("1", "true", "yes")
    if out["model"] not in ("hlstm", "baseline"):
        raise ConfigError(f"--model must be hlstm or baseline, got {out['model']!r}")
    return out


def train_config(s: dict) -> TrainConfig:
    return TrainConfig(**{f: s[k] for k, (f, _, _) in SETTINGS.items() if f})


def _need(path, what):
    if not path:
        raise ConfigError(f"--{what} is required")
    if not Path(path).exists():
        raise ConfigError(f"{what} path does not exist: {path}")
    return path


def _out_dir(args) -> Path:
    if not args.out:
        raise ConfigError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args, s):
    reviews = parse_corpus(_need(args.corpus, "corpus"))
    if args.embeddings:
        _need(args.embeddings, "embeddings")
    out = _out_dir(args)
    cfg = train_config(s)
    res = pipeline.fit(reviews, cfg, kind=s["model"], embeddings=args.embeddings,
                       min_count=s["min_count"], none_aspect=s["none_aspect"],
                       pretokenized=s["pretokenized"])
    pipeline.save_fit(out / "model.ckpt", res, cfg)
    (out / "report.jsonl").write_text(res.report.to_jsonl(timing=not s["no_timing"]))
    print(f"best epoch {res.report.best_epoch} val_acc {res.report.best_val_acc:.4f} "
          f"-> {out / 'model.ckpt'}")


def _eval_corpus(args):
    return parse_corpus(_need(args.test or args.corpus, "test"))


def cmd_eval(args, s):
    ckpt = pipeline.load(_need(args.checkpoint, "checkpoint"))
    reviews = _eval_corpus(args)
    if not reviews:
        raise ConfigError("evaluation corpus is empty")
    ev = pipeline.evaluate_checkpoint(ckpt, reviews, none_aspect=s["none_aspect"],
                                      pretokenized=s["pretokenized"])
    text = json.dumps(ev.to_dict(), sort_keys=True)
    print(text)
    if args.out:
        (_out_dir(args) / "metrics.json").write_text(text + "\n")


def cmd_predict(args, s):
    ckpt = pipeline.load(_need(args.checkpoint, "checkpoint"))
    records = pipeline.predict_records(ckpt, _eval_corpus(args), none_aspect=s["none_aspect"],
                                       pretokenized=s["pretokenized"])
    text = "".join(json.dumps(r) + "\n" for r in records)
    if args.out:
        (_out_dir(args) / "predictions.jsonl").write_text(text)
    else:
        sys.stdout.write(text)


def cmd_synth(args, s):
    out = _out_dir(args)
    spec = SyntheticSpec(n_reviews=s["reviews"], n_test_reviews=s["test_reviews"],
                         ambiguity_rate=s["ambiguity"], seed=s["seed"])
    train, test = generate_synthetic(spec, out)
    print(f"wrote {len(train)} train / {len(test)} test reviews to {out}")


def cmd_compare(args, s):
    reviews = parse_corpus(_need(args.corpus, "corpus"))
    if args.test:
        test = parse_corpus(_need(args.test, "test"))
    else:
        reviews, test = pipeline.holdout_split(reviews, s["holdout"], s["seed"])
    out = _out_dir(args)
    cmp = pipeline.compare(reviews, test, train_config(s), embeddings=args.embeddings,
                           min_count=s["min_count"], none_aspect=s["none_aspect"],
                           pretokenized=s["pretokenized"])
    table = pipeline.format_comparison(cmp)
    (out / "compare.txt").write_text(table)
    summary = {k: {x: v for x, v in cmp[k].items() if x != "result"} for k in ("hlstm", "baseline")}
    summary["gap"] = cmp["gap"]
    (out / "compare.json").write_text(json.dumps(summary, sort_keys=True) + "\n")
    sys.stdout.write(table)


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "predict": cmd_predict, "synth": cmd_synth,
            "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hlstm", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--corpus", help="training corpus XML (eval/predict: corpus to score)")
    p.add_argument("--test", help="test corpus XML")
    p.add_argument("--embeddings", help="text embedding file, one token + floats per line")
    p.add_argument("--checkpoint", help="model checkpoint to load (eval, predict)")
    p.add_argument("--out", help="output directory; nothing is written elsewhere")
    p.add_argument("--config", help="flat key=value settings file")
    p.add_argument("--model", choices=("hlstm", "baseline"), default=None, help="default: hlstm")
    for key, (_, typ, default) in SETTINGS.items():
        if key == "model":
            continue
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None,
                       help=f"default: {default}")
    p.add_argument("--pretokenized", action="store_true", help="text is already space-tokenized")
    p.add_argument("--none-aspect", action="store_true",
                   help="label aspect-free sentences NONE#NONE/neutral instead of dropping them")
    p.add_argument("--no-timing", action="store_true", help="omit elapsed_ms from report.jsonl")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(args)
        COMMANDS[args.command](args, settings)
    except HlstmError as exc:
        print(f"error:{exc.category}: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error:io: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
