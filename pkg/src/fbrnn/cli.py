"""Command-line surface for the whole pipeline.

Subcommands: synth, build-lexicon, candidates, train, evaluate, predict,
gradcheck, ablate. Configuration is a flat `key = value` file overridable
by flags; unknown keys are rejected. Exit codes: 0 success, 1 usage or
configuration error, 2 data validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

from .candidates import (
    build_examples,
    build_trigger_lexicon,
    labeled_candidates,
    load_lexicon,
    save_lexicon,
)
from .corpus import (
    Corpus,
    LabelSet,
    load_corpus,
    load_label_set,
    make_positional_corpus,
    make_synthetic_corpus,
    default_synthetic_spec,
    save_corpus,
    save_label_set,
    split_corpus,
    vocabulary_of,
    POSITIONAL_EVENT_TYPE,
)
from .embeddings import load_pretrained
from .errors import ConfigurationError, DataError, NumericError
from .fileio import write_text_atomic
from .evaluation import PredictedNugget, evaluate_model, run_ablation, score
from .model import CELL_KINDS, HEAD_MODES, tiny_gradcheck
from .numerics import Rng
from .training import TrainConfig, load_checkpoint, save_checkpoint, train_model

_STAND_IN_PARAPHRASES = """\
# Stand-in paraphrase pairs: source<TAB>paraphrase, '#' starts a comment.
# Sources are trigger words of the default synthetic grammar.
attacked\tassaulted
raided\toverran
departed\texited
purchased\tacquired
arrested\tapprehended
met\tgreeted
"""

_GRADCHECK_TOL = 1e-4


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors map to exit code 1."""

    def error(self, message: str):  # noqa: D102 - argparse hook
        raise ConfigurationError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# Flat key = value run configuration
# ---------------------------------------------------------------------------

_PATH_KEYS = {
    "train_corpus",
    "dev_corpus",
    "labels",
    "embeddings",
    "paraphrases",
    "out_dir",
}
_CONFIG_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} | _PATH_KEYS | {
    "dev_fraction"
}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in _PATH_KEYS:
        return None if raw.lower() == "none" else raw
    if key in ("cell", "head_mode", "optimizer"):
        return raw
    if key == "use_branch":
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigurationError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if key == "head_hidden":
        if raw.lower() == "none":
            return None
        try:
            return tuple(int(part) for part in raw.split(","))
        except ValueError:
            raise ConfigurationError(
                f"config key {key!r}: expected comma-separated ints, got {raw!r}"
            ) from None
    if key in ("clip_norm", "negative_ratio"):
        return None if raw.lower() == "none" else float(raw)
    if key in (
        "hidden_size",
        "layers",
        "word_dim",
        "branch_dim",
        "max_epochs",
        "patience",
        "batch_size",
        "max_nugget_len",
        "seed",
    ):
        return int(raw)
    if key in ("dropout", "lr", "beta1", "beta2", "eps", "threshold", "dev_fraction"):
        return float(raw)
    raise ConfigurationError(f"unknown config key {key!r}")


def _read_config_file(path: str) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {p}: {e}") from e
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{p}:{lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"{p}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as e:
            raise ConfigurationError(f"{p}:{lineno}: bad value for {key!r}: {e}") from e
    return values


def _resolve_run_config(args) -> dict:
    """Config file values overridden by any explicitly given CLI flags."""
    values = _read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _CONFIG_KEYS:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            values[key] = flag_val
    return values


def _train_config_from(values: dict) -> TrainConfig:
    kwargs = {
        f.name: values[f.name]
        for f in dataclasses.fields(TrainConfig)
        if f.name in values and values[f.name] is not None
    }
    cfg = TrainConfig(**kwargs)
    cfg.validate()
    return cfg


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise ConfigurationError(f"missing required input: {what}")
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"{what} not found: {p}")
    return p


def _config_digest(values: dict) -> str:
    canon = "\n".join(f"{k} = {values[k]}" for k in sorted(values))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = Rng(args.seed)
    if args.grammar == "default":
        spec = default_synthetic_spec(args.sentences, args.negative_rate)
        corpus = make_synthetic_corpus(spec, rng)
        labels = spec.label_set()
        write_text_atomic(out / "paraphrases.tsv", _STAND_IN_PARAPHRASES)
    else:
        corpus = make_positional_corpus(args.sentences, rng)
        labels = LabelSet([POSITIONAL_EVENT_TYPE])
    train, dev = split_corpus(corpus, args.dev_fraction, rng)
    save_corpus(train, out / "train.jsonl")
    save_corpus(dev, out / "dev.jsonl")
    save_label_set(labels, out / "labels.json")
    print(
        f"wrote {len(train)} train / {len(dev)} dev sentences, "
        f"{len(labels.event_types)} event types -> {out}"
    )
    return 0


def cmd_build_lexicon(args) -> int:
    labels = load_label_set(_require_file(args.labels, "label file"))
    corpus = load_corpus(_require_file(args.corpus, "corpus"), labels)
    paraphrases = (
        _require_file(args.paraphrases, "paraphrase file") if args.paraphrases else None
    )
    lex = build_trigger_lexicon(corpus, paraphrases)
    save_lexicon(lex, Path(args.out))
    gold = sum(1 for w in lex.entries if lex.counts(w)[0] > 0)
    para = sum(1 for w in lex.entries if lex.counts(w)[0] == 0)
    print(f"lexicon: {len(lex)} entries ({gold} from gold, {para} paraphrase-only)")
    return 0


def cmd_candidates(args) -> int:
    labels = load_label_set(_require_file(args.labels, "label file"))
    corpus = load_corpus(_require_file(args.corpus, "corpus"), labels)
    lex = load_lexicon(_require_file(args.lexicon, "lexicon"))
    lines = []
    n_candidates = 0
    n_events = 0
    for sentence in corpus:
        cands = labeled_candidates(sentence, lex, labels, args.max_nugget_len)
        n_candidates += len(cands)
        n_events += sum(1 for c in cands if c.types)
        lines.append(
            json.dumps(
                {
                    "tokens": [
                        {"t": t.text} if t.pos is None else {"t": t.text, "pos": t.pos}
                        for t in sentence.tokens
                    ],
                    "candidates": [
                        {"start": c.start, "end": c.end, "label": list(c.types)}
                        for c in cands
                    ],
                }
            )
        )
    write_text_atomic(Path(args.out), "\n".join(lines) + "\n")
    print(
        f"{n_candidates} candidates over {len(corpus)} sentences "
        f"({n_events} aligned to gold) -> {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    values = _resolve_run_config(args)
    cfg = _train_config_from(values)
    train_path = _require_file(values.get("train_corpus"), "train_corpus")
    labels = load_label_set(_require_file(values.get("labels"), "labels"))
    full_train = load_corpus(train_path, labels)

    if values.get("dev_corpus"):
        dev = load_corpus(_require_file(values["dev_corpus"], "dev_corpus"), labels)
        train = full_train
    else:
        fraction = values.get("dev_fraction", 0.2)
        if fraction:
            train, dev = split_corpus(full_train, fraction, Rng(cfg.seed).spawn(1))
        else:
            train, dev = full_train, Corpus(())

    paraphrases = values.get("paraphrases")
    if paraphrases:
        _require_file(paraphrases, "paraphrases")
    pretrained = None
    if values.get("embeddings"):
        pretrained = load_pretrained(
            _require_file(values["embeddings"], "embeddings"), cfg.word_dim
        )

    lexicon = build_trigger_lexicon(train, paraphrases)
    train_ex = build_examples(train, lexicon, labels, cfg.max_nugget_len)
    dev_ex = build_examples(dev, lexicon, labels, cfg.max_nugget_len) if len(dev) else []
    vocab = vocabulary_of(train)

    model, log = train_model(cfg, train_ex, dev_ex, dev, vocab, labels, pretrained)
    if pretrained is not None:
        table = model.embedder.word
        print(
            f"pretrained coverage: {table.pretrained_hits}/{len(table.vocab) - 1} "
            f"vocabulary words ({len(table.oov_words)} OOV)"
        )

    run_dir = Path(values.get("out_dir") or "runs") / _config_digest(values)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        run_dir / "checkpoint.json",
        model,
        lexicon=lexicon,
        max_nugget_len=cfg.max_nugget_len,
        threshold=cfg.threshold,
    )
    write_text_atomic(run_dir / "trainlog.csv", log.to_csv(timing=args.timing))
    save_lexicon(lexicon, run_dir / "lexicon.json")
    resolved = "\n".join(f"{k} = {values[k]}" for k in sorted(values)) + "\n"
    write_text_atomic(run_dir / "config.resolved", resolved)
    write_text_atomic(
        run_dir / "run_info.json",
        json.dumps(
            {
                "run_id": _config_digest(values),
                "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
                "train_sentences": len(train),
                "dev_sentences": len(dev),
                "train_examples": len(train_ex),
                "best_epoch": log.best_epoch,
                "best_dev_f1": log.best_dev_f1(),
            }
        )
        + "\n",
    )
    print(log.format_table())
    if log.best_dev_f1() is not None:
        print(f"best epoch {log.best_epoch}: dev F1 {100 * log.best_dev_f1():.2f}")
    print(f"artifacts -> {run_dir}")
    return 0


def _read_predictions(path: Path) -> list[PredictedNugget]:
    preds = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            preds.append(
                PredictedNugget(
                    int(obj["sentence"]),
                    int(obj["start"]),
                    int(obj["end"]),
                    tuple(obj["types"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DataError(f"{path}:{lineno}: bad prediction record: {e}") from e
    return preds


def cmd_evaluate(args) -> int:
    if bool(args.checkpoint) == bool(args.predictions):
        raise ConfigurationError("evaluate needs exactly one of --checkpoint/--predictions")
    if args.predictions:
        labels = load_label_set(_require_file(args.labels, "label file"))
        corpus = load_corpus(_require_file(args.corpus, "corpus"), labels)
        preds = _read_predictions(_require_file(args.predictions, "predictions"))
        report = score(preds, corpus, span_only=args.span_only)
    else:
        loaded = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
        if loaded.lexicon is None:
            raise DataError("checkpoint has no embedded lexicon; cannot generate candidates")
        corpus = load_corpus(_require_file(args.corpus, "corpus"), loaded.model.labels)
        examples = build_examples(
            corpus, loaded.lexicon, loaded.model.labels, loaded.max_nugget_len or 1
        )
        threshold = args.threshold if args.threshold is not None else loaded.threshold
        report = evaluate_model(
            loaded.model, examples, corpus, threshold, span_only=args.span_only
        )
    print(report.format_line())
    if args.out:
        write_text_atomic(Path(args.out), report.to_json() + "\n")
    return 0


def cmd_predict(args) -> int:
    loaded = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    if loaded.lexicon is None:
        raise DataError("checkpoint has no embedded lexicon; cannot generate candidates")
    corpus = load_corpus(_require_file(args.corpus, "corpus"), loaded.model.labels)
    examples = build_examples(
        corpus, loaded.lexicon, loaded.model.labels, loaded.max_nugget_len or 1
    )
    threshold = args.threshold if args.threshold is not None else loaded.threshold
    lines = []
    for ex in examples:
        types = loaded.model.predict(ex.split, threshold)
        if types:
            lines.append(
                json.dumps(
                    {
                        "sentence": ex.sentence_index,
                        "start": ex.candidate.start,
                        "end": ex.candidate.end,
                        "types": list(types),
                    }
                )
            )
    write_text_atomic(Path(args.out), "\n".join(lines) + ("\n" if lines else ""))
    print(f"{len(lines)} predicted nuggets over {len(corpus)} sentences -> {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    combos = (
        [
            ("gru", "softmax", True),
            ("gru", "sigmoid", True),
            ("lstm", "softmax", True),
            ("lstm", "sigmoid", True),
            ("gru", "softmax", False),
        ]
        if args.all
        else [(args.cell, args.head, not args.no_branch)]
    )
    worst = 0.0
    for cell, head, use_branch in combos:
        report = tiny_gradcheck(cell, head, use_branch, seed=args.seed, eps=args.eps)
        tag = f"{cell}/{head}/{'+branch' if use_branch else '-branch'}"
        print(f"{tag}: max relative error {report.max_rel_error:.3e} "
              f"(worst tensor: {report.worst_tensor})")
        if args.verbose:
            for name, err in sorted(report.per_tensor.items()):
                print(f"  {name:<24} {err:.3e}")
        worst = max(worst, report.max_rel_error)
    if worst >= args.tol:
        print(f"FAIL: max relative error {worst:.3e} >= tolerance {args.tol:g}")
        return 3
    print(f"OK: max relative error {worst:.3e} < tolerance {args.tol:g}")
    return 0


def cmd_ablate(args) -> int:
    values = _resolve_run_config(args)
    cfg = _train_config_from(values)
    labels = load_label_set(_require_file(values.get("labels"), "labels"))
    train = load_corpus(_require_file(values.get("train_corpus"), "train_corpus"), labels)
    dev = load_corpus(_require_file(values.get("dev_corpus"), "dev_corpus"), labels)
    paraphrases = values.get("paraphrases")
    if paraphrases:
        _require_file(paraphrases, "paraphrases")
    grid = run_ablation(train, dev, cfg, labels, paraphrases)
    print(grid.format_table())
    if args.out:
        write_text_atomic(Path(args.out), json.dumps(grid.as_dict(), indent=1) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_train_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--cell", choices=CELL_KINDS)
    p.add_argument("--hidden-size", dest="hidden_size", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--word-dim", dest="word_dim", type=int)
    p.add_argument("--branch-dim", dest="branch_dim", type=int)
    branch = p.add_mutually_exclusive_group()
    branch.add_argument(
        "--branch", dest="use_branch", action="store_const", const=True, default=None
    )
    branch.add_argument(
        "--no-branch", dest="use_branch", action="store_const", const=False
    )
    p.add_argument("--head-mode", dest="head_mode", choices=HEAD_MODES)
    p.add_argument(
        "--head-hidden",
        dest="head_hidden",
        type=lambda s: _coerce("head_hidden", s),
        help="comma-separated hidden widths, or 'none'",
    )
    p.add_argument("--dropout", type=float)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--lr", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--clip-norm", dest="clip_norm", type=lambda s: _coerce("clip_norm", s))
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument(
        "--negative-ratio", dest="negative_ratio", type=lambda s: _coerce("negative_ratio", s)
    )
    p.add_argument("--max-nugget-len", dest="max_nugget_len", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-corpus", dest="train_corpus")
    p.add_argument("--dev-corpus", dest="dev_corpus")
    p.add_argument("--labels")
    p.add_argument("--embeddings")
    p.add_argument("--paraphrases")
    p.add_argument("--dev-fraction", dest="dev_fraction", type=float)
    p.add_argument("--out-dir", dest="out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fbrnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--grammar", choices=("default", "positional"), default="default")
    p.add_argument("--sentences", type=int, default=250)
    p.add_argument("--dev-fraction", dest="dev_fraction", type=float, default=0.2)
    p.add_argument("--negative-rate", dest="negative_rate", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-lexicon", help="trigger lexicon from training gold")
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--paraphrases")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_lexicon)

    p = sub.add_parser("candidates", help="dump labeled candidates as JSON lines")
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--max-nugget-len", dest="max_nugget_len", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_candidates)

    p = sub.add_parser("train", help="train a model")
    _add_train_config_flags(p)
    p.add_argument(
        "--timing",
        action="store_true",
        help="write real wall-clock seconds into trainlog.csv (breaks byte-identical reruns)",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint or a predictions file")
    p.add_argument("--checkpoint")
    p.add_argument("--predictions")
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels", help="label file (predictions mode only)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--span-only", dest="span_only", action="store_true")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="write predicted nuggets for a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--cell", choices=CELL_KINDS, default="gru")
    p.add_argument("--head", choices=HEAD_MODES, default="softmax")
    p.add_argument("--no-branch", dest="no_branch", action="store_true")
    p.add_argument("--all", action="store_true", help="run the full combination sweep")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=2e-4)
    p.add_argument("--tol", type=float, default=_GRADCHECK_TOL)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train the 2x2 cell/branch grid and report dev PRF")
    _add_train_config_flags(p)
    p.add_argument("--out", help="write the grid as JSON here")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args) or 0
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
