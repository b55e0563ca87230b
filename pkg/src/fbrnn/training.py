"""Supervised training loop with early stopping and checkpointing.

Updates are per example by default (batch_size gives plain gradient
accumulation over several examples per optimizer step). Every stochastic
choice (init, shuffling, dropout, negative downsampling) is driven by one
seeded stream, so a fixed seed reproduces the parameter trajectory
bitwise. Early stopping watches dev micro-F1; the returned model is the
best-dev checkpoint.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .candidates import LabeledExample, TriggerLexicon
from .corpus import Corpus, LabelSet
from .errors import ConfigurationError, DataError, NumericError
from .evaluation import evaluate_model
from .fileio import write_text_atomic
from .model import ModelConfig, NuggetModel, assemble_model
from .numerics import Mode, Optimizer, Rng, OPTIMIZER_KINDS

__all__ = [
    "TrainConfig",
    "EpochStat",
    "TrainLog",
    "train_model",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]


@dataclass(frozen=True)
class TrainConfig:
    """All hyperparameters for one run, flat so config files stay flat."""

    cell: str = "gru"
    hidden_size: int = 32
    layers: int = 1
    word_dim: int = 300
    branch_dim: int = 20
    use_branch: bool = True
    head_mode: str = "softmax"
    head_hidden: tuple[int, ...] | None = None
    dropout: float = 0.5
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 5.0
    max_epochs: int = 50
    patience: int = 5
    batch_size: int = 1
    negative_ratio: float | None = None
    max_nugget_len: int = 3
    threshold: float = 0.5
    seed: int = 0

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            cell=self.cell,
            hidden_size=self.hidden_size,
            layers=self.layers,
            word_dim=self.word_dim,
            branch_dim=self.branch_dim,
            use_branch=self.use_branch,
            head_mode=self.head_mode,
            head_hidden=self.head_hidden,
            dropout=self.dropout,
        )

    def validate(self) -> None:
        self.model_config().validate()
        if self.optimizer not in OPTIMIZER_KINDS:
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.max_epochs < 1 or self.batch_size < 1 or self.max_nugget_len < 1:
            raise ConfigurationError(
                "max_epochs, batch_size and max_nugget_len must be >= 1"
            )
        if self.patience < 0:
            raise ConfigurationError("patience must be >= 0")
        if self.negative_ratio is not None and self.negative_ratio <= 0:
            raise ConfigurationError("negative_ratio must be positive or unset")


@dataclass
class EpochStat:
    epoch: int
    loss: float
    dev_p: float | None
    dev_r: float | None
    dev_f1: float | None
    seconds: float


@dataclass
class TrainLog:
    epochs: list[EpochStat] = field(default_factory=list)
    best_epoch: int | None = None

    def best_dev_f1(self) -> float | None:
        scores = [e.dev_f1 for e in self.epochs if e.dev_f1 is not None]
        return max(scores) if scores else None

    def to_csv(self, timing: bool = False) -> str:
        """CSV rows `epoch,loss,dev_p,dev_r,dev_f1,seconds`.

        By default the seconds column is written as 0.000 so that logs from
        identically seeded runs are byte-identical; pass timing=True for
        real wall-clock values.
        """
        lines = ["epoch,loss,dev_p,dev_r,dev_f1,seconds"]
        for e in self.epochs:
            dev = (
                ",,"
                if e.dev_f1 is None
                else f"{e.dev_p:.6f},{e.dev_r:.6f},{e.dev_f1:.6f}"
            )
            secs = f"{e.seconds:.3f}" if timing else "0.000"
            lines.append(f"{e.epoch},{e.loss:.6f},{dev},{secs}")
        return "\n".join(lines) + "\n"

    def format_table(self) -> str:
        lines = [f"{'epoch':>5} {'loss':>10} {'dev P':>8} {'dev R':>8} {'dev F1':>8} {'sec':>7}"]
        for e in self.epochs:
            if e.dev_f1 is None:
                dev = f"{'-':>8} {'-':>8} {'-':>8}"
            else:
                dev = f"{100 * e.dev_p:8.2f} {100 * e.dev_r:8.2f} {100 * e.dev_f1:8.2f}"
            marker = " *" if e.epoch == self.best_epoch else ""
            lines.append(f"{e.epoch:>5} {e.loss:>10.4f} {dev} {e.seconds:>7.2f}{marker}")
        return "\n".join(lines)


def _epoch_order(
    examples: Sequence[LabeledExample],
    rng: Rng,
    negative_ratio: float | None,
) -> list[int]:
    """Shuffled example indices, optionally downsampling non-events."""
    order = list(range(len(examples)))
    if negative_ratio is not None:
        positives = [i for i in order if examples[i].candidate.types]
        negatives = [i for i in order if not examples[i].candidate.types]
        rng.shuffle(negatives)
        keep = min(len(negatives), int(math.ceil(negative_ratio * len(positives))))
        order = positives + negatives[:keep]
    rng.shuffle(order)
    return order


def train_model(
    cfg: TrainConfig,
    train_examples: Sequence[LabeledExample],
    dev_examples: Sequence[LabeledExample] | None,
    dev_gold: Corpus | None,
    vocab: Sequence[str],
    labels: LabelSet,
    pretrained: dict[str, np.ndarray] | None = None,
) -> tuple[NuggetModel, TrainLog]:
    """Train on labeled candidates; return (best-dev model, log).

    Without a dev set early stopping is disabled (with a warning) and the
    final-epoch model is returned.
    """
    cfg.validate()
    if not train_examples:
        raise ConfigurationError("training set is empty")
    has_dev = bool(dev_examples) and dev_gold is not None and len(dev_gold) > 0
    if not has_dev:
        warnings.warn("no dev set: early stopping disabled, returning final epoch")

    rng = Rng(cfg.seed)
    from .model import build_model  # vocabulary ordering lives there

    model = build_model(cfg.model_config(), list(vocab), labels, rng, pretrained)
    opt = Optimizer(
        model.store,
        kind=cfg.optimizer,
        lr=cfg.lr,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
        clip_norm=cfg.clip_norm,
    )

    log = TrainLog()
    best_f1 = -1.0
    best_state: dict[str, np.ndarray] | None = None
    best_epoch: int | None = None
    epochs_since_best = 0

    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        order = _epoch_order(train_examples, rng, cfg.negative_ratio)
        total_loss = 0.0
        batch_fill = 0
        model.store.zero_grads()
        for pos, idx in enumerate(order):
            ex = train_examples[idx]
            try:
                total_loss += model.forward_backward(
                    ex.split, ex.candidate.types, Mode.TRAIN, rng
                )
            except NumericError as e:
                raise NumericError(
                    f"epoch {epoch}, example {idx} "
                    f"(sentence {ex.sentence_index}, span {ex.candidate.span}): {e}"
                ) from e
            batch_fill += 1
            if batch_fill == cfg.batch_size or pos == len(order) - 1:
                try:
                    opt.step()
                except NumericError as e:
                    raise NumericError(f"epoch {epoch}: {e}") from e
                model.store.zero_grads()
                batch_fill = 0
        mean_loss = total_loss / len(order)

        dev_p = dev_r = dev_f1 = None
        if has_dev:
            report = evaluate_model(model, dev_examples, dev_gold, cfg.threshold)
            dev_p, dev_r, dev_f1 = report.precision, report.recall, report.f1
        seconds = time.perf_counter() - started
        log.epochs.append(EpochStat(epoch, mean_loss, dev_p, dev_r, dev_f1, seconds))

        if has_dev:
            if dev_f1 > best_f1:
                best_f1 = dev_f1
                best_state = model.store.clone_values()
                best_epoch = epoch
                epochs_since_best = 0
            else:
                epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break
        else:
            best_epoch = epoch

    if best_state is not None:
        model.store.load_values(best_state)
    log.best_epoch = best_epoch
    return model, log


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    model: NuggetModel,
    lexicon: TriggerLexicon | None = None,
    max_nugget_len: int | None = None,
    threshold: float = 0.5,
) -> None:
    """Self-describing JSON checkpoint: config, labels, vocab, every tensor.

    Optionally embeds the trigger lexicon and candidate settings so that
    prediction on a raw corpus needs nothing but the checkpoint. Written
    atomically; floats round-trip exactly through JSON.
    """
    path = Path(path)
    data = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "fbrnn-checkpoint",
        "config": model.cfg.to_dict(),
        "labels": list(model.labels.event_types),
        "vocab": model.embedder.word.words,
        "pipeline": {
            "lexicon": lexicon.to_dict() if lexicon is not None else None,
            "max_nugget_len": max_nugget_len,
            "threshold": threshold,
        },
        "tensors": {
            t.name: {"shape": list(t.shape), "values": t.values.reshape(-1).tolist()}
            for t in model.store
        },
    }
    write_text_atomic(path, json.dumps(data))


@dataclass
class LoadedCheckpoint:
    model: NuggetModel
    lexicon: TriggerLexicon | None
    max_nugget_len: int | None
    threshold: float


def load_checkpoint(
    path: str | Path, expect: ModelConfig | None = None
) -> LoadedCheckpoint:
    """Rebuild a model from a checkpoint file.

    Rejects version mismatches, tensors with unexpected names or shapes,
    and (when `expect` is given) any config different from the expected
    one. A truncated or corrupt file fails cleanly without a partial model.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: corrupt checkpoint (invalid JSON): {e}") from e
    if not isinstance(data, dict) or data.get("kind") != "fbrnn-checkpoint":
        raise DataError(f"{path}: not a model checkpoint")
    if data.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(
            f"{path}: unsupported checkpoint version {data.get('format_version')!r}"
        )
    try:
        cfg = ModelConfig.from_dict(data["config"])
        labels = LabelSet(data["labels"])
        vocab = list(data["vocab"])
        tensors = data["tensors"]
    except (KeyError, TypeError, ConfigurationError) as e:
        raise DataError(f"{path}: malformed checkpoint: {e}") from e
    if expect is not None and cfg != expect:
        raise DataError(
            f"{path}: checkpoint config does not match the requested run "
            f"(checkpoint {cfg}, expected {expect})"
        )

    model = assemble_model(cfg, vocab, labels, Rng(0))
    store = model.store
    missing = [n for n in store.names() if n not in tensors]
    extra = [n for n in tensors if n not in store]
    if missing or extra:
        raise DataError(
            f"{path}: tensor set mismatch: missing={missing!r} extra={extra!r}"
        )
    for name in store.names():
        entry = tensors[name]
        shape = tuple(entry["shape"])
        tensor = store[name]
        if shape != tensor.shape:
            raise DataError(
                f"{path}: tensor {name!r} has shape {shape}, expected {tensor.shape}"
            )
        values = np.array(entry["values"], dtype=np.float64).reshape(shape)
        tensor.values[...] = values

    pipeline = data.get("pipeline") or {}
    lex = pipeline.get("lexicon")
    return LoadedCheckpoint(
        model=model,
        lexicon=TriggerLexicon.from_dict(lex) if lex else None,
        max_nugget_len=pipeline.get("max_nugget_len"),
        threshold=float(pipeline.get("threshold", 0.5)),
    )
