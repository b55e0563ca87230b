"""The forward-backward recurrent classifier.

Three separately parameterized recurrent encoders read the left context and
the nugget span left-to-right and the right context right-to-left. Their
final hidden states are concatenated, passed through dropout and a small
fully connected stack, and classified by either a softmax over all classes
(non-event included) or independent sigmoids over the event types
(multi-label mode, where predicting nothing encodes non-event).

Gradients are computed analytically: each cell step caches its gates, the
encoder replays the steps in reverse (backpropagation through time, layer
by layer for stacked cells), and per-token input gradients flow back into
the word and branch embedding rows. Gradients accumulate; callers zero the
store between optimizer steps.

Conventions fixed here:
    GRU   z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br)
          hc = tanh(Wc x + Uc (r*h) + bc); h' = (1-z)*h + z*hc
    LSTM  i,f,o = sig(.); g = tanh(.); c' = f*c + i*g; h' = o*tanh(c')
so with all-zero weights a GRU step halves the hidden state and an LSTM
step gives c' = c/2, h' = tanh(c/2)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .candidates import BranchSplit
from .corpus import LabelSet
from .embeddings import Branch, BranchTable, Embedder, WordTable, UNK
from .errors import ConfigurationError, NumericError
from .numerics import (
    GradCheckReport,
    Mode,
    ParamStore,
    ParamTensor,
    Rng,
    dropout_mask,
    grad_check,
    init_uniform_scaled,
    sigmoid,
    softmax,
)

__all__ = [
    "CELL_KINDS",
    "HEAD_MODES",
    "ModelConfig",
    "GruLayer",
    "LstmLayer",
    "gru_step",
    "gru_step_backward",
    "lstm_step",
    "lstm_step_backward",
    "BranchEncoder",
    "Head",
    "NuggetModel",
    "build_model",
    "softmax_nll",
    "sigmoid_bce",
    "tiny_gradcheck",
]

CELL_KINDS = ("gru", "lstm")
HEAD_MODES = ("softmax", "sigmoid")

_LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    """Structural hyperparameters of the classifier."""

    cell: str = "gru"
    hidden_size: int = 32
    layers: int = 1
    word_dim: int = 300
    branch_dim: int = 20
    use_branch: bool = True
    head_mode: str = "softmax"
    head_hidden: tuple[int, ...] | None = None  # None -> one tanh layer, width 3h
    dropout: float = 0.5

    def validate(self) -> None:
        if self.cell not in CELL_KINDS:
            raise ConfigurationError(f"unknown cell kind {self.cell!r}")
        if self.head_mode not in HEAD_MODES:
            raise ConfigurationError(f"unknown head mode {self.head_mode!r}")
        if self.hidden_size < 1 or self.layers < 1 or self.word_dim < 1:
            raise ConfigurationError("hidden_size, layers and word_dim must be >= 1")
        if self.use_branch and self.branch_dim < 1:
            raise ConfigurationError("branch_dim must be >= 1 when branches are on")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.head_hidden is not None and any(w < 1 for w in self.head_hidden):
            raise ConfigurationError("head_hidden widths must be >= 1")

    def resolved_head_hidden(self) -> tuple[int, ...]:
        if self.head_hidden is None:
            return (3 * self.hidden_size,)
        return tuple(self.head_hidden)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        if d["head_hidden"] is not None:
            d["head_hidden"] = list(d["head_hidden"])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown model config keys: {sorted(unknown)}")
        data = dict(data)
        if data.get("head_hidden") is not None:
            data["head_hidden"] = tuple(data["head_hidden"])
        cfg = cls(**data)
        cfg.validate()
        return cfg


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------


@dataclass
class GruLayer:
    W_z: ParamTensor
    U_z: ParamTensor
    b_z: ParamTensor
    W_r: ParamTensor
    U_r: ParamTensor
    b_r: ParamTensor
    W_c: ParamTensor
    U_c: ParamTensor
    b_c: ParamTensor


@dataclass
class LstmLayer:
    W_i: ParamTensor
    U_i: ParamTensor
    b_i: ParamTensor
    W_f: ParamTensor
    U_f: ParamTensor
    b_f: ParamTensor
    W_o: ParamTensor
    U_o: ParamTensor
    b_o: ParamTensor
    W_g: ParamTensor
    U_g: ParamTensor
    b_g: ParamTensor


_GRU_GATES = ("z", "r", "c")
_LSTM_GATES = ("i", "f", "o", "g")


def _build_layer(
    store: ParamStore, prefix: str, kind: str, d_in: int, h: int, rng: Rng
):
    gates = _GRU_GATES if kind == "gru" else _LSTM_GATES
    tensors = {}
    for g in gates:
        tensors[f"W_{g}"] = store.add(
            init_uniform_scaled(f"{prefix}.W_{g}", (h, d_in), rng)
        )
        tensors[f"U_{g}"] = store.add(
            init_uniform_scaled(f"{prefix}.U_{g}", (h, h), rng)
        )
        tensors[f"b_{g}"] = store.create(f"{prefix}.b_{g}", np.zeros(h))
    return GruLayer(**tensors) if kind == "gru" else LstmLayer(**tensors)


@dataclass
class GruStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    rh: np.ndarray
    hc: np.ndarray


def gru_step(
    x: np.ndarray, h_prev: np.ndarray, p: GruLayer
) -> tuple[np.ndarray, GruStepCache]:
    if x.shape[0] != p.W_z.shape[1] or h_prev.shape[0] != p.U_z.shape[1]:
        raise ConfigurationError(
            f"gru_step shape mismatch: x {x.shape}, h {h_prev.shape}, "
            f"W {p.W_z.shape}"
        )
    z = sigmoid(p.W_z.values @ x + p.U_z.values @ h_prev + p.b_z.values)
    r = sigmoid(p.W_r.values @ x + p.U_r.values @ h_prev + p.b_r.values)
    rh = r * h_prev
    hc = np.tanh(p.W_c.values @ x + p.U_c.values @ rh + p.b_c.values)
    h_new = (1.0 - z) * h_prev + z * hc
    return h_new, GruStepCache(x, h_prev, z, r, rh, hc)


def gru_step_backward(
    dh: np.ndarray, cache: GruStepCache, p: GruLayer
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulates parameter grads; returns (dh_prev, dx)."""
    dz = dh * (cache.hc - cache.h_prev)
    dhc = dh * cache.z
    dh_prev = dh * (1.0 - cache.z)

    da_c = dhc * (1.0 - cache.hc * cache.hc)
    p.W_c.grad += np.outer(da_c, cache.x)
    p.U_c.grad += np.outer(da_c, cache.rh)
    p.b_c.grad += da_c
    drh = p.U_c.values.T @ da_c
    dr = drh * cache.h_prev
    dh_prev = dh_prev + drh * cache.r

    da_z = dz * cache.z * (1.0 - cache.z)
    p.W_z.grad += np.outer(da_z, cache.x)
    p.U_z.grad += np.outer(da_z, cache.h_prev)
    p.b_z.grad += da_z
    dh_prev = dh_prev + p.U_z.values.T @ da_z

    da_r = dr * cache.r * (1.0 - cache.r)
    p.W_r.grad += np.outer(da_r, cache.x)
    p.U_r.grad += np.outer(da_r, cache.h_prev)
    p.b_r.grad += da_r
    dh_prev = dh_prev + p.U_r.values.T @ da_r

    dx = p.W_z.values.T @ da_z + p.W_r.values.T @ da_r + p.W_c.values.T @ da_c
    return dh_prev, dx


@dataclass
class LstmStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tc: np.ndarray  # tanh(c_new)


def lstm_step(
    x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, p: LstmLayer
) -> tuple[np.ndarray, np.ndarray, LstmStepCache]:
    if x.shape[0] != p.W_i.shape[1] or h_prev.shape[0] != p.U_i.shape[1]:
        raise ConfigurationError(
            f"lstm_step shape mismatch: x {x.shape}, h {h_prev.shape}, "
            f"W {p.W_i.shape}"
        )
    i = sigmoid(p.W_i.values @ x + p.U_i.values @ h_prev + p.b_i.values)
    f = sigmoid(p.W_f.values @ x + p.U_f.values @ h_prev + p.b_f.values)
    o = sigmoid(p.W_o.values @ x + p.U_o.values @ h_prev + p.b_o.values)
    g = np.tanh(p.W_g.values @ x + p.U_g.values @ h_prev + p.b_g.values)
    c_new = f * c_prev + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, LstmStepCache(x, h_prev, c_prev, i, f, o, g, tc)


def lstm_step_backward(
    dh: np.ndarray, dc_in: np.ndarray, cache: LstmStepCache, p: LstmLayer
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Accumulates parameter grads; returns (dh_prev, dc_prev, dx)."""
    do = dh * cache.tc
    dc = dc_in + dh * cache.o * (1.0 - cache.tc * cache.tc)
    df = dc * cache.c_prev
    di = dc * cache.g
    dg = dc * cache.i
    dc_prev = dc * cache.f

    da_i = di * cache.i * (1.0 - cache.i)
    da_f = df * cache.f * (1.0 - cache.f)
    da_o = do * cache.o * (1.0 - cache.o)
    da_g = dg * (1.0 - cache.g * cache.g)

    dh_prev = np.zeros_like(dh)
    dx = np.zeros_like(cache.x)
    for da, W, U, b in (
        (da_i, p.W_i, p.U_i, p.b_i),
        (da_f, p.W_f, p.U_f, p.b_f),
        (da_o, p.W_o, p.U_o, p.b_o),
        (da_g, p.W_g, p.U_g, p.b_g),
    ):
        W.grad += np.outer(da, cache.x)
        U.grad += np.outer(da, cache.h_prev)
        b.grad += da
        dh_prev += U.values.T @ da
        dx += W.values.T @ da
    return dh_prev, dc_prev, dx


# ---------------------------------------------------------------------------
# Branch encoders
# ---------------------------------------------------------------------------


@dataclass
class EncoderCache:
    length: int
    layer_caches: list[list]  # [layer][t] step caches, in processing order


class BranchEncoder:
    """One stacked recurrent encoder with a fixed reading direction.

    LEFT and NUGGET branches read forward; the RIGHT branch reads backward
    (its token list is reversed before encoding). The representation is the
    final hidden state of the top layer; an empty branch yields the zero
    vector and touches no parameters.
    """

    def __init__(
        self, branch: Branch, kind: str, hidden: int, layers: list, backward: bool
    ) -> None:
        self.branch = branch
        self.kind = kind
        self.hidden = hidden
        self.layers = layers
        self.backward = backward

    @classmethod
    def build(
        cls,
        branch: Branch,
        kind: str,
        d_in: int,
        hidden: int,
        n_layers: int,
        store: ParamStore,
        rng: Rng,
    ) -> "BranchEncoder":
        prefix = branch.name.lower()
        layers = [
            _build_layer(
                store, f"{prefix}.l{i}", kind, d_in if i == 0 else hidden, hidden, rng
            )
            for i in range(n_layers)
        ]
        return cls(branch, kind, hidden, layers, backward=(branch is Branch.RIGHT))

    def encode(
        self, vectors: Sequence[np.ndarray]
    ) -> tuple[np.ndarray, EncoderCache]:
        seq = list(reversed(vectors)) if self.backward else list(vectors)
        cache = EncoderCache(length=len(seq), layer_caches=[])
        if not seq:
            return np.zeros(self.hidden), cache
        inputs = seq
        for layer in self.layers:
            h = np.zeros(self.hidden)
            c = np.zeros(self.hidden)
            step_caches = []
            outputs = []
            for x in inputs:
                if self.kind == "gru":
                    h, sc = gru_step(x, h, layer)
                else:
                    h, c, sc = lstm_step(x, h, c, layer)
                step_caches.append(sc)
                outputs.append(h)
            cache.layer_caches.append(step_caches)
            inputs = outputs
        return inputs[-1], cache

    def backprop(self, d_rep: np.ndarray, cache: EncoderCache) -> list[np.ndarray]:
        """BPTT from the representation gradient; returns per-token input
        gradients in the branch's original token order."""
        T = cache.length
        if T == 0:
            return []
        d_above = [np.zeros(self.hidden) for _ in range(T)]
        d_above[T - 1] = d_rep
        for l in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[l]
            steps = cache.layer_caches[l]
            dh_next = np.zeros(self.hidden)
            dc_next = np.zeros(self.hidden)
            d_inputs: list[np.ndarray] = [None] * T  # type: ignore[list-item]
            for t in range(T - 1, -1, -1):
                dh = d_above[t] + dh_next
                if self.kind == "gru":
                    dh_next, dx = gru_step_backward(dh, steps[t], layer)
                else:
                    dh_next, dc_next, dx = lstm_step_backward(
                        dh, dc_next, steps[t], layer
                    )
                d_inputs[t] = dx
            d_above = d_inputs
        return list(reversed(d_above)) if self.backward else d_above


# ---------------------------------------------------------------------------
# Classification head and losses
# ---------------------------------------------------------------------------


@dataclass
class HeadCache:
    mask: np.ndarray | None
    acts: list[np.ndarray]  # acts[0] = (dropped) input, then post-tanh per layer
    probs: np.ndarray


class Head:
    """Dropout on the concatenated representation, tanh FC stack, output."""

    def __init__(
        self,
        hidden: list[tuple[ParamTensor, ParamTensor]],
        out_w: ParamTensor,
        out_b: ParamTensor,
        head_mode: str,
        dropout: float,
    ) -> None:
        self.hidden = hidden
        self.out_w = out_w
        self.out_b = out_b
        self.head_mode = head_mode
        self.dropout = dropout

    @classmethod
    def build(
        cls, cfg: ModelConfig, labels: LabelSet, store: ParamStore, rng: Rng
    ) -> "Head":
        widths = cfg.resolved_head_hidden()
        n_out = labels.n_classes if cfg.head_mode == "softmax" else len(labels.event_types)
        hidden = []
        d = 3 * cfg.hidden_size
        for i, w in enumerate(widths):
            W = store.add(init_uniform_scaled(f"head.l{i}.W", (w, d), rng))
            b = store.create(f"head.l{i}.b", np.zeros(w))
            hidden.append((W, b))
            d = w
        out_w = store.add(init_uniform_scaled("head.out.W", (n_out, d), rng))
        out_b = store.create("head.out.b", np.zeros(n_out))
        return cls(hidden, out_w, out_b, cfg.head_mode, cfg.dropout)

    def forward(
        self, rep: np.ndarray, mode: Mode, rng: Rng | None
    ) -> tuple[np.ndarray, HeadCache]:
        if mode is Mode.TRAIN and self.dropout > 0.0:
            if rng is None:
                raise ConfigurationError("training-mode dropout needs an rng")
            mask = dropout_mask(rep.shape[0], self.dropout, rng, mode)
            x = rep * mask
        else:
            mask = None
            x = rep
        acts = [x]
        for W, b in self.hidden:
            x = np.tanh(W.values @ x + b.values)
            acts.append(x)
        logits = self.out_w.values @ x + self.out_b.values
        probs = softmax(logits) if self.head_mode == "softmax" else sigmoid(logits)
        return probs, HeadCache(mask, acts, probs)

    def backprop(self, d_logits: np.ndarray, cache: HeadCache) -> np.ndarray:
        """Accumulates head grads; returns the gradient w.r.t. the
        (pre-dropout) concatenated representation."""
        self.out_w.grad += np.outer(d_logits, cache.acts[-1])
        self.out_b.grad += d_logits
        dx = self.out_w.values.T @ d_logits
        for k in range(len(self.hidden) - 1, -1, -1):
            W, b = self.hidden[k]
            post = cache.acts[k + 1]
            da = dx * (1.0 - post * post)
            W.grad += np.outer(da, cache.acts[k])
            b.grad += da
            dx = W.values.T @ da
        if cache.mask is not None:
            dx = dx * cache.mask
        return dx


def softmax_nll(probs: np.ndarray, gold_class: int) -> tuple[float, np.ndarray]:
    """Negative log likelihood and its gradient w.r.t. the logits."""
    loss = -math.log(max(float(probs[gold_class]), _LOG_CLAMP))
    d_logits = probs.copy()
    d_logits[gold_class] -= 1.0
    return loss, d_logits


def sigmoid_bce(probs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Summed binary cross-entropy over event types; gradient w.r.t. logits."""
    p = np.clip(probs, _LOG_CLAMP, 1.0 - _LOG_CLAMP)
    loss = float(-(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)).sum())
    return loss, probs - targets


# ---------------------------------------------------------------------------
# Full model
# ---------------------------------------------------------------------------


@dataclass
class ModelCache:
    rows: dict[Branch, list[int]]
    enc: dict[Branch, EncoderCache]
    head: HeadCache


class NuggetModel:
    """Embeddings + three branch encoders + classification head."""

    def __init__(
        self,
        cfg: ModelConfig,
        labels: LabelSet,
        store: ParamStore,
        embedder: Embedder,
        encoders: dict[Branch, BranchEncoder],
        head: Head,
    ) -> None:
        self.cfg = cfg
        self.labels = labels
        self.store = store
        self.embedder = embedder
        self.encoders = encoders
        self.head = head

    # -- targets ------------------------------------------------------

    def target_class(self, types: tuple[str, ...]) -> int:
        """Softmax target. Multi-label gold collapses to its first listed
        type (the softmax head cannot express more than one)."""
        if not types:
            return LabelSet.NON_EVENT_INDEX
        return self.labels.class_index(types[0])

    def target_vector(self, types: tuple[str, ...]) -> np.ndarray:
        y = np.zeros(len(self.labels.event_types))
        for t in types:
            y[self.labels.type_offset(t)] = 1.0
        return y

    # -- forward / backward -------------------------------------------

    def _branch_inputs(
        self, texts: Sequence[str], branch: Branch
    ) -> tuple[list[np.ndarray], list[int]]:
        vectors, rows = [], []
        for text in texts:
            vec, row = self.embedder.assemble_input(text, branch)
            vectors.append(vec)
            rows.append(row)
        return vectors, rows

    def forward(
        self, split: BranchSplit, mode: Mode = Mode.EVAL, rng: Rng | None = None
    ) -> tuple[np.ndarray, ModelCache]:
        rows: dict[Branch, list[int]] = {}
        caches: dict[Branch, EncoderCache] = {}
        reps = []
        for branch, texts in (
            (Branch.LEFT, split.left),
            (Branch.NUGGET, split.nugget),
            (Branch.RIGHT, split.right),
        ):
            vectors, branch_rows = self._branch_inputs(texts, branch)
            rep, cache = self.encoders[branch].encode(vectors)
            rows[branch] = branch_rows
            caches[branch] = cache
            reps.append(rep)
        concat = np.concatenate(reps)
        probs, head_cache = self.head.forward(concat, mode, rng)
        return probs, ModelCache(rows, caches, head_cache)

    def forward_backward(
        self,
        split: BranchSplit,
        types: tuple[str, ...],
        mode: Mode = Mode.TRAIN,
        rng: Rng | None = None,
    ) -> float:
        """One example's loss; accumulates gradients into the store."""
        probs, cache = self.forward(split, mode, rng)
        if self.cfg.head_mode == "softmax":
            loss, d_logits = softmax_nll(probs, self.target_class(types))
        else:
            loss, d_logits = sigmoid_bce(probs, self.target_vector(types))
        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss {loss!r}")
        d_concat = self.head.backprop(d_logits, cache.head)
        h = self.cfg.hidden_size
        for k, branch in enumerate((Branch.LEFT, Branch.NUGGET, Branch.RIGHT)):
            d_rep = d_concat[k * h : (k + 1) * h]
            d_inputs = self.encoders[branch].backprop(d_rep, cache.enc[branch])
            for row, d_vec in zip(cache.rows[branch], d_inputs):
                self.embedder.accumulate_grad(row, branch, d_vec)
        return loss

    # -- inference ------------------------------------------------------

    def predict_proba(self, split: BranchSplit) -> np.ndarray:
        probs, _ = self.forward(split, Mode.EVAL, None)
        return probs

    def predict(self, split: BranchSplit, threshold: float = 0.5) -> tuple[str, ...]:
        """Predicted event types; empty tuple means non-event.

        Softmax: the argmax class (ties broken toward the lowest class
        index). Sigmoid: every type whose probability exceeds `threshold`.
        """
        probs = self.predict_proba(split)
        if self.cfg.head_mode == "softmax":
            k = int(np.argmax(probs))
            t = self.labels.type_at(k)
            return () if t is None else (t,)
        picked = [
            self.labels.event_types[j]
            for j in range(probs.shape[0])
            if probs[j] > threshold
        ]
        return tuple(picked)

    def loss(self, split: BranchSplit, types: tuple[str, ...]) -> float:
        """Evaluation-mode loss without touching gradients."""
        probs, _ = self.forward(split, Mode.EVAL, None)
        if self.cfg.head_mode == "softmax":
            return softmax_nll(probs, self.target_class(types))[0]
        return sigmoid_bce(probs, self.target_vector(types))[0]


def build_model(
    cfg: ModelConfig,
    vocab_words: Sequence[str],
    labels: LabelSet,
    rng: Rng,
    pretrained: dict[str, np.ndarray] | None = None,
) -> NuggetModel:
    """Assemble a model with a freshly drawn vocabulary from corpus words."""
    ordered = [UNK] + sorted({w.lower() for w in vocab_words} - {UNK})
    return assemble_model(cfg, ordered, labels, rng, pretrained)


def assemble_model(
    cfg: ModelConfig,
    ordered_words: list[str],
    labels: LabelSet,
    rng: Rng,
    pretrained: dict[str, np.ndarray] | None = None,
) -> NuggetModel:
    """Assemble a model from an explicit row-ordered word list (UNK first)."""
    cfg.validate()
    store = ParamStore()
    word = WordTable.build(ordered_words, cfg.word_dim, rng, store, pretrained)
    branch = BranchTable.build(cfg.branch_dim, rng, store) if cfg.use_branch else None
    embedder = Embedder(word, branch)
    encoders = {
        b: BranchEncoder.build(
            b, cfg.cell, embedder.input_dim, cfg.hidden_size, cfg.layers, store, rng
        )
        for b in (Branch.LEFT, Branch.NUGGET, Branch.RIGHT)
    }
    head = Head.build(cfg, labels, store, rng)
    return NuggetModel(cfg, labels, store, embedder, encoders, head)


# ---------------------------------------------------------------------------
# Gradient-check harness
# ---------------------------------------------------------------------------

_TINY_SENTENCE = ("officials", "had", "slipped", "past", "the", "checkpoint")
_TINY_TYPES = ("TypeA", "TypeB", "TypeC")


def tiny_gradcheck(
    cell: str = "gru",
    head_mode: str = "softmax",
    use_branch: bool = True,
    seed: int = 0,
    eps: float = 2e-4,
) -> GradCheckReport:
    """Finite-difference check of the full model on a tiny configuration.

    A 6-token sentence, hidden size 4, word dim 5, branch dim 2 and 4
    classes; the loss sums one positive (multi-label in sigmoid mode) and
    one non-event candidate, so every code path contributes gradient.

    The probe step defaults to 2e-4 rather than the checker's generic
    1e-5: the smallest true gradient entries here (forget-gate recurrent
    weights behind a zero initial cell state) are ~1e-8, and with a loss
    of magnitude ~5 a smaller step leaves the central difference dominated
    by float64 cancellation noise rather than by the gradient.
    """
    labels = LabelSet(_TINY_TYPES)
    cfg = ModelConfig(
        cell=cell,
        hidden_size=4,
        word_dim=5,
        branch_dim=2,
        use_branch=use_branch,
        head_mode=head_mode,
        dropout=0.5,  # irrelevant: the check runs in EVAL mode
    )
    model = build_model(cfg, list(_TINY_SENTENCE), labels, Rng(seed))
    positive = BranchSplit(_TINY_SENTENCE[:2], _TINY_SENTENCE[2:4], _TINY_SENTENCE[4:])
    negative = BranchSplit(_TINY_SENTENCE[:1], _TINY_SENTENCE[1:2], _TINY_SENTENCE[2:])
    pos_types = ("TypeA", "TypeC") if head_mode == "sigmoid" else ("TypeB",)

    def loss_fn() -> float:
        return model.forward_backward(
            positive, pos_types, Mode.EVAL
        ) + model.forward_backward(negative, (), Mode.EVAL)

    return grad_check(loss_fn, model.store, eps=eps)
