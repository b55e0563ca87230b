"""Dense float64 numeric kernel.

Everything the encoders and classifier need that is not model specific:
named parameter tensors with paired gradient buffers, stable activations,
scaled-uniform initialization, inverted dropout, SGD/Adam updates with
global-norm clipping, a portable deterministic RNG and a central-difference
gradient checker.

All arrays are float64. The model is small enough that determinism and
gradient-check precision matter more than speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, NumericError

__all__ = [
    "Mode",
    "Rng",
    "ParamTensor",
    "ParamStore",
    "sigmoid",
    "tanh",
    "softmax",
    "matvec",
    "init_uniform_scaled",
    "dropout_mask",
    "OptimizerState",
    "sgd_step",
    "adam_step",
    "clip_gradients",
    "Optimizer",
    "GradCheckReport",
    "grad_check",
]


class Mode(Enum):
    """Dropout scheduling: TRAIN draws masks, EVAL is the identity."""

    TRAIN = "train"
    EVAL = "eval"


# ---------------------------------------------------------------------------
# Portable RNG
# ---------------------------------------------------------------------------

# SplitMix64: a 64-bit counter advanced by a fixed odd increment, output
# mixed by two xor-shift-multiply rounds.  The generator is fully specified
# by the three constants below, so identical seeds yield identical streams
# on every platform, and the whole state sequence for a block of draws can
# be computed vectorized.
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


class Rng:
    """Deterministic SplitMix64 stream of 64-bit words and derived draws."""

    def __init__(self, seed: int) -> None:
        self._state = int(seed) & _MASK64

    @property
    def state(self) -> int:
        return self._state

    def u64_block(self, n: int) -> np.ndarray:
        """Next `n` raw 64-bit draws as a uint64 array."""
        steps = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(self._state) + steps * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self._state = (self._state + n * _GAMMA) & _MASK64
        return z

    def next_u64(self) -> int:
        return int(self.u64_block(1)[0])

    def random(self, n: int | None = None) -> float | np.ndarray:
        """float64 draw(s) in [0, 1): the top 53 bits of each word."""
        block = (self.u64_block(1 if n is None else n) >> np.uint64(11)).astype(
            np.float64
        ) * 2.0**-53
        return float(block[0]) if n is None else block

    def uniform(
        self, low: float, high: float, n: int | None = None
    ) -> float | np.ndarray:
        return low + (high - low) * self.random(n)

    def randint(self, bound: int) -> int:
        """Integer in [0, bound). Maps a 64-bit word by modulo; the bias is
        negligible for the small bounds used here."""
        if bound <= 0:
            raise ConfigurationError(f"randint bound must be positive, got {bound}")
        return self.next_u64() % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, seq: Sequence):
        if not seq:
            raise ConfigurationError("choice from an empty sequence")
        return seq[self.randint(len(seq))]

    def weighted_index(self, weights: Sequence[float]) -> int:
        total = float(sum(weights))
        if not weights or total <= 0.0:
            raise ConfigurationError("weighted_index needs positive total weight")
        r = self.random() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += float(w)
            if r < acc:
                return i
        return len(weights) - 1

    def spawn(self, salt: int = 0) -> "Rng":
        """Derive an independent sub-stream; advances this stream by one draw."""
        return Rng((self.next_u64() + salt) & _MASK64)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


class ParamTensor:
    """Named float64 array with a same-shaped gradient buffer."""

    __slots__ = ("name", "values", "grad")

    def __init__(self, name: str, values: np.ndarray | Sequence) -> None:
        arr = np.array(values, dtype=np.float64)
        if arr.size == 0:
            raise ConfigurationError(f"tensor {name!r} has no elements")
        self.name = name
        self.values = arr
        self.grad = np.zeros_like(arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def check_finite(self) -> None:
        if not np.isfinite(self.values).all():
            raise NumericError(f"non-finite values in tensor {self.name!r}")
        if not np.isfinite(self.grad).all():
            raise NumericError(f"non-finite gradient in tensor {self.name!r}")

    def __repr__(self) -> str:
        return f"ParamTensor({self.name!r}, shape={self.shape})"


class ParamStore:
    """Ordered collection of named ParamTensors; one writer at a time."""

    def __init__(self) -> None:
        self._tensors: dict[str, ParamTensor] = {}

    def create(self, name: str, values: np.ndarray | Sequence) -> ParamTensor:
        if name in self._tensors:
            raise ConfigurationError(f"duplicate tensor name {name!r}")
        t = ParamTensor(name, values)
        self._tensors[name] = t
        return t

    def add(self, tensor: ParamTensor) -> ParamTensor:
        if tensor.name in self._tensors:
            raise ConfigurationError(f"duplicate tensor name {tensor.name!r}")
        self._tensors[tensor.name] = tensor
        return tensor

    def __getitem__(self, name: str) -> ParamTensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[ParamTensor]:
        return iter(self._tensors.values())

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def total_params(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def clone_values(self) -> dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self._tensors.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        """Overwrite every tensor from `values`; names and shapes must match."""
        missing = [n for n in self._tensors if n not in values]
        extra = [n for n in values if n not in self._tensors]
        if missing or extra:
            raise ConfigurationError(
                f"parameter set mismatch: missing={missing!r} extra={extra!r}"
            )
        for name, arr in values.items():
            t = self._tensors[name]
            arr = np.asarray(arr, dtype=np.float64)
            if tuple(arr.shape) != t.shape:
                raise ConfigurationError(
                    f"shape mismatch for tensor {name!r}: "
                    f"got {tuple(arr.shape)}, expected {t.shape}"
                )
            t.values[...] = arr


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def sigmoid(x: np.ndarray | float) -> np.ndarray:
    """Elementwise logistic function, overflow-safe at both tails."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: np.ndarray | float) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def softmax(logits: np.ndarray | Sequence[float]) -> np.ndarray:
    """Stable softmax over a vector: max subtraction, sums to 1."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 1:
        raise ConfigurationError(f"softmax expects a non-empty vector, got shape {z.shape}")
    e = np.exp(z - z.max())
    return e / e.sum()


def matvec(w: ParamTensor, x: np.ndarray) -> np.ndarray:
    """w.values @ x with explicit dimension checks."""
    x = np.asarray(x, dtype=np.float64)
    if len(w.shape) != 2:
        raise ConfigurationError(f"matvec needs a matrix, {w.name!r} has shape {w.shape}")
    if x.ndim != 1 or x.shape[0] != w.shape[1]:
        raise ConfigurationError(
            f"matvec dimension mismatch: {w.name!r} is {w.shape}, x has shape {x.shape}"
        )
    return w.values @ x


# ---------------------------------------------------------------------------
# Initialization and dropout
# ---------------------------------------------------------------------------


def init_uniform_scaled(
    name: str, shape: Sequence[int], rng: Rng
) -> ParamTensor:
    """Uniform draws in [-b, b] with b = sqrt(6 / (fan_in + fan_out)).

    fan_out is shape[0]; fan_in is shape[-1] for matrices and shape[0] for
    vectors. Deterministic given the rng state.
    """
    shape = tuple(int(s) for s in shape)
    if not shape or any(s <= 0 for s in shape):
        raise ConfigurationError(f"invalid tensor shape {shape} for {name!r}")
    fan_out = shape[0]
    fan_in = shape[-1] if len(shape) > 1 else shape[0]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    flat = rng.uniform(-bound, bound, int(np.prod(shape)))
    return ParamTensor(name, np.asarray(flat).reshape(shape))


def dropout_mask(length: int, rate: float, rng: Rng, mode: Mode) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability `rate`, else 1/(1-rate).

    EVAL mode returns all ones so evaluation needs no rescaling.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
    if mode is Mode.EVAL or rate == 0.0:
        return np.ones(length, dtype=np.float64)
    keep = rng.random(length) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

OPTIMIZER_KINDS = ("adam", "sgd")


@dataclass
class OptimizerState:
    """Per-tensor optimizer state. Moment arrays exist iff kind == 'adam'."""

    kind: str
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray | None = None
    second_moment: np.ndarray | None = None

    @classmethod
    def for_tensor(cls, kind: str, tensor: ParamTensor, **hyper) -> "OptimizerState":
        if kind not in OPTIMIZER_KINDS:
            raise ConfigurationError(f"unknown optimizer kind {kind!r}")
        state = cls(kind=kind, **hyper)
        if kind == "adam":
            state.first_moment = np.zeros_like(tensor.values)
            state.second_moment = np.zeros_like(tensor.values)
        return state


def sgd_step(p: ParamTensor, lr: float) -> None:
    """values -= lr * grad; the gradient buffer is left untouched."""
    p.values -= lr * p.grad


def adam_step(p: ParamTensor, s: OptimizerState) -> None:
    """Bias-corrected Adam update: values -= lr * m_hat / (sqrt(v_hat) + eps)."""
    if s.kind != "adam":
        raise ConfigurationError(f"adam_step called with {s.kind!r} state")
    if s.first_moment is None or s.first_moment.shape != p.values.shape:
        raise ConfigurationError(
            f"adam moment shape mismatch for tensor {p.name!r}"
        )
    s.step_count += 1
    t = s.step_count
    s.first_moment *= s.beta1
    s.first_moment += (1.0 - s.beta1) * p.grad
    s.second_moment *= s.beta2
    s.second_moment += (1.0 - s.beta2) * (p.grad * p.grad)
    m_hat = s.first_moment / (1.0 - s.beta1**t)
    v_hat = s.second_moment / (1.0 - s.beta2**t)
    p.values -= s.lr * m_hat / (np.sqrt(v_hat) + s.eps)


def clip_gradients(store: ParamStore, max_norm: float | None) -> float:
    """Global-norm clipping across every tensor in the store.

    Returns the pre-clip norm. Raises NumericError naming the first tensor
    with a non-finite gradient.
    """
    total = 0.0
    for t in store:
        sq = float(np.dot(t.grad.reshape(-1), t.grad.reshape(-1)))
        if not math.isfinite(sq):
            raise NumericError(f"non-finite gradient in tensor {t.name!r}")
        total += sq
    norm = math.sqrt(total)
    if max_norm is not None and norm > max_norm > 0.0:
        scale = max_norm / norm
        for t in store:
            t.grad *= scale
    return norm


class Optimizer:
    """Applies clipped SGD/Adam updates to every tensor of a ParamStore."""

    def __init__(
        self,
        store: ParamStore,
        kind: str = "adam",
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        clip_norm: float | None = 5.0,
    ) -> None:
        if kind not in OPTIMIZER_KINDS:
            raise ConfigurationError(f"unknown optimizer kind {kind!r}")
        self.store = store
        self.kind = kind
        self.lr = lr
        self.clip_norm = clip_norm
        self.states = {
            t.name: OptimizerState.for_tensor(
                kind, t, lr=lr, beta1=beta1, beta2=beta2, eps=eps
            )
            for t in store
        }

    def step(self) -> float:
        """One update over all tensors; returns the pre-clip gradient norm."""
        norm = clip_gradients(self.store, self.clip_norm)
        for t in self.store:
            state = self.states[t.name]
            if self.kind == "adam":
                adam_step(t, state)
            else:
                sgd_step(t, self.lr)
                state.step_count += 1
        return norm


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    """Result of a finite-difference pass over a parameter store."""

    max_rel_error: float
    per_tensor: dict[str, float] = field(default_factory=dict)
    worst_tensor: str | None = None

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def grad_check(
    loss_fn: Callable[[], float],
    store: ParamStore,
    eps: float = 1e-5,
    tensors: Iterable[str] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    `loss_fn` must be deterministic (run dropout in EVAL mode, fix any rng)
    and must *accumulate* gradients into the store when called; this routine
    zeroes the buffers itself. For every checked entry the relative error is
    |a - n| / max(|a|, |n|, 1e-8) where n = (f(x+eps) - f(x-eps)) / (2 eps).
    Gradient buffers are left zeroed on return.
    """
    names = list(tensors) if tensors is not None else store.names()
    selected = [store[n] for n in names]

    store.zero_grads()
    base1 = float(loss_fn())
    analytic = {t.name: t.grad.copy() for t in selected}
    store.zero_grads()
    base2 = float(loss_fn())
    if base1 != base2:
        raise NumericError(
            f"loss function is not deterministic: {base1!r} != {base2!r}"
        )

    report = GradCheckReport(max_rel_error=0.0)
    for t in selected:
        flat_values = t.values.reshape(-1)
        flat_analytic = analytic[t.name].reshape(-1)
        worst = 0.0
        for i in range(flat_values.size):
            orig = flat_values[i]
            flat_values[i] = orig + eps
            f_plus = float(loss_fn())
            flat_values[i] = orig - eps
            f_minus = float(loss_fn())
            flat_values[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(flat_analytic[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > worst:
                worst = rel
        report.per_tensor[t.name] = worst
        if worst > report.max_rel_error:
            report.max_rel_error = worst
            report.worst_tensor = t.name
    store.zero_grads()
    return report
