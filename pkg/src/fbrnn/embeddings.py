"""Trainable word and branch embedding tables.

The word table maps the lowercased training vocabulary (plus a shared UNK
row) to trainable rows, optionally initialized from a word2vec-format text
file. The branch table holds exactly three rows, one per relative position
of a token: left context, nugget span, right context. Per-token model
inputs are the concatenation [word_row ; branch_row]; ablation runs drop
the branch part entirely.

Both tables live in the model's ParamStore, so their rows receive
gradients and are updated during training like any other weight.
"""

from __future__ import annotations

from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError
from .numerics import ParamStore, ParamTensor, Rng, init_uniform_scaled

__all__ = [
    "UNK",
    "Branch",
    "WordTable",
    "BranchTable",
    "Embedder",
    "load_pretrained",
]

UNK = "<unk>"


class Branch(IntEnum):
    LEFT = 0
    NUGGET = 1
    RIGHT = 2


def load_pretrained(path: str | Path, expected_dim: int) -> dict[str, np.ndarray]:
    """Read a word2vec text-format file: header `V d`, then `word v_1 .. v_d`.

    Rejects a header dimension different from `expected_dim`, malformed
    lines (with their line number) and vector counts that disagree with the
    header. Binary word2vec files are not supported.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"cannot read embedding file {path}: {e}") from e
    if not lines:
        raise DataError(f"{path}: empty embedding file")
    header = lines[0].split()
    if len(header) != 2 or not all(p.isdigit() for p in header):
        raise DataError(f"{path}:1: header must be 'vocab_size dim'")
    count, dim = int(header[0]), int(header[1])
    if dim != expected_dim:
        raise DataError(
            f"{path}:1: embedding dimension {dim} != configured {expected_dim}"
        )
    vectors: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.rstrip().split(" ")
        if len(parts) != dim + 1:
            raise DataError(
                f"{path}:{lineno}: expected word plus {dim} values, "
                f"got {len(parts)} fields"
            )
        word = parts[0]
        if word in vectors:
            raise DataError(f"{path}:{lineno}: duplicate word {word!r}")
        try:
            vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: non-numeric value: {e}") from e
        vectors[word] = vec
    if len(vectors) != count:
        raise DataError(
            f"{path}: header declares {count} vectors but file has {len(vectors)}"
        )
    return vectors


class WordTable:
    """Vocabulary -> trainable embedding rows; row 0 is the shared UNK."""

    def __init__(
        self,
        vocab: dict[str, int],
        tensor: ParamTensor,
        pretrained_hits: int = 0,
        oov_words: tuple[str, ...] = (),
    ) -> None:
        self.vocab = vocab
        self.tensor = tensor
        self.pretrained_hits = pretrained_hits
        self.oov_words = oov_words

    @classmethod
    def build(
        cls,
        words: list[str],
        dim: int,
        rng: Rng,
        store: ParamStore,
        pretrained: dict[str, np.ndarray] | None = None,
        name: str = "word_emb",
    ) -> "WordTable":
        """Build from an ordered word list (UNK first, no duplicates).

        The full matrix is drawn from the scaled-uniform initializer first,
        then rows found in `pretrained` are overwritten, so the rng stream
        does not depend on pretrained coverage. Pretrained lookup is
        case-insensitive, first file entry wins.
        """
        if not words or words[0] != UNK:
            raise ConfigurationError("word list must start with the UNK row")
        if len(set(words)) != len(words):
            raise ConfigurationError("duplicate words in vocabulary")
        tensor = store.add(init_uniform_scaled(name, (len(words), dim), rng))
        vocab = {w: i for i, w in enumerate(words)}
        hits = 0
        oov = []
        if pretrained is not None:
            folded: dict[str, np.ndarray] = {}
            for w, vec in pretrained.items():
                folded.setdefault(w.lower(), vec)
            for w, i in vocab.items():
                if w == UNK:
                    continue
                vec = folded.get(w)
                if vec is None:
                    oov.append(w)
                else:
                    tensor.values[i] = vec
                    hits += 1
        return cls(vocab, tensor, hits, tuple(oov))

    @classmethod
    def from_corpus_words(
        cls,
        corpus_words: list[str],
        dim: int,
        rng: Rng,
        store: ParamStore,
        pretrained: dict[str, np.ndarray] | None = None,
    ) -> "WordTable":
        ordered = [UNK] + sorted({w.lower() for w in corpus_words} - {UNK})
        return cls.build(ordered, dim, rng, store, pretrained)

    @property
    def dim(self) -> int:
        return self.tensor.shape[1]

    @property
    def words(self) -> list[str]:
        return list(self.vocab)

    def row(self, word: str) -> int:
        """Row index for a word, lowercased; unknown words map to UNK."""
        return self.vocab.get(word.lower(), 0)


class BranchTable:
    """Exactly three trainable rows: LEFT, NUGGET, RIGHT."""

    def __init__(self, tensor: ParamTensor) -> None:
        if tensor.shape[0] != 3:
            raise ConfigurationError(
                f"branch table must have 3 rows, got {tensor.shape}"
            )
        self.tensor = tensor

    @classmethod
    def build(
        cls, dim: int, rng: Rng, store: ParamStore, name: str = "branch_emb"
    ) -> "BranchTable":
        return cls(store.add(init_uniform_scaled(name, (3, dim), rng)))

    @property
    def dim(self) -> int:
        return self.tensor.shape[1]


class Embedder:
    """Assembles per-token input vectors and routes gradients back."""

    def __init__(self, word: WordTable, branch: BranchTable | None) -> None:
        self.word = word
        self.branch = branch

    @property
    def input_dim(self) -> int:
        return self.word.dim + (self.branch.dim if self.branch else 0)

    def assemble_input(self, text: str, branch: Branch) -> tuple[np.ndarray, int]:
        """(input vector, word row). [word_row ; branch_row], or the word
        row alone when branch embeddings are disabled."""
        row = self.word.row(text)
        word_vec = self.word.tensor.values[row]
        if self.branch is None:
            return word_vec.copy(), row
        return np.concatenate([word_vec, self.branch.tensor.values[branch]]), row

    def accumulate_grad(self, word_row: int, branch: Branch, d_vec: np.ndarray) -> None:
        d_w = self.word.dim
        self.word.tensor.grad[word_row] += d_vec[:d_w]
        if self.branch is not None:
            self.branch.tensor.grad[branch] += d_vec[d_w:]
