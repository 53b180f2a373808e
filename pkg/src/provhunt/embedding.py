"""Static word-vector table: phrase embedding and cosine similarity.

The table is the plain text vector format: a "count dim" header line, then
one "token v1 ... v_dim" line per token. Out-of-vocabulary tokens are
composed from character n-gram entries (when the table carries them, fastText
style with < > boundary marks), otherwise they embed to the zero vector so
they can never create a spurious hit.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class VectorFormatError(ValueError):
    """Malformed vector file (bad header or wrong-width line)."""


@dataclass
class VectorTable:
    dim: int
    vectors: dict[str, np.ndarray]
    subword_min: int = 3
    subword_max: int = 6
    source_sha: str = ""
    _zero: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim <= 0:
            raise VectorFormatError(f"dimensionality must be positive, got {self.dim}")
        self._zero = np.zeros(self.dim, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def token_vector(self, token: str) -> np.ndarray:
        """Vector for one token; OOV falls back to n-gram composition."""
        vec = self.vectors.get(token)
        if vec is not None:
            return vec
        grams = char_ngrams(token, self.subword_min, self.subword_max)
        found = [self.vectors[g] for g in grams if g in self.vectors]
        if not found:
            return self._zero
        return np.mean(found, axis=0)


def char_ngrams(token: str, n_min: int, n_max: int) -> list[str]:
    """fastText-style n-grams of '<token>' including the boundary marks."""
    marked = f"<{token}>"
    grams = []
    for n in range(n_min, n_max + 1):
        for i in range(len(marked) - n + 1):
            grams.append(marked[i : i + n])
    return grams


def load_vectors(path, subword_min: int = 3, subword_max: int = 6) -> VectorTable:
    """Parse a text vector file into a VectorTable.

    Duplicate tokens keep the first occurrence (with a warning); a line whose
    float count disagrees with the header dim raises VectorFormatError naming
    the line number.
    """
    vectors: dict[str, np.ndarray] = {}
    sha = hashlib.sha256()
    with open(path, "rb") as fh:
        raw = fh.read()
    sha.update(raw)
    lines = raw.decode("utf-8").splitlines()
    if not lines:
        raise VectorFormatError(f"{path}: empty vector file")
    header = lines[0].split()
    if len(header) != 2:
        raise VectorFormatError(f"{path}: line 1: expected 'count dim' header")
    try:
        count, dim = int(header[0]), int(header[1])
    except ValueError as exc:
        raise VectorFormatError(f"{path}: line 1: non-integer header") from exc
    if dim <= 0:
        raise VectorFormatError(f"{path}: line 1: dim must be positive")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.rstrip().split(" ")
        token = parts[0]
        values = parts[1:]
        if len(values) != dim:
            raise VectorFormatError(
                f"{path}: line {lineno}: expected {dim} floats, got {len(values)}"
            )
        if token in vectors:
            logger.warning("duplicate token %r at line %d kept first occurrence", token, lineno)
            continue
        vectors[token] = np.asarray([float(v) for v in values], dtype=np.float64)
    if count != len(vectors):
        logger.warning(
            "header declared %d tokens but file holds %d (duplicates dropped?)",
            count,
            len(vectors),
        )
    return VectorTable(
        dim=dim,
        vectors=vectors,
        subword_min=subword_min,
        subword_max=subword_max,
        source_sha=sha.hexdigest(),
    )


def save_vectors(table: VectorTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table.vectors)} {table.dim}\n")
        for token, vec in table.vectors.items():
            fh.write(token + " " + " ".join(f"{v:.4f}" for v in vec) + "\n")


def embed_phrase(tokens, table: VectorTable) -> np.ndarray:
    """Mean of the per-token vectors. All-zero results are permitted."""
    if isinstance(tokens, str):
        tokens = tokens.split()
    if not tokens:
        raise ValueError("cannot embed an empty phrase")
    acc = np.zeros(table.dim, dtype=np.float64)
    for tok in tokens:
        acc += table.token_vector(tok)
    return acc / len(tokens)


def cosine(u, v) -> float:
    """u.v / (|u||v|), clamped to [-1, 1]; zero-norm inputs yield 0.0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
