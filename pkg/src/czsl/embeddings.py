"""Word-vector tables and the per-node input feature matrix.

Word-vector file: UTF-8 text, optional first header line "count dim" (two
integers), then one "<token> <f1> ... <fP>" line per token. Tokens are single
words; multi-word names are averaged token-wise by `embed_name`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import SplitSpec, normalize_name
from .errors import EmbeddingError
from .graph import CompGraph


@dataclass(frozen=True)
class EmbeddingTable:
    """Token to vector map from one word-vector source."""

    dim: int
    vectors: dict[str, np.ndarray]
    source_name: str

    def vector(self, token: str) -> np.ndarray:
        try:
            return self.vectors[token]
        except KeyError:
            raise EmbeddingError(
                f"token {token!r} missing from source {self.source_name!r}"
            ) from None

    def __contains__(self, token: str) -> bool:
        return token in self.vectors


@dataclass(frozen=True)
class ConcatTable:
    """Lookup over several sources; vectors concatenate in source order.

    Coverage is checked lazily per lookup, so partially overlapping sources
    only fail for the tokens actually requested.
    """

    tables: tuple[EmbeddingTable, ...]

    @property
    def dim(self) -> int:
        return sum(t.dim for t in self.tables)

    @property
    def source_name(self) -> str:
        return "+".join(t.source_name for t in self.tables)

    def vector(self, token: str) -> np.ndarray:
        return np.concatenate([t.vector(token) for t in self.tables])

    def __contains__(self, token: str) -> bool:
        return all(token in t for t in self.tables)


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Parse a word-vector text file; header line auto-detected."""
    path = Path(path)
    if not path.is_file():
        raise EmbeddingError(f"missing word-vector file: {path}")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise EmbeddingError(f"{path}: empty file")
    start = 0
    head = lines[0].split()
    if len(head) == 2 and all(tok.isdigit() for tok in head):
        start = 1
        if len(lines) == 1:
            raise EmbeddingError(f"{path}: header only, no vectors")
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    for lineno, raw in enumerate(lines[start:], start + 1):
        parts = raw.split(" ")
        token = normalize_name(parts[0])
        if not token:
            raise EmbeddingError(f"{path}:{lineno}: empty token")
        if token in vectors:
            raise EmbeddingError(f"{path}:{lineno}: duplicate token {token!r}")
        try:
            vec = np.array([float(tok) for tok in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise EmbeddingError(f"{path}:{lineno}: bad float: {exc}") from exc
        if vec.size == 0:
            raise EmbeddingError(f"{path}:{lineno}: token without values")
        if dim is None:
            dim = int(vec.size)
        elif vec.size != dim:
            raise EmbeddingError(
                f"{path}:{lineno}: vector length {vec.size} != {dim} of earlier lines"
            )
        vectors[token] = vec
    return EmbeddingTable(dim=int(dim), vectors=vectors, source_name=path.name)


def write_embeddings(path: str | Path, table: EmbeddingTable) -> None:
    lines = [f"{len(table.vectors)} {table.dim}"]
    for token, vec in table.vectors.items():
        lines.append(token + " " + " ".join(repr(float(v)) for v in vec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def concat_tables(tables: list[EmbeddingTable]) -> EmbeddingTable | ConcatTable:
    """Combine sources; with a single table the lookups are unchanged."""
    if not tables:
        raise EmbeddingError("concat_tables needs at least one source")
    if len(tables) == 1:
        return tables[0]
    return ConcatTable(tables=tuple(tables))


def _oov_vector(token: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic unit-norm stand-in vector for an out-of-vocabulary token."""
    digest = hashlib.sha256(f"{seed}:{token}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def embed_name(
    table: EmbeddingTable | ConcatTable,
    name: str,
    oov_seed: int | None = None,
) -> np.ndarray:
    """Vector for a (possibly multi-word) name: token-wise arithmetic mean.

    Missing tokens are hard errors unless `oov_seed` is given, in which case
    each missing token maps to a seeded unit-norm random vector.
    """
    tokens = normalize_name(name).split(" ")
    if not tokens or tokens == [""]:
        raise EmbeddingError("cannot embed an empty name")
    vecs = []
    for tok in tokens:
        if oov_seed is not None and tok not in table:
            vecs.append(_oov_vector(tok, table.dim, oov_seed))
        else:
            vecs.append(table.vector(tok))
    return np.mean(vecs, axis=0)


def composition_features(
    split: SplitSpec,
    table: EmbeddingTable | ConcatTable,
    oov_seed: int | None = None,
) -> np.ndarray:
    """|Y| x P averaged word vectors, one row per composition in split order.

    This is the graph-free path: the rows double as classifier weights for
    the direct word-embedding baseline.
    """
    s_rows = [embed_name(table, name, oov_seed) for name in split.states]
    o_rows = [embed_name(table, name, oov_seed) for name in split.objects]
    return np.stack([0.5 * (s_rows[p.state] + o_rows[p.object]) for p in split.all_pairs()])


def build_node_features(
    split: SplitSpec,
    graph: CompGraph,
    table: EmbeddingTable | ConcatTable,
    oov_seed: int | None = None,
) -> np.ndarray:
    """K x P node feature matrix in graph node order.

    State/object/aux rows come from `embed_name`; each composition row is the
    arithmetic mean of its state row and its object row.
    """
    k, p = graph.K, table.dim
    e = np.zeros((k, p), dtype=np.float64)
    for i, name in enumerate(split.states):
        e[i] = embed_name(table, name, oov_seed)
    for i, name in enumerate(split.objects):
        e[graph.n_states + i] = embed_name(table, name, oov_seed)
    base = graph.comp_offset
    for c, pair in enumerate(graph.compositions):
        e[base + c] = 0.5 * (e[pair.state] + e[graph.n_states + pair.object])
    aux_base = base + len(graph.compositions)
    for a, name in enumerate(graph.aux_names):
        e[aux_base + a] = embed_name(table, name, oov_seed)
    if not np.all(np.isfinite(e)):
        raise EmbeddingError("non-finite value in node features")
    return e
