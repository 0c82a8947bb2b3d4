"""Composition dependency graph and its row-normalized propagation matrix.

Nodes are ordered states, then objects, then compositions (seen, val-unseen,
test-unseen in split order), then any auxiliary nodes. All edges are
undirected and unweighted, so the adjacency is a symmetric 0/1 matrix.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .data import Pair, SplitSpec, normalize_name
from .errors import GraphError


class GraphVariant(enum.Enum):
    """Connection schemes, from the word-embedding bypass to the full graph."""

    DIRECT_EMBEDDING = "a"
    PAIR_EDGES_NO_SELF_LOOP_ON_Y = "b"
    PAIR_EDGES = "c"
    FULL = "d"
    FULL_PLUS_AUX = "e"

    @classmethod
    def from_letter(cls, letter: str) -> "GraphVariant":
        try:
            return cls(letter.strip().lower())
        except ValueError:
            raise GraphError(f"unknown graph variant {letter!r} (expected a-e)") from None


@dataclass(frozen=True)
class CompGraph:
    """Symmetric adjacency over state, object, composition and aux nodes."""

    variant: GraphVariant
    n_states: int
    n_objects: int
    compositions: tuple[Pair, ...]
    aux_names: tuple[str, ...]
    adjacency: sparse.csr_array

    @property
    def K(self) -> int:
        return self.n_states + self.n_objects + len(self.compositions) + len(self.aux_names)

    @property
    def comp_offset(self) -> int:
        """Row index of the first composition node."""
        return self.n_states + self.n_objects

    @property
    def comp_rows(self) -> slice:
        return slice(self.comp_offset, self.comp_offset + len(self.compositions))

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def node_name(self, index: int, split: SplitSpec) -> str:
        if index < self.n_states:
            return split.states[index]
        index -= self.n_states
        if index < self.n_objects:
            return split.objects[index]
        index -= self.n_objects
        if index < len(self.compositions):
            return split.pair_name(self.compositions[index])
        return self.aux_names[index - len(self.compositions)]


@dataclass(frozen=True)
class PropagationMatrix:
    """Row-normalized adjacency: each row of the matrix sums to one."""

    matrix: sparse.csr_array

    @property
    def K(self) -> int:
        return self.matrix.shape[0]


def _parse_aux_file(path: Path) -> tuple[list[str], list[tuple[str, str]]]:
    nodes: list[str] = []
    edges: list[tuple[str, str]] = []
    declared: set[str] = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if parts[0] == "#node":
            if len(parts) != 2 or not parts[1].strip():
                raise GraphError(f"{path}:{lineno}: expected '#node\\t<name>'")
            name = normalize_name(parts[1])
            if name in declared:
                raise GraphError(f"{path}:{lineno}: aux node {name!r} declared twice")
            declared.add(name)
            nodes.append(name)
        else:
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected '<name_a>\\t<name_b>'")
            edges.append((normalize_name(parts[0]), normalize_name(parts[1])))
    return nodes, edges


def build_graph(
    split: SplitSpec,
    variant: GraphVariant,
    aux_file: str | Path | None = None,
) -> CompGraph:
    """Build the adjacency for one variant.

    Edges per variant (each composition y = (s, o)):
      b: (s,y), (o,y); self-loops on primitives only
      c: b plus self-loops on composition nodes
      d: c plus the (s,o) edge; self-loops everywhere
      e: d plus nodes/edges from the aux file (aux nodes get self-loops)
    """
    if variant is GraphVariant.DIRECT_EMBEDDING:
        raise GraphError("the direct-embedding variant builds no graph")
    if variant is GraphVariant.FULL_PLUS_AUX and aux_file is None:
        raise GraphError("variant e requires an auxiliary edge file")

    n_s, n_o = len(split.states), len(split.objects)
    comps = split.all_pairs()
    n_y = len(comps)
    base = n_s + n_o

    aux_names: list[str] = []
    aux_edges: list[tuple[str, str]] = []
    if variant is GraphVariant.FULL_PLUS_AUX:
        aux_names, aux_edges = _parse_aux_file(Path(aux_file))

    k = base + n_y + len(aux_names)
    edges: set[tuple[int, int]] = set()

    def connect(i: int, j: int) -> None:
        edges.add((i, j))
        edges.add((j, i))

    for i in range(n_s + n_o):
        connect(i, i)
    if variant in (GraphVariant.PAIR_EDGES, GraphVariant.FULL, GraphVariant.FULL_PLUS_AUX):
        for c in range(n_y):
            connect(base + c, base + c)
    for c, pair in enumerate(comps):
        y = base + c
        connect(pair.state, y)
        connect(n_s + pair.object, y)
        if variant in (GraphVariant.FULL, GraphVariant.FULL_PLUS_AUX):
            connect(pair.state, n_s + pair.object)

    if variant is GraphVariant.FULL_PLUS_AUX:
        # Aux names resolve against objects first (hierarchies attach to the
        # object vocabulary), then states, then declared aux nodes.
        lookup: dict[str, int] = {}
        for pos, name in enumerate(aux_names):
            lookup[name] = base + n_y + pos
        for i, name in enumerate(split.states):
            lookup[name] = i
        for i, name in enumerate(split.objects):
            lookup[name] = n_s + i
        for pos in range(len(aux_names)):
            connect(base + n_y + pos, base + n_y + pos)
        for a, b in aux_edges:
            if a not in lookup:
                raise GraphError(f"aux edge references unknown node {a!r}")
            if b not in lookup:
                raise GraphError(f"aux edge references unknown node {b!r}")
            connect(lookup[a], lookup[b])

    rows = np.fromiter((i for i, _ in sorted(edges)), dtype=np.int64, count=len(edges))
    cols = np.fromiter((j for _, j in sorted(edges)), dtype=np.int64, count=len(edges))
    adjacency = sparse.csr_array(
        (np.ones(len(edges), dtype=np.float64), (rows, cols)), shape=(k, k)
    )
    return CompGraph(
        variant=variant,
        n_states=n_s,
        n_objects=n_o,
        compositions=comps,
        aux_names=tuple(aux_names),
        adjacency=adjacency,
    )


def normalize(graph: CompGraph, split: SplitSpec | None = None) -> PropagationMatrix:
    """Row-normalize the adjacency; every row must have at least one edge."""
    deg = graph.degrees()
    if np.any(deg == 0):
        idx = int(np.argmin(deg))
        name = graph.node_name(idx, split) if split is not None else f"node {idx}"
        raise GraphError(f"zero-degree row for {name}")
    inv = sparse.dia_array((1.0 / deg[np.newaxis, :], [0]), shape=(graph.K, graph.K))
    return PropagationMatrix(matrix=(inv @ graph.adjacency).tocsr())
