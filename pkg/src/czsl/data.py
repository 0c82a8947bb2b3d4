"""Vocabularies, composition splits and sample feature storage.

Split directory layout (UTF-8 text, one entry per line):
  states.txt / objects.txt          name per line, index = zero-based line number
  train_pairs.txt                   seen pairs, "<state>\t<object>"
  val_pairs_seen.txt / val_pairs_unseen.txt
  test_pairs_seen.txt / test_pairs_unseen.txt

Feature file: header "N d", then N lines
  "<id>\t<state>\t<object>\t<d space-separated floats>".
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import FeatureFileError, SplitError

PAIR_FILES = {
    "seen_pairs": "train_pairs.txt",
    "val_seen": "val_pairs_seen.txt",
    "val_unseen": "val_pairs_unseen.txt",
    "test_seen": "test_pairs_seen.txt",
    "test_unseen": "test_pairs_unseen.txt",
}

PHASES = ("train", "val", "test")

_WS = re.compile(r"\s+")


def normalize_name(name: str) -> str:
    """Canonical token form: lowercase, trimmed, internal whitespace collapsed."""
    return _WS.sub(" ", name.strip().lower())


class Pair(NamedTuple):
    """A composition label: indices into the state and object vocabularies."""

    state: int
    object: int


@dataclass(frozen=True)
class SplitSpec:
    """Vocabularies plus the seen/unseen composition lists of all phases.

    Lists keep file order so that serialization round-trips byte-for-byte.
    """

    states: tuple[str, ...]
    objects: tuple[str, ...]
    seen_pairs: tuple[Pair, ...]
    val_seen: tuple[Pair, ...]
    val_unseen: tuple[Pair, ...]
    test_seen: tuple[Pair, ...]
    test_unseen: tuple[Pair, ...]

    def all_pairs(self) -> tuple[Pair, ...]:
        """Every composition node: seen, then val-unseen, then test-unseen."""
        return self.seen_pairs + self.val_unseen + self.test_unseen

    def pair_name(self, pair: Pair) -> str:
        return f"{self.states[pair.state]} {self.objects[pair.object]}"

    def phase_labels(self, phase: str) -> frozenset[Pair]:
        """Set of compositions whose samples may appear in `phase`."""
        if phase == "train":
            return frozenset(self.seen_pairs)
        if phase == "val":
            return frozenset(self.val_seen) | frozenset(self.val_unseen)
        if phase == "test":
            return frozenset(self.test_seen) | frozenset(self.test_unseen)
        raise ValueError(f"unknown phase {phase!r}")


@dataclass(frozen=True)
class Sample:
    id: str
    label: Pair
    feature: np.ndarray


@dataclass(frozen=True)
class Dataset:
    phase: str
    samples: tuple[Sample, ...]
    split: SplitSpec

    @property
    def dim(self) -> int:
        return int(self.samples[0].feature.shape[0]) if self.samples else 0

    def feature_matrix(self) -> np.ndarray:
        return np.stack([s.feature for s in self.samples]) if self.samples else np.zeros((0, 0))


def _read_vocab(path: Path) -> tuple[str, ...]:
    if not path.is_file():
        raise SplitError(f"missing vocabulary file: {path}")
    names: list[str] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        name = normalize_name(raw)
        if not name:
            raise SplitError(f"{path}:{lineno}: empty name")
        if name in seen:
            raise SplitError(f"{path}:{lineno}: duplicate entry {name!r} (first at line {seen[name]})")
        seen[name] = lineno
        names.append(name)
    return tuple(names)


def _read_pairs(path: Path, states: dict[str, int], objects: dict[str, int]) -> tuple[Pair, ...]:
    if not path.is_file():
        raise SplitError(f"missing pair file: {path}")
    pairs: list[Pair] = []
    dup: dict[Pair, int] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 2:
            raise SplitError(f"{path}:{lineno}: expected '<state>\\t<object>', got {raw!r}")
        s_name, o_name = normalize_name(parts[0]), normalize_name(parts[1])
        if s_name not in states:
            raise SplitError(f"{path}:{lineno}: unknown state {s_name!r}")
        if o_name not in objects:
            raise SplitError(f"{path}:{lineno}: unknown object {o_name!r}")
        pair = Pair(states[s_name], objects[o_name])
        if pair in dup:
            raise SplitError(
                f"{path}:{lineno}: pair ({s_name}, {o_name}) repeated (first at line {dup[pair]})"
            )
        dup[pair] = lineno
        pairs.append(pair)
    return tuple(pairs)


def load_splits(directory: str | Path) -> SplitSpec:
    """Load and validate a split directory; line number defines the index."""
    directory = Path(directory)
    states = _read_vocab(directory / "states.txt")
    objects = _read_vocab(directory / "objects.txt")
    s_idx = {name: i for i, name in enumerate(states)}
    o_idx = {name: i for i, name in enumerate(objects)}
    lists = {
        key: _read_pairs(directory / fname, s_idx, o_idx) for key, fname in PAIR_FILES.items()
    }
    split = SplitSpec(states=states, objects=objects, **lists)
    violations = validate_splits(split)
    if violations:
        raise SplitError(f"{directory}: invalid split: " + "; ".join(violations))
    return split


def validate_splits(split: SplitSpec) -> list[str]:
    """Check every SplitSpec invariant; returns violations (empty if valid)."""
    out: list[str] = []
    n_s, n_o = len(split.states), len(split.objects)

    def describe(pair: Pair) -> str:
        s = split.states[pair.state] if 0 <= pair.state < n_s else f"state#{pair.state}"
        o = split.objects[pair.object] if 0 <= pair.object < n_o else f"object#{pair.object}"
        return f"({s}, {o})"

    lists = {
        "seen_pairs": split.seen_pairs,
        "val_seen": split.val_seen,
        "val_unseen": split.val_unseen,
        "test_seen": split.test_seen,
        "test_unseen": split.test_unseen,
    }
    for name, pairs in lists.items():
        counts: dict[Pair, int] = {}
        for p in pairs:
            if not (0 <= p.state < n_s and 0 <= p.object < n_o):
                out.append(f"{name}: index out of range for pair {p}")
            counts[p] = counts.get(p, 0) + 1
        for p, c in counts.items():
            if c > 1:
                out.append(f"{name}: pair {describe(p)} listed {c} times")

    seen = set(split.seen_pairs)
    val_u, test_u = set(split.val_unseen), set(split.test_unseen)
    for p in sorted(seen & val_u):
        out.append(f"pair {describe(p)} in both seen_pairs and val_unseen")
    for p in sorted(seen & test_u):
        out.append(f"pair {describe(p)} in both seen_pairs and test_unseen")
    for p in sorted(val_u & test_u):
        out.append(f"pair {describe(p)} in both val_unseen and test_unseen")
    for p in split.val_seen:
        if p not in seen:
            out.append(f"val_seen pair {describe(p)} not in seen_pairs")
    for p in split.test_seen:
        if p not in seen:
            out.append(f"test_seen pair {describe(p)} not in seen_pairs")
    return out


def load_features(path: str | Path, split: SplitSpec, phase: str) -> Dataset:
    """Load a sample feature file and check labels against the phase."""
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}")
    path = Path(path)
    if not path.is_file():
        raise FeatureFileError(f"missing feature file: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FeatureFileError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 2 or not all(tok.isdigit() for tok in head):
        raise FeatureFileError(f"{path}:1: expected header 'N d', got {lines[0]!r}")
    n, dim = int(head[0]), int(head[1])
    records = [ln for ln in lines[1:] if ln.strip()]
    if len(records) != n:
        raise FeatureFileError(f"{path}: header says {n} records, found {len(records)}")

    s_idx = {name: i for i, name in enumerate(split.states)}
    o_idx = {name: i for i, name in enumerate(split.objects)}
    allowed = split.phase_labels(phase)
    samples: list[Sample] = []
    for lineno, raw in enumerate(records, 2):
        parts = raw.split("\t")
        if len(parts) != 4:
            raise FeatureFileError(f"{path}:{lineno}: expected 4 tab-separated fields")
        sid, s_name, o_name, blob = parts
        s_name, o_name = normalize_name(s_name), normalize_name(o_name)
        if s_name not in s_idx or o_name not in o_idx:
            raise FeatureFileError(f"{path}:{lineno}: unknown label ({s_name}, {o_name})")
        label = Pair(s_idx[s_name], o_idx[o_name])
        if label not in allowed:
            raise FeatureFileError(
                f"{path}:{lineno}: label ({s_name}, {o_name}) not allowed in phase {phase!r}"
            )
        try:
            vec = np.array([float(tok) for tok in blob.split()], dtype=np.float64)
        except ValueError as exc:
            raise FeatureFileError(f"{path}:{lineno}: bad float: {exc}") from exc
        if vec.shape[0] != dim:
            raise FeatureFileError(
                f"{path}:{lineno}: {vec.shape[0]} values, header dimension is {dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise FeatureFileError(f"{path}:{lineno}: non-finite feature value")
        samples.append(Sample(id=sid, label=label, feature=vec))
    return Dataset(phase=phase, samples=tuple(samples), split=split)


def write_features(path: str | Path, dataset: Dataset) -> None:
    """Write a Dataset back to the feature file format (load_features inverse)."""
    split = dataset.split
    lines = [f"{len(dataset.samples)} {dataset.dim}"]
    for s in dataset.samples:
        blob = " ".join(repr(float(v)) for v in s.feature)
        lines.append(
            f"{s.id}\t{split.states[s.label.state]}\t{split.objects[s.label.object]}\t{blob}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
