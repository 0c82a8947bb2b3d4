"""Scene-graph curation: from box annotations to a valid split directory.

Scene-graph input file: UTF-8 lines
  "graph_id\tsource_partition\timage_id\tw\th\tobject\tstate1[,state2...]\trelation_count"
Synonym map file: lines "variant\tcanonical".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import PAIR_FILES, Pair, SplitSpec, normalize_name, validate_splits
from .errors import SplitError


@dataclass(frozen=True)
class BoxRecord:
    image_id: str
    width: int
    height: int
    object_name: str
    state_names: tuple[str, ...]
    relation_count: int


@dataclass(frozen=True)
class SceneGraphRecord:
    graph_id: str
    source_partition: str  # "train" or "test"
    boxes: tuple[BoxRecord, ...]


@dataclass
class CurationConfig:
    min_box: int = 112
    train_graph_fraction_moved: float = 0.20
    val_prob: float = 0.45
    test_prob: float = 0.55
    unseen_fraction: float = 0.5
    seed: int = 0
    synonym_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if abs(self.val_prob + self.test_prob - 1.0) > 1e-9:
            raise SplitError("val_prob + test_prob must equal 1")
        if not 0.0 < self.train_graph_fraction_moved < 1.0:
            raise SplitError("train_graph_fraction_moved must be in (0, 1)")
        if not 0.0 <= self.unseen_fraction <= 1.0:
            raise SplitError("unseen_fraction must be in [0, 1]")


def load_scene_graphs(path: str | Path) -> list[SceneGraphRecord]:
    path = Path(path)
    if not path.is_file():
        raise SplitError(f"missing scene-graph file: {path}")
    boxes_by_graph: dict[str, list[BoxRecord]] = {}
    partition_of: dict[str, str] = {}
    order: list[str] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 8:
            raise SplitError(f"{path}:{lineno}: expected 8 tab-separated fields")
        gid, part, image_id, w, h, obj, states, rel = parts
        if part not in ("train", "test"):
            raise SplitError(f"{path}:{lineno}: source partition must be train/test, got {part!r}")
        if gid in partition_of and partition_of[gid] != part:
            raise SplitError(f"{path}:{lineno}: graph {gid} appears in both partitions")
        try:
            box = BoxRecord(
                image_id=image_id,
                width=int(w),
                height=int(h),
                object_name=normalize_name(obj),
                state_names=tuple(normalize_name(s) for s in states.split(",") if s.strip()),
                relation_count=int(rel),
            )
        except ValueError as exc:
            raise SplitError(f"{path}:{lineno}: {exc}") from exc
        if box.width <= 0 or box.height <= 0:
            raise SplitError(f"{path}:{lineno}: box dimensions must be positive")
        if gid not in partition_of:
            partition_of[gid] = part
            order.append(gid)
            boxes_by_graph[gid] = []
        boxes_by_graph[gid].append(box)
    return [
        SceneGraphRecord(graph_id=g, source_partition=partition_of[g], boxes=tuple(boxes_by_graph[g]))
        for g in order
    ]


def load_synonym_map(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 2:
            raise SplitError(f"{path}:{lineno}: expected 'variant\\tcanonical'")
        out[normalize_name(parts[0])] = normalize_name(parts[1])
    return out


def filter_boxes(records: list[SceneGraphRecord], config: CurationConfig) -> list[SceneGraphRecord]:
    """Keep boxes with exactly one state relation and both sides >= min_box."""
    out = []
    for rec in records:
        kept = tuple(
            b
            for b in rec.boxes
            if b.relation_count == 1
            and len(b.state_names) == 1
            and b.width >= config.min_box
            and b.height >= config.min_box
        )
        out.append(SceneGraphRecord(rec.graph_id, rec.source_partition, kept))
    return out


@dataclass
class VocabResult:
    states: tuple[str, ...]
    objects: tuple[str, ...]
    report: tuple[str, ...]
    state_map: dict[str, str | None]
    object_map: dict[str, str | None]


def build_vocab(records: list[SceneGraphRecord], synonym_map: dict[str, str]) -> VocabResult:
    """Synonym merge, plural folding, then state/object overlap removal.

    Every merge and removal is listed in the report. The returned maps send
    raw tokens to their final form, or None for removed tokens.
    """
    raw_states = sorted({b.state_names[0] for r in records for b in r.boxes})
    raw_objects = sorted({b.object_name for r in records for b in r.boxes})
    report: list[str] = []

    def canonize(raw: list[str], kind: str) -> dict[str, str]:
        mapping: dict[str, str] = {}
        for tok in raw:
            canon = synonym_map.get(tok, tok)
            if canon != tok:
                report.append(f"synonym ({kind}): {tok} -> {canon}")
            mapping[tok] = canon
        vocab = set(mapping.values())
        # Fold "dogs" onto "dog" only when the singular already exists.
        for tok in sorted(vocab):
            if tok.endswith("s") and tok[:-1] in vocab:
                report.append(f"plural ({kind}): {tok} -> {tok[:-1]}")
                for k, v in mapping.items():
                    if v == tok:
                        mapping[k] = tok[:-1]
        return mapping

    state_map = canonize(raw_states, "state")
    object_map = canonize(raw_objects, "object")
    states = set(state_map.values())
    objects = set(object_map.values())
    overlap = states & objects
    for tok in sorted(overlap):
        report.append(f"overlap: {tok} removed from both vocabularies")
    final_state_map = {k: (None if v in overlap else v) for k, v in state_map.items()}
    final_object_map = {k: (None if v in overlap else v) for k, v in object_map.items()}
    return VocabResult(
        states=tuple(sorted(states - overlap)),
        objects=tuple(sorted(objects - overlap)),
        report=tuple(report),
        state_map=final_state_map,
        object_map=final_object_map,
    )


def partition(
    records: list[SceneGraphRecord],
    config: CurationConfig,
    vocab: VocabResult | None = None,
):
    """Seeded graph-level split into train/val/test with novel-pair curation.

    Returns (SplitSpec, {phase: tuple of (image_id, Pair)}). Steps: move a
    seeded fraction of source-train graphs onto the evaluation side, assign
    evaluation graphs to val/test Bernoulli(val_prob), promote novel pairs to
    the phase unseen sets, move a seeded share of the remaining evaluation
    pairs out of the seen set, then drop all unseen pairs from seen.
    """
    records = filter_boxes(records, config)
    if vocab is None:
        vocab = build_vocab(records, config.synonym_map)
    s_idx = {name: i for i, name in enumerate(vocab.states)}
    o_idx = {name: i for i, name in enumerate(vocab.objects)}

    def box_pair(box: BoxRecord) -> Pair | None:
        s = vocab.state_map.get(box.state_names[0])
        o = vocab.object_map.get(box.object_name)
        if s is None or o is None:
            return None
        return Pair(s_idx[s], o_idx[o])

    rng = np.random.default_rng(config.seed)
    train_graphs = [r for r in records if r.source_partition == "train"]
    eval_graphs = [r for r in records if r.source_partition == "test"]

    n_move = round(config.train_graph_fraction_moved * len(train_graphs))
    moved_idx = set(rng.permutation(len(train_graphs))[:n_move].tolist())
    moved = [g for i, g in enumerate(train_graphs) if i in moved_idx]
    kept_train = [g for i, g in enumerate(train_graphs) if i not in moved_idx]

    side: dict[str, str] = {}
    for g in eval_graphs + moved:
        side[g.graph_id] = "val" if rng.random() < config.val_prob else "test"

    def pairs_of(graphs) -> set[Pair]:
        return {p for g in graphs for b in g.boxes if (p := box_pair(b)) is not None}

    val_graphs = [g for g in eval_graphs + moved if side[g.graph_id] == "val"]
    test_graphs = [g for g in eval_graphs + moved if side[g.graph_id] == "test"]
    seen0 = pairs_of(kept_train)
    val_pairs = pairs_of(val_graphs)
    test_pairs = pairs_of(test_graphs)

    val_unseen = val_pairs - seen0
    for p in sorted(val_pairs & seen0):
        if rng.random() < config.unseen_fraction:
            val_unseen.add(p)
    test_unseen = (test_pairs - seen0) - val_unseen
    for p in sorted((test_pairs & seen0) - val_unseen):
        if rng.random() < config.unseen_fraction:
            test_unseen.add(p)
    seen = seen0 - val_unseen - test_unseen
    if not val_unseen or not test_unseen:
        raise SplitError("curation produced an empty unseen set; adjust corpus or seed")
    if not seen:
        raise SplitError("curation left no seen pairs; lower unseen_fraction")

    split = SplitSpec(
        states=vocab.states,
        objects=vocab.objects,
        seen_pairs=tuple(sorted(seen)),
        val_seen=tuple(sorted(val_pairs & seen)),
        val_unseen=tuple(sorted(val_unseen)),
        test_seen=tuple(sorted(test_pairs & seen)),
        test_unseen=tuple(sorted(test_unseen)),
    )
    violations = validate_splits(split)
    if violations:
        raise SplitError("curation bug: " + "; ".join(violations))

    def box_list(graphs, allowed: set[Pair]):
        out = []
        for g in graphs:
            for b in g.boxes:
                p = box_pair(b)
                if p is not None and p in allowed:
                    out.append((b.image_id, p))
        return tuple(out)

    boxes = {
        "train": box_list(kept_train, seen),
        "val": box_list(val_graphs, set(split.val_seen) | val_unseen),
        "test": box_list(test_graphs, set(split.test_seen) | test_unseen),
    }
    return split, boxes


def emit_splits(split: SplitSpec, directory: str | Path, force: bool = False) -> None:
    """Write the split directory format; round-trips through load_splits."""
    directory = Path(directory)
    existing = [directory / "states.txt", directory / "objects.txt"] + [
        directory / f for f in PAIR_FILES.values()
    ]
    if not force and any(p.exists() for p in existing):
        raise SplitError(f"{directory} already contains split files (use force to overwrite)")
    directory.mkdir(parents=True, exist_ok=True)

    def write_lines(name: str, lines: list[str]) -> None:
        (directory / name).write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")

    write_lines("states.txt", list(split.states))
    write_lines("objects.txt", list(split.objects))
    for key, fname in PAIR_FILES.items():
        pairs = getattr(split, key)
        write_lines(fname, [f"{split.states[p.state]}\t{split.objects[p.object]}" for p in pairs])


def emit_box_lists(directory: str | Path, boxes, split: SplitSpec) -> None:
    directory = Path(directory)
    for phase, entries in boxes.items():
        lines = [
            f"{image_id}\t{split.states[p.state]}\t{split.objects[p.object]}"
            for image_id, p in entries
        ]
        (directory / f"boxes_{phase}.txt").write_text(
            "".join(ln + "\n" for ln in lines), encoding="utf-8"
        )
