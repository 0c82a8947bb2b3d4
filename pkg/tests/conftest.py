from __future__ import annotations

import numpy as np
import pytest

from czsl.data import Pair, SplitSpec
from czsl.gqa import BoxRecord, SceneGraphRecord


def make_split(states, objects, seen, val_unseen=(), test_unseen=(), val_seen=None, test_seen=None):
    """Build a SplitSpec from name pairs, e.g. seen=[("red", "car")]."""
    states = tuple(states)
    objects = tuple(objects)
    s_idx = {name: i for i, name in enumerate(states)}
    o_idx = {name: i for i, name in enumerate(objects)}

    def pairs(items):
        return tuple(Pair(s_idx[s], o_idx[o]) for s, o in items)

    seen_pairs = pairs(seen)
    return SplitSpec(
        states=states,
        objects=objects,
        seen_pairs=seen_pairs,
        val_seen=seen_pairs if val_seen is None else pairs(val_seen),
        val_unseen=pairs(val_unseen),
        test_seen=seen_pairs if test_seen is None else pairs(test_seen),
        test_unseen=pairs(test_unseen),
    )


@pytest.fixture
def tiny_split():
    """S={red, old}, O={car, dog}, Y={(red,car), (old,dog), (old,car)}."""
    return make_split(
        states=("red", "old"),
        objects=("car", "dog"),
        seen=[("red", "car"), ("old", "dog")],
        val_unseen=[("old", "car")],
        val_seen=[("red", "car")],
        test_seen=[("old", "dog")],
    )


def random_split(rng: np.random.Generator, max_states=6, max_objects=6):
    """Small random SplitSpec satisfying every invariant by construction."""
    n_s = int(rng.integers(2, max_states + 1))
    n_o = int(rng.integers(2, max_objects + 1))
    universe = [Pair(s, o) for s in range(n_s) for o in range(n_o)]
    perm = rng.permutation(len(universe))
    n_seen = int(rng.integers(2, max(3, len(universe) - 2)))
    rest = len(universe) - n_seen
    n_vu = int(rng.integers(0, rest + 1))
    n_tu = int(rng.integers(0, rest - n_vu + 1))
    seen = sorted(universe[i] for i in perm[:n_seen])
    val_u = sorted(universe[i] for i in perm[n_seen : n_seen + n_vu])
    test_u = sorted(universe[i] for i in perm[n_seen + n_vu : n_seen + n_vu + n_tu])
    return SplitSpec(
        states=tuple(f"s{i}" for i in range(n_s)),
        objects=tuple(f"o{i}" for i in range(n_o)),
        seen_pairs=tuple(seen),
        val_seen=tuple(seen),
        val_unseen=tuple(val_u),
        test_seen=tuple(seen),
        test_unseen=tuple(test_u),
    )


def random_scene_corpus(rng: np.random.Generator, n_graphs=40, n_states=6, n_objects=8):
    """Random scene-graph records dense enough for curation to succeed."""
    states = [f"st{i}" for i in range(n_states)]
    objects = [f"ob{i}" for i in range(n_objects)]
    records = []
    for g in range(n_graphs):
        part = "train" if rng.random() < 0.6 else "test"
        boxes = []
        for b in range(int(rng.integers(2, 7))):
            boxes.append(
                BoxRecord(
                    image_id=f"img{g}_{b}",
                    width=int(rng.integers(100, 400)),
                    height=int(rng.integers(100, 400)),
                    object_name=objects[int(rng.integers(n_objects))],
                    state_names=(states[int(rng.integers(n_states))],),
                    relation_count=1,
                )
            )
        records.append(
            SceneGraphRecord(graph_id=f"g{g}", source_partition=part, boxes=tuple(boxes))
        )
    return records


def corpus_to_file(records, path):
    lines = []
    for rec in records:
        for b in rec.boxes:
            lines.append(
                f"{rec.graph_id}\t{rec.source_partition}\t{b.image_id}\t{b.width}\t{b.height}"
                f"\t{b.object_name}\t{','.join(b.state_names)}\t{b.relation_count}"
            )
    path.write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")
