import numpy as np
import pytest

from czsl.data import (
    Pair,
    SplitSpec,
    load_features,
    load_splits,
    normalize_name,
    validate_splits,
    write_features,
)
from czsl.errors import FeatureFileError, SplitError
from czsl.gqa import emit_splits

from conftest import make_split, random_split


def write_split_files(directory, states, objects, **pair_files):
    files = {
        "train_pairs.txt": pair_files.get("seen", []),
        "val_pairs_seen.txt": pair_files.get("val_seen", []),
        "val_pairs_unseen.txt": pair_files.get("val_unseen", []),
        "test_pairs_seen.txt": pair_files.get("test_seen", []),
        "test_pairs_unseen.txt": pair_files.get("test_unseen", []),
    }
    (directory / "states.txt").write_text("".join(s + "\n" for s in states))
    (directory / "objects.txt").write_text("".join(o + "\n" for o in objects))
    for fname, pairs in files.items():
        (directory / fname).write_text("".join(f"{s}\t{o}\n" for s, o in pairs))


def test_normalize_name():
    assert normalize_name("  Faux   Leather ") == "faux leather"
    assert normalize_name("DOG") == "dog"


def test_load_simple_split(tmp_path):
    write_split_files(
        tmp_path,
        ["red", "old"],
        ["car", "dog"],
        seen=[("red", "car"), ("old", "dog")],
        val_seen=[("red", "car")],
        val_unseen=[("old", "car")],
        test_seen=[("old", "dog")],
        test_unseen=[("red", "dog")],
    )
    split = load_splits(tmp_path)
    assert split.states == ("red", "old")
    assert split.objects == ("car", "dog")
    assert split.seen_pairs == (Pair(0, 0), Pair(1, 1))
    assert split.val_unseen == (Pair(1, 0),)
    assert len(split.all_pairs()) == 4


def test_mit_states_scale_counts(tmp_path):
    # |S|=115, |O|=245, 1262 seen + 300 + 400 unseen -> 1962 composition nodes.
    rng = np.random.default_rng(0)
    states = [f"st{i}" for i in range(115)]
    objects = [f"ob{i}" for i in range(245)]
    universe = [(s, o) for s in states for o in objects]
    picks = rng.permutation(len(universe))
    seen = [universe[i] for i in picks[:1262]]
    val_u = [universe[i] for i in picks[1262:1562]]
    test_u = [universe[i] for i in picks[1562:1962]]
    write_split_files(
        tmp_path, states, objects,
        seen=seen, val_seen=seen[:300], val_unseen=val_u,
        test_seen=seen[:400], test_unseen=test_u,
    )
    split = load_splits(tmp_path)
    assert len(split.states) == 115
    assert len(split.objects) == 245
    assert len(split.seen_pairs) == 1262
    assert len(split.val_unseen) == 300
    assert len(split.test_unseen) == 400
    assert len(split.all_pairs()) == 1962


def test_empty_unseen_file_is_valid(tmp_path):
    write_split_files(tmp_path, ["red"], ["car"], seen=[("red", "car")])
    split = load_splits(tmp_path)
    assert split.val_unseen == ()
    assert validate_splits(split) == []


def test_pair_in_train_and_test_unseen_rejected(tmp_path):
    write_split_files(
        tmp_path, ["red"], ["car", "dog"],
        seen=[("red", "car")], test_unseen=[("red", "car")],
    )
    with pytest.raises(SplitError, match=r"\(red, car\)"):
        load_splits(tmp_path)


def test_duplicate_vocab_entry_rejected(tmp_path):
    write_split_files(tmp_path, ["red", "Red"], ["car"], seen=[("red", "car")])
    with pytest.raises(SplitError, match="duplicate"):
        load_splits(tmp_path)


def test_unknown_state_in_pair_file(tmp_path):
    write_split_files(tmp_path, ["red"], ["car"], seen=[("blue", "car")])
    with pytest.raises(SplitError, match="unknown state 'blue'"):
        load_splits(tmp_path)


def test_duplicate_pair_within_file(tmp_path):
    write_split_files(tmp_path, ["red"], ["car"], seen=[("red", "car"), ("red", "car")])
    with pytest.raises(SplitError, match="repeated"):
        load_splits(tmp_path)


def test_missing_file(tmp_path):
    with pytest.raises(SplitError, match="missing"):
        load_splits(tmp_path)


def test_validate_reports_violations():
    split = make_split(
        ("old",), ("dog", "car"),
        seen=[("old", "car")],
        val_unseen=[("old", "dog")],
        test_unseen=[("old", "dog")],
    )
    report = validate_splits(split)
    assert len(report) == 1
    assert "val_unseen and test_unseen" in report[0]


def test_validate_subset_violation():
    split = SplitSpec(
        states=("old",), objects=("dog", "car"),
        seen_pairs=(Pair(0, 1),), val_seen=(), val_unseen=(),
        test_seen=(Pair(0, 0),), test_unseen=(),
    )
    report = validate_splits(split)
    assert len(report) == 1
    assert "test_seen" in report[0]


def test_validate_ok_is_empty(tiny_split):
    assert validate_splits(tiny_split) == []


def test_load_is_deterministic(tmp_path):
    write_split_files(
        tmp_path, ["red", "old"], ["car", "dog"],
        seen=[("old", "dog"), ("red", "car")], val_unseen=[("old", "car")],
    )
    assert load_splits(tmp_path) == load_splits(tmp_path)


def test_emit_load_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    for i in range(10):
        split = random_split(rng)
        target = tmp_path / f"d{i}"
        emit_splits(split, target)
        assert load_splits(target) == split


def feature_file(path, header, rows):
    path.write_text(header + "\n" + "".join(r + "\n" for r in rows))


def test_load_features_basic(tmp_path, tiny_split):
    f = tmp_path / "feat.txt"
    feature_file(f, "2 4", [
        "a\tred\tcar\t1 2 3 4",
        "b\told\tdog\t0.5 0 -1 2e-1",
    ])
    ds = load_features(f, tiny_split, "train")
    assert len(ds.samples) == 2
    assert ds.dim == 4
    np.testing.assert_allclose(ds.samples[1].feature, [0.5, 0, -1, 0.2])


def test_load_features_dim_mismatch(tmp_path, tiny_split):
    f = tmp_path / "feat.txt"
    feature_file(f, "1 4", ["a\tred\tcar\t1 2 3"])
    with pytest.raises(FeatureFileError, match="header dimension"):
        load_features(f, tiny_split, "train")


def test_load_features_phase_consistency(tmp_path, tiny_split):
    f = tmp_path / "feat.txt"
    # (old, car) is val-unseen, so it cannot appear in the train phase.
    feature_file(f, "1 2", ["a\told\tcar\t1 2"])
    with pytest.raises(FeatureFileError, match="not allowed in phase 'train'"):
        load_features(f, tiny_split, "train")
    ds = load_features(f, tiny_split, "val")
    assert ds.samples[0].label == Pair(1, 0)


def test_load_features_unknown_label(tmp_path, tiny_split):
    f = tmp_path / "feat.txt"
    feature_file(f, "1 2", ["a\tblue\tcar\t1 2"])
    with pytest.raises(FeatureFileError, match="unknown label"):
        load_features(f, tiny_split, "train")


def test_load_features_non_finite(tmp_path, tiny_split):
    f = tmp_path / "feat.txt"
    feature_file(f, "1 2", ["a\tred\tcar\t1 inf"])
    with pytest.raises(FeatureFileError, match="non-finite"):
        load_features(f, tiny_split, "train")


def test_load_features_record_count(tmp_path, tiny_split):
    f = tmp_path / "feat.txt"
    feature_file(f, "2 2", ["a\tred\tcar\t1 2"])
    with pytest.raises(FeatureFileError, match="header says 2"):
        load_features(f, tiny_split, "train")


def test_write_features_round_trip(tmp_path, tiny_split):
    f = tmp_path / "feat.txt"
    feature_file(f, "2 3", [
        "a\tred\tcar\t1 0.25 -3.5",
        "b\told\tdog\t0.1 2 3",
    ])
    ds = load_features(f, tiny_split, "train")
    g = tmp_path / "copy.txt"
    write_features(g, ds)
    ds2 = load_features(g, tiny_split, "train")
    assert [s.id for s in ds2.samples] == ["a", "b"]
    for s1, s2 in zip(ds.samples, ds2.samples):
        np.testing.assert_array_equal(s1.feature, s2.feature)
