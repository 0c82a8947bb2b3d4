"""Generalized evaluation over seen and unseen compositions.

A scalar bias added to every unseen-composition column trades seen accuracy
against unseen accuracy. Sweeping the bias over the per-row margins
(max seen score - max unseen score) hits every achievable operating point:
a row's prediction can only flip between the groups at its own margin, and
between consecutive margins all predictions are constant.

Candidate columns MUST be ordered seen-first. With that layout an exact
score tie resolves to the seen group (lowest index), so accuracies are
piecewise constant on (m_i, m_{i+1}] and evaluating at each margin plus two
finite sentinels covers every interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Pair, SplitSpec
from .errors import EvalError
from .graph import CompGraph, PropagationMatrix
from .model import CompatModel, classifiers, extract, predict, score_all


@dataclass
class EvalInput:
    """Scores of each sample against the phase candidate set."""

    scores: np.ndarray  # rows = samples, columns = candidates (seen first)
    labels: np.ndarray  # true candidate index per row
    unseen_mask: np.ndarray  # bool per column
    candidates: tuple[Pair, ...]

    def __post_init__(self) -> None:
        rows, cols = self.scores.shape
        if self.unseen_mask.shape != (cols,) or len(self.candidates) != cols:
            raise EvalError("candidate metadata does not match score columns")
        if rows and (self.labels.min() < 0 or self.labels.max() >= cols):
            raise EvalError("true label outside the candidate set")
        n_seen = int(np.sum(~self.unseen_mask))
        if self.unseen_mask[:n_seen].any():
            raise EvalError("candidate columns must be ordered seen-first")
        if not np.all(np.isfinite(self.scores)):
            raise EvalError("non-finite score")

    @property
    def seen_rows(self) -> np.ndarray:
        return ~self.unseen_mask[self.labels]

    @property
    def unseen_rows(self) -> np.ndarray:
        return self.unseen_mask[self.labels]


@dataclass
class EvalCurve:
    """Operating points (bias, seen_acc, unseen_acc), bias ascending.

    The first and last points are the sentinel biases: finite values placed
    strictly below/above every margin, equivalent to the -inf/+inf limits.
    """

    points: list[tuple[float, float, float]]


@dataclass
class EvalResult:
    auc: float
    best_hm: float
    best_seen: float
    best_unseen: float
    state_acc: float
    obj_acc: float
    curve: EvalCurve
    flags: tuple[str, ...] = ()

    def to_csv(self) -> str:
        lines = ["metric,value"]
        for name in ("auc", "best_hm", "best_seen", "best_unseen", "state_acc", "obj_acc"):
            lines.append(f"{name},{repr(float(getattr(self, name)))}")
        return "\n".join(lines) + "\n"


def curve_to_csv(curve: EvalCurve) -> str:
    lines = ["bias,seen_acc,unseen_acc"]
    for b, s, u in curve.points:
        lines.append(f"{repr(float(b))},{repr(float(s))},{repr(float(u))}")
    return "\n".join(lines) + "\n"


def candidate_biases(inp: EvalInput) -> np.ndarray:
    """Distinct per-row margins bracketed by two finite sentinel biases."""
    if not np.any(inp.unseen_mask) or np.all(inp.unseen_mask):
        raise EvalError("candidate set needs both seen and unseen columns")
    if inp.scores.shape[0] == 0:
        raise EvalError("no rows to evaluate")
    seen_max = inp.scores[:, ~inp.unseen_mask].max(axis=1)
    unseen_max = inp.scores[:, inp.unseen_mask].max(axis=1)
    margins = np.unique(seen_max - unseen_max)
    return np.concatenate(([margins[0] - 1.0], margins, [margins[-1] + 1.0]))


def accuracy_at_bias(inp: EvalInput, bias: float) -> tuple[float, float]:
    """Per-group accuracies after adding `bias` to the unseen columns.

    An empty group has accuracy 0 by definition (flagged on the result).
    """
    biased = inp.scores + bias * inp.unseen_mask
    correct = predict(biased) == inp.labels
    seen_rows, unseen_rows = inp.seen_rows, inp.unseen_rows
    seen_acc = float(correct[seen_rows].mean()) if seen_rows.any() else 0.0
    unseen_acc = float(correct[unseen_rows].mean()) if unseen_rows.any() else 0.0
    return seen_acc, unseen_acc


def sweep(inp: EvalInput) -> EvalCurve:
    """Evaluate every candidate bias; enforces curve monotonicity."""
    points = []
    for b in candidate_biases(inp):
        s, u = accuracy_at_bias(inp, float(b))
        points.append((float(b), s, u))
    for (_, s0, u0), (_, s1, u1) in zip(points, points[1:]):
        if s1 > s0 + 1e-12 or u1 < u0 - 1e-12:
            raise EvalError("non-monotone operating curve: scoring bug")
    return EvalCurve(points=points)


def compute_auc(curve: EvalCurve) -> float:
    """Trapezoidal area of unseen accuracy against seen accuracy.

    Duplicate seen-accuracy points collapse to their max unseen accuracy
    first. A single surviving point contributes its rectangle to the origin.
    """
    best: dict[float, float] = {}
    for _, s, u in curve.points:
        if s not in best or u > best[s]:
            best[s] = u
    xs = sorted(best)
    if len(xs) == 1:
        return xs[0] * best[xs[0]]
    area = 0.0
    for a, b in zip(xs, xs[1:]):
        area += (b - a) * (best[a] + best[b]) / 2.0
    return area


def harmonic_mean(s: float, u: float) -> float:
    return 0.0 if s + u == 0.0 else 2.0 * s * u / (s + u)


def summarize(curve: EvalCurve, inp: EvalInput, primitive_at: str = "sentinel") -> EvalResult:
    """Headline metrics from a swept curve.

    State/object accuracies are measured over unseen-labeled rows, at the
    high sentinel by default (predictions restricted to unseen pairs) or at
    the best-harmonic-mean bias with primitive_at="best-hm".
    """
    if primitive_at not in ("sentinel", "best-hm"):
        raise EvalError(f"unknown primitive_at {primitive_at!r}")
    best_hm = max(harmonic_mean(s, u) for _, s, u in curve.points)
    best_seen = curve.points[0][1]
    best_unseen = curve.points[-1][2]

    bias = curve.points[-1][0]
    if primitive_at == "best-hm":
        bias = max(curve.points, key=lambda p: harmonic_mean(p[1], p[2]))[0]
    biased = inp.scores + bias * inp.unseen_mask
    preds = predict(biased)
    unseen_rows = np.flatnonzero(inp.unseen_rows)
    flags = []
    if not inp.seen_rows.any():
        flags.append("no-seen-rows")
    if len(unseen_rows) == 0:
        flags.append("no-unseen-rows")
        state_acc = obj_acc = 0.0
    else:
        state_hits = obj_hits = 0
        for r in unseen_rows:
            true_pair = inp.candidates[int(inp.labels[r])]
            pred_pair = inp.candidates[int(preds[r])]
            state_hits += true_pair.state == pred_pair.state
            obj_hits += true_pair.object == pred_pair.object
        state_acc = state_hits / len(unseen_rows)
        obj_acc = obj_hits / len(unseen_rows)
    return EvalResult(
        auc=compute_auc(curve),
        best_hm=best_hm,
        best_seen=best_seen,
        best_unseen=best_unseen,
        state_acc=state_acc,
        obj_acc=obj_acc,
        curve=curve,
        flags=tuple(flags),
    )


def phase_candidates(split: SplitSpec, phase: str) -> tuple[tuple[Pair, ...], np.ndarray]:
    """Candidate compositions for a phase (seen pairs first) and their rows
    in the full composition ordering."""
    n_seen = len(split.seen_pairs)
    n_vu = len(split.val_unseen)
    if phase == "val":
        pairs = split.seen_pairs + split.val_unseen
        rows = np.arange(n_seen + n_vu)
    elif phase == "test":
        pairs = split.seen_pairs + split.test_unseen
        rows = np.concatenate(
            [np.arange(n_seen), n_seen + n_vu + np.arange(len(split.test_unseen))]
        )
    else:
        raise EvalError(f"no candidate set for phase {phase!r}")
    return pairs, rows


def make_eval_input(
    model: CompatModel,
    prop: PropagationMatrix | None,
    graph: CompGraph | None,
    node_features: np.ndarray,
    dataset: Dataset,
    split: SplitSpec,
    phase: str,
) -> EvalInput:
    """Score a dataset against its phase candidate set.

    `node_features` follows the training convention: the K x P node matrix
    for graph models, the |Y| x P composition rows for the direct baseline.
    """
    pairs, rows = phase_candidates(split, phase)
    c_all = classifiers(model, node_features, prop, graph)
    c_phase = c_all[rows]
    phi, _ = extract(model.extractor, dataset.feature_matrix(), train_mode=False)
    scores = score_all(phi, c_phase)
    col = {pair: i for i, pair in enumerate(pairs)}
    try:
        labels = np.array([col[s.label] for s in dataset.samples], dtype=np.int64)
    except KeyError as exc:
        raise EvalError(f"sample label {exc.args[0]} outside phase candidates") from exc
    mask = np.zeros(len(pairs), dtype=bool)
    mask[len(split.seen_pairs) :] = True
    return EvalInput(scores=scores, labels=labels, unseen_mask=mask, candidates=pairs)


def evaluate_model(
    model: CompatModel,
    prop: PropagationMatrix | None,
    graph: CompGraph | None,
    node_features: np.ndarray,
    dataset: Dataset,
    split: SplitSpec,
    phase: str,
    primitive_at: str = "sentinel",
) -> EvalResult:
    inp = make_eval_input(model, prop, graph, node_features, dataset, split, phase)
    return summarize(sweep(inp), inp, primitive_at=primitive_at)


def retrieve_topk(
    pair: Pair,
    dataset: Dataset,
    model: CompatModel,
    node_features: np.ndarray,
    prop: PropagationMatrix | None = None,
    graph: CompGraph | None = None,
    k: int = 5,
) -> list[tuple[str, float]]:
    """Top-k sample ids for one composition, by compatibility score.

    Ties keep dataset order. If k exceeds the dataset size the full ranking
    is returned.
    """
    if k < 1:
        raise EvalError("k must be >= 1")
    comps = graph.compositions if graph is not None else dataset.split.all_pairs()
    try:
        row = comps.index(pair)
    except ValueError:
        raise EvalError(f"composition {pair} is not a graph node") from None
    c_all = classifiers(model, node_features, prop, graph)
    phi, _ = extract(model.extractor, dataset.feature_matrix(), train_mode=False)
    scores = phi @ c_all[row]
    order = np.argsort(-scores, kind="stable")[:k]
    return [(dataset.samples[int(i)].id, float(scores[int(i)])) for i in order]
