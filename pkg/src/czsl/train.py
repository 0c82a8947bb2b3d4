"""End-to-end optimization of extractor and graph-convolution parameters.

The two parameter groups (extractor at lr_extractor, convolution stack at
lr_gcn) are disjoint and exhaustive. Classifier rows are recomputed every
step because the stack weights change every step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import gcn as gcn_mod
from .data import Dataset, SplitSpec
from .errors import ModelError
from .graph import CompGraph, PropagationMatrix
from .model import CompatModel, Mlp3, extract, extract_backward, loss_and_grad, score_all


@dataclass
class TrainConfig:
    lr_extractor: float = 5e-6
    lr_gcn: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 128
    seed: int = 0
    dropout: float = 0.0
    shuffle: bool = True
    eval_every: int = 0  # epochs between validation evaluations; 0 = never

    def __post_init__(self) -> None:
        if self.lr_extractor < 0 or self.lr_gcn < 0:
            raise ModelError("learning rates must be >= 0")
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def init_adam(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected moment update, applied to the params in place."""
    state.t += 1
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ModelError(f"gradient shape {g.shape} != parameter {name} shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise ModelError(f"non-finite gradient for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**state.t)
        v_hat = v / (1.0 - beta2**state.t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


@dataclass
class TrainLogEntry:
    epoch: int
    loss: float
    seconds: float
    val_auc: float | None = None


@dataclass
class TrainLog:
    entries: list[TrainLogEntry] = field(default_factory=list)
    best_val_auc: float | None = None
    best_params: dict[str, np.ndarray] | None = None

    def to_csv(self, include_timing: bool = True) -> str:
        lines = ["epoch,loss,seconds,val_auc"]
        for e in self.entries:
            seconds = f"{e.seconds:.3f}" if include_timing else "0.000"
            val = repr(float(e.val_auc)) if e.val_auc is not None else ""
            lines.append(f"{e.epoch},{repr(float(e.loss))},{seconds},{val}")
        return "\n".join(lines) + "\n"


def iter_batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def seen_label_indices(dataset: Dataset, split: SplitSpec) -> np.ndarray:
    """Map sample labels to columns of the seen-composition score block."""
    index = {pair: i for i, pair in enumerate(split.seen_pairs)}
    try:
        return np.array([index[s.label] for s in dataset.samples], dtype=np.int64)
    except KeyError as exc:
        raise ModelError(f"sample labeled with non-seen pair {exc.args[0]}") from exc


def _seen_classifiers(
    model: CompatModel,
    prop: PropagationMatrix | None,
    graph: CompGraph | None,
    node_features: np.ndarray,
    n_seen: int,
):
    """Seen-composition classifier rows plus the cache needed for backward."""
    if model.gcn is None:
        return node_features[:n_seen], None
    h, cache = gcn_mod.run_forward(model.gcn, prop, node_features)
    comp = h[graph.comp_rows]
    return comp[:n_seen], cache


def fit(
    model: CompatModel,
    prop: PropagationMatrix | None,
    graph: CompGraph | None,
    node_features: np.ndarray,
    train_data: Dataset,
    split: SplitSpec,
    config: TrainConfig,
    val_data: Dataset | None = None,
):
    """Train in place; returns a TrainLog (per-epoch loss, optional val AUC)."""
    if not train_data.samples:
        raise ModelError("empty training set")
    if isinstance(model.extractor, Mlp3):
        model.extractor.dropout = config.dropout
    x = train_data.feature_matrix()
    y = seen_label_indices(train_data, split)
    n = x.shape[0]
    n_seen = len(split.seen_pairs)

    ext_params = model.extractor.parameters()
    gcn_params = model.gcn.parameters() if model.gcn is not None else {}
    ext_state = init_adam(ext_params)
    gcn_state = init_adam(gcn_params)

    log = TrainLog()
    global_step = 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        if config.shuffle:
            order = np.random.default_rng([config.seed, epoch]).permutation(n)
        else:
            order = np.arange(n)
        loss_sum = 0.0
        for batch in iter_batches(n, config.batch_size, order):
            global_step += 1
            step_seed = config.seed + 7919 * global_step
            phi, ext_cache = extract(model.extractor, x[batch], train_mode=True, seed=step_seed)
            c_seen, gcn_cache = _seen_classifiers(model, prop, graph, node_features, n_seen)
            scores = score_all(phi, c_seen)
            loss, d_scores = loss_and_grad(scores, y[batch])
            if not np.isfinite(loss):
                raise ModelError(f"non-finite loss at epoch {epoch}, step {global_step}")
            loss_sum += loss * len(batch)

            d_phi = d_scores @ c_seen
            if gcn_params:
                d_comp = d_scores.T @ phi
                d_h = np.zeros((graph.K, model.d))
                d_h[graph.comp_offset : graph.comp_offset + n_seen] = d_comp
                gcn_grads, _ = gcn_mod.backward(model.gcn, gcn_cache, d_h)
                adam_step(
                    gcn_params, gcn_grads, gcn_state, config.lr_gcn,
                    config.beta1, config.beta2, config.eps,
                )
            if ext_params:
                ext_grads, _ = extract_backward(model.extractor, ext_cache, d_phi)
                adam_step(
                    ext_params, ext_grads, ext_state, config.lr_extractor,
                    config.beta1, config.beta2, config.eps,
                )

        entry = TrainLogEntry(epoch=epoch, loss=loss_sum / n, seconds=time.perf_counter() - t0)
        if val_data is not None and config.eval_every and (
            epoch % config.eval_every == 0 or epoch == config.epochs
        ):
            from .evaluate import evaluate_model  # deferred: evaluate imports model

            result = evaluate_model(model, prop, graph, node_features, val_data, split, "val")
            entry.val_auc = result.auc
            if log.best_val_auc is None or result.auc > log.best_val_auc:
                log.best_val_auc = result.auc
                log.best_params = {k: v.copy() for k, v in model.parameters().items()}
        log.entries.append(entry)
    return log


def grad_check(
    model: CompatModel,
    prop: PropagationMatrix | None,
    graph: CompGraph | None,
    node_features: np.ndarray,
    batch_x: np.ndarray,
    batch_y: np.ndarray,
    n_seen: int,
    step: float = 1e-5,
    n_samples: int = 50,
    seed: int = 0,
    negate_param: str | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Samples parameters across every group. Dropout must be disabled (the
    check runs the extractor in eval mode). Perturbation points that land a
    ReLU pre-activation within 10*step of its kink are resampled.
    `negate_param` flips the analytic gradient of one tensor, for mutation
    testing of the check itself.
    """

    def run(return_cache: bool = False):
        phi, ext_cache = extract(model.extractor, batch_x, train_mode=False)
        if model.gcn is not None:
            h, gcn_cache = gcn_mod.run_forward(model.gcn, prop, node_features)
            c_seen = h[graph.comp_rows][:n_seen]
        else:
            gcn_cache = None
            c_seen = node_features[:n_seen]
        scores = score_all(phi, c_seen)
        loss, d_scores = loss_and_grad(scores, batch_y)
        kink = np.inf
        if isinstance(model.extractor, Mlp3):
            kink = min(kink, min(np.abs(c).min() for c in ext_cache.post_ln))
        if gcn_cache is not None and len(gcn_cache.pre) > 1:
            kink = min(kink, min(np.abs(z).min() for z in gcn_cache.pre[:-1]))
        if not return_cache:
            return loss, kink
        return loss, kink, d_scores, phi, c_seen, ext_cache, gcn_cache

    loss, _, d_scores, phi, c_seen, ext_cache, gcn_cache = run(return_cache=True)
    analytic: dict[str, np.ndarray] = {}
    d_phi = d_scores @ c_seen
    if model.gcn is not None:
        d_comp = d_scores.T @ phi
        d_h = np.zeros((graph.K, model.d))
        d_h[graph.comp_offset : graph.comp_offset + n_seen] = d_comp
        gcn_grads, _ = gcn_mod.backward(model.gcn, gcn_cache, d_h)
        analytic.update(gcn_grads)
    if isinstance(model.extractor, Mlp3):
        ext_grads, _ = extract_backward(model.extractor, ext_cache, d_phi)
        analytic.update(ext_grads)
    if negate_param is not None:
        analytic[negate_param] = -analytic[negate_param]

    params = model.parameters()
    catalogue = [(name, i) for name, p in params.items() for i in range(p.size)]
    if not catalogue:
        raise ModelError("model has no trainable parameters")
    rng = np.random.default_rng(seed)
    max_err = 0.0
    checked = 0
    guard = 0
    while checked < min(n_samples, len(catalogue)):
        name, flat = catalogue[int(rng.integers(len(catalogue)))]
        p = params[name]
        original = p.flat[flat]
        p.flat[flat] = original + step
        up, kink_up = run()
        p.flat[flat] = original - step
        down, kink_down = run()
        p.flat[flat] = original
        if min(kink_up, kink_down) < 10.0 * step and guard < 10 * n_samples:
            guard += 1
            continue
        numeric = (up - down) / (2.0 * step)
        a = analytic[name].flat[flat]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        max_err = max(max_err, float(err))
        checked += 1
    return max_err
