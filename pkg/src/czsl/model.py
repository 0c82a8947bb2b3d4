"""Joint compatibility scoring between sample features and compositions.

A sample representation phi = extractor(feature) is scored against every
candidate composition by a dot product with that composition's classifier
row. Classifier rows come either from the graph convolution output or, for
the baseline, directly from averaged word vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gcn as gcn_mod
from .errors import ModelError
from .gcn import GcnStack
from .graph import CompGraph, GraphVariant, PropagationMatrix

LN_EPS = 1e-5


@dataclass
class Identity:
    """Pass-through extractor; requires input width == d."""

    d: int

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    @property
    def out_dim(self) -> int:
        return self.d


@dataclass
class Mlp3:
    """Three blocks of affine -> LayerNorm -> ReLU -> Dropout."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    ln_gains: list[np.ndarray]
    ln_biases: list[np.ndarray]
    dropout: float = 0.0

    def parameters(self) -> dict[str, np.ndarray]:
        params: dict[str, np.ndarray] = {}
        for i in range(len(self.weights)):
            params[f"ext.l{i}.w"] = self.weights[i]
            params[f"ext.l{i}.b"] = self.biases[i]
            params[f"ext.l{i}.g"] = self.ln_gains[i]
            params[f"ext.l{i}.beta"] = self.ln_biases[i]
        return params

    @property
    def in_dim(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.weights[-1].shape[1])


Extractor = Identity | Mlp3


def init_mlp3(widths: list[int], dropout: float = 0.0, seed: int = 0) -> Mlp3:
    """widths = [d_in, h1, h2, d]; three affine layers."""
    if len(widths) != 4:
        raise ModelError(f"mlp3 needs 4 widths [d_in, h1, h2, d], got {widths}")
    if not 0.0 <= dropout < 1.0:
        raise ModelError(f"dropout must be in [0, 1), got {dropout}")
    rng = np.random.default_rng(seed)
    weights, biases, gains, ln_biases = [], [], [], []
    for u, v in zip(widths[:-1], widths[1:]):
        a = np.sqrt(6.0 / (u + v))
        weights.append(rng.uniform(-a, a, size=(u, v)))
        biases.append(np.zeros(v))
        gains.append(np.ones(v))
        ln_biases.append(np.zeros(v))
    return Mlp3(weights, biases, gains, ln_biases, dropout=dropout)


@dataclass
class ExtractCache:
    inputs: list[np.ndarray]
    pre_ln: list[np.ndarray]
    xhat: list[np.ndarray]
    inv_std: list[np.ndarray]
    post_ln: list[np.ndarray]
    masks: list[np.ndarray | None]


def extract(
    extractor: Extractor,
    features: np.ndarray,
    train_mode: bool = False,
    seed: int = 0,
):
    """Map raw sample features to phi (B x d); returns (phi, cache).

    Dropout masks are drawn from `seed` only in train mode, so evaluation is
    deterministic and a train step is reproducible given its step seed.
    """
    if isinstance(extractor, Identity):
        if features.shape[1] != extractor.d:
            raise ModelError(
                f"identity extractor expects width {extractor.d}, got {features.shape[1]}"
            )
        return features, None
    if features.shape[1] != extractor.in_dim:
        raise ModelError(f"input width {features.shape[1]} != extractor {extractor.in_dim}")
    rng = np.random.default_rng([seed, 0x5EED]) if train_mode else None
    cache = ExtractCache([], [], [], [], [], [])
    h = features
    p = extractor.dropout
    for i in range(len(extractor.weights)):
        cache.inputs.append(h)
        a = h @ extractor.weights[i] + extractor.biases[i]
        mu = a.mean(axis=1, keepdims=True)
        var = a.var(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + LN_EPS)
        xhat = (a - mu) * inv_std
        y = extractor.ln_gains[i] * xhat + extractor.ln_biases[i]
        r = np.maximum(y, 0.0)
        if train_mode and p > 0.0:
            mask = (rng.random(r.shape) >= p) / (1.0 - p)
            h = r * mask
        else:
            mask = None
            h = r
        cache.pre_ln.append(a)
        cache.xhat.append(xhat)
        cache.inv_std.append(inv_std)
        cache.post_ln.append(y)
        cache.masks.append(mask)
    if not np.all(np.isfinite(h)):
        raise ModelError("non-finite extractor output")
    return h, cache


def extract_backward(extractor: Mlp3, cache: ExtractCache, d_phi: np.ndarray):
    """Gradients of `extract` for an Mlp3; returns (grads, dLoss/dfeatures)."""
    grads: dict[str, np.ndarray] = {}
    dh = d_phi
    for i in range(len(extractor.weights) - 1, -1, -1):
        if cache.masks[i] is not None:
            dh = dh * cache.masks[i]
        dy = dh * (cache.post_ln[i] > 0)
        xhat = cache.xhat[i]
        grads[f"ext.l{i}.g"] = (dy * xhat).sum(axis=0)
        grads[f"ext.l{i}.beta"] = dy.sum(axis=0)
        dxhat = dy * extractor.ln_gains[i]
        # LayerNorm backward over the feature axis.
        mean_dxhat = dxhat.mean(axis=1, keepdims=True)
        mean_dxhat_xhat = (dxhat * xhat).mean(axis=1, keepdims=True)
        da = cache.inv_std[i] * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
        grads[f"ext.l{i}.w"] = cache.inputs[i].T @ da
        grads[f"ext.l{i}.b"] = da.sum(axis=0)
        dh = da @ extractor.weights[i].T
    return grads, dh


@dataclass
class CompatModel:
    """Extractor plus classifier source; gcn=None is the baseline that uses
    averaged word vectors directly as classifier rows (forcing d == P)."""

    extractor: Extractor
    gcn: GcnStack | None
    d: int

    def parameters(self) -> dict[str, np.ndarray]:
        params = dict(self.extractor.parameters())
        if self.gcn is not None:
            params.update(self.gcn.parameters())
        return params


def classifiers(
    model: CompatModel,
    node_features: np.ndarray,
    prop: PropagationMatrix | None = None,
    graph: CompGraph | None = None,
) -> np.ndarray:
    """Classifier rows for every composition, |Y| x d.

    With a graph source, `node_features` is the K x P node matrix and the
    composition rows of the convolution output are returned. Without one,
    `node_features` is already the |Y| x P averaged-word-vector matrix.
    """
    if model.gcn is None:
        if node_features.shape[1] != model.d:
            raise ModelError(
                f"direct embedding requires d == P ({model.d} != {node_features.shape[1]})"
            )
        return node_features
    if prop is None or graph is None:
        raise ModelError("gcn classifier source needs a graph and propagation matrix")
    if model.gcn.out_dim != model.d:
        raise ModelError(f"gcn output width {model.gcn.out_dim} != model d {model.d}")
    h, _ = gcn_mod.run_forward(model.gcn, prop, node_features)
    return h[graph.comp_rows]


def score_all(phi: np.ndarray, classifier_rows: np.ndarray) -> np.ndarray:
    """Compatibility scores: entry (i, j) = phi_i . classifier_j."""
    if phi.shape[1] != classifier_rows.shape[1]:
        raise ModelError(
            f"representation width {phi.shape[1]} != classifier width {classifier_rows.shape[1]}"
        )
    return phi @ classifier_rows.T


def loss_and_grad(scores: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over seen-composition columns and its gradient.

    Row-wise max subtraction keeps the softmax stable; the gradient is
    (softmax - onehot) / batch, so each gradient row sums to zero.
    """
    b, n = scores.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (b,):
        raise ModelError(f"expected {b} labels, got shape {labels.shape}")
    if b and (labels.min() < 0 or labels.max() >= n):
        raise ModelError("label index out of range")
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    z = exp.sum(axis=1, keepdims=True)
    rows = np.arange(b)
    loss = float(np.mean(np.log(z[rows, 0]) - shifted[rows, labels]))
    grad = exp / z
    grad[rows, labels] -= 1.0
    grad /= b
    return loss, grad


def predict(scores: np.ndarray) -> np.ndarray:
    """Argmax candidate per row; ties break to the lowest candidate index."""
    if scores.shape[1] == 0:
        raise ModelError("no candidates to predict over")
    return np.argmax(scores, axis=1)


# ---------------------------------------------------------------------------
# Model config file: "key=value" lines, written by train and read by eval.

CONFIG_KEYS = (
    "extractor.variant",
    "extractor.widths",
    "extractor.dropout",
    "gcn.mode",
    "gcn.widths",
    "gcn.alpha",
    "gcn.lambda",
    "graph.variant",
    "embeddings.sources",
)


@dataclass
class ModelConfig:
    extractor_variant: str = "mlp3"
    extractor_widths: tuple[int, ...] = ()
    extractor_dropout: float = 0.0
    gcn_mode: str = "gcn"
    gcn_widths: tuple[int, ...] = ()
    gcn_alpha: float = 0.1
    gcn_lambda: float = 0.5
    graph_variant: str = "d"
    embedding_sources: tuple[str, ...] = ()

    def format(self) -> str:
        lines = [
            f"extractor.variant={self.extractor_variant}",
            "extractor.widths=" + ",".join(str(w) for w in self.extractor_widths),
            f"extractor.dropout={self.extractor_dropout!r}",
            f"gcn.mode={self.gcn_mode}",
            "gcn.widths=" + ",".join(str(w) for w in self.gcn_widths),
            f"gcn.alpha={self.gcn_alpha!r}",
            f"gcn.lambda={self.gcn_lambda!r}",
            f"graph.variant={self.graph_variant}",
            "embeddings.sources=" + ",".join(self.embedding_sources),
        ]
        return "\n".join(lines) + "\n"


def parse_model_config(path: str | Path) -> ModelConfig:
    path = Path(path)
    if not path.is_file():
        raise ModelError(f"missing model config: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ModelError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        if key not in CONFIG_KEYS:
            raise ModelError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value

    def ints(text: str) -> tuple[int, ...]:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())

    cfg = ModelConfig()
    cfg.extractor_variant = values.get("extractor.variant", cfg.extractor_variant)
    cfg.extractor_widths = ints(values.get("extractor.widths", ""))
    cfg.extractor_dropout = float(values.get("extractor.dropout", cfg.extractor_dropout))
    cfg.gcn_mode = values.get("gcn.mode", cfg.gcn_mode)
    cfg.gcn_widths = ints(values.get("gcn.widths", ""))
    cfg.gcn_alpha = float(values.get("gcn.alpha", cfg.gcn_alpha))
    cfg.gcn_lambda = float(values.get("gcn.lambda", cfg.gcn_lambda))
    cfg.graph_variant = values.get("graph.variant", cfg.graph_variant)
    cfg.embedding_sources = tuple(
        tok for tok in values.get("embeddings.sources", "").split(",") if tok
    )
    if cfg.extractor_variant not in ("identity", "mlp3"):
        raise ModelError(f"unknown extractor variant {cfg.extractor_variant!r}")
    return cfg


def build_model(config: ModelConfig, d_in: int, p_dim: int, seed: int = 0) -> CompatModel:
    """Construct extractor and classifier source from a parsed config."""
    variant = GraphVariant.from_letter(config.graph_variant)
    direct = variant is GraphVariant.DIRECT_EMBEDDING

    if config.extractor_variant == "identity":
        d = p_dim if direct else d_in
        extractor: Extractor = Identity(d=d)
        if direct and d_in != p_dim:
            raise ModelError(
                f"direct embedding with identity extractor needs d_in == P "
                f"({d_in} != {p_dim})"
            )
    else:
        widths = list(config.extractor_widths)
        if not widths:
            raise ModelError("mlp3 extractor needs extractor.widths")
        if widths[0] != d_in:
            raise ModelError(f"extractor input width {widths[0]} != feature dim {d_in}")
        d = widths[-1]
        if direct and d != p_dim:
            raise ModelError(f"direct embedding requires extractor output == P ({d} != {p_dim})")
        extractor = init_mlp3(widths, dropout=config.extractor_dropout, seed=seed)

    if direct:
        return CompatModel(extractor=extractor, gcn=None, d=p_dim)

    widths = list(config.gcn_widths)
    if not widths:
        raise ModelError("gcn classifier source needs gcn.widths")
    if widths[0] != p_dim:
        raise ModelError(f"gcn input width {widths[0]} != embedding dim {p_dim}")
    if widths[-1] != d:
        raise ModelError(f"gcn output width {widths[-1]} != extractor output {d}")
    stack = gcn_mod.init_params(
        widths,
        mode=config.gcn_mode,
        seed=seed + 1,
        alpha=config.gcn_alpha,
        lam=config.gcn_lambda,
        d=d,
    )
    return CompatModel(extractor=extractor, gcn=stack, d=d)
