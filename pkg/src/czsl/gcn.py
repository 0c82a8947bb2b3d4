"""Graph convolution stacks with exact hand-written reverse-mode gradients.

Plain mode ("gcn"), layer weights W_l:
    H_0 = E
    H_{l+1} = relu(P @ H_l @ W_l)        relu omitted on the final layer

Residual mode ("gcnii"), square hidden weights plus an input projection:
    H_0 = E @ W_in
    M_l  = (1 - alpha) * P @ H_{l-1} + alpha * H_0
    H_l  = relu((1 - beta_l) * M_l + beta_l * (M_l @ W_l))   hidden layers
    H_N  = M_N @ W_N                                          output layer
    beta_l = ln(lam / l + 1)

The final layer of either mode skips the nonlinearity so classifier rows can
take both signs. relu'(0) = 0 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ModelError
from .graph import PropagationMatrix

MODES = ("gcn", "gcnii")


@dataclass
class GcnStack:
    mode: str
    layers: list[np.ndarray]
    input_projection: np.ndarray | None = None
    alpha: float = 0.1
    lam: float = 0.5
    betas: tuple[float, ...] = ()

    def parameters(self) -> dict[str, np.ndarray]:
        params = {f"gcn.layer{i}": w for i, w in enumerate(self.layers)}
        if self.input_projection is not None:
            params["gcn.input_projection"] = self.input_projection
        return params

    @property
    def in_dim(self) -> int:
        if self.mode == "gcnii":
            return int(self.input_projection.shape[0])
        return int(self.layers[0].shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.layers[-1].shape[1])


@dataclass
class GcnCache:
    mode: str
    prop: sparse.csr_array
    agg: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    e: np.ndarray | None = None
    h0: np.ndarray | None = None


def _glorot(rng: np.random.Generator, u: int, v: int) -> np.ndarray:
    a = math.sqrt(6.0 / (u + v))
    return rng.uniform(-a, a, size=(u, v))


def init_params(
    widths: list[int],
    mode: str = "gcn",
    seed: int = 0,
    alpha: float = 0.1,
    lam: float = 0.5,
    d: int | None = None,
) -> GcnStack:
    """Seeded uniform Glorot initialization for a width chain.

    In "gcn" mode each adjacent width pair is one layer. In "gcnii" mode the
    first pair is the input projection and the rest are convolution layers,
    so all interior widths must share one hidden size.
    """
    if mode not in MODES:
        raise ModelError(f"unknown gcn mode {mode!r}")
    if any(w <= 0 for w in widths):
        raise ModelError(f"widths must be positive, got {widths}")
    if d is not None and widths[-1] != d:
        raise ModelError(f"final width {widths[-1]} != declared output dimension {d}")
    rng = np.random.default_rng(seed)
    if mode == "gcn":
        if len(widths) < 2:
            raise ModelError("gcn mode needs at least two widths")
        layers = [_glorot(rng, widths[i], widths[i + 1]) for i in range(len(widths) - 1)]
        return GcnStack(mode="gcn", layers=layers)
    if len(widths) < 3:
        raise ModelError("gcnii mode needs at least three widths (projection + one layer)")
    hidden = widths[1:-1]
    if any(w != hidden[0] for w in hidden):
        raise ModelError(f"gcnii hidden widths must all match, got {hidden}")
    projection = _glorot(rng, widths[0], widths[1])
    layers = [_glorot(rng, widths[i], widths[i + 1]) for i in range(1, len(widths) - 1)]
    betas = tuple(math.log(lam / (i + 1) + 1.0) for i in range(len(layers)))
    return GcnStack(
        mode="gcnii",
        layers=layers,
        input_projection=projection,
        alpha=alpha,
        lam=lam,
        betas=betas,
    )


def _check_finite(z: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(z)):
        raise ModelError(f"non-finite intermediate in {where}")


def forward(stack: GcnStack, prop: PropagationMatrix, e: np.ndarray):
    """Plain-mode forward pass; returns (H_N, cache for backward)."""
    if stack.mode != "gcn":
        raise ModelError(f"forward requires mode 'gcn', stack is {stack.mode!r}")
    if e.shape[1] != stack.in_dim:
        raise ModelError(f"feature width {e.shape[1]} != first layer input {stack.in_dim}")
    if e.shape[0] != prop.K:
        raise ModelError(f"feature rows {e.shape[0]} != graph size {prop.K}")
    p = prop.matrix
    cache = GcnCache(mode="gcn", prop=p)
    h = e
    last = len(stack.layers) - 1
    for l, w in enumerate(stack.layers):
        a = p @ h
        z = a @ w
        _check_finite(z, f"gcn layer {l}")
        cache.agg.append(a)
        cache.pre.append(z)
        h = np.maximum(z, 0.0) if l < last else z
    return h, cache


def forward_gcnii(stack: GcnStack, prop: PropagationMatrix, e: np.ndarray):
    """Residual-mode forward pass; returns (H_N, cache for backward)."""
    if stack.mode != "gcnii":
        raise ModelError(f"forward_gcnii requires mode 'gcnii', stack is {stack.mode!r}")
    if e.shape[1] != stack.in_dim:
        raise ModelError(f"feature width {e.shape[1]} != projection input {stack.in_dim}")
    if e.shape[0] != prop.K:
        raise ModelError(f"feature rows {e.shape[0]} != graph size {prop.K}")
    p = prop.matrix
    h0 = e @ stack.input_projection
    cache = GcnCache(mode="gcnii", prop=p, e=e, h0=h0)
    h = h0
    last = len(stack.layers) - 1
    for i, w in enumerate(stack.layers):
        m = (1.0 - stack.alpha) * (p @ h) + stack.alpha * h0
        if i < last:
            beta = stack.betas[i]
            z = (1.0 - beta) * m + beta * (m @ w)
            h = np.maximum(z, 0.0)
        else:
            z = m @ w
            h = z
        _check_finite(z, f"gcnii layer {i}")
        cache.agg.append(m)
        cache.pre.append(z)
    return h, cache


def run_forward(stack: GcnStack, prop: PropagationMatrix, e: np.ndarray):
    return forward(stack, prop, e) if stack.mode == "gcn" else forward_gcnii(stack, prop, e)


def backward(stack: GcnStack, cache: GcnCache, d_out: np.ndarray):
    """Exact gradients of the forward pass.

    Returns (grads keyed like `parameters()`, dLoss/dE). `d_out` is the
    upstream gradient with respect to H_N.
    """
    if cache.pre and d_out.shape != cache.pre[-1].shape:
        raise ModelError(
            f"stale cache: upstream gradient {d_out.shape} != output {cache.pre[-1].shape}"
        )
    if cache.mode != stack.mode:
        raise ModelError("cache mode does not match stack mode")
    grads: dict[str, np.ndarray] = {}
    p = cache.prop
    last = len(stack.layers) - 1

    if stack.mode == "gcn":
        dh = d_out
        for l in range(last, -1, -1):
            dz = dh if l == last else dh * (cache.pre[l] > 0)
            grads[f"gcn.layer{l}"] = cache.agg[l].T @ dz
            dh = p.T @ (dz @ stack.layers[l].T)
        return grads, dh

    dh = d_out
    dh0 = np.zeros_like(cache.h0)
    for l in range(last, -1, -1):
        w = stack.layers[l]
        m = cache.agg[l]
        if l == last:
            dz = dh
            grads[f"gcn.layer{l}"] = m.T @ dz
            dm = dz @ w.T
        else:
            beta = stack.betas[l]
            dz = dh * (cache.pre[l] > 0)
            grads[f"gcn.layer{l}"] = beta * (m.T @ dz)
            dm = (1.0 - beta) * dz + beta * (dz @ w.T)
        dh = (1.0 - stack.alpha) * (p.T @ dm)
        dh0 += stack.alpha * dm
    # dh now carries the chain gradient into H_0; add the residual paths.
    dh0 += dh
    grads["gcn.input_projection"] = cache.e.T @ dh0
    de = dh0 @ stack.input_projection.T
    return grads, de
