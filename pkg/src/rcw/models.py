"""Deterministic forward inference for fixed GCN and APPNP models.

All operations are pure functions over immutable inputs: repeated calls with
the same model and graph view produce bit-identical logits. No bias terms
and no softmax; labels are the argmax of raw logits, with ties broken toward
the smallest class index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ModelCompatError, NumericalError, ParameterError
from .graph import Graph

GCN = "gcn"
APPNP = "appnp"

# n up to this size uses dense direct solves; above it, sparse LU; above
# DIRECT_SOLVE_LIMIT, damped power iteration.
DENSE_LIMIT = 256
DIRECT_SOLVE_LIMIT = 10_000
POWER_TOL = 1e-10
POWER_MAX_ITER = 100_000


class _Undefined:
    """Result of inference over an empty node set; unequal to every label."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "UNDEFINED"


UNDEFINED = _Undefined()


@dataclass(frozen=True)
class GcnLayer:
    weight: np.ndarray
    activation: str = "relu"  # relu | identity


@dataclass(frozen=True)
class GnnModel:
    """Fixed model parameters: a GCN layer stack or an APPNP (theta, alpha)."""

    kind: str
    layers: tuple[GcnLayer, ...] = ()
    theta: np.ndarray | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.kind == GCN:
            if not self.layers:
                raise ParameterError("GCN model needs at least one layer")
            for i in range(1, len(self.layers)):
                if self.layers[i].weight.shape[0] != self.layers[i - 1].weight.shape[1]:
                    raise ModelCompatError(
                        f"layer {i} input dim {self.layers[i].weight.shape[0]} does not "
                        f"chain with layer {i - 1} output {self.layers[i - 1].weight.shape[1]}"
                    )
            for layer in self.layers:
                if layer.activation not in ("relu", "identity"):
                    raise ParameterError(f"unknown activation {layer.activation!r}")
        elif self.kind == APPNP:
            if self.theta is None or self.alpha is None:
                raise ParameterError("APPNP model needs theta and alpha")
            if not 0.0 < self.alpha < 1.0:
                raise ParameterError("teleport alpha must lie strictly in (0, 1)")
        else:
            raise ParameterError(f"unknown model kind {self.kind!r}")

    @property
    def L(self) -> int:
        return len(self.layers) if self.kind == GCN else 1

    @property
    def input_dim(self) -> int:
        if self.kind == GCN:
            return self.layers[0].weight.shape[0]
        return self.theta.shape[0]

    @property
    def num_classes(self) -> int:
        if self.kind == GCN:
            return self.layers[-1].weight.shape[1]
        return self.theta.shape[1]

    def check_graph(self, g: Graph) -> None:
        if g.F != self.input_dim:
            raise ModelCompatError(
                f"graph has F={g.F} features but the model expects {self.input_dim}"
            )


def _hat_matrices(g: Graph):
    """A_hat = A + I and its degree vector; every node keeps a self loop."""
    a_hat = g.adjacency() + sp.identity(g.num_nodes, format="csr")
    degrees = np.asarray(a_hat.sum(axis=1)).ravel()
    return a_hat, degrees


def gcn_forward(m: GnnModel, g: Graph) -> np.ndarray:
    """Layer-wise propagation with symmetric normalization.

    Each layer computes act(D^-1/2 (A+I) D^-1/2 X W); the final layer always
    emits raw logits (identity activation).
    """
    if m.kind != GCN:
        raise ModelCompatError("gcn_forward requires a GCN model")
    m.check_graph(g)
    a_hat, deg = _hat_matrices(g)
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    prop = d_inv_sqrt @ a_hat @ d_inv_sqrt
    x = g.features
    last = len(m.layers) - 1
    for i, layer in enumerate(m.layers):
        x = prop @ (x @ layer.weight)
        if i != last and layer.activation == "relu":
            x = np.maximum(x, 0.0)
    return np.asarray(x)


def _appnp_solve(g: Graph, rhs: np.ndarray, alpha: float,
                 transpose: bool = False) -> np.ndarray:
    """Solve (I - alpha * P) y = rhs with P = D_hat^-1 (A + I).

    Direct solves up to DIRECT_SOLVE_LIMIT nodes (one factorization per
    graph view, cached, shared between plain and transpose solves), damped
    power iteration beyond that.
    """
    import scipy.linalg as sla

    n = g.num_nodes
    if n <= DIRECT_SOLVE_LIMIT:
        factor = g._solver_cache.get(alpha)
        if factor is None:
            a_hat, deg = _hat_matrices(g)
            p = sp.diags(1.0 / deg) @ a_hat
            if n <= DENSE_LIMIT:
                factor = ("dense", sla.lu_factor(np.eye(n) - alpha * p.toarray()))
            else:
                system = (sp.identity(n, format="csc") - alpha * p).tocsc()
                factor = ("sparse", spla.splu(system))
            g._solver_cache[alpha] = factor
        kind, lu = factor
        if kind == "dense":
            return sla.lu_solve(lu, rhs, trans=1 if transpose else 0)
        return lu.solve(rhs, trans="T" if transpose else "N")
    a_hat, deg = _hat_matrices(g)
    p = sp.diags(1.0 / deg) @ a_hat
    if transpose:
        p = p.T.tocsr()
    y = rhs.copy()
    for _ in range(POWER_MAX_ITER):
        y_next = rhs + alpha * (p @ y)
        delta = float(np.max(np.abs(y_next - y)))
        y = y_next
        if delta <= POWER_TOL:
            return y
    raise NumericalError("power iteration did not converge", residual=delta)


def appnp_forward(m: GnnModel, g: Graph) -> np.ndarray:
    """Closed-form propagation: (1-alpha) (I - alpha P)^-1 X theta."""
    if m.kind != APPNP:
        raise ModelCompatError("appnp_forward requires an APPNP model")
    m.check_graph(g)
    h = g.features @ m.theta
    return (1.0 - m.alpha) * _appnp_solve(g, h, m.alpha)


def appnp_forward_power(m: GnnModel, g: Graph) -> np.ndarray:
    """Power-iteration route, exposed for cross-checking the direct solve."""
    if m.kind != APPNP:
        raise ModelCompatError("appnp_forward_power requires an APPNP model")
    m.check_graph(g)
    n = g.num_nodes
    a_hat, deg = _hat_matrices(g)
    p = sp.diags(1.0 / deg) @ a_hat
    rhs = g.features @ m.theta
    y = rhs.copy()
    delta = np.inf
    for _ in range(POWER_MAX_ITER):
        y_next = rhs + m.alpha * (p @ y)
        delta = float(np.max(np.abs(y_next - y)))
        y = y_next
        if delta <= POWER_TOL:
            return (1.0 - m.alpha) * y
    raise NumericalError("power iteration did not converge", residual=delta)


def forward(m: GnnModel, g: Graph) -> np.ndarray:
    return gcn_forward(m, g) if m.kind == GCN else appnp_forward(m, g)


def infer(m: GnnModel, v: int, g: Graph):
    """Predicted label of node v: argmax over its logits row.

    Ties go to the smallest class index. An empty graph view has no rows to
    score, so the result is the distinguished UNDEFINED value rather than a
    label.
    """
    if g.num_nodes == 0:
        return UNDEFINED
    if not 0 <= v < g.num_nodes:
        raise ParameterError(f"node {v} out of range (n={g.num_nodes})")
    logits = forward(m, g)
    return int(np.argmax(logits[v]))


def infer_all(m: GnnModel, vs, g: Graph) -> dict[int, int]:
    """Labels for several nodes from a single forward pass."""
    logits = forward(m, g)
    out = {}
    for v in vs:
        if not 0 <= v < g.num_nodes:
            raise ParameterError(f"node {v} out of range (n={g.num_nodes})")
        out[int(v)] = int(np.argmax(logits[v]))
    return out


def pagerank_vector(g: Graph, v: int, alpha: float) -> np.ndarray:
    """Row v of Pi = (1-alpha)(I - alpha P)^-1; nonnegative, sums to one."""
    if not 0 <= v < g.num_nodes:
        raise ParameterError(f"node {v} out of range (n={g.num_nodes})")
    if not 0.0 < alpha < 1.0:
        raise ParameterError("teleport alpha must lie strictly in (0, 1)")
    e = np.zeros(g.num_nodes)
    e[v] = 1.0
    # Row of the matrix = transpose solve against the unit vector.
    return (1.0 - alpha) * _appnp_solve(g, e, alpha, transpose=True)


# ---------------------------------------------------------------------------
# Model files


def model_to_dict(m: GnnModel) -> dict:
    if m.kind == GCN:
        return {
            "kind": GCN,
            "layers": [
                {"weight": layer.weight.tolist(), "activation": layer.activation}
                for layer in m.layers
            ],
        }
    return {"kind": APPNP, "alpha": m.alpha, "theta": m.theta.tolist()}


def model_from_dict(d: dict) -> GnnModel:
    kind = d.get("kind")
    if kind == GCN:
        layers = tuple(
            GcnLayer(
                weight=_frozen_array(layer["weight"]),
                activation=layer.get("activation", "relu"),
            )
            for layer in d["layers"]
        )
        return GnnModel(kind=GCN, layers=layers)
    if kind == APPNP:
        return GnnModel(kind=APPNP, theta=_frozen_array(d["theta"]),
                        alpha=float(d["alpha"]))
    raise ParameterError(f"unknown model kind {kind!r}")


def _frozen_array(data) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    arr.setflags(write=False)
    return arr


def save_model(m: GnnModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m), sort_keys=True) + "\n")


def load_model(path) -> GnnModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def synth_model(kind: str, num_features: int, num_classes: int,
                seed: int = 0, alpha: float = 0.1,
                hidden: tuple[int, ...] = (16,)) -> GnnModel:
    """Deterministic toy weights so demos and tests need no trained model."""
    rng = np.random.default_rng(seed)
    if kind == APPNP:
        theta = _frozen_array(rng.normal(size=(num_features, num_classes)))
        return GnnModel(kind=APPNP, theta=theta, alpha=alpha)
    if kind == GCN:
        dims = (num_features, *hidden, num_classes)
        layers = []
        for i in range(len(dims) - 1):
            w = _frozen_array(rng.normal(size=(dims[i], dims[i + 1])))
            act = "relu" if i < len(dims) - 2 else "identity"
            layers.append(GcnLayer(weight=w, activation=act))
        return GnnModel(kind=GCN, layers=tuple(layers))
    raise ParameterError(f"unknown model kind {kind!r}")
