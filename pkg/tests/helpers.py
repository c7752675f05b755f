"""Shared test oracles: finite differences and small brute-force utilities."""

from __future__ import annotations

import numpy as np

from sgmi.autodiff import Parameter, Tape, Tensor, backward


def finite_difference(f, arrays: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradient of scalar f with respect to each array."""
    grads = []
    for k, base in enumerate(arrays):
        g = np.zeros_like(base)
        flat = base.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = f(arrays)
            flat[i] = keep - h
            down = f(arrays)
            flat[i] = keep
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def tape_gradients(build, arrays: list[np.ndarray]) -> list[np.ndarray]:
    """Analytic gradients of scalar build(tensors) with respect to each array."""
    params = [Parameter(f"p{i}", a.copy()) for i, a in enumerate(arrays)]
    with Tape() as tape:
        loss = build([p.value for p in params])
        backward(tape, loss)
    return [p.grad.data.copy() for p in params]


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Elementwise |a - n| / max(|n|, 1), ignoring entries both below 1e-7."""
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(numeric), 1.0)
    rel = diff / denom
    tiny = (np.abs(analytic) < 1e-7) & (np.abs(numeric) < 1e-7)
    rel = np.where(tiny, 0.0, rel)
    return float(rel.max()) if rel.size else 0.0


def assert_gradients_match(build, arrays: list[np.ndarray], h: float = 1e-5,
                           rtol: float = 1e-4) -> None:
    """build(tensors) -> scalar Tensor; checks tape gradients against oracle."""
    analytic = tape_gradients(build, arrays)

    def value(arrs):
        return build([Tensor(a) for a in arrs]).item()

    numeric = finite_difference(value, [a.copy() for a in arrays], h)
    for k, (a, n) in enumerate(zip(analytic, numeric)):
        err = max_relative_error(a, n)
        assert err <= rtol, f"operand {k}: max relative gradient error {err:.3e} > {rtol}"


def relabel_nodes(graph, perm: np.ndarray):
    """Apply node relabeling v -> perm[v] consistently to edges and attrs."""
    from sgmi.data import Graph

    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    edges = np.stack([perm[graph.edges[:, 0]], perm[graph.edges[:, 1]]], axis=1)
    attrs = graph.node_attrs[inv] if graph.node_attrs is not None else None
    return Graph(graph.num_nodes, edges, node_attrs=attrs, label=graph.label)
