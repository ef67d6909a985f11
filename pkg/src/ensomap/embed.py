"""Anchored 2D layout of the SOM nodes (the adjusted node space).

The layout minimizes a quadratic distortion over the lattice 4-adjacency
graph, sum over edges of (||x_a - x_b|| - d_ab)^2. Anchored nodes are a
hard constraint: only the unanchored coordinates enter the optimizer, so
anchors are exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .som import SomGrid


class EmbedError(ValueError):
    pass


@dataclass(frozen=True)
class MdeConfig:
    step_size: float = 0.05
    max_iterations: int = 5000
    tolerance: float = 1e-6  # relative objective decrease


@dataclass
class Embedding:
    positions: np.ndarray  # (num_nodes, 2)
    anchors: dict[int, tuple[float, float]] = field(default_factory=dict)
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    targets: np.ndarray = field(default_factory=lambda: np.zeros(0))
    config: MdeConfig = field(default_factory=MdeConfig)
    objective: float = 0.0
    status: str = "ok"  # "ok" or "warning: ..." for degenerate anchor setups

    @property
    def num_nodes(self) -> int:
        return len(self.positions)


def build_node_graph(grid: SomGrid) -> tuple[np.ndarray, np.ndarray]:
    """Edges over 4-adjacent lattice pairs with weight-space target
    distances rescaled so the median edge target is 1."""
    r, c = grid.config.rows, grid.config.cols
    W = grid.weights
    edges = []
    for i in range(r):
        for j in range(c):
            a = i * c + j
            if j + 1 < c:
                edges.append((a, a + 1))
            if i + 1 < r:
                edges.append((a, a + c))
    edges = np.array(edges, dtype=int)
    targets = np.linalg.norm(W[edges[:, 0]] - W[edges[:, 1]], axis=1)
    med = float(np.median(targets))
    if med > 0:
        targets = targets / med
    return edges, targets


def _objective_and_grad(pos, edges, targets):
    diff = pos[edges[:, 0]] - pos[edges[:, 1]]
    dist = np.linalg.norm(diff, axis=1)
    resid = dist - targets
    obj = float(np.sum(resid**2))
    safe = np.maximum(dist, 1e-12)
    g_edge = (2.0 * resid / safe)[:, None] * diff
    grad = np.zeros_like(pos)
    np.add.at(grad, edges[:, 0], g_edge)
    np.add.at(grad, edges[:, 1], -g_edge)
    return obj, grad


def _check_connected(num_nodes: int, edges: np.ndarray) -> bool:
    if num_nodes <= 1:
        return True
    adj: list[list[int]] = [[] for _ in range(num_nodes)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == num_nodes


def _default_init(num_nodes: int, grid: SomGrid | None) -> np.ndarray:
    if grid is not None:
        pos = grid.grid_coords.astype(float)
    else:
        # circle layout: deterministic and never collinear, so the optimizer
        # is not started on a symmetric saddle of the distortion objective
        theta = 2.0 * np.pi * np.arange(num_nodes, dtype=float) / max(num_nodes, 1)
        pos = np.column_stack([np.cos(theta), np.sin(theta)])
    return _normalize_layout(pos)


def _normalize_layout(pos: np.ndarray) -> np.ndarray:
    """Center at origin and scale to unit RMS radius."""
    pos = pos - pos.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum(pos**2, axis=1))))
    if rms > 0:
        pos = pos / rms
    return pos


def mde_project(
    edges: np.ndarray,
    targets: np.ndarray,
    anchors: dict[int, tuple[float, float]] | None = None,
    init: np.ndarray | None = None,
    num_nodes: int | None = None,
    grid: SomGrid | None = None,
    config: MdeConfig = MdeConfig(),
    trace: list[float] | None = None,
) -> Embedding:
    """Minimize the edge distortion over the unanchored coordinates.

    Anchored coordinates are bit-exact in the result. With no anchors the
    final layout is re-centered and scaled to unit RMS radius to remove
    the translation/scale degeneracy.
    """
    anchors = dict(anchors or {})
    if num_nodes is None:
        num_nodes = int(edges.max()) + 1 if len(edges) else (len(init) if init is not None else 0)
    if not _check_connected(num_nodes, edges):
        raise EmbedError("graph is disconnected")

    if init is None:
        pos = _default_init(num_nodes, grid)
    else:
        pos = np.array(init, dtype=float)

    anchor_idx = np.array(sorted(anchors), dtype=int)
    anchor_pos = np.array([anchors[i] for i in sorted(anchors)], dtype=float) if anchors else np.zeros((0, 2))

    def project(p):
        if len(anchor_idx):
            p[anchor_idx] = anchor_pos
        return p

    pos = project(pos)
    status = "ok"

    if len(anchors) == num_nodes:
        # fully constrained; nothing to optimize
        return Embedding(
            positions=pos, anchors=anchors, edges=edges, targets=targets,
            config=config, objective=_objective_and_grad(pos, edges, targets)[0],
            status=status,
        )

    free_idx = np.array(
        [i for i in range(num_nodes) if i not in anchors], dtype=int
    )

    def fun(flat: np.ndarray):
        p = pos.copy()
        p[free_idx] = flat.reshape(-1, 2)
        obj, grad = _objective_and_grad(p, edges, targets)
        return obj, grad[free_idx].ravel()

    from scipy.optimize import minimize

    x0 = pos[free_idx].ravel()
    obj0 = _objective_and_grad(pos, edges, targets)[0]
    if trace is not None:
        trace.append(obj0)
        callback = lambda xk: trace.append(fun(xk)[0])
    else:
        callback = None
    # quasi-Newton over the free coordinates only; the distortion has very
    # flat valleys near optima where plain gradient descent stalls
    res = minimize(
        fun, x0, jac=True, method="L-BFGS-B", callback=callback,
        options={
            "maxiter": config.max_iterations,
            "ftol": 0.0,
            "gtol": config.tolerance * 1e-4,
        },
    )
    pos[free_idx] = res.x.reshape(-1, 2)
    obj = float(res.fun)
    if obj > obj0 + 1e-12:
        # line search guarantees descent from the start point; anything
        # else means the anchors make the objective irreducible
        pos[free_idx] = x0.reshape(-1, 2)
        obj = obj0
        status = "warning: objective cannot decrease"

    if not anchors:
        pos = _normalize_layout(pos)
        obj = _objective_and_grad(pos, edges, targets)[0]
    else:
        pos = project(pos)

    return Embedding(
        positions=pos, anchors=anchors, edges=edges, targets=targets,
        config=config, objective=obj, status=status,
    )


def update_anchor(
    embedding: Embedding, node: int, position: tuple[float, float] | None
) -> Embedding:
    """Set or clear one anchor and re-optimize from the current positions
    (warm start), so unanchored nodes move continuously."""
    if not 0 <= node < embedding.num_nodes:
        raise EmbedError(f"node index {node} out of range")
    anchors = dict(embedding.anchors)
    if position is None:
        anchors.pop(node, None)
    else:
        anchors[node] = (float(position[0]), float(position[1]))
    init = embedding.positions.copy()
    if position is not None:
        init[node] = position
    result = mde_project(
        embedding.edges,
        embedding.targets,
        anchors=anchors,
        init=init,
        num_nodes=embedding.num_nodes,
        config=embedding.config,
    )
    return result


def set_anchors(embedding: Embedding, anchors: dict[int, tuple[float, float]]) -> Embedding:
    """Replace the full anchor map and re-optimize warm-started."""
    for node in anchors:
        if not 0 <= node < embedding.num_nodes:
            raise EmbedError(f"node index {node} out of range")
    init = embedding.positions.copy()
    for node, p in anchors.items():
        init[node] = p
    return mde_project(
        embedding.edges,
        embedding.targets,
        anchors=anchors,
        init=init,
        num_nodes=embedding.num_nodes,
        config=embedding.config,
    )
