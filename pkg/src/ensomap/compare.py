"""Pairwise comparison of run distributions: exact discrete optimal
transport, the bootstrap vector-field formulation of a transition, and
annotation-level transition (Sankey) matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from . import geometry
from .distribution import DistributionError, KdeResult, RunDistribution, _scott_bandwidth, kde


class CompareError(ValueError):
    pass


@dataclass
class TransportPlan:
    pairs: list[tuple[int, int, float]]  # (source idx, target idx, mass)
    cost: float


@dataclass
class VectorField:
    origin: tuple[float, float]
    extent: tuple[float, float]
    n: int
    vectors: np.ndarray  # (n, n, 2), row-major over (yi, xi)
    support_mask: np.ndarray  # (n, n) bool

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x0, y0 = self.origin
        ex, ey = self.extent
        xs = x0 + (np.arange(self.n) + 0.5) * ex / self.n
        ys = y0 + (np.arange(self.n) + 0.5) * ey / self.n
        return xs, ys


@dataclass
class TransitionMatrix:
    regions: list[str]  # annotation ids + "unannotated"
    flows: np.ndarray  # (len(regions), len(regions)), sums to 1

    def totals_per_source(self) -> np.ndarray:
        return self.flows.sum(axis=1)


def _euclidean_cost(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=2))


def optimal_transport(A: np.ndarray, B: np.ndarray) -> TransportPlan:
    """Exact minimum-cost transport between uniform-weighted point sets.

    Equal sizes reduce to an assignment problem; unequal sizes solve the
    transport LP on collapsed (deduplicated) supports and expand the plan
    back to point indices deterministically.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if len(A) == 0 or len(B) == 0:
        raise CompareError("empty point set")

    na, nb = len(A), len(B)
    if na == nb:
        C = _euclidean_cost(A, B)
        rows, cols = linear_sum_assignment(C)
        mass = 1.0 / na
        pairs = [(int(r), int(c), mass) for r, c in zip(rows, cols)]
        cost = float(C[rows, cols].sum()) * mass
        return TransportPlan(pairs=pairs, cost=cost)

    # collapse duplicates so the LP stays small (points sit on node positions)
    ua, inv_a = np.unique(A, axis=0, return_inverse=True)
    ub, inv_b = np.unique(B, axis=0, return_inverse=True)
    wa = np.bincount(inv_a).astype(float) / na
    wb = np.bincount(inv_b).astype(float) / nb
    ka, kb = len(ua), len(ub)
    C = _euclidean_cost(ua, ub)

    # transport LP: min c.f  s.t. row sums = wa, col sums = wb
    A_eq = np.zeros((ka + kb, ka * kb))
    for i in range(ka):
        A_eq[i, i * kb : (i + 1) * kb] = 1.0
    for j in range(kb):
        A_eq[ka + j, j::kb] = 1.0
    res = linprog(
        C.ravel(), A_eq=A_eq[:-1], b_eq=np.concatenate([wa, wb])[:-1],
        bounds=(0, None), method="highs",
    )
    if not res.success:
        raise CompareError(f"transport LP failed: {res.message}")
    F = res.x.reshape(ka, kb)
    cost = float(np.sum(F * C))

    # expand support-level flows to per-point pairs in ascending index order
    src_of = [np.flatnonzero(inv_a == i).tolist() for i in range(ka)]
    tgt_of = [np.flatnonzero(inv_b == j).tolist() for j in range(kb)]
    src_left = np.full(na, 1.0 / na)
    tgt_left = np.full(nb, 1.0 / nb)
    pairs: list[tuple[int, int, float]] = []
    tol = 1e-12
    for i in range(ka):
        for j in range(kb):
            flow = F[i, j]
            if flow <= tol:
                continue
            si = 0
            ti = 0
            while flow > tol:
                while si < len(src_of[i]) and src_left[src_of[i][si]] <= tol:
                    si += 1
                while ti < len(tgt_of[j]) and tgt_left[tgt_of[j][ti]] <= tol:
                    ti += 1
                s, t = src_of[i][si], tgt_of[j][ti]
                m = min(flow, src_left[s], tgt_left[t])
                pairs.append((int(s), int(t), float(m)))
                src_left[s] -= m
                tgt_left[t] -= m
                flow -= m
    return TransportPlan(pairs=pairs, cost=cost)


def _mean_displacements(A: np.ndarray, B: np.ndarray, plan: TransportPlan) -> tuple[np.ndarray, np.ndarray]:
    """Per-source mean displacement, mass-weighted over the plan."""
    disp = np.zeros((len(A), 2))
    mass = np.zeros(len(A))
    for s, t, m in plan.pairs:
        disp[s] += m * (B[t] - A[s])
        mass[s] += m
    used = mass > 0
    disp[used] /= mass[used, None]
    return A[used], disp[used]


def _idw_grid(
    sources: np.ndarray,
    vectors: np.ndarray,
    origin: tuple[float, float],
    extent: tuple[float, float],
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-distance interpolation of scattered vectors onto an n x n
    grid; cells with no source within 2 cell widths are masked."""
    x0, y0 = origin
    ex, ey = extent
    xs = x0 + (np.arange(n) + 0.5) * ex / n
    ys = y0 + (np.arange(n) + 0.5) * ey / n
    cutoff = 2.0 * max(ex / n, ey / n)
    field = np.zeros((n, n, 2))
    mask = np.zeros((n, n), dtype=bool)
    for yi in range(n):
        for xi in range(n):
            d = np.hypot(sources[:, 0] - xs[xi], sources[:, 1] - ys[yi])
            near = d <= cutoff
            if not near.any():
                continue
            dn = d[near]
            if np.any(dn < 1e-12):
                w = (dn < 1e-12).astype(float)
            else:
                w = 1.0 / dn**2
            field[yi, xi] = (w[:, None] * vectors[near]).sum(axis=0) / w.sum()
            mask[yi, xi] = True
    return field, mask


def _shared_box(points_list: list[np.ndarray]) -> tuple[tuple[float, float], tuple[float, float]]:
    allp = np.concatenate(points_list, axis=0)
    lo = allp.min(axis=0)
    hi = allp.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    return (float(lo[0]), float(lo[1])), (float(span[0]), float(span[1]))


def bootstrap_vector_field(
    R1: RunDistribution | np.ndarray,
    R2: RunDistribution | np.ndarray,
    k: int = 20,
    n: int = 16,
    seed: int = 0,
    box: tuple[tuple[float, float], tuple[float, float]] | None = None,
) -> VectorField:
    """Bootstrap-averaged transition field from R1 to R2.

    Per replicate: resample both distributions with replacement to their
    own sizes, solve exact OT, average each source point's target
    displacements, and interpolate onto the grid. Masked cells are
    averaged only over replicates that support them.
    """
    P1 = R1.points if isinstance(R1, RunDistribution) else np.asarray(R1, dtype=float)
    P2 = R2.points if isinstance(R2, RunDistribution) else np.asarray(R2, dtype=float)
    if len(P1) < 2 or len(P2) < 2:
        raise CompareError("degenerate distribution")
    if k < 1:
        raise CompareError("bootstrap count must be >= 1")

    if box is None:
        origin, extent = _shared_box([P1, P2])
    else:
        origin, extent = box

    acc = np.zeros((n, n, 2))
    counts = np.zeros((n, n))
    for i in range(k):
        rng = np.random.default_rng([seed, i])
        s1 = P1[rng.integers(0, len(P1), size=len(P1))]
        s2 = P2[rng.integers(0, len(P2), size=len(P2))]
        plan = optimal_transport(s1, s2)
        src, disp = _mean_displacements(s1, s2, plan)
        field, mask = _idw_grid(src, disp, origin, extent, n)
        acc += field
        counts += mask

    supported = counts > 0
    vectors = np.zeros((n, n, 2))
    vectors[supported] = acc[supported] / counts[supported, None]
    return VectorField(origin=origin, extent=extent, n=n, vectors=vectors, support_mask=supported)


def transition_matrix(
    R1: RunDistribution,
    R2: RunDistribution,
    annotations: list,
    k: int = 20,
    seed: int = 0,
) -> TransitionMatrix:
    """Bootstrap-averaged transported mass between annotation regions.

    Containment uses the even-odd/boundary-inside rule; points in
    overlapping annotations are attributed to the lowest created_order.
    """
    P1, P2 = R1.points, R2.points
    if len(P1) < 2 or len(P2) < 2:
        raise CompareError("degenerate distribution")

    anns = sorted(annotations, key=lambda a: a.created_order)
    region_ids = [str(a.id) for a in anns] + ["unannotated"]

    def classify(points: np.ndarray) -> np.ndarray:
        out = np.full(len(points), len(anns), dtype=int)
        for pi, (x, y) in enumerate(points):
            for ai, a in enumerate(anns):
                if geometry.point_in_ring(x, y, np.asarray(a.vertices, dtype=float)):
                    out[pi] = ai
                    break
        return out

    m = len(region_ids)
    flows = np.zeros((m, m))
    for i in range(k):
        rng = np.random.default_rng([seed, i])
        s1 = P1[rng.integers(0, len(P1), size=len(P1))]
        s2 = P2[rng.integers(0, len(P2), size=len(P2))]
        plan = optimal_transport(s1, s2)
        c1 = classify(s1)
        c2 = classify(s2)
        for s, t, mass in plan.pairs:
            flows[c1[s], c2[t]] += mass
    flows /= flows.sum()
    return TransitionMatrix(regions=region_ids, flows=flows)


def side_by_side(
    R1: RunDistribution,
    R2: RunDistribution,
    grid_res: int = 128,
    bandwidth: tuple[float, float] | None = None,
) -> tuple[KdeResult, KdeResult]:
    """Both KDEs on an identical grid over the union bounding box padded
    by 3 bandwidths, so contours are visually comparable."""
    for R in (R1, R2):
        if len(np.unique(R.points, axis=0)) < 2:
            raise DistributionError("degenerate distribution")
    h1 = bandwidth if bandwidth is not None else _scott_bandwidth(R1.points)
    h2 = bandwidth if bandwidth is not None else _scott_bandwidth(R2.points)
    hx = max(h1[0], h2[0])
    hy = max(h1[1], h2[1])
    allp = np.concatenate([R1.points, R2.points], axis=0)
    x0, y0 = allp.min(axis=0)
    x1, y1 = allp.max(axis=0)
    box = (x0 - 3 * hx, y0 - 3 * hy, x1 + 3 * hx, y1 + 3 * hy)
    k1 = kde(R1, grid_res=grid_res, bandwidth=h1, box=box)
    k2 = kde(R2, grid_res=grid_res, bandwidth=h2, box=box)
    return k1, k2
