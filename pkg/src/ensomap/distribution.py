"""Distributional abstraction of model runs: each retained time step is
mapped to the embedding position of its BMU, giving a 2D point set whose
KDE serves as the run's fingerprint. Contours are highest-density regions
holding 25/50/75% of the probability mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from . import geometry
from .data import EnsembleDataset, flatten_samples
from .embed import Embedding
from .som import SomGrid, bmu_batch


class DistributionError(ValueError):
    pass


@dataclass
class RunDistribution:
    points: np.ndarray  # (n, 2) embedding-space positions
    member_index: np.ndarray  # (n,) provenance
    year: np.ndarray
    month: np.ndarray
    members: list[str] = field(default_factory=list)  # selector echo
    months: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class KdeResult:
    density: np.ndarray  # (g, g), integrates to 1 over the box (midpoint rule)
    x_edges: np.ndarray  # (g,) cell-center x coordinates
    y_edges: np.ndarray  # (g,) cell-center y coordinates
    bandwidth: tuple[float, float]
    contours: dict[float, list[np.ndarray]]  # mass fraction -> polygon list
    thresholds: dict[float, float]


@dataclass
class AnnotationBreakdown:
    fractions: dict[str, float]  # annotation id -> fraction of points inside
    unannotated: float


def project_runs(
    dataset: EnsembleDataset,
    members: list[int] | list[str],
    months: set[int] | None,
    grid: SomGrid,
    embedding: Embedding,
) -> RunDistribution:
    """Pool the BMU embedding positions of every retained time step of the
    selected members."""
    if not members:
        raise DistributionError("empty member selection")
    member_idx = []
    for m in members:
        if isinstance(m, str):
            found = [i for i, mm in enumerate(dataset.members) if mm.key == m or f"{mm.gcm}_{mm.ssp}" == m]
            if not found:
                raise DistributionError(f"unknown member {m!r}")
            member_idx.append(found[0])
        else:
            member_idx.append(int(m))

    sm = flatten_samples(dataset, months)
    keep = np.isin(sm.member_index, member_idx)
    if not keep.any():
        raise DistributionError("selection matches no time steps")
    X = sm.X[keep]
    best, _ = bmu_batch(grid, X)
    return RunDistribution(
        points=embedding.positions[best].copy(),
        member_index=sm.member_index[keep],
        year=sm.year[keep],
        month=sm.month[keep],
        members=[dataset.members[i].key for i in member_idx],
        months=sorted(months) if months else list(dataset.months),
    )


def _scott_bandwidth(points: np.ndarray) -> tuple[float, float]:
    n = len(points)
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    floor = 1e-6 * max(diag, 1e-12)
    sx = max(float(points[:, 0].std()), floor)
    sy = max(float(points[:, 1].std()), floor)
    factor = n ** (-1.0 / 6.0)
    return sx * factor, sy * factor


def kde(
    dist: RunDistribution | np.ndarray,
    grid_res: int = 128,
    bandwidth: tuple[float, float] | None = None,
    box: tuple[float, float, float, float] | None = None,
) -> KdeResult:
    """Product-Gaussian KDE on a grid over the (padded) bounding box.

    The density grid is renormalized so the midpoint-rule integral over
    the box is exactly 1; mass-fraction contours are then consistent with
    the grid itself. ``box`` overrides the automatic bounding box (used
    for side-by-side comparisons on a shared frame).
    """
    points = dist.points if isinstance(dist, RunDistribution) else np.asarray(dist, dtype=float)
    if len(np.unique(points, axis=0)) < 2:
        raise DistributionError("degenerate distribution: fewer than 2 distinct points")

    hx, hy = bandwidth if bandwidth is not None else _scott_bandwidth(points)
    if box is None:
        x0, y0 = points.min(axis=0)
        x1, y1 = points.max(axis=0)
        x0, x1 = x0 - 3 * hx, x1 + 3 * hx
        y0, y1 = y0 - 3 * hy, y1 + 3 * hy
    else:
        x0, y0, x1, y1 = box

    g = grid_res
    xs = np.linspace(x0, x1, g)
    ys = np.linspace(y0, y1, g)
    dx = (x1 - x0) / (g - 1)
    dy = (y1 - y0) / (g - 1)

    # separable evaluation: (g, n) kernels per axis
    kx = np.exp(-0.5 * ((xs[:, None] - points[None, :, 0]) / hx) ** 2)
    ky = np.exp(-0.5 * ((ys[:, None] - points[None, :, 1]) / hy) ** 2)
    density = (ky @ kx.T) / (len(points) * 2 * np.pi * hx * hy)  # density[yi, xi]

    total = density.sum() * dx * dy
    if total <= 0:
        raise DistributionError("degenerate density")
    density = density / total

    contours: dict[float, list[np.ndarray]] = {}
    thresholds: dict[float, float] = {}
    cell_mass = density * dx * dy
    order = np.argsort(density.ravel())[::-1]
    cum = np.cumsum(cell_mass.ravel()[order])
    for q in (0.25, 0.50, 0.75):
        k = int(np.searchsorted(cum, q))
        k = min(k, len(order) - 1)
        tau = float(density.ravel()[order[k]])
        thresholds[q] = tau
        polys = []
        for c in measure.find_contours(density, tau):
            # contour rows are (yi, xi) grid indices; map to embedding coords
            polys.append(np.column_stack([x0 + c[:, 1] * dx, y0 + c[:, 0] * dy]))
        contours[q] = polys

    return KdeResult(
        density=density,
        x_edges=xs,
        y_edges=ys,
        bandwidth=(hx, hy),
        contours=contours,
        thresholds=thresholds,
    )


def annotation_breakdown(dist: RunDistribution, annotations: list) -> AnnotationBreakdown:
    """Fraction of points inside each annotation polygon (even-odd rule,
    boundary inside); overlapping annotations each count the point."""
    n = len(dist.points)
    if n == 0:
        return AnnotationBreakdown(fractions={}, unannotated=1.0)
    fractions: dict[str, float] = {}
    any_hit = np.zeros(n, dtype=bool)
    for ann in annotations:
        ring = np.asarray(ann.vertices, dtype=float)
        hits = np.array(
            [geometry.point_in_ring(x, y, ring) for x, y in dist.points], dtype=bool
        )
        fractions[str(ann.id)] = float(hits.mean())
        any_hit |= hits
    return AnnotationBreakdown(fractions=fractions, unannotated=float(1.0 - any_hit.mean()))
