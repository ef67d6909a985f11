"""Clustering of run distributions (EMD over point sets) and of per-GCM
forcing fields (cosine distance between vector fields), plus the
per-month timeline with 1D MDS placement for the circuit-line diagram.

The 2D pre-embedding is deterministic classical MDS; density clustering
implements the HDBSCAN core: mutual-reachability distances, a
single-linkage tree, the condensed cluster tree at min_cluster_size, and
excess-of-mass cluster extraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from .compare import VectorField, bootstrap_vector_field, optimal_transport, _shared_box
from .data import EnsembleDataset
from .distribution import RunDistribution, project_runs
from .embed import Embedding
from .som import SomGrid


class ClusterError(ValueError):
    pass


@dataclass
class DistanceMatrix:
    labels: list[str]
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if not np.allclose(d, d.T, atol=1e-9):
            raise ClusterError("distance matrix not symmetric")
        if not np.all(np.isfinite(d)):
            raise ClusterError("non-finite distance")
        np.fill_diagonal(d, 0.0)
        self.d = d


@dataclass
class ClusterAssignment:
    labels: np.ndarray  # per entity, -1 = noise, else dense cluster id from 0
    embedding_2d: np.ndarray | None = None
    aggregates: dict[int, object] = field(default_factory=dict)
    mean_anomaly: dict[int, float] = field(default_factory=dict)

    @property
    def num_clusters(self) -> int:
        return int(self.labels.max()) + 1 if (self.labels >= 0).any() else 0


@dataclass
class MonthCluster:
    cluster_id: int
    position: float
    mean_anomaly: float
    entities: list[int]  # entity indices (members or GCMs)
    is_noise_singleton: bool = False


@dataclass
class MonthlyClusterTimeline:
    months: list[int]
    entity_labels: list[str]
    clusters: dict[int, list[MonthCluster]]  # month -> clusters
    lines: dict[str, list[tuple[int, int]]]  # entity label -> [(month, cluster_id)]


def emd_matrix(distributions: list[RunDistribution | np.ndarray]) -> DistanceMatrix:
    """Pairwise earth mover's distance between point distributions."""
    if len(distributions) < 2:
        raise ClusterError("need at least 2 distributions")
    pts = []
    labels = []
    for i, d in enumerate(distributions):
        p = d.points if isinstance(d, RunDistribution) else np.asarray(d, dtype=float)
        if len(p) == 0:
            raise ClusterError("empty distribution")
        pts.append(p)
        labels.append(
            "+".join(d.members) if isinstance(d, RunDistribution) and d.members else str(i)
        )
    n = len(pts)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = optimal_transport(pts[i], pts[j]).cost
    return DistanceMatrix(labels=labels, d=D)


def classical_mds(D: np.ndarray, ndim: int = 2) -> np.ndarray:
    """Deterministic classical (Torgerson) MDS; each axis's sign is fixed
    by making the largest-magnitude loading positive."""
    D = np.asarray(D, dtype=float)
    n = len(D)
    H = np.eye(n) - np.ones((n, n)) / n
    B = -0.5 * H @ (D**2) @ H
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1]
    evals = evals[order][:ndim]
    evecs = evecs[:, order][:, :ndim]
    coords = np.zeros((n, ndim))
    for k in range(ndim):
        if evals[k] > 0:
            axis = evecs[:, k] * np.sqrt(evals[k])
            pivot = int(np.argmax(np.abs(axis)))
            if axis[pivot] < 0:
                axis = -axis
            coords[:, k] = axis
    return coords


# --- density clustering core -------------------------------------------------

_LAMBDA_MAX = 1e12


def _core_distances(D: np.ndarray, min_samples: int) -> np.ndarray:
    # k-th nearest neighbor with the point itself counted
    k = min(min_samples, len(D)) - 1
    return np.sort(D, axis=1)[:, k]


def _mutual_reachability(D: np.ndarray, min_samples: int) -> np.ndarray:
    core = _core_distances(D, min_samples)
    mr = np.maximum(D, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(mr, 0.0)
    return mr


def _leaves(node: int, n: int, Z: np.ndarray) -> list[int]:
    out = []
    stack = [node]
    while stack:
        u = stack.pop()
        if u < n:
            out.append(u)
        else:
            stack.append(int(Z[u - n, 0]))
            stack.append(int(Z[u - n, 1]))
    return out


def density_cluster(D: np.ndarray, min_cluster_size: int = 3, min_samples: int = 2) -> np.ndarray:
    """Cluster labels (-1 = noise) from a distance matrix via the
    condensed single-linkage tree and excess-of-mass extraction."""
    n = len(D)
    if n < min_cluster_size:
        raise ClusterError(f"need at least min_cluster_size={min_cluster_size} entities")
    mr = _mutual_reachability(np.asarray(D, dtype=float), min_samples)
    Z = linkage(squareform(mr, checks=False), method="single")

    # condensed tree: walk top-down, dropping undersized children
    sizes = {}
    for i in range(n):
        sizes[i] = 1
    for i in range(n - 1):
        sizes[n + i] = int(Z[i, 3])

    birth: dict[int, float] = {}
    stability: dict[int, float] = {}
    children: dict[int, list[int]] = {}
    points: dict[int, list[int]] = {}
    parent_of: dict[int, int | None] = {}

    root_cluster = 0
    next_cluster = 1
    birth[root_cluster] = 0.0
    stability[root_cluster] = 0.0
    children[root_cluster] = []
    points[root_cluster] = []
    parent_of[root_cluster] = None

    root_node = 2 * n - 2
    stack = [(root_node, root_cluster)]
    order_created = [root_cluster]
    while stack:
        node, cid = stack.pop()
        if node < n:
            # isolated leaf reached while following a cluster chain
            points[cid].append(node)
            stability[cid] += _LAMBDA_MAX - birth[cid]
            continue
        row = Z[node - n]
        left, right, dist = int(row[0]), int(row[1]), float(row[2])
        lam = 1.0 / dist if dist > 0 else _LAMBDA_MAX
        ls, rs = sizes[left], sizes[right]
        big_left = ls >= min_cluster_size
        big_right = rs >= min_cluster_size
        if big_left and big_right:
            # true split: parent's points all leave here, two new clusters
            stability[cid] += sizes[node] * (lam - birth[cid])
            for child_node in (left, right):
                ncid = next_cluster
                next_cluster += 1
                birth[ncid] = lam
                stability[ncid] = 0.0
                children[ncid] = []
                points[ncid] = []
                parent_of[ncid] = cid
                children[cid].append(ncid)
                order_created.append(ncid)
                stack.append((child_node, ncid))
        elif big_left or big_right:
            big, small = (left, right) if big_left else (right, left)
            small_leaves = _leaves(small, n, Z)
            points[cid].extend(small_leaves)
            stability[cid] += len(small_leaves) * (lam - birth[cid])
            stack.append((big, cid))
        else:
            all_leaves = _leaves(node, n, Z)
            points[cid].extend(all_leaves)
            stability[cid] += len(all_leaves) * (lam - birth[cid])

    # excess of mass, children before parents; the root is never selected
    selected: dict[int, bool] = {}
    subtree_stability: dict[int, float] = {}
    for cid in reversed(order_created):
        child_sum = sum(subtree_stability[c] for c in children[cid])
        if cid == root_cluster:
            selected[cid] = False
            subtree_stability[cid] = child_sum
        elif children[cid] and child_sum > stability[cid]:
            selected[cid] = False
            subtree_stability[cid] = child_sum
        else:
            selected[cid] = True
            subtree_stability[cid] = stability[cid]
    # deselect descendants of selected clusters (top-down pass)
    for cid in order_created:
        if selected[cid]:
            stack2 = list(children[cid])
            while stack2:
                c = stack2.pop()
                selected[c] = False
                stack2.extend(children[c])

    def full_points(cid: int) -> list[int]:
        out = list(points[cid])
        for c in children[cid]:
            out.extend(full_points(c))
        return out

    labels = np.full(n, -1, dtype=int)
    picked = [cid for cid in order_created if selected[cid]]
    # dense ids ordered by lowest member index for determinism
    picked.sort(key=lambda cid: min(full_points(cid)))
    for dense_id, cid in enumerate(picked):
        labels[full_points(cid)] = dense_id
    return labels


def embed_cluster(
    D: DistanceMatrix, min_cluster_size: int = 3, min_samples: int = 2
) -> ClusterAssignment:
    """2D classical MDS of the distance matrix followed by density
    clustering of the embedded points."""
    coords = classical_mds(D.d, ndim=2)
    euclid = np.sqrt(np.sum((coords[:, None, :] - coords[None, :, :]) ** 2, axis=2))
    labels = density_cluster(euclid, min_cluster_size=min_cluster_size, min_samples=min_samples)
    return ClusterAssignment(labels=labels, embedding_2d=coords)


def field_distance(F1: VectorField, F2: VectorField) -> float:
    """1 - mean cosine similarity over jointly supported cells; cells with
    a near-zero vector on either side are skipped."""
    if F1.n != F2.n or F1.origin != F2.origin or F1.extent != F2.extent:
        raise ClusterError("fields must share resolution and bounding box")
    both = F1.support_mask & F2.support_mask
    v1 = F1.vectors[both]
    v2 = F2.vectors[both]
    n1 = np.linalg.norm(v1, axis=1)
    n2 = np.linalg.norm(v2, axis=1)
    ok = (n1 >= 1e-9) & (n2 >= 1e-9)
    if not ok.any():
        raise ClusterError("no jointly supported non-degenerate cells")
    cos = np.sum(v1[ok] * v2[ok], axis=1) / (n1[ok] * n2[ok])
    return float(1.0 - cos.mean())


def mean_field(fields: list[VectorField]) -> VectorField:
    """Per-cell mean over fields sharing a frame; a cell is supported if
    any constituent supports it and averaged over those that do."""
    f0 = fields[0]
    acc = np.zeros_like(f0.vectors)
    counts = np.zeros((f0.n, f0.n))
    for f in fields:
        acc[f.support_mask] += f.vectors[f.support_mask]
        counts += f.support_mask
    supported = counts > 0
    vectors = np.zeros_like(acc)
    vectors[supported] = acc[supported] / counts[supported, None]
    return VectorField(origin=f0.origin, extent=f0.extent, n=f0.n, vectors=vectors, support_mask=supported)


def forcing_field(
    dataset: EnsembleDataset,
    gcm: str,
    ssp: str,
    months: set[int] | None,
    grid: SomGrid,
    embedding: Embedding,
    k: int = 20,
    n: int = 16,
    seed: int = 0,
    box=None,
) -> VectorField:
    """Transition field from a GCM's historical distribution to its SSP
    distribution."""
    hist_idx = dataset.member_index(gcm, "historical")
    ssp_idx = dataset.member_index(gcm, ssp)
    R1 = project_runs(dataset, [hist_idx], months, grid, embedding)
    R2 = project_runs(dataset, [ssp_idx], months, grid, embedding)
    return bootstrap_vector_field(R1, R2, k=k, n=n, seed=seed, box=box)


def _spatial_mean_anomaly(
    dataset: EnsembleDataset, member_indices: list[int], months: set[int]
) -> float:
    """Mean over the members' time steps of the spatial-mean value."""
    coords = dataset.time_coords()
    keep = [t for t, (_, m) in enumerate(coords) if m in months]
    vals = dataset.values[member_indices][:, keep, :]
    return float(vals.mean())


def _one_d_positions(inter: np.ndarray, anomalies: np.ndarray) -> np.ndarray:
    """Centered 1D MDS positions with sign fixed so the lowest-anomaly
    cluster has the lowest position."""
    nc = len(inter)
    if nc == 1:
        return np.zeros(1)
    pos = classical_mds(inter, ndim=1)[:, 0]
    pos = pos - pos.mean()
    low = int(np.argmin(anomalies))
    if pos[low] > pos.mean():
        pos = -pos
    return pos


def monthly_timeline(
    dataset: EnsembleDataset,
    entities: list[int],
    months: list[int],
    grid: SomGrid,
    embedding: Embedding,
    min_cluster_size: int = 3,
    min_samples: int = 2,
) -> MonthlyClusterTimeline:
    """Per-month EMD clustering of per-entity run distributions with 1D
    MDS cluster placement; noise entities become singleton pseudo-clusters."""
    entity_labels = [dataset.members[i].key for i in entities]
    clusters: dict[int, list[MonthCluster]] = {}
    lines: dict[str, list[tuple[int, int]]] = {lbl: [] for lbl in entity_labels}

    for month in months:
        dists = [project_runs(dataset, [e], {month}, grid, embedding) for e in entities]
        D = emd_matrix(dists)
        assign = embed_cluster(D, min_cluster_size=min_cluster_size, min_samples=min_samples)
        labels = assign.labels.copy()
        next_id = assign.num_clusters
        for i in range(len(labels)):
            if labels[i] < 0:
                labels[i] = next_id
                next_id += 1

        month_clusters: list[MonthCluster] = []
        agg_points: list[np.ndarray] = []
        anomalies: list[float] = []
        for cid in range(next_id):
            member_pos = [i for i in range(len(entities)) if labels[i] == cid]
            pooled = np.concatenate([dists[i].points for i in member_pos], axis=0)
            agg_points.append(pooled)
            anomalies.append(
                _spatial_mean_anomaly(dataset, [entities[i] for i in member_pos], {month})
            )
            month_clusters.append(
                MonthCluster(
                    cluster_id=cid,
                    position=0.0,
                    mean_anomaly=anomalies[-1],
                    entities=[entities[i] for i in member_pos],
                    is_noise_singleton=cid >= assign.num_clusters,
                )
            )

        nc = len(month_clusters)
        inter = np.zeros((nc, nc))
        for i in range(nc):
            for j in range(i + 1, nc):
                inter[i, j] = inter[j, i] = optimal_transport(agg_points[i], agg_points[j]).cost
        positions = _one_d_positions(inter, np.array(anomalies))
        for mc, p in zip(month_clusters, positions):
            mc.position = float(p)

        clusters[month] = month_clusters
        for i, lbl in enumerate(entity_labels):
            lines[lbl].append((month, int(labels[i])))

    return MonthlyClusterTimeline(
        months=list(months), entity_labels=entity_labels, clusters=clusters, lines=lines
    )


def forcing_timeline(
    dataset: EnsembleDataset,
    gcms: list[str],
    ssp: str,
    months: list[int],
    grid: SomGrid,
    embedding: Embedding,
    k: int = 20,
    n: int = 16,
    seed: int = 0,
    min_cluster_size: int = 3,
    min_samples: int = 2,
) -> MonthlyClusterTimeline:
    """Per-month clustering of GCM forcing fields (historical -> ssp) by
    cosine field distance; representative = per-cell mean field."""
    for gcm in gcms:
        dataset.member_index(gcm, "historical")
        dataset.member_index(gcm, ssp)

    clusters: dict[int, list[MonthCluster]] = {}
    lines: dict[str, list[tuple[int, int]]] = {g: [] for g in gcms}

    for month in months:
        # common frame over all involved distributions for this month
        all_points = []
        per_gcm_pts = {}
        for gcm in gcms:
            h = project_runs(dataset, [dataset.member_index(gcm, "historical")], {month}, grid, embedding)
            s = project_runs(dataset, [dataset.member_index(gcm, ssp)], {month}, grid, embedding)
            per_gcm_pts[gcm] = (h, s)
            all_points.extend([h.points, s.points])
        box = _shared_box(all_points)

        fields = []
        anomalies = []
        for gcm in gcms:
            h, s = per_gcm_pts[gcm]
            fields.append(bootstrap_vector_field(h, s, k=k, n=n, seed=seed, box=box))
            hist_mean = _spatial_mean_anomaly(dataset, [dataset.member_index(gcm, "historical")], {month})
            ssp_mean = _spatial_mean_anomaly(dataset, [dataset.member_index(gcm, ssp)], {month})
            anomalies.append(ssp_mean - hist_mean)

        ng = len(gcms)
        if ng == 1:
            labels = np.zeros(1, dtype=int)
        else:
            Dm = np.zeros((ng, ng))
            for i in range(ng):
                for j in range(i + 1, ng):
                    Dm[i, j] = Dm[j, i] = field_distance(fields[i], fields[j])
            if ng < min_cluster_size:
                labels = np.arange(ng)
            else:
                assign = embed_cluster(
                    DistanceMatrix(labels=gcms, d=Dm),
                    min_cluster_size=min_cluster_size,
                    min_samples=min_samples,
                )
                labels = assign.labels.copy()
                next_id = assign.num_clusters
                for i in range(ng):
                    if labels[i] < 0:
                        labels[i] = next_id
                        next_id += 1

        nc = int(labels.max()) + 1
        month_clusters = []
        reps = []
        cluster_anoms = []
        for cid in range(nc):
            idx = [i for i in range(ng) if labels[i] == cid]
            reps.append(mean_field([fields[i] for i in idx]))
            cluster_anoms.append(float(np.mean([anomalies[i] for i in idx])))
            month_clusters.append(
                MonthCluster(
                    cluster_id=cid,
                    position=0.0,
                    mean_anomaly=cluster_anoms[-1],
                    entities=idx,
                    is_noise_singleton=len(idx) == 1 and ng >= min_cluster_size,
                )
            )
        inter = np.zeros((nc, nc))
        for i in range(nc):
            for j in range(i + 1, nc):
                inter[i, j] = inter[j, i] = field_distance(reps[i], reps[j])
        positions = _one_d_positions(inter, np.array(cluster_anoms))
        for mc, p in zip(month_clusters, positions):
            mc.position = float(p)

        clusters[month] = month_clusters
        for i, g in enumerate(gcms):
            lines[g].append((month, int(labels[i])))

    return MonthlyClusterTimeline(
        months=list(months), entity_labels=list(gcms), clusters=clusters, lines=lines
    )
