"""Exact optimal transport (vs. a brute-force assignment oracle), the
bootstrap vector field, transition matrices, and shared-frame KDE pairs."""

import itertools

import numpy as np
import pytest

from ensomap.compare import (
    CompareError,
    bootstrap_vector_field,
    optimal_transport,
    side_by_side,
    transition_matrix,
)
from ensomap.annotate import Annotation
from ensomap.distribution import RunDistribution


def brute_force_assignment_cost(A, B):
    """Minimum mean distance over all n! one-to-one assignments."""
    n = len(A)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(np.linalg.norm(A[i] - B[perm[i]]) for i in range(n)) / n
        best = min(best, cost)
    return best


def point_distribution(points):
    points = np.asarray(points, dtype=float)
    n = len(points)
    return RunDistribution(
        points=points,
        member_index=np.zeros(n, dtype=int),
        year=np.full(n, 2000),
        month=np.ones(n, dtype=int),
    )


class TestOptimalTransport:
    def test_equal_sizes_match_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 7))
            A = rng.normal(size=(n, 2))
            B = rng.normal(size=(n, 2))
            plan = optimal_transport(A, B)
            assert plan.cost == pytest.approx(brute_force_assignment_cost(A, B), abs=1e-9)

    def test_singleton_distance(self):
        plan = optimal_transport(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
        assert plan.cost == pytest.approx(5.0)
        assert plan.pairs == [(0, 0, 1.0)]

    def test_identity_zero_cost(self):
        rng = np.random.default_rng(1)
        A = rng.normal(size=(5, 2))
        plan = optimal_transport(A, A.copy())
        assert plan.cost == pytest.approx(0.0, abs=1e-12)

    def test_unequal_sizes_hand_case(self):
        # one source splits evenly to two equidistant targets:
        # cost = 0.5*1 + 0.5*1 = 1
        A = np.array([[0.0, 0.0]])
        B = np.array([[1.0, 0.0], [-1.0, 0.0]])
        plan = optimal_transport(A, B)
        assert plan.cost == pytest.approx(1.0, abs=1e-9)
        assert sum(m for _, _, m in plan.pairs) == pytest.approx(1.0, abs=1e-9)

    def test_unequal_sizes_prefer_near_target(self):
        # 2 sources, 4 targets; each source sends its halves to its own
        # nearby pair: cost = 0.25*(0+1+0+1) = 0.5... targets at distance
        # 0 and 1 per source
        A = np.array([[0.0, 0.0], [10.0, 0.0]])
        B = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        plan = optimal_transport(A, B)
        assert plan.cost == pytest.approx(0.5, abs=1e-9)

    def test_mass_conservation_unequal(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(3, 2))
        B = rng.normal(size=(5, 2))
        plan = optimal_transport(A, B)
        src = np.zeros(3)
        tgt = np.zeros(5)
        for s, t, m in plan.pairs:
            src[s] += m
            tgt[t] += m
        np.testing.assert_allclose(src, 1 / 3, atol=1e-9)
        np.testing.assert_allclose(tgt, 1 / 5, atol=1e-9)

    def test_symmetry_of_cost(self):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(4, 2))
        B = rng.normal(size=(6, 2))
        assert optimal_transport(A, B).cost == pytest.approx(
            optimal_transport(B, A).cost, abs=1e-9
        )

    def test_empty_rejected(self):
        with pytest.raises(CompareError, match="empty"):
            optimal_transport(np.zeros((0, 2)), np.zeros((3, 2)))


class TestVectorField:
    def _cloud(self, seed=0, n=60):
        rng = np.random.default_rng(seed)
        return rng.normal(size=(n, 2))

    def test_translation_recovered(self):
        P1 = self._cloud()
        P2 = P1 + np.array([1.0, 0.0])
        field = bootstrap_vector_field(P1, P2, k=20, n=16, seed=0)
        vecs = field.vectors[field.support_mask]
        assert len(vecs) > 0
        mean = vecs.mean(axis=0)
        np.testing.assert_allclose(mean, [1.0, 0.0], atol=0.1)

    def test_identity_near_zero(self):
        # uniform cloud: dense enough that bootstrap resampling noise at every
        # supported cell stays well under 5% of the box diagonal
        P1 = np.random.default_rng(1).uniform(0.0, 3.0, size=(400, 2))
        field = bootstrap_vector_field(P1, P1.copy(), k=20, n=16, seed=0)
        diag = float(np.hypot(*field.extent))
        mags = np.linalg.norm(field.vectors[field.support_mask], axis=1)
        assert mags.max() <= 0.05 * diag

    def test_bit_reproducible(self):
        P1, P2 = self._cloud(2), self._cloud(3)
        a = bootstrap_vector_field(P1, P2, k=5, n=8, seed=7)
        b = bootstrap_vector_field(P1, P2, k=5, n=8, seed=7)
        np.testing.assert_array_equal(a.vectors, b.vectors)
        np.testing.assert_array_equal(a.support_mask, b.support_mask)

    def test_seed_changes_field(self):
        P1, P2 = self._cloud(2), self._cloud(3)
        a = bootstrap_vector_field(P1, P2, k=5, n=8, seed=7)
        b = bootstrap_vector_field(P1, P2, k=5, n=8, seed=8)
        assert not np.array_equal(a.vectors, b.vectors)

    def test_unsupported_cells_masked_zero(self):
        # two tight clusters leave the middle of the box unsupported
        P1 = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]])
        field = bootstrap_vector_field(P1, P1 + 0.05, k=3, n=16, seed=0)
        assert not field.support_mask.all()
        np.testing.assert_array_equal(field.vectors[~field.support_mask], 0.0)

    def test_explicit_box(self):
        P1, P2 = self._cloud(4), self._cloud(5)
        box = ((-4.0, -4.0), (8.0, 8.0))
        field = bootstrap_vector_field(P1, P2, k=3, n=8, seed=0, box=box)
        assert field.origin == (-4.0, -4.0)
        assert field.extent == (8.0, 8.0)

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(CompareError):
            bootstrap_vector_field(np.zeros((1, 2)), np.zeros((5, 2)))
        with pytest.raises(CompareError):
            bootstrap_vector_field(np.zeros((5, 2)), np.zeros((5, 2)), k=0)

    def test_cell_centers_inside_box(self):
        P1, P2 = self._cloud(6), self._cloud(7)
        field = bootstrap_vector_field(P1, P2, k=2, n=4, seed=0)
        xs, ys = field.cell_centers()
        assert xs.min() > field.origin[0]
        assert xs.max() < field.origin[0] + field.extent[0]
        assert len(xs) == len(ys) == 4


class TestTransitionMatrix:
    def _square(self, cx, cy, half=1.0):
        return np.array([
            (cx - half, cy - half), (cx + half, cy - half),
            (cx + half, cy + half), (cx - half, cy + half),
        ])

    def test_mass_moves_between_regions(self):
        rng = np.random.default_rng(0)
        left = rng.normal(0.0, 0.1, size=(40, 2))
        right = left + np.array([5.0, 0.0])
        anns = [
            Annotation(id="L", label="left", vertices=self._square(0, 0), created_order=0),
            Annotation(id="R", label="right", vertices=self._square(5, 0), created_order=1),
        ]
        tm = transition_matrix(point_distribution(left), point_distribution(right), anns, k=5, seed=0)
        assert tm.regions == ["L", "R", "unannotated"]
        assert tm.flows.sum() == pytest.approx(1.0)
        li, ri = 0, 1
        assert tm.flows[li, ri] > 0.9

    def test_overlap_resolved_by_creation_order(self):
        pts = point_distribution([(0.0, 0.0), (0.1, 0.1)])
        anns = [
            Annotation(id="new", label="n", vertices=self._square(0, 0), created_order=5),
            Annotation(id="old", label="o", vertices=self._square(0, 0, half=2.0), created_order=1),
        ]
        tm = transition_matrix(pts, pts, anns, k=2, seed=0)
        # both points sit in both polygons; the older annotation wins
        assert tm.regions[0] == "old"
        assert tm.flows[0, 0] == pytest.approx(1.0)

    def test_no_annotations_all_unannotated(self):
        pts = point_distribution([(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)])
        tm = transition_matrix(pts, pts, [], k=2, seed=0)
        assert tm.regions == ["unannotated"]
        assert tm.flows[0, 0] == pytest.approx(1.0)


class TestSideBySide:
    def test_shared_grid(self):
        rng = np.random.default_rng(0)
        R1 = point_distribution(rng.normal(0, 1, size=(60, 2)))
        R2 = point_distribution(rng.normal(3, 1, size=(60, 2)))
        k1, k2 = side_by_side(R1, R2, grid_res=64)
        np.testing.assert_array_equal(k1.x_edges, k2.x_edges)
        np.testing.assert_array_equal(k1.y_edges, k2.y_edges)
        dx = k1.x_edges[1] - k1.x_edges[0]
        dy = k1.y_edges[1] - k1.y_edges[0]
        for k in (k1, k2):
            assert float(k.density.sum() * dx * dy) == pytest.approx(1.0, abs=1e-9)

    def test_box_covers_both(self):
        rng = np.random.default_rng(1)
        R1 = point_distribution(rng.normal(0, 0.5, size=(40, 2)))
        R2 = point_distribution(rng.normal(4, 0.5, size=(40, 2)))
        k1, _ = side_by_side(R1, R2, grid_res=32)
        allp = np.vstack([R1.points, R2.points])
        assert k1.x_edges[0] < allp[:, 0].min()
        assert k1.x_edges[-1] > allp[:, 0].max()
