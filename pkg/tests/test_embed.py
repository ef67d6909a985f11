"""Anchored layout of the node graph: graph construction, optimizer
correctness on hand instances, anchor constraints, and warm starts."""

import numpy as np
import pytest

from ensomap.embed import (
    EmbedError,
    MdeConfig,
    _objective_and_grad,
    build_node_graph,
    mde_project,
    set_anchors,
    update_anchor,
)
from ensomap.som import SomConfig, SomGrid


def scalar_grid(rows, cols, weights):
    return SomGrid(
        config=SomConfig(rows=rows, cols=cols),
        weights=np.asarray(weights, dtype=float).reshape(-1, 1),
    )


CHAIN_EDGES = np.array([[0, 1], [1, 2]])
CHAIN_TARGETS = np.array([1.0, 1.0])


class TestBuildNodeGraph:
    def test_edge_count_3x3(self):
        grid = scalar_grid(3, 3, np.arange(9))
        edges, _ = build_node_graph(grid)
        assert len(edges) == 12  # 2*r*c - r - c

    def test_two_by_two_rescaled_targets(self):
        # weights {0,1;2,3}: raw targets {1,2,1,2}, median 1.5
        grid = scalar_grid(2, 2, [0.0, 1.0, 2.0, 3.0])
        edges, targets = build_node_graph(grid)
        got = {(int(a), int(b)): t for (a, b), t in zip(edges, targets)}
        assert got[(0, 1)] == pytest.approx(2.0 / 3.0)
        assert got[(0, 2)] == pytest.approx(4.0 / 3.0)
        assert got[(1, 3)] == pytest.approx(4.0 / 3.0)
        assert got[(2, 3)] == pytest.approx(2.0 / 3.0)

    def test_constant_grid_keeps_zero_targets(self):
        grid = scalar_grid(2, 2, np.ones(4))
        _, targets = build_node_graph(grid)
        np.testing.assert_array_equal(targets, np.zeros(4))

    def test_edges_are_lattice_adjacent(self, som):
        edges, _ = build_node_graph(som)
        coords = som.grid_coords
        for a, b in edges:
            assert np.abs(coords[a] - coords[b]).sum() == 1


class TestOptimizer:
    def test_all_anchored_exact(self):
        anchors = {0: (0.0, 0.0), 1: (1.0, 1.0), 2: (2.0, 0.0)}
        emb = mde_project(CHAIN_EDGES, CHAIN_TARGETS, anchors=anchors, num_nodes=3)
        for node, p in anchors.items():
            assert tuple(emb.positions[node]) == p
        assert emb.status == "ok"

    def test_chain_middle_node(self):
        emb = mde_project(
            CHAIN_EDGES, CHAIN_TARGETS,
            anchors={0: (0.0, 0.0), 2: (2.0, 0.0)},
            init=np.array([[0.0, 0.0], [0.7, 0.6], [2.0, 0.0]]),
            num_nodes=3,
        )
        np.testing.assert_allclose(emb.positions[1], [1.0, 0.0], atol=1e-3)
        np.testing.assert_array_equal(emb.positions[0], [0.0, 0.0])
        np.testing.assert_array_equal(emb.positions[2], [2.0, 0.0])

    def test_objective_monotone_every_iteration(self):
        trace: list[float] = []
        mde_project(
            CHAIN_EDGES, CHAIN_TARGETS,
            anchors={0: (0.0, 0.0), 2: (2.0, 0.0)},
            init=np.array([[0.0, 0.0], [0.3, 0.9], [2.0, 0.0]]),
            num_nodes=3,
            trace=trace,
        )
        assert len(trace) >= 2
        assert all(a >= b - 1e-12 for a, b in zip(trace, trace[1:]))

    def test_no_anchors_centered_unit_rms(self, som):
        edges, targets = build_node_graph(som)
        emb = mde_project(edges, targets, grid=som, num_nodes=som.num_nodes)
        np.testing.assert_allclose(emb.positions.mean(axis=0), [0.0, 0.0], atol=1e-9)
        rms = np.sqrt(np.mean(np.sum(emb.positions**2, axis=1)))
        assert rms == pytest.approx(1.0, abs=1e-9)

    def test_square_cycle_descends_to_equal_edges(self):
        # the unit-RMS renormalization pins the scale, so the objective need
        # not vanish; it must not exceed the distortion of a distorted init,
        # and the optimum under the cycle symmetry has all edges equal
        edges = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
        targets = np.ones(4)
        init = np.array([[0.0, 0.0], [1.7, 0.2], [1.5, 1.9], [-0.3, 1.2]])
        init_obj = _objective_and_grad(init, edges, targets)[0]
        emb = mde_project(edges, targets, init=init, num_nodes=4)
        assert emb.objective <= init_obj + 1e-12
        lengths = np.linalg.norm(
            emb.positions[edges[:, 0]] - emb.positions[edges[:, 1]], axis=1
        )
        np.testing.assert_allclose(lengths, lengths.mean(), atol=1e-4)

    def test_disconnected_graph_rejected(self):
        edges = np.array([[0, 1], [2, 3]])
        with pytest.raises(EmbedError, match="disconnected"):
            mde_project(edges, np.ones(2), num_nodes=4)

    def test_irreducible_anchor_setup_warns(self):
        # both ends pinned to the same point with a nonzero target
        emb = mde_project(
            np.array([[0, 1]]), np.array([1.0]),
            anchors={0: (0.0, 0.0), 1: (0.0, 0.0)}, num_nodes=2,
        )
        assert emb.status == "ok" or "warning" in emb.status
        # positions still honor the anchors exactly
        np.testing.assert_array_equal(emb.positions, np.zeros((2, 2)))


class TestAnchorEdits:
    def test_update_anchor_holds_position(self, embedding):
        emb = update_anchor(embedding, 5, (0.4, -0.3))
        np.testing.assert_array_equal(emb.positions[5], [0.4, -0.3])
        assert emb.anchors == {5: (0.4, -0.3)}

    def test_remove_anchor(self, embedding):
        emb = update_anchor(embedding, 5, (0.4, -0.3))
        emb2 = update_anchor(emb, 5, None)
        assert emb2.anchors == {}

    def test_out_of_range_rejected(self, embedding):
        with pytest.raises(EmbedError, match="out of range"):
            update_anchor(embedding, embedding.num_nodes, (0.0, 0.0))

    def test_warm_start_small_perturbation(self):
        # 3x3 lattice with unit targets; perturbing one anchor by eps moves
        # the free nodes by O(eps)
        grid = SomGrid(
            config=SomConfig(rows=3, cols=3),
            weights=np.mgrid[0:3, 0:3].reshape(2, 9).T.astype(float),
        )
        edges, targets = build_node_graph(grid)
        base = mde_project(
            edges, targets, anchors={0: (0.0, 0.0)}, grid=grid, num_nodes=9
        )
        eps = 1e-3
        moved = set_anchors(base, {0: (eps, 0.0)})
        delta = np.abs(moved.positions - base.positions).max()
        assert delta <= 10 * eps

    def test_set_anchors_replaces_map(self, embedding):
        emb = set_anchors(embedding, {1: (0.0, 0.0), 2: (1.0, 0.0)})
        assert set(emb.anchors) == {1, 2}
        emb2 = set_anchors(emb, {3: (0.5, 0.5)})
        assert set(emb2.anchors) == {3}

    def test_config_defaults(self):
        c = MdeConfig()
        assert c.max_iterations == 5000
        assert c.tolerance == pytest.approx(1e-6)
