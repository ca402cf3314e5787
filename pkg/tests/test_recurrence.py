"""Tests for chainrec.recurrence."""

from __future__ import annotations

import logging

import numpy as np
import pytest

from chainrec.chaingraph import TransitionGraph, build_graph, morse_partition
from chainrec.grid import Domain, Grid
from chainrec.recurrence import (
    NOT_LEBESGUE_WARNING,
    connectivity_check,
    recurrent_cells_are_chain_recurrent,
    return_time_histogram,
    simulate_returns,
)
from tests.conftest import builtin, chain_graph, circle_grid, random_graphs


class TestSimulateReturns:
    """Tests for seeded first-return simulation."""

    def test_identity_returns_immediately(self) -> None:
        """Test that every identity orbit returns on the first step."""
        report = simulate_returns(builtin("identity"), n_points=100, n_iters=5, delta=0.01)
        assert report.returned_fraction == 1.0
        assert np.all(report.first_returns == 1)
        assert report.return_time_histogram == [(1, 1, 100), (2, 3, 0), (4, 5, 0)]
        assert report.warning is None

    def test_golden_rotation(self) -> None:
        """Test that the golden rotation brings every point back within 13 steps."""
        rot = builtin("rotation", alpha=0.618034)
        report = simulate_returns(rot, n_points=500, n_iters=200, delta=0.05, seed=3)
        assert report.returned_fraction == 1.0
        # 13 steps of the rotation come back within 0.035
        assert report.first_returns.max() <= 13

    def test_seed_is_reproducible(self) -> None:
        """Test that one seed gives the same starts and return times."""
        rot = builtin("rotation", alpha=0.3)
        one = simulate_returns(rot, n_points=50, n_iters=20, delta=0.01, seed=9)
        two = simulate_returns(rot, n_points=50, n_iters=20, delta=0.01, seed=9)
        assert np.array_equal(one.starts, two.starts)
        assert np.array_equal(one.first_returns, two.first_returns)

    def test_northsouth_is_flagged(self, caplog) -> None:
        """Test the warning for maps not known to preserve Lebesgue measure."""
        with caplog.at_level(logging.WARNING, logger="chainrec.recurrence"):
            report = simulate_returns(builtin("northsouth", a=0.1), 50, 10, 0.01)
        assert report.warning == NOT_LEBESGUE_WARNING
        assert not report.preserves_lebesgue
        assert "not known to preserve Lebesgue measure" in caplog.text

    @pytest.mark.parametrize(
        "n_points,n_iters,delta", [(0, 10, 0.1), (10, 0, 0.1), (10, 10, 0.0)]
    )
    def test_rejects_non_positive_arguments(self, n_points, n_iters, delta) -> None:
        """Test that zero counts or radius are refused."""
        with pytest.raises(ValueError):
            simulate_returns(builtin("identity"), n_points, n_iters, delta)

    @pytest.mark.parametrize("name,params", [("rotation", {"alpha": 0.618034}), ("cat", {})])
    def test_fraction_non_decreasing_in_iterations(self, name, params) -> None:
        """Test that a longer horizon never lowers the returned fraction."""
        map_ = builtin(name, **params)
        fractions = [
            simulate_returns(map_, n_points=300, n_iters=n, delta=0.02, seed=11).returned_fraction
            for n in (5, 20, 80)
        ]
        assert fractions == sorted(fractions)

    @pytest.mark.parametrize("name,params", [("rotation", {"alpha": 0.618034}), ("cat", {})])
    def test_fraction_non_decreasing_in_delta(self, name, params) -> None:
        """Test that a wider return ball never lowers the returned fraction."""
        map_ = builtin(name, **params)
        fractions = [
            simulate_returns(map_, n_points=300, n_iters=20, delta=d, seed=11).returned_fraction
            for d in (0.005, 0.01, 0.05)
        ]
        assert fractions == sorted(fractions)

    @pytest.mark.slow
    def test_cat_map_recurrence(self) -> None:
        """Test that almost every cat map orbit returns."""
        report = simulate_returns(builtin("cat"), n_points=1000, n_iters=10_000, delta=0.05, seed=7)
        assert report.returned_fraction >= 0.99


class TestReturnTimeHistogram:
    """Tests for power-of-two return time buckets."""

    def test_power_of_two_buckets(self) -> None:
        """Test bucket edges and counts, the last bucket clipped to the horizon."""
        first = np.array([0, 1, 2, 3, 4, 7, 8])
        assert return_time_histogram(first, 10) == [
            (1, 1, 1),
            (2, 3, 2),
            (4, 7, 2),
            (8, 10, 1),
        ]

    def test_nothing_returned(self) -> None:
        """Test that points that never return are not counted."""
        assert return_time_histogram(np.zeros(5, dtype=np.int64), 3) == [(1, 1, 0), (2, 3, 0)]

    def test_counts_match_returned(self) -> None:
        """Test that bucket counts add up to the returned count."""
        report = simulate_returns(builtin("rotation", alpha=0.3), 200, 50, 0.02, seed=1)
        assert sum(count for _, _, count in report.return_time_histogram) == report.returned_count


class TestConnectivityCheck:
    """Tests for strong connectivity and its witness."""

    def test_rotation_is_strongly_connected(self) -> None:
        """Test that the rotation graph is strongly connected."""
        graph = build_graph(circle_grid(512), builtin("rotation", alpha=0.618034), 2 / 512)
        report = connectivity_check(graph)
        assert report.strongly_connected
        assert report.to_dict() == {"strongly_connected": True, "witness": None}

    def test_northsouth_witness(self, northsouth) -> None:
        """Test the sink and source cells reported for the north-south graph."""
        _, _, graph, partition = northsouth
        report = connectivity_check(graph, partition)
        assert not report.strongly_connected
        assert report.witness == (509, 0)

    def test_chain_witness(self) -> None:
        """Test the witness pair of a chain."""
        report = connectivity_check(chain_graph())
        assert report.witness == (2, 0)

    def test_connected_iff_one_node_without_transients(self, northsouth) -> None:
        """Test that strong connectivity holds exactly for one Morse node and no transient cells."""
        graphs = [graph for graph, _ in random_graphs(seed=23, count=25, max_morse=4)]
        graphs += [
            northsouth[2],
            build_graph(circle_grid(128), builtin("rotation", alpha=0.618034), 2 / 128),
            TransitionGraph.from_adjacency([[1], [2], [0]]),
            TransitionGraph.from_adjacency([[0]]),
            TransitionGraph.from_adjacency([[1], [2], [1]]),
        ]
        seen = set()
        for graph in graphs:
            partition = morse_partition(graph)
            one_node = partition.num_morse == 1 and not (partition.morse_of < 0).any()
            connected = connectivity_check(graph, partition).strongly_connected
            assert connected == one_node
            seen.add(connected)
        assert seen == {True, False}

    @pytest.mark.slow
    def test_cat_outer_graph(self) -> None:
        """Test that the outer cat map graph is strongly connected."""
        grid = Grid(Domain.unit_torus(), (64, 64))
        graph = build_graph(grid, builtin("cat"), 2 * grid.cell_diameter(), "outer")
        assert connectivity_check(graph).strongly_connected


class TestRecurrentCellsAreChainRecurrent:
    """Tests for the sampled check of recurrent cells against orbits."""

    def test_rotation_outer_mode(self) -> None:
        """Test a rigorous pass on the outer rotation graph."""
        grid = circle_grid(64)
        rot = builtin("rotation", alpha=0.618034)
        graph = build_graph(grid, rot, 2 / 64, "outer")
        report = recurrent_cells_are_chain_recurrent(grid, rot, graph, n_points=200, n_iters=100)
        assert report.holds
        assert report.rigorous
        assert report.checked == 200

    def test_center_mode_is_not_rigorous(self) -> None:
        """Test that a center-mode graph passes but is flagged as not rigorous."""
        grid = circle_grid(64)
        rot = builtin("rotation", alpha=0.618034)
        graph = build_graph(grid, rot, 2 / 64, "center")
        assert morse_partition(graph).num_morse == 1
        report = recurrent_cells_are_chain_recurrent(grid, rot, graph, n_points=50, n_iters=100)
        assert report.holds
        assert not report.rigorous

    def test_delta_above_epsilon(self) -> None:
        """Test that a return radius above the graph epsilon is refused."""
        grid = circle_grid(64)
        rot = builtin("rotation", alpha=0.3)
        graph = build_graph(grid, rot, 2 / 64, "outer")
        with pytest.raises(ValueError, match="exceeds the graph epsilon"):
            recurrent_cells_are_chain_recurrent(grid, rot, graph, delta=0.1)
