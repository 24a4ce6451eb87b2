import itertools
import json
import logging
import math

import numpy as np
import pytest

from loopexp.bp import MessageSet, bethe_log_partition, solve_fixed_point
from loopexp.channel import sample_bsc
from loopexp.exceptions import BudgetError
from loopexp.graphs import (CheckGraph, EdgeSubset, enumerate_polymers,
                            sample_regular_graph)
from loopexp.loopseries import (ActivityTable, ExpansionReport,
                                build_expansion_report,
                                connected_labeled_graphs,
                                convergence_criterion, mayer_expansion,
                                node_activity, scan_correction, split_report,
                                subgraph_activity, z_corr_exact,
                                z_corr_polymer_form)
from loopexp.model import FactorSpec

from conftest import (brute_correction, brute_node_activity, incoming,
                      ratio_message_update)


def spec_for(kind, h, eps=0.1, J=0.05):
    if kind == "cycle-code":
        return FactorSpec.cycle_code(h)
    if kind == "softened-cycle-code":
        return FactorSpec.softened(h, eps)
    return FactorSpec.high_temperature(h, J)


def random_messages(graph, seed, scale=0.5):
    rng = np.random.default_rng(seed)
    return MessageSet(eta=rng.normal(0.0, scale, (graph.num_edges, 2)))


class TestNodeActivity:
    @pytest.mark.parametrize("kind", ["cycle-code", "softened-cycle-code",
                                      "high-temperature"])
    def test_empty_subset_is_exactly_one(self, prism, kind):
        rng = np.random.default_rng(3)
        spec = spec_for(kind, rng.uniform(-0.4, 0.4, 9))
        msgs = random_messages(prism, 9)
        table = ActivityTable(prism, spec, msgs)
        for a in range(prism.n):
            assert table.node_activity(a, []) == 1.0

    @pytest.mark.parametrize("kind", ["cycle-code", "softened-cycle-code",
                                      "high-temperature"])
    def test_matches_brute_local_sum(self, k4, kind):
        rng = np.random.default_rng(5)
        spec = spec_for(kind, rng.uniform(-0.4, 0.4, 6))
        msgs = random_messages(k4, 11)
        table = ActivityTable(k4, spec, msgs)
        for a in range(k4.n):
            inc = k4.adjacency[a]
            for r in range(len(inc) + 1):
                for sub in itertools.combinations(inc, r):
                    want = brute_node_activity(k4, spec, msgs.eta, a, sub)
                    assert table.node_activity(a, sub) == pytest.approx(
                        want, abs=1e-12)
                    assert node_activity(k4, spec, msgs, a, sub) == \
                        pytest.approx(want, abs=1e-12)

    def test_zero_field_pair_and_triple(self, k4):
        # even-parity uniform measure: pair correlations vanish, the full
        # product is forced to one
        spec = FactorSpec.cycle_code(np.zeros(6))
        msgs = MessageSet.zeros(k4)
        table = ActivityTable(k4, spec, msgs)
        for a in range(4):
            inc = k4.adjacency[a]
            for pair in itertools.combinations(inc, 2):
                assert table.node_activity(a, pair) == pytest.approx(
                    0.0, abs=1e-15)
            assert table.node_activity(a, inc) == pytest.approx(
                1.0, abs=1e-15)

    def test_degree_one_vanishes_at_fixed_point(self, prism):
        real = sample_bsc(prism, 0.45, 21)
        spec = FactorSpec.cycle_code(real.h)
        msgs = solve_fixed_point(prism, spec)
        assert msgs.converged
        table = ActivityTable(prism, spec, msgs)
        for a in range(prism.n):
            for e in prism.adjacency[a]:
                assert abs(table.node_activity(a, [e])) <= 1e-10

    def test_non_incident_edge_rejected(self, k4):
        table = ActivityTable(k4, FactorSpec.cycle_code(np.zeros(6)),
                              MessageSet.zeros(k4))
        a = 0
        far = [e for e in range(6) if e not in k4.adjacency[0]][0]
        with pytest.raises(ValueError):
            table.node_activity(a, [far])


class TestSubgraphActivity:
    def test_empty_subset(self, k4):
        table = ActivityTable(k4, FactorSpec.cycle_code(np.zeros(6)),
                              MessageSet.zeros(k4))
        assert table.subgraph_activity(EdgeSubset(k4, [])) == 1.0

    def test_product_over_touched_nodes(self, prism):
        rng = np.random.default_rng(8)
        spec = FactorSpec.softened(rng.uniform(-0.3, 0.3, 9), 0.2)
        msgs = random_messages(prism, 2)
        table = ActivityTable(prism, spec, msgs)
        sub = EdgeSubset(prism, [0, 1, 2])
        want = 1.0
        for a in sub.touched_nodes:
            local = [e for e in sub.edge_ids if e in prism.adjacency[a]]
            want *= brute_node_activity(prism, spec, msgs.eta, a, local)
        assert table.subgraph_activity(sub) == pytest.approx(want, rel=1e-12)
        assert subgraph_activity(table, sub) == table.subgraph_activity(sub)

    def test_full_k4_at_zero_field(self, k4):
        table = ActivityTable(k4, FactorSpec.cycle_code(np.zeros(6)),
                              MessageSet.zeros(k4))
        assert table.subgraph_activity(
            EdgeSubset(k4, range(6))) == pytest.approx(1.0, abs=1e-15)

    def test_degree_one_subset_vanishes_at_fixed_point(self, k4):
        real = sample_bsc(k4, 0.48, 3)
        spec = FactorSpec.cycle_code(real.h)
        msgs = solve_fixed_point(k4, spec)
        assert msgs.converged
        table = ActivityTable(k4, spec, msgs)
        # a path subset always has degree-one endpoints
        path = EdgeSubset(k4, [k4.edge_index[(0, 1)], k4.edge_index[(1, 2)]])
        assert abs(table.subgraph_activity(path)) <= 1e-10


class TestCorrectionScan:
    @pytest.mark.parametrize("kind", ["cycle-code", "softened-cycle-code",
                                      "high-temperature"])
    def test_z_all_matches_brute(self, triangle, k4, kind):
        for g, seed in ((triangle, 1), (k4, 2)):
            rng = np.random.default_rng(seed)
            spec = spec_for(kind, rng.uniform(-0.3, 0.3, g.num_edges))
            msgs = random_messages(g, seed + 10)
            table = ActivityTable(g, spec, msgs)
            scan = scan_correction(g, table)
            assert scan.z_all == pytest.approx(
                brute_correction(g, spec, msgs.eta), rel=1e-11)
            assert scan.num_subsets == 2 ** g.num_edges

    def test_variants_agree_at_fixed_point(self, prism):
        real = sample_bsc(prism, 0.45, 7)
        spec = FactorSpec.cycle_code(real.h)
        msgs = solve_fixed_point(prism, spec)
        assert msgs.converged
        table = ActivityTable(prism, spec, msgs)
        a = z_corr_exact(prism, table, variant="all")
        b = z_corr_exact(prism, table, variant="loops")
        assert abs(a - b) <= 1e-9
        assert scan_correction(prism, table).max_nonloop_abs <= 1e-10

    def test_variants_disagree_off_fixed_point(self, prism):
        real = sample_bsc(prism, 0.45, 7)
        spec = FactorSpec.cycle_code(real.h)
        msgs = solve_fixed_point(prism, spec).perturbed(0, 1, 0.1, prism)
        table = ActivityTable(prism, spec, msgs)
        a = z_corr_exact(prism, table, variant="all")
        b = z_corr_exact(prism, table, variant="loops")
        assert abs(a - b) > 1e-6
        assert scan_correction(prism, table).max_nonloop_abs > 1e-4

    def test_zero_field_values(self, triangle, k4):
        for g, want in ((triangle, 2.0), (k4, 2.0)):
            spec = FactorSpec.cycle_code(np.zeros(g.num_edges))
            table = ActivityTable(g, spec, MessageSet.zeros(g))
            assert z_corr_exact(g, table) == pytest.approx(want, abs=1e-13)

    def test_tail_counts_half_or_more_touched(self, k4):
        spec = FactorSpec.cycle_code(np.zeros(6))
        table = ActivityTable(k4, spec, MessageSet.zeros(k4))
        scan = scan_correction(k4, table)
        # only the full edge set is active; it touches all four nodes
        assert scan.tail_abs == pytest.approx(1.0, abs=1e-13)

    def test_chunking_invariance(self, k4):
        rng = np.random.default_rng(0)
        spec = FactorSpec.high_temperature(rng.uniform(-0.3, 0.3, 6), 0.4)
        msgs = random_messages(k4, 5)
        table = ActivityTable(k4, spec, msgs)
        a = scan_correction(k4, table, chunk_bits=2)
        b = scan_correction(k4, table, chunk_bits=18)
        assert a.z_all == pytest.approx(b.z_all, abs=1e-12)
        assert a.z_loops == pytest.approx(b.z_loops, abs=1e-12)
        assert a.tail_abs == pytest.approx(b.tail_abs, abs=1e-12)

    def test_budget_cap(self, k4):
        table = ActivityTable(k4, FactorSpec.cycle_code(np.zeros(6)),
                              MessageSet.zeros(k4))
        with pytest.raises(BudgetError):
            scan_correction(k4, table, max_edges=5)
        with pytest.raises(ValueError):
            z_corr_exact(k4, table, variant="nope")


class TestPolymerForm:
    def test_empty_catalog_is_one(self, triangle):
        cat = enumerate_polymers(triangle, 2)
        assert len(cat) == 0
        assert z_corr_polymer_form(cat, np.array([])) == 1.0

    def test_k4_zero_field(self, k4):
        spec = FactorSpec.cycle_code(np.zeros(6))
        table = ActivityTable(k4, spec, MessageSet.zeros(k4))
        cat = enumerate_polymers(k4, k4.n)
        vals = table.polymer_activities(cat)
        assert z_corr_polymer_form(cat, vals) == pytest.approx(2.0,
                                                               abs=1e-13)

    def test_disconnected_host_factorizes(self, two_triangles):
        spec = FactorSpec.cycle_code(np.zeros(6))
        table = ActivityTable(two_triangles, spec,
                              MessageSet.zeros(two_triangles))
        cat = enumerate_polymers(two_triangles, two_triangles.n)
        vals = table.polymer_activities(cat)
        assert z_corr_polymer_form(cat, vals) == pytest.approx(4.0,
                                                               abs=1e-13)

    @pytest.mark.parametrize("kind", ["cycle-code", "high-temperature"])
    def test_matches_loop_sum_at_fixed_point(self, k4, prism, two_triangles,
                                             kind):
        for g, p, seed in ((k4, 0.45, 1), (prism, 0.48, 2),
                           (two_triangles, 0.45, 3)):
            real = sample_bsc(g, p, seed)
            spec = spec_for(kind, real.h)
            msgs = solve_fixed_point(g, spec)
            if not msgs.converged:
                continue
            table = ActivityTable(g, spec, msgs)
            cat = enumerate_polymers(g, g.n)
            vals = table.polymer_activities(cat)
            loops = z_corr_exact(g, table, variant="loops")
            assert z_corr_polymer_form(cat, vals) == pytest.approx(
                loops, abs=1e-10)


class TestMayer:
    def test_connected_graph_counts(self):
        for M, want in ((1, 1), (2, 1), (3, 4), (4, 38), (5, 728)):
            assert len(connected_labeled_graphs(M)) == want

    def test_connected_graphs_are_connected_and_distinct(self):
        graphs = connected_labeled_graphs(4)
        assert len(set(graphs)) == len(graphs)
        for edges in graphs:
            reach = {0}
            frontier = [0]
            while frontier:
                u = frontier.pop()
                for a, b in edges:
                    for x, y in ((a, b), (b, a)):
                        if x == u and y not in reach:
                            reach.add(y)
                            frontier.append(y)
            assert reach == {0, 1, 2, 3}

    def test_single_unit_polymer_gives_log_two_series(self, triangle):
        # one polymer with K = 1 self-intersects at every order, so the
        # orders are the alternating harmonic terms of ln 2
        cat = enumerate_polymers(triangle, 3)
        assert len(cat) == 1
        mex = mayer_expansion(cat, np.array([1.0]), M_max=3)
        assert mex.orders == pytest.approx((1.0, -0.5, 1.0 / 3.0), abs=1e-12)
        assert mex.partial_sums == pytest.approx((1.0, 0.5, 5.0 / 6.0),
                                                 abs=1e-12)
        assert mex.total == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_zero_activities_vanish_at_every_order(self, k4):
        cat = enumerate_polymers(k4, 4)
        mex = mayer_expansion(cat, np.zeros(len(cat)), M_max=5)
        assert mex.orders == (0.0,) * 5
        assert mex.num_polymers == 0

    def test_disjoint_polymers_add_independent_series(self, two_triangles):
        cat = enumerate_polymers(two_triangles, 6)
        assert len(cat) == 2
        k = 0.3
        mex = mayer_expansion(cat, np.array([k, k]), M_max=3)
        want = (2 * k, -k ** 2, 2 * k ** 3 / 3)
        assert mex.orders == pytest.approx(want, abs=1e-13)

    def test_matches_log_polymer_sum_when_small(self, prism):
        real = sample_bsc(prism, 0.48, 12)
        spec = FactorSpec.high_temperature(real.h, 0.05)
        msgs = solve_fixed_point(prism, spec)
        assert msgs.converged
        table = ActivityTable(prism, spec, msgs)
        cat = enumerate_polymers(prism, prism.n)
        vals = table.polymer_activities(cat)
        assert convergence_criterion(cat, vals) < 1
        mex = mayer_expansion(cat, vals, M_max=3)
        want = math.log(z_corr_polymer_form(cat, vals))
        assert mex.total == pytest.approx(want, abs=1e-9)

    def test_order_bounds(self, k4):
        cat = enumerate_polymers(k4, 4)
        vals = np.zeros(len(cat))
        with pytest.raises(ValueError):
            mayer_expansion(cat, vals, M_max=6)
        with pytest.raises(ValueError):
            mayer_expansion(cat, vals, M_max=0)


class TestConvergenceCriterion:
    def test_empty_catalog(self, triangle):
        cat = enumerate_polymers(triangle, 2)
        assert convergence_criterion(cat, np.array([])) == 0.0

    def test_k4_zero_field_full_cap(self, k4):
        spec = FactorSpec.cycle_code(np.zeros(6))
        table = ActivityTable(k4, spec, MessageSet.zeros(k4))
        cat = enumerate_polymers(k4, 4)
        vals = table.polymer_activities(cat)
        assert convergence_criterion(cat, vals) == pytest.approx(
            math.exp(4.0), rel=1e-12)

    def test_linear_in_activity_magnitude(self, prism):
        real = sample_bsc(prism, 0.45, 4)
        spec = FactorSpec.softened(real.h, 0.3)
        msgs = solve_fixed_point(prism, spec)
        table = ActivityTable(prism, spec, msgs)
        cat = enumerate_polymers(prism, prism.n)
        vals = table.polymer_activities(cat)
        one = convergence_criterion(cat, vals)
        assert one > 0
        assert convergence_criterion(cat, 2 * vals) == pytest.approx(
            2 * one, rel=1e-12)


class TestSplitReport:
    def test_k4_zero_field(self, k4):
        spec = FactorSpec.cycle_code(np.zeros(6))
        rep = split_report(k4, spec, MessageSet.zeros(k4))
        assert rep.z_small == 1.0
        assert rep.tail_abs == pytest.approx(1.0, abs=1e-13)
        assert rep.reconstructed == pytest.approx(2.0, abs=1e-13)
        assert rep.z_polymer_all == pytest.approx(2.0, abs=1e-13)
        assert rep.unique_large
        assert not rep.truncated
        # every polymer in K4 touches at least half the nodes
        assert rep.large_ids
        assert all(v == 1.0 for v in rep.ratios.values())

    def test_no_polymers_host(self, path3):
        spec = FactorSpec.high_temperature(np.zeros(2), 0.3)
        rep = split_report(path3, spec, MessageSet.zeros(path3))
        assert rep.z_small == 1.0
        assert rep.tail_abs == 0.0
        assert rep.large_ids == ()
        assert rep.reconstructed == 1.0
        assert rep.z_polymer_all == 1.0

    def test_reconstruction_exact_when_large_unique(self, k4):
        instances = [(k4, 0.48, 1)]
        g10 = sample_regular_graph(10, 3, 1)
        instances.append((g10, 0.48, 101))
        for g, p, seed in instances:
            real = sample_bsc(g, p, seed)
            spec = FactorSpec.cycle_code(real.h)
            msgs = solve_fixed_point(g, spec)
            assert msgs.converged
            rep = split_report(g, spec, msgs)
            assert rep.unique_large
            assert rep.reconstructed == pytest.approx(rep.z_polymer_all,
                                                      rel=1e-12)
            table = ActivityTable(g, spec, msgs)
            loops = z_corr_exact(g, table, variant="loops")
            assert rep.z_polymer_all == pytest.approx(loops, rel=1e-9)

    def test_half_size_tie_breaks_uniqueness(self, prism, caplog):
        # the two triangle faces each touch exactly n/2 nodes and are
        # node-disjoint, so the one-large-polymer reconstruction is only
        # approximate there
        real = sample_bsc(prism, 0.45, 9)
        spec = FactorSpec.cycle_code(real.h)
        msgs = solve_fixed_point(prism, spec)
        assert msgs.converged
        with caplog.at_level(logging.WARNING, logger="loopexp.loopseries"):
            rep = split_report(prism, spec, msgs)
        assert not rep.unique_large
        assert 0 < abs(rep.reconstructed - rep.z_polymer_all) < 1e-4
        table = ActivityTable(prism, spec, msgs)
        loops = z_corr_exact(prism, table, variant="loops")
        assert rep.z_polymer_all == pytest.approx(loops, rel=1e-9)

    def test_two_disjoint_large_polymers_flagged(self, two_k4s, caplog):
        spec = FactorSpec.cycle_code(np.zeros(12))
        with caplog.at_level(logging.WARNING, logger="loopexp.loopseries"):
            rep = split_report(two_k4s, spec, MessageSet.zeros(two_k4s))
        assert not rep.unique_large
        assert any("disjoint large polymers" in r.message
                   for r in caplog.records)
        # one-large-polymer reconstruction misses the paired term
        assert rep.z_polymer_all == pytest.approx(4.0, abs=1e-12)
        assert rep.reconstructed == pytest.approx(3.0, abs=1e-12)


class TestExpansionReport:
    def test_full_small_instance(self, prism, tmp_path):
        real = sample_bsc(prism, 0.45, 14)
        spec = FactorSpec.cycle_code(real.h)
        msgs = solve_fixed_point(prism, spec)
        assert msgs.converged
        rep = build_expansion_report(prism, spec, msgs,
                                     params={"p": 0.45, "seed": 14})
        assert rep.converged
        assert rep.kind == "cycle-code"
        assert rep.bethe_total == rep.bethe_node - rep.bethe_edge
        assert rep.exact_log_z is not None
        assert rep.identity_residual() <= 1e-9
        assert abs(rep.z_corr_all - rep.z_corr_loops) <= 1e-9
        assert rep.z_corr_polymer == pytest.approx(rep.z_corr_loops,
                                                   abs=1e-10)
        assert rep.max_nonloop_abs <= 1e-10
        assert rep.criterion > 0
        assert len(rep.mayer_orders) == 3
        assert not rep.catalog_truncated
        assert rep.params["p"] == 0.45

        path = tmp_path / "report.json"
        rep.save_json(path)
        with open(path) as fh:
            doc = json.load(fh)
        assert doc["format_version"] == 1
        assert doc["exact_log_z"] == rep.exact_log_z
        assert doc["ln_z_corr"] == rep.ln_z_corr()
        assert doc["identity_residual"] == rep.identity_residual()
        assert doc["mayer_orders"] == list(rep.mayer_orders)

    def test_caps_leave_fields_unset(self, prism):
        spec = FactorSpec.cycle_code(np.zeros(9))
        msgs = solve_fixed_point(prism, spec)
        rep = build_expansion_report(prism, spec, msgs, exact_cap=5,
                                     scan_cap=5, with_polymers=False)
        assert rep.exact_log_z is None
        assert rep.z_corr_all is None
        assert rep.ln_z_corr() is None
        assert rep.identity_residual() is None
        assert rep.correction_per_node() is None
        assert rep.z_corr_polymer is None
        assert rep.criterion is None

    def test_node_cap_marks_truncation(self, prism):
        spec = FactorSpec.cycle_code(np.zeros(9))
        msgs = solve_fixed_point(prism, spec)
        rep = build_expansion_report(prism, spec, msgs, node_cap=3)
        assert rep.catalog_truncated
        assert rep.catalog_cap == 3

    def test_nonpositive_correction_has_no_log(self):
        rep = ExpansionReport(n=4, d=3, num_edges=6, kind="cycle-code",
                              bethe_node=0.0, bethe_edge=0.0,
                              exact_log_z=0.0, z_corr_all=-0.5)
        assert rep.ln_z_corr() is None
        assert rep.identity_residual() is None
