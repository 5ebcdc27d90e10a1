import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superarrival import arrival
from superarrival.arrival import (KEYTABLE_HEADER, analyze, barrier_curve, detect_crossing,
                                  detect_deviation, eta, free_curve, information_velocity,
                                  perturbation_start, sweep_k)
from superarrival.dynamics import BarrierParams, PhysicalParams
from superarrival.errors import DegenerateWindow, NoCrossing, NoDeviation, OrderingViolation
from superarrival.wavepacket import DetectorParams, TransmissionCurve

from oracles import rk4_reference


@pytest.fixture(scope="module")
def curves(p2, b500, det500):
    return barrier_curve(p2, b500, det500, 1000.0), free_curve(p2, det500, 1000.0)


@pytest.fixture(scope="module")
def table(fig2):
    return sweep_k(fig2.params, fig2.g, fig2.t_b, fig2.det, fig2.k_list, fig2.t_end)


def _synthetic(values_k, values_f, times):
    det = DetectorParams(1.0)
    return (TransmissionCurve.from_samples(det, 1.0, times, values_k),
            TransmissionCurve.from_samples(det, "free", times, values_f))


def _t_ref(params, barrier, det, t):
    # transmission from the fixed-step reference state
    q, _, a, _, _ = rk4_reference(params, barrier, t, 0.01)
    return 0.5 * math.erfc(math.sqrt(2 * params.m) * (det.x_T - q) / a)


class TestPerturbationStart:
    def test_inverse_e(self, b500):
        assert perturbation_start(b500, math.exp(-1)) == pytest.approx(500 - math.sqrt(500), rel=1e-15)

    def test_limit_one(self, b500):
        assert abs(perturbation_start(b500, 1 - 1e-12) - 500.0) < 1e-3

    def test_fig2_value(self, b500):
        assert perturbation_start(b500, 1e-3) == pytest.approx(500 - 58.77, abs=5e-3)

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 2.0])
    def test_rejects_bad_threshold(self, b500, bad):
        with pytest.raises(ValueError):
            perturbation_start(b500, bad)


class TestDeviation:
    def test_identical_curves(self, curves):
        _, cf = curves
        with pytest.raises(NoDeviation):
            detect_deviation(cf, cf)

    def test_fig2_window(self, curves, b500):
        t_d = detect_deviation(*curves, 1e-4)
        t_k = perturbation_start(b500)
        w = 1 / math.sqrt(b500.g)
        assert t_k < t_d < b500.t_b + 3 * w

    def test_against_reference_run(self, curves, p2, b500, det500):
        t_d = detect_deviation(*curves, 1e-4)
        delta = 2e-3
        free = [0.5 * math.erfc(math.sqrt(2) * (500 - (-1000 + 2 * t)) / math.sqrt(5 + 0.8 * t * t))
                for t in (t_d - delta, t_d + delta)]
        before = _t_ref(p2, b500, det500, t_d - delta) - free[0]
        after = _t_ref(p2, b500, det500, t_d + delta) - free[1]
        assert abs(before) < 1e-4 < abs(after)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1e-6, 5e-3))
    def test_doubling_threshold_never_earlier(self, curves, eps):
        assert detect_deviation(*curves, 2 * eps) >= detect_deviation(*curves, eps)

    def test_time_dependent_threshold(self, curves):
        ck, cf = curves
        t_d = detect_deviation(ck, cf, lambda t: np.full_like(np.asarray(t, float), 1e-4))
        assert t_d == detect_deviation(ck, cf, 1e-4)

    def test_mismatched_grids(self, p2, b500, det500):
        ck = barrier_curve(p2, b500, det500, 1000.0, 2001)
        cf = free_curve(p2, det500, 1000.0)
        with pytest.raises(ValueError):
            detect_deviation(ck, cf)

    def test_mismatched_detectors(self, p2, b500, det500):
        ck = barrier_curve(p2, b500, det500, 1000.0)
        cf = free_curve(p2, DetectorParams(400.0), 1000.0)
        with pytest.raises(ValueError):
            detect_deviation(ck, cf)


class TestCrossing:
    def test_brackets_straddle(self, curves):
        ck, cf = curves
        t_d = detect_deviation(ck, cf)
        t_c = detect_crossing(ck, cf, t_d)
        res = 1e-6 * 1000
        assert ck(t_c - res) - cf(t_c - res) > 0
        assert ck(t_c) - cf(t_c) <= 0

    def test_superarrival_on_interior_samples(self, curves):
        ck, cf = curves
        t_d = detect_deviation(ck, cf)
        t_c = detect_crossing(ck, cf, t_d)
        t = np.linspace(t_d, t_c, 1002)[1:-1]
        assert t_c > t_d
        assert np.all(ck(t) > cf(t))

    def test_truncated_span(self, p2, b500, det500):
        ck = barrier_curve(p2, b500, det500, 700.0)
        cf = free_curve(p2, det500, 700.0)
        with pytest.raises(NoCrossing):
            detect_crossing(ck, cf, detect_deviation(ck, cf))

    def test_not_above_at_start(self):
        t = np.linspace(0, 1, 11)
        ck, cf = _synthetic(0.1 * t, 0.2 * t, t)
        with pytest.raises(NoCrossing):
            detect_crossing(ck, cf, 0.5)


class TestEta:
    def test_equal_curves_zero(self, curves):
        _, cf = curves
        assert eta(cf, cf, 500.0, 700.0)[0] == 0.0

    def test_doubled_curve_one(self):
        t = np.linspace(0, 10, 1001)
        f = 0.4 * (1 - np.cos(t)) / 2 + 0.01
        ck, cf = _synthetic(2 * f, f, t)
        assert eta(ck, cf, 1.0, 9.0)[0] == pytest.approx(1.0, rel=1e-14)

    def test_integrals_positive(self, curves):
        ck, cf = curves
        t_d = detect_deviation(ck, cf)
        val, i_k, i_f = eta(ck, cf, t_d, detect_crossing(ck, cf, t_d))
        assert i_k > i_f > 0
        assert val > 0

    def test_panel_doubling(self, curves):
        ck, cf = curves
        t_d = detect_deviation(ck, cf)
        t_c = detect_crossing(ck, cf, t_d)
        coarse = eta(ck, cf, t_d, t_c, 2000)[0]
        fine = eta(ck, cf, t_d, t_c, 4000)[0]
        assert abs(fine - coarse) <= 1e-4 * abs(fine)

    def test_sampling_grid_refinement(self, p2, b500, det500):
        reports = []
        for n in (4001, 8001):
            reports.append(analyze(barrier_curve(p2, b500, det500, 1000.0, n),
                                   free_curve(p2, det500, 1000.0, n), p2, b500))
        assert abs(reports[1].eta - reports[0].eta) <= 1e-6 * reports[1].eta

    def test_degenerate_window(self, curves):
        with pytest.raises(DegenerateWindow):
            eta(*curves, 500.0, 500.0 + 1e-4)


class TestInformationVelocity:
    def test_group_velocity_ratio_one(self):
        v, ratio = information_velocity(30.0, 10.0, 2.0 * 20.0, 2.0)
        assert v == 2.0 and ratio == 1.0

    def test_halving_distance(self):
        v1, _ = information_velocity(30.0, 10.0, 500.0, 2.0)
        v2, _ = information_velocity(30.0, 10.0, 250.0, 2.0)
        assert v2 == v1 / 2

    @pytest.mark.parametrize("t_d,t_k,d", [(10.0, 10.0, 1.0), (5.0, 10.0, 1.0), (30.0, 10.0, 0.0)])
    def test_preconditions(self, t_d, t_k, d):
        with pytest.raises(ValueError):
            information_velocity(t_d, t_k, d, 1.0)


class TestAnalyze:
    def test_report_fields(self, curves, p2, b500):
        r = analyze(*curves, p2, b500)
        assert r.ok and r.k == b500.k
        assert r.t_k < r.t_d < r.t_c
        assert r.delta_t == r.t_c - r.t_d > 0
        assert r.D == 500.0
        assert r.v_I == pytest.approx(500.0 / (r.t_d - r.t_k), rel=1e-15)
        assert r.v_ratio == pytest.approx(r.v_I / 2.0, rel=1e-15)

    def test_late_window_start_flagged(self, curves, p2, b500):
        with pytest.raises(OrderingViolation):
            analyze(*curves, p2, b500, eps_w=0.999)

    def test_bit_identical(self, p2, b500, det500):
        runs = [analyze(barrier_curve(p2, b500, det500, 1000.0), free_curve(p2, det500, 1000.0), p2, b500)
                for _ in range(2)]
        assert runs[0] == runs[1]


class TestSweep:
    def test_fig2_entries(self, table, fig2):
        assert [e.k for e in table.entries] == sorted(fig2.k_list)
        assert all(e.ok for e in table.entries)

    def test_ordering(self, table):
        for e in table.entries:
            assert e.t_k < e.t_d < e.t_c

    def test_monotone_keys(self, table):
        etas = [e.eta for e in table.entries]
        vs = [e.v_I for e in table.entries]
        assert np.all(np.diff(etas) > 0)
        assert np.all(np.diff(vs) > 0)
        assert table.entries[-1].v_ratio > 1

    def test_superarrival_everywhere(self, fig2, table):
        cf = free_curve(fig2.params, fig2.det, fig2.t_end)
        for e in table.entries:
            ck = barrier_curve(fig2.params, fig2.barrier(e.k), fig2.det, fig2.t_end)
            t = np.linspace(e.t_d, e.t_c, 1002)[1:-1]
            assert np.all(ck(t) > cf(t))

    def test_zero_strength_flagged(self, fig2):
        t = sweep_k(fig2.params, fig2.g, fig2.t_b, fig2.det, [0.0, 1 / 500], fig2.t_end)
        assert t.entries[0].status == "NoDeviation"
        assert math.isnan(t.entries[0].eta)
        assert t.entries[1].ok

    def test_permutation_invariant(self, fig2, table):
        ks = list(fig2.k_list)[::-1]
        ks[0], ks[3] = ks[3], ks[0]
        assert sweep_k(fig2.params, fig2.g, fig2.t_b, fig2.det, ks, fig2.t_end) == table

    @pytest.mark.parametrize("ks", [[1e-3, 1e-3], [-1e-3, 1e-3]])
    def test_rejects_bad_lists(self, fig2, ks):
        with pytest.raises(ValueError):
            sweep_k(fig2.params, fig2.g, fig2.t_b, fig2.det, ks, fig2.t_end)

    def test_csv(self, table):
        buf = io.StringIO()
        table.write_csv(buf)
        rows = list(csv.reader(io.StringIO(buf.getvalue())))
        assert rows[0] == KEYTABLE_HEADER
        assert len(rows) == 1 + len(table.entries)
        for row, e in zip(rows[1:], table.entries):
            assert float(row[1]) == e.eta and float(row[5]) == e.t_d
            assert row[-1] == "ok"

    def test_table_rejects_unsorted(self, table):
        with pytest.raises(ValueError):
            arrival.KeyTable(table.entries[::-1], table.params, table.g, table.t_b, table.det)

    def test_lookup(self, table):
        assert table.lookup(1 / 500).k == 1 / 500
        with pytest.raises(KeyError):
            table.lookup(0.5)

    def test_fig1_end_to_end(self, fig1):
        t = sweep_k(fig1.params, fig1.g, fig1.t_b, fig1.det, fig1.k_list, fig1.t_end,
                    n_times=fig1.n_times)
        assert all(e.ok and e.eta > 0 for e in t.entries)
        assert all(np.isfinite([e.eta, e.v_I, e.t_d, e.t_c]).all() for e in t.entries)
