import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superarrival import arrival
from superarrival.dynamics import BarrierParams, PhysicalParams
from superarrival.protocol import (Codebook, DecodedResult, RunConfig, bob_decode, build_key,
                                   eve_intercept, noise_threshold, roundtrip, security_check,
                                   simulate_detection)
from superarrival.wavepacket import DetectorParams, TransmissionCurve

N = 100_000
READOUT = np.linspace(0.0, 1000.0, 4001)
STANDARD_EVE = {"k_E": 1 / 500, "x_E": 250.0}


@pytest.fixture(scope="module")
def codebook(fig2):
    ks = fig2.protocol["codebook"]
    key = build_key(fig2.params, fig2.g, fig2.t_b, fig2.det, ks, fig2.t_end, N, READOUT)
    return Codebook.from_key(key, ks)


@pytest.fixture(scope="module")
def cfg(codebook, fig2):
    return RunConfig(N, READOUT, 0, fig2.x_T, codebook.key.entries[0].t_k)


@pytest.fixture(scope="module")
def message():
    return np.random.default_rng(0).integers(0, 5, 200).tolist()


def _flat(value):
    return TransmissionCurve.from_samples(DetectorParams(1.0), "flat", READOUT,
                                          np.full(READOUT.size, value))


class TestDetection:
    def test_zero(self, cfg):
        assert np.all(simulate_detection(_flat(0.0), cfg) == 0)

    def test_one(self, cfg):
        assert np.all(simulate_detection(_flat(1.0), cfg) == N)

    def test_mean_over_seeds(self, fig2):
        curve = arrival.free_curve(fig2.params, fig2.det, fig2.t_end)
        small = RunConfig(1000, READOUT[::400], 0, 500.0, 441.0)
        runs = np.array([simulate_detection(curve, small, seed) for seed in range(1000)])
        t = curve(small.readout_times)
        bound = 4 * np.sqrt(t * (1 - t) / (1000 * 1000))
        assert np.all(np.abs(runs.mean(axis=0) / 1000 - t) <= bound)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**63))
    def test_monotone_where_curve_is(self, fig2, seed):
        curve = arrival.free_curve(fig2.params, fig2.det, fig2.t_end)
        small = RunConfig(500, READOUT[READOUT <= 750.0], seed, 500.0, 441.0)
        assert np.all(np.diff(simulate_detection(curve, small)) >= 0)

    def test_seeded(self, fig2, cfg):
        curve = arrival.free_curve(fig2.params, fig2.det, fig2.t_end)
        assert np.array_equal(simulate_detection(curve, cfg, 5), simulate_detection(curve, cfg, 5))

    def test_readout_outside_span(self, fig2):
        curve = arrival.free_curve(fig2.params, fig2.det, 500.0)
        with pytest.raises(ValueError):
            simulate_detection(curve, RunConfig(10, [0.0, 600.0], 0, 500.0, 441.0))


class TestConfig:
    @pytest.mark.parametrize("n,times", [(0, [0.0, 1.0]), (10, [1.0, 1.0]), (10, [2.0, 1.0])])
    def test_rejects(self, n, times):
        with pytest.raises(ValueError):
            RunConfig(n, times, 0, 500.0, 441.0)

    def test_noise_threshold(self, fig2):
        curve = arrival.free_curve(fig2.params, fig2.det, fig2.t_end)
        assert noise_threshold(curve, None, 1e-3) == 1e-3
        th = noise_threshold(curve, 100, 1e-3)
        t = curve(750.0)
        assert th(750.0) == pytest.approx(4 * math.sqrt(t * (1 - t) / 100), rel=1e-12)
        assert th(0.0) == 1e-3


class TestCodebook:
    def test_separation_enforced(self, fig2):
        ks = [1 / 500, 1 / 499]
        key = build_key(fig2.params, fig2.g, fig2.t_b, fig2.det, ks, fig2.t_end, N, READOUT)
        with pytest.raises(ValueError):
            Codebook.from_key(key, ks)

    def test_duplicates(self, codebook):
        with pytest.raises(ValueError):
            Codebook([(0, 1 / 500), (1, 1 / 500)], codebook.key)
        with pytest.raises(ValueError):
            Codebook([(0, 1 / 500), (0, 1 / 200)], codebook.key)

    def test_lookup(self, codebook):
        assert codebook.k_of(2) == 1 / 500
        assert codebook.symbol_of(1 / 500) == 2

    def test_key_monotone(self, codebook):
        etas = [e.eta for e in codebook.key.entries]
        assert np.all(np.diff(etas) > 0)


class TestDecode:
    def test_noiseless_identity(self, fig2):
        ks = fig2.protocol["codebook"]
        big = 10**12
        key = build_key(fig2.params, fig2.g, fig2.t_b, fig2.det, ks, fig2.t_end, None, READOUT)
        cb = Codebook.from_key(key, ks)
        cfg = RunConfig(big, READOUT, 0, 500.0, key.entries[0].t_k)
        free = key.meta["free_curve"].values * big
        for sym, k in cb.symbols:
            r = bob_decode(key.meta["curves"][k].values * big, free, cb, cfg)
            assert r.outcome == "symbol" and r.symbol == sym
            assert r.security_pass

    def test_accuracy_200(self, codebook, cfg, message):
        tr = roundtrip(codebook, message, cfg)
        assert tr.accuracy >= 0.99
        assert tr.security_pass_rate >= 0.99

    def test_few_particles_degrade(self, codebook, cfg, message):
        tr = roundtrip(codebook, message[:100], replace(cfg, n_particles=10))
        counts = tr.outcome_counts()
        assert counts["erasure"] + counts["ambiguous"] > counts["symbol"]

    def test_no_silent_symbols(self, codebook, cfg, message):
        tr = roundtrip(codebook, message[:100], replace(cfg, n_particles=10))
        for r in tr.results:
            if r.outcome != "symbol":
                assert r.symbol is None and r.security_pass is None


class TestSecurity:
    def _exact(self, codebook, k):
        e = codebook.key.lookup(k)
        return DecodedResult("symbol", codebook.symbol_of(k), k, e.eta, e.t_d, e.t_c, e.v_I)

    def test_exact_passes(self, codebook, cfg):
        assert security_check(self._exact(codebook, 1 / 500), codebook.key, cfg)

    def test_shifted_detection_fails(self, codebook, cfg):
        r = self._exact(codebook, 1 / 500)
        r = replace(r, t_d_hat=r.t_d_hat + 0.5 * (r.t_d_hat - cfg.t_k))
        assert not security_check(r, codebook.key, cfg)

    def test_detection_before_start_fails(self, codebook, cfg):
        r = replace(self._exact(codebook, 1 / 500), t_d_hat=cfg.t_k - 1.0)
        assert not security_check(r, codebook.key, cfg)

    def test_needs_symbol(self, codebook, cfg):
        with pytest.raises(ValueError):
            security_check(DecodedResult("erasure"), codebook.key, cfg)

    def test_standard_eve_detected(self, codebook, cfg):
        tr = roundtrip(codebook, [codebook.symbol_of(1 / 500)] * 100, cfg, eve=STANDARD_EVE)
        assert 1 - tr.security_pass_rate >= 0.90

    def test_tiny_eve_undetected(self, codebook, cfg):
        tr = roundtrip(codebook, [2] * 20, cfg, eve={"k_E": 1e-8, "x_E": 250.0})
        assert tr.accuracy == 1.0 and tr.security_pass_rate == 1.0


class TestEve:
    def test_absent_eve_is_alice(self, fig2):
        b = fig2.barrier(1 / 500)
        eve = eve_intercept(fig2.params, b, fig2.det, fig2.t_end, 0.0, 250.0)
        alice = arrival.barrier_curve(fig2.params, b, fig2.det, fig2.t_end)
        assert np.max(np.abs(eve.values - alice.values)) <= 1e-3

    def test_grid_route_agrees(self):
        params = PhysicalParams(1.0, -5.0, 0.5, 20.0)
        b = BarrierParams(0.05, 0.5, 4.0)
        det = DetectorParams(3.0)
        kw = dict(k_E=0.05, x_E=1.5, n_times=81)
        analytic = eve_intercept(params, b, det, 8.0, **kw)
        grid = eve_intercept(params, b, det, 8.0, method="grid", **kw,
                             grid_settings=dict(x_min=-60.0, x_max=60.0, n=2049, dt=0.0125))
        alice = arrival.barrier_curve(params, b, det, 8.0, 81)
        assert np.max(np.abs(analytic.values - grid.values)) <= 1e-4
        assert np.max(np.abs(analytic.values - alice.values)) > 1e-2

    def test_displaces_key_point(self, fig2, codebook):
        b = fig2.barrier(1 / 500)
        key = codebook.key
        curve = eve_intercept(fig2.params, b, fig2.det, fig2.t_end, **STANDARD_EVE)
        th = noise_threshold(key.meta["free_curve"], N, key.eps_dev)
        rep = arrival.analyze(curve, key.meta["free_curve"], fig2.params, b, th)
        ref = key.lookup(1 / 500)
        assert rep.t_d != ref.t_d and rep.eta != ref.eta

    @pytest.mark.parametrize("x_E", [0.0, 500.0, -10.0])
    def test_position_checked(self, fig2, x_E):
        with pytest.raises(ValueError):
            eve_intercept(fig2.params, fig2.barrier(1 / 500), fig2.det, fig2.t_end, 1e-3, x_E)

    def test_unknown_method(self, fig2):
        with pytest.raises(ValueError):
            eve_intercept(fig2.params, fig2.barrier(1 / 500), fig2.det, fig2.t_end, 1e-3, 250.0,
                          method="spectral")


class TestRoundtrip:
    def test_empty(self, codebook, cfg):
        tr = roundtrip(codebook, [], cfg)
        assert tr.results == [] and math.isnan(tr.accuracy)

    def test_single(self, codebook, cfg):
        tr = roundtrip(codebook, [3], cfg)
        assert tr.accuracy == 1.0 and tr.results[0].security_pass

    def test_deterministic(self, codebook, cfg, message):
        a = roundtrip(codebook, message[:20], cfg)
        b = roundtrip(codebook, message[:20], cfg)
        assert a.dumps() == b.dumps()

    def test_seed_matters(self, codebook, cfg, message):
        a = roundtrip(codebook, message[:20], cfg, keep_counts=True)
        b = roundtrip(codebook, message[:20], replace(cfg, seed=1), keep_counts=True)
        assert not np.array_equal(a.counts[0], b.counts[0])

    def test_json_records(self, codebook, cfg):
        tr = roundtrip(codebook, [0, 4], cfg)
        body = json.loads(tr.dumps(["a.csv", "b.csv"]))
        rec = body["symbols"][1]
        assert set(rec) >= {"sent_k", "counts_file", "eta_hat", "v_I_hat", "decoded", "security_pass"}
        assert rec["sent_k"] == 1 / 100 and rec["counts_file"] == "b.csv" and rec["decoded"] == 4
