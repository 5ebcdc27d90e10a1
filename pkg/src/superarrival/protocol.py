"""Alice/Bob signalling through superarrival, with an eavesdropper check.

Alice encodes a symbol as a barrier strength ``k``. Bob counts particles at
the detector, compares with his pre-recorded free-case counts, measures
``eta`` and ``t_d`` and decodes ``k`` from the shared key table. The pair
``(k, v_I)`` must then sit on the key's ``v_I(k)`` curve, otherwise the run
is rejected as tampered.

Counting noise uses one uniform draw per particle compared against
``T(t)`` at every readout, so cumulative counts are monotone wherever ``T``
is.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import arrival
from .arrival import KeyTable, SuperarrivalReport
from .dynamics import DEFAULT_ATOL, DEFAULT_RTOL, BarrierParams, DynamicalState, PhysicalParams
from .errors import AmbiguousDecode, IntegrationFailure, SuperarrivalError
from .wavepacket import DetectorParams, TransmissionCurve, transmission

__all__ = [
    "Codebook",
    "RunConfig",
    "DecodedResult",
    "Transcript",
    "noise_threshold",
    "build_key",
    "simulate_detection",
    "bob_decode",
    "security_check",
    "eve_intercept",
    "roundtrip",
]

NOISE_SIGMAS = 4.0
SEPARATION_SIGMAS = 5.0
# deviation threshold for counted runs; well above the binomial floor at
# N ~ 1e5 so that t_d jitter stays below the security tolerance
PROTOCOL_EPS_DEV = 1e-2


@dataclass(frozen=True)
class RunConfig:
    """Per-run settings Alice and Bob agree on in advance."""

    n_particles: int
    readout_times: np.ndarray
    seed: int
    d: float
    t_k: float
    delta_sec: float = 0.05
    eps_dev: float = PROTOCOL_EPS_DEV

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        rt = np.asarray(self.readout_times, dtype=float)
        if np.any(np.diff(rt) <= 0):
            raise ValueError("readout grid must be strictly increasing")
        object.__setattr__(self, "readout_times", rt)


def noise_threshold(curve_f: TransmissionCurve, n_particles: Optional[int],
                    eps_dev: float = arrival.DEFAULT_EPS_DEV):
    """Deviation threshold raised to the binomial noise floor of the free curve.

    ``n_particles=None`` means noiseless counting and returns ``eps_dev``.
    """
    if n_particles is None:
        return eps_dev

    def threshold(t):
        tf = np.clip(np.asarray(curve_f(t), dtype=float), 0.0, 1.0)
        return np.maximum(eps_dev, NOISE_SIGMAS * np.sqrt(tf * (1.0 - tf) / n_particles))

    return threshold


def _eta_noise(report: SuperarrivalReport, curve_k, curve_f, n_particles, n_nodes=400):
    """Standard error of ``eta`` from quantile-coupled counting noise.

    Counts at two readouts of one run have covariance
    ``(min(T_i, T_j) - T_i T_j) / N``; the free and perturbed runs are
    independent.
    """
    if n_particles is None:
        return 0.0
    t = np.linspace(report.t_d, report.t_c, n_nodes)
    w = np.full(n_nodes, t[1] - t[0])
    w[[0, -1]] *= 0.5

    def var_integral(values):
        v = np.clip(values, 0.0, 1.0)
        cov = (np.minimum.outer(v, v) - np.outer(v, v)) / n_particles
        return float(w @ cov @ w)

    i_f = report.I_f
    var = var_integral(curve_k(t)) + (1.0 + report.eta) ** 2 * var_integral(curve_f(t))
    return math.sqrt(var) / i_f


def build_key(params: PhysicalParams, g: float, t_b: float, det: DetectorParams,
              k_list: Sequence[float], t_end: float, n_particles: Optional[int],
              readout_times=None, eps_dev: float = PROTOCOL_EPS_DEV,
              eps_w: float = arrival.DEFAULT_EPS_W) -> KeyTable:
    """Key table calibrated for counting with ``n_particles`` per run.

    Detection uses the same noise-floor threshold Bob applies to counts, so
    the tabulated ``eta`` and ``v_I`` are what Bob measures on average.
    The ``eta`` noise at that ``N`` is stored in ``meta["eta_noise"]``.
    """
    if readout_times is None:
        readout_times = np.linspace(params.t0, t_end, 4001)
    grid = np.asarray(readout_times, dtype=float)
    curve_f = arrival.free_curve(params, det, t_end, len(grid))
    threshold = noise_threshold(curve_f, n_particles, eps_dev)
    ks = sorted(float(k) for k in k_list)
    if len(set(ks)) != len(ks):
        raise ValueError("k_list must contain distinct values")
    reports, noise, curves = [], {}, {}
    for k in ks:
        barrier = BarrierParams(k, g, t_b)
        try:
            curve_k = arrival.barrier_curve(params, barrier, det, t_end, len(grid))
            rep = arrival.analyze(curve_k, curve_f, params, barrier, threshold, eps_w)
            noise[k] = _eta_noise(rep, curve_k, curve_f, n_particles)
            curves[k] = curve_k
        except SuperarrivalError as exc:
            rep = SuperarrivalReport(k, type(exc).__name__,
                                     t_k=arrival.perturbation_start(barrier, eps_w))
        reports.append(rep)
    meta = {"n_particles": n_particles, "eta_noise": noise, "curves": curves, "free_curve": curve_f,
            "t_end": t_end}
    return KeyTable(reports, params, g, t_b, det, eps_dev, eps_w, meta)


@dataclass(frozen=True)
class Codebook:
    """Symbol ids mapped to barrier strengths taken from a key table.

    Construction fails unless adjacent ``eta`` values are separated by more
    than five times the ``eta`` estimation noise recorded in the key.
    """

    symbols: List[tuple]
    key: KeyTable = field(repr=False)

    def __post_init__(self):
        ks = [k for _, k in self.symbols]
        if len(set(ks)) != len(ks):
            raise ValueError("codebook strengths must be distinct")
        ids = [s for s, _ in self.symbols]
        if len(set(ids)) != len(ids):
            raise ValueError("codebook symbol ids must be distinct")
        noise = self.key.meta.get("eta_noise", {})
        entries = sorted((self.key.lookup(k) for k in ks), key=lambda e: e.k)
        for e in entries:
            if not e.ok:
                raise ValueError(f"key entry for k={e.k} has status {e.status}")
        for a, b in zip(entries[:-1], entries[1:]):
            sep = abs(b.eta - a.eta)
            sigma = max(noise.get(a.k, 0.0), noise.get(b.k, 0.0))
            if not sep > SEPARATION_SIGMAS * sigma:
                raise ValueError(f"eta separation {sep:.3g} between k={a.k} and k={b.k} "
                                 f"is not above {SEPARATION_SIGMAS} x noise {sigma:.3g}")

    @classmethod
    def from_key(cls, key: KeyTable, ks: Sequence[float]) -> "Codebook":
        return cls([(i, float(k)) for i, k in enumerate(sorted(ks))], key)

    def k_of(self, symbol) -> float:
        return dict(self.symbols)[symbol]

    def symbol_of(self, k: float):
        for s, kk in self.symbols:
            if kk == k:
                return s
        raise KeyError(k)


@dataclass(frozen=True)
class DecodedResult:
    """Bob's reading of one run.

    ``outcome`` is ``"symbol"``, ``"erasure"`` or ``"ambiguous"``; only the
    first carries a decoded symbol and a security verdict.
    """

    outcome: str
    symbol: Optional[int] = None
    k_hat: float = math.nan
    eta_hat: float = math.nan
    t_d_hat: float = math.nan
    t_c_hat: float = math.nan
    v_I_hat: float = math.nan
    security_pass: Optional[bool] = None
    reason: str = ""


def simulate_detection(curve: TransmissionCurve, cfg: RunConfig, seed: Optional[int] = None) -> np.ndarray:
    """Cumulative detector counts at ``cfg.readout_times``.

    Particle ``i`` draws ``u_i ~ U(0, 1)`` once and is counted at ``t_j`` iff
    ``u_i <= T(t_j)``.
    """
    lo, hi = curve.t_span
    rt = cfg.readout_times
    if rt[0] < lo or rt[-1] > hi:
        raise ValueError("readout times outside the curve span")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    u = np.sort(rng.random(cfg.n_particles))
    t_vals = np.clip(np.asarray(curve(rt), dtype=float), 0.0, 1.0)
    return np.searchsorted(u, t_vals, side="right")


def _empirical(counts, cfg, det, source):
    return TransmissionCurve.from_samples(det, source, cfg.readout_times,
                                          np.asarray(counts, dtype=float) / cfg.n_particles)


def _decode_eta(eta_hat, codebook: Codebook, noise_at_n):
    ks = [k for _, k in codebook.symbols]
    etas = np.array([codebook.key.lookup(k).eta for k in ks])
    sig = np.array([noise_at_n(k) for k in ks])
    near = np.abs(etas - eta_hat) <= sig
    if near.sum() >= 2:
        raise AmbiguousDecode(f"eta_hat={eta_hat:.4g} within noise of {int(near.sum())} entries")
    i = int(np.argmin(np.abs(etas - eta_hat)))
    return codebook.symbols[i][0], ks[i]


def bob_decode(counts, counts_free_reference, codebook: Codebook, cfg: RunConfig) -> DecodedResult:
    """Estimate ``t_d, t_c, eta`` from counts and decode the nearest codebook ``k``.

    Detection failures become erasures; an ``eta`` estimate within noise of
    two codebook entries becomes an ambiguous outcome. Neither carries a
    symbol.
    """
    key = codebook.key
    det = key.det
    n = cfg.n_particles
    t_hat_k = _empirical(counts, cfg, det, "counts")
    t_hat_f = _empirical(counts_free_reference, cfg, det, "free")
    threshold = noise_threshold(t_hat_f, n, cfg.eps_dev)
    try:
        t_d = arrival.detect_deviation(t_hat_k, t_hat_f, threshold)
        t_c = arrival.detect_crossing(t_hat_k, t_hat_f, t_d)
        eta_hat, _, _ = arrival.eta(t_hat_k, t_hat_f, t_d, t_c)
    except SuperarrivalError as exc:
        return DecodedResult("erasure", reason=type(exc).__name__)
    v_hat = cfg.d / (t_d - cfg.t_k) if t_d > cfg.t_k else math.inf

    key_n = key.meta.get("n_particles")
    base_noise = key.meta.get("eta_noise", {})

    def noise_at_n(k):
        # eta noise scales as N^-1/2 from the key's calibration point
        if key_n is None or n is None:
            return 0.0
        return base_noise.get(k, 0.0) * math.sqrt(key_n / n)

    try:
        symbol, k_hat = _decode_eta(eta_hat, codebook, noise_at_n)
    except AmbiguousDecode as exc:
        return DecodedResult("ambiguous", eta_hat=eta_hat, t_d_hat=t_d, t_c_hat=t_c,
                             v_I_hat=v_hat, reason=str(exc))
    result = DecodedResult("symbol", symbol, k_hat, eta_hat, t_d, t_c, v_hat)
    return DecodedResult(**{**asdict(result), "security_pass": security_check(result, key, cfg)})


def security_check(result: DecodedResult, key: KeyTable, cfg: RunConfig) -> bool:
    """True iff the measured ``v_I`` lies within ``delta_sec`` of ``v_I(k_hat)``."""
    if result.outcome != "symbol":
        raise ValueError("security check needs a decoded symbol")
    v_ref = key.lookup(result.k_hat).v_I
    if result.t_d_hat > cfg.t_k:
        v_hat = cfg.d / (result.t_d_hat - cfg.t_k)
    else:
        return False
    return abs(v_hat - v_ref) / v_ref <= cfg.delta_sec


def _two_center_rhs(params, terms):
    m, hb = params.m, params.hbar
    four_hb2 = 4.0 * hb * hb

    def f(t, y):
        q, p, a, b = y
        w = [k * math.exp(-g * (t - tp) ** 2) for k, g, tp, _ in terms]
        w2 = sum(w)
        pull = sum(wi * xc for wi, (_, _, _, xc) in zip(w, terms))
        return [p / m, m * (w2 * q - pull), b, w2 * a + four_hb2 / a**3]

    return f


def eve_intercept(params: PhysicalParams, barrier: BarrierParams, det: DetectorParams,
                  t_end: float, k_E: float, x_E: float, g_E: Optional[float] = None,
                  t_E: Optional[float] = None, n_times: int = 4001, method: str = "analytic",
                  grid_settings: Optional[dict] = None) -> TransmissionCurve:
    """Transmission curve when Eve adds a transient parabola centred at ``x_E``.

    ``g_E`` and ``t_E`` default to Alice's window. The total potential is
    still quadratic in ``x``, so ``method="analytic"`` integrates the exact
    Gaussian with the extra linear force ``-m k_E w_E(t) x_E``.
    ``method="grid"`` runs the Crank-Nicolson solver instead (feasible only
    for weak barriers at desk-scale resolution).
    """
    if not 0.0 < x_E < det.x_T:
        raise ValueError("Eve must sit strictly between the barrier and the detector")
    g_E = barrier.g if g_E is None else g_E
    t_E = barrier.t_b if t_E is None else t_E
    terms = ((barrier.k, barrier.g, barrier.t_b, 0.0), (k_E, g_E, t_E, x_E))
    times = np.linspace(params.t0, t_end, n_times)
    source = f"eve(k={barrier.k},k_E={k_E},x_E={x_E})"
    if method == "grid":
        from .grid import Grid, PotentialSpec, evolve_grid, grid_transmission_curve, init_gaussian
        gs = dict(x_min=-3000.0, x_max=4000.0, n=2**14, dt=0.05, scheme="compact")
        gs.update(grid_settings or {})
        state0 = init_gaussian(Grid(gs["x_min"], gs["x_max"], gs["n"]), params,
                               frame_velocity=gs.get("frame_velocity", params.group_velocity))
        states = evolve_grid(state0, PotentialSpec(terms), t_end, gs["dt"], times, gs["scheme"])
        return grid_transmission_curve(states, det, source)
    if method != "analytic":
        raise ValueError(f"unknown method {method!r}")
    spans = [(tp - math.sqrt(39.0 / g), tp + math.sqrt(39.0 / g)) for k, g, tp, _ in terms if k > 0]
    max_step = min([0.25 / math.sqrt(g) for k, g, _, _ in terms if k > 0], default=np.inf)
    y0 = [params.q0, params.p0, params.alpha0, 0.0]
    f = _two_center_rhs(params, terms)
    # one segment through all windows with a bounded step, free flight elsewhere
    lo = max(params.t0, min((s[0] for s in spans), default=params.t0))
    hi = min(t_end, max((s[1] for s in spans), default=params.t0))
    pts = sorted({params.t0, t_end, *(p for p in (lo, hi) if params.t0 < p < t_end)})
    interps, y = [], y0
    for a, b in zip(pts[:-1], pts[1:]):
        kw = {"max_step": max_step} if (a >= lo and b <= hi and spans) else {}
        sol = solve_ivp(f, (a, b), y, method="DOP853", rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
                        dense_output=True, **kw)
        if not sol.success:
            raise IntegrationFailure(sol.message)
        interps.append((a, b, sol.sol))
        y = sol.y[:, -1]

    def evaluator(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((4, t.size))
        for i, (a, b, s) in enumerate(interps):
            sel = (t >= a) & ((t < b) | (i == len(interps) - 1))
            if sel.any():
                out[:, sel] = s(t[sel])
        st = DynamicalState(t, out[0], out[1], out[2], out[3], np.zeros_like(t))
        val = transmission(st, params, det)
        return val if val.size > 1 else float(val[0])

    return TransmissionCurve(det, source, times, np.asarray(evaluator(times)), evaluator)


@dataclass
class Transcript:
    sent: List[int]
    sent_k: List[float]
    results: List[DecodedResult]
    counts: List[np.ndarray] = field(repr=False, default_factory=list)

    @property
    def accuracy(self) -> float:
        if not self.sent:
            return math.nan
        ok = sum(r.outcome == "symbol" and r.symbol == s for s, r in zip(self.sent, self.results))
        return ok / len(self.sent)

    @property
    def security_pass_rate(self) -> float:
        decoded = [r for r in self.results if r.outcome == "symbol"]
        if not decoded:
            return math.nan
        return sum(bool(r.security_pass) for r in decoded) / len(decoded)

    def outcome_counts(self):
        out = {"symbol": 0, "erasure": 0, "ambiguous": 0}
        for r in self.results:
            out[r.outcome] += 1
        return out

    def to_json_records(self, counts_files: Optional[Sequence[str]] = None):
        records = []
        for i, (k, r) in enumerate(zip(self.sent_k, self.results)):
            records.append({
                "sent_k": k,
                "counts_file": None if counts_files is None else counts_files[i],
                "eta_hat": None if math.isnan(r.eta_hat) else r.eta_hat,
                "v_I_hat": None if not math.isfinite(r.v_I_hat) else r.v_I_hat,
                "decoded": r.symbol,
                "outcome": r.outcome,
                "security_pass": r.security_pass,
            })
        return records

    def dumps(self, counts_files=None, **extra) -> str:
        body = {"symbols": self.to_json_records(counts_files), "accuracy": self.accuracy,
                "security_pass_rate": self.security_pass_rate,
                "outcomes": self.outcome_counts(), **extra}
        return json.dumps(body, indent=2, allow_nan=False, default=_json_default)


def _json_default(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    raise TypeError(f"cannot serialise {type(obj)}")


def _derive_seed(seed: int, index: int, stream: int) -> int:
    ss = np.random.SeedSequence([seed, stream, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def roundtrip(codebook: Codebook, message: Sequence[int], cfg: RunConfig,
              eve: Optional[dict] = None, keep_counts: bool = False) -> Transcript:
    """Encode, propagate, count, decode and security-check every symbol.

    Seeds for each symbol's counts (and Bob's free reference) derive from
    ``cfg.seed`` and the symbol index, so transcripts are reproducible.
    ``eve`` holds :func:`eve_intercept` keyword arguments
    (``k_E``, ``x_E`` and optionally ``g_E``, ``t_E``, ``method``).
    """
    key = codebook.key
    params, det = key.params, key.det
    t_end = key.meta.get("t_end", float(cfg.readout_times[-1]))
    curve_f = key.meta.get("free_curve") or arrival.free_curve(params, det, t_end)
    cache = {}

    def alice_curve(k):
        if k not in cache:
            barrier = BarrierParams(k, key.g, key.t_b)
            if eve is None:
                cache[k] = key.meta.get("curves", {}).get(k) or \
                    arrival.barrier_curve(params, barrier, det, t_end)
            else:
                cache[k] = eve_intercept(params, barrier, det, t_end, **eve)
        return cache[k]

    sent_k, results, counts_all = [], [], []
    for i, sym in enumerate(message):
        k = codebook.k_of(sym)
        counts = simulate_detection(alice_curve(k), cfg, _derive_seed(cfg.seed, i, 0))
        ref = simulate_detection(curve_f, cfg, _derive_seed(cfg.seed, i, 1))
        results.append(bob_decode(counts, ref, codebook, cfg))
        sent_k.append(k)
        if keep_counts:
            counts_all.append(counts)
    return Transcript(list(message), sent_k, results, counts_all)
