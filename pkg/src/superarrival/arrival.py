"""Superarrival detection, magnitude and information velocity.

Given a perturbed transmission curve ``T_k`` and the free one ``T_f`` at the
same detector:

* ``t_k``  -- the barrier window first exceeds a small threshold,
* ``t_d``  -- the two curves first differ by more than ``eps_dev``,
* ``t_c``  -- the perturbed curve falls back onto the free one,
* ``eta``  -- relative excess of ``int T_k`` over ``int T_f`` on ``[t_d, t_c]``,
* ``v_I``  -- ``D / (t_d - t_k)`` with ``D`` the barrier-to-detector distance.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy.integrate import simpson

from .dynamics import DEFAULT_RTOL, BarrierParams, PhysicalParams, evolve_barrier, free_solution
from .errors import DegenerateWindow, NoCrossing, NoDeviation, OrderingViolation, SuperarrivalError
from .wavepacket import DetectorParams, TransmissionCurve, transmission_curve

__all__ = [
    "SuperarrivalReport",
    "KeyTable",
    "perturbation_start",
    "detect_deviation",
    "detect_crossing",
    "eta",
    "information_velocity",
    "analyze",
    "sweep_k",
    "KEYTABLE_HEADER",
]

DEFAULT_EPS_DEV = 1e-4
DEFAULT_EPS_W = 1e-3
MIN_SIMPSON_PANELS = 2000
KEYTABLE_HEADER = ["k", "eta", "v_I", "v_ratio", "t_k", "t_d", "t_c", "status"]

Threshold = Union[float, Callable[[np.ndarray], np.ndarray]]


def perturbation_start(barrier: BarrierParams, eps_w: float = DEFAULT_EPS_W) -> float:
    """Earliest time at which the barrier window exceeds ``eps_w``."""
    if not 0.0 < eps_w < 1.0:
        raise ValueError("eps_w must lie in (0, 1)")
    return barrier.t_b - math.sqrt(math.log(1.0 / eps_w) / barrier.g)


def _threshold(eps_dev: Threshold, t):
    if callable(eps_dev):
        return np.asarray(eps_dev(t), dtype=float)
    return np.full_like(np.asarray(t, dtype=float), float(eps_dev))


def _bisect(fun, lo, hi, resolution):
    """Shrink ``[lo, hi]`` around the first point where ``fun`` turns True."""
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if fun(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _check_pair(curve_k: TransmissionCurve, curve_f: TransmissionCurve):
    if curve_k.det != curve_f.det:
        raise ValueError("curves refer to different detectors")
    if len(curve_k.times) != len(curve_f.times) or np.any(curve_k.times != curve_f.times):
        raise ValueError("curves must share their time grid")


def detect_deviation(curve_k: TransmissionCurve, curve_f: TransmissionCurve,
                     eps_dev: Threshold = DEFAULT_EPS_DEV, rel_resolution: float = 1e-6) -> float:
    """First time at which ``|T_k - T_f|`` exceeds ``eps_dev``.

    ``eps_dev`` may be a constant or a callable giving a time-dependent
    threshold. The grid crossing is refined by bisection on the continuous
    evaluators to ``rel_resolution`` times the span.
    """
    _check_pair(curve_k, curve_f)
    times = curve_k.times
    exceeds = np.abs(curve_k.values - curve_f.values) > _threshold(eps_dev, times)
    if not exceeds.any():
        raise NoDeviation(f"|T_k - T_f| never exceeds the threshold (source={curve_k.source})")
    i = int(np.argmax(exceeds))
    if i == 0:
        return float(times[0])
    resolution = rel_resolution * (times[-1] - times[0])

    def above(t):
        return abs(float(curve_k(t)) - float(curve_f(t))) > float(_threshold(eps_dev, t))

    return _bisect(above, float(times[i - 1]), float(times[i]), resolution)


def detect_crossing(curve_k: TransmissionCurve, curve_f: TransmissionCurve, t_d: float,
                    rel_resolution: float = 1e-6) -> float:
    """First time after ``t_d`` at which ``T_k - T_f`` returns to zero."""
    _check_pair(curve_k, curve_f)
    times = curve_k.times
    resolution = rel_resolution * (times[-1] - times[0])
    if float(curve_k(t_d)) - float(curve_f(t_d)) <= 0.0:
        raise NoCrossing("perturbed curve is not above the free curve at t_d")
    after = times > t_d
    diff = curve_k.values[after] - curve_f.values[after]
    flipped = diff <= 0.0
    if not flipped.any():
        raise NoCrossing("T_k - T_f keeps its sign up to the end of the span")
    j = int(np.argmax(flipped))
    t_hi = float(times[after][j])
    t_lo = float(times[after][j - 1]) if j > 0 else t_d

    def below(t):
        return float(curve_k(t)) - float(curve_f(t)) <= 0.0

    return _bisect(below, t_lo, t_hi, resolution)


def _integrals(curve_k, curve_f, t_d, t_c, panels):
    panels = max(int(panels), MIN_SIMPSON_PANELS)
    panels += panels % 2
    t = np.linspace(t_d, t_c, panels + 1)
    return float(simpson(curve_k(t), x=t)), float(simpson(curve_f(t), x=t))


def eta(curve_k: TransmissionCurve, curve_f: TransmissionCurve, t_d: float, t_c: float,
        panels: int = MIN_SIMPSON_PANELS, resolution: Optional[float] = None):
    """Superarrival magnitude ``(I_k - I_f) / I_f`` over ``[t_d, t_c]``.

    Returns ``(eta, I_k, I_f)``.
    """
    if resolution is None:
        lo, hi = curve_k.t_span
        resolution = 1e-6 * (hi - lo)
    if not t_c - t_d > resolution:
        raise DegenerateWindow(f"window [{t_d}, {t_c}] shorter than resolution {resolution}")
    i_k, i_f = _integrals(curve_k, curve_f, t_d, t_c, panels)
    return (i_k - i_f) / i_f, i_k, i_f


def information_velocity(t_d: float, t_k: float, distance: float, v_g: float):
    """``v_I = D / (t_d - t_k)`` and its ratio to the group velocity."""
    if not t_d > t_k:
        raise ValueError("information velocity needs t_d > t_k")
    if not distance > 0:
        raise ValueError("distance must be positive")
    v_i = distance / (t_d - t_k)
    return v_i, v_i / v_g


@dataclass(frozen=True)
class SuperarrivalReport:
    k: float
    status: str = "ok"
    t_k: float = math.nan
    t_d: float = math.nan
    t_c: float = math.nan
    delta_t: float = math.nan
    I_k: float = math.nan
    I_f: float = math.nan
    eta: float = math.nan
    D: float = math.nan
    v_I: float = math.nan
    v_ratio: float = math.nan

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def analyze(curve_k: TransmissionCurve, curve_f: TransmissionCurve, params: PhysicalParams,
            barrier: BarrierParams, eps_dev: Threshold = DEFAULT_EPS_DEV,
            eps_w: float = DEFAULT_EPS_W, panels: int = MIN_SIMPSON_PANELS) -> SuperarrivalReport:
    """Full report for one perturbed curve; raises on detection failure."""
    t_k = perturbation_start(barrier, eps_w)
    t_d = detect_deviation(curve_k, curve_f, eps_dev)
    t_c = detect_crossing(curve_k, curve_f, t_d)
    mag, i_k, i_f = eta(curve_k, curve_f, t_d, t_c, panels)
    if not t_d > t_k:
        raise OrderingViolation(f"deviation at t_d={t_d:.6g} precedes t_k={t_k:.6g}")
    distance = curve_k.det.x_T  # barrier centred at x = 0
    v_i, ratio = information_velocity(t_d, t_k, distance, params.group_velocity)
    return SuperarrivalReport(barrier.k, "ok", t_k, t_d, t_c, t_c - t_d, i_k, i_f, mag,
                              distance, v_i, ratio)


@dataclass(frozen=True)
class KeyTable:
    """Shared ``k -> (eta, v_I)`` table, sorted by ``k``.

    Failed detections stay in the table with a non-``ok`` status.
    """

    entries: List[SuperarrivalReport]
    params: PhysicalParams
    g: float
    t_b: float
    det: DetectorParams
    eps_dev: float = DEFAULT_EPS_DEV
    eps_w: float = DEFAULT_EPS_W
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ks = [e.k for e in self.entries]
        if ks != sorted(ks) or len(set(ks)) != len(ks):
            raise ValueError("key table entries must have distinct, sorted k")

    @property
    def ok_entries(self):
        return [e for e in self.entries if e.ok]

    def lookup(self, k: float) -> SuperarrivalReport:
        for e in self.entries:
            if e.k == k:
                return e
        raise KeyError(k)

    def rows(self):
        out = []
        for e in self.entries:
            out.append([e.k, e.eta, e.v_I, e.v_ratio, e.t_k, e.t_d, e.t_c, e.status])
        return out

    def write_csv(self, fh):
        """Write the table with 17 significant digits, one row per ``k``."""
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(KEYTABLE_HEADER)
        for row in self.rows():
            writer.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])


def _time_grid(params, t_end, n_times):
    return np.linspace(params.t0, t_end, n_times)


def free_curve(params: PhysicalParams, det: DetectorParams, t_end: float,
               n_times: int = 4001) -> TransmissionCurve:
    grid = _time_grid(params, t_end, n_times)
    return transmission_curve(free_solution(params, t_end), det, grid, source="free")


def barrier_curve(params: PhysicalParams, barrier: BarrierParams, det: DetectorParams,
                  t_end: float, n_times: int = 4001, tol: float = DEFAULT_RTOL) -> TransmissionCurve:
    grid = _time_grid(params, t_end, n_times)
    sol = evolve_barrier(params, barrier, t_end, tol=tol)
    return transmission_curve(sol, det, grid, source=barrier.k)


def sweep_k(params: PhysicalParams, g: float, t_b: float, det: DetectorParams,
            k_list: Sequence[float], t_end: float, eps_dev: Threshold = DEFAULT_EPS_DEV,
            eps_w: float = DEFAULT_EPS_W, n_times: int = 4001,
            panels: int = MIN_SIMPSON_PANELS) -> KeyTable:
    """Analyse every barrier strength in ``k_list`` and assemble a key table.

    Strengths that fail detection are kept and flagged with the error name.
    """
    ks = sorted(float(k) for k in k_list)
    if len(set(ks)) != len(ks):
        raise ValueError("k_list must contain distinct values")
    if any(k < 0 for k in ks):
        raise ValueError("k_list must be non-negative")
    curve_f = free_curve(params, det, t_end, n_times)
    reports = []
    for k in ks:
        barrier = BarrierParams(k, g, t_b)
        try:
            curve_k = barrier_curve(params, barrier, det, t_end, n_times)
            reports.append(analyze(curve_k, curve_f, params, barrier, eps_dev, eps_w, panels))
        except SuperarrivalError as exc:
            reports.append(SuperarrivalReport(k, type(exc).__name__,
                                              t_k=perturbation_start(barrier, eps_w)))
    eps_meta = eps_dev if not callable(eps_dev) else math.nan
    return KeyTable(reports, params, g, t_b, det, eps_meta, eps_w)
