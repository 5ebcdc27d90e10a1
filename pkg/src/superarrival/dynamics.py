"""Exact Gaussian dynamics under a transient inverted-parabola barrier.

The barrier ``V(x, t) = -1/2 m k exp(-g (t - t_b)**2) x**2`` keeps a Gaussian
packet Gaussian. Its centre ``q``, momentum ``p``, width parameter ``alpha``
and phase ``phi`` obey the ODE system::

    q'     = p / m
    p'     = m w2(t) q
    alpha' = beta
    beta'  = w2(t) alpha + 4 hbar**2 / alpha**3
    phi'   = hbar / alpha**2

with ``w2(t) = k exp(-g (t - t_b)**2)``. The linear equation for ``q`` and the
nonlinear one for ``alpha`` form an Ermakov pair, which conserves
:func:`ermakov_invariant`.

Atomic units throughout; ``hbar`` defaults to 1.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationFailure

__all__ = [
    "PhysicalParams",
    "BarrierParams",
    "DynamicalState",
    "TrajectorySolution",
    "window",
    "omega_sq",
    "evolve_free",
    "free_solution",
    "evolve_barrier",
    "integrate_system",
    "free_flight",
    "solve_segmented",
    "ermakov_invariant",
]

DEFAULT_RTOL = 1e-12
DEFAULT_ATOL = 1e-14
# window factor below this is treated as exactly off when splitting the integration
_WINDOW_CUTOFF = 1e-17


@dataclass(frozen=True)
class PhysicalParams:
    """Initial Gaussian packet and constants (atomic units).

    ``alpha0_sq`` is the squared width parameter; the position standard
    deviation of the packet is ``alpha / (2 sqrt(m))``.
    """

    m: float
    q0: float
    p0: float
    alpha0_sq: float
    hbar: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        vals = (self.m, self.q0, self.p0, self.alpha0_sq, self.hbar, self.t0)
        if not all(np.isfinite(vals)):
            raise ValueError(f"non-finite physical parameter in {self}")
        if self.m <= 0 or self.alpha0_sq <= 0 or self.hbar <= 0:
            raise ValueError("m, alpha0_sq and hbar must be positive")

    @property
    def alpha0(self) -> float:
        return float(np.sqrt(self.alpha0_sq))

    @property
    def group_velocity(self) -> float:
        return self.p0 / self.m

    @property
    def sigma0(self) -> float:
        """Initial position standard deviation."""
        return self.alpha0 / (2.0 * np.sqrt(self.m))


@dataclass(frozen=True)
class BarrierParams:
    """Strength ``k``, window inverse squared width ``g`` and peak time ``t_b``."""

    k: float
    g: float
    t_b: float

    def __post_init__(self):
        if not all(np.isfinite((self.k, self.g, self.t_b))):
            raise ValueError(f"non-finite barrier parameter in {self}")
        if self.k < 0:
            raise ValueError("barrier strength k must be >= 0")
        if self.g <= 0:
            raise ValueError("window parameter g must be > 0")

    def half_span(self, cutoff: float = _WINDOW_CUTOFF) -> float:
        """Time from ``t_b`` beyond which the window factor is below ``cutoff``."""
        return float(np.sqrt(np.log(1.0 / cutoff) / self.g))


@dataclass(frozen=True)
class DynamicalState:
    """Everything needed to evaluate the Gaussian at time ``t``.

    Fields may be scalars or equally shaped arrays (a batch of times).
    """

    t: float
    q: float
    p: float
    alpha: float
    alpha_prime: float
    phi: float

    @classmethod
    def initial(cls, params: PhysicalParams) -> "DynamicalState":
        return cls(params.t0, params.q0, params.p0, params.alpha0, 0.0, 0.0)

    def as_vector(self) -> np.ndarray:
        return np.array([self.q, self.p, self.alpha, self.alpha_prime, self.phi])


def window(t, barrier: BarrierParams):
    """Gaussian time window ``exp(-g (t - t_b)**2)``, in (0, 1]."""
    return np.exp(-barrier.g * (np.asarray(t, dtype=float) - barrier.t_b) ** 2)


def omega_sq(t, barrier: Optional[BarrierParams]):
    """Squared barrier frequency ``k * window(t)``; zero without a barrier."""
    if barrier is None:
        return np.zeros_like(np.asarray(t, dtype=float))
    return barrier.k * window(t, barrier)


def evolve_free(params: PhysicalParams, t) -> DynamicalState:
    """Closed-form free evolution (``k = 0``).

    Accepts a scalar or an array of times ``t >= t0``.
    """
    tau = np.asarray(t, dtype=float) - params.t0
    if np.any(tau < 0):
        raise ValueError("evolve_free requires t >= t0")
    hb, a0s = params.hbar, params.alpha0_sq
    alpha_sq = a0s + 4.0 * hb**2 * tau**2 / a0s
    alpha = np.sqrt(alpha_sq)
    q = params.q0 + params.p0 * tau / params.m
    p = np.full_like(tau, params.p0)
    alpha_prime = 4.0 * hb**2 * tau / (a0s * alpha)
    phi = 0.5 * np.arctan(2.0 * hb * tau / a0s)
    if np.ndim(tau) == 0:
        return DynamicalState(float(t), float(q), float(p), float(alpha),
                              float(alpha_prime), float(phi))
    return DynamicalState(np.asarray(t, dtype=float), q, p, alpha, alpha_prime, phi)


@dataclass(frozen=True)
class TrajectorySolution:
    """Integrated (or closed-form) packet evolution with dense output.

    ``times`` and ``values`` hold the accepted integrator steps; ``values``
    has shape ``(5, len(times))`` with rows ``q, p, alpha, alpha', phi``.
    """

    params: PhysicalParams
    barrier: Optional[BarrierParams]
    times: np.ndarray
    values: np.ndarray
    _dense: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    @property
    def t_span(self):
        return float(self.times[0]), float(self.times[-1])

    @property
    def samples(self):
        return [DynamicalState(t, *col) for t, col in zip(self.times, self.values.T)]

    def state(self, t) -> DynamicalState:
        """Dense-output state at scalar or array ``t`` inside the span.

        Sample times return the stored sample bit-for-bit.
        """
        tt = np.asarray(t, dtype=float)
        t_lo, t_hi = self.t_span
        # tolerate round-off at the ends of the span
        slack = 1e-12 * max(1.0, abs(t_lo), abs(t_hi))
        if np.any(tt < t_lo - slack) or np.any(tt > t_hi + slack):
            raise ValueError(f"time outside integrated span [{t_lo}, {t_hi}]")
        flat = np.atleast_1d(tt).ravel()
        y = np.atleast_2d(self._dense(np.clip(flat, t_lo, t_hi)))
        idx = np.searchsorted(self.times, flat)
        idx = np.clip(idx, 0, len(self.times) - 1)
        exact = self.times[idx] == flat
        if exact.any():
            y = y.copy()
            y[:, exact] = self.values[:, idx[exact]]
        if tt.ndim == 0:
            return DynamicalState(float(tt), *(float(v) for v in y[:, 0]))
        y = y.reshape((5,) + tt.shape)
        return DynamicalState(tt, *y)


def free_solution(params: PhysicalParams, t_end: float, n_samples: int = 1001) -> TrajectorySolution:
    """Closed-form free evolution packaged as a :class:`TrajectorySolution`."""
    times = np.linspace(params.t0, t_end, n_samples)

    def dense(t):
        s = evolve_free(params, t)
        return np.array([s.q, s.p, s.alpha, s.alpha_prime, s.phi])

    return TrajectorySolution(params, None, times, dense(times), dense)


def _rhs(params: PhysicalParams, barrier: Optional[BarrierParams]):
    m, hb = params.m, params.hbar
    four_hb2 = 4.0 * hb * hb

    def f(t, y):
        q, p, a, b, _ = y
        w2 = 0.0 if barrier is None else barrier.k * np.exp(-barrier.g * (t - barrier.t_b) ** 2)
        return np.array([p / m, m * w2 * q, b, w2 * a + four_hb2 / a**3, hb / a**2])

    return f


def _breakpoints(t_start, t_end, barrier):
    """Split points isolating the barrier window so no step can jump over it."""
    lo, hi = min(t_start, t_end), max(t_start, t_end)
    pts = [lo, hi]
    if barrier is not None and barrier.k > 0:
        w = barrier.half_span()
        for edge in (barrier.t_b - w, barrier.t_b + w):
            if lo < edge < hi:
                pts.append(edge)
    pts = sorted(pts)
    if t_end < t_start:
        pts = pts[::-1]
    return pts


class _Piecewise:
    """Dense output stitched from consecutive solve_ivp segments."""

    def __init__(self, edges, interpolants, dim):
        self.edges = np.asarray(edges, dtype=float)
        self.interpolants = interpolants
        self.dim = dim
        self.increasing = self.edges[-1] >= self.edges[0]

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((self.dim, t.size))
        inner = self.edges[1:-1]
        if self.increasing:
            seg = np.searchsorted(inner, t, side="right")
        else:
            seg = np.searchsorted(-inner, -t, side="right")
        for i, interp in enumerate(self.interpolants):
            sel = seg == i
            if sel.any():
                out[:, sel] = interp(t[sel])
        return out


def solve_segmented(f, y0, t_start, t_end, barrier, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
                    dense=True, t_eval=None):
    """``solve_ivp`` (DOP853) split at the edges of the barrier window.

    Inside the window the step is capped at a quarter of the window width.
    With ``dense=False`` only the states at ``t_eval`` (or the final state)
    are kept, which keeps memory flat for large vectorised systems.
    Returns ``(times, values, dense_output_or_None)``.
    """
    pts = _breakpoints(t_start, t_end, barrier)
    y = np.asarray(y0, dtype=float)
    times, values, interps = [], [], []
    if dense:
        times.append(np.array([t_start]))
        values.append(y[:, None])
    for a, b in zip(pts[:-1], pts[1:]):
        kwargs = {}
        if barrier is not None and barrier.k > 0 and abs(0.5 * (a + b) - barrier.t_b) < barrier.half_span():
            kwargs["max_step"] = 0.25 / np.sqrt(barrier.g)
        if dense:
            kwargs["dense_output"] = True
        else:
            lo, hi = min(a, b), max(a, b)
            seg_eval = [b]
            if t_eval is not None:
                inside = [t for t in t_eval if lo <= t <= hi and t != a]
                seg_eval = sorted(set(inside) | {b}, reverse=b < a)
            kwargs["t_eval"] = seg_eval
        sol = solve_ivp(f, (a, b), y, method="DOP853", rtol=rtol, atol=atol, **kwargs)
        if not sol.success:
            raise IntegrationFailure(sol.message)
        if dense:
            times.append(sol.t[1:])
            values.append(sol.y[:, 1:])
            interps.append(sol.sol)
        else:
            times.append(sol.t)
            values.append(sol.y)
        y = sol.y[:, -1]
    t_all = np.concatenate(times)
    v_all = np.concatenate(values, axis=1)
    if not np.all(np.isfinite(v_all)):
        raise IntegrationFailure("non-finite values during integration")
    return t_all, v_all, (_Piecewise(pts, interps, len(y)) if dense else None)


def free_flight(params: PhysicalParams, y, t_from: float, t):
    """Exact free evolution of the packet state ``y`` from ``t_from`` to ``t``.

    Without a potential ``alpha**2`` is quadratic in time and the phase is
    an arctangent; valid forward and backward. Returns an array of shape
    ``(5, len(t))``.
    """
    q, p, a, b, phi = (float(v) for v in y)
    hb, m = params.hbar, params.m
    tau = np.atleast_1d(np.asarray(t, dtype=float)) - t_from
    c0, c1, c2 = a * a, 2.0 * a * b, b * b + 4.0 * hb * hb / (a * a)
    alpha = np.sqrt(c0 + tau * (c1 + c2 * tau))
    u0 = c1 / (4.0 * hb)
    u = (c1 + 2.0 * c2 * tau) / (4.0 * hb)
    # arctan(u) - arctan(u0) without cancellation; 1 + u u0 > 0 on free flight
    dphi = 0.5 * np.arctan((u - u0) / (1.0 + u * u0))
    return np.array([q + p * tau / m, np.full_like(tau, p), alpha,
                     (c1 + 2.0 * c2 * tau) / (2.0 * alpha), phi + dphi])


def _window_active(a, b, barrier):
    return (barrier is not None and barrier.k > 0
            and abs(0.5 * (a + b) - barrier.t_b) < barrier.half_span())


def integrate_system(params: PhysicalParams, barrier: Optional[BarrierParams], y0,
                     t_start: float, t_end: float, rtol: float = DEFAULT_RTOL,
                     atol: float = DEFAULT_ATOL, alpha_floor: Optional[float] = None,
                     free_samples: int = 64):
    """Integrate the packet ODEs from ``(t_start, y0)`` to ``t_end``.

    Stretches where the window factor is below the cutoff are propagated by
    :func:`free_flight`; only the window itself goes through the adaptive
    integrator. Works forward or backward in time. Returns
    ``(times, values, dense)``.
    """
    y = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite initial state")
    if alpha_floor is None:
        alpha_floor = 1e-8 * abs(y[2])
    pts = _breakpoints(t_start, t_end, barrier)
    f = _rhs(params, barrier)
    times, values, interps = [np.array([t_start])], [y[:, None]], []
    for a, b in zip(pts[:-1], pts[1:]):
        if _window_active(a, b, barrier):
            seg_t, seg_v, dense = solve_segmented(f, y, a, b, barrier, rtol, atol)
            seg_t, seg_v = seg_t[1:], seg_v[:, 1:]
        else:
            y_a = y.copy()

            def dense(t, y_a=y_a, a=a):
                return free_flight(params, y_a, a, t)

            seg_t = np.linspace(a, b, free_samples + 1)[1:]
            seg_v = dense(seg_t)
        times.append(seg_t)
        values.append(seg_v)
        interps.append(dense)
        y = seg_v[:, -1]
    t_all = np.concatenate(times)
    v_all = np.concatenate(values, axis=1)
    if not np.all(np.isfinite(v_all)):
        raise IntegrationFailure("non-finite values during integration")
    if np.min(v_all[2]) <= alpha_floor:
        raise IntegrationFailure(f"width parameter fell below positivity floor {alpha_floor}")
    return t_all, v_all, _Piecewise(pts, interps, 5)


def evolve_barrier(params: PhysicalParams, barrier: BarrierParams, t_end: float,
                   tol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> TrajectorySolution:
    """Integrate the Ermakov pair through the transient barrier.

    Parameters
    ----------
    params, barrier
        Packet and barrier definitions.
    t_end : float
        Final time, must exceed ``params.t0``.
    tol : float
        Relative local error tolerance of the embedded 8(5,3) Runge-Kutta pair.

    Returns
    -------
    TrajectorySolution
        Accepted steps plus dense output on ``[t0, t_end]``.
    """
    if not t_end > params.t0:
        raise ValueError("t_end must exceed t0")
    if not tol > 0:
        raise ValueError("tol must be positive")
    y0 = DynamicalState.initial(params).as_vector()
    times, values, dense = integrate_system(params, barrier, y0, params.t0, t_end, tol, atol)
    return TrajectorySolution(params, barrier, times, values, dense)


def ermakov_invariant(state: DynamicalState, params: PhysicalParams):
    """Ermakov-Lewis invariant of the ``(q, alpha)`` pair.

    ``I = 1/2 [ (q/alpha)**2 + ((alpha q' - alpha' q) / (2 hbar))**2 ]`` with
    ``q' = p/m``. Constant along any exact trajectory.
    """
    qdot = np.asarray(state.p) / params.m
    a = np.asarray(state.alpha)
    wronskian = a * qdot - np.asarray(state.alpha_prime) * np.asarray(state.q)
    return 0.5 * ((np.asarray(state.q) / a) ** 2 + (wronskian / (2.0 * params.hbar)) ** 2)
