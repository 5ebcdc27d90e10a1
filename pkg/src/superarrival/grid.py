"""Crank-Nicolson grid solver for the 1D time-dependent Schroedinger equation.

An independent check on the analytic Gaussian: it knows nothing about
Ermakov systems and handles any sum of transient quadratic terms, including
off-centre ones that the analytic single-barrier path does not model.

Two options matter for accuracy at desk-scale resolution:

``scheme``
    ``"standard"`` uses the 3-point Laplacian (second order in ``dx``);
    ``"compact"`` uses the Numerov-type operator ``M^-1 D2`` with
    ``M = I + dx**2/12 D2`` (fourth order in ``dx``). Both stay tridiagonal
    and exactly unitary.
``frame_velocity``
    The wavefunction is carried in a Galilean frame moving at this velocity,
    ``psi(x, t) = exp(i (m v x - m v**2 tau / 2) / hbar) chi(x - v tau, t)``.
    Choosing the packet group velocity removes the carrier oscillation,
    which is what limits Crank-Nicolson's phase accuracy.

Boundaries are hard walls; :func:`evolve_grid` aborts with
:class:`~superarrival.errors.EdgeLeak` before they can matter.
"""

import csv
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import lapack

from .dynamics import PhysicalParams, TrajectorySolution
from .errors import EdgeLeak, SupportOverflow
from .wavepacket import DetectorParams, TransmissionCurve, psi, transmission

__all__ = [
    "Grid",
    "GridState",
    "PotentialSpec",
    "init_gaussian",
    "step",
    "evolve_grid",
    "transmission_grid",
    "compare",
    "write_snapshot_csv",
]

EDGE_DENSITY_LIMIT = 1e-10
_EDGE_POINTS = 8


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.n < 256:
            raise ValueError("grid needs at least 256 points")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)


@dataclass(frozen=True)
class PotentialSpec:
    """Sum of transient inverted parabolas.

    Each term is ``(k, g, t_peak, x_center)`` and contributes
    ``-1/2 m k exp(-g (t - t_peak)**2) (x - x_center)**2``.
    """

    terms: Tuple[Tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        terms = tuple(tuple(float(v) for v in term) for term in self.terms)
        for k, g, tp, xc in terms:
            if not np.all(np.isfinite((k, g, tp, xc))):
                raise ValueError("non-finite potential term")
            if k < 0 or g <= 0:
                raise ValueError("each term needs k >= 0 and g > 0")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def single(cls, k, g, t_b, x_center=0.0):
        return cls(((k, g, t_b, x_center),))

    def evaluate(self, x, t, m):
        v = np.zeros_like(np.asarray(x, dtype=float))
        for k, g, tp, xc in self.terms:
            w = k * np.exp(-g * (t - tp) ** 2)
            if w != 0.0:
                v = v - 0.5 * m * w * (x - xc) ** 2
        return v

    def is_off(self, t, cutoff=1e-300):
        return all(k * np.exp(-g * (t - tp) ** 2) < cutoff for k, g, tp, _ in self.terms)


@dataclass(frozen=True)
class GridState:
    """Wavefunction samples in the (possibly moving) frame of the grid.

    ``values`` live on ``grid.x`` in frame coordinates; the lab position of
    grid point ``i`` is ``grid.x[i] + frame_velocity * (t - t_ref)``.
    """

    t: float
    values: np.ndarray = field(repr=False)
    grid: Grid
    params: PhysicalParams
    frame_velocity: float = 0.0
    t_ref: float = 0.0

    @property
    def shift(self) -> float:
        return self.frame_velocity * (self.t - self.t_ref)

    @property
    def lab_x(self) -> np.ndarray:
        return self.grid.x + self.shift

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dx)

    def lab_values(self) -> np.ndarray:
        """Lab-frame wavefunction on :attr:`lab_x`."""
        m, hb, v = self.params.m, self.params.hbar, self.frame_velocity
        if v == 0.0:
            return self.values
        tau = self.t - self.t_ref
        x = self.lab_x
        return np.exp(1j * (m * v * x - 0.5 * m * v * v * tau) / hb) * self.values

    def edge_density(self) -> float:
        d = np.abs(self.values[:_EDGE_POINTS]) ** 2
        e = np.abs(self.values[-_EDGE_POINTS:]) ** 2
        return float(max(d.max(), e.max()))


def init_gaussian(grid: Grid, params: PhysicalParams, frame_velocity: float = 0.0) -> GridState:
    """Sample the initial Gaussian on ``grid``.

    Raises :class:`SupportOverflow` unless ``q0 +- 12 sigma`` fits inside.
    """
    sigma = params.sigma0
    if params.q0 - 12 * sigma < grid.x_min or params.q0 + 12 * sigma > grid.x_max:
        raise SupportOverflow(f"packet support q0 +- 12 sigma exceeds [{grid.x_min}, {grid.x_max}]")
    m, hb = params.m, params.hbar
    x = grid.x
    dq = x - params.q0
    amp = (2.0 * m / (np.pi * params.alpha0_sq)) ** 0.25 * np.exp(-m * dq * dq / params.alpha0_sq)
    # lab carrier p0, minus the frame boost m v x at tau = 0
    phase = (params.p0 * dq - m * frame_velocity * x) / hb
    return GridState(params.t0, amp * np.exp(1j * phase), grid, params, frame_velocity, params.t0)


def _stencil(scheme):
    if scheme == "standard":
        return 1.0, 0.0
    if scheme == "compact":
        return 10.0 / 12.0, 1.0 / 12.0
    raise ValueError(f"unknown scheme {scheme!r}")


class _CrankNicolson:
    """Reusable stepping kernel; caches the LU factors while the potential is off."""

    def __init__(self, grid, params, pot, scheme, frame_velocity, t_ref):
        self.x = grid.x
        self.m = params.m
        self.hb = params.hbar
        self.m0, self.m1 = _stencil(scheme)
        self.a = -self.hb * self.hb / (2.0 * self.m * grid.dx ** 2)
        self.pot = pot
        self.v_frame = frame_velocity
        self.t_ref = t_ref
        self._free_cache = {}

    def _bands(self, v, tau):
        # (M H)[i, i] = -2a + m0 V_i ; (M H)[i, i+1] = a + m1 V_{i+1} ; (M H)[i+1, i] = a + m1 V_i
        m0, m1, a = self.m0, self.m1, self.a
        h_diag = -2.0 * a + m0 * v
        h_up = a + m1 * v[1:]
        h_lo = a + m1 * v[:-1]
        lhs = (m1 + tau * h_lo, m0 + tau * h_diag, m1 + tau * h_up)
        rhs = (m1 - tau * h_lo, m0 - tau * h_diag, m1 - tau * h_up)
        return lhs, rhs

    @staticmethod
    def _apply(bands, u):
        lo, diag, up = bands
        out = diag * u
        out[:-1] += up * u[1:]
        out[1:] += lo * u[:-1]
        return out

    def __call__(self, u, t, dt):
        tau = 1j * dt / (2.0 * self.hb)
        t_mid = t + 0.5 * dt
        if self.pot.is_off(t_mid):
            key = dt
            if key not in self._free_cache:
                lhs, rhs = self._bands(np.zeros_like(self.x), tau)
                dl, d, du, du2, ipiv, info = lapack.zgttrf(*lhs)
                if info != 0:
                    raise np.linalg.LinAlgError(f"tridiagonal factorisation failed (info={info})")
                self._free_cache = {key: ((dl, d, du, du2, ipiv), rhs)}
            factors, rhs = self._free_cache[key]
            new, info = lapack.zgttrs(*factors, self._apply(rhs, u))
        else:
            x_lab = self.x + self.v_frame * (t_mid - self.t_ref)
            v = self.pot.evaluate(x_lab, t_mid, self.m)
            lhs, rhs = self._bands(v, tau)
            _, _, _, new, info = lapack.zgtsv(*lhs, self._apply(rhs, u))
        if info != 0:
            raise np.linalg.LinAlgError(f"tridiagonal solve failed (info={info})")
        return new


def step(state: GridState, pot: PotentialSpec, dt: float, scheme: str = "compact") -> GridState:
    """One Crank-Nicolson step with the potential sampled at ``t + dt/2``.

    Solves ``(M + i dt/2hbar M H) psi' = (M - i dt/2hbar M H) psi`` where
    ``M H = -hbar**2/2m D2 / dx**2 + M V`` is tridiagonal.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    kernel = _CrankNicolson(state.grid, state.params, pot, scheme, state.frame_velocity, state.t_ref)
    return replace(state, t=state.t + dt, values=kernel(state.values, state.t, dt))


def evolve_grid(state0: GridState, pot: PotentialSpec, t_end: float, dt: float,
                output_times: Optional[Sequence[float]] = None, scheme: str = "compact",
                edge_limit: float = EDGE_DENSITY_LIMIT, check_every: int = 10) -> List[GridState]:
    """Step from ``state0`` to ``t_end`` and return the states at ``output_times``.

    Output times default to ``[t_end]``; each interval between outputs is cut
    into equal steps no longer than ``dt`` so every output lands exactly.
    The edge density is checked every ``check_every`` steps and at every
    output; exceeding ``edge_limit`` raises :class:`EdgeLeak`.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if output_times is None:
        output_times = [t_end]
    outs = sorted(float(t) for t in output_times)
    if outs and (outs[0] < state0.t or outs[-1] > t_end + 1e-12 * max(1.0, abs(t_end))):
        raise ValueError("output times must lie in [t0, t_end]")
    kernel = _CrankNicolson(state0.grid, state0.params, pot, scheme, state0.frame_velocity,
                            state0.t_ref)
    states = []
    state = state0
    for t_out in outs:
        span = t_out - state.t
        n_steps = int(np.ceil(span / dt - 1e-9)) if span > 0 else 0
        if n_steps:
            h = span / n_steps
            u, t = state.values, state.t
            for i in range(n_steps):
                u = kernel(u, t, h)
                t = state.t + (i + 1) * h
                if (i + 1) % check_every == 0:
                    _guard(replace(state, t=t, values=u), edge_limit)
            state = replace(state, t=t_out, values=u)
        _guard(state, edge_limit)
        states.append(state)
    return states


def _guard(state, limit):
    e = state.edge_density()
    if e > limit:
        raise EdgeLeak(f"edge density {e:.3e} exceeds {limit:.1e} at t={state.t}", state.t, e)


def transmission_grid(state: GridState, x_T: float) -> float:
    """Trapezoid estimate of the probability beyond lab position ``x_T``.

    The partial cell containing ``x_T`` is handled by linear interpolation
    of the density.
    """
    xs = state.lab_x
    if not xs[0] <= x_T <= xs[-1]:
        raise ValueError(f"x_T={x_T} outside the grid [{xs[0]}, {xs[-1]}]")
    dens = np.abs(state.values) ** 2
    dx = state.grid.dx
    if x_T >= xs[-1]:
        return 0.0
    i = int(np.searchsorted(xs, x_T, side="right"))  # first node strictly right of x_T
    i = max(i, 1)
    frac = (x_T - xs[i - 1]) / dx
    d_cut = dens[i - 1] + frac * (dens[i] - dens[i - 1])
    partial = 0.5 * (d_cut + dens[i]) * (xs[i] - x_T)
    tail = np.sum(0.5 * (dens[i:-1] + dens[i + 1:])) * dx
    return float(partial + tail)


def grid_transmission_curve(states: Sequence[GridState], det: DetectorParams,
                            source="grid") -> TransmissionCurve:
    """Empirical transmission curve from a sequence of grid states."""
    times = np.array([s.t for s in states])
    values = np.array([transmission_grid(s, det.x_T) for s in states])
    return TransmissionCurve.from_samples(det, source, times, values)


@dataclass(frozen=True)
class ComparisonReport:
    times: np.ndarray
    T_analytic: np.ndarray
    T_grid: np.ndarray
    l2_errors: np.ndarray

    @property
    def max_dT(self) -> float:
        return float(np.max(np.abs(self.T_analytic - self.T_grid)))

    @property
    def max_l2(self) -> float:
        return float(np.max(self.l2_errors))

    def as_dict(self):
        return {
            "times": self.times.tolist(),
            "T_analytic": self.T_analytic.tolist(),
            "T_grid": self.T_grid.tolist(),
            "l2_errors": self.l2_errors.tolist(),
            "max_abs_dT": self.max_dT,
            "max_l2": self.max_l2,
        }


def l2_distance_up_to_phase(a: np.ndarray, b: np.ndarray, dx: float) -> float:
    """``min_theta || a - exp(i theta) b ||`` on a uniform grid."""
    overlap = np.abs(np.vdot(b, a))
    sq = np.vdot(a, a).real + np.vdot(b, b).real - 2.0 * overlap
    return float(np.sqrt(max(sq, 0.0) * dx))


def compare(sol: TrajectorySolution, states: Sequence[GridState], x_T: float) -> ComparisonReport:
    """Transmission and wavefunction differences between analytic and grid runs."""
    if not states:
        raise ValueError("no grid states to compare")
    if states[0].params != sol.params:
        raise ValueError("grid run and analytic solution use different physical parameters")
    det = DetectorParams(x_T)
    times, ta, tg, l2 = [], [], [], []
    for s in states:
        st = sol.state(s.t)
        times.append(s.t)
        ta.append(float(transmission(st, sol.params, det)))
        tg.append(transmission_grid(s, x_T))
        exact = psi(s.lab_x, st, sol.params)
        l2.append(l2_distance_up_to_phase(s.lab_values(), exact, s.grid.dx))
    return ComparisonReport(np.array(times), np.array(ta), np.array(tg), np.array(l2))


def write_snapshot_csv(state: GridState, fh):
    """Dump ``x,re,im,density`` rows (lab frame) with 17 significant digits."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["x", "re", "im", "density"])
    vals = state.lab_values()
    for x, v in zip(state.lab_x, vals):
        writer.writerow([format(x, ".17g"), format(v.real, ".17g"), format(v.imag, ".17g"),
                         format(abs(v) ** 2, ".17g")])
