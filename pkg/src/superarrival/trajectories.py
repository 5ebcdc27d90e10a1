"""Classical paths behind the wavefunction.

For a quadratic Lagrangian ``L = m qdot**2 / 2 + m w2(t) q**2 / 2`` the
propagator is exactly the Van Vleck form::

    K(x, x', t) = sqrt(i/(2 pi hbar) d2S/dx dx') exp(i S_cl / hbar)

so every point of the initial packet is carried along one classical path.
This module samples ensembles of such paths and builds ``K`` numerically by
shooting, without using the closed-form Gaussian.
"""

import csv
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .dynamics import BarrierParams, PhysicalParams, solve_segmented
from .errors import Caustic, NoConvergence, QuadratureNonConvergence

__all__ = [
    "EnsembleConfig",
    "Trajectory",
    "PropagatorSample",
    "sample_initial",
    "integrate_ensemble",
    "classical_action",
    "van_vleck",
    "propagate_by_kernel",
    "write_trajectories_csv",
]

_SHOOT_RTOL = 1e-11
_MAX_SECANT = 100
_PAIR_CHUNK = 60000


@dataclass(frozen=True)
class EnsembleConfig:
    n_traj: int
    seed: int
    t_grid: np.ndarray

    def __post_init__(self):
        if self.n_traj < 0:
            raise ValueError("n_traj must be >= 0")
        object.__setattr__(self, "t_grid", np.asarray(self.t_grid, dtype=float))


@dataclass(frozen=True)
class Trajectory:
    x_init: float
    times: np.ndarray
    q: np.ndarray

    def arrival_time(self, x_T: float) -> float:
        """First time the path reaches ``x_T`` (linear interpolation), or inf."""
        above = np.nonzero(self.q >= x_T)[0]
        if above.size == 0:
            return np.inf
        j = above[0]
        if j == 0:
            return float(self.times[0])
        t0, t1 = self.times[j - 1], self.times[j]
        q0, q1 = self.q[j - 1], self.q[j]
        return float(t0 + (x_T - q0) * (t1 - t0) / (q1 - q0))


@dataclass(frozen=True)
class PropagatorSample:
    x_src: float
    x_dst: float
    t0: float
    t: float
    s_cl: float
    d2s: float
    amplitude: complex


def sample_initial(params: PhysicalParams, cfg: EnsembleConfig) -> np.ndarray:
    """Initial positions drawn from ``|psi(x, t0)|**2`` (mean q0, variance alpha0**2/4m)."""
    rng = np.random.default_rng(cfg.seed)
    return rng.normal(params.q0, params.sigma0, size=cfg.n_traj)


def _path_rhs(params, barrier, with_action):
    m = params.m

    def f(t, y):
        w2 = 0.0 if barrier is None else barrier.k * np.exp(-barrier.g * (t - barrier.t_b) ** 2)
        n = (len(y) // 3) if with_action else (len(y) // 2)
        q, v = y[:n], y[n:2 * n]
        parts = [v, w2 * q]
        if with_action:
            parts.append(0.5 * m * (v * v + w2 * q * q))
        return np.concatenate(parts)

    return f


def integrate_ensemble(params: PhysicalParams, barrier: Optional[BarrierParams],
                       cfg: EnsembleConfig, x_init: Optional[np.ndarray] = None) -> List[Trajectory]:
    """Integrate ``q'' = w2(t) q`` from every sampled start with momentum ``p0``."""
    if x_init is None:
        x_init = sample_initial(params, cfg)
    x_init = np.asarray(x_init, dtype=float)
    n = x_init.size
    if n == 0:
        return []
    t_grid = cfg.t_grid
    y0 = np.concatenate([x_init, np.full(n, params.p0 / params.m)])
    _, _, dense = solve_segmented(_path_rhs(params, barrier, False), y0, params.t0,
                                  float(t_grid[-1]), barrier)
    q = dense(t_grid)[:n]
    return [Trajectory(float(x_init[i]), t_grid, q[i]) for i in range(n)]


def _endpoints(x_src, v0, t0, t1, params, barrier):
    """Final position and accumulated action for every ``(x_src, v0)`` pair."""
    n = x_src.size
    y0 = np.concatenate([x_src, v0, np.zeros(n)])
    _, y, _ = solve_segmented(_path_rhs(params, barrier, True), y0, t0, t1, barrier,
                              rtol=_SHOOT_RTOL, atol=1e-13, dense=False)
    y = y[:, -1]
    return y[:n], y[2 * n:]


def _shoot(x_src, x_dst, t0, t1, params, barrier):
    """Secant shooting on the initial velocity; vectorised over all pairs.

    Returns ``(action, initial_momentum)``.
    """
    x_src = np.asarray(x_src, dtype=float)
    x_dst = np.asarray(x_dst, dtype=float)
    tol = 1e-10 * (np.abs(x_dst) + 1.0)
    v_a = (x_dst - x_src) / (t1 - t0)
    v_b = v_a + 1e-3 * (1.0 + np.abs(v_a))
    e_a = _endpoints(x_src, v_a, t0, t1, params, barrier)[0] - x_dst
    q_b, s_b = _endpoints(x_src, v_b, t0, t1, params, barrier)
    e_b = q_b - x_dst
    for _ in range(_MAX_SECANT):
        done = np.abs(e_b) <= tol
        if done.all():
            return s_b, params.m * v_b
        slope = (e_b - e_a) / (v_b - v_a)
        if np.any(np.abs(slope) < 1e-12 * (t1 - t0)):
            raise Caustic("endpoint insensitive to initial velocity (focal point)")
        v_new = np.where(done, v_b, v_b - e_b / slope)
        v_a, e_a = v_b, e_b
        q_new, s_new = _endpoints(x_src, v_new, t0, t1, params, barrier)
        v_b, e_b, s_b = v_new, q_new - x_dst, s_new
        # pairs already converged keep their previous secant partner
        e_a = np.where(done, e_a - 1.0, e_a)
        v_a = np.where(done, v_a - 1.0, v_a)
    residual = float(np.max(np.abs(e_b)))
    raise NoConvergence(f"shooting did not converge in {_MAX_SECANT} iterations", residual)


def classical_action(x_src: float, x_dst: float, t0: float, t: float, params: PhysicalParams,
                     barrier: Optional[BarrierParams]):
    """Action of the classical path from ``x_src`` at ``t0`` to ``x_dst`` at ``t``.

    Returns ``(s_cl, p_src)`` with ``p_src`` the initial momentum of the path.
    """
    if not t > t0:
        raise ValueError("need t > t0")
    s, p = _shoot(np.array([x_src]), np.array([x_dst]), t0, t, params, barrier)
    return float(s[0]), float(p[0])


def _fd_step(x_dst):
    return 1e-2 * (1.0 + np.abs(x_dst))


def _kernel(x_src, x_dst, t0, t, params, barrier):
    """Vectorised ``(s_cl, d2s, K)`` for arrays of endpoint pairs."""
    h = _fd_step(x_dst)
    xs = np.concatenate([x_src, x_src, x_src])
    xd = np.concatenate([x_dst, x_dst + h, x_dst - h])
    s, p = _shoot(xs, xd, t0, t, params, barrier)
    n = x_src.size
    s_cl = s[:n]
    # dS/dx' = -p_src  =>  d2S/dx dx' = -dp_src/dx
    d2s = -(p[n:2 * n] - p[2 * n:]) / (2.0 * h)
    if np.any(d2s >= 0):
        raise Caustic("mixed derivative of the action changed sign")
    hb = params.hbar
    # branch continued from the free case, where d2s = -m/t < 0
    amp = np.exp(-0.25j * np.pi) * np.sqrt(-d2s / (2.0 * np.pi * hb)) * np.exp(1j * s_cl / hb)
    return s_cl, d2s, amp


def van_vleck(x_src: float, x_dst: float, t0: float, t: float, params: PhysicalParams,
              barrier: Optional[BarrierParams]) -> PropagatorSample:
    """Semiclassical (here exact) propagator between two points."""
    if not t > t0:
        raise ValueError("need t > t0")
    s, d2s, amp = _kernel(np.array([x_src], float), np.array([x_dst], float), t0, t, params, barrier)
    return PropagatorSample(float(x_src), float(x_dst), float(t0), float(t), float(s[0]),
                            float(d2s[0]), complex(amp[0]))


def _initial_psi(x, params):
    m, hb = params.m, params.hbar
    dq = x - params.q0
    return ((2.0 * m / (np.pi * params.alpha0_sq)) ** 0.25
            * np.exp(-m * dq * dq / params.alpha0_sq + 1j * params.p0 * dq / hb))


def _gauss_panels(a, b, n_panels, order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return x, w


def propagate_by_kernel(params: PhysicalParams, barrier: Optional[BarrierParams], t: float,
                        x_points: Sequence[float], rtol: float = 1e-7, n_panels: int = 8,
                        order: int = 24, max_refinements: int = 7,
                        width_sigmas: float = 10.0) -> np.ndarray:
    """``psi(x, t) = int K(x, x', t - t0) psi(x', t0) dx'`` for each ``x``.

    Composite Gauss-Legendre over ``[q0 - 10 sigma, q0 + 10 sigma]``; the
    panel count doubles until successive results agree to ``rtol`` relative
    to the largest amplitude. Raises :class:`QuadratureNonConvergence`
    otherwise.
    """
    x_points = np.atleast_1d(np.asarray(x_points, dtype=float))
    t0 = params.t0
    a = params.q0 - width_sigmas * params.sigma0
    b = params.q0 + width_sigmas * params.sigma0
    previous = None
    err = np.inf
    for _ in range(max_refinements + 1):
        xp, w = _gauss_panels(a, b, n_panels, order)
        weights = w * _initial_psi(xp, params)
        result = np.empty(x_points.size, dtype=complex)
        per_chunk = max(1, _PAIR_CHUNK // xp.size)
        for start in range(0, x_points.size, per_chunk):
            xs = x_points[start:start + per_chunk]
            src = np.tile(xp, xs.size)
            dst = np.repeat(xs, xp.size)
            _, _, amp = _kernel(src, dst, t0, t, params, barrier)
            result[start:start + xs.size] = amp.reshape(xs.size, xp.size) @ weights
        if previous is not None:
            scale = max(np.max(np.abs(result)), 1e-300)
            err = float(np.max(np.abs(result - previous)) / scale)
            if err <= rtol:
                return result
        previous = result
        n_panels *= 2
    raise QuadratureNonConvergence(f"kernel quadrature not converged (rel. change {err:.2e})", err)


def write_trajectories_csv(trajectories: Sequence[Trajectory], fh):
    """Write ``traj_id,t,q`` rows with 17 significant digits."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["traj_id", "t", "q"])
    for i, tr in enumerate(trajectories):
        for t, q in zip(tr.times, tr.q):
            writer.writerow([i, format(t, ".17g"), format(q, ".17g")])
