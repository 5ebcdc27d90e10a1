"""Gaussian wavefunction, density and time-resolved transmission.

All functions are vectorised over ``x`` and over batched
:class:`~superarrival.dynamics.DynamicalState` fields.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import DynamicalState, PhysicalParams, TrajectorySolution
from .special import erfc

__all__ = [
    "DetectorParams",
    "TransmissionCurve",
    "psi",
    "density",
    "transmission",
    "transmission_curve",
]


@dataclass(frozen=True)
class DetectorParams:
    """Detector position ``x_T``; it counts everything in ``[x_T, inf)``."""

    x_T: float

    def __post_init__(self):
        if not np.isfinite(self.x_T):
            raise ValueError("detector position must be finite")


def psi(x, state: DynamicalState, params: PhysicalParams):
    """Complex amplitude of the evolving Gaussian at ``x``.

    The initial phase constant is fixed by ``phi(t0) = 0``.
    """
    m, hb = params.m, params.hbar
    x = np.asarray(x, dtype=float)
    dx = x - state.q
    a = state.alpha
    norm = (2.0 * m / (np.pi * a * a)) ** 0.25
    width = m / (a * a) - 1j * m * state.alpha_prime / (2.0 * hb * a)
    phase = (state.p * dx / hb
             + (state.p * state.q - params.p0 * params.q0) / (2.0 * hb)
             - state.phi)
    return norm * np.exp(-dx * dx * width + 1j * phase)


def density(x, state: DynamicalState, params: PhysicalParams):
    """Probability density ``|psi|**2``."""
    m = params.m
    a = state.alpha
    dx = np.asarray(x, dtype=float) - state.q
    return np.sqrt(2.0 * m / (np.pi * a * a)) * np.exp(-2.0 * m * dx * dx / (a * a))


def transmission(state: DynamicalState, params: PhysicalParams, det: DetectorParams):
    """Probability beyond the detector, ``1/2 erfc(sqrt(2m) (x_T - q) / alpha)``."""
    z = np.sqrt(2.0 * params.m) * (det.x_T - np.asarray(state.q)) / np.asarray(state.alpha)
    return 0.5 * erfc(z)


@dataclass(frozen=True)
class TransmissionCurve:
    """Time-sampled ``T(x_T, t)`` with a continuous evaluator.

    ``source`` is ``"free"`` or the barrier strength ``k`` that produced it.
    ``evaluator`` maps an array of times to transmission values; for
    empirical (counted) curves it interpolates the samples.
    """

    det: DetectorParams
    source: object
    times: np.ndarray
    values: np.ndarray
    evaluator: Callable

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("curve times must be strictly increasing")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("transmission values must lie in [0, 1]")

    def __call__(self, t):
        return self.evaluator(t)

    @property
    def t_span(self):
        return float(self.times[0]), float(self.times[-1])

    @classmethod
    def from_samples(cls, det: DetectorParams, source, times, values) -> "TransmissionCurve":
        """Curve defined by samples alone, evaluated by linear interpolation."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)

        def evaluator(t):
            return np.interp(t, times, values)

        return cls(det, source, times, values, evaluator)


def transmission_curve(sol: TrajectorySolution, det: DetectorParams, t_grid,
                       source: Optional[object] = None) -> TransmissionCurve:
    """Sample the transmission of ``sol`` on ``t_grid``.

    The returned evaluator uses the dense output of ``sol`` so crossing
    times can be refined below the grid spacing.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    lo, hi = sol.t_span
    if t_grid[0] < lo or t_grid[-1] > hi:
        raise ValueError(f"time grid [{t_grid[0]}, {t_grid[-1]}] outside solution span [{lo}, {hi}]")
    params = sol.params
    if source is None:
        source = "free" if sol.barrier is None else sol.barrier.k

    def evaluator(t):
        return transmission(sol.state(t), params, det)

    return TransmissionCurve(det, source, t_grid, np.asarray(evaluator(t_grid)), evaluator)
