"""Named parameter sets and JSON configuration for reproducible runs."""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Tuple

import numpy as np

from . import __version__
from .arrival import DEFAULT_EPS_DEV, DEFAULT_EPS_W
from .dynamics import BarrierParams, PhysicalParams
from .wavepacket import DetectorParams

__all__ = ["Scenario", "PRESETS", "preset", "load_config", "header_line"]

_SECTION_KEYS = {
    "grid": {"x_min", "x_max", "n", "dt", "scheme", "frame_velocity", "k_list", "output_times",
             "t_end"},
    "trajectories": {"n_traj", "k"},
    "protocol": {"codebook", "message", "n_particles", "delta_sec", "eps_dev", "n_readout", "eve"},
}
_EVE_KEYS = {"k_E", "x_E", "g_E", "t_E", "method"}


@dataclass(frozen=True)
class Scenario:
    """Everything a command needs besides its seed.

    ``grid``, ``trajectories`` and ``protocol`` hold per-command settings as
    plain dicts; missing entries take command defaults.
    """

    name: str
    m: float
    q0: float
    p0: float
    alpha0_sq: float
    g: float
    t_b: float
    k_list: Tuple[float, ...]
    x_T: float
    t_end: float
    n_times: int
    eps_dev: float = DEFAULT_EPS_DEV
    eps_w: float = DEFAULT_EPS_W
    hbar: float = 1.0
    grid: dict = field(default_factory=dict)
    trajectories: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "k_list", tuple(float(k) for k in self.k_list))
        # builds and validates the physical objects eagerly
        self.params
        DetectorParams(self.x_T)
        if self.n_times < 2:
            raise ValueError("n_times must be >= 2")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")

    @property
    def params(self) -> PhysicalParams:
        return PhysicalParams(self.m, self.q0, self.p0, self.alpha0_sq, self.hbar)

    @property
    def det(self) -> DetectorParams:
        return DetectorParams(self.x_T)

    def barrier(self, k: float) -> BarrierParams:
        return BarrierParams(k, self.g, self.t_b)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_times)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k_list"] = list(self.k_list)
        return d

    def updated(self, overrides: dict) -> "Scenario":
        """Copy with ``overrides`` applied; unknown keys raise ``ValueError``."""
        _check_keys(overrides)
        merged = {}
        for key, val in overrides.items():
            if key in _SECTION_KEYS:
                merged[key] = {**getattr(self, key), **val}
            else:
                merged[key] = val
        return replace(self, **merged)


def _check_keys(data: dict):
    known = {f.name for f in fields(Scenario)}
    unknown = set(data) - known - {"preset"}
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    for section, allowed in _SECTION_KEYS.items():
        sub = data.get(section, {})
        if not isinstance(sub, dict):
            raise ValueError(f"section {section!r} must be an object")
        bad = set(sub) - allowed
        if bad:
            raise ValueError(f"unknown keys in {section!r}: {sorted(bad)}")
    eve = data.get("protocol", {}).get("eve")
    if eve is not None and set(eve) - _EVE_KEYS:
        raise ValueError(f"unknown keys in 'eve': {sorted(set(eve) - _EVE_KEYS)}")


PRESETS = {
    "fig1": Scenario(
        name="fig1", m=5e4, q0=-1e3, p0=10.0, alpha0_sq=1e7, g=1e-10, t_b=5e6,
        k_list=tuple(n * 1e-11 for n in (1, 3, 6, 9, 15)), x_T=5e5, t_end=4e9, n_times=20001,
        grid={}, trajectories={"n_traj": 200, "k": 9e-11},
        protocol={"codebook": [n * 1e-11 for n in (1, 3, 6, 9, 15)]},
    ),
    "fig2": Scenario(
        name="fig2", m=1.0, q0=-1e3, p0=2.0, alpha0_sq=5.0, g=1 / 500, t_b=500.0,
        k_list=(1 / 10000, 1 / 5000, 1 / 2500, 1 / 1000, 1 / 500, 1 / 200, 1 / 100),
        x_T=500.0, t_end=1000.0, n_times=4001,
        grid={"x_min": -3000.0, "x_max": 4000.0, "n": 2**14, "dt": 0.05, "scheme": "compact",
              "k_list": [0.0], "output_times": 151, "t_end": 750.0},
        trajectories={"n_traj": 200, "k": 1 / 500},
        protocol={"codebook": [1 / 2500, 1 / 1000, 1 / 500, 1 / 200, 1 / 100]},
    ),
}


def preset(name: str) -> Scenario:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def load_config(path: Optional[str], base: Optional[str] = None) -> Scenario:
    """Scenario from a JSON file, optionally layered over a preset.

    The preset comes from ``base`` or the file's own ``"preset"`` key. Without
    a preset every scalar field must be present in the file.
    """
    data = {}
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("configuration must be a JSON object")
    _check_keys(data)
    name = base or data.get("preset")
    data = {k: v for k, v in data.items() if k != "preset"}
    if name is not None:
        return preset(name).updated(data)
    return Scenario(**data)


def header_line(scenario: Scenario, command: str, seed: Optional[int] = None) -> str:
    """Single ``#`` comment line with version, command, seed and configuration."""
    cfg = json.dumps(scenario.to_dict(), sort_keys=True, separators=(",", ":"))
    return f"# superarrival {__version__} command={command} seed={seed} config={cfg}"
