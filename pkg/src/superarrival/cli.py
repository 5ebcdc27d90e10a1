"""Command-line runner: each subcommand writes CSV or JSON for external plotting.

CSV outputs start with one ``#`` line carrying the package version, command,
seed and full configuration; JSON outputs carry the same data under
``"version"``, ``"command"``, ``"seed"`` and ``"config"``.
"""

import argparse
import csv
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__, arrival, protocol
from .dynamics import evolve_barrier, evolve_free, free_solution
from .errors import SuperarrivalError
from .grid import Grid, PotentialSpec, compare, evolve_grid, init_gaussian
from .scenarios import PRESETS, Scenario, header_line, load_config
from .trajectories import EnsembleConfig, integrate_ensemble, write_trajectories_csv
from .wavepacket import transmission

DEFAULT_SEED = 0


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _json_meta(scenario: Scenario, command: str, seed) -> dict:
    return {"version": __version__, "command": command, "seed": seed, "config": scenario.to_dict()}


def cmd_transmission(scenario: Scenario, fh):
    """Columns ``t, T_free`` and one ``T_k=<k>`` column per strength, ordered by ``k``."""
    params, det = scenario.params, scenario.det
    times = scenario.times
    free = np.asarray(transmission(evolve_free(params, times), params, det))
    ks = sorted(scenario.k_list)
    cols = [arrival.barrier_curve(params, scenario.barrier(k), det, scenario.t_end,
                                  scenario.n_times).values for k in ks]
    fh.write(header_line(scenario, "transmission") + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "T_free"] + [f"T_k={_fmt(k)}" for k in ks])
    for i, t in enumerate(times):
        w.writerow([_fmt(t), _fmt(free[i])] + [_fmt(c[i]) for c in cols])


def cmd_sweep(scenario: Scenario, fh):
    """Key table over ``scenario.k_list``."""
    table = arrival.sweep_k(scenario.params, scenario.g, scenario.t_b, scenario.det,
                            scenario.k_list, scenario.t_end, scenario.eps_dev, scenario.eps_w,
                            scenario.n_times)
    fh.write(header_line(scenario, "sweep") + "\n")
    table.write_csv(fh)


def cmd_trajectories(scenario: Scenario, fh, seed: int = DEFAULT_SEED, n: Optional[int] = None):
    """Seeded ensemble of classical paths, ``traj_id,t,q`` rows."""
    opts = scenario.trajectories
    n = int(opts.get("n_traj", 200) if n is None else n)
    k = float(opts.get("k", 0.0))
    barrier = scenario.barrier(k) if k > 0 else None
    cfg = EnsembleConfig(n, seed, scenario.times)
    paths = integrate_ensemble(scenario.params, barrier, cfg)
    fh.write(header_line(scenario, "trajectories", seed) + "\n")
    write_trajectories_csv(paths, fh)


def oracle_reports(scenario: Scenario):
    """Grid-versus-analytic comparison for every ``k`` in the grid settings."""
    gs = scenario.grid
    params = scenario.params
    t_end = float(gs.get("t_end", scenario.t_end))
    grid = Grid(float(gs["x_min"]), float(gs["x_max"]), int(gs["n"]))
    times = np.linspace(params.t0, t_end, int(gs.get("output_times", 101)))
    v = float(gs.get("frame_velocity", params.group_velocity))
    out = []
    for k in gs.get("k_list", [0.0]):
        k = float(k)
        pot = PotentialSpec.single(k, scenario.g, scenario.t_b)
        state0 = init_gaussian(grid, params, frame_velocity=v)
        states = evolve_grid(state0, pot, t_end, float(gs["dt"]), times, gs.get("scheme", "compact"))
        sol = evolve_barrier(params, scenario.barrier(k), t_end) if k > 0 \
            else free_solution(params, t_end)
        rep = compare(sol, states, scenario.x_T)
        out.append({"k": k, **rep.as_dict(),
                    "norm_drift": max(abs(s.norm() - states[0].norm()) for s in states)})
    return out


def cmd_oracle_compare(scenario: Scenario, fh):
    body = {**_json_meta(scenario, "oracle-compare", None), "reports": oracle_reports(scenario)}
    json.dump(body, fh, indent=2)
    fh.write("\n")


def cmd_protocol(scenario: Scenario, fh, seed: int = DEFAULT_SEED,
                 counts_dir: Optional[str] = None):
    """Encode a message, simulate counting, decode and security-check each symbol."""
    opts = scenario.protocol
    params, det = scenario.params, scenario.det
    ks = sorted(float(k) for k in opts.get("codebook", scenario.k_list))
    n = int(opts.get("n_particles", 100000))
    eps = float(opts.get("eps_dev", protocol.PROTOCOL_EPS_DEV))
    readout = np.linspace(params.t0, scenario.t_end, int(opts.get("n_readout", 4001)))
    key = protocol.build_key(params, scenario.g, scenario.t_b, det, ks, scenario.t_end, n,
                             readout, eps, scenario.eps_w)
    codebook = protocol.Codebook.from_key(key, ks)
    message = opts.get("message")
    if message is None:
        message = np.random.default_rng(seed).integers(0, len(ks), 20).tolist()
    cfg = protocol.RunConfig(n, readout, seed, scenario.x_T, key.entries[0].t_k,
                             float(opts.get("delta_sec", 0.05)), eps)
    transcript = protocol.roundtrip(codebook, message, cfg, eve=opts.get("eve"),
                                    keep_counts=counts_dir is not None)
    files = None
    if counts_dir is not None:
        os.makedirs(counts_dir, exist_ok=True)
        files = []
        for i, counts in enumerate(transcript.counts):
            path = os.path.join(counts_dir, f"symbol_{i:04d}.csv")
            with open(path, "w") as cf:
                cf.write(header_line(scenario, "protocol", seed) + "\n")
                w = csv.writer(cf, lineterminator="\n")
                w.writerow(["t", "count"])
                w.writerows([_fmt(t), int(c)] for t, c in zip(readout, counts))
            files.append(path)
    meta = _json_meta(scenario, "protocol", seed)
    meta["key"] = [dict(zip(arrival.KEYTABLE_HEADER, row)) for row in key.rows()]
    fh.write(transcript.dumps(files, **meta))
    fh.write("\n")


def _scenario_from_args(args) -> Scenario:
    if args.preset is None and args.config is None:
        raise ValueError("give --preset or --config")
    scenario = load_config(args.config, args.preset)
    over = {}
    if args.x_detector is not None:
        over["x_T"] = args.x_detector
    if args.eps_dev is not None:
        over["eps_dev"] = args.eps_dev
        if args.command == "protocol":
            over["protocol"] = {"eps_dev": args.eps_dev}
    return scenario.updated(over) if over else scenario


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="superarrival", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("transmission", "sweep", "trajectories", "oracle-compare", "protocol"):
        s = sub.add_parser(name)
        s.add_argument("--preset", choices=sorted(PRESETS))
        s.add_argument("--config", help="JSON configuration file")
        s.add_argument("--out", help="output path (default: stdout)")
        s.add_argument("--seed", type=int, default=DEFAULT_SEED)
        s.add_argument("--x-detector", type=float, dest="x_detector")
        s.add_argument("--eps-dev", type=float, dest="eps_dev")
        if name == "trajectories":
            s.add_argument("-n", type=int, default=None, help="number of paths")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        scenario = _scenario_from_args(args)
        fh = open(args.out, "w", newline="") if args.out else sys.stdout
        try:
            if args.command == "transmission":
                cmd_transmission(scenario, fh)
            elif args.command == "sweep":
                cmd_sweep(scenario, fh)
            elif args.command == "trajectories":
                cmd_trajectories(scenario, fh, args.seed, args.n)
            elif args.command == "oracle-compare":
                cmd_oracle_compare(scenario, fh)
            else:
                counts_dir = None if not args.out else os.path.splitext(args.out)[0] + "_counts"
                cmd_protocol(scenario, fh, args.seed, counts_dir)
        finally:
            if fh is not sys.stdout:
                fh.close()
    except (SuperarrivalError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0
