"""Scenario-driven command line front end.

Subcommands
-----------
validate <scenario>             check every precondition a run would hit
simulate <scenario>... [--out]  integrate and write trajectory/monitor CSVs
energy <scenario> <state-file>  print all energy components at one state
ph-check <scenario>             structure report + sampled RHS equivalence
equilibrium <scenario>          solve for a steady state, report Hessian

Exit codes: 0 success, 2 invalid scenario, 3 assumption or
dissipation-margin violation, 4 numerical failure, 64 usage error.

Scenario files are strict JSON; the schema is documented in the README.
Disturbances are piecewise-constant input schedules (matching the
constant-input setting the passivity certificates assume), not topology
events.  The MACHNET_LOG environment variable (error|info|debug) controls
logging verbosity.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import ph as ph_mod
from .energy import energy_components, total_energy
from .errors import (AssumptionError, EquilibriumError, GridError, MachnetError,
                     OrderError, ParameterError, ScenarioError, SimulationError)
from .machines import (ORDER_BLOCKS, MultiMachine, multimachine_rhs,
                       stack_inputs, unstack_inputs)
from .network import build_grid
from .params import StandardParams, derive_standard, FundamentalParams, psd_timescale_check
from .sim import Trajectory, integrate, write_trajectory_csv

EXIT_OK = 0
EXIT_INVALID_SCENARIO = 2
EXIT_ASSUMPTION = 3
EXIT_NUMERICAL = 4
EXIT_USAGE = 64

log = logging.getLogger("machnet")

_DEFAULT_OMEGA_S = 2.0 * math.pi * 50.0
_ALIGN_TOL = 1e-9


@dataclass
class Schedule:
    """Piecewise-constant vector schedule: value j applies on [t_j, t_{j+1})."""

    times: np.ndarray
    values: np.ndarray

    def at(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(idx, 0)]


@dataclass
class Scenario:
    order: int
    omega_s: float
    system: MultiMachine
    P_m: Schedule
    E_f: Schedule | None
    initial: object  # "equilibrium" or dict of block arrays
    perturbation: dict
    t_end: float
    method: str
    step: float
    rtol: float
    atol: float
    sample_dt: float
    trajectory_name: str
    monitors_name: str

    def input_at(self, t: float) -> np.ndarray:
        if self.order == 2:
            return stack_inputs(self.system, self.P_m.at(t))
        return stack_inputs(self.system, self.P_m.at(t), self.E_f.at(t))

    def breakpoints(self) -> np.ndarray:
        times = set(self.P_m.times.tolist())
        if self.E_f is not None:
            times |= set(self.E_f.times.tolist())
        return np.array(sorted(ts for ts in times if ts < self.t_end))


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise ScenarioError(f"missing key {key!r} in {where}")
    return obj[key]


def _machine_params(entry: dict, idx: int, omega_s: float) -> StandardParams:
    has_std = "standard" in entry
    has_fund = "fundamental" in entry
    if has_std == has_fund:
        raise ScenarioError(
            f"machine {idx}: give exactly one of 'standard' or 'fundamental'")
    if has_std:
        block = dict(entry["standard"])
        block.setdefault("omega_s", omega_s)
        if not np.isclose(block["omega_s"], omega_s, rtol=1e-12):
            raise ScenarioError(f"machine {idx}: omega_s differs from the scenario value")
        try:
            return StandardParams.from_dict(block)
        except ParameterError as exc:
            raise ScenarioError(f"machine {idx}: {exc}") from exc
    try:
        fp = FundamentalParams.from_dict(dict(entry["fundamental"]))
        return derive_standard(fp, omega_s, D=float(entry.get("D", 0.0)))
    except ParameterError as exc:
        raise ScenarioError(f"machine {idx}: {exc}") from exc


def _schedule(raw, n: int, t_end: float, name: str) -> Schedule:
    if not isinstance(raw, list) or not raw:
        raise ScenarioError(f"inputs.{name} must be a non-empty list of schedule entries")
    times, values = [], []
    for entry in raw:
        t = float(_need(entry, "t", f"inputs.{name}"))
        v = np.asarray(_need(entry, "value", f"inputs.{name}"), dtype=float)
        if v.shape != (n,):
            raise ScenarioError(f"inputs.{name}: each value needs {n} entries")
        times.append(t)
        values.append(v)
    times = np.array(times)
    if np.any(np.diff(times) <= 0):
        raise ScenarioError(f"inputs.{name}: times must be strictly increasing")
    if times[0] != 0.0:
        raise ScenarioError(f"inputs.{name}: the schedule must start at t = 0 "
                            "so it covers the whole run")
    if times[-1] >= t_end:
        raise ScenarioError(f"inputs.{name}: breakpoint at t={times[-1]} is not "
                            f"inside [0, t_end={t_end})")
    return Schedule(times=times, values=np.array(values))


def _state_blocks(raw: dict, system: MultiMachine, where: str) -> np.ndarray:
    """Assemble a flat state from named block arrays.  ``Delta_omega`` may
    be given instead of the momentum block ``p``."""
    raw = dict(raw)
    if "Delta_omega" in raw:
        if "p" in raw:
            raise ScenarioError(f"{where}: give either 'p' or 'Delta_omega', not both")
        raw["p"] = system.M * np.asarray(raw.pop("Delta_omega"), dtype=float)
    unknown = set(raw) - set(system.blocks)
    if unknown:
        raise ScenarioError(f"{where}: unknown state blocks {sorted(unknown)} "
                            f"for order {system.order}")
    arrays = {}
    for name in system.blocks:
        if name not in raw:
            raise ScenarioError(f"{where}: missing state block {name!r}")
        v = np.asarray(raw[name], dtype=float)
        if v.shape != (system.n,):
            raise ScenarioError(f"{where}: block {name!r} needs {system.n} entries")
        arrays[name] = v
    return system.pack(**arrays)


def load_scenario(path: str, order_override: int | None = None) -> Scenario:
    """Parse and cross-validate a scenario file.

    Raises ``ScenarioError`` for malformed data and lets assumption
    violations (saliency, series mismatch) surface as ``AssumptionError``
    from the system assembly.  ``order_override`` replaces the scenario's
    model order before anything is built (the CLI's ``--order`` flag).
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc

    if order_override is not None:
        raw["order"] = order_override
    order = _need(raw, "order", "scenario")
    if order not in ORDER_BLOCKS:
        raise ScenarioError(f"order must be one of 2..6, got {order}")
    omega_s = float(raw.get("omega_s", _DEFAULT_OMEGA_S))
    machines_raw = _need(raw, "machines", "scenario")
    if not isinstance(machines_raw, list) or not machines_raw:
        raise ScenarioError("scenario needs a non-empty machine list")
    machines = [_machine_params(m, i, omega_s) for i, m in enumerate(machines_raw)]
    n = len(machines)

    grid_raw = _need(raw, "grid", "scenario")
    edges, X_T = [], []
    for e in _need(grid_raw, "edges", "grid"):
        nodes = _need(e, "nodes", "grid.edges")
        if len(nodes) != 2:
            raise ScenarioError("each edge needs exactly two nodes")
        edges.append((int(nodes[0]), int(nodes[1])))
        X_T.append(float(_need(e, "X_T", "grid.edges")))
    series_attr = "X_d_2prime" if order in (6, 5) else "X_d_prime"
    X_series = [getattr(sp, series_attr) for sp in machines]
    try:
        grid = build_grid(edges, X_T, X_series)
    except GridError as exc:
        raise ScenarioError(f"grid: {exc}") from exc

    E_mag = alpha = None
    if order == 2:
        E_mag = np.array([float(_need(m, "E_prime_mag", f"machine {i}"))
                          for i, m in enumerate(machines_raw)])
        alpha = np.array([float(m.get("alpha", 0.0)) for m in machines_raw])
    system = MultiMachine(order, grid, machines, E_mag=E_mag, alpha=alpha)

    sim_raw = _need(raw, "sim", "scenario")
    t_end = float(_need(sim_raw, "t_end", "sim"))
    if not t_end > 0:
        raise ScenarioError(f"t_end must be > 0, got {t_end}")
    method = sim_raw.get("method", "rkf45-adaptive")
    if method not in ("rk4-fixed", "rkf45-adaptive"):
        raise ScenarioError(f"unknown integration method {method!r}")
    step = float(sim_raw.get("step", 1e-3))
    rtol = float(sim_raw.get("rtol", 1e-9))
    atol = float(sim_raw.get("atol", 1e-9))
    sample_dt = float(sim_raw.get("sample_dt", t_end / 1000.0))
    if not (step > 0 and rtol > 0 and atol > 0 and sample_dt > 0):
        raise ScenarioError("step, rtol, atol and sample_dt must be > 0")
    if _misaligned(t_end, sample_dt):
        raise ScenarioError("t_end must be an integer multiple of sample_dt")
    if method == "rk4-fixed" and _misaligned(sample_dt, step):
        raise ScenarioError("sample_dt must be an integer multiple of step")

    inputs_raw = _need(raw, "inputs", "scenario")
    P_m = _schedule(_need(inputs_raw, "P_m", "inputs"), n, t_end, "P_m")
    E_f = None
    if order != 2:
        E_f = _schedule(_need(inputs_raw, "E_f", "inputs"), n, t_end, "E_f")
    elif "E_f" in inputs_raw:
        raise ScenarioError("the order-2 classical model takes no excitation input")
    for ts in np.concatenate([P_m.times] + ([E_f.times] if E_f is not None else [])):
        if _misaligned(ts, sample_dt) and ts != 0.0:
            raise ScenarioError(f"schedule breakpoint t={ts} must sit on the "
                                f"sample grid (multiple of {sample_dt})")

    initial = _need(raw, "initial_state", "scenario")
    if initial != "equilibrium":
        if not isinstance(initial, dict):
            raise ScenarioError("initial_state must be 'equilibrium' or a block mapping")
        _state_blocks(initial, system, "initial_state")  # validate now
    perturbation = raw.get("perturbation", {})
    if perturbation:
        unknown = set(perturbation) - set(system.blocks)
        if unknown:
            raise ScenarioError(f"perturbation: unknown blocks {sorted(unknown)}")
        for name, v in perturbation.items():
            if np.asarray(v, dtype=float).shape != (n,):
                raise ScenarioError(f"perturbation: block {name!r} needs {n} entries")

    out_raw = raw.get("output", {})
    return Scenario(
        order=order, omega_s=omega_s, system=system, P_m=P_m, E_f=E_f,
        initial=initial, perturbation=perturbation, t_end=t_end, method=method,
        step=step, rtol=rtol, atol=atol, sample_dt=sample_dt,
        trajectory_name=out_raw.get("trajectory", "trajectory.csv"),
        monitors_name=out_raw.get("monitors", "monitors.csv"),
    )


def _misaligned(value: float, unit: float) -> bool:
    ratio = value / unit
    return abs(ratio - round(ratio)) > _ALIGN_TOL * max(1.0, abs(ratio))


def resolve_initial_state(sc: Scenario) -> np.ndarray:
    """Initial state vector: explicit blocks or the solved equilibrium for
    the t=0 inputs, plus any perturbation."""
    if sc.initial == "equilibrium":
        P0, E0 = unstack_inputs(sc.system, sc.input_at(0.0))
        eq = ph_mod.find_equilibrium(sc.system, P0, E0)
        x0 = eq.x_bar.copy()
    else:
        x0 = _state_blocks(sc.initial, sc.system, "initial_state")
    for name, v in sc.perturbation.items():
        x0[sc.system.block_slice(name)] += np.asarray(v, dtype=float)
    return x0


def simulate_scenario(sc: Scenario) -> Trajectory:
    """Integrate the scenario segmentwise between input breakpoints and
    attach the monitor channels."""
    x0 = resolve_initial_state(sc)
    breaks = list(sc.breakpoints()) + [sc.t_end]
    t_parts, x_parts = [], []
    x_cur = x0
    for a, b in zip(breaks[:-1], breaks[1:]):
        P, E = unstack_inputs(sc.system, sc.input_at(a))

        def rhs(t, x, P=P, E=E):
            return multimachine_rhs(sc.system, x, P, E)

        seg = integrate(rhs, x_cur, (a, b), method=sc.method, h=sc.step,
                        rtol=sc.rtol, atol=sc.atol, sample_dt=sc.sample_dt)
        start = 1 if t_parts else 0  # junction sample already recorded
        t_parts.append(seg.t[start:])
        x_parts.append(seg.x[start:])
        x_cur = seg.final_state
    t = np.concatenate(t_parts)
    x = np.vstack(x_parts)
    u = np.array([sc.input_at(tk) for tk in t])
    traj = Trajectory(t=t, x=x, u=u)
    _attach_channels(sc, traj)
    return traj


def _attach_channels(sc: Scenario, traj: Trajectory) -> None:
    sys_ = sc.system
    T = traj.t.size
    H = np.array([total_energy(sys_, traj.x[j]) for j in range(T)])
    P_e = np.array([sys_.electrical_power(traj.x[j]) for j in range(T)])
    dome = traj.x[:, sys_.block_slice("p")] / sys_.M
    traj.channels["H"] = H
    if sc.initial == "equilibrium" and sc.order in (2, 3, 6):
        phs = ph_mod.assemble(sys_)
        P0, E0 = unstack_inputs(sys_, sc.input_at(0.0))
        eq = ph_mod.find_equilibrium(sys_, P0, E0)
        store = ph_mod.shifted_storage(phs, eq.x_bar)
        traj.channels["H_bar"] = np.array([store.value(traj.x[j]) for j in range(T)])
    traj.channels["P_e"] = P_e
    traj.channels["Delta_omega"] = dome


# -- subcommands --------------------------------------------------------------

def _cmd_validate(args) -> int:
    sc = load_scenario(args.scenario, args.order)
    if sc.order == 6:
        for i, sp in enumerate(sc.system.machines):
            res = psd_timescale_check(sp)
            if not res.holds:
                raise AssumptionError(
                    f"machine {i}: dissipation margins negative "
                    f"(margin_d={res.margin_d:.6g}, margin_q={res.margin_q:.6g})")
    if sc.initial != "equilibrium":
        _state_blocks(sc.initial, sc.system, "initial_state")
    print("OK")
    return EXIT_OK


def _run_one_simulation(path: str, out_dir: str, tol: float | None,
                        order: int | None = None):
    sc = load_scenario(path, order)
    if tol is not None:
        sc.rtol = sc.atol = tol
    traj = simulate_scenario(sc)
    os.makedirs(out_dir, exist_ok=True)
    traj_path = os.path.join(out_dir, sc.trajectory_name)
    write_trajectory_csv(Trajectory(t=traj.t, x=traj.x, u=traj.u), traj_path,
                         sc.system.state_names())
    mon_path = os.path.join(out_dir, sc.monitors_name)
    _write_channels_csv(traj, mon_path)
    return traj_path, mon_path


def _write_channels_csv(traj: Trajectory, path: str) -> None:
    cols = [("t", traj.t)]
    for name, vals in traj.channels.items():
        vals = np.asarray(vals)
        if vals.ndim == 1:
            cols.append((name, vals))
        else:
            cols.extend((f"{name}_{j}", vals[:, j]) for j in range(vals.shape[1]))
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(c[0] for c in cols) + "\n")
        for r in range(traj.t.size):
            fh.write(",".join(f"{c[1][r]:.17e}" for c in cols) + "\n")


def _cmd_simulate(args) -> int:
    paths = args.scenario
    if args.jobs > 1 and len(paths) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(
                lambda p: _run_one_simulation(p, args.out, args.tol, args.order), paths))
    else:
        results = [_run_one_simulation(p, args.out, args.tol, args.order) for p in paths]
    for path, (traj_path, mon_path) in zip(paths, results):
        print(f"{path}: wrote {traj_path} and {mon_path}")
    return EXIT_OK


def _cmd_energy(args) -> int:
    sc = load_scenario(args.scenario, args.order)
    try:
        with open(args.state) as fh:
            raw_state = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read state file: {exc}") from exc
    x = _state_blocks(raw_state, sc.system, "state file")
    comp = energy_components(sc.system, x)
    for i, v in enumerate(comp["electrical"]):
        print(f"electrical_{i}: {v:.17e}")
    for i, v in enumerate(comp["mechanical"]):
        print(f"mechanical_{i}: {v:.17e}")
    for (i, k), v in zip(sc.system.grid.edges, comp["line"]):
        print(f"line_{i}_{k}: {v:.17e}")
    print(f"total_H: {comp['total']:.17e}")
    print(f"scaled_U: {comp['scaled_total']:.17e}")
    return EXIT_OK


def _cmd_ph_check(args) -> int:
    sc = load_scenario(args.scenario, args.order)
    phs = ph_mod.assemble(sc.system)
    skew_err = float(np.max(np.abs(phs.J + phs.J.T)))
    sym_err = float(np.max(np.abs(phs.R - phs.R.T)))
    lam_min = float(np.linalg.eigvalsh(phs.R)[0])
    print(f"order: {sc.order}")
    print(f"nodes: {sc.system.n}")
    print(f"J_skew_error: {skew_err:.3e}")
    print(f"R_symmetry_error: {sym_err:.3e}")
    print(f"R_lambda_min: {lam_min:.6e}")
    if sc.order == 6:
        for i, sp in enumerate(sc.system.machines):
            res = psd_timescale_check(sp)
            print(f"margins_{i}: d={res.margin_d:.6e} q={res.margin_q:.6e}")
    rng = np.random.default_rng(0)
    tol = args.tol if args.tol is not None else 1e-10
    worst = 0.0
    for _ in range(200):
        x = rng.uniform(-1.0, 1.0, sc.system.n_states)
        u = rng.uniform(-1.0, 1.0, phs.n_inputs)
        P, E = unstack_inputs(sc.system, u)
        direct = multimachine_rhs(sc.system, x, P, E)
        structured, _ = ph_mod.ph_rhs(phs, x, u)
        worst = max(worst, float(np.max(np.abs(direct - structured))))
    print(f"rhs_equivalence_max_abs_diff: {worst:.3e}")
    if worst > tol:
        raise SimulationError(
            f"structured and direct right-hand sides diverge ({worst:.3e} > {tol:.1e})")
    print("OK")
    return EXIT_OK


def _cmd_equilibrium(args) -> int:
    sc = load_scenario(args.scenario, args.order)
    P0, E0 = unstack_inputs(sc.system, sc.input_at(0.0))
    tol = args.tol if args.tol is not None else 1e-10
    eq = ph_mod.find_equilibrium(sc.system, P0, E0, tol=tol)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "equilibrium.json")
    blocks = sc.system.unpack(eq.x_bar)
    P_bar, E_bar = unstack_inputs(sc.system, eq.u_bar)
    payload = {
        "x_bar": {name: vals.tolist() for name, vals in blocks.items()},
        "u_bar": {"P_m": P_bar.tolist()},
        "residual_inf_norm": eq.residual_norm,
        "hessian_quotient_eigenvalues": eq.hessian_eigenvalues.tolist(),
        "hessian_positive_definite_on_quotient": eq.hessian_positive_definite,
        "iterations": eq.iterations,
    }
    if E_bar is not None:
        payload["u_bar"]["E_f"] = E_bar.tolist()
    with open(out_path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"residual_inf_norm: {eq.residual_norm:.3e}")
    print(f"hessian_positive_definite_on_quotient: {eq.hessian_positive_definite}")
    print(f"wrote {out_path}")
    return EXIT_OK


_USAGE = """usage: machnet <command> [options]

commands:
  validate <scenario>               validate a scenario file
  simulate <scenario>... [--out D] [--jobs N] [--tol X]
  energy <scenario> <state-file>
  ph-check <scenario> [--tol X]
  equilibrium <scenario> [--out D] [--tol X]
"""

_COMMANDS = ("validate", "simulate", "energy", "ph-check", "equilibrium")


def _build_parser(cmd: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=f"machnet {cmd}")
    if cmd == "simulate":
        p.add_argument("scenario", nargs="+")
    else:
        p.add_argument("scenario")
    if cmd == "energy":
        p.add_argument("state")
    if cmd in ("simulate", "equilibrium"):
        p.add_argument("--out", default=".")
    if cmd == "simulate":
        p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--order", type=int, default=None,
                   help="override the scenario's model order")
    p.add_argument("--tol", type=float, default=None)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(os.environ.get("MACHNET_LOG", "error"))
    if level is None:
        print("MACHNET_LOG must be one of error, info, debug", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=level)
    if not argv or argv[0] in ("-h", "--help"):
        print(_USAGE, end="")
        return EXIT_OK if argv else EXIT_USAGE
    cmd, rest = argv[0], argv[1:]
    if cmd not in _COMMANDS:
        print(f"machnet: unknown command {cmd!r}", file=sys.stderr)
        print(_USAGE, file=sys.stderr, end="")
        return EXIT_USAGE
    try:
        args = _build_parser(cmd).parse_args(rest)
    except SystemExit:
        return EXIT_USAGE
    handler = {
        "validate": _cmd_validate,
        "simulate": _cmd_simulate,
        "energy": _cmd_energy,
        "ph-check": _cmd_ph_check,
        "equilibrium": _cmd_equilibrium,
    }[cmd]
    try:
        return handler(args)
    except (ScenarioError, ParameterError, GridError, OrderError) as exc:
        print(f"machnet: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    except AssumptionError as exc:
        print(f"machnet: assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (EquilibriumError, SimulationError) as exc:
        print(f"machnet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MachnetError as exc:
        print(f"machnet: {exc}", file=sys.stderr)
        return EXIT_INVALID_SCENARIO


if __name__ == "__main__":
    raise SystemExit(main())
