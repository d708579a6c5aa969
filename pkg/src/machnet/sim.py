"""Time integration and trajectory monitors.

Two integrators:

* ``rk4-fixed`` — the classical fourth-order scheme with a fixed step.
  Guidance: pick ``h`` at most a twentieth of the fastest time constant
  (subtransient constants sit near 0.03 s, hence the 1e-3 s default).
* ``rkf45-adaptive`` — the Fehlberg 4(5) embedded pair with absolute and
  relative error control (defaults 1e-9/1e-9), propagating the
  fifth-order solution.  Output samples land on a uniform grid via cubic
  Hermite interpolation of accepted steps.

Monitors post-process stored samples rather than instrumenting the
stepper, so they are testable in isolation; they need a uniform time grid
because derivatives are estimated with fourth-order stencils.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SimulationError

# Fehlberg 4(5) tableau: stage weights, 5th-order propagation weights and
# the (5th minus 4th) error weights.
_FEHLBERG_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_FEHLBERG_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_FEHLBERG_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)
_FEHLBERG_ERR = (1 / 360, 0.0, -128 / 4275, -2197 / 75240, 1 / 50, 2 / 55)

_MIN_STEP_FACTOR = 1e-14


@dataclass
class Trajectory:
    """Sampled solution: times, states, optional inputs and named channels."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray | None = None
    channels: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.t.ndim != 1 or self.x.ndim != 2 or self.x.shape[0] != self.t.size:
            raise ValueError("need t of shape (T,) and x of shape (T, N)")
        if not np.all(np.diff(self.t) > 0):
            raise ValueError("time grid must be strictly increasing")
        if self.u is not None:
            self.u = np.asarray(self.u, dtype=float)
            if self.u.ndim != 2 or self.u.shape[0] != self.t.size:
                raise ValueError("inputs must be sampled on the same grid")

    @property
    def final_state(self) -> np.ndarray:
        return self.x[-1]


def _rk4_step(rhs, t, x, h):
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _hermite(theta, h, xa, fa, xb, fb):
    t2 = theta * theta
    t3 = t2 * theta
    return ((2 * t3 - 3 * t2 + 1) * xa + (t3 - 2 * t2 + theta) * h * fa
            + (-2 * t3 + 3 * t2) * xb + (t3 - t2) * h * fb)


def integrate(rhs, x0, t_span, method: str = "rkf45-adaptive", h: float = 1e-3,
              rtol: float = 1e-9, atol: float = 1e-9, sample_dt: float | None = None,
              inputs=None) -> Trajectory:
    """Integrate ``dx/dt = rhs(t, x)`` over ``t_span = (t0, t1)``.

    ``inputs`` may be a callable ``t -> u`` whose values are recorded at
    the sample times (handy for supply-rate monitors).  For the fixed-step
    method, ``sample_dt`` must be an integer multiple of ``h`` (recording
    then happens every ``sample_dt/h`` steps); the adaptive method samples
    a uniform grid of spacing ``sample_dt`` (default: span/500).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise SimulationError(f"need t1 > t0, got span ({t0}, {t1})")
    x0 = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(rhs(t0, x0))):
        raise SimulationError("right-hand side is not finite at the initial state")

    if method == "rk4-fixed":
        ts, xs = _integrate_rk4(rhs, x0, t0, t1, h, sample_dt)
    elif method == "rkf45-adaptive":
        ts, xs = _integrate_rkf45(rhs, x0, t0, t1, rtol, atol, sample_dt)
    else:
        raise SimulationError(f"unknown method {method!r}; "
                              "use 'rk4-fixed' or 'rkf45-adaptive'")
    u = np.array([np.atleast_1d(inputs(t)) for t in ts]) if inputs is not None else None
    return Trajectory(t=ts, x=xs, u=u)


def _integrate_rk4(rhs, x0, t0, t1, h, sample_dt):
    if not h > 0:
        raise SimulationError(f"step size must be > 0, got {h}")
    span = t1 - t0
    n_steps = int(round(span / h))
    if n_steps < 1 or abs(n_steps * h - span) > 1e-9 * max(1.0, span):
        # final partial step covers the remainder
        n_steps = int(np.floor(span / h + 1e-12))
    record_every = 1
    if sample_dt is not None:
        record_every = int(round(sample_dt / h))
        if record_every < 1 or abs(record_every * h - sample_dt) > 1e-9 * sample_dt:
            raise SimulationError("sample_dt must be an integer multiple of h")
    ts = [t0]
    xs = [x0.copy()]
    x = x0
    for j in range(n_steps):
        t = t0 + j * h
        x = _rk4_step(rhs, t, x, h)
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"state became non-finite at t={t + h:.6g}")
        if (j + 1) % record_every == 0:
            ts.append(t0 + (j + 1) * h)
            xs.append(x.copy())
    t_last = t0 + n_steps * h
    if t_last < t1 - 1e-12 * max(1.0, abs(t1)):
        x = _rk4_step(rhs, t_last, x, t1 - t_last)
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"state became non-finite at t={t1:.6g}")
        ts.append(t1)
        xs.append(x.copy())
    return np.array(ts), np.array(xs)


def _integrate_rkf45(rhs, x0, t0, t1, rtol, atol, sample_dt):
    span = t1 - t0
    if sample_dt is None:
        sample_dt = span / 500.0
    n_samples = int(round(span / sample_dt))
    if n_samples < 1:
        raise SimulationError("sample_dt larger than the integration span")
    sample_ts = t0 + sample_dt * np.arange(n_samples + 1)
    sample_ts[-1] = t1

    ts_out = [t0]
    xs_out = [x0.copy()]
    next_sample = 1

    t, x = t0, x0
    f = rhs(t, x)
    h = min(sample_dt, span / 100.0)
    k = [np.empty_like(x0) for _ in range(6)]
    while t < t1 - 1e-12 * max(1.0, abs(t1)):
        h = min(h, t1 - t)
        if h < _MIN_STEP_FACTOR * max(1.0, abs(t)):
            raise SimulationError(f"step size underflow at t={t:.6g} (h={h:.3e})")
        k[0] = f
        bad = False
        for s_ in range(1, 6):
            xs_stage = x + h * sum(a * k[j] for j, a in enumerate(_FEHLBERG_A[s_]))
            k[s_] = rhs(t + _FEHLBERG_C[s_] * h, xs_stage)
            if not np.all(np.isfinite(k[s_])):
                bad = True
                break
        if not bad:
            x_new = x + h * sum(b * k[j] for j, b in enumerate(_FEHLBERG_B5))
            err_vec = h * sum(e * k[j] for j, e in enumerate(_FEHLBERG_ERR))
            bad = not np.all(np.isfinite(x_new))
        if bad:
            h *= 0.5
            continue
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = float(np.max(np.abs(err_vec) / scale))
        if err <= 1.0:
            f_new = rhs(t + h, x_new)
            while next_sample <= n_samples and sample_ts[next_sample] <= t + h + 1e-12 * max(1.0, t + h):
                ts_ = min(sample_ts[next_sample], t + h)
                theta = (ts_ - t) / h
                ts_out.append(sample_ts[next_sample])
                xs_out.append(_hermite(theta, h, x, f, x_new, f_new))
                next_sample += 1
            t, x, f = t + h, x_new, f_new
        factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        h *= factor
    while next_sample <= n_samples:
        ts_out.append(sample_ts[next_sample])
        xs_out.append(x.copy())
        next_sample += 1
    return np.array(ts_out), np.array(xs_out)


def derivative_stencil(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Fourth-order numerical derivative on a uniform grid.

    Central five-point stencil in the interior, one-sided five-point
    formulas of the same order at the two points on each end.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    if t.size < 5:
        raise ValueError("need at least 5 samples for the fourth-order stencil")
    dt = np.diff(t)
    hm = dt.mean()
    if not np.allclose(dt, hm, rtol=1e-6, atol=1e-12 * max(1.0, abs(hm))):
        raise ValueError("derivative stencil needs a uniform time grid")
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * hm)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * hm)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * hm)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * hm)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * hm)
    return d


@dataclass(frozen=True)
class MonitorResult:
    """Per-sample energy balance ``dH/dt - supply`` and its maximum."""

    t: np.ndarray
    energy: np.ndarray
    dH_dt: np.ndarray
    supply: np.ndarray

    @property
    def balance(self) -> np.ndarray:
        return self.dH_dt - self.supply

    @property
    def max_violation(self) -> float:
        return float(np.max(self.balance))


def dissipation_monitor(traj: Trajectory, energy_fn, supply_fn) -> MonitorResult:
    """Check ``dH/dt <= supply`` along a trajectory.

    ``energy_fn(x)`` evaluates the storage at a sample; ``supply_fn(t, x, u)``
    the supply rate (it receives ``u=None`` when the trajectory carries no
    inputs).  The derivative is a fourth-order stencil, so at least five
    uniformly spaced samples are required.
    """
    if traj.t.size < 5:
        raise ValueError("need at least 5 samples for the dissipation monitor")
    H = np.array([energy_fn(traj.x[j]) for j in range(traj.t.size)])
    supply = np.array([
        supply_fn(traj.t[j], traj.x[j], traj.u[j] if traj.u is not None else None)
        for j in range(traj.t.size)
    ])
    return MonitorResult(t=traj.t.copy(), energy=H,
                         dH_dt=derivative_stencil(traj.t, H), supply=supply)


def write_trajectory_csv(traj: Trajectory, path, state_names) -> None:
    """Write a trajectory as CSV: ``t``, the states in layout order, then
    any monitor channels.  Full-precision scientific notation; output is
    byte-stable for identical inputs."""
    state_names = list(state_names)
    if len(state_names) != traj.x.shape[1]:
        raise ValueError(f"{traj.x.shape[1]} states but {len(state_names)} names")
    chan_cols = []
    for name, vals in traj.channels.items():
        vals = np.asarray(vals)
        if vals.ndim == 1:
            chan_cols.append((name, vals))
        else:
            for j in range(vals.shape[1]):
                chan_cols.append((f"{name}_{j}", vals[:, j]))
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(["t"] + state_names + [c[0] for c in chan_cols]) + "\n")
        for r in range(traj.t.size):
            row = [f"{traj.t[r]:.17e}"]
            row += [f"{v:.17e}" for v in traj.x[r]]
            row += [f"{c[1][r]:.17e}" for c in chan_cols]
            fh.write(",".join(row) + "\n")
