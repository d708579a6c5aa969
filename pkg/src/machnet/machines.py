"""Reduced-order machine models (orders 6..2) and multi-machine assembly.

Model orders and their states:

* 6 — ``delta, p, E_q', E_d', E_q'', E_d''`` (transient + subtransient emfs)
* 5 — ``delta, p, E_q', E_q'', E_d''`` (salient pole, ``X_q = X_q'``)
* 4 — ``delta, p, E_q', E_d'``
* 3 — ``delta, p, E_q'`` (flux-decay / one-axis model)
* 2 — ``theta, p`` (classical model; constant internal voltage magnitude)

The momentum-like state is ``p = M * Delta_omega`` (scaled by the
synchronous inertia ``M = omega_s * J``), so the energy gradient with
respect to ``p`` is exactly ``Delta_omega / omega_s``.  For the classical
model the angle state is the *voltage* angle ``theta = delta + alpha`` with
``alpha`` the constant angle of the internal voltage in the rotor frame.

Damping follows the source models order by order: orders 6 and 5 carry no
asynchronous damping term, orders 4..2 include ``-D * Delta_omega``.

Multi-machine right-hand sides close the loop through a ``Grid`` whose
series reactances must equal the machines' subtransient (orders 6/5) or
transient (orders 4/3/2) reactances; saliency of the corresponding stage
must be negligible.  These requirements are checked once, when the
``MultiMachine`` system is assembled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError, GridError, OrderError, ParameterError
from .network import ClassicalGrid, Grid, classical_power, dq_currents
from .params import StandardParams, validate_standard

#: State blocks per model order, in storage order.  Multi-machine vectors
#: are grouped by variable: all angles, then all momenta, then each emf.
ORDER_BLOCKS: dict[int, tuple[str, ...]] = {
    2: ("theta", "p"),
    3: ("delta", "p", "E_q_prime"),
    4: ("delta", "p", "E_q_prime", "E_d_prime"),
    5: ("delta", "p", "E_q_prime", "E_q_2prime", "E_d_2prime"),
    6: ("delta", "p", "E_q_prime", "E_d_prime", "E_q_2prime", "E_d_2prime"),
}

_REL_TOL = 1e-9


def _require_order(order: int):
    if order not in ORDER_BLOCKS:
        raise OrderError(f"unsupported model order {order}; expected one of 2..6")


def momentum(sp: StandardParams, delta_omega: float) -> float:
    """Scaled momentum ``p = M * Delta_omega``."""
    return sp.M * delta_omega


def delta_omega(sp: StandardParams, p: float) -> float:
    """Frequency deviation ``Delta_omega = p / M``."""
    return p / sp.M


@dataclass(frozen=True)
class MachineState:
    """Order-tagged state of one machine.

    Only the fields belonging to ``order`` may be set (enforced); the
    classical model additionally carries the constant internal voltage
    magnitude ``E_mag`` and its rotor-frame angle ``alpha``.
    """

    order: int
    angle: float
    p: float
    E_q_prime: float | None = None
    E_d_prime: float | None = None
    E_q_2prime: float | None = None
    E_d_2prime: float | None = None
    E_mag: float | None = None
    alpha: float = 0.0

    def __post_init__(self):
        _require_order(self.order)
        blocks = ORDER_BLOCKS[self.order]
        for name in ("E_q_prime", "E_d_prime", "E_q_2prime", "E_d_2prime"):
            present = getattr(self, name) is not None
            if present != (name in blocks):
                want = "required" if name in blocks else "not a state"
                raise OrderError(f"{name} is {want} for order {self.order}")
        if (self.E_mag is not None) != (self.order == 2):
            raise OrderError("E_mag is set exactly for the order-2 classical model")
        if not np.isfinite(self.p):
            raise ValueError("momentum must be finite")

    def dynamic_values(self) -> np.ndarray:
        """Integrated state entries, ordered per ``ORDER_BLOCKS[order]``."""
        out = [self.angle, self.p]
        for name in ORDER_BLOCKS[self.order][2:]:
            out.append(getattr(self, name))
        return np.array(out)

    def classical_emf(self) -> tuple[float, float]:
        """Constant ``(E_d', E_q')`` of the classical model."""
        if self.order != 2:
            raise OrderError("classical_emf is only defined for order 2")
        return (self.E_mag * np.sin(self.alpha), self.E_mag * np.cos(self.alpha))


@dataclass(frozen=True)
class MachineInputs:
    """Mechanical power and scaled excitation (the latter absent for order 2)."""

    P_m: float
    E_f: float | None = None


def terminal_voltage(order: int, sp: StandardParams, s: MachineState,
                     I_d: float, I_q: float) -> tuple[float, float]:
    """Stator terminal voltage behind the stage reactance (lossless stator):

    orders 6/5: ``V_d = E_d'' - X_q'' I_q``, ``V_q = E_q'' + X_d'' I_d``;
    orders 4/3: the primed analogues.  Order 2 keeps no voltage equation.
    """
    _require_order(order)
    if order in (6, 5):
        return (s.E_d_2prime - sp.X_q_2prime * I_q,
                s.E_q_2prime + sp.X_d_2prime * I_d)
    if order in (4, 3):
        E_d = 0.0 if order == 3 else s.E_d_prime
        return (E_d - sp.X_q_prime * I_q,
                s.E_q_prime + sp.X_d_prime * I_d)
    raise OrderError("terminal voltage is undefined for the order-2 classical model")


def single_rhs(order: int, sp: StandardParams, s: MachineState,
               I_d: float, I_q: float, u: MachineInputs) -> np.ndarray:
    """Single-machine state derivative for given stator currents.

    Electrical power enters the momentum equation with the stage-matching
    emfs, including the saliency cross term of that stage; the emf
    equations are the open-circuit decay laws driven by the currents.
    """
    _require_order(order)
    if s.order != order:
        raise OrderError(f"state is tagged order {s.order}, requested {order}")
    dw = s.p / sp.M
    if order == 2:
        E_d, E_q = s.classical_emf()
        P_e = E_q * I_q + E_d * I_d + (sp.X_d_prime - sp.X_q_prime) * I_d * I_q
        return np.array([dw, -sp.D * dw + u.P_m - P_e])
    if u.E_f is None:
        raise ValueError(f"order {order} needs the excitation input E_f")
    dEq_p = (u.E_f - s.E_q_prime + (sp.X_d - sp.X_d_prime) * I_d) / sp.T_do_prime
    if order == 3:
        P_e = s.E_q_prime * I_q + (sp.X_d_prime - sp.X_q_prime) * I_d * I_q
        return np.array([dw, -sp.D * dw + u.P_m - P_e, dEq_p])
    if order == 4:
        P_e = (s.E_d_prime * I_d + s.E_q_prime * I_q
               + (sp.X_d_prime - sp.X_q_prime) * I_d * I_q)
        dEd_p = (-s.E_d_prime - (sp.X_q - sp.X_q_prime) * I_q) / sp.T_qo_prime
        return np.array([dw, u.P_m - sp.D * dw - P_e, dEq_p, dEd_p])
    # subtransient orders: no asynchronous damping term
    P_e = (s.E_d_2prime * I_d + s.E_q_2prime * I_q
           + (sp.X_d_2prime - sp.X_q_2prime) * I_d * I_q)
    dEq_pp = (s.E_q_prime - s.E_q_2prime
              + (sp.X_d_prime - sp.X_d_2prime) * I_d) / sp.T_do_2prime
    if order == 5:
        if not np.isclose(sp.X_q, sp.X_q_prime, rtol=_REL_TOL, atol=1e-12):
            raise AssumptionError(
                f"order 5 requires X_q == X_q_prime (salient pole); "
                f"got {sp.X_q} vs {sp.X_q_prime}")
        dEd_pp = (-s.E_d_2prime - (sp.X_q_prime - sp.X_q_2prime) * I_q) / sp.T_qo_2prime
        return np.array([dw, u.P_m - P_e, dEq_p, dEq_pp, dEd_pp])
    dEd_p = (-s.E_d_prime - (sp.X_q - sp.X_q_prime) * I_q) / sp.T_qo_prime
    dEd_pp = (s.E_d_prime - s.E_d_2prime
              - (sp.X_q_prime - sp.X_q_2prime) * I_q) / sp.T_qo_2prime
    return np.array([dw, u.P_m - P_e, dEq_p, dEd_p, dEq_pp, dEd_pp])


class MultiMachine:
    """A closed multi-machine system: grid plus per-node machine parameters.

    Construction validates everything the right-hand side relies on, so
    evaluation never re-checks: parameter records, stage saliency
    (``X_d'' == X_q''`` for orders 6/5, ``X_d' == X_q'`` for 4/3/2),
    matching grid series reactances, and classical-model voltage data.
    """

    def __init__(self, order: int, grid: Grid | ClassicalGrid,
                 machines, E_mag=None, alpha=None):
        _require_order(order)
        if isinstance(grid, ClassicalGrid):
            if order != 2:
                raise OrderError("conductance data is only supported by the order-2 model")
            cgrid, grid_ = grid, grid.grid
        else:
            cgrid, grid_ = None, grid
        machines = tuple(machines)
        if len(machines) != grid_.n:
            raise GridError(f"grid has {grid_.n} nodes but {len(machines)} machines given")
        for i, sp in enumerate(machines):
            bad = validate_standard(sp)
            if bad:
                raise ParameterError(f"machine {i}: " + "; ".join(bad))
        omega_s = machines[0].omega_s
        for i, sp in enumerate(machines):
            if not np.isclose(sp.omega_s, omega_s, rtol=_REL_TOL):
                raise ParameterError(f"machine {i} has omega_s {sp.omega_s} != {omega_s}")
        if order in (6, 5):
            series_attr, a, b = "X_d_2prime", "X_d_2prime", "X_q_2prime"
        else:
            series_attr, a, b = "X_d_prime", "X_d_prime", "X_q_prime"
        for i, sp in enumerate(machines):
            xa, xb = getattr(sp, a), getattr(sp, b)
            if not np.isclose(xa, xb, rtol=_REL_TOL, atol=1e-12):
                raise AssumptionError(
                    f"machine {i}: negligible saliency requires {a} == {b}, "
                    f"got {xa} vs {xb}")
            if order == 5 and not np.isclose(sp.X_q, sp.X_q_prime, rtol=_REL_TOL, atol=1e-12):
                raise AssumptionError(
                    f"machine {i}: order 5 requires X_q == X_q_prime, "
                    f"got {sp.X_q} vs {sp.X_q_prime}")
            xs = grid_.X_series[i]
            want = getattr(sp, series_attr)
            if not np.isclose(xs, want, rtol=_REL_TOL, atol=1e-12):
                raise AssumptionError(
                    f"machine {i}: grid series reactance {xs} does not match "
                    f"{series_attr} = {want}")
        if order == 2:
            if E_mag is None:
                raise ParameterError("order 2 needs the constant internal voltage magnitudes")
            E_mag = np.asarray(E_mag, dtype=float)
            alpha = np.zeros(grid_.n) if alpha is None else np.asarray(alpha, dtype=float)
            if E_mag.shape != (grid_.n,) or alpha.shape != (grid_.n,):
                raise ParameterError("E_mag/alpha must have one entry per node")
            if not np.all(E_mag > 0):
                raise ParameterError("internal voltage magnitudes must be > 0")
        elif E_mag is not None or alpha is not None:
            raise OrderError("E_mag/alpha are classical-model data (order 2 only)")

        self.order = order
        self.grid = grid_
        self.cgrid = cgrid if cgrid is not None else (
            ClassicalGrid.lossless(grid_) if order == 2 else None)
        self.machines = machines
        self.E_mag = E_mag
        self.alpha = alpha
        self.omega_s = omega_s
        self.n = grid_.n
        self.blocks = ORDER_BLOCKS[order]
        self.n_states = len(self.blocks) * self.n
        self.M = np.array([sp.M for sp in machines])
        self.D = np.array([sp.D for sp in machines])
        # per-node parameter arrays, cached for the vectorized hot paths
        for name in ("X_d", "X_q", "X_d_prime", "X_q_prime", "X_d_2prime",
                     "X_q_2prime", "T_do_prime", "T_qo_prime", "T_do_2prime",
                     "T_qo_2prime"):
            setattr(self, name, np.array([getattr(sp, name) for sp in machines]))

    # -- state layout ------------------------------------------------------

    def block_slice(self, name: str) -> slice:
        idx = self.blocks.index(name)
        return slice(idx * self.n, (idx + 1) * self.n)

    def block(self, x: np.ndarray, name: str) -> np.ndarray:
        return x[..., self.block_slice(name)]

    def state_names(self) -> list[str]:
        return [f"{b}_{i}" for b in self.blocks for i in range(self.n)]

    def pack(self, **blocks) -> np.ndarray:
        """Assemble a flat state vector from per-block arrays; missing
        blocks default to zero."""
        x = np.zeros(self.n_states)
        for name, vals in blocks.items():
            if name not in self.blocks:
                raise OrderError(f"{name} is not a state block of order {self.order}")
            x[self.block_slice(name)] = np.asarray(vals, dtype=float)
        return x

    def unpack(self, x: np.ndarray) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_states,):
            raise ValueError(f"state must have {self.n_states} entries, got {x.shape}")
        return {name: x[self.block_slice(name)] for name in self.blocks}

    # -- network interface --------------------------------------------------

    def internal_voltages(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Stage-matching internal voltage components ``(E_d, E_q)`` feeding
        the network equations."""
        if self.order in (6, 5):
            return self.block(x, "E_d_2prime"), self.block(x, "E_q_2prime")
        if self.order == 4:
            return self.block(x, "E_d_prime"), self.block(x, "E_q_prime")
        if self.order == 3:
            return np.zeros(self.n), self.block(x, "E_q_prime")
        return self.E_mag * np.sin(self.alpha), self.E_mag * np.cos(self.alpha)

    def nodal_currents(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.order == 2:
            raise OrderError("the classical model closes through powers, not dq currents")
        E_d, E_q = self.internal_voltages(x)
        return dq_currents(self.grid, self.block(x, self.blocks[0]), E_d, E_q)

    def electrical_power(self, x: np.ndarray) -> np.ndarray:
        """Per-node electrical power fed into the network."""
        if self.order == 2:
            return classical_power(self.cgrid, self.block(x, "theta"), self.E_mag)
        E_d, E_q = self.internal_voltages(x)
        I_d, I_q = self.nodal_currents(x)
        return E_d * I_d + E_q * I_q

    def machine_states(self, x: np.ndarray) -> list[MachineState]:
        """View the flat vector as per-node ``MachineState`` records."""
        parts = self.unpack(x)
        out = []
        for i in range(self.n):
            kw = {name: parts[name][i] for name in self.blocks[2:]}
            if self.order == 2:
                kw["E_mag"] = self.E_mag[i]
                kw["alpha"] = self.alpha[i]
            out.append(MachineState(order=self.order, angle=parts[self.blocks[0]][i],
                                    p=parts["p"][i], **kw))
        return out


def multimachine_rhs(system: MultiMachine, x: np.ndarray,
                     P_m, E_f=None) -> np.ndarray:
    """Closed-loop state derivative of the multi-machine system.

    Nodal currents (or, for order 2, powers) come from the network
    equations; each node then follows its single-machine dynamics.  The
    whole evaluation is vectorized over nodes but agrees with applying
    ``single_rhs`` per node exactly.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (system.n_states,):
        raise ValueError(f"state must have {system.n_states} entries, got {x.shape}")
    P_m = np.asarray(P_m, dtype=float)
    if P_m.shape != (system.n,):
        raise ValueError("P_m must have one entry per node")
    dw = system.block(x, "p") / system.M
    dx = np.empty_like(x)
    dx[system.block_slice(system.blocks[0])] = dw
    if system.order == 2:
        P_e = classical_power(system.cgrid, system.block(x, "theta"), system.E_mag)
        dx[system.block_slice("p")] = -system.D * dw + P_m - P_e
        return dx
    E_f = np.asarray(E_f, dtype=float) if E_f is not None else None
    if E_f is None or E_f.shape != (system.n,):
        raise ValueError("orders 3..6 need one excitation input per node")
    E_d, E_q = system.internal_voltages(x)
    I_d, I_q = dq_currents(system.grid, system.block(x, "delta"), E_d, E_q)
    P_e = E_d * I_d + E_q * I_q
    Eq_p = system.block(x, "E_q_prime")
    dx[system.block_slice("E_q_prime")] = (
        E_f - Eq_p + (system.X_d - system.X_d_prime) * I_d) / system.T_do_prime
    if system.order in (6, 5):
        # no asynchronous damping at the subtransient stage
        dx[system.block_slice("p")] = P_m - P_e
        Eq_pp = system.block(x, "E_q_2prime")
        Ed_pp = system.block(x, "E_d_2prime")
        dx[system.block_slice("E_q_2prime")] = (
            Eq_p - Eq_pp + (system.X_d_prime - system.X_d_2prime) * I_d) / system.T_do_2prime
        if system.order == 6:
            Ed_p = system.block(x, "E_d_prime")
            dx[system.block_slice("E_d_prime")] = (
                -Ed_p - (system.X_q - system.X_q_prime) * I_q) / system.T_qo_prime
            dx[system.block_slice("E_d_2prime")] = (
                Ed_p - Ed_pp - (system.X_q_prime - system.X_q_2prime) * I_q) / system.T_qo_2prime
        else:
            dx[system.block_slice("E_d_2prime")] = (
                -Ed_pp - (system.X_q_prime - system.X_q_2prime) * I_q) / system.T_qo_2prime
        return dx
    dx[system.block_slice("p")] = -system.D * dw + P_m - P_e
    if system.order == 4:
        Ed_p = system.block(x, "E_d_prime")
        dx[system.block_slice("E_d_prime")] = (
            -Ed_p - (system.X_q - system.X_q_prime) * I_q) / system.T_qo_prime
    return dx


def stack_inputs(system: MultiMachine, P_m, E_f=None) -> np.ndarray:
    """Stack inputs in the order the structured form's input map expects:
    ``(P_m; E_f)`` for orders 3..6, just ``P_m`` for order 2."""
    P_m = np.asarray(P_m, dtype=float)
    if system.order == 2:
        return P_m.copy()
    if E_f is None:
        raise ValueError("orders 3..6 need one excitation input per node")
    return np.concatenate([P_m, np.asarray(E_f, dtype=float)])


def unstack_inputs(system: MultiMachine, u: np.ndarray):
    """Inverse of ``stack_inputs``; returns ``(P_m, E_f-or-None)``."""
    u = np.asarray(u, dtype=float)
    if system.order == 2:
        return u, None
    return u[:system.n], u[system.n:]
