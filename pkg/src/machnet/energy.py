"""Energy (Hamiltonian) functions, their gradients and Hessians.

The total stored energy of a multi-machine system splits into

* machine electrical energy — quadratic forms in the internal emfs (the
  current-quadratic parts are booked with the lines, see below),
* shifted mechanical energy — kinetic energy relative to the synchronous
  frame, ``p^2 / (2 omega_s M)`` with ``p = M Delta_omega``,
* line energy — magnetic energy of each total edge reactance (line plus
  both machine series reactances), expressed through the internal emfs.

Because each machine's stage reactance is folded into the grid, its
current-quadratic energy lives inside the line terms; the machine terms
keep only the emf quadratics.  This split makes the total exactly the
Hamiltonian generating the constant-structure forms in ``ph``, with

    omega_s * dH/d(angle_i) = P_e_i

holding identically (the tests check it against the independent power
code path in ``network``).

Everything here is closed-form; gradients and Hessians are analytic (the
finite-difference versions appear only in tests, as oracles).  ``U``, the
energy rescaled by ``omega_s`` that much of the stability literature uses,
is exposed as ``scaled_total_energy``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError, OrderError, ParameterError
from .machines import ORDER_BLOCKS, MachineState, MultiMachine
from .network import Grid
from .params import StandardParams


@dataclass
class SystemState:
    """A flat multi-machine state vector plus its layout.

    Blocks are grouped by variable: entry ``i`` of block ``b`` sits at
    ``layout[b].start + i``.
    """

    order: int
    n: int
    x: np.ndarray

    def __post_init__(self):
        if self.order not in ORDER_BLOCKS:
            raise OrderError(f"unsupported model order {self.order}")
        self.x = np.asarray(self.x, dtype=float)
        want = len(ORDER_BLOCKS[self.order]) * self.n
        if self.x.shape != (want,):
            raise ValueError(f"state must have {want} entries, got {self.x.shape}")

    @property
    def layout(self) -> dict[str, slice]:
        return {name: slice(j * self.n, (j + 1) * self.n)
                for j, name in enumerate(ORDER_BLOCKS[self.order])}

    def block(self, name: str) -> np.ndarray:
        return self.x[self.layout[name]]

    def index(self, name: str, node: int) -> int:
        return self.layout[name].start + node

    @classmethod
    def from_blocks(cls, order: int, **blocks) -> "SystemState":
        names = ORDER_BLOCKS[order]
        missing = [b for b in names if b not in blocks]
        if missing:
            raise ValueError(f"missing state blocks: {missing}")
        extra = set(blocks) - set(names)
        if extra:
            raise ValueError(f"unknown state blocks: {sorted(extra)}")
        arrays = [np.atleast_1d(np.asarray(blocks[b], dtype=float)) for b in names]
        n = arrays[0].shape[0]
        return cls(order=order, n=n, x=np.concatenate(arrays))


def _hat(a: float, b: float, what: str) -> float:
    d = a - b
    if not d > 0.0:
        raise ParameterError(f"{what} must be strictly positive, got {d}")
    return d


def machine_electrical_energy(order: int, sp: StandardParams, s: MachineState,
                              I_d: float | None = None, I_q: float | None = None) -> float:
    """Electrical energy stored in one machine's rotor circuits.

    Keeps the emf quadratic of the stages the order retains; the classical
    model stores a constant (taken as zero).  Pass the stator currents to
    add back the current-quadratic stage terms (useful for single-machine
    studies; in a network those terms are accounted with the lines).
    """
    if order != s.order:
        raise OrderError(f"state is tagged order {s.order}, requested {order}")
    w = sp.omega_s
    if order == 2:
        return 0.0
    if order in (4, 3):
        hd = _hat(sp.X_d, sp.X_d_prime, "X_d - X_d_prime")
        H = s.E_q_prime ** 2 / hd
        if order == 4:
            hq = _hat(sp.X_q, sp.X_q_prime, "X_q - X_q_prime (order-4 energy; "
                      "use order 3 for salient-pole machines)")
            H += s.E_d_prime ** 2 / hq
        if I_d is not None and I_q is not None:
            H += sp.X_d_prime * I_d ** 2 + sp.X_q_prime * I_q ** 2
        return H / (2.0 * w)
    hd = _hat(sp.X_d, sp.X_d_prime, "X_d - X_d_prime")
    hdp = _hat(sp.X_d_prime, sp.X_d_2prime, "X_d_prime - X_d_2prime")
    hqp = _hat(sp.X_q_prime, sp.X_q_2prime, "X_q_prime - X_q_2prime")
    dq = s.E_q_prime - s.E_q_2prime
    H = s.E_q_prime ** 2 / hd + dq ** 2 / hdp
    if order == 6:
        hq = _hat(sp.X_q, sp.X_q_prime, "X_q - X_q_prime (order-6 energy; "
                  "use order 5 for salient-pole machines)")
        dd = s.E_d_prime - s.E_d_2prime
        H += s.E_d_prime ** 2 / hq + dd ** 2 / hqp
    else:
        H += s.E_d_2prime ** 2 / hqp
    if I_d is not None and I_q is not None:
        H += sp.X_d_2prime * I_d ** 2 + sp.X_q_2prime * I_q ** 2
    return H / (2.0 * w)


def mechanical_energy(p: float, M: float, omega_s: float, shifted: bool = True) -> float:
    """Rotor kinetic energy.

    ``shifted=True``: ``p`` is the scaled momentum ``M * Delta_omega`` and
    the energy is measured relative to synchronous speed,
    ``p^2 / (2 omega_s M)``.  ``shifted=False``: ``p`` is the angular
    momentum ``J * omega`` and the energy is ``p^2 / (2 J)`` with
    ``J = M / omega_s``.
    """
    if not (M > 0.0 and omega_s > 0.0):
        raise ParameterError("M and omega_s must be > 0")
    if shifted:
        return p ** 2 / (2.0 * omega_s * M)
    return omega_s * p ** 2 / (2.0 * M)


def d_axis_energy_from_flux(Psi_d: float, E_q_prime: float, E_q_2prime: float,
                            sp: StandardParams) -> float:
    """d-axis electrical energy in mixed flux/emf coordinates.

    Quadratic form in ``(Psi_d, E_q', E_q'')`` equal to the d-axis part of
    the first-principle Hamiltonian under the emf coordinate map.
    """
    w = sp.omega_s
    hd = _hat(sp.X_d, sp.X_d_prime, "X_d - X_d_prime")
    hdp = _hat(sp.X_d_prime, sp.X_d_2prime, "X_d_prime - X_d_2prime")
    xpp = sp.X_d_2prime
    if not xpp > 0.0:
        raise ParameterError("X_d_2prime must be > 0")
    A = np.array([
        [w / xpp, 0.0, -1.0 / xpp],
        [0.0, 1.0 / (w * hd) + 1.0 / (w * hdp), -1.0 / (w * hdp)],
        [-1.0 / xpp, -1.0 / (w * hdp), sp.X_d_prime / (w * hdp * xpp)],
    ])
    v = np.array([Psi_d, E_q_prime, E_q_2prime])
    return 0.5 * float(v @ A @ v)


def q_axis_energy_from_flux(Psi_q: float, E_d_prime: float, E_d_2prime: float,
                            sp: StandardParams) -> float:
    """q-axis twin of ``d_axis_energy_from_flux``.

    The q-axis emfs carry the opposite sign in their flux definitions, so
    the d-axis form applies to ``(Psi_q, -E_d', -E_d'')`` with q-axis
    reactances.
    """
    w = sp.omega_s
    hq = _hat(sp.X_q, sp.X_q_prime, "X_q - X_q_prime")
    hqp = _hat(sp.X_q_prime, sp.X_q_2prime, "X_q_prime - X_q_2prime")
    xpp = sp.X_q_2prime
    if not xpp > 0.0:
        raise ParameterError("X_q_2prime must be > 0")
    A = np.array([
        [w / xpp, 0.0, -1.0 / xpp],
        [0.0, 1.0 / (w * hq) + 1.0 / (w * hqp), -1.0 / (w * hqp)],
        [-1.0 / xpp, -1.0 / (w * hqp), sp.X_q_prime / (w * hqp * xpp)],
    ])
    v = np.array([Psi_q, -E_d_prime, -E_d_2prime])
    return 0.5 * float(v @ A @ v)


# -- line energies -----------------------------------------------------------

#: State blocks the line energy couples to: (angle, q-emf, d-emf) per order.
LINE_BLOCKS = {
    6: ("delta", "E_q_2prime", "E_d_2prime"),
    5: ("delta", "E_q_2prime", "E_d_2prime"),
    4: ("delta", "E_q_prime", "E_d_prime"),
    3: ("delta", "E_q_prime", None),
    2: ("theta", None, None),
}


def line_energy(order: int, grid: Grid, omega_s: float, angles,
                E_d=None, E_q=None, E_mag=None) -> tuple[np.ndarray, float]:
    """Magnetic energy of every edge reactance; returns (per-edge, total).

    Orders 6/5 use the subtransient voltages, order 4 the transient
    voltages, order 3 the q-components only (``E_d' = 0``), order 2 the
    constant voltage magnitudes with the voltage angles ``theta``.  Each
    per-edge value is ``X_ik |I_ik|^2 / (2 omega_s) >= 0`` and depends on
    the angles only through differences.
    """
    if order not in ORDER_BLOCKS:
        raise OrderError(f"unsupported model order {order}")
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (grid.n,):
        raise ValueError(f"angles must have {grid.n} entries")
    i, k = grid.edge_i, grid.edge_k
    pref = -grid.B_edge / omega_s
    s = np.sin(angles[i] - angles[k])
    c = np.cos(angles[i] - angles[k])
    if order == 2:
        if E_mag is None:
            raise OrderError("order 2 line energy needs the voltage magnitudes")
        E_mag = np.asarray(E_mag, dtype=float)
        per_edge = pref * 0.5 * (E_mag[i] ** 2 + E_mag[k] ** 2
                                 - 2.0 * E_mag[i] * E_mag[k] * c)
    elif order == 3:
        if E_q is None:
            raise OrderError("order 3 line energy needs the q-axis emfs")
        E_q = np.asarray(E_q, dtype=float)
        per_edge = pref * (0.5 * E_q[i] ** 2 + 0.5 * E_q[k] ** 2
                           - E_q[i] * E_q[k] * c)
    else:
        if E_d is None or E_q is None:
            raise OrderError(f"order {order} line energy needs both emf components")
        E_d = np.asarray(E_d, dtype=float)
        E_q = np.asarray(E_q, dtype=float)
        F = E_d[i] * E_q[k] - E_d[k] * E_q[i]
        G2 = E_d[i] * E_d[k] + E_q[i] * E_q[k]
        quad = 0.5 * (E_d[i] ** 2 + E_q[i] ** 2 + E_d[k] ** 2 + E_q[k] ** 2)
        per_edge = pref * (F * s - G2 * c + quad)
    return per_edge, float(np.sum(per_edge))


def _line_pieces(system: MultiMachine, x: np.ndarray):
    """(angles, E_d-like, E_q-like) arrays feeding the line energy."""
    angle_block, qname, dname = LINE_BLOCKS[system.order]
    angles = system.block(x, angle_block)
    if system.order == 2:
        return angles, None, None
    E_q = system.block(x, qname)
    E_d = system.block(x, dname) if dname is not None else None
    return angles, E_d, E_q


def _require_lossless(system: MultiMachine):
    if system.order == 2 and system.cgrid is not None and not system.cgrid.is_lossless:
        raise AssumptionError("energy functions are only defined for lossless "
                              "networks (zero conductances)")


def total_energy(system: MultiMachine, x: np.ndarray) -> float:
    """Total stored energy: machine electrical + shifted mechanical + lines.

    This is exactly the Hamiltonian consumed by the structured forms in
    ``ph``.
    """
    _require_lossless(system)
    x = np.asarray(x, dtype=float)
    p = system.block(x, "p")
    H = float(np.sum(p ** 2 / (2.0 * system.omega_s * system.M)))
    if system.order != 2:
        for i, (sp, s) in enumerate(zip(system.machines, system.machine_states(x))):
            H += machine_electrical_energy(system.order, sp, s)
    angles, E_d, E_q = _line_pieces(system, x)
    H += line_energy(system.order, system.grid, system.omega_s, angles,
                     E_d=E_d, E_q=E_q, E_mag=system.E_mag)[1]
    return H


def scaled_total_energy(system: MultiMachine, x: np.ndarray) -> float:
    """``U = omega_s * H``, the power-dimensioned variant common in the
    stability literature."""
    return system.omega_s * total_energy(system, x)


def energy_components(system: MultiMachine, x: np.ndarray) -> dict:
    """Itemized energy bookkeeping (used by the CLI's energy report)."""
    _require_lossless(system)
    x = np.asarray(x, dtype=float)
    p = system.block(x, "p")
    mech = p ** 2 / (2.0 * system.omega_s * system.M)
    if system.order != 2:
        elec = np.array([machine_electrical_energy(system.order, sp, s)
                         for sp, s in zip(system.machines, system.machine_states(x))])
    else:
        elec = np.zeros(system.n)
    angles, E_d, E_q = _line_pieces(system, x)
    per_edge, line_total = line_energy(system.order, system.grid, system.omega_s,
                                       angles, E_d=E_d, E_q=E_q, E_mag=system.E_mag)
    total = float(np.sum(mech) + np.sum(elec) + line_total)
    return {
        "mechanical": mech,
        "electrical": elec,
        "line": per_edge,
        "total": total,
        "scaled_total": system.omega_s * total,
    }


def energy_gradient(system: MultiMachine, x: np.ndarray) -> np.ndarray:
    """Analytic gradient of ``total_energy``.

    Componentwise it reproduces the structural identities the constant
    structure matrices rely on: the angle components are ``P_e_i/omega_s``,
    the momentum components ``Delta_omega_i/omega_s``, and the emf
    components combine the machine quadratic with the line coupling.
    """
    _require_lossless(system)
    x = np.asarray(x, dtype=float)
    w = system.omega_s
    grad = np.zeros_like(x)
    grad[system.block_slice("p")] = system.block(x, "p") / (w * system.M)

    # machine electrical part
    if system.order in (6, 5):
        hd = np.array([_hat(m.X_d, m.X_d_prime, "X_d - X_d_prime") for m in system.machines])
        hdp = np.array([_hat(m.X_d_prime, m.X_d_2prime, "X_d_prime - X_d_2prime")
                        for m in system.machines])
        hqp = np.array([_hat(m.X_q_prime, m.X_q_2prime, "X_q_prime - X_q_2prime")
                        for m in system.machines])
        Eq_p = system.block(x, "E_q_prime")
        Eq_pp = system.block(x, "E_q_2prime")
        Ed_pp = system.block(x, "E_d_2prime")
        grad[system.block_slice("E_q_prime")] += (Eq_p / hd + (Eq_p - Eq_pp) / hdp) / w
        grad[system.block_slice("E_q_2prime")] += (Eq_pp - Eq_p) / hdp / w
        if system.order == 6:
            hq = np.array([_hat(m.X_q, m.X_q_prime, "X_q - X_q_prime") for m in system.machines])
            Ed_p = system.block(x, "E_d_prime")
            grad[system.block_slice("E_d_prime")] += (Ed_p / hq + (Ed_p - Ed_pp) / hqp) / w
            grad[system.block_slice("E_d_2prime")] += (Ed_pp - Ed_p) / hqp / w
        else:
            grad[system.block_slice("E_d_2prime")] += Ed_pp / hqp / w
    elif system.order in (4, 3):
        hd = np.array([_hat(m.X_d, m.X_d_prime, "X_d - X_d_prime") for m in system.machines])
        grad[system.block_slice("E_q_prime")] += system.block(x, "E_q_prime") / hd / w
        if system.order == 4:
            hq = np.array([_hat(m.X_q, m.X_q_prime, "X_q - X_q_prime (order-4 energy)")
                           for m in system.machines])
            grad[system.block_slice("E_d_prime")] += system.block(x, "E_d_prime") / hq / w

    # line part, accumulated per edge
    angle_block, qname, dname = LINE_BLOCKS[system.order]
    angles, E_d, E_q = _line_pieces(system, x)
    g = system.grid
    i, k = g.edge_i, g.edge_k
    pref = -g.B_edge / w
    s = np.sin(angles[i] - angles[k])
    c = np.cos(angles[i] - angles[k])
    ga = grad[system.block_slice(angle_block)]
    if system.order == 2:
        ee = system.E_mag[i] * system.E_mag[k]
        np.add.at(ga, i, pref * ee * s)
        np.add.at(ga, k, -pref * ee * s)
        return grad
    if system.order == 3:
        dH = pref * E_q[i] * E_q[k] * s
        np.add.at(ga, i, dH)
        np.add.at(ga, k, -dH)
        gq = grad[system.block_slice(qname)]
        np.add.at(gq, i, pref * (E_q[i] - E_q[k] * c))
        np.add.at(gq, k, pref * (E_q[k] - E_q[i] * c))
        return grad
    F = E_d[i] * E_q[k] - E_d[k] * E_q[i]
    G2 = E_d[i] * E_d[k] + E_q[i] * E_q[k]
    dH = pref * (F * c + G2 * s)
    np.add.at(ga, i, dH)
    np.add.at(ga, k, -dH)
    gq = grad[system.block_slice(qname)]
    gd = grad[system.block_slice(dname)]
    np.add.at(gq, i, pref * (-E_d[k] * s - E_q[k] * c + E_q[i]))
    np.add.at(gd, i, pref * (E_q[k] * s - E_d[k] * c + E_d[i]))
    np.add.at(gq, k, pref * (E_d[i] * s - E_q[i] * c + E_q[k]))
    np.add.at(gd, k, pref * (-E_q[i] * s - E_d[i] * c + E_d[k]))
    return grad


def energy_hessian(system: MultiMachine, x: np.ndarray) -> np.ndarray:
    """Analytic Hessian of ``total_energy`` (dense, symmetric).

    Note the exact uniform-angle-shift null direction: line terms depend
    on angle differences only, so the Hessian annihilates the vector with
    ones on the angle block and zeros elsewhere.
    """
    _require_lossless(system)
    x = np.asarray(x, dtype=float)
    w = system.omega_s
    N = system.n_states
    Hs = np.zeros((N, N))
    po = system.block_slice("p").start
    for idx in range(system.n):
        Hs[po + idx, po + idx] = 1.0 / (w * system.M[idx])

    # machine electrical blocks (constant)
    def _diag_add(name, vals):
        o = system.block_slice(name).start
        for idx in range(system.n):
            Hs[o + idx, o + idx] += vals[idx]

    if system.order in (6, 5):
        hd = np.array([_hat(m.X_d, m.X_d_prime, "X_d - X_d_prime") for m in system.machines])
        hdp = np.array([_hat(m.X_d_prime, m.X_d_2prime, "X_d_prime - X_d_2prime")
                        for m in system.machines])
        hqp = np.array([_hat(m.X_q_prime, m.X_q_2prime, "X_q_prime - X_q_2prime")
                        for m in system.machines])
        oqp = system.block_slice("E_q_prime").start
        oqpp = system.block_slice("E_q_2prime").start
        for idx in range(system.n):
            Hs[oqp + idx, oqp + idx] += (1.0 / hd[idx] + 1.0 / hdp[idx]) / w
            Hs[oqpp + idx, oqpp + idx] += 1.0 / hdp[idx] / w
            Hs[oqp + idx, oqpp + idx] += -1.0 / hdp[idx] / w
            Hs[oqpp + idx, oqp + idx] += -1.0 / hdp[idx] / w
        if system.order == 6:
            hq = np.array([_hat(m.X_q, m.X_q_prime, "X_q - X_q_prime") for m in system.machines])
            odp = system.block_slice("E_d_prime").start
            odpp = system.block_slice("E_d_2prime").start
            for idx in range(system.n):
                Hs[odp + idx, odp + idx] += (1.0 / hq[idx] + 1.0 / hqp[idx]) / w
                Hs[odpp + idx, odpp + idx] += 1.0 / hqp[idx] / w
                Hs[odp + idx, odpp + idx] += -1.0 / hqp[idx] / w
                Hs[odpp + idx, odp + idx] += -1.0 / hqp[idx] / w
        else:
            _diag_add("E_d_2prime", 1.0 / hqp / w)
    elif system.order in (4, 3):
        hd = np.array([_hat(m.X_d, m.X_d_prime, "X_d - X_d_prime") for m in system.machines])
        _diag_add("E_q_prime", 1.0 / hd / w)
        if system.order == 4:
            hq = np.array([_hat(m.X_q, m.X_q_prime, "X_q - X_q_prime (order-4 energy)")
                           for m in system.machines])
            _diag_add("E_d_prime", 1.0 / hq / w)

    # line blocks, one edge at a time
    angle_block, qname, dname = LINE_BLOCKS[system.order]
    angles, E_d, E_q = _line_pieces(system, x)
    ao = system.block_slice(angle_block).start
    qo = system.block_slice(qname).start if qname else None
    do = system.block_slice(dname).start if dname else None
    g = system.grid
    for e in range(g.m):
        i, k = int(g.edge_i[e]), int(g.edge_k[e])
        pref = -g.B_edge[e] / w
        s = np.sin(angles[i] - angles[k])
        c = np.cos(angles[i] - angles[k])
        ai, ak = ao + i, ao + k
        if system.order == 2:
            aa = pref * system.E_mag[i] * system.E_mag[k] * c
            Hs[ai, ai] += aa
            Hs[ak, ak] += aa
            Hs[ai, ak] -= aa
            Hs[ak, ai] -= aa
            continue
        if system.order == 3:
            qi, qk = qo + i, qo + k
            aa = pref * E_q[i] * E_q[k] * c
            Hs[ai, ai] += aa
            Hs[ak, ak] += aa
            Hs[ai, ak] -= aa
            Hs[ak, ai] -= aa
            for (r, v) in ((qi, pref * E_q[k] * s), (qk, pref * E_q[i] * s)):
                Hs[ai, r] += v
                Hs[r, ai] += v
                Hs[ak, r] -= v
                Hs[r, ak] -= v
            Hs[qi, qi] += pref
            Hs[qk, qk] += pref
            Hs[qi, qk] -= pref * c
            Hs[qk, qi] -= pref * c
            continue
        qi, qk, di, dk = qo + i, qo + k, do + i, do + k
        F = E_d[i] * E_q[k] - E_d[k] * E_q[i]
        G2 = E_d[i] * E_d[k] + E_q[i] * E_q[k]
        aa = pref * (-F * s + G2 * c)
        Hs[ai, ai] += aa
        Hs[ak, ak] += aa
        Hs[ai, ak] -= aa
        Hs[ak, ai] -= aa
        mixed = ((qi, pref * (-E_d[k] * c + E_q[k] * s)),
                 (di, pref * (E_q[k] * c + E_d[k] * s)),
                 (qk, pref * (E_d[i] * c + E_q[i] * s)),
                 (dk, pref * (-E_q[i] * c + E_d[i] * s)))
        for (r, v) in mixed:
            Hs[ai, r] += v
            Hs[r, ai] += v
            Hs[ak, r] -= v
            Hs[r, ak] -= v
        for r in (qi, di, qk, dk):
            Hs[r, r] += pref
        for (r, t, v) in ((qi, qk, -pref * c), (qi, dk, -pref * s),
                          (di, qk, pref * s), (di, dk, -pref * c)):
            Hs[r, t] += v
            Hs[t, r] += v
    return Hs
