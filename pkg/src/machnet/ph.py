"""Constant-structure (port-Hamiltonian) forms, equilibria and passivity.

For model orders 2, 3 and 6 the closed multi-machine dynamics can be
written ``xdot = (J - R) grad H(x) + g u`` with *constant* matrices:
``J`` skew-symmetric, ``R`` symmetric positive semi-definite and ``g`` the
input map, where ``H`` is the total stored energy from ``energy``.  The
sparsity and state-independence of ``(J, R, g)`` is what makes shifted
passivity certificates possible without linearization.

For order 6 the dissipation matrix is PSD exactly when, per machine,

    4 (X_d' - X_d'') T_do' - (X_d - X_d') T_do'' >= 0

and the q-axis twin hold; assembly refuses machines violating them and
reports the margins.  Orders 4 and 5 are not assembled (no published
constant-structure form); their dynamics remain available in ``machines``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import energy_gradient, energy_hessian, total_energy
from .errors import AssumptionError, EquilibriumError, OrderError
from .machines import MultiMachine, multimachine_rhs, unstack_inputs
from .params import StandardParams, psd_timescale_check
from .sim import Trajectory, derivative_stencil

#: Eigenvalue slack for "positive semi-definite" verdicts.
PSD_TOL = 1e-10


def schur_condition_blocks(sp: StandardParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis 2x2 matrices whose PSD-ness is equivalent to the PSD-ness
    of the machine's dissipation blocks (Schur-complement route)."""
    hd = sp.X_d - sp.X_d_prime
    hdp = sp.X_d_prime - sp.X_d_2prime
    hq = sp.X_q - sp.X_q_prime
    hqp = sp.X_q_prime - sp.X_q_2prime
    d_block = np.array([[2.0 * hd / sp.T_do_prime, hd / sp.T_do_prime],
                        [hd / sp.T_do_prime, 2.0 * hdp / sp.T_do_2prime]])
    q_block = np.array([[2.0 * hq / sp.T_qo_prime, hq / sp.T_qo_prime],
                        [hq / sp.T_qo_prime, 2.0 * hqp / sp.T_qo_2prime]])
    return d_block, q_block


def machine_dissipation_blocks(sp: StandardParams) -> tuple[np.ndarray, np.ndarray]:
    """The two 2x2 blocks of the sixth-order dissipation matrix belonging
    to one machine, in ``(E_q', E_q'')`` and ``(E_d', E_d'')`` coordinates.
    Exactly these entries are placed into ``R`` at assembly; their
    eigenvalues decide Prop-style positivity."""
    w = sp.omega_s
    ad = w * (sp.X_d - sp.X_d_prime) / sp.T_do_prime
    aq = w * (sp.X_q - sp.X_q_prime) / sp.T_qo_prime
    cd = w * (sp.X_d_prime - sp.X_d_2prime) / sp.T_do_2prime
    cq = w * (sp.X_q_prime - sp.X_q_2prime) / sp.T_qo_2prime
    d_block = np.array([[ad, 0.5 * ad], [0.5 * ad, cd]])
    q_block = np.array([[aq, 0.5 * aq], [0.5 * aq, cq]])
    return d_block, q_block


def structure_matrices(system: MultiMachine):
    """Build ``(J, R, g)`` for orders 2/3/6 without any feasibility gating.

    ``J`` is skew and ``R`` symmetric by construction (entries are written
    in mirrored pairs); PSD-ness of ``R`` is the assembly gate, not a
    construction property.
    """
    order, n, w = system.order, system.n, system.omega_s
    if order not in (2, 3, 6):
        raise OrderError(f"no constant-structure form for order {order}; "
                         "orders 2, 3 and 6 are supported")
    N = system.n_states
    J = np.zeros((N, N))
    R = np.zeros((N, N))
    ao = system.block_slice(system.blocks[0]).start
    po = system.block_slice("p").start
    for i in range(n):
        J[ao + i, po + i] = w
        J[po + i, ao + i] = -w
    if order in (2, 3):
        for i in range(n):
            R[po + i, po + i] = w * system.D[i]
    if order == 2:
        g = np.zeros((N, n))
        for i in range(n):
            g[po + i, i] = 1.0
        return J, R, g
    qo = system.block_slice("E_q_prime").start
    g = np.zeros((N, 2 * n))
    for i, sp in enumerate(system.machines):
        g[po + i, i] = 1.0
        g[qo + i, n + i] = 1.0 / sp.T_do_prime
    if order == 3:
        for i, sp in enumerate(system.machines):
            R[qo + i, qo + i] = w * (sp.X_d - sp.X_d_prime) / sp.T_do_prime
        return J, R, g
    do = system.block_slice("E_d_prime").start
    qqo = system.block_slice("E_q_2prime").start
    ddo = system.block_slice("E_d_2prime").start
    for i, sp in enumerate(system.machines):
        d_block, q_block = machine_dissipation_blocks(sp)
        R[qo + i, qo + i] = d_block[0, 0]
        R[qqo + i, qqo + i] = d_block[1, 1]
        R[qo + i, qqo + i] = R[qqo + i, qo + i] = d_block[0, 1]
        J[qo + i, qqo + i] = -d_block[0, 1]
        J[qqo + i, qo + i] = d_block[0, 1]
        R[do + i, do + i] = q_block[0, 0]
        R[ddo + i, ddo + i] = q_block[1, 1]
        R[do + i, ddo + i] = R[ddo + i, do + i] = q_block[0, 1]
        J[do + i, ddo + i] = -q_block[0, 1]
        J[ddo + i, do + i] = q_block[0, 1]
    return J, R, g


@dataclass(frozen=True)
class PHSystem:
    """Assembled constant-structure system bound to a grid and parameters."""

    system: MultiMachine
    J: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)

    @property
    def omega_s(self) -> float:
        return self.system.omega_s

    @property
    def n_states(self) -> int:
        return self.system.n_states

    @property
    def n_inputs(self) -> int:
        return self.g.shape[1]

    def hamiltonian(self, x) -> float:
        return total_energy(self.system, x)

    def gradient(self, x) -> np.ndarray:
        return energy_gradient(self.system, x)

    def hessian(self, x) -> np.ndarray:
        return energy_hessian(self.system, x)


def assemble(system: MultiMachine) -> PHSystem:
    """Assemble the constant-structure form, gating on its hypotheses.

    Order 6 requires the per-machine dissipation margins to be nonnegative
    and strict transient stages on both axes (salient-pole machines belong
    to order 5).  Order 2 requires a lossless network.
    """
    if system.order == 2 and system.cgrid is not None and not system.cgrid.is_lossless:
        raise AssumptionError("constant-structure form needs zero conductances; "
                              "nonzero-G classical dynamics are simulation-only")
    if system.order == 6:
        bad = []
        for i, sp in enumerate(system.machines):
            res = psd_timescale_check(sp)
            if not res.holds:
                bad.append(f"machine {i}: margin_d={res.margin_d:.6g}, "
                           f"margin_q={res.margin_q:.6g}")
            if not sp.X_q > sp.X_q_prime:
                raise AssumptionError(
                    f"machine {i}: order-6 energy needs X_q > X_q_prime; "
                    "model a salient-pole machine with order 5")
        if bad:
            raise AssumptionError(
                "dissipation matrix would be indefinite; timescale margins "
                "must be nonnegative: " + "; ".join(bad))
    J, R, g = structure_matrices(system)
    assert np.array_equal(J, -J.T)
    assert np.array_equal(R, R.T)
    lam_min = float(np.linalg.eigvalsh(R)[0]) if R.any() else 0.0
    if lam_min < -PSD_TOL:
        raise AssumptionError(f"dissipation matrix is indefinite (lambda_min={lam_min:.3e})")
    return PHSystem(system=system, J=J, R=R, g=g)


def ph_rhs(sys: PHSystem, x, u) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``xdot = (J - R) grad H(x) + g u`` and ``y = g^T grad H(x)``.

    For order 2 the natural output is ``Delta_omega / omega_s``; for
    orders 3/6 it stacks that with the scaled field-winding imbalance.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (sys.n_states,):
        raise ValueError(f"state must have {sys.n_states} entries, got {x.shape}")
    if u.shape != (sys.n_inputs,):
        raise ValueError(f"input must have {sys.n_inputs} entries, got {u.shape}")
    grad = sys.gradient(x)
    return (sys.J - sys.R) @ grad + sys.g @ u, sys.g.T @ grad


def uniform_angle_direction(system: MultiMachine) -> np.ndarray:
    """Unit vector of the rotational symmetry (ones on the angle block)."""
    v = np.zeros(system.n_states)
    v[system.block_slice(system.blocks[0])] = 1.0 / np.sqrt(system.n)
    return v


def quotient_hessian_eigenvalues(system: MultiMachine, x) -> np.ndarray:
    """Eigenvalues of the energy Hessian restricted to the orthogonal
    complement of the uniform-angle-shift direction.

    The full Hessian is at best positive *semi*-definite because the
    energy is invariant under that shift; definiteness statements about
    equilibria are therefore evaluated on this quotient.
    """
    H = energy_hessian(system, x)
    v = uniform_angle_direction(system)
    N = system.n_states
    Q, _ = np.linalg.qr(np.column_stack([v, np.eye(N)]))
    C = Q[:, 1:N]
    return np.linalg.eigvalsh(C.T @ H @ C)


@dataclass(frozen=True)
class Equilibrium:
    """A steady state, its inputs and the quotient-Hessian verdict."""

    x_bar: np.ndarray
    u_bar: np.ndarray
    residual_norm: float
    hessian_eigenvalues: np.ndarray
    hessian_positive_definite: bool
    iterations: int


def find_equilibrium(system: MultiMachine, P_m, E_f=None, x0=None,
                     tol: float = 1e-10, max_iter: int = 50) -> Equilibrium:
    """Solve for a steady state of the closed multi-machine system.

    Damped Gauss-Newton on the model right-hand side with the angle of
    node 0 grounded (the dynamics only see angle differences, so the full
    Jacobian is singular along the uniform shift).  Lossless networks can
    only balance when the mechanical powers sum to zero; other inputs are
    rejected up front.
    """
    P_m = np.asarray(P_m, dtype=float)
    if abs(P_m.sum()) > 1e-9 * max(1.0, float(np.max(np.abs(P_m))) if P_m.size else 1.0):
        raise EquilibriumError(
            f"mechanical powers must sum to zero in a lossless network "
            f"(sum = {P_m.sum():.3e})")
    if system.order == 2 and system.cgrid is not None and not system.cgrid.is_lossless:
        raise EquilibriumError("equilibrium solving supports lossless networks only")

    if x0 is None:
        blocks = {system.blocks[0]: np.zeros(system.n), "p": np.zeros(system.n)}
        for name in system.blocks[2:]:
            blocks[name] = (np.zeros(system.n) if name.startswith("E_d")
                            else np.ones(system.n))
        x0 = system.pack(**blocks)
    x = np.asarray(x0, dtype=float).copy()

    def rhs(xv):
        return multimachine_rhs(system, xv, P_m, E_f)

    free = np.arange(1, system.n_states)  # ground the first angle entry

    r = rhs(x)
    it = 0
    while np.max(np.abs(r)) > tol:
        if it >= max_iter:
            raise EquilibriumError(
                f"no convergence after {max_iter} iterations "
                f"(last residual {np.max(np.abs(r)):.3e})",
                residual=float(np.max(np.abs(r))))
        # finite-difference Jacobian on the free coordinates
        Jac = np.empty((system.n_states, free.size))
        for c, j in enumerate(free):
            h = 1e-6 * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += h
            xm = x.copy()
            xm[j] -= h
            Jac[:, c] = (rhs(xp) - rhs(xm)) / (2.0 * h)
        step, *_ = np.linalg.lstsq(Jac, -r, rcond=None)
        alpha = 1.0
        norm0 = np.linalg.norm(r)
        while alpha > 1e-8:
            x_try = x.copy()
            x_try[free] += alpha * step
            r_try = rhs(x_try)
            if np.linalg.norm(r_try) < (1.0 - 1e-4 * alpha) * norm0 or norm0 == 0.0:
                x, r = x_try, r_try
                break
            alpha *= 0.5
        else:
            raise EquilibriumError(
                f"line search stalled (residual {norm0:.3e})",
                residual=float(np.max(np.abs(r))))
        it += 1

    u_bar = _consistent_input(system, x)
    eigs = quotient_hessian_eigenvalues(system, x)
    H = energy_hessian(system, x)
    scale = max(1.0, float(np.linalg.norm(H, np.inf)))
    return Equilibrium(
        x_bar=x,
        u_bar=u_bar,
        residual_norm=float(np.max(np.abs(r))),
        hessian_eigenvalues=eigs,
        hessian_positive_definite=bool(eigs[0] > PSD_TOL * scale),
        iterations=it,
    )


def _consistent_input(system: MultiMachine, x_bar) -> np.ndarray:
    """Stacked constant input holding ``x_bar`` fixed under the direct model."""
    from .machines import stack_inputs

    n = system.n
    zero_P = np.zeros(n)
    if system.order == 2:
        base = multimachine_rhs(system, x_bar, zero_P)
        P_m = -system.block(base, "p")
        return stack_inputs(system, P_m)
    base = multimachine_rhs(system, x_bar, zero_P, np.zeros(n))
    P_m = -system.block(base, "p")
    T_do = np.array([sp.T_do_prime for sp in system.machines])
    E_f = -system.block(base, "E_q_prime") * T_do
    return stack_inputs(system, P_m, E_f)


@dataclass(frozen=True)
class ShiftedStorage:
    """Storage function certifying passivity about a steady state:
    ``Hbar(x) = H(x) - (x - x_bar) . grad H(x_bar) - H(x_bar)``."""

    sys: PHSystem
    x_bar: np.ndarray
    u_bar: np.ndarray
    grad_bar: np.ndarray = field(repr=False)
    H_bar: float

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return (self.sys.hamiltonian(x)
                - float((x - self.x_bar) @ self.grad_bar) - self.H_bar)

    def gradient(self, x) -> np.ndarray:
        return self.sys.gradient(x) - self.grad_bar

    def shifted_input(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float) - self.u_bar

    def shifted_output(self, x) -> np.ndarray:
        return self.sys.g.T @ self.gradient(x)

    def dissipation(self, x) -> float:
        gb = self.gradient(x)
        return float(gb @ self.sys.R @ gb)


def shifted_storage(sys: PHSystem, x_bar, tol: float = 1e-8) -> ShiftedStorage:
    """Build the shifted storage around ``x_bar``.

    ``x_bar`` must be an equilibrium for *some* constant input; that input
    is recovered by least squares and the stationarity residual checked.
    """
    x_bar = np.asarray(x_bar, dtype=float)
    grad_bar = sys.gradient(x_bar)
    drift = (sys.J - sys.R) @ grad_bar
    u_bar, *_ = np.linalg.lstsq(sys.g, -drift, rcond=None)
    residual = np.max(np.abs(drift + sys.g @ u_bar))
    if residual > tol:
        raise EquilibriumError(
            f"x_bar is not an equilibrium for any constant input "
            f"(best residual {residual:.3e})", residual=float(residual))
    return ShiftedStorage(sys=sys, x_bar=x_bar, u_bar=u_bar,
                          grad_bar=grad_bar, H_bar=sys.hamiltonian(x_bar))


@dataclass(frozen=True)
class PassivityReport:
    """Sampled passivity balance along a trajectory.

    ``residual = dHbar/dt - u~.y~ + grad Hbar . R grad Hbar`` should vanish
    up to differentiation error; ``supply_violation`` is the pointwise
    excess of ``dHbar/dt`` over the shifted supply ``u~.y~`` (passivity
    demands it be nonpositive).
    """

    t: np.ndarray
    H_bar: np.ndarray
    supply: np.ndarray
    dissipation: np.ndarray
    dH_dt: np.ndarray
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def max_supply_violation(self) -> float:
        return float(np.max(self.dH_dt - self.supply))

    def to_text(self) -> str:
        lines = [
            f"samples: {self.t.size}",
            f"t_span: [{self.t[0]:.17e}, {self.t[-1]:.17e}]",
            f"max_abs_balance_residual: {self.max_residual:.17e}",
            f"max_supply_violation: {self.max_supply_violation:.17e}",
            f"storage_initial: {self.H_bar[0]:.17e}",
            f"storage_final: {self.H_bar[-1]:.17e}",
        ]
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="\n") as f:
            f.write("t,H_bar,supply,residual\n")
            for j in range(self.t.size):
                f.write(f"{self.t[j]:.17e},{self.H_bar[j]:.17e},"
                        f"{self.supply[j]:.17e},{self.residual[j]:.17e}\n")


def passivity_certificate(sys: PHSystem, x_bar, traj: Trajectory) -> PassivityReport:
    """Check the shifted energy balance along a simulated trajectory.

    The trajectory must carry input samples in the stacked layout of the
    system's input map.  The storage derivative is estimated with a
    fourth-order stencil on the uniform sample grid.
    """
    if traj.x.shape[1] != sys.n_states:
        raise ValueError("trajectory state dimension does not match the system")
    if traj.u is None or traj.u.shape[1] != sys.n_inputs:
        raise ValueError("trajectory must carry input samples matching the input map")
    store = shifted_storage(sys, x_bar)
    T = traj.t.size
    H_bar = np.empty(T)
    supply = np.empty(T)
    diss = np.empty(T)
    for j in range(T):
        xj = traj.x[j]
        H_bar[j] = store.value(xj)
        supply[j] = float(store.shifted_input(traj.u[j]) @ store.shifted_output(xj))
        diss[j] = store.dissipation(xj)
    dH = derivative_stencil(traj.t, H_bar)
    return PassivityReport(t=traj.t.copy(), H_bar=H_bar, supply=supply,
                           dissipation=diss, dH_dt=dH,
                           residual=dH - supply + diss)
