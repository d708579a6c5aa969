"""First-principle synchronous machine: flux dynamics and energy.

Eight states are integrated: the stator flux linkages ``Psi_d, Psi_q``, the
rotor flux linkages ``Psi_f, Psi_g, Psi_D, Psi_Q``, the rotor angle ``gamma``
and the angular momentum ``p = J * omega``.  The decoupled 0-axis is not
modelled.

Sign convention for the stator port: ``V_d, V_q`` are the voltages applied
at the machine terminals, so ``V_d*I_d + V_q*I_q`` is power flowing *into*
the stator windings.  With this convention the dynamics, the structured
(port-Hamiltonian) form and the passivity bound
``dH/dt <= V_d I_d + V_q I_q + V_f I_f + tau*omega`` are one consistent
package; a generator delivering power sees negative ``V_d I_d + V_q I_q``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .params import FundamentalParams

#: Canonical ordering of the integrated state vector.
FULL_STATE_VARS = ("Psi_d", "Psi_q", "Psi_f", "Psi_g", "Psi_D", "Psi_Q", "gamma", "p")


@dataclass(frozen=True)
class FullState:
    Psi_d: float
    Psi_q: float
    Psi_f: float
    Psi_g: float
    Psi_D: float
    Psi_Q: float
    gamma: float
    p: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FULL_STATE_VARS])

    @classmethod
    def from_array(cls, x) -> "FullState":
        x = np.asarray(x, dtype=float)
        if x.shape != (8,):
            raise ValueError(f"full state must have 8 entries, got shape {x.shape}")
        return cls(*x)


@dataclass(frozen=True)
class FullInputs:
    """Port inputs: stator voltages (receiving convention, see module
    docstring), excitation voltage and mechanical torque."""

    V_d: float
    V_q: float
    V_f: float
    tau: float

    def to_array(self) -> np.ndarray:
        return np.array([self.V_d, self.V_q, self.V_f, self.tau])


def flux_to_currents(s: FullState, fp: FundamentalParams) -> np.ndarray:
    """Winding currents ``(I_d, I_f, I_D, I_q, I_g, I_Q)`` from flux linkages.

    Solves the two 3x3 linear flux/current systems directly; positive
    definiteness of the inductance matrices (enforced by the parameter
    type) guarantees solvability.
    """
    i_d = np.linalg.solve(fp.inductance_matrix_d(),
                          np.array([s.Psi_d, s.Psi_f, s.Psi_D]))
    i_q = np.linalg.solve(fp.inductance_matrix_q(),
                          np.array([s.Psi_q, s.Psi_g, s.Psi_Q]))
    return np.concatenate([i_d, i_q])


def full_hamiltonian(s: FullState, fp: FundamentalParams) -> float:
    """Stored energy: magnetic coenergy of both axes plus rotor kinetic energy."""
    I_d, I_f, I_D, I_q, I_g, I_Q = flux_to_currents(s, fp)
    electrical = 0.5 * (s.Psi_d * I_d + s.Psi_f * I_f + s.Psi_D * I_D
                        + s.Psi_q * I_q + s.Psi_g * I_g + s.Psi_Q * I_Q)
    return electrical + 0.5 * s.p ** 2 / fp.J


def full_gradient(s: FullState, fp: FundamentalParams) -> np.ndarray:
    """Analytic energy gradient in state order: currents, 0 for the angle,
    and ``omega`` for the momentum slot."""
    I_d, I_f, I_D, I_q, I_g, I_Q = flux_to_currents(s, fp)
    return np.array([I_d, I_q, I_f, I_g, I_D, I_Q, 0.0, s.p / fp.J])


def full_rhs(s: FullState, u: FullInputs, fp: FundamentalParams) -> np.ndarray:
    """State derivative of the flux-level model (order per FULL_STATE_VARS)."""
    I_d, I_f, I_D, I_q, I_g, I_Q = flux_to_currents(s, fp)
    w = s.p / fp.J
    return np.array([
        -fp.R * I_d - s.Psi_q * w + u.V_d,
        -fp.R * I_q + s.Psi_d * w + u.V_q,
        -fp.R_f * I_f + u.V_f,
        -fp.R_g * I_g,
        -fp.R_D * I_D,
        -fp.R_Q * I_Q,
        w,
        s.Psi_q * I_d - s.Psi_d * I_q - fp.d * w + u.tau,
    ])


def full_structure(s: FullState, fp: FundamentalParams):
    """State-dependent structured form: skew interconnection ``Jmat``,
    dissipation ``Rmat`` and input map ``G`` with
    ``xdot = (Jmat - Rmat) grad H + G u``.

    The interconnection couples the stator fluxes to the momentum through
    the fluxes themselves, which is what makes the full model's structure
    state-dependent (unlike the reduced multi-machine forms).
    """
    Jmat = np.zeros((8, 8))
    Jmat[0, 7] = -s.Psi_q
    Jmat[7, 0] = s.Psi_q
    Jmat[1, 7] = s.Psi_d
    Jmat[7, 1] = -s.Psi_d
    Jmat[6, 7] = 1.0
    Jmat[7, 6] = -1.0
    Rmat = np.diag([fp.R, fp.R, fp.R_f, fp.R_g, fp.R_D, fp.R_Q, 0.0, fp.d])
    G = np.zeros((8, 4))
    G[0, 0] = 1.0
    G[1, 1] = 1.0
    G[2, 2] = 1.0
    G[7, 3] = 1.0
    return Jmat, Rmat, G


def full_ph_rhs(s: FullState, u: FullInputs, fp: FundamentalParams):
    """Evaluate the structured form; returns ``(xdot, y)`` with the natural
    output ``y = G^T grad H = (I_d, I_q, I_f, omega)``."""
    Jmat, Rmat, G = full_structure(s, fp)
    grad = full_gradient(s, fp)
    xdot = (Jmat - Rmat) @ grad + G @ u.to_array()
    y = G.T @ grad
    return xdot, y


def _k_coefficients(fp: FundamentalParams) -> tuple[float, float, float, float]:
    den_d = fp.L_f * fp.L_D - fp.L_fD ** 2
    den_q = fp.L_g * fp.L_Q - fp.L_gQ ** 2
    k1 = fp.kappa * (fp.M_f * fp.L_D - fp.M_D * fp.L_fD) / den_d
    k2 = fp.kappa * (fp.M_D * fp.L_f - fp.M_f * fp.L_fD) / den_d
    k3 = fp.kappa * (fp.M_g * fp.L_Q - fp.M_Q * fp.L_gQ) / den_q
    k4 = fp.kappa * (fp.M_Q * fp.L_g - fp.M_g * fp.L_gQ) / den_q
    return k1, k2, k3, k4


def subtransient_coordinates(Psi_f: float, Psi_D: float, Psi_g: float, Psi_Q: float,
                             fp: FundamentalParams, omega_s: float):
    """Internal emfs ``(E_q', E_d', E_q'', E_d'')`` from rotor flux linkages.

    The transient emfs see only the field/g winding flux; the subtransient
    emfs mix in the damper windings.  Per axis the map from the two rotor
    fluxes to (transient, subtransient) emf is linear; use
    ``rotor_flux_from_emfs`` to invert it.
    """
    k1, k2, k3, k4 = _k_coefficients(fp)
    E_q_prime = omega_s * (fp.kappa * fp.M_f / fp.L_f) * Psi_f
    E_d_prime = -omega_s * (fp.kappa * fp.M_g / fp.L_g) * Psi_g
    E_q_2prime = omega_s * (k1 * Psi_f + k2 * Psi_D)
    E_d_2prime = -omega_s * (k3 * Psi_g + k4 * Psi_Q)
    return E_q_prime, E_d_prime, E_q_2prime, E_d_2prime


def rotor_flux_from_emfs(E_q_prime: float, E_d_prime: float,
                         E_q_2prime: float, E_d_2prime: float,
                         fp: FundamentalParams, omega_s: float):
    """Invert ``subtransient_coordinates``: recover ``(Psi_f, Psi_D, Psi_g, Psi_Q)``."""
    k1, k2, k3, k4 = _k_coefficients(fp)
    a_d = omega_s * fp.kappa * fp.M_f / fp.L_f
    a_q = omega_s * fp.kappa * fp.M_g / fp.L_g
    det_d = a_d * omega_s * k2
    det_q = a_q * omega_s * k4
    scale_d = abs(omega_s) ** 2 * (1.0 + abs(k1) + abs(k2) + abs(a_d))
    scale_q = abs(omega_s) ** 2 * (1.0 + abs(k3) + abs(k4) + abs(a_q))
    if abs(det_d) <= 1e-14 * scale_d or abs(det_q) <= 1e-14 * scale_q:
        raise ParameterError("emf/rotor-flux coordinate map is singular "
                             "(zero mutual inductance or degenerate damper coupling)")
    Psi_f = E_q_prime / a_d
    Psi_D = (E_q_2prime / omega_s - k1 * Psi_f) / k2
    Psi_g = -E_d_prime / a_q
    Psi_Q = (-E_d_2prime / omega_s - k3 * Psi_g) / k4
    return Psi_f, Psi_D, Psi_g, Psi_Q


def mechanical_power(tau: float, omega_s: float) -> float:
    """Convert shaft torque to the power input used by reduced models,
    ``P_m = omega_s * tau``."""
    return omega_s * tau


def mechanical_torque(P_m: float, omega_s: float) -> float:
    """Inverse of ``mechanical_power``."""
    return P_m / omega_s
