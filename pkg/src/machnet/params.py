"""Machine parameter records and the maps between them.

Two parameter pictures are supported:

* ``FundamentalParams`` — winding inductances, mutuals and resistances of
  one machine, the quantities a first-principle flux model is written in.
* ``StandardParams`` — synchronous/transient/subtransient reactances and
  open-circuit time constants, the quantities reduced-order models and
  manufacturer data sheets are written in.

``derive_standard`` computes the second picture from the first.  All values
are per-unit; the synchronous frequency ``omega_s`` is an explicit argument
everywhere rather than a hidden global.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, asdict
import math

import numpy as np

from .errors import ParameterError

#: Three-phase scaling constant of the dq0 flux/current relations.
KAPPA = math.sqrt(1.5)

#: Absolute slack used when testing the dissipation-margin inequalities.
#: The inequalities are closed conditions on exact parameters; the slack
#: only absorbs floating-point rounding in the derived quantities.
MARGIN_TOL = 1e-12


@dataclass(frozen=True)
class FundamentalParams:
    """Winding-level constants of a single synchronous machine [p.u.].

    The d-axis magnetic circuit couples the stator d-winding, the field
    winding f and the damper winding D; the q-axis couples the stator
    q-winding, the rotor-body g-winding and the damper winding Q.  Both
    3x3 inductance matrices must be symmetric positive definite.
    """

    L_d: float
    L_q: float
    L_f: float
    L_g: float
    L_D: float
    L_Q: float
    L_fD: float
    L_gQ: float
    M_f: float
    M_g: float
    M_D: float
    M_Q: float
    R: float
    R_f: float
    R_g: float
    R_D: float
    R_Q: float
    J: float
    d: float = 0.0
    kappa: float = KAPPA

    def __post_init__(self):
        for name in ("R", "R_f", "R_g", "R_D", "R_Q"):
            if not getattr(self, name) > 0.0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.J > 0.0:
            raise ParameterError(f"J must be > 0, got {self.J}")
        if self.d < 0.0:
            raise ParameterError(f"d must be >= 0, got {self.d}")
        for axis, mat in (("d", self.inductance_matrix_d()),
                          ("q", self.inductance_matrix_q())):
            try:
                np.linalg.cholesky(mat)
            except np.linalg.LinAlgError:
                raise ParameterError(
                    f"{axis}-axis inductance matrix is not positive definite"
                ) from None

    def inductance_matrix_d(self) -> np.ndarray:
        k = self.kappa
        return np.array([
            [self.L_d, k * self.M_f, k * self.M_D],
            [k * self.M_f, self.L_f, self.L_fD],
            [k * self.M_D, self.L_fD, self.L_D],
        ])

    def inductance_matrix_q(self) -> np.ndarray:
        k = self.kappa
        return np.array([
            [self.L_q, k * self.M_g, k * self.M_Q],
            [k * self.M_g, self.L_g, self.L_gQ],
            [k * self.M_Q, self.L_gQ, self.L_Q],
        ])

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FundamentalParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown fundamental parameter keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class StandardParams:
    """Reactances, open-circuit time constants and swing constants [p.u., s].

    Field names double as the serialization keys of scenario files
    (``X_d_prime`` is the d-axis transient reactance, ``T_do_2prime`` the
    d-axis subtransient open-circuit time constant, and so on).
    """

    X_d: float
    X_q: float
    X_d_prime: float
    X_q_prime: float
    X_d_2prime: float
    X_q_2prime: float
    T_do_prime: float
    T_qo_prime: float
    T_do_2prime: float
    T_qo_2prime: float
    M: float
    D: float
    omega_s: float

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "StandardParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown standard parameter keys: {sorted(unknown)}")
        missing = known - set(data)
        if missing:
            raise ParameterError(f"missing standard parameter keys: {sorted(missing)}")
        return cls(**data)


def derive_standard(fp: FundamentalParams, omega_s: float, D: float = 0.0) -> StandardParams:
    """Derive reactances and time constants from winding constants.

    The transient stage screens with the field/g windings, the subtransient
    stage additionally with the D/Q damper windings; each stage subtracts
    the corresponding coupled-flux contribution from the synchronous
    inductance.  Reactances are ``omega_s * L`` and ``M = omega_s * J``.
    The asynchronous damping ``D`` is phenomenological and passed through.
    """
    if not omega_s > 0.0:
        raise ParameterError(f"omega_s must be > 0, got {omega_s}")
    if D < 0.0:
        raise ParameterError(f"D must be >= 0, got {D}")
    k2 = fp.kappa ** 2
    den_d = fp.L_f * fp.L_D - fp.L_fD ** 2
    den_q = fp.L_g * fp.L_Q - fp.L_gQ ** 2
    # positive by PD of the inductance matrices, checked at construction
    L_d_prime = fp.L_d - k2 * fp.M_f ** 2 / fp.L_f
    L_q_prime = fp.L_q - k2 * fp.M_g ** 2 / fp.L_g
    L_d_2prime = fp.L_d - k2 * (fp.M_f ** 2 * fp.L_D + fp.M_D ** 2 * fp.L_f
                                - 2.0 * fp.M_f * fp.M_D * fp.L_fD) / den_d
    L_q_2prime = fp.L_q - k2 * (fp.M_g ** 2 * fp.L_Q + fp.M_Q ** 2 * fp.L_g
                                - 2.0 * fp.M_g * fp.M_Q * fp.L_gQ) / den_q
    return StandardParams(
        X_d=omega_s * fp.L_d,
        X_q=omega_s * fp.L_q,
        X_d_prime=omega_s * L_d_prime,
        X_q_prime=omega_s * L_q_prime,
        X_d_2prime=omega_s * L_d_2prime,
        X_q_2prime=omega_s * L_q_2prime,
        T_do_prime=fp.L_f / fp.R_f,
        T_qo_prime=fp.L_g / fp.R_g,
        T_do_2prime=(fp.L_D - fp.L_fD ** 2 / fp.L_f) / fp.R_D,
        T_qo_2prime=(fp.L_Q - fp.L_gQ ** 2 / fp.L_g) / fp.R_Q,
        M=omega_s * fp.J,
        D=D,
        omega_s=omega_s,
    )


def validate_standard(sp: StandardParams) -> list[str]:
    """Check the reactance orderings and positivity requirements.

    Returns a list of human-readable violation messages; an empty list
    means the record is valid.  The q-axis transient stage allows
    ``X_q == X_q_prime`` (salient-pole machine without a g-winding).
    """
    v = []
    if not sp.X_d_2prime > 0.0:
        v.append(f"X_d_2prime > 0 fails (got {sp.X_d_2prime})")
    if not sp.X_d_prime > sp.X_d_2prime:
        v.append(f"X_d_prime > X_d_2prime fails ({sp.X_d_prime} <= {sp.X_d_2prime})")
    if not sp.X_d > sp.X_d_prime:
        v.append(f"X_d > X_d_prime fails ({sp.X_d} <= {sp.X_d_prime})")
    if not sp.X_q_2prime > 0.0:
        v.append(f"X_q_2prime > 0 fails (got {sp.X_q_2prime})")
    if not sp.X_q_prime > sp.X_q_2prime:
        v.append(f"X_q_prime > X_q_2prime fails ({sp.X_q_prime} <= {sp.X_q_2prime})")
    if not sp.X_q >= sp.X_q_prime:
        v.append(f"X_q >= X_q_prime fails ({sp.X_q} < {sp.X_q_prime})")
    for name in ("T_do_prime", "T_qo_prime", "T_do_2prime", "T_qo_2prime"):
        if not getattr(sp, name) > 0.0:
            v.append(f"{name} > 0 fails (got {getattr(sp, name)})")
    if not sp.M > 0.0:
        v.append(f"M > 0 fails (got {sp.M})")
    if sp.D < 0.0:
        v.append(f"D >= 0 fails (got {sp.D})")
    if not sp.omega_s > 0.0:
        v.append(f"omega_s > 0 fails (got {sp.omega_s})")
    return v


@dataclass(frozen=True)
class PsdTimescaleResult:
    """Outcome of the dissipation-matrix timescale condition."""

    holds: bool
    margin_d: float
    margin_q: float


def psd_timescale_check(sp: StandardParams) -> PsdTimescaleResult:
    """Evaluate the reactance/time-constant margins gating dissipation PSD.

    ``margin_d = 4 (X_d' - X_d'') T_do' - (X_d - X_d') T_do''`` and the
    q-axis twin.  Both nonnegative is necessary and sufficient for the
    assembled sixth-order dissipation matrix to be positive semi-definite
    (checked against ``MARGIN_TOL`` to absorb rounding).
    """
    margin_d = (4.0 * (sp.X_d_prime - sp.X_d_2prime) * sp.T_do_prime
                - (sp.X_d - sp.X_d_prime) * sp.T_do_2prime)
    margin_q = (4.0 * (sp.X_q_prime - sp.X_q_2prime) * sp.T_qo_prime
                - (sp.X_q - sp.X_q_prime) * sp.T_qo_2prime)
    holds = margin_d >= -MARGIN_TOL and margin_q >= -MARGIN_TOL
    return PsdTimescaleResult(holds=holds, margin_d=margin_d, margin_q=margin_q)


def margins_from_fundamentals(fp: FundamentalParams, omega_s: float) -> tuple[float, float]:
    """Closed-form dissipation margins straight from winding constants.

    Algebraically identical to running ``psd_timescale_check`` on
    ``derive_standard(fp, omega_s)`` but factored so each term's sign is
    explicit: the first numerator term grows with the damper resistance,
    the second with the field (g) resistance.  For realistic machines the
    damper term dominates and both margins are strictly positive.
    """
    k2 = fp.kappa ** 2
    den_d = fp.L_f * fp.L_D - fp.L_fD ** 2
    den_q = fp.L_g * fp.L_Q - fp.L_gQ ** 2
    margin_d = k2 * omega_s * (
        4.0 * fp.L_f ** 2 * (fp.L_f * fp.M_D - fp.L_fD * fp.M_f) ** 2 * fp.R_D
        - den_d ** 2 * fp.M_f ** 2 * fp.R_f
    ) / (fp.L_f ** 2 * den_d * fp.R_D * fp.R_f)
    margin_q = k2 * omega_s * (
        4.0 * fp.L_g ** 2 * (fp.L_g * fp.M_Q - fp.L_gQ * fp.M_g) ** 2 * fp.R_Q
        - den_q ** 2 * fp.M_g ** 2 * fp.R_g
    ) / (fp.L_g ** 2 * den_q * fp.R_Q * fp.R_g)
    return margin_d, margin_q


def scaled_excitation(V_f: float, fp: FundamentalParams, omega_s: float) -> float:
    """Scale an excitation voltage to internal-emf units:
    ``E_f = omega_s * kappa * M_f * V_f / R_f``."""
    if not fp.R_f > 0.0:
        raise ParameterError(f"R_f must be > 0, got {fp.R_f}")
    return omega_s * fp.kappa * fp.M_f * V_f / fp.R_f
