"""Reference-frame machinery: Park transform, frame rotations, phasors.

Angles are kept unwrapped (no reduction mod 2pi): rotor angles integrate
without bound and wrapping would introduce jumps into energy gradients
evaluated along trajectories.

Phasor convention: the real part carries the q-component,
``V = V_q + j V_d``.  Several textbooks use ``V_d + j V_q`` instead; all
code in this package uses the former.
"""

from __future__ import annotations

import math

import numpy as np

_SQRT23 = math.sqrt(2.0 / 3.0)
_SQRT12 = math.sqrt(0.5)
_TWO_THIRDS_PI = 2.0 * math.pi / 3.0


def park(gamma: float) -> np.ndarray:
    """Orthogonal dq0 (Park) transform at rotor angle ``gamma``.

    Maps balanced three-phase ABC signals to constant dq0 signals.  The
    normalization makes the matrix orthogonal, ``T(gamma)^-1 = T(gamma)^T``,
    so the transform is power invariant.
    """
    a, b, c = gamma, gamma - _TWO_THIRDS_PI, gamma + _TWO_THIRDS_PI
    return _SQRT23 * np.array([
        [math.cos(a), math.cos(b), math.cos(c)],
        [math.sin(a), math.sin(b), math.sin(c)],
        [_SQRT12, _SQRT12, _SQRT12],
    ])


def frame_rotation(gamma_ik: float) -> np.ndarray:
    """Rotation taking machine-k dq0 coordinates to machine-i coordinates.

    Equals ``park(gamma_i) @ park(gamma_k).T`` with
    ``gamma_ik = gamma_i - gamma_k``; the 0-axis is untouched.
    """
    c, s = math.cos(gamma_ik), math.sin(gamma_ik)
    return np.array([
        [c, -s, 0.0],
        [s, c, 0.0],
        [0.0, 0.0, 1.0],
    ])


def frame_rotation_dq(gamma_ik: float) -> np.ndarray:
    """The 2x2 dq block of ``frame_rotation``, acting on ``(V_d, V_q)``."""
    c, s = math.cos(gamma_ik), math.sin(gamma_ik)
    return np.array([[c, -s], [s, c]])


def to_phasor(V_d: float, V_q: float) -> complex:
    """Pack dq components into a phasor, ``V_q + j V_d``."""
    return complex(V_q, V_d)


def from_phasor(v: complex) -> tuple[float, float]:
    """Unpack a phasor into ``(V_d, V_q)``; exact inverse of ``to_phasor``."""
    return v.imag, v.real


def rotate_phasor(v: complex, gamma_ik: float) -> complex:
    """Re-express a machine-k frame phasor in the machine-i frame,
    ``exp(-j gamma_ik) * v``.  Componentwise this is ``frame_rotation_dq``."""
    return complex(math.cos(gamma_ik), -math.sin(gamma_ik)) * v
