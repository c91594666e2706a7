"""Principal-space tensor invariants.

All stress and strain tensors in this package live in the principal frame and
are stored as length-3 vectors (stress in kPa, strain dimensionless).
Compression is positive, the usual soil mechanics sign convention: positive
mean stress p is confining pressure, positive volumetric strain is
contraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Deviator magnitudes below this fraction of the stress scale count as an
# isotropic (degenerate) state: the Lode parameter is then undefined.
DEGENERATE_Q_REL = 1e-9

# 0.5 * 3**1.5, the prefactor of the Lode parameter t = (J3/2) * (3/J2)**1.5.
_LODE_C = 0.5 * 3.0**1.5


def as_vec3(x) -> np.ndarray:
    """Coerce to a finite float vector of length 3."""
    v = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError("principal vector must be finite")
    return v


def vol(x) -> float:
    """Trace of a principal 3-vector with a fixed summation order.

    The order (x0 + x1) + x2 is used everywhere volumetric sums appear so
    that exact identities such as d_e = -(1 + e) * vol(d_eps) hold bitwise
    across modules.
    """
    return float(x[0]) + float(x[1]) + float(x[2])


@dataclass(frozen=True)
class StressInvariants:
    """Mean stress p, deviator s, von Mises q, J2, J3 and Lode parameter t."""

    p: float
    q: float
    s: np.ndarray
    J2: float
    J3: float
    t: float
    degenerate: bool


@dataclass(frozen=True)
class StrainInvariants:
    """Volumetric strain and equivalent shear strain of a principal vector."""

    eps_v: float
    gamma: float


def stress_invariants(sigma) -> StressInvariants:
    """Invariants of a principal stress vector (kPa, compression positive).

    q is the von Mises equivalent sqrt(3/2 s:s), J2 = q**2 / 3, J3 is the
    determinant of the (diagonal) deviator, and t = (J3/2)*(3/J2)**1.5 is the
    Lode parameter, +1 in triaxial compression and -1 in triaxial extension.
    When q is smaller than 1e-9 * max(|p|, 1 kPa) the state is flagged
    degenerate and t is reported as 0.
    """
    sig = as_vec3(sigma)
    p = vol(sig) / 3.0
    s = sig - p
    q = float(np.sqrt(1.5 * float(s @ s)))
    J2 = q * q / 3.0
    J3 = float(s[0] * s[1] * s[2])
    degenerate = q < DEGENERATE_Q_REL * max(abs(p), 1.0)
    if degenerate:
        t = 0.0
    else:
        t = _LODE_C * J3 / J2**1.5
        t = min(1.0, max(-1.0, t))
    return StressInvariants(p=p, q=q, s=s, J2=J2, J3=J3, t=t, degenerate=degenerate)


def strain_invariants(eps) -> StrainInvariants:
    """Volumetric strain eps_v = tr(eps) and shear strain sqrt(2/3 dev:dev)."""
    ev = as_vec3(eps)
    eps_v = vol(ev)
    dev = ev - eps_v / 3.0
    gamma = float(np.sqrt((2.0 / 3.0) * float(dev @ dev)))
    return StrainInvariants(eps_v=eps_v, gamma=gamma)


def void_ratio_increment(e: float, d_eps_v: float) -> float:
    """Void ratio change -(1 + e) * d_eps_v for a volumetric strain increment."""
    if e <= 0.0:
        raise ValueError(f"void ratio must be positive, got {e}")
    return -(1.0 + e) * d_eps_v
