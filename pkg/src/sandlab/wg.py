"""Critical-state sand plasticity in principal space.

The model combines:

* hypo-elasticity with pressure- and density-dependent moduli
  (shear modulus proportional to sqrt(p), constant Poisson ratio),
* a shear yield surface F = q - M(t, sin_phi) * p whose size is driven by
  the mobilized friction, itself hardening with accumulated plastic shear
  and scaled by the density state e / e_cs(p),
* a non-associated flow potential P = q - N * p where the dilatancy
  coefficient N vanishes at the critical state,
* a critical state line e_cs(p) = e_cs0 * exp(-(p/h)**n).

States are principal 3-vectors (kPa, compression positive).  The stress
integrator is an implicit single-step return mapping: backward Euler on
{sigma_n1, d_lambda} with moduli evaluated at the end of the step, solved
by Newton with an analytic 4x4 Jacobian, a finite-difference Jacobian
retry, and a bisection fallback on d_lambda.  An explicit sub-stepping
integrator of the same rate equations is provided as an independent
cross-check oracle.

The void ratio update d_e = -(1 + e) * tr(d_eps) depends only on the total
strain increment and is applied exactly, outside the Newton loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .invariants import (
    DEGENERATE_Q_REL,
    as_vec3,
    strain_invariants,
    stress_invariants,
    vol,
)


class IntegrationError(RuntimeError):
    """Return mapping failed to converge; carries the last residuals."""

    def __init__(self, message: str, residual_f: float = math.nan,
                 residual_sig: float = math.nan, iterations: int = 0):
        super().__init__(message)
        self.residual_f = residual_f
        self.residual_sig = residual_sig
        self.iterations = iterations


class StressStateError(ValueError):
    """A state left the admissible domain (p <= 0, invalid void ratio...)."""


# ---------------------------------------------------------------------------
# parameters and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WGParams:
    """Calibration constants of the sand model.

    G0          reference shear stiffness (kPa scale factor)
    nu          Poisson ratio, fixes the bulk/shear ratio R
    mu          ratio of extension to compression strength (Lode interpolation)
    sin_phi_cs  sine of the critical state friction angle
    beta        density exponent of the mobilized friction
    a           hardening constant (plastic shear strain scale)
    e_cs0       critical void ratio at vanishing pressure
    h           pressure scale of the critical state line (kPa)
    n           pressure exponent of the critical state line
    alpha_wg    density exponent of the dilatancy coefficient
    p0          reference pressure (kPa), also the floor of stress scales
    """

    G0: float
    nu: float
    mu: float
    sin_phi_cs: float
    beta: float
    a: float
    e_cs0: float
    h: float
    n: float
    alpha_wg: float
    p0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.nu < 0.5:
            raise ValueError(f"nu must lie in (0, 0.5), got {self.nu}")
        if not 0.0 < self.sin_phi_cs < 1.0:
            raise ValueError(f"sin_phi_cs must lie in (0, 1), got {self.sin_phi_cs}")
        if not 0.0 < self.mu <= 1.0:
            raise ValueError(f"mu must lie in (0, 1], got {self.mu}")
        for name in ("G0", "beta", "a", "e_cs0", "h", "n", "alpha_wg", "p0"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @classmethod
    def ottawa_sand(cls) -> "WGParams":
        """Calibration for a clean quartz sand (stresses in kPa)."""
        return cls(G0=900.0, nu=0.3, mu=0.8, sin_phi_cs=0.53, beta=1.3,
                   a=8.0e-3, e_cs0=0.74, h=5.65e5, n=0.4, alpha_wg=1.5)


@dataclass
class MaterialState:
    """Principal stress/strain state of a material point.

    sigma  principal stress, kPa, compression positive
    eps    accumulated principal strain
    eps_p  accumulated principal plastic strain
    e      void ratio

    The equivalent plastic shear strain is derived from eps_p, not stored.
    """

    sigma: np.ndarray
    eps: np.ndarray
    eps_p: np.ndarray
    e: float

    def __post_init__(self):
        self.sigma = as_vec3(self.sigma)
        self.eps = as_vec3(self.eps)
        self.eps_p = as_vec3(self.eps_p)
        self.e = float(self.e)

    @classmethod
    def isotropic(cls, p_in: float, e_in: float) -> "MaterialState":
        return cls(sigma=np.full(3, float(p_in)), eps=np.zeros(3),
                   eps_p=np.zeros(3), e=float(e_in))

    def copy(self) -> "MaterialState":
        return MaterialState(self.sigma.copy(), self.eps.copy(),
                             self.eps_p.copy(), self.e)

    def advanced(self, d_eps: np.ndarray, res: "StepResult") -> "MaterialState":
        """State after applying a strain increment and its StepResult."""
        return MaterialState(sigma=self.sigma + res.d_sigma,
                             eps=self.eps + d_eps,
                             eps_p=self.eps_p + res.d_eps_p,
                             e=self.e + res.d_e)

    def gamma_p(self) -> float:
        return strain_invariants(self.eps_p).gamma


@dataclass(frozen=True)
class IntegratorTolerances:
    """Convergence controls of the return mapping.

    f_rel    relative yield tolerance: |F| <= f_rel * max(p, p0)
    sig_rel  relative stress residual tolerance
    f_abs    absolute yield threshold (kPa) below which a trial is elastic
    max_iter Newton iteration cap per solver stage
    """

    f_rel: float = 1e-9
    sig_rel: float = 1e-10
    f_abs: float = 1e-9
    max_iter: int = 50


@dataclass(frozen=True)
class StepResult:
    """Outcome of one strain-driven integration step.

    d_sigma, d_eps_p, d_e  increments over the step
    d_lambda               plastic multiplier (zero iff elastic)
    iterations             solver iterations used (0 on an elastic step)
    plastic                whether plastic flow occurred
    f_end, n_end           yield value and dilatancy coefficient at the
                           end of the step (diagnostics)
    """

    d_sigma: np.ndarray
    d_eps_p: np.ndarray
    d_e: float
    d_lambda: float
    iterations: int
    plastic: bool
    f_end: float
    n_end: float


DEFAULT_TOL = IntegratorTolerances()


class Moduli(NamedTuple):
    G: float
    R: float
    K: float


class FrictionCoefficients(NamedTuple):
    M: float
    M_tc: float


# ---------------------------------------------------------------------------
# constitutive building blocks (strict public operations)
# ---------------------------------------------------------------------------


def elastic_moduli(p: float, e: float, params: WGParams) -> Moduli:
    """Shear modulus G, bulk/shear ratio R and bulk modulus K = R * G.

    G = G0 * (2.17 - e) / (1 + e) * sqrt(p * p0) grows with the square root
    of pressure and shrinks with the void ratio; R depends only on nu.
    """
    if p <= 0.0:
        raise StressStateError(f"mean stress must be positive, got {p}")
    if not 0.0 < e < 2.17:
        raise StressStateError(f"void ratio out of modulus range, got {e}")
    G = params.G0 * (2.17 - e) / (1.0 + e) * math.sqrt(p * params.p0)
    R = 2.0 * (1.0 + params.nu) / (3.0 * (1.0 - 2.0 * params.nu))
    return Moduli(G=G, R=R, K=R * G)


def critical_void_ratio(p: float, params: WGParams) -> float:
    """Critical state void ratio e_cs0 * exp(-(p/h)**n), decreasing in p."""
    if p <= 0.0:
        raise StressStateError(f"mean stress must be positive, got {p}")
    return params.e_cs0 * math.exp(-((p / params.h) ** params.n))


def mobilized_friction(gamma_p: float, e: float, e_cs: float,
                       params: WGParams) -> float:
    """Mobilized sin(phi): hyperbolic in gamma_p, scaled by density state.

    Zero at gamma_p = 0 (virgin states carry a zero-size yield surface) and
    saturating towards (e/e_cs)**(-beta) * sin_phi_cs.
    """
    if gamma_p < 0.0:
        raise ValueError(f"gamma_p must be nonnegative, got {gamma_p}")
    if e <= 0.0 or e_cs <= 0.0:
        raise ValueError("void ratios must be positive")
    return ((e / e_cs) ** (-params.beta)
            * gamma_p / (params.a + gamma_p) * params.sin_phi_cs)


def friction_coefficient(sin_phi: float, t: float,
                         params: WGParams) -> FrictionCoefficients:
    """Stress ratio M at Lode parameter t, interpolated from the triaxial
    compression value M_tc = 6 sin_phi / (3 - sin_phi).

    M(t=+1) = M_tc and M(t=-1) = mu * M_tc.
    """
    if not 0.0 <= sin_phi < 1.0:
        raise ValueError(f"sin_phi must lie in [0, 1), got {sin_phi}")
    if not -1.0 <= t <= 1.0:
        raise ValueError(f"Lode parameter must lie in [-1, 1], got {t}")
    m_tc = 6.0 * sin_phi / (3.0 - sin_phi)
    m = 2.0 * params.mu * m_tc / ((1.0 + params.mu) - (1.0 - params.mu) * t)
    return FrictionCoefficients(M=m, M_tc=m_tc)


def dilatancy_coefficient(sin_phi: float, e: float, e_cs: float,
                          params: WGParams) -> float:
    """Dilatancy coefficient N of the flow potential P = q - N p.

    Positive for dense states (plastic dilation), negative for loose ones,
    and zero at the critical state where e = e_cs and sin_phi = sin_phi_cs.
    """
    if e <= 0.0 or e_cs <= 0.0:
        raise ValueError("void ratios must be positive")
    xi = (e / e_cs) ** params.alpha_wg
    c = xi * params.sin_phi_cs
    den = 1.0 - c * sin_phi
    if abs(den) < 1e-12:
        raise ValueError("dilatancy denominator vanished")
    return (sin_phi - c) / den


def yield_value(sigma, gamma_p: float, e: float, params: WGParams) -> float:
    """Yield function F = q - M p at the given hardening state."""
    inv = stress_invariants(sigma)
    if inv.p <= 0.0:
        raise StressStateError(f"mean stress must be positive, got {inv.p}")
    e_cs = critical_void_ratio(inv.p, params)
    sin_phi = mobilized_friction(gamma_p, e, e_cs, params)
    m = friction_coefficient(sin_phi, inv.t, params).M
    return inv.q - m * inv.p


def plastic_flow_direction(sigma, n_coeff: float) -> np.ndarray:
    """Flow direction m_i = (3/2) s_i / q - N / 3.

    Normalized so that the equivalent plastic shear rate equals the plastic
    multiplier rate and sum(m) = -N.
    """
    inv = stress_invariants(sigma)
    if inv.degenerate:
        raise StressStateError("flow direction undefined at an isotropic state")
    return 1.5 * inv.s / inv.q - n_coeff / 3.0


# ---------------------------------------------------------------------------
# internal evaluators (no strict domain checks; used inside the integrator
# where iterates may transiently leave the public operations' domains)
# ---------------------------------------------------------------------------


def _cs_friction(p: float, gp: float, e: float, params: WGParams):
    """(e_cs, sin_phi) without the strict public-domain validation."""
    e_cs = params.e_cs0 * math.exp(-((p / params.h) ** params.n))
    sin_phi = ((e / e_cs) ** (-params.beta)
               * gp / (params.a + gp) * params.sin_phi_cs)
    if sin_phi >= 3.0:
        raise StressStateError("mobilized friction left the model domain")
    return e_cs, sin_phi


def _friction_m(sin_phi: float, t: float, params: WGParams) -> float:
    m_tc = 6.0 * sin_phi / (3.0 - sin_phi)
    return 2.0 * params.mu * m_tc / ((1.0 + params.mu) - (1.0 - params.mu) * t)


def _dilatancy_n(sin_phi: float, e: float, e_cs: float,
                 params: WGParams) -> float:
    c = (e / e_cs) ** params.alpha_wg * params.sin_phi_cs
    den = 1.0 - c * sin_phi
    if abs(den) < 1e-12:
        raise StressStateError("dilatancy denominator vanished")
    return (sin_phi - c) / den


def _elastic_update(sigma: np.ndarray, e_end: float, d_eps_e: np.ndarray,
                    params: WGParams) -> np.ndarray:
    """Stress after an elastic strain increment with end-of-step moduli.

    Because G ~ sqrt(p), the implicit volumetric update
    p1 = p + R G(p1) tr(d_eps_e) is a quadratic in sqrt(p1) with a unique
    positive root, so the whole update is closed form.  The returned p1 is
    positive for any increment.
    """
    inv = stress_invariants(sigma)
    if inv.p <= 0.0:
        raise StressStateError(f"mean stress must be positive, got {inv.p}")
    if not 0.0 < e_end < 2.17:
        raise StressStateError(f"void ratio out of modulus range, got {e_end}")
    ghat = params.G0 * (2.17 - e_end) / (1.0 + e_end) * math.sqrt(params.p0)
    R = 2.0 * (1.0 + params.nu) / (3.0 * (1.0 - 2.0 * params.nu))
    ve = vol(d_eps_e)
    c = R * ghat * ve
    y = 0.5 * (c + math.sqrt(c * c + 4.0 * inv.p))  # sqrt(p1) > 0
    p1 = y * y
    g1 = ghat * y
    dev = d_eps_e - ve / 3.0
    return inv.s + 2.0 * g1 * dev + p1


class _PlasticEval:
    """Quantities and partial derivatives used by the return mapping at an
    iterate (sigma, d_lambda).

    Derivatives are with respect to the three principal stresses and the
    plastic multiplier; the hardening variable is gamma_p0 + d_lambda and
    the end-of-step void ratio e1 is constant.  Only denominators and the
    positivity of p and q are guarded here.
    """

    __slots__ = ("p", "s", "q", "t", "dt", "e_cs", "sin_phi", "dsp_dlam",
                 "dsp_dp", "M", "dM_dsp", "dM_dsig", "dM_dlam", "N",
                 "dN_dp", "dN_dlam", "F", "dF_dsig", "dF_dlam", "m",
                 "dm_dsig", "dm_dlam", "G", "R", "K", "dG_dp")

    def __init__(self, sigma: np.ndarray, lam: float, gamma_p0: float,
                 e1: float, params: WGParams):
        p = vol(sigma) / 3.0
        if p <= 0.0:
            raise StressStateError("iterate left the admissible stress domain")
        s = sigma - p
        qq = 1.5 * float(s @ s)
        q = math.sqrt(qq)
        if q < DEGENERATE_Q_REL * max(abs(p), 1.0):
            raise StressStateError("iterate reached the isotropic axis")
        self.p, self.s, self.q = p, s, q

        # Lode parameter and its stress gradient
        J2 = qq / 3.0
        J3 = float(s[0] * s[1] * s[2])
        c0 = 0.5 * 3.0**1.5
        t = min(1.0, max(-1.0, c0 * J3 / J2**1.5))
        # dJ3/dsig_k = A_k + J2/3 with A_k the product of the other two
        A = np.array([s[1] * s[2], s[0] * s[2], s[0] * s[1]])
        dJ3 = A + J2 / 3.0
        dt = c0 * (dJ3 / J2**1.5 - 1.5 * J3 / J2**2.5 * s)
        self.t, self.dt = t, dt

        # critical state line and mobilized friction
        e_cs = params.e_cs0 * math.exp(-((p / params.h) ** params.n))
        decs_dp = -e_cs * params.n * (p / params.h) ** params.n / p
        gp1 = gamma_p0 + lam
        if gp1 < 0.0:
            raise StressStateError("negative accumulated plastic shear")
        ratio = e1 / e_cs
        xib = ratio ** (-params.beta)
        sin_phi = xib * gp1 / (params.a + gp1) * params.sin_phi_cs
        if sin_phi >= 3.0:
            raise StressStateError("mobilized friction left the model domain")
        dsp_dlam = xib * params.sin_phi_cs * params.a / (params.a + gp1) ** 2
        dsp_dp = (params.beta * sin_phi / e_cs) * decs_dp
        self.e_cs, self.sin_phi = e_cs, sin_phi
        self.dsp_dlam, self.dsp_dp = dsp_dlam, dsp_dp

        # friction coefficient M(t, sin_phi)
        m_tc = 6.0 * sin_phi / (3.0 - sin_phi)
        dmtc = 18.0 / (3.0 - sin_phi) ** 2
        Dt = (1.0 + params.mu) - (1.0 - params.mu) * t
        M = 2.0 * params.mu * m_tc / Dt
        dM_dsp = 2.0 * params.mu * dmtc / Dt
        dM_dt = 2.0 * params.mu * m_tc * (1.0 - params.mu) / Dt**2
        self.M = M
        self.dM_dsp = dM_dsp
        self.dM_dsig = dM_dsp * dsp_dp / 3.0 + dM_dt * dt
        self.dM_dlam = dM_dsp * dsp_dlam

        # dilatancy coefficient N(sin_phi, e1/e_cs)
        xi = ratio**params.alpha_wg
        dxi_dp = (-params.alpha_wg * xi / e_cs) * decs_dp
        c = xi * params.sin_phi_cs
        Nden = 1.0 - c * sin_phi
        if abs(Nden) < 1e-12:
            raise StressStateError("dilatancy denominator vanished")
        N = (sin_phi - c) / Nden
        dN_dsp = (1.0 - c * c) / Nden**2
        dN_dc = (sin_phi * sin_phi - 1.0) / Nden**2
        self.N = N
        self.dN_dp = dN_dsp * dsp_dp + dN_dc * params.sin_phi_cs * dxi_dp
        self.dN_dlam = dN_dsp * dsp_dlam

        # yield value and flow direction
        self.F = q - M * p
        self.dF_dsig = 1.5 * s / q - p * self.dM_dsig - M / 3.0
        self.dF_dlam = -p * self.dM_dlam
        self.m = 1.5 * s / q - N / 3.0
        eye = np.eye(3)
        self.dm_dsig = (1.5 * ((eye - 1.0 / 3.0) / q
                               - 1.5 * np.outer(s, s) / q**3)
                        - (self.dN_dp / 9.0) * np.ones((3, 3)))
        self.dm_dlam = np.full(3, -self.dN_dlam / 3.0)

        # end-of-step moduli
        if not 0.0 < e1 < 2.17:
            raise StressStateError(f"void ratio out of modulus range, got {e1}")
        G = params.G0 * (2.17 - e1) / (1.0 + e1) * math.sqrt(p * params.p0)
        R = 2.0 * (1.0 + params.nu) / (3.0 * (1.0 - 2.0 * params.nu))
        self.G, self.R, self.K = G, R, R * G
        self.dG_dp = 0.5 * G / p

    def apply_C(self, v: np.ndarray) -> np.ndarray:
        """Elastic tangent in principal space: C v = G(R - 2/3) tr(v) + 2G v."""
        return self.G * (self.R - 2.0 / 3.0) * vol(v) + 2.0 * self.G * v


def _plastic_residual(ev: _PlasticEval, sigma: np.ndarray, lam: float,
                      sigma_n: np.ndarray, d_eps: np.ndarray) -> np.ndarray:
    he = d_eps - lam * ev.m
    r = np.empty(4)
    r[:3] = sigma - sigma_n - ev.apply_C(he)
    r[3] = ev.F
    return r


def _plastic_jacobian(ev: _PlasticEval, lam: float,
                      d_eps: np.ndarray) -> np.ndarray:
    he = d_eps - lam * ev.m
    ve = vol(he)
    b = ev.R - 2.0 / 3.0
    J = np.empty((4, 4))
    # stress rows: d r_i / d sigma_k
    dC_term = (ev.dG_dp / 3.0) * (b * ve + 2.0 * he)  # modulus sensitivity
    dve_dsig = lam * ev.dN_dp / 3.0  # sum_i dm_i/dsig_k = -dN_dp / 3
    for i in range(3):
        for k in range(3):
            J[i, k] = ((1.0 if i == k else 0.0)
                       - dC_term[i]
                       - ev.G * b * dve_dsig
                       + 2.0 * ev.G * lam * ev.dm_dsig[i, k])
    # stress rows: d r_i / d lam
    dve_dlam = ev.N - lam * vol(ev.dm_dlam)
    dhe_dlam = -(ev.m + lam * ev.dm_dlam)
    J[:3, 3] = -(ev.G * b * dve_dlam + 2.0 * ev.G * dhe_dlam)
    # yield row
    J[3, :3] = ev.dF_dsig
    J[3, 3] = ev.dF_dlam
    return J


# ---------------------------------------------------------------------------
# implicit integrator
# ---------------------------------------------------------------------------


def _validate_state(state: MaterialState, params: WGParams) -> None:
    p = vol(state.sigma) / 3.0
    if p <= 0.0:
        raise StressStateError(f"mean stress must be positive, got {p}")
    if not 0.0 < state.e < 2.17:
        raise StressStateError(f"void ratio out of range, got {state.e}")


def _end_diagnostics(sigma: np.ndarray, gp: float, e: float,
                     params: WGParams):
    inv = stress_invariants(sigma)
    e_cs, sin_phi = _cs_friction(inv.p, gp, e, params)
    f_end = inv.q - _friction_m(sin_phi, inv.t, params) * inv.p
    n_end = _dilatancy_n(sin_phi, e, e_cs, params)
    return f_end, n_end


def _elastic_result(state: MaterialState, sig_trial: np.ndarray, d_e: float,
                    e1: float, gp0: float, params: WGParams) -> StepResult:
    f_end, n_end = _end_diagnostics(sig_trial, gp0, e1, params)
    return StepResult(d_sigma=sig_trial - state.sigma, d_eps_p=np.zeros(3),
                      d_e=d_e, d_lambda=0.0, iterations=0, plastic=False,
                      f_end=f_end, n_end=n_end)


def _newton_solve(sigma0: np.ndarray, lam0: float, sigma_n: np.ndarray,
                  d_eps: np.ndarray, gp0: float, e1: float,
                  params: WGParams, tol: IntegratorTolerances,
                  fd_jacobian: bool):
    """One Newton campaign; returns (sigma, lam, ev, iters) or raises."""
    sigma = sigma0.copy()
    lam = lam0
    ev = _PlasticEval(sigma, lam, gp0, e1, params)
    last_rf = math.inf
    last_rs = math.inf
    for it in range(tol.max_iter):
        r = _plastic_residual(ev, sigma, lam, sigma_n, d_eps)
        rs = math.sqrt(float(r[:3] @ r[:3]))
        last_rf, last_rs = abs(ev.F), rs
        sig_scale = max(math.sqrt(float(sigma @ sigma)), params.p0)
        if (abs(ev.F) <= tol.f_rel * max(ev.p, params.p0)
                and rs <= tol.sig_rel * sig_scale):
            return sigma, lam, ev, it
        if fd_jacobian:
            J = _fd_jacobian(sigma, lam, sigma_n, d_eps, gp0, e1, params)
        else:
            J = _plastic_jacobian(ev, lam, d_eps)
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise IntegrationError("singular return-mapping Jacobian",
                                   last_rf, last_rs, it) from exc
        # damped update: keep the iterate inside the evaluable domain
        alpha = 1.0
        for _ in range(8):
            cand_sig = sigma + alpha * dx[:3]
            cand_lam = lam + alpha * dx[3]
            if gp0 + cand_lam >= 0.0:
                try:
                    ev = _PlasticEval(cand_sig, cand_lam, gp0, e1, params)
                except StressStateError:
                    alpha *= 0.5
                    continue
                sigma, lam = cand_sig, cand_lam
                break
            alpha *= 0.5
        else:
            raise IntegrationError("return mapping stalled at domain boundary",
                                   last_rf, last_rs, it)
    raise IntegrationError("return mapping did not converge",
                           last_rf, last_rs, tol.max_iter)


def _fd_jacobian(sigma: np.ndarray, lam: float, sigma_n: np.ndarray,
                 d_eps: np.ndarray, gp0: float, e1: float,
                 params: WGParams) -> np.ndarray:
    """Central-difference Jacobian of the return-mapping residual."""

    def res(sig, la):
        ev = _PlasticEval(sig, la, gp0, e1, params)
        return _plastic_residual(ev, sig, la, sigma_n, d_eps)

    J = np.empty((4, 4))
    for k in range(3):
        hk = 1e-7 * max(abs(sigma[k]), params.p0)
        dp = sigma.copy(); dp[k] += hk
        dm = sigma.copy(); dm[k] -= hk
        J[:, k] = (res(dp, lam) - res(dm, lam)) / (2.0 * hk)
    hl = 1e-10 + 1e-7 * abs(lam)
    lam_m = max(lam - hl, -gp0)
    J[:, 3] = (res(sigma, lam + hl) - res(sigma, lam_m)) / (lam + hl - lam_m)
    return J


def _bisection_solve(sig_trial: np.ndarray, lam_est: float,
                     sigma_n: np.ndarray, d_eps: np.ndarray, gp0: float,
                     e1: float, params: WGParams, tol: IntegratorTolerances):
    """Scalar bisection on d_lambda with an inner fixed point on sigma.

    For a given multiplier the stress follows from repeated closed-form
    elastic updates with the effective strain d_eps - lam * m(sigma); the
    yield value is then a scalar function of lam bracketed between 0
    (where F = F_trial > 0) and a doubled-out upper bound.
    """

    def solve_sigma(lam, sig_start):
        sig = sig_start.copy()
        ev = _PlasticEval(sig, lam, gp0, e1, params)
        for k in range(60):
            new = _elastic_update(sigma_n, e1, d_eps - lam * ev.m, params)
            move = math.sqrt(float((new - sig) @ (new - sig)))
            relax = 1.0 if k < 20 else 0.5
            sig = sig + relax * (new - sig)
            ev = _PlasticEval(sig, lam, gp0, e1, params)
            if move <= tol.sig_rel * max(math.sqrt(float(sig @ sig)), params.p0):
                break
        return sig, ev

    lo = 0.0
    hi = max(lam_est, 1e-12)
    sig_hi = sig_trial
    f_hi = None
    for _ in range(80):
        sig_hi, ev_hi = solve_sigma(hi, sig_hi)
        f_hi = ev_hi.F
        if f_hi < 0.0:
            break
        lo = hi
        hi *= 2.0
    else:
        raise IntegrationError("bisection failed to bracket the yield surface",
                               f_hi if f_hi is not None else math.nan,
                               math.nan, 80)
    sig, ev = sig_hi, ev_hi
    for it in range(200):
        mid = 0.5 * (lo + hi)
        sig, ev = solve_sigma(mid, sig)
        if abs(ev.F) <= tol.f_rel * max(ev.p, params.p0):
            return sig, mid, ev, it
        if ev.F > 0.0:
            lo = mid
        else:
            hi = mid
    raise IntegrationError("bisection did not converge", abs(ev.F),
                           math.nan, 200)


def integrate_step(state: MaterialState, d_eps, params: WGParams,
                   tol: IntegratorTolerances = DEFAULT_TOL) -> StepResult:
    """Advance one strain-driven step with the implicit return mapping.

    The void ratio update is explicit and exact: d_e = -(1 + e) * tr(d_eps).
    The elastic trial uses end-of-step moduli; if its yield value is at most
    tol.f_abs, or the trial deviator is degenerate (purely volumetric steps
    from isotropic states are neutral loading at the cone apex), the step is
    elastic.  Otherwise Newton iterates on {sigma_n1, d_lambda} with the
    analytic Jacobian, retries with a finite-difference Jacobian, and
    finally falls back to bisection on d_lambda.

    Raises IntegrationError when no stage converges and StressStateError
    when a state leaves the admissible domain.
    """
    _validate_state(state, params)
    d_eps = as_vec3(d_eps)
    e0 = state.e
    d_e = -(1.0 + e0) * vol(d_eps)
    e1 = e0 + d_e
    gp0 = state.gamma_p()

    sig_trial = _elastic_update(state.sigma, e1, d_eps, params)
    tri = stress_invariants(sig_trial)
    _, sin_phi_tri = _cs_friction(tri.p, gp0, e1, params)
    f_trial = tri.q - _friction_m(sin_phi_tri, tri.t, params) * tri.p

    if tri.degenerate or f_trial <= tol.f_abs:
        return _elastic_result(state, sig_trial, d_e, e1, gp0, params)

    # initial multiplier from the rate-form consistency condition
    ev0 = _PlasticEval(sig_trial, 0.0, gp0, e1, params)
    nCm = float(ev0.dF_dsig @ ev0.apply_C(ev0.m))
    denom = nCm - ev0.dF_dlam
    lam0 = f_trial / denom if denom > 0.0 else f_trial / (3.0 * ev0.G)
    lam0 = max(lam0, 0.0)

    solution = None
    iterations = 0
    for fd in (False, True):
        try:
            sigma, lam, ev, its = _newton_solve(sig_trial, lam0, state.sigma,
                                                d_eps, gp0, e1, params, tol, fd)
            solution = (sigma, lam, ev)
            iterations += its
            break
        except (IntegrationError, StressStateError):
            iterations += tol.max_iter
            continue
    if solution is None:
        sigma, lam, ev, its = _bisection_solve(sig_trial, lam0, state.sigma,
                                               d_eps, gp0, e1, params, tol)
        solution = (sigma, lam, ev)
        iterations += its

    sigma, lam, ev = solution
    if lam <= 0.0:
        # consistency solved to a non-positive multiplier: neutral loading
        return _elastic_result(state, sig_trial, d_e, e1, gp0, params)
    if ev.p <= 0.0:
        raise StressStateError("return mapping ended at non-positive p")
    d_eps_p = lam * ev.m
    return StepResult(d_sigma=sigma - state.sigma, d_eps_p=d_eps_p, d_e=d_e,
                      d_lambda=lam, iterations=iterations, plastic=True,
                      f_end=ev.F, n_end=ev.N)


# ---------------------------------------------------------------------------
# explicit sub-stepping oracle
# ---------------------------------------------------------------------------


def integrate_path_explicit_oracle(state: MaterialState, d_eps,
                                   n_sub: int,
                                   params: WGParams) -> StepResult:
    """Explicit sub-stepped integration of the same rate equations.

    The strain increment is split into n_sub equal substeps.  Each substep
    evaluates the yield state at its start, computes the plastic multiplier
    rate from the consistency condition (forward Euler in the plastic
    variables and hardening), and applies the closed-form elastic update to
    the effective strain.  With n_sub = 1 an elastic step reproduces the
    implicit elastic branch exactly; plastic response converges to the
    shared continuum limit at first order in 1/n_sub.

    Independent of the return mapping: no Newton solve is involved.
    """
    if n_sub < 1:
        raise ValueError(f"n_sub must be at least 1, got {n_sub}")
    _validate_state(state, params)
    d_eps = as_vec3(d_eps)
    sub = d_eps / n_sub

    sigma = state.sigma.copy()
    e = state.e
    gp = state.gamma_p()
    d_eps_p = np.zeros(3)
    d_e = 0.0
    lam_total = 0.0
    any_plastic = False

    for _ in range(n_sub):
        de_sub = -(1.0 + e) * vol(sub)
        e_new = e + de_sub
        inv = stress_invariants(sigma)
        if inv.p <= 0.0:
            raise StressStateError("oracle state left the admissible domain")
        d_eps_p_sub = np.zeros(3)
        if not inv.degenerate:
            ev = _PlasticEval(sigma, 0.0, gp, e, params)
            if ev.F >= -DEFAULT_TOL.f_rel * max(inv.p, params.p0):
                # consistency: F_dot = n:C:(eps_dot - lam_dot m)
                #              + dF/dgp lam_dot + dF/de e_dot = 0
                dF_de = inv.p * ev.dM_dsp * params.beta * ev.sin_phi / e
                numer = float(ev.dF_dsig @ ev.apply_C(sub)) + dF_de * de_sub
                denom = float(ev.dF_dsig @ ev.apply_C(ev.m)) - ev.dF_dlam
                if denom > 0.0 and numer > 0.0:
                    dlam = numer / denom
                    d_eps_p_sub = dlam * ev.m
                    lam_total += dlam
                    gp += dlam
                    any_plastic = True
        sigma = _elastic_update(sigma, e_new, sub - d_eps_p_sub, params)
        d_eps_p = d_eps_p + d_eps_p_sub
        d_e += de_sub
        e = e_new

    f_end, n_end = _end_diagnostics(sigma, gp, e, params)
    return StepResult(d_sigma=sigma - state.sigma, d_eps_p=d_eps_p, d_e=d_e,
                      d_lambda=lam_total, iterations=n_sub,
                      plastic=any_plastic, f_end=f_end, n_end=n_end)


# ---------------------------------------------------------------------------
# mixed-control test harness
# ---------------------------------------------------------------------------


def drained_triaxial_compression(params: WGParams, p_in: float, e_in: float,
                                 gamma_target: float,
                                 d_eps_axial: float = 5e-4,
                                 tol: IntegratorTolerances = DEFAULT_TOL,
                                 max_steps: int = 20000):
    """Constant-cell-pressure triaxial compression of a material point.

    Axial strain is imposed in increments of d_eps_axial while the two
    lateral strain increments (equal by symmetry) are solved per step so
    the lateral stress stays at the cell pressure p_in.  Runs until the
    shear strain invariant reaches gamma_target.

    Returns (states, results, increments): the state sequence including the
    initial isotropic state, the accepted StepResult per increment, and the
    applied strain increment vectors.
    """
    state = MaterialState.isotropic(p_in, e_in)
    states = [state.copy()]
    results: list[StepResult] = []
    d_eps_list: list[np.ndarray] = []
    lat_tol = 1e-9 * max(p_in, 1.0)
    x = -0.3 * d_eps_axial  # lateral guess, refined per step

    for _ in range(max_steps):
        if strain_invariants(state.eps).gamma >= gamma_target:
            break

        def lateral_mismatch(xl):
            res = integrate_step(state, np.array([xl, xl, d_eps_axial]),
                                 params, tol)
            return float(res.d_sigma[0] + state.sigma[0] - p_in), res

        # secant iteration on the lateral increment with a bracket guard
        x0, x1 = x, x + 0.1 * d_eps_axial
        g0, res0 = lateral_mismatch(x0)
        if abs(g0) <= lat_tol:
            x1, g1, res1 = x0, g0, res0
        else:
            g1, res1 = lateral_mismatch(x1)
        bracket = (x0, g0, x1, g1) if g0 * g1 < 0.0 else None
        accepted = None
        for _ in range(80):
            if abs(g1) <= lat_tol:
                accepted = (x1, res1)
                break
            if g1 != g0:
                x2 = x1 - g1 * (x1 - x0) / (g1 - g0)
            elif bracket is not None:
                x2 = 0.5 * (bracket[0] + bracket[2])
            else:
                x2 = x1 + 0.1 * d_eps_axial
            if bracket is not None:
                blo, bhi = sorted((bracket[0], bracket[2]))
                if not blo <= x2 <= bhi:
                    x2 = 0.5 * (blo + bhi)
            g2, res2 = lateral_mismatch(x2)
            if bracket is None:
                if g2 * g1 < 0.0:
                    bracket = (x1, g1, x2, g2)
            else:
                b0, gb0, b1, gb1 = bracket
                if gb0 * g2 < 0.0:
                    bracket = (b0, gb0, x2, g2)
                else:
                    bracket = (x2, g2, b1, gb1)
            x0, g0 = x1, g1
            x1, g1, res1 = x2, g2, res2
        if accepted is None:
            raise IntegrationError("lateral stress control did not converge",
                                   abs(g1), math.nan, 80)
        x, res = accepted
        d_eps = np.array([x, x, d_eps_axial])
        state = state.advanced(d_eps, res)
        states.append(state.copy())
        results.append(res)
        d_eps_list.append(d_eps)
    else:
        raise IntegrationError("drained path exceeded max_steps", math.nan,
                               math.nan, max_steps)
    return states, results, d_eps_list
