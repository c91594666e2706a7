"""Surrogate model architectures for the sand constitutive update.

Three ways to wire sub-networks over the same 13-feature state snapshot:

* parallel: independent void-ratio, plastic-strain, and stress subnets.
* serial: the stress subnet additionally sees the predicted void-ratio
  and plastic-strain increments (17 inputs).
* epnn: no stress subnet at all; an elasticity subnet predicts a secant
  bulk modulus, a trainable scalar ratio r supplies the shear modulus,
  and the stress increment is reconstructed from the elastic strain
  increment in physical units.

All model inputs and label comparisons live in normalized space; the EPNN
reconstruction hops to physical units and back using the attached scalers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .datagen import F_DEPS, L_DE, L_DEPSP, L_DSIG, N_FEATURES, N_LABELS
from .nn import (
    GradCheckResult,
    MLPGrads,
    MLPParams,
    MLPSpec,
    Scaler,
    backward,
    forward,
    loss,
    loss_grad,
    init_mlp,
)

__all__ = [
    "MODEL_KINDS",
    "ROLE_ORDER",
    "ELASTICITY_FEATURES",
    "Subnet",
    "Model",
    "ModelOutput",
    "CostReport",
    "ModelGrads",
    "default_specs",
    "assemble",
    "attach_scalers",
    "model_forward",
    "model_cost",
    "model_grads",
    "model_gradient_check",
]

MODEL_KINDS = ("parallel", "serial", "epnn")

#: canonical subnet ordering: fixes seeding and serialization order
ROLE_ORDER = ("void_ratio", "plastic_strain", "stress", "elasticity")

ROLE_OUTPUT_DIM = {"void_ratio": 1, "plastic_strain": 3, "stress": 3, "elasticity": 1}

#: elasticity subnet input: the full feature set minus the plastic strain
ELASTICITY_FEATURES = tuple(range(0, 7)) + tuple(range(10, 13))

#: appended to the serial stress input, in this order
_SERIAL_EXTRA = 4  # predicted d_e (1) then predicted d_eps_p (3)


@dataclass
class Subnet:
    spec: MLPSpec
    params: MLPParams

    def copy(self) -> "Subnet":
        return Subnet(spec=self.spec, params=self.params.copy())


@dataclass
class Model:
    """A composed surrogate: subnets plus scalers plus the EPNN extras."""

    kind: str
    subnets: dict[str, Subnet]
    feature_scaler: Scaler | None = None
    label_scaler: Scaler | None = None
    epnn_ratio: float = 0.5
    k_scale: float = 1.0

    def roles(self) -> list[str]:
        return [r for r in ROLE_ORDER if r in self.subnets]

    def copy(self) -> "Model":
        return Model(
            kind=self.kind,
            subnets={r: s.copy() for r, s in self.subnets.items()},
            feature_scaler=self.feature_scaler,
            label_scaler=self.label_scaler,
            epnn_ratio=self.epnn_ratio,
            k_scale=self.k_scale,
        )

    def n_parameters(self) -> int:
        n = sum(s.params.n_parameters() for s in self.subnets.values())
        if self.kind == "epnn":
            n += 1  # the ratio r
        return n


class ModelOutput(NamedTuple):
    """Predicted label groups in normalized space, one row per sample."""

    d_sigma: np.ndarray
    d_eps_p: np.ndarray
    d_e: np.ndarray
    n_negative_k: int

    def matrix(self) -> np.ndarray:
        return np.hstack([self.d_sigma, self.d_eps_p, self.d_e])


class CostReport(NamedTuple):
    cf_i: float
    cf_sigma: float
    cf: float


@dataclass
class ModelGrads:
    by_role: dict[str, MLPGrads]
    r_grad: float
    cost: CostReport


def _roles_for(kind: str) -> tuple[str, ...]:
    if kind == "epnn":
        return ("void_ratio", "plastic_strain", "elasticity")
    return ("void_ratio", "plastic_strain", "stress")


def _stress_input_dim(kind: str) -> int:
    return N_FEATURES + _SERIAL_EXTRA if kind == "serial" else N_FEATURES


def default_specs(kind: str) -> dict[str, MLPSpec]:
    """Published hyperparameters: 3x60 everywhere except plastic strain 4x75."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    specs = {
        "void_ratio": MLPSpec(N_FEATURES, 1, 3, 60),
        "plastic_strain": MLPSpec(N_FEATURES, 3, 4, 75),
    }
    if kind == "epnn":
        specs["elasticity"] = MLPSpec(len(ELASTICITY_FEATURES), 1, 3, 60)
    else:
        specs["stress"] = MLPSpec(_stress_input_dim(kind), 3, 3, 60)
    return specs


def assemble(
    kind: str, seed: int, hyper: dict[str, MLPSpec] | None = None
) -> Model:
    """Build a model with freshly initialized subnets.

    hyper overrides the default per-role specs but the role set, input
    dims, and output dims must stay consistent with the architecture.
    Each subnet gets its own seeded stream so the assembled parameters do
    not depend on dict ordering.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    specs = default_specs(kind)
    if hyper:
        for role, spec in hyper.items():
            if role not in specs:
                raise ValueError(f"role {role!r} not part of a {kind} model")
            specs[role] = spec
    for role, spec in specs.items():
        if spec.output_dim != ROLE_OUTPUT_DIM[role]:
            raise ValueError(
                f"{role} subnet must output {ROLE_OUTPUT_DIM[role]} values"
            )
        want_in = (
            len(ELASTICITY_FEATURES)
            if role == "elasticity"
            else _stress_input_dim(kind)
            if role == "stress"
            else N_FEATURES
        )
        if spec.input_dim != want_in:
            raise ValueError(f"{role} subnet must take {want_in} inputs")
    subnets = {}
    for role in ROLE_ORDER:
        if role not in specs:
            continue
        rng = np.random.default_rng([seed, ROLE_ORDER.index(role)])
        subnets[role] = Subnet(spec=specs[role], params=init_mlp(specs[role], rng))
    return Model(kind=kind, subnets=subnets)


def attach_scalers(m: Model, feature_scaler: Scaler, label_scaler: Scaler) -> None:
    """Bind fitted scalers to the model and derive the EPNN modulus scale.

    k_scale maps the elasticity subnet's order-one raw output to physical
    moduli: the ratio of the mean stress-increment label half-range to the
    mean strain-increment feature half-range, in kPa.
    """
    if feature_scaler.mins.size != N_FEATURES:
        raise ValueError(f"feature scaler must cover {N_FEATURES} columns")
    if label_scaler.mins.size != N_LABELS:
        raise ValueError(f"label scaler must cover {N_LABELS} columns")
    m.feature_scaler = feature_scaler
    m.label_scaler = label_scaler
    if m.kind == "epnn":
        num = float(np.mean(label_scaler.half_range()[L_DSIG]))
        den = float(np.mean(feature_scaler.half_range()[F_DEPS]))
        m.k_scale = num / den if num > 0.0 and den > 0.0 else 1.0


class _EpnnTrace(NamedTuple):
    """Intermediates of the EPNN stress head, kept for backward."""

    k_sec: np.ndarray         # (N,) physical bulk modulus
    d_eps_e: np.ndarray       # (N,3) physical elastic strain increment
    ev: np.ndarray            # (N,) volumetric elastic strain increment
    sig_half: np.ndarray      # (3,) label half-ranges for d_sigma
    depsp_half: np.ndarray    # (3,) label half-ranges for d_eps_p


def _forward_full(m: Model, X: np.ndarray):
    """All subnet evaluations plus caches; shared by cost and grads."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ValueError(f"features must be (N, {N_FEATURES}), got {X.shape}")
    caches = {}
    vr = m.subnets["void_ratio"]
    de_n, caches["void_ratio"] = forward(vr.params, vr.spec, X)
    ps = m.subnets["plastic_strain"]
    depsp_n, caches["plastic_strain"] = forward(ps.params, ps.spec, X)

    trace = None
    n_neg = 0
    if m.kind == "parallel":
        st = m.subnets["stress"]
        dsig_n, caches["stress"] = forward(st.params, st.spec, X)
    elif m.kind == "serial":
        st = m.subnets["stress"]
        Xs = np.hstack([X, de_n, depsp_n])
        dsig_n, caches["stress"] = forward(st.params, st.spec, Xs)
    else:
        if m.feature_scaler is None or m.label_scaler is None:
            raise ValueError("epnn forward needs scalers attached")
        el = m.subnets["elasticity"]
        raw, caches["elasticity"] = forward(el.params, el.spec, X[:, ELASTICITY_FEATURES])
        k_sec = raw[:, 0] * m.k_scale
        n_neg = int(np.count_nonzero(k_sec < 0.0))
        f_half = m.feature_scaler.half_range()[F_DEPS]
        f_min = m.feature_scaler.mins[F_DEPS]
        d_eps = f_min + (X[:, F_DEPS] + 1.0) * f_half
        l_half = m.label_scaler.half_range()
        l_min = m.label_scaler.mins
        depsp_half = l_half[L_DEPSP]
        d_epsp = l_min[L_DEPSP] + (depsp_n + 1.0) * depsp_half
        d_eps_e = d_eps - d_epsp
        ev = d_eps_e.sum(axis=1)
        g_sec = m.epnn_ratio * k_sec
        dsig_phys = (
            k_sec[:, None] * ev[:, None]
            + 2.0 * g_sec[:, None] * (d_eps_e - ev[:, None] / 3.0)
        )
        sig_half = l_half[L_DSIG]
        safe = np.where(sig_half > 0.0, sig_half, 1.0)
        dsig_n = np.where(
            sig_half > 0.0, (dsig_phys - l_min[L_DSIG]) / safe - 1.0, 0.0
        )
        trace = _EpnnTrace(k_sec, d_eps_e, ev, sig_half, depsp_half)

    out = ModelOutput(d_sigma=dsig_n, d_eps_p=depsp_n, d_e=de_n, n_negative_k=n_neg)
    return out, caches, trace


def model_forward(m: Model, features: np.ndarray) -> ModelOutput:
    """Predict normalized label groups for a normalized feature batch.

    A single 13-vector is accepted and treated as a batch of one.
    """
    X = np.asarray(features, dtype=float)
    squeeze = X.ndim == 1
    if squeeze:
        X = X.reshape(1, -1)
    out, _, _ = _forward_full(m, X)
    if squeeze:
        return ModelOutput(
            d_sigma=out.d_sigma[0], d_eps_p=out.d_eps_p[0],
            d_e=out.d_e[0], n_negative_k=out.n_negative_k,
        )
    return out


def _split_labels(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != N_LABELS:
        raise ValueError(f"labels must be (N, {N_LABELS}), got {Y.shape}")
    return Y[:, L_DSIG], Y[:, L_DEPSP], Y[:, [L_DE]]


def _cost_from_output(out: ModelOutput, Y: np.ndarray, kind: str) -> CostReport:
    y_sig, y_epsp, y_e = _split_labels(Y)
    cf_i = loss(kind, out.d_e, y_e) + loss(kind, out.d_eps_p, y_epsp)
    cf_sigma = loss(kind, out.d_sigma, y_sig)
    return CostReport(cf_i=cf_i, cf_sigma=cf_sigma, cf=cf_i + cf_sigma)


def model_cost(
    m: Model, features: np.ndarray, labels: np.ndarray, loss_kind: str = "mae"
) -> CostReport:
    """Total cost: internal-variable part plus stress part."""
    out, _, _ = _forward_full(m, np.atleast_2d(np.asarray(features, dtype=float)))
    return _cost_from_output(out, labels, loss_kind)


def model_grads(
    m: Model, features: np.ndarray, labels: np.ndarray, loss_kind: str = "mae"
) -> ModelGrads:
    """Analytic gradients of the total cost for every subnet and for r.

    The returned cost report is the same forward pass's evaluation, so a
    training loop gets its loss value for free.
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    out, caches, trace = _forward_full(m, X)
    y_sig, y_epsp, y_e = _split_labels(labels)
    cost = _cost_from_output(out, labels, loss_kind)

    up_sig = loss_grad(loss_kind, out.d_sigma, y_sig)
    up_epsp = loss_grad(loss_kind, out.d_eps_p, y_epsp)
    up_e = loss_grad(loss_kind, out.d_e, y_e)

    by_role: dict[str, MLPGrads] = {}
    r_grad = 0.0

    if m.kind == "parallel":
        st = m.subnets["stress"]
        by_role["stress"] = backward(st.params, st.spec, caches["stress"], up_sig)
    elif m.kind == "serial":
        st = m.subnets["stress"]
        g_st = backward(st.params, st.spec, caches["stress"], up_sig)
        by_role["stress"] = g_st
        # the appended inputs route stress-cost gradient into the
        # internal-variable subnets
        up_e = up_e + g_st.d_input[:, N_FEATURES : N_FEATURES + 1]
        up_epsp = up_epsp + g_st.d_input[:, N_FEATURES + 1 :]
    else:
        assert trace is not None
        safe = np.where(trace.sig_half > 0.0, trace.sig_half, 1.0)
        dphys = np.where(trace.sig_half > 0.0, up_sig / safe, 0.0)
        r = m.epnn_ratio
        k = trace.k_sec
        dev_part = trace.d_eps_e - trace.ev[:, None] / 3.0
        s_row = dphys.sum(axis=1)
        # dK per sample, then to the raw subnet output
        dk = (dphys * (trace.ev[:, None] + 2.0 * r * dev_part)).sum(axis=1)
        r_grad = float((dphys * (2.0 * k[:, None] * dev_part)).sum())
        up_raw = (dk * m.k_scale).reshape(-1, 1)
        el = m.subnets["elasticity"]
        by_role["elasticity"] = backward(
            el.params, el.spec, caches["elasticity"], up_raw
        )
        # through the elastic strain increment into the plastic subnet
        g = r * k
        d_de = (k - 2.0 * g / 3.0)[:, None] * s_row[:, None] + 2.0 * g[:, None] * dphys
        up_epsp = up_epsp - d_de * trace.depsp_half

    vr = m.subnets["void_ratio"]
    by_role["void_ratio"] = backward(vr.params, vr.spec, caches["void_ratio"], up_e)
    ps = m.subnets["plastic_strain"]
    by_role["plastic_strain"] = backward(
        ps.params, ps.spec, caches["plastic_strain"], up_epsp
    )
    return ModelGrads(by_role=by_role, r_grad=r_grad, cost=cost)


# ---------------------------------------------------------------------------
# finite-difference verification at the model level


def _signature(m: Model, out: ModelOutput, caches: dict, Y: np.ndarray, kind: str):
    """Branch state of every kink the total cost can cross."""
    sig = []
    for role in m.roles():
        spec = m.subnets[role].spec
        if spec.activation in ("leaky_relu", "relu"):
            for z in caches[role].pre_activations:
                sig.append(z > 0.0)
                sig.append(z == 0.0)
    if kind == "mae":
        y_sig, y_epsp, y_e = _split_labels(Y)
        for pred, ref in ((out.d_sigma, y_sig), (out.d_eps_p, y_epsp), (out.d_e, y_e)):
            r = pred - ref
            sig.append(r > 0.0)
            sig.append(r == 0.0)
    return sig


def _sig_differ(a, b) -> bool:
    return any(np.any(x != y) for x, y in zip(a, b))


def model_gradient_check(
    m: Model,
    features: np.ndarray,
    labels: np.ndarray,
    loss_kind: str = "mae",
    h: float = 1e-6,
    ratio_only: bool = False,
) -> GradCheckResult:
    """Central finite differences of the total cost vs model_grads().

    Covers every subnet weight and bias plus the EPNN ratio r. With
    ratio_only=True just r is checked, which stays cheap at full model
    size. Perturbations that flip an activation branch or an MAE residual
    sign are excluded, as in the single-network checker.
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    Y = np.atleast_2d(np.asarray(labels, dtype=float))
    analytic = model_grads(m, X, Y, loss_kind)

    def cost_and_sig():
        out, caches, _ = _forward_full(m, X)
        return (
            _cost_from_output(out, Y, loss_kind).cf,
            _signature(m, out, caches, Y, loss_kind),
        )

    fd_list: list[float] = []
    bp_list: list[float] = []
    n_excluded = 0

    targets: list[tuple[np.ndarray, np.ndarray]] = []
    if not ratio_only:
        if m.n_parameters() >= 2e4:
            raise ValueError(
                "full model gradient check is meant for small nets; "
                "use ratio_only=True or check subnets individually"
            )
        for role in m.roles():
            p_arrs = m.subnets[role].params.arrays()
            g_arrs = analytic.by_role[role].arrays()
            targets.extend(zip(p_arrs, g_arrs))

    for p_arr, g_arr in targets:
        flat_p, flat_g = p_arr.ravel(), g_arr.ravel()
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + h
            cp, sp = cost_and_sig()
            flat_p[j] = orig - h
            cm, sm = cost_and_sig()
            flat_p[j] = orig
            if _sig_differ(sp, sm):
                n_excluded += 1
                continue
            fd_list.append((cp - cm) / (2.0 * h))
            bp_list.append(float(flat_g[j]))

    if m.kind == "epnn":
        orig_r = m.epnn_ratio
        m.epnn_ratio = orig_r + h
        cp, sp = cost_and_sig()
        m.epnn_ratio = orig_r - h
        cm, sm = cost_and_sig()
        m.epnn_ratio = orig_r
        if _sig_differ(sp, sm):
            n_excluded += 1
        else:
            fd_list.append((cp - cm) / (2.0 * h))
            bp_list.append(analytic.r_grad)

    if not fd_list:
        return GradCheckResult(0.0, 0, n_excluded)
    fd = np.array(fd_list)
    bp = np.array(bp_list)
    denom = max(float(np.max(np.abs(fd))), float(np.max(np.abs(bp))), 1e-300)
    return GradCheckResult(
        float(np.max(np.abs(fd - bp))) / denom, len(fd_list), n_excluded
    )
