"""Training, evaluation, and checkpointing for the surrogate models.

The flow: split a dataset, fit min-max scalers on the training split only,
train full-batch with per-role ADAM learning rates, record error curves,
and serialize everything needed to reproduce an evaluation bit-exactly.

Errors are always the percent Frobenius metric on normalized labels, per
output group (void ratio, plastic strain, stress).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .datagen import Dataset, L_DEPSP, L_DSIG, L_DE
from .models import (
    Model,
    ModelGrads,
    Subnet,
    assemble,
    attach_scalers,
    model_forward,
    model_grads,
)
from .nn import (
    MLPParams,
    MLPSpec,
    Scaler,
    adam_init,
    adam_step,
    apply_scaler,
    fit_scaler,
)

__all__ = [
    "TrainConfig",
    "RawSet",
    "SplitSets",
    "NormalizedSet",
    "CurvePoint",
    "Checkpoint",
    "LearningCurveSample",
    "LearningCurveResult",
    "default_rates",
    "split",
    "frobenius_error",
    "scaler_digest",
    "normalize_splits",
    "train",
    "evaluate",
    "learning_curve",
    "write_curve_csv",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT_VERSION = 1

#: label-group roles in reporting order
ERROR_ROLES = ("void_ratio", "plastic_strain", "stress")


def default_rates(kind: str) -> dict[str, float]:
    """Published per-subnet learning rates for each architecture."""
    if kind == "epnn":
        return {"void_ratio": 1e-2, "plastic_strain": 1e-2, "elasticity": 1e-2}
    return {"void_ratio": 1e-3, "plastic_strain": 1e-3, "stress": 3e-4}


@dataclass(frozen=True)
class TrainConfig:
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    epochs: int = 2000
    loss_kind: str = "mae"
    seed: int = 0
    stride: int = 100
    rates: dict[str, float] | None = None  # None -> default_rates(kind)
    lr_ratio: float = 1e-3
    curve_repeats: int = 5

    def __post_init__(self) -> None:
        r = self.split_ratios
        if len(r) != 3 or any(x <= 0 for x in r) or abs(sum(r) - 1.0) > 1e-12:
            raise ValueError("split ratios must be positive and sum to 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        if self.loss_kind not in ("mae", "mse"):
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if self.curve_repeats < 1:
            raise ValueError("curve_repeats must be at least 1")

    def rates_for(self, kind: str) -> dict[str, float]:
        return dict(self.rates) if self.rates is not None else default_rates(kind)

    def to_dict(self) -> dict:
        return {
            "split_ratios": [repr(float(x)) for x in self.split_ratios],
            "epochs": self.epochs,
            "loss_kind": self.loss_kind,
            "seed": self.seed,
            "stride": self.stride,
            "rates": None
            if self.rates is None
            else {k: repr(float(v)) for k, v in self.rates.items()},
            "lr_ratio": repr(float(self.lr_ratio)),
            "curve_repeats": self.curve_repeats,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            split_ratios=tuple(float(x) for x in d["split_ratios"]),
            epochs=int(d["epochs"]),
            loss_kind=d["loss_kind"],
            seed=int(d["seed"]),
            stride=int(d["stride"]),
            rates=None
            if d["rates"] is None
            else {k: float(v) for k, v in d["rates"].items()},
            lr_ratio=float(d["lr_ratio"]),
            curve_repeats=int(d["curve_repeats"]),
        )


class RawSet(NamedTuple):
    features: np.ndarray
    labels: np.ndarray


@dataclass
class SplitSets:
    train: RawSet
    cv: RawSet
    test: RawSet
    dataset_digest: str


@dataclass
class NormalizedSet:
    """Features and labels in scaler space, tagged by the scalers used."""

    features: np.ndarray
    labels: np.ndarray
    scaler_digest: str

    def __len__(self) -> int:
        return self.features.shape[0]


class CurvePoint(NamedTuple):
    x: float
    role: str
    train_err_pct: float
    cv_err_pct: float


def split(ds: Dataset, config: TrainConfig) -> SplitSets:
    """Seeded shuffle into train/cv/test with floor-sized leading splits."""
    n = len(ds)
    if n < 5:
        raise ValueError(f"dataset too small to split: {n} samples")
    perm = np.random.default_rng(config.seed).permutation(n)
    n_tr = int(np.floor(n * config.split_ratios[0]))
    n_cv = int(np.floor(n * config.split_ratios[1]))
    idx_tr = perm[:n_tr]
    idx_cv = perm[n_tr : n_tr + n_cv]
    idx_te = perm[n_tr + n_cv :]
    return SplitSets(
        train=RawSet(ds.features[idx_tr], ds.labels[idx_tr]),
        cv=RawSet(ds.features[idx_cv], ds.labels[idx_cv]),
        test=RawSet(ds.features[idx_te], ds.labels[idx_te]),
        dataset_digest=ds.digest(),
    )


def frobenius_error(Y: np.ndarray, Ystar: np.ndarray) -> float:
    """100 * ||Y - Ystar||_F / ||Ystar||_F."""
    A = np.asarray(Y, dtype=float)
    B = np.asarray(Ystar, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    ref = np.linalg.norm(B)
    if ref == 0.0:
        raise ValueError("reference matrix is all zero")
    return 100.0 * float(np.linalg.norm(A - B)) / float(ref)


def scaler_digest(feature_scaler: Scaler, label_scaler: Scaler) -> str:
    h = hashlib.sha256()
    for arr in (
        feature_scaler.mins,
        feature_scaler.maxs,
        label_scaler.mins,
        label_scaler.maxs,
    ):
        h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    return h.hexdigest()


def normalize_splits(
    splits: SplitSets, feature_scaler: Scaler, label_scaler: Scaler
) -> dict[str, NormalizedSet]:
    digest = scaler_digest(feature_scaler, label_scaler)
    out = {}
    for name in ("train", "cv", "test"):
        raw: RawSet = getattr(splits, name)
        out[name] = NormalizedSet(
            features=apply_scaler(feature_scaler, raw.features),
            labels=apply_scaler(label_scaler, raw.labels),
            scaler_digest=digest,
        )
    return out


@dataclass
class Checkpoint:
    model: Model
    config: TrainConfig
    dataset_digest: str
    scaler_digest: str
    epochs_trained: int
    final_errors: dict
    format_version: int = CHECKPOINT_FORMAT_VERSION


def _group_errors(m: Model, nset: NormalizedSet) -> dict[str, float]:
    out = model_forward(m, nset.features)
    Y = nset.labels
    return {
        "void_ratio": frobenius_error(out.d_e, Y[:, [L_DE]]),
        "plastic_strain": frobenius_error(out.d_eps_p, Y[:, L_DEPSP]),
        "stress": frobenius_error(out.d_sigma, Y[:, L_DSIG]),
    }


def train(
    m: Model, splits: SplitSets, config: TrainConfig
) -> tuple[Checkpoint, list[CurvePoint]]:
    """Full-batch training with per-role ADAM; returns checkpoint + curve.

    Scalers are fit on the training split here, then attached to the
    model; the cv split only ever feeds error reporting. The model is
    trained in place. Curve points are recorded at epoch 0, every stride
    epochs, and at the final epoch.
    """
    fs = fit_scaler(splits.train.features)
    ls = fit_scaler(splits.train.labels)
    attach_scalers(m, fs, ls)
    sets = normalize_splits(splits, fs, ls)
    ntr, ncv = sets["train"], sets["cv"]
    rates = config.rates_for(m.kind)
    for role in m.roles():
        if role not in rates:
            raise ValueError(f"no learning rate for role {role!r}")

    adam = {role: adam_init(m.subnets[role].params) for role in m.roles()}
    # scalar ADAM channel for the EPNN modulus ratio
    r_m = 0.0
    r_v = 0.0
    b1, b2, eps = 0.9, 0.999, 1e-8

    curve: list[CurvePoint] = []

    def record(x: float) -> None:
        tr = _group_errors(m, ntr)
        cv = _group_errors(m, ncv)
        for role in ERROR_ROLES:
            curve.append(CurvePoint(x, role, tr[role], cv[role]))

    record(0.0)
    for epoch in range(1, config.epochs + 1):
        g: ModelGrads = model_grads(m, ntr.features, ntr.labels, config.loss_kind)
        if not np.isfinite(g.cost.cf):
            raise RuntimeError(
                f"non-finite cost at epoch {epoch}: cf={g.cost.cf!r} "
                f"cf_i={g.cost.cf_i!r} cf_sigma={g.cost.cf_sigma!r} "
                f"kind={m.kind} loss={config.loss_kind}"
            )
        for role in m.roles():
            adam_step(adam[role], m.subnets[role].params, g.by_role[role], rates[role])
        if m.kind == "epnn":
            r_m = b1 * r_m + (1.0 - b1) * g.r_grad
            r_v = b2 * r_v + (1.0 - b2) * g.r_grad ** 2
            mhat = r_m / (1.0 - b1 ** epoch)
            vhat = r_v / (1.0 - b2 ** epoch)
            m.epnn_ratio -= config.lr_ratio * mhat / (np.sqrt(vhat) + eps)
        if epoch % config.stride == 0 or epoch == config.epochs:
            record(float(epoch))

    final_errors = {
        "train": _group_errors(m, ntr),
        "cv": _group_errors(m, ncv),
    }
    ckpt = Checkpoint(
        model=m,
        config=config,
        dataset_digest=splits.dataset_digest,
        scaler_digest=scaler_digest(fs, ls),
        epochs_trained=config.epochs,
        final_errors=final_errors,
    )
    return ckpt, curve


def evaluate(ckpt: Checkpoint, nset: NormalizedSet) -> dict[str, float]:
    """Per-group percent errors of the checkpointed model on a set.

    The set must have been normalized with the checkpoint's own scalers;
    anything else is a silent unit mismatch, so it is rejected.
    """
    if nset.scaler_digest != ckpt.scaler_digest:
        raise ValueError("set was normalized with different scalers")
    return _group_errors(ckpt.model, nset)


class LearningCurveSample(NamedTuple):
    size: float
    rep: int
    role: str
    train_err_pct: float
    cv_err_pct: float


@dataclass
class LearningCurveResult:
    rows: list[LearningCurveSample] = field(default_factory=list)

    def points(self) -> list[CurvePoint]:
        """Per-(size, role) means over repeats, in sweep order."""
        seen: list[tuple[float, str]] = []
        for r in self.rows:
            if (r.size, r.role) not in seen:
                seen.append((r.size, r.role))
        pts = []
        for size, role in seen:
            sel = [r for r in self.rows if r.size == size and r.role == role]
            pts.append(
                CurvePoint(
                    size,
                    role,
                    float(np.mean([r.train_err_pct for r in sel])),
                    float(np.mean([r.cv_err_pct for r in sel])),
                )
            )
        return pts


def learning_curve(
    kind: str,
    splits: SplitSets,
    config: TrainConfig,
    sizes: tuple[float, ...] = (0.05, 0.25, 1.0),
    repeats: int | None = None,
) -> LearningCurveResult:
    """Error vs training-set size, averaged over seeded subset draws.

    Every draw trains a fresh model from scratch on its subset (scalers
    included), then reports subset-train and full-cv errors. Draws are
    re-seeded deterministically per (size, repeat), so the whole sweep is
    reproducible. A fraction of exactly 1.0 uses the training split as is.
    """
    if repeats is None:
        repeats = config.curve_repeats
    n_tr = splits.train.features.shape[0]
    result = LearningCurveResult()
    for si, frac in enumerate(sizes):
        if not 0.0 < frac <= 1.0:
            raise ValueError(f"training fraction must be in (0, 1], got {frac}")
        k = max(1, int(np.floor(frac * n_tr)))
        for rep in range(repeats):
            if k == n_tr:
                idx = np.arange(n_tr)
            else:
                rng = np.random.default_rng([config.seed, si, rep])
                idx = rng.permutation(n_tr)[:k]
            sub = SplitSets(
                train=RawSet(splits.train.features[idx], splits.train.labels[idx]),
                cv=splits.cv,
                test=splits.test,
                dataset_digest=splits.dataset_digest,
            )
            seed = int(
                np.random.SeedSequence([config.seed, si, rep, 7]).generate_state(1)[0]
            )
            m = assemble(kind, seed=seed)
            ckpt, _ = train(m, sub, replace(config, stride=max(config.epochs, 1)))
            for role in ERROR_ROLES:
                result.rows.append(
                    LearningCurveSample(
                        frac,
                        rep,
                        role,
                        ckpt.final_errors["train"][role],
                        ckpt.final_errors["cv"][role],
                    )
                )
    return result


def write_curve_csv(points: list[CurvePoint], path: str) -> None:
    lines = ["x,role,train_err_pct,cv_err_pct"]
    for p in points:
        lines.append(
            f"{p.x:.17g},{p.role},{p.train_err_pct:.17g},{p.cv_err_pct:.17g}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# checkpoint serialization


def _array_to_json(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "data": [repr(float(v)) for v in arr.ravel()],
    }


def _array_from_json(d: dict) -> np.ndarray:
    return np.array([float(v) for v in d["data"]], dtype=float).reshape(d["shape"])


def _spec_to_json(spec: MLPSpec) -> dict:
    return {
        "input_dim": spec.input_dim,
        "output_dim": spec.output_dim,
        "hidden_layers": spec.hidden_layers,
        "hidden_width": spec.hidden_width,
        "activation": spec.activation,
        "leaky_slope": repr(spec.leaky_slope),
        "output_bias": spec.output_bias,
        "hidden_bias": spec.hidden_bias,
    }


def _spec_from_json(d: dict) -> MLPSpec:
    return MLPSpec(
        input_dim=int(d["input_dim"]),
        output_dim=int(d["output_dim"]),
        hidden_layers=int(d["hidden_layers"]),
        hidden_width=int(d["hidden_width"]),
        activation=d["activation"],
        leaky_slope=float(d["leaky_slope"]),
        output_bias=bool(d["output_bias"]),
        hidden_bias=bool(d["hidden_bias"]),
    )


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Versioned JSON with 17-significant-digit numbers; round trips
    bit-exactly."""
    m = ckpt.model
    if m.feature_scaler is None or m.label_scaler is None:
        raise ValueError("cannot checkpoint a model without scalers")
    doc = {
        "format_version": ckpt.format_version,
        "kind": m.kind,
        "epochs_trained": ckpt.epochs_trained,
        "dataset_digest": ckpt.dataset_digest,
        "scaler_digest": ckpt.scaler_digest,
        "epnn_ratio": repr(float(m.epnn_ratio)),
        "k_scale": repr(float(m.k_scale)),
        "config": ckpt.config.to_dict(),
        "feature_scaler": m.feature_scaler.to_dict(),
        "label_scaler": m.label_scaler.to_dict(),
        "final_errors": {
            split_name: {role: repr(float(v)) for role, v in errs.items()}
            for split_name, errs in ckpt.final_errors.items()
        },
        "subnets": {
            role: {
                "spec": _spec_to_json(sub.spec),
                "weights": [_array_to_json(w) for w in sub.params.weights],
                "biases": [_array_to_json(b) for b in sub.params.biases],
            }
            for role, sub in m.subnets.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path: str) -> Checkpoint:
    with open(path) as fh:
        doc = json.load(fh)
    version = int(doc["format_version"])
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version}")
    subnets = {}
    for role, sd in doc["subnets"].items():
        spec = _spec_from_json(sd["spec"])
        params = MLPParams(
            weights=[_array_from_json(w) for w in sd["weights"]],
            biases=[_array_from_json(b) for b in sd["biases"]],
        )
        subnets[role] = Subnet(spec=spec, params=params)
    m = Model(kind=doc["kind"], subnets=subnets)
    m.feature_scaler = Scaler.from_dict(doc["feature_scaler"])
    m.label_scaler = Scaler.from_dict(doc["label_scaler"])
    m.epnn_ratio = float(doc["epnn_ratio"])
    m.k_scale = float(doc["k_scale"])
    return Checkpoint(
        model=m,
        config=TrainConfig.from_dict(doc["config"]),
        dataset_digest=doc["dataset_digest"],
        scaler_digest=doc["scaler_digest"],
        epochs_trained=int(doc["epochs_trained"]),
        final_errors={
            split_name: {role: float(v) for role, v in errs.items()}
            for split_name, errs in doc["final_errors"].items()
        },
        format_version=version,
    )
