"""Command-line entry point.

One executable, subcommand style:

    sandlab generate   dataset CSV + metadata + stats report
    sandlab stats      recompute the stats table from a dataset CSV
    sandlab train      fit one architecture, write checkpoint + curve
    sandlab evaluate   per-role percent errors of a checkpoint on a dataset
    sandlab simulate   strain-driven recall, optional ground-truth companion
    sandlab curves     learning-curve sweep over training-set fractions
    sandlab gradcheck  finite-difference audit of the backward pass

Configuration comes from an optional JSON file of flat keys (for example
{"train.epochs": 500}); command-line flags override config keys. Every
run writes a manifest JSON recording the resolved config, its digest and
package versions, which is enough to reproduce the outputs bit-exactly.

Exit codes: 0 success, 2 usage or config error, 3 missing input file,
4 data or format error, 5 simulation failure, 6 gradient check over
threshold.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .charts import trajectory_charts
from .datagen import (
    GenConfig,
    dataset_stats,
    generate_dataset,
    load_dataset,
    load_metadata,
    save_dataset,
)
from .models import MODEL_KINDS, assemble, default_specs, model_gradient_check
from .nn import Scaler
from .simulate import (
    Driver,
    axisym_eps_for_magnitude,
    compare,
    ground_truth,
    simulate,
    write_trajectory_csv,
)
from .training import (
    TrainConfig,
    evaluate,
    learning_curve,
    load_checkpoint,
    normalize_splits,
    save_checkpoint,
    split,
    train,
    write_curve_csv,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_DATA = 4
EXIT_SIMULATE = 5
EXIT_GRADCHECK = 6

_CATEGORY_CODES = {
    "usage": EXIT_USAGE,
    "missing-file": EXIT_MISSING,
    "data": EXIT_DATA,
    "simulate": EXIT_SIMULATE,
    "gradcheck": EXIT_GRADCHECK,
}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category
        self.code = _CATEGORY_CODES[category]


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise CliError("missing-file", f"config file not found: {path}")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError("usage", f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise CliError("usage", "config must be a JSON object of flat keys")
    return raw


class Settings:
    """Flat config keys merged with flag overrides, with typed access."""

    def __init__(self, config: dict, overrides: dict):
        self.values = dict(config)
        for key, val in overrides.items():
            if val is not None:
                self.values[key] = val
        self.consumed: set[str] = set()

    def get(self, key: str, default, cast=None):
        self.consumed.add(key)
        if key not in self.values:
            return default
        val = self.values[key]
        if cast is None:
            return val
        try:
            return cast(val)
        except (TypeError, ValueError) as exc:
            raise CliError("usage", f"config key {key!r}: {exc}") from exc
    def require(self, key: str, cast=None):
        val = self.get(key, None, cast)
        if val is None:
            raise CliError("usage", f"missing required setting {key!r}")
        return val

    def reject_unknown(self):
        unknown = sorted(set(self.values) - self.consumed)
        if unknown:
            raise CliError("usage", f"unknown config keys: {', '.join(unknown)}")


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, str):
        if v.lower() in ("true", "1", "yes"):
            return True
        if v.lower() in ("false", "0", "no"):
            return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _as_float_list(v) -> list[float]:
    if not isinstance(v, (list, tuple)):
        raise ValueError("expected a list of numbers")
    return [float(x) for x in v]


def _out_dir(settings: Settings) -> str:
    out = settings.get("out", ".", str)
    os.makedirs(out, exist_ok=True)
    return out


def _config_digest(resolved: dict) -> str:
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _write_manifest(
    out: str, command: str, settings: Settings, inputs: dict, outputs: list[str]
) -> None:
    resolved = {k: settings.values[k] for k in sorted(settings.values)}
    manifest = {
        "command": command,
        "config": resolved,
        "config_digest": _config_digest(resolved),
        "inputs": inputs,
        "outputs": sorted(outputs),
        "versions": {
            "sandlab": __version__,
            "numpy": np.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
    }
    with open(os.path.join(out, f"{command}_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _print_stats_table(rows) -> None:
    print(f"{'quantity':<12} {'mean':>13} {'min':>13} {'max':>13} {'sd':>13}")
    for r in rows:
        print(
            f"{r.name:<12} {r.mean:>13.6g} {r.min:>13.6g} "
            f"{r.max:>13.6g} {r.sd:>13.6g}"
        )


def _print_error_table(errors: dict[str, dict[str, float]]) -> None:
    roles = sorted({role for per in errors.values() for role in per})
    print(f"{'split':<8}" + "".join(f" {r:>14}" for r in roles))
    for name, per in errors.items():
        cells = "".join(f" {per[r]:>13.4f}%" for r in roles)
        print(f"{name:<8}{cells}")


def _load_dataset_checked(path: str):
    if not os.path.exists(path):
        raise CliError("missing-file", f"dataset not found: {path}")
    try:
        return load_dataset(path)
    except ValueError as exc:
        raise CliError("data", f"could not parse dataset: {exc}") from exc


def _load_checkpoint_checked(path: str):
    if not os.path.exists(path):
        raise CliError("missing-file", f"checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError("data", f"could not load checkpoint: {exc}") from exc


def _gen_config(settings: Settings) -> GenConfig:
    scale = settings.get("gen.scale", "desk", str)
    seed = settings.get("seed", 0, int)
    if scale == "desk":
        return GenConfig.desk_scale(master_seed=seed)
    if scale == "full":
        return GenConfig.full_scale(master_seed=seed)
    raise CliError("usage", f"gen.scale must be 'desk' or 'full', got {scale!r}")


def _train_config(settings: Settings) -> TrainConfig:
    ratios = settings.get("train.split", [0.6, 0.2, 0.2], _as_float_list)
    try:
        return TrainConfig(
            split_ratios=tuple(ratios),
            epochs=settings.get("train.epochs", 2000, int),
            loss_kind=settings.get("train.loss", "mae", str),
            seed=settings.get("seed", 0, int),
            stride=settings.get("train.stride", 100, int),
            lr_ratio=settings.get("train.lr_ratio", 1e-3, float),
            curve_repeats=settings.get("curves.repeats", 5, int),
        )
    except ValueError as exc:
        raise CliError("usage", str(exc)) from exc


def _arch(settings: Settings) -> str:
    kind = settings.get("train.arch", "epnn", str)
    if kind not in MODEL_KINDS:
        raise CliError(
            "usage", f"arch must be one of {', '.join(MODEL_KINDS)}, got {kind!r}"
        )
    return kind


def cmd_generate(settings: Settings) -> int:
    out = _out_dir(settings)
    cfg = _gen_config(settings)
    settings.reject_unknown()
    ds = generate_dataset(cfg)
    csv_path = os.path.join(out, "dataset.csv")
    meta_path = os.path.join(out, "dataset.meta.json")
    save_dataset(ds, csv_path, meta_path)
    print(f"dataset: {ds.features.shape[0]} samples, digest {ds.digest()[:16]}")
    if ds.n_failed_paths:
        print(f"warning: {ds.n_failed_paths} paths failed to integrate")
    _print_stats_table(dataset_stats(ds))
    _write_manifest(
        out,
        "generate",
        settings,
        inputs={},
        outputs=["dataset.csv", "dataset.meta.json"],
    )
    return EXIT_OK


def cmd_stats(settings: Settings) -> int:
    out = _out_dir(settings)
    data = settings.require("data", str)
    settings.reject_unknown()
    ds = _load_dataset_checked(data)
    rows = dataset_stats(ds)
    print(f"dataset: {ds.features.shape[0]} samples, digest {ds.digest()[:16]}")
    _print_stats_table(rows)
    report = {
        r.name: {
            "mean": repr(r.mean),
            "min": repr(r.min),
            "max": repr(r.max),
            "sd": repr(r.sd),
        }
        for r in rows
    }
    with open(os.path.join(out, "stats.json"), "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        out,
        "stats",
        settings,
        inputs={"data": {"path": os.path.basename(data), "digest": ds.digest()}},
        outputs=["stats.json"],
    )
    return EXIT_OK


def cmd_train(settings: Settings) -> int:
    out = _out_dir(settings)
    data = settings.require("data", str)
    kind = _arch(settings)
    tc = _train_config(settings)
    settings.reject_unknown()
    ds = _load_dataset_checked(data)
    try:
        splits = split(ds, tc)
    except ValueError as exc:
        raise CliError("data", str(exc)) from exc
    model = assemble(kind, seed=tc.seed)
    ckpt, curve = train(model, splits, tc)
    save_checkpoint(ckpt, os.path.join(out, "checkpoint.json"))
    write_curve_csv(curve, os.path.join(out, "training_curve.csv"))
    print(f"trained {kind} for {ckpt.epochs_trained} epochs")
    _print_error_table(ckpt.final_errors)
    _write_manifest(
        out,
        "train",
        settings,
        inputs={"data": {"path": os.path.basename(data), "digest": ds.digest()}},
        outputs=["checkpoint.json", "training_curve.csv"],
    )
    return EXIT_OK


def cmd_evaluate(settings: Settings) -> int:
    out = _out_dir(settings)
    data = settings.require("data", str)
    ckpt_path = settings.require("checkpoint", str)
    settings.reject_unknown()
    ckpt = _load_checkpoint_checked(ckpt_path)
    ds = _load_dataset_checked(data)
    if ds.digest() != ckpt.dataset_digest:
        raise CliError(
            "data",
            "dataset digest does not match the one the checkpoint was trained on",
        )
    splits = split(ds, ckpt.config)
    nsets = normalize_splits(
        splits, ckpt.model.feature_scaler, ckpt.model.label_scaler
    )
    errors = {name: evaluate(ckpt, nset) for name, nset in nsets.items()}
    _print_error_table(errors)
    report = {
        name: {role: repr(v) for role, v in per.items()}
        for name, per in errors.items()
    }
    with open(os.path.join(out, "evaluation.json"), "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        out,
        "evaluate",
        settings,
        inputs={
            "data": {"path": os.path.basename(data), "digest": ds.digest()},
            "checkpoint": {
                "path": os.path.basename(ckpt_path),
                "scaler_digest": ckpt.scaler_digest,
            },
        },
        outputs=["evaluation.json"],
    )
    return EXIT_OK


def _build_driver(settings: Settings) -> Driver:
    kind = settings.get("sim.driver", "axisym", str)
    steps = settings.get("sim.steps", 70, int)
    step_size = settings.get("sim.step_size", 0.8e-3, float)
    flip = settings.get("sim.flip", False, _as_bool)
    try:
        if kind == "axisym":
            alpha = settings.get("sim.alpha", -2.0, float)
            eps = axisym_eps_for_magnitude(alpha, step_size)
            # follow the usual triaxial convention: the axial component
            # alpha * eps comes out compressive unless flipped
            if alpha < 0.0:
                eps = -eps
            if flip:
                eps = -eps
            return Driver.axisymmetric(alpha=alpha, step_eps=eps, n_steps=steps)
        if kind == "proportional":
            direction = np.array(
                settings.require("sim.direction", _as_float_list)
            )
            if flip:
                direction = -direction
            return Driver.proportional(direction, step_size, steps)
    except ValueError as exc:
        raise CliError("usage", str(exc)) from exc
    raise CliError(
        "usage", f"sim.driver must be 'axisym' or 'proportional', got {kind!r}"
    )


def cmd_simulate(settings: Settings) -> int:
    out = _out_dir(settings)
    ckpt_path = settings.require("checkpoint", str)
    driver = _build_driver(settings)
    p_in = settings.get("sim.pin", 225.0, float)
    e_in = settings.get("sim.ein", 0.62, float)
    with_truth = settings.get("sim.truth", True, _as_bool)
    with_svg = settings.get("sim.svg", True, _as_bool)
    settings.reject_unknown()
    ckpt = _load_checkpoint_checked(ckpt_path)

    traj = simulate(ckpt, driver, p_in, e_in)
    outputs = ["trajectory.csv"]
    write_trajectory_csv(traj, os.path.join(out, "trajectory.csv"))
    s = traj.series()
    print(
        f"recall: {len(traj) - 1} steps, end p={s['p'][-1]:.4g} kPa "
        f"q={s['q'][-1]:.4g} kPa e={s['e'][-1]:.6g}"
    )
    if traj.extrapolation_steps:
        print(
            f"extrapolated on {len(traj.extrapolation_steps)} of "
            f"{driver.n_steps} steps (first at {traj.extrapolation_steps[0]})"
        )
    if traj.n_negative_k:
        print(f"warning: secant stiffness went negative {traj.n_negative_k} times")

    named = [("recall", s)]
    failures = []
    if traj.fail_step is not None:
        failures.append(f"recall failed at step {traj.fail_step}")

    if with_truth:
        truth = ground_truth(driver, p_in, e_in)
        write_trajectory_csv(truth, os.path.join(out, "truth.csv"))
        outputs.append("truth.csv")
        named.append(("truth", truth.series()))
        if truth.fail_step is not None:
            failures.append(f"ground truth failed at step {truth.fail_step}")
        rep = compare(traj, truth)
        lines = ["quantity,max_rel_err,end_rel_err"]
        for name in rep.pointwise:
            lines.append(
                f"{name},{rep.max_errors()[name]:.17g},{rep.end_errors[name]:.17g}"
            )
        with open(os.path.join(out, "comparison.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        outputs.append("comparison.csv")
        worst = max(rep.max_errors().items(), key=lambda kv: kv[1])
        print(
            f"vs truth over {rep.n_compared} states: worst {worst[0]} "
            f"error {100 * worst[1]:.4g}%"
        )

    if with_svg:
        outputs.extend(trajectory_charts(named, out, "trajectory"))

    _write_manifest(
        out,
        "simulate",
        settings,
        inputs={
            "checkpoint": {
                "path": os.path.basename(ckpt_path),
                "scaler_digest": ckpt.scaler_digest,
            }
        },
        outputs=outputs,
    )
    if failures:
        raise CliError("simulate", "; ".join(failures))
    return EXIT_OK


def cmd_curves(settings: Settings) -> int:
    out = _out_dir(settings)
    data = settings.require("data", str)
    kind = _arch(settings)
    tc = _train_config(settings)
    sizes = tuple(
        settings.get("curves.sizes", [0.05, 0.25, 1.0], _as_float_list)
    )
    settings.reject_unknown()
    ds = _load_dataset_checked(data)
    try:
        splits = split(ds, tc)
        result = learning_curve(kind, splits, tc, sizes=sizes)
    except ValueError as exc:
        raise CliError("data", str(exc)) from exc
    lines = ["size,rep,role,train_err_pct,cv_err_pct"]
    for r in result.rows:
        lines.append(
            f"{r.size:.17g},{r.rep},{r.role},"
            f"{r.train_err_pct:.17g},{r.cv_err_pct:.17g}"
        )
    with open(os.path.join(out, "learning_curve.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    write_curve_csv(
        result.points(), os.path.join(out, "learning_curve_means.csv")
    )
    print(f"learning curve for {kind}: sizes {list(sizes)}")
    print(f"{'size':>8} {'role':<14} {'train':>10} {'cv':>10}")
    for p in result.points():
        print(
            f"{p.x:>8.3g} {p.role:<14} {p.train_err_pct:>9.4f}% "
            f"{p.cv_err_pct:>9.4f}%"
        )
    _write_manifest(
        out,
        "curves",
        settings,
        inputs={"data": {"path": os.path.basename(data), "digest": ds.digest()}},
        outputs=["learning_curve.csv", "learning_curve_means.csv"],
    )
    return EXIT_OK


def cmd_gradcheck(settings: Settings) -> int:
    out = _out_dir(settings)
    seed = settings.get("seed", 0, int)
    tol = settings.get("gradcheck.tol", 1e-6, float)
    width = settings.get("gradcheck.width", 12, int)
    layers = settings.get("gradcheck.layers", 2, int)
    n_samples = settings.get("gradcheck.samples", 6, int)
    loss_kind = settings.get("train.loss", "mae", str)
    settings.reject_unknown()

    report = {}
    worst = 0.0
    from .models import attach_scalers

    for idx, kind in enumerate(MODEL_KINDS):
        hyper = {
            role: dataclasses.replace(
                spec, hidden_layers=layers, hidden_width=width
            )
            for role, spec in default_specs(kind).items()
        }
        model = assemble(kind, seed=seed, hyper=hyper)
        rng = np.random.default_rng([seed, idx])
        spread = rng.uniform(0.5, 1.5, size=13)
        attach_scalers(
            model,
            Scaler(mins=-spread, maxs=spread),
            Scaler(mins=-rng.uniform(0.5, 1.5, 7), maxs=rng.uniform(0.5, 1.5, 7)),
        )
        features = rng.uniform(-1.0, 1.0, size=(n_samples, 13))
        labels = rng.uniform(-1.0, 1.0, size=(n_samples, 7))
        res = model_gradient_check(model, features, labels, loss_kind=loss_kind)
        report[kind] = {
            "max_rel_err": res.max_rel_err,
            "n_checked": res.n_checked,
            "n_excluded": res.n_excluded,
        }
        worst = max(worst, res.max_rel_err)
        print(
            f"{kind:<10} max rel err {res.max_rel_err:.3e} "
            f"({res.n_checked} checked, {res.n_excluded} excluded)"
        )

    with open(os.path.join(out, "gradcheck.json"), "w") as fh:
        json.dump({"tolerance": tol, "results": report}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        out, "gradcheck", settings, inputs={}, outputs=["gradcheck.json"]
    )
    if not np.isfinite(worst) or worst > tol:
        raise CliError(
            "gradcheck", f"max relative error {worst:.3e} exceeds {tol:.1e}"
        )
    print(f"gradient check passed (worst {worst:.3e} <= {tol:.1e})")
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "stats": cmd_stats,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "curves": cmd_curves,
    "gradcheck": cmd_gradcheck,
}

# flag destination -> flat config key it overrides
_FLAG_KEYS = {
    "seed": "seed",
    "out": "out",
    "data": "data",
    "checkpoint": "checkpoint",
    "arch": "train.arch",
    "driver": "sim.driver",
    "alpha": "sim.alpha",
    "steps": "sim.steps",
    "step_size": "sim.step_size",
    "pin": "sim.pin",
    "ein": "sim.ein",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sandlab",
        description="dataset generation, training and recall for a sand "
        "plasticity surrogate",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of flat config keys")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory (default: current)")

    p = sub.add_parser("generate", help="generate a dataset")
    common(p)

    p = sub.add_parser("stats", help="stats table from a dataset CSV")
    common(p)
    p.add_argument("--data", help="dataset CSV path")

    p = sub.add_parser("train", help="train one architecture")
    common(p)
    p.add_argument("--data", help="dataset CSV path")
    p.add_argument("--arch", choices=MODEL_KINDS, help="architecture")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--data", help="dataset CSV path")
    p.add_argument("--checkpoint", help="checkpoint JSON path")

    p = sub.add_parser("simulate", help="strain-driven recall simulation")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint JSON path")
    p.add_argument(
        "--driver", choices=("axisym", "proportional"), help="strain driver"
    )
    p.add_argument("--alpha", type=float, help="axial/lateral strain ratio")
    p.add_argument("--steps", type=int, help="number of recall steps")
    p.add_argument("--step-size", type=float, help="strain increment norm")
    p.add_argument("--pin", type=float, help="initial mean pressure [kPa]")
    p.add_argument("--ein", type=float, help="initial void ratio")

    p = sub.add_parser("curves", help="learning-curve sweep")
    common(p)
    p.add_argument("--data", help="dataset CSV path")
    p.add_argument("--arch", choices=MODEL_KINDS, help="architecture")

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    common(p)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    try:
        config = _load_config_file(ns.config)
        overrides = {
            key: getattr(ns, dest)
            for dest, key in _FLAG_KEYS.items()
            if hasattr(ns, dest)
        }
        settings = Settings(config, overrides)
        return _COMMANDS[ns.command](settings)
    except CliError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error[missing-file]: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except OSError as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
