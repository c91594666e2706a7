"""Recall-mode simulation: drive a trained surrogate along a strain path.

Each step builds the 13-feature snapshot from the current state, runs the
model, and applies the predicted increments additively. The same drivers
run against the constitutive integrator to produce ground-truth
companions, and compare() quantifies the difference.

Drivers are strain-controlled: proportional (fixed unit direction times a
step magnitude) or axisymmetric triaxial (lateral strains equal, axial
strain alpha times larger; alpha = -2 is the isochoric undrained path).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .datagen import GenConfig
from .invariants import strain_invariants, stress_invariants, vol
from .nn import apply_scaler, invert_scaler
from .models import model_forward
from .training import Checkpoint
from .wg import (
    DEFAULT_TOL,
    IntegrationError,
    IntegratorTolerances,
    MaterialState,
    StressStateError,
    WGParams,
    integrate_step,
)

__all__ = [
    "RecallError",
    "Driver",
    "RecallInfo",
    "Trajectory",
    "TRAJECTORY_COLUMNS",
    "training_mean_step",
    "axisym_eps_for_magnitude",
    "recall_step",
    "simulate",
    "ground_truth",
    "ComparisonReport",
    "compare",
    "write_trajectory_csv",
]

#: normalized inputs beyond this are counted as extrapolation
EXTRAPOLATION_TOL = 1e-12

TRAJECTORY_COLUMNS = (
    "step", "eps33", "p", "q", "eps_v", "gamma", "eps_v_p", "gamma_p", "e",
)


class RecallError(RuntimeError):
    """A recall step produced a non-finite prediction."""


@dataclass(frozen=True)
class Driver:
    """Strain-path generator: a fixed increment applied n_steps times."""

    kind: str
    n_steps: int
    direction: np.ndarray | None = None
    step_mag: float = 0.0
    alpha: float = 0.0
    step_eps: float = 0.0

    @classmethod
    def proportional(
        cls, direction: np.ndarray, step_mag: float, n_steps: int
    ) -> "Driver":
        d = np.asarray(direction, dtype=float).reshape(3)
        norm = float(np.linalg.norm(d))
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("direction must be finite and nonzero")
        if not np.isfinite(step_mag) or not step_mag > 0.0:
            raise ValueError("step magnitude must be finite and positive")
        if n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        return cls(
            kind="proportional", n_steps=n_steps,
            direction=d / norm, step_mag=float(step_mag),
        )

    @classmethod
    def axisymmetric(cls, alpha: float, step_eps: float, n_steps: int) -> "Driver":
        """Lateral strains step_eps each, axial strain alpha * step_eps."""
        if not np.isfinite(alpha):
            raise ValueError("alpha must be finite")
        if step_eps == 0.0 or not np.isfinite(step_eps):
            raise ValueError("per-step strain must be finite and nonzero")
        if n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        return cls(
            kind="axisymmetric", n_steps=n_steps,
            alpha=float(alpha), step_eps=float(step_eps),
        )

    def increment(self) -> np.ndarray:
        if self.kind == "proportional":
            return self.step_mag * self.direction
        return np.array([self.step_eps, self.step_eps, self.alpha * self.step_eps])


def training_mean_step(config: GenConfig) -> float:
    """Default recall step: the mean of the training magnitude range."""
    lo, hi = config.step_mag_range
    return (lo + hi) / 2.0


def axisym_eps_for_magnitude(alpha: float, magnitude: float) -> float:
    """Per-step lateral strain whose full increment has the given norm."""
    return magnitude / float(np.sqrt(2.0 + alpha * alpha))


class RecallInfo(NamedTuple):
    extrapolated: bool
    n_negative_k: int


@dataclass
class Trajectory:
    """A simulated path: states plus bookkeeping about how it went."""

    states: list[MaterialState]
    extrapolation_steps: list[int] = field(default_factory=list)
    fail_step: int | None = None
    n_negative_k: int = 0

    @property
    def truncated(self) -> bool:
        return self.fail_step is not None

    def __len__(self) -> int:
        return len(self.states)

    def series(self) -> dict[str, np.ndarray]:
        """Derived per-state quantities, keyed by TRAJECTORY_COLUMNS."""
        cols: dict[str, list[float]] = {name: [] for name in TRAJECTORY_COLUMNS}
        for i, s in enumerate(self.states):
            si = stress_invariants(s.sigma)
            ei = strain_invariants(s.eps)
            pi = strain_invariants(s.eps_p)
            cols["step"].append(float(i))
            cols["eps33"].append(float(s.eps[2]))
            cols["p"].append(si.p)
            cols["q"].append(si.q)
            cols["eps_v"].append(ei.eps_v)
            cols["gamma"].append(ei.gamma)
            cols["eps_v_p"].append(float(vol(s.eps_p)))
            cols["gamma_p"].append(pi.gamma)
            cols["e"].append(s.e)
        return {name: np.array(v) for name, v in cols.items()}


def recall_step(
    ckpt: Checkpoint, state: MaterialState, d_eps: np.ndarray
) -> tuple[MaterialState, RecallInfo]:
    """One surrogate update: normalize, predict, denormalize, accumulate.

    Inputs outside the training range are extrapolated linearly by the
    scaler and reported in the info flag, never clipped.
    """
    m = ckpt.model
    if m.feature_scaler is None or m.label_scaler is None:
        raise ValueError("checkpoint model has no scalers attached")
    d_eps = np.asarray(d_eps, dtype=float).reshape(3)
    features = np.concatenate(
        [state.eps, state.sigma, [state.e], state.eps_p, d_eps]
    )
    x_norm = apply_scaler(m.feature_scaler, features)
    extrapolated = bool(np.any(np.abs(x_norm) > 1.0 + EXTRAPOLATION_TOL))
    out = model_forward(m, x_norm)
    y_norm = np.concatenate([out.d_sigma, out.d_eps_p, out.d_e])
    if not np.all(np.isfinite(y_norm)):
        raise RecallError("non-finite prediction")
    y = invert_scaler(m.label_scaler, y_norm)
    new_state = MaterialState(
        sigma=state.sigma + y[0:3],
        eps=state.eps + d_eps,
        eps_p=state.eps_p + y[3:6],
        e=state.e + y[6],
    )
    return new_state, RecallInfo(extrapolated, out.n_negative_k)


def simulate(ckpt: Checkpoint, driver: Driver, p_in: float, e_in: float) -> Trajectory:
    """Run the surrogate in recall mode from an isotropic initial state.

    A non-finite prediction truncates the trajectory and records the
    failing step index instead of raising.
    """
    state = MaterialState.isotropic(p_in, e_in)
    traj = Trajectory(states=[state])
    d_eps = driver.increment()
    for i in range(driver.n_steps):
        try:
            state, info = recall_step(ckpt, state, d_eps)
        except RecallError:
            traj.fail_step = i
            break
        if info.extrapolated:
            traj.extrapolation_steps.append(i)
        traj.n_negative_k += info.n_negative_k
        traj.states.append(state)
    return traj


def ground_truth(
    driver: Driver,
    p_in: float,
    e_in: float,
    params: WGParams | None = None,
    tol: IntegratorTolerances = DEFAULT_TOL,
) -> Trajectory:
    """The constitutive integrator driven along the same path."""
    if params is None:
        params = WGParams.ottawa_sand()
    state = MaterialState.isotropic(p_in, e_in)
    traj = Trajectory(states=[state])
    d_eps = driver.increment()
    for i in range(driver.n_steps):
        try:
            res = integrate_step(state, d_eps, params, tol)
        except (IntegrationError, StressStateError):
            traj.fail_step = i
            break
        state = state.advanced(d_eps, res)
        traj.states.append(state)
    return traj


COMPARE_QUANTITIES = ("p", "q", "eps_v_p", "gamma_p", "e")


@dataclass
class ComparisonReport:
    """Pointwise and end-state gaps between two trajectories.

    Relative errors are taken against the reference trajectory, with the
    denominator floored at a thousandth of that quantity's own scale so
    zero crossings do not blow the series up.
    """

    pointwise: dict[str, np.ndarray]
    end_errors: dict[str, float]
    n_compared: int
    length_mismatch: bool

    def max_errors(self) -> dict[str, float]:
        return {k: float(np.max(v)) if v.size else 0.0 for k, v in self.pointwise.items()}


def compare(traj_model: Trajectory, traj_truth: Trajectory) -> ComparisonReport:
    n = min(len(traj_model), len(traj_truth))
    mismatch = len(traj_model) != len(traj_truth)
    sa = traj_model.series()
    sb = traj_truth.series()
    pointwise = {}
    end_errors = {}
    for name in COMPARE_QUANTITIES:
        a = sa[name][:n]
        b = sb[name][:n]
        scale = float(np.max(np.abs(b))) if n else 0.0
        floor = max(1e-3 * scale, 1e-300)
        pointwise[name] = np.abs(a - b) / np.maximum(np.abs(b), floor)
        end_errors[name] = float(pointwise[name][-1]) if n else 0.0
    return ComparisonReport(
        pointwise=pointwise,
        end_errors=end_errors,
        n_compared=n,
        length_mismatch=mismatch,
    )


def write_trajectory_csv(traj: Trajectory, path: str) -> None:
    series = traj.series()
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for i in range(len(traj)):
        lines.append(
            ",".join(f"{series[c][i]:.17g}" for c in TRAJECTORY_COLUMNS)
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
