"""Synthetic dataset generation for surrogate training.

Material points start on a grid of isotropic initial conditions (p_in,
e_in).  Each test draws one random direction on the unit sphere in
principal-strain space and applies it monotonically with per-step random
magnitudes, integrating with the implicit return mapping.  One sample is
recorded per accepted step: 13 features (strain, stress, void ratio,
plastic strain, strain increment) and 7 labels (stress increment, plastic
strain increment, void ratio increment).  Paths stop at a step cap, when
the mean stress leaves its bounds (the boundary sample is kept), or when
the integrator fails (samples up to the failure are kept).

Per-path random streams are derived from (master_seed, condition index,
test index), so any path can be regenerated independently and parallel
generation is bit-identical to sequential.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .invariants import vol
from .wg import (
    DEFAULT_TOL,
    IntegrationError,
    MaterialState,
    StressStateError,
    WGParams,
    integrate_step,
)

FEATURE_NAMES = ("eps1", "eps2", "eps3", "sig1", "sig2", "sig3", "e",
                 "epsp1", "epsp2", "epsp3", "deps1", "deps2", "deps3")
LABEL_NAMES = ("dsig1", "dsig2", "dsig3", "depsp1", "depsp2", "depsp3", "de")
CSV_HEADER = ",".join(FEATURE_NAMES + LABEL_NAMES)

N_FEATURES = 13
N_LABELS = 7

# feature column blocks
F_EPS = slice(0, 3)
F_SIG = slice(3, 6)
F_E = 6
F_EPSP = slice(7, 10)
F_DEPS = slice(10, 13)
# label column blocks
L_DSIG = slice(0, 3)
L_DEPSP = slice(3, 6)
L_DE = 6


@dataclass(frozen=True)
class GenConfig:
    """Protocol parameters for one dataset generation run."""

    p_grid: tuple
    e_grid: tuple
    tests_per_condition: int
    max_steps: int
    step_mag_range: tuple
    p_bounds: tuple
    master_seed: int

    def __post_init__(self):
        object.__setattr__(self, "p_grid", tuple(float(p) for p in self.p_grid))
        object.__setattr__(self, "e_grid", tuple(float(e) for e in self.e_grid))
        object.__setattr__(self, "step_mag_range",
                           tuple(float(x) for x in self.step_mag_range))
        object.__setattr__(self, "p_bounds",
                           tuple(float(x) for x in self.p_bounds))
        lo, hi = self.step_mag_range
        if not 0.0 <= lo <= hi <= 0.01:
            raise ValueError(f"step_mag_range must lie within [0, 0.01], "
                             f"got {self.step_mag_range}")
        if len(self.p_bounds) != 2 or self.p_bounds[0] >= self.p_bounds[1]:
            raise ValueError(f"invalid p_bounds {self.p_bounds}")
        if self.p_bounds[0] < 1.0:
            raise ValueError("lower p bound must be at least the reference "
                             f"pressure 1 kPa, got {self.p_bounds[0]}")
        if self.tests_per_condition < 0 or self.max_steps < 1:
            raise ValueError("tests_per_condition must be >= 0 and "
                             "max_steps >= 1")

    @classmethod
    def full_scale(cls, master_seed: int = 0) -> "GenConfig":
        """10 x 10 grid, 20 tests per condition, up to 200 steps each."""
        return cls(p_grid=tuple(np.linspace(50.0, 500.0, 10)),
                   e_grid=tuple(np.linspace(0.5, 0.74, 10)),
                   tests_per_condition=20, max_steps=200,
                   step_mag_range=(0.0, 1.6e-3), p_bounds=(1.0, 1e5),
                   master_seed=master_seed)

    @classmethod
    def desk_scale(cls, master_seed: int = 0) -> "GenConfig":
        """Small configuration for fast experiments: 3 x 3 x 5 x 100."""
        return cls(p_grid=(50.0, 225.0, 500.0), e_grid=(0.55, 0.62, 0.72),
                   tests_per_condition=5, max_steps=100,
                   step_mag_range=(0.0, 1.6e-3), p_bounds=(1.0, 1e5),
                   master_seed=master_seed)

    def to_dict(self) -> dict:
        return {"p_grid": [repr(p) for p in self.p_grid],
                "e_grid": [repr(e) for e in self.e_grid],
                "tests_per_condition": self.tests_per_condition,
                "max_steps": self.max_steps,
                "step_mag_range": [repr(x) for x in self.step_mag_range],
                "p_bounds": [repr(x) for x in self.p_bounds],
                "master_seed": self.master_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        return cls(p_grid=tuple(float(x) for x in d["p_grid"]),
                   e_grid=tuple(float(x) for x in d["e_grid"]),
                   tests_per_condition=int(d["tests_per_condition"]),
                   max_steps=int(d["max_steps"]),
                   step_mag_range=tuple(float(x) for x in d["step_mag_range"]),
                   p_bounds=tuple(float(x) for x in d["p_bounds"]),
                   master_seed=int(d["master_seed"]))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


class PathSample(NamedTuple):
    """One recorded integration step, as stored in a Dataset row."""

    features: np.ndarray  # 13: eps, sigma, e, eps_p, d_eps
    labels: np.ndarray    # 7: d_sigma, d_eps_p, d_e
    provenance: tuple     # (condition index, test index, step index)


@dataclass
class Dataset:
    """Column store of generated samples plus run bookkeeping."""

    features: np.ndarray   # (N, 13) float64
    labels: np.ndarray     # (N, 7) float64
    provenance: np.ndarray  # (N, 3) int64
    config: GenConfig
    n_failed_paths: int = 0

    def __len__(self) -> int:
        return self.features.shape[0]

    def sample(self, i: int) -> PathSample:
        return PathSample(self.features[i], self.labels[i],
                          tuple(int(v) for v in self.provenance[i]))

    def digest(self) -> str:
        """Content hash of the sample arrays (independent of provenance)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()


def sample_direction(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit vector in principal-strain space."""
    while True:
        v = rng.standard_normal(3)
        norm = math.sqrt(float(v @ v))
        if norm > 1e-8:
            return v / norm


def path_rng(master_seed: int, ci: int, ti: int) -> np.random.Generator:
    """The per-path random stream for condition index ci, test index ti."""
    return np.random.default_rng([master_seed, ci, ti])


def generate_path(p_in: float, e_in: float, direction: np.ndarray,
                  rng: np.random.Generator, config: GenConfig,
                  params: WGParams, ci: int = 0, ti: int = 0):
    """Integrate one monotonic proportional path; returns (samples, failed)."""
    state = MaterialState.isotropic(p_in, e_in)
    samples: list[PathSample] = []
    lo, hi = config.step_mag_range
    p_min, p_max = config.p_bounds
    for si in range(config.max_steps):
        mag = rng.uniform(lo, hi)
        d_eps = mag * direction
        try:
            res = integrate_step(state, d_eps, params, DEFAULT_TOL)
        except (IntegrationError, StressStateError):
            return samples, True
        feat = np.empty(N_FEATURES)
        feat[F_EPS] = state.eps
        feat[F_SIG] = state.sigma
        feat[F_E] = state.e
        feat[F_EPSP] = state.eps_p
        feat[F_DEPS] = d_eps
        lab = np.empty(N_LABELS)
        lab[L_DSIG] = res.d_sigma
        lab[L_DEPSP] = res.d_eps_p
        lab[L_DE] = res.d_e
        samples.append(PathSample(feat, lab, (ci, ti, si)))
        state = state.advanced(d_eps, res)
        p_new = vol(state.sigma) / 3.0
        if not p_min <= p_new <= p_max:
            break  # the boundary-crossing sample is kept
    return samples, False


def generate_dataset(config: GenConfig,
                     params: WGParams | None = None) -> Dataset:
    """Run the full grid-of-conditions protocol."""
    if params is None:
        params = WGParams.ottawa_sand()
    conditions = [(p, e) for p in config.p_grid for e in config.e_grid]
    feats: list[np.ndarray] = []
    labs: list[np.ndarray] = []
    provs: list[tuple] = []
    n_failed = 0
    for ci, (p_in, e_in) in enumerate(conditions):
        for ti in range(config.tests_per_condition):
            rng = path_rng(config.master_seed, ci, ti)
            direction = sample_direction(rng)
            samples, failed = generate_path(p_in, e_in, direction, rng,
                                            config, params, ci, ti)
            n_failed += int(failed)
            for s in samples:
                feats.append(s.features)
                labs.append(s.labels)
                provs.append(s.provenance)
    if feats:
        features = np.vstack(feats)
        labels = np.vstack(labs)
        provenance = np.asarray(provs, dtype=np.int64)
    else:
        features = np.empty((0, N_FEATURES))
        labels = np.empty((0, N_LABELS))
        provenance = np.empty((0, 3), dtype=np.int64)
    return Dataset(features=features, labels=labels, provenance=provenance,
                   config=config, n_failed_paths=n_failed)


# ---------------------------------------------------------------------------
# summary statistics
# ---------------------------------------------------------------------------

STAT_ROW_NAMES = ("eps_v", "d_eps_v", "gamma", "d_gamma", "eps_v_p",
                  "d_eps_v_p", "gamma_p", "d_gamma_p", "p", "d_p", "q",
                  "d_q", "e", "d_e")


class StatRow(NamedTuple):
    name: str
    mean: float
    min: float
    max: float
    sd: float


def _row(name: str, values: np.ndarray) -> StatRow:
    return StatRow(name, float(values.mean()), float(values.min()),
                   float(values.max()), float(values.std()))


def dataset_stats(ds: Dataset) -> list[StatRow]:
    """Per-derived-quantity mean/min/max/sd over all samples.

    Increment rows are invariants of the increment tensors themselves, so
    d_gamma and d_q are norms and always nonnegative.
    """
    if len(ds) == 0:
        raise ValueError("dataset is empty")
    X, Y = ds.features, ds.labels

    def inv_rows(tensors):
        ev = tensors.sum(axis=1)
        dev = tensors - ev[:, None] / 3.0
        gam = np.sqrt((2.0 / 3.0) * (dev * dev).sum(axis=1))
        return ev, gam

    eps_v, gamma = inv_rows(X[:, F_EPS])
    d_eps_v, d_gamma = inv_rows(X[:, F_DEPS])
    eps_v_p, gamma_p = inv_rows(X[:, F_EPSP])
    d_eps_v_p, d_gamma_p = inv_rows(Y[:, L_DEPSP])
    sig = X[:, F_SIG]
    p = sig.sum(axis=1) / 3.0
    sdev = sig - p[:, None]
    q = np.sqrt(1.5 * (sdev * sdev).sum(axis=1))
    dsig = Y[:, L_DSIG]
    d_p = dsig.sum(axis=1) / 3.0
    dsdev = dsig - d_p[:, None]
    d_q = np.sqrt(1.5 * (dsdev * dsdev).sum(axis=1))

    values = (eps_v, d_eps_v, gamma, d_gamma, eps_v_p, d_eps_v_p, gamma_p,
              d_gamma_p, p, d_p, q, d_q, X[:, F_E], Y[:, L_DE])
    return [_row(n, v) for n, v in zip(STAT_ROW_NAMES, values)]


def stats_to_dict(rows: Iterable[StatRow]) -> dict:
    return {r.name: {"mean": repr(r.mean), "min": repr(r.min),
                     "max": repr(r.max), "sd": repr(r.sd)} for r in rows}


def stats_from_dict(d: dict) -> list[StatRow]:
    return [StatRow(name, float(v["mean"]), float(v["min"]), float(v["max"]),
                    float(v["sd"])) for name, v in d.items()]


def format_stats(rows: Iterable[StatRow]) -> str:
    lines = [f"{'quantity':<12} {'mean':>13} {'min':>13} {'max':>13} {'sd':>13}"]
    for r in rows:
        lines.append(f"{r.name:<12} {r.mean:>13.5g} {r.min:>13.5g} "
                     f"{r.max:>13.5g} {r.sd:>13.5g}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_dataset(ds: Dataset, csv_path: str, metadata_path: str | None = None):
    """Write the dataset CSV (17 significant digits) and its sidecar.

    The sidecar metadata JSON records the generating config, the dataset
    digest, the failure count, and the summary statistics.
    """
    with open(csv_path, "w", newline="") as f:
        f.write(CSV_HEADER + "\n")
        for i in range(len(ds)):
            row = np.concatenate([ds.features[i], ds.labels[i]])
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")
    if metadata_path is None:
        metadata_path = csv_path + ".meta.json"
    meta = {"config": ds.config.to_dict(),
            "digest": ds.digest(),
            "n_samples": len(ds),
            "n_failed_paths": ds.n_failed_paths,
            "stats": stats_to_dict(dataset_stats(ds)) if len(ds) else {}}
    with open(metadata_path, "w") as f:
        json.dump(meta, f, indent=1)


def load_dataset(csv_path: str, config: GenConfig | None = None) -> Dataset:
    """Read a dataset CSV back into arrays (provenance is not stored)."""
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != list(FEATURE_NAMES + LABEL_NAMES):
            raise ValueError(f"unexpected dataset header in {csv_path}")
        rows = [[float(v) for v in row] for row in reader if row]
    arr = np.asarray(rows, dtype=np.float64).reshape(len(rows),
                                                     N_FEATURES + N_LABELS)
    if config is None:
        config = GenConfig(p_grid=(), e_grid=(), tests_per_condition=0,
                           max_steps=1, step_mag_range=(0.0, 0.01),
                           p_bounds=(1.0, 1e5), master_seed=0)
    return Dataset(features=arr[:, :N_FEATURES],
                   labels=arr[:, N_FEATURES:],
                   provenance=np.zeros((len(rows), 3), dtype=np.int64),
                   config=config)


def load_metadata(metadata_path: str) -> dict:
    with open(metadata_path) as f:
        return json.load(f)
