"""Minimal fully-connected network machinery on numpy.

Forward/backward passes, MSE/MAE losses, bias-corrected ADAM, min-max
feature scaling, and a finite-difference gradient checker. Everything is
float64 and single-threaded so training runs are bit-reproducible.

Conventions: batches are row-major (one sample per row), a layer computes
z = a @ W + b, hidden layers carry per-neuron biases, the output layer is
linear and bias-free unless the spec says otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "ACTIVATIONS",
    "MLPSpec",
    "MLPParams",
    "MLPGrads",
    "ForwardCache",
    "AdamState",
    "Scaler",
    "GradCheckResult",
    "layer_dims",
    "init_mlp",
    "forward",
    "backward",
    "loss",
    "loss_grad",
    "adam_init",
    "adam_step",
    "fit_scaler",
    "apply_scaler",
    "invert_scaler",
    "gradient_check",
]


# ---------------------------------------------------------------------------
# activations


def _leaky_relu(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z >= 0.0, z, slope * z)


def _leaky_relu_grad(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z >= 0.0, 1.0, slope)


def _relu(z: np.ndarray, slope: float) -> np.ndarray:
    return np.maximum(z, 0.0)


def _relu_grad(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z >= 0.0, 1.0, 0.0)


def _sigmoid(z: np.ndarray, slope: float) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _sigmoid_grad(z: np.ndarray, slope: float) -> np.ndarray:
    s = _sigmoid(z, slope)
    return s * (1.0 - s)


def _tanh(z: np.ndarray, slope: float) -> np.ndarray:
    return np.tanh(z)


def _tanh_grad(z: np.ndarray, slope: float) -> np.ndarray:
    t = np.tanh(z)
    return 1.0 - t * t


def _elu(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z >= 0.0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_grad(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z >= 0.0, 1.0, np.exp(np.minimum(z, 0.0)))


#: name -> (value, derivative) pairs; derivatives are taken with respect to
#: the pre-activation. relu and leaky_relu have kinks at z = 0, which the
#: gradient checker has to treat specially.
ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "leaky_relu": (_leaky_relu, _leaky_relu_grad),
    "relu": (_relu, _relu_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
    "tanh": (_tanh, _tanh_grad),
    "elu": (_elu, _elu_grad),
}

_KINKY = frozenset({"leaky_relu", "relu"})


# ---------------------------------------------------------------------------
# specs and parameter containers


@dataclass(frozen=True)
class MLPSpec:
    """Shape and activation description of one MLP."""

    input_dim: int
    output_dim: int
    hidden_layers: int
    hidden_width: int
    activation: str = "leaky_relu"
    leaky_slope: float = 0.01
    output_bias: bool = False
    hidden_bias: bool = True

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.output_dim < 1 or self.hidden_width < 1:
            raise ValueError("layer widths must be at least 1")
        if self.hidden_layers < 1:
            raise ValueError("need at least one hidden layer")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must lie in (0, 1)")


def layer_dims(spec: MLPSpec) -> list[int]:
    """Column counts per layer, input first: [in, w, ..., w, out]."""
    return [spec.input_dim] + [spec.hidden_width] * spec.hidden_layers + [spec.output_dim]


@dataclass
class MLPParams:
    """Weight matrices and bias vectors.

    weights[i] maps layer i activations to layer i+1 pre-activations.
    biases lines up with the hidden layers; a trailing output bias is
    appended only when the spec asks for one.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "MLPParams":
        return MLPParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def arrays(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def n_parameters(self) -> int:
        return int(sum(a.size for a in self.arrays()))


@dataclass
class MLPGrads:
    """Loss gradients in MLPParams layout plus the input gradient.

    d_input is what chained models need: the gradient of the scalar loss
    with respect to the network input, one row per sample.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    d_input: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return self.weights + self.biases


def init_mlp(spec: MLPSpec, rng: np.random.Generator) -> MLPParams:
    """Fan-in-scaled symmetric uniform weights, zero biases.

    The half-width sqrt(3/fan_in) gives each weight variance 1/fan_in, so
    pre-activation variance stays level as width grows.
    """
    dims = layer_dims(spec)
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
    biases = []
    if spec.hidden_bias:
        biases = [np.zeros(spec.hidden_width) for _ in range(spec.hidden_layers)]
    if spec.output_bias:
        biases.append(np.zeros(spec.output_dim))
    return MLPParams(weights=weights, biases=biases)


# ---------------------------------------------------------------------------
# forward / backward


@dataclass
class ForwardCache:
    params: MLPParams
    x_was_1d: bool
    activations: list[np.ndarray]  # a^0 = X through a^H
    pre_activations: list[np.ndarray]  # z^1 through z^H (hidden only)
    output: np.ndarray


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    was_1d = arr.ndim == 1
    if was_1d:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"{what} must have {dim} columns, got shape {arr.shape}")
    return arr, was_1d


def forward(
    params: MLPParams, spec: MLPSpec, x: np.ndarray
) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on a sample or a batch.

    Returns the output (matching the input's dimensionality) and a cache
    for backward(). The cache is tied to the exact params object.
    """
    X, was_1d = _as_batch(x, spec.input_dim, "input")
    act, _ = ACTIVATIONS[spec.activation]
    a = X
    acts = [a]
    zs = []
    for i in range(spec.hidden_layers):
        z = a @ params.weights[i]
        if spec.hidden_bias:
            z = z + params.biases[i]
        zs.append(z)
        a = act(z, spec.leaky_slope)
        acts.append(a)
    y = a @ params.weights[-1]
    if spec.output_bias:
        y = y + params.biases[-1]
    cache = ForwardCache(
        params=params, x_was_1d=was_1d, activations=acts,
        pre_activations=zs, output=y,
    )
    return (y[0] if was_1d else y), cache


def backward(
    params: MLPParams, spec: MLPSpec, cache: ForwardCache, dL_dy: np.ndarray
) -> MLPGrads:
    """Reverse-mode gradients of a scalar loss.

    dL_dy is the loss gradient at the network output, one row per sample
    of the forward batch. Raises if the cache came from different params.
    """
    if cache.params is not params:
        raise ValueError("cache does not belong to these parameters")
    delta, _ = _as_batch(dL_dy, spec.output_dim, "upstream gradient")
    if delta.shape[0] != cache.activations[0].shape[0]:
        raise ValueError("upstream gradient batch size does not match cache")
    _, dact = ACTIVATIONS[spec.activation]

    g_weights: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    g_hidden: list[np.ndarray] = []

    g_weights[-1] = cache.activations[-1].T @ delta
    g_out_bias = delta.sum(axis=0) if spec.output_bias else None
    da = delta @ params.weights[-1].T
    for i in range(spec.hidden_layers - 1, -1, -1):
        dz = da * dact(cache.pre_activations[i], spec.leaky_slope)
        g_weights[i] = cache.activations[i].T @ dz
        if spec.hidden_bias:
            g_hidden.append(dz.sum(axis=0))
        da = dz @ params.weights[i].T

    g_biases = list(reversed(g_hidden))
    if g_out_bias is not None:
        g_biases.append(g_out_bias)
    return MLPGrads(weights=g_weights, biases=g_biases, d_input=da)


# ---------------------------------------------------------------------------
# losses


def _loss_arrays(Y: np.ndarray, Ystar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A = np.atleast_2d(np.asarray(Y, dtype=float))
    B = np.atleast_2d(np.asarray(Ystar, dtype=float))
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return A, B


def loss(kind: str, Y: np.ndarray, Ystar: np.ndarray) -> float:
    """MSE or MAE, averaged over samples.

    Per sample the MSE term is the squared euclidean norm of the residual
    and the MAE term is the coordinate-wise absolute sum; the network loss
    averages the per-sample terms.
    """
    A, B = _loss_arrays(Y, Ystar)
    diff = A - B
    if kind == "mse":
        per_sample = np.sum(diff * diff, axis=1)
    elif kind == "mae":
        per_sample = np.sum(np.abs(diff), axis=1)
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    return float(np.mean(per_sample))


def loss_grad(kind: str, Y: np.ndarray, Ystar: np.ndarray) -> np.ndarray:
    """Gradient of loss() with respect to Y, same shape as Y."""
    A, B = _loss_arrays(Y, Ystar)
    diff = A - B
    m = A.shape[0]
    if kind == "mse":
        return 2.0 * diff / m
    if kind == "mae":
        return np.sign(diff) / m
    raise ValueError(f"unknown loss kind {kind!r}")


# ---------------------------------------------------------------------------
# ADAM


@dataclass
class AdamState:
    """First/second moment accumulators in MLPParams layout."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(
    params: MLPParams, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8
) -> AdamState:
    arrays = params.arrays()
    return AdamState(
        m=[np.zeros_like(a) for a in arrays],
        v=[np.zeros_like(a) for a in arrays],
        t=0, beta1=beta1, beta2=beta2, epsilon=epsilon,
    )


def adam_step(
    state: AdamState, params: MLPParams, grads: MLPGrads, lr: float
) -> None:
    """One bias-corrected ADAM update, applied to params in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for slot, (p, g) in enumerate(zip(params.arrays(), grads.arrays())):
        m = state.m[slot]
        v = state.v[slot]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


# ---------------------------------------------------------------------------
# min-max scaling


@dataclass
class Scaler:
    """Per-column min-max normalizer onto [-1, 1].

    Columns that were constant when fitted map to 0 and invert back to the
    constant. Values outside the fit range extrapolate linearly; callers
    that care (the recall loop does) check for |x_norm| > 1 themselves.
    """

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self) -> None:
        self.mins = np.asarray(self.mins, dtype=float).reshape(-1)
        self.maxs = np.asarray(self.maxs, dtype=float).reshape(-1)
        if self.mins.shape != self.maxs.shape:
            raise ValueError("mins and maxs must have the same length")
        if np.any(self.maxs < self.mins):
            raise ValueError("per-column max must be >= min")

    def half_range(self) -> np.ndarray:
        return (self.maxs - self.mins) / 2.0

    def to_dict(self) -> dict:
        return {
            "mins": [repr(float(v)) for v in self.mins],
            "maxs": [repr(float(v)) for v in self.maxs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(
            mins=np.array([float(v) for v in d["mins"]]),
            maxs=np.array([float(v) for v in d["maxs"]]),
        )


def fit_scaler(columns: np.ndarray) -> Scaler:
    X = np.asarray(columns, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need a non-empty 2-D array to fit a scaler")
    return Scaler(mins=X.min(axis=0), maxs=X.max(axis=0))


def apply_scaler(scaler: Scaler, x: np.ndarray) -> np.ndarray:
    """x_norm = 2 (x - min) / (max - min) - 1, constant columns -> 0."""
    X = np.asarray(x, dtype=float)
    span = scaler.maxs - scaler.mins
    safe = np.where(span > 0.0, span, 1.0)
    out = 2.0 * (X - scaler.mins) / safe - 1.0
    return np.where(span > 0.0, out, 0.0)


def invert_scaler(scaler: Scaler, x_norm: np.ndarray) -> np.ndarray:
    Xn = np.asarray(x_norm, dtype=float)
    span = scaler.maxs - scaler.mins
    return np.where(span > 0.0, scaler.mins + (Xn + 1.0) * span / 2.0, scaler.mins)


# ---------------------------------------------------------------------------
# finite-difference verification


class GradCheckResult(NamedTuple):
    max_rel_err: float
    n_checked: int
    n_excluded: int


def _sign_signature(spec: MLPSpec, cache: ForwardCache, Ystar, kind: str):
    """Discrete state of every non-smooth site for one forward evaluation.

    relu/leaky_relu switch branches on the pre-activation sign; MAE
    switches on the residual sign. If a parameter nudge flips any of these
    between the +h and -h evaluations, the central difference straddles a
    kink and says nothing about the analytic gradient there.
    """
    sig = []
    if spec.activation in _KINKY:
        for z in cache.pre_activations:
            sig.append(z > 0.0)
            sig.append(z == 0.0)
    if kind == "mae":
        r = cache.output - Ystar
        sig.append(r > 0.0)
        sig.append(r == 0.0)
    return sig


def _signatures_differ(sig_a, sig_b) -> bool:
    return any(np.any(a != b) for a, b in zip(sig_a, sig_b))


def gradient_check(
    spec: MLPSpec,
    params: MLPParams,
    X: np.ndarray,
    Ystar: np.ndarray,
    kind: str = "mse",
    h: float = 1e-6,
) -> GradCheckResult:
    """Central finite differences against backward(), per parameter.

    Error metric: max |fd - bp| over checked parameters, divided by the
    largest gradient magnitude seen (either side), so it is scale free.
    Parameters whose perturbation flips an activation branch or an MAE
    residual sign are excluded; crossing a kink makes the comparison
    meaningless, not wrong.
    """
    if params.n_parameters() >= 5e4:
        raise ValueError("gradient_check is meant for small nets (< 5e4 parameters)")
    Xb = np.atleast_2d(np.asarray(X, dtype=float))
    Yb = np.atleast_2d(np.asarray(Ystar, dtype=float))

    y0, cache0 = forward(params, spec, Xb)
    grads = backward(params, spec, cache0, loss_grad(kind, y0, Yb))

    fd_list: list[float] = []
    bp_list: list[float] = []
    n_excluded = 0
    for p_arr, g_arr in zip(params.arrays(), grads.arrays()):
        flat_p = p_arr.ravel()
        flat_g = g_arr.ravel()
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + h
            y_p, cache_p = forward(params, spec, Xb)
            flat_p[j] = orig - h
            y_m, cache_m = forward(params, spec, Xb)
            flat_p[j] = orig
            sig_p = _sign_signature(spec, cache_p, Yb, kind)
            sig_m = _sign_signature(spec, cache_m, Yb, kind)
            if _signatures_differ(sig_p, sig_m):
                n_excluded += 1
                continue
            fd_list.append((loss(kind, y_p, Yb) - loss(kind, y_m, Yb)) / (2.0 * h))
            bp_list.append(float(flat_g[j]))

    if not fd_list:
        return GradCheckResult(0.0, 0, n_excluded)
    fd = np.array(fd_list)
    bp = np.array(bp_list)
    denom = max(float(np.max(np.abs(fd))), float(np.max(np.abs(bp))), 1e-300)
    err = float(np.max(np.abs(fd - bp))) / denom
    return GradCheckResult(err, len(fd_list), n_excluded)
