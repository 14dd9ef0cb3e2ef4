"""Feedforward compensator network and its Levenberg-Marquardt trainer.

Network: 6 -> 20 -> 20 -> 2, positive-linear (max(0, x)) hidden units and a
linear output layer. Inputs are ordered (psi_a, theta_m, psi_a_dot,
theta_m_dot, psi_a_ddot, theta_m_ddot) and outputs are the compensatory
accelerations (d_psi_a_ddot, d_theta_m_ddot). Inputs are standardized and
outputs de-standardized with statistics frozen into the network.

Serialized layout (little endian)::

    b"GMLP"  uint32 version=1  uint32 n_layers+1  uint32 sizes[n_layers+1]
    float64 x_mean[in] x_std[in] y_mean[out] y_std[out]
    per layer: float64 W[out, in] (row-major), float64 b[out]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, NumericError

LAYER_SIZES = (6, 20, 20, 2)
_MAGIC = b"GMLP"


@dataclass
class Mlp:
    weights: list
    biases: list
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    def __post_init__(self):
        self.weights = [np.array(w, dtype=float) for w in self.weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in self.biases]
        for name in ("x_mean", "x_std", "y_mean", "y_std"):
            setattr(self, name, np.array(getattr(self, name), dtype=float).reshape(-1))
        sizes = self.sizes
        for w, b, n_in, n_out in zip(self.weights, self.biases, sizes[:-1], sizes[1:]):
            if w.shape != (n_out, n_in) or b.shape != (n_out,):
                raise InvalidInputError(f"inconsistent layer shapes {w.shape}, {b.shape}")
        if self.x_mean.shape != (sizes[0],) or self.x_std.shape != (sizes[0],):
            raise InvalidInputError("input normalization has wrong size")
        if self.y_mean.shape != (sizes[-1],) or self.y_std.shape != (sizes[-1],):
            raise InvalidInputError("output normalization has wrong size")
        if np.any(self.x_std <= 0) or np.any(self.y_std <= 0):
            raise InvalidInputError("normalization scales must be positive")
        if not np.all(np.isfinite(self.flat_params())):
            raise InvalidInputError("network parameters must be finite")

    @property
    def sizes(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @classmethod
    def zeros(cls, sizes=LAYER_SIZES) -> "Mlp":
        return cls([np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(o) for o in sizes[1:]],
                   np.zeros(sizes[0]), np.ones(sizes[0]), np.zeros(sizes[-1]), np.ones(sizes[-1]))

    @classmethod
    def random(cls, seed: int, sizes=LAYER_SIZES, inputs=None, targets=None) -> "Mlp":
        """Seeded init, uniform in [-0.5, 0.5] / sqrt(fan_in); normalization from data if given."""
        rng = np.random.default_rng(seed)
        weights = [rng.uniform(-0.5, 0.5, (o, i)) / np.sqrt(i) for i, o in zip(sizes[:-1], sizes[1:])]
        biases = [rng.uniform(-0.5, 0.5, o) / np.sqrt(i) for i, o in zip(sizes[:-1], sizes[1:])]
        x_mean, x_std = _stats(inputs, sizes[0], 1.0)
        # Constant targets: a unit output scale would leave the untrained spread in the fit.
        y_mean, y_std = _stats(targets, sizes[-1], 1e-9)
        return cls(weights, biases, x_mean, x_std, y_mean, y_std)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def with_params(self, flat) -> "Mlp":
        flat = np.asarray(flat, dtype=float)
        weights, biases, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[k:k + w.size].reshape(w.shape))
            k += w.size
            biases.append(flat[k:k + b.size].copy())
            k += b.size
        if k != flat.size:
            raise InvalidInputError(f"expected {k} parameters, got {flat.size}")
        return Mlp(weights, biases, self.x_mean, self.x_std, self.y_mean, self.y_std)

    def to_bytes(self) -> bytes:
        sizes = self.sizes
        head = _MAGIC + struct.pack(f"<II{len(sizes)}I", 1, len(sizes), *sizes)
        blocks = [self.x_mean, self.x_std, self.y_mean, self.y_std]
        for w, b in zip(self.weights, self.biases):
            blocks += [w.ravel(), b]
        return head + np.concatenate(blocks).astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Mlp":
        if data[:4] != _MAGIC:
            raise InvalidInputError("not a serialized network (bad magic)")
        version, n = struct.unpack_from("<II", data, 4)
        if version != 1:
            raise InvalidInputError(f"unsupported network format version {version}")
        sizes = struct.unpack_from(f"<{n}I", data, 12)
        values = np.frombuffer(data, dtype="<f8", offset=12 + 4 * n).astype(float)
        n_in, n_out = sizes[0], sizes[-1]
        k = 0

        def take(count):
            nonlocal k
            out = values[k:k + count]
            k += count
            return out

        x_mean, x_std, y_mean, y_std = take(n_in), take(n_in), take(n_out), take(n_out)
        weights, biases = [], []
        for i, o in zip(sizes[:-1], sizes[1:]):
            weights.append(take(o * i).reshape(o, i))
            biases.append(take(o))
        if k != values.size:
            raise InvalidInputError("serialized network has trailing or missing data")
        return cls(weights, biases, x_mean, x_std, y_mean, y_std)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Mlp":
        return cls.from_bytes(Path(path).read_bytes())


def _stats(data, width, degenerate_scale):
    if data is None:
        return np.zeros(width), np.ones(width)
    data = np.asarray(data, dtype=float)
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    std[std < 1e-12] = degenerate_scale
    return mean, std


def _forward_batch(net: Mlp, x: np.ndarray):
    """Returns outputs (N, out) plus cached pre-activations and activations."""
    a = (x - net.x_mean) / net.x_std
    acts, pres = [a], []
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        pres.append(z)
        a = z if k == last else np.maximum(z, 0.0)
        acts.append(a)
    return a * net.y_std + net.y_mean, pres, acts


def mlp_forward_batch(net: Mlp, x) -> np.ndarray:
    return _forward_batch(net, np.atleast_2d(np.asarray(x, dtype=float)))[0]


def mlp_forward(net: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (net.sizes[0],) or not np.all(np.isfinite(x)):
        raise InvalidInputError(f"network input must be a finite {net.sizes[0]}-vector")
    return mlp_forward_batch(net, x)[0]


def mlp_jacobian_batch(net: Mlp, x) -> np.ndarray:
    """d outputs / d params for each sample, shape (N, n_out, n_params).

    Parameter order matches Mlp.flat_params. The positive-linear derivative
    at exactly zero is taken as 0.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, pres, acts = _forward_batch(net, x)
    n, n_out = len(x), net.sizes[-1]
    # delta[s, k, j]: d output_k / d pre-activation_j of the current layer
    delta = np.broadcast_to(np.diag(net.y_std), (n, n_out, n_out))
    blocks = []
    for layer in range(len(net.weights) - 1, -1, -1):
        a_in = acts[layer]
        dw = delta[:, :, :, None] * a_in[:, None, None, :]
        blocks.append(np.concatenate([dw.reshape(n, n_out, -1), delta], axis=2))
        if layer:
            delta = (delta @ net.weights[layer]) * (pres[layer - 1] > 0.0)[:, None, :]
    return np.concatenate(blocks[::-1], axis=2)


def mlp_jacobian(net: Mlp, x) -> np.ndarray:
    """Jacobian of both outputs w.r.t. all parameters at one input, shape (n_out, n_params)."""
    return mlp_jacobian_batch(net, np.asarray(x, dtype=float).reshape(1, -1))[0]


def nn_compensate(net: Mlp, plant_kinematics) -> np.ndarray:
    """Compensatory acceleration from (psi, theta, psi_dot, theta_dot, psi_ddot, theta_ddot)."""
    return mlp_forward(net, plant_kinematics)


@dataclass(frozen=True)
class LmConfig:
    mu0: float = 1e-3
    mu_up: float = 10.0
    mu_down: float = 10.0
    max_iter: int = 200
    target_mse: float = 1e-8
    step_tol: float = 1e-10
    mu_min: float = 1e-12
    mu_max: float = 1e12

    def __post_init__(self):
        if not self.mu0 > 0:
            raise InvalidInputError("mu0 must be positive")
        if not (self.mu_up > 1 and self.mu_down > 1):
            raise InvalidInputError("damping factors must exceed 1")
        if not (self.max_iter > 0 and self.target_mse >= 0 and self.step_tol > 0):
            raise InvalidInputError("LM limits must be positive")
        if not 0 < self.mu_min < self.mu_max:
            raise InvalidInputError("need 0 < mu_min < mu_max")


@dataclass
class TrainingSet:
    inputs: np.ndarray
    targets: np.ndarray
    t_span: tuple = (0.0, 0.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if len(self.inputs) != len(self.targets):
            raise InvalidInputError("inputs and targets must have equal row counts")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise InvalidInputError("training data must be finite")

    def __len__(self):
        return len(self.inputs)

    def subsample(self, stride: int) -> "TrainingSet":
        return TrainingSet(self.inputs[::stride], self.targets[::stride], self.t_span,
                           dict(self.meta, stride=stride))


@dataclass
class LmResult:
    net: Mlp
    history: list          # MSE after every accepted step (entry 0 = initial)
    iterations: int
    reason: str


def lm_train(net: Mlp, data: TrainingSet, config: LmConfig = LmConfig()) -> LmResult:
    """Full-batch Levenberg-Marquardt on the sum of squared output errors."""
    if len(data) == 0:
        raise InvalidInputError("empty training set")
    x, y = data.inputs, data.targets
    params = net.flat_params()
    n_res = y.size

    def residual(p_net):
        return (y - mlp_forward_batch(p_net, x)).ravel()

    err = residual(net)
    sse = float(err @ err)
    history = [sse / n_res]
    mu = config.mu0
    eye = np.eye(params.size)
    reason = "max_iter"
    it = 0
    for it in range(1, config.max_iter + 1):
        if history[-1] <= config.target_mse:
            reason, it = "target_mse", it - 1
            break
        jac = mlp_jacobian_batch(net, x).reshape(n_res, -1)
        grad = jac.T @ err
        hess = jac.T @ jac
        while True:
            try:
                step = np.linalg.solve(hess + mu * eye, grad)
            except np.linalg.LinAlgError as exc:
                raise NumericError(f"singular LM normal equations at mu={mu:g}") from exc
            trial = net.with_params(params + step)
            trial_err = residual(trial)
            trial_sse = float(trial_err @ trial_err)
            if trial_sse < sse:
                net, params, err, sse = trial, params + step, trial_err, trial_sse
                history.append(sse / n_res)
                mu = max(mu / config.mu_down, config.mu_min)
                break
            mu *= config.mu_up
            if mu > config.mu_max:
                break
        if mu > config.mu_max:
            reason = "mu_max"
            break
        if np.linalg.norm(step) < config.step_tol:
            reason = "step_tol"
            break
    if not np.isfinite(sse):
        raise NumericError("LM training diverged", history)
    return LmResult(net, history, it, reason)


def build_dataset(log, stride: int = 1) -> TrainingSet:
    """Training rows from a closed-loop ADRC run.

    inputs: plant (angles, rates, measured accelerations); targets:
    commanded acceleration minus the acceleration the plant realized.
    """
    if log is None or len(log.t) == 0:
        raise InvalidInputError("empty controller log")
    inputs = np.column_stack([log.q, log.q_dot, log.acc_fb])
    targets = log.u_cmd - log.acc
    data = TrainingSet(inputs, targets, (float(log.t[0]), float(log.t[-1])),
                       {"dt": log.dt, "rows": len(log.t)})
    return data.subsample(stride) if stride > 1 else data
