"""Minimal feed-forward network core.

Plain-numpy multilayer perceptrons with ReLU hidden layers and identity
output, mean-squared-error and margin-contrastive losses, an Adam optimizer,
an early-stopping autoencoder trainer, and a finite-difference gradient
checker. Everything is deterministic given a seed; float64 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .binio import (
    Reader,
    pack_f32_array,
    pack_u8,
    pack_u32,
    read_checksummed,
    write_checksummed,
)
from .errors import (
    DivergenceError,
    InsufficientDataError,
    InvalidCatalogError,
    InvalidParameterError,
    ShapeError,
)

AFNN_MAGIC = b"AFNN"
AFNN_VERSION = 1

RELU = "relu"
IDENTITY = "identity"
_ACTIVATIONS = (RELU, IDENTITY)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class MLPParams:
    """Weights and biases of a fully-connected network.

    ``weights[i]`` has shape (layer_sizes[i], layer_sizes[i+1]); hidden layers
    use ``activation``, the final layer is always identity.
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = RELU

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ShapeError("need at least an input and an output layer")
        if any(int(s) <= 0 for s in self.layer_sizes):
            raise ShapeError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.activation not in _ACTIVATIONS:
            raise InvalidParameterError(f"unknown activation {self.activation!r}")
        n_layers = len(self.layer_sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ShapeError("weights/biases count does not match layer sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != expected:
                raise ShapeError(f"layer {i} weight shape {w.shape}, expected {expected}")
            if b.shape != (self.layer_sizes[i + 1],):
                raise ShapeError(f"layer {i} bias shape {b.shape}, expected ({expected[1]},)")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise InvalidParameterError(f"layer {i} contains non-finite parameters")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def param_list(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (weights then biases)."""
        return list(self.weights) + list(self.biases)

    def copy(self) -> "MLPParams":
        return MLPParams(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
        )


@dataclass
class MLPGrads:
    """Parameter gradients mirroring :class:`MLPParams` layout."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def param_list(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)


def init_mlp(layer_sizes: list[int], rng: np.random.Generator, activation: str = RELU) -> MLPParams:
    """Initialize with fan-in-scaled uniform weights and zero biases."""
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPParams(list(layer_sizes), weights, biases, activation)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def _as_batch(params: MLPParams, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.layer_sizes[0]:
        raise ShapeError(
            f"input has shape {x.shape}, expected (*, {params.layer_sizes[0]})"
        )
    return x, single


def mlp_forward(params: MLPParams, x: np.ndarray) -> np.ndarray:
    """Forward pass; accepts a vector or a (batch, dim) matrix."""
    out, _ = mlp_forward_cached(params, x)
    if np.asarray(x).ndim == 1:
        return out[0]
    return out


def mlp_forward_cached(params: MLPParams, x: np.ndarray):
    """Forward pass returning (output, cache) for use with :func:`mlp_backward`."""
    h, _ = _as_batch(params, x)
    cache = []
    for i in range(params.n_layers):
        z = h @ params.weights[i] + params.biases[i]
        cache.append((h, z))
        if i < params.n_layers - 1 and params.activation == RELU:
            h = np.maximum(z, 0.0)
        else:
            h = z
    return h, cache


def mlp_backward(params: MLPParams, cache, grad_out: np.ndarray) -> tuple[MLPGrads, np.ndarray]:
    """Backpropagate ``grad_out`` (same shape as the forward output).

    Returns parameter gradients and the gradient with respect to the input.
    """
    grad = np.asarray(grad_out, dtype=np.float64)
    if grad.ndim == 1:
        grad = grad[None, :]
    g_weights = [None] * params.n_layers
    g_biases = [None] * params.n_layers
    for i in reversed(range(params.n_layers)):
        h_in, z = cache[i]
        if i < params.n_layers - 1 and params.activation == RELU:
            grad = grad * (z > 0.0)
        g_weights[i] = h_in.T @ grad
        g_biases[i] = grad.sum(axis=0)
        grad = grad @ params.weights[i].T
    return MLPGrads(g_weights, g_biases), grad


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def mse_loss(prediction: np.ndarray, target: np.ndarray) -> float:
    """Mean of squared componentwise differences."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ShapeError(f"prediction shape {prediction.shape} != target shape {target.shape}")
    diff = prediction - target
    return float(np.mean(diff * diff))


def contrastive_pair_loss(z_i: np.ndarray, z_j: np.ndarray, s_ij: float, margin: float) -> float:
    """Margin-contrastive loss for one pair: S d^2 + (1 - S) max(0, m - d)^2."""
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if z_i.shape != z_j.shape:
        raise ShapeError(f"embedding shapes differ: {z_i.shape} vs {z_j.shape}")
    if not margin > 0.0:
        raise InvalidParameterError(f"margin must be > 0, got {margin!r}")
    if not 0.0 <= s_ij <= 1.0:
        raise InvalidParameterError(f"similarity target must lie in [0, 1], got {s_ij!r}")
    d = float(np.linalg.norm(z_i - z_j))
    hinge = max(0.0, margin - d)
    return s_ij * d * d + (1.0 - s_ij) * hinge * hinge


def contrastive_pair_grad(
    z_i: np.ndarray, z_j: np.ndarray, s_ij: float, margin: float
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`contrastive_pair_loss` w.r.t. both embeddings.

    At d = 0 the margin term is non-smooth; the zero subgradient is used.
    """
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    diff = z_i - z_j
    d = float(np.linalg.norm(diff))
    coef = 2.0 * s_ij
    if 0.0 < d < margin:
        coef -= 2.0 * (1.0 - s_ij) * (margin - d) / d
    g_i = coef * diff
    return g_i, -g_i


def weighted_pair_loss(loss: float, lambda_i: float, lambda_j: float) -> float:
    """Scale a pair loss by the product of its samples' modality weights."""
    return lambda_i * lambda_j * loss


def modality_weights(n_music: int, n_paintings: int) -> tuple[float, float]:
    """Imbalance weights: each modality weighted by the other's share of items."""
    if n_music <= 0 or n_paintings <= 0:
        raise InvalidCatalogError(
            f"both modalities need items, got {n_music} music / {n_paintings} paintings"
        )
    total = n_music + n_paintings
    return n_paintings / total, n_music / total


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    """Adam accumulators; one first/second moment array per parameter array."""

    step_size: float
    beta1: float
    beta2: float
    epsilon: float
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


def init_adam(
    params: list[np.ndarray],
    step_size: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> OptimizerState:
    if step_size <= 0.0:
        raise InvalidParameterError(f"step_size must be > 0, got {step_size!r}")
    if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
        raise InvalidParameterError("beta1/beta2 must lie in (0, 1)")
    if epsilon <= 0.0:
        raise InvalidParameterError(f"epsilon must be > 0, got {epsilon!r}")
    return OptimizerState(
        step_size=step_size,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        step=0,
    )


def optimizer_step(params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState) -> None:
    """One Adam update with bias correction; mutates ``params`` and ``state``."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ShapeError("parameter/gradient/state counts do not match")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        p -= state.step_size * m_hat / (np.sqrt(v_hat) + state.epsilon)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    max_epochs: int = 50
    patience: int = 5
    batch_size: int = 64
    rng_seed: int = 0
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.max_epochs <= 0 or self.patience <= 0 or self.batch_size <= 0:
            raise InvalidParameterError("max_epochs, patience and batch_size must be positive")
        if self.patience > self.max_epochs:
            raise InvalidParameterError("patience must be <= max_epochs")
        if not 0.0 < self.validation_fraction < 1.0:
            raise InvalidParameterError("validation_fraction must lie in (0, 1)")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


def _split_indices(n: int, fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = max(1, int(round(fraction * n)))
    if n_val >= n:
        raise InsufficientDataError(f"cannot hold out {n_val} of {n} rows for validation")
    return perm[n_val:], perm[:n_val]


def train_autoencoder(
    data: np.ndarray,
    layers: list[int],
    config: TrainConfig,
    eta: float = 1e-3,
    min_delta: float = 0.0,
) -> tuple[MLPParams, MLPParams, list[EpochStats]]:
    """Train an encoder/decoder pair minimizing reconstruction MSE.

    ``layers`` lists the encoder sizes starting at the data dimension; the
    decoder mirrors them. Stops early after ``config.patience`` epochs without
    validation improvement (beyond ``min_delta``) and restores the best
    parameters seen.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeError(f"data must be 2-D, got shape {data.shape}")
    n, dim = data.shape
    if layers[0] != dim:
        raise ShapeError(f"layers start at {layers[0]} but data dimension is {dim}")
    if n < 2 * config.batch_size:
        raise InsufficientDataError(
            f"{n} rows is too few for batch size {config.batch_size} (need >= {2 * config.batch_size})"
        )

    rng = np.random.default_rng(config.rng_seed)
    train_idx, val_idx = _split_indices(n, config.validation_fraction, rng)
    encoder = init_mlp(list(layers), rng)
    decoder = init_mlp(list(reversed(layers)), rng)
    params = encoder.param_list() + decoder.param_list()
    state = init_adam(params, step_size=eta)

    x_val = data[val_idx]
    history: list[EpochStats] = []
    best_val = math.inf
    best_snapshot = None
    epochs_since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_idx))
        sq_error_sum = 0.0
        n_seen = 0
        for start in range(0, len(order), config.batch_size):
            batch = data[train_idx[order[start : start + config.batch_size]]]
            code, enc_cache = mlp_forward_cached(encoder, batch)
            recon, dec_cache = mlp_forward_cached(decoder, code)
            diff = recon - batch
            loss = float(np.mean(diff * diff))
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            sq_error_sum += loss * batch.size
            n_seen += batch.size
            grad_recon = 2.0 * diff / diff.size
            dec_grads, grad_code = mlp_backward(decoder, dec_cache, grad_recon)
            enc_grads, _ = mlp_backward(encoder, enc_cache, grad_code)
            optimizer_step(params, enc_grads.param_list() + dec_grads.param_list(), state)

        val_recon = mlp_forward(decoder, mlp_forward(encoder, x_val))
        val_loss = mse_loss(val_recon, x_val)
        if not math.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        history.append(EpochStats(epoch, sq_error_sum / n_seen, val_loss))

        if val_loss < best_val - min_delta:
            best_val = val_loss
            best_snapshot = (encoder.copy(), decoder.copy())
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                break

    if best_snapshot is not None:
        encoder, decoder = best_snapshot
    return encoder, decoder, history


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

@dataclass
class GradientCheckReport:
    max_rel_error: float
    per_param: list[float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(
    value_and_grad,
    params: list[np.ndarray],
    tolerance: float = 1e-4,
    step: float = 1e-6,
) -> GradientCheckReport:
    """Compare analytic gradients against central finite differences.

    ``value_and_grad(params)`` must return ``(loss, grads)`` with ``grads``
    a list of arrays matching ``params``. Report-only: never raises on
    mismatch.
    """
    params = [np.asarray(p, dtype=np.float64) for p in params]
    loss, grads = value_and_grad(params)
    if not math.isfinite(float(loss)):
        raise InvalidParameterError("loss must be finite at the checked point")
    per_param = []
    max_err = 0.0
    for k, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"gradient {k} shape {g.shape} != parameter shape {p.shape}")
        worst = 0.0
        flat = p.reshape(-1)
        g_flat = g.reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + step
            up = float(value_and_grad(params)[0])
            flat[idx] = original - step
            down = float(value_and_grad(params)[0])
            flat[idx] = original
            numeric = (up - down) / (2.0 * step)
            analytic = g_flat[idx]
            scale = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / scale)
        per_param.append(worst)
        max_err = max(max_err, worst)
    return GradientCheckReport(max_rel_error=max_err, per_param=per_param, tolerance=tolerance)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_mlp(params: MLPParams, path) -> None:
    """Write an AFNN checkpoint (f32 weights, trailing 64-bit checksum)."""
    if params.activation != RELU:
        raise InvalidParameterError("checkpoint format assumes relu hidden activation")
    chunks = [AFNN_MAGIC, pack_u8(AFNN_VERSION), pack_u32(len(params.layer_sizes))]
    for size in params.layer_sizes:
        chunks.append(pack_u32(size))
    for w, b in zip(params.weights, params.biases):
        chunks.append(pack_f32_array(w))
        chunks.append(pack_f32_array(b))
    write_checksummed(path, b"".join(chunks))


def load_mlp(path) -> MLPParams:
    """Read an AFNN checkpoint; raises IntegrityError on corruption."""
    payload = read_checksummed(path, AFNN_MAGIC)
    reader = Reader(payload[len(AFNN_MAGIC):], context=str(path))
    version = reader.u8()
    if version != AFNN_VERSION:
        raise IntegrityError(f"{path}: unsupported AFNN version {version}")
    n_sizes = reader.u32()
    sizes = [reader.u32() for _ in range(n_sizes)]
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(reader.f32_array((fan_in, fan_out)).astype(np.float64))
        biases.append(reader.f32_array((fan_out,)).astype(np.float64))
    reader.expect_end()
    return MLPParams(sizes, weights, biases, RELU)
