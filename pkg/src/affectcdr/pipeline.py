"""Preprocessing pipeline: autoencoder reduction, V-A enrichment, contrastive
projection into the joint space, and bundle persistence.

Produces everything the retrieval engines consume: V-A tables, 128D joint
embeddings (contrastive alignment), 256D composed embeddings (cosine
retrieval), and raw painting features (visual baseline).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .binio import file_checksum_hex
from .catalog import Catalog, EmbeddingMatrix, ScalerParams, load_matrix, minmax_scale, save_matrix
from .errors import (
    DivergenceError,
    InsufficientDataError,
    IntegrityError,
    InvalidCatalogError,
    InvalidParameterError,
    ShapeError,
)
from .neural import (
    EpochStats,
    MLPParams,
    TrainConfig,
    init_adam,
    init_mlp,
    load_mlp,
    mlp_backward,
    mlp_forward,
    mlp_forward_cached,
    modality_weights,
    optimizer_step,
    save_mlp,
    train_autoencoder,
)

CODE_DIM = 256
ENRICHED_DIM = CODE_DIM + 2
JOINT_DIM = 128
PROJECTION_LAYERS = [ENRICHED_DIM, 256, JOINT_DIM]

BUNDLE_MANIFEST = "bundle.json"
MATRIX_NAMES = (
    "joint_music",
    "joint_paintings",
    "salieri_music",
    "salieri_paintings",
    "visual_paintings",
)


@dataclass
class PreprocessConfig:
    seed: int = 0
    sigma: float = 0.5
    margin: float = 0.5
    ae_hidden: tuple[int, ...] = (1024, 512)
    max_epochs: int = 50
    patience: int = 5
    batch_size: int = 64
    validation_fraction: float = 0.1
    eta: float = 1e-3


@dataclass
class PreprocessedBundle:
    music_ids: list[str]
    painting_ids: list[str]
    va_music: np.ndarray
    va_paintings: np.ndarray
    joint_music: np.ndarray | None = None
    joint_paintings: np.ndarray | None = None
    salieri_music: np.ndarray | None = None
    salieri_paintings: np.ndarray | None = None
    visual_paintings: np.ndarray | None = None
    scalers: dict[str, ScalerParams] = field(default_factory=dict)
    checkpoints: dict[str, MLPParams] = field(default_factory=dict)
    histories: dict[str, list[EpochStats]] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def stage(self, name: str) -> EmbeddingMatrix:
        """A named pipeline stage as an id-aligned, stage-tagged matrix."""
        stages = {
            "va_music": (self.music_ids, self.va_music),
            "va_paintings": (self.painting_ids, self.va_paintings),
            "joint_music": (self.music_ids, self.joint_music),
            "joint_paintings": (self.painting_ids, self.joint_paintings),
            "salieri_music": (self.music_ids, self.salieri_music),
            "salieri_paintings": (self.painting_ids, self.salieri_paintings),
            "visual_paintings": (self.painting_ids, self.visual_paintings),
        }
        if name not in stages:
            raise InvalidParameterError(f"unknown stage {name!r}; options: {sorted(stages)}")
        ids, values = stages[name]
        if values is None:
            raise InvalidParameterError(f"stage {name!r} is not present in this bundle")
        return EmbeddingMatrix(ids=list(ids), values=values, stage=name)


def _stage_seed(seed: int, stage: int) -> int:
    return int(np.random.SeedSequence([seed, stage]).generate_state(1)[0])


def _pair_targets(va: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian-kernel similarity targets from pairwise V-A distances."""
    dv = va[:, None, 0] - va[None, :, 0]
    da = va[:, None, 1] - va[None, :, 1]
    d_sq = dv * dv + da * da
    return np.exp(-d_sq / (2.0 * sigma * sigma))


def _pair_loss_and_coef(
    z: np.ndarray, s: np.ndarray, w: np.ndarray, margin: float
) -> tuple[float, np.ndarray]:
    """Weighted contrastive loss over all unordered pairs in a batch.

    Returns the mean pair loss and the symmetric coefficient matrix C with
    grad_i = sum_j C_ij (z_i - z_j). The margin term's zero subgradient is
    used for coincident embeddings.
    """
    n = z.shape[0]
    n_pairs = n * (n - 1) // 2
    diff = z[:, None, :] - z[None, :, :]
    d_sq = np.einsum("ijk,ijk->ij", diff, diff)
    d = np.sqrt(d_sq)
    hinge = np.maximum(0.0, margin - d)
    pair_loss = s * d_sq + (1.0 - s) * hinge * hinge
    np.fill_diagonal(pair_loss, 0.0)
    loss = float(np.sum(np.triu(w * pair_loss, k=1)) / n_pairs)

    safe_d = np.where(d > 0.0, d, 1.0)
    coef = 2.0 * w * (s - (1.0 - s) * np.where(d > 0.0, hinge / safe_d, 0.0)) / n_pairs
    np.fill_diagonal(coef, 0.0)
    return loss, coef


def _pair_grad(z: np.ndarray, coef: np.ndarray) -> np.ndarray:
    return coef.sum(axis=1, keepdims=True) * z - coef @ z


def _full_pair_loss(
    z: np.ndarray, va: np.ndarray, lam: np.ndarray, sigma: float, margin: float
) -> float:
    s = _pair_targets(va, sigma)
    w = np.outer(lam, lam)
    loss, _ = _pair_loss_and_coef(z, s, w, margin)
    return loss


def train_mozart_projection(
    enriched_music: np.ndarray,
    enriched_paintings: np.ndarray,
    sigma: float,
    margin: float,
    lambda_music: float,
    lambda_painting: float,
    config: TrainConfig,
    eta: float = 1e-3,
    min_delta: float = 0.0,
) -> tuple[MLPParams, list[EpochStats]]:
    """Train the projection head mapping enriched embeddings into joint space.

    Pair targets come from the Gaussian kernel over the V-A coordinates
    stored in the last two columns of the enriched embeddings; each pair is
    weighted by the product of its samples' modality weights. Batches are
    stratified half/half across modalities.
    """
    em = np.asarray(enriched_music, dtype=np.float64)
    ep = np.asarray(enriched_paintings, dtype=np.float64)
    for name, mat in (("music", em), ("paintings", ep)):
        if mat.ndim != 2 or mat.shape[1] != ENRICHED_DIM:
            raise ShapeError(f"enriched {name} must be (*, {ENRICHED_DIM}), got {mat.shape}")
    if em.shape[0] < 2 or ep.shape[0] < 2:
        raise InsufficientDataError("need at least 2 items per modality to form pairs")

    rng = np.random.default_rng(config.rng_seed)
    perm_m = rng.permutation(em.shape[0])
    perm_p = rng.permutation(ep.shape[0])
    n_val_m = max(1, int(round(config.validation_fraction * em.shape[0])))
    n_val_p = max(1, int(round(config.validation_fraction * ep.shape[0])))
    if n_val_m >= em.shape[0] or n_val_p >= ep.shape[0]:
        raise InsufficientDataError("validation split leaves no training items")
    val = np.vstack([em[perm_m[:n_val_m]], ep[perm_p[:n_val_p]]])
    val_lam = np.concatenate(
        [np.full(n_val_m, lambda_music), np.full(n_val_p, lambda_painting)]
    )
    train_m = em[perm_m[n_val_m:]]
    train_p = ep[perm_p[n_val_p:]]

    head = init_mlp(list(PROJECTION_LAYERS), rng)
    params = head.param_list()
    state = init_adam(params, step_size=eta)

    half = max(1, config.batch_size // 2)
    n_batches = max(1, math.ceil((len(train_m) + len(train_p)) / (2 * half)))
    history: list[EpochStats] = []
    best_val = math.inf
    best_head = None
    since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order_m = rng.permutation(len(train_m))
        order_p = rng.permutation(len(train_p))
        epoch_loss = 0.0
        for b in range(n_batches):
            take_m = np.take(order_m, np.arange(b * half, (b + 1) * half), mode="wrap")
            take_p = np.take(order_p, np.arange(b * half, (b + 1) * half), mode="wrap")
            batch = np.vstack([train_m[take_m], train_p[take_p]])
            lam = np.concatenate(
                [np.full(len(take_m), lambda_music), np.full(len(take_p), lambda_painting)]
            )
            z, cache = mlp_forward_cached(head, batch)
            s = _pair_targets(batch[:, -2:], sigma)
            w = np.outer(lam, lam)
            loss, coef = _pair_loss_and_coef(z, s, w, margin)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite contrastive loss at epoch {epoch}")
            epoch_loss += loss
            grads, _ = mlp_backward(head, cache, _pair_grad(z, coef))
            optimizer_step(params, grads.param_list(), state)

        z_val = mlp_forward(head, val)
        val_loss = _full_pair_loss(z_val, val[:, -2:], val_lam, sigma, margin)
        if not math.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        history.append(EpochStats(epoch, epoch_loss / n_batches, val_loss))

        if val_loss < best_val - min_delta:
            best_val = val_loss
            best_head = head.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    return (best_head if best_head is not None else head), history


def _train_config(config: PreprocessConfig, n_rows: int, stage: int) -> TrainConfig:
    batch = max(1, min(config.batch_size, n_rows // 2))
    return TrainConfig(
        max_epochs=config.max_epochs,
        patience=config.patience,
        batch_size=batch,
        rng_seed=_stage_seed(config.seed, stage),
        validation_fraction=config.validation_fraction,
    )


def preprocess_cdr(catalog: Catalog, config: PreprocessConfig | None = None) -> PreprocessedBundle:
    """Run the full preprocessing pipeline over a catalog.

    Per modality: autoencode raw features to 256D, min-max scale, concatenate
    the raw V-A values (258D), and project to the 128D joint space with the
    weighted contrastive objective. Separately-trained autoencoders produce
    the 256D composed embeddings used for cosine retrieval. Deterministic
    given ``config.seed``.
    """
    config = config or PreprocessConfig()
    if catalog.n_music < 2 or catalog.n_paintings < 2:
        raise InvalidCatalogError(
            f"need at least 2 items per modality, got {catalog.n_music} music"
            f" / {catalog.n_paintings} paintings"
        )

    x_music = catalog.feature_matrix("music")
    x_paintings = catalog.feature_matrix("painting")
    va_music = catalog.va_matrix("music")
    va_paintings = catalog.va_matrix("painting")

    checkpoints: dict[str, MLPParams] = {}
    histories: dict[str, list[EpochStats]] = {}

    def reduce(name: str, x: np.ndarray, stage: int) -> np.ndarray:
        layers = [x.shape[1], *config.ae_hidden, CODE_DIM]
        encoder, decoder, history = train_autoencoder(
            x, layers, _train_config(config, x.shape[0], stage), eta=config.eta
        )
        checkpoints[f"{name}_encoder"] = encoder
        checkpoints[f"{name}_decoder"] = decoder
        histories[name] = history
        return mlp_forward(encoder, x)

    codes_music = reduce("ae_music", x_music, stage=1)
    codes_paintings = reduce("ae_paintings", x_paintings, stage=2)

    scaled_music, scaler_music = minmax_scale(codes_music)
    scaled_paintings, scaler_paintings = minmax_scale(codes_paintings)
    enriched_music = np.hstack([scaled_music, va_music])
    enriched_paintings = np.hstack([scaled_paintings, va_paintings])

    lambda_music, lambda_painting = modality_weights(catalog.n_music, catalog.n_paintings)
    head, head_history = train_mozart_projection(
        enriched_music,
        enriched_paintings,
        sigma=config.sigma,
        margin=config.margin,
        lambda_music=lambda_music,
        lambda_painting=lambda_painting,
        config=_train_config(config, catalog.n_music + catalog.n_paintings, stage=3),
        eta=config.eta,
    )
    checkpoints["projection"] = head
    histories["projection"] = head_history

    salieri_music = reduce("salieri_music", x_music, stage=4)
    salieri_paintings = reduce("salieri_paintings", x_paintings, stage=5)

    provenance = {
        "seed": config.seed,
        "sigma": config.sigma,
        "margin": config.margin,
        "ae_hidden": list(config.ae_hidden),
        "max_epochs": config.max_epochs,
        "patience": config.patience,
        "batch_size": config.batch_size,
        "eta": config.eta,
        "n_music": catalog.n_music,
        "n_paintings": catalog.n_paintings,
        "feature_dim_music": int(x_music.shape[1]),
        "feature_dim_paintings": int(x_paintings.shape[1]),
        "lambda_music": lambda_music,
        "lambda_painting": lambda_painting,
        "catalog_provenance": {
            k: v for k, v in catalog.provenance.items() if k != "loaded_at"
        },
    }

    return PreprocessedBundle(
        music_ids=catalog.ids("music"),
        painting_ids=catalog.ids("painting"),
        va_music=va_music,
        va_paintings=va_paintings,
        joint_music=mlp_forward(head, enriched_music),
        joint_paintings=mlp_forward(head, enriched_paintings),
        salieri_music=salieri_music,
        salieri_paintings=salieri_paintings,
        visual_paintings=x_paintings,
        scalers={"mozart_music": scaler_music, "mozart_paintings": scaler_paintings},
        checkpoints=checkpoints,
        histories=histories,
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_bundle(bundle: PreprocessedBundle, out_dir: str | Path) -> None:
    """Write matrices (AFMX), checkpoints (AFNN) and a JSON manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    matrices = {}
    for name in MATRIX_NAMES:
        values = getattr(bundle, name)
        if values is None:
            continue
        filename = f"{name}.afmx"
        save_matrix(out_dir / filename, values)
        matrices[name] = {
            "file": filename,
            "checksum": file_checksum_hex(out_dir / filename),
        }

    checkpoint_files = {}
    for name, params in bundle.checkpoints.items():
        filename = f"{name}.afnn"
        save_mlp(params, out_dir / filename)
        checkpoint_files[name] = {
            "file": filename,
            "checksum": file_checksum_hex(out_dir / filename),
        }

    manifest = {
        "music_ids": bundle.music_ids,
        "painting_ids": bundle.painting_ids,
        "va_music": bundle.va_music.tolist(),
        "va_paintings": bundle.va_paintings.tolist(),
        "matrices": matrices,
        "checkpoints": checkpoint_files,
        "scalers": {name: s.to_dict() for name, s in bundle.scalers.items()},
        "histories": {
            name: [[e.epoch, e.train_loss, e.val_loss] for e in history]
            for name, history in bundle.histories.items()
        },
        "provenance": bundle.provenance,
    }
    (out_dir / BUNDLE_MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_bundle(in_dir: str | Path) -> PreprocessedBundle:
    """Read a bundle directory, verifying the manifest's file checksums."""
    in_dir = Path(in_dir)
    manifest_path = in_dir / BUNDLE_MANIFEST
    if not manifest_path.exists():
        raise IntegrityError(f"no {BUNDLE_MANIFEST} in {in_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    loaded_matrices = {}
    for name, entry in manifest["matrices"].items():
        path = in_dir / entry["file"]
        if not path.exists():
            raise IntegrityError(f"bundle matrix missing: {path}")
        if file_checksum_hex(path) != entry["checksum"]:
            raise IntegrityError(f"bundle matrix corrupted: {path}")
        loaded_matrices[name] = load_matrix(path).astype(np.float64)

    checkpoints = {}
    for name, entry in manifest["checkpoints"].items():
        path = in_dir / entry["file"]
        if not path.exists():
            raise IntegrityError(f"bundle checkpoint missing: {path}")
        if file_checksum_hex(path) != entry["checksum"]:
            raise IntegrityError(f"bundle checkpoint corrupted: {path}")
        checkpoints[name] = load_mlp(path)

    histories = {
        name: [EpochStats(int(e[0]), float(e[1]), float(e[2])) for e in series]
        for name, series in manifest.get("histories", {}).items()
    }

    return PreprocessedBundle(
        music_ids=list(manifest["music_ids"]),
        painting_ids=list(manifest["painting_ids"]),
        va_music=np.asarray(manifest["va_music"], dtype=np.float64),
        va_paintings=np.asarray(manifest["va_paintings"], dtype=np.float64),
        joint_music=loaded_matrices.get("joint_music"),
        joint_paintings=loaded_matrices.get("joint_paintings"),
        salieri_music=loaded_matrices.get("salieri_music"),
        salieri_paintings=loaded_matrices.get("salieri_paintings"),
        visual_paintings=loaded_matrices.get("visual_paintings"),
        scalers={
            name: ScalerParams.from_dict(obj) for name, obj in manifest["scalers"].items()
        },
        checkpoints=checkpoints,
        histories=histories,
        provenance=manifest.get("provenance", {}),
    )
