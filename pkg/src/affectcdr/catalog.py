"""Catalog ingestion: feature files, affective labels, scaling, synthetic corpora.

Feature files are UTF-8 JSON-lines, one record per line. Each record carries
``id``, ``modality``, a feature vector (inline ``features`` array or a
``features_ref`` into an AFMX sidecar matrix), a V-A label (explicit
``valence``/``arousal`` or an ``emotions`` intensity map resolved through a
lexicon), optional annotation SDs, and a ``metadata`` string map.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .affect import (
    StabilityStats,
    VALexicon,
    VAVector,
    deam_stability_filter,
    emotions_to_va,
)
from .binio import Reader, pack_u32
from .errors import (
    CatalogError,
    IntegrityError,
    InsufficientDataError,
    InvalidParameterError,
)

MUSIC = "music"
PAINTING = "painting"
MODALITIES = (MUSIC, PAINTING)

AFMX_MAGIC = b"AFMX"

# V-A scales accepted at ingest. "unit" is already [-1, 1]; "deam-1-9" maps
# raw per-song annotation means via x -> (x - 5) / 4. Annotation SDs are kept
# on their source scale, matching the stability cutoffs.
VA_SCALES = ("unit", "deam-1-9")


# ---------------------------------------------------------------------------
# AFMX sidecar matrices
# ---------------------------------------------------------------------------

def save_matrix(path: str | Path, values: np.ndarray) -> None:
    """Write a dense f32 matrix: magic, u32 rows, u32 cols, row-major data."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise InvalidParameterError(f"matrix must be 2-D, got shape {values.shape}")
    rows, cols = values.shape
    payload = AFMX_MAGIC + pack_u32(rows) + pack_u32(cols)
    payload += np.ascontiguousarray(values, dtype="<f4").tobytes()
    Path(path).write_bytes(payload)


def load_matrix(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(AFMX_MAGIC):
        raise IntegrityError(f"{path}: bad magic, expected AFMX")
    reader = Reader(data[len(AFMX_MAGIC):], context=str(path))
    rows = reader.u32()
    cols = reader.u32()
    values = reader.f32_array((rows, cols))
    reader.expect_end()
    return values


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass
class FeatureRecord:
    id: str
    modality: str
    features: np.ndarray
    va: VAVector
    metadata: dict[str, str] = field(default_factory=dict)
    stability: StabilityStats | None = None

    def __eq__(self, other):
        if not isinstance(other, FeatureRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.modality == other.modality
            and np.array_equal(self.features, other.features)
            and self.va == other.va
            and self.metadata == other.metadata
            and self.stability == other.stability
        )


@dataclass
class Catalog:
    music: list[FeatureRecord]
    paintings: list[FeatureRecord]
    provenance: dict = field(default_factory=dict, compare=False)

    def __eq__(self, other):
        if not isinstance(other, Catalog):
            return NotImplemented
        return self.music == other.music and self.paintings == other.paintings

    @property
    def n_music(self) -> int:
        return len(self.music)

    @property
    def n_paintings(self) -> int:
        return len(self.paintings)

    def records(self, modality: str) -> list[FeatureRecord]:
        if modality == MUSIC:
            return self.music
        if modality == PAINTING:
            return self.paintings
        raise InvalidParameterError(f"unknown modality {modality!r}")

    def feature_matrix(self, modality: str) -> np.ndarray:
        return np.array([r.features for r in self.records(modality)], dtype=np.float64)

    def va_matrix(self, modality: str) -> np.ndarray:
        return np.array(
            [[r.va.valence, r.va.arousal] for r in self.records(modality)], dtype=np.float64
        )

    def ids(self, modality: str) -> list[str]:
        return [r.id for r in self.records(modality)]


@dataclass
class EmbeddingMatrix:
    """Row-per-item matrix at a named pipeline stage."""

    ids: list[str]
    values: np.ndarray
    stage: str

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != len(self.ids):
            raise InvalidParameterError(
                f"stage {self.stage!r}: {len(self.ids)} ids but matrix shape {self.values.shape}"
            )


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _scale_va(raw_v: float, raw_a: float, scale: str, context: str) -> tuple[float, float]:
    if scale == "unit":
        return raw_v, raw_a
    for name, value in (("valence", raw_v), ("arousal", raw_a)):
        if not 1.0 <= value <= 9.0:
            raise CatalogError(f"{context}: {name} {value!r} outside the [1, 9] source scale")
    return (raw_v - 5.0) / 4.0, (raw_a - 5.0) / 4.0


def _record_from_json(
    obj: dict,
    expected_modality: str,
    base_dir: Path,
    matrix_cache: dict[Path, np.ndarray],
    lexicon: VALexicon | None,
    va_scale: str,
    context: str,
) -> FeatureRecord:
    record_id = obj.get("id")
    if not isinstance(record_id, str) or not record_id:
        raise CatalogError(f"{context}: missing or empty 'id'")
    modality = obj.get("modality")
    if modality != expected_modality:
        raise CatalogError(
            f"{context}: modality {modality!r} does not match file modality {expected_modality!r}"
        )

    if "features" in obj:
        features = np.asarray(obj["features"], dtype=np.float64)
        if features.ndim != 1 or features.size == 0:
            raise CatalogError(f"{context}: 'features' must be a non-empty flat array")
    elif "features_ref" in obj:
        ref = obj["features_ref"]
        if not isinstance(ref, dict) or "path" not in ref or "row" not in ref:
            raise CatalogError(f"{context}: 'features_ref' needs 'path' and 'row'")
        matrix_path = (base_dir / ref["path"]).resolve()
        if matrix_path not in matrix_cache:
            matrix_cache[matrix_path] = load_matrix(matrix_path)
        matrix = matrix_cache[matrix_path]
        row = ref["row"]
        if not isinstance(row, int) or not 0 <= row < matrix.shape[0]:
            raise CatalogError(f"{context}: row {row!r} out of range for {ref['path']}")
        features = matrix[row].astype(np.float64)
    else:
        raise CatalogError(f"{context}: record needs 'features' or 'features_ref'")
    if not np.isfinite(features).all():
        raise CatalogError(f"{context}: non-finite feature values")

    has_explicit = "valence" in obj and "arousal" in obj
    if has_explicit:
        try:
            raw_v = float(obj["valence"])
            raw_a = float(obj["arousal"])
        except (TypeError, ValueError):
            raise CatalogError(f"{context}: valence/arousal must be numbers") from None
        valence, arousal = _scale_va(raw_v, raw_a, va_scale, context)
        try:
            va = VAVector(valence, arousal)
        except InvalidParameterError as exc:
            raise CatalogError(f"{context}: {exc}") from None
    elif "emotions" in obj:
        if lexicon is None:
            raise CatalogError(f"{context}: record has 'emotions' but no lexicon was provided")
        va = emotions_to_va(obj["emotions"], lexicon)
    else:
        raise CatalogError(f"{context}: record has neither valence/arousal nor 'emotions'")

    stability = None
    if "valence_sd" in obj or "arousal_sd" in obj:
        try:
            stability = StabilityStats(
                float(obj.get("valence_sd", 0.0)), float(obj.get("arousal_sd", 0.0))
            )
        except (TypeError, ValueError, InvalidParameterError) as exc:
            raise CatalogError(f"{context}: bad stability stats: {exc}") from None

    metadata = obj.get("metadata", {})
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise CatalogError(f"{context}: 'metadata' must map strings to strings")

    return FeatureRecord(record_id, modality, features, va, dict(metadata), stability)


def _load_records(
    path: Path,
    expected_modality: str,
    lexicon: VALexicon | None,
    va_scale: str,
) -> tuple[list[FeatureRecord], int]:
    if not path.exists():
        raise CatalogError(f"catalog file not found: {path}")
    records: list[FeatureRecord] = []
    dropped = 0
    matrix_cache: dict[Path, np.ndarray] = {}
    dim: int | None = None
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            context = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CatalogError(f"{context}: invalid JSON ({exc.msg})") from None
            record = _record_from_json(
                obj, expected_modality, path.parent, matrix_cache, lexicon, va_scale, context
            )
            if dim is None:
                dim = record.features.size
            elif record.features.size != dim:
                raise CatalogError(
                    f"{context}: feature dimension {record.features.size} != {dim} seen earlier"
                )
            if record.stability is not None and not deam_stability_filter(record.stability):
                dropped += 1
                continue
            records.append(record)
    return records, dropped


def load_catalog(
    music_path: str | Path,
    paintings_path: str | Path,
    lexicon: VALexicon | None = None,
    music_va_scale: str = "unit",
) -> Catalog:
    """Load and validate both modality files into a :class:`Catalog`.

    Records with stability stats failing the annotation-SD filter are dropped
    and counted in provenance. Explicit V-A wins over an ``emotions`` map.
    """
    if music_va_scale not in VA_SCALES:
        raise InvalidParameterError(f"unknown V-A scale {music_va_scale!r}; use one of {VA_SCALES}")
    music_path = Path(music_path)
    paintings_path = Path(paintings_path)
    music, music_dropped = _load_records(music_path, MUSIC, lexicon, music_va_scale)
    paintings, paintings_dropped = _load_records(paintings_path, PAINTING, lexicon, "unit")

    seen: set[str] = set()
    for record in music + paintings:
        if record.id in seen:
            raise CatalogError(f"duplicate record id {record.id!r}")
        seen.add(record.id)

    provenance = {
        "music_source": str(music_path),
        "paintings_source": str(paintings_path),
        "music_kept": len(music),
        "music_dropped": music_dropped,
        "paintings_kept": len(paintings),
        "paintings_dropped": paintings_dropped,
        "music_va_scale": music_va_scale,
        "loaded_at": time.time(),
    }
    return Catalog(music=music, paintings=paintings, provenance=provenance)


def save_catalog_jsonl(records: list[FeatureRecord], path: str | Path) -> None:
    """Write records as JSON-lines with inline feature arrays."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            obj = {
                "id": record.id,
                "modality": record.modality,
                "valence": record.va.valence,
                "arousal": record.va.arousal,
                "features": [float(x) for x in record.features],
                "metadata": record.metadata,
            }
            if record.stability is not None:
                obj["valence_sd"] = record.stability.valence_sd
                obj["arousal_sd"] = record.stability.arousal_sd
            handle.write(json.dumps(obj, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------

@dataclass
class ScalerParams:
    """Per-dimension corpus min/max for the affine map onto [-1, 1]."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise InvalidParameterError("mins/maxs must be matching 1-D arrays")
        if np.any(self.maxs < self.mins):
            raise InvalidParameterError("per-dimension max must be >= min")

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Map rows into [-1, 1]; out-of-corpus points are clamped. Constant
        dimensions map to 0."""
        values = np.asarray(values, dtype=np.float64)
        span = self.maxs - self.mins
        safe_span = np.where(span > 0.0, span, 1.0)
        scaled = -1.0 + 2.0 * (values - self.mins) / safe_span
        scaled = np.where(span > 0.0, scaled, 0.0)
        return np.clip(scaled, -1.0, 1.0)

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        scaled = np.asarray(scaled, dtype=np.float64)
        span = self.maxs - self.mins
        return self.mins + (scaled + 1.0) / 2.0 * span

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "ScalerParams":
        return cls(np.array(obj["mins"]), np.array(obj["maxs"]))


def minmax_scale(matrix: np.ndarray) -> tuple[np.ndarray, ScalerParams]:
    """Fit per-dimension min/max on ``matrix`` and map it onto [-1, 1]."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise InsufficientDataError(f"need a non-empty 2-D matrix, got shape {matrix.shape}")
    params = ScalerParams(matrix.min(axis=0), matrix.max(axis=0))
    return params.transform(matrix), params


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

QUADRANT_CENTERS = ((0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5))

VA_NOISE_SD = 0.1
FEATURE_NOISE_SD = 0.05


def _cluster_centers(n_clusters: int) -> np.ndarray:
    if n_clusters <= len(QUADRANT_CENTERS):
        return np.array(QUADRANT_CENTERS[:n_clusters], dtype=np.float64)
    angles = 2.0 * np.pi * np.arange(n_clusters) / n_clusters
    return 0.6 * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def synth_catalog(
    seed: int,
    n_music: int = 40,
    n_paintings: int = 40,
    n_clusters: int = 4,
    feature_dim_m: int = 32,
    feature_dim_p: int = 48,
) -> Catalog:
    """Deterministic clustered test corpus.

    Cluster centers sit at distinct V-A points (quadrant midpoints by
    default). Each item's V-A is its center plus clamped Gaussian noise; its
    features are a cluster-specific random linear embedding of that V-A plus
    noise, with independent embeddings per modality. The V-A stream is seeded
    separately from the feature stream, so V-A draws do not depend on the
    feature dimensions. Ground-truth cluster ids live in ``metadata``.
    """
    if n_music <= 0 or n_paintings <= 0:
        raise InvalidParameterError("item counts must be positive")
    if n_clusters < 1:
        raise InvalidParameterError("n_clusters must be >= 1")
    if feature_dim_m <= 0 or feature_dim_p <= 0:
        raise InvalidParameterError("feature dimensions must be positive")

    va_rng, feature_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
    )
    centers = _cluster_centers(n_clusters)

    def draw_va(count: int) -> tuple[np.ndarray, np.ndarray]:
        clusters = np.arange(count) % n_clusters
        noise = va_rng.normal(0.0, VA_NOISE_SD, size=(count, 2))
        va = np.clip(centers[clusters] + noise, -1.0, 1.0)
        return clusters, va

    music_clusters, music_va = draw_va(n_music)
    painting_clusters, painting_va = draw_va(n_paintings)

    def draw_features(clusters: np.ndarray, va: np.ndarray, dim: int) -> np.ndarray:
        embeds = feature_rng.normal(size=(n_clusters, 2, dim))
        noise = feature_rng.normal(0.0, FEATURE_NOISE_SD, size=(len(clusters), dim))
        return np.einsum("nk,nkd->nd", va, embeds[clusters]) + noise

    music_features = draw_features(music_clusters, music_va, feature_dim_m)
    painting_features = draw_features(painting_clusters, painting_va, feature_dim_p)

    def build(prefix, modality, clusters, va, features):
        records = []
        for i in range(len(clusters)):
            records.append(
                FeatureRecord(
                    id=f"{prefix}{i:04d}",
                    modality=modality,
                    features=features[i],
                    va=VAVector(float(va[i, 0]), float(va[i, 1])),
                    metadata={
                        "cluster": str(int(clusters[i])),
                        "title": f"synthetic {modality} {i}",
                    },
                )
            )
        return records

    music = build("m", MUSIC, music_clusters, music_va, music_features)
    paintings = build("p", PAINTING, painting_clusters, painting_va, painting_features)
    provenance = {
        "source": "synthetic",
        "seed": seed,
        "n_clusters": n_clusters,
        "music_kept": len(music),
        "paintings_kept": len(paintings),
    }
    return Catalog(music=music, paintings=paintings, provenance=provenance)


def cluster_labels(catalog: Catalog) -> dict[str, str]:
    """Ground-truth cluster map for synthetic catalogs."""
    labels = {}
    for record in catalog.music + catalog.paintings:
        if "cluster" in record.metadata:
            labels[record.id] = record.metadata["cluster"]
    return labels
