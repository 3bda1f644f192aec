"""The four retrieval engines and rating-weighted top-n recommendation.

Every engine is a precomputed music-by-painting matrix (painting-by-painting
for the visual baseline). Recommendation aggregates per-painting distances
with normalized rating weights and returns the closest n, ties broken by
painting id.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .binio import (
    Reader,
    pack_f32_array,
    pack_string,
    pack_u8,
    pack_u32,
    read_checksummed,
    write_checksummed,
)
from .catalog import Catalog
from .errors import (
    DegenerateEmbeddingError,
    IntegrityError,
    InvalidCatalogError,
    InvalidParameterError,
    NoPreferencesError,
    ShapeError,
    UnknownItemError,
)
from .pipeline import JOINT_DIM, CODE_DIM, PreprocessedBundle

AFIX_MAGIC = b"AFIX"
AFIX_VERSION = 1


class Engine(str, Enum):
    MOZART = "mozart"
    HAYDN = "haydn"
    SALIERI = "salieri"
    VISUAL = "visual"


DISTANCE = "distance"
SIMILARITY = "similarity"

_ENGINE_TAGS = {Engine.MOZART: 1, Engine.HAYDN: 2, Engine.SALIERI: 3, Engine.VISUAL: 4}
_SEMANTICS_TAGS = {DISTANCE: 1, SIMILARITY: 2}


@dataclass
class SimilarityIndex:
    engine: Engine
    row_ids: list[str]
    col_ids: list[str]
    values: np.ndarray
    semantics: str
    build_info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.engine = Engine(self.engine)
        if self.semantics not in (DISTANCE, SIMILARITY):
            raise InvalidParameterError(f"unknown semantics {self.semantics!r}")
        if self.values.ndim != 2 or self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise ShapeError(
                f"matrix shape {self.values.shape} does not match"
                f" {len(self.row_ids)} row ids x {len(self.col_ids)} col ids"
            )
        if not np.isfinite(self.values).all():
            raise InvalidParameterError("index contains non-finite values")
        if self.semantics == DISTANCE and self.values.size and self.values.min() < 0.0:
            raise InvalidParameterError("distance index contains negative values")
        if self.semantics == SIMILARITY and self.values.size:
            if self.values.min() < -1.0 or self.values.max() > 1.0:
                raise InvalidParameterError("similarity index values must lie in [-1, 1]")


@dataclass(frozen=True)
class PreferenceRating:
    item_id: str
    rating: int
    is_attention_check: bool = False

    def __post_init__(self):
        if not isinstance(self.item_id, str) or not self.item_id:
            raise InvalidParameterError("item_id must be a non-empty string")
        if isinstance(self.rating, bool) or not isinstance(self.rating, int):
            raise InvalidParameterError(f"rating must be an integer, got {self.rating!r}")
        if not 1 <= self.rating <= 5:
            raise InvalidParameterError(f"rating must lie in 1..5, got {self.rating}")


@dataclass
class RecommendationEntry:
    painting_id: str
    distance: float


@dataclass
class RecommendationList:
    engine: Engine
    entries: list[RecommendationEntry]
    weights: list[tuple[str, float]]
    truncated: bool = False

    def __post_init__(self):
        self.engine = Engine(self.engine)
        ids = [e.painting_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise InvalidParameterError("recommendation entries must be unique")
        distances = [e.distance for e in self.entries]
        if any(b < a for a, b in zip(distances, distances[1:])):
            raise InvalidParameterError("recommendation entries must be ascending by distance")

    def painting_ids(self) -> list[str]:
        return [e.painting_id for e in self.entries]


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _pairwise_euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact blockwise pairwise distances (coincident rows give exactly 0)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.empty((a.shape[0], b.shape[0]))
    # keep each difference block under ~64 MB
    block = max(1, int(64e6 / (max(1, b.shape[0] * a.shape[1]) * 8)))
    for start in range(0, a.shape[0], block):
        diff = a[start : start + block, None, :] - b[None, :, :]
        out[start : start + block] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def _normalized_rows(values: np.ndarray, ids: list[str]) -> np.ndarray:
    norms = np.linalg.norm(values, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateEmbeddingError(f"zero-norm embedding for item {ids[zero[0]]!r}")
    return values / norms[:, None]


def haydn_index_from_va(
    music_ids: list[str],
    va_music: np.ndarray,
    painting_ids: list[str],
    va_paintings: np.ndarray,
) -> SimilarityIndex:
    if not music_ids or not painting_ids:
        raise InvalidCatalogError("both modalities need at least one item")
    vm = np.asarray(va_music, dtype=np.float64)
    vp = np.asarray(va_paintings, dtype=np.float64)
    values = np.hypot(
        vm[:, None, 0] - vp[None, :, 0],
        vm[:, None, 1] - vp[None, :, 1],
    )
    return SimilarityIndex(
        engine=Engine.HAYDN,
        row_ids=list(music_ids),
        col_ids=list(painting_ids),
        values=values,
        semantics=DISTANCE,
        build_info={"source": "va-table"},
    )


def build_haydn_index(catalog: Catalog) -> SimilarityIndex:
    """Affective-space search: pairwise V-A distances between modalities."""
    return haydn_index_from_va(
        catalog.ids("music"),
        catalog.va_matrix("music"),
        catalog.ids("painting"),
        catalog.va_matrix("painting"),
    )


def build_mozart_index(bundle: PreprocessedBundle) -> SimilarityIndex:
    """Euclidean distances between the 128D joint embeddings."""
    if bundle.joint_music is None or bundle.joint_paintings is None:
        raise InvalidCatalogError("bundle is missing joint embeddings")
    for name, mat in (("music", bundle.joint_music), ("paintings", bundle.joint_paintings)):
        if mat.shape[1] != JOINT_DIM:
            raise ShapeError(f"joint {name} embeddings must be {JOINT_DIM}D, got {mat.shape[1]}")
    return SimilarityIndex(
        engine=Engine.MOZART,
        row_ids=list(bundle.music_ids),
        col_ids=list(bundle.painting_ids),
        values=_pairwise_euclidean(bundle.joint_music, bundle.joint_paintings),
        semantics=DISTANCE,
        build_info={
            "sigma": bundle.provenance.get("sigma"),
            "margin": bundle.provenance.get("margin"),
            "seed": bundle.provenance.get("seed"),
        },
    )


def build_salieri_index(bundle: PreprocessedBundle, metric: str = "cosine") -> SimilarityIndex:
    """Cross-modal index over the 256D composed embeddings.

    The stored matrix is cosine similarity by default; ``metric="euclidean"``
    builds a distance-semantics variant instead.
    """
    if bundle.salieri_music is None or bundle.salieri_paintings is None:
        raise InvalidCatalogError("bundle is missing 256D composed embeddings")
    for name, mat in (("music", bundle.salieri_music), ("paintings", bundle.salieri_paintings)):
        if mat.shape[1] != CODE_DIM:
            raise ShapeError(f"composed {name} embeddings must be {CODE_DIM}D, got {mat.shape[1]}")
    if metric == "cosine":
        um = _normalized_rows(bundle.salieri_music, bundle.music_ids)
        up = _normalized_rows(bundle.salieri_paintings, bundle.painting_ids)
        values = np.clip(um @ up.T, -1.0, 1.0)
        semantics = SIMILARITY
    elif metric == "euclidean":
        values = _pairwise_euclidean(bundle.salieri_music, bundle.salieri_paintings)
        semantics = DISTANCE
    else:
        raise InvalidParameterError(f"unknown metric {metric!r}; use 'cosine' or 'euclidean'")
    return SimilarityIndex(
        engine=Engine.SALIERI,
        row_ids=list(bundle.music_ids),
        col_ids=list(bundle.painting_ids),
        values=values,
        semantics=semantics,
        build_info={"metric": metric, "seed": bundle.provenance.get("seed")},
    )


def build_visual_index(features: np.ndarray, painting_ids: list[str]) -> SimilarityIndex:
    """Painting-by-painting cosine similarity over raw visual features."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != len(painting_ids):
        raise ShapeError(
            f"features shape {features.shape} does not match {len(painting_ids)} ids"
        )
    if len(painting_ids) < 2:
        raise InvalidCatalogError("visual baseline needs at least 2 paintings")
    unit = _normalized_rows(features, painting_ids)
    values = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(values, 1.0)
    return SimilarityIndex(
        engine=Engine.VISUAL,
        row_ids=list(painting_ids),
        col_ids=list(painting_ids),
        values=values,
        semantics=SIMILARITY,
        build_info={"source": "raw-visual-features"},
    )


# ---------------------------------------------------------------------------
# recommendation
# ---------------------------------------------------------------------------

def normalize_ratings(ratings: list[PreferenceRating]) -> tuple[list[str], np.ndarray]:
    """Drop attention checks and normalize ratings into weights summing to 1."""
    kept = [r for r in ratings if not r.is_attention_check]
    if not kept:
        raise NoPreferencesError("no non-attention-check ratings to weight")
    values = np.array([r.rating for r in kept], dtype=np.float64)
    return [r.item_id for r in kept], values / values.sum()


def recommend(index: SimilarityIndex, ratings: list[PreferenceRating], n: int = 3) -> RecommendationList:
    """Rating-weighted aggregate retrieval: d(p_j) = sum_i w_i * dist(i, j).

    Similarity matrices are aggregated as 1 - similarity. Results sort
    ascending by aggregate distance with ties broken by painting id. For the
    visual engine, paintings the user rated are excluded from candidates.
    """
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    ids, weights = normalize_ratings(ratings)
    row_pos = {item_id: i for i, item_id in enumerate(index.row_ids)}
    try:
        rows = [row_pos[item_id] for item_id in ids]
    except KeyError as exc:
        raise UnknownItemError(f"rated item {exc.args[0]!r} is not on the index") from None

    matrix = np.asarray(index.values, dtype=np.float64)[rows, :]
    if index.semantics == SIMILARITY:
        matrix = 1.0 - matrix
    aggregate = weights @ matrix

    if index.engine == Engine.VISUAL:
        rated = {r.item_id for r in ratings}  # includes attention checks
        candidates = [j for j, pid in enumerate(index.col_ids) if pid not in rated]
    else:
        candidates = list(range(len(index.col_ids)))

    order = sorted(candidates, key=lambda j: (aggregate[j], index.col_ids[j]))
    truncated = n > len(order)
    top = order[:n]
    return RecommendationList(
        engine=index.engine,
        entries=[RecommendationEntry(index.col_ids[j], float(aggregate[j])) for j in top],
        weights=list(zip(ids, weights.tolist())),
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_index(index: SimilarityIndex, path: str | Path) -> None:
    """Write an AFIX file (f32 values, trailing 64-bit checksum)."""
    chunks = [
        AFIX_MAGIC,
        pack_u8(AFIX_VERSION),
        pack_u8(_ENGINE_TAGS[index.engine]),
        pack_u8(_SEMANTICS_TAGS[index.semantics]),
        pack_u32(len(index.row_ids)),
        pack_u32(len(index.col_ids)),
    ]
    chunks.extend(pack_string(item_id) for item_id in index.row_ids)
    chunks.extend(pack_string(item_id) for item_id in index.col_ids)
    chunks.append(pack_f32_array(index.values))
    write_checksummed(path, b"".join(chunks))


def load_index(path: str | Path) -> SimilarityIndex:
    """Read an AFIX file; raises IntegrityError on corruption."""
    payload = read_checksummed(path, AFIX_MAGIC)
    reader = Reader(payload[len(AFIX_MAGIC):], context=str(path))
    version = reader.u8()
    if version != AFIX_VERSION:
        raise IntegrityError(f"{path}: unsupported AFIX version {version}")
    engine_tag = reader.u8()
    semantics_tag = reader.u8()
    engines_by_tag = {v: k for k, v in _ENGINE_TAGS.items()}
    semantics_by_tag = {v: k for k, v in _SEMANTICS_TAGS.items()}
    if engine_tag not in engines_by_tag or semantics_tag not in semantics_by_tag:
        raise IntegrityError(f"{path}: unknown engine/semantics tag")
    n_rows = reader.u32()
    n_cols = reader.u32()
    row_ids = [reader.string() for _ in range(n_rows)]
    col_ids = [reader.string() for _ in range(n_cols)]
    values = reader.f32_array((n_rows, n_cols))
    reader.expect_end()
    return SimilarityIndex(
        engine=engines_by_tag[engine_tag],
        row_ids=row_ids,
        col_ids=col_ids,
        values=values,
        semantics=semantics_by_tag[semantics_tag],
        build_info={"loaded_from": str(path)},
    )


def index_to_csv(index: SimilarityIndex, path: str | Path) -> None:
    """Inspection mirror: header row of painting ids, one row per music id."""
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", *index.col_ids])
        for i, row_id in enumerate(index.row_ids):
            writer.writerow([row_id, *("%.9g" % v for v in index.values[i])])
