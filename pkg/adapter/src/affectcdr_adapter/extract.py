"""Extraction jobs: assets + labels in, catalog JSONL (and optional AFMX) out.

Outputs follow the primary engine's feature-file contract exactly, so
anything written here loads through its catalog validator unchanged.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cache import FeatureCache, asset_hash

log = logging.getLogger(__name__)

AFMX_MAGIC = b"AFMX"


@dataclass
class ExtractionJob:
    assets: list[Path]
    modality: str  # "music" | "painting"
    output_path: Path
    labels: dict[str, dict]
    extractor_id: str = "stub"
    cache_dir: Path | None = None
    sidecar: bool = False

    def __post_init__(self):
        if self.modality not in ("music", "painting"):
            raise ValueError(f"modality must be music or painting, got {self.modality!r}")
        self.assets = [Path(p) for p in self.assets]
        self.output_path = Path(self.output_path)


@dataclass
class ExtractionReport:
    written: int = 0
    skipped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"written": self.written, "skipped": self.skipped}


def _label_fields(job: ExtractionJob, asset_id: str) -> dict:
    label = job.labels.get(asset_id)
    if label is None:
        raise KeyError(f"no label entry for asset id {asset_id!r}")
    out = {}
    if "emotions" in label:
        out["emotions"] = label["emotions"]
    else:
        out["valence"] = float(label["valence"])
        out["arousal"] = float(label["arousal"])
    for key in ("valence_sd", "arousal_sd"):
        if key in label:
            out[key] = float(label[key])
    return out


def _write_sidecar(path: Path, vectors: list[np.ndarray]) -> None:
    matrix = np.stack(vectors).astype("<f4")
    payload = AFMX_MAGIC + struct.pack("<II", *matrix.shape) + matrix.tobytes()
    path.write_bytes(payload)


def _run_feature_job(job: ExtractionJob, backend) -> ExtractionReport:
    cache = FeatureCache(job.cache_dir, backend.id) if job.cache_dir else None
    report = ExtractionReport()
    records = []
    vectors: list[np.ndarray] = []

    for asset in job.assets:
        asset_id = asset.stem
        try:
            key = asset_hash(asset)
            vector = cache.get_vector(key) if cache else None
            if vector is None:
                vector = np.asarray(backend.extract(asset), dtype=np.float32)
                if vector.ndim != 1 or not np.isfinite(vector).all():
                    raise ValueError("backend returned a non-finite or non-flat vector")
                if cache:
                    cache.put_vector(key, vector)
            label_fields = _label_fields(job, asset_id)
        except Exception as exc:
            log.warning("skipping %s: %s", asset, exc)
            report.skipped.append(str(asset))
            continue

        record = {
            "id": asset_id,
            "modality": job.modality,
            **label_fields,
            "metadata": {"title": asset_id, "source_path": str(asset)},
        }
        if job.sidecar:
            record["features_ref"] = {
                "path": job.output_path.with_suffix(".afmx").name,
                "row": len(vectors),
            }
            vectors.append(vector)
        else:
            record["features"] = [float(x) for x in vector]
        records.append(record)

    job.output_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = job.output_path.with_suffix(".jsonl.tmp")
    with tmp.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
    tmp.replace(job.output_path)
    if job.sidecar and vectors:
        _write_sidecar(job.output_path.with_suffix(".afmx"), vectors)
    report.written = len(records)
    return report


def extract_music(job: ExtractionJob, backend=None) -> ExtractionReport:
    from .backends import get_backend

    return _run_feature_job(job, backend or get_backend("audio", job.extractor_id))


def extract_painting(job: ExtractionJob, backend=None) -> ExtractionReport:
    from .backends import get_backend

    return _run_feature_job(job, backend or get_backend("visual", job.extractor_id))


class MissingDescriptionError(RuntimeError):
    pass


def extract_descriptions(
    job: ExtractionJob,
    describer=None,
    embedder=None,
) -> ExtractionReport:
    """Generate (or reuse cached) semantic descriptions and embed them.

    Descriptions are cached to disk before embedding, so reruns never call
    the hosted model again. Without a describer and without a cached entry
    the asset fails with an actionable error.
    """
    from .backends import StubTextEmbedder, get_backend

    if job.cache_dir is None:
        raise ValueError("description extraction requires --cache for resumability")
    text_cache = FeatureCache(job.cache_dir, "descriptions")
    if embedder is None:
        embedder = (
            StubTextEmbedder() if job.extractor_id == "stub" else get_backend("text", "bert")
        )

    report = ExtractionReport()
    records = []
    for asset in job.assets:
        asset_id = asset.stem
        try:
            key = asset_hash(asset)
            text = text_cache.get_text(key)
            if text is None:
                if describer is None:
                    raise MissingDescriptionError(
                        f"no cached description for {asset.name} and no description"
                        " client configured; provide credentials or pre-fill the cache"
                    )
                text = describer.describe(asset, job.labels.get(asset_id, {}))
                text_cache.put_text(key, text)
            vector = np.asarray(embedder.embed(text), dtype=np.float32)
            label_fields = _label_fields(job, asset_id)
        except Exception as exc:
            log.warning("skipping %s: %s", asset, exc)
            report.skipped.append(str(asset))
            continue
        records.append(
            {
                "id": asset_id,
                "modality": job.modality,
                **label_fields,
                "features": [float(x) for x in vector],
                "metadata": {"title": asset_id, "description": text},
            }
        )

    job.output_path.parent.mkdir(parents=True, exist_ok=True)
    with job.output_path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
    report.written = len(records)
    return report
