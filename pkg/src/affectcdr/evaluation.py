"""Offline evaluation: ranking overlap between configurations and cross-modal
retrieval probes against known cluster structure."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .engines import DISTANCE, SimilarityIndex
from .errors import InvalidParameterError, LabelError, UniverseError


@dataclass
class RankingOverlapReport:
    k: int
    overlap_at_k: float
    rank_correlation: float
    label_a: str = "a"
    label_b: str = "b"

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "overlap_at_k": self.overlap_at_k,
            "rank_correlation": self.rank_correlation,
            "label_a": self.label_a,
            "label_b": self.label_b,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_text(self) -> str:
        rows = [
            ("rankings", f"{self.label_a} vs {self.label_b}"),
            ("k", str(self.k)),
            ("overlap@k", f"{self.overlap_at_k:.4f}"),
            ("rank correlation", f"{self.rank_correlation:+.4f}"),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


@dataclass
class RetrievalProbeReport:
    top1_accuracy: float
    top5_accuracy: float
    chance_top1: float
    n_rows: int
    n_clusters: int

    def to_dict(self) -> dict:
        return {
            "top1_accuracy": self.top1_accuracy,
            "top5_accuracy": self.top5_accuracy,
            "chance_top1": self.chance_top1,
            "n_rows": self.n_rows,
            "n_clusters": self.n_clusters,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_text(self) -> str:
        rows = [
            ("rows probed", str(self.n_rows)),
            ("clusters", str(self.n_clusters)),
            ("top-1 accuracy", f"{self.top1_accuracy:.4f}"),
            ("top-5 accuracy", f"{self.top5_accuracy:.4f}"),
            ("chance (top-1)", f"{self.chance_top1:.4f}"),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def _count_inversions(sequence: list[int]) -> int:
    """Merge-sort inversion count; O(n log n)."""
    if len(sequence) < 2:
        return 0
    mid = len(sequence) // 2
    left = sequence[:mid]
    right = sequence[mid:]
    inversions = _count_inversions(left) + _count_inversions(right)
    merged = []
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            j += 1
            inversions += len(left) - i
    merged.extend(left[i:])
    merged.extend(right[j:])
    sequence[:] = merged
    return inversions


def ranking_overlap(
    rank_a: list[str],
    rank_b: list[str],
    k: int,
    label_a: str = "a",
    label_b: str = "b",
) -> RankingOverlapReport:
    """Top-k set overlap plus a full-list pairwise-concordance correlation.

    Both rankings must be permutations of the same id universe. Positions are
    unique by construction, so the concordance statistic has no ties:
    tau = (concordant - discordant) / total pairs, exactly +-1 for identical
    and reversed rankings.
    """
    if len(set(rank_a)) != len(rank_a) or len(set(rank_b)) != len(rank_b):
        raise UniverseError("rankings must not contain duplicate ids")
    if set(rank_a) != set(rank_b):
        raise UniverseError("rankings cover different id universes")
    if not 1 <= k <= len(rank_a):
        raise InvalidParameterError(f"k must lie in 1..{len(rank_a)}, got {k}")

    overlap = len(set(rank_a[:k]) & set(rank_b[:k])) / k

    pos_b = {item_id: i for i, item_id in enumerate(rank_b)}
    sequence = [pos_b[item_id] for item_id in rank_a]
    total = len(sequence) * (len(sequence) - 1) // 2
    if total == 0:
        correlation = 1.0
    else:
        discordant = _count_inversions(sequence)
        correlation = (total - 2 * discordant) / total

    return RankingOverlapReport(
        k=k,
        overlap_at_k=overlap,
        rank_correlation=correlation,
        label_a=label_a,
        label_b=label_b,
    )


def retrieval_probe(index: SimilarityIndex, clusters: Mapping[str, str]) -> RetrievalProbeReport:
    """Check whether each row's nearest columns share its cluster label.

    Columns are ranked by distance (1 - similarity for similarity indices)
    with ties broken by column id, mirroring recommendation order.
    """
    for item_id in list(index.row_ids) + list(index.col_ids):
        if item_id not in clusters:
            raise LabelError(f"no cluster label for item {item_id!r}")

    values = np.asarray(index.values, dtype=np.float64)
    if index.semantics != DISTANCE:
        values = 1.0 - values

    col_labels = [clusters[c] for c in index.col_ids]
    top1_hits = 0
    top5_hits = 0
    chance_sum = 0.0
    n_cols = len(index.col_ids)
    for i, row_id in enumerate(index.row_ids):
        label = clusters[row_id]
        order = sorted(range(n_cols), key=lambda j: (values[i, j], index.col_ids[j]))
        if col_labels[order[0]] == label:
            top1_hits += 1
        if any(col_labels[j] == label for j in order[:5]):
            top5_hits += 1
        chance_sum += sum(1 for lab in col_labels if lab == label) / n_cols

    n_rows = len(index.row_ids)
    return RetrievalProbeReport(
        top1_accuracy=top1_hits / n_rows,
        top5_accuracy=top5_hits / n_rows,
        chance_top1=chance_sum / n_rows,
        n_rows=n_rows,
        n_clusters=len(set(clusters.values())),
    )
