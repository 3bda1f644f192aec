"""Valence-arousal math, emotion-label conversion, and dataset curation filters."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import (
    DegenerateLabelError,
    InvalidParameterError,
    MissingLexiconEntryError,
    ParseError,
)

VA_MIN = -1.0
VA_MAX = 1.0

# Per-song annotation stability cutoffs; songs above either bound are dropped.
VALENCE_SD_MAX = 1.75
AROUSAL_SD_MAX = 1.0

# Guided-session curation bounds: positive valence, non-neutral arousal.
CURATION_VALENCE_MIN = 0.1
CURATION_AROUSAL_BAND = 0.1


def _as_finite_float(name: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidParameterError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class VAVector:
    """A point in valence-arousal space; both coordinates must lie in [-1, 1]."""

    valence: float
    arousal: float

    def __post_init__(self):
        for name in ("valence", "arousal"):
            value = _as_finite_float(name, getattr(self, name))
            if not VA_MIN <= value <= VA_MAX:
                raise InvalidParameterError(f"{name} must lie in [-1, 1], got {value!r}")
            object.__setattr__(self, name, value)

    def as_tuple(self) -> tuple[float, float]:
        return (self.valence, self.arousal)


@dataclass(frozen=True)
class StabilityStats:
    """Standard deviations of a song's per-rater valence/arousal annotations."""

    valence_sd: float
    arousal_sd: float

    def __post_init__(self):
        for name in ("valence_sd", "arousal_sd"):
            value = _as_finite_float(name, getattr(self, name))
            if value < 0.0:
                raise InvalidParameterError(f"{name} must be >= 0, got {value!r}")
            object.__setattr__(self, name, value)


class VALexicon:
    """Word -> (valence, arousal) table used to translate emotion labels.

    Source files carry scores in [0, 1]; entries are mapped to [-1, 1] via
    ``x -> 2x - 1`` at load time.
    """

    def __init__(self, entries: Mapping[str, tuple[float, float]]):
        self._entries: dict[str, VAVector] = {}
        for word, (valence, arousal) in entries.items():
            self._entries[word] = VAVector(valence, arousal)

    @classmethod
    def from_unit_scale(cls, entries: Mapping[str, tuple[float, float]]) -> "VALexicon":
        """Build from scores in the [0, 1] source scale."""
        mapped = {}
        for word, (valence, arousal) in entries.items():
            for name, value in (("valence", valence), ("arousal", arousal)):
                value = _as_finite_float(f"{word} {name}", value)
                if not 0.0 <= value <= 1.0:
                    raise InvalidParameterError(
                        f"lexicon entry {word!r}: {name} must lie in [0, 1], got {value!r}"
                    )
            mapped[word] = (2.0 * float(valence) - 1.0, 2.0 * float(arousal) - 1.0)
        return cls(mapped)

    @classmethod
    def load(cls, path: str | Path) -> "VALexicon":
        """Load a tab-separated ``word<TAB>valence<TAB>arousal`` file in [0, 1] scale.

        Extra trailing columns (e.g. dominance) are ignored. A leading header
        line is tolerated.
        """
        path = Path(path)
        entries: dict[str, tuple[float, float]] = {}
        with path.open(encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                fields = line.split("\t")
                if len(fields) < 3:
                    raise ParseError(f"{path}:{lineno}: expected at least 3 tab-separated fields")
                word = fields[0].strip()
                try:
                    valence = float(fields[1])
                    arousal = float(fields[2])
                except ValueError:
                    if lineno == 1:  # header line
                        continue
                    raise ParseError(f"{path}:{lineno}: non-numeric valence/arousal") from None
                entries[word] = (valence, arousal)
        if not entries:
            raise ParseError(f"{path}: no lexicon entries found")
        return cls.from_unit_scale(entries)

    def lookup(self, word: str) -> VAVector:
        try:
            return self._entries[word]
        except KeyError:
            raise MissingLexiconEntryError(f"emotion word {word!r} not in lexicon") from None

    def __contains__(self, word: str) -> bool:
        return word in self._entries

    def __len__(self) -> int:
        return len(self._entries)


def va_distance(a: VAVector, b: VAVector) -> float:
    """Euclidean distance between two valence-arousal points."""
    return math.hypot(a.valence - b.valence, a.arousal - b.arousal)


def gaussian_similarity(d: float, sigma: float) -> float:
    """Map a distance to a soft similarity in (0, 1] via exp(-d^2 / (2 sigma^2))."""
    sigma = _as_finite_float("sigma", sigma)
    if sigma <= 0.0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma!r}")
    d = _as_finite_float("d", d)
    if d < 0.0:
        raise InvalidParameterError(f"d must be >= 0, got {d!r}")
    return math.exp(-(d * d) / (2.0 * sigma * sigma))


def emotions_to_va(labels: Mapping[str, float], lexicon: VALexicon) -> VAVector:
    """Convert an emotion-word -> intensity map to a single V-A point.

    Intensities are normalized to sum to 1 and used as weights in an
    arithmetic mean of the lexicon's V-A values; the result is clamped to
    the valid range.
    """
    if not labels:
        raise DegenerateLabelError("emotion map is empty")
    total = 0.0
    for word, intensity in labels.items():
        intensity = _as_finite_float(f"intensity of {word!r}", intensity)
        if intensity < 0.0:
            raise InvalidParameterError(f"intensity of {word!r} must be >= 0, got {intensity!r}")
        total += intensity
    if total <= 0.0:
        raise DegenerateLabelError("emotion intensities sum to zero")
    valence = 0.0
    arousal = 0.0
    for word, intensity in labels.items():
        point = lexicon.lookup(word)
        weight = float(intensity) / total
        valence += weight * point.valence
        arousal += weight * point.arousal
    valence = min(max(valence, VA_MIN), VA_MAX)
    arousal = min(max(arousal, VA_MIN), VA_MAX)
    return VAVector(valence, arousal)


def deam_stability_filter(stats: StabilityStats) -> bool:
    """Keep a song iff neither annotation SD exceeds its cutoff.

    Exclusion is strict (> 1.75 valence, > 1.0 arousal), so boundary values
    are kept.
    """
    return stats.valence_sd <= VALENCE_SD_MAX and stats.arousal_sd <= AROUSAL_SD_MAX


def therapeutic_curation_filter(va: VAVector) -> bool:
    """Keep an item iff valence exceeds 0.1 and arousal is non-neutral (|a| >= 0.1)."""
    if va.valence <= CURATION_VALENCE_MIN:
        return False
    return va.arousal <= -CURATION_AROUSAL_BAND or va.arousal >= CURATION_AROUSAL_BAND
