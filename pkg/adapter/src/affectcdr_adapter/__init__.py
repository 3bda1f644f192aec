"""Offline extraction tooling emitting affectcdr catalog feature files."""

from .backends import StubAudioBackend, StubTextEmbedder, StubVisualBackend, get_backend
from .extract import (
    ExtractionJob,
    ExtractionReport,
    extract_descriptions,
    extract_music,
    extract_painting,
)

__version__ = "0.1.0"
