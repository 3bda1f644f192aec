"""Adapter contract: outputs load through the engine's catalog validator."""

import json

import numpy as np
import pytest

from affectcdr.catalog import load_catalog

from affectcdr_adapter.backends import StubAudioBackend, StubDescriber, StubVisualBackend
from affectcdr_adapter.cli import main as cli_main
from affectcdr_adapter.extract import (
    ExtractionJob,
    MissingDescriptionError,
    extract_descriptions,
    extract_music,
    extract_painting,
)


@pytest.fixture
def assets(tmp_path):
    asset_dir = tmp_path / "assets"
    asset_dir.mkdir()
    paths = []
    for i in range(3):
        path = asset_dir / f"clip{i}.wav"
        path.write_bytes(b"RIFF" + bytes([i]) * 64)
        paths.append(path)
    return paths


@pytest.fixture
def labels(assets):
    return {
        p.stem: {"valence": 0.2 + 0.1 * i, "arousal": -0.3, "valence_sd": 0.4, "arousal_sd": 0.2}
        for i, p in enumerate(assets)
    }


def make_job(assets, labels, tmp_path, **overrides):
    defaults = dict(
        assets=assets,
        modality="music",
        output_path=tmp_path / "music.jsonl",
        labels=labels,
        cache_dir=tmp_path / "cache",
    )
    defaults.update(overrides)
    return ExtractionJob(**defaults)


class TestFeatureExtraction:
    def test_one_clip_one_record_with_finite_vector(self, assets, labels, tmp_path):
        job = make_job(assets[:1], labels, tmp_path)
        report = extract_music(job, backend=StubAudioBackend())
        assert report.written == 1 and not report.skipped
        record = json.loads(job.output_path.read_text().strip())
        assert record["id"] == "clip0"
        assert record["modality"] == "music"
        assert np.isfinite(record["features"]).all()
        assert record["valence"] == pytest.approx(0.2)

    def test_unreadable_asset_skipped_and_listed(self, assets, labels, tmp_path):
        missing = tmp_path / "assets" / "ghost.wav"
        job = make_job(assets + [missing], labels, tmp_path)
        report = extract_music(job, backend=StubAudioBackend())
        assert report.written == 3
        assert report.skipped == [str(missing)]

    def test_unlabeled_asset_skipped(self, assets, labels, tmp_path):
        labels = {k: v for k, v in labels.items() if k != "clip1"}
        job = make_job(assets, labels, tmp_path)
        report = extract_music(job, backend=StubAudioBackend())
        assert report.written == 2
        assert report.skipped == [str(assets[1])]

    def test_rerun_produces_identical_vectors(self, assets, labels, tmp_path):
        job = make_job(assets, labels, tmp_path)
        extract_music(job, backend=StubAudioBackend())
        first = job.output_path.read_bytes()
        extract_music(job, backend=StubAudioBackend())
        assert job.output_path.read_bytes() == first

    def test_cache_short_circuits_backend(self, assets, labels, tmp_path):
        class CountingBackend(StubAudioBackend):
            calls = 0

            def extract(self, path):
                CountingBackend.calls += 1
                return super().extract(path)

        job = make_job(assets, labels, tmp_path)
        extract_music(job, backend=CountingBackend())
        assert CountingBackend.calls == 3
        extract_music(job, backend=CountingBackend())
        assert CountingBackend.calls == 3  # cache hits only

    def test_sidecar_matrix_mode(self, assets, labels, tmp_path):
        job = make_job(assets, labels, tmp_path, sidecar=True)
        extract_music(job, backend=StubAudioBackend(dim=16))
        record = json.loads(job.output_path.read_text().splitlines()[0])
        assert record["features_ref"]["path"] == "music.afmx"
        assert (tmp_path / "music.afmx").exists()

    def test_painting_extraction_is_2048d(self, assets, labels, tmp_path):
        job = make_job(
            assets, labels, tmp_path, modality="painting", output_path=tmp_path / "p.jsonl"
        )
        extract_painting(job, backend=StubVisualBackend())
        record = json.loads(job.output_path.read_text().splitlines()[0])
        assert len(record["features"]) == 2048


class TestDescriptions:
    def test_description_cached_then_embedded(self, assets, labels, tmp_path):
        job = make_job(assets[:1], labels, tmp_path, output_path=tmp_path / "d.jsonl")
        report = extract_descriptions(job, describer=StubDescriber())
        assert report.written == 1
        record = json.loads(job.output_path.read_text().strip())
        assert len(record["features"]) == 768
        assert "description" in record["metadata"]

    def test_cached_description_needs_no_client(self, assets, labels, tmp_path):
        job = make_job(assets[:1], labels, tmp_path, output_path=tmp_path / "d.jsonl")
        extract_descriptions(job, describer=StubDescriber())
        # rerun without any describer: served from cache
        report = extract_descriptions(job, describer=None)
        assert report.written == 1 and not report.skipped

    def test_missing_credentials_without_cache_is_actionable(self, assets, labels, tmp_path):
        job = make_job(assets[:1], labels, tmp_path, output_path=tmp_path / "d.jsonl")
        report = extract_descriptions(job, describer=None)
        assert report.written == 0
        assert report.skipped == [str(assets[0])]

    def test_cache_required(self, assets, labels, tmp_path):
        job = make_job(assets[:1], labels, tmp_path, cache_dir=None)
        with pytest.raises(ValueError, match="cache"):
            extract_descriptions(job, describer=StubDescriber())


class TestCatalogContract:
    def test_outputs_validate_against_load_catalog(self, assets, labels, tmp_path):
        music_job = make_job(assets, labels, tmp_path)
        extract_music(music_job, backend=StubAudioBackend())

        painting_assets = []
        painting_labels = {}
        for i in range(2):
            path = tmp_path / "assets" / f"art{i}.png"
            path.write_bytes(b"PNG" + bytes([i]) * 32)
            painting_assets.append(path)
            painting_labels[path.stem] = {"emotions": {"joy": 2.0, "fear": 1.0}}
        painting_job = make_job(
            painting_assets,
            painting_labels,
            tmp_path,
            modality="painting",
            output_path=tmp_path / "paintings.jsonl",
        )
        extract_painting(painting_job, backend=StubVisualBackend(dim=32))

        from affectcdr.affect import VALexicon

        catalog = load_catalog(
            music_job.output_path,
            painting_job.output_path,
            lexicon=VALexicon({"joy": (0.8, 0.5), "fear": (-0.6, 0.7)}),
        )
        assert catalog.n_music == 3 and catalog.n_paintings == 2

    def test_sidecar_outputs_validate_too(self, assets, labels, tmp_path):
        music_job = make_job(assets, labels, tmp_path, sidecar=True)
        extract_music(music_job, backend=StubAudioBackend(dim=8))
        painting_path = tmp_path / "assets" / "art.png"
        painting_path.write_bytes(b"PNG data")
        painting_job = make_job(
            [painting_path],
            {"art": {"valence": 0.4, "arousal": 0.6}},
            tmp_path,
            modality="painting",
            output_path=tmp_path / "paintings.jsonl",
        )
        extract_painting(painting_job, backend=StubVisualBackend(dim=8))
        catalog = load_catalog(music_job.output_path, painting_job.output_path)
        assert catalog.music[0].features.shape == (8,)


class TestCli:
    def test_music_subcommand(self, assets, labels, tmp_path, capsys):
        labels_path = tmp_path / "labels.json"
        labels_path.write_text(json.dumps(labels))
        code = cli_main([
            "music",
            "--assets", str(assets[0].parent),
            "--labels", str(labels_path),
            "--out", str(tmp_path / "out.jsonl"),
            "--cache", str(tmp_path / "cache"),
        ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["written"] == 3

    def test_missing_assets_is_input_error(self, tmp_path, capsys):
        labels_path = tmp_path / "labels.json"
        labels_path.write_text("{}")
        code = cli_main([
            "music",
            "--assets", str(tmp_path / "nothing" / "*.wav"),
            "--labels", str(labels_path),
            "--out", str(tmp_path / "out.jsonl"),
        ])
        assert code == 2
