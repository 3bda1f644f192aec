"""Command-line surface: subcommands, exit codes, determinism, serving."""

import json
import os
import signal
import socket
import subprocess
import sys
import time

import httpx
import pytest

from affectcdr.cli import EXIT_DOMAIN, EXIT_INPUT, EXIT_INTEGRITY, EXIT_OK, main

FAST_PREPROCESS = ["--epochs", "3", "--patience", "3", "--batch-size", "8", "--ae-hidden", "16"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    catalog_dir = root / "catalog"
    bundle_dir = root / "bundle"
    index_dir = root / "indices"
    assert main(["synth", "--out", str(catalog_dir), "--seed", "7",
                 "--n-music", "24", "--n-paintings", "30"]) == EXIT_OK
    assert main([
        "preprocess",
        "--music", str(catalog_dir / "music.jsonl"),
        "--paintings", str(catalog_dir / "paintings.jsonl"),
        "--out", str(bundle_dir),
        "--seed", "3",
        *FAST_PREPROCESS,
    ]) == EXIT_OK
    assert main([
        "build-index", "--bundle", str(bundle_dir), "--engine", "all",
        "--out", str(index_dir), "--dump-csv",
    ]) == EXIT_OK
    return root


class TestSynth:
    def test_outputs_exist(self, workspace):
        catalog_dir = workspace / "catalog"
        assert (catalog_dir / "music.jsonl").exists()
        assert (catalog_dir / "paintings.jsonl").exists()
        clusters = json.loads((catalog_dir / "clusters.json").read_text())
        assert len(clusters) == 54

    def test_deterministic_bytes(self, tmp_path):
        for sub in ("a", "b"):
            assert main(["synth", "--out", str(tmp_path / sub), "--seed", "9",
                         "--n-music", "8", "--n-paintings", "8"]) == EXIT_OK
        assert (tmp_path / "a" / "music.jsonl").read_bytes() == (
            tmp_path / "b" / "music.jsonl"
        ).read_bytes()


class TestPreprocess:
    def test_missing_catalog_path_is_input_error(self, tmp_path, capsys):
        code = main([
            "preprocess", "--music", str(tmp_path / "missing.jsonl"),
            "--paintings", str(tmp_path / "also.jsonl"), "--out", str(tmp_path / "out"),
        ])
        assert code == EXIT_INPUT
        assert "missing.jsonl" in capsys.readouterr().err

    def test_repeat_same_seed_identical_checksums(self, workspace, tmp_path):
        catalog_dir = workspace / "catalog"
        args = [
            "preprocess",
            "--music", str(catalog_dir / "music.jsonl"),
            "--paintings", str(catalog_dir / "paintings.jsonl"),
            "--seed", "3",
            *FAST_PREPROCESS,
        ]
        assert main(args + ["--out", str(tmp_path / "one")]) == EXIT_OK
        assert main(args + ["--out", str(tmp_path / "two")]) == EXIT_OK
        for name in ("joint_music.afmx", "salieri_paintings.afmx", "projection.afnn"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_matches_workspace_bundle(self, workspace, tmp_path):
        # same seed as the module fixture -> byte-identical artifacts
        catalog_dir = workspace / "catalog"
        assert main([
            "preprocess",
            "--music", str(catalog_dir / "music.jsonl"),
            "--paintings", str(catalog_dir / "paintings.jsonl"),
            "--out", str(tmp_path / "again"),
            "--seed", "3",
            *FAST_PREPROCESS,
        ]) == EXIT_OK
        assert (tmp_path / "again" / "joint_music.afmx").read_bytes() == (
            workspace / "bundle" / "joint_music.afmx"
        ).read_bytes()


class TestBuildIndex:
    def test_all_four_engines_written(self, workspace):
        index_dir = workspace / "indices"
        assert sorted(p.name for p in index_dir.glob("*.afix")) == [
            "haydn.afix", "mozart.afix", "salieri.afix", "visual.afix",
        ]
        assert (index_dir / "haydn.csv").exists()

    def test_haydn_csv_matches_va_oracle(self, workspace):
        import math

        catalog_dir = workspace / "catalog"
        index_dir = workspace / "indices"
        records = {}
        for name in ("music.jsonl", "paintings.jsonl"):
            for line in (catalog_dir / name).read_text().splitlines():
                obj = json.loads(line)
                records[obj["id"]] = (obj["valence"], obj["arousal"])
        lines = (index_dir / "haydn.csv").read_text().strip().splitlines()
        header = lines[0].split(",")[1:]
        first = lines[1].split(",")
        music_va = records[first[0]]
        for painting_id, value in zip(header[:5], first[1:6]):
            pv = records[painting_id]
            expected = math.hypot(music_va[0] - pv[0], music_va[1] - pv[1])
            assert abs(float(value) - expected) < 1e-6

    def test_corrupt_bundle_is_integrity_error(self, workspace, tmp_path, capsys):
        bundle_dir = workspace / "bundle"
        clone = tmp_path / "bundle"
        clone.mkdir()
        for path in bundle_dir.iterdir():
            (clone / path.name).write_bytes(path.read_bytes())
        target = clone / "joint_music.afmx"
        raw = bytearray(target.read_bytes())
        raw[-2] ^= 0xFF
        target.write_bytes(bytes(raw))
        code = main(["build-index", "--bundle", str(clone), "--engine", "mozart",
                     "--out", str(tmp_path / "idx")])
        assert code == EXIT_INTEGRITY


class TestRecommend:
    def write_ratings(self, tmp_path, ratings):
        path = tmp_path / "ratings.json"
        path.write_text(json.dumps(ratings))
        return path

    def test_json_output_ranks_by_weighted_distance(self, workspace, tmp_path, capsys):
        ratings = self.write_ratings(tmp_path, [
            {"item_id": "m0000", "rating": 1},
            {"item_id": "m0001", "rating": 4},
        ])
        code = main(["recommend", "--index", str(workspace / "indices" / "haydn.afix"),
                     "--ratings", str(ratings), "--n", "30", "--json"])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["engine"] == "haydn"
        assert len(payload["entries"]) == 30
        distances = [e["distance"] for e in payload["entries"]]
        assert distances == sorted(distances)

        # brute-force oracle over the loaded index
        from affectcdr.engines import load_index

        index = load_index(workspace / "indices" / "haydn.afix")
        i0 = index.row_ids.index("m0000")
        i1 = index.row_ids.index("m0001")
        agg = {
            pid: 0.2 * float(index.values[i0, j]) + 0.8 * float(index.values[i1, j])
            for j, pid in enumerate(index.col_ids)
        }
        expected = sorted(index.col_ids, key=lambda pid: (agg[pid], pid))
        assert [e["painting_id"] for e in payload["entries"]] == expected

    def test_unknown_item_is_domain_error(self, workspace, tmp_path, capsys):
        ratings = self.write_ratings(tmp_path, [{"item_id": "ghost", "rating": 3}])
        code = main(["recommend", "--index", str(workspace / "indices" / "haydn.afix"),
                     "--ratings", str(ratings)])
        assert code == EXIT_DOMAIN

    def test_attention_flag_excluded(self, workspace, tmp_path, capsys):
        with_check = self.write_ratings(tmp_path, [
            {"item_id": "m0002", "rating": 5},
            {"item_id": "m0003", "rating": 1, "is_attention_check": True},
        ])
        code = main(["recommend", "--index", str(workspace / "indices" / "haydn.afix"),
                     "--ratings", str(with_check), "--json"])
        assert code == EXIT_OK
        first = json.loads(capsys.readouterr().out)

        solo = self.write_ratings(tmp_path, [{"item_id": "m0002", "rating": 5}])
        main(["recommend", "--index", str(workspace / "indices" / "haydn.afix"),
              "--ratings", str(solo), "--json"])
        second = json.loads(capsys.readouterr().out)
        assert first["entries"] == second["entries"]


class TestEvaluate:
    def test_overlap_identity(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        ranking = [f"p{i}" for i in range(6)]
        a.write_text(json.dumps(ranking))
        b.write_text(json.dumps(ranking))
        code = main(["evaluate", "overlap", "--ranking-a", str(a), "--ranking-b", str(b),
                     "--k", "3", "--json"])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["overlap_at_k"] == 1.0 and payload["rank_correlation"] == 1.0

    def test_probe_on_haydn_index(self, workspace, capsys):
        code = main(["evaluate", "probe",
                     "--index", str(workspace / "indices" / "haydn.afix"),
                     "--clusters", str(workspace / "catalog" / "clusters.json"), "--json"])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["top1_accuracy"] >= 0.9


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class TestServe:
    def test_missing_indices_refuses_to_start(self, workspace, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main([
            "serve",
            "--music", str(workspace / "catalog" / "music.jsonl"),
            "--paintings", str(workspace / "catalog" / "paintings.jsonl"),
            "--indices", str(empty),
            "--log", str(tmp_path / "events.log"),
        ])
        assert code == EXIT_INPUT
        assert "refusing to start" in capsys.readouterr().err

    def test_serve_healthz_and_graceful_shutdown(self, workspace, tmp_path):
        port = _free_port()
        log_path = tmp_path / "events.log"
        proc = subprocess.Popen(
            [
                sys.executable, "-m", "affectcdr.cli", "serve",
                "--music", str(workspace / "catalog" / "music.jsonl"),
                "--paintings", str(workspace / "catalog" / "paintings.jsonl"),
                "--indices", str(workspace / "indices"),
                "--log", str(log_path),
                "--listen", f"127.0.0.1:{port}",
            ],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
        )
        try:
            base = f"http://127.0.0.1:{port}"
            deadline = time.time() + 30
            health = None
            while time.time() < deadline:
                try:
                    health = httpx.get(f"{base}/healthz", timeout=1.0)
                    break
                except httpx.TransportError:
                    time.sleep(0.2)
            assert health is not None and health.status_code == 200
            assert "haydn" in health.json()["engines"]

            created = httpx.post(f"{base}/sessions", json={"engine": "haydn", "seed": 1})
            assert created.status_code == 201

            proc.send_signal(signal.SIGTERM)
            proc.wait(timeout=15)
            events = [json.loads(line) for line in log_path.read_text().splitlines()]
            assert events and events[0]["type"] == "session_created"
        finally:
            if proc.poll() is None:
                proc.kill()
