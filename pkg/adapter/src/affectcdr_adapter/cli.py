"""Extraction command line mirroring the primary engine's flag style."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import BackendUnavailable
from .extract import ExtractionJob, extract_descriptions, extract_music, extract_painting


def _collect_assets(patterns: list[str]) -> list[Path]:
    import glob as globlib

    assets: list[Path] = []
    for pattern in patterns:
        path = Path(pattern)
        if path.is_dir():
            assets.extend(sorted(p for p in path.iterdir() if p.is_file()))
        elif path.exists():
            assets.append(path)
        else:
            matches = sorted(globlib.glob(pattern))
            if not matches:
                raise FileNotFoundError(f"no assets match {pattern!r}")
            assets.extend(Path(m) for m in matches)
    return assets


def _load_labels(path: str) -> dict[str, dict]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _make_job(args, modality: str) -> ExtractionJob:
    return ExtractionJob(
        assets=_collect_assets(args.assets),
        modality=modality,
        output_path=Path(args.out),
        labels=_load_labels(args.labels),
        extractor_id=args.backend,
        cache_dir=Path(args.cache) if args.cache else None,
        sidecar=args.sidecar,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="affectcdr-extract",
        description="Produce catalog feature files from audio/image assets.",
    )
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, backends):
        p.add_argument("--assets", nargs="+", required=True, help="files, dirs or globs")
        p.add_argument("--labels", required=True, help="JSON map: asset id -> V-A/emotions")
        p.add_argument("--out", required=True, help="output .jsonl path")
        p.add_argument("--backend", choices=backends, default="stub")
        p.add_argument("--cache", help="content-addressed cache directory")
        p.add_argument("--sidecar", action="store_true", help="write features to an AFMX sidecar")

    common(sub.add_parser("music", help="audio feature extraction"), ["stub", "mert"])
    common(sub.add_parser("paintings", help="visual feature extraction"), ["stub", "resnet50"])
    pd = sub.add_parser("descriptions", help="semantic description embedding")
    common(pd, ["stub", "bert"])
    pd.add_argument("--modality", choices=["music", "painting"], required=True)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)

    try:
        if args.command == "music":
            report = extract_music(_make_job(args, "music"))
        elif args.command == "paintings":
            report = extract_painting(_make_job(args, "painting"))
        else:
            job = _make_job(args, args.modality)
            if args.cache is None:
                print("error: descriptions need --cache", file=sys.stderr)
                return 2
            from .backends import StubDescriber

            describer = StubDescriber() if args.backend == "stub" else None
            report = extract_descriptions(job, describer=describer)
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BackendUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0 if report.written > 0 else 3


if __name__ == "__main__":
    sys.exit(main())
