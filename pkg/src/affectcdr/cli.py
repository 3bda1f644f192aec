"""Operator command line: synth, preprocess, build-index, recommend, evaluate, serve.

Exit codes: 0 success, 2 input error, 3 domain error, 4 integrity error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import catalog as cat
from . import engines as eng
from . import evaluation as ev
from .affect import VALexicon
from .binio import file_checksum_hex
from .errors import (
    AffectCdrError,
    CatalogError,
    INPUT_ERRORS,
    IntegrityError,
    InvalidParameterError,
)
from .pipeline import PreprocessConfig, load_bundle, preprocess_cdr, save_bundle

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DOMAIN = 3
EXIT_INTEGRITY = 4

ENGINE_CHOICES = [e.value for e in eng.Engine]


def _require_file(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CatalogError(f"{flag}: no such file: {p}")
    return p


def _load_catalog(args) -> cat.Catalog:
    lexicon = VALexicon.load(_require_file(args.lexicon, "--lexicon")) if args.lexicon else None
    return cat.load_catalog(
        _require_file(args.music, "--music"),
        _require_file(args.paintings, "--paintings"),
        lexicon=lexicon,
        music_va_scale=args.music_va_scale,
    )


def _emit(args, payload: dict, text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    corpus = cat.synth_catalog(
        seed=args.seed,
        n_music=args.n_music,
        n_paintings=args.n_paintings,
        n_clusters=args.clusters,
        feature_dim_m=args.dim_music,
        feature_dim_p=args.dim_paintings,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cat.save_catalog_jsonl(corpus.music, out / "music.jsonl")
    cat.save_catalog_jsonl(corpus.paintings, out / "paintings.jsonl")
    labels = cat.cluster_labels(corpus)
    (out / "clusters.json").write_text(json.dumps(labels, sort_keys=True) + "\n", encoding="utf-8")
    payload = {
        "music": str(out / "music.jsonl"),
        "paintings": str(out / "paintings.jsonl"),
        "clusters": str(out / "clusters.json"),
        "n_music": corpus.n_music,
        "n_paintings": corpus.n_paintings,
    }
    _emit(args, payload, f"wrote {corpus.n_music} music / {corpus.n_paintings} painting records to {out}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    corpus = _load_catalog(args)
    config = PreprocessConfig(
        seed=args.seed,
        sigma=args.sigma,
        margin=args.margin,
        ae_hidden=tuple(int(x) for x in args.ae_hidden.split(",") if x.strip()),
        max_epochs=args.epochs,
        patience=args.patience,
        batch_size=args.batch_size,
        validation_fraction=args.val_fraction,
        eta=args.eta,
    )
    bundle = preprocess_cdr(corpus, config)
    save_bundle(bundle, args.out)
    manifest = json.loads((Path(args.out) / "bundle.json").read_text(encoding="utf-8"))
    checksums = {
        name: entry["checksum"]
        for section in ("matrices", "checkpoints")
        for name, entry in manifest[section].items()
    }
    text = "\n".join(f"{checksum}  {name}" for name, checksum in sorted(checksums.items()))
    _emit(args, {"out": str(args.out), "checksums": checksums}, f"bundle written to {args.out}\n{text}")
    return EXIT_OK


def _build_one(engine: str, bundle, metric: str) -> eng.SimilarityIndex:
    if engine == eng.Engine.HAYDN.value:
        return eng.haydn_index_from_va(
            bundle.music_ids, bundle.va_music, bundle.painting_ids, bundle.va_paintings
        )
    if engine == eng.Engine.MOZART.value:
        return eng.build_mozart_index(bundle)
    if engine == eng.Engine.SALIERI.value:
        return eng.build_salieri_index(bundle, metric=metric)
    if engine == eng.Engine.VISUAL.value:
        return eng.build_visual_index(bundle.visual_paintings, bundle.painting_ids)
    raise InvalidParameterError(f"unknown engine {engine!r}")


def cmd_build_index(args) -> int:
    bundle = load_bundle(args.bundle)
    engines = ENGINE_CHOICES if args.engine == "all" else [args.engine]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for engine in engines:
        index = _build_one(engine, bundle, args.salieri_metric)
        path = out / f"{engine}.afix"
        eng.save_index(index, path)
        written[engine] = {"file": str(path), "checksum": file_checksum_hex(path)}
        if args.dump_csv:
            eng.index_to_csv(index, out / f"{engine}.csv")
    text = "\n".join(f"{entry['checksum']}  {entry['file']}" for entry in written.values())
    _emit(args, {"indices": written}, text)
    return EXIT_OK


def read_ratings_file(path: str | Path) -> list[eng.PreferenceRating]:
    raw = json.loads(_require_file(str(path), "--ratings").read_text(encoding="utf-8"))
    if isinstance(raw, dict) and "ratings" in raw:
        raw = raw["ratings"]
    if not isinstance(raw, list) or not raw:
        raise CatalogError(f"{path}: expected a non-empty JSON list of ratings")
    ratings = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "item_id" not in entry or "rating" not in entry:
            raise CatalogError(f"{path}: rating #{i} needs 'item_id' and 'rating'")
        ratings.append(
            eng.PreferenceRating(
                item_id=entry["item_id"],
                rating=entry["rating"],
                is_attention_check=bool(entry.get("is_attention_check", False)),
            )
        )
    return ratings


def cmd_recommend(args) -> int:
    index = eng.load_index(_require_file(args.index, "--index"))
    ratings = read_ratings_file(args.ratings)
    result = eng.recommend(index, ratings, n=args.n)
    payload = {
        "engine": result.engine.value,
        "truncated": result.truncated,
        "entries": [
            {"painting_id": e.painting_id, "distance": e.distance} for e in result.entries
        ],
    }
    lines = [f"top-{len(result.entries)} paintings ({result.engine.value})"]
    for rank, entry in enumerate(result.entries, start=1):
        lines.append(f"{rank:>3}. {entry.painting_id}  d={entry.distance:.6f}")
    if result.truncated:
        lines.append("(truncated: fewer candidates than requested)")
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def _read_ranking(path: str, flag: str) -> list[str]:
    raw = json.loads(_require_file(path, flag).read_text(encoding="utf-8"))
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        raise CatalogError(f"{flag}: expected a JSON array of item ids")
    return raw


def cmd_evaluate(args) -> int:
    if args.eval_command == "overlap":
        report = ev.ranking_overlap(
            _read_ranking(args.ranking_a, "--ranking-a"),
            _read_ranking(args.ranking_b, "--ranking-b"),
            k=args.k,
            label_a=Path(args.ranking_a).name,
            label_b=Path(args.ranking_b).name,
        )
    else:
        index = eng.load_index(_require_file(args.index, "--index"))
        clusters = json.loads(_require_file(args.clusters, "--clusters").read_text(encoding="utf-8"))
        report = ev.retrieval_probe(index, clusters)
    _emit(args, report.to_dict(), report.to_text())
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import SessionService, create_app, load_allowlist

    corpus = _load_catalog(args)
    indices_dir = Path(args.indices)
    if not indices_dir.is_dir():
        raise CatalogError(f"--indices: no such directory: {indices_dir}")
    indices = {}
    for path in sorted(indices_dir.glob("*.afix")):
        index = eng.load_index(path)
        indices[index.engine] = index
    if not indices:
        raise CatalogError(f"--indices: no .afix index files in {indices_dir} (refusing to start)")

    allowlist = load_allowlist(_require_file(args.allowlist, "--allowlist")) if args.allowlist else None
    service = SessionService(corpus, indices, args.log, allowlist=allowlist)
    app = create_app(service, static_dir=args.static_dir)

    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        raise InvalidParameterError(f"--listen must be HOST:PORT, got {args.listen!r}")
    print(f"serving engines {sorted(e.value for e in indices)} on http://{args.listen}")
    try:
        uvicorn.run(app, host=host, port=int(port), log_level="warning")
    finally:
        service.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affectcdr",
        description="Cross-domain recommendation: music preferences to therapeutic paintings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic catalog")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n-music", type=int, default=40)
    p.add_argument("--n-paintings", type=int, default=40)
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--dim-music", type=int, default=32)
    p.add_argument("--dim-paintings", type=int, default=48)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="train reductions and write an embedding bundle")
    p.add_argument("--music", required=True)
    p.add_argument("--paintings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--music-va-scale", choices=cat.VA_SCALES, default="unit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--ae-hidden", default="1024,512")
    p.add_argument("--eta", type=float, default=1e-3)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("build-index", help="build engine similarity indices from a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--engine", choices=ENGINE_CHOICES + ["all"], default="all")
    p.add_argument("--out", required=True)
    p.add_argument("--salieri-metric", choices=["cosine", "euclidean"], default="cosine")
    p.add_argument("--dump-csv", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("recommend", help="rank paintings for a ratings file")
    p.add_argument("--index", required=True)
    p.add_argument("--ratings", required=True)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("evaluate", help="offline evaluation reports")
    eval_sub = p.add_subparsers(dest="eval_command", required=True)
    po = eval_sub.add_parser("overlap", help="top-k overlap and rank correlation")
    po.add_argument("--ranking-a", required=True)
    po.add_argument("--ranking-b", required=True)
    po.add_argument("--k", type=int, required=True)
    po.add_argument("--json", action="store_true")
    po.set_defaults(func=cmd_evaluate)
    pp = eval_sub.add_parser("probe", help="cluster retrieval probe over an index")
    pp.add_argument("--index", required=True)
    pp.add_argument("--clusters", required=True)
    pp.add_argument("--json", action="store_true")
    pp.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the session HTTP service")
    p.add_argument("--music", required=True)
    p.add_argument("--paintings", required=True)
    p.add_argument("--indices", required=True, help="directory of .afix files")
    p.add_argument("--log", required=True, help="event log path")
    p.add_argument("--listen", default="127.0.0.1:8000")
    p.add_argument("--lexicon")
    p.add_argument("--music-va-scale", choices=cat.VA_SCALES, default="unit")
    p.add_argument("--allowlist")
    p.add_argument("--static-dir", help="optionally mount a built web UI at /app")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except AffectCdrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
