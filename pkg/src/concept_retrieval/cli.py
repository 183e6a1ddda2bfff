"""Command-line front end.

    concept-retrieval extract --embeddings data.cret --query 42 --concepts 3 --seed 7
    concept-retrieval eval    --embeddings data.cret --num-queries 5
    concept-retrieval synth   --output data.cret --truth truth.json --seed 7
    concept-retrieval convert --input data.csv --output data.cret
    concept-retrieval bench   --embeddings data.cret --truth truth.json

Exit codes: 0 success, 1 usage or I/O error, 2 no concept extracted.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExtractionConfig
from .embedding_store import (
    EmbeddingDataset,
    estimate_similarity_stats,
    load_embeddings,
    normalize_rows,
    npy_dtype,
    save_embeddings,
)
from .errors import ConceptRetrievalError
from .extractor import extract_concepts
from .metrics import (
    MetricsConfig,
    baseline_kmeans,
    baseline_retrieval,
    build_concept_distribution,
    build_concept_pool,
    evaluate_baseline,
    evaluate_result,
)
from .synthetic import PlantedSpec, PlantedTruth, generate_planted, score_recovery, write_planted

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_EMPTY = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for empty results here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_dataset_args(p, query=True):
    p.add_argument("--embeddings", required=True, help="binary (.cret), .csv or .npy file")
    if query:
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--query", help="row id of the query image")
        g.add_argument("--query-index", type=int, help="row index of the query image")


def _add_config_args(p):
    d = ExtractionConfig()
    p.add_argument("--concepts", type=int, default=d.num_concepts)
    p.add_argument("--z", type=float, default=d.z, help="neighborhood threshold, in similarity std units")
    p.add_argument("--tau", type=float, default=d.tau)
    p.add_argument("--tau1", type=float, default=d.tau1)
    p.add_argument("--update-fraction", type=float, default=d.update_fraction)
    p.add_argument("--retrieve-n", type=int, default=d.retrieve_n)
    p.add_argument("--max-candidates", type=int, default=d.max_candidates)
    p.add_argument("--seed", type=int, default=d.seed)


def _add_output_args(p):
    p.add_argument("--output", help="write here instead of standard output")
    p.add_argument("--format", choices=["json"], default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="concept-retrieval", description="Multi-concept retrieval over image embeddings.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="extract concepts for one query")
    _add_dataset_args(p)
    _add_config_args(p)
    _add_output_args(p)
    p.add_argument("--timings", action="store_true",
                   help="include per-stage wall time (makes output run-dependent)")
    p.add_argument("--metrics", action="store_true", help="score the concepts (builds a reference pool)")
    p.add_argument("--pool-images", type=int, default=MetricsConfig().pool_images)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="compare the extractor with the two baselines")
    _add_dataset_args(p, query=False)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--queries", nargs="+", help="query row ids")
    g.add_argument("--query-indices", type=int, nargs="+")
    g.add_argument("--num-queries", type=int, default=5, help="seeded random queries")
    _add_config_args(p)
    _add_output_args(p)
    p.add_argument("--pool-images", type=int, default=MetricsConfig().pool_images)
    p.add_argument("--ids-k", type=int, default=MetricsConfig().ids_k)
    p.set_defaults(func=cmd_eval)

    d = PlantedSpec()
    p = sub.add_parser("synth", help="write a planted-concept dataset and its truth file")
    p.add_argument("--output", required=True, help="dataset path (canonical binary)")
    p.add_argument("--truth", required=True, help="truth JSON path")
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--d", type=int, default=d.d)
    p.add_argument("--g", type=int, default=d.g)
    p.add_argument("--concepts-per-image", type=int, nargs=2, default=list(d.concepts_per_image),
                   metavar=("MIN", "MAX"))
    p.add_argument("--noise-sigma", type=float, default=d.noise_sigma)
    p.add_argument("--attribute-axes", type=int, nargs="+", default=[0])
    p.add_argument("--attribute-scale", type=float, default=d.attribute_scale)
    p.add_argument("--correlation", type=float, default=d.correlation)
    p.add_argument("--include-directions", action="store_true")
    p.add_argument("--seed", type=int, default=d.seed)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="convert between CSV, NPY and canonical binary")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--from", dest="src_format", choices=["binary", "csv", "npy"])
    p.add_argument("--to", dest="dst_format", choices=["binary", "csv", "npy"], default=None)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("bench", help="score extraction against planted truth")
    _add_dataset_args(p, query=False)
    p.add_argument("--truth", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--query-indices", type=int, nargs="+")
    g.add_argument("--num-queries", type=int, default=20)
    p.add_argument("--min-planted", type=int, default=3,
                   help="random queries carry at least this many planted concepts")
    _add_config_args(p)
    _add_output_args(p)
    p.add_argument("--timings", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


# -- helpers ----------------------------------------------------------------

def _config(args) -> ExtractionConfig:
    try:
        return ExtractionConfig(num_concepts=args.concepts, z=args.z, tau=args.tau, tau1=args.tau1,
                                update_fraction=args.update_fraction, retrieve_n=args.retrieve_n,
                                max_candidates=args.max_candidates, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(path) -> EmbeddingDataset:
    if not Path(path).exists():
        raise UsageError(f"{path}: no such file")
    return normalize_rows(load_embeddings(path))


def _query_index(ds: EmbeddingDataset, args) -> int:
    if args.query is not None:
        try:
            return ds.index_of(args.query)
        except KeyError:
            raise UsageError(f"unknown query id {args.query!r}") from None
    if not 0 <= args.query_index < ds.n:
        raise UsageError(f"query index {args.query_index} out of range for {ds.n} rows")
    return args.query_index


def _emit(doc, args) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if getattr(args, "output", None):
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _seeded_queries(n: int, count: int, seed: int, eligible=None) -> list:
    pool = np.arange(n) if eligible is None else np.asarray(eligible, dtype=int)
    if len(pool) == 0:
        raise UsageError("no eligible query rows")
    rng = np.random.default_rng([seed & 0xFFFFFFFF, 0x9E3])
    return sorted(int(i) for i in rng.choice(pool, size=min(count, len(pool)), replace=False))


def result_document(ds: EmbeddingDataset, result, metrics=None, timings=False) -> dict:
    ids = ds.ids
    concepts = []
    for c in result.concepts:
        cs = c.concept_set
        concepts.append({
            "ordinal": c.ordinal,
            "surrogate_id": ids[cs.surrogate.candidate_index],
            "sep_score": float(cs.surrogate.sep_score),
            "member_ids": [ids[i] for i in cs.member_indices],
            "retrieved": [{"id": ids[i], "similarity": float(s)}
                          for i, s in zip(c.retrieved.indices, c.retrieved.similarities)],
            "k": int(c.subspace.k),
            "captured_ratio": float(c.subspace.captured_ratio),
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "query": {"id": ids[result.query_index], "index": int(result.query_index)},
        "config": result.config.to_dict(),
        "termination": result.termination.value,
        "stop_reason": result.stop_reason,
        "concepts": concepts,
        "metrics": None if metrics is None else metrics.to_dict(),
        "timings": ({k: round(v * 1000.0, 3) for k, v in result.timings.items()} if timings else None),
    }


# -- commands ---------------------------------------------------------------

def cmd_extract(args) -> int:
    config = _config(args)
    ds = _load(args.embeddings)
    q = _query_index(ds, args)
    stats = estimate_similarity_stats(ds, config.stats_sample_pairs, config.seed)
    result = extract_concepts(ds, q, config, stats)
    report = None
    if args.metrics and result.concepts:
        pool = build_concept_pool(ds, config, args.pool_images, config.seed, stats)
        report = evaluate_result(ds, result, build_concept_distribution(ds, q, pool))
    _emit(result_document(ds, result, report, args.timings), args)
    return EXIT_OK if result.concepts else EXIT_EMPTY


def _mean_of(reports, key):
    vals = [getattr(r.image_level, key) for r in reports if getattr(r.image_level, key) is not None]
    return float(np.mean(vals)) if vals else None


def cmd_eval(args) -> int:
    config = _config(args)
    ds = _load(args.embeddings)
    if args.queries:
        try:
            queries = [ds.index_of(q) for q in args.queries]
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
    elif args.query_indices:
        queries = args.query_indices
        if any(not 0 <= q < ds.n for q in queries):
            raise UsageError("query index out of range")
    else:
        queries = _seeded_queries(ds.n, args.num_queries, config.seed)
    stats = estimate_similarity_stats(ds, config.stats_sample_pairs, config.seed)
    pool = build_concept_pool(ds, config, args.pool_images, config.seed, stats)
    mcfg = MetricsConfig(ids_k=args.ids_k, pool_images=args.pool_images)
    reports = {"ours": [], "kmeans": [], "retrieval": []}
    per_query = []
    for q in queries:
        dist = build_concept_distribution(ds, q, pool)
        result = extract_concepts(ds, q, config, stats)
        entry = {"query": ds.ids[q], "concepts": len(result.concepts)}
        if result.concepts:
            r = evaluate_result(ds, result, dist, mcfg.ids_k)
            reports["ours"].append(r)
            entry["ours"] = r.to_dict()
        km = baseline_kmeans(ds, q, mcfg.baseline_sets, mcfg.baseline_total, config.seed,
                             mcfg.kmeans_restarts, mcfg.kmeans_tol, mcfg.kmeans_max_iter)
        rt = baseline_retrieval(ds, q, mcfg.baseline_total, mcfg.baseline_sets)
        for name, base in (("kmeans", km), ("retrieval", rt)):
            r = evaluate_baseline(ds, q, base, dist, mcfg.ids_k)
            reports[name].append(r)
            entry[name] = r.to_dict()
        per_query.append(entry)
    table = {name: {"queries": len(rs), **{k: _mean_of(rs, k) for k in ("im_rs", "im_cs", "im_ids", "im_cds")}}
             for name, rs in reports.items()}
    _emit({"schema_version": SCHEMA_VERSION, "K": mcfg.ids_k, "pool_size": int(len(pool)),
           "config": config.to_dict(), "table": table, "per_query": per_query}, args)
    return EXIT_OK if reports["ours"] else EXIT_EMPTY


def cmd_synth(args) -> int:
    axes = args.attribute_axes[0] if len(args.attribute_axes) == 1 else tuple(args.attribute_axes)
    spec = PlantedSpec(n=args.n, d=args.d, g=args.g, concepts_per_image=tuple(args.concepts_per_image),
                       noise_sigma=args.noise_sigma, attribute_axes=axes,
                       attribute_scale=args.attribute_scale, correlation=args.correlation, seed=args.seed)
    ds, truth = generate_planted(spec)
    write_planted(ds, truth, args.output, args.truth, args.include_directions)
    return EXIT_OK


def _format_of(path, given):
    if given:
        return given
    return {".csv": "csv", ".npy": "npy"}.get(Path(path).suffix.lower(), "binary")


def cmd_convert(args) -> int:
    src = _format_of(args.input, args.src_format)
    dst = _format_of(args.output, args.dst_format)
    if not Path(args.input).exists():
        raise UsageError(f"{args.input}: no such file")
    ds = load_embeddings(args.input, src)
    if src == "npy" and dst != "csv" and npy_dtype(args.input).itemsize == 8:
        print("warning: float64 input narrowed to float32", file=sys.stderr)
    save_embeddings(ds, args.output, dst)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _config(args)
    ds = _load(args.embeddings)
    truth = PlantedTruth.from_json(json.loads(Path(args.truth).read_text(encoding="utf-8")))
    if len(truth.labels) != ds.n:
        raise UsageError(f"truth has {len(truth.labels)} labels for {ds.n} rows")
    if args.query_indices:
        queries = args.query_indices
    else:
        eligible = [i for i, lab in enumerate(truth.labels) if len(lab) >= args.min_planted]
        queries = _seeded_queries(ds.n, args.num_queries, config.seed, eligible)
    stats = estimate_similarity_stats(ds, config.stats_sample_pairs, config.seed)
    rows = []
    for q in queries:
        result = extract_concepts(ds, q, config, stats)
        score = score_recovery(result, truth)
        row = {"query": ds.ids[q], "concepts": len(result.concepts), "termination": result.termination.value,
               "purity": [float(p) for p in score.purity], "matched": list(score.matched),
               "mean_purity": score.mean_purity, "coverage": score.coverage}
        if args.timings:
            row["timings"] = {k: round(v * 1000.0, 3) for k, v in result.timings.items()}
        rows.append(row)
    _emit({"schema_version": SCHEMA_VERSION, "config": config.to_dict(),
           "mean_purity": float(np.mean([r["mean_purity"] for r in rows])),
           "mean_coverage": float(np.mean([r["coverage"] for r in rows])),
           "queries": rows}, args)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:          # --help, or a usage error already reported
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (ConceptRetrievalError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
