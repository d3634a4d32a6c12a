"""Command line interface.

Subcommands mirror the pipeline stages; each takes --config plus repeatable
--set key=value overrides.  Exit codes: 0 success, 2 configuration or usage
problems, 3 ingest problems (missing/malformed/mismatched data), 4 failures
inside a pipeline stage.
"""

from __future__ import annotations

import argparse
import sys

from .cache import StageCache
from .clustering import save_center_diagnostics
from .config import apply_overrides, default_config, parse_config
from .datasets import generate_synthetic_movielens
from .errors import (ConfigError, DatasetEmpty, IngestMismatch, LocalRecError,
                     ParseError, StageError)
from .pipeline import (evaluate_cv, format_report_table, ingest, run_full,
                       train_components, write_report_csv, write_report_json)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGEST = 3
EXIT_STAGE = 4


def _add_common(sub):
    sub.add_argument("--config", help="path to a key = value config file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     dest="overrides", help="override one config key")
    sub.add_argument("--seed", type=int, help="override the root seed")
    sub.add_argument("--threads", type=int, help="worker threads")
    sub.add_argument("--cache-dir", help="stage cache directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="localrec",
        description="Local clustered top-N recommendation pipeline")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic rating dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--users", type=int, default=943)
    p.add_argument("--items", type=int, default=1682)
    p.add_argument("--interactions", type=int, default=100000)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--seed", type=int, default=7)

    p = subs.add_parser("ingest", help="load a dataset and print its shape")
    _add_common(p)

    p = subs.add_parser("project", help="write one-mode projections")
    _add_common(p)
    p.add_argument("--out-dir", required=True)

    p = subs.add_parser("embed", help="write walk embeddings for both sides")
    _add_common(p)
    p.add_argument("--out-dir", required=True)

    p = subs.add_parser("cluster", help="write cluster assignments")
    _add_common(p)
    p.add_argument("--out-dir", required=True)

    p = subs.add_parser("recommend", help="write top-N lists for every user")
    _add_common(p)
    p.add_argument("--out-dir", required=True)

    p = subs.add_parser("pipeline", help="run every stage, write all artifacts")
    _add_common(p)
    p.add_argument("--out-dir", required=True)

    p = subs.add_parser("evaluate", help="k-fold cross-validated metrics")
    _add_common(p)
    p.add_argument("--json", dest="json_out", help="write the report as JSON")
    p.add_argument("--csv", dest="csv_out", help="write per-fold rows as CSV")
    return parser


def _load_config(args) -> dict:
    cfg = parse_config(args.config) if args.config else default_config()
    cfg = apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        cfg["threads"] = args.threads
    if getattr(args, "cache_dir", None):
        cfg["cache_dir"] = args.cache_dir
    return cfg


def _run(args) -> int:
    if args.command == "synth":
        generate_synthetic_movielens(args.out, n_users=args.users,
                                     n_items=args.items,
                                     n_interactions=args.interactions,
                                     n_groups=args.groups, seed=args.seed)
        print("wrote %s (%d users, %d items, %d interactions)"
              % (args.out, args.users, args.items, args.interactions))
        return EXIT_OK

    cfg = _load_config(args)
    cache = StageCache(cfg["cache_dir"] or None)

    if args.command == "ingest":
        ing = ingest(cfg)
        print("users=%d items=%d interactions=%d categories=%d"
              % (ing.n_users, ing.n_items, len(ing.u_idx), len(ing.categories)))
        return EXIT_OK

    if args.command in ("project", "embed", "cluster"):
        import os

        import numpy as np
        ing = ingest(cfg)
        os.makedirs(args.out_dir, exist_ok=True)
        mask = np.ones(len(ing.u_idx), bool)
        user_side, item_side = train_components(ing, mask, cfg, cache, "full")
        ing.users.save(os.path.join(args.out_dir, "users.tsv"))
        ing.items.save(os.path.join(args.out_dir, "items.tsv"))
        for side, art in (("user", user_side), ("item", item_side)):
            art.projection.save(os.path.join(
                args.out_dir, "%s_projection.tsv" % side))
            if args.command in ("embed", "cluster"):
                art.embedding.save(os.path.join(
                    args.out_dir, "%s_embedding.txt" % side))
            if args.command == "cluster":
                art.clusters.save(os.path.join(
                    args.out_dir, "%s_clusters.tsv" % side))
                if art.detection is not None:
                    save_center_diagnostics(os.path.join(
                        args.out_dir, "%s_density.csv" % side), art.detection)
                print("%s clusters: %d (cold=%s)"
                      % (side, art.clusters.k, art.clusters.cold_cluster))
        print("artifacts in %s" % args.out_dir)
        return EXIT_OK

    if args.command in ("recommend", "pipeline"):
        paths = run_full(cfg, args.out_dir, cache)
        print("recommendations: %s" % paths["recommendations"])
        return EXIT_OK

    if args.command == "evaluate":
        report = evaluate_cv(cfg, cache)
        if args.json_out:
            write_report_json(args.json_out, report)
        if args.csv_out:
            write_report_csv(args.csv_out, report)
        print(format_report_table(report))
        return EXIT_OK

    raise ConfigError("unknown command %r" % args.command)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return _run(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, DatasetEmpty, IngestMismatch, FileNotFoundError) as exc:
        print("ingest error: %s" % exc, file=sys.stderr)
        return EXIT_INGEST
    except StageError as exc:
        print("%s" % exc, file=sys.stderr)
        return EXIT_STAGE
    except LocalRecError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
