"""Command-line entry point.

Subcommands: `train`, `eval hit-ratio`, `eval gen-transforms`,
`eval gen-encoder`, `bench search`, `datagen build`, `export embeddings`.
Every run starts from an ExperimentConfig (JSON via --config, defaults
otherwise) with --seed / --out-dir / --jobs overrides, and writes its
reports under the output directory.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .datagen import R20ALL, R20SHIFT, build_dataset, r20all_spec, r20shift_spec, save_dataset
from .harness import (
    ExperimentConfig,
    HarnessError,
    export_embeddings,
    run_encoder_generalisation,
    run_hit_ratio,
    run_search_benchmark,
    run_transform_generalisation,
    train_artifacts,
    write_csv,
    write_report,
)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridsynth",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="ExperimentConfig as JSON")
    parser.add_argument("--seed", type=int, help="override the training seed")
    parser.add_argument("--out-dir", type=Path, help="report/artifact directory")
    parser.add_argument("--jobs", type=int, help="parallel workers for evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", help="train the configured artifacts and stop")

    ev = sub.add_parser("eval", help="run an evaluation suite")
    ev_sub = ev.add_subparsers(dest="suite", required=True)
    ev_sub.add_parser("hit-ratio", help="per-length hit-ratio table")
    gt = ev_sub.add_parser("gen-transforms", help="transform-generalisation sweep")
    gt.add_argument("--sizes", type=_int_list, help="sweep sizes, comma-separated")
    gt.add_argument("--axis", choices=("shapes", "positions"), default="shapes")
    ge = ev_sub.add_parser("gen-encoder", help="encoder-generalisation sweep")
    ge.add_argument("--experiment", type=int, choices=(1, 2, 3, 4), required=True)
    ge.add_argument("--sizes", type=_int_list, help="sweep sizes, comma-separated")

    be = sub.add_parser("bench", help="run a benchmark")
    be_sub = be.add_subparsers(dest="bench", required=True)
    bs = be_sub.add_parser("search", help="naive/pruned/beam timing table")
    bs.add_argument("--algorithms", default="naive,pruned",
                    help="comma-separated subset of naive,pruned,beam")
    bs.add_argument("--lengths", type=_int_list, help="program lengths to benchmark")

    dg = sub.add_parser("datagen", help="dataset utilities")
    dg_sub = dg.add_subparsers(dest="datagen", required=True)
    db = dg_sub.add_parser("build", help="enumerate/sample a program dataset to disk")
    db.add_argument("--dataset", choices=(R20ALL, R20SHIFT), default=R20SHIFT)

    ex = sub.add_parser("export", help="export tables")
    ex_sub = ex.add_subparsers(dest="export", required=True)
    ex_sub.add_parser("embeddings", help="latent vectors of every singleton board")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    else:
        cfg = ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, train_seed=args.seed)
    if args.out_dir is not None:
        cfg = replace(cfg, out_dir=str(args.out_dir))
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    return cfg


def _report_rows(reports) -> list[dict]:
    rows = []
    for r in reports:
        row = {"label": r.label, "hit_ratio": r.hit_ratio, "tasks": r.tasks,
               "hits": r.hits, "misses": r.misses, "timeouts": r.timeouts}
        for L, cell in sorted(r.per_length.items()):
            row[f"hit_len_{L}"] = cell["hit_ratio"]
        rows.append(row)
    return rows


def _print_reports(reports) -> None:
    for r in reports:
        cells = "  ".join(f"L{L}={c['hit_ratio']:.2f}"
                          for L, c in sorted(r.per_length.items()))
        print(f"{r.label}: hit-ratio {r.hit_ratio:.3f} over {r.tasks} tasks  [{cells}]")


def run_command(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    out = Path(cfg.out_dir)
    if args.command == "train":
        space, tset = train_artifacts(cfg)
        print(f"latent space: kind={space.kind} dim={space.latent_dim} "
              f"meta={json.dumps(space.meta, default=float)}")
        if tset is not None:
            print(f"transforms: mode={tset.mode} ids={','.join(tset.ids)}")
        print(f"artifacts cached under {out / 'artifacts'}")
        return 0
    if args.command == "eval" and args.suite == "hit-ratio":
        report = run_hit_ratio(cfg)
        write_report(report, out / "hit-ratio.json")
        write_csv(_report_rows([report]), out / "hit-ratio.csv")
        _print_reports([report])
        return 0
    if args.command == "eval" and args.suite == "gen-transforms":
        reports = run_transform_generalisation(cfg, sizes=args.sizes, axis=args.axis)
        name = f"gen-transforms-{args.axis}"
        for r in reports:
            write_report(r, out / name / f"{r.label.replace('=', '-')}.json")
        write_csv(_report_rows(reports), out / f"{name}.csv")
        _print_reports(reports)
        return 0
    if args.command == "eval" and args.suite == "gen-encoder":
        reports = run_encoder_generalisation(cfg, args.experiment, sizes=args.sizes)
        name = f"gen-encoder-exp{args.experiment}"
        for r in reports:
            write_report(r, out / name / f"{r.label.replace(' ', '-').replace('=', '-')}.json")
        write_csv(_report_rows(reports), out / f"{name}.csv")
        _print_reports(reports)
        return 0
    if args.command == "bench" and args.bench == "search":
        algorithms = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
        rows = run_search_benchmark(cfg, algorithms=algorithms, lengths=args.lengths)
        write_csv(rows, out / "bench-search.csv")
        for row in rows:
            print(f"{row['algorithm']:8s} L={row['length']}: hit {row['hit_ratio']:.2f}  "
                  f"mean wall {row['mean_wall_time']:.3f}s  "
                  f"mean nodes {row['mean_nodes_expanded']:.0f}")
        return 0
    if args.command == "datagen" and args.datagen == "build":
        spec = r20shift_spec() if args.dataset == R20SHIFT else r20all_spec()
        ds = build_dataset(spec, seed=cfg.train_seed)
        where = out / "datasets" / ds.name
        save_dataset(ds, where)
        hist = " ".join(f"{l}:{c}" for l, c in sorted(ds.length_histogram.items()))
        print(f"{ds.name}: {len(ds.programs)} programs ({hist}) -> {where}")
        return 0
    if args.command == "export" and args.export == "embeddings":
        path = out / "embeddings.csv"
        n = export_embeddings(cfg, path)
        print(f"{n} rows -> {path}")
        return 0
    raise HarnessError(f"unhandled command {args.command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run_command(args)
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
