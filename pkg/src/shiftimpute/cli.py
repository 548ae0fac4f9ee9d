"""Command-line entry points.

Subcommands:
  simulate-mask  plant calibrated MAR missingness into a complete CSV
  impute         run round-robin imputation on a masked CSV
  metrics        score an imputed CSV against ground truth
  verify         run the Monte-Carlo identity checks
  benchmark      run a seed x alpha grid of paired weighted/unweighted runs
"""

from __future__ import annotations

import argparse
import json
import sys

from .benchmark import (
    ExperimentGrid,
    build_summary,
    records_to_csv,
    run_benchmark,
)
from .data import DataMatrix, load_csv, load_masked_csv, save_csv, save_masked_csv
from .engine import ImputationConfig, impute
from .masking import apply_mar_mask, select_random_spec
from .metrics import evaluate_imputation
from .propensity import weight_diagnostics
from .riskchecks import run_all_checks


def _cmd_simulate_mask(args) -> int:
    data = load_csv(args.input, has_header=not args.no_header)
    spec = select_random_spec(
        data,
        n_missing_cols=args.missing_cols,
        n_predictors=args.predictors,
        seed=args.seed,
        alpha=args.alpha,
        target_missing_rate=args.rate,
    )
    masked, mechanism = apply_mar_mask(data, spec)
    save_masked_csv(masked, args.output, header=not args.no_header)
    mechanism.save_json(args.mechanism)
    achieved = float((~masked.mask.observed[:, list(spec.missing_cols)]).mean())
    print(f"masked {args.output}: columns {list(spec.missing_cols)}, "
          f"achieved missing rate {achieved:.4f}")
    return 0


def _cmd_impute(args) -> int:
    ds = load_masked_csv(args.input, has_header=not args.no_header)
    if args.config:
        with open(args.config, encoding="utf-8") as handle:
            cfg = ImputationConfig.from_dict(json.load(handle))
    else:
        cfg = ImputationConfig()
    result = impute(ds, cfg)
    save_csv(DataMatrix(result.completed, ds.data.column_names), args.output,
             header=not args.no_header)
    if args.diagnostics:
        diagnostics = {
            "config": cfg.to_dict(),
            "per_sweep": [
                {
                    "sweep": s.sweep,
                    "columns": [vars(c).copy() for c in s.columns],
                }
                for s in result.per_sweep
            ],
        }
        if ds.missing_columns():
            final = ds.with_completed(result.completed)
            diagnostics["propensity"] = weight_diagnostics(
                final, l2=cfg.propensity_l2, clip_epsilon=cfg.clip_epsilon
            )
        with open(args.diagnostics, "w", encoding="utf-8") as handle:
            json.dump(diagnostics, handle, indent=2)
    print(f"imputed {len(ds.missing_columns())} columns -> {args.output}")
    return 0


def _cmd_metrics(args) -> int:
    truth = load_csv(args.truth, has_header=not args.no_header)
    imputed = load_csv(args.imputed, has_header=not args.no_header)
    mask = load_masked_csv(args.mask, has_header=not args.no_header).mask
    report = evaluate_imputation(truth, imputed.values, mask)
    payload = json.dumps(report.to_dict(), indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(payload + "\n")
    print(payload)
    return 0


def _cmd_verify(args) -> int:
    results = run_all_checks()
    payload = json.dumps(results, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(payload + "\n")
    for entry in results:
        status = "PASS" if entry["passed"] else "FAIL"
        print(f"{status} {entry['check']}")
    return 0 if all(entry["passed"] for entry in results) else 1


def _cmd_benchmark(args) -> int:
    if args.grid:
        with open(args.grid, encoding="utf-8") as handle:
            grid = ExperimentGrid.from_dict(json.load(handle))
    else:
        grid = ExperimentGrid()
    result = run_benchmark(grid, jobs=args.jobs)
    records_to_csv(result.records, args.out)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as handle:
            json.dump(build_summary(result), handle, indent=2)
    print(f"{len(result.records)} records -> {args.out}; "
          f"{len(result.failures)} failures")
    for failure in result.failures:
        print(f"  failed: seed={failure.seed} alpha={failure.alpha} "
              f"model={failure.model} weighted={failure.weighted}: {failure.message}",
              file=sys.stderr)
    return 0 if result.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftimpute",
        description="Covariate-shift-aware round-robin imputation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-mask", help="plant MAR missingness into a CSV")
    p.add_argument("--input", required=True, help="complete CSV to mask")
    p.add_argument("--output", required=True, help="masked CSV (empty fields)")
    p.add_argument("--mechanism", required=True, help="mechanism JSON output")
    p.add_argument("--alpha", type=float, default=0.0,
                   help="shift strength (0 = MCAR)")
    p.add_argument("--rate", type=float, default=0.3, help="target missing rate")
    p.add_argument("--missing-cols", type=int, default=4,
                   help="number of columns to plant missingness into (<= 4)")
    p.add_argument("--predictors", type=int, default=4,
                   help="predictor columns per missing column (<= 4)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-header", action="store_true")
    p.set_defaults(func=_cmd_simulate_mask)

    p = sub.add_parser("impute", help="impute a masked CSV")
    p.add_argument("--input", required=True, help="masked CSV (empty fields)")
    p.add_argument("--config", help="ImputationConfig JSON")
    p.add_argument("--output", required=True, help="completed CSV")
    p.add_argument("--diagnostics", help="per-sweep diagnostics JSON")
    p.add_argument("--no-header", action="store_true")
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("metrics", help="score an imputed CSV against truth")
    p.add_argument("--truth", required=True, help="complete ground-truth CSV")
    p.add_argument("--imputed", required=True, help="completed CSV to score")
    p.add_argument("--mask", required=True,
                   help="masked CSV whose empty fields mark the hidden cells")
    p.add_argument("--out", help="write the JSON report here as well")
    p.add_argument("--no-header", action="store_true")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("verify", help="run the Monte-Carlo identity checks")
    p.add_argument("--out", help="write the JSON pass/fail table here")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("benchmark", help="run a seed x alpha benchmark grid")
    p.add_argument("--grid", help="ExperimentGrid JSON (defaults to the "
                                  "in-repo synthetic grid)")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--summary", help="summary JSON")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.set_defaults(func=_cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
