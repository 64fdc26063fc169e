#!/usr/bin/env python3
"""Run several search methods on one synthetic dataset and print a table.

Every method sees the same train/validation split and starts from a fresh
budget ledger, so the call counts are directly comparable:

    python scripts/compare_methods.py --seed 0 --workers 8
    python scripts/compare_methods.py --length 3 --rows 200 --out report.json
"""
import argparse
import json
import time

from prepsearch.baselines import run_baseline
from prepsearch.data import SynthSpec, synth_dataset
from prepsearch.operators import builtin_library
from prepsearch.search import SearchConfig, search

DEFAULT_METHODS = [
    "shapleypipe",
    "random",
    "greedy",
    "algorithm1",
    "ablation:category_only",
    "ablation:position_agnostic",
    "ablation:random_sampling",
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=8)
    parser.add_argument("--length", type=int, default=3, help="pipeline slots")
    parser.add_argument("--rows", type=int, default=160)
    parser.add_argument("--missing", type=float, default=0.12)
    parser.add_argument("--n-perm", type=int, default=16, help="samples per Shapley estimate")
    parser.add_argument("--n-pretrain", type=int, default=120)
    parser.add_argument(
        "--methods", nargs="+", default=DEFAULT_METHODS, metavar="METHOD"
    )
    parser.add_argument("--out", default=None, help="also write the rows as JSON")
    args = parser.parse_args()

    ds = synth_dataset(
        SynthSpec(
            n_rows=args.rows,
            n_numeric=4,
            n_categorical=1,
            missing_rate=args.missing,
            seed=args.seed,
        )
    )
    cfg = SearchConfig(
        length=args.length,
        n_perm_stage1=args.n_perm,
        n_perm_stage2=args.n_perm,
        n_pretrain=args.n_pretrain,
        seed=args.seed,
        workers=args.workers,
    )
    library = builtin_library(cfg.seed)

    print(f"dataset {ds.name}: {ds.n_rows} rows, {ds.n_cols} columns")
    print(f"{'method':<28}{'score':>8}{'calls':>8}{'unique':>8}{'hits':>8}{'secs':>8}")
    rows = []
    for method in args.methods:
        started = time.perf_counter()
        if method == "shapleypipe":
            result = search(ds, cfg, library=library)
            pipeline = result.pipeline
        else:
            result = run_baseline(method, ds, cfg, library=library)
            pipeline = result.pipeline
        seconds = time.perf_counter() - started
        ledger = result.ledger
        rows.append(
            {
                "method": method,
                "score": result.score,
                "pipeline": [library.op_name(op) for op in pipeline],
                "algorithmic_calls": ledger["algorithmic_calls"],
                "unique_evaluations": ledger["unique_evaluations"],
                "cache_hits": ledger["cache_hits"],
                "seconds": round(seconds, 2),
            }
        )
        print(
            f"{method:<28}{result.score:>8.4f}{ledger['algorithmic_calls']:>8}"
            f"{ledger['unique_evaluations']:>8}{ledger['cache_hits']:>8}{seconds:>8.1f}"
        )

    best = max(rows, key=lambda r: r["score"])
    print(f"\nbest: {best['method']} -> {' | '.join(best['pipeline'])}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"dataset": ds.name, "rows": rows}, fh, indent=2)
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
