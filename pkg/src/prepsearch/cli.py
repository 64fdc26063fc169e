"""Command line front end.

    prepsearch run config.toml [--seed N] [--workers N] [--cache FILE] [--out FILE]
    prepsearch compare config.toml [--seed N] [--workers N] [--cache FILE] [--out FILE]

``run`` executes one method and writes a JSON report; ``compare`` runs a list
of methods against the same dataset and split, each with a fresh ledger so
budgets are directly comparable. Method names:

    shapleypipe  random  greedy  exhaustive  algorithm1
    ablation:category_only  ablation:position_agnostic  ablation:random_sampling

Config is TOML. Minimal example:

    method = "shapleypipe"

    [data]
    synth = true
    n_rows = 160
    n_numeric = 4

    [search]
    length = 3
    n_pretrain = 60
    n_perm_stage1 = 8
    n_perm_stage2 = 8
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .baselines import run_baseline
from .data import Dataset, SynthSpec, load_csv, synth_dataset
from .errors import (
    ConfigError,
    DataError,
    PrepSearchError,
    SearchSpaceTooLarge,
)
from .evaluation import BudgetLedger, EvalCache, LearnerConfig
from .operators import builtin_library
from .search import SearchConfig, configured_budget, make_split, search

METHODS = (
    "shapleypipe",
    "random",
    "greedy",
    "exhaustive",
    "algorithm1",
    "ablation:category_only",
    "ablation:position_agnostic",
    "ablation:random_sampling",
)

_EXIT_CODES = {ConfigError: 2, DataError: 3, SearchSpaceTooLarge: 4}


def load_config(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}")


_SYNTH_KEYS = {f.name for f in dataclasses.fields(SynthSpec)}


def dataset_from_config(config: dict) -> Dataset:
    data = config.get("data")
    if not isinstance(data, dict):
        raise ConfigError("config needs a [data] section")
    if "csv" in data:
        return load_csv(data["csv"], data.get("label_column", "label"))
    if data.get("synth"):
        kwargs = {k: v for k, v in data.items() if k in _SYNTH_KEYS}
        unknown = set(data) - _SYNTH_KEYS - {"synth"}
        if unknown:
            raise ConfigError(f"unknown [data] keys for synth: {sorted(unknown)}")
        try:
            return synth_dataset(SynthSpec(**kwargs))
        except (DataError, TypeError) as exc:
            raise ConfigError(str(exc))
    raise ConfigError("[data] needs either csv = \"file\" or synth = true")


def _default_workers() -> int:
    return min(os.cpu_count() or 1, 16)


def search_config_from(config: dict, args: argparse.Namespace) -> SearchConfig:
    section = dict(config.get("search", {}))
    learner = dict(config.get("learner", {}))
    cfg_fields = {f.name for f in dataclasses.fields(SearchConfig)} - {"learner"}
    unknown = set(section) - cfg_fields
    if unknown:
        raise ConfigError(f"unknown [search] keys: {sorted(unknown)}")
    learner_fields = {f.name for f in dataclasses.fields(LearnerConfig)}
    unknown = set(learner) - learner_fields
    if unknown:
        raise ConfigError(f"unknown [learner] keys: {sorted(unknown)}")
    if args.seed is not None:
        section["seed"] = args.seed
    if args.workers is not None:
        section["workers"] = args.workers
    elif "workers" not in section:
        section["workers"] = _default_workers()
    try:
        return SearchConfig(learner=LearnerConfig(**learner), **section)
    except TypeError as exc:
        raise ConfigError(str(exc))


def _dataset_info(ds: Dataset, cfg: SearchConfig) -> dict:
    sd = make_split(ds, cfg)
    return {
        "name": ds.name,
        "n_rows": ds.n_rows,
        "n_features": ds.n_cols,
        "n_classes": ds.classes_present(),
        "train_rows": sd.train.n_rows,
        "validation_rows": sd.validation.n_rows,
    }


def _run_one(
    method: str,
    ds: Dataset,
    cfg: SearchConfig,
    config: dict,
    warm: dict | None,
) -> tuple[dict, EvalCache]:
    """One method with a fresh ledger and cache (optionally pre-warmed)."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {list(METHODS)}")
    library = builtin_library(cfg.seed)
    cache = EvalCache()
    if warm:
        cache.warm(warm)
    ledger = BudgetLedger()
    started = time.perf_counter()
    if method == "shapleypipe":
        result = search(ds, cfg, library, cache, ledger)
        obj = result.to_json_obj(library)
        obj["budget_formula"] = configured_budget(library, cfg)
    else:
        result = run_baseline(
            method,
            ds,
            cfg,
            library,
            cache,
            ledger,
            n_random=config.get("random", {}).get("n_samples"),
            exhaustive_cap=config.get("exhaustive", {}).get("cap", 20_000),
            construct_mode=config.get("construct", {}).get("mode", "sample"),
        )
        obj = result.to_json_obj(library)
    obj["timing"] = {"seconds": time.perf_counter() - started}
    return obj, cache


def cmd_run(args: argparse.Namespace) -> dict:
    config = load_config(args.config)
    ds = dataset_from_config(config)
    cfg = search_config_from(config, args)
    method = config.get("method", "shapleypipe")
    warm = _load_warm(args.cache)
    obj, cache = _run_one(method, ds, cfg, config, warm)
    _save_cache(args.cache, cache)
    return {
        "command": "run",
        "method": method,
        "dataset": _dataset_info(ds, cfg),
        "result": obj,
    }


def cmd_compare(args: argparse.Namespace) -> dict:
    config = load_config(args.config)
    ds = dataset_from_config(config)
    cfg = search_config_from(config, args)
    methods = config.get("methods", ["shapleypipe", "random", "greedy"])
    if not isinstance(methods, list) or not methods:
        raise ConfigError("compare needs a non-empty methods = [...] list")
    warm = _load_warm(args.cache) or {}
    out: dict[str, dict] = {}
    merged = EvalCache()
    merged.warm(warm)
    for method in methods:
        obj, cache = _run_one(method, ds, cfg, config, warm)
        out[method] = obj
        merged.warm(dict(cache.items()))
    _save_cache(args.cache, merged)
    best = max(out, key=lambda m: out[m].get("score", float("-inf")))
    return {
        "command": "compare",
        "dataset": _dataset_info(ds, cfg),
        "methods": out,
        "best_method": best,
    }


def _load_warm(path: str | None) -> dict | None:
    if not path or not Path(path).exists():
        return None
    cache = EvalCache()
    cache.load_jsonl(path)
    return dict(cache.items())


def _save_cache(path: str | None, cache: EvalCache) -> None:
    if path:
        cache.save_jsonl(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prepsearch",
        description="Shapley-guided data preparation pipeline search",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("compare", cmd_compare)):
        p = sub.add_parser(name)
        p.add_argument("config", help="TOML config file")
        p.add_argument("--seed", type=int, default=None, help="override search seed")
        p.add_argument("--workers", type=int, default=None, help="evaluation thread count")
        p.add_argument("--cache", default=None, help="JSONL evaluation cache to reuse/update")
        p.add_argument("--out", default=None, help="write the JSON report here (default stdout)")
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = args.fn(args)
    except PrepSearchError as exc:
        code = next(
            (c for t, c in _EXIT_CODES.items() if isinstance(exc, t)), 1
        )
        print(
            json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}),
            file=sys.stderr,
        )
        return code
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
