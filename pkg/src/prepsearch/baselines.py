"""Baselines and ablations that share the two-stage search's oracle plumbing.

Every routine here speaks the same currency as the main search (algorithmic
calls on a shared ledger), so budget-matched comparisons are a matter of
reading two snapshots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .bandit import make_bandits, pretrain
from .data import Dataset
from .errors import UnknownVariant
from .evaluation import (
    BudgetLedger,
    DatasetOracle,
    EvalCache,
    EvaluationOracle,
    exhaustive_best,
)
from .operators import NULL_ID, OperatorLibrary, Pipeline, builtin_library
from .parallel import ordered_map
from .rng import substream, substream_seed
from .search import (
    SearchConfig,
    make_split,
    stage1_budget,
    stage1_search,
    stage2_budget,
)
from .shapley import (
    PositionContext,
    conditional_position_shapley,
    position_shapley_construct,
    uniform_suffix_sampler,
)

ABLATION_VARIANTS = ("category_only", "position_agnostic", "random_sampling")


@dataclass(frozen=True)
class BaselineResult:
    method: str
    pipeline: Pipeline
    score: float
    ledger: dict
    details: dict = field(default_factory=dict)

    def to_json_obj(self, library: OperatorLibrary) -> dict:
        return {
            "method": self.method,
            "pipeline": list(self.pipeline),
            "pipeline_names": [library.op_name(i) for i in self.pipeline],
            "score": self.score,
            "ledger": self.ledger,
            "details": self.details,
        }


def matched_random_samples(library: OperatorLibrary, cfg: SearchConfig) -> int:
    """Evaluation count giving random search the two-stage method's formula
    budget (pretraining included, uniform category sizes assumed for stage 2)."""
    s1 = stage1_budget(cfg.length, library.n_categories, cfg.n_perm_stage1)
    mean_size = library.n_ops / library.n_categories
    s2 = 2.0 * cfg.n_perm_stage2 * cfg.length * mean_size
    return int(round(cfg.n_pretrain + s1 + s2 + 1))


def random_search(
    library: OperatorLibrary,
    oracle: EvaluationOracle,
    length: int,
    n_samples: int,
    seed: int,
    workers: int = 1,
) -> BaselineResult:
    """Uniform pipelines over (operators + NULL) per slot; best score wins,
    first sampled on ties."""
    alphabet = [NULL_ID, *library.op_ids]
    pipelines = []
    for i in range(n_samples):
        rng = substream(seed, "random", i)
        picks = rng.integers(0, len(alphabet), size=length)
        pipelines.append(tuple(alphabet[int(k)] for k in picks))
    with oracle.ledger.stage("random"):
        scores = ordered_map(oracle.score, pipelines, workers)
    best_i = max(range(len(pipelines)), key=lambda i: (scores[i], -i))
    return BaselineResult(
        method="random",
        pipeline=pipelines[best_i],
        score=scores[best_i],
        ledger=oracle.ledger.snapshot(),
        details={"n_samples": n_samples},
    )


def greedy_search(
    library: OperatorLibrary, oracle: EvaluationOracle, length: int
) -> BaselineResult:
    """Grow the pipeline one slot at a time, keeping whichever single extension
    (NULL included) scores best on the prefix so far. Ties keep NULL, then the
    lowest operator id. Costs exactly length * (n_ops + 1) calls."""
    prefix: tuple[int, ...] = ()
    candidates = [NULL_ID, *library.op_ids]
    score = -math.inf
    with oracle.ledger.stage("greedy"):
        for _ in range(length):
            best_op, best_score = None, -math.inf
            for op in candidates:
                s = oracle.score(prefix + (op,))
                if s > best_score:
                    best_op, best_score = op, s
            prefix = prefix + (best_op,)
            score = best_score
    return BaselineResult(
        method="greedy",
        pipeline=prefix,
        score=score,
        ledger=oracle.ledger.snapshot(),
    )


def exhaustive_search(
    library: OperatorLibrary,
    oracle: EvaluationOracle,
    length: int,
    cap: int = 20_000,
    workers: int = 1,
) -> BaselineResult:
    with oracle.ledger.stage("exhaustive"):
        pipeline, score = exhaustive_best(oracle, library.op_ids, length, cap, workers)
    return BaselineResult(
        method="exhaustive",
        pipeline=pipeline,
        score=score,
        ledger=oracle.ledger.snapshot(),
    )


def position_shapley_search(
    library: OperatorLibrary,
    oracle: EvaluationOracle,
    length: int,
    seed: int,
    mode: str = "sample",
    n_samples: int = 50,
    allow_null: bool = True,
    cap: int = 20_000,
    workers: int = 1,
) -> BaselineResult:
    """Flat (single-stage) position-wise construction over all operators."""
    with oracle.ledger.stage("construct"):
        pipeline, table = position_shapley_construct(
            library.op_ids,
            length,
            oracle.score,
            mode=mode,
            n_samples=n_samples,
            seed=seed,
            allow_null=allow_null,
            cap=cap,
            workers=workers,
        )
    with oracle.ledger.stage("final"):
        score = oracle.score(pipeline)
    rows = [
        {"position": pos, "operator": op, **est.to_json_obj()}
        for (pos, op), est in sorted(table.items())
    ]
    return BaselineResult(
        method="algorithm1",
        pipeline=pipeline,
        score=score,
        ledger=oracle.ledger.snapshot(),
        details={"mode": mode, "position_shapley": rows},
    )


def _ablation_category_only(
    library: OperatorLibrary, oracle: EvaluationOracle, cfg: SearchConfig
) -> BaselineResult:
    """Stage 1 only: trust the frozen representatives, skip operator refinement."""
    bandits = make_bandits(library, cfg.exploration)
    with oracle.ledger.stage("pretrain"):
        pretrain(bandits, library, cfg.length, cfg.n_pretrain, oracle, cfg.seed, cfg.workers)
    category_sequence, table, decided = stage1_search(library, bandits, oracle, cfg)
    pipeline = tuple(rep for _, rep in decided)
    with oracle.ledger.stage("final"):
        score = oracle.score(pipeline)
    rows = [
        {"position": pos, "category": cat, **est.to_json_obj()}
        for (pos, cat), est in sorted(table.items())
    ]
    return BaselineResult(
        method="ablation:category_only",
        pipeline=pipeline,
        score=score,
        ledger=oracle.ledger.snapshot(),
        details={"category_sequence": list(category_sequence), "category_shapley": rows},
    )


def _ablation_position_agnostic(
    library: OperatorLibrary, oracle: EvaluationOracle, cfg: SearchConfig
) -> BaselineResult:
    """Score every operator once, at the first slot only, then fill the
    pipeline in rank order. Slots after the last positive-valued operator stay
    NULL. Deliberately blind to position effects."""
    ctx = PositionContext(prefix=(), position=1, length=cfg.length)
    sampler = uniform_suffix_sampler(library.op_ids, cfg.length - 1)
    estimates = {}
    with oracle.ledger.stage("agnostic"):
        for op in library.op_ids:
            estimates[op] = conditional_position_shapley(
                ctx,
                op,
                sampler,
                cfg.n_perm_stage2,
                oracle.score,
                substream_seed(cfg.seed, "agnostic", op),
                cfg.workers,
            )
        ranked = sorted(library.op_ids, key=lambda o: (-estimates[o].value, o))
        pipeline = tuple(
            ranked[j] if j < len(ranked) and estimates[ranked[j]].value > 0.0 else NULL_ID
            for j in range(cfg.length)
        )
    with oracle.ledger.stage("final"):
        score = oracle.score(pipeline)
    rows = [{"operator": op, **estimates[op].to_json_obj()} for op in library.op_ids]
    return BaselineResult(
        method="ablation:position_agnostic",
        pipeline=pipeline,
        score=score,
        ledger=oracle.ledger.snapshot(),
        details={"operator_shapley": rows},
    )


def _ablation_random_sampling(
    library: OperatorLibrary, oracle: EvaluationOracle, cfg: SearchConfig
) -> BaselineResult:
    """Spend both stages' formula budget on uniform random pipelines instead."""
    mean_size = library.n_ops / library.n_categories
    budget = stage1_budget(cfg.length, library.n_categories, cfg.n_perm_stage1) + int(
        round(stage2_budget(cfg.n_perm_stage2, [mean_size] * cfg.length))
    )
    result = random_search(
        library, oracle, cfg.length, budget, cfg.seed, cfg.workers
    )
    return BaselineResult(
        method="ablation:random_sampling",
        pipeline=result.pipeline,
        score=result.score,
        ledger=oracle.ledger.snapshot(),
        details=result.details,
    )


def ablation_search(
    variant: str,
    library: OperatorLibrary,
    oracle: EvaluationOracle,
    cfg: SearchConfig,
) -> BaselineResult:
    if variant == "category_only":
        return _ablation_category_only(library, oracle, cfg)
    if variant == "position_agnostic":
        return _ablation_position_agnostic(library, oracle, cfg)
    if variant == "random_sampling":
        return _ablation_random_sampling(library, oracle, cfg)
    raise UnknownVariant(
        f"unknown ablation variant {variant!r}; expected one of {ABLATION_VARIANTS}"
    )


def _dataset_oracle(
    ds: Dataset,
    cfg: SearchConfig,
    library: OperatorLibrary,
    cache: EvalCache | None,
    ledger: BudgetLedger | None,
) -> DatasetOracle:
    sd = make_split(ds, cfg)
    return DatasetOracle(library, sd, cfg.learner, cache=cache, ledger=ledger)


def run_baseline(
    method: str,
    ds: Dataset,
    cfg: SearchConfig,
    library: OperatorLibrary | None = None,
    cache: EvalCache | None = None,
    ledger: BudgetLedger | None = None,
    n_random: int | None = None,
    exhaustive_cap: int = 20_000,
    construct_mode: str = "sample",
) -> BaselineResult:
    """Dataset-level entry point used by the CLI; mirrors search()'s split."""
    if library is None:
        library = builtin_library(cfg.seed)
    oracle = _dataset_oracle(ds, cfg, library, cache, ledger)
    if method == "random":
        n = matched_random_samples(library, cfg) if n_random is None else n_random
        return random_search(library, oracle, cfg.length, n, cfg.seed, cfg.workers)
    if method == "greedy":
        return greedy_search(library, oracle, cfg.length)
    if method == "exhaustive":
        return exhaustive_search(library, oracle, cfg.length, exhaustive_cap, cfg.workers)
    if method == "algorithm1":
        return position_shapley_search(
            library,
            oracle,
            cfg.length,
            cfg.seed,
            mode=construct_mode,
            n_samples=cfg.n_perm_stage2,
            cap=exhaustive_cap,
            workers=cfg.workers,
        )
    if method.startswith("ablation:"):
        return ablation_search(method.split(":", 1)[1], library, oracle, cfg)
    raise UnknownVariant(f"unknown baseline method {method!r}")
