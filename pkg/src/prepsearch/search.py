"""Two-stage pipeline search: category structure first, then operators.

Stage 1 walks the pipeline positions and scores each category by the marginal
of inserting a bandit-chosen representative versus NULL, averaged over random
category-shaped suffixes (suffix slots are filled by each category's own
bandit). The NULL category is worth 0 by convention and costs nothing. Every
evaluation of a full candidate pipeline also feeds the bandits, so
representatives sharpen as sampling proceeds.

Stage 2 freezes the category sequence and rescores every member operator of
the position's category by the same insert-versus-NULL marginal, with suffix
slots drawn uniformly from their own position's category members.

Budget identities (in algorithmic calls, exact):
  stage 1: 2 * length * n_categories * n_perm_stage1
  stage 2: 2 * n_perm_stage2 * sum of |category| over non-NULL chosen slots
plus n_pretrain for bandit warmup and 1 final evaluation.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .bandit import BanditState, make_bandits, pretrain
from .data import Dataset, SplitDataset, split
from .evaluation import (
    BudgetLedger,
    DatasetOracle,
    EvalCache,
    EvaluationOracle,
    LearnerConfig,
)
from .operators import NULL_ID, OperatorLibrary, Pipeline, builtin_library
from .parallel import ordered_map
from .rng import substream, substream_seed
from .shapley import ShapleyEstimate, _estimate_from_marginals

CategorySequence = tuple[int, ...]


@dataclass(frozen=True)
class SearchConfig:
    length: int = 6
    n_perm_stage1: int = 75
    n_perm_stage2: int = 75
    n_pretrain: int = 2000
    seed: int = 0
    workers: int = 1
    allow_null_category: bool = True
    exploration: float = math.sqrt(2)
    train_fraction: float = 0.8
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    bandit_batch: int = 1
    refreeze_per_sample: bool = False

    def to_json_obj(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SearchResult:
    pipeline: Pipeline
    category_sequence: CategorySequence
    score: float
    category_table: dict[tuple[int, int], ShapleyEstimate]
    operator_table: dict[tuple[int, int], ShapleyEstimate]
    ledger: dict
    bandits: dict
    config: SearchConfig
    split_seed: int | None = None

    def to_json_obj(self, library: OperatorLibrary) -> dict:
        return {
            "pipeline": list(self.pipeline),
            "pipeline_names": [library.op_name(i) for i in self.pipeline],
            "category_sequence": list(self.category_sequence),
            "category_sequence_names": [
                library.category_name(c) for c in self.category_sequence
            ],
            "score": self.score,
            "category_shapley": _table_json(self.category_table, "category"),
            "operator_shapley": _table_json(self.operator_table, "operator"),
            "ledger": self.ledger,
            "bandits": self.bandits,
            "config": self.config.to_json_obj(),
        }


def _table_json(table: dict[tuple[int, int], ShapleyEstimate], key_name: str) -> list[dict]:
    rows = []
    for (position, ident), est in sorted(table.items()):
        rows.append({"position": position, key_name: ident, **est.to_json_obj()})
    return rows


def stage1_budget(length: int, n_categories: int, n_perm: int) -> int:
    return 2 * length * n_categories * n_perm


def stage2_budget(n_perm: int, member_counts: Sequence[int]) -> int:
    return 2 * n_perm * sum(member_counts)


def configured_budget(library: OperatorLibrary, cfg: SearchConfig) -> dict:
    """The formula-side budget: exact for stage 1, uniform-category-size
    approximation for stage 2 (the observed stage 2 count depends on which
    categories stage 1 selects and is reported separately in the ledger)."""
    s1 = stage1_budget(cfg.length, library.n_categories, cfg.n_perm_stage1)
    mean_size = library.n_ops / library.n_categories
    s2 = 2.0 * cfg.n_perm_stage2 * cfg.length * mean_size
    return {
        "stage1": s1,
        "stage2_uniform_size": s2,
        "pretrain": cfg.n_pretrain,
        "total_with_uniform_stage2": cfg.n_pretrain + s1 + s2 + 1,
    }


def _suffix_alphabet(library: OperatorLibrary) -> list[int]:
    return [NULL_ID, *library.category_ids]


def category_shapley(
    library: OperatorLibrary,
    bandits: dict[int, BanditState],
    decided: Sequence[tuple[int, int]],
    candidate_category: int,
    position: int,
    oracle: EvaluationOracle,
    cfg: SearchConfig,
) -> ShapleyEstimate:
    """Marginal of the candidate category at ``position`` versus NULL.

    Each sample draws a category-shaped suffix, fills every category slot with
    its bandit's UCB pick, and spends exactly two evaluations. The candidate's
    representative may change across samples as its bandit learns: rewards
    (the with-candidate pipeline score) update the representative's arm and
    every suffix arm, in sample order.
    """
    suffix_len = cfg.length - position
    alphabet = _suffix_alphabet(library)
    marginals: list[float] = []
    done = 0
    while done < cfg.n_perm_stage1:
        batch = min(max(1, cfg.bandit_batch), cfg.n_perm_stage1 - done)
        plans = []
        for t in range(done, done + batch):
            rng = substream(cfg.seed, "stage1", position, candidate_category, t)
            cat_suffix = tuple(
                alphabet[int(k)] for k in rng.integers(0, len(alphabet), size=suffix_len)
            )
            if cfg.refreeze_per_sample:
                prefix = tuple(
                    NULL_ID if c == NULL_ID else bandits[c].select() for c, _ in decided
                )
            else:
                prefix = tuple(op for _, op in decided)
            representative = bandits[candidate_category].select()
            suffix_ops = tuple(
                NULL_ID if c == NULL_ID else bandits[c].select() for c in cat_suffix
            )
            plans.append((prefix, representative, suffix_ops, cat_suffix))

        def run(plan) -> tuple[float, float]:
            prefix, rep, suffix_ops, _ = plan
            v_with = oracle.score(prefix + (rep,) + suffix_ops)
            v_without = oracle.score(prefix + (NULL_ID,) + suffix_ops)
            return v_with, v_without

        for plan, (v_with, v_without) in zip(plans, ordered_map(run, plans, cfg.workers)):
            _, rep, suffix_ops, cat_suffix = plan
            marginals.append(v_with - v_without)
            bandits[candidate_category].update(rep, v_with)
            for cat, op in zip(cat_suffix, suffix_ops):
                if cat != NULL_ID:
                    bandits[cat].update(op, v_with)
        done += batch
    return _estimate_from_marginals(marginals)


def stage1_search(
    library: OperatorLibrary,
    bandits: dict[int, BanditState],
    oracle: EvaluationOracle,
    cfg: SearchConfig,
) -> tuple[CategorySequence, dict[tuple[int, int], ShapleyEstimate], list[tuple[int, int]]]:
    """Choose a category (or NULL) per position; freeze each chosen position's
    representative to the category's best-mean arm at decision time.

    Returns (category sequence, (position, category) -> estimate table,
    decided (category, representative) pairs). The NULL category never enters
    the table: its value is 0 by convention at zero cost.
    """
    decided: list[tuple[int, int]] = []
    table: dict[tuple[int, int], ShapleyEstimate] = {}
    with oracle.ledger.stage("stage1"):
        for position in range(1, cfg.length + 1):
            best_cat, best_value = None, -np.inf
            for cat in library.category_ids:
                est = category_shapley(
                    library, bandits, decided, cat, position, oracle, cfg
                )
                table[(position, cat)] = est
                if est.value > best_value:
                    best_cat, best_value = cat, est.value
            if cfg.allow_null_category and best_value <= 0.0:
                decided.append((NULL_ID, NULL_ID))
            else:
                decided.append((best_cat, bandits[best_cat].best_mean_arm()))
    return tuple(c for c, _ in decided), table, decided


def stage2_refine(
    library: OperatorLibrary,
    category_sequence: CategorySequence,
    oracle: EvaluationOracle,
    cfg: SearchConfig,
) -> tuple[Pipeline, dict[tuple[int, int], ShapleyEstimate]]:
    """Pick the best member operator per non-NULL slot of the fixed category
    sequence. Suffix slots are drawn uniformly from their own position's
    category members; NULL slots stay NULL. Two calls per sample."""
    chosen: list[int] = []
    table: dict[tuple[int, int], ShapleyEstimate] = {}
    with oracle.ledger.stage("stage2"):
        for position in range(1, cfg.length + 1):
            cat = category_sequence[position - 1]
            if cat == NULL_ID:
                chosen.append(NULL_ID)
                continue
            prefix = tuple(chosen)
            suffix_cats = category_sequence[position:]
            suffix_members = [
                None if c == NULL_ID else sorted(library.members(c)) for c in suffix_cats
            ]

            def sample_suffix(rng: np.random.Generator) -> Pipeline:
                out = []
                for members in suffix_members:
                    if members is None:
                        out.append(NULL_ID)
                    else:
                        out.append(members[int(rng.integers(0, len(members)))])
                return tuple(out)

            best_op, best_value = None, -np.inf
            for op in sorted(library.members(cat)):
                suffixes = [
                    sample_suffix(substream(cfg.seed, "stage2", position, op, i))
                    for i in range(cfg.n_perm_stage2)
                ]

                def run(suffix: Pipeline, _op=op) -> float:
                    return oracle.score(prefix + (_op,) + suffix) - oracle.score(
                        prefix + (NULL_ID,) + suffix
                    )

                est = _estimate_from_marginals(ordered_map(run, suffixes, cfg.workers))
                table[(position, op)] = est
                if est.value > best_value:
                    best_op, best_value = op, est.value
            chosen.append(best_op)
    return tuple(chosen), table


def search_with_oracle(
    library: OperatorLibrary,
    oracle: EvaluationOracle,
    cfg: SearchConfig,
    split_seed: int | None = None,
) -> SearchResult:
    """Run pretrain, stage 1, stage 2 and the final evaluation on any oracle."""
    bandits = make_bandits(library, cfg.exploration)
    with oracle.ledger.stage("pretrain"):
        pretrain(bandits, library, cfg.length, cfg.n_pretrain, oracle, cfg.seed, cfg.workers)
    category_sequence, cat_table, _ = stage1_search(library, bandits, oracle, cfg)
    pipeline, op_table = stage2_refine(library, category_sequence, oracle, cfg)
    with oracle.ledger.stage("final"):
        score = oracle.score(pipeline)
    return SearchResult(
        pipeline=pipeline,
        category_sequence=category_sequence,
        score=score,
        category_table=cat_table,
        operator_table=op_table,
        ledger=oracle.ledger.snapshot(),
        bandits={b.category_id: b.snapshot() for b in bandits.values()},
        config=cfg,
        split_seed=split_seed,
    )


def make_split(ds: Dataset, cfg: SearchConfig) -> SplitDataset:
    """The split used by search(): seeded from the root seed's "split" substream."""
    return split(ds, substream_seed(cfg.seed, "split"), cfg.train_fraction)


def search(
    ds: Dataset,
    cfg: SearchConfig = SearchConfig(),
    library: OperatorLibrary | None = None,
    cache: EvalCache | None = None,
    ledger: BudgetLedger | None = None,
) -> SearchResult:
    """Split the dataset, then run the two-stage search against the default
    (or given) operator library. Deterministic in (ds, cfg) for any workers."""
    if library is None:
        library = builtin_library(cfg.seed)
    sd = make_split(ds, cfg)
    oracle = DatasetOracle(library, sd, cfg.learner, cache=cache, ledger=ledger)
    return search_with_oracle(library, oracle, cfg, split_seed=sd.split_seed)
