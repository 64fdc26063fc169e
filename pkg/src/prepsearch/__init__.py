"""Shapley-guided search over data-preparation pipelines.

The search treats a fixed-length pipeline as a cooperative game: each slot's
operator is a player, validation accuracy is the payoff, and sampled Shapley
values rank what to put where. A two-stage scheme first picks a category per
slot (with UCB bandits choosing each category's representative operator),
then picks the best member operator inside each chosen category.
"""
from .analysis import (
    SignatureMatrix,
    coherence_report,
    pearson,
    position_effect_report,
    shapley_winrate_correlation,
)
from .bandit import BanditState, make_bandits, pretrain, run_bernoulli_bandit
from .baselines import (
    ABLATION_VARIANTS,
    BaselineResult,
    ablation_search,
    exhaustive_search,
    greedy_search,
    matched_random_samples,
    position_shapley_search,
    random_search,
    run_baseline,
)
from .data import (
    ColumnKind,
    Dataset,
    SplitDataset,
    SynthSpec,
    dataset_from_arrays,
    load_csv,
    split,
    synth_dataset,
    write_csv,
)
from .errors import (
    ConfigError,
    DataError,
    PipelineExecutionFailure,
    PrepSearchError,
    SearchSpaceTooLarge,
)
from .evaluation import (
    BudgetLedger,
    DatasetOracle,
    EvalCache,
    LearnerConfig,
    TableOracle,
    exhaustive_best,
    exhaustive_space_size,
)
from .operators import (
    NULL_ID,
    Category,
    OperatorLibrary,
    OperatorSpec,
    builtin_library,
    make_library,
    run_pipeline,
)
from .rng import substream, substream_seed
from .search import (
    SearchConfig,
    SearchResult,
    configured_budget,
    search,
    search_with_oracle,
    stage1_budget,
    stage2_budget,
)
from .shapley import (
    CharacteristicGame,
    PositionContext,
    ShapleyEstimate,
    conditional_position_shapley,
    exact_shapley,
    permutation_shapley,
    position_construct_budget,
    position_shapley_construct,
    uniform_suffix_sampler,
)

__version__ = "0.1.0"

__all__ = [
    "ABLATION_VARIANTS",
    "BanditState",
    "BaselineResult",
    "BudgetLedger",
    "Category",
    "CharacteristicGame",
    "ColumnKind",
    "ConfigError",
    "DataError",
    "Dataset",
    "DatasetOracle",
    "EvalCache",
    "LearnerConfig",
    "NULL_ID",
    "OperatorLibrary",
    "OperatorSpec",
    "PipelineExecutionFailure",
    "PositionContext",
    "PrepSearchError",
    "SearchConfig",
    "SearchResult",
    "SearchSpaceTooLarge",
    "ShapleyEstimate",
    "SignatureMatrix",
    "SplitDataset",
    "SynthSpec",
    "TableOracle",
    "ablation_search",
    "builtin_library",
    "coherence_report",
    "conditional_position_shapley",
    "configured_budget",
    "dataset_from_arrays",
    "exact_shapley",
    "exhaustive_best",
    "exhaustive_search",
    "exhaustive_space_size",
    "greedy_search",
    "load_csv",
    "make_bandits",
    "make_library",
    "matched_random_samples",
    "pearson",
    "permutation_shapley",
    "position_construct_budget",
    "position_effect_report",
    "position_shapley_construct",
    "position_shapley_search",
    "pretrain",
    "random_search",
    "run_baseline",
    "run_bernoulli_bandit",
    "run_pipeline",
    "search",
    "search_with_oracle",
    "shapley_winrate_correlation",
    "split",
    "stage1_budget",
    "stage2_budget",
    "substream",
    "substream_seed",
    "synth_dataset",
    "uniform_suffix_sampler",
    "write_csv",
]
