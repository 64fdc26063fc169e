import numpy as np
import pytest

from prepsearch import (
    CharacteristicGame,
    Dataset,
    OperatorLibrary,
    SynthSpec,
    builtin_library,
    dataset_from_arrays,
    synth_dataset,
)
from prepsearch.operators import OperatorKind, make_library

# 3-player game: singleton coalitions are worthless, pairs are worth 50/30/40,
# the grand coalition 80. Small enough to brute-force every ordering.
THREE_PLAYER_TABLE = {
    0b000: 0.0,
    0b001: 0.0,  # {A}
    0b010: 0.0,  # {B}
    0b100: 0.0,  # {C}
    0b011: 50.0,  # {A, B}
    0b101: 30.0,  # {A, C}
    0b110: 40.0,  # {B, C}
    0b111: 80.0,
}


@pytest.fixture
def three_player_game() -> CharacteristicGame:
    return CharacteristicGame.from_table(3, THREE_PLAYER_TABLE)


@pytest.fixture(scope="session")
def library() -> OperatorLibrary:
    return builtin_library(seed=0)


@pytest.fixture(scope="session")
def clean_ds() -> Dataset:
    return synth_dataset(SynthSpec(n_rows=60, n_numeric=3, n_categorical=0, seed=7))


@pytest.fixture(scope="session")
def mixed_ds() -> Dataset:
    return synth_dataset(
        SynthSpec(n_rows=60, n_numeric=3, n_categorical=1, missing_rate=0.2, seed=11)
    )


@pytest.fixture
def tiny_numeric_ds() -> Dataset:
    rng = np.random.default_rng(5)
    x = rng.normal(size=(12, 2))
    y = (x[:, 0] > 0).astype(int)
    return dataset_from_arrays("tiny", x, y)


def two_scaler_library(seed: int = 0) -> OperatorLibrary:
    K = OperatorKind
    return make_library(
        (
            ("center", (("scale_standard", K.SCALE_STANDARD), ("scale_robust", K.SCALE_ROBUST))),
            ("squash", (("scale_min_max", K.SCALE_MIN_MAX), ("signed_log", K.SIGNED_LOG))),
        ),
        seed=seed,
    )
