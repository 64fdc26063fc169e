"""Shapley attribution: exact, sampled, and position-conditional variants.

Coalitions are bitmasks over players 0..n-1. Games are normalized at
construction so the empty coalition is worth exactly 0 (the raw payoff of the
empty mask is subtracted from every value), which makes permutation marginals
telescope to v(full) and keeps argmax decisions invariant to constant shifts.

The position-conditional variant scores one candidate operator at one
pipeline slot: the marginal of placing the candidate there versus NULL,
averaged over random completions of the remaining slots. Each sampled
completion costs exactly two oracle calls.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import SearchSpaceTooLarge, TooManyPlayers
from .operators import NULL_ID, Pipeline
from .parallel import ordered_map
from .rng import substream, substream_seed

_EXACT_PLAYER_CAP = 20


@dataclass(frozen=True)
class ShapleyEstimate:
    """A Monte-Carlo estimate: mean marginal, sample count, sample variance
    (ddof=1; defined as 0.0 for a single sample)."""

    value: float
    n_samples: int
    sample_variance: float

    def to_json_obj(self) -> dict:
        return {
            "value": self.value,
            "n_samples": self.n_samples,
            "sample_variance": self.sample_variance,
        }


def _estimate_from_marginals(marginals: Sequence[float]) -> ShapleyEstimate:
    arr = np.asarray(marginals, dtype=np.float64)
    var = float(np.var(arr, ddof=1)) if arr.size > 1 else 0.0
    return ShapleyEstimate(value=float(arr.mean()), n_samples=int(arr.size), sample_variance=var)


class CharacteristicGame:
    """A cooperative game over n players with payoffs indexed by bitmask."""

    def __init__(self, n_players: int, payoff: Callable[[int], float]):
        self.n_players = int(n_players)
        self._payoff = payoff
        self._offset = float(payoff(0))

    def value(self, mask: int) -> float:
        """Payoff normalized so value(0) == 0."""
        if mask == 0:
            return 0.0
        return float(self._payoff(mask)) - self._offset

    def value_of(self, players: Sequence[int]) -> float:
        mask = 0
        for p in players:
            mask |= 1 << p
        return self.value(mask)

    @classmethod
    def from_table(cls, n_players: int, table: Mapping[int, float]) -> "CharacteristicGame":
        values = np.zeros(1 << n_players, dtype=np.float64)
        for mask, v in table.items():
            values[int(mask)] = float(v)
        if len(table) != 1 << n_players:
            missing = (1 << n_players) - len(table)
            raise ValueError(f"table is missing {missing} coalition payoffs")
        return cls(n_players, lambda m: float(values[m]))

    @classmethod
    def from_json(cls, source: str | Path | Mapping[str, float]) -> "CharacteristicGame":
        """Load a game from a JSON map of subset-bitmask (as string) to payoff."""
        if isinstance(source, (str, Path)):
            with open(source, encoding="utf-8") as fh:
                obj = json.load(fh)
        else:
            obj = dict(source)
        table = {int(k): float(v) for k, v in obj.items()}
        n_players = max(table).bit_length()
        return cls.from_table(n_players, table)


def _popcounts(size: int) -> np.ndarray:
    m = np.arange(size, dtype=np.uint64)
    m = m - ((m >> np.uint64(1)) & np.uint64(0x5555555555555555))
    m = (m & np.uint64(0x3333333333333333)) + ((m >> np.uint64(2)) & np.uint64(0x3333333333333333))
    m = (m + (m >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return ((m * np.uint64(0x0101010101010101)) >> np.uint64(56)).astype(np.int64)


def exact_shapley(game: CharacteristicGame) -> np.ndarray:
    """Exact values by full subset enumeration, n_players <= 20."""
    n = game.n_players
    if n > _EXACT_PLAYER_CAP:
        raise TooManyPlayers(f"{n} players; exact enumeration capped at {_EXACT_PLAYER_CAP}")
    size = 1 << n
    values = np.array([game.value(m) for m in range(size)])
    sizes = _popcounts(size)
    fact = [math.factorial(k) for k in range(n + 1)]
    weight_by_size = np.array(
        [fact[s] * fact[n - s - 1] / fact[n] for s in range(n)], dtype=np.float64
    )
    phi = np.zeros(n)
    masks = np.arange(size)
    for i in range(n):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        gains = values[without | bit] - values[without]
        phi[i] = float(np.sum(weight_by_size[sizes[without]] * gains))
    return phi


def permutation_shapley(
    game: CharacteristicGame, n_perm: int, seed: int
) -> list[ShapleyEstimate]:
    """Monte-Carlo estimates from n_perm sampled player orderings.

    Unbiased for the exact values; per-player estimator variance scales as
    sigma^2 / n_perm.
    """
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    n = game.n_players
    rng = np.random.default_rng(seed)
    marginals = np.empty((n_perm, n))
    for t in range(n_perm):
        mask = 0
        previous = 0.0
        for player in rng.permutation(n):
            mask |= 1 << int(player)
            current = game.value(mask)
            marginals[t, player] = current - previous
            previous = current
    out = []
    for i in range(n):
        col = marginals[:, i]
        var = float(np.var(col, ddof=1)) if n_perm > 1 else 0.0
        out.append(ShapleyEstimate(value=float(col.mean()), n_samples=n_perm, sample_variance=var))
    return out


@dataclass(frozen=True)
class PositionContext:
    """Where a candidate is being scored: the already-chosen prefix and the
    slot it would occupy (1-based), inside a pipeline of total length."""

    prefix: Pipeline
    position: int
    length: int

    @property
    def suffix_length(self) -> int:
        return self.length - self.position

    def __post_init__(self):
        if len(self.prefix) != self.position - 1:
            raise ValueError("prefix length must equal position - 1")
        if not 1 <= self.position <= self.length:
            raise ValueError("position out of range")


SuffixSampler = Callable[[np.random.Generator], Pipeline]


def conditional_position_shapley(
    ctx: PositionContext,
    candidate: int,
    suffix_sampler: SuffixSampler,
    n_samples: int,
    score: Callable[[Pipeline], float],
    seed: int,
    workers: int = 1,
) -> ShapleyEstimate:
    """Marginal of placing ``candidate`` at ctx.position versus NULL, averaged
    over sampled suffixes. Two score calls per sample.

    Sample i draws its suffix from the substream (seed, "suffix", i), so
    enlarging n_samples keeps the earlier samples identical and the result
    does not depend on worker count.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    suffixes = [suffix_sampler(substream(seed, "suffix", i)) for i in range(n_samples)]

    def one(suffix: Pipeline) -> float:
        with_candidate = ctx.prefix + (candidate,) + suffix
        without = ctx.prefix + (NULL_ID,) + suffix
        return score(with_candidate) - score(without)

    marginals = ordered_map(one, suffixes, workers=workers)
    return _estimate_from_marginals(marginals)


def uniform_suffix_sampler(op_ids: Sequence[int], suffix_length: int) -> SuffixSampler:
    """Uniform over (ops + NULL)^suffix_length."""
    alphabet = [NULL_ID, *sorted(op_ids)]

    def sample(rng: np.random.Generator) -> Pipeline:
        return tuple(alphabet[int(k)] for k in rng.integers(0, len(alphabet), size=suffix_length))

    return sample


def position_construct_budget(n_ops: int, length: int) -> int:
    """Oracle calls for an exhaustive per-position construction:
    sum over positions of n_ops * (n_ops + 1)^(length - j) * 2."""
    return sum(2 * n_ops * (n_ops + 1) ** (length - j) for j in range(1, length + 1))


def position_shapley_construct(
    op_ids: Sequence[int],
    length: int,
    score: Callable[[Pipeline], float],
    mode: str = "exhaustive",
    n_samples: int = 50,
    seed: int = 0,
    allow_null: bool = True,
    cap: int = 20_000,
    workers: int = 1,
) -> tuple[Pipeline, dict[tuple[int, int], ShapleyEstimate]]:
    """Build a pipeline slot by slot from position-conditional Shapley values.

    At each position every non-NULL candidate is scored against suffix
    completions (all of them in "exhaustive" mode, sampled in "sample" mode);
    the argmax is appended, ties to the lowest id. When allow_null is set the
    slot stays NULL if no candidate scores above zero.

    Returns the pipeline and the full (position, op) -> estimate table.
    """
    ids = sorted(int(i) for i in op_ids)
    if mode not in ("exhaustive", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "exhaustive":
        total = position_construct_budget(len(ids), length)
        if total > cap:
            raise SearchSpaceTooLarge(f"{total} calls exceeds cap {cap}")
    alphabet = [NULL_ID, *ids]
    prefix: tuple[int, ...] = ()
    table: dict[tuple[int, int], ShapleyEstimate] = {}
    for position in range(1, length + 1):
        ctx = PositionContext(prefix=prefix, position=position, length=length)
        suffix_len = ctx.suffix_length
        best_id, best_value = NULL_ID, -np.inf
        for candidate in ids:
            if mode == "exhaustive":
                suffixes = list(itertools.product(alphabet, repeat=suffix_len))

                def one(suffix: Pipeline, _c=candidate) -> float:
                    return score(prefix + (_c,) + suffix) - score(prefix + (NULL_ID,) + suffix)

                est = _estimate_from_marginals(ordered_map(one, suffixes, workers=workers))
            else:
                est = conditional_position_shapley(
                    ctx,
                    candidate,
                    uniform_suffix_sampler(ids, suffix_len),
                    n_samples,
                    score,
                    seed=substream_seed(seed, "construct", position, candidate),
                    workers=workers,
                )
            table[(position, candidate)] = est
            if est.value > best_value:
                best_id, best_value = candidate, est.value
        if allow_null and best_value <= 0.0:
            best_id = NULL_ID
        prefix = prefix + (best_id,)
    return prefix, table
