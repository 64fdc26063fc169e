"""UCB bandits over category members, pretraining, and regret tracing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCategory, UnknownArm
from .evaluation import EvaluationOracle
from .operators import NULL_ID, OperatorLibrary
from .parallel import ordered_map
from .rng import substream


@dataclass
class ArmStats:
    pulls: int = 0
    mean_reward: float = 0.0


class BanditState:
    """Per-category arm statistics with UCB selection.

    select() is pure. The bonus is exploration * sqrt(2 ln T / n_arm) with T
    the category's total pulls; unpulled arms are selected first in id order
    and ties go to the lowest id.
    """

    def __init__(self, category_id: int, arm_ids, exploration: float = math.sqrt(2)):
        arm_ids = sorted(int(a) for a in arm_ids)
        if not arm_ids:
            raise EmptyCategory(f"category {category_id} has no operators")
        self.category_id = category_id
        self.exploration = float(exploration)
        self.arms: dict[int, ArmStats] = {a: ArmStats() for a in arm_ids}
        self.total_pulls = 0

    def bonus(self, arm_id: int) -> float:
        stats = self.arms[arm_id]
        if stats.pulls == 0:
            return math.inf
        return self.exploration * math.sqrt(2.0 * math.log(self.total_pulls) / stats.pulls)

    def select(self) -> int:
        for arm_id, stats in self.arms.items():  # ids ascending by construction
            if stats.pulls == 0:
                return arm_id
        best_arm, best_score = None, -math.inf
        for arm_id, stats in self.arms.items():
            s = stats.mean_reward + self.bonus(arm_id)
            if s > best_score:
                best_arm, best_score = arm_id, s
        return best_arm

    def update(self, arm_id: int, reward: float) -> None:
        if arm_id not in self.arms:
            raise UnknownArm(f"operator {arm_id} not in category {self.category_id}")
        reward = float(reward)
        if not 0.0 <= reward <= 1.0:
            raise ValueError(f"reward {reward} outside [0, 1]")
        stats = self.arms[arm_id]
        stats.pulls += 1
        stats.mean_reward += (reward - stats.mean_reward) / stats.pulls
        self.total_pulls += 1

    def best_mean_arm(self) -> int:
        """Highest observed mean among pulled arms (ties to lowest id);
        lowest id when nothing has been pulled yet."""
        best_arm, best_mean = None, -math.inf
        for arm_id, stats in self.arms.items():
            if stats.pulls > 0 and stats.mean_reward > best_mean:
                best_arm, best_mean = arm_id, stats.mean_reward
        if best_arm is None:
            return next(iter(self.arms))
        return best_arm

    def snapshot(self) -> dict:
        return {
            "category": self.category_id,
            "total_pulls": self.total_pulls,
            "arms": [
                {"op": a, "pulls": s.pulls, "mean_reward": s.mean_reward}
                for a, s in self.arms.items()
            ],
        }


def make_bandits(
    library: OperatorLibrary, exploration: float = math.sqrt(2)
) -> dict[int, BanditState]:
    return {
        c.category_id: BanditState(c.category_id, c.members, exploration)
        for c in library.categories
    }


def pretrain(
    bandits: dict[int, BanditState],
    library: OperatorLibrary,
    length: int,
    n_pretrain: int,
    oracle: EvaluationOracle,
    seed: int,
    workers: int = 1,
) -> None:
    """Warm every bandit with uniformly random full pipelines.

    Each sampled pipeline costs one evaluation; its score updates the arm of
    every non-NULL slot (an operator appearing k times is updated k times).
    Pipelines are pre-sampled from per-index substreams and updates are applied
    in sample order, so results do not depend on worker count.
    """
    alphabet = [NULL_ID, *library.op_ids]
    pipelines = []
    for i in range(n_pretrain):
        rng = substream(seed, "pretrain", i)
        pipelines.append(
            tuple(alphabet[int(k)] for k in rng.integers(0, len(alphabet), size=length))
        )
    scores = ordered_map(oracle.score, pipelines, workers=workers)
    for pipeline, s in zip(pipelines, scores):
        for op_id in pipeline:
            if op_id != NULL_ID:
                bandits[library.category_of(op_id)].update(op_id, s)


@dataclass
class RegretTrace:
    """Pull-by-pull record plus cumulative regret against declared true means."""

    true_means: tuple[float, ...]
    pulls: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)

    def record(self, arm_id: int, reward: float) -> None:
        self.pulls.append(arm_id)
        self.rewards.append(reward)

    def cumulative_regret(self) -> np.ndarray:
        best = max(self.true_means)
        gaps = np.array([best - self.true_means[a] for a in self.pulls])
        return np.cumsum(gaps)


def run_bernoulli_bandit(
    means, horizon: int, seed: int, exploration: float = math.sqrt(2)
) -> RegretTrace:
    """Simulate UCB on Bernoulli arms; used to check the regret growth rate."""
    means = tuple(float(m) for m in means)
    state = BanditState(category_id=0, arm_ids=range(len(means)), exploration=exploration)
    rng = np.random.default_rng(seed)
    trace = RegretTrace(true_means=means)
    for _ in range(horizon):
        arm = state.select()
        reward = float(rng.random() < means[arm])
        state.update(arm, reward)
        trace.record(arm, reward)
    return trace
