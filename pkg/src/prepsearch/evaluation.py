"""Pipeline evaluation: learner, memoization, and budget accounting.

The quality of a pipeline is the validation accuracy of a from-scratch
multinomial softmax regression trained on the transformed train view. The
learner is deliberately plain (full-batch gradient descent, zero init, fixed
iteration count) so that preprocessing, not the model, drives the score.

Every request for a score is an algorithmic call and is counted in the
BudgetLedger whether or not the cache already holds the answer; theorem-style
budget identities are stated over algorithmic calls. unique_evaluations counts
actual computations. A thread that waits on another thread's in-flight
computation of the same key records a cache hit, which keeps all counters
identical for any worker count.
"""
from __future__ import annotations

import itertools
import json
import threading
from concurrent.futures import Future
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import SplitDataset
from .errors import NonFiniteInput, PipelineExecutionFailure, SearchSpaceTooLarge
from .operators import NULL_ID, OperatorLibrary, Pipeline, run_pipeline
from .parallel import ordered_map


@dataclass(frozen=True)
class LearnerConfig:
    learning_rate: float = 0.1
    iterations: int = 300
    l2: float = 1e-4


def softmax_loss_and_grad(
    weights: np.ndarray, X1: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus L2 on non-bias rows, with its gradient.

    ``X1`` already carries the bias column (first). Stable via logsumexp.
    """
    n = X1.shape[0]
    logits = X1 @ weights
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(n), y]))
    loss += 0.5 * l2 * float((weights[1:] ** 2).sum())
    probs = np.exp(logits - lse[:, None])
    probs[np.arange(n), y] -= 1.0
    grad = X1.T @ probs / n
    grad[1:] += l2 * weights[1:]
    return loss, grad


def _with_bias(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def train_softmax(X: np.ndarray, y: np.ndarray, cfg: LearnerConfig = LearnerConfig()) -> np.ndarray:
    """Fit softmax regression weights, shape (1 + n_features, n_classes).

    Zero init, fixed iteration count, deterministic. Each iteration backtracks
    (halving the step) until the loss does not increase, so the loss sequence
    is monotone non-increasing for any feature scaling; an iteration that
    cannot improve leaves the weights unchanged.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if not np.isfinite(X).all():
        raise NonFiniteInput("design matrix contains non-finite entries")
    if np.unique(y).size < 2:
        raise ValueError("training labels must contain at least 2 classes")
    n_classes = int(y.max()) + 1
    X1 = _with_bias(X)
    weights = np.zeros((X1.shape[1], n_classes))
    loss, grad = softmax_loss_and_grad(weights, X1, y, cfg.l2)
    for _ in range(cfg.iterations):
        step = cfg.learning_rate
        for _ in range(60):
            candidate = weights - step * grad
            new_loss, new_grad = softmax_loss_and_grad(candidate, X1, y, cfg.l2)
            if np.isfinite(new_loss) and new_loss <= loss + 1e-12:
                weights, loss, grad = candidate, new_loss, new_grad
                break
            step *= 0.5
    return weights


def softmax_predict(weights: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.argmax(_with_bias(np.asarray(X, dtype=np.float64)) @ weights, axis=1)


@dataclass(frozen=True)
class EvalResult:
    score: float
    failed: bool
    from_cache: bool


class EvalCache:
    """Pipeline-key memo with thread-safe insertion and in-flight dedup."""

    def __init__(self):
        self._done: dict[Pipeline, tuple[float, bool]] = {}
        self._inflight: dict[Pipeline, Future] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._done)

    def get_or_compute(
        self, key: Pipeline, compute: Callable[[], tuple[float, bool]]
    ) -> tuple[tuple[float, bool], bool]:
        """Return ((score, failed), from_cache). Computes at most once per key."""
        with self._lock:
            if key in self._done:
                self.hits += 1
                return self._done[key], True
            fut = self._inflight.get(key)
            if fut is None:
                fut = Future()
                self._inflight[key] = fut
                owner = True
            else:
                owner = False
        if not owner:
            value = fut.result()
            with self._lock:
                self.hits += 1
            return value, True
        try:
            value = compute()
        except BaseException as exc:
            with self._lock:
                del self._inflight[key]
            fut.set_exception(exc)
            raise
        with self._lock:
            self._done[key] = value
            del self._inflight[key]
            self.misses += 1
        fut.set_result(value)
        return value, False

    def items(self):
        with self._lock:
            return list(self._done.items())

    def warm(self, entries: Mapping[Pipeline, tuple[float, bool]]) -> None:
        """Pre-seed completed entries (e.g. from another cache or a file)."""
        with self._lock:
            for key, (score, failed) in entries.items():
                self._done[tuple(key)] = (float(score), bool(failed))

    def save_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key, (score, failed) in sorted(self.items()):
                fh.write(json.dumps({"key": list(key), "score": score, "failed": failed}) + "\n")

    def load_jsonl(self, path: str | Path) -> int:
        """Warm the cache from a line-delimited JSON file; returns entry count."""
        n = 0
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                key = tuple(int(s) for s in obj["key"])
                with self._lock:
                    self._done[key] = (float(obj["score"]), bool(obj["failed"]))
                n += 1
        return n


class BudgetLedger:
    """Counts algorithmic calls and unique evaluations, with per-stage splits."""

    def __init__(self):
        self._lock = threading.Lock()
        self.algorithmic_calls = 0
        self.unique_evaluations = 0
        self._stage = "unstaged"
        self._stage_calls: dict[str, int] = {}

    @contextmanager
    def stage(self, name: str):
        previous = self._stage
        self._stage = name
        try:
            yield self
        finally:
            self._stage = previous

    def record_call(self) -> None:
        with self._lock:
            self.algorithmic_calls += 1
            self._stage_calls[self._stage] = self._stage_calls.get(self._stage, 0) + 1

    def record_unique(self) -> None:
        with self._lock:
            self.unique_evaluations += 1

    @property
    def cache_hits(self) -> int:
        return self.algorithmic_calls - self.unique_evaluations

    def stage_calls(self, name: str) -> int:
        return self._stage_calls.get(name, 0)

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "algorithmic_calls": self.algorithmic_calls,
                "unique_evaluations": self.unique_evaluations,
                "cache_hits": self.algorithmic_calls - self.unique_evaluations,
                "stage_calls": dict(sorted(self._stage_calls.items())),
            }


class EvaluationOracle:
    """Front door for pipeline scores: counts every request, memoizes results."""

    def __init__(self, cache: EvalCache | None = None, ledger: BudgetLedger | None = None):
        self.cache = cache if cache is not None else EvalCache()
        self.ledger = ledger if ledger is not None else BudgetLedger()

    def evaluate(self, pipeline: Sequence[int]) -> EvalResult:
        key = tuple(int(s) for s in pipeline)
        self.ledger.record_call()
        (score, failed), from_cache = self.cache.get_or_compute(key, lambda: self._compute(key))
        if not from_cache:
            self.ledger.record_unique()
        return EvalResult(score=score, failed=failed, from_cache=from_cache)

    def score(self, pipeline: Sequence[int]) -> float:
        return self.evaluate(pipeline).score

    def _compute(self, key: Pipeline) -> tuple[float, bool]:  # pragma: no cover
        raise NotImplementedError


class DatasetOracle(EvaluationOracle):
    """Scores a pipeline by transformed-train fit and validation accuracy.

    Failure (score 0.0, failed=True) covers: execution blow-up, any missing
    cell remaining in either view, or a single-class transformed train side.
    Failures are cached like any other result.
    """

    def __init__(
        self,
        library: OperatorLibrary,
        sd: SplitDataset,
        learner: LearnerConfig = LearnerConfig(),
        cache: EvalCache | None = None,
        ledger: BudgetLedger | None = None,
    ):
        super().__init__(cache, ledger)
        self.library = library
        self.sd = sd
        self.learner = learner

    def _compute(self, key: Pipeline) -> tuple[float, bool]:
        try:
            train, validation = run_pipeline(self.library, key, self.sd)
        except PipelineExecutionFailure:
            return 0.0, True
        if train.has_missing() or validation.has_missing():
            return 0.0, True
        if train.classes_present() < 2:
            return 0.0, True
        weights = train_softmax(train.numeric_matrix(), train.labels, self.learner)
        predicted = softmax_predict(weights, validation.numeric_matrix())
        acc = float(np.mean(predicted == validation.labels))
        return acc, False


class TableOracle(EvaluationOracle):
    """Scores pipelines from an explicit table or payoff function (for tests
    and constructed games). Entries never fail."""

    def __init__(
        self,
        payoff: Mapping[Pipeline, float] | Callable[[Pipeline], float],
        cache: EvalCache | None = None,
        ledger: BudgetLedger | None = None,
    ):
        super().__init__(cache, ledger)
        if callable(payoff):
            self._payoff = payoff
        else:
            table = {tuple(k): float(v) for k, v in payoff.items()}
            self._payoff = table.__getitem__

    def _compute(self, key: Pipeline) -> tuple[float, bool]:
        return float(self._payoff(key)), False


def exhaustive_space_size(n_ops: int, length: int) -> int:
    return (n_ops + 1) ** length


def exhaustive_best(
    oracle: EvaluationOracle,
    op_ids: Sequence[int],
    length: int,
    cap: int = 20_000,
    workers: int = 1,
) -> tuple[Pipeline, float]:
    """Evaluate every pipeline over (ops + NULL)^length; ties go to the
    lexicographically smallest slot sequence (NULL sorts first)."""
    size = exhaustive_space_size(len(op_ids), length)
    if size > cap:
        raise SearchSpaceTooLarge(f"{size} pipelines exceeds cap {cap}")
    candidates = sorted([NULL_ID, *op_ids])
    pipelines = list(itertools.product(candidates, repeat=length))
    scores = ordered_map(oracle.score, pipelines, workers)
    best_pipeline: Pipeline | None = None
    best_score = -np.inf
    for pipeline, s in zip(pipelines, scores):
        if s > best_score:
            best_pipeline, best_score = pipeline, s
    assert best_pipeline is not None
    return best_pipeline, float(best_score)
