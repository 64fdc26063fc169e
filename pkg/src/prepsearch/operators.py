"""Data-preparation operators, their category partition, and pipeline execution.

An operator is fit on the current train view only and then applied to both
views, left to right; the NULL slot (id -1) is skipped. Operators that do not
apply to the data at hand (an encoder with no categorical columns, PCA with
fewer than two numeric columns) fit as the identity instead of failing, so
the search space stays total. Stochastic operators draw their parameters from
a substream of (library seed, operator id), never from global state.

NaN cells are missing values and may flow through a pipeline; only inf cells
are treated as a numeric blow-up and raise PipelineExecutionFailure.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import ColumnKind, Dataset, SplitDataset, _parse_finite
from .errors import DataError, PipelineExecutionFailure, SchemaMismatch
from .rng import substream

NULL_ID = -1

Pipeline = tuple[int, ...]


class OperatorKind(enum.Enum):
    IMPUTE_MEAN = "impute_mean"
    IMPUTE_MEDIAN = "impute_median"
    IMPUTE_MOST_FREQUENT = "impute_most_frequent"
    IMPUTE_MOST_FREQUENT_CAT = "impute_most_frequent_cat"
    ENCODE_LABEL = "encode_label"
    ENCODE_ONE_HOT = "encode_one_hot"
    CAST_NUMERIC = "cast_numeric"
    SCALE_MIN_MAX = "scale_min_max"
    SCALE_MAX_ABS = "scale_max_abs"
    SCALE_ROBUST = "scale_robust"
    SCALE_STANDARD = "scale_standard"
    QUANTILE_UNIFORM = "quantile_uniform"
    SIGNED_LOG = "signed_log"
    ROW_NORMALIZE = "row_normalize"
    KBINS = "kbins"
    POLYNOMIAL = "polynomial"
    INTERACTIONS = "interactions"
    PCA_AUTO = "pca_auto"
    PCA_RANK2 = "pca_rank2"
    TRUNCATED_SVD = "truncated_svd"
    RANDOM_PROJECTION = "random_projection"
    RANDOM_THRESHOLDS = "random_thresholds"
    VARIANCE_THRESHOLD = "variance_threshold"


@dataclass(frozen=True)
class OperatorSpec:
    op_id: int
    name: str
    kind: OperatorKind
    category_id: int


@dataclass(frozen=True)
class Category:
    category_id: int
    name: str
    members: tuple[int, ...]


@dataclass(frozen=True)
class OperatorLibrary:
    """Operators 0..N-1 partitioned into disjoint categories."""

    operators: tuple[OperatorSpec, ...]
    categories: tuple[Category, ...]
    seed: int = 0

    def __post_init__(self):
        ids = [op.op_id for op in self.operators]
        if ids != list(range(len(ids))):
            raise DataError("operator ids must be contiguous from 0")
        seen: set[int] = set()
        for cat in self.categories:
            for m in cat.members:
                if m in seen:
                    raise DataError(f"operator {m} assigned to two categories")
                seen.add(m)
                if self.operators[m].category_id != cat.category_id:
                    raise DataError(f"operator {m} disagrees with its category")
        if seen != set(ids):
            raise DataError("category members do not cover the operator set")

    @property
    def n_ops(self) -> int:
        return len(self.operators)

    @property
    def op_ids(self) -> tuple[int, ...]:
        return tuple(op.op_id for op in self.operators)

    @property
    def category_ids(self) -> tuple[int, ...]:
        return tuple(c.category_id for c in self.categories)

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    def spec(self, op_id: int) -> OperatorSpec:
        return self.operators[op_id]

    def category(self, category_id: int) -> Category:
        for c in self.categories:
            if c.category_id == category_id:
                return c
        raise KeyError(category_id)

    def members(self, category_id: int) -> tuple[int, ...]:
        return self.category(category_id).members

    def category_of(self, op_id: int) -> int:
        return self.operators[op_id].category_id

    def op_name(self, op_id: int) -> str:
        return "null" if op_id == NULL_ID else self.operators[op_id].name

    def category_name(self, category_id: int) -> str:
        return "null" if category_id == NULL_ID else self.category(category_id).name

    def to_json_obj(self) -> dict:
        return {
            "seed": self.seed,
            "n_operators": self.n_ops,
            "operators": [
                {
                    "id": op.op_id,
                    "name": op.name,
                    "kind": op.kind.value,
                    "category": self.category_name(op.category_id),
                }
                for op in self.operators
            ],
            "categories": [
                {"id": c.category_id, "name": c.name, "members": list(c.members)}
                for c in self.categories
            ],
        }


def make_library(
    groups: Sequence[tuple[str, Sequence[tuple[str, OperatorKind]]]],
    seed: int = 0,
) -> OperatorLibrary:
    """Assemble a library from (category name, [(op name, kind), ...]) groups."""
    operators: list[OperatorSpec] = []
    categories: list[Category] = []
    for cat_id, (cat_name, members) in enumerate(groups):
        member_ids = []
        for name, kind in members:
            op_id = len(operators)
            operators.append(OperatorSpec(op_id=op_id, name=name, kind=kind, category_id=cat_id))
            member_ids.append(op_id)
        categories.append(Category(category_id=cat_id, name=cat_name, members=tuple(member_ids)))
    return OperatorLibrary(operators=tuple(operators), categories=tuple(categories), seed=seed)


K = OperatorKind

BUILTIN_GROUPS: tuple[tuple[str, tuple[tuple[str, OperatorKind], ...]], ...] = (
    (
        "imputation",
        (
            ("impute_mean", K.IMPUTE_MEAN),
            ("impute_median", K.IMPUTE_MEDIAN),
            ("impute_most_frequent", K.IMPUTE_MOST_FREQUENT),
            ("impute_most_frequent_cat", K.IMPUTE_MOST_FREQUENT_CAT),
        ),
    ),
    (
        "encoding",
        (
            ("encode_label", K.ENCODE_LABEL),
            ("encode_one_hot", K.ENCODE_ONE_HOT),
            ("cast_numeric", K.CAST_NUMERIC),
        ),
    ),
    (
        "scaling",
        (
            ("scale_min_max", K.SCALE_MIN_MAX),
            ("scale_max_abs", K.SCALE_MAX_ABS),
            ("scale_robust", K.SCALE_ROBUST),
            ("scale_standard", K.SCALE_STANDARD),
            ("quantile_uniform", K.QUANTILE_UNIFORM),
            ("signed_log", K.SIGNED_LOG),
            ("row_normalize", K.ROW_NORMALIZE),
            ("kbins", K.KBINS),
        ),
    ),
    (
        "engineering",
        (
            ("polynomial", K.POLYNOMIAL),
            ("interactions", K.INTERACTIONS),
            ("pca_auto", K.PCA_AUTO),
            ("pca_rank2", K.PCA_RANK2),
            ("truncated_svd", K.TRUNCATED_SVD),
            ("random_projection", K.RANDOM_PROJECTION),
            ("random_thresholds", K.RANDOM_THRESHOLDS),
        ),
    ),
    (
        "selection",
        (("variance_threshold", K.VARIANCE_THRESHOLD),),
    ),
)


def builtin_library(seed: int = 0) -> OperatorLibrary:
    """The default library: 23 operators in 5 categories."""
    return make_library(BUILTIN_GROUPS, seed=seed)


@dataclass(frozen=True)
class FittedOperator:
    spec: OperatorSpec
    input_kinds: tuple[ColumnKind, ...]
    params: dict


# ---------------------------------------------------------------------------
# fitting helpers

_KBINS_K = 5
_VARIANCE_EPS = 1e-8
_POLY_MAX_COLS = 32


def _nan_stat(col: np.ndarray, fn) -> float | None:
    vals = col[~np.isnan(col)]
    if vals.size == 0:
        return None
    return float(fn(vals))


def _most_frequent_value(vals: np.ndarray) -> float:
    uniq, counts = np.unique(vals, return_counts=True)
    return float(uniq[int(np.argmax(counts))])  # ties: smallest value


def _fit_numeric_impute(train: Dataset, stat) -> dict:
    idx = train.numeric_indices()
    if not idx:
        return {"identity": True}
    fill = {}
    for j in idx:
        v = _nan_stat(train.columns[j], stat)
        fill[j] = 0.0 if v is None else v
    return {"fill": fill}


def _fit_cat_impute(train: Dataset) -> dict:
    idx = train.categorical_indices()
    if not idx:
        return {"identity": True}
    fill: dict[int, str | None] = {}
    for j in idx:
        counts: dict[str, int] = {}
        for tok in train.columns[j]:
            if tok is not None:
                counts[tok] = counts.get(tok, 0) + 1
        best, best_n = None, 0
        for tok, n in counts.items():  # ties: first token seen in the column
            if n > best_n:
                best, best_n = tok, n
        fill[j] = best
    return {"fill": fill}


def _fit_label_encode(train: Dataset) -> dict:
    idx = train.categorical_indices()
    if not idx:
        return {"identity": True}
    vocab: dict[int, dict[str, int]] = {}
    for j in idx:
        codes: dict[str, int] = {}
        for tok in train.columns[j]:
            if tok is not None and tok not in codes:
                codes[tok] = len(codes)
        vocab[j] = codes
    return {"vocab": vocab}


def _fit_one_hot(train: Dataset) -> dict:
    idx = train.categorical_indices()
    if not idx:
        return {"identity": True}
    vocab: dict[int, list[str]] = {}
    for j in idx:
        seen: list[str] = []
        have: set[str] = set()
        for tok in train.columns[j]:
            if tok is not None and tok not in have:
                have.add(tok)
                seen.append(tok)
        vocab[j] = seen
    return {"vocab": vocab}


def _fit_cast_numeric(train: Dataset) -> dict:
    convertible = []
    for j in train.categorical_indices():
        toks = [t for t in train.columns[j] if t is not None]
        if toks and all(_parse_finite(t) is not None for t in toks):
            convertible.append(j)
    if not convertible:
        return {"identity": True}
    return {"convert": convertible}


def _fit_affine_scaler(train: Dataset, kind: OperatorKind) -> dict:
    idx = train.numeric_indices()
    if not idx:
        return {"identity": True}
    shift, inv = {}, {}
    for j in idx:
        col = train.columns[j]
        if kind is K.SCALE_MIN_MAX:
            lo, hi = _nan_stat(col, np.min), _nan_stat(col, np.max)
            s = 0.0 if lo is None else lo
            spread = 0.0 if lo is None else hi - lo
        elif kind is K.SCALE_MAX_ABS:
            m = _nan_stat(col, lambda v: np.max(np.abs(v)))
            s, spread = 0.0, (0.0 if m is None else m)
        elif kind is K.SCALE_ROBUST:
            med = _nan_stat(col, np.median)
            q25 = _nan_stat(col, lambda v: np.quantile(v, 0.25))
            q75 = _nan_stat(col, lambda v: np.quantile(v, 0.75))
            s = 0.0 if med is None else med
            spread = 0.0 if med is None else q75 - q25
        else:  # SCALE_STANDARD
            mean = _nan_stat(col, np.mean)
            std = _nan_stat(col, np.std)
            s = 0.0 if mean is None else mean
            spread = 0.0 if std is None else std
        shift[j] = s
        # degenerate spread maps every non-missing cell to 0.0
        inv[j] = 1.0 / spread if spread > 0.0 else 0.0
    return {"shift": shift, "inv": inv}


def _fit_quantile(train: Dataset) -> dict:
    idx = train.numeric_indices()
    if not idx:
        return {"identity": True}
    tables: dict[int, tuple[np.ndarray, np.ndarray] | None] = {}
    for j in idx:
        vals = train.columns[j]
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            tables[j] = None
            continue
        uniq, counts = np.unique(vals, return_counts=True)
        if uniq.size == 1:
            tables[j] = None  # single-valued: transform to 0.0 like min-max
            continue
        cdf = (np.cumsum(counts) - counts / 2.0) / vals.size
        tables[j] = (uniq, cdf)
    return {"tables": tables}


def _fit_kbins(train: Dataset) -> dict:
    idx = train.numeric_indices()
    if not idx:
        return {"identity": True}
    edges: dict[int, np.ndarray | None] = {}
    qs = np.linspace(0, 1, _KBINS_K + 1)[1:-1]
    for j in idx:
        vals = train.columns[j]
        vals = vals[~np.isnan(vals)]
        edges[j] = np.quantile(vals, qs) if vals.size else None
    return {"edges": edges}


def _complete_numeric_block(train: Dataset) -> tuple[list[int], np.ndarray]:
    idx = train.numeric_indices()
    block = train.numeric_matrix()
    complete = block[~np.isnan(block).any(axis=1)]
    return idx, complete


def _signed_components(comps: np.ndarray) -> np.ndarray:
    for r in range(comps.shape[0]):
        k = int(np.argmax(np.abs(comps[r])))
        if comps[r, k] < 0:
            comps[r] = -comps[r]
    return comps


def _power_iteration_components(
    cov: np.ndarray, max_rank: int, var_target: float | None, iters: int = 100
) -> np.ndarray:
    d = cov.shape[0]
    total_var = float(np.trace(cov))
    comps: list[np.ndarray] = []
    residual = cov.copy()
    explained = 0.0
    for _ in range(max_rank):
        v = np.ones(d) / np.sqrt(d)
        for _ in range(iters):
            w = residual @ v
            norm = float(np.linalg.norm(w))
            if norm < 1e-12:
                break
            v = w / norm
        lam = float(v @ residual @ v)
        if lam <= 1e-12:
            break
        comps.append(v.copy())
        explained += lam
        residual = residual - lam * np.outer(v, v)
        if var_target is not None and total_var > 0 and explained >= var_target * total_var:
            break
    if not comps:
        return np.empty((0, d))
    return _signed_components(np.array(comps))


def _fit_pca(train: Dataset, auto_rank: bool) -> dict:
    idx, complete = _complete_numeric_block(train)
    if len(idx) < 2 or complete.shape[0] < 2:
        return {"identity": True}
    mean = complete.mean(axis=0)
    centered = complete - mean
    cov = centered.T @ centered / centered.shape[0]
    if auto_rank:
        max_rank = min(len(idx), complete.shape[0], 8)
        comps = _power_iteration_components(cov, max_rank, var_target=0.9)
    else:
        comps = _power_iteration_components(cov, min(2, len(idx)), var_target=None)
    if comps.shape[0] == 0:
        return {"identity": True}
    return {"idx": idx, "mean": mean, "components": comps, "prefix": "pca"}


def _fit_truncated_svd(train: Dataset) -> dict:
    idx, complete = _complete_numeric_block(train)
    if len(idx) < 2 or complete.shape[0] < 2:
        return {"identity": True}
    _, s, vt = np.linalg.svd(complete, full_matrices=False)
    keep = min(2, int((s > 1e-12).sum()))
    if keep == 0:
        return {"identity": True}
    comps = _signed_components(vt[:keep].copy())
    return {"idx": idx, "mean": np.zeros(len(idx)), "components": comps, "prefix": "svd"}


def _fit_random_projection(train: Dataset, rng: np.random.Generator) -> dict:
    idx = train.numeric_indices()
    if len(idx) < 2:
        return {"identity": True}
    r = min(len(idx), 4)
    matrix = rng.standard_normal((len(idx), r)) / np.sqrt(r)
    return {"idx": idx, "matrix": matrix, "prefix": "proj"}


def _fit_random_thresholds(train: Dataset, rng: np.random.Generator) -> dict:
    idx = train.numeric_indices()
    if not idx:
        return {"identity": True}
    d = len(idx)
    n_out = min(16, max(4, 2 * d))
    cuts: list[tuple[int, float]] = []
    for _ in range(n_out):
        k = int(rng.integers(0, d))
        col = train.columns[idx[k]]
        lo = _nan_stat(col, np.min)
        hi = _nan_stat(col, np.max)
        if lo is None:
            lo = hi = 0.0
        thr = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        cuts.append((k, thr))
    return {"idx": idx, "cuts": cuts, "prefix": "thr"}


def _fit_poly(train: Dataset, interactions_only: bool) -> dict:
    idx = train.numeric_indices()
    needed = 2 if interactions_only else 1
    if len(idx) < needed or len(idx) > _POLY_MAX_COLS:
        return {"identity": True}
    return {"idx": idx, "interactions_only": interactions_only}


def _fit_variance_threshold(train: Dataset) -> dict:
    idx = train.numeric_indices()
    if not idx:
        return {"identity": True}
    drop = []
    for j in idx:
        col = train.columns[j]
        vals = col[~np.isnan(col)]
        var = float(np.var(vals)) if vals.size else 0.0
        if var <= _VARIANCE_EPS:
            drop.append(j)
    if not drop:
        return {"identity": True}
    return {"drop": drop}


def fit_operator(library: OperatorLibrary, op_id: int, train: Dataset) -> FittedOperator:
    """Fit one operator on the train view. Inapplicable operators fit as identity."""
    spec = library.spec(op_id)
    kind = spec.kind
    if kind is K.IMPUTE_MEAN:
        params = _fit_numeric_impute(train, np.mean)
    elif kind is K.IMPUTE_MEDIAN:
        params = _fit_numeric_impute(train, np.median)
    elif kind is K.IMPUTE_MOST_FREQUENT:
        params = _fit_numeric_impute(train, lambda v: _most_frequent_value(v))
    elif kind is K.IMPUTE_MOST_FREQUENT_CAT:
        params = _fit_cat_impute(train)
    elif kind is K.ENCODE_LABEL:
        params = _fit_label_encode(train)
    elif kind is K.ENCODE_ONE_HOT:
        params = _fit_one_hot(train)
    elif kind is K.CAST_NUMERIC:
        params = _fit_cast_numeric(train)
    elif kind in (K.SCALE_MIN_MAX, K.SCALE_MAX_ABS, K.SCALE_ROBUST, K.SCALE_STANDARD):
        params = _fit_affine_scaler(train, kind)
    elif kind is K.QUANTILE_UNIFORM:
        params = _fit_quantile(train)
    elif kind is K.SIGNED_LOG or kind is K.ROW_NORMALIZE:
        params = {"identity": True} if not train.numeric_indices() else {}
    elif kind is K.KBINS:
        params = _fit_kbins(train)
    elif kind is K.POLYNOMIAL:
        params = _fit_poly(train, interactions_only=False)
    elif kind is K.INTERACTIONS:
        params = _fit_poly(train, interactions_only=True)
    elif kind is K.PCA_AUTO:
        params = _fit_pca(train, auto_rank=True)
    elif kind is K.PCA_RANK2:
        params = _fit_pca(train, auto_rank=False)
    elif kind is K.TRUNCATED_SVD:
        params = _fit_truncated_svd(train)
    elif kind is K.RANDOM_PROJECTION:
        params = _fit_random_projection(train, substream(library.seed, "operator", op_id))
    elif kind is K.RANDOM_THRESHOLDS:
        params = _fit_random_thresholds(train, substream(library.seed, "operator", op_id))
    elif kind is K.VARIANCE_THRESHOLD:
        params = _fit_variance_threshold(train)
    else:  # pragma: no cover
        raise DataError(f"no fitter for {kind}")
    return FittedOperator(spec=spec, input_kinds=train.column_kinds, params=params)


# ---------------------------------------------------------------------------
# application

def _rebuild(ds: Dataset, columns, kinds, names) -> Dataset:
    return Dataset(
        name=ds.name,
        columns=tuple(columns),
        column_kinds=tuple(kinds),
        column_names=tuple(names),
        labels=ds.labels,
        label_names=ds.label_names,
        label_column=ds.label_column,
    )


def _apply_numeric_fill(params: dict, ds: Dataset) -> Dataset:
    cols = list(ds.columns)
    for j, fill in params["fill"].items():
        col = cols[j]
        cols[j] = np.where(np.isnan(col), fill, col)
    return _rebuild(ds, cols, ds.column_kinds, ds.column_names)


def _apply_cat_fill(params: dict, ds: Dataset) -> Dataset:
    cols = list(ds.columns)
    for j, fill in params["fill"].items():
        if fill is None:
            continue
        cols[j] = np.array([fill if v is None else v for v in cols[j]], dtype=object)
    return _rebuild(ds, cols, ds.column_kinds, ds.column_names)


def _apply_label_encode(params: dict, ds: Dataset) -> Dataset:
    cols, kinds = list(ds.columns), list(ds.column_kinds)
    for j, codes in params["vocab"].items():
        cols[j] = np.array(
            [np.nan if v is None else codes.get(v, np.nan) for v in cols[j]],
            dtype=np.float64,
        )
        kinds[j] = ColumnKind.NUMERIC
    return _rebuild(ds, cols, kinds, ds.column_names)


def _apply_one_hot(params: dict, ds: Dataset) -> Dataset:
    vocab = params["vocab"]
    cols, kinds, names = [], [], []
    for j, (col, kind, name) in enumerate(zip(ds.columns, ds.column_kinds, ds.column_names)):
        if j not in vocab:
            cols.append(col)
            kinds.append(kind)
            names.append(name)
            continue
        for tok in vocab[j]:  # missing and unseen tokens become all-zero rows
            cols.append(np.array([1.0 if v == tok else 0.0 for v in col], dtype=np.float64))
            kinds.append(ColumnKind.NUMERIC)
            names.append(f"{name}={tok}")
    return _rebuild(ds, cols, kinds, names)


def _apply_cast_numeric(params: dict, ds: Dataset) -> Dataset:
    cols, kinds = list(ds.columns), list(ds.column_kinds)
    for j in params["convert"]:
        parsed = [
            np.nan if v is None else p if (p := _parse_finite(v)) is not None else np.nan
            for v in cols[j]
        ]
        cols[j] = np.array(parsed, dtype=np.float64)
        kinds[j] = ColumnKind.NUMERIC
    return _rebuild(ds, cols, kinds, ds.column_names)


def _apply_affine(params: dict, ds: Dataset) -> Dataset:
    cols = list(ds.columns)
    for j, s in params["shift"].items():
        cols[j] = (cols[j] - s) * params["inv"][j]
    return _rebuild(ds, cols, ds.column_kinds, ds.column_names)


def _apply_quantile(params: dict, ds: Dataset) -> Dataset:
    cols = list(ds.columns)
    for j, table in params["tables"].items():
        col = cols[j]
        if table is None:
            cols[j] = np.where(np.isnan(col), np.nan, 0.0)
        else:
            uniq, cdf = table
            cols[j] = np.interp(col, uniq, cdf)
    return _rebuild(ds, cols, ds.column_kinds, ds.column_names)


def _apply_signed_log(ds: Dataset) -> Dataset:
    cols = list(ds.columns)
    for j in ds.numeric_indices():
        col = cols[j]
        cols[j] = np.sign(col) * np.log1p(np.abs(col))
    return _rebuild(ds, cols, ds.column_kinds, ds.column_names)


def _apply_row_normalize(ds: Dataset) -> Dataset:
    idx = ds.numeric_indices()
    block = ds.numeric_matrix()
    norms = np.sqrt(np.nansum(block**2, axis=1))
    norms[norms == 0.0] = 1.0
    cols = list(ds.columns)
    for j in idx:
        cols[j] = cols[j] / norms
    return _rebuild(ds, cols, ds.column_kinds, ds.column_names)


def _apply_kbins(params: dict, ds: Dataset) -> Dataset:
    cols = list(ds.columns)
    for j, edges in params["edges"].items():
        col = cols[j]
        if edges is None:
            continue
        binned = np.searchsorted(edges, np.nan_to_num(col), side="right").astype(np.float64)
        cols[j] = np.where(np.isnan(col), np.nan, binned)
    return _rebuild(ds, cols, ds.column_kinds, ds.column_names)


def _apply_poly(params: dict, ds: Dataset) -> Dataset:
    idx = params["idx"]
    X = np.column_stack([ds.columns[j] for j in idx])
    cols, kinds, names = list(ds.columns), list(ds.column_kinds), list(ds.column_names)
    src = [ds.column_names[j] for j in idx]
    if not params["interactions_only"]:
        for k in range(len(idx)):
            cols.append(X[:, k] ** 2)
            kinds.append(ColumnKind.NUMERIC)
            names.append(f"{src[k]}^2")
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            cols.append(X[:, a] * X[:, b])
            kinds.append(ColumnKind.NUMERIC)
            names.append(f"{src[a]}*{src[b]}")
    return _rebuild(ds, cols, kinds, names)


def _apply_components(params: dict, ds: Dataset) -> Dataset:
    """Replace the numeric block with its image under a fitted linear map."""
    idx = set(params["idx"])
    X = np.column_stack([ds.columns[j] for j in params["idx"]])
    if "matrix" in params:
        out = X @ params["matrix"]
    else:
        out = (X - params["mean"]) @ params["components"].T
    cols, kinds, names = [], [], []
    for j, (col, kind, name) in enumerate(zip(ds.columns, ds.column_kinds, ds.column_names)):
        if j not in idx:
            cols.append(col)
            kinds.append(kind)
            names.append(name)
    for r in range(out.shape[1]):
        cols.append(out[:, r])
        kinds.append(ColumnKind.NUMERIC)
        names.append(f"{params['prefix']}{r}")
    return _rebuild(ds, cols, kinds, names)


def _apply_thresholds(params: dict, ds: Dataset) -> Dataset:
    idx = params["idx"]
    block = np.column_stack([ds.columns[j] for j in idx])
    cols, kinds, names = [], [], []
    drop = set(idx)
    for j, (col, kind, name) in enumerate(zip(ds.columns, ds.column_kinds, ds.column_names)):
        if j not in drop:
            cols.append(col)
            kinds.append(kind)
            names.append(name)
    for r, (k, thr) in enumerate(params["cuts"]):
        x = block[:, k]
        cols.append(np.where(np.isnan(x), np.nan, (x > thr).astype(np.float64)))
        kinds.append(ColumnKind.NUMERIC)
        names.append(f"{params['prefix']}{r}")
    return _rebuild(ds, cols, kinds, names)


def _apply_drop(params: dict, ds: Dataset) -> Dataset:
    drop = set(params["drop"])
    keep = [j for j in range(ds.n_cols) if j not in drop]
    return _rebuild(
        ds,
        [ds.columns[j] for j in keep],
        [ds.column_kinds[j] for j in keep],
        [ds.column_names[j] for j in keep],
    )


def apply_operator(fitted: FittedOperator, ds: Dataset) -> Dataset:
    """Apply a fitted operator. Deterministic given the fitted state."""
    if ds.column_kinds != fitted.input_kinds:
        raise SchemaMismatch(
            f"{fitted.spec.name}: fitted on {len(fitted.input_kinds)} columns "
            f"with different kinds than the {ds.n_cols} given"
        )
    if fitted.params.get("identity"):
        return ds
    kind = fitted.spec.kind
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if kind in (K.IMPUTE_MEAN, K.IMPUTE_MEDIAN, K.IMPUTE_MOST_FREQUENT):
            return _apply_numeric_fill(fitted.params, ds)
        if kind is K.IMPUTE_MOST_FREQUENT_CAT:
            return _apply_cat_fill(fitted.params, ds)
        if kind is K.ENCODE_LABEL:
            return _apply_label_encode(fitted.params, ds)
        if kind is K.ENCODE_ONE_HOT:
            return _apply_one_hot(fitted.params, ds)
        if kind is K.CAST_NUMERIC:
            return _apply_cast_numeric(fitted.params, ds)
        if kind in (K.SCALE_MIN_MAX, K.SCALE_MAX_ABS, K.SCALE_ROBUST, K.SCALE_STANDARD):
            return _apply_affine(fitted.params, ds)
        if kind is K.QUANTILE_UNIFORM:
            return _apply_quantile(fitted.params, ds)
        if kind is K.SIGNED_LOG:
            return _apply_signed_log(ds)
        if kind is K.ROW_NORMALIZE:
            return _apply_row_normalize(ds)
        if kind is K.KBINS:
            return _apply_kbins(fitted.params, ds)
        if kind in (K.POLYNOMIAL, K.INTERACTIONS):
            return _apply_poly(fitted.params, ds)
        if kind in (K.PCA_AUTO, K.PCA_RANK2, K.TRUNCATED_SVD, K.RANDOM_PROJECTION):
            return _apply_components(fitted.params, ds)
        if kind is K.RANDOM_THRESHOLDS:
            return _apply_thresholds(fitted.params, ds)
        if kind is K.VARIANCE_THRESHOLD:
            return _apply_drop(fitted.params, ds)
    raise DataError(f"no applier for {kind}")  # pragma: no cover


def _check_finite(ds: Dataset, step_name: str) -> None:
    for j in ds.numeric_indices():
        if np.isinf(ds.columns[j]).any():
            raise PipelineExecutionFailure(f"non-finite cells after {step_name}")


def run_pipeline(
    library: OperatorLibrary, pipeline: Sequence[int], sd: SplitDataset
) -> tuple[Dataset, Dataset]:
    """Execute slots left to right: fit on train, apply to both views.

    NULL slots are skipped. Labels are never read or altered. Raises
    PipelineExecutionFailure as soon as a step produces an inf cell; NaN is
    the missing marker and is allowed to flow through.
    """
    train, validation = sd.train, sd.validation
    for op_id in pipeline:
        if op_id == NULL_ID:
            continue
        fitted = fit_operator(library, int(op_id), train)
        train = apply_operator(fitted, train)
        validation = apply_operator(fitted, validation)
        _check_finite(train, fitted.spec.name)
        _check_finite(validation, fitted.spec.name)
    return train, validation
