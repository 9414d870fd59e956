"""Parameter sampling, simulated datasets, scaling, labels and splits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, OneToOneFeatureMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import INITIAL_STATE, PARAM_NAMES, EpidemicState, IntegratorConfig, Params, simulate_batch
from .exceptions import BadKError, EmptyFitError, ParseError, TooFewRowsError

OUTCOME_NAMES = ("d_final", "i_max")
CSV_COLUMNS = PARAM_NAMES + OUTCOME_NAMES + ("label_mortality", "label_control")


@dataclass(frozen=True)
class ParamRanges:
    """Closed sampling interval ``(lo, hi)`` for each coefficient."""

    alpha: tuple = (1e-6, 3e-5)
    beta: tuple = (0.01, 0.1)
    mu: tuple = (0.001, 0.005)
    kappa: tuple = (0.0, 0.02)
    kappa0: tuple = (0.0, 0.005)

    def __post_init__(self):
        for name in PARAM_NAMES:
            lo, hi = (float(v) for v in getattr(self, name))
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0 or lo > hi:
                raise ValueError(f"bad range for {name}: ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))

    @property
    def lower(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in PARAM_NAMES])

    @property
    def upper(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in PARAM_NAMES])

    def as_bounds(self) -> np.ndarray:
        """(5, 2) array of [lo, hi] rows."""
        return np.column_stack([self.lower, self.upper])

    def contains(self, P) -> np.ndarray:
        P = np.atleast_2d(P)
        return np.all((P >= self.lower) & (P <= self.upper), axis=1)

    def to_dict(self) -> dict:
        return {n: list(getattr(self, n)) for n in PARAM_NAMES}

    @classmethod
    def from_dict(cls, d) -> "ParamRanges":
        unknown = set(d) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown parameter names: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in d.items()})


# The sampling ranges used to build the training data.
PAPER_RANGES = ParamRanges()
# Wider ranges listed separately among the modelling assumptions.
ASSUMPTION_RANGES = ParamRanges(
    alpha=(1e-6, 1e-4), beta=(0.01, 0.1), mu=(0.001, 0.004), kappa=(0.0, 0.01), kappa0=(0.0, 0.01)
)
RANGE_PRESETS = {"paper": PAPER_RANGES, "assumptions": ASSUMPTION_RANGES}


@dataclass(frozen=True)
class LabelRule:
    death_threshold: float = 200.0
    infection_threshold: float = 1000.0

    def __post_init__(self):
        if not (self.death_threshold > 0 and self.infection_threshold > 0):
            raise ValueError("label thresholds must be > 0")


def labelize(outcome, rule: LabelRule = LabelRule()):
    """Return (mortality_label, control_label) for one outcome or arrays of them.

    Mortality is 1 when deaths strictly exceed the death threshold; control is
    0 ("well controlled") when the peak is strictly below the infection
    threshold and 1 otherwise.
    """
    d = getattr(outcome, "d_final", None)
    if d is None:
        arr = np.asarray(outcome, dtype=float)
        d, i = arr[..., 0], arr[..., 1]
        return (d > rule.death_threshold).astype(int), (i >= rule.infection_threshold).astype(int)
    return int(d > rule.death_threshold), int(outcome.i_max >= rule.infection_threshold)


@dataclass(eq=False)
class Dataset:
    """Sampled parameters with simulated outcomes.

    ``X`` is (n, 5) in :data:`PARAM_NAMES` order and ``Y`` is (n, 2) holding
    (d_final, i_max).
    """

    X: np.ndarray
    Y: np.ndarray
    rule: LabelRule = field(default_factory=LabelRule)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, 5)
        self.Y = np.asarray(self.Y, dtype=float).reshape(-1, 2)
        if len(self.X) != len(self.Y):
            raise ValueError("X and Y row counts differ")
        if len(self.X) == 0:
            raise TooFewRowsError("dataset must have at least one row")

    @property
    def n_rows(self) -> int:
        return len(self.X)

    def __len__(self):
        return self.n_rows

    @property
    def labels(self) -> np.ndarray:
        """(n, 2) integer array of (label_mortality, label_control)."""
        m, c = labelize(self.Y, self.rule)
        return np.column_stack([m, c])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], self.rule, dict(self.provenance))

    def params(self, k) -> Params:
        return Params.from_array(self.X[k])

    def equals(self, other: "Dataset", rtol=0.0) -> bool:
        return (
            self.X.shape == other.X.shape
            and np.allclose(self.X, other.X, rtol=rtol, atol=0)
            and np.allclose(self.Y, other.Y, rtol=rtol, atol=0)
        )


def sample_params(n: int, ranges: ParamRanges = PAPER_RANGES, seed: int = 0) -> np.ndarray:
    """Draw ``n`` coefficient vectors uniformly from ``ranges`` as an (n, 5) array."""
    if n <= 0:
        raise ValueError("n must be > 0")
    rng = np.random.default_rng(seed)
    u = rng.random((n, 5))
    lo, hi = ranges.lower, ranges.upper
    P = lo + (hi - lo) * u
    # guard against lo + (hi - lo) * u rounding past hi
    return np.minimum(P, hi)


def generate(n: int, ranges: ParamRanges = PAPER_RANGES, cfg: IntegratorConfig | None = None,
             seed: int = 0, init: EpidemicState = INITIAL_STATE,
             rule: LabelRule = LabelRule()) -> Dataset:
    cfg = cfg if cfg is not None else IntegratorConfig()
    P = sample_params(n, ranges, seed)
    Y = simulate_batch(P, init, cfg)  # NonFiniteError carries the row index
    provenance = {
        "seed": seed,
        "ranges": ranges.to_dict(),
        "integrator": {"dt": cfg.dt, "t_max": cfg.t_max, "stop_threshold": cfg.stop_threshold},
    }
    return Dataset(P, Y, rule, provenance)


@dataclass(frozen=True)
class ScalerBounds:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if np.any(self.mins > self.maxs):
            raise ValueError("min must be <= max in every column")

    def to_dict(self):
        return {"min": self.mins.tolist(), "max": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["min"], dtype=float), np.asarray(d["max"], dtype=float))


def minmax_fit(rows) -> ScalerBounds:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.shape[0] < 2:
        raise EmptyFitError("min-max scaling needs at least 2 rows")
    return ScalerBounds(rows.min(axis=0), rows.max(axis=0))


def minmax_apply(bounds: ScalerBounds, rows) -> np.ndarray:
    """Map training min to 0 and max to 1; constant columns map to 0.5."""
    rows = np.asarray(rows, dtype=float)
    span = bounds.maxs - bounds.mins
    flat = span == 0
    out = (rows - bounds.mins) / np.where(flat, 1.0, span)
    return np.where(flat, 0.5, out)


def minmax_invert(bounds: ScalerBounds, scaled) -> np.ndarray:
    scaled = np.asarray(scaled, dtype=float)
    span = bounds.maxs - bounds.mins
    return bounds.mins + scaled * span


class MinMaxScaler(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """Column-wise min-max scaler to [0, 1].

    Unlike scikit-learn's scaler, zero-range columns map to 0.5, and the
    inverse of that value is the constant itself.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.bounds_ = minmax_fit(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        return minmax_apply(self.bounds_, check_array(X, dtype=np.float64))

    def inverse_transform(self, X):
        check_is_fitted(self)
        return minmax_invert(self.bounds_, check_array(X, dtype=np.float64))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_indices(n: int, fraction: float = 0.8, seed: int = 0):
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n_train = _round_half_up(n * fraction)
    if n_train == 0 or n_train == n:
        raise TooFewRowsError(f"a {fraction} split of {n} rows leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return perm[:n_train], perm[n_train:]


def split_train_test(dataset: Dataset, fraction: float = 0.8, seed: int = 0):
    train_idx, test_idx = split_indices(dataset.n_rows, fraction, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def kfold_indices(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffle ``range(n)`` and cut it into ``k`` folds whose sizes differ by at most one."""
    if k < 2 or n < k:
        raise BadKError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def write_csv(dataset: Dataset, path) -> None:
    labels = dataset.labels
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for x, y, lab in zip(dataset.X, dataset.Y, labels):
            w.writerow([format(v, ".17g") for v in (*x, *y)] + [int(lab[0]), int(lab[1])])


def read_csv(path, rule: LabelRule = LabelRule()) -> Dataset:
    """Read a dataset CSV.

    Labels stored in the file are checked against ``rule`` re-applied to the
    outcomes; a disagreement means the file was written with another rule.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"missing column(s): {', '.join(missing)}", line=1)
        pos = [header.index(c) for c in CSV_COLUMNS]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                rows.append([float(rec[p]) for p in pos])
            except (ValueError, IndexError):
                raise ParseError(f"malformed row {rec!r}", line=lineno) from None
    if not rows:
        raise ParseError("no data rows", line=2)
    arr = np.array(rows)
    ds = Dataset(arr[:, :5], arr[:, 5:7], rule, {"source": str(path)})
    if not np.array_equal(ds.labels, arr[:, 7:9].astype(int)):
        rule_desc = f"D > {rule.death_threshold}, I >= {rule.infection_threshold}"
        raise ParseError(f"stored labels disagree with the label rule ({rule_desc})")
    return ds
