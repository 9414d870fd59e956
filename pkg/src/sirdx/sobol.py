"""Variance-based (Sobol) sensitivity indices from Saltelli sample matrices.

For base matrices A and B and the hybrids AB_i (A with column i taken from
B), the estimators are::

    S1_i = mean(f(B) * (f(AB_i) - f(A))) / V
    ST_i = mean((f(A) - f(AB_i))**2) / (2 V)

with V the variance of the pooled f(A) and f(B) values.  Outputs are
centred on the pooled mean first; the estimators are unchanged in
expectation but the first-order one loses a noise term proportional to the
output mean.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import PARAM_NAMES, IntegratorConfig, SIRDXSimulator
from .dataset import PAPER_RANGES, OUTCOME_NAMES, ParamRanges
from .exceptions import ZeroVarianceError

TARGETS = ("simulator", "surrogate")


@dataclass(frozen=True)
class SobolPlan:
    """Sampling plan.

    ``ranges`` is a :class:`ParamRanges` or any sequence of ``(lo, hi)`` pairs,
    which lets the same machinery run on analytic test functions.
    """

    n_base: int = 1024
    ranges: object = PAPER_RANGES
    seed: int = 0
    target: str = "simulator"

    def __post_init__(self):
        if self.n_base < 2:
            raise ValueError(f"n_base must be >= 2, got {self.n_base}")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        bounds = self.bounds
        if np.any(bounds[:, 0] > bounds[:, 1]):
            raise ValueError("every range needs lo <= hi")

    @property
    def bounds(self) -> np.ndarray:
        if isinstance(self.ranges, ParamRanges):
            return self.ranges.as_bounds()
        return np.asarray(self.ranges, dtype=float).reshape(-1, 2)

    @property
    def input_names(self) -> tuple:
        if isinstance(self.ranges, ParamRanges):
            return PARAM_NAMES
        return tuple(f"x{k + 1}" for k in range(len(self.bounds)))


@dataclass
class SobolIndices:
    """Indices with shape (n_outputs, n_inputs); ``variance`` has one entry per output."""

    first_order: np.ndarray
    total_order: np.ndarray
    variance: np.ndarray
    input_names: tuple = ()
    output_names: tuple = ()
    meta: dict = field(default_factory=dict)

    def rows(self):
        for o, out_name in enumerate(self.output_names):
            for i, in_name in enumerate(self.input_names):
                yield in_name, out_name, self.first_order[o, i], self.total_order[o, i]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("input", "output", "s1", "st"))
            for in_name, out_name, s1, st in self.rows():
                w.writerow([in_name, out_name, format(s1, ".17g"), format(st, ".17g")])


def saltelli_matrices(plan: SobolPlan):
    """Return ``(A, B, AB)`` with ``AB[i]`` equal to A except column i from B."""
    bounds = plan.bounds
    d = len(bounds)
    rng = np.random.default_rng(plan.seed)
    U = rng.random((plan.n_base, 2 * d))
    lo, hi = bounds[:, 0], bounds[:, 1]
    A = lo + (hi - lo) * U[:, :d]
    B = lo + (hi - lo) * U[:, d:]
    AB = np.repeat(A[None, :, :], d, axis=0)
    for i in range(d):
        AB[i, :, i] = B[:, i]
    return A, B, AB


def estimate_indices(f_A, f_B, f_AB, input_names=(), output_names=()) -> SobolIndices:
    """Estimate first- and total-order indices from model evaluations.

    ``f_A`` and ``f_B`` have shape (n,) or (n, m); ``f_AB`` has shape (d, n)
    or (d, n, m), one slice per input.
    """
    f_A = np.asarray(f_A, dtype=float)
    f_B = np.asarray(f_B, dtype=float)
    f_AB = np.asarray(f_AB, dtype=float)
    if f_A.ndim == 1:
        f_A, f_B, f_AB = f_A[:, None], f_B[:, None], f_AB[..., None]
    n = f_A.shape[0]
    if n < 2 or f_B.shape != f_A.shape or f_AB.shape[1:] != f_A.shape:
        raise ValueError(f"inconsistent evaluation shapes {f_A.shape}, {f_B.shape}, {f_AB.shape}")
    pooled = np.concatenate([f_A, f_B])
    var = pooled.var(axis=0)
    if np.any(var < 1e-12):
        raise ZeroVarianceError("model output is (numerically) constant")
    centre = pooled.mean(axis=0)
    f_A, f_B, f_AB = f_A - centre, f_B - centre, f_AB - centre
    s1 = np.mean(f_B[None] * (f_AB - f_A[None]), axis=1) / var
    st = np.mean((f_A[None] - f_AB) ** 2, axis=1) / (2.0 * var)
    d, m = f_AB.shape[0], f_A.shape[1]
    return SobolIndices(
        first_order=s1.T, total_order=st.T, variance=var,
        input_names=tuple(input_names) or tuple(f"x{k + 1}" for k in range(d)),
        output_names=tuple(output_names) or tuple(f"y{k + 1}" for k in range(m)),
    )


def analyze(func, plan: SobolPlan, output_names=()) -> SobolIndices:
    """Evaluate ``func`` (maps an (n, d) array to (n,) or (n, m)) on the Saltelli design."""
    A, B, AB = saltelli_matrices(plan)
    d, n = AB.shape[0], plan.n_base
    stacked = np.concatenate([A, B, AB.reshape(d * n, -1)])
    values = np.asarray(func(stacked), dtype=float)
    f_A, f_B, rest = values[:n], values[n:2 * n], values[2 * n:]
    f_AB = rest.reshape((d, n) + values.shape[1:])
    idx = estimate_indices(f_A, f_B, f_AB, plan.input_names, output_names)
    idx.meta = {"n_base": n, "seed": plan.seed, "target": plan.target, "n_evaluations": len(values)}
    return idx


def sobol_run(plan: SobolPlan, model=None, cfg: IntegratorConfig | None = None) -> SobolIndices:
    """Indices of (d_final, i_max) with respect to the five coefficients.

    ``model`` is anything with ``predict(X) -> (n, 2)``; required when
    ``plan.target == 'surrogate'``, otherwise the simulator is used.
    """
    if plan.target == "surrogate":
        if model is None:
            raise ValueError("a trained surrogate is required for target='surrogate'")
        func = model.predict
    else:
        cfg = cfg if cfg is not None else IntegratorConfig()
        func = SIRDXSimulator(cfg.dt, cfg.t_max, cfg.stop_threshold).transform
    return analyze(func, plan, OUTCOME_NAMES)

