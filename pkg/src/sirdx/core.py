"""SIRD-X compartmental model and its fixed-step integrators.

The model tracks susceptible (S), infected (I), recovered (R), deceased (D)
and contained (X) populations::

    dS/dt = -alpha S I - kappa0 S
    dI/dt =  alpha S I - (beta + mu) I - kappa0 I - kappa I
    dR/dt =  beta I
    dD/dt =  mu I
    dX/dt =  kappa0 S + (kappa + kappa0) I

``integrate`` uses explicit Euler; ``integrate_oracle`` uses classical
fourth-order Runge-Kutta and exists for verification.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from . import _kernels
from .exceptions import EmptyTrajectoryError, NonFiniteError, NotApplicableError

logger = logging.getLogger(__name__)

POPULATION = 10000.0
PARAM_NAMES = ("alpha", "beta", "mu", "kappa", "kappa0")
COMPARTMENTS = ("S", "I", "R", "D", "X")


@dataclass(frozen=True)
class Params:
    """Rate coefficients of one simulation (all per day; alpha per person-day)."""

    alpha: float
    beta: float
    mu: float
    kappa: float = 0.0
    kappa0: float = 0.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.mu, self.kappa, self.kappa0])

    @classmethod
    def from_array(cls, values) -> "Params":
        return cls(*(float(v) for v in values))

    def replace(self, **changes) -> "Params":
        fields = {name: getattr(self, name) for name in PARAM_NAMES}
        fields.update(changes)
        return Params(**fields)


@dataclass(frozen=True)
class EpidemicState:
    s: float
    i: float
    r: float = 0.0
    d: float = 0.0
    x: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        for name in ("s", "i", "r", "d", "x", "t"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if min(self.s, self.i, self.r, self.d, self.x) < 0:
            raise ValueError("compartment populations must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.i, self.r, self.d, self.x])

    @classmethod
    def from_array(cls, values, t=0.0) -> "EpidemicState":
        return cls(*(float(v) for v in values), t=t)

    @property
    def total(self) -> float:
        return self.s + self.i + self.r + self.d + self.x


INITIAL_STATE = EpidemicState(s=9997.0, i=3.0, t=0.0)

BASELINE_PARAMS = Params(alpha=3e-5, beta=0.01, mu=0.005, kappa=0.0, kappa0=0.0)
POLICY_PARAMS = BASELINE_PARAMS.replace(kappa=0.02, kappa0=0.005)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.01
    t_max: float = 2000.0
    stop_threshold: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if not self.t_max >= self.dt:
            raise ValueError(f"t_max must be >= dt, got {self.t_max!r}")
        if not self.stop_threshold >= 0:
            raise ValueError("stop_threshold must be >= 0")

    def n_steps(self, t0: float = 0.0) -> int:
        # small slack so e.g. 2000 / 0.01 is not rounded up to 200001
        return max(0, math.ceil((self.t_max - t0) / self.dt - 1e-9))


@dataclass(frozen=True)
class SimulationOutcome:
    d_final: float
    i_max: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States sampled every ``dt`` from the initial state to the terminal one.

    ``states`` has shape (n, 5) with columns S, I, R, D, X.
    """

    t: np.ndarray
    states: np.ndarray
    n_clamped: int = 0
    method: str = "euler"
    params: Params | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k) -> EpidemicState:
        return EpidemicState.from_array(self.states[k], t=self.t[k])

    @property
    def S(self):
        return self.states[:, 0]

    @property
    def I(self):  # noqa: E743
        return self.states[:, 1]

    @property
    def R(self):
        return self.states[:, 2]

    @property
    def D(self):
        return self.states[:, 3]

    @property
    def X(self):
        return self.states[:, 4]

    def to_csv(self, path) -> None:
        write_trajectory_csv(self, path)


def _check_state(state: EpidemicState) -> None:
    if not all(math.isfinite(v) for v in (*state.as_array(), state.t)):
        raise NonFiniteError("state contains NaN or Inf")


def derivative(state: EpidemicState, params: Params) -> np.ndarray:
    """Return (dS, dI, dR, dD, dX) in persons per day."""
    return np.array(_kernels.rhs(tuple(state.as_array()), tuple(params.as_array())))


def step_euler(state: EpidemicState, params: Params, dt: float) -> EpidemicState:
    """One explicit Euler step.

    Compartments pushed below zero are set to zero and the deficit is taken
    from the compartments that gained during the step, proportional to their
    gain, so the total population is conserved.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    new, clamped = _kernels.euler_step(tuple(state.as_array()), tuple(params.as_array()), float(dt))
    if clamped:
        logger.debug("negative compartment clamped at t=%g", state.t + dt)
    out = np.array(new)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"non-finite state after step from t={state.t}")
    return EpidemicState.from_array(out, t=state.t + dt)


def _integrate(params, init, cfg, method):
    _check_state(init)
    cfg = cfg if cfg is not None else IntegratorConfig()
    n_steps = cfg.n_steps(init.t)
    states, n, clamped, status = _kernels.integrate_full(
        params.as_array(), init.as_array(), cfg.dt, n_steps, cfg.stop_threshold, method
    )
    if status != _kernels.STATUS_OK:
        raise NonFiniteError(
            f"state became non-finite at step {n}; dt={cfg.dt} is too large for {params}"
        )
    if clamped:
        logger.debug("%d steps required negative clamping", clamped)
    t = init.t + np.arange(n + 1) * cfg.dt
    name = "euler" if method == _kernels.EULER else "rk4"
    return Trajectory(t=t, states=np.array(states), n_clamped=int(clamped), method=name, params=params)


def integrate(params: Params, init: EpidemicState = INITIAL_STATE,
              cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate with explicit Euler until ``t_max`` or I < ``stop_threshold``."""
    return _integrate(params, init, cfg, _kernels.EULER)


def integrate_oracle(params: Params, init: EpidemicState = INITIAL_STATE,
                     cfg: IntegratorConfig | None = None) -> Trajectory:
    """Same contract as :func:`integrate` but with fourth-order Runge-Kutta steps."""
    return _integrate(params, init, cfg, _kernels.RK4)


def analytic_peak(params: Params, s0: float, i0: float, n: float) -> float:
    """Closed-form peak of I for the containment-free (SIR-like) reduction.

    With rho = (beta + mu) / alpha the peak is ``n - rho + rho * ln(rho / s0)``,
    reached when S falls to rho.  Assumes R(0) = D(0) = X(0) = 0, so
    ``n = s0 + i0``.
    """
    if params.kappa != 0 or params.kappa0 != 0:
        raise NotApplicableError("closed-form peak requires kappa = kappa0 = 0")
    if params.alpha <= 0:
        raise NotApplicableError("closed-form peak requires alpha > 0")
    rho = (params.beta + params.mu) / params.alpha
    if s0 <= rho:
        raise NotApplicableError(f"subcritical start (s0={s0} <= rho={rho}); peak is i0")
    return n - rho + rho * math.log(rho / s0)


def outcome(traj: Trajectory) -> SimulationOutcome:
    if len(traj) == 0:
        raise EmptyTrajectoryError("trajectory has no states")
    return SimulationOutcome(d_final=float(traj.states[-1, 3]), i_max=float(traj.states[:, 1].max()))


def _configure_threads():
    raw = os.environ.get("SIRDX_THREADS")
    if not raw:
        return
    import numba

    try:
        wanted = int(raw)
    except ValueError:
        logger.warning("ignoring non-integer SIRDX_THREADS=%r", raw)
        return
    numba.set_num_threads(max(1, min(wanted, numba.config.NUMBA_NUM_THREADS)))


def simulate_batch(P, init: EpidemicState = INITIAL_STATE, cfg: IntegratorConfig | None = None,
                   method: str = "euler") -> np.ndarray:
    """Simulate every row of an (n, 5) parameter matrix.

    Returns an (n, 2) array of (d_final, i_max).  Rows are independent, so the
    parallel kernel gives the same numbers as a sequential loop.
    """
    P = np.ascontiguousarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != 5:
        raise ValueError(f"expected an (n, 5) parameter matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise ValueError("parameters must be finite and >= 0")
    _check_state(init)
    cfg = cfg if cfg is not None else IntegratorConfig()
    code = {"euler": _kernels.EULER, "rk4": _kernels.RK4}[method]
    _configure_threads()
    out, status = _kernels.batch_outcomes(
        P, init.as_array(), cfg.dt, cfg.n_steps(init.t), cfg.stop_threshold, code
    )
    bad = np.flatnonzero(status != _kernels.STATUS_OK)
    if bad.size:
        raise NonFiniteError(f"state became non-finite (dt={cfg.dt})", row=int(bad[0]))
    return out


class SIRDXSimulator(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping parameter rows to (d_final, i_max).

    Parameters
    ----------
    dt, t_max, stop_threshold : float
        Integrator settings, see :class:`IntegratorConfig`.
    method : {'euler', 'rk4'}
    s0, i0 : float
        Initial susceptible and infected counts; other compartments start at 0.
    """

    def __init__(self, dt=0.01, t_max=2000.0, stop_threshold=1e-3, method="euler",
                 s0=9997.0, i0=3.0):
        self.dt = dt
        self.t_max = t_max
        self.stop_threshold = stop_threshold
        self.method = method
        self.s0 = s0
        self.i0 = i0

    def fit(self, X, y=None):
        check_array(X)
        self.n_features_in_ = 5
        return self

    def transform(self, X):
        X = check_array(X, dtype=np.float64)
        cfg = IntegratorConfig(self.dt, self.t_max, self.stop_threshold)
        return simulate_batch(X, EpidemicState(self.s0, self.i0), cfg, self.method)

    # the simulator doubles as an exact "regressor" for sensitivity analysis
    predict = transform

    def __sklearn_is_fitted__(self):
        return True


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t",) + COMPARTMENTS)
        for t, row in zip(traj.t, traj.states):
            w.writerow([format(t, ".17g")] + [format(v, ".17g") for v in row])
