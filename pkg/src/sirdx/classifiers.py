"""Binary classifiers for the outbreak labels: logistic regression and kernel SVM.

Public labels are always 0/1.  The SVM maps them to -1/+1 internally and is
trained on the soft-margin dual with sequential minimal optimization, using
maximal-violating-pair working sets with second-order gain (as in LIBSVM).
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import EmptyInputError, LengthMismatchError, NonFiniteError, SingleClassError

KERNELS = ("linear", "polynomial", "rbf")
_KERNEL_ALIASES = {"poly": "polynomial"}
_TAU = 1e-12


def _check_binary(y) -> np.ndarray:
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return y.astype(int)


# ---------------------------------------------------------------- logistic


@dataclass(eq=False)
class LogisticModel:
    weights: np.ndarray
    bias: float
    n_iter: int = 0
    grad_norm: float = 0.0
    loss_history: np.ndarray | None = None

    def to_dict(self):
        return {"kind": "logistic", "weights": self.weights.tolist(), "bias": self.bias,
                "n_iter": self.n_iter, "grad_norm": self.grad_norm}


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _cross_entropy(p, y):
    eps = 1e-300
    return float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))


def logistic_train(X, y, learning_rate=0.5, max_iters=5000, tolerance=1e-6, seed=0) -> LogisticModel:
    """Full-batch gradient descent on the mean cross-entropy, from zero weights.

    Stops once the gradient norm drops below ``tolerance``.  The start point is
    fixed, so ``seed`` does not change the result.
    """
    X = np.asarray(X, dtype=float)
    y = _check_binary(y).astype(float)
    if len(X) < 2:
        raise EmptyInputError("logistic regression needs at least 2 samples")
    if len(X) != len(y):
        raise LengthMismatchError(f"{len(X)} inputs vs {len(y)} labels")
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    losses = []
    grad_norm = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        p = _sigmoid(X @ w + b)
        losses.append(_cross_entropy(p, y))
        r = p - y
        gw = X.T @ r / n
        gb = r.mean()
        grad_norm = float(np.sqrt(gw @ gw + gb * gb))
        if not np.isfinite(grad_norm):
            raise NonFiniteError(f"logistic regression diverged at iteration {it}")
        if grad_norm < tolerance:
            break
        w -= learning_rate * gw
        b -= learning_rate * gb
    return LogisticModel(w, float(b), it, grad_norm, np.array(losses))


def logistic_predict(model: LogisticModel, X):
    """Return (probabilities, labels); ties at probability 0.5 go to class 1."""
    X = np.asarray(X, dtype=float)
    score = X @ model.weights + model.bias
    prob = _sigmoid(score)
    return prob, (score >= 0).astype(int)


# -------------------------------------------------------------------- SVM


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    degree: int = 3
    gamma: float = 1.0
    coef0: float = 0.0

    def __post_init__(self):
        kind = _KERNEL_ALIASES.get(self.kind, self.kind)
        if kind not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind != "linear" and not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")


def kernel_matrix(spec: KernelSpec, U, V) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if spec.kind == "rbf":
        sq = (U * U).sum(1)[:, None] + (V * V).sum(1)[None, :] - 2.0 * U @ V.T
        return np.exp(-spec.gamma * np.maximum(sq, 0.0))
    dot = U @ V.T
    if spec.kind == "linear":
        return dot
    return (spec.gamma * dot + spec.coef0) ** spec.degree


def kernel_eval(spec: KernelSpec, u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if spec.kind == "linear":
        return float(u @ v)
    if spec.kind == "polynomial":
        return float((spec.gamma * (u @ v) + spec.coef0) ** spec.degree)
    diff = u - v
    return float(np.exp(-spec.gamma * (diff @ diff)))


def default_gamma(X) -> float:
    """1 / (n_features * mean per-feature variance); 1.0 for constant inputs."""
    X = np.asarray(X, dtype=float)
    var = X.var(axis=0).mean()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


@dataclass(eq=False)
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i with y in {-1, +1}
    bias: float
    kernel: KernelSpec
    C: float
    support: np.ndarray | None = None  # indices into the training set
    n_iter: int = 0
    kkt_gap: float = 0.0
    converged: bool = True

    def decision_function(self, X) -> np.ndarray:
        K = kernel_matrix(self.kernel, X, self.support_vectors)
        return K @ self.dual_coef + self.bias

    def to_dict(self):
        return {"kind": "svm", "kernel": asdict(self.kernel), "C": self.C,
                "support_vectors": self.support_vectors.tolist(),
                "dual_coef": self.dual_coef.tolist(), "bias": self.bias,
                "n_iter": self.n_iter, "kkt_gap": self.kkt_gap, "converged": self.converged}

    @classmethod
    def from_dict(cls, d) -> "SvmModel":
        return cls(np.asarray(d["support_vectors"], dtype=float), np.asarray(d["dual_coef"], dtype=float),
                   float(d["bias"]), KernelSpec(**d["kernel"]), float(d["C"]),
                   n_iter=d.get("n_iter", 0), kkt_gap=d.get("kkt_gap", 0.0),
                   converged=d.get("converged", True))


def _smo(K, y, C, tol, max_iter):
    """Solve min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0 with Q = yy' * K."""
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diagK = np.diag(K).copy()
    gap = np.inf
    it = 0
    while it < max_iter:
        yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        yg_up = np.where(up, yg, -np.inf)
        i = int(np.argmax(yg_up))
        m_up = yg_up[i]
        M_low = np.min(np.where(low, yg, np.inf))
        gap = m_up - M_low
        if gap < tol:
            break
        # second-order choice of j among violating low candidates
        b = m_up - yg
        cand = low & (b > 0)
        a = diagK[i] + diagK - 2.0 * K[i]
        a = np.where(a > 0, a, _TAU)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        it += 1

        Qij = y[i] * y[j] * K[i, j]
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = diagK[i] + diagK[j] + 2.0 * Qij
            delta = (-grad[i] - grad[j]) / max(quad, _TAU)
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = diagK[i] + diagK[j] - 2.0 * Qij
            delta = (grad[i] - grad[j]) / max(quad, _TAU)
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        grad += y * (K[:, i] * (y[i] * (ai - ai_old)) + K[:, j] * (y[j] * (aj - aj_old)))
    return alpha, grad, it, gap


def _intercept(alpha, grad, y, C):
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        rho = yg[free].mean()
    else:
        # no free vectors: midpoint of the feasible interval for rho
        at_upper = alpha >= C
        ub_mask = (at_upper & (y < 0)) | (~at_upper & (alpha <= 0) & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (~at_upper & (alpha <= 0) & (y < 0))
        ub = yg[ub_mask].min() if np.any(ub_mask) else np.inf
        lb = yg[lb_mask].max() if np.any(lb_mask) else -np.inf
        rho = 0.5 * (ub + lb) if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return -float(rho)


def svm_train(X, y, spec: KernelSpec = KernelSpec(), C=1.0, tolerance=1e-3, max_passes=200,
              seed=0) -> SvmModel:
    """Train a soft-margin kernel SVM by SMO.

    Iteration stops when the maximal KKT violation falls below ``tolerance``
    or after ``max_passes * n_samples`` pair updates; in the latter case the
    last iterate is returned with ``converged=False`` and a warning.  The
    working-set rule is deterministic, so ``seed`` does not change the result.
    """
    X = np.asarray(X, dtype=float)
    y01 = _check_binary(y)
    if len(X) != len(y01):
        raise LengthMismatchError(f"{len(X)} inputs vs {len(y01)} labels")
    if not C > 0:
        raise ValueError("C must be > 0")
    if len(np.unique(y01)) < 2:
        raise SingleClassError("SVM training needs both classes")
    ypm = np.where(y01 == 1, 1.0, -1.0)
    K = kernel_matrix(spec, X, X)
    alpha, grad, n_iter, gap = _smo(K, ypm, float(C), tolerance, max_passes * len(X))
    converged = bool(gap < tolerance)
    if not converged:
        warnings.warn(f"SMO stopped after {n_iter} updates with KKT gap {gap:.3g}", ConvergenceWarning)
    bias = _intercept(alpha, grad, ypm, C)
    sv = np.flatnonzero(alpha > 0)
    if sv.size == 0:
        sv = np.array([int(np.argmax(alpha))])
    return SvmModel(X[sv].copy(), alpha[sv] * ypm[sv], bias, spec, float(C), sv, n_iter, float(gap), converged)


def svm_predict(model: SvmModel, X) -> np.ndarray:
    """0/1 labels from the sign of the decision function; exact zero maps to 1."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    labels = (model.decision_function(np.atleast_2d(X)) >= 0).astype(int)
    return labels[0] if single else labels


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    @property
    def accuracy(self) -> float:
        return (self.tn + self.tp) / self.total

    def as_array(self) -> np.ndarray:
        """Rows are the actual class, columns the predicted class."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]])


def _check_pair(predictions, labels):
    p = _check_binary(predictions)
    t = _check_binary(labels)
    if p.shape != t.shape:
        raise LengthMismatchError(f"{p.size} predictions vs {t.size} labels")
    if p.size == 0:
        raise EmptyInputError("nothing to score")
    return p, t


def confusion(predictions, labels) -> ConfusionMatrix:
    p, t = _check_pair(predictions, labels)
    return ConfusionMatrix(
        tn=int(np.sum((t == 0) & (p == 0))), fp=int(np.sum((t == 0) & (p == 1))),
        fn=int(np.sum((t == 1) & (p == 0))), tp=int(np.sum((t == 1) & (p == 1))),
    )


def accuracy(predictions, labels) -> float:
    p, t = _check_pair(predictions, labels)
    return float(np.mean(p == t))


def write_confusion_csv(rows, path) -> None:
    """``rows`` holds (model, label_task, ConfusionMatrix) triples."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("model", "label_task", "tn", "fp", "fn", "tp", "accuracy"))
        for model, task, cm in rows:
            w.writerow([model, task, cm.tn, cm.fp, cm.fn, cm.tp, format(cm.accuracy, ".17g")])


def save_classifier(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_classifier(path):
    with open(path) as fh:
        d = json.load(fh)
    if d.get("kind") == "svm":
        return SvmModel.from_dict(d)
    if d.get("kind") == "logistic":
        return LogisticModel(np.asarray(d["weights"], dtype=float), float(d["bias"]),
                             d.get("n_iter", 0), d.get("grad_norm", 0.0))
    raise ValueError(f"{path} holds no known classifier")


# ------------------------------------------------------------ estimators


class LogisticClassifier(ClassifierMixin, BaseEstimator):
    """Unregularized logistic regression fitted by full-batch gradient descent."""

    def __init__(self, learning_rate=0.5, max_iter=5000, tol=1e-6, random_state=0):
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.model_ = logistic_train(X, y, self.learning_rate, self.max_iter, self.tol, self.random_state)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        p, _ = logistic_predict(self.model_, check_array(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        check_is_fitted(self)
        return logistic_predict(self.model_, check_array(X))[1]


class KernelSVC(ClassifierMixin, BaseEstimator):
    """Soft-margin SVM trained by SMO.

    Parameters
    ----------
    kernel : {'linear', 'polynomial', 'poly', 'rbf'}
    C : float
        Box constraint on the dual variables.
    degree : int
        Polynomial degree.
    gamma : float or None
        Kernel scale; None uses ``1 / (n_features * mean feature variance)``
        of the training inputs.
    coef0 : float
        Polynomial offset.
    tol : float
        KKT violation at which SMO stops.
    max_passes : int
        Pair-update budget, in multiples of the training-set size.
    """

    def __init__(self, kernel="rbf", C=1.0, degree=3, gamma=None, coef0=0.0, tol=1e-3,
                 max_passes=200, random_state=0):
        self.kernel = kernel
        self.C = C
        self.degree = degree
        self.gamma = gamma
        self.coef0 = coef0
        self.tol = tol
        self.max_passes = max_passes
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        gamma = default_gamma(X) if self.gamma is None else self.gamma
        spec = KernelSpec(self.kernel, self.degree, gamma, self.coef0)
        self.gamma_ = gamma
        self.model_ = svm_train(X, y, spec, self.C, self.tol, self.max_passes, self.random_state)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        return self.model_.decision_function(check_array(X))

    def predict(self, X):
        check_is_fitted(self)
        return svm_predict(self.model_, check_array(X))
