"""Multilayer perceptron surrogate for the simulator's parameter-to-outcome map.

Everything here is plain numpy: forward pass, backpropagation of the
mean-squared error, Adam, early stopping and k-fold cross-validation.
Inputs and targets are min-max scaled with bounds fitted on training rows;
the output layer is linear.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataset import ScalerBounds, kfold_indices, minmax_apply, minmax_fit, minmax_invert
from .exceptions import NonFiniteError, ShapeMismatchError, SirdxError, TooFewRowsError, ZeroVarianceError

ACTIVATIONS = ("sigmoid", "tanh", "relu", "leaky_relu")
SWEEPS = {"layers": "n_hidden_layers", "activation": "activation"}
MODEL_FORMAT = "sirdx-mlp"


@dataclass(frozen=True)
class MlpConfig:
    n_hidden_layers: int = 2
    neurons_per_hidden: int = 32
    activation: str = "relu"
    leaky_slope: float = 0.01
    n_inputs: int = 5
    n_outputs: int = 2

    def __post_init__(self):
        if self.n_hidden_layers < 1 or self.neurons_per_hidden < 1:
            raise ValueError("need at least one hidden layer with at least one neuron")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.n_inputs] + [self.neurons_per_hidden] * self.n_hidden_layers + [self.n_outputs]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 1000
    patience: int = 50
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("patience, batch_size and max_epochs must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")


@dataclass(eq=False)
class MlpModel:
    """Network parameters plus the scaling bounds used when it was trained.

    ``weights[l]`` has shape (fan_in, fan_out).  When built by
    :func:`init_weights` or :func:`train` all weights and biases are views
    into the single vector ``flat``.
    """

    config: MlpConfig
    weights: list
    biases: list
    x_bounds: ScalerBounds | None = None
    y_bounds: ScalerBounds | None = None
    flat: np.ndarray | None = field(default=None, repr=False)

    def copy(self) -> "MlpModel":
        theta = self.flatten()
        return _from_flat(self.config, theta.copy(), self.x_bounds, self.y_bounds)

    def flatten(self) -> np.ndarray:
        if self.flat is not None:
            return self.flat
        return np.concatenate([p.ravel() for p in _interleave(self.weights, self.biases)])


def _interleave(weights, biases):
    for w, b in zip(weights, biases):
        yield w
        yield b


def _param_shapes(config: MlpConfig):
    sizes = config.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        yield (fan_in, fan_out)
        yield (fan_out,)


def _views(config: MlpConfig, theta: np.ndarray):
    weights, biases = [], []
    offset = 0
    for k, shape in enumerate(_param_shapes(config)):
        size = int(np.prod(shape))
        view = theta[offset:offset + size].reshape(shape)
        (weights if k % 2 == 0 else biases).append(view)
        offset += size
    if offset != theta.size:
        raise ShapeMismatchError(f"parameter vector has {theta.size} entries, expected {offset}")
    return weights, biases


def _from_flat(config, theta, x_bounds=None, y_bounds=None) -> MlpModel:
    weights, biases = _views(config, theta)
    return MlpModel(config, weights, biases, x_bounds, y_bounds, flat=theta)


def n_parameters(config: MlpConfig) -> int:
    return sum(int(np.prod(s)) for s in _param_shapes(config))


def init_weights(config: MlpConfig, seed=0) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(n_parameters(config))
    model = _from_flat(config, theta)
    for w in model.weights:
        limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return model


def _activate(z, name, slope):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky_relu":
        return np.where(z > 0, z, slope * z)
    if name == "tanh":
        return np.tanh(z)
    # sigmoid, written to avoid overflow in exp for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activation_grad(z, a, name, slope):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, slope)
    if name == "tanh":
        return 1.0 - a * a
    return a * (1.0 - a)


def _forward_cache(model: MlpModel, X):
    cfg = model.config
    pre, post = [], [X]
    a = X
    last = len(model.weights) - 1
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = z if layer == last else _activate(z, cfg.activation, cfg.leaky_slope)
        pre.append(z)
        post.append(a)
    return pre, post


def forward(model: MlpModel, inputs) -> np.ndarray:
    """Map scaled inputs of shape (n, 5) or (5,) to scaled outputs."""
    X = np.asarray(inputs, dtype=float)
    single = X.ndim == 1
    out = _forward_cache(model, np.atleast_2d(X))[1][-1]
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("network output is not finite")
    return out[0] if single else out


def loss_mse(predictions, targets) -> float:
    """Mean of the squared error over samples and output components."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ShapeMismatchError(f"predictions {p.shape} vs targets {t.shape}")
    return float(np.mean((p - t) ** 2))


def _backward_into(model: MlpModel, X, Y, grad_w, grad_b) -> float:
    pre, post = _forward_cache(model, X)
    out = post[-1]
    diff = out - Y
    delta = (2.0 / diff.size) * diff
    cfg = model.config
    for layer in range(len(model.weights) - 1, -1, -1):
        np.matmul(post[layer].T, delta, out=grad_w[layer])
        np.sum(delta, axis=0, out=grad_b[layer])
        if layer:
            back = delta @ model.weights[layer].T
            delta = back * _activation_grad(pre[layer - 1], post[layer], cfg.activation, cfg.leaky_slope)
    return float(np.mean(diff * diff))


def backward(model: MlpModel, inputs, targets):
    """Exact gradients of :func:`loss_mse` w.r.t. every weight and bias.

    Returns ``(grad_weights, grad_biases)`` with the model's parameter shapes.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    Y = np.atleast_2d(np.asarray(targets, dtype=float))
    if X.shape[0] != Y.shape[0] or X.shape[1] != model.config.n_inputs or Y.shape[1] != model.config.n_outputs:
        raise ShapeMismatchError(f"inputs {X.shape} and targets {Y.shape} do not fit {model.config.layer_sizes}")
    grads = np.zeros(n_parameters(model.config))
    gw, gb = _views(model.config, grads)
    _backward_into(model, X, Y, gw, gb)
    return gw, gb


@dataclass(eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def _adam_inplace(theta, g, state: AdamState, cfg: TrainConfig) -> None:
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.step += 1
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * (g * g)
    # bias corrections folded into the step size
    lr_t = cfg.learning_rate * np.sqrt(1.0 - b2 ** state.step) / (1.0 - b1 ** state.step)
    eps_t = cfg.adam_epsilon * np.sqrt(1.0 - b2 ** state.step)
    theta -= lr_t * state.m / (np.sqrt(state.v) + eps_t)


def adam_update(model: MlpModel, gradients, state: AdamState, cfg: TrainConfig):
    """Apply one bias-corrected Adam step; returns a new model and a new state."""
    gw, gb = gradients
    g = np.concatenate([p.ravel() for p in _interleave(gw, gb)])
    theta = model.flatten().copy()
    new_state = AdamState(state.m.copy(), state.v.copy(), state.step)
    _adam_inplace(theta, g, new_state, cfg)
    return _from_flat(model.config, theta, model.x_bounds, model.y_bounds), new_state


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def n_epochs(self) -> int:
        return len(self.train_loss)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("epoch", "train_loss", "val_loss", "test_loss"))
            for e in range(self.n_epochs):
                test = self.test_loss[e] if self.test_loss else None
                w.writerow([e + 1, format(self.train_loss[e], ".17g"), format(self.val_loss[e], ".17g"),
                            "" if test is None else format(test, ".17g")])


def train(X, Y, train_cfg: TrainConfig = TrainConfig(), mlp_cfg: MlpConfig = MlpConfig(),
          X_test=None, Y_test=None):
    """Fit an MLP with mini-batch Adam and early stopping.

    ``X`` and ``Y`` are unscaled training rows; scaling bounds are fitted on
    them and stored in the returned model.  A ``validation_fraction`` share of
    the rows is held out for early stopping.  If test rows are given their
    loss is logged each epoch but never used for decisions.

    Returns
    -------
    model : MlpModel
        Parameters from the epoch with the lowest validation loss (earliest on ties).
    history : TrainHistory
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
        raise ShapeMismatchError(f"X {X.shape} and Y {Y.shape} are not matching 2-d arrays")
    if len(X) < 20:
        raise TooFewRowsError(f"training needs at least 20 rows, got {len(X)}")
    mlp_cfg = replace(mlp_cfg, n_inputs=X.shape[1], n_outputs=Y.shape[1])

    split_seed, init_seed, shuffle_seed = np.random.SeedSequence(train_cfg.seed).spawn(3)
    x_bounds, y_bounds = minmax_fit(X), minmax_fit(Y)
    Xs, Ys = minmax_apply(x_bounds, X), minmax_apply(y_bounds, Y)
    perm = np.random.default_rng(split_seed).permutation(len(X))
    n_val = max(1, int(round(len(X) * train_cfg.validation_fraction)))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    X_tr, Y_tr, X_val, Y_val = Xs[tr_idx], Ys[tr_idx], Xs[val_idx], Ys[val_idx]
    has_test = X_test is not None and Y_test is not None
    if has_test:
        X_te = minmax_apply(x_bounds, np.asarray(X_test, dtype=float))
        Y_te = minmax_apply(y_bounds, np.asarray(Y_test, dtype=float))

    model = init_weights(mlp_cfg, init_seed)
    model.x_bounds, model.y_bounds = x_bounds, y_bounds
    theta = model.flat
    grads = np.zeros_like(theta)
    gw, gb = _views(mlp_cfg, grads)
    state = AdamState.zeros(theta.size)
    shuffle_rng = np.random.default_rng(shuffle_seed)

    history = TrainHistory()
    best_theta, best_val = theta.copy(), np.inf
    bs = train_cfg.batch_size
    for epoch in range(1, train_cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(X_tr))
        for start in range(0, len(order), bs):
            idx = order[start:start + bs]
            _backward_into(model, X_tr[idx], Y_tr[idx], gw, gb)
            _adam_inplace(theta, grads, state, train_cfg)
        tr_loss = loss_mse(_forward_cache(model, X_tr)[1][-1], Y_tr)
        val_loss = loss_mse(_forward_cache(model, X_val)[1][-1], Y_val)
        if not (np.isfinite(tr_loss) and np.isfinite(val_loss)):
            raise NonFiniteError(f"training diverged at epoch {epoch}; lower the learning rate")
        history.train_loss.append(tr_loss)
        history.val_loss.append(val_loss)
        if has_test:
            history.test_loss.append(loss_mse(_forward_cache(model, X_te)[1][-1], Y_te))
        if val_loss < best_val:
            best_val, history.best_epoch = val_loss, epoch
            best_theta[:] = theta
        elif epoch - history.best_epoch >= train_cfg.patience:
            history.stopped_early = True
            break

    return _from_flat(mlp_cfg, best_theta, x_bounds, y_bounds), history


def predict(model: MlpModel, X) -> np.ndarray:
    """Predict unscaled (d_final, i_max) for unscaled parameter rows."""
    if model.x_bounds is None or model.y_bounds is None:
        raise ValueError("model carries no scaling bounds; train it with `train`")
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    out = minmax_invert(model.y_bounds, forward(model, minmax_apply(model.x_bounds, np.atleast_2d(X))))
    return out[0] if single else out


def r2_score(predictions, targets) -> float:
    """Coefficient of determination per output column, averaged uniformly."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ShapeMismatchError(f"predictions {p.shape} vs targets {t.shape}")
    if p.ndim == 1:
        p, t = p[:, None], t[:, None]
    if len(t) < 2:
        raise TooFewRowsError("R^2 needs at least 2 samples")
    ss_tot = np.sum((t - t.mean(axis=0)) ** 2, axis=0)
    if np.any(ss_tot == 0):
        raise ZeroVarianceError("a target column is constant")
    ss_res = np.sum((t - p) ** 2, axis=0)
    return float(np.mean(1.0 - ss_res / ss_tot))


@dataclass
class CvReport:
    param: str
    value: object
    fold_r2: np.ndarray

    @property
    def k(self) -> int:
        return len(self.fold_r2)

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_r2))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_r2, ddof=1)) if self.k > 1 else 0.0


def cross_validate(X, Y, k: int = 10, sweep: str = "layers", values=(1, 2, 3, 4),
                   mlp_cfg: MlpConfig = MlpConfig(), train_cfg: TrainConfig = TrainConfig(),
                   seed: int = 0) -> list[CvReport]:
    """k-fold cross-validated R^2 for each value of one hyperparameter.

    ``sweep`` is ``'layers'`` or ``'activation'``.  Every value sees the same
    folds, and fold ``f`` always trains with the same seed.
    """
    if sweep not in SWEEPS:
        raise ValueError(f"sweep must be one of {sorted(SWEEPS)}")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    folds = kfold_indices(len(X), k, seed)
    fold_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]
    reports = []
    for value in values:
        cfg = replace(mlp_cfg, **{SWEEPS[sweep]: value})
        scores = np.empty(k)
        for f, held in enumerate(folds):
            mask = np.ones(len(X), dtype=bool)
            mask[held] = False
            try:
                model, _ = train(X[mask], Y[mask], replace(train_cfg, seed=fold_seeds[f]), cfg)
                scores[f] = r2_score(predict(model, X[held]), Y[held])
            except SirdxError as exc:
                raise type(exc)(f"fold {f} ({sweep}={value}): {exc}") from exc
        reports.append(CvReport(sweep, value, scores))
    return reports


def save_model(model: MlpModel, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": 1,
        "config": asdict(model.config),
        "x_bounds": model.x_bounds.to_dict() if model.x_bounds else None,
        "y_bounds": model.y_bounds.to_dict() if model.y_bounds else None,
        "layers": [{"weights": w.tolist(), "bias": b.tolist()} for w, b in zip(model.weights, model.biases)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> MlpModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path} is not a saved MLP model")
    cfg = MlpConfig(**doc["config"])
    theta = np.concatenate(
        [np.asarray(a, dtype=float).ravel() for layer in doc["layers"] for a in (layer["weights"], layer["bias"])]
    )
    xb = ScalerBounds.from_dict(doc["x_bounds"]) if doc["x_bounds"] else None
    yb = ScalerBounds.from_dict(doc["y_bounds"]) if doc["y_bounds"] else None
    return _from_flat(cfg, theta, xb, yb)


class MLPSurrogate(RegressorMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`train` and :func:`predict`.

    Parameters mirror :class:`MlpConfig` and :class:`TrainConfig`; the fitted
    network is stored as ``model_`` and its loss curves as ``history_``.
    """

    def __init__(self, n_hidden_layers=2, neurons_per_hidden=32, activation="relu",
                 leaky_slope=0.01, learning_rate=3e-3, batch_size=32, max_epochs=1000,
                 patience=50, validation_fraction=0.1, random_state=0):
        self.n_hidden_layers = n_hidden_layers
        self.neurons_per_hidden = neurons_per_hidden
        self.activation = activation
        self.leaky_slope = leaky_slope
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _configs(self):
        mlp = MlpConfig(self.n_hidden_layers, self.neurons_per_hidden, self.activation, self.leaky_slope)
        tr = TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                         max_epochs=self.max_epochs, patience=self.patience,
                         validation_fraction=self.validation_fraction,
                         seed=0 if self.random_state is None else self.random_state)
        return mlp, tr

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._y_was_1d = y.ndim == 1
        Y = y.reshape(len(y), -1)
        mlp, tr = self._configs()
        self.model_, self.history_ = train(X, Y, tr, mlp)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        out = predict(self.model_, check_array(X, dtype=np.float64))
        return out[:, 0] if self._y_was_1d else out

    @classmethod
    def from_model(cls, model: MlpModel) -> "MLPSurrogate":
        """Wrap an already trained (e.g. loaded) model."""
        c = model.config
        est = cls(c.n_hidden_layers, c.neurons_per_hidden, c.activation, c.leaky_slope)
        est.model_ = model
        est.history_ = None
        est.n_features_in_ = c.n_inputs
        est._y_was_1d = False
        return est
