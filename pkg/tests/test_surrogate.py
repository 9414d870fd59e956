import numpy as np
import pytest

from sirdx.dataset import minmax_apply, minmax_invert
from sirdx.exceptions import ShapeMismatchError, TooFewRowsError, ZeroVarianceError
from sirdx.surrogate import (
    ACTIVATIONS, AdamState, MLPSurrogate, MlpConfig, TrainConfig, _from_flat, adam_update, backward,
    cross_validate, forward, init_weights, load_model, loss_mse, n_parameters, predict, r2_score,
    save_model, train,
)


def oracle_forward(weights, biases, X, activation, slope=0.01):
    # deliberately plain: explicit loops over layers and units
    acts = {
        "relu": lambda z: max(z, 0.0),
        "leaky_relu": lambda z: z if z > 0 else slope * z,
        "tanh": np.tanh,
        "sigmoid": lambda z: 1.0 / (1.0 + np.exp(-z)),
    }
    f = acts[activation]
    out = []
    for x in X:
        a = list(x)
        for layer, (w, b) in enumerate(zip(weights, biases)):
            z = [sum(a[i] * w[i][j] for i in range(len(a))) + b[j] for j in range(len(b))]
            a = z if layer == len(weights) - 1 else [f(v) for v in z]
        out.append(a)
    return np.array(out)


def numerical_grad(model, X, Y, h=1e-6):
    theta = model.flatten()
    g = np.empty_like(theta)
    for k in range(theta.size):
        plus, minus = theta.copy(), theta.copy()
        plus[k] += h
        minus[k] -= h
        pp = forward(_from_flat(model.config, plus), X)
        pm = forward(_from_flat(model.config, minus), X)
        # central difference of the MSE, expanded so the two losses never cancel
        g[k] = np.mean((pp - pm) * (pp + pm - 2 * Y)) / (2 * h)
    return g


def flat_grads(gw, gb):
    return np.concatenate([a.ravel() for pair in zip(gw, gb) for a in pair])


@pytest.fixture
def small_data(rng):
    X = rng.random((12, 5))
    Y = rng.random((12, 2))
    return X, Y


# ---------------------------------------------------------------- init and forward


def test_init_shapes_and_zero_biases():
    m = init_weights(MlpConfig(2, 32), seed=0)
    assert [w.shape for w in m.weights] == [(5, 32), (32, 32), (32, 2)]
    assert [b.shape for b in m.biases] == [(32,), (32,), (2,)]
    assert all(np.all(b == 0) for b in m.biases)
    for w in m.weights:
        assert np.abs(w).max() <= np.sqrt(6 / sum(w.shape))


def test_init_deterministic():
    a, b = init_weights(MlpConfig(), 7), init_weights(MlpConfig(), 7)
    assert a.flatten().tobytes() == b.flatten().tobytes()


def test_zero_weights_output_is_last_bias():
    m = init_weights(MlpConfig(2, 4), 0)
    theta = np.zeros(n_parameters(m.config))
    theta[-2:] = [0.3, -0.7]
    m = _from_flat(m.config, theta)
    np.testing.assert_array_equal(forward(m, np.random.default_rng(0).random((3, 5))), [[0.3, -0.7]] * 3)


def test_relu_dead_zone():
    m = init_weights(MlpConfig(1, 4), 0)
    m.weights[0][...] = -1.0
    m.biases[0][...] = -0.1
    X = np.random.default_rng(1).random((5, 5))
    out = forward(m, X)
    np.testing.assert_array_equal(out, np.tile(out[0], (5, 1)))


@pytest.mark.parametrize("activation", ACTIVATIONS)
def test_forward_matches_oracle(activation, rng):
    m = init_weights(MlpConfig(3, 6, activation), 3)
    for b in m.biases:
        b[...] = rng.normal(size=b.shape) * 0.1
    X = rng.random((10, 5))
    np.testing.assert_allclose(forward(m, X), oracle_forward(m.weights, m.biases, X, activation), rtol=1e-12, atol=1e-15)


# ---------------------------------------------------------------- loss and gradients


def test_loss_examples():
    assert loss_mse(np.ones((3, 2)), np.ones((3, 2))) == 0.0
    assert loss_mse([[0.1, 0.3]], [[0.0, 0.0]]) == pytest.approx(0.05)
    p, t = np.random.default_rng(0).random((2, 8, 2))
    perm = np.random.default_rng(1).permutation(8)
    assert loss_mse(p[perm], t[perm]) == pytest.approx(loss_mse(p, t), rel=1e-15)
    with pytest.raises(ShapeMismatchError):
        loss_mse(np.ones((2, 2)), np.ones((2, 3)))


def test_zero_error_gives_zero_gradient(small_data):
    X, _ = small_data
    m = init_weights(MlpConfig(2, 5), 0)
    gw, gb = backward(m, X, forward(m, X))
    assert np.all(flat_grads(gw, gb) == 0)


@pytest.mark.parametrize("activation", ACTIVATIONS)
def test_gradients_match_finite_differences(activation, small_data, rng):
    X, Y = small_data
    m = init_weights(MlpConfig(2, 8, activation), 11)
    for b in m.biases:
        b[...] = rng.normal(size=b.shape) * 0.1
    analytic = flat_grads(*backward(m, X, Y))
    numeric = numerical_grad(m, X, Y)
    big = np.abs(analytic) > 1e-8
    rel = np.abs(analytic[big] - numeric[big]) / np.abs(analytic[big])
    assert rel.max() <= 1e-4
    assert np.abs(analytic[~big] - numeric[~big]).max(initial=0) <= 1e-8


def test_duplicated_batch_same_gradient(small_data):
    X, Y = small_data
    m = init_weights(MlpConfig(2, 5, "tanh"), 2)
    a = flat_grads(*backward(m, X, Y))
    b = flat_grads(*backward(m, np.vstack([X, X]), np.vstack([Y, Y])))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-16)


def test_backward_shape_mismatch(small_data):
    X, Y = small_data
    with pytest.raises(ShapeMismatchError):
        backward(init_weights(MlpConfig(), 0), X, Y[:5])


# ---------------------------------------------------------------- Adam


def test_adam_zero_gradient_keeps_parameters():
    m = init_weights(MlpConfig(1, 3), 0)
    n = n_parameters(m.config)
    zeros = backward(m, np.zeros((1, 5)), forward(m, np.zeros((1, 5))))
    new, st = adam_update(m, zeros, AdamState.zeros(n), TrainConfig())
    np.testing.assert_array_equal(new.flatten(), m.flatten())
    _, st = adam_update(m, zeros, AdamState(np.full(n, 0.5), np.full(n, 0.25), 3), TrainConfig())
    assert np.all(st.m < 0.5) and np.all(st.v < 0.25)


def test_adam_first_step_hand_value():
    cfg = TrainConfig(learning_rate=0.01)
    m = init_weights(MlpConfig(1, 1), 0)
    n = n_parameters(m.config)
    g = np.linspace(-2, 2, n)
    gw, gb = [], []
    k = 0
    for w, b in zip(m.weights, m.biases):
        gw.append(g[k:k + w.size].reshape(w.shape)); k += w.size
        gb.append(g[k:k + b.size]); k += b.size
    new, st = adam_update(m, (gw, gb), AdamState.zeros(n), cfg)
    # bias-corrected first step: m_hat = g, v_hat = g^2
    expected = m.flatten() - 0.01 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(new.flatten(), expected, rtol=1e-12, atol=1e-15)
    assert st.step == 1


def test_adam_is_stateful():
    cfg = TrainConfig()
    m = init_weights(MlpConfig(1, 2), 0)
    X, Y = np.ones((2, 5)), np.zeros((2, 2))
    grads = backward(m, X, Y)
    n = n_parameters(m.config)
    once, s1 = adam_update(m, grads, AdamState.zeros(n), cfg)
    twice, s2 = adam_update(once, grads, s1, cfg)
    assert s2.step == 2
    assert not np.allclose(twice.flatten(), once.flatten())
    doubled = tuple([2 * a for a in part] for part in grads)
    single_big, _ = adam_update(m, doubled, AdamState.zeros(n), cfg)
    assert not np.allclose(twice.flatten(), single_big.flatten())


# ---------------------------------------------------------------- training


@pytest.fixture(scope="module")
def trained(default_split):
    tr, te = default_split
    model, hist = train(tr.X, tr.Y, TrainConfig(seed=2), MlpConfig(), te.X, te.Y)
    return model, hist, tr, te


def test_training_reaches_small_validation_loss(trained):
    _, hist, _, _ = trained
    assert hist.best_val_loss <= 1e-4


def test_returned_model_is_best_epoch(trained):
    model, hist, tr, _ = trained
    assert hist.best_val_loss == min(hist.val_loss)
    assert hist.val_loss.index(min(hist.val_loss)) + 1 == hist.best_epoch
    assert hist.stopped_early == (hist.n_epochs < 1000)
    assert hist.n_epochs - hist.best_epoch <= 50


def test_predict_scaling_round_trip(trained):
    model, _, tr, _ = trained
    direct = predict(model, tr.X[:10])
    manual = minmax_invert(model.y_bounds, forward(model, minmax_apply(model.x_bounds, tr.X[:10])))
    np.testing.assert_array_equal(direct, manual)
    np.testing.assert_array_equal(predict(model, tr.X[:10]), direct)


def test_training_fit_and_scale_sanity(trained):
    model, _, tr, te = trained
    p = predict(model, tr.X)
    assert np.all(np.isfinite(p))
    assert np.all((p > -1000) & (p < 11000))
    assert r2_score(p, tr.Y) >= 0.99
    assert r2_score(predict(model, te.X), te.Y) >= 0.99


def test_training_deterministic(default_split):
    tr, _ = default_split
    cfg = TrainConfig(seed=5, max_epochs=15)
    a = train(tr.X[:200], tr.Y[:200], cfg, MlpConfig(1, 8))
    b = train(tr.X[:200], tr.Y[:200], cfg, MlpConfig(1, 8))
    assert a[0].flatten().tobytes() == b[0].flatten().tobytes()
    assert a[1].val_loss == b[1].val_loss


def test_constant_targets_stop_early():
    X = np.random.default_rng(0).random((400, 5))
    Y = np.full((400, 2), 7.0)
    model, hist = train(X, Y, TrainConfig(patience=1, max_epochs=500), MlpConfig(1, 4))
    assert hist.stopped_early and hist.n_epochs < 100
    assert hist.best_val_loss < 5e-3
    np.testing.assert_allclose(predict(model, X), 7.0, atol=0)


def test_train_too_few_rows():
    with pytest.raises(TooFewRowsError):
        train(np.ones((19, 5)), np.ones((19, 2)))


def test_history_csv(tmp_path, trained):
    _, hist, _, _ = trained
    hist.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,test_loss"
    assert len(lines) == hist.n_epochs + 1


def test_model_json_round_trip(tmp_path, trained):
    model, _, _, te = trained
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    np.testing.assert_allclose(predict(back, te.X), predict(model, te.X), rtol=1e-12)
    save_model(back, tmp_path / "m2.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


# ---------------------------------------------------------------- R^2 and CV


def test_r2_examples():
    t = np.random.default_rng(0).random((20, 2))
    assert r2_score(t, t) == 1.0
    assert r2_score(np.tile(t.mean(axis=0), (20, 1)), t) == pytest.approx(0.0, abs=1e-15)
    assert r2_score(t[::-1] * 3, t) < 0
    with pytest.raises(ZeroVarianceError):
        r2_score(t, np.ones((20, 2)))
    with pytest.raises(TooFewRowsError):
        r2_score(t[:1], t[:1])


def test_cv_small_partition():
    X = np.random.default_rng(0).random((40, 5))
    Y = np.column_stack([X.sum(axis=1), X[:, 0]])
    reps = cross_validate(X, Y, k=2, sweep="layers", values=[1],
                          train_cfg=TrainConfig(max_epochs=5), mlp_cfg=MlpConfig(1, 4))
    assert len(reps) == 1 and reps[0].k == 2
    assert reps[0].mean == pytest.approx(np.mean(reps[0].fold_r2))
    assert reps[0].std == pytest.approx(np.std(reps[0].fold_r2, ddof=1))


def test_cv_fold_errors_name_the_fold():
    X = np.random.default_rng(0).random((30, 5))
    Y = np.random.default_rng(1).random((30, 2))
    with pytest.raises(TooFewRowsError, match="fold 0"):
        cross_validate(X, Y, k=2, values=[1], train_cfg=TrainConfig(max_epochs=2))


def test_estimator_wrapper(default_split):
    from sklearn.base import clone

    tr, te = default_split
    est = MLPSurrogate(n_hidden_layers=1, neurons_per_hidden=8, max_epochs=30)
    assert clone(est).get_params() == est.get_params()
    est.fit(tr.X, tr.Y)
    assert est.predict(te.X).shape == (200, 2)
    assert est.fit(tr.X, tr.Y[:, 0]).predict(te.X).shape == (200,)
    assert np.isfinite(est.score(te.X, te.Y[:, 0]))
