import warnings

import numpy as np
import pytest
from sklearn.exceptions import ConvergenceWarning

from sirdx.classifiers import (
    ConfusionMatrix, KernelSpec, KernelSVC, LogisticClassifier, LogisticModel, SvmModel, accuracy,
    confusion, default_gamma, kernel_eval, kernel_matrix, load_classifier, logistic_predict,
    logistic_train, save_classifier, svm_predict, svm_train, write_confusion_csv,
)
from sirdx.dataset import minmax_apply, minmax_fit
from sirdx.exceptions import EmptyInputError, LengthMismatchError, SingleClassError

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([0, 0, 1, 1])


def dual_objective(model, X, y01):
    y = np.where(y01 == 1, 1.0, -1.0)
    alpha = np.zeros(len(X))
    alpha[model.support] = model.dual_coef * y[model.support]
    Q = np.outer(y, y) * kernel_matrix(model.kernel, X, X)
    return 0.5 * alpha @ Q @ alpha - alpha.sum()


@pytest.fixture(scope="module")
def scaled_split(default_split):
    tr, te = default_split
    b = minmax_fit(tr.X)
    return minmax_apply(b, tr.X), tr.labels, minmax_apply(b, te.X), te.labels


# ---------------------------------------------------------------- logistic


def test_logistic_one_dimensional_boundary():
    X = np.tile([[0.0], [1.0]], (50, 1))
    y = np.tile([0, 1], 50)
    m = logistic_train(X, y)
    boundary = -m.bias / m.weights[0]
    assert abs(boundary - 0.5) < 0.05
    assert np.all(logistic_predict(m, X)[1] == y)
    grid = np.linspace(0, 1, 1001)[:, None]
    flips = grid[np.flatnonzero(np.diff(logistic_predict(m, grid)[1]))]
    assert len(flips) == 1 and abs(flips[0, 0] - boundary) <= 1e-3


@pytest.mark.parametrize("label", [0, 1])
def test_logistic_single_class_predicts_it(label):
    X = np.random.default_rng(0).random((30, 5))
    m = logistic_train(X, np.full(30, label))
    assert np.all(logistic_predict(m, X)[1] == label)


def test_logistic_deterministic(scaled_split):
    X, L, _, _ = scaled_split
    a, b = logistic_train(X, L[:, 0], seed=1), logistic_train(X, L[:, 0], seed=2)
    assert a.weights.tobytes() == b.weights.tobytes() and a.bias == b.bias


def test_logistic_loss_non_increasing(scaled_split):
    X, L, _, _ = scaled_split
    for t in (0, 1):
        losses = logistic_train(X, L[:, t]).loss_history
        assert np.all(np.diff(losses) <= 1e-12)


def test_logistic_predict_rules():
    zero = LogisticModel(np.zeros(5), 0.0, 0, 0.0, np.empty(0))
    prob, lab = logistic_predict(zero, np.ones((1, 5)))
    assert prob[0] == 0.5 and lab[0] == 1
    big = LogisticModel(np.full(5, 100.0), 0.0, 0, 0.0, np.empty(0))
    assert logistic_predict(big, np.ones((1, 5)))[0][0] == pytest.approx(1.0)
    m = LogisticModel(np.array([2.0, 0, 0, 0, 0]), -1.0, 0, 0.0, np.empty(0))
    probs = logistic_predict(m, np.column_stack([np.linspace(-2, 2, 9), np.zeros((9, 4))]))[0]
    assert np.all(np.diff(probs) > 0)


# ---------------------------------------------------------------- kernels


def test_kernel_examples():
    u = np.random.default_rng(0).random(5)
    assert kernel_eval(KernelSpec("rbf", gamma=3.0), u, u) == 1.0
    e1, e2 = np.eye(5)[0], np.eye(5)[1]
    assert kernel_eval(KernelSpec("linear"), e1, e2) == 0.0
    poly = KernelSpec("polynomial", degree=3, gamma=1.0, coef0=0.0)
    assert kernel_eval(poly, [1.0, 1.0, 0, 0, 0], [1.0, 1.0, 0, 0, 0]) == 8.0


@pytest.mark.parametrize("kind", ["linear", "polynomial", "rbf"])
def test_kernel_matrix_matches_pointwise(kind, rng):
    spec = KernelSpec(kind, degree=2, gamma=0.7, coef0=0.3)
    U, V = rng.random((4, 5)), rng.random((3, 5))
    K = kernel_matrix(spec, U, V)
    for a in range(4):
        for b in range(3):
            assert K[a, b] == pytest.approx(kernel_eval(spec, U[a], V[b]), rel=1e-12)


def test_kernel_spec_validation():
    assert KernelSpec("poly").kind == "polynomial"
    with pytest.raises(ValueError):
        KernelSpec("sigmoid")
    with pytest.raises(ValueError):
        KernelSpec("rbf", gamma=0.0)


def test_default_gamma():
    X = np.random.default_rng(0).random((100, 5))
    assert default_gamma(X) == pytest.approx(1 / (5 * X.var(axis=0).mean()))


# ---------------------------------------------------------------- SVM


def test_two_point_linear_svm():
    X = np.array([[0.0, 0, 0, 0, 0], [1.0, 0, 0, 0, 0]])
    m = svm_train(X, [0, 1], KernelSpec("linear"), C=10.0)
    np.testing.assert_array_equal(svm_predict(m, X), [0, 1])
    mid = svm_predict(m, np.array([[0.4, 0, 0, 0, 0], [0.6, 0, 0, 0, 0]]))
    np.testing.assert_array_equal(mid, [0, 1])
    assert m.decision_function(np.array([[0.5, 0, 0, 0, 0]]))[0] == pytest.approx(0.0, abs=1e-9)


def test_xor_rbf_separates():
    m = svm_train(XOR_X, XOR_Y, KernelSpec("rbf", gamma=1.0), C=10.0)
    assert accuracy(svm_predict(m, XOR_X), XOR_Y) == 1.0


def test_xor_linear_fails():
    m = svm_train(XOR_X, XOR_Y, KernelSpec("linear"), C=10.0)
    assert accuracy(svm_predict(m, XOR_X), XOR_Y) <= 0.75


def test_svm_single_class():
    with pytest.raises(SingleClassError):
        svm_train(XOR_X, [1, 1, 1, 1])


@pytest.mark.parametrize("kind", ["linear", "polynomial", "rbf"])
def test_smo_box_and_equality_constraints(kind, scaled_split):
    X, L, _, _ = scaled_split
    spec = KernelSpec(kind, gamma=default_gamma(X))
    for t in (0, 1):
        y = np.where(L[:, t] == 1, 1.0, -1.0)
        m = svm_train(X, L[:, t], spec, C=1.0)
        assert m.converged
        ya = y[m.support] * m.dual_coef
        assert np.all(ya >= 0) and np.all(ya <= 1.0)
        assert abs(m.dual_coef.sum()) <= 1e-8


@pytest.mark.parametrize("kind", ["linear", "rbf"])
def test_smo_matches_libsvm_objective(kind, scaled_split):
    # independent oracle: scikit-learn's LIBSVM solver on the same problem
    from sklearn.svm import SVC

    X, L, Xte, _ = scaled_split
    X, y = X[:300], L[:300, 1]
    g = default_gamma(X)
    ours = svm_train(X, y, KernelSpec(kind, gamma=g), C=1.0, tolerance=1e-6)
    ref = SVC(kernel=kind, C=1.0, gamma=g, tol=1e-6).fit(X, y)
    ref_model = SvmModel(X[ref.support_], ref.dual_coef_[0], float(ref.intercept_[0]),
                         KernelSpec(kind, gamma=g), 1.0, ref.support_)
    assert dual_objective(ours, X, y) == pytest.approx(dual_objective(ref_model, X, y), rel=1e-5)
    np.testing.assert_allclose(ours.decision_function(Xte), ref.decision_function(Xte), atol=1e-3)


def test_svm_support_vectors_classified_in_hard_margin_case():
    rng = np.random.default_rng(4)
    X = np.vstack([rng.random((20, 5)) * 0.4, 0.6 + rng.random((20, 5)) * 0.4])
    y = np.r_[np.zeros(20, int), np.ones(20, int)]
    m = svm_train(X, y, KernelSpec("linear"), C=1e4)
    np.testing.assert_array_equal(svm_predict(m, m.support_vectors), y[m.support])


def test_svm_prediction_invariant_under_support_vector_split():
    m = svm_train(XOR_X, XOR_Y, KernelSpec("rbf", gamma=1.0), C=10.0)
    split = SvmModel(np.vstack([m.support_vectors, m.support_vectors[:1]]),
                     np.r_[m.dual_coef[0] / 2, m.dual_coef[1:], m.dual_coef[0] / 2],
                     m.bias, m.kernel, m.C)
    grid = np.random.default_rng(0).random((50, 2))
    np.testing.assert_allclose(split.decision_function(grid), m.decision_function(grid), atol=1e-12)
    np.testing.assert_array_equal(svm_predict(split, grid), svm_predict(m, grid))


def test_svm_zero_decision_predicts_one():
    m = SvmModel(np.zeros((1, 2)), np.array([0.0]), 0.0, KernelSpec("linear"), 1.0)
    assert svm_predict(m, np.array([3.0, 4.0])) == 1


def test_svm_nonconvergence_warns():
    X = np.random.default_rng(0).random((60, 5))
    y = (X[:, 0] > 0.5).astype(int)
    with pytest.warns(ConvergenceWarning):
        m = svm_train(X, y, KernelSpec("rbf"), C=100.0, tolerance=1e-12, max_passes=1)
    assert not m.converged


def test_svm_deterministic(scaled_split):
    X, L, _, _ = scaled_split
    a = svm_train(X, L[:, 0], KernelSpec("rbf", gamma=2.0), seed=0)
    b = svm_train(X, L[:, 0], KernelSpec("rbf", gamma=2.0), seed=9)
    assert a.dual_coef.tobytes() == b.dual_coef.tobytes() and a.bias == b.bias


# ---------------------------------------------------------------- metrics


def test_confusion_examples():
    labels = np.array([0, 1, 1, 0, 1])
    cm = confusion(labels, labels)
    assert cm.accuracy == 1.0 and cm.fp == cm.fn == 0
    pred = np.array([0, 0, 1, 1, 1])
    assert accuracy(1 - pred, labels) == pytest.approx(1 - accuracy(pred, labels))
    cm = confusion(pred, labels)
    assert (cm.tn, cm.fp, cm.fn, cm.tp) == (1, 1, 1, 2)
    np.testing.assert_array_equal(cm.as_array(), [[1, 1], [1, 2]])


def test_confusion_errors():
    with pytest.raises(LengthMismatchError):
        confusion([0, 1], [0])
    with pytest.raises(EmptyInputError):
        accuracy([], [])


def test_confusion_csv(tmp_path):
    write_confusion_csv([("logistic", "mortality", ConfusionMatrix(1, 2, 3, 4))], tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines == ["model,label_task,tn,fp,fn,tp,accuracy", "logistic,mortality,1,2,3,4,0.5"]


def test_classifier_json_round_trip(tmp_path, scaled_split):
    X, L, Xte, _ = scaled_split
    svm = svm_train(X[:200], L[:200, 1], KernelSpec("polynomial", gamma=1.5))
    save_classifier(svm, tmp_path / "s.json")
    np.testing.assert_array_equal(svm_predict(load_classifier(tmp_path / "s.json"), Xte), svm_predict(svm, Xte))
    lr = logistic_train(X, L[:, 1])
    save_classifier(lr, tmp_path / "l.json")
    np.testing.assert_array_equal(logistic_predict(load_classifier(tmp_path / "l.json"), Xte)[1],
                                  logistic_predict(lr, Xte)[1])


def test_estimators(scaled_split):
    from sklearn.base import clone

    X, L, Xte, Lte = scaled_split
    for est in (LogisticClassifier(), KernelSVC(kernel="poly")):
        assert clone(est).get_params() == est.get_params()
        est.fit(X, L[:, 1])
        assert est.score(Xte, Lte[:, 1]) > 0.9
    assert KernelSVC(kernel="rbf").fit(X, L[:, 1]).gamma_ == pytest.approx(default_gamma(X))


def test_four_classifiers_agree_within_two_points(scaled_split):
    X, L, Xte, Lte = scaled_split
    g = default_gamma(X)
    for t in (0, 1):
        accs = [accuracy(logistic_predict(logistic_train(X, L[:, t]), Xte)[1], Lte[:, t])]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            for kind in ("linear", "polynomial", "rbf"):
                accs.append(accuracy(svm_predict(svm_train(X, L[:, t], KernelSpec(kind, gamma=g)), Xte), Lte[:, t]))
        assert max(accs) - min(accs) <= 0.02, f"task {t}: {accs}"
