import math

import numpy as np
import pytest

from oracles import dual_grid_oracle
from ser.svm import (
    SvmBinary,
    SvmError,
    SvmMulti,
    kkt_violation,
    load_svm,
    ovo_predict,
    ovo_train,
    rbf_kernel,
    rbf_matrix,
    save_svm,
    smo_train_binary,
)


def test_rbf_examples():
    assert rbf_kernel([1.0, 2.0], [1.0, 2.0], 0.7) == 1.0
    assert rbf_kernel([0.0], [1.0], 1.0) == pytest.approx(math.exp(-1))
    m = rbf_matrix([[0.0], [1.0]], [[0.0], [2.0]], 0.5)
    np.testing.assert_allclose(m, [[1, math.exp(-2)], [math.exp(-0.5), math.exp(-0.5)]])
    with pytest.raises(SvmError):
        rbf_kernel([0.0], [0.0, 1.0], 1.0)


def test_two_point_problem_has_analytic_solution():
    # symmetric pair: alpha = 1 / (1 - k), bias 0, margin points exactly on +/-1
    X = np.array([[0.0], [1.0]])
    y = np.array([1.0, -1.0])
    model, alpha = smo_train_binary(X, y, C=10.0, gamma=1.0, return_alpha=True)
    k = math.exp(-1)
    np.testing.assert_allclose(alpha, [1 / (1 - k)] * 2, rtol=1e-6)
    assert model.bias == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(model.decision_function(X), [1.0, -1.0], atol=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_smo_matches_dual_grid_oracle(seed):
    g = np.random.default_rng(seed)
    n = 3 + seed % 2
    X = g.normal(size=(n, 2))
    y = np.array([1.0, -1.0] + [float(v) for v in g.choice([-1, 1], n - 2)])
    C, gamma = 1.0, 0.5
    model = smo_train_binary(X, y, C=C, gamma=gamma, tol=1e-4, seed=seed)
    oracle = dual_grid_oracle(X, y, C, gamma, steps=200 if n == 3 else 60)
    Z = g.normal(size=(300, 2)) * 2
    ref = oracle(Z)
    clear = np.abs(ref) > 0.1
    assert clear.sum() > 100
    np.testing.assert_array_equal(model.predict(Z)[clear], np.where(ref[clear] >= 0, 1, -1))


def test_xor_is_fit_exactly():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    y = np.array([1, 1, -1, -1], dtype=float)
    model = smo_train_binary(X, y, C=10.0, gamma=2.0)
    np.testing.assert_array_equal(model.predict(X), y)


def test_kkt_holds_after_training():
    g = np.random.default_rng(0)
    X = np.vstack([g.normal(-1, 1, (100, 2)), g.normal(1, 1, (100, 2))])
    y = np.repeat([1.0, -1.0], 100)
    model, alpha = smo_train_binary(X, y, C=1.0, gamma=0.5, tol=1e-3, return_alpha=True)
    f = model.decision_function(X)
    assert not kkt_violation(alpha, y, f, 1.0, 1e-3 + 1e-9).any()
    assert abs(np.dot(alpha, y)) < 1e-9
    assert alpha.min() >= 0 and alpha.max() <= 1.0


def test_duplicated_points_leave_predictions_unchanged():
    g = np.random.default_rng(4)
    X = np.vstack([g.normal(-1.5, 0.7, (15, 2)), g.normal(1.5, 0.7, (15, 2))])
    y = np.repeat([1.0, -1.0], 15)
    Z = g.normal(size=(200, 2)) * 2
    a = smo_train_binary(X, y, C=1.0, gamma=0.5)
    b = smo_train_binary(np.vstack([X, X]), np.concatenate([y, y]), C=1.0, gamma=0.5)
    fa = a.decision_function(Z)
    clear = np.abs(fa) > 0.1
    np.testing.assert_array_equal(a.predict(Z)[clear], b.predict(Z)[clear])


def test_training_order_does_not_change_predictions():
    g = np.random.default_rng(5)
    X = np.vstack([g.normal(-1, 1, (30, 2)), g.normal(1, 1, (30, 2))])
    y = np.repeat([1.0, -1.0], 30)
    perm = g.permutation(60)
    Z = g.normal(size=(200, 2)) * 2
    a = smo_train_binary(X, y, gamma=0.5, tol=1e-4)
    b = smo_train_binary(X[perm], y[perm], gamma=0.5, tol=1e-4)
    fa = a.decision_function(Z)
    clear = np.abs(fa) > 0.05
    np.testing.assert_array_equal(a.predict(Z)[clear], b.predict(Z)[clear])


def test_binary_input_validation():
    with pytest.raises(SvmError):
        smo_train_binary(np.zeros((3, 2)), np.ones(3))
    with pytest.raises(SvmError):
        smo_train_binary(np.array([[np.nan], [0.0]]), np.array([1.0, -1.0]))


def _clusters(n_classes=4, per=20, seed=0):
    g = np.random.default_rng(seed)
    centers = g.normal(size=(n_classes, 5)) * 6
    X = np.vstack([c + g.normal(size=(per, 5)) for c in centers])
    return X, np.repeat(np.arange(n_classes), per)


def test_one_vs_one_clusters():
    X, y = _clusters()
    m = ovo_train(X, y)
    assert len(m.models) == 6
    assert np.mean(m.predict(X) == y) == 1.0
    assert ovo_predict(m, X[25]) == 1
    assert m.gamma == pytest.approx(1 / 5)  # standardized data has unit variance


def test_eight_classes_give_twenty_eight_models():
    X, y = _clusters(8, 6, seed=1)
    assert len(ovo_train(X, y).models) == 28


def test_vote_ties_go_to_lowest_code():
    def const(sign):
        return SvmBinary(np.zeros((0, 1)), np.zeros(0), sign, 1.0, 1.0)

    # 0 beats 1, 2 beats 0, 1 beats 2: one vote each
    models = {(0, 1): const(1.0), (0, 2): const(-1.0), (1, 2): const(1.0)}
    m = SvmMulti([0, 1, 2], models, np.zeros(1), np.ones(1), 1.0, 1.0)
    np.testing.assert_array_equal(m.votes([[0.0]]), [[1, 1, 1]])
    assert ovo_predict(m, [0.0]) == 0


def test_missing_class_is_an_error():
    X, y = _clusters(3, 5)
    with pytest.raises(SvmError):
        ovo_train(X, y, classes=[0, 1, 2, 3])
    with pytest.raises(SvmError):
        ovo_train(X[y == 0], y[y == 0])


def test_model_file_round_trip():
    X, y = _clusters(3, 10)
    m = ovo_train(X, y)
    m.meta = {"note": "x"}
    back = load_svm(save_svm(m))
    assert back.classes == m.classes and back.meta == m.meta
    Z = np.random.default_rng(2).normal(size=(50, 5)) * 6
    np.testing.assert_array_equal(back.predict(Z), m.predict(Z))
    with pytest.raises(SvmError):
        load_svm(b"\x02\x00\x00\x00{}")
