import math
import warnings

import numpy as np
import pytest

from oracles import dual_qp, dual_value, rbf_gram_loop
from radonsvm import svm
from radonsvm.imaging import ContractViolation, RadonConfig
from radonsvm.svm import (BinarySvm, ConvergenceWarning, ModelFormatError, MulticlassSvm, SvmHyperparams,
                          TrainingError, decision_value, decision_values, dumps_model, loads_model,
                          predict_binary, predict_class, predict_classes, rbf_kernel, smo_train,
                          solve_dual, train_multiclass, vote)


def blobs(rng, k, n, sigma=0.3, spacing=4.0, dim=2):
    centres = np.array([[spacing * math.cos(2 * math.pi * i / k), spacing * math.sin(2 * math.pi * i / k)]
                        for i in range(k)])
    if dim > 2:
        centres = np.hstack([centres, np.zeros((k, dim - 2))])
    x = np.vstack([c + sigma * rng.normal(size=(n, dim)) for c in centres])
    y = np.repeat(np.arange(k), n)
    return x, y


def kkt_residual(x, y, alphas, bias, c, gamma):
    """Largest KKT violation in margin units over all training points."""
    u = rbf_gram_loop(x.tolist(), gamma) @ (alphas * y) + bias
    margin = y * u
    worst = 0.0
    for a, m in zip(alphas, margin):
        if a <= 0:
            worst = max(worst, 1 - m)
        elif a >= c:
            worst = max(worst, m - 1)
        else:
            worst = max(worst, abs(m - 1))
    return worst


class TestKernel:
    def test_self_similarity(self, rng):
        x = rng.normal(size=7)
        assert rbf_kernel(x, x, 3.0) == 1.0

    def test_symmetry(self, rng):
        x, y = rng.normal(size=5), rng.normal(size=5)
        assert rbf_kernel(x, y, 0.2) == rbf_kernel(y, x, 0.2)

    def test_default_gamma_unit_distance(self):
        assert rbf_kernel([0.0, 0.0], [1.0, 0.0], 0.0359) == pytest.approx(math.exp(-0.0359))
        assert rbf_kernel([0.0], [1.0], 0.0359) == pytest.approx(0.964737, abs=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolation):
            rbf_kernel([1, 2], [1, 2, 3], 1.0)


class TestHyperparams:
    @pytest.mark.parametrize("kwargs", [{"c": 0}, {"gamma": -1}, {"kkt_tolerance": 0}, {"max_passes": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SvmHyperparams(**kwargs)

    def test_defaults(self):
        hp = SvmHyperparams()
        assert (hp.c, hp.gamma, hp.kkt_tolerance) == (16.0, 0.0359, 1e-3)
        assert hp.iteration_budget(30) == 300 * 30
        assert SvmHyperparams(max_passes=2).iteration_budget(30) == 60


class TestSmo:
    def test_two_point_problem(self):
        m = smo_train([[-1.0], [1.0]], [-1, 1], SvmHyperparams(c=1e6, gamma=0.5))
        assert decision_value(m, np.array([0.0])) == pytest.approx(0.0, abs=1e-12)
        assert decision_value(m, np.array([1.0])) > 0
        assert predict_binary(m, np.array([0.3])) == 1
        assert predict_binary(m, np.array([-0.3])) == -1

    def test_label_flip_negates(self, rng):
        x = rng.normal(size=(12, 2))
        y = np.where(x[:, 0] + 0.3 * rng.normal(size=12) > 0, 1, -1)
        hp = SvmHyperparams(c=2.0, gamma=0.7, kkt_tolerance=1e-9)
        probe = rng.normal(size=(30, 2))
        a = decision_values(smo_train(x, y, hp), probe)
        b = decision_values(smo_train(x, -y, hp), probe)
        np.testing.assert_allclose(a, -b, atol=1e-7)

    def test_matches_dense_qp(self, rng):
        x = rng.normal(size=(6, 2))
        y = np.array([1, -1, 1, -1, 1, -1.0])
        hp = SvmHyperparams(c=16.0, gamma=0.5)
        gram = rbf_gram_loop(x.tolist(), hp.gamma)
        state = solve_dual(svm._KernelColumns(x, hp.gamma), y, hp.c, hp.kkt_tolerance, 60)
        oracle = dual_qp(gram, y, hp.c)
        assert dual_value(state.alphas, y, gram) >= dual_value(oracle, y, gram) - 1e-3
        assert abs(dual_value(state.alphas, y, gram) - dual_value(oracle, y, gram)) <= 1e-3

    def test_dual_feasibility_and_kkt(self, rng):
        x, labels = blobs(rng, 2, 40, sigma=1.5, spacing=1.0)
        y = np.where(labels == 0, 1.0, -1.0)
        hp = SvmHyperparams(c=1.0, gamma=0.5)
        state = solve_dual(svm._KernelColumns(x, hp.gamma), y, hp.c, hp.kkt_tolerance, 10 * y.size)
        assert state.converged
        assert np.all(state.alphas >= 0) and np.all(state.alphas <= hp.c)
        assert abs(np.dot(state.alphas, y)) <= 1e-9
        assert kkt_residual(x, y, state.alphas, state.bias, hp.c, hp.gamma) <= hp.kkt_tolerance
        m = smo_train(x, y, hp)
        assert np.all(np.abs(m.coefficients) <= hp.c)
        assert m.coefficients.size == int((state.alphas > 0).sum())

    def test_duplicated_data_with_half_penalty(self, rng):
        x = rng.normal(size=(10, 2))
        y = np.where(x[:, 1] > 0, 1.0, -1.0)
        y[0] = -y[0]  # make it non-separable so some alphas sit at C
        probe = rng.normal(size=(40, 2))
        a = decision_values(smo_train(x, y, SvmHyperparams(c=2.0, gamma=1.0, kkt_tolerance=1e-11,
                                                             max_passes=1000)), probe)
        b = decision_values(smo_train(np.vstack([x, x]), np.r_[y, y],
                                      SvmHyperparams(c=1.0, gamma=1.0, kkt_tolerance=1e-11,
                                                     max_passes=1000)), probe)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_deterministic(self, rng):
        x, labels = blobs(rng, 2, 30, sigma=2.0, spacing=1.0)
        y = np.where(labels == 0, 1.0, -1.0)
        m1, m2 = smo_train(x, y), smo_train(x.copy(), y.copy())
        assert m1 == m2
        assert m1.bias == m2.bias

    def test_on_demand_kernel_columns_match_dense(self, rng, monkeypatch):
        x, labels = blobs(rng, 2, 25, sigma=2.0, spacing=1.0)
        y = np.where(labels == 0, 1.0, -1.0)
        dense = smo_train(x, y)
        monkeypatch.setattr(svm, "FULL_GRAM_LIMIT", 4)
        lazy = smo_train(x, y)
        assert lazy.iterations == dense.iterations
        np.testing.assert_allclose(lazy.coefficients, dense.coefficients, atol=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(TrainingError):
            smo_train([[0.0], [1.0]], [1, 1])

    def test_non_convergence_flagged(self, rng):
        x, labels = blobs(rng, 2, 30, sigma=2.0, spacing=0.5)
        y = np.where(labels == 0, 1.0, -1.0)
        with pytest.warns(ConvergenceWarning):
            m = smo_train(x, y, SvmHyperparams(max_passes=1))
        assert not m.converged and m.iterations == y.size


class TestDecision:
    def test_empty_machine_returns_bias(self):
        m = BinarySvm(np.zeros((0, 3)), [], 0.5, 1.0)
        assert decision_value(m, np.array([1.0, 2.0, 3.0])) == 0.5

    def test_against_loop(self, rng):
        sv = rng.normal(size=(9, 4))
        coef = rng.normal(size=9)
        m = BinarySvm(sv, coef, -0.25, 0.3)
        for x in rng.normal(size=(10, 4)):
            expected = -0.25
            for s, c in zip(sv, coef):
                expected += c * math.exp(-0.3 * sum((a - b) ** 2 for a, b in zip(s, x)))
            assert decision_value(m, x) == pytest.approx(expected, abs=1e-12)

    def test_dimension_mismatch(self, rng):
        m = BinarySvm(rng.normal(size=(2, 3)), [1, -1], 0.0, 1.0)
        with pytest.raises(ContractViolation):
            decision_value(m, np.zeros(4))

    def test_sign_of_zero_is_positive(self):
        assert predict_binary(BinarySvm(np.zeros((0, 1)), [], 0.0, 1.0), np.zeros(1)) == 1


def constant_model(labels, biases):
    machines = tuple(BinarySvm(np.zeros((0, 1)), [], b, 1.0) for b in biases)
    return MulticlassSvm(tuple(labels), machines, SvmHyperparams())


class TestMulticlass:
    def test_two_classes_one_machine(self, rng):
        x, y = blobs(rng, 2, 10)
        m = train_multiclass(x, y)
        assert len(m.machines) == 1
        for probe in rng.normal(size=(20, 2)) * 4:
            expected = m.class_labels[0] if decision_value(m.machines[0], probe) >= 0 else m.class_labels[1]
            assert predict_class(m, probe) == expected

    def test_57_classes_machine_count(self, rng):
        x = rng.normal(size=(114, 2))
        y = np.repeat(np.arange(57), 2)
        m = train_multiclass(x, y, SvmHyperparams(gamma=1.0))
        assert len(m.machines) == 57 * 56 // 2 == 1596
        assert m.pairs[0] == (0, 1) and m.pairs[-1] == (55, 56)

    def test_blobs_separable(self, rng):
        x, y = blobs(rng, 3, 50)
        m = train_multiclass(x, y, SvmHyperparams(c=16.0, gamma=0.5))
        assert predict_classes(m, x) == list(y)
        xt, yt = blobs(rng, 3, 50)
        acc = np.mean(np.array(predict_classes(m, xt)) == yt)
        assert acc >= 0.95

    def test_positive_marks_lower_label(self, rng):
        x, y = blobs(rng, 2, 10)
        labels = np.where(y == 0, "b", "a")
        m = train_multiclass(x, labels)
        assert m.class_labels == ("a", "b")
        a_point = x[labels == "a"][0]
        assert decision_value(m.machines[0], a_point) > 0

    def test_fewer_than_two_classes(self):
        with pytest.raises(TrainingError):
            train_multiclass([[0.0], [1.0]], ["a", "a"])

    def test_unanimous_vote(self):
        # pairs (0,1) (0,2) (0,3) (1,2) (1,3) (2,3); class 2 wins all of its three.
        m = constant_model("abcd", [1, -1, 1, -1, 1, 1])
        assert predict_class(m, np.zeros(1)) == "c"

    def test_tie_broken_by_margin_sum(self):
        # Cyclic 1-1-1 vote: a beats b (0.5), c beats a (2.0), b beats c (1.0).
        m = constant_model("abc", [0.5, -2.0, 1.0])
        assert predict_class(m, np.zeros(1)) == "c"

    def test_tie_then_label_order(self):
        m = constant_model("abc", [1.0, -1.0, 1.0])
        assert predict_class(m, np.zeros(1)) == "a"
        assert vote(m, np.array([1.0, -1.0, 1.0])) == 0

    def test_parallel_training_identical(self, rng):
        x, y = blobs(rng, 4, 15, sigma=1.0)
        hp = SvmHyperparams(gamma=0.5)
        assert train_multiclass(x, y, hp, workers=1) == train_multiclass(x, y, hp, workers=3)

    def test_dimension_checked(self, rng):
        x, y = blobs(rng, 3, 5)
        m = train_multiclass(x, y)
        with pytest.raises(ContractViolation):
            predict_class(m, np.zeros(3))


class TestModelFile:
    @pytest.fixture
    def model(self, rng):
        x, y = blobs(rng, 3, 8)
        return train_multiclass(x, [f"class-{v}" for v in y], SvmHyperparams(gamma=0.5), radon=RadonConfig(1, 2))

    def test_round_trip(self, model, rng):
        data = dumps_model(model)
        assert data[:4] == b"RSVM" and data[4] == 1
        back = loads_model(data)
        assert back == model
        probe = rng.normal(size=(10, 2))
        np.testing.assert_array_equal(back.decision_matrix(probe), model.decision_matrix(probe))
        assert dumps_model(back) == data

    def test_truncation(self, model):
        data = dumps_model(model)
        for cut in (2, 20, len(data) // 2, len(data) - 1):
            with pytest.raises(ModelFormatError) as err:
                loads_model(data[:cut])
            assert err.value.offset <= cut

    def test_bad_magic_and_version(self, model):
        data = dumps_model(model)
        with pytest.raises(ModelFormatError, match="magic"):
            loads_model(b"XXXX" + data[4:])
        with pytest.raises(ModelFormatError, match="version"):
            loads_model(data[:4] + b"\x09" + data[5:])

    def test_convergence_flag_survives(self, rng):
        x, y = blobs(rng, 2, 20, sigma=2.0, spacing=0.5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            m = train_multiclass(x, y, SvmHyperparams(max_passes=1))
        assert not loads_model(dumps_model(m)).machines[0].converged
