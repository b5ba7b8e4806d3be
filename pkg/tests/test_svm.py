"""SVM tests: kernels, SMO training, one-vs-one prediction, model selection."""

import numpy as np
import pytest

from emovec.errors import DimensionMismatch, SingleClass, TooFewSamples
from emovec.svm import (
    BinarySvm,
    KernelGrid,
    KernelSpec,
    OvoSvmModel,
    TrainParams,
    decision_value,
    fit_standardizer,
    grid_select,
    kernel_eval,
    kernel_matrix,
    load_svm,
    predict,
    save_svm,
    svm_from_dict,
    svm_to_dict,
    train_binary,
    train_ovo,
)

from oracles import random_small_svm_problem, svm_dual_oracle


class TestKernels:
    def test_linear_dot_product(self):
        assert kernel_eval(KernelSpec("linear"), np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 11.0

    def test_rbf_at_zero_distance(self):
        x = np.array([0.3, -0.7])
        assert kernel_eval(KernelSpec("rbf", 2.0), x, x) == 1.0

    def test_rbf_unit_distance(self):
        # squared distance 1 with sigma 0.5 -> exp(-1)
        v = kernel_eval(KernelSpec("rbf", 0.5), np.zeros(2), np.array([1.0, 0.0]))
        assert v == pytest.approx(np.exp(-1.0))

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(30)
        for _ in range(20):
            x, v = rng.normal(size=(2, 4))
            spec = KernelSpec("rbf", float(rng.uniform(0.1, 5.0)))
            assert kernel_eval(spec, x, v) == kernel_eval(spec, v, x)
            assert 0.0 < kernel_eval(spec, x, v) <= 1.0
            lin = KernelSpec("linear")
            assert kernel_eval(lin, x, v) == kernel_eval(lin, v, x)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            kernel_eval(KernelSpec("linear"), np.zeros(2), np.zeros(3))

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            KernelSpec("poly")
        with pytest.raises(ValueError):
            KernelSpec("rbf")


class TestTrainBinary:
    def test_analytic_two_point_problem(self):
        """Two points at -1/+1: boundary at 0, unit margins, both support."""
        x = np.array([[-1.0], [1.0]])
        y = np.array([-1.0, 1.0])
        model, summary = train_binary(x, y, KernelSpec("linear"), TrainParams(c=10.0))
        assert decision_value(model, np.array([0.0])) == pytest.approx(0.0, abs=1e-9)
        assert decision_value(model, np.array([1.0])) == pytest.approx(1.0, abs=1e-9)
        assert decision_value(model, np.array([-1.0])) == pytest.approx(-1.0, abs=1e-9)
        assert summary.n_support == 2

    def test_xor_with_rbf(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        model, _ = train_binary(x, y, KernelSpec("rbf", 0.5), TrainParams(c=10.0))
        preds = np.sign([decision_value(model, xi) for xi in x])
        np.testing.assert_array_equal(preds, y)

    def test_duplicated_data_leaves_decision_unchanged(self):
        """Separable data, C large enough that no alpha is bound-constrained."""
        rng = np.random.default_rng(31)
        x = np.vstack([rng.normal(-3, 0.5, size=(8, 2)), rng.normal(3, 0.5, size=(8, 2))])
        y = np.array([-1.0] * 8 + [1.0] * 8)
        probe = rng.normal(0, 3, size=(25, 2))
        for spec in (KernelSpec("linear"), KernelSpec("rbf", 4.0)):
            params = TrainParams(c=100.0, tol=1e-8)
            m1, _ = train_binary(x, y, spec, params)
            m2, _ = train_binary(np.vstack([x, x]), np.concatenate([y, y]), spec, params)
            d1 = np.array([decision_value(m1, g) for g in probe])
            d2 = np.array([decision_value(m2, g) for g in probe])
            np.testing.assert_allclose(d1, d2, atol=1e-6)

    def test_dual_feasibility_and_balance(self):
        rng = np.random.default_rng(32)
        for trial in range(10):
            x, y, c = random_small_svm_problem(rng)
            _, summary = train_binary(x, y, KernelSpec("linear"), TrainParams(c=c, tol=1e-6))
            assert (summary.alphas >= -1e-12).all()
            assert (summary.alphas <= c + 1e-12).all()
            assert abs(float(summary.alphas @ y)) <= 1e-6

    def test_kkt_conditions_hold_samplewise(self):
        rng = np.random.default_rng(33)
        tol = 1e-6
        for trial in range(10):
            x, y, c = random_small_svm_problem(rng)
            spec = KernelSpec("rbf", 1.0) if trial % 2 else KernelSpec("linear")
            model, summary = train_binary(x, y, spec, TrainParams(c=c, tol=tol))
            gram = kernel_matrix(spec, x)
            f = gram @ (summary.alphas * y) + summary.bias
            for i in range(len(y)):
                margin = y[i] * f[i]
                if summary.alphas[i] < c - 1e-9:
                    assert margin >= 1.0 - tol - 1e-6
                if summary.alphas[i] > 1e-9:
                    assert margin <= 1.0 + tol + 1e-6

    def test_objective_matches_brute_force_oracle(self):
        rng = np.random.default_rng(34)
        for trial in range(12):
            x, y, c = random_small_svm_problem(rng)
            spec = (
                KernelSpec("rbf", float(rng.uniform(0.5, 4.0))) if trial % 2 else KernelSpec("linear")
            )
            _, summary = train_binary(x, y, spec, TrainParams(c=c, tol=1e-6))
            _, oracle_obj = svm_dual_oracle(kernel_matrix(spec, x), y, c)
            assert summary.objective == pytest.approx(oracle_obj, abs=1e-4)

    def test_on_demand_kernel_path_matches_cached(self):
        """The lazy-row path must train the same classifier as the full Gram.

        Dual coordinates are not unique, so equivalence is checked on the
        decision function and the dual objective.
        """
        rng = np.random.default_rng(35)
        x = rng.normal(size=(12, 3))
        y = np.where(x[:, 0] > 0, 1.0, -1.0)
        if (y > 0).all() or (y < 0).all():
            y[0] = -y[0]
        params = TrainParams(c=1.0, tol=1e-6)
        cached, s1 = train_binary(x, y, KernelSpec("rbf", 1.0), params)
        lazy, s2 = train_binary(x, y, KernelSpec("rbf", 1.0), params, gram_cache_limit=2)
        probe = rng.normal(size=(20, 3))
        d1 = np.array([decision_value(cached, p) for p in probe])
        d2 = np.array([decision_value(lazy, p) for p in probe])
        np.testing.assert_allclose(d1, d2, atol=1e-6)
        assert s1.objective == pytest.approx(s2.objective, abs=1e-9)

    def test_single_class_rejected(self):
        with pytest.raises(SingleClass):
            train_binary(np.zeros((3, 2)), np.ones(3), KernelSpec("linear"), TrainParams())


def _constant_machine(pair, value):
    """Machine with no support vectors: decision value is the bias."""
    return BinarySvm(
        support_vectors=np.empty((0, 2)),
        coeffs=np.empty(0),
        bias=value,
        kernel=KernelSpec("linear"),
        class_pair=pair,
    )


def _vote_tiebreak_oracle(classes, machines_with_values):
    """Exhaustive restatement of the prediction rule for cross-checking."""
    votes = {c: 0 for c in classes}
    margins = {c: 0.0 for c in classes}
    for (a, b), f in machines_with_values:
        votes[a if f > 0 else b] += 1
        margins[a] += f
        margins[b] -= f
    best_votes = max(votes.values())
    tied = [c for c in classes if votes[c] == best_votes]
    best_margin = max(margins[c] for c in tied)
    tied = [c for c in tied if margins[c] == best_margin]
    return tied[0]


class TestPredict:
    def test_two_class_reduces_to_sign(self):
        model = OvoSvmModel(["pos", "neg"], [_constant_machine(("pos", "neg"), 0.7)], None)
        label, votes, _ = predict(model, np.zeros(2))
        assert label == "pos"
        assert votes == {"pos": 1, "neg": 0}
        model = OvoSvmModel(["pos", "neg"], [_constant_machine(("pos", "neg"), -0.7)], None)
        assert predict(model, np.zeros(2))[0] == "neg"

    def test_majority_vote(self):
        machines = [
            _constant_machine(("A", "B"), 1.0),   # A
            _constant_machine(("A", "C"), 0.5),   # A
            _constant_machine(("B", "C"), -0.2),  # C
        ]
        model = OvoSvmModel(["A", "B", "C"], machines, None)
        label, votes, _ = predict(model, np.zeros(2))
        assert label == "A"
        assert votes == {"A": 2, "B": 0, "C": 1}

    def test_three_way_tie_resolved_by_margins(self):
        # each class gets exactly one vote; the summed signed values decide
        machines = [
            _constant_machine(("A", "B"), 0.3),    # A votes
            _constant_machine(("B", "C"), 0.9),    # B votes
            _constant_machine(("A", "C"), -0.05),  # C votes
        ]
        model = OvoSvmModel(["A", "B", "C"], machines, None)
        label, votes, margins = predict(model, np.zeros(2))
        assert set(votes.values()) == {1}
        oracle = _vote_tiebreak_oracle(
            ["A", "B", "C"], [(("A", "B"), 0.3), (("B", "C"), 0.9), (("A", "C"), -0.05)]
        )
        assert label == oracle == "B"

    def test_tiebreak_matches_oracle_on_random_values(self):
        rng = np.random.default_rng(36)
        classes = ["A", "B", "C", "D"]
        pairs = [(a, b) for i, a in enumerate(classes) for b in classes[i + 1 :]]
        for _ in range(200):
            values = [float(v) for v in rng.normal(size=len(pairs))]
            machines = [_constant_machine(p, v) for p, v in zip(pairs, values)]
            model = OvoSvmModel(classes, machines, None)
            assert predict(model, np.zeros(2))[0] == _vote_tiebreak_oracle(
                classes, list(zip(pairs, values))
            )

    def test_positive_scaling_invariance(self):
        rng = np.random.default_rng(37)
        classes = ["A", "B", "C"]
        pairs = [("A", "B"), ("A", "C"), ("B", "C")]
        for _ in range(50):
            values = rng.normal(size=3)
            scale = float(rng.uniform(0.1, 10.0))
            m1 = OvoSvmModel(classes, [_constant_machine(p, float(v)) for p, v in zip(pairs, values)], None)
            m2 = OvoSvmModel(
                classes, [_constant_machine(p, float(v * scale)) for p, v in zip(pairs, values)], None
            )
            assert predict(m1, np.zeros(2))[0] == predict(m2, np.zeros(2))[0]


class TestTrainOvo:
    def _blobs(self, rng, n_classes, per_class=12, spread=5.0):
        x = np.vstack([rng.normal(i * spread, 0.6, size=(per_class, 3)) for i in range(n_classes)])
        labels = [chr(ord("a") + i) for i in range(n_classes) for _ in range(per_class)]
        return x, labels

    def test_three_classes_three_machines(self):
        rng = np.random.default_rng(38)
        x, labels = self._blobs(rng, 3)
        model, _ = train_ovo(x, labels, TrainParams(c=1.0))
        assert len(model.machines) == 3

    def test_seven_classes_twentyone_machines(self):
        rng = np.random.default_rng(39)
        x, labels = self._blobs(rng, 7, per_class=6)
        model, _ = train_ovo(x, labels, TrainParams(c=1.0))
        assert len(model.machines) == 21
        assert len(model.classes) == 7

    def test_standardizer_z_scores_training_data(self):
        rng = np.random.default_rng(40)
        x, labels = self._blobs(rng, 3)
        model, _ = train_ovo(x, labels, TrainParams(c=1.0), standardize=True)
        z = model.standardizer.transform(x)
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-9)

    def test_separable_blobs_classified(self):
        rng = np.random.default_rng(41)
        x, labels = self._blobs(rng, 3)
        model, _ = train_ovo(x, labels, TrainParams(c=1.0))
        preds = [predict(model, xi)[0] for xi in x]
        assert preds == labels

    def test_single_class_rejected(self):
        with pytest.raises(SingleClass):
            train_ovo(np.zeros((4, 2)), ["a"] * 4, TrainParams())


class TestGridSelect:
    def test_single_point_grid_returned_directly(self):
        grid = KernelGrid(cs=(2.0,), kinds=("linear",))
        choice = grid_select(
            np.zeros((4, 2)), ["a", "a", "b", "b"], TrainParams(grid=grid), folds=2
        )
        assert choice.kernel.kind == "linear"
        assert choice.c == 2.0
        assert choice.accuracy is None

    def test_tie_breaks_toward_linear(self):
        """Separable data: both kernels reach 100%, linear must win."""
        rng = np.random.default_rng(42)
        x = np.vstack([rng.normal(-4, 0.4, size=(12, 2)), rng.normal(4, 0.4, size=(12, 2))])
        labels = ["neg"] * 12 + ["pos"] * 12
        grid = KernelGrid(cs=(1.0,), kinds=("linear", "rbf"), sigmas=(1e6,))
        choice = grid_select(x, labels, TrainParams(grid=grid), folds=3, seed=0)
        assert choice.kernel.kind == "linear"
        assert choice.accuracy == 1.0

    def test_stratified_folds_preserve_proportions(self):
        from emovec.svm import _stratified_folds

        labels = ["a"] * 30 + ["b"] * 15 + ["c"] * 9
        fold_of = _stratified_folds(labels, 3, seed=1)
        for cls, count in (("a", 30), ("b", 15), ("c", 9)):
            per_fold = [
                sum(1 for i, lab in enumerate(labels) if lab == cls and fold_of[i] == f)
                for f in range(3)
            ]
            assert max(per_fold) - min(per_fold) <= 1
            assert sum(per_fold) == count

    def test_too_few_samples(self):
        grid = KernelGrid(cs=(0.5, 1.0), kinds=("linear",))
        with pytest.raises(TooFewSamples):
            grid_select(
                np.zeros((4, 2)), ["a", "a", "a", "b"], TrainParams(grid=grid), folds=2
            )

    def test_smaller_c_preferred_on_ties(self):
        rng = np.random.default_rng(43)
        x = np.vstack([rng.normal(-4, 0.4, size=(9, 2)), rng.normal(4, 0.4, size=(9, 2))])
        labels = ["neg"] * 9 + ["pos"] * 9
        grid = KernelGrid(cs=(10.0, 0.5, 1.0), kinds=("linear",))
        choice = grid_select(x, labels, TrainParams(grid=grid), folds=3, seed=0)
        assert choice.c == 0.5


class TestModelFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(44)
        x = np.vstack([rng.normal(i * 4, 0.5, size=(8, 3)) for i in range(3)])
        labels = ["a"] * 8 + ["b"] * 8 + ["c"] * 8
        model, _ = train_ovo(x, labels, TrainParams(c=1.0, kernel=KernelSpec("rbf", 2.0)))
        path = tmp_path / "svm.json"
        save_svm(path, model, "cfg456")
        loaded, digest = load_svm(path)
        assert digest == "cfg456"
        assert loaded.classes == model.classes
        for xi in rng.normal(0, 4, size=(10, 3)):
            assert predict(loaded, xi)[0] == predict(model, xi)[0]
        for m_in, m_out in zip(model.machines, loaded.machines):
            np.testing.assert_array_equal(m_in.support_vectors, m_out.support_vectors)
            np.testing.assert_array_equal(m_in.coeffs, m_out.coeffs)
            assert m_in.bias == m_out.bias

    def test_document_schema(self):
        model = OvoSvmModel(
            ["x", "y"],
            [
                BinarySvm(
                    support_vectors=np.ones((1, 2)),
                    coeffs=np.array([0.5]),
                    bias=-0.25,
                    kernel=KernelSpec("rbf", 3.0),
                    class_pair=("x", "y"),
                )
            ],
            fit_standardizer(np.arange(10.0).reshape(5, 2)),
        )
        doc = svm_to_dict(model, "deadbeef")
        assert doc["format"] == "emovec-svm"
        assert doc["version"] == 1
        assert doc["machines"][0]["pair"] == ["x", "y"]
        assert doc["machines"][0]["kernel"] == {"kind": "rbf", "sigma": 3.0}
        again, _ = svm_from_dict(doc)
        assert again.classes == ["x", "y"]
