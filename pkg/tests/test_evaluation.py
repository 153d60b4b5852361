import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossrep.data import make_fold_plan
from crossrep.errors import ValidationError
from crossrep.evaluation import (CvResult, Representation,
                                 compare_representations, comparison_tsv,
                                 cross_validate, improvement_pct, render_comparison,
                                 rmse, win_count)
from crossrep.learners import LearnerSpec


finite_vectors = st.integers(1, 40).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-1e6, 1e6), min_size=n, max_size=n),
        st.lists(st.floats(-1e6, 1e6), min_size=n, max_size=n),
    )
)


class TestRmse:
    def test_identity(self):
        assert rmse(np.array([0.3, 0.7]), np.array([0.3, 0.7])) == 0.0

    def test_unit_error(self):
        assert rmse(np.array([1.0, 3.0]), np.array([2.0, 4.0])) == 1.0

    def test_direct_arithmetic(self):
        value = rmse(np.array([0.0, 0.0, 0.0]), np.array([1.0, 2.0, 2.0]))
        assert abs(value - np.sqrt(3.0)) < 1e-4  # sqrt(9/3) = 1.7321

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            rmse(np.ones(3), np.ones(4))

    def test_empty(self):
        with pytest.raises(ValidationError):
            rmse(np.empty(0), np.empty(0))

    @given(finite_vectors)
    @settings(max_examples=200, deadline=None)
    def test_symmetry_property(self, pair):
        p, t = np.asarray(pair[0]), np.asarray(pair[1])
        assert rmse(p, t) == rmse(t, p)

    @given(finite_vectors, st.floats(-100, 100))
    @settings(max_examples=200, deadline=None)
    def test_scaling_property(self, pair, c):
        p, t = np.asarray(pair[0]), np.asarray(pair[1])
        base = rmse(p, t)
        scaled = rmse(c * p, c * t)
        assert scaled == pytest.approx(abs(c) * base, rel=1e-9, abs=1e-12)


class TestImprovementPct:
    def test_meta_learning_rf_row(self):
        assert improvement_pct(0.1184, 0.0526) == pytest.approx(55.57, abs=0.01)

    def test_gene_rf_row(self):
        assert improvement_pct(0.0694, 0.0664) == pytest.approx(4.32, abs=0.01)

    def test_no_change_is_zero(self):
        for x in (0.1, 1.0, 42.0):
            assert improvement_pct(x, x) == 0.0

    def test_zero_original_rejected(self):
        with pytest.raises(ValidationError):
            improvement_pct(0.0, 0.1)

    @given(st.floats(1e-6, 1e6), st.floats(0, 1e6), st.floats(1e-6, 1e3))
    @settings(max_examples=200, deadline=None)
    def test_rescaling_invariance(self, orig, tl, c):
        assert improvement_pct(c * orig, c * tl) == pytest.approx(
            improvement_pct(orig, tl), rel=1e-9, abs=1e-9)


class TestCrossValidate:
    def test_constant_learner_matches_direct_recomputation(self):
        # all-zero features force ridge to predict the training mean
        rng = np.random.default_rng(0)
        n = 24
        y = rng.normal(size=n) * 2.0
        X = np.zeros((n, 2))
        plan = make_fold_plan(n, 4, seed=1)
        result = cross_validate(X, y, LearnerSpec.ridge(1.0), plan, task_id="t")
        for f in range(4):
            train, test = plan.split(f)
            expected = rmse(np.full(len(test), y[train].mean()), y[test])
            assert result.per_fold_rmse[f] == pytest.approx(expected, abs=1e-12)

    def test_loo_scores_absolute_errors(self):
        rng = np.random.default_rng(1)
        n = 6
        X = rng.normal(size=(n, 2))
        y = rng.normal(size=n)
        plan = make_fold_plan(n, n, seed=0)
        result = cross_validate(X, y, LearnerSpec.ridge(5.0), plan)
        assert len(result.per_fold_rmse) == n  # each fold scores one example

    def test_shared_plan_hash(self):
        rng = np.random.default_rng(2)
        n = 15
        plan = make_fold_plan(n, 3, seed=7)
        X = rng.normal(size=(n, 3))
        ext = rng.normal(size=(n, 2))
        y = rng.normal(size=n)
        a = cross_validate(X, y, LearnerSpec.ridge(1.0), plan, task_id="t")
        b = cross_validate(ext, y, LearnerSpec.ridge(1.0), plan, task_id="t",
                           representation=Representation.transformed(LearnerSpec.ridge(1.0)))
        assert a.plan_digest == b.plan_digest

    def test_mean_is_mean_of_folds(self):
        rng = np.random.default_rng(3)
        n = 20
        plan = make_fold_plan(n, 5, seed=2)
        result = cross_validate(rng.normal(size=(n, 2)), rng.normal(size=n),
                                LearnerSpec.ridge(2.0), plan)
        assert result.mean_rmse == pytest.approx(np.mean(result.per_fold_rmse))


class TestWinCount:
    def test_all_tied(self):
        scores = {"a": 0.5, "b": 0.4}
        assert win_count(scores, dict(scores)) == (0, 0, 2)

    def test_challenger_sweeps(self):
        base = {"a": 0.5, "b": 0.4}
        assert win_count(base, {"a": 0.4, "b": 0.3}) == (2, 0, 0)

    def test_mixed(self):
        base = {"a": 0.5, "b": 0.4, "c": 0.3}
        chal = {"a": 0.4, "b": 0.4, "c": 0.5}
        assert win_count(base, chal) == (1, 1, 1)

    def test_task_set_mismatch(self):
        with pytest.raises(ValidationError, match="task sets differ"):
            win_count({"a": 1.0}, {"b": 1.0})

    @given(st.dictionaries(st.text(min_size=1, max_size=4),
                           st.floats(0, 10), min_size=1, max_size=20),
           st.integers(0, 2**31))
    @settings(max_examples=200, deadline=None)
    def test_partition_property(self, base, seed):
        rng = np.random.default_rng(seed)
        chal = {k: max(0.0, v + rng.normal() * 0.1) for k, v in base.items()}
        wins, losses, ties = win_count(base, chal)
        assert wins + losses + ties == len(base)


def _cv(task_id, score, rep, final):
    return CvResult(task_id=task_id, per_fold_rmse=(score,), representation=rep,
                    final_learner=final)


class TestCompareRepresentations:
    FINAL = LearnerSpec.forest(n_trees=10, seed=0)
    TRANS = LearnerSpec.ridge(10.0)

    def _results(self):
        orig = Representation.original()
        tl = Representation.transformed(self.TRANS)
        out = []
        for i, (a, b) in enumerate([(0.5, 0.4), (0.4, 0.4), (0.3, 0.5)]):
            out.append(_cv(f"t{i}", a, orig, self.FINAL))
            out.append(_cv(f"t{i}", b, tl, self.FINAL))
        return out

    def test_single_learner_intrinsic_only(self):
        rows = compare_representations(
            [_cv("t0", 0.5, Representation.original(), self.FINAL),
             _cv("t1", 0.3, Representation.original(), self.FINAL)]).rows
        assert len(rows) == 1
        assert rows[0].improvement is None

    def test_improvement_from_row_means(self):
        table = compare_representations(
            [_cv("t0", 0.1643, Representation.original(), self.FINAL),
             _cv("t0", 0.1478, Representation.transformed(self.TRANS), self.FINAL)])
        tl_row = [r for r in table.rows if r.improvement is not None][0]
        assert tl_row.improvement == pytest.approx(10.04, abs=0.05)

    def test_win_counts_partition(self):
        table = compare_representations(self._results())
        tl_row = [r for r in table.rows if r.improvement is not None][0]
        assert (tl_row.wins, tl_row.losses, tl_row.ties) == (1, 1, 1)
        assert tl_row.wins + tl_row.losses + tl_row.ties == tl_row.task_count

    def test_order_independence(self):
        results = self._results()
        a = compare_representations(results)
        b = compare_representations(list(reversed(results)))
        assert a == b

    @given(st.integers(0, 2**31))
    @settings(max_examples=200, deadline=None)
    def test_order_independence_property(self, seed):
        rng = np.random.default_rng(seed)
        results = self._results()
        perm = rng.permutation(len(results))
        shuffled = [results[i] for i in perm]
        assert compare_representations(shuffled) == compare_representations(results)

    def test_incomplete_coverage_rejected(self):
        results = self._results()[:-1]  # drop one transformed result
        with pytest.raises(ValidationError, match="different task sets"):
            compare_representations(results)

    def test_render_contains_pivot_columns(self):
        text = render_comparison(compare_representations(self._results()))
        assert "Original rep." in text
        assert "TL - Ridge" in text
        assert "(%)" in text

    def test_tsv_round_numbers(self):
        tsv = comparison_tsv(compare_representations(self._results()))
        assert tsv.startswith("final\trepresentation")
        assert "RF\t" in tsv


class TestCrossValidateInputForms:
    def test_accepts_task_directly(self):
        from conftest import make_task
        task = make_task("direct", n=12, p=2, seed=3)
        plan = make_fold_plan(12, 3, seed=0)
        result = cross_validate(task, spec=LearnerSpec.ridge(1.0), plan=plan)
        assert result.task_id == "direct"
        assert len(result.per_fold_rmse) == 3

    def test_accepts_extrinsic_matrix(self):
        from crossrep.engine import ExtrinsicMatrix
        rng = np.random.default_rng(0)
        ext = ExtrinsicMatrix(values=rng.normal(size=(12, 2)),
                              source_model_ids=("a", "b"), target_task_id="me")
        plan = make_fold_plan(12, 3, seed=0)
        result = cross_validate(ext, rng.normal(size=12),
                                spec=LearnerSpec.ridge(1.0), plan=plan)
        assert result.task_id == "me"

    def test_missing_pieces_rejected(self):
        with pytest.raises(ValidationError, match="needs targets"):
            cross_validate(np.ones((4, 2)), None, LearnerSpec.ridge(1.0), None)
