import numpy as np
import pytest
from hypothesis import given, strategies as st

from ishap.config import RunConfig
from ishap.errors import SpecError
from ishap.evaluation import (
    BenchReport,
    ablation_run,
    bench_problem,
    feature_correlation,
    importance_correlation,
    ishap_explainer,
    pairwise_f1,
    r_squared,
    run_bench_trial,
    set_f1,
    shap_explainer,
    surrogate_fidelity,
    synth_bench,
)
from ishap.model import Dataset, GAMModel, LinearModel, Term, center
from ishap.partition import canonical
from ishap.synth import sample_ground_truth


partitions = st.integers(1, 7).flatmap(
    lambda d: st.lists(st.integers(0, 10**6), min_size=2, max_size=2).map(
        lambda seeds: (d, seeds)))


def random_partition(d, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, d, size=d)
    return canonical([np.flatnonzero(labels == k).tolist() for k in np.unique(labels)])


class TestF1:
    def test_identical(self):
        p = ((0, 1), (2,))
        assert set_f1(p, p).f1 == 1.0

    def test_singletons_against_pair(self):
        r = set_f1(((0,), (1,), (2,)), ((0, 1), (2,)))
        assert (r.tp, r.precision, r.recall) == (1, 1 / 3, 1 / 2)
        assert r.f1 == pytest.approx(0.4)

    def test_disjoint(self):
        assert set_f1(((0, 1), (2, 3)), ((0, 2), (1, 3))).f1 == 0.0

    def test_pairwise_example(self):
        r = pairwise_f1(((0, 1), (2,), (3,)), ((0, 1, 2), (3,)))
        assert (r.precision, r.recall) == (1.0, 1 / 3)
        assert r.f1 == pytest.approx(0.5)

    def test_pairwise_empty_convention(self):
        assert pairwise_f1(((0,), (1,)), ((0,), (1,))).f1 == 1.0
        assert pairwise_f1(((0, 1),), ((0,), (1,))).f1 == 0.0

    def test_pairwise_false_pair_only(self):
        r = pairwise_f1(((0, 2), (1,), (3,)), ((0, 1), (2,), (3,)))
        assert r.precision == 0.0 and r.f1 == 0.0

    def test_domain_mismatch(self):
        with pytest.raises(SpecError):
            set_f1(((0, 1),), ((0,), (1,), (2,)))
        with pytest.raises(SpecError):
            pairwise_f1(((0, 1),), ((0,), (1,), (2,)))

    @given(partitions, st.integers(0, 2**31))
    def test_relabeling_invariance(self, case, seed):
        d, (s1, s2) = case
        a, b = random_partition(d, s1), random_partition(d, s2)
        perm = np.random.default_rng(seed).permutation(d)
        relabel = lambda p: canonical([[int(perm[i]) for i in part] for part in p])
        assert set_f1(relabel(a), relabel(b)) == set_f1(a, b)
        assert pairwise_f1(relabel(a), relabel(b)) == pairwise_f1(a, b)

    @given(partitions)
    def test_bounds(self, case):
        d, (s1, s2) = case
        a, b = random_partition(d, s1), random_partition(d, s2)
        assert 0.0 <= set_f1(a, b).f1 <= 1.0
        assert pairwise_f1(a, a).f1 == 1.0
        assert set_f1(a, a).f1 == 1.0


class TestRSquared:
    def test_perfect(self):
        assert r_squared([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0

    def test_mean_predictor(self):
        assert r_squared([2.0, 2.0, 2.0], [1.0, 2.0, 3.0]) == 0.0


def exact_explainer(model):
    """One part covering every feature, valued at the centered prediction."""
    return lambda x: [(tuple(range(model.d)), float(model.predict(x[None, :])[0]))]


@pytest.fixture(scope="module")
def product_setup():
    bg = Dataset.from_array(np.random.default_rng(31).normal(size=(2000, 2)))
    return center(GAMModel(2, [Term((0, 1), "product", (1.0, 1.0))]), bg), bg


class TestSurrogateFidelity:
    def test_single_part_trials_are_exact(self, product_setup):
        model, bg = product_setup
        report = surrogate_fidelity(exact_explainer(model), model, bg, 30, seed=1)
        assert report.trials == 30
        assert all(implied == actual for implied, actual in report.pairs)
        assert report.r_squared == 1.0

    def test_linear_ishap(self):
        bg = Dataset.from_array(np.random.default_rng(2).normal(size=(1000, 3)))
        model = center(LinearModel([1.0, -1.0, 2.0], 3.0), bg)
        report = surrogate_fidelity(ishap_explainer(model, bg, RunConfig(n=500, n_s=500)), model, bg, 25, 0)
        assert report.r_squared == pytest.approx(1.0, abs=0.02)

    def test_shap_worse_on_product(self, product_setup):
        model, bg = product_setup
        cfg = RunConfig(n=500, n_s=1000)
        ishap = surrogate_fidelity(ishap_explainer(model, bg, cfg), model, bg, 40, 3)
        shap = surrogate_fidelity(shap_explainer(model, bg, 500, 3), model, bg, 40, 3)
        assert shap.r_squared < ishap.r_squared

    def test_shift_invariance(self, product_setup):
        model, bg = product_setup
        inner = model.inner
        shifted = center(GAMModel(2, list(inner.terms)), bg)
        shifted_plus = center(_Shifted(inner, 5.0), bg)
        a = surrogate_fidelity(shap_explainer(shifted, bg, 200, 0), shifted, bg, 20, 0)
        b = surrogate_fidelity(shap_explainer(shifted_plus, bg, 200, 0), shifted_plus, bg, 20, 0)
        assert b.r_squared == pytest.approx(a.r_squared, abs=1e-9)

    def test_too_few_trials(self, product_setup):
        model, bg = product_setup
        with pytest.raises(SpecError):
            surrogate_fidelity(exact_explainer(model), model, bg, 1)

    def test_inadmissible_skipped(self):
        # a 12-feature single-part explanation is admissible only on all-or-nothing splits
        bg = Dataset.from_array(np.random.default_rng(0).normal(size=(50, 12)))
        model = center(LinearModel(np.ones(12)), bg)
        report = surrogate_fidelity(exact_explainer(model), model, bg, 4, 0)
        assert report.trials + report.skipped == 4


class _Shifted:
    def __init__(self, inner, c):
        self.inner, self.c, self.d = inner, c, inner.d

    def predict(self, X):
        return self.inner.predict(X) + self.c


class TestCorrelation:
    @pytest.fixture
    def gam_points(self):
        rng = np.random.default_rng(4)
        gam = sample_ground_truth(6, "product", "normal", rng)
        return gam, rng.normal(1.0, 1.0, size=(30, 6))

    def oracle_explanations(self, gam, points, sign=1.0):
        from ishap.synth import ground_truth_importance

        return [[(part, sign * v) for part, v in zip(gam.partition, ground_truth_importance(gam, x))]
                for x in points]

    @pytest.mark.parametrize("pooling", ["per_part", "pooled"])
    def test_perfect(self, gam_points, pooling):
        gam, pts = gam_points
        r = importance_correlation(self.oracle_explanations(gam, pts), gam, pts, pooling)
        assert r.r == pytest.approx(1.0)
        assert r.matched == 30 * len(gam.partition)

    @pytest.mark.parametrize("pooling", ["per_part", "pooled"])
    def test_negated(self, gam_points, pooling):
        gam, pts = gam_points
        r = importance_correlation(self.oracle_explanations(gam, pts, -1.0), gam, pts, pooling)
        assert r.r == pytest.approx(-1.0)

    def test_unmatched_counted(self, gam_points):
        gam, pts = gam_points
        expl = [e + [((0, 1, 2, 3, 4, 5), 1.0)] for e in self.oracle_explanations(gam, pts)]
        r = importance_correlation(expl, gam, pts)
        assert r.unmatched == 30

    def test_too_few(self, gam_points):
        gam, pts = gam_points
        with pytest.raises(SpecError):
            importance_correlation([[]] * 30, gam, pts)

    def test_feature_correlation(self, gam_points):
        from ishap.synth import feature_importance

        gam, pts = gam_points
        values = np.array([feature_importance(gam, x) for x in pts])
        assert feature_correlation(values, gam, pts).r == pytest.approx(1.0)


class TestBench:
    def test_problem_deterministic(self):
        a = bench_problem(6, "product", "normal", 3, 1, n_rows=100)
        b = bench_problem(6, "product", "normal", 3, 1, n_rows=100)
        assert a[0] == b[0] and a[2] == b[2]
        assert a[1].values.tobytes() == b[1].values.tobytes()

    def test_trials_independent_of_order(self):
        cfg = RunConfig(n=200, n_s=200)
        report = synth_bench(5, "product", "normal", 3, cfg, n_rows=300)
        alone = run_bench_trial(5, "product", "normal", cfg, 2, n_rows=300)
        assert report.trials[2].row() == alone.row()

    def test_ablation_bell_count(self):
        report = ablation_run(8, "product", "normal", RunConfig(mode="exact", n=50, n_s=100), False, 1, n_rows=200)
        assert report.trials[0].candidate_partitions == 4140

    def test_guard_reported(self):
        cfg = RunConfig(mode="exact", n=20, n_s=100, exact_limit=4)
        report = ablation_run(6, "product", "normal", cfg, False, 2, n_rows=100)
        assert all("component too large" in t.error for t in report.trials)
        assert report.summary()["failed"] == 2

    def test_summary_means(self):
        report = synth_bench(4, "sine", "uniform", 2, RunConfig(n=100, n_s=100), n_rows=200)
        s = report.summary()
        assert s["set_f1"] == pytest.approx(np.mean([t.set_f1 for t in report.trials]))
        assert "runtime" not in s and "runtime" in report.summary(timing=True)

    def test_no_trials(self):
        with pytest.raises(SpecError):
            synth_bench(4, "sine", "uniform", 0, RunConfig())
