import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ishap.synth import (
    Column,
    GroundTruthGAM,
    feature_importance,
    ground_truth_importance,
    permute_features,
    sample_dataset,
    sample_ground_truth,
)


def reference_eval(gam, X):
    """Term-by-term evaluation written independently of the model classes."""
    out = np.zeros(len(X))
    for part, kind, coeffs in zip(gam.partition, gam.kinds, gam.coeffs):
        for r, row in enumerate(X):
            if kind == "product":
                out[r] += math.prod(a * row[j] for j, a in zip(part, coeffs))
            else:
                out[r] += math.sin(sum(a * row[j] for j, a in zip(part, coeffs)))
    return out


def mixed_partial(f, x, part, h=1e-3):
    """Central finite-difference estimate of the mixed partial over ``part``."""
    total = 0.0
    k = len(part)
    for signs in np.ndindex(*(2,) * k):
        pt = np.array(x, dtype=float)
        sign = 1.0
        for j, s in zip(part, signs):
            pt[j] += h if s else -h
            sign *= 1.0 if s else -1.0
        total += sign * f(pt)
    return total / (2 * h) ** k


class TestSampleGroundTruth:
    def test_single_feature(self):
        gam = sample_ground_truth(1, "product", "normal", np.random.default_rng(0))
        assert gam.partition == ((0,),)

    @given(st.integers(1, 40), st.integers(0, 2**31), st.sampled_from(["product", "sine", "mixed"]))
    def test_structure(self, d, seed, kind):
        gam = sample_ground_truth(d, kind, "uniform", np.random.default_rng(seed))
        assert sorted(i for p in gam.partition for i in p) == list(range(d))
        assert all(len(p) >= 1 for p in gam.partition)
        assert all(0.5 <= abs(a) <= 1.5 for c in gam.coeffs for a in c)
        if kind != "mixed":
            assert set(gam.kinds) == {kind}

    def test_column_parameters(self):
        gam = sample_ground_truth(200, "product", "normal", np.random.default_rng(1))
        assert all(0 <= c.a <= 3 and 0.5 <= c.b <= 1.5 for c in gam.columns)

    def test_mean_part_size_matches_simulation(self):
        d = 10
        rng = np.random.default_rng(2)
        sizes = [len(p) for _ in range(10000) for p in sample_ground_truth(d, "product", "normal", rng).partition]
        # independent simulation of the clamped Poisson process
        sim = np.random.default_rng(99)
        ref = []
        for _ in range(10000):
            left = d
            while left:
                k = min(max(int(sim.poisson(1.5)), 1), left)
                ref.append(k)
                left -= k
        assert np.mean(sizes) == pytest.approx(np.mean(ref), rel=0.02)

    def test_deterministic(self):
        a = sample_ground_truth(12, "mixed", "normal", np.random.default_rng(5))
        b = sample_ground_truth(12, "mixed", "normal", np.random.default_rng(5))
        assert a == b

    def test_distinct_seeds(self):
        parts = {sample_ground_truth(8, "product", "normal", np.random.default_rng(s)).partition for s in range(20)}
        assert len(parts) >= 10

    @pytest.mark.parametrize("args", [(0, "product", "normal"), (3, "cubic", "normal"), (3, "sine", "gamma")])
    def test_bad_arguments(self, args):
        with pytest.raises(ValueError):
            sample_ground_truth(*args, np.random.default_rng(0))


class TestSampleDataset:
    def test_uniform_range(self):
        gam = sample_ground_truth(5, "product", "uniform", np.random.default_rng(0))
        X = sample_dataset(gam, 5000, np.random.default_rng(1)).values
        assert X.min() >= 0.0 and X.max() <= 3.0

    def test_normal_means(self):
        gam = sample_ground_truth(6, "product", "normal", np.random.default_rng(0))
        n = 20000
        X = sample_dataset(gam, n, np.random.default_rng(1)).values
        for j, col in enumerate(gam.columns):
            assert abs(X[:, j].mean() - col.a) <= 4 * col.b / math.sqrt(n)

    def test_reproducible(self):
        gam = sample_ground_truth(4, "sine", "normal", np.random.default_rng(0))
        a = sample_dataset(gam, 100, np.random.default_rng(3)).values
        b = sample_dataset(gam, 100, np.random.default_rng(3)).values
        assert a.tobytes() == b.tobytes()

    def test_too_small(self):
        gam = sample_ground_truth(2, "sine", "normal", np.random.default_rng(0))
        with pytest.raises(ValueError):
            sample_dataset(gam, 1, np.random.default_rng(0))


class TestModelAndOracles:
    @given(st.integers(1, 12), st.integers(0, 2**31))
    def test_model_equals_term_sum(self, d, seed):
        rng = np.random.default_rng(seed)
        gam = sample_ground_truth(d, "mixed", "normal", rng)
        X = rng.normal(1.0, 1.0, size=(20, d))
        np.testing.assert_allclose(gam.to_model().predict(X), reference_eval(gam, X), rtol=1e-12, atol=1e-12)

    def test_importance_examples(self):
        gam = GroundTruthGAM(3, ((0, 1), (2,)), ("product", "product"), ((2.0, 1.5), (-1.0,)),
                             (Column("uniform", 0, 3),) * 3)
        assert ground_truth_importance(gam, [1.0, 2.0, 4.0]) == [6.0, -4.0]
        assert feature_importance(gam, [1.0, 2.0, 4.0]) == [6.0, 6.0, -4.0]

    @given(st.integers(0, 2**31))
    def test_importance_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        gam = sample_ground_truth(int(rng.integers(1, 7)), "product", "normal", rng)
        gam = GroundTruthGAM(gam.d, gam.partition, gam.kinds, gam.coeffs, gam.columns)
        small = [k for k, p in enumerate(gam.partition) if len(p) <= 3]
        x = rng.uniform(-2, 2, size=gam.d)
        model = gam.to_model()
        f = lambda pt: float(model.predict(pt[None, :])[0])
        oracle = ground_truth_importance(gam, x)
        for k in small:
            part = gam.partition[k]
            fd = mixed_partial(f, x, part) * math.prod(x[j] for j in part)
            assert fd == pytest.approx(oracle[k], abs=1e-6)

    def test_sine_oracle_undefined(self):
        gam = sample_ground_truth(4, "sine", "normal", np.random.default_rng(0))
        with pytest.raises(ValueError, match="oracle undefined for this kind"):
            ground_truth_importance(gam, np.zeros(4))

    @pytest.mark.parametrize("dist", ["normal", "uniform"])
    def test_exact_value_matches_monte_carlo(self, dist):
        rng = np.random.default_rng(4)
        gam = sample_ground_truth(6, "mixed", dist, rng)
        X = sample_dataset(gam, 400000, rng).values
        x = X[0].copy()
        model = gam.to_model()
        y_all = model.predict(X)
        for S in [(0,), (1, 3), (0, 2, 4, 5)]:
            pts = X.copy()
            pts[:, list(S)] = x[list(S)]
            y = model.predict(pts)
            mc = y.mean() - y_all.mean()
            se = math.sqrt(y.var() / len(y) + y_all.var() / len(y_all))
            assert gam.exact_value(x, S) == pytest.approx(mc, abs=5 * se + 1e-9)

    def test_exact_value_full_set(self):
        gam = sample_ground_truth(5, "mixed", "uniform", np.random.default_rng(6))
        x = np.full(5, 1.2)
        fx = float(gam.to_model().predict(x[None, :])[0])
        assert gam.exact_value(x, range(5)) == pytest.approx(fx - gam.mean_output(), abs=1e-12)
        assert gam.exact_value(x, ()) == 0.0

    @given(st.integers(1, 10), st.integers(0, 2**31))
    def test_permutation_relabels(self, d, seed):
        rng = np.random.default_rng(seed)
        gam = sample_ground_truth(d, "mixed", "normal", rng)
        perm = rng.permutation(d)
        moved = permute_features(gam, perm)
        X = rng.normal(size=(10, d))
        Y = np.empty_like(X)
        Y[:, perm] = X
        np.testing.assert_allclose(moved.to_model().predict(Y), gam.to_model().predict(X), rtol=1e-12, atol=1e-12)
        assert [moved.columns[perm[j]] for j in range(d)] == list(gam.columns)

    def test_spec_round_trip(self):
        from ishap.model import parse_model_spec

        gam = sample_ground_truth(7, "mixed", "normal", np.random.default_rng(9))
        spec = parse_model_spec(gam.to_spec().to_dict())
        assert spec.ground_truth_partition == gam.partition
        assert spec.terms == tuple(gam.terms())
