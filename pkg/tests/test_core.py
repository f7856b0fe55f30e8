import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eventorder.core import (
    Dataset,
    DivergenceError,
    EventSequence,
    Label,
    LikelihoodTables,
    MixtureParams,
    ModelConfig,
    SoftPermutation,
    StagePosterior,
    log_sum_exp,
    rng_from_seed,
    spawn_seeds,
    validate_dataset,
)


def small_dataset():
    values = np.array([[0.1, -0.2], [1.5, 2.0], [0.9, np.nan]])
    labels = [Label.CONTROL, Label.PATIENT, Label.UNLABELLED]
    return Dataset(values, labels=labels)


class TestDataset:
    def test_missing_inferred_from_nan(self):
        d = small_dataset()
        assert d.observed[2, 1] == False  # noqa: E712
        assert d.observed.sum() == 5

    def test_shape_properties(self):
        d = small_dataset()
        assert (d.n_individuals, d.n_features) == (3, 2)
        assert d.feature_names == ("feature_0", "feature_1")

    def test_arrays_are_immutable(self):
        d = small_dataset()
        with pytest.raises(ValueError):
            d.values[0, 0] = 7.0

    def test_validate_accepts_good_data(self):
        validate_dataset(small_dataset())

    def test_validate_rejects_missing_group(self):
        d = Dataset(np.ones((2, 2)), labels=[Label.PATIENT, Label.PATIENT])
        with pytest.raises(ValueError, match="control"):
            validate_dataset(d)
        d = Dataset(np.ones((2, 2)), labels=[Label.CONTROL, Label.UNLABELLED])
        with pytest.raises(ValueError, match="patient"):
            validate_dataset(d)

    def test_validate_rejects_wrong_label_count(self):
        d = Dataset(np.ones((3, 2)), labels=[Label.CONTROL, Label.PATIENT])
        with pytest.raises(ValueError, match="label"):
            validate_dataset(d)

    def test_validate_rejects_inf_at_observed_cell(self):
        values = np.array([[np.inf, 0.0], [1.0, 1.0]])
        observed = np.array([[True, True], [True, True]])
        d = Dataset(values, observed=observed, labels=[0, 1])
        with pytest.raises(ValueError, match="non-finite"):
            validate_dataset(d)

    def test_labels_accept_plain_ints(self):
        d = Dataset(np.ones((2, 1)), labels=[0, 1])
        assert d.labels.tolist() == [Label.CONTROL, Label.PATIENT]
        with pytest.raises(ValueError):
            Dataset(np.ones((2, 1)), labels=[0, 7])


class TestMixtureParams:
    def test_rejects_nonpositive_sigma(self):
        one = np.ones(2)
        with pytest.raises(ValueError, match="sigma"):
            MixtureParams(one, np.array([1.0, 0.0]), one, one, 0.5 * one)

    def test_rejects_weight_outside_unit_interval(self):
        one = np.ones(2)
        with pytest.raises(ValueError, match="weight"):
            MixtureParams(one, one, one, one, np.array([0.5, 1.2]))


class TestLikelihoodTables:
    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            LikelihoodTables(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_rejects_nonfinite(self):
        bad = np.array([[0.0, -np.inf]])
        with pytest.raises(DivergenceError):
            LikelihoodTables(bad, np.zeros((1, 2)))


class TestSoftPermutation:
    def test_accepts_uniform_matrix(self):
        s = SoftPermutation(np.full((4, 4), 0.25))
        assert s.is_doubly_stochastic()
        assert s.n == 4

    def test_near_stochastic_within_tolerance(self):
        m = np.full((3, 3), 1 / 3)
        m[0, 0] += 5e-7
        assert SoftPermutation(m).is_doubly_stochastic(tol=1e-5)
        assert not SoftPermutation(m).is_doubly_stochastic(tol=1e-9)

    def test_rejects_negative_and_nonsquare(self):
        with pytest.raises(ValueError):
            SoftPermutation(np.array([[0.5, 0.5], [0.7, -0.2]]))
        with pytest.raises(ValueError):
            SoftPermutation(np.ones((2, 3)))


class TestEventSequence:
    def test_round_trip_positions(self):
        seq = EventSequence([2, 0, 3, 1])
        pos = seq.positions()
        assert pos.tolist() == [1, 3, 0, 2]
        assert seq.order[pos].tolist() == [0, 1, 2, 3]

    def test_matrix_is_permutation(self):
        seq = EventSequence([1, 2, 0])
        m = seq.to_matrix()
        assert m.sum(axis=0).tolist() == [1, 1, 1]
        assert m.sum(axis=1).tolist() == [1, 1, 1]
        assert m[0, 1] == 1.0

    @pytest.mark.parametrize("bad", [[0, 0, 1], [0, 2], [-1, 0], []])
    def test_rejects_non_bijections(self, bad):
        with pytest.raises(ValueError):
            EventSequence(bad)


class TestModelConfig:
    def test_defaults(self):
        cfg = ModelConfig()
        assert cfg.tau == 1.0
        assert cfg.tau_prior == 1.0
        assert cfg.n_s == 20
        assert cfg.n_opt == 200
        assert cfg.learning_rate == 0.1
        assert cfg.use_gumbel_noise is False

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"tau": 0.0},
            {"tau_prior": -1.0},
            {"n_s": 0},
            {"n_opt": 0},
            {"learning_rate": 0.0},
            {"x_init": "magic"},
        ],
    )
    def test_rejects_bad_settings(self, kwargs):
        with pytest.raises(ValueError):
            ModelConfig(**kwargs)


class TestStagePosterior:
    def test_ml_stage(self):
        sp = StagePosterior(np.array([0.1, 0.2, 0.7]))
        assert sp.ml_stage == 2

    def test_rejects_unnormalised(self):
        with pytest.raises(ValueError):
            StagePosterior(np.array([0.5, 0.6]))


class TestLogSumExp:
    def test_matches_direct_evaluation(self):
        v = np.array([-1.0, 0.0, 2.0])
        assert log_sum_exp(v) == pytest.approx(np.log(np.exp(v).sum()), rel=1e-15)

    def test_no_overflow_for_large_inputs(self):
        assert log_sum_exp(np.array([1000.0, 1000.0])) == pytest.approx(
            1000.0 + np.log(2.0)
        )

    def test_all_neg_inf(self):
        assert log_sum_exp(np.array([-np.inf, -np.inf])) == -np.inf

    def test_axis_reduction(self):
        m = np.array([[0.0, 0.0], [1.0, -np.inf]])
        got = log_sum_exp(m, axis=1)
        assert got[0] == pytest.approx(np.log(2.0))
        assert got[1] == pytest.approx(1.0)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            log_sum_exp(np.array([]))

    @given(
        arrays(
            np.float64,
            st.integers(1, 30),
            elements=st.floats(-50, 50, allow_nan=False),
        )
    )
    def test_bounds_and_shift_invariance(self, v):
        lse = log_sum_exp(v)
        assert v.max() <= lse <= v.max() + np.log(len(v)) + 1e-12
        assert log_sum_exp(v + 3.5) == pytest.approx(lse + 3.5, abs=1e-9)


class TestRng:
    def test_same_seed_same_stream(self):
        a = rng_from_seed(7).standard_normal(5)
        b = rng_from_seed(7).standard_normal(5)
        assert (a == b).all()

    def test_generator_passthrough(self):
        g = rng_from_seed(3)
        assert rng_from_seed(g) is g

    def test_spawned_seeds_are_independent(self):
        s = spawn_seeds(11, 3)
        draws = [np.random.default_rng(x).integers(0, 1 << 30) for x in s]
        assert len(set(int(v) for v in draws)) == 3
