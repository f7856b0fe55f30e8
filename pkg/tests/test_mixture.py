import numpy as np
import pytest

from eventorder.core import Dataset, Label
from eventorder.mixture import _fit_feature, _log_normal, build_tables, fit_mixtures


def two_group_dataset(rng, n=400, mu_p=2.0, sigma=0.3):
    half = n // 2
    values = np.concatenate(
        [rng.normal(0.0, sigma, half), rng.normal(mu_p, sigma, half)]
    )[:, None]
    labels = np.array([Label.CONTROL] * half + [Label.PATIENT] * half)
    return Dataset(values, labels=labels)


class TestFitMixtures:
    def test_recovers_separated_components(self):
        d = two_group_dataset(np.random.default_rng(0))
        m = fit_mixtures(d)
        assert m.mu_c[0] == pytest.approx(0.0, abs=0.1)
        assert m.mu_p[0] == pytest.approx(2.0, abs=0.1)
        assert m.sigma_c[0] == pytest.approx(0.3, abs=0.1)
        assert m.sigma_p[0] == pytest.approx(0.3, abs=0.1)
        assert m.w[0] == pytest.approx(0.5, abs=0.1)

    def test_unlabelled_values_inform_the_fit(self):
        rng = np.random.default_rng(1)
        values = np.concatenate(
            [rng.normal(0, 0.3, 20), rng.normal(2, 0.3, 20), rng.normal(2, 0.3, 200)]
        )[:, None]
        labels = [Label.CONTROL] * 20 + [Label.PATIENT] * 20 + [Label.UNLABELLED] * 200
        m = fit_mixtures(Dataset(values, labels=labels))
        assert m.mu_p[0] == pytest.approx(2.0, abs=0.1)
        assert m.w[0] > 0.7  # weight reflects the pooled data, not the labels

    def test_constant_feature_rejected(self):
        values = np.zeros((10, 1))
        labels = [Label.CONTROL] * 5 + [Label.PATIENT] * 5
        with pytest.raises(ValueError, match="constant"):
            fit_mixtures(Dataset(values, labels=labels))

    def test_identical_features_get_identical_params(self):
        d1 = two_group_dataset(np.random.default_rng(3), n=100)
        values = np.repeat(d1.values, 2, axis=1)
        m = fit_mixtures(Dataset(values, labels=d1.labels))
        for f in (m.mu_c, m.sigma_c, m.mu_p, m.sigma_p, m.w):
            assert f[0] == f[1]

    def test_requires_two_observed_per_group(self):
        values = np.array([[0.0], [0.1], [2.0], [np.nan]])
        labels = [Label.CONTROL, Label.CONTROL, Label.PATIENT, Label.PATIENT]
        with pytest.raises(ValueError, match="observed control"):
            fit_mixtures(Dataset(values, labels=labels))

    def test_sigma_respects_floor(self):
        rng = np.random.default_rng(4)
        # abnormal values nearly constant: sigma_p collapses to the floor
        values = np.concatenate([rng.normal(0, 1.0, 50), np.full(50, 3.0) + rng.normal(0, 1e-9, 50)])[:, None]
        labels = [Label.CONTROL] * 50 + [Label.PATIENT] * 50
        m = fit_mixtures(Dataset(values, labels=labels))
        floor = 1e-3 * values.std()
        assert m.sigma_p[0] >= floor * (1 - 1e-12)
        assert m.sigma_c[0] >= floor * (1 - 1e-12)

    def test_em_loglik_nondecreasing(self):
        rng = np.random.default_rng(5)
        v = np.concatenate([rng.normal(0, 0.5, 80), rng.normal(1.5, 0.7, 120)])
        trace = _fit_feature(v, v[:80], v[80:], 200, 0.0)[5]
        diffs = np.diff(trace)
        assert (diffs >= -1e-9 * (1 + np.abs(trace[:-1]))).all()
        assert len(trace) == 200  # tol 0 forces the full run

    def test_convergence_tolerance_stops_early(self):
        rng = np.random.default_rng(6)
        v = np.concatenate([rng.normal(0, 0.5, 80), rng.normal(3, 0.5, 80)])
        trace = _fit_feature(v, v[:80], v[80:], 200, 1e-6)[5]
        assert len(trace) < 200
        assert abs(trace[-1] - trace[-2]) < 1e-6


class TestBuildTables:
    def test_peak_log_density(self):
        values = np.array([[0.0], [1.0]])
        d = Dataset(values, labels=[Label.CONTROL, Label.PATIENT])
        from eventorder.core import MixtureParams

        m = MixtureParams(
            mu_c=np.array([0.0]),
            sigma_c=np.array([1.0]),
            mu_p=np.array([1.0]),
            sigma_p=np.array([1.0]),
            w=np.array([0.5]),
        )
        t = build_tables(d, m)
        assert t.log_c[0, 0] == pytest.approx(-0.5 * np.log(2 * np.pi), rel=1e-14)
        assert t.log_p[1, 0] == pytest.approx(-0.5 * np.log(2 * np.pi), rel=1e-14)

    def test_missing_cells_are_zero_in_both(self):
        values = np.array([[0.3, np.nan], [1.2, 0.7]])
        d = Dataset(values, labels=[Label.CONTROL, Label.PATIENT])
        m = fit_mixtures_stub()
        t = build_tables(d, m)
        assert t.log_p[0, 1] == 0.0
        assert t.log_c[0, 1] == 0.0
        assert t.log_p[1, 1] != 0.0

    def test_matches_direct_density_formula(self):
        rng = np.random.default_rng(7)
        values = rng.normal(size=(3, 2))
        d = Dataset(values, labels=[Label.CONTROL, Label.PATIENT, Label.UNLABELLED])
        m = fit_mixtures_stub()
        t = build_tables(d, m)
        for i in range(3):
            for j in range(2):
                want_p = np.log(
                    np.exp(-0.5 * ((values[i, j] - m.mu_p[j]) / m.sigma_p[j]) ** 2)
                    / (m.sigma_p[j] * np.sqrt(2 * np.pi))
                )
                assert t.log_p[i, j] == pytest.approx(want_p, rel=1e-12)

    def test_pure_function_byte_identical(self):
        d = two_group_dataset(np.random.default_rng(8), n=60)
        m = fit_mixtures(d)
        t1 = build_tables(d, m)
        t2 = build_tables(d, m)
        assert (t1.log_p == t2.log_p).all()
        assert (t1.log_c == t2.log_c).all()

    def test_feature_count_mismatch(self):
        d = two_group_dataset(np.random.default_rng(9), n=20)
        m = fit_mixtures_stub()  # 2 features vs 1 in d
        with pytest.raises(ValueError, match="features"):
            build_tables(d, m)


def fit_mixtures_stub():
    from eventorder.core import MixtureParams

    return MixtureParams(
        mu_c=np.array([0.0, 0.1]),
        sigma_c=np.array([1.0, 0.8]),
        mu_p=np.array([1.5, 2.0]),
        sigma_p=np.array([0.9, 1.1]),
        w=np.array([0.5, 0.4]),
    )


def test_log_normal_matches_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(10)
    v = rng.normal(size=50)
    got = _log_normal(v, 0.7, 1.3)
    want = scipy_stats.norm.logpdf(v, 0.7, 1.3)
    assert np.abs(got - want).max() < 1e-12
