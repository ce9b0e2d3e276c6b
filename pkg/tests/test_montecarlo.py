import csv
import io
import math

import numpy as np
import pytest

from nmcdetect import montecarlo as mc
from nmcdetect import perf
from nmcdetect.detectors import DetectorKind
from nmcdetect.errors import DegenerateDataError, ParameterDomainError
from nmcdetect.scenario_gen import GenTargets

SMALL = mc.TrialConfig(n_threshold_trials=4000, n_pd_trials=2000, seed=3, target_pfa=1e-2,
                       chunk_size=512, threads=1)


class TestConfig:
    def test_defaults(self):
        c = mc.TrialConfig()
        assert c.pfa_trials == c.n_threshold_trials == 100_000
        assert c.replace(n_pfa_trials=7).pfa_trials == 7

    @pytest.mark.parametrize("kw", [
        dict(n_threshold_trials=5000),  # 5000 * 1e-3 < 10
        dict(target_pfa=0.0),
        dict(seed=-1),
        dict(chunk_size=0),
        dict(threshold_method="exact"),
        dict(threads=0),
        dict(n_pfa_trials=0),
    ])
    def test_rejects(self, kw):
        with pytest.raises(ParameterDomainError):
            mc.TrialConfig(**kw)


def test_default_threads_env(monkeypatch):
    monkeypatch.setenv(mc.THREADS_ENV, "3")
    assert mc.default_threads() == 3
    monkeypatch.setenv(mc.THREADS_ENV, "zero")
    with pytest.raises(ParameterDomainError):
        mc.default_threads()
    monkeypatch.delenv(mc.THREADS_ENV)
    assert mc.default_threads() >= 1


@pytest.mark.parametrize("n,pfa,expected_rank", [(1000, 0.01, 990), (100, 0.1, 90),
                                                 (10, 0.05, 10), (7, 0.5, 4)])
def test_empirical_quantile_order_statistic(n, pfa, expected_rank):
    sample = np.random.default_rng(0).permutation(np.arange(1, n + 1)).astype(float)
    assert mc.empirical_quantile(sample, pfa) == expected_rank


def test_binomial_se():
    assert mc.binomial_se(0.5, 100) == pytest.approx(0.05)
    assert mc.binomial_se(0.0, 100) == 0.0


class TestSampling:
    def test_shapes_and_signal(self, toy_scenario):
        rng = np.random.default_rng(1)
        x0, X0 = mc.sample_clutter_batch(toy_scenario, 5, rng, "h0")
        assert x0.shape == (5, 6) and X0.shape == (5, 6, 14)
        x1, X1 = mc.sample_clutter_batch(toy_scenario, 5, np.random.default_rng(1), "h1")
        np.testing.assert_allclose(x1 - toy_scenario.signal, mc.sample_clutter_batch(
            toy_scenario, 5, np.random.default_rng(1), "h0")[0])
        np.testing.assert_array_equal(X1, mc.sample_clutter_batch(
            toy_scenario, 5, np.random.default_rng(1), "h0")[1])

    def test_moments(self, toy_scenario):
        x, X = mc.sample_clutter_batch(toy_scenario, 50_000, np.random.default_rng(2), "h0")
        v = X[:, :, 0]
        np.testing.assert_allclose(v.mean(axis=0), toy_scenario.mu, atol=0.03)
        d = v - toy_scenario.mu
        np.testing.assert_allclose(d.T @ d.conj() / len(d), toy_scenario.R, atol=0.03)
        # circular symmetry: pseudo-covariance vanishes
        np.testing.assert_allclose(d.T @ d / len(d), 0, atol=0.03)

    def test_bad_hypothesis(self, toy_scenario):
        with pytest.raises(ParameterDomainError):
            mc.sample_clutter_batch(toy_scenario, 1, 0, "h2")


class TestDeterminism:
    def test_independent_of_thread_count(self, toy_scenario):
        kinds = ["sglrt-nmc", "samf"]
        a = mc.simulate_statistics(kinds, toy_scenario, 3000, SMALL.replace(threads=1))
        b = mc.simulate_statistics(kinds, toy_scenario, 3000, SMALL.replace(threads=4))
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])

    def test_seed_and_stream_change_draws(self, toy_scenario):
        base = mc.simulate_statistics(["samf-nmc"], toy_scenario, 600, SMALL)
        other_seed = mc.simulate_statistics(["samf-nmc"], toy_scenario, 600, SMALL.replace(seed=4))
        other_stream = mc.simulate_statistics(["samf-nmc"], toy_scenario, 600, SMALL,
                                              stream=mc.STREAM_H0_EVAL)
        k = DetectorKind.SAMF_NMC
        assert not np.array_equal(base[k], other_seed[k])
        assert not np.array_equal(base[k], other_stream[k])

    def test_prefix_stability(self, toy_scenario):
        """Extending n reuses the earlier chunks unchanged."""
        k = DetectorKind.SGLRT_NMC
        short = mc.simulate_statistics([k], toy_scenario, 1024, SMALL)[k]
        long = mc.simulate_statistics([k], toy_scenario, 2048, SMALL)[k]
        np.testing.assert_array_equal(long[:1024], short)


def test_redraw_budget(monkeypatch, toy_scenario):
    def all_bad(kinds, x, X_L, A):
        return {k: np.zeros(len(x)) for k in kinds}, np.ones(len(x), dtype=bool)

    monkeypatch.setattr(mc, "evaluate", all_bad)
    with pytest.raises(DegenerateDataError, match="re-draw budget"):
        mc.simulate_statistics(["sglrt-nmc"], toy_scenario, 100, SMALL)


def test_redraw_replaces_flagged_draws(monkeypatch, toy_scenario):
    from nmcdetect import detectors
    calls = {"n": 0}

    def first_bad(kinds, x, X_L, A):
        vals, bad = detectors.evaluate(kinds, x, X_L, A)
        if calls["n"] == 0:
            bad = bad.copy()
            bad[0] = True
        calls["n"] += 1
        return vals, bad

    monkeypatch.setattr(mc, "evaluate", first_bad)
    out = mc.simulate_statistics(["sglrt-nmc"], toy_scenario, 200, SMALL)
    assert out[DetectorKind.SGLRT_NMC].size == 200 and calls["n"] == 2


def test_mc_threshold_close_to_analytic(toy_scenario):
    cfg = SMALL.replace(n_threshold_trials=40_000, chunk_size=2048)
    for k in ("sglrt-nmc", "samf-nmc", "srao-nmc"):
        emp = mc.calibrate_threshold_mc(k, toy_scenario, cfg)
        ana = mc.analytic_threshold(k, 6, 2, 14, 1e-2)
        # probability-scale comparison is the natural tolerance
        pfa = perf.pfa(k, emp, perf.PerformanceModel(6, 2, 14))
        assert abs(pfa - 1e-2) < 4 * math.sqrt(1e-2 / 40_000) + 1e-4, (k, emp, ana)


def test_pd_estimate_matches_analytic(toy_scenario):
    cfg = SMALL.replace(n_pd_trials=8000)
    model = perf.PerformanceModel.from_metrics(6, 2, 14, toy_scenario.metrics())
    for k in ("sglrt-nmc", "srao-nmc", "samf-nmc"):
        thr = mc.analytic_threshold(k, 6, 2, 14, 1e-2)
        est, se = mc.estimate_pd_mc(k, toy_scenario, thr, cfg)
        assert abs(est - perf.pd(k, thr, model)) <= 4 * max(se, 1e-3)


class TestTemplate:
    def test_overrides(self):
        t = mc.ScenarioTemplate(N=8, p=2, L=16, geometry_seed=1)
        s, _ = t.build(scr_db=10.0, L=20)
        assert s.L == 20 and s.metrics().scr_db == pytest.approx(10.0)
        with pytest.raises(ParameterDomainError):
            t.build(eps=0.5)

    def test_sweep_spec(self):
        assert mc.SweepSpec("scr_db", [1, 2]).grid == (1.0, 2.0)
        with pytest.raises(ParameterDomainError):
            mc.SweepSpec("snr", [1])
        with pytest.raises(ParameterDomainError):
            mc.SweepSpec("scr_db", [])


@pytest.fixture(scope="module")
def curves():
    tmpl = mc.ScenarioTemplate(N=6, p=2, L=14, geometry_seed=2)
    cfg = SMALL.replace(n_pd_trials=1000)
    return mc.sweep(["sglrt-nmc", "sglrt"], tmpl, mc.SweepSpec("scr_db", (0.0, 15.0)), cfg)


class TestSweep:
    def test_structure(self, curves):
        assert [(c.detector, c.provenance) for c in curves] == [
            ("sglrt-nmc", "monte-carlo"), ("sglrt", "monte-carlo"), ("sglrt-nmc", "analytic")]
        for c in curves:
            np.testing.assert_array_equal(c.values(), [0.0, 15.0])

    def test_pd_rises(self, curves):
        for c in curves:
            assert c.estimates()[1] > c.estimates()[0]

    def test_csv(self, curves):
        rows = list(csv.DictReader(io.StringIO(mc.curves_to_csv(curves))))
        assert tuple(rows[0]) == mc.CSV_COLUMNS
        assert len(rows) == 6
        assert {r["provenance"] for r in rows} == {"monte-carlo", "analytic"}

    def test_gaps_recorded(self):
        tmpl = mc.ScenarioTemplate(N=6, p=2, L=14, geometry_seed=2,
                                   targets=GenTargets(max_residual=0.0))
        curves = mc.sweep(["samf-nmc"], tmpl, mc.SweepSpec("cos2_phi", (0.37,)),
                          SMALL.replace(n_pd_trials=100))
        assert all(not c.points and len(c.gaps) == 1 for c in curves)
        text = mc.curves_to_csv(curves)
        assert "nan" in text

    def test_pfa_metric(self):
        tmpl = mc.ScenarioTemplate(N=6, p=2, L=14, geometry_seed=2)
        curves = mc.sweep(["samf-nmc", "samf"], tmpl, mc.SweepSpec("xi_db", (0.0, 30.0)),
                          SMALL.replace(n_pfa_trials=4000), metric="pfa")
        an = [c for c in curves if c.provenance == "analytic"][0]
        np.testing.assert_allclose(an.estimates(), 1e-2, rtol=1e-6)
        for c in curves:
            assert c.metric == "pfa"

    def test_bad_metric(self):
        with pytest.raises(ParameterDomainError):
            mc.sweep(["samf"], mc.ScenarioTemplate(), mc.SweepSpec("L", (24,)), SMALL, metric="x")
