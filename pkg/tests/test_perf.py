import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special, stats as sps

from nmcdetect import perf
from nmcdetect.errors import ParameterDomainError
from nmcdetect.perf import PerformanceModel, QuadratureConfig

DIMS = [(12, 3, 24), (6, 2, 14), (8, 1, 16), (12, 3, 30)]
PROPOSED = ("sglrt-nmc", "srao-nmc", "samf-nmc")


class TestModel:
    @pytest.mark.parametrize("N,p,L", [(4, 4, 10), (4, 0, 10), (4, 2, 4)])
    def test_domain(self, N, p, L):
        with pytest.raises(ParameterDomainError):
            PerformanceModel(N, p, L)

    def test_from_scr_split(self):
        m = PerformanceModel.from_scr(12, 3, 24, 100.0, 0.25)
        assert (m.rho_theta, m.delta2) == pytest.approx((25.0, 75.0))
        assert m.null() == PerformanceModel(12, 3, 24)

    def test_negative_noncentrality(self):
        with pytest.raises(ParameterDomainError):
            PerformanceModel(6, 2, 14, rho_theta=-1.0)

    def test_quadrature_config(self):
        with pytest.raises(ParameterDomainError):
            QuadratureConfig(rel_tol=0.0)


@pytest.mark.parametrize("k", [1, 2, 5, 20])
@pytest.mark.parametrize("a", [0.0, 0.3, 4.0, 50.0])
def test_IG_is_regularized_upper_gamma(k, a):
    assert perf.inverse_gamma_IG(k, a) == pytest.approx(special.gammaincc(k, a), rel=1e-12,
                                                         abs=1e-300)


def test_IG_domain():
    with pytest.raises(ParameterDomainError):
        perf.inverse_gamma_IG(0, 1.0)
    with pytest.raises(ParameterDomainError):
        perf.inverse_gamma_IG(2, -1.0)


class TestDensities:
    @pytest.mark.parametrize("N,p,L", DIMS)
    def test_null_beta_density(self, N, p, L):
        m = PerformanceModel(N, p, L)
        a, b = m.beta_dofs
        for x in (0.05, 0.3, 0.7, 0.95):
            assert perf.pdf_beta_h0(x, m) == pytest.approx(sps.beta.pdf(x, a, b), rel=1e-10)

    @pytest.mark.parametrize("N,p,L", DIMS)
    @pytest.mark.parametrize("delta2", [0.0, 3.0, 80.0])
    def test_alternative_beta_density_normalized(self, N, p, L, delta2):
        m = PerformanceModel(N, p, L, rho_theta=5.0, delta2=delta2)
        total, _ = integrate.quad(lambda x: perf.pdf_beta_h1(x, m), 0, 1, epsabs=1e-12)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_alternative_density_equals_null_when_no_mismatch(self):
        m = PerformanceModel(12, 3, 24, rho_theta=50.0)
        for x in (0.2, 0.5, 0.9):
            assert perf.pdf_beta_h1(x, m) == pytest.approx(perf.pdf_beta_h0(x, m), rel=1e-12)

    def test_mismatch_shifts_mass_down(self):
        m0 = PerformanceModel(12, 3, 24)
        m1 = PerformanceModel(12, 3, 24, delta2=20.0)
        mean = lambda m: integrate.quad(lambda x: x * perf.pdf_beta_h1(x, m), 0, 1)[0]
        assert mean(m1) < mean(m0)


class TestConditionalCdf:
    @pytest.mark.parametrize("N,p,L", DIMS)
    @pytest.mark.parametrize("eta", [0.01, 0.3, 1.0, 7.0])
    def test_null_is_central_F(self, N, p, L, eta):
        m = PerformanceModel(N, p, L)
        dp, dm = m.f_dofs
        assert perf.cdf_cond_P0(eta, m) == pytest.approx(
            sps.f.cdf(eta * dm / dp, 2 * dp, 2 * dm), rel=1e-10, abs=1e-14)
        assert perf.g_tail(eta, m) == pytest.approx(
            sps.f.sf(eta * dm / dp, 2 * dp, 2 * dm), rel=1e-10, abs=1e-300)

    @pytest.mark.parametrize("N,p,L", DIMS)
    @pytest.mark.parametrize("eta,beta,rho", [(0.5, 0.7, 10.0), (2.0, 0.3, 40.0),
                                              (0.05, 1.0, 3.0), (4.0, 0.9, 150.0)])
    def test_alternative_is_noncentral_F(self, N, p, L, eta, beta, rho):
        m = PerformanceModel(N, p, L, rho_theta=rho)
        dp, dm = m.f_dofs
        oracle = sps.ncf.cdf(eta * dm / dp, 2 * dp, 2 * dm, 2 * beta * rho)
        assert perf.cdf_cond_P1(eta, beta, m) == pytest.approx(oracle, rel=1e-7, abs=1e-12)

    def test_edges(self):
        m = PerformanceModel(6, 2, 14, rho_theta=3.0)
        assert perf.cdf_cond_P1(0.0, 0.5, m) == 0.0
        assert perf.cdf_cond_P1(math.inf, 0.5, m) == 1.0
        assert perf.g_tail(0.0, m) == pytest.approx(1.0)
        assert perf.g_tail(math.inf, m) == 0.0
        with pytest.raises(ParameterDomainError):
            perf.g_tail(-1.0, m)


@pytest.mark.parametrize("N,p,L", DIMS)
@pytest.mark.parametrize("eta", [0.05, 0.5, 2.0])
def test_closed_form_glrt_pfa_matches_integral(N, p, L, eta):
    m = PerformanceModel(N, p, L)
    assert perf.pfa_sglrt_nmc(eta, m) == pytest.approx(perf.pfa_sglrt_nmc_integral(eta, m),
                                                       rel=1e-9)


@pytest.fixture(scope="module")
def draws():
    N, p, L = 12, 3, 24
    m = PerformanceModel(N, p, L)
    a, b = m.beta_dofs
    rng = np.random.default_rng(7)
    n = 400_000
    beta = rng.beta(a, b, n)
    dp, dm = m.f_dofs
    t = rng.f(2 * dp, 2 * dm, n) * dp / dm  # GLRT statistic, independent of beta
    return m, beta, t


class TestPfaOracles:
    """False-alarm probabilities checked by direct simulation of the
    conditional model: beta ~ Beta(a, b), t | beta ~ scaled central F."""

    def test_amf(self, draws):
        m, beta, t = draws
        eta = 1.5
        emp = np.mean(t / beta > eta)
        se = math.sqrt(emp * (1 - emp) / beta.size)
        assert perf.pfa_samf_nmc(eta, m) == pytest.approx(emp, abs=4 * se)

    def test_rao(self, draws):
        m, beta, t = draws
        eta = 0.3
        emp = np.mean(beta * t / (1 + t) > eta)
        se = math.sqrt(emp * (1 - emp) / beta.size)
        assert perf.pfa_srao_nmc(eta, m) == pytest.approx(emp, abs=4 * se)


class TestMonotonicity:
    @pytest.mark.parametrize("kind", PROPOSED)
    def test_pfa_decreasing(self, kind):
        m = PerformanceModel(12, 3, 24)
        grid = np.linspace(0.01, 0.9, 12) if kind == "srao-nmc" else np.geomspace(0.01, 20, 12)
        vals = [perf.pfa(kind, e, m) for e in grid]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("kind", PROPOSED)
    def test_pd_increasing_in_scr(self, kind):
        eta = 0.2 if kind == "srao-nmc" else 1.0
        vals = [perf.pd(kind, eta, PerformanceModel.from_scr(12, 3, 24, s)) for s in
                (0.0, 1.0, 5.0, 20.0, 80.0)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("kind", PROPOSED)
    def test_pd_at_zero_signal_is_pfa(self, kind):
        m = PerformanceModel(12, 3, 24)
        eta = 0.2 if kind == "srao-nmc" else 1.0
        assert perf.pd(kind, eta, m) == pytest.approx(perf.pfa(kind, eta, m), rel=1e-7)


@given(scr=st.floats(0.0, 300.0), cos2=st.floats(0.0, 1.0))
def test_probabilities_in_unit_interval(scr, cos2):
    m = PerformanceModel.from_scr(12, 3, 24, scr, cos2)
    for kind, eta in (("sglrt-nmc", 1.0), ("srao-nmc", 0.3), ("samf-nmc", 1.0)):
        assert 0.0 <= perf.pd(kind, eta, m) <= 1.0


@pytest.mark.parametrize("kind", PROPOSED)
@pytest.mark.parametrize("target", [1e-2, 1e-3, 1e-4])
def test_threshold_inversion(kind, target):
    m = PerformanceModel(12, 3, 24)
    eta = perf.threshold_from_pfa(kind, target, m)
    assert perf.pfa(kind, eta, m) == pytest.approx(target, rel=1e-6)


def test_glrt_threshold_known_value():
    """For p = 1 the tail is (1 + eta)^{-(L-N)}, so eta has a closed form."""
    N, L = 8, 16
    eta = perf.threshold_from_pfa("sglrt-nmc", 1e-3, PerformanceModel(N, 1, L))
    assert eta == pytest.approx(1e-3 ** (-1 / (L - N)) - 1, rel=1e-9)


def test_rao_threshold_domain():
    m = PerformanceModel(12, 3, 24)
    with pytest.raises(ParameterDomainError):
        perf.pfa_srao_nmc(1.0, m)
    with pytest.raises(ParameterDomainError):
        perf.threshold_from_pfa("srao-nmc", 1.5, m)
    with pytest.raises(ParameterDomainError):
        perf.pfa("sglrt", 1.0, m)


def test_mismatch_lowers_glrt_pd():
    eta = perf.threshold_from_pfa("sglrt-nmc", 1e-3, PerformanceModel(12, 3, 24))
    pd = [perf.pd("sglrt-nmc", eta, PerformanceModel.from_scr(12, 3, 24, 100.0, c))
          for c in (1.0, 0.7, 0.4)]
    assert pd[0] > pd[1] > pd[2]
