import numpy as np
import pytest
from hypothesis import given, strategies as st

from nmcdetect import detectors as det
from nmcdetect.detectors import CONVENTIONAL, PROPOSED, DetectorKind, evaluate, parse_kind
from nmcdetect.errors import DegenerateDataError, ParameterDomainError
from nmcdetect.stats import compute_sufficient_stats, estimate_alpha

from conftest import cn, random_batch

CANONICAL = {
    "sglrt-nmc": det.sglrt_nmc,
    "srao-nmc": det.srao_nmc,
    "samf-nmc": det.samf_nmc,
    "gradient-nmc": det.gradient_nmc,
}


def _canon(x, X, A):
    s = compute_sufficient_stats(x, X, A)
    return {k: float(f(s)) for k, f in CANONICAL.items()}


@pytest.mark.parametrize("name,kind", [
    ("sglrt-nmc", DetectorKind.SGLRT_NMC),
    ("SRAO_NMC", DetectorKind.SRAO_NMC),
    (" samf ", DetectorKind.SAMF),
    (DetectorKind.SGLRT, DetectorKind.SGLRT),
])
def test_parse_kind(name, kind):
    assert parse_kind(name) is kind


def test_parse_kind_unknown():
    with pytest.raises(ParameterDomainError, match="unknown detector"):
        parse_kind("kelly")


def test_kind_partition():
    assert all(k.has_analytic and not k.is_conventional for k in PROPOSED)
    assert all(k.is_conventional and not k.has_analytic for k in CONVENTIONAL)


class TestFullForms:
    """The matrix expressions reduce to the canonical ones up to constants."""

    @pytest.mark.parametrize("N,p,L", [(4, 1, 8), (6, 2, 14), (12, 3, 24)])
    def test_glrt(self, rng, N, p, L):
        x, X, A = random_batch(rng, N, p, L)
        assert det.sglrt_nmc_full(x, X, A) == pytest.approx(1 + _canon(x, X, A)["sglrt-nmc"],
                                                            rel=1e-8)

    @pytest.mark.parametrize("N,p,L", [(4, 1, 8), (6, 2, 14), (12, 3, 24)])
    def test_rao(self, rng, N, p, L):
        x, X, A = random_batch(rng, N, p, L)
        assert det.srao_nmc_full(x, X, A) == pytest.approx(
            L / (L + 1) * _canon(x, X, A)["srao-nmc"], rel=1e-8)

    @pytest.mark.parametrize("N,p,L", [(4, 1, 8), (6, 2, 14), (12, 3, 24)])
    def test_wald(self, rng, N, p, L):
        x, X, A = random_batch(rng, N, p, L)
        assert det.samf_nmc_full(x, X, A) == pytest.approx(L * _canon(x, X, A)["samf-nmc"],
                                                           rel=1e-8)

    @pytest.mark.parametrize("N,p,L", [(4, 1, 8), (6, 2, 14)])
    def test_durbin_equals_rao(self, rng, N, p, L):
        x, X, A = random_batch(rng, N, p, L)
        assert det.durbin_nmc(x, X, A) == pytest.approx(det.srao_nmc_full(x, X, A), rel=1e-8)

    def test_h1_estimates_minimise_logdet(self, rng):
        """The H1 mean/coordinate estimates minimise the residual log-determinant."""
        N, p, L = 6, 2, 14
        x, X, A = random_batch(rng, N, p, L)
        s = compute_sufficient_stats(x, X, A)
        alpha = estimate_alpha(s, A)
        mu1 = s.mu_hat0 - A @ alpha / (L + 1)

        def logdet(mu, a):
            D = np.concatenate([(x - A @ a - mu)[:, None], X - mu[:, None]], axis=1)
            return np.linalg.slogdet(D @ D.conj().T)[1]

        best = logdet(mu1, alpha)
        for _ in range(50):
            dm, da = 1e-3 * cn(rng, N), 1e-3 * cn(rng, p)
            assert logdet(mu1 + dm, alpha + da) > best
        # and the information matrix uses exactly that covariance
        r = x - A @ alpha - mu1
        D = X - mu1[:, None]
        R1 = (np.outer(r, r.conj()) + D @ D.conj().T) / (L + 1)
        np.testing.assert_allclose(det.wald_information(x, X, A),
                                   A.conj().T @ np.linalg.solve(R1, A), rtol=1e-9)

    def test_singular_training(self, rng):
        x, X, A = random_batch(rng, 6, 2, 3)
        with pytest.raises(np.linalg.LinAlgError):
            det.sglrt_nmc_full(x, X, A)
        with pytest.raises(np.linalg.LinAlgError):
            det.samf_nmc_full(x, X, A)

    def test_shape_check(self, rng):
        with pytest.raises(ParameterDomainError):
            det.srao_nmc_full(cn(rng, 4), cn(rng, 5, 9), cn(rng, 4, 1))


def test_glrt_rank1_reduces_to_gradient_form(rng):
    """With p = 1 the rank-one GLRT equals q2 / (1 + q1)."""
    x, X, A = random_batch(rng, 6, 1, 14)
    s = compute_sufficient_stats(x, X, A)
    assert det.glrt_nmc_rank1(s, A[:, 0]) == pytest.approx(float(det.gradient_nmc(s)), rel=1e-9)


def test_ordering_of_canonical_forms(rng):
    for _ in range(20):
        c = _canon(*random_batch(rng, 8, 3, 20))
        assert c["srao-nmc"] <= c["sglrt-nmc"]
        assert c["gradient-nmc"] <= c["samf-nmc"] <= c["sglrt-nmc"] + c["samf-nmc"]


@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-1e3, 1e3))
def test_proposed_detectors_ignore_common_offset(seed, shift):
    rng = np.random.default_rng(seed)
    x, X, A = random_batch(rng, 6, 2, 13)
    b = shift * cn(rng, 6)
    c0 = _canon(x, X, A)
    c1 = _canon(x + b, X + b[:, None], A)
    for k in CANONICAL:
        assert c1[k] == pytest.approx(c0[k], rel=1e-6, abs=1e-10)


@given(seed=st.integers(0, 2**32 - 1))
def test_congruence_invariance(seed):
    """Full-rank G: x -> Gx, X -> GX, A -> GA leaves every statistic unchanged."""
    rng = np.random.default_rng(seed)
    x, X, A = random_batch(rng, 5, 2, 12)
    G = cn(rng, 5, 5) + 2 * np.eye(5)
    c0, c1 = _canon(x, X, A), _canon(G @ x, G @ X, G @ A)
    for k in CANONICAL:
        assert c1[k] == pytest.approx(c0[k], rel=1e-7, abs=1e-10)
    conv0 = det.conventional_detectors(x, X, A)
    conv1 = det.conventional_detectors(G @ x, G @ X, G @ A)
    np.testing.assert_allclose(conv1, conv0, rtol=1e-7)


@given(seed=st.integers(0, 2**32 - 1))
def test_basis_change_invariance(seed):
    """Only the column span of A matters."""
    rng = np.random.default_rng(seed)
    x, X, A = random_batch(rng, 6, 2, 13)
    B = cn(rng, 2, 2) + 2 * np.eye(2)
    c0, c1 = _canon(x, X, A), _canon(x, X, A @ B)
    for k in CANONICAL:
        assert c1[k] == pytest.approx(c0[k], rel=1e-7, abs=1e-10)


class TestConventional:
    def test_oracle(self, rng):
        x, X, A = random_batch(rng, 6, 2, 14)
        S = X @ X.conj().T
        Si = np.linalg.inv(S)
        q1 = np.vdot(x, Si @ x).real
        b = A.conj().T @ Si @ x
        q2 = np.vdot(b, np.linalg.solve(A.conj().T @ Si @ A, b)).real
        t = det.conventional_detectors(x, X, A)
        np.testing.assert_allclose(t, [q2 / (1 + q1 - q2), q2, q2 / ((1 + q1) * (1 + q1 - q2))],
                                   rtol=1e-9)

    def test_mean_sensitivity(self, rng):
        """Unlike the proposed forms, the conventional ones react to a shared offset."""
        x, X, A = random_batch(rng, 6, 2, 13)
        b = 30 * cn(rng, 6)
        t0 = det.conventional_detectors(x, X, A)
        t1 = det.conventional_detectors(x + b, X + b[:, None], A)
        assert not np.allclose(t0, t1, rtol=1e-3)

    def test_singular(self, rng):
        x, X, A = random_batch(rng, 6, 2, 4)
        with pytest.raises(DegenerateDataError):
            det.conventional_detectors(x, X, A)


class TestEvaluate:
    def test_matches_scalar_functions(self, rng):
        draws = [random_batch(rng, 5, 2, 12) for _ in range(4)]
        A = draws[0][2]
        x = np.stack([d[0] for d in draws])
        X = np.stack([d[1] for d in draws])
        kinds = list(DetectorKind)
        if DetectorKind.GLRT_NMC_RANK1 in kinds:
            kinds.remove(DetectorKind.GLRT_NMC_RANK1)
        vals, bad = evaluate(kinds, x, X, A)
        assert not bad.any()
        for i in range(4):
            c = _canon(x[i], X[i], A)
            conv = det.conventional_detectors(x[i], X[i], A)
            assert vals[DetectorKind.SGLRT_NMC][i] == pytest.approx(c["sglrt-nmc"], rel=1e-10)
            assert vals[DetectorKind.SRAO_NMC][i] == pytest.approx(c["srao-nmc"], rel=1e-10)
            assert vals[DetectorKind.DURBIN_NMC][i] == pytest.approx(c["srao-nmc"], rel=1e-10)
            assert vals[DetectorKind.SAMF_NMC][i] == pytest.approx(c["samf-nmc"], rel=1e-10)
            assert vals[DetectorKind.GRADIENT_NMC][i] == pytest.approx(c["gradient-nmc"], rel=1e-10)
            for k, v in zip((DetectorKind.SGLRT, DetectorKind.SAMF, DetectorKind.SRAO), conv):
                assert vals[k][i] == pytest.approx(v, rel=1e-10)

    def test_flags_degenerate_draws(self, rng):
        x, X, A = random_batch(rng, 4, 1, 9)
        Xs = np.stack([X, np.repeat(X[:, :1], 9, axis=1)])
        vals, bad = evaluate(["sglrt-nmc"], np.stack([x, x]), Xs, A)
        assert bad.tolist() == [False, True]
        assert np.isfinite(vals[DetectorKind.SGLRT_NMC][0])


class TestCanonicalIdentities:
    """Relations between the canonical statistics and the loss factor."""

    @pytest.mark.parametrize("N,p", [(6, 1), (6, 3), (12, 3)])
    def test_identities(self, rng, N, p):
        x, X, A = random_batch(rng, N, p, 2 * N)
        s = compute_sufficient_stats(x, X, A)
        t, g = float(det.sglrt_nmc(s)), float(det.gradient_nmc(s))
        assert float(det.srao_nmc(s)) == pytest.approx(s.beta * t / (1 + t), rel=1e-12)
        assert float(det.samf_nmc(s)) == pytest.approx(t / s.beta, rel=1e-12)
        assert t == pytest.approx(g / (1 - g), rel=1e-12)

    @pytest.mark.parametrize("N,p", [(6, 1), (6, 3), (12, 3)])
    def test_h1_information_scales_s2(self, rng, N, p):
        L = 2 * N
        x, X, A = random_batch(rng, N, p, L)
        s = compute_sufficient_stats(x, X, A)
        gram = A.conj().T @ np.linalg.solve(s.S2, A)
        np.testing.assert_allclose(det.wald_information(x, X, A), (L + 1) * gram, rtol=1e-10)
