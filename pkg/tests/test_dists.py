"""
Analytical SNR laws: SNCCS kernels, the G2A family, moment matching and the A2G laws
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, special, stats

from risage import dists, specfun
from risage.dists import A2gParams, G2aParams, MixtureWeights, SnccsParams
from risage.errors import InvalidArgumentError, MatchingError, SingularInputError

G2A_CASES = [
    G2aParams(antennas=1, k_factor=0.0, correlation=0.5, mean_snr=3.0),
    G2aParams(antennas=2, k_factor=1.5, correlation=0.9, mean_snr=1.0),
    G2aParams(antennas=4, k_factor=3.16, correlation=0.5, mean_snr=10.0),
    G2aParams(antennas=4, k_factor=0.0, correlation=0.3, mean_snr=0.7),
]


def g2a_pdf_by_gain_quadrature(g: G2aParams, x: float) -> float:
    """
    Density of gamma |rho ||h_hat|| + rho_bar z|^2 averaged over T = ||h_hat||^2,
    where 2 (kappa + 1) T is non-central chi-square with 2M degrees of freedom.
    """
    M, k, rho = g.antennas, g.k_factor, g.correlation
    d1 = g.delta1
    c = 2.0 * (k + 1.0)

    def gain_pdf(t):
        if k == 0.0:
            return stats.gamma.pdf(t, M)
        return c * stats.ncx2.pdf(c * t, 2 * M, 2 * M * k)

    def integrand(t):
        mean_part = g.mean_snr * rho * rho * t
        arg = 2.0 * math.sqrt(x * mean_part) / d1
        # conditional density of a scaled non-central chi-square with 2 degrees of freedom
        cond = math.exp(-((math.sqrt(x) - math.sqrt(mean_part)) ** 2) / d1) * special.ive(0, arg) / d1
        return gain_pdf(t) * cond

    value, _ = integrate.quad(integrand, 0.0, np.inf, limit=400, epsabs=1e-14, epsrel=1e-11)
    return value


# ---------------------------------------------------------------- SNCCS

def test_snccs_matches_scaled_noncentral_chi_square():
    p = SnccsParams(scale=1.7, dof=2.5, noncentrality=3.2)
    x = np.array([0.05, 0.5, 2.0, 6.0, 15.0])
    assert_allclose(dists.snccs_pdf(p, x), 2.0 / 1.7 * stats.ncx2.pdf(2 * x / 1.7, 5.0, 6.4), rtol=1e-9)
    assert_allclose(dists.snccs_cdf(p, x), stats.ncx2.cdf(2 * x / 1.7, 5.0, 6.4), rtol=1e-9)
    assert_allclose(dists.snccs_sf(p, x), stats.ncx2.sf(2 * x / 1.7, 5.0, 6.4), rtol=1e-9)


def test_snccs_central_case_is_gamma():
    p = SnccsParams(scale=2.0, dof=3.0)
    x = np.linspace(0.1, 20.0, 15)
    assert_allclose(dists.snccs_pdf(p, x), stats.gamma.pdf(x, 3.0, scale=2.0), rtol=1e-12)
    assert dists.snccs_pdf(p, 0.0) == 0.0
    assert dists.snccs_pdf(SnccsParams(scale=2.0, dof=1.0), 0.0) == pytest.approx(0.5)


def test_snccs_cumulants_match_scipy():
    p = SnccsParams(scale=0.8, dof=1.4, noncentrality=2.1)
    mean, var, third = dists.snccs_cumulants(p)
    m, v, skew = stats.ncx2.stats(2.8, 4.2, moments="mvs")
    assert mean == pytest.approx(0.4 * m)
    assert var == pytest.approx(0.16 * v)
    assert third == pytest.approx(skew * v**1.5 * 0.4**3)


def test_snccs_normalization():
    p = SnccsParams(scale=1.3, dof=0.7, noncentrality=4.0)
    total, _ = integrate.quad(lambda t: dists.snccs_pdf(p, t), 0.0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_snccs_rejects_negative_argument():
    with pytest.raises(InvalidArgumentError):
        dists.snccs_pdf(SnccsParams(scale=1.0, dof=1.0), -1.0)


def test_mixture_weights_must_sum_to_one():
    assert MixtureWeights.from_p_los(0.25).p_nlos == pytest.approx(0.75)
    with pytest.raises(ValueError):
        MixtureWeights(p_los=0.5, p_nlos=0.6)


# ---------------------------------------------------------------- G2A

def test_single_antenna_rayleigh_is_exponential_for_any_rho():
    for rho in (0.0, 0.5, 0.9, 1.0):
        g = G2aParams(antennas=1, k_factor=0.0, correlation=rho, mean_snr=2.5)
        x = np.linspace(0.0, 12.0, 13)
        assert_allclose(dists.g2a_pdf_los(g, x), np.exp(-x / 2.5) / 2.5, rtol=1e-12)


@pytest.mark.parametrize("g", G2A_CASES)
def test_g2a_pdf_matches_gain_quadrature(g):
    for x in (0.05 * g.mean_snr, 0.7 * g.mean_snr, 2.0 * g.antennas * g.mean_snr):
        assert dists.g2a_pdf_los(g, x) == pytest.approx(g2a_pdf_by_gain_quadrature(g, x), rel=1e-7)


@pytest.mark.parametrize("g", G2A_CASES)
def test_g2a_pdf_normalization(g):
    total, _ = integrate.quad(lambda t: dists.g2a_pdf_los(g, t), 0.0, np.inf, limit=200, epsabs=1e-12)
    assert total == pytest.approx(1.0, abs=1e-7)


def test_g2a_perfect_csi_limit():
    g = G2aParams(antennas=4, k_factor=3.16, correlation=1.0, mean_snr=10.0)
    x = np.linspace(0.5, 100.0, 20)
    scale = 10.0 / 4.16
    expected = dists.snccs_pdf(SnccsParams(scale=scale, dof=4.0, noncentrality=4 * 3.16), x)
    assert_allclose(dists.g2a_pdf_los(g, x), expected, rtol=1e-10)
    assert_allclose(dists.g2a_cdf_los(g, x), stats.ncx2.cdf(2 * x / scale, 8, 8 * 3.16), rtol=1e-8)

    nearly = g.model_copy(update={"correlation": 1.0 - 1e-9})
    assert_allclose(dists.g2a_pdf_los(nearly, x), expected, rtol=1e-6)


def test_g2a_nlos_ignores_k_factor():
    g = G2aParams(antennas=3, k_factor=5.0, correlation=0.6, mean_snr=2.0)
    x = np.linspace(0.1, 10.0, 7)
    assert_allclose(dists.g2a_pdf_nlos(g, x), dists.g2a_pdf_los(g.as_nlos(), x))


def test_g2a_mixture_is_convex_combination():
    g_los = G2A_CASES[2]
    g_nlos = g_los.model_copy(update={"mean_snr": 2.0})
    w = MixtureWeights.from_p_los(0.7)
    x = np.linspace(0.1, 40.0, 9)
    expected = 0.7 * np.asarray(dists.g2a_pdf_los(g_los, x)) + 0.3 * np.asarray(dists.g2a_pdf_nlos(g_nlos, x))
    assert_allclose(dists.g2a_pdf_mixture(g_los, g_nlos, w, x), expected)
    cdf = dists.g2a_cdf_mixture(g_los, g_nlos, w, np.array([0.0, 1e6]))
    assert_allclose(cdf, [0.0, 1.0], atol=1e-12)


def test_g2a_asymptote_is_the_density_at_the_origin():
    g = G2A_CASES[2]
    plateau = dists.g2a_pdf_asymptotic(g, los=True)
    assert plateau == pytest.approx(dists.g2a_pdf_los(g, 1e-9), rel=1e-6)
    assert dists.g2a_pdf_asymptotic(g, los=False) == pytest.approx(dists.g2a_pdf_nlos(g, 1e-9), rel=1e-6)


def test_g2a_cdf_upper_is_linear_and_clamped():
    g_los = G2A_CASES[2]
    g_nlos = G2A_CASES[3]
    w = MixtureWeights.from_p_los(0.6)
    slope = 0.6 * dists.g2a_pdf_asymptotic(g_los, True) + 0.4 * dists.g2a_pdf_asymptotic(g_nlos, False)
    assert dists.g2a_cdf_upper(g_los, g_nlos, w, 1e-3) == pytest.approx(slope * 1e-3)
    assert dists.g2a_cdf_upper(g_los, g_nlos, w, 1e12) == 1.0
    # the linear law tracks the exact CDF at small thresholds
    x = 1e-4
    assert dists.g2a_cdf_upper(g_los, g_nlos, w, x) == pytest.approx(
        dists.g2a_cdf_mixture(g_los, g_nlos, w, x), rel=1e-3
    )


def test_g2a_laplace_matches_numerical_integral():
    g = G2A_CASES[2]
    for s in (0.01, 0.1, 1.0):
        numeric, _ = integrate.quad(
            lambda t: math.exp(-s * t) * dists.g2a_pdf_los(g, t), 0.0, np.inf, limit=200, epsabs=1e-13, epsrel=1e-10
        )
        assert dists.g2a_laplace_los(g, s) == pytest.approx(numeric, rel=1e-7)
    assert dists.g2a_laplace_los(g, 0.0) == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        dists.g2a_laplace_los(g, -1.0)


def test_g2a_laplace_inversion_recovers_density():
    g = G2A_CASES[1]
    x = np.linspace(0.3, 3.0, 10) * g.antennas * g.mean_snr
    inverse = specfun.talbot_inverse(lambda s: dists.g2a_laplace_los(g, s), x)
    assert_allclose(inverse, dists.g2a_pdf_los(g, x), rtol=1e-4)


# ---------------------------------------------------------------- chi moments

def test_alpha_chi():
    assert dists.alpha_chi(0.0, 0.0) == pytest.approx(math.pi / 4)
    assert dists.alpha_chi(0.0, 0.0, "half_pi") == pytest.approx(math.pi / 2)
    strong = dists.alpha_chi(1e4, 1e4)
    assert 0.999 < strong <= 1.0 + 1e-6
    with pytest.raises(InvalidArgumentError):
        dists.alpha_chi(1.0, 1.0, "pi")
    with pytest.raises(InvalidArgumentError):
        dists.alpha_chi(-1.0, 1.0)


def test_chi_moment_bounds():
    mu, sigma2 = dists.chi_moment_bounds(0.5, 16, 0.8)
    assert mu == pytest.approx(0.5 / math.sqrt(0.75) * 4.0 * 0.8)
    assert sigma2 == pytest.approx(1.0 + (0.25 / 0.75) * 16 * 0.36)
    with pytest.raises(SingularInputError):
        dists.chi_moment_bounds(1.0, 16, 0.8)


def test_moment_match_degenerate_point():
    p = dists.moment_match_snccs(0.0, 1.0)
    assert (p.scale, p.dof, p.noncentrality) == pytest.approx((1.0, 1.0, 0.0))


def test_moment_match_unit_variance_is_exact():
    # |mu + w|^2 with w ~ CN(0, 1) is SNCCS(1, 1, mu^2)
    p = dists.moment_match_snccs(2.0, 1.0)
    assert (p.scale, p.dof, p.noncentrality) == pytest.approx((1.0, 1.0, 4.0))


def test_moment_match_reproduces_targets():
    mu, sigma2 = dists.chi_moment_bounds(0.5, 16, 0.8)
    p = dists.moment_match_snccs(mu, sigma2)
    rhs = dists.moment_match_rhs(mu, sigma2)
    lhs = (
        p.scale * (p.dof + p.noncentrality),
        p.scale**2 * (p.dof + 2 * p.noncentrality),
        p.scale**3 * (p.dof + 3 * p.noncentrality),
    )
    assert_allclose(lhs, rhs, rtol=1e-12)
    assert p.dof > 0 and p.noncentrality >= 0


def test_moment_match_without_real_solution():
    with pytest.raises(MatchingError):
        dists.moment_match_snccs(0.0, 2.0)
    with pytest.raises(InvalidArgumentError):
        dists.moment_match_snccs(1.0, 0.0)


# ---------------------------------------------------------------- A2G

def test_a2g_params_follow_the_scenario(density_resolved):
    a_los = dists.a2g_params_for(density_resolved, True)
    a_nlos = dists.a2g_params_for(density_resolved, False)
    assert a_los.elements == 16
    assert a_los.correlation == 0.5
    assert a_los.k_factor_rd == pytest.approx(density_resolved.rd.k_factor_linear)
    assert a_los.alpha == pytest.approx(
        math.pi / 4
        * specfun.laguerre_half(-a_los.k_factor_ur)
        * specfun.laguerre_half(-a_los.k_factor_rd)
        / math.sqrt((a_los.k_factor_ur + 1) * (a_los.k_factor_rd + 1))
    )
    # Rayleigh UAV-RIS estimate in the NLOS state
    assert a_nlos.alpha == pytest.approx(dists.alpha_chi(0.0, a_los.k_factor_rd))
    assert a_nlos.alpha < a_los.alpha
    assert (a_los.moment_source, a_los.spread) == ("delta", "coherent")
    assert a_los.b_n == pytest.approx(16 * 0.25 / 0.75)


def test_a2g_unit_alpha_matches_exactly(density_config):
    from risage.scenario import resolve_scenario, with_overrides

    resolved = resolve_scenario(
        with_overrides(density_config, {"model.a2g_nlos_alpha": "unit", "model.moment_source": "jensen"})
    )
    a_nlos = dists.a2g_params_for(resolved, False)
    assert a_nlos.alpha == 1.0
    p = a_nlos.matched()
    assert (p.scale, p.dof) == pytest.approx((1.0, 1.0))
    assert p.noncentrality == pytest.approx(16 * 0.25 / 0.75)


@pytest.mark.parametrize("kappa", [0.0, 0.5, 1.9, 7.7, 40.0])
def test_rician_envelope_moments(kappa):
    # unit-power Rician envelope as scipy's Rice law
    sigma = math.sqrt(0.5 / (kappa + 1.0))
    nu = math.sqrt(kappa / (kappa + 1.0))
    law = stats.rice(nu / sigma, scale=sigma)
    m1, m3, m4 = dists.rician_envelope_moments(kappa)
    assert_allclose([m1, m3, m4], [law.moment(1), law.moment(3), law.moment(4)], rtol=1e-6)
    if kappa == 0.0:
        assert_allclose([m1, m3, m4], [math.sqrt(math.pi) / 2, 0.75 * math.sqrt(math.pi), 2.0], rtol=1e-12)


@pytest.mark.parametrize("elements", [4, 16, 64])
def test_delta_moments_track_the_exact_mean(elements):
    k_ur, k_rd, rho = 7.7, 1.9, 0.5
    a = A2gParams(elements=elements, k_factor_ur=k_ur, k_factor_rd=k_rd, correlation=rho, mean_snr=1.0)
    alpha = dists.rician_envelope_moments(k_ur)[0] * dists.rician_envelope_moments(k_rd)[0]
    assert a.alpha == pytest.approx(alpha, rel=1e-9)
    # E SNR / gamma = rho_bar^2 N + rho^2 (N + N (N - 1) alpha^2)
    exact = 0.75 * elements + 0.25 * (elements + elements * (elements - 1) * alpha**2)
    mu, sigma2 = a.moments()
    assert 0.75 * elements * (mu * mu + sigma2) == pytest.approx(exact, rel=0.01)
    # the delta variance stays O(1) in N
    assert 1.0 < sigma2 < 1.0 + 0.25 / 0.75


def test_jensen_moments_overstate_the_mean():
    a = A2gParams(elements=64, k_factor_ur=7.7, k_factor_rd=1.9, correlation=0.5, mean_snr=1.0, moment_source="jensen")
    exact = 0.75 * 64 + 0.25 * (64 + 64 * 63 * a.alpha**2)
    mu, sigma2 = a.moments()
    assert 0.75 * 64 * (mu * mu + sigma2) > 1.1 * exact


def test_delta_moments_of_a_single_element():
    mu, sigma2 = dists.chi_moments_delta(0.6, 1, 3.0, 1.0)
    n1 = dists.rician_envelope_moments(3.0)[0]
    assert mu == pytest.approx(0.75 * n1)
    assert sigma2 == pytest.approx(1.0 + 0.5625 * (1.0 - n1 * n1))
    with pytest.raises(SingularInputError):
        dists.chi_moments_delta(1.0, 16, 3.0, 1.0)


def test_a2g_series_normalization(density_resolved):
    for los in (True, False):
        a = dists.a2g_params_for(density_resolved, los)
        large_n = dists.a2g_large_n_params(a)
        # integrate in u = log x so both the origin and the tail are resolved
        u = np.linspace(math.log(large_n.mean * 1e-14), math.log(large_n.mean * 30.0), 6001)
        x = np.exp(u)
        density = dists.a2g_pdf_los_series(a, x).values
        total = integrate.simpson(density * x, x=u)
        assert total == pytest.approx(1.0, abs=1e-4)


def test_a2g_series_rejects_nonpositive_argument(density_resolved):
    a = dists.a2g_params_for(density_resolved, True)
    with pytest.raises(InvalidArgumentError):
        dists.a2g_pdf_los_series(a, 0.0)
    with pytest.raises(InvalidArgumentError):
        dists.a2g_pdf_los_series(a, 1.0, max_terms=0)


def test_a2g_series_is_singular_without_aging(default_resolved):
    a = dists.a2g_params_for(default_resolved, True)
    with pytest.raises(SingularInputError):
        dists.a2g_pdf_los_series(a, 1.0)


def test_a2g_series_budget_scales_with_the_poisson_mean():
    a = A2gParams(elements=400, k_factor_ur=7.7, k_factor_rd=1.9, correlation=-0.35, mean_snr=1e-3)
    budget = dists.series_term_budget(a)
    assert budget > 400 * 1.9
    x = dists.a2g_large_n_mean(a) * np.array([0.5, 1.0, 1.5])
    result = dists.a2g_pdf_los_series(a, x)
    assert not result.truncated
    assert result.terms_used <= budget
    assert np.all(result.values > 0)
    # a fixed 135-block budget cannot reach the Poisson window
    assert dists.a2g_pdf_los_series(a, x, max_terms=135).truncated
    small = A2gParams(elements=4, k_factor_ur=7.7, k_factor_rd=1.9, correlation=0.5, mean_snr=1.0)
    assert dists.series_term_budget(small) == dists.DEFAULT_SERIES_TERMS


def test_a2g_series_matches_monte_carlo(density_resolved):
    from risage import mcsim

    a = dists.a2g_params_for(density_resolved, True)
    batch = mcsim.draw_batch("a2g", density_resolved, 20240601, 20_000, los_state=True)
    ks = mcsim.ks_statistic(batch, lambda x: dists.a2g_cdf_los_series(a, x))
    assert ks < 0.03


@pytest.mark.slow
@pytest.mark.parametrize("elements", [4, 16])
def test_a2g_series_at_acceptance_scale(density_config, elements):
    from risage import mcsim
    from risage.scenario import resolve_scenario, with_overrides

    resolved = resolve_scenario(with_overrides(density_config, {"ris.elements": elements}))
    a = dists.a2g_params_for(resolved, True)
    batch = mcsim.draw_batch("a2g", resolved, 20240601, 200_000, workers=4, los_state=True)
    assert mcsim.ks_statistic(batch, lambda x: dists.a2g_cdf_los_series(a, x)) < 0.02


@pytest.mark.slow
def test_a2g_large_n_law_tightens_with_elements(density_config):
    from risage import mcsim
    from risage.scenario import resolve_scenario, with_overrides

    distances = []
    for elements in (64, 256, 400):
        resolved = resolve_scenario(with_overrides(density_config, {"ris.elements": elements}))
        a = dists.a2g_params_for(resolved, True)
        batch = mcsim.draw_batch("a2g", resolved, 20240601, 200_000, workers=4, los_state=True)
        distances.append(mcsim.ks_statistic(batch, lambda x: dists.a2g_cdf_large_n(a, x)))
    assert max(distances) < 0.02
    assert all(b <= a + 0.003 for a, b in zip(distances, distances[1:]))


@pytest.mark.slow
def test_a2g_mixture_with_nlos_weight(density_config):
    from risage import linkperf, mcsim
    from risage.scenario import resolve_scenario, with_overrides

    resolved = resolve_scenario(with_overrides(density_config, {"env.p_los_a2g": 0.3}))
    a_los, a_nlos, w = linkperf.a2g_components(resolved)
    assert w.p_los == pytest.approx(0.3)
    batch = mcsim.draw_batch("a2g", resolved, 20240601, 200_000, workers=4)

    def cdf(x):
        return w.p_los * np.asarray(dists.a2g_cdf_los_series(a_los, x)) + w.p_nlos * np.asarray(
            dists.a2g_cdf_los_series(a_nlos, x)
        )

    assert mcsim.ks_statistic(batch, cdf) < 0.02


def test_a2g_large_n_law():
    a = A2gParams(elements=64, k_factor_ur=4.0, k_factor_rd=2.0, correlation=0.8, mean_snr=0.5)
    spread = 0.36 + 2.0 * 0.64 * a.beta
    assert a.spread_factor == pytest.approx(spread)
    p = dists.a2g_large_n_params(a)
    assert p.scale == pytest.approx(spread * 0.5 * 64)
    assert p.dof == 1.0
    assert p.noncentrality == pytest.approx(64 * 0.64 * a.alpha**2 / spread)
    assert dists.a2g_large_n_mean(a) == pytest.approx(0.5 * (64 * spread + 64**2 * 0.64 * a.alpha**2))
    x = np.linspace(1.0, 2000.0, 9)
    assert_allclose(dists.a2g_pdf_large_n(a, x), dists.snccs_pdf(p, x))


def test_a2g_large_n_innovation_spread():
    a = A2gParams(
        elements=64, k_factor_ur=4.0, k_factor_rd=2.0, correlation=0.8, mean_snr=0.5, spread="innovation"
    )
    p = dists.a2g_large_n_params(a)
    assert p.scale == pytest.approx(0.36 * 0.5 * 64)
    assert p.noncentrality == pytest.approx(64 * 0.64 * a.alpha**2 / 0.36)


def test_a2g_large_n_point_mass_without_aging():
    a = A2gParams(
        elements=100, k_factor_ur=4.0, k_factor_rd=2.0, correlation=1.0, mean_snr=0.5, spread="innovation"
    )
    assert dists.a2g_large_n_params(a) is None
    point = dists.a2g_large_n_point_mass(a)
    assert point == pytest.approx(0.5 * (100 * a.alpha) ** 2)
    assert dists.a2g_large_n_mean(a) == point
    assert_allclose(dists.a2g_cdf_large_n(a, np.array([0.5 * point, 2.0 * point])), [0.0, 1.0])
    assert_allclose(dists.a2g_pdf_large_n(a, np.array([1.0, point])), [0.0, 0.0])


def test_a2g_large_n_coherent_spread_without_aging():
    # a perfect estimate still leaves the 2 beta spread of the co-phased sum
    a = A2gParams(elements=100, k_factor_ur=4.0, k_factor_rd=2.0, correlation=1.0, mean_snr=0.5)
    p = dists.a2g_large_n_params(a)
    assert p.scale == pytest.approx(2.0 * a.beta * 0.5 * 100)
    assert p.noncentrality == pytest.approx(100 * a.alpha**2 / (2.0 * a.beta))
    assert dists.a2g_large_n_mean(a) > dists.a2g_large_n_point_mass(a)


def test_a2g_cdf_upper_mixes_components(density_resolved):
    a_los = dists.a2g_params_for(density_resolved, True)
    a_nlos = dists.a2g_params_for(density_resolved, False)
    w = MixtureWeights.from_p_los(0.4)
    x = np.array([0.5, 5.0, 50.0]) * a_los.mean_snr
    expected = 0.4 * np.asarray(dists.a2g_cdf_large_n(a_los, x)) + 0.6 * np.asarray(dists.a2g_cdf_large_n(a_nlos, x))
    assert_allclose(dists.a2g_cdf_upper(a_los, a_nlos, w, x), expected)


def test_a2g_mixture_rejects_unknown_law(density_resolved):
    a = dists.a2g_params_for(density_resolved, True)
    w = MixtureWeights.from_p_los(1.0)
    with pytest.raises(InvalidArgumentError):
        dists.a2g_pdf_mixture(a, a, w, 1.0, law="gaussian")


def test_monte_carlo_moments_need_values():
    with pytest.raises(ValueError):
        A2gParams(elements=4, correlation=0.5, mean_snr=1.0, moment_source="monte_carlo")
