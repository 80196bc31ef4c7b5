"""
Monte Carlo oracle: channel draws, seeded partitioning and batch statistics
"""

import json
import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_array_equal
from scipy import stats

from risage import dists, linkperf, mcsim
from risage.errors import InvalidArgumentError, SingularInputError

N_KS = 20_000
# one-sample KS critical value at the 0.1% level
KS_CRIT = 1.95 / math.sqrt(N_KS)


# ---------------------------------------------------------------- streams

def test_make_rng_is_keyed():
    a = mcsim.make_rng(7, 1, 0).standard_normal(5)
    b = mcsim.make_rng(7, 1, 0).standard_normal(5)
    c = mcsim.make_rng(7, 1, 1).standard_normal(5)
    assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert_array_equal(mcsim.RngStream(master_seed=7, stream_id=1).generator(0).standard_normal(5), a)
    with pytest.raises(InvalidArgumentError):
        mcsim.make_rng(-1, 1)


def test_partition_plan():
    plan = mcsim.partition_plan(10, 2, 4)
    assert [(p.start, p.count) for p in plan] == [(0, 4), (4, 4), (8, 2)]
    assert [p.stream_key for p in plan] == [(2, 0), (2, 1), (2, 2)]
    with pytest.raises(InvalidArgumentError):
        mcsim.partition_plan(0, 2, 4)


# ---------------------------------------------------------------- channels

def test_rician_vector_power_and_mean(rng):
    h = mcsim.sample_rician_vector(3.0, 4, rng, n=50_000)
    assert h.shape == (50_000, 4)
    assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, abs=0.01)
    assert np.mean(h.real) == pytest.approx(math.sqrt(3.0 / 4.0), abs=0.01)
    assert abs(np.mean(h.imag)) < 0.01


def test_rician_vector_per_row_kappa(rng):
    kappa = np.array([0.0, 100.0])
    h = mcsim.sample_rician_vector(kappa, 8, rng, n=2)
    # the strong-LOS row sits near the all-ones steering vector
    assert np.max(np.abs(h[1] - 1.0)) < 0.5


def test_rician_vector_rejects_bad_steering(rng):
    with pytest.raises(InvalidArgumentError):
        mcsim.sample_rician_vector(1.0, 3, rng, los_steering=np.array([1.0, 2.0, 1.0]))
    with pytest.raises(InvalidArgumentError):
        mcsim.sample_rician_vector(-1.0, 3, rng)


def test_aging_preserves_power(rng):
    h_ref = mcsim.sample_rician_vector(2.0, 4, rng, n=50_000)
    aged = mcsim.age_vector(h_ref, 0.6, rng)
    assert np.mean(np.abs(aged) ** 2) == pytest.approx(1.0, abs=0.01)
    assert_array_equal(mcsim.age_vector(h_ref, 1.0, rng), h_ref)
    with pytest.raises(InvalidArgumentError):
        mcsim.age_vector(h_ref, 1.2, rng)


def test_quantize_phases():
    phases = np.array([0.1, 3.0, 6.2, -0.2, 1.6])
    assert_array_equal(mcsim.quantize_phases(phases, 1), [0.0, math.pi, 0.0, 0.0, math.pi])
    two_bit = mcsim.quantize_phases(phases, 2)
    assert np.all(np.isin(np.round(two_bit / (math.pi / 2)), [0, 1, 2, 3]))
    with pytest.raises(InvalidArgumentError):
        mcsim.quantize_phases(phases, 0)


# ---------------------------------------------------------------- SNR draws

def test_g2a_draws_follow_the_mixture(density_resolved):
    batch = mcsim.draw_batch("g2a", density_resolved, 3, N_KS)
    g_los, g_nlos, w = linkperf.g2a_components(density_resolved)
    ks = mcsim.ks_statistic(batch, lambda x: dists.g2a_cdf_mixture(g_los, g_nlos, w, x))
    assert ks < KS_CRIT
    assert batch.los_state.mean() == pytest.approx(density_resolved.su.p_los, abs=0.02)


def test_g2a_rayleigh_single_antenna_does_not_depend_on_rho(density_config):
    from risage.scenario import resolve_scenario, with_overrides

    for rho in (0.0, 0.5, 0.9):
        cfg = with_overrides(density_config, {"bs.antennas": 1, "aging.correlation_su": rho})
        resolved = resolve_scenario(cfg)
        rng = mcsim.make_rng(11, 1, int(rho * 10))
        batch = mcsim.sample_g2a_snr(resolved, rng, N_KS, los_state=False)
        assert not batch.los_state.any()
        ks = stats.kstest(batch.values, stats.expon(scale=resolved.g2a_mean_snr_nlos).cdf).statistic
        assert ks < KS_CRIT


def test_a2g_direct_and_envelope_forms_agree(density_resolved):
    direct = mcsim.draw_batch("a2g", density_resolved, 5, N_KS, stream_id=10)
    envelope = mcsim.draw_batch("a2g", density_resolved, 5, N_KS, stream_id=11, quadratic=True)
    assert mcsim.ks_two_sample(direct, envelope) < 1.95 * math.sqrt(2.0 / N_KS)


def test_phase_quantization_costs_gain(density_resolved):
    exact = mcsim.sample_a2g_snr(density_resolved, mcsim.make_rng(1, 2), 5000, los_state=True)
    coarse = mcsim.sample_a2g_snr(density_resolved, mcsim.make_rng(1, 2), 5000, phase_bits=1, los_state=True)
    assert coarse.values.mean() < exact.values.mean()
    with pytest.raises(InvalidArgumentError):
        mcsim.sample_a2g_snr(density_resolved, mcsim.make_rng(1, 2), 10, phase_bits=0)


def test_chi_moments(density_resolved, default_resolved):
    mu, sigma2 = mcsim.estimate_chi_moments(density_resolved, 20_000, mcsim.make_rng(2, 3), los=True)
    assert mu > 0
    assert sigma2 >= 1.0
    with pytest.raises(SingularInputError):
        mcsim.estimate_chi_moments(default_resolved, 100, mcsim.make_rng(2, 3))
    with pytest.raises(InvalidArgumentError):
        mcsim.estimate_chi_moments(density_resolved, 1, mcsim.make_rng(2, 3))


def test_delta_chi_moments_match_the_estimate(density_resolved):
    estimated = mcsim.estimate_chi_moments(density_resolved, 20_000, mcsim.make_rng(2, 4), los=True)
    a = dists.a2g_params_for(density_resolved, True)
    mu, sigma2 = a.moments()
    assert mu == pytest.approx(estimated[0], rel=0.01)
    assert sigma2 == pytest.approx(estimated[1], abs=0.005)


# ---------------------------------------------------------------- batches

def test_batches_do_not_depend_on_worker_count(density_resolved):
    single = mcsim.draw_batch("a2g", density_resolved, 42, 5000, workers=1, chunk=1000)
    pooled = mcsim.draw_batch("a2g", density_resolved, 42, 5000, workers=4, chunk=1000)
    assert_array_equal(single.values, pooled.values)
    assert_array_equal(single.los_state, pooled.los_state)
    assert single.plan == pooled.plan
    assert len(single.plan) == 5

    other = mcsim.draw_batch("a2g", density_resolved, 43, 5000, chunk=1000)
    assert not np.array_equal(single.values, other.values)


def test_draw_batch_rejects_unknown_hop(density_resolved):
    with pytest.raises(InvalidArgumentError):
        mcsim.draw_batch("uplink", density_resolved, 0, 10)


def test_e2e_batches_are_paired(density_resolved):
    g2a, a2g = mcsim.sample_e2e(density_resolved, 9, 3000)
    assert len(g2a) == len(a2g) == 3000
    assert g2a.stream_id != a2g.stream_id


def test_paired_batches_scale_with_transmit_power(density_config):
    from risage.scenario import resolve_scenario, with_overrides

    def draws(power):
        cfg = with_overrides(density_config, {"radio.tx_power_bs_dbm": power, "radio.tx_power_uav_dbm": power})
        return mcsim.sample_e2e(resolve_scenario(cfg), 7, 5_000)

    low_g2a, low_a2g = draws(0.0)
    high_g2a, high_a2g = draws(10.0)
    # same channels, ten times the SNR; every draw and hence every outage count is monotone in P
    np.testing.assert_allclose(high_g2a.values, 10.0 * low_g2a.values, rtol=1e-9)
    np.testing.assert_allclose(high_a2g.values, 10.0 * low_a2g.values, rtol=1e-9)
    for gamma_th in (0.1, 1.0, 10.0):
        low = mcsim.estimate_outage(low_g2a, low_a2g, gamma_th).outages
        high = mcsim.estimate_outage(high_g2a, high_a2g, gamma_th).outages
        assert high <= low


def test_sample_batch_validation():
    with pytest.raises(ValueError):
        mcsim.SampleBatch(values=np.array([1.0, -0.5]), hop="g2a", los_state=np.array([True, False]))
    with pytest.raises(ValueError):
        mcsim.SampleBatch(values=np.array([1.0]), hop="g2a", los_state=np.array([True, False]))


# ---------------------------------------------------------------- statistics

def test_empirical_cdf_is_right_continuous():
    cdf = mcsim.empirical_cdf(np.array([1.0, 2.0, 2.0, 3.0]))
    assert cdf(0.0) == 0.0
    assert cdf(2.0) == 0.75
    assert cdf(3.0) == 1.0
    with pytest.raises(InvalidArgumentError):
        mcsim.empirical_cdf(np.array([]))


def test_estimate_outage_counts_the_weaker_hop():
    g2a = np.array([1.0, 5.0, 5.0, 5.0])
    a2g = np.array([5.0, 5.0, 0.5, 5.0])
    estimate = mcsim.estimate_outage(g2a, a2g, 2.0)
    assert estimate.outages == 2
    assert estimate.probability == 0.5
    ci = stats.binomtest(2, 4).proportion_ci(method="wilson")
    assert (estimate.ci_low, estimate.ci_high) == pytest.approx((ci.low, ci.high))
    assert estimate.half_width == pytest.approx(0.5 * (ci.high - ci.low))
    with pytest.raises(InvalidArgumentError):
        mcsim.estimate_outage(g2a, a2g[:3], 2.0)


def test_estimate_outage_without_events():
    estimate = mcsim.estimate_outage(np.ones(100), np.ones(100), 0.5)
    assert estimate.probability == 0.0
    assert estimate.ci_low == pytest.approx(0.0, abs=1e-12)
    assert 0.0 < estimate.ci_high < 0.05


def test_histogram_density(rng):
    values = rng.exponential(2.0, 20_000)
    hist = mcsim.histogram_density(values)
    assert np.sum(hist.density * np.diff(hist.edges)) == pytest.approx(1.0)
    assert np.all(hist.ci_low <= hist.density + 1e-12)
    assert np.all(hist.density <= hist.ci_high + 1e-12)
    assert hist.centers.size == hist.density.size

    fixed = mcsim.histogram_density(values, edges=np.linspace(0.0, 4.0, 5))
    assert fixed.bin_width == 1.0
    assert fixed.density[0] == pytest.approx(stats.expon(scale=2.0).cdf(1.0), abs=0.02)


def test_export_batch(tmp_path, density_resolved):
    batch = mcsim.draw_batch("g2a", density_resolved, 4, 100, chunk=40)
    csv_path, sidecar = mcsim.export_batch(batch, tmp_path / "g2a.csv", "ab" * 32)
    with open(csv_path, encoding="utf-8") as f:
        assert f.readline().startswith("# schema=batch/v1 config_hash=abababababababab seed=4")
    frame = pd.read_csv(csv_path, comment="#")
    assert list(frame.columns) == ["sample_index", "hop", "los_state", "snr_linear"]
    assert len(frame) == 100
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    assert meta["samples"] == 100
    assert meta["partition_plan"] == [[0, 40, [1, 0]], [40, 40, [1, 1]], [80, 20, [1, 2]]]


@pytest.mark.slow
@pytest.mark.parametrize("antennas", [1, 2, 4])
def test_g2a_mixture_at_acceptance_scale(density_config, antennas):
    from risage.scenario import resolve_scenario, with_overrides

    resolved = resolve_scenario(with_overrides(density_config, {"bs.antennas": antennas}))
    batch = mcsim.draw_batch("g2a", resolved, 20240601, 1_000_000, workers=4)
    g_los, g_nlos, w = linkperf.g2a_components(resolved)
    assert mcsim.ks_statistic(batch, lambda x: dists.g2a_cdf_mixture(g_los, g_nlos, w, x)) < 0.01
