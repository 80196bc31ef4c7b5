"""
End-to-end performance of the decode-and-forward relay: outage probability,
outage-targeted SNR thresholds, maximum target spectral efficiency and the
channel-hardening index.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import optimize

from risage import dists, mcsim, specfun
from risage.dists import A2gParams, G2aParams, MixtureWeights
from risage.errors import InvalidArgumentError
from risage.scenario import ResolvedScenario

logger = logging.getLogger(__name__)

G2A_THRESHOLD_MODES = ("inverse", "printed")
A2G_THRESHOLD_MODES = ("gaussian", "marcum")
CHI_SAMPLES = 200_000


def se_to_threshold(target_se: float) -> float:
    """gamma_th = 2^{2R} - 1 (two time slots)"""
    return 2.0 ** (2.0 * target_se) - 1.0


def threshold_to_se(gamma_th: float) -> float:
    return 0.5 * math.log2(1.0 + gamma_th)


class OutageQuery(BaseModel):
    """Target SE or SNR threshold plus the desired outage level"""

    model_config = ConfigDict(frozen=True)

    target_se: Optional[float] = Field(default=None, ge=0)
    threshold: Optional[float] = Field(default=None, ge=0)
    desired_level: float = Field(default=1e-4, gt=0, lt=1)

    @model_validator(mode="after")
    def _consistent(self):
        if self.target_se is None and self.threshold is None:
            raise ValueError("set target_se or threshold")
        if self.target_se is not None and self.threshold is not None:
            expected = se_to_threshold(self.target_se)
            if not math.isclose(expected, self.threshold, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(f"threshold {self.threshold} does not match 2^(2R)-1 = {expected}")
        return self

    @property
    def gamma_th(self) -> float:
        return self.threshold if self.threshold is not None else se_to_threshold(self.target_se)

    @property
    def se(self) -> float:
        return self.target_se if self.target_se is not None else threshold_to_se(self.threshold)


class ThresholdBreakdown(BaseModel):
    model_config = ConfigDict(frozen=True)

    level: float
    gamma_th_g2a: float = Field(ge=0)
    gamma_th_a2g: float = Field(ge=0)
    gamma_hat: float = Field(ge=0)
    a_l: float
    b_n: float = Field(ge=0)
    g2a_mode: str
    a2g_mode: str
    # alpha sqrt(N)|rho| + a_L sqrt(Omega) < 0, term clamped to zero
    a2g_los_degenerate: bool = False
    a2g_nlos_degenerate: bool = False

    @model_validator(mode="after")
    def _min_rule(self):
        if self.gamma_hat != min(self.gamma_th_g2a, self.gamma_th_a2g):
            raise ValueError("gamma_hat must be the smaller branch")
        return self

    @property
    def limiting_hop(self) -> str:
        return "g2a" if self.gamma_th_g2a <= self.gamma_th_a2g else "a2g"

    @property
    def degenerate(self) -> bool:
        return self.a2g_los_degenerate or self.a2g_nlos_degenerate


class SpectralEfficiency(BaseModel):
    model_config = ConfigDict(frozen=True)

    se_max: float
    se_ref_g2a: float
    breakdown: ThresholdBreakdown


# ---------------------------------------------------------------- components

def g2a_components(resolved: ResolvedScenario) -> Tuple[G2aParams, G2aParams, MixtureWeights]:
    return (
        dists.g2a_params_for(resolved, True),
        dists.g2a_params_for(resolved, False),
        dists.g2a_weights(resolved),
    )


def a2g_components(
    resolved: ResolvedScenario, seed: Optional[int] = None, chi_samples: int = CHI_SAMPLES
) -> Tuple[A2gParams, A2gParams, MixtureWeights]:
    """
    LOS/NLOS A2G parameters. With [model] moment_source = monte_carlo the chi
    moments are estimated from a seeded draw instead of the delta moments.
    """
    weights = dists.a2g_weights(resolved)
    if resolved.config.model.moment_source != "monte_carlo":
        return dists.a2g_params_for(resolved, True), dists.a2g_params_for(resolved, False), weights
    if seed is None:
        raise InvalidArgumentError("monte_carlo chi moments need a seed")
    components = []
    for index, los in enumerate((True, False)):
        rng = mcsim.make_rng(seed, mcsim.STREAM_CHI, index)
        moments = mcsim.estimate_chi_moments(resolved, chi_samples, rng, los=los)
        logger.debug(f"Chi moments ({'los' if los else 'nlos'}): mu={moments[0]:.6g} sigma2={moments[1]:.6g}")
        components.append(dists.a2g_params_for(resolved, los, chi_moments=moments))
    return components[0], components[1], weights


# ---------------------------------------------------------------- outage

def e2e_outage(f_g2a, f_a2g):
    """1 - (1 - F_G2A)(1 - F_A2G) for CDF values already evaluated at the threshold"""
    a = np.asarray(f_g2a, dtype=float)
    b = np.asarray(f_a2g, dtype=float)
    if np.any((a < 0) | (a > 1) | np.isnan(a)) or np.any((b < 0) | (b > 1) | np.isnan(b)):
        raise InvalidArgumentError("CDF values must lie in [0, 1]")
    out = 1.0 - (1.0 - a) * (1.0 - b)
    return float(out) if out.ndim == 0 else out


def _check_threshold(gamma_th) -> np.ndarray:
    g = np.asarray(gamma_th, dtype=float)
    if np.any(g < 0) or np.any(np.isnan(g)):
        raise InvalidArgumentError("gamma_th must be nonnegative")
    return g


def e2e_outage_asymptotic(resolved: ResolvedScenario, gamma_th):
    """
    Outage from the high-SNR G2A bound and the large-N A2G law. Tight at high
    transmit power; no bound direction is implied.
    """
    g = _check_threshold(gamma_th)
    g_los, g_nlos, wg = g2a_components(resolved)
    a_los = dists.a2g_params_for(resolved, True)
    a_nlos = dists.a2g_params_for(resolved, False)
    wa = dists.a2g_weights(resolved)
    return e2e_outage(dists.g2a_cdf_upper(g_los, g_nlos, wg, g), dists.a2g_cdf_upper(a_los, a_nlos, wa, g))


def e2e_outage_analytical(resolved: ResolvedScenario, gamma_th):
    """Outage with the exact G2A mixture CDF and the large-N A2G CDF"""
    g = _check_threshold(gamma_th)
    g_los, g_nlos, wg = g2a_components(resolved)
    a_los = dists.a2g_params_for(resolved, True)
    a_nlos = dists.a2g_params_for(resolved, False)
    wa = dists.a2g_weights(resolved)
    return e2e_outage(dists.g2a_cdf_mixture(g_los, g_nlos, wg, g), dists.a2g_cdf_upper(a_los, a_nlos, wa, g))


# ---------------------------------------------------------------- thresholds

def outage_offset(level: float) -> float:
    """a_L = Q^{-1}(1 - L) / sqrt(2)"""
    if not 0.0 < level < 1.0:
        raise InvalidArgumentError("outage level must lie in (0, 1)")
    return specfun.gaussian_q_inv(1.0 - level) / math.sqrt(2.0)


def _g2a_threshold(resolved: ResolvedScenario, level: float, mode: str) -> float:
    g_los, g_nlos, w = g2a_components(resolved)
    plateaus = []
    for weight, g, los in ((w.p_los, g_los, True), (w.p_nlos, g_nlos, False)):
        if weight > 0:
            plateaus.append((weight, dists.g2a_pdf_asymptotic(g, los)))

    if mode == "inverse":
        slope = sum(weight * f for weight, f in plateaus)
        return math.inf if slope == 0.0 else level / slope
    if mode == "printed":
        if any(f == 0.0 for _, f in plateaus):
            return math.inf
        return level * sum(weight / f for weight, f in plateaus)
    raise InvalidArgumentError(f"unknown G2A threshold mode '{mode}'")


def _a2g_term(a: A2gParams, a_l: float) -> Tuple[float, bool]:
    """
    N gamma (alpha sqrt(N)|rho| + a_L sqrt(Omega))^2, the L-quantile of the
    in-phase amplitude; Omega = rho_bar^2 reduces it to
    N gamma rho_bar^2 (a_L + alpha sqrt(b_N))^2.
    """
    root = a.alpha * math.sqrt(a.elements) * abs(a.correlation) + a_l * math.sqrt(a.spread_factor)
    if root < 0.0:
        return 0.0, True
    return a.elements * a.mean_snr * root**2, False


def _a2g_threshold_marcum(a_los: A2gParams, a_nlos: A2gParams, w: MixtureWeights, level: float) -> float:
    def gap(x):
        return float(dists.a2g_cdf_upper(a_los, a_nlos, w, x)) - level

    means = [dists.a2g_large_n_mean(a) for a in (a_los, a_nlos)]
    upper = max(means)
    while gap(upper) < 0.0:
        upper *= 4.0
        if not math.isfinite(upper):
            raise InvalidArgumentError("could not bracket the A2G threshold")
    lower = min(means) * 1e-6
    for _ in range(8):
        if gap(lower) < 0.0:
            break
        lower *= 1e-3
    else:
        return 0.0
    return float(optimize.brentq(gap, lower, upper, xtol=lower * 1e-12, rtol=1e-12, maxiter=500))


def target_threshold(
    resolved: ResolvedScenario,
    level: Optional[float] = None,
    g2a_mode: Optional[str] = None,
    a2g_mode: Optional[str] = None,
) -> ThresholdBreakdown:
    """
    SNR threshold per hop that keeps the outage near L, and their minimum.
    Modes default to the scenario's [model] section.
    """
    model = resolved.config.model
    level = model.outage_level if level is None else level
    g2a_mode = g2a_mode or model.g2a_threshold_mode
    a2g_mode = a2g_mode or model.a2g_threshold_mode
    a_l = outage_offset(level)

    gamma_g2a = _g2a_threshold(resolved, level, g2a_mode)

    a_los = dists.a2g_params_for(resolved, True)
    a_nlos = dists.a2g_params_for(resolved, False)
    w = dists.a2g_weights(resolved)
    flags = {"a2g_los_degenerate": False, "a2g_nlos_degenerate": False}
    if a2g_mode == "gaussian":
        gamma_a2g = 0.0
        for weight, a, key in ((w.p_los, a_los, "a2g_los_degenerate"), (w.p_nlos, a_nlos, "a2g_nlos_degenerate")):
            # flags cover both states even when one carries no weight
            term, degenerate = _a2g_term(a, a_l)
            flags[key] = degenerate
            if weight > 0:
                gamma_a2g += weight * term
    elif a2g_mode == "marcum":
        gamma_a2g = _a2g_threshold_marcum(a_los, a_nlos, w, level)
    else:
        raise InvalidArgumentError(f"unknown A2G threshold mode '{a2g_mode}'")

    if flags["a2g_los_degenerate"] or flags["a2g_nlos_degenerate"]:
        logger.warning(f"⚠️ A2G threshold clamped to zero for part of the mixture at L={level:g}")

    return ThresholdBreakdown(
        level=level,
        gamma_th_g2a=gamma_g2a,
        gamma_th_a2g=gamma_a2g,
        gamma_hat=min(gamma_g2a, gamma_a2g),
        a_l=a_l,
        b_n=a_los.b_n,
        g2a_mode=g2a_mode,
        a2g_mode=a2g_mode,
        **flags,
    )


def max_target_se(resolved: ResolvedScenario, level: Optional[float] = None, **modes) -> SpectralEfficiency:
    """Largest target SE, (1/2) log2(1 + gamma_hat), with the G2A-only reference"""
    breakdown = target_threshold(resolved, level, **modes)
    return SpectralEfficiency(
        se_max=threshold_to_se(breakdown.gamma_hat),
        se_ref_g2a=threshold_to_se(breakdown.gamma_th_g2a),
        breakdown=breakdown,
    )


# ---------------------------------------------------------------- hardening

def hardening_index(elements: int, rho: float, alpha: float) -> float:
    """Var / mean^2 of the A2G gain; 0 means the hop behaves like a non-fading channel"""
    if elements < 1:
        raise InvalidArgumentError("elements must be >= 1")
    if abs(rho) > 1:
        raise InvalidArgumentError("|rho| must not exceed 1")
    rho_bar_sq = max(0.0, 1.0 - rho * rho)
    if rho_bar_sq == 0.0:
        return 0.0
    coherent = elements * rho * rho * alpha * alpha
    return rho_bar_sq * (1.0 + 2.0 * coherent) / (rho_bar_sq + coherent) ** 2


def hardening_threshold_n(rho: float, alpha: float, level: float = 0.05, max_elements: int = 2**40) -> Optional[int]:
    """Smallest N with hardening_index < level; None if unreachable (eta is decreasing in N)"""
    if hardening_index(1, rho, alpha) < level:
        return 1
    if hardening_index(max_elements, rho, alpha) >= level:
        return None
    lo, hi = 1, max_elements
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if hardening_index(mid, rho, alpha) < level:
            hi = mid
        else:
            lo = mid
    return hi
