"""
Analytical SNR laws.

Every law here is a mixture of scaled non-central chi-square (SNCCS) kernels
or a product of two such mixtures:

* G2A hop (MRT with an aged estimate): a binomial mixture of SNCCS kernels,
  exact for any (M, kappa, rho).
* A2G hop (RIS with aged UAV-RIS estimate): the double Poisson series of the
  product ||g_RD||^2 |chi|^2, with |chi|^2 moment-matched to an SNCCS law,
  and its large-N single-kernel collapse.
"""

import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, special, stats

from risage import specfun
from risage.errors import InvalidArgumentError, MatchingError, SingularInputError
from risage.scenario import ResolvedScenario

logger = logging.getLogger(__name__)

ALPHA_PREFACTORS = {"quarter_pi": math.pi / 4.0, "half_pi": math.pi / 2.0}
DEFAULT_SERIES_TERMS = 135
DEFAULT_TAIL_TOL = 1e-10
# three consecutive negligible outer blocks end the series
_QUIET_BLOCKS = 3


def _as_x(x, strictly_positive: bool = False) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if strictly_positive:
        if np.any(arr <= 0):
            raise InvalidArgumentError("density argument must be positive")
    elif np.any(arr < 0):
        raise InvalidArgumentError("density argument must be nonnegative")
    return arr


def _finish(values):
    values = np.asarray(values, dtype=float)
    return float(values) if values.ndim == 0 else values


# ---------------------------------------------------------------- SNCCS

class SnccsParams(BaseModel):
    """
    Y = (scale/2) * chi^2 with 2*dof degrees of freedom and non-centrality
    2*noncentrality; mean scale * (dof + noncentrality).
    """

    model_config = ConfigDict(frozen=True)

    scale: float = Field(gt=0)
    dof: float = Field(gt=0)
    noncentrality: float = Field(default=0.0, ge=0)

    @property
    def mean(self) -> float:
        return self.scale * (self.dof + self.noncentrality)


def snccs_logpdf(p: SnccsParams, x) -> np.ndarray:
    x = _as_x(x)
    omega, k, lam = p.scale, p.dof, p.noncentrality
    flat = np.atleast_1d(x).astype(float)
    out = np.empty(flat.shape)
    pos = flat > 0

    with np.errstate(divide="ignore"):
        xp = flat[pos]
        if lam == 0.0:
            out[pos] = (k - 1.0) * np.log(xp) - xp / omega - special.gammaln(k) - k * math.log(omega)
        else:
            out[pos] = (
                -math.log(omega)
                - xp / omega
                - lam
                + 0.5 * (k - 1.0) * (np.log(xp) - math.log(omega * lam))
                + np.asarray(specfun.log_bessel_i(k - 1.0, 2.0 * np.sqrt(lam * xp / omega)))
            )
        # origin: finite only for k = 1
        if k == 1.0:
            out[~pos] = -math.log(omega) - lam
        else:
            out[~pos] = -np.inf if k > 1.0 else np.inf
    return out.reshape(x.shape)


def snccs_pdf(p: SnccsParams, x):
    """Density of the SNCCS law; the lambda = 0 case is the gamma density"""
    return _finish(np.exp(snccs_logpdf(p, x)))


def snccs_cdf(p: SnccsParams, x):
    """1 - Q_k(sqrt(2 lambda), sqrt(2 x / Omega))"""
    x = _as_x(x)
    return specfun.marcum_p(p.dof, math.sqrt(2.0 * p.noncentrality), np.sqrt(2.0 * x / p.scale))


def snccs_sf(p: SnccsParams, x):
    x = _as_x(x)
    return specfun.marcum_q(p.dof, math.sqrt(2.0 * p.noncentrality), np.sqrt(2.0 * x / p.scale))


def snccs_cumulants(p: SnccsParams) -> Tuple[float, float, float]:
    """First three cumulants: mean, variance, third central moment"""
    omega, k, lam = p.scale, p.dof, p.noncentrality
    return omega * (k + lam), omega**2 * (k + 2.0 * lam), 2.0 * omega**3 * (k + 3.0 * lam)


def snccs_sample(p: SnccsParams, size, rng: np.random.Generator) -> np.ndarray:
    if p.noncentrality == 0.0:
        return rng.gamma(p.dof, p.scale, size=size)
    return 0.5 * p.scale * rng.noncentral_chisquare(2.0 * p.dof, 2.0 * p.noncentrality, size=size)


# ---------------------------------------------------------------- mixtures

class MixtureWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    p_los: float = Field(ge=0, le=1)
    p_nlos: float = Field(ge=0, le=1)

    @model_validator(mode="after")
    def _sums_to_one(self):
        if abs(self.p_los + self.p_nlos - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to one")
        return self

    @classmethod
    def from_p_los(cls, p_los: float) -> "MixtureWeights":
        return cls(p_los=p_los, p_nlos=1.0 - p_los)


# ---------------------------------------------------------------- G2A

class G2aParams(BaseModel):
    """Per-state G2A hop: M antennas, Rician K, correlation rho, mean SNR"""

    model_config = ConfigDict(frozen=True)

    antennas: int = Field(ge=1)
    k_factor: float = Field(default=0.0, ge=0)
    correlation: float = Field(ge=-1, le=1)
    mean_snr: float = Field(gt=0)

    @property
    def rho_bar(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.correlation**2))

    @property
    def delta1(self) -> float:
        return self.mean_snr * self.rho_bar**2

    @property
    def delta2(self) -> float:
        k = self.k_factor
        return self.mean_snr * (k * self.rho_bar**2 + 1.0) / (k + 1.0)

    @property
    def delta3(self) -> float:
        gap = self.delta2 - self.delta1
        return math.inf if gap == 0.0 else self.delta1 * self.delta2 / gap

    @property
    def xi_u(self) -> float:
        k = self.k_factor
        return self.antennas * k * self.correlation**2 * (k + 1.0) / self.mean_snr

    def kernel_mixture(self) -> Tuple[np.ndarray, List[SnccsParams]]:
        """
        Binomial weights and SNCCS kernels of the exact law:
        sum_m Binom(m; M-1, r) SNCCS(Delta2, M-m, M kappa q) with
        r = Delta1/Delta2 and q = rho^2 / (kappa rho_bar^2 + 1).
        """
        M, k = self.antennas, self.k_factor
        r = min(1.0, self.delta1 / self.delta2)
        q = self.correlation**2 / (k * self.rho_bar**2 + 1.0)
        m = np.arange(M)
        weights = stats.binom.pmf(m, M - 1, r)
        kernels = [SnccsParams(scale=self.delta2, dof=float(M - mm), noncentrality=M * k * q) for mm in m]
        return weights, kernels

    def as_nlos(self) -> "G2aParams":
        return self.model_copy(update={"k_factor": 0.0})


def _kernel_sum(g: G2aParams, x, kernel_fn: Callable) -> np.ndarray:
    weights, kernels = g.kernel_mixture()
    total = np.zeros(np.shape(x))
    for w, kernel in zip(weights, kernels):
        if w > 0.0:
            total = total + w * np.asarray(kernel_fn(kernel, x))
    return total


def g2a_pdf_los(g: G2aParams, x):
    """Exact G2A SNR density for the LOS state"""
    x = _as_x(x)
    return _finish(_kernel_sum(g, x, snccs_pdf))


def g2a_pdf_nlos(g: G2aParams, x):
    """Exact G2A SNR density for the NLOS state (kappa = 0 regardless of g.k_factor)"""
    return g2a_pdf_los(g.as_nlos(), x)


def g2a_cdf_los(g: G2aParams, x):
    x = _as_x(x)
    return _finish(np.clip(_kernel_sum(g, x, snccs_cdf), 0.0, 1.0))


def g2a_cdf_nlos(g: G2aParams, x):
    return g2a_cdf_los(g.as_nlos(), x)


def g2a_pdf_mixture(g_los: G2aParams, g_nlos: G2aParams, w: MixtureWeights, x):
    x = _as_x(x)
    out = np.zeros(np.shape(x))
    if w.p_los > 0:
        out = out + w.p_los * np.asarray(g2a_pdf_los(g_los, x))
    if w.p_nlos > 0:
        out = out + w.p_nlos * np.asarray(g2a_pdf_nlos(g_nlos, x))
    return _finish(out)


def g2a_cdf_mixture(g_los: G2aParams, g_nlos: G2aParams, w: MixtureWeights, x):
    x = _as_x(x)
    out = np.zeros(np.shape(x))
    if w.p_los > 0:
        out = out + w.p_los * np.asarray(g2a_cdf_los(g_los, x))
    if w.p_nlos > 0:
        out = out + w.p_nlos * np.asarray(g2a_cdf_nlos(g_nlos, x))
    return _finish(np.clip(out, 0.0, 1.0))


def g2a_pdf_asymptotic(g: G2aParams, los: bool = True) -> float:
    """Density plateau at x -> 0, which sets the high-SNR outage slope"""
    if not los:
        g = g.as_nlos()
    M = g.antennas
    r = min(1.0, g.delta1 / g.delta2)
    lam = M * g.k_factor * g.correlation**2 / (g.k_factor * g.rho_bar**2 + 1.0)
    # only the single-degree-of-freedom kernel is nonzero at the origin
    return r ** (M - 1) * math.exp(-lam) / g.delta2


def g2a_cdf_upper(g_los: G2aParams, g_nlos: G2aParams, w: MixtureWeights, x):
    """Linear high-SNR CDF approximation (p_los f_los + p_nlos f_nlos) x, clamped to [0, 1]"""
    x = _as_x(x)
    slope = w.p_los * g2a_pdf_asymptotic(g_los, True) + w.p_nlos * g2a_pdf_asymptotic(g_nlos, False)
    return _finish(np.clip(slope * x, 0.0, 1.0))


def g2a_laplace_los(g: G2aParams, s):
    """
    E[exp(-s SNR)] for the LOS state:
    e^{-M kappa} (1 + Delta1 s)^{M-1} / (1 + Delta2 s)^M e^{M kappa (1 + Delta1 s)/(1 + Delta2 s)}.

    Complex s is accepted for numerical inversion.
    """
    s = np.asarray(s)
    if not np.iscomplexobj(s) and np.any(s < 0):
        raise InvalidArgumentError("Laplace variable must be nonnegative")
    M, k = g.antennas, g.k_factor
    d1, d2 = g.delta1, g.delta2
    num = 1.0 + d1 * s
    den = 1.0 + d2 * s
    # exponents combined: M kappa ((1 + d1 s)/(1 + d2 s) - 1)
    value = num ** (M - 1) / den**M * np.exp(-M * k * (d2 - d1) * s / den)
    if np.iscomplexobj(value):
        return value if value.ndim else complex(value)
    return _finish(value)


# ---------------------------------------------------------------- A2G

def alpha_chi(k_ur_est: float, k_rd: float, prefactor: str = "quarter_pi") -> float:
    """
    Normalized mean of the product of the two Rician envelopes,
    c L_{1/2}(-k1) L_{1/2}(-k2) / sqrt((k1+1)(k2+1)), c = pi/4 or pi/2.
    """
    if k_ur_est < 0 or k_rd < 0:
        raise InvalidArgumentError("K-factors must be nonnegative")
    if prefactor not in ALPHA_PREFACTORS:
        raise InvalidArgumentError(f"unknown alpha prefactor '{prefactor}'")
    value = (
        ALPHA_PREFACTORS[prefactor]
        * specfun.laguerre_half(-k_ur_est)
        * specfun.laguerre_half(-k_rd)
        / math.sqrt((k_ur_est + 1.0) * (k_rd + 1.0))
    )
    return float(value)


def beta_chi(alpha: float) -> float:
    return 1.0 - alpha**2


def chi_moment_bounds(rho: float, elements: int, alpha: float) -> Tuple[float, float]:
    """Jensen lower bounds (mu, sigma^2) of the effective RIS gain chi"""
    rho_bar_sq = 1.0 - rho**2
    if rho_bar_sq <= 0.0:
        raise SingularInputError("chi moments are singular for |rho| = 1")
    mu = rho / math.sqrt(rho_bar_sq) * math.sqrt(elements) * alpha
    sigma2 = 1.0 + rho**2 / rho_bar_sq * elements * beta_chi(alpha)
    return mu, sigma2


def rician_envelope_moments(kappa: float) -> Tuple[float, float, float]:
    """
    E|h|, E|h|^3 and E|h|^4 of a unit-power Rician entry,
    Gamma(1 + k/2) L_{k/2}(-kappa) / (kappa + 1)^{k/2}.
    """
    if kappa < 0:
        raise InvalidArgumentError("kappa must be nonnegative")
    l_half = float(specfun.laguerre_half(-kappa))
    # L_{3/2} from the three-term recurrence with L_{-1/2}(-kappa) = e^{-kappa/2} I_0(kappa/2)
    l_three_halves = (2.0 / 3.0) * ((2.0 + kappa) * l_half - 0.5 * float(special.ive(0, kappa / 2.0)))
    m1 = 0.5 * math.sqrt(math.pi) * l_half / math.sqrt(kappa + 1.0)
    m3 = 0.75 * math.sqrt(math.pi) * l_three_halves / (kappa + 1.0) ** 1.5
    m4 = (2.0 + 4.0 * kappa + kappa * kappa) / (kappa + 1.0) ** 2
    return m1, m3, m4


def chi_moments_delta(rho: float, elements: int, k_ur_est: float, k_rd: float) -> Tuple[float, float]:
    """
    (mu, sigma^2) of chi = (rho/rho_bar) g.g_hat/||g|| + w.

    Given g the sum has mean E[g_hat] f and variance 1 - E[g_hat]^2 with
    f = sum g / ||g||; the mean and variance of f come from a second-order
    expansion around (N E g, N). Unlike the Jensen bounds, the variance
    stays O(1) in N.
    """
    rho_bar_sq = 1.0 - rho**2
    if rho_bar_sq <= 0.0:
        raise SingularInputError("chi moments are singular for |rho| = 1")
    if elements < 1:
        raise InvalidArgumentError("elements must be >= 1")
    n1 = rician_envelope_moments(k_ur_est)[0]
    if elements == 1:
        mean_f, var_f = 1.0, 0.0
    else:
        m1, m3, m4 = rician_envelope_moments(k_rd)
        root_n = math.sqrt(elements)
        # f never exceeds sqrt(N)
        mean_f = min(root_n * m1 + (0.375 * m1 * (m4 - 1.0) - 0.5 * (m3 - m1)) / root_n, root_n)
        var_f = max(0.0, 1.0 - m1 * m3 + 0.25 * m1 * m1 * (m4 - 1.0))
    ratio = rho / math.sqrt(rho_bar_sq)
    mu = ratio * n1 * mean_f
    sigma2 = 1.0 + ratio**2 * ((1.0 - n1 * n1) + n1 * n1 * var_f)
    return mu, sigma2


def moment_match_rhs(mu: float, sigma2: float) -> Tuple[float, float, float]:
    """Targets of Omega(k+lam), Omega^2(k+2 lam), Omega^3(k+3 lam)"""
    c = sigma2 - 0.5
    mu2 = mu * mu
    rhs1 = sigma2 + mu2
    rhs2 = 2.0 * c**2 + 4.0 * mu2 * c + 0.5
    rhs3 = 4.0 * c**3 + 12.0 * mu2 * c**2 + 0.5
    return rhs1, rhs2, rhs3


def moment_match_snccs(mu: float, sigma2: float) -> SnccsParams:
    """Closed-form SNCCS triple whose first three cumulants match |chi|^2"""
    if not sigma2 > 0:
        raise InvalidArgumentError("sigma^2 must be positive")
    rhs1, rhs2, rhs3 = moment_match_rhs(mu, sigma2)
    disc = rhs2 * rhs2 - rhs1 * rhs3
    if disc < 0:
        # rounding noise around an exact zero is not a failure
        if disc < -1e-12 * rhs2 * rhs2:
            raise MatchingError(f"no SNCCS law matches mu={mu:.6g}, sigma^2={sigma2:.6g} (discriminant {disc:.3g})")
        disc = 0.0
    omega = (rhs2 - math.sqrt(disc)) / rhs1
    if not omega > 0:
        raise MatchingError(f"matched scale is not positive for mu={mu:.6g}, sigma^2={sigma2:.6g}")
    k = (2.0 * rhs1 - rhs2 / omega) / omega
    lam = (rhs2 / omega - rhs1) / omega
    if lam < 0 and lam > -1e-12 * max(1.0, k):
        lam = 0.0
    if not k > 0 or lam < 0:
        raise MatchingError(f"matched triple (k={k:.6g}, lambda={lam:.6g}) is outside the SNCCS family")
    return SnccsParams(scale=omega, dof=k, noncentrality=lam)


class A2gParams(BaseModel):
    """Per-state A2G hop through an N-element RIS"""

    model_config = ConfigDict(frozen=True)

    elements: int = Field(ge=1)
    k_factor_ur: float = Field(default=0.0, ge=0)
    # K-factor of the delayed estimate; None means k_factor_ur
    k_factor_ur_est: Optional[float] = Field(default=None, ge=0)
    k_factor_rd: float = Field(default=0.0, ge=0)
    correlation: float = Field(ge=-1, le=1)
    mean_snr: float = Field(gt=0)
    alpha_prefactor: str = Field(default="quarter_pi", pattern="^(quarter_pi|half_pi)$")
    alpha_override: Optional[float] = Field(default=None, gt=0, le=1)
    moment_source: str = Field(default="delta", pattern="^(delta|jensen|monte_carlo)$")
    chi_moments: Optional[Tuple[float, float]] = None
    # "coherent" keeps the rho^2 beta spread of the co-phased sum in the large-N law
    spread: str = Field(default="coherent", pattern="^(coherent|innovation)$")

    @model_validator(mode="after")
    def _moments_present(self):
        if self.moment_source == "monte_carlo" and self.chi_moments is None:
            raise ValueError("moment_source 'monte_carlo' needs chi_moments")
        return self

    @property
    def rho_bar(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.correlation**2))

    @property
    def alpha(self) -> float:
        if self.alpha_override is not None:
            return self.alpha_override
        k_est = self.k_factor_ur if self.k_factor_ur_est is None else self.k_factor_ur_est
        return min(1.0, alpha_chi(k_est, self.k_factor_rd, self.alpha_prefactor))

    @property
    def beta(self) -> float:
        return beta_chi(self.alpha)

    @property
    def b_n(self) -> float:
        rho_bar_sq = self.rho_bar**2
        if rho_bar_sq == 0.0:
            return math.inf
        return self.elements * self.correlation**2 / rho_bar_sq

    @property
    def spread_factor(self) -> float:
        """Per-element variance of the large-N amplitude, rho_bar^2 (+ 2 rho^2 beta)"""
        base = self.rho_bar**2
        if self.spread == "innovation":
            return base
        return base + 2.0 * self.correlation**2 * self.beta

    def moments(self) -> Tuple[float, float]:
        if self.moment_source == "monte_carlo":
            return self.chi_moments
        if self.moment_source == "jensen":
            return chi_moment_bounds(self.correlation, self.elements, self.alpha)
        k_est = self.k_factor_ur if self.k_factor_ur_est is None else self.k_factor_ur_est
        return chi_moments_delta(self.correlation, self.elements, k_est, self.k_factor_rd)

    def matched(self) -> SnccsParams:
        return moment_match_snccs(*self.moments())

    def theta(self, matched: Optional[SnccsParams] = None) -> float:
        """Scale of the product law, 4 / Xi_R"""
        matched = matched or self.matched()
        return self.mean_snr * self.rho_bar**2 * matched.scale / (self.k_factor_rd + 1.0)

    def xi_r(self) -> float:
        return 4.0 / self.theta()


class SeriesDensity(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    terms_used: int
    tail_mass: float
    truncated: bool


def series_term_budget(a: A2gParams, tail_tol: float = DEFAULT_TAIL_TOL) -> int:
    """Outer blocks needed to leave less than tail_tol / 100 Poisson mass behind"""
    matched = a.matched()
    total_rate = a.elements * a.k_factor_rd + matched.noncentrality
    if total_rate <= 0:
        return DEFAULT_SERIES_TERMS
    upper = float(stats.poisson.isf(0.01 * tail_tol, total_rate))
    return max(DEFAULT_SERIES_TERMS, int(upper) + 2 * _QUIET_BLOCKS)


def _inner_window(m: int, share: float, tail_tol: float) -> np.ndarray:
    # j | m is Binomial(m, share); only the indices carrying mass above tail_tol
    if share <= 0.0 or m == 0:
        return np.zeros(1)
    if share >= 1.0:
        return np.array([float(m)])
    lo = max(0, int(stats.binom.ppf(tail_tol, m, share)) - 1)
    hi = min(m, int(stats.binom.isf(tail_tol, m, share)) + 1)
    return np.arange(lo, hi + 1, dtype=float)


def a2g_pdf_los_series(
    a: A2gParams, x, max_terms: Optional[int] = None, tail_tol: float = DEFAULT_TAIL_TOL
) -> SeriesDensity:
    """
    Exact-form A2G density as the double series over (m, j), m the outer
    block and j the R-D Poisson index inside it:

      sum_m sum_{j<=m} Pois(j; N kappa_RD) Pois(m-j; lambda_R)
          * 2 (x/Theta)^{(N+k_R+m)/2} / (x Gamma(N+j) Gamma(k_R+m-j))
          * K_{N-k_R-m+2j}(2 sqrt(x/Theta))

    Blocks below the Poisson window of m (and inner indices outside the
    binomial window of j) carry less than tail_tol mass and are skipped.
    Summation stops once the blocks are past the Poisson mean and three
    consecutive blocks add less than tail_tol relative mass, or after
    max_terms blocks. max_terms=None sizes the budget from the Poisson mean.
    """
    if max_terms is None:
        max_terms = series_term_budget(a, tail_tol)
    if max_terms < 1:
        raise InvalidArgumentError("max_terms must be >= 1")
    x = _as_x(x, strictly_positive=True)
    xf = np.atleast_1d(x).astype(float).ravel()

    matched = a.matched()
    N = a.elements
    k_r, lam_r = matched.dof, matched.noncentrality
    lam_rd = N * a.k_factor_rd
    total_rate = lam_rd + lam_r
    share = lam_rd / total_rate if total_rate > 0 else 0.0
    theta = a.theta(matched)
    first = int(stats.poisson.ppf(tail_tol, total_rate)) if total_rate > 0 else 0
    first = min(first, max_terms - 1)

    z = 2.0 * np.sqrt(xf / theta)
    log_ratio = np.log(xf / theta)
    log_x = np.log(xf)

    # orders nu0 + n for integer n in [-(max_terms-1), max_terms-1]; split by sign
    nu0 = N - k_r
    base_pos = nu0 - math.floor(nu0)
    base_neg = (-nu0) - math.floor(-nu0)
    count = int(math.ceil(abs(nu0))) + max_terms + 2
    ladder_pos = specfun.log_bessel_k_ladder(base_pos, count, z)
    ladder_neg = specfun.log_bessel_k_ladder(base_neg, count, z)

    def log_k(order: np.ndarray) -> np.ndarray:
        out = np.empty((order.size, z.size))
        pos = order >= 0
        idx_pos = np.rint(order[pos] - base_pos).astype(int)
        idx_neg = np.rint(-order[~pos] - base_neg).astype(int)
        out[pos] = ladder_pos[idx_pos]
        out[~pos] = ladder_neg[idx_neg]
        return out

    log_total = np.full(z.size, -np.inf)
    quiet = 0
    converged = False
    m = first
    for m in range(first, max_terms):
        j = _inner_window(m, share, tail_tol)
        log_w = (
            special.xlogy(j, lam_rd)
            + special.xlogy(m - j, lam_r)
            - total_rate
            - special.gammaln(j + 1.0)
            - special.gammaln(m - j + 1.0)
        )
        log_coef = log_w + math.log(2.0) - special.gammaln(N + j) - special.gammaln(k_r + m - j)
        log_terms = (
            log_coef[:, None]
            + 0.5 * (N + k_r + m) * log_ratio[None, :]
            - log_x[None, :]
            + log_k(nu0 - m + 2.0 * j)
        )
        block = special.logsumexp(log_terms, axis=0)
        log_total = np.logaddexp(log_total, block)

        # log_total >= block wherever block is finite
        rel = float(np.max(np.exp(np.where(np.isneginf(block), -np.inf, block - log_total))))
        quiet = quiet + 1 if rel < tail_tol else 0
        if m + 1 >= total_rate and quiet >= _QUIET_BLOCKS:
            converged = True
            break

    terms_used = m + 1
    tail_mass = float(stats.poisson.sf(terms_used - 1, total_rate)) if total_rate > 0 else 0.0
    truncated = not converged and tail_mass > tail_tol
    if truncated:
        logger.warning(
            f"⚠️ A2G series truncated at {terms_used} blocks with Poisson tail mass {tail_mass:.3g}"
        )
    else:
        logger.debug(f"A2G series used {terms_used} blocks (tail mass {tail_mass:.3g})")
    values = np.exp(log_total).reshape(np.shape(x))
    return SeriesDensity(values=values, terms_used=terms_used, tail_mass=tail_mass, truncated=truncated)


def tabulate_cdf(pdf: Callable, upper: float, points: int = 2048, lower_fraction: float = 1e-6):
    """
    CDF of a density on (0, upper]: adaptive quadrature over the first cell,
    cumulative trapezoid on a geometric grid after it. Returns (grid, cdf).
    """
    if not upper > 0:
        raise InvalidArgumentError("tabulation needs a positive upper limit")
    grid = np.geomspace(upper * lower_fraction, upper, points)
    head, _ = integrate.quad(lambda t: float(np.asarray(pdf(np.array([t])))[0]), 0.0, grid[0], limit=200)
    body = integrate.cumulative_trapezoid(np.asarray(pdf(grid)), grid, initial=0.0)
    return grid, np.clip(head + body, 0.0, 1.0)


def _interp_cdf(grid: np.ndarray, cdf: np.ndarray, x: np.ndarray) -> np.ndarray:
    # below the first node the CDF is tiny; interpolate linearly toward the origin
    out = np.interp(x, np.concatenate([[0.0], grid]), np.concatenate([[0.0], cdf]))
    return np.where(x <= 0, 0.0, out)


def a2g_cdf_los_series(
    a: A2gParams,
    x,
    max_terms: Optional[int] = None,
    tail_tol: float = DEFAULT_TAIL_TOL,
    points: int = 2048,
):
    """CDF of the series law by tabulated quadrature up to max(x)"""
    x = _as_x(x)
    upper = float(np.max(x)) if np.size(x) else 0.0
    if upper <= 0:
        return _finish(np.zeros(np.shape(x)))

    def pdf(t):
        return a2g_pdf_los_series(a, t, max_terms=max_terms, tail_tol=tail_tol).values

    grid, cdf = tabulate_cdf(pdf, upper, points=points)
    return _finish(_interp_cdf(grid, cdf, x))


def a2g_large_n_params(a: A2gParams) -> Optional[SnccsParams]:
    """
    SNCCS(Omega gamma N, 1, N rho^2 alpha^2 / Omega) with Omega the spread
    factor; None when Omega = 0 and the law is a point mass.
    """
    spread = a.spread_factor
    if spread <= 0.0:
        return None
    return SnccsParams(
        scale=spread * a.mean_snr * a.elements,
        dof=1.0,
        noncentrality=a.elements * a.correlation**2 * a.alpha**2 / spread,
    )


def a2g_large_n_point_mass(a: A2gParams) -> float:
    """Deterministic large-N SNR with a perfect estimate, gamma (N alpha)^2"""
    return a.mean_snr * (a.elements * a.alpha) ** 2


def a2g_large_n_mean(a: A2gParams) -> float:
    params = a2g_large_n_params(a)
    return a2g_large_n_point_mass(a) if params is None else params.mean


def _warn_small_n(a: A2gParams) -> None:
    if a.elements < 16:
        logger.warning(f"⚠️ Large-N A2G law used with only N={a.elements} elements")


def a2g_pdf_large_n(a: A2gParams, x):
    x = _as_x(x)
    _warn_small_n(a)
    params = a2g_large_n_params(a)
    if params is None:
        logger.warning("⚠️ Large-N A2G law is a point mass without spread; density reported as zero")
        return _finish(np.zeros(np.shape(x)))
    return snccs_pdf(params, x)


def a2g_cdf_large_n(a: A2gParams, x):
    x = _as_x(x)
    params = a2g_large_n_params(a)
    if params is None:
        return _finish((x >= a2g_large_n_point_mass(a)).astype(float))
    return snccs_cdf(params, x)


def a2g_cdf_upper(a_los: A2gParams, a_nlos: A2gParams, w: MixtureWeights, x):
    """Mixture of the two large-N CDFs; the NLOS component carries its own alpha"""
    x = _as_x(x)
    out = np.zeros(np.shape(x))
    if w.p_los > 0:
        out = out + w.p_los * np.asarray(a2g_cdf_large_n(a_los, x))
    if w.p_nlos > 0:
        out = out + w.p_nlos * np.asarray(a2g_cdf_large_n(a_nlos, x))
    return _finish(np.clip(out, 0.0, 1.0))


def a2g_pdf_mixture(
    a_los: A2gParams,
    a_nlos: A2gParams,
    w: MixtureWeights,
    x,
    law: str = "series",
    max_terms: Optional[int] = None,
    tail_tol: float = DEFAULT_TAIL_TOL,
):
    """p_los f_los + p_nlos f_nlos with the series ("series") or the large-N law ("large_n")"""
    x = _as_x(x)
    if law == "series":
        def component(a):
            return a2g_pdf_los_series(a, x, max_terms=max_terms, tail_tol=tail_tol).values
    elif law == "large_n":
        def component(a):
            return np.asarray(a2g_pdf_large_n(a, x))
    else:
        raise InvalidArgumentError(f"unknown A2G law '{law}'")
    out = np.zeros(np.shape(x))
    if w.p_los > 0:
        out = out + w.p_los * component(a_los)
    if w.p_nlos > 0:
        out = out + w.p_nlos * component(a_nlos)
    return _finish(out)


# ---------------------------------------------------------------- builders

def g2a_weights(resolved: ResolvedScenario) -> MixtureWeights:
    return MixtureWeights.from_p_los(resolved.su.p_los)


def a2g_weights(resolved: ResolvedScenario) -> MixtureWeights:
    return MixtureWeights.from_p_los(resolved.ur.p_los)


def g2a_params_for(resolved: ResolvedScenario, los: bool) -> G2aParams:
    su = resolved.su
    return G2aParams(
        antennas=resolved.antennas,
        k_factor=su.k_factor_linear if los else 0.0,
        correlation=su.correlation,
        mean_snr=resolved.g2a_mean_snr_los if los else resolved.g2a_mean_snr_nlos,
    )


def a2g_params_for(
    resolved: ResolvedScenario, los: bool, chi_moments: Optional[Tuple[float, float]] = None
) -> A2gParams:
    """
    A2G parameters of one UAV-RIS state. With [model] a2g_nlos_alpha = unit
    the NLOS component uses alpha = 1 instead of its Rayleigh value. Passing
    chi_moments (estimated by Monte Carlo) replaces [model] moment_source.
    """
    model = resolved.config.model
    ur = resolved.ur
    k_ur = ur.k_factor_linear if los else 0.0
    override = 1.0 if (not los and model.a2g_nlos_alpha == "unit") else None
    if chi_moments is not None:
        source = "monte_carlo"
    else:
        # monte_carlo without estimated moments falls back to the delta moments
        source = "delta" if model.moment_source == "monte_carlo" else model.moment_source
    return A2gParams(
        elements=resolved.elements,
        k_factor_ur=k_ur,
        k_factor_ur_est=k_ur,
        k_factor_rd=resolved.k_factor_rd,
        correlation=ur.correlation,
        mean_snr=resolved.a2g_mean_snr_los if los else resolved.a2g_mean_snr_nlos,
        alpha_prefactor=model.alpha_prefactor,
        alpha_override=override,
        moment_source=source,
        chi_moments=chi_moments,
        spread=model.a2g_spread,
    )
