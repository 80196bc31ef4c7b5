"""
Special functions used by the analytical SNR laws.

Thin, domain-checked wrappers over scipy.special plus the pieces scipy does
not offer directly: log-domain modified Bessel functions that survive the
large orders of the RIS series, the Marcum Q pair evaluated as Poisson
mixtures of regularized gamma functions, the half-order Laguerre function
and a fixed-Talbot inverse Laplace transform.
"""

import logging
from typing import Callable, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import special, stats

from risage.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

# I_nu(x) ~ (x/2)^nu / Gamma(nu+1) below x = SMALL_ARG_I * sqrt(nu+1);
# the next term is smaller by (x/2)^2/(nu+1) < 1e-12
SMALL_ARG_I = 2e-6

# largest (terms x points) block evaluated at once
_MAX_BLOCK = 2**21

# CDF values below exp(_LOG_NEGLIGIBLE) are returned as exact zeros
_LOG_NEGLIGIBLE = -690.0


class EvalPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    rel_tol: float = Field(default=1e-12, gt=0)
    max_series_terms: int = Field(default=500, ge=1)


DEFAULT_POLICY = EvalPolicy()


def _finish(values):
    values = np.asarray(values)
    return float(values) if values.ndim == 0 else values


def bessel_j0(x):
    """Zeroth-order Bessel function of the first kind"""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("bessel_j0 needs finite arguments")
    return _finish(special.j0(x))


def _log_bessel_i_series(nu: np.ndarray, x: np.ndarray, terms: int = 80) -> np.ndarray:
    # log of (x/2)^nu / Gamma(nu+1) * sum_k (x^2/4)^k / (k! (nu+1)_k)
    k = np.arange(terms)[:, None]
    q = np.log(x / 2.0)
    log_terms = (
        2.0 * k * q
        - special.gammaln(k + 1.0)
        - (special.gammaln(nu + 1.0 + k) - special.gammaln(nu + 1.0))
    )
    return nu * q - special.gammaln(nu + 1.0) + special.logsumexp(log_terms, axis=0)


def log_bessel_i(nu, x):
    """log I_nu(x) for nu > -1, x >= 0 (-inf where I_nu vanishes)"""
    nu = np.asarray(nu, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(nu <= -1):
        raise InvalidArgumentError("log_bessel_i needs nu > -1")
    if np.any(x < 0):
        raise InvalidArgumentError("log_bessel_i needs x >= 0")

    nu_b, x_b = np.broadcast_arrays(nu, x)
    nu_b = nu_b.ravel()
    x_b = x_b.ravel()
    out = np.empty(nu_b.shape, dtype=float)

    small = x_b < SMALL_ARG_I * np.sqrt(nu_b + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lead = nu_b[small] * np.log(x_b[small] / 2.0) - special.gammaln(nu_b[small] + 1.0)
        # I_0(0) = 1
        out[small] = np.where((x_b[small] == 0.0) & (nu_b[small] == 0.0), 0.0, lead)

        big = ~small
        out[big] = np.log(special.ive(nu_b[big], x_b[big])) + x_b[big]

    # ive underflows for orders far above the argument
    lost = big & ~np.isfinite(out)
    if np.any(lost):
        out[lost] = _log_bessel_i_series(nu_b[lost], x_b[lost])
    return _finish(out.reshape(np.broadcast(nu, x).shape))


def bessel_i(nu, x, scaled: bool = False):
    """
    Modified Bessel function of the first kind, real order nu >= 0.

    scaled=True returns exp(-x) * I_nu(x), which stays finite for large x.
    """
    nu_arr = np.asarray(nu, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if np.any(nu_arr < 0):
        raise InvalidArgumentError("bessel_i needs nu >= 0")
    log_val = np.asarray(log_bessel_i(nu_arr, x_arr))
    if scaled:
        log_val = log_val - x_arr
    return _finish(np.exp(log_val))


def log_bessel_k_ladder(nu0: float, count: int, x) -> np.ndarray:
    """
    log K_{nu0 + i}(x) for i = 0 .. count-1, nu0 >= 0, x > 0.

    Upward ratio recurrence r_{nu+1} = 1/r_nu + 2(nu+1)/x with
    r_nu = K_{nu+1}/K_nu; upward is the stable direction for K.
    x may be an array; the result has shape (count,) + x.shape.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise InvalidArgumentError("log_bessel_k_ladder needs x > 0")
    if nu0 < 0:
        raise InvalidArgumentError("log_bessel_k_ladder needs nu0 >= 0")
    out = np.empty((count,) + x.shape, dtype=float)
    if count == 0:
        return out

    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        k0 = special.kve(nu0, x)
        out[0] = np.log(k0) - x
        if count == 1:
            return out
        ratio = special.kve(nu0 + 1.0, x) / k0
    if not np.all(np.isfinite(out[0])) or not np.all(np.isfinite(ratio)):
        raise InvalidArgumentError(f"K_{nu0}({x.min()}) is out of double range")

    out[1] = out[0] + np.log(ratio)
    nu = nu0 + 1.0
    for i in range(2, count):
        ratio = 1.0 / ratio + 2.0 * nu / x
        out[i] = out[i - 1] + np.log(ratio)
        nu += 1.0
    return out


def log_bessel_k(nu, x):
    """log K_nu(x), any real nu (K_{-nu} = K_nu), x > 0"""
    nu = np.abs(np.asarray(nu, dtype=float))
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise InvalidArgumentError("bessel_k needs x > 0")

    shape = np.broadcast(nu, x).shape
    nu_b, x_b = (np.broadcast_to(v, shape).ravel() for v in (nu, x))
    with np.errstate(divide="ignore", over="ignore"):
        out = np.log(special.kve(nu_b, x_b)) - x_b
    # kve overflows for orders far above the argument; climb from the
    # fractional part of the order instead
    for idx in np.flatnonzero(~np.isfinite(out)):
        order, arg = float(nu_b[idx]), float(x_b[idx])
        base = order - np.floor(order)
        steps = int(round(order - base))
        out[idx] = log_bessel_k_ladder(base, steps + 1, arg)[-1]
    return _finish(out.reshape(shape))


def bessel_k(nu, x, scaled: bool = False):
    """
    Modified Bessel function of the second kind, real order, x > 0.

    scaled=True returns exp(x) * K_nu(x).
    """
    x_arr = np.asarray(x, dtype=float)
    log_val = np.asarray(log_bessel_k(nu, x_arr))
    if scaled:
        log_val = log_val + x_arr
    return _finish(np.exp(log_val))


def log_gamma(x):
    """ln Gamma(x) for x > 0"""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise InvalidArgumentError("log_gamma needs x > 0")
    return _finish(special.gammaln(x_arr))


def _poisson_window(lam: float, policy: EvalPolicy) -> np.ndarray:
    """Poisson indices around the mode outside which the mass is below rel_tol**2"""
    if lam == 0.0:
        return np.zeros(1)
    log_tol = -np.log(policy.rel_tol)
    width = np.sqrt(4.0 * lam * log_tol) + 2.0 * log_tol
    lo = max(0, int(np.floor(lam - width)))
    hi = int(np.ceil(lam + width))
    return np.arange(lo, hi + 1, dtype=float)


def _poisson_gamma_series(m: float, lam: float, z: np.ndarray, upper: bool, policy: EvalPolicy) -> np.ndarray:
    """
    sum_j Pois(j; lam) * G(m + j, z), G the lower (upper=False) or upper
    (upper=True) regularized gamma, for one (m, lam) and an array of z.

    The sum runs over a window around the Poisson mode, so non-centralities
    in the hundreds stay cheap.
    """
    gamma_fn = special.gammaincc if upper else special.gammainc
    j = _poisson_window(lam, policy)
    if lam == 0.0:
        return gamma_fn(m, z)
    log_w = stats.poisson.logpmf(j, lam)

    out = np.empty(z.shape, dtype=float)
    flat_z = z.ravel()
    flat_out = out.ravel()
    step = max(1, _MAX_BLOCK // len(j))
    for start in range(0, flat_z.size, step):
        zz = flat_z[start:start + step]
        with np.errstate(divide="ignore"):
            log_g = np.log(gamma_fn(m + j[:, None], zz[None, :]))
        flat_out[start:start + step] = np.exp(special.logsumexp(log_w[:, None] + log_g, axis=0))
    return np.clip(flat_out.reshape(z.shape), 0.0, 1.0)


def _ncx2_fallback(m: float, lam: float, z: np.ndarray, upper: bool) -> np.ndarray:
    """
    scipy's non-central chi-square at 2z. For z < 1 the CDF is below
    exp(-lam (1 - z)) z^m / Gamma(m + 1); arguments where that bound
    underflows never reach scipy, which overflows on subnormal inputs.
    """
    with np.errstate(divide="ignore"):
        log_bound = np.where(z < 1.0, -lam * (1.0 - z) + m * np.log(z) - special.gammaln(m + 1.0), 0.0)
    live = log_bound >= _LOG_NEGLIGIBLE
    out = np.full(z.shape, 1.0 if upper else 0.0)
    if np.any(live):
        dist = stats.ncx2(df=2.0 * m, nc=2.0 * lam)
        out[live] = dist.sf(2.0 * z[live]) if upper else dist.cdf(2.0 * z[live])
    return out


def _marcum(m, a, b, upper: bool, policy: EvalPolicy):
    m_arr = np.asarray(m, dtype=float)
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(m_arr <= 0):
        raise InvalidArgumentError("marcum_q needs order m > 0")
    if np.any(a_arr < 0) or np.any(b_arr < 0):
        raise InvalidArgumentError("marcum_q needs a >= 0 and b >= 0")

    m_b, a_b, b_b = np.broadcast_arrays(m_arr, a_arr, b_arr)
    out = np.empty(m_b.shape, dtype=float)
    z = 0.5 * b_b * b_b
    # one series per distinct (m, a); the common case is a single pair
    pairs = np.stack([m_b.ravel(), a_b.ravel()], axis=1)
    unique_pairs, inverse = np.unique(pairs, axis=0, return_inverse=True)
    flat_z = z.ravel()
    flat_out = out.ravel()
    for index, (mm, aa) in enumerate(unique_pairs):
        sel = np.asarray(inverse).ravel() == index
        lam = 0.5 * aa * aa
        # windows wider than the term budget go through scipy's non-central chi-square
        if len(_poisson_window(lam, policy)) > policy.max_series_terms:
            flat_out[sel] = _ncx2_fallback(mm, lam, flat_z[sel], upper)
        else:
            flat_out[sel] = _poisson_gamma_series(mm, lam, flat_z[sel], upper, policy)
    return _finish(flat_out.reshape(m_b.shape))


def marcum_q(m, a, b, policy: EvalPolicy = DEFAULT_POLICY):
    """
    Generalized Marcum Q function Q_m(a, b), real order m > 0.

    Evaluated as the non-central chi-square survival series
    sum_j Pois(j; a^2/2) Q(m+j, b^2/2) with Q the regularized upper gamma.
    """
    return _marcum(m, a, b, upper=True, policy=policy)


def marcum_p(m, a, b, policy: EvalPolicy = DEFAULT_POLICY):
    """1 - Q_m(a, b) from the lower-gamma series, accurate for small values"""
    return _marcum(m, a, b, upper=False, policy=policy)


def laguerre_half(x):
    """
    Laguerre function L_{1/2}(x) for x <= 0.

    L_{1/2}(x) = e^{x/2} [(1 - x) I_0(-x/2) - x I_1(-x/2)], written with the
    exponentially scaled Bessel functions so large |x| does not overflow.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr > 0):
        raise InvalidArgumentError("laguerre_half is defined here for x <= 0")
    h = -x_arr / 2.0
    return _finish((1.0 - x_arr) * special.ive(0, h) - x_arr * special.ive(1, h))


def gaussian_q(x):
    """Gaussian tail probability Q(x) = erfc(x / sqrt 2) / 2"""
    x_arr = np.asarray(x, dtype=float)
    return _finish(0.5 * special.erfc(x_arr / np.sqrt(2.0)))


def gaussian_q_inv(p):
    """Inverse of gaussian_q on (0, 1)"""
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)):
        raise InvalidArgumentError("gaussian_q_inv needs p in (0, 1)")
    # Q(x) = Phi(-x)
    return _finish(-special.ndtri(p_arr))


def talbot_nodes(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Contour points r theta_k (cot theta_k + i) and weights of the fixed Talbot rule"""
    if degree < 2:
        raise InvalidArgumentError("talbot degree must be >= 2")
    r = 2.0 * degree / 5.0
    theta = np.arange(degree) * np.pi / degree
    cot = np.zeros(degree)
    cot[1:] = 1.0 / np.tan(theta[1:])
    shape = np.empty(degree, dtype=complex)
    shape[0] = r
    shape[1:] = r * theta[1:] * (cot[1:] + 1j)
    weight = np.empty(degree, dtype=complex)
    weight[0] = 0.5 * np.exp(r)
    weight[1:] = np.exp(shape[1:]) * (1 + 1j * theta[1:] * (1 + cot[1:] ** 2) - 1j * cot[1:])
    return shape, weight


def talbot_inverse(transform: Callable, x, degree: int = 24):
    """
    Fixed-Talbot inverse Laplace transform f(x) of transform(s), x > 0.

    transform must accept a complex ndarray of Laplace variables. With
    double precision, degree 24 keeps round-off near e^{0.4 degree} eps.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x_arr <= 0):
        raise InvalidArgumentError("talbot_inverse needs x > 0")
    shape, weight = talbot_nodes(degree)
    r = 2.0 * degree / 5.0
    out = np.empty(x_arr.shape, dtype=float)
    for i, t in enumerate(x_arr):
        values = np.asarray(transform(shape / t), dtype=complex)
        # weight[k] already carries exp(t * s_k)
        out[i] = (r / (degree * t)) * np.real(np.dot(weight, values))
    return float(out[0]) if np.ndim(x) == 0 else out
