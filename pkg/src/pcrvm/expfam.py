"""Exponential families in canonical form and the special functions they need.

Every density used by the variational engine is written as

    p(x) = h(x) exp(eta . R(x) - A(eta))

with the natural parameter ``eta``, sufficient statistic ``R`` and
log-normalizer ``A``.  Four families are supported:

=========  ====================  ======================  =========================
family     eta                   R(x)                    moment parameters
=========  ====================  ======================  =========================
gaussian   (m*rho, -rho/2)       (x, x**2)               mean m, precision rho
gamma      (kappa-1, -lambda)    (log x, x)              shape kappa, rate lambda
bernoulli  log(p/(1-p))          x                       success probability p
beta       (r, s)                (log x, log(1-x))       shape r, shape s
=========  ====================  ======================  =========================

The Beta base measure is h(x) = 1/(x(1-x)) so that eta = (r, s) exactly.

``digamma``, ``trigamma`` and ``log_gamma`` are implemented here with an
argument shift followed by the asymptotic series, so results do not depend on
the platform's libm special functions.  They accept scalars or arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Family",
    "InvalidParameterError",
    "NaturalParam",
    "log_gamma",
    "digamma",
    "trigamma",
    "sigmoid",
    "log1pexp",
    "log_normalizer",
    "grad_log_normalizer",
    "expected_log_base",
    "entropy",
    "cross_entropy",
    "gaussian",
    "gamma",
    "bernoulli",
    "beta",
    "ETA_CLAMP",
    "moments",
]

# Bernoulli natural parameters are clamped here before exponentiation.
ETA_CLAMP = 500.0

_SHIFT = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Bernoulli numbers B_2k / (2k (2k-1)) for the Stirling series of log Gamma.
_LGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
)
# B_2k / (2k) for the digamma series.
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
)
# B_2k for the trigamma series.
_TRIGAMMA_SERIES = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
)


class InvalidParameterError(ValueError):
    """Raised when a natural parameter lies outside its family's domain."""


def _check_positive(x, name):
    if np.any(~(np.asarray(x) > 0)):
        raise ValueError(f"{name} requires x > 0")


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------


def _log_gamma_scalar(x: float) -> float:
    prod = 1.0
    while x < _SHIFT:
        prod *= x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    power = inv
    for coef in _LGAMMA_SERIES:
        series += coef * power
        power *= inv2
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI + series - math.log(prod)


def _digamma_scalar(x: float) -> float:
    acc = 0.0
    while x < _SHIFT:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for coef in _DIGAMMA_SERIES:
        series += coef * power
        power *= inv2
    return acc + math.log(x) - 0.5 / x - series


def _trigamma_scalar(x: float) -> float:
    acc = 0.0
    while x < _SHIFT:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    power = inv2 * inv
    for coef in _TRIGAMMA_SERIES:
        series += coef * power
        power *= inv2
    return acc + inv + 0.5 * inv2 + series


def _shifted(x):
    """Shift an array to x >= _SHIFT; returns (shifted x, list of offsets applied)."""
    x = np.array(x, dtype=float, copy=True)
    steps = []
    while True:
        mask = x < _SHIFT
        if not mask.any():
            return x, steps
        steps.append((mask, x[mask].copy()))
        x[mask] += 1.0


def log_gamma(x):
    """log Gamma(x) for x > 0."""
    if np.ndim(x) == 0:
        x = float(x)
        if not x > 0:
            raise ValueError("log_gamma requires x > 0")
        return _log_gamma_scalar(x)
    _check_positive(x, "log_gamma")
    z, steps = _shifted(x)
    logprod = np.zeros_like(z)
    for mask, vals in steps:
        logprod[mask] += np.log(vals)
    inv = 1.0 / z
    inv2 = inv * inv
    series = np.zeros_like(z)
    power = inv.copy()
    for coef in _LGAMMA_SERIES:
        series += coef * power
        power *= inv2
    return (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series - logprod


def digamma(x):
    """Digamma function psi(x) = d/dx log Gamma(x) for x > 0."""
    if np.ndim(x) == 0:
        x = float(x)
        if not x > 0:
            raise ValueError("digamma requires x > 0")
        return _digamma_scalar(x)
    _check_positive(x, "digamma")
    z, steps = _shifted(x)
    acc = np.zeros_like(z)
    for mask, vals in steps:
        acc[mask] -= 1.0 / vals
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    power = inv2.copy()
    for coef in _DIGAMMA_SERIES:
        series += coef * power
        power *= inv2
    return acc + np.log(z) - 0.5 / z - series


def trigamma(x):
    """Trigamma function, the derivative of digamma, for x > 0."""
    if np.ndim(x) == 0:
        x = float(x)
        if not x > 0:
            raise ValueError("trigamma requires x > 0")
        return _trigamma_scalar(x)
    _check_positive(x, "trigamma")
    z, steps = _shifted(x)
    acc = np.zeros_like(z)
    for mask, vals in steps:
        acc[mask] += 1.0 / (vals * vals)
    inv = 1.0 / z
    inv2 = inv * inv
    series = np.zeros_like(z)
    power = inv2 * inv
    for coef in _TRIGAMMA_SERIES:
        series += coef * power
        power *= inv2
    return acc + inv + 0.5 * inv2 + series


def sigmoid(eta):
    """Logistic function with the natural parameter clamped to +-ETA_CLAMP."""
    if np.ndim(eta) == 0:
        eta = min(max(float(eta), -ETA_CLAMP), ETA_CLAMP)
        if eta >= 0:
            return 1.0 / (1.0 + math.exp(-eta))
        e = math.exp(eta)
        return e / (1.0 + e)
    eta = np.clip(np.asarray(eta, dtype=float), -ETA_CLAMP, ETA_CLAMP)
    e = np.exp(-np.abs(eta))
    return np.where(eta >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def log1pexp(eta):
    """Overflow-safe log(1 + exp(eta))."""
    if np.ndim(eta) == 0:
        eta = float(eta)
        return max(eta, 0.0) + math.log1p(math.exp(-abs(eta)))
    eta = np.asarray(eta, dtype=float)
    return np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta)))


# ---------------------------------------------------------------------------
# natural parameters
# ---------------------------------------------------------------------------


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    GAMMA = "gamma"
    BERNOULLI = "bernoulli"
    BETA = "beta"


@dataclass(frozen=True)
class NaturalParam:
    """A family tag plus its natural parameter.

    ``eta`` has a trailing axis of length 2 for the two-parameter families and
    no trailing axis for Bernoulli; leading axes broadcast, so one instance can
    hold a whole block of independent factors.
    """

    family: Family
    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float))
        if self.family is not Family.BERNOULLI and self.eta.shape[-1:] != (2,):
            raise InvalidParameterError(f"{self.family.value}: eta needs a trailing axis of length 2")
        self.validate()

    @property
    def eta1(self):
        return self.eta[..., 0]

    @property
    def eta2(self):
        return self.eta[..., 1]

    def validate(self):
        eta = self.eta
        if not np.all(np.isfinite(eta)):
            raise InvalidParameterError(f"{self.family.value}: non-finite natural parameter")
        if self.family is Family.GAUSSIAN:
            ok = np.all(self.eta2 < 0)
        elif self.family is Family.GAMMA:
            ok = np.all(self.eta1 > -1) and np.all(self.eta2 < 0)
        elif self.family is Family.BETA:
            ok = np.all(self.eta1 > 0) and np.all(self.eta2 > 0)
        else:
            ok = True
        if not ok:
            raise InvalidParameterError(f"{self.family.value}: natural parameter outside the family domain")


def gaussian(m, rho) -> NaturalParam:
    """Gaussian with mean ``m`` and precision ``rho``."""
    m, rho = np.broadcast_arrays(np.asarray(m, float), np.asarray(rho, float))
    return NaturalParam(Family.GAUSSIAN, np.stack([m * rho, -0.5 * rho], axis=-1))


def gamma(shape, rate) -> NaturalParam:
    shape, rate = np.broadcast_arrays(np.asarray(shape, float), np.asarray(rate, float))
    return NaturalParam(Family.GAMMA, np.stack([shape - 1.0, -rate], axis=-1))


def bernoulli(p) -> NaturalParam:
    p = np.asarray(p, float)
    return NaturalParam(Family.BERNOULLI, np.log(p) - np.log1p(-p))


def beta(r, s) -> NaturalParam:
    r, s = np.broadcast_arrays(np.asarray(r, float), np.asarray(s, float))
    return NaturalParam(Family.BETA, np.stack([r, s], axis=-1))


def moments(p: NaturalParam):
    """Map back to the conventional parameters listed in the module table."""
    if p.family is Family.GAUSSIAN:
        rho = -2.0 * p.eta2
        return p.eta1 / rho, rho
    if p.family is Family.GAMMA:
        return p.eta1 + 1.0, -p.eta2
    if p.family is Family.BERNOULLI:
        return sigmoid(p.eta)
    return p.eta1, p.eta2


def log_normalizer(p: NaturalParam):
    e = p.eta
    if p.family is Family.GAUSSIAN:
        e1, e2 = e[..., 0], e[..., 1]
        return -(e1 * e1) / (4.0 * e2) - 0.5 * np.log(-2.0 * e2)
    if p.family is Family.GAMMA:
        e1, e2 = e[..., 0], e[..., 1]
        return log_gamma(e1 + 1.0) - (e1 + 1.0) * np.log(-e2)
    if p.family is Family.BERNOULLI:
        return log1pexp(np.clip(e, -ETA_CLAMP, ETA_CLAMP))
    e1, e2 = e[..., 0], e[..., 1]
    return log_gamma(e1) + log_gamma(e2) - log_gamma(e1 + e2)


def grad_log_normalizer(p: NaturalParam):
    """Expected sufficient statistic E[R(x)] = dA/d(eta)."""
    e = p.eta
    if p.family is Family.GAUSSIAN:
        m, rho = moments(p)
        return np.stack([m, m * m + 1.0 / rho], axis=-1)
    if p.family is Family.GAMMA:
        e1, e2 = e[..., 0], e[..., 1]
        return np.stack([digamma(e1 + 1.0) - np.log(-e2), -(e1 + 1.0) / e2], axis=-1)
    if p.family is Family.BERNOULLI:
        return sigmoid(e)
    e1, e2 = e[..., 0], e[..., 1]
    total = digamma(e1 + e2)
    return np.stack([digamma(e1) - total, digamma(e2) - total], axis=-1)


def expected_log_base(p: NaturalParam):
    """E[log h(x)] under ``p``."""
    if p.family is Family.GAUSSIAN:
        return np.full(np.shape(p.eta1), -_HALF_LOG_2PI)
    if p.family is Family.BETA:
        g = grad_log_normalizer(p)
        return -g[..., 0] - g[..., 1]
    return np.zeros(np.shape(p.eta) if p.family is Family.BERNOULLI else np.shape(p.eta1))


def _dot(p: NaturalParam, eta, grad):
    if p.family is Family.BERNOULLI:
        return eta * grad
    return np.sum(eta * grad, axis=-1)


def entropy(p: NaturalParam):
    """Entropy -E[log h] + A(eta) - eta . grad A(eta)."""
    eta = p.eta
    if p.family is Family.BERNOULLI:
        eta = np.clip(eta, -ETA_CLAMP, ETA_CLAMP)
    return -expected_log_base(p) + log_normalizer(p) - _dot(p, eta, grad_log_normalizer(p))


def cross_entropy(q: NaturalParam, prior: NaturalParam):
    """E_q[log prior(x)] for two members of the same family.

    Equal to E_q[log h] + zeta . grad A(eta) - A(zeta) with ``zeta`` the
    prior's natural parameter and ``eta`` the one of ``q``.
    """
    if q.family is not prior.family:
        raise InvalidParameterError("cross_entropy needs matching families")
    return expected_log_base(q) + _dot(q, prior.eta, grad_log_normalizer(q)) - log_normalizer(prior)
