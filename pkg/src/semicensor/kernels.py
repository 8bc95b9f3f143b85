"""Sojourn-time kernels G(x, .) for the censored (Y) and observed (Z) phases.

Every kernel is a family of absolutely continuous distributions on
``[0, inf)`` indexed by the jump time ``x`` at which the phase is entered.
All evaluators broadcast over numpy arrays in ``x`` and ``tau``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .exceptions import DomainError, ValidationError

__all__ = [
    "SojournKernel",
    "GammaKernel",
    "WeibullKernel",
    "HarmonicExponential",
    "KernelDiagnostics",
    "WeibullEnvelope",
    "kernel_from_dict",
]

_TINY_SURVIVAL = 1e-300


def _as_fn(value):
    if callable(value):
        return value
    v = float(value)
    return lambda x: np.full(np.shape(x), v)


def _scalar_out(arr):
    arr = np.asarray(arr, dtype=float)
    return arr[()] if arr.ndim == 0 else arr


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("elapsed time tau must be non-negative")
    return tau


def _gamma_tail_hazard(k, t, max_iter=300, eps=1e-15):
    """Return ``t**(k-1) exp(-t) / Gamma(k, t)`` by a modified Lentz continued fraction.

    Only used for ``t > k + 1`` where the fraction converges quickly and the
    regularised survival function would underflow.
    """
    fpmin = 1e-300
    b = t + 1.0 - k
    c = np.full_like(t, 1.0 / fpmin)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, max_iter + 1):
        an = -i * (i - k)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < fpmin, fpmin, d)
        c = b + an / c
        c = np.where(np.abs(c) < fpmin, fpmin, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) < eps):
            break
    return 1.0 / (t * h)


@dataclass(frozen=True)
class KernelDiagnostics:
    """Outcome of checking a kernel against the non-explosion conditions."""

    family: str
    horizon: tuple
    max_rate: float
    min_rate: float
    min_shape: float
    max_shape: float
    c_bound: float
    k_bound: float | None
    passed: bool
    messages: tuple = field(default_factory=tuple)


class WeibullEnvelope:
    """Hazard envelope ``k c**k tau**(k-1)`` of a homogeneous Weibull renewal process."""

    def __init__(self, k, c):
        self.k = float(k)
        self.c = float(c)

    def __call__(self, tau):
        tau = _check_tau(tau)
        return _scalar_out(self.k * self.c**self.k * np.power(tau, self.k - 1.0))

    def __repr__(self):
        return f"WeibullEnvelope(k={self.k!r}, c={self.c!r})"


class SojournKernel:
    """Base class: subclasses provide ``shape``, ``rate`` and the distribution maths."""

    family = "abstract"

    def shape(self, x):
        raise NotImplementedError

    def rate(self, x):
        raise NotImplementedError

    # distribution functions -------------------------------------------------
    def density(self, x, tau):
        raise NotImplementedError

    def cdf(self, x, tau):
        raise NotImplementedError

    def sf(self, x, tau):
        """Survival function ``1 - G(x, tau)``."""
        raise NotImplementedError

    def ppf(self, x, u):
        """Inverse CDF in ``tau`` for probability ``u``."""
        raise NotImplementedError

    def isf(self, x, p):
        """Inverse survival function: the ``tau`` with ``sf(x, tau) = p``."""
        raise NotImplementedError

    def mean(self, x):
        raise NotImplementedError

    def hazard(self, x_n, x):
        """Conditional intensity at time ``x`` of a phase entered at ``x_n``.

        Equals ``g(x_n, x - x_n) / (1 - G(x_n, x - x_n))`` and is zero where the
        survival function vanishes.
        """
        x_n = np.asarray(x_n, dtype=float)
        x = np.asarray(x, dtype=float)
        if np.any(x < x_n):
            raise DomainError("hazard requires x >= x_n")
        tau = x - x_n
        g = np.asarray(self.density(x_n, tau), dtype=float)
        s = np.asarray(self.sf(x_n, tau), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(s > _TINY_SURVIVAL, g / np.where(s > 0, s, 1.0), 0.0)
        return _scalar_out(out)

    def hazard_bound(self, x_n, c_bound=None, k_bound=None):
        raise NotImplementedError

    def sample_sojourn(self, x, rng, size=None):
        """Draw sojourn times for phases entered at ``x`` by inverting the CDF."""
        u = rng.random(size)
        return self.ppf(x, u)

    def validate(self, horizon, c_bound=None, k_bound=None, n_grid=1001, strict=True):
        """Check the non-explosion conditions on a grid over ``horizon``.

        ``c_bound`` defaults to the largest rate seen on the grid, so the rate
        condition is then satisfied by construction and only the shape
        conditions remain informative.
        """
        lo, hi = map(float, horizon)
        grid = np.linspace(lo, hi, n_grid) if hi > lo else np.array([lo])
        rates = np.asarray(self.rate(grid), dtype=float)
        shapes = np.asarray(self.shape(grid), dtype=float)
        c = float(np.max(rates)) if c_bound is None else float(c_bound)
        messages = list(self._validity_messages(rates, shapes, c, k_bound))
        diag = KernelDiagnostics(
            family=self.family,
            horizon=(lo, hi),
            max_rate=float(np.max(rates)),
            min_rate=float(np.min(rates)),
            min_shape=float(np.min(shapes)),
            max_shape=float(np.max(shapes)),
            c_bound=c,
            k_bound=None if k_bound is None else float(k_bound),
            passed=not messages,
            messages=tuple(messages),
        )
        if strict and messages:
            raise ValidationError(f"{self.family} kernel invalid: " + "; ".join(messages))
        return diag

    def _validity_messages(self, rates, shapes, c, k_bound):
        if np.any(rates <= 0):
            yield "rate must be strictly positive"
        if np.any(rates > c * (1 + 1e-12)):
            yield f"rate exceeds c_bound={c:g}"

    def to_dict(self):
        raise NotImplementedError


class _ShapeRateKernel(SojournKernel):
    def __init__(self, shape, rate):
        self._shape_raw = shape
        self._rate_raw = rate
        self._shape = _as_fn(shape)
        self._rate = _as_fn(rate)

    def shape(self, x):
        return self._shape(np.asarray(x, dtype=float))

    def rate(self, x):
        return self._rate(np.asarray(x, dtype=float))

    @property
    def is_constant(self):
        return not (callable(self._shape_raw) or callable(self._rate_raw))

    def to_dict(self):
        if not self.is_constant:
            raise ValueError("only constant-parameter kernels can be serialised")
        return {"family": self.family, "shape": float(self._shape_raw), "rate": float(self._rate_raw)}

    def __repr__(self):
        return f"{type(self).__name__}(shape={self._shape_raw!r}, rate={self._rate_raw!r})"


class GammaKernel(_ShapeRateKernel):
    """Gamma sojourn times with shape ``k(x)`` and rate ``lambda(x)``."""

    family = "gamma"

    def density(self, x, tau):
        tau = _check_tau(tau)
        k, lam = self.shape(x), self.rate(x)
        logg = k * np.log(lam) + special.xlogy(k - 1.0, tau) - lam * tau - special.gammaln(k)
        return _scalar_out(np.exp(logg))

    def cdf(self, x, tau):
        tau = _check_tau(tau)
        return _scalar_out(special.gammainc(self.shape(x), self.rate(x) * tau))

    def sf(self, x, tau):
        tau = _check_tau(tau)
        return _scalar_out(special.gammaincc(self.shape(x), self.rate(x) * tau))

    def ppf(self, x, u):
        return _scalar_out(special.gammaincinv(self.shape(x), u) / self.rate(x))

    def isf(self, x, p):
        return _scalar_out(special.gammainccinv(self.shape(x), p) / self.rate(x))

    def mean(self, x):
        return _scalar_out(self.shape(x) / self.rate(x))

    def hazard(self, x_n, x):
        x_n = np.asarray(x_n, dtype=float)
        x = np.asarray(x, dtype=float)
        if np.any(x < x_n):
            raise DomainError("hazard requires x >= x_n")
        k, lam, tau = np.broadcast_arrays(self.shape(x_n), self.rate(x_n), x - x_n)
        k, lam = k.astype(float), lam.astype(float)
        t = lam * tau
        out = np.empty(t.shape)
        tail = t > k + 1.0
        if np.any(tail):
            out[tail] = lam[tail] * _gamma_tail_hazard(k[tail], t[tail])
        head = ~tail
        if np.any(head):
            kh, th = k[head], t[head]
            logg = special.xlogy(kh - 1.0, th) - th - special.gammaln(kh)
            s = special.gammaincc(kh, th)
            with np.errstate(divide="ignore"):
                out[head] = np.where(s > _TINY_SURVIVAL, lam[head] * np.exp(logg) / np.where(s > 0, s, 1.0), 0.0)
        return _scalar_out(out)

    def hazard_bound(self, x_n, c_bound=None, k_bound=None):
        """Upper bound ``lambda(x_n)`` on the hazard of a phase entered at ``x_n`` (needs k >= 1)."""
        return _scalar_out(self.rate(x_n))

    def _validity_messages(self, rates, shapes, c, k_bound):
        yield from super()._validity_messages(rates, shapes, c, k_bound)
        if np.any(shapes < 1):
            yield "gamma shape must be >= 1"


class WeibullKernel(_ShapeRateKernel):
    """Weibull sojourn times with shape ``k(x)`` and rate ``lambda(x)``."""

    family = "weibull"

    def density(self, x, tau):
        tau = _check_tau(tau)
        k, lam = self.shape(x), self.rate(x)
        with np.errstate(divide="ignore"):
            logg = np.log(k) + np.log(lam) + special.xlogy(k - 1.0, lam * tau) - (lam * tau) ** k
        return _scalar_out(np.exp(logg))

    def cdf(self, x, tau):
        tau = _check_tau(tau)
        return _scalar_out(-np.expm1(-((self.rate(x) * tau) ** self.shape(x))))

    def sf(self, x, tau):
        tau = _check_tau(tau)
        return _scalar_out(np.exp(-((self.rate(x) * tau) ** self.shape(x))))

    def ppf(self, x, u):
        return _scalar_out((-np.log1p(-np.asarray(u, dtype=float))) ** (1.0 / self.shape(x)) / self.rate(x))

    def isf(self, x, p):
        with np.errstate(divide="ignore"):
            return _scalar_out((-np.log(np.asarray(p, dtype=float))) ** (1.0 / self.shape(x)) / self.rate(x))

    def mean(self, x):
        k = self.shape(x)
        return _scalar_out(special.gamma(1.0 + 1.0 / k) / self.rate(x))

    def hazard(self, x_n, x):
        x_n = np.asarray(x_n, dtype=float)
        x = np.asarray(x, dtype=float)
        if np.any(x < x_n):
            raise DomainError("hazard requires x >= x_n")
        k, lam = self.shape(x_n), self.rate(x_n)
        with np.errstate(divide="ignore"):
            return _scalar_out(k * lam * (lam * (x - x_n)) ** (k - 1.0))

    def hazard_bound(self, x_n, c_bound=None, k_bound=None):
        """Envelope hazard of the dominating homogeneous Weibull renewal process.

        Returns a callable of the elapsed time since ``x_n``.
        """
        k = float(self.shape(x_n)) if k_bound is None else float(k_bound)
        c = float(self.rate(x_n)) if c_bound is None else float(c_bound)
        return WeibullEnvelope(k, c)

    def _validity_messages(self, rates, shapes, c, k_bound):
        yield from super()._validity_messages(rates, shapes, c, k_bound)
        constant_shape = np.ptp(shapes) == 0
        if constant_shape and shapes[0] > 0:
            return
        if np.any(shapes < 1):
            yield "non-constant weibull shape must be >= 1"
        if k_bound is None:
            yield "non-constant weibull shape needs k_bound"
        elif np.any(shapes > k_bound):
            yield f"weibull shape exceeds k_bound={k_bound:g}"


class HarmonicExponential(SojournKernel):
    """Exponential sojourn times with rate ``alpha * (b + sin(c * x))``.

    ``alpha`` sets the amplitude, ``b >= 1`` the elevation of the harmonic
    away from zero and ``c`` its angular frequency; ``c = 0`` gives a constant
    rate ``alpha * b``.
    """

    family = "harmonic"

    def __init__(self, alpha, b, c):
        self.alpha = float(alpha)
        self.b = float(b)
        self.c = float(c)
        if self.alpha <= 0:
            raise ValidationError("alpha must be positive")
        if self.b < 1:
            raise ValidationError("elevation b must be >= 1")

    def shape(self, x):
        return np.ones(np.shape(x))

    def rate(self, x):
        return self.alpha * (self.b + np.sin(self.c * np.asarray(x, dtype=float)))

    def density(self, x, tau):
        tau = _check_tau(tau)
        lam = self.rate(x)
        return _scalar_out(lam * np.exp(-lam * tau))

    def cdf(self, x, tau):
        tau = _check_tau(tau)
        return _scalar_out(-np.expm1(-self.rate(x) * tau))

    def sf(self, x, tau):
        tau = _check_tau(tau)
        return _scalar_out(np.exp(-self.rate(x) * tau))

    def ppf(self, x, u):
        return _scalar_out(-np.log1p(-np.asarray(u, dtype=float)) / self.rate(x))

    def isf(self, x, p):
        with np.errstate(divide="ignore"):
            return _scalar_out(-np.log(np.asarray(p, dtype=float)) / self.rate(x))

    def mean(self, x):
        return _scalar_out(1.0 / self.rate(x))

    def hazard(self, x_n, x):
        x_n = np.asarray(x_n, dtype=float)
        x = np.asarray(x, dtype=float)
        if np.any(x < x_n):
            raise DomainError("hazard requires x >= x_n")
        return _scalar_out(np.broadcast_to(self.rate(x_n), np.broadcast_shapes(x_n.shape, x.shape)))

    def hazard_bound(self, x_n, c_bound=None, k_bound=None):
        return _scalar_out(self.rate(x_n))

    def _validity_messages(self, rates, shapes, c, k_bound):
        # b >= 1 lets the rate touch zero at isolated points
        if np.any(rates < 0):
            yield "rate must be non-negative"
        if np.any(rates > c * (1 + 1e-12)):
            yield f"rate exceeds c_bound={c:g}"

    @property
    def min_rate(self):
        """Infimum of the rate over the real line."""
        return self.alpha * (self.b - 1.0) if self.c != 0 else self.alpha * self.b

    def to_dict(self):
        return {"family": self.family, "alpha": self.alpha, "b": self.b, "c": self.c}

    def __repr__(self):
        return f"HarmonicExponential(alpha={self.alpha!r}, b={self.b!r}, c={self.c!r})"


def kernel_from_dict(cfg):
    """Build a kernel from its config record (``family`` tag plus parameters)."""
    family = cfg.get("family")
    if family == "harmonic":
        return HarmonicExponential(cfg["alpha"], cfg.get("b", 1.0), cfg.get("c", 0.0))
    if family == "gamma":
        return GammaKernel(cfg["shape"], cfg["rate"])
    if family == "weibull":
        return WeibullKernel(cfg["shape"], cfg["rate"])
    raise ValidationError(f"unknown kernel family {family!r}")
