"""Semi-Markov censoring: age/excess law, atom probabilities and the mark kernel.

An occurrence at time ``x`` is either observed exactly (an atom, mark
``(x, 0)``) when ``x`` falls in a Z-phase, or reported as the Y-phase
``[a, a + l]`` that contains it.  The past before ``t0`` is truncated: the
renewal density is taken to vanish there.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .exceptions import DomainError, QuadratureError, SamplingError
from .kernels import HarmonicExponential
from .semimarkov import RenewalDensity, validate_renewal_density

__all__ = ["CensoringModel", "Mark", "MarkSample", "survival_integral"]

QUAD_TOL = 1e-8

# Gauss-Legendre panels for the vectorised survival integral: geometrically
# graded towards tau = 0 (Weibull shapes < 1 have a cusp there), then uniform.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_PANEL_EDGES = np.unique(np.concatenate([[0.0], 4.0 ** -np.arange(10, 0, -1), np.linspace(0.25, 1.0, 13)]))
_Q_NODES = (
    (_PANEL_EDGES[:-1, None] + _PANEL_EDGES[1:, None]) / 2
    + (np.diff(_PANEL_EDGES)[:, None] / 2) * _GL_NODES[None, :]
).ravel()
_Q_WEIGHTS = ((np.diff(_PANEL_EDGES)[:, None] / 2) * _GL_WEIGHTS[None, :]).ravel()


def survival_integral(kernel, renewal, xs, t0):
    """Vectorised ``D(x) = int_{t0}^{x} [1 - G(s, x - s)] m(s) ds`` for an array of ``x``.

    Uses a fixed composite Gauss-Legendre rule per renewal piece, written in
    the elapsed time ``tau = x - s``.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    out = np.zeros(xs.shape)
    for lo, hi, level in renewal.pieces():
        if level == 0:
            continue
        lo = max(lo, t0)
        tau_a = xs - np.minimum(xs, hi)
        tau_b = xs - lo
        ok = tau_b > tau_a
        if not np.any(ok):
            continue
        ta, tb, x = tau_a[ok], tau_b[ok], xs[ok]
        w = tb - ta
        tau = ta[:, None] + w[:, None] * _Q_NODES[None, :]
        vals = kernel.sf(x[:, None] - tau, tau)
        out[ok] += level * w * (vals @ _Q_WEIGHTS)
    return out


@dataclass(frozen=True)
class Mark:
    """Interval mark ``(a, l)``; ``l == 0`` is an exactly observed time."""

    a: float
    l: float

    @property
    def is_atom(self):
        return self.l == 0


@dataclass(frozen=True)
class MarkSample:
    """Occurrence times with their sampled marks."""

    x: np.ndarray
    a: np.ndarray
    l: np.ndarray
    is_atom: np.ndarray

    def __len__(self):
        return len(self.x)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "a", "l", "is_atom"])
            for x, a, l, at in zip(self.x.tolist(), self.a.tolist(), self.l.tolist(), self.is_atom.tolist()):
                w.writerow([repr(x), repr(a), repr(l), int(at)])


class CensoringModel:
    """Mark kernel built from a Y-phase kernel and a piecewise-constant renewal density.

    Parameters
    ----------
    kernel_Y : SojournKernel
        Sojourn-time kernel of the censored phase.
    renewal : RenewalDensity
        Density ``m`` of the cycle-completion (Y-phase start) times.
    t0 : float, optional
        Truncation point of the past; defaults to the first break of ``renewal``.
    validate : bool
        Check the sufficient renewal-density bound for harmonic kernels.
    """

    def __init__(self, kernel_Y, renewal, t0=None, validate=True):
        self.kernel_Y = kernel_Y
        self.renewal = renewal
        self.t0 = float(renewal.breaks[0] if t0 is None else t0)
        if not math.isfinite(self.t0):
            raise DomainError("t0 must be finite")
        if validate and isinstance(kernel_Y, HarmonicExponential):
            validate_renewal_density(renewal, kernel_Y, strict=True)
        self._norm_cache = {}

    def __repr__(self):
        return f"CensoringModel({self.kernel_Y!r}, {self.renewal!r}, t0={self.t0!r})"

    # quadrature helpers ------------------------------------------------------
    def _integrate_m(self, f, lo, hi):
        total = 0.0
        for a, b, level in self.renewal.pieces():
            left, right = max(a, lo), min(b, hi)
            if right <= left or level == 0:
                continue
            val, err = integrate.quad(f, left, right, epsabs=1e-11, epsrel=1e-11, limit=200)
            if not err <= QUAD_TOL:
                raise QuadratureError(f"quadrature on [{left}, {right}] failed (error estimate {err:g})")
            total += level * val
        return total

    def _check_x(self, x):
        if x < self.t0:
            raise DomainError(f"x={x} precedes the truncation point t0={self.t0}")

    def normalizer(self, x):
        """``D(x) = int_{t0}^{x} [1 - G_Y(s, x - s)] m(s) ds`` by adaptive quadrature."""
        if np.ndim(x):
            return np.array([self.normalizer(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        x = float(x)
        self._check_x(x)
        if x not in self._norm_cache:
            k = self.kernel_Y
            self._norm_cache[x] = self._integrate_m(lambda s: float(k.sf(s, x - s)), self.t0, x)
        return self._norm_cache[x]

    def normalizer_fast(self, xs):
        """Vectorised fixed-rule version of :meth:`normalizer`."""
        xs = np.asarray(xs, dtype=float)
        if np.any(xs < self.t0):
            raise DomainError("x precedes the truncation point t0")
        return survival_integral(self.kernel_Y, self.renewal, xs, self.t0).reshape(xs.shape)

    # distributions -----------------------------------------------------------
    def atom_probability(self, x):
        """Probability ``w_x`` that an occurrence at ``x`` falls in a Z-phase."""
        return 1.0 - self.normalizer(x)

    def age_excess_cdf(self, t, x, z, singular=True):
        """Joint CDF ``P(A(t) <= x, B(t) <= z)`` of age and excess w.r.t. the Y-phase.

        With ``singular=True`` the process starts with a Y-phase at ``t0`` and
        the first-jump component (mass ``1 - G_Y(t0, t - t0)``) is included.
        With ``singular=False`` no Y-phase is running at ``t0``, matching the
        mark kernel.
        """
        t, x, z = float(t), float(x), float(z)
        self._check_x(t)
        span = t - self.t0
        if not 0 <= x <= span * (1 + 1e-14):
            raise DomainError("need 0 <= x <= t - t0")
        if z < 0:
            raise DomainError("need z >= 0")
        k = self.kernel_Y
        first = float(k.cdf(self.t0, span)) if singular else 1.0
        inner = self._integrate_m(lambda s: float(k.sf(s, t + z - s)), t - x, t)
        outer = self._integrate_m(lambda s: float(k.sf(s, t - s)), self.t0, t - x)
        value = first - inner - outer
        if singular and math.isclose(x, span, rel_tol=0, abs_tol=1e-12):
            value += float(k.cdf(self.t0, span + z)) - float(k.cdf(self.t0, span))
        return value

    def _support(self, x, a, l, strict):
        x, a, l = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, a, l)))
        # either rounding of the covering condition counts
        covers = (x <= a + l) | (l >= x - a)
        inside = (a >= self.t0) & (a <= x) & covers & (l >= 0)
        if strict and not np.all(inside):
            raise DomainError("(a, l) outside the support t0 <= a <= x <= a + l")
        return x, a, l, inside

    def interval_density(self, x, a, l, strict=True):
        """Joint density ``q_x(a, l) = m(a) g_Y(a, l) / D(x)`` of start and length."""
        x, a, l, inside = self._support(x, a, l, strict)
        with np.errstate(invalid="ignore"):
            val = self.renewal(a) * self.kernel_Y.density(a, np.maximum(l, 0.0)) / self.normalizer(x)
        out = np.where(inside, val, 0.0)
        return out[()] if out.ndim == 0 else out

    def marginal_start_density(self, x, a, strict=True):
        """Density ``f_x(a) = m(a) [1 - G_Y(a, x - a)] / D(x)`` of the interval start."""
        x, a, _, inside = self._support(x, a, np.inf, strict)
        with np.errstate(invalid="ignore"):
            val = self.renewal(a) * self.kernel_Y.sf(a, np.maximum(x - a, 0.0)) / self.normalizer(x)
        out = np.where(inside, val, 0.0)
        return out[()] if out.ndim == 0 else out

    def conditional_length_density(self, x, a, l):
        """Density of the length given the start: ``g_Y(a, l) / [1 - G_Y(a, x - a)]``."""
        x, a, l = (np.asarray(v, dtype=float) for v in (x, a, l))
        if np.any(l < x - a) or np.any(a > x):
            raise DomainError("need a <= x and l >= x - a")
        out = self.kernel_Y.density(a, l) / self.kernel_Y.sf(a, x - a)
        return out[()] if np.ndim(out) == 0 else out

    # sampling ---------------------------------------------------------------
    def _sample_starts(self, xs, rng, max_iter=10**6):
        pieces = self.renewal.pieces()
        lo = np.array([[max(p[0], self.t0) for p in pieces]] * xs.size)
        hi = np.minimum(np.array([[p[1] for p in pieces]] * xs.size), xs[:, None])
        length = np.maximum(hi - lo, 0.0)
        weights = length * np.array([p[2] for p in pieces])[None, :]
        total = weights.sum(axis=1)
        if np.any(total <= 0):
            raise SamplingError("renewal density has no mass before x; no censored interval possible")
        cum = np.cumsum(weights, axis=1) / total[:, None]
        out = np.empty(xs.size)
        pending = np.arange(xs.size)
        rounds = 0
        while pending.size:
            rounds += 1
            if rounds > max_iter:
                raise SamplingError(f"start-time rejection sampler exceeded {max_iter} rounds")
            j = np.minimum((rng.random(pending.size)[:, None] > cum[pending]).sum(axis=1), len(pieces) - 1)
            a = lo[pending, j] + rng.random(pending.size) * length[pending, j]
            x = xs[pending]
            acc = rng.random(pending.size) < self.kernel_Y.sf(a, x - a)
            out[pending[acc]] = a[acc]
            pending = pending[~acc]
        return out

    def _sample_lengths(self, xs, a, rng):
        # inverse survival on the conditional law of L given A = a
        u = 1.0 - rng.random(xs.size)
        return self.kernel_Y.isf(a, u * self.kernel_Y.sf(a, xs - a))

    def sample_interval(self, x, size, rng):
        """Draw ``size`` censoring intervals ``(a, l)`` from ``q_x``.

        The start comes first: a renewal piece is picked with probability
        proportional to its mass before ``x``, a uniform point inside it is
        accepted with probability ``1 - G_Y(a, x - a)``, and the length is
        drawn from its conditional law given the start.
        """
        self._check_x(float(x))
        xs = np.full(int(size), float(x))
        a = self._sample_starts(xs, rng)
        return a, self._sample_lengths(xs, a, rng)

    def sample_marks(self, xs, rng):
        """Independent marks for occurrence times ``xs``."""
        xs = np.asarray(xs, dtype=float)
        w = 1.0 - self.normalizer_fast(xs)
        is_atom = rng.random(xs.size) < w
        a = xs.copy()
        l = np.zeros(xs.size)
        cens = ~is_atom
        if np.any(cens):
            a[cens] = self._sample_starts(xs[cens], rng)
            l[cens] = self._sample_lengths(xs[cens], a[cens], rng)
        return MarkSample(xs, a, l, is_atom)

    def sample_mark(self, x, rng):
        s = self.sample_marks(np.array([float(x)]), rng)
        return Mark(float(s.a[0]), float(s.l[0]))

    @classmethod
    def from_dict(cls, cfg, kernel):
        return cls(kernel, RenewalDensity.from_dict(cfg), t0=cfg.get("t0"))
