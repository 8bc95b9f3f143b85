"""Likelihood-based fitting of the censoring parameters and conditional sampling.

Observed data are an :class:`IntervalSet`: atoms (exactly observed times)
and proper intervals ``(a_i, l_i)``.  The log-likelihood of the censoring
parameters is

    sum_atoms log w(a_i) + sum_intervals [log m(a_i) + log g_Y(a_i, l_i)],

with ``w`` the atom probability of the mark kernel.
"""

import bisect
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .censoring import survival_integral
from .exceptions import ConvergenceError, DomainError, ValidationError
from .kernels import GammaKernel, HarmonicExponential, WeibullKernel
from .semimarkov import RenewalDensity

__all__ = [
    "IntervalSet",
    "CensoringParams",
    "ModelSpec",
    "FitResult",
    "ConditionalChain",
    "renewal_bound",
    "log_likelihood",
    "homogeneous_log_likelihood",
    "fit_homogeneous",
    "fit_mle",
    "conditional_log_density",
    "sample_conditional",
    "conditional_density_1d",
    "batch_means_se",
]


@dataclass(frozen=True)
class IntervalSet:
    """Realisation of the observed marks: atoms and proper intervals."""

    atoms: np.ndarray
    starts: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "atoms", np.asarray(self.atoms, dtype=float).ravel())
        object.__setattr__(self, "starts", np.asarray(self.starts, dtype=float).ravel())
        object.__setattr__(self, "lengths", np.asarray(self.lengths, dtype=float).ravel())
        if self.starts.shape != self.lengths.shape:
            raise ValidationError("starts and lengths differ in size")
        if np.any(self.lengths <= 0):
            raise ValidationError("interval lengths must be positive")

    @classmethod
    def from_marks(cls, a, l):
        """Split marks ``(a, l)`` into atoms (``l == 0``) and intervals."""
        a, l = np.asarray(a, dtype=float), np.asarray(l, dtype=float)
        if np.any(l < 0):
            raise ValidationError("mark lengths must be non-negative")
        atom = l == 0
        return cls(a[atom], a[~atom], l[~atom])

    @property
    def m(self):
        return self.atoms.size

    @property
    def n(self):
        return self.atoms.size + self.starts.size

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "l"])
            for a in self.atoms.tolist():
                w.writerow([repr(a), "0.0"])
            for a, l in zip(self.starts.tolist(), self.lengths.tolist()):
                w.writerow([repr(a), repr(l)])


@dataclass(frozen=True)
class CensoringParams:
    """Kernel of the Y-phase plus the renewal density with fixed piece boundaries."""

    kernel: object
    renewal: RenewalDensity

    def to_dict(self):
        out = dict(self.kernel.to_dict())
        out.update({f"delta_{j + 1}": v for j, v in enumerate(self.renewal.levels)})
        return out


def renewal_bound(kernel):
    """Largest renewal level for which the model is feasible with this kernel.

    Harmonic kernels use the infimum of their rate.  Homogeneous Gamma and
    Weibull kernels use ``1 / mean``, the long-run renewal rate, which also
    keeps every atom probability non-negative.
    """
    if isinstance(kernel, HarmonicExponential):
        if kernel.b == 1 and kernel.c == 0:
            return kernel.alpha
        return kernel.min_rate
    if isinstance(kernel, (GammaKernel, WeibullKernel)) and kernel.is_constant:
        return float(1.0 / kernel.mean(0.0))
    raise ValidationError(f"no feasibility bound for {kernel!r}")


def _check_feasible(params):
    bound = renewal_bound(params.kernel)
    levels = np.asarray(params.renewal.levels)
    if np.any(levels < 0) or np.any(levels > bound * (1 + 1e-9)):
        raise ValidationError(f"renewal levels {levels.tolist()} outside [0, {bound:g}]")


def log_likelihood(params, data, t0, check=True):
    """Log-likelihood of the censoring parameters given observed marks."""
    if data.n == 0:
        raise ValidationError("empty data")
    if check:
        _check_feasible(params)
    kernel, renewal = params.kernel, params.renewal
    total = 0.0
    if data.m:
        w = 1.0 - survival_integral(kernel, renewal, data.atoms, float(t0))
        if np.any(w <= 0):
            return -math.inf
        total += float(np.sum(np.log(w)))
    if data.starts.size:
        m = renewal(data.starts)
        if np.any(m <= 0):
            return -math.inf
        with np.errstate(divide="ignore"):
            g = np.log(kernel.density(data.starts, data.lengths))
        total += float(np.sum(np.log(m)) + np.sum(g))
    return total


def homogeneous_log_likelihood(alpha, delta, data):
    """Closed form for a constant exponential rate and constant renewal level."""
    m, k = data.m, data.starts.size
    return (
        special.xlogy(m, 1.0 - delta / alpha)
        + special.xlogy(k, delta)
        + k * math.log(alpha)
        - alpha * float(np.sum(data.lengths))
    )


def fit_homogeneous(data):
    """Closed-form MLE for the homogeneous exponential model.

    ``alpha = 2 (n - m) / sum l`` and ``delta = (n - m) alpha / n``.
    """
    k = data.starts.size
    if k == 0:
        raise ValidationError("no censored intervals: homogeneous MLE undefined")
    alpha = 2.0 * k / float(np.sum(data.lengths))
    delta = min(k * alpha / data.n, alpha)
    return CensoringParams(HarmonicExponential(alpha, 1.0, 0.0), RenewalDensity.constant(delta))


@dataclass(frozen=True)
class ModelSpec:
    """Parametric family to fit.

    ``family`` is ``"harmonic"``, ``"weibull"`` or ``"gamma"``.  Kernel
    parameters named in ``fixed`` are held constant; the others are
    estimated together with one renewal level per piece of ``breaks``.
    """

    family: str
    breaks: tuple
    fixed: dict = field(default_factory=dict)

    _PARAMS = {"harmonic": ("alpha", "b", "c"), "weibull": ("shape", "rate"), "gamma": ("shape", "rate")}

    def __post_init__(self):
        if self.family not in self._PARAMS:
            raise ValidationError(f"unknown family {self.family!r}")
        unknown = set(self.fixed) - set(self._PARAMS[self.family])
        if unknown:
            raise ValidationError(f"unknown fixed parameters {sorted(unknown)}")
        if self.family == "harmonic" and "c" not in self.fixed:
            raise ValidationError("the harmonic frequency c must be fixed")

    @property
    def free(self):
        return tuple(p for p in self._PARAMS[self.family] if p not in self.fixed)

    @property
    def n_pieces(self):
        return len(self.breaks) - 1

    def kernel(self, values):
        p = {**self.fixed, **values}
        if self.family == "harmonic":
            return HarmonicExponential(p["alpha"], p.get("b", 1.0), p["c"])
        cls = WeibullKernel if self.family == "weibull" else GammaKernel
        return cls(p["shape"], p["rate"])

    @classmethod
    def from_dict(cls, cfg):
        return cls(cfg["family"], tuple(float(b) for b in cfg["breaks"]), dict(cfg.get("fixed", {})))


@dataclass
class FitResult:
    params: CensoringParams
    loglik: float
    iterations: int
    active_constraints: list
    start_loglik: float
    converged: bool = True

    def report(self):
        return {
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "iters": self.iterations,
            "active_constraints": list(self.active_constraints),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.report(), fh, indent=2, sort_keys=True)
            fh.write("\n")


class _Objective:
    """Maps an unconstrained simplex vector to model parameters.

    Kernel parameters are optimised on the log scale (``b - 1`` for the
    harmonic elevation).  Renewal levels are ``delta_j = s_j * bound`` with
    ``0 < s_j < 1`` enforced by a logarithmic barrier.
    """

    def __init__(self, spec, data, t0):
        self.spec, self.data, self.t0 = spec, data, float(t0)
        self.free = spec.free

    def unpack(self, z):
        vals = {}
        for name, v in zip(self.free, z):
            vals[name] = 1.0 + math.exp(v) if name == "b" else math.exp(v)
        s = np.asarray(z[len(self.free):], dtype=float)
        return vals, s

    def pack(self, vals, s):
        head = [math.log(vals[n] - 1.0) if n == "b" else math.log(vals[n]) for n in self.free]
        return np.array(head + list(s))

    def params(self, vals, s):
        kernel = self.spec.kernel(vals)
        bound = renewal_bound(kernel)
        return CensoringParams(kernel, RenewalDensity(self.spec.breaks, tuple(np.asarray(s) * bound)))

    def loglik(self, vals, s):
        try:
            params = self.params(vals, s)
        except (ValidationError, OverflowError):
            return -math.inf
        return log_likelihood(params, self.data, self.t0, check=False)

    def __call__(self, z, mu):
        try:
            vals, s = self.unpack(z)
        except OverflowError:
            return math.inf
        if np.any(s <= 0) or np.any(s >= 1):
            return math.inf
        ll = self.loglik(vals, s)
        if not math.isfinite(ll):
            return math.inf
        return -ll - mu * float(np.sum(np.log(s) + np.log1p(-s)))


def _default_start(spec, data):
    lengths = data.lengths
    k = max(data.starts.size, 1)
    scale = 2.0 * k / max(float(np.sum(lengths)), 1e-12)
    vals = {}
    if spec.family == "harmonic":
        b = spec.fixed.get("b", 1.5)
        mod = spec.fixed["c"]
        weight = np.sum(lengths * (b + np.sin(mod * data.starts))) if lengths.size else 1.0
        vals["alpha"] = 2.0 * k / max(float(weight), 1e-12)
        if "b" in spec.free:
            vals["b"] = b
    else:
        vals["shape"] = 1.0
        vals["rate"] = scale
    return {n: v for n, v in vals.items() if n in spec.free}


def fit_mle(data, spec, t0, start=None, max_iter=10**4, barrier=(1.0, 1e-2, 1e-4, 1e-6, 1e-8)):
    """Constrained maximum likelihood by a barrier Nelder-Mead continuation.

    Parameters
    ----------
    data : IntervalSet
    spec : ModelSpec
    t0 : float
        Truncation point of the past used in the atom probabilities.
    start : dict, optional
        Starting values for the free kernel parameters and, under key
        ``"s"``, the renewal levels as fractions of their upper bound.
    max_iter : int
        Total simplex iteration budget.

    Raises
    ------
    ConvergenceError
        If the iteration budget runs out before the final barrier stage converges.
    """
    if data.n == 0:
        raise ValidationError("empty data")
    obj = _Objective(spec, data, t0)
    start = dict(start or {})
    s0 = np.asarray(start.pop("s", np.full(spec.n_pieces, 0.5)), dtype=float)
    vals0 = {**_default_start(spec, data), **{k: v for k, v in start.items() if k in spec.free}}
    z = obj.pack(vals0, s0)
    start_ll = obj.loglik(vals0, s0)
    if not math.isfinite(start_ll):
        raise ValidationError("starting point has zero likelihood")
    iters = 0
    converged = False
    for mu in barrier:
        budget = max_iter - iters
        if budget <= 0:
            break
        res = optimize.minimize(
            obj, z, args=(mu,), method="Nelder-Mead",
            options={"maxiter": budget, "maxfev": 4 * budget, "xatol": 1e-9, "fatol": 1e-11, "adaptive": True},
        )
        iters += int(res.nit)
        z = res.x
        converged = res.status == 0
    if not converged:
        raise ConvergenceError(f"Nelder-Mead did not converge within {max_iter} iterations")

    vals, s = obj.unpack(z)
    best_ll = obj.loglik(vals, s)
    active = []
    # snap levels that sit on a constraint when doing so does not lower the likelihood
    for j in range(spec.n_pieces):
        for target, label in ((0.0, f"delta_{j + 1} >= 0"), (1.0, f"delta_{j + 1} <= bound")):
            if abs(s[j] - target) < 1e-5:
                trial = s.copy()
                trial[j] = target
                ll = obj.loglik(vals, trial)
                if ll >= best_ll - 1e-9:
                    s, best_ll = trial, max(ll, best_ll)
                    active.append(label)
    if best_ll < start_ll:
        vals, s, best_ll = vals0, s0, start_ll
    return FitResult(obj.params(vals, s), float(best_ll), iters, active, float(start_ll), converged)


# conditional sampling ---------------------------------------------------------


@dataclass(frozen=True)
class ConditionalChain:
    """Chain of censored occurrence times; column ``i`` lives in interval ``i``."""

    states: np.ndarray
    acceptance_rate: float

    def to_csv(self, path, first_step=0, first_index=1):
        """Write ``step, x_{first_index}, ...``; pass ``first_index = m + 1`` for ``m`` atoms."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step"] + [f"x_{first_index + i}" for i in range(self.states.shape[1])])
            for k, row in enumerate(self.states.tolist()):
                w.writerow([first_step + k] + [repr(v) for v in row])


def conditional_log_density(ground, positions, data):
    """Unnormalised log conditional density of the censored times given the marks.

    Each position is tied to its own interval, so the density is the ground
    density of atoms plus positions, restricted to the product of intervals.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.shape != data.starts.shape:
        raise DomainError("one position per censored interval required")
    if np.any(positions < data.starts) or np.any(positions > data.starts + data.lengths):
        return -math.inf
    return ground.log_density_unnorm(list(data.atoms) + list(positions))


def sample_conditional(ground, data, n_steps, burn_in, rng, initial=None):
    """Metropolis-Hastings chain for the censored times given the observed marks.

    Every step picks one censored interval uniformly, proposes a uniform
    point inside it and accepts by the ratio of ground densities.  Atoms are
    fixed.  Returns the ``n_steps - burn_in`` post-burn-in states, or the
    initial state alone when ``n_steps == 0``.
    """
    k = data.starts.size
    if k == 0:
        raise ValidationError("no censored intervals to sample")
    starts, lengths = data.starts.tolist(), data.lengths.tolist()
    x = list(np.asarray(initial, dtype=float)) if initial is not None else [a + l / 2 for a, l in zip(starts, lengths)]
    if n_steps == 0:
        return ConditionalChain(np.array([x]), float("nan"))
    if not n_steps > burn_in >= 0:
        raise ValueError("need n_steps > burn_in >= 0")
    pts = sorted(list(data.atoms) + x)
    out = np.empty((n_steps - burn_in, k))
    draws = rng.random((n_steps, 3))
    accepted = 0
    for step in range(n_steps):
        u_idx, u_loc, u_acc = draws[step]
        i = min(int(u_idx * k), k - 1)
        new = starts[i] + lengths[i] * u_loc
        old = x[i]
        pos = bisect.bisect_left(pts, old)
        del pts[pos]
        lnew = ground.log_papangelou(pts, new)
        if lnew > -math.inf and new not in pts:
            lold = ground.log_papangelou(pts, old)
            log_ratio = lnew - lold
            if log_ratio >= 0 or math.log(u_acc) < log_ratio:
                x[i] = new
                accepted += 1
        bisect.insort(pts, x[i])
        if step >= burn_in:
            out[step - burn_in] = x
    return ConditionalChain(out, accepted / n_steps)


def conditional_density_1d(ground, data, xs, n_grid=20001):
    """Normalised conditional density of the single censored time, evaluated at ``xs``.

    Normalisation is by the trapezoidal rule on a fine grid over the interval.
    """
    if data.starts.size != 1:
        raise ValidationError("exactly one censored interval required")
    a, l = float(data.starts[0]), float(data.lengths[0])
    atoms = sorted(data.atoms.tolist())

    def logf(t):
        if t in atoms:
            return -math.inf
        return ground.log_papangelou(atoms, t)

    grid = np.linspace(a, a + l, n_grid)
    lg = np.array([logf(t) for t in grid])
    shift = np.max(lg)
    z = integrate.trapezoid(np.exp(lg - shift), grid)
    xs = np.asarray(xs, dtype=float)
    vals = np.array([logf(t) if a <= t <= a + l else -math.inf for t in xs.ravel()])
    return (np.exp(vals - shift) / z).reshape(xs.shape)


def batch_means_se(values, n_batches=50):
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    values = np.asarray(values, dtype=float)
    size = values.size // n_batches
    if size < 1:
        raise ValueError("series shorter than the number of batches")
    means = values[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(n_batches))
