"""Markov point processes for the occurrence times on an open interval.

The model is the non-homogeneous area-interaction process

    p(x) ∝ prod_i beta(x_i) * exp(-log(gamma) * |W ∩ U_r(x)|)

with respect to a unit-rate Poisson process on the window W, where
``U_r(x)`` is the union of the closed intervals ``[x_i - r, x_i + r]``.
``log_gamma < 0`` gives regular patterns, ``> 0`` clustered ones and
``0`` an inhomogeneous Poisson process with intensity ``beta``.
"""

import bisect
import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, ValidationError

__all__ = [
    "StepFunction",
    "GroundModel",
    "MHResult",
    "union_length",
    "hammersley_clifford_check",
    "log_interactions",
]

MAX_HC_POINTS = 12


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function, zero outside ``[breaks[0], breaks[-1])``."""

    breaks: tuple
    values: tuple

    def __post_init__(self):
        breaks = tuple(float(b) for b in self.breaks)
        values = tuple(float(v) for v in self.values)
        if len(breaks) != len(values) + 1 or not values:
            raise ValidationError("need len(breaks) == len(values) + 1 >= 2")
        if any(b >= c for b, c in zip(breaks, breaks[1:])):
            raise ValidationError("breaks must be strictly increasing")
        if any(v < 0 for v in values):
            raise ValidationError("step values must be non-negative")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "values", values)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(np.asarray(self.breaks), t, side="right") - 1
        inside = (idx >= 0) & (idx < len(self.values))
        out = np.where(inside, np.asarray(self.values)[np.clip(idx, 0, len(self.values) - 1)], 0.0)
        return out[()] if out.ndim == 0 else out

    def value(self, t):
        """Scalar evaluation without numpy overhead."""
        i = bisect.bisect_right(self.breaks, t) - 1
        if 0 <= i < len(self.values):
            return self.values[i]
        return 0.0

    def integral(self, lo, hi):
        total = 0.0
        for a, b, v in zip(self.breaks, self.breaks[1:], self.values):
            left, right = max(a, lo), min(b, hi)
            if right > left:
                total += v * (right - left)
        return total

    def to_dict(self):
        return {"breaks": list(self.breaks), "values": list(self.values)}


def union_length(centres, r, lo, hi):
    """Length of ``[lo, hi] ∩ U_r(centres)`` by an endpoint sweep."""
    if r <= 0 or hi <= lo:
        return 0.0
    total = 0.0
    cur_a = cur_b = None
    for c in sorted(centres):
        a, b = max(c - r, lo), min(c + r, hi)
        if b <= a:
            continue
        if cur_b is None or a > cur_b:
            if cur_b is not None:
                total += cur_b - cur_a
            cur_a, cur_b = a, b
        else:
            cur_b = max(cur_b, b)
    if cur_b is not None:
        total += cur_b - cur_a
    return total


@dataclass(frozen=True)
class MHResult:
    """Final configuration of a Metropolis-Hastings run and its optional trace."""

    points: np.ndarray
    trace: np.ndarray | None = None
    acceptance_rate: float = float("nan")

    def trace_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "n_points", "coverage_length", "log_density"])
            for row in self.trace.tolist():
                w.writerow([int(row[0]), int(row[1]), repr(row[2]), repr(row[3])])

    def points_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x"])
            for v in self.points.tolist():
                w.writerow([repr(v)])


class GroundModel:
    """Non-homogeneous area-interaction process on the open window ``(lo, hi)``.

    Parameters
    ----------
    window : tuple of float
    beta : StepFunction or float
        First-order term; a float means a constant.
    log_gamma : float
        Interaction strength on the log scale.
    r : float
        Interaction radius.
    """

    def __init__(self, window, beta, log_gamma=0.0, r=0.0):
        lo, hi = map(float, window)
        if not hi > lo:
            raise ValidationError("window must satisfy lo < hi")
        if r < 0:
            raise ValidationError("interaction radius must be non-negative")
        if not isinstance(beta, StepFunction):
            beta = StepFunction((lo, hi), (float(beta),))
        self.window = (lo, hi)
        self.beta = beta
        self.log_gamma = float(log_gamma)
        self.r = float(r)

    def __repr__(self):
        return f"GroundModel(window={self.window}, beta={self.beta}, log_gamma={self.log_gamma}, r={self.r})"

    @property
    def length(self):
        return self.window[1] - self.window[0]

    def _beta(self, t):
        lo, hi = self.window
        if not lo < t < hi:
            return 0.0
        return self.beta.value(t)

    def coverage(self, points):
        """``|W ∩ U_r(points)|``."""
        return union_length(points, self.r, *self.window)

    def log_density_unnorm(self, points):
        """Log of the unnormalised density; ``-inf`` where some ``beta(x_i) = 0``."""
        points = list(points)
        if len(set(points)) != len(points):
            raise DomainError("configuration points must be distinct")
        total = 0.0
        for x in points:
            b = self._beta(x)
            if b <= 0:
                return -math.inf
            total += math.log(b)
        if self.log_gamma != 0.0:
            total -= self.log_gamma * self.coverage(points)
        return total

    def marginal_coverage(self, sorted_points, t):
        """Length of ``W ∩ B(t, r)`` not already covered by ``U_r(sorted_points)``.

        Only points within ``2r`` of ``t`` are inspected.
        """
        r = self.r
        if r <= 0:
            return 0.0
        lo, hi = self.window
        a, b = max(t - r, lo), min(t + r, hi)
        if b <= a:
            return 0.0
        i = bisect.bisect_left(sorted_points, t - 2 * r)
        j = bisect.bisect_right(sorted_points, t + 2 * r)
        free = b - a
        cur_a = cur_b = None
        for c in sorted_points[i:j]:
            ca, cb = max(c - r, a), min(c + r, b)
            if cb <= ca:
                continue
            if cur_b is None or ca > cur_b:
                if cur_b is not None:
                    free -= cur_b - cur_a
                cur_a, cur_b = ca, cb
            else:
                cur_b = max(cur_b, cb)
        if cur_b is not None:
            free -= cur_b - cur_a
        return free

    def log_papangelou(self, sorted_points, t):
        b = self._beta(t)
        if b <= 0:
            return -math.inf
        if self.log_gamma == 0.0:
            return math.log(b)
        return math.log(b) - self.log_gamma * self.marginal_coverage(sorted_points, t)

    def papangelou_ratio(self, points, t):
        """Conditional intensity ``p(points ∪ {t}) / p(points)``."""
        pts = sorted(points)
        if t in pts:
            raise DomainError("candidate point already in the configuration")
        return math.exp(self.log_papangelou(pts, t))

    def sample_mh(self, n_steps, burn_in, rng, fixed_n=None, initial=None, trace=False, trace_every=1):
        """Metropolis-Hastings sampler of the ground process.

        With ``fixed_n`` every step moves one uniformly chosen point to a
        uniform location in the window.  Otherwise each step is a birth,
        death or such a shift with probabilities 0.35 / 0.35 / 0.3.
        """
        if not n_steps > burn_in >= 0:
            raise ValueError("need n_steps > burn_in >= 0")
        lo, hi = self.window
        size = hi - lo
        if initial is not None:
            pts = sorted(float(v) for v in initial)
        elif fixed_n is not None:
            pts = sorted((lo + size * rng.random(int(fixed_n))).tolist())
        else:
            pts = []
        if fixed_n is not None and len(pts) != fixed_n:
            raise ValueError("initial configuration does not have fixed_n points")
        cover = self.coverage(pts)
        logp = self.log_density_unnorm(pts)
        rows = []
        accepted = 0
        # pre-drawn uniforms: [move type, location/index, acceptance]
        draws = rng.random((n_steps, 3))
        for step in range(n_steps):
            u_move, u_loc, u_acc = draws[step]
            if fixed_n is None and u_move < 0.35:
                move = self._birth(pts, lo + size * u_loc, size, u_acc)
            elif fixed_n is None and u_move < 0.70:
                move = self._death(pts, u_loc, size, u_acc)
            else:
                move = self._shift(pts, u_loc, lo, size, u_acc)
            if move is not None:
                d_cover, d_logp = move
                cover += d_cover
                logp = logp + d_logp if logp > -math.inf else self.log_density_unnorm(pts)
                accepted += 1
            if trace and step >= burn_in and (step - burn_in) % trace_every == 0:
                rows.append((step, len(pts), cover, logp))
        tr = np.array(rows, dtype=float).reshape(-1, 4) if trace else None
        return MHResult(np.array(pts), tr, accepted / n_steps)

    # Metropolis-Hastings moves: each updates ``pts`` in place and returns
    # (coverage change, log-density change) when accepted, else None.
    def _birth(self, pts, t, size, u_acc):
        if t in pts:
            return None
        lpap = self.log_papangelou(pts, t)
        log_ratio = lpap + math.log(size / (len(pts) + 1))
        if lpap == -math.inf or not (log_ratio >= 0 or math.log(u_acc) < log_ratio):
            return None
        d_cover = self.marginal_coverage(pts, t)
        bisect.insort(pts, t)
        return d_cover, lpap

    def _death(self, pts, u_loc, size, u_acc):
        n = len(pts)
        if n == 0:
            return None
        x = pts.pop(min(int(u_loc * n), n - 1))
        lpap = self.log_papangelou(pts, x)
        log_ratio = math.log(n / size) - lpap
        if log_ratio >= 0 or math.log(u_acc) < log_ratio:
            return -self.marginal_coverage(pts, x), -lpap
        bisect.insort(pts, x)
        return None

    def _shift(self, pts, u_loc, lo, size, u_acc):
        n = len(pts)
        if n == 0:
            return None
        # split u_loc into an index and a location
        scaled = u_loc * n
        k = min(int(scaled), n - 1)
        t = lo + size * (scaled - k)
        x = pts.pop(k)
        lnew = self.log_papangelou(pts, t) if t not in pts else -math.inf
        if lnew > -math.inf:
            log_ratio = lnew - self.log_papangelou(pts, x)
            if log_ratio >= 0 or math.log(u_acc) < log_ratio:
                d_cover = self.marginal_coverage(pts, t) - self.marginal_coverage(pts, x)
                bisect.insort(pts, t)
                return d_cover, log_ratio
        bisect.insort(pts, x)
        return None

    def sample_poisson(self, rng):
        """Exact draw when there is no interaction (``log_gamma == 0`` or ``r == 0``)."""
        if self.log_gamma != 0.0 and self.r > 0:
            raise ValidationError("exact sampling needs a Poisson model; use sample_mh")
        lo, hi = self.window
        out = []
        for a, b, v in zip(self.beta.breaks, self.beta.breaks[1:], self.beta.values):
            a, b = max(a, lo), min(b, hi)
            if b > a and v > 0:
                n = rng.poisson(v * (b - a))
                out.append(a + (b - a) * rng.random(n))
        return np.sort(np.concatenate(out)) if out else np.empty(0)

    def to_dict(self):
        return {"window": list(self.window), "beta": self.beta.to_dict(), "log_gamma": self.log_gamma, "r": self.r}

    @classmethod
    def from_dict(cls, cfg):
        beta = cfg["beta"]
        if isinstance(beta, dict):
            beta = StepFunction(tuple(beta["breaks"]), tuple(beta["values"]))
        return cls(tuple(cfg["window"]), beta, cfg.get("log_gamma", 0.0), cfg.get("r", 0.0))


def log_interactions(model, points):
    """Log interaction functions ``log phi(y)`` for every subset ``y`` of ``points``.

    Obtained by Möbius inversion of ``log p`` over the subset lattice, with
    ``p`` normalised so that ``p(∅) = 1``.  Returns a dict keyed by bitmask.
    """
    pts = list(points)
    n = len(pts)
    if n > MAX_HC_POINTS:
        raise ValueError(f"at most {MAX_HC_POINTS} points supported")
    f = np.empty(1 << n)
    for mask in range(1 << n):
        f[mask] = model.log_density_unnorm([pts[i] for i in range(n) if mask >> i & 1])
    if not np.all(np.isfinite(f)):
        raise ValueError("configuration has zero density")
    # in-place Möbius transform over subsets
    for i in range(n):
        bit = 1 << i
        for mask in range(1 << n):
            if mask & bit:
                f[mask] -= f[mask ^ bit]
    return {mask: float(f[mask]) for mask in range(1 << n)}


def hammersley_clifford_check(model, points):
    """Log-difference between the clique factorisation and ``log_density_unnorm``.

    Interaction functions of subsets containing a pair farther apart than
    ``2r`` are set to one, as required of a Markov density; the remaining
    factors are multiplied back together.  A zero result confirms the
    factorisation with respect to the ``2r`` neighbourhood relation.
    """
    pts = list(points)
    n = len(pts)
    phi = log_interactions(model, pts)
    reach = 2 * model.r
    related = [[abs(pts[i] - pts[j]) <= reach for j in range(n)] for i in range(n)]
    total = 0.0
    for mask, value in phi.items():
        members = [i for i in range(n) if mask >> i & 1]
        if all(related[i][j] for i, j in itertools.combinations(members, 2)):
            total += value
    return total - model.log_density_unnorm(pts)
