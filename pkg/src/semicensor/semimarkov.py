"""Alternating non-homogeneous semi-Markov processes.

State 1 is the censored Y-phase and state 0 the observed Z-phase.  A
trajectory starts in state 1 at its origin ``t0``.  A cycle is completed
each time the process re-enters state 1, so the jump times with even index
``X_2, X_4, ...`` are the cycle completions.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, ExplosionError, ValidationError
from .kernels import HarmonicExponential

__all__ = [
    "RenewalDensity",
    "Trajectory",
    "RenewalEstimate",
    "RenewalDiagnostics",
    "simulate",
    "count_cycles",
    "estimate_renewal",
    "pure_y_chain",
    "estimate_pure_renewal_density",
    "check_thinning_bound",
    "thin_to_renewal_density",
    "validate_renewal_density",
]

DEFAULT_MAX_JUMPS = 10**7


@dataclass(frozen=True)
class RenewalDensity:
    """Piecewise-constant renewal density ``m(t) = sum_j delta_j 1{t in [b_j, b_{j+1})}``.

    Zero outside ``[breaks[0], breaks[-1])``.  The outer breaks may be infinite.
    """

    breaks: tuple
    levels: tuple

    def __post_init__(self):
        breaks = tuple(float(b) for b in self.breaks)
        levels = tuple(float(v) for v in self.levels)
        if len(breaks) != len(levels) + 1 or not levels:
            raise ValidationError("need len(breaks) == len(levels) + 1 >= 2")
        if any(b >= c for b, c in zip(breaks, breaks[1:])):
            raise ValidationError("breaks must be strictly increasing")
        if any(v < 0 or not math.isfinite(v) for v in levels):
            raise ValidationError("levels must be finite and non-negative")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "levels", levels)

    @classmethod
    def constant(cls, level, lo=-math.inf, hi=math.inf):
        return cls((lo, hi), (level,))

    @property
    def n_pieces(self):
        return len(self.levels)

    def pieces(self):
        return list(zip(self.breaks[:-1], self.breaks[1:], self.levels))

    def piece_index(self, t):
        """Index of the piece containing ``t``; -1 or ``n_pieces`` when outside."""
        return np.searchsorted(np.asarray(self.breaks), np.asarray(t, dtype=float), side="right") - 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = self.piece_index(t)
        inside = (idx >= 0) & (idx < self.n_pieces)
        lv = np.asarray(self.levels)
        out = np.where(inside, lv[np.clip(idx, 0, self.n_pieces - 1)], 0.0)
        return out[()] if out.ndim == 0 else out

    def integral(self, lo, hi):
        """Integral of ``m`` over ``[lo, hi]``."""
        total = 0.0
        for a, b, v in self.pieces():
            left, right = max(a, lo), min(b, hi)
            if right > left and v > 0:
                total += v * (right - left)
        return total

    def with_levels(self, levels):
        return RenewalDensity(self.breaks, tuple(levels))

    def to_dict(self):
        return {"breaks": [_json_float(b) for b in self.breaks], "levels": list(self.levels)}

    @classmethod
    def from_dict(cls, cfg):
        return cls(tuple(_parse_float(b) for b in cfg["breaks"]), tuple(cfg["levels"]))


def _json_float(v):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _parse_float(v):
    return float(v)


@dataclass(frozen=True)
class Trajectory:
    """Alternating jump chain ``(S_n, X_n)`` observed on ``[t0, t1]``."""

    states: np.ndarray
    times: np.ndarray
    t0: float
    t1: float

    @property
    def jumps(self):
        return list(zip(self.states.tolist(), self.times.tolist()))

    @property
    def n_jumps(self):
        return len(self.times) - 1

    def cycle_completions(self):
        """Times ``X_2, X_4, ...`` at which a cycle (Y then Z) ends."""
        return self.times[2::2]

    def y_phases(self, include_initial=True):
        """``(start, end)`` pairs of the Y-phases, the last one clipped at ``t1``."""
        starts = self.times[0::2]
        ends = np.append(self.times[1::2], self.t1)[: len(starts)]
        phases = np.column_stack([starts, ends])
        return phases if include_initial else phases[1:]

    def in_y_phase(self, x, include_initial=True):
        """Whether time ``x`` falls in a Y-phase.

        With ``include_initial=False`` the phase started at the origin is
        treated as observed, which is the convention of the mark kernel.
        """
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.times, x, side="right") - 1
        out = self.states[np.clip(idx, 0, None)] == 1
        if not include_initial:
            out &= idx > 0
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "state", "time"])
            for i, (s, t) in enumerate(zip(self.states.tolist(), self.times.tolist())):
                w.writerow([i, s, repr(t)])


@dataclass(frozen=True)
class RenewalEstimate:
    """Monte Carlo estimate of the renewal function ``M(t) = E N(t)`` on a grid."""

    grid: np.ndarray
    M_hat: np.ndarray
    m_hat: np.ndarray
    stderr: np.ndarray
    n_replicates: int

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "M_hat", "m_hat", "stderr"])
            for row in zip(self.grid.tolist(), self.M_hat.tolist(), self.m_hat.tolist(), self.stderr.tolist()):
                w.writerow([repr(v) for v in row])


@dataclass(frozen=True)
class RenewalDiagnostics:
    max_level: float
    bound: float
    passed: bool


def _explosion(kernels, t0, t1, n):
    diags = [k.validate((t0, t1), strict=False) for k in kernels]
    msg = f"jump ceiling {n} exceeded on [{t0}, {t1}]"
    for d in diags:
        if d.messages:
            msg += f"; {d.family}: " + ", ".join(d.messages)
    return ExplosionError(msg, diagnostics=diags)


def simulate(kernel_Y, kernel_Z, t0, t1, rng, max_jumps=DEFAULT_MAX_JUMPS):
    """Simulate an alternating semi-Markov trajectory on ``[t0, t1]``.

    Each sojourn is drawn from the kernel of the state just entered,
    evaluated at the entry time only.
    """
    t0, t1 = float(t0), float(t1)
    if t1 < t0:
        raise DomainError("need t0 <= t1")
    times = [t0]
    states = [1]
    x, s = t0, 1
    while True:
        kernel = kernel_Y if s == 1 else kernel_Z
        x = x + float(kernel.ppf(x, rng.random()))
        if x > t1:
            break
        s = 1 - s
        times.append(x)
        states.append(s)
        if len(times) > max_jumps:
            raise _explosion((kernel_Y, kernel_Z), t0, t1, max_jumps)
    return Trajectory(np.array(states, dtype=np.int8), np.array(times), t0, t1)


def count_cycles(traj, t):
    """Number of completed cycles by time ``t``: ``sup{n : X_2n <= t}``."""
    if not traj.t0 <= t <= traj.t1:
        raise DomainError(f"t={t} outside [{traj.t0}, {traj.t1}]")
    return int(np.count_nonzero(traj.cycle_completions() <= t))


def _batch_cycle_completions(kernel_Y, kernel_Z, t0, tmax, n, rng, max_jumps):
    """Lock-step simulation of ``n`` independent trajectories.

    Returns (replicate index, completion time) arrays for completions <= tmax.
    """
    cur = np.full(n, float(t0))
    state = np.ones(n, dtype=np.int8)
    jumps = np.zeros(n, dtype=np.int64)
    alive = np.arange(n)
    reps, comps = [], []
    while alive.size:
        x = cur[alive]
        s = state[alive]
        u = rng.random(alive.size)
        tau = np.empty(alive.size)
        in_y = s == 1
        if np.any(in_y):
            tau[in_y] = kernel_Y.ppf(x[in_y], u[in_y])
        if np.any(~in_y):
            tau[~in_y] = kernel_Z.ppf(x[~in_y], u[~in_y])
        new = x + tau
        keep = new <= tmax
        alive, new, s = alive[keep], new[keep], s[keep]
        cur[alive] = new
        state[alive] = 1 - s
        jumps[alive] += 1
        done = s == 0
        reps.append(alive[done])
        comps.append(new[done])
        if alive.size and jumps[alive].max() > max_jumps:
            raise _explosion((kernel_Y, kernel_Z), t0, tmax, max_jumps)
    return np.concatenate(reps) if reps else np.array([], int), np.concatenate(comps) if comps else np.array([])


def estimate_renewal(kernel_Y, kernel_Z, t0, grid, n_replicates, rng, max_jumps=DEFAULT_MAX_JUMPS):
    """Monte Carlo renewal function ``M(t)`` with a finite-difference density."""
    if n_replicates < 1:
        raise ValueError("n_replicates must be >= 1")
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < t0) or np.any(np.diff(grid) < 0):
        raise DomainError("grid must be sorted and >= t0")
    reps, comps = _batch_cycle_completions(kernel_Y, kernel_Z, t0, grid.max(), n_replicates, rng, max_jumps)
    counts = np.zeros((n_replicates, grid.size))
    np.add.at(counts, (reps, np.searchsorted(grid, comps, side="left")), 1.0)
    N = np.cumsum(counts, axis=1)
    M_hat = N.mean(axis=0)
    if n_replicates > 1:
        stderr = N.std(axis=0, ddof=1) / math.sqrt(n_replicates)
    else:
        stderr = np.zeros(grid.size)
    m_hat = np.gradient(M_hat, grid) if grid.size > 1 else np.zeros(grid.size)
    return RenewalEstimate(grid, M_hat, m_hat, stderr, int(n_replicates))


def pure_y_chain(kernel_Y, t0, t1, rng, max_jumps=DEFAULT_MAX_JUMPS):
    """Jump times ``X_0 = t0 < X_1 < ...`` of a process that only has Y-phases.

    The first jump beyond ``t1`` is included as the last element.
    """
    x = float(t0)
    out = [x]
    while x <= t1:
        x = x + float(kernel_Y.ppf(x, rng.random()))
        out.append(x)
        if len(out) > max_jumps:
            raise _explosion((kernel_Y,), t0, t1, max_jumps)
    return np.array(out)


def estimate_pure_renewal_density(kernel_Y, t0, t1, rng, n_replicates=10**5, n_bins=120):
    """Bin-averaged Monte Carlo renewal density of the pure Y-phase jump chain.

    Returned as a piecewise-constant :class:`RenewalDensity` on ``[t0, t1)``.
    """
    edges = np.linspace(float(t0), float(t1), n_bins + 1)
    cur = np.full(n_replicates, float(t0))
    hits = []
    while cur.size:
        cur = cur + kernel_Y.ppf(cur, rng.random(cur.size))
        cur = cur[cur <= t1]
        hits.append(cur)
    counts, _ = np.histogram(np.concatenate(hits), bins=edges)
    return RenewalDensity(tuple(edges), tuple(counts / (n_replicates * np.diff(edges))))


def check_thinning_bound(target_h, m_tilde, t0, t1):
    """Raise :class:`ValidationError` unless ``h <= m_tilde`` on a check grid of ``[t0, t1]``."""
    t0, t1 = float(t0), float(t1)
    grid = [np.linspace(t0, t1, 1001)]
    for fn in (target_h, m_tilde):
        brk = np.asarray(getattr(fn, "breaks", ()), dtype=float)
        grid.append(brk[(brk >= t0) & (brk <= t1)])
    grid = np.unique(np.concatenate(grid))
    h = np.asarray(target_h(grid), dtype=float)
    mt = np.asarray(m_tilde(grid), dtype=float)
    bad = h > mt * (1 + 1e-12)
    if np.any(bad):
        i = int(np.argmax(h - mt))
        raise ValidationError(
            f"target renewal density exceeds pure-Y renewal density at t={grid[i]:.6g} "
            f"(h={h[i]:.6g} > m_tilde={mt[i]:.6g})"
        )


def thin_to_renewal_density(kernel_Y, target_h, m_tilde, t0, t1, rng, check=True, max_jumps=DEFAULT_MAX_JUMPS):
    """Alternating trajectory whose cycle completions have intensity ``target_h``.

    A pure Y-phase jump chain is run from ``t0`` and each of its jumps
    ``X_i`` is retained with probability ``h(X_i) / m_tilde(X_i)``.  A
    retained jump starts a new Y-phase that lasts until ``X_{i+1}``; the
    time in between belongs to a Z-phase, which has zero length when two
    consecutive jumps are retained.
    """
    t0, t1 = float(t0), float(t1)
    if check:
        check_thinning_bound(target_h, m_tilde, t0, t1)
    chain = pure_y_chain(kernel_Y, t0, t1, rng, max_jumps)
    times = [t0]
    states = [1]
    if chain[1] <= t1:
        times.append(chain[1])
        states.append(0)
    for i in range(1, len(chain) - 1):
        xi = chain[i]
        mt = float(m_tilde(xi))
        p = float(target_h(xi)) / mt if mt > 0 else 0.0
        if rng.random() < p:
            times.append(xi)
            states.append(1)
            if chain[i + 1] <= t1:
                times.append(chain[i + 1])
                states.append(0)
    return Trajectory(np.array(states, dtype=np.int8), np.array(times), t0, t1)


def validate_renewal_density(target_h, kernel_Y, strict=False):
    """Check the sufficient bound ``delta_j <= inf_t lambda(t)`` for a harmonic Y-kernel.

    For ``c != 0`` the infimum is ``alpha * (b - 1)``; with ``c = 0`` the rate
    is the constant ``alpha * b``.
    """
    if not isinstance(kernel_Y, HarmonicExponential):
        raise TypeError("renewal density bound is only available for HarmonicExponential kernels")
    bound = kernel_Y.min_rate
    max_level = max(target_h.levels)
    passed = max_level <= bound * (1 + 1e-12)
    if strict and not passed:
        raise ValidationError(f"renewal level {max_level:g} exceeds bound {bound:g}")
    return RenewalDiagnostics(max_level=float(max_level), bound=float(bound), passed=bool(passed))
