import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from semicensor.exceptions import DomainError, ExplosionError, ValidationError
from semicensor.kernels import GammaKernel, HarmonicExponential, WeibullKernel
from semicensor.semimarkov import (
    RenewalDensity,
    Trajectory,
    check_thinning_bound,
    count_cycles,
    estimate_pure_renewal_density,
    estimate_renewal,
    pure_y_chain,
    simulate,
    thin_to_renewal_density,
    validate_renewal_density,
)


def erlang2_renewal(alpha, t):
    return alpha * t / 2 - 0.25 + np.exp(-2 * alpha * t) / 4


def test_trajectory_structure():
    rng = np.random.default_rng(0)
    tr = simulate(GammaKernel(2, 3), WeibullKernel(1.5, 2), 0.0, 20.0, rng)
    assert tr.jumps[0] == (1, 0.0)
    assert np.all(np.diff(tr.times) >= 0)
    assert np.all(tr.states[::2] == 1) and np.all(tr.states[1::2] == 0)
    assert tr.times[-1] <= 20.0


def test_zero_horizon():
    tr = simulate(GammaKernel(1, 2), GammaKernel(1, 2), 1.5, 1.5, np.random.default_rng(0))
    assert tr.jumps == [(1, 1.5)]
    assert tr.n_jumps == 0


def test_jump_rate_exponential():
    rng = np.random.default_rng(1)
    k = GammaKernel(1, 2)
    counts = [simulate(k, k, 0, 1000, rng).n_jumps for _ in range(100)]
    assert np.mean(counts) == pytest.approx(2000, rel=0.03)


def test_weibull_jump_count_finite():
    k = WeibullKernel(2, 1)
    tr = simulate(k, k, 0, 1000, np.random.default_rng(2))
    cycles = count_cycles(tr, 1000)
    assert cycles == pytest.approx(1000 / (2 * math.gamma(1.5)), rel=0.1)


def test_explosion_guard_reports_diagnostics():
    fast = GammaKernel(1, 1e6)
    with pytest.raises(ExplosionError) as exc:
        simulate(fast, fast, 0, 1, np.random.default_rng(0), max_jumps=1000)
    assert exc.value.diagnostics


def test_count_cycles_examples():
    tr = Trajectory(np.array([1, 0, 1, 0, 1, 0, 1], dtype=np.int8), np.array([0, 2, 5, 8, 11, 13, 16.0]), 0.0, 20.0)
    assert count_cycles(tr, 9) == 1
    assert count_cycles(tr, 4.9) == 0
    assert count_cycles(tr, 11) == 2
    with pytest.raises(DomainError):
        count_cycles(tr, 21)


def test_trajectory_csv(tmp_path):
    tr = simulate(GammaKernel(1, 2), GammaKernel(1, 2), 0, 3, np.random.default_rng(0))
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "index,state,time"
    assert len(rows) == len(tr.times) + 1


def test_determinism():
    k = GammaKernel(2, 3)
    a = simulate(k, k, 0, 50, np.random.default_rng(42))
    b = simulate(k, k, 0, 50, np.random.default_rng(42))
    assert np.array_equal(a.times, b.times)


def test_renewal_erlang2_closed_form():
    alpha = 1.5
    grid = np.linspace(0, 6, 31)
    est = estimate_renewal(GammaKernel(1, alpha), GammaKernel(1, alpha), 0.0, grid, 20000, np.random.default_rng(3))
    exact = erlang2_renewal(alpha, grid)
    assert est.M_hat[0] == 0.0
    assert np.all(np.diff(est.M_hat) >= 0)
    assert np.all(np.abs(est.M_hat - exact) <= 3 * est.stderr + 1e-12)


def test_renewal_single_point_grid():
    est = estimate_renewal(GammaKernel(1, 1), GammaKernel(1, 1), 0.0, [0.0], 10, np.random.default_rng(0))
    assert est.M_hat.tolist() == [0.0]


def test_renewal_estimate_csv(tmp_path):
    est = estimate_renewal(GammaKernel(1, 1), GammaKernel(1, 1), 0.0, [0, 1, 2], 50, np.random.default_rng(0))
    est.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "time,M_hat,m_hat,stderr"


def test_markov_renewal_property():
    # sojourns entered at the same time x must not depend on the earlier path
    k = GammaKernel(lambda x: 1 + x, 2.0)
    rng = np.random.default_rng(5)
    x = 1.0
    direct = k.sample_sojourn(x, rng, size=5000)
    via_path = []
    for _ in range(5000):
        simulate(k, k, 0, rng.random(), rng)  # arbitrary history consumed from the stream
        via_path.append(k.sample_sojourn(x, rng))
    assert stats.ks_2samp(direct, via_path).pvalue > 1e-3


def test_renewal_density_basics():
    m = RenewalDensity((-0.2, 0.4, 1.0), (0.4, 0.1))
    assert m(np.array([-0.3, -0.2, 0.39, 0.4, 0.99, 1.0])).tolist() == [0, 0.4, 0.4, 0.1, 0.1, 0]
    assert m.integral(-1, 2) == pytest.approx(0.4 * 0.6 + 0.1 * 0.6)
    assert RenewalDensity.from_dict(m.to_dict()) == m
    inf = RenewalDensity.constant(1.0)
    assert RenewalDensity.from_dict(inf.to_dict()) == inf
    with pytest.raises(ValidationError):
        RenewalDensity((0, 1), (-0.1,))
    with pytest.raises(ValidationError):
        RenewalDensity((1, 0), (0.1,))


def test_validate_renewal_density_examples():
    k = HarmonicExponential(1.6, 1.3, 2 * math.pi)
    d = validate_renewal_density(RenewalDensity((-0.2, 0.4, 1.0), (0.4, 0.1)), k)
    assert d.passed and d.bound == pytest.approx(0.48) and d.max_level == 0.4
    assert validate_renewal_density(RenewalDensity.constant(k.min_rate), k).passed
    flat = HarmonicExponential(1.0, 1.0, 2 * math.pi)
    assert not validate_renewal_density(RenewalDensity.constant(1e-9), flat).passed
    with pytest.raises(ValidationError):
        validate_renewal_density(RenewalDensity.constant(0.5), k, strict=True)
    with pytest.raises(TypeError):
        validate_renewal_density(RenewalDensity.constant(0.5), GammaKernel(1, 1))


def test_homogeneous_bound_is_rate():
    # without modulation the infimum of the rate is alpha * b
    k = HarmonicExponential(2.0, 1.0, 0.0)
    assert validate_renewal_density(RenewalDensity.constant(2.0), k).passed
    assert not validate_renewal_density(RenewalDensity.constant(2.1), k).passed


def test_pure_y_chain():
    chain = pure_y_chain(GammaKernel(1, 5), 0, 2, np.random.default_rng(0))
    assert chain[0] == 0 and chain[-1] > 2 and np.all(chain[:-1] <= 2)


@pytest.fixture(scope="module")
def harmonic_setup():
    k = HarmonicExponential(1.0, 1.6, 2 * math.pi)
    m_tilde = estimate_pure_renewal_density(k, -0.2, 1.0, np.random.default_rng(9), n_replicates=10**5)
    return k, m_tilde


def test_thinning_bound_violation(harmonic_setup):
    k, m_tilde = harmonic_setup
    double = m_tilde.with_levels(2 * np.asarray(m_tilde.levels))
    with pytest.raises(ValidationError):
        thin_to_renewal_density(k, double, m_tilde, -0.2, 1.0, np.random.default_rng(0))
    with pytest.raises(ValidationError):
        check_thinning_bound(double, m_tilde, -0.2, 1.0)


def test_thinning_full_retention(harmonic_setup):
    k, m_tilde = harmonic_setup
    rng_a, rng_b = np.random.default_rng(3), np.random.default_rng(3)
    tr = thin_to_renewal_density(k, m_tilde, m_tilde, -0.2, 1.0, rng_a)
    chain = pure_y_chain(k, -0.2, 1.0, rng_b)
    # every pure-Y jump inside the window is retained and completes a cycle
    assert np.array_equal(tr.cycle_completions(), chain[1:-1])
    assert np.all(np.diff(tr.times)[1::2] == 0)  # Z-phases have zero length


def test_thinning_realises_target(harmonic_setup):
    k, m_tilde = harmonic_setup
    h = RenewalDensity((-0.2, 0.4, 1.0), (0.6, 0.2))
    rng = np.random.default_rng(12)
    n = 4000
    counts = np.zeros((n, 2))
    for i in range(n):
        tr = thin_to_renewal_density(k, h, m_tilde, -0.2, 1.0, rng)
        starts = tr.times[2::2]  # retained jumps: Y-phase starts after the initial one
        counts[i] = [np.sum(starts < 0.4), np.sum(starts >= 0.4)]
    rate = counts.mean(axis=0) / 0.6
    se = counts.std(axis=0, ddof=1) / math.sqrt(n) / 0.6
    assert np.all(np.abs(rate - [0.6, 0.2]) <= 3 * se)


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.5, 4.0), seed=st.integers(0, 2**32 - 1))
def test_renewal_below_rate_bound(lam, seed):
    grid = np.linspace(0, 3, 16)
    est = estimate_renewal(GammaKernel(2, lam), GammaKernel(1, lam), 0.0, grid, 400, np.random.default_rng(seed))
    assert np.all(est.M_hat <= lam * grid + 3 * est.stderr + 1e-12)
