from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from tasepmix.exact_mixing import (
    CapExceeded,
    MixingProblem,
    build,
    enumerate_states,
    exit_rates,
    hypergeometric_pmf,
    mixing_time,
    no_cutoff_profile,
    transient,
    tv_curve,
    window_count_law,
)


def folded_poisson(t: float, n: int) -> np.ndarray:
    """Law of Poisson(t) mod n via the discrete Fourier transform on Z_n."""
    w = np.exp(2j * np.pi * np.arange(n) / n)
    char = np.exp(t * (w - 1))
    r = np.arange(n)
    return np.real((w[None, :] ** (-r[:, None]) * char[None, :]).sum(axis=1)) / n


def single_particle_tv(t: float, n: int) -> float:
    return 0.5 * float(np.abs(folded_poisson(t, n) - 1 / n).sum())


def single_particle_mixing(n: int, eps: float) -> float:
    return brentq(lambda t: single_particle_tv(t, n) - eps, 1e-9, 50 * n * n, xtol=1e-13)


def test_folded_poisson_oracle_against_series():
    t = 1.3
    series = [math.exp(-t) * sum(t**m / math.factorial(m) for m in range(r, 80, 5)) for r in range(5)]
    assert np.allclose(folded_poisson(t, 5), series, atol=1e-15)


# -- state space and generator -----------------------------------------------------


def test_three_site_single_particle_cycle():
    space, q = build(3, 1)
    assert space.size == 3
    dense = q.toarray()
    for i in range(3):
        off = np.delete(dense[i], i)
        assert sorted(off) == [0.0, 1.0]


def test_four_two():
    space, q = build(4, 2)
    assert space.size == 6
    assert exit_rates(q)[space.index((1, 1, 0, 0))] == 1
    assert space.state(0) == (0, 0, 1, 1)
    assert space.state(5) == (1, 1, 0, 0)


@pytest.mark.parametrize("n,k", [(n, k) for n in range(3, 13) for k in range(1, n)])
def test_generator_structure(n, k):
    space, q = build(n, k)
    assert space.size == math.comb(n, k)
    rows = [tuple(r) for r in space.states.tolist()]
    assert rows == sorted(rows)
    dense = q.toarray() if space.size < 1000 else None
    if dense is not None:
        off = dense - np.diag(np.diag(dense))
        assert set(np.unique(off)) <= {0.0, 1.0}
        assert np.all(dense.sum(axis=1) == 0)
    adj = (space.states & (1 - np.roll(space.states, -1, axis=1))).sum(axis=1)
    assert np.array_equal(exit_rates(q), adj)
    uniform = np.full(space.size, 1 / space.size)
    assert np.max(np.abs(uniform @ q)) <= 1e-12


def test_jump_targets():
    space, q = build(5, 2)
    a = space.index((1, 0, 0, 1, 0))
    targets = {space.state(j) for j in q[a].indices if j != a}
    assert targets == {(0, 1, 0, 1, 0), (1, 0, 0, 0, 1)}
    b = space.index((0, 1, 0, 0, 1))
    assert {space.state(j) for j in q[b].indices if j != b} == {(0, 0, 1, 0, 1), (1, 1, 0, 0, 0)}


def test_cap_and_range_errors():
    with pytest.raises(CapExceeded):
        build(20, 10, cap=1000)
    with pytest.raises(ValueError):
        enumerate_states(5, 0)
    with pytest.raises(ValueError):
        enumerate_states(5, 5)


# -- transient laws -------------------------------------------------------------------------


def test_transient_time_zero():
    space, q = build(5, 2)
    p = np.zeros(space.size)
    p[3] = 1
    assert np.array_equal(transient(p, q, 0.0), p)


def test_three_site_return_probability():
    space, q = build(3, 1)
    start = space.index((1, 0, 0))
    p = np.zeros(3)
    p[start] = 1
    out = transient(p, q, 1.0)
    series = math.exp(-1) * sum(1 / math.factorial(m) for m in range(0, 60, 3))
    assert out[start] == pytest.approx(series, abs=1e-13)
    # one jump moves the particle from site 0 to site 1
    assert out[space.index((0, 1, 0))] == pytest.approx(folded_poisson(1.0, 3)[1], abs=1e-13)


@pytest.mark.parametrize("n,k", [(6, 3), (8, 3), (10, 5)])
def test_uniform_is_stationary_under_transient(n, k):
    space, q = build(n, k)
    u = np.full(space.size, 1 / space.size)
    assert np.max(np.abs(transient(u, q, 7.5, 1e-14) - u)) <= 1e-13


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 30.0))
@settings(max_examples=40, deadline=None)
def test_transient_preserves_mass_and_sign(seed, t):
    space, q = build(7, 3)
    p = np.random.default_rng(seed).dirichlet(np.ones(space.size))
    out = transient(p, q, t, 1e-12)
    assert np.all(out >= -1e-15)
    assert abs(out.sum() - 1) <= 1e-12


def test_semigroup():
    space, q = build(7, 3)
    p = np.zeros(space.size)
    p[0] = 1
    a = transient(transient(p, q, 1.25), q, 2.5)
    b = transient(p, q, 3.75)
    assert np.max(np.abs(a - b)) < 1e-12


# -- mixing times ---------------------------------------------------------------------------


def test_three_site_mixing_time_matches_folded_poisson():
    expect = single_particle_mixing(3, 0.25)
    assert mixing_time(3, 1, 0.25, tol=1e-9) == pytest.approx(expect, abs=2e-9)


def test_tv_curve_single_particle():
    times = np.linspace(0, 12, 25)
    curve = tv_curve(6, 1, times)
    expect = [single_particle_tv(t, 6) for t in times]
    assert np.allclose(curve.values, expect, atol=1e-12)


@pytest.mark.parametrize("n,k", [(7, 2), (8, 4), (9, 4)])
def test_tv_curve_monotone_and_bounded(n, k):
    curve = tv_curve(n, k, np.linspace(0, 3 * n, 80))
    assert np.all(curve.values <= 1) and np.all(curve.values >= 0)
    assert np.all(np.diff(curve.values) <= 1e-12)


@pytest.mark.parametrize("n,k", [(7, 2), (8, 3), (9, 4)])
def test_particle_hole_symmetry_of_curve(n, k):
    times = np.linspace(0, 2 * n, 40)
    a = tv_curve(n, k, times).values
    b = tv_curve(n, n - k, times).values
    assert np.max(np.abs(a - b)) < 1e-12


def test_mixing_time_monotone_in_eps():
    prob = MixingProblem(8, 3)
    ts = [prob.mixing_time(e, 1e-6) for e in (0.05, 0.1, 0.25, 0.5, 0.9)]
    assert all(a >= b for a, b in zip(ts, ts[1:]))


def test_mixing_time_bracket_and_errors():
    prob = MixingProblem(6, 2)
    t = prob.mixing_time(0.25, 1e-8)
    before = prob.curve([t - 2e-8]).values[0]
    after = prob.curve([t]).values[0]
    assert before >= 0.25 > after
    with pytest.raises(ValueError):
        prob.mixing_time(1.0)


# -- window law -------------------------------------------------------------------------------


def test_window_example():
    law = window_count_law(10, 4, 2)
    assert law[0] == pytest.approx(1 / 3, abs=1e-15)


@pytest.mark.parametrize("n", range(2, 17))
def test_window_law_is_hypergeometric(n):
    for k in range(1, n):
        for w in range(1, n + 1):
            assert np.max(np.abs(window_count_law(n, k, w) - hypergeometric_pmf(n, k, w))) <= 1e-12


@pytest.mark.parametrize("n,k", [(10, 4), (15, 6), (20, 9), (20, 15)])
def test_window_moments(n, k):
    w = n // 5
    law = window_count_law(n, k, w)
    z = np.arange(w + 1)
    mean = float(law @ z)
    var = float(law @ z**2) - mean**2
    assert mean == pytest.approx(k / 5, abs=1e-12)
    assert var <= k / 5 + 1e-12


# -- cutoff profile ---------------------------------------------------------------------------


def test_single_particle_cutoff_ratio():
    # from a point mass the distance starts at 5/6, below 0.9
    assert no_cutoff_profile([6], lambda n: 1, eps=0.1)[0].ratio == math.inf
    row = no_cutoff_profile([6], lambda n: 1, eps=0.25, tol=1e-9)[0]
    expect = single_particle_mixing(6, 0.25) / single_particle_mixing(6, 0.75)
    assert row.ratio == pytest.approx(expect, rel=1e-7)
    assert row.ratio >= 1


def test_cutoff_ratios_at_least_one():
    for row in no_cutoff_profile([6, 7, 8], lambda n: n // 2, eps=0.2, tol=1e-6):
        assert row.ratio >= 1
