from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tasepmix.growth_bridge import (
    GrowthInterface,
    arrival_table,
    check_peak,
    coalescence_criterion,
    competition_interfaces,
    competition_labels,
    config_from_interface,
    coupled_pair_environment,
    evolve_interface,
    expand_labels,
    expand_pair,
    interface_from_config,
    lpp_driven_tasep,
    occupation_times,
    weight_driven_tasep,
)
from tasepmix.periodic_lpp import Cell, Environment, lpt_sets
from tasepmix.ring_tasep import Censored, ClockSource, RingConfig, disagreement, simulate

from test_ring_tasep import neighbour_pair, ring_configs


def random_config(rng, n, k):
    occ = np.zeros(n, dtype=int)
    occ[rng.choice(n, k, replace=False)] = 1
    return RingConfig(tuple(int(v) for v in occ))


def moves_before(moves, tau):
    return [(d, t) for d, t in moves if t < tau * (1 - 1e-9)]


def same_moves(a, b):
    return len(a) == len(b) and all(
        p[0] == q[0] and math.isclose(p[1], q[1], rel_tol=1e-9) for p, q in zip(a, b)
    )


# -- staircase -----------------------------------------------------------------


def test_unrolled_vertices():
    g = interface_from_config(RingConfig((1, 0, 1, 0)), Cell(0, 0))
    assert g.vertices(1, 4) == [Cell(0, -1), Cell(1, -1), Cell(1, -2), Cell(2, -2)]


def test_all_empty_rejected():
    with pytest.raises(ValueError):
        RingConfig((0, 0, 0, 0))
    with pytest.raises(ValueError):
        GrowthInterface(Cell(0, 0), (0, 0, 0))


@given(ring_configs(), st.integers(-5, 5), st.integers(-5, 5))
@settings(max_examples=200, deadline=None)
def test_staircase_bijection(eta, a1, a2):
    g = interface_from_config(eta, Cell(a1, a2))
    assert config_from_interface(g) == eta
    assert g.vertex(0) == Cell(a1, a2)
    assert sum(g.steps) == eta.k
    n = eta.n_sites
    for i in range(-n, n + 1):
        assert g.vertex(i + n) == g.vertex(i) + g.period
        step = g.vertex(i) - g.vertex(i - 1)
        assert step == (Cell(0, -1) if eta.occupancy[(i - 1) % n] else Cell(1, 0))


# -- growth ----------------------------------------------------------------------


def test_time_zero_is_initial():
    eta = RingConfig((1, 0, 0, 1, 1, 0, 1, 0))
    env = Environment.periodic(8, 4, 3)
    g0 = interface_from_config(eta, Cell(2, -1))
    assert evolve_interface(env, g0, 0.0) == g0


def test_first_event_flips_one_corner():
    eta = RingConfig((1, 1, 1, 0, 0, 0, 0))
    env = Environment.periodic(7, 3, 11)
    g0 = interface_from_config(eta)
    w = env.weight(g0.vertex(3))  # square above the only valley
    before = evolve_interface(env, g0, math.nextafter(w, 0.0))
    after = evolve_interface(env, g0, w)
    assert before == g0
    assert config_from_interface(after) == RingConfig((1, 1, 0, 1, 0, 0, 0))


@pytest.mark.parametrize("seed", range(5))
def test_growth_is_monotone_and_conserves_k(seed):
    rng = np.random.default_rng(seed)
    eta = random_config(rng, 12, 5)
    env = Environment.periodic(12, 5, seed)
    table = arrival_table(env, interface_from_config(eta), horizon=15.0)
    prev = table.heights_at(0.0)
    for t in np.linspace(0, 15, 61):
        h = table.heights_at(t)
        assert np.all(h >= prev)
        prev = h
        g = table.interface_at(t)
        assert g.k == 5
        assert g.vertex(12) - g.vertex(0) == Cell(7, -5)


@pytest.mark.parametrize("seed", range(4))
def test_occupation_time_identity(seed):
    rng = np.random.default_rng(seed)
    n, k = 6, 3
    eta = random_config(rng, n, k)
    env = Environment.periodic(n, k, 50 + seed)
    g0 = interface_from_config(eta)
    table = arrival_table(env, g0, horizon=4.0)
    sources = g0.vertices(-3 * n, 3 * n)
    checked = 0
    for x in range(-4, 8):
        for y in range(-5, 6):
            c = Cell(x, y)
            d, j, _ = table.locate(c + Cell(1, 1))
            if j < 0 or j >= table.depth:
                continue
            src = [s for s in sources if s.v1 <= x and s.v2 <= y]
            expect = lpt_sets(env, src, [c]).value + env.weight(c)
            assert occupation_times(table, [c])[0] == expect
            checked += 1
    assert checked > 30


@pytest.mark.parametrize("seed", range(3))
def test_roots_match_set_geodesic_sources(seed):
    rng = np.random.default_rng(seed)
    n, k = 8, 3
    g0 = interface_from_config(random_config(rng, n, k))
    env = Environment.periodic(n, k, 90 + seed)
    table = arrival_table(env, g0, horizon=6.0)
    sources = g0.vertices(-4 * n, 4 * n)
    for _ in range(40):
        d = int(rng.integers(n))
        j = int(rng.integers(table.depth))
        h = int(table.h0[d]) + 1 + j
        u = g0.anchor + Cell(d + h, h)
        c = u - Cell(1, 1)
        src = [s for s in sources if s.v1 <= c.v1 and s.v2 <= c.v2]
        s = lpt_sets(env, src, [c]).source - g0.anchor
        assert table.root_at(u) == s.v1 - s.v2


def test_roots_monotone_along_rows_and_columns():
    n, k = 10, 4
    g0 = interface_from_config(random_config(np.random.default_rng(7), n, k))
    env = Environment.periodic(n, k, 4)
    table = arrival_table(env, g0, horizon=10.0)
    grid = {}
    for d in range(n):
        for j in range(table.depth):
            h = int(table.h0[d]) + 1 + j
            for q in (-1, 0, 1):
                u = g0.anchor + Cell(d + h + q * (n - k), h - q * k)
                grid[u] = table.root_at(u)
    for u, r in grid.items():
        right = grid.get(u + Cell(1, 0))
        up = grid.get(u + Cell(0, 1))
        if right is not None:
            assert right >= r
        if up is not None:
            assert up <= r


# -- particle side -------------------------------------------------------------------


def test_adjacent_block_at_time_zero():
    eta = RingConfig((0, 1, 1, 1, 0, 0))
    env = Environment.periodic(6, 3, 1)
    assert lpp_driven_tasep(env, eta, [0.0]) == [eta]


@pytest.mark.parametrize("seed", range(5))
def test_pathwise_agreement_with_weight_driven_oracle(seed):
    rng = np.random.default_rng(seed)
    eta = random_config(rng, 6, 3)
    env = Environment.periodic(6, 3, 200 + seed)
    times = sorted(rng.uniform(0, 20, 100))
    assert lpp_driven_tasep(env, eta, times) == weight_driven_tasep(env, eta, times)


def two_proportion_z(x1, n1, x2, n2):
    p = (x1 + x2) / (n1 + n2)
    se = math.sqrt(p * (1 - p) * (1 / n1 + 1 / n2))
    return (x1 / n1 - x2 / n2) / se


@pytest.mark.slow
def test_site_occupancy_law_matches_clock_simulation():
    eta = RingConfig((1, 1, 1, 1, 0, 0, 0, 0))
    reps = 10_000
    lpp = sum(lpp_driven_tasep(Environment.periodic(8, 4, s), eta, [5.0])[0].occupancy[0] for s in range(reps))
    ring = sum(simulate(eta, ClockSource(10**6 + s), 5.0).final.occupancy[0] for s in range(reps))
    assert abs(two_proportion_z(lpp, reps, ring, reps)) < 3


# -- second class particles ------------------------------------------------------------


def test_expand_labels():
    assert expand_labels((1, 2, 0, 2)) == (1, 0, 1, 0, 0, 1)
    assert expand_labels((1, 2, 0, 2), 1) == (1, 1, 0, 1, 0, 0)
    e = expand_pair(disagreement(RingConfig((1, 1, 0, 0)), RingConfig((1, 0, 0, 1))))
    assert e.config == RingConfig((1, 0, 1, 0, 0, 1))
    assert e.peaks == (2, 5)
    assert e.peak_sites == (1, 3)


def test_peak_shape_errors():
    env = Environment.periodic(6, 3, 0)
    g0 = interface_from_config(RingConfig((1, 0, 1, 1, 0, 0)))
    check_peak(g0, 2)
    with pytest.raises(ValueError):
        competition_labels(env, g0, 1, 2, 1.0)
    with pytest.raises(ValueError):
        competition_labels(env, g0, 2, 2, 1.0)


def coupled_run(n, k, seed, cap=1e5):
    rng = np.random.default_rng(seed)
    a = random_config(rng, n, k)
    b = neighbour_pair(a, int(rng.integers(k)), int(rng.integers(n - k)))
    return coupled_pair_environment((a, b), ClockSource(seed), cap, env_seed=7000 + seed)


@pytest.mark.parametrize("seed", range(30))
def test_competition_interfaces_follow_second_class_particles(seed):
    run = coupled_run(10, 4, seed)
    assert not isinstance(run.tau, Censored)
    j, jt = run.expanded.peaks
    state = competition_labels(run.env, run.interface, j, jt, run.tau)
    phi, phi_t = competition_interfaces(state)
    for walk, moves in ((phi, run.moves[0]), (phi_t, run.moves[1])):
        assert same_moves(moves_before(walk.moves(), run.tau), moves)
        disp = np.cumsum([0] + [d for d, _ in moves])
        assert walk.displacement()[: len(disp)] == list(disp)


def test_competition_steps_and_first_move():
    run = coupled_run(12, 5, 3)
    j, jt = run.expanded.peaks
    state = competition_labels(run.env, run.interface, j, jt, run.tau)
    phi, phi_t = competition_interfaces(state, steps=4)
    assert len(phi.cells) <= 5
    start = run.interface.vertex(j)
    up = state.side(start + Cell(1, 1)) == 1
    if len(phi.cells) > 1:
        assert phi.cells[1] == start + (Cell(0, 1) if up else Cell(1, 0))
        # the walk steps to whichever neighbour arrives first
        a_up = state.table.arrival_at(start + Cell(0, 1))
        a_right = state.table.arrival_at(start + Cell(1, 0))
        assert up == (a_up < a_right)
    for walk in (phi, phi_t):
        for a, b in zip(walk.cells, walk.cells[1:]):
            assert b - a in (Cell(1, 0), Cell(0, 1))


def test_colors_are_disjoint_and_limited_to_grown_squares():
    run = coupled_run(10, 4, 11)
    j, jt = run.expanded.peaks
    state = competition_labels(run.env, run.interface, j, jt, run.tau)
    g0 = run.interface
    plus = minus = 0
    for x in range(-3, 12):
        for y in range(-6, 8):
            c = state.color(Cell(x, y))
            if c is None:
                continue
            assert c in (1, -1)
            assert state.fill_time(Cell(x, y)) <= run.tau
            plus += c == 1
            minus += c == -1
    assert plus and minus
    # squares whose geodesic starts strictly between the peaks are +
    for d in range(j + 1, jt):
        if g0.steps[d - 1] == 1 and g0.steps[d % g0.n_sites] == 0:
            assert state.side(g0.vertex(d) + Cell(1, 1)) == 1


# -- coalescence criterion -------------------------------------------------------------


def test_criterion_fails_for_short_shift():
    fails = sum(not coalescence_criterion(*_env_and_g0(s), Cell(1, 1)).holds for s in range(10))
    assert fails >= 8


def _env_and_g0(seed, n=32, k=8):
    rng = np.random.default_rng(seed)
    return Environment.periodic(n, k, seed), interface_from_config(random_config(rng, n, k))


def test_criterion_holds_for_long_shift():
    n, k = 32, 8
    v = Cell(int(n * n / math.sqrt(k) / 0.1), 1)
    holds = sum(coalescence_criterion(*_env_and_g0(s), v).holds for s in range(20))
    assert holds >= 18


def test_criterion_rejects_shift_into_initial_region():
    env, g0 = _env_and_g0(0)
    with pytest.raises(ValueError):
        coalescence_criterion(env, g0, Cell(-3, -3))


@pytest.mark.parametrize("seed", range(20))
def test_criterion_bounds_coalescence_time(seed):
    n, k = 16, 4
    run = coupled_run(n, k, seed)
    v = Cell(int(n * n / math.sqrt(k)), 1)
    res = coalescence_criterion(run.env, run.interface, v)
    if res.holds:
        assert run.tau <= res.bound
    assert len(res.roots) == run.interface.n_sites + 1
