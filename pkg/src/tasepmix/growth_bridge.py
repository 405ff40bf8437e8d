"""Dictionary between the ring TASEP and growth in a periodic LPP environment.

A configuration on Z_N is a down-right staircase: reading sites 1..N, a hole
is a step ``e1`` and a particle a step ``-e2``.  Vertex ``i`` of the staircase
sits on the diagonal ``x - y = i`` (relative to the anchor), so a vertex is
named by its diagonal ``d`` and its height ``h``.  A particle at site ``i``
followed by a hole is a valley at vertex ``i``; filling the square above the
valley moves the vertex by ``(1, 1)``, which is the particle's jump.

Arrival times of vertices obey

    A(d, h) = max(A(d - 1, h), A(d + 1, h - 1)) + w(square below-left of the vertex)

with ``A = 0`` on or below the initial staircase.  Periodicity of the
environment gives ``A(d + N, h - k) = A(d, h)``, so only ``N`` diagonals are
stored.  The key ``k d + N h`` is invariant under that shift and strictly
decreases along dependencies, which fixes a valid evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .periodic_lpp import Cell, Environment, as_cell
from .ring_tasep import (
    Censored,
    ClockSource,
    DisagreementConfig,
    RingConfig,
    check_pair,
    disagreement,
    evolve_disagreement,
)


@dataclass(frozen=True)
class GrowthInterface:
    """Periodic staircase: ``steps[i-1]`` is 1 for a ``-e2`` step into vertex ``i``, 0 for ``e1``."""

    anchor: Cell
    steps: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "anchor", as_cell(self.anchor))
        steps = tuple(int(s) for s in self.steps)
        object.__setattr__(self, "steps", steps)
        if any(s not in (0, 1) for s in steps):
            raise ValueError("steps must be 0 (e1) or 1 (-e2)")
        if not 1 <= sum(steps) <= len(steps) - 1:
            raise ValueError("a growth interface needs between 1 and N-1 down steps per period")

    @property
    def n_sites(self) -> int:
        return len(self.steps)

    @property
    def k(self) -> int:
        return sum(self.steps)

    @property
    def period(self) -> Cell:
        return Cell(self.n_sites - self.k, -self.k)

    def heights(self) -> np.ndarray:
        """Height of vertex ``d`` relative to the anchor, ``d = 0 .. N-1``."""
        return -np.concatenate(([0], np.cumsum(self.steps[:-1]))).astype(np.int64)

    def vertex(self, i: int) -> Cell:
        n = self.n_sites
        q, d = divmod(i, n)
        h = int(self.heights()[d]) - q * self.k
        return Cell(self.anchor.v1 + i + h, self.anchor.v2 + h)

    def vertices(self, lo: int, hi: int) -> list[Cell]:
        return [self.vertex(i) for i in range(lo, hi + 1)]

    def increment(self, i: int) -> Cell:
        """``g^i - g^(i-1)``."""
        return Cell(0, -1) if self.steps[(i - 1) % self.n_sites] else Cell(1, 0)


def interface_from_config(eta: RingConfig, anchor=(0, 0)) -> GrowthInterface:
    return GrowthInterface(as_cell(anchor), eta.occupancy)


def config_from_interface(g: GrowthInterface) -> RingConfig:
    return RingConfig(g.steps)


def interface_from_heights(anchor: Cell, heights: np.ndarray, k: int) -> GrowthInterface:
    """Staircase through vertices ``anchor + (d + h_d, h_d)``, re-anchored on diagonal 0."""
    h = np.append(heights, heights[0] - k)
    steps = tuple(int(s) for s in (h[:-1] - h[1:]))
    return GrowthInterface(anchor + Cell(int(heights[0]), int(heights[0])), steps)


# -- arrival tables ----------------------------------------------------------


@njit(cache=True)
def _arrivals(wts, h0, order_d, order_j, n, k):
    w, hh = wts.shape
    arr = np.zeros((n, hh))
    root = np.full((n, hh), np.iinfo(np.int64).min, dtype=np.int64)
    for p in range(order_d.shape[0]):
        d = order_d[p]
        j = order_j[p]
        h = h0[d] + 1 + j
        # predecessor u - e1 = (d - 1, h)
        dl = d - 1
        hl = h
        sl = 0
        if dl < 0:
            dl += n
            hl -= k
            sl = -n
        jl = hl - h0[dl] - 1
        # predecessor u - e2 = (d + 1, h - 1)
        dr = d + 1
        hr = h - 1
        sr = 0
        if dr == n:
            dr = 0
            hr += k
            sr = n
        jr = hr - h0[dr] - 1
        if jl < 0 and jr < 0:
            best = 0.0
            r = d
        elif jl < 0:
            best = arr[dr, jr]
            r = root[dr, jr] + sr
        elif jr < 0:
            best = arr[dl, jl]
            r = root[dl, jl] + sl
        else:
            a = arr[dl, jl]
            b = arr[dr, jr]
            if b >= a:
                best = b
                r = root[dr, jr] + sr
            else:
                best = a
                r = root[dl, jl] + sl
        arr[d, j] = best + wts[d, j]
        root[d, j] = r
    return arr, root


@dataclass
class ArrivalTable:
    """Vertex arrival times above an initial staircase.

    ``arrival[d, j]`` is the time vertex ``(d, h0[d] + 1 + j)`` joins the
    grown region; ``root[d, j]`` is the diagonal of the initial valley its
    geodesic starts from (unwrapped, so periodic copies differ by ``N``).
    """

    interface: GrowthInterface
    h0: np.ndarray
    arrival: np.ndarray
    root: np.ndarray

    @property
    def depth(self) -> int:
        return self.arrival.shape[1]

    def locate(self, vertex) -> tuple[int, int, int]:
        """``(d, j, q)`` with ``q`` the number of periods folded away."""
        v = as_cell(vertex) - self.interface.anchor
        n, k = self.interface.n_sites, self.interface.k
        q, d = divmod(v.v1 - v.v2, n)
        h = v.v2 + q * k
        return d, h - int(self.h0[d]) - 1, q

    def arrival_at(self, vertex) -> float:
        d, j, _ = self.locate(vertex)
        if j < 0:
            return 0.0
        if j >= self.depth:
            raise ValueError(f"vertex {vertex} lies beyond the computed table")
        return float(self.arrival[d, j])

    def root_at(self, vertex) -> int | None:
        d, j, q = self.locate(vertex)
        if j < 0:
            return None
        if j >= self.depth:
            raise ValueError(f"vertex {vertex} lies beyond the computed table")
        return int(self.root[d, j]) + q * self.interface.n_sites

    def heights_at(self, t: float) -> np.ndarray:
        grown = np.sum(self.arrival <= t, axis=1)
        if np.any(grown >= self.depth):
            raise ValueError("time lies beyond the computed table")
        return self.h0 + grown

    def interface_at(self, t: float) -> GrowthInterface:
        return interface_from_heights(self.interface.anchor, self.heights_at(t), self.interface.k)


def _build_table(env: Environment, g0: GrowthInterface, depth: int) -> ArrivalTable:
    n, k = g0.n_sites, g0.k
    if env.period != (n, k):
        raise ValueError(f"environment period {env.period} does not match the interface ({n}, {k})")
    h0 = g0.heights()
    d = np.repeat(np.arange(n), depth)
    j = np.tile(np.arange(depth), n)
    h = h0[d] + 1 + j
    # square below-left of vertex (d, h) has corner anchor + (d + h - 1, h - 1)
    wts = env.weights_at(g0.anchor.v1 + d + h - 1, g0.anchor.v2 + h - 1).reshape(n, depth)
    key = k * d + n * h
    order = np.argsort(key, kind="stable")
    arr, root = _arrivals(wts, h0, d[order].copy(), j[order].copy(), n, k)
    return ArrivalTable(g0, h0, arr, root)


def arrival_table(env: Environment, g0: GrowthInterface, *, horizon: float | None = None, vertices=()) -> ArrivalTable:
    """Arrival times deep enough to cover time ``horizon`` and every listed vertex."""
    depth = 8
    probe = ArrivalTable(g0, g0.heights(), np.zeros((g0.n_sites, 0)), np.zeros((g0.n_sites, 0), dtype=np.int64))
    for v in vertices:
        depth = max(depth, probe.locate(v)[1] + 1)
    while True:
        table = _build_table(env, g0, depth)
        if horizon is None or np.all(table.arrival[:, -1] > horizon):
            return table
        depth *= 2


def evolve_interface(env: Environment, g0: GrowthInterface, t: float) -> GrowthInterface:
    """The staircase at time ``t``; vertex 0 stays on the anchor's diagonal."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    return arrival_table(env, g0, horizon=t).interface_at(t)


def occupation_times(table: ArrivalTable, squares) -> np.ndarray:
    """Fill time of each square, the arrival time of its upper-right corner."""
    return np.array([table.arrival_at(as_cell(c) + Cell(1, 1)) for c in squares])


def lpp_driven_tasep(env: Environment, eta0: RingConfig, sample_times: Sequence[float]) -> list[RingConfig]:
    """Ring configurations read off the growth interface at each sample time."""
    g0 = interface_from_config(eta0)
    if not len(sample_times):
        return []
    table = arrival_table(env, g0, horizon=float(max(sample_times)))
    return [config_from_interface(table.interface_at(t)) for t in sample_times]


def weight_driven_tasep(env: Environment, eta0: RingConfig, sample_times: Sequence[float]) -> list[RingConfig]:
    """Event-driven TASEP where the valley at a vertex waits the weight of its square.

    Each valley becomes active when both neighbouring vertices have arrived
    and jumps after the weight of the square it fills.  This is the particle
    side of the growth picture; it shares no code with the arrival table.
    """
    g0 = interface_from_config(eta0)
    n, k = g0.n_sites, g0.k
    occ = list(eta0.occupancy)
    heights = list(int(h) for h in g0.heights())
    last = [0.0] * n
    pending: dict[int, float] = {}

    def refresh(d):
        # vertex d is a valley when site d (1-based) holds a particle and site d+1 a hole
        if occ[(d - 1) % n] == 1 and occ[d % n] == 0:
            if d not in pending:
                act = max(last[(d - 1) % n], last[(d + 1) % n])
                sq = g0.anchor + Cell(d + heights[d], heights[d])
                pending[d] = act + env.weight(sq)
        else:
            pending.pop(d, None)

    for d in range(n):
        refresh(d)
    times = sorted(enumerate(sample_times), key=lambda p: p[1])
    out: list[RingConfig | None] = [None] * len(sample_times)
    for idx, t in times:
        while pending:
            d = min(pending, key=lambda x: (pending[x], x))
            tf = pending[d]
            if tf > t:
                break
            del pending[d]
            occ[(d - 1) % n], occ[d % n] = 0, 1
            heights[d] += 1
            last[d] = tf
            for e in (d - 1, d, d + 1):
                refresh(e % n)
        out[idx] = RingConfig(tuple(occ))
    return out


# -- second class particles and the expanded ring ------------------------------


def expand_labels(labels: Sequence[int], offset: int = 0) -> tuple[int, ...]:
    """Replace each second class particle by a (hole, particle) pair, rotated by ``offset``."""
    out: list[int] = []
    for v in labels:
        out.extend((0, 1) if v == 2 else (v,))
    m = len(out)
    return tuple(out[(e - offset) % m] for e in range(m))


@dataclass(frozen=True)
class ExpandedPair:
    """A pair configuration on Z_N as one configuration on Z_(N+2).

    ``peaks`` are the staircase vertices of the two (hole, particle) pairs,
    in increasing order; ``peak_sites`` are the ring sites of the second
    class particles they came from.
    """

    config: RingConfig
    peaks: tuple[int, int]
    peak_sites: tuple[int, int]


def expand_pair(d: DisagreementConfig) -> ExpandedPair:
    labels = d.labels
    if labels.count(2) != 2:
        raise ValueError("expansion needs exactly two second class particles")
    occ = expand_labels(labels)
    peaks = []
    e = 0
    for x, v in enumerate(labels):
        if v == 2:
            # hole at 0-based expanded index e is site e + 1: the peak vertex
            peaks.append((e + 1, x))
            e += 2
        else:
            e += 1
    (j, x), (jt, xt) = sorted(peaks)
    return ExpandedPair(RingConfig(occ), (j, jt), (x, xt))


def check_peak(g0: GrowthInterface, j: int) -> None:
    n = g0.n_sites
    if g0.steps[(j - 1) % n] != 0 or g0.steps[j % n] != 1:
        raise ValueError(f"vertex {j} is not a peak (needs an e1 step before and a -e2 step after)")


@dataclass
class CoupledPairRun:
    """A disagreement run together with an environment that reproduces it until ``tau``.

    ``moves`` lists, for the second class particle behind each peak, the
    ``(direction, time)`` of every move before ``tau``; direction is +1 for a
    clockwise step and -1 otherwise.
    """

    env: Environment
    interface: GrowthInterface
    expanded: ExpandedPair
    tau: float | Censored
    moves: tuple[list[tuple[int, float]], list[tuple[int, float]]]


def coupled_pair_environment(
    pair: tuple[RingConfig, RingConfig], clocks: ClockSource, cap: float, env_seed: int
) -> CoupledPairRun:
    """Run the disagreement process and build an ``(N+2, k+1)``-periodic environment coupled to it.

    Each valley of the expanded ring that fires before ``tau`` gets the weight
    (fire time - activation time).  Valleys open at ``tau`` get the elapsed
    wait plus a fresh weight, except the annihilating one, which fires at
    ``tau``.  All other squares keep the base weights of ``env_seed``.
    """
    a, b = pair
    check_pair(a, b)
    start = disagreement(a, b)
    run = evolve_disagreement(start, clocks, cap, stop_at_tau=True, record=True)
    exp = expand_pair(start)
    g0 = interface_from_config(exp.config)
    n, k = g0.n_sites, g0.k
    base = Environment.periodic(n, k, env_seed)

    occ = list(exp.config.occupancy)
    heights = [int(h) for h in g0.heights()]
    last = [0.0] * n
    labels = list(start.labels)
    ring = len(labels)
    offset = 0
    who = {exp.peak_sites[0]: 0, exp.peak_sites[1]: 1}
    moves: tuple[list, list] = ([], [])
    overrides: dict[Cell, float] = {}

    def square(d):
        return g0.anchor + Cell(d + heights[d], heights[d])

    def activation(d):
        return max(last[(d - 1) % n], last[(d + 1) % n])

    def fire(p, t):
        # particle at expanded 0-based index p jumps to p + 1: valley at vertex p + 1
        d = (p + 1) % n
        if not (occ[p % n] == 1 and occ[(p + 1) % n] == 0):
            raise AssertionError("expanded configuration out of sync with the disagreement run")
        overrides[square(d)] = t - activation(d)
        occ[p % n], occ[(p + 1) % n] = 0, 1
        heights[d] += 1
        last[d] = t

    def expanded_index(x):
        return offset + x + sum(1 for y in range(x) if labels[y] == 2)

    tau = run.tau
    for t, x, la, lb in zip(run.times, run.sites, run.before_x, run.before_y):
        t = float(t)
        x = int(x)
        y = (x + 1) % ring
        e = expanded_index(x)
        if la == 2 and lb == 2:
            # annihilation: the valley between the two pairs fires at tau
            fire(e + 1, t)
            break
        if la == 1 and lb == 0:
            fire(e, t)
        elif la == 1 and lb == 2:
            fire(e, t)
            if x == ring - 1:
                offset += 1
            s = who.pop(y)
            who[x] = s
            moves[s].append((-1, t))
        elif la == 2 and lb == 0:
            fire(e + 1, t)
            if x == ring - 1:
                offset -= 1
            s = who.pop(x)
            who[y] = s
            moves[s].append((1, t))
        else:
            raise AssertionError(f"unexpected move labels ({la}, {lb})")
        labels[x], labels[y] = int(lb), int(la)
        if tuple(expand_labels(labels, offset)) != tuple(occ):
            raise AssertionError("expanded configuration out of sync with the disagreement run")

    t_end = tau if not isinstance(tau, Censored) else tau.cap
    for d in range(n):
        sq = square(d)
        if occ[(d - 1) % n] == 1 and occ[d % n] == 0 and sq not in overrides:
            overrides[sq] = (t_end - activation(d)) + base.weight(sq)
    env = base.with_overrides(overrides)
    return CoupledPairRun(env, g0, exp, tau, moves)


# -- competition interfaces ----------------------------------------------------


@dataclass
class CompetitionState:
    """Two-colouring of grown squares by the side of their geodesic's root.

    A square is ``+1`` when its root valley lies strictly between the peaks
    ``j < j_tilde`` (mod N) and ``-1`` otherwise.
    """

    table: ArrivalTable
    j: int
    j_tilde: int
    horizon: float

    def side(self, vertex) -> int | None:
        """Colour of a vertex's root, whether or not it has arrived; ``None`` on or below ``G0``."""
        r = self.table.root_at(vertex)
        if r is None:
            return None
        rr = r % self.table.interface.n_sites
        return 1 if self.j < rr < self.j_tilde else -1

    def color(self, square) -> int | None:
        """Colour of a square, or ``None`` when it is initially filled or not grown by the horizon."""
        top = as_cell(square) + Cell(1, 1)
        if self.table.locate(top)[1] >= 0 and self.table.arrival_at(top) > self.horizon:
            return None
        return self.side(top)

    def fill_time(self, square) -> float:
        return self.table.arrival_at(as_cell(square) + Cell(1, 1))


def competition_labels(env: Environment, g0: GrowthInterface, j: int, j_tilde: int, horizon: float) -> CompetitionState:
    if not 1 <= j < j_tilde <= g0.n_sites:
        raise ValueError("peaks must satisfy 1 <= j < j_tilde <= N")
    check_peak(g0, j)
    check_peak(g0, j_tilde)
    table = arrival_table(env, g0, horizon=horizon)
    # two extra levels so the corner above any arrived vertex has a root
    table = _build_table(env, g0, table.depth + 2)
    return CompetitionState(table, j, j_tilde, float(horizon))


@dataclass
class InterfaceWalk:
    cells: list[Cell] = field(default_factory=list)
    times: list[float] = field(default_factory=list)

    def moves(self) -> list[tuple[int, float]]:
        """``(+1, t)`` for an ``e1`` step and ``(-1, t)`` for an ``e2`` step."""
        out = []
        for a, b, t in zip(self.cells, self.cells[1:], self.times[1:]):
            out.append((1 if b.v1 > a.v1 else -1, t))
        return out

    def displacement(self) -> list[int]:
        """``(phi1_n - phi1_1) - (phi2_n - phi2_1)`` along the walk."""
        c0 = self.cells[0]
        return [(c.v1 - c0.v1) - (c.v2 - c0.v2) for c in self.cells]


def competition_interfaces(state: CompetitionState, steps: int | None = None) -> tuple[InterfaceWalk, InterfaceWalk]:
    """Walk both competition interfaces until the next corner arrives after the horizon.

    ``phi`` goes up when the vertex diagonally above its corner is ``+`` and
    right when it is ``-``; ``phi_tilde`` does the opposite.  That vertex
    inherits the root of the later of its two predecessors, so the walk always
    steps to the earlier one.  Each move is stamped with the arrival time of
    the new corner.
    """
    g0 = state.table.interface
    out = []
    for start, up_color in ((state.j, 1), (state.j_tilde, -1)):
        walk = InterfaceWalk([g0.vertex(start)], [0.0])
        while steps is None or len(walk.cells) <= steps:
            here = walk.cells[-1]
            c = state.side(here + Cell(1, 1))
            nxt = here + (Cell(0, 1) if c == up_color else Cell(1, 0))
            t = state.table.arrival_at(nxt)
            if t > state.horizon:
                break
            walk.cells.append(nxt)
            walk.times.append(t)
        out.append(walk)
    return out[0], out[1]


# -- coalescence criterion -----------------------------------------------------


@dataclass(frozen=True)
class CriterionResult:
    holds: bool
    bound: float
    roots: tuple[int, ...]


def coalescence_criterion(env: Environment, g0: GrowthInterface, v) -> CriterionResult:
    """Whether geodesics to every ``g^i + v``, ``0 <= i <= N``, share a root with ``g^0 + v`` or ``g^N + v``.

    ``bound`` is the time the shifted staircase ``G0 + v`` is fully grown.
    """
    v = as_cell(v)
    n = g0.n_sites
    targets = [g0.vertex(i) + v for i in range(n + 1)]
    table = arrival_table(env, g0, vertices=targets)
    roots = tuple(table.root_at(t) for t in targets)
    if any(r is None for r in roots):
        raise ValueError("shift v must move the staircase strictly into the unfilled region")
    ends = {roots[0], roots[-1]}
    holds = all(r in ends for r in roots)
    bound = max(table.arrival_at(t) for t in targets)
    return CriterionResult(holds, bound, roots)
