"""TASEP on the discrete circle Z_N driven by per-site Poisson clocks.

Sites are indexed ``0 .. N-1`` and particles hop clockwise, ``x -> x+1 mod N``.
Every site carries its own unit-rate clock.  Ring ``c`` of site ``x`` happens at
the sum of the first ``c+1`` inter-arrival times drawn from the key
``(seed, x, c)``, so any number of copies can share the clocks
(the canonical coupling) just by sharing a :class:`ClockSource`.

The two-species disagreement process uses labels 0 (hole), 1 (first class)
and 2 (second class).  When the clock at ``x`` rings, labels at ``x`` and
``x+1`` swap if the one at ``x`` has higher priority (1 > 2 > 0); two adjacent
second class particles annihilate into ``(0, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .rng import TAG_CLOCK, as_seed, exp1

# label priority: hole < second class < first class
_PRIORITY = np.array([0, 2, 1], dtype=np.int8)


@dataclass(frozen=True)
class RingConfig:
    """Occupancy of Z_N with ``1 <= k <= N-1`` particles."""

    occupancy: tuple[int, ...]

    def __post_init__(self):
        occ = tuple(int(v) for v in self.occupancy)
        object.__setattr__(self, "occupancy", occ)
        if len(occ) < 2:
            raise ValueError("a ring needs at least two sites")
        if any(v not in (0, 1) for v in occ):
            raise ValueError("occupancy entries must be 0 or 1")
        k = sum(occ)
        if not 1 <= k <= len(occ) - 1:
            raise ValueError(f"particle count k={k} must satisfy 1 <= k <= N-1 (N={len(occ)})")

    @property
    def n_sites(self) -> int:
        return len(self.occupancy)

    @property
    def k(self) -> int:
        return sum(self.occupancy)

    def as_array(self) -> np.ndarray:
        return np.array(self.occupancy, dtype=np.int8)

    def rotated(self, r: int) -> "RingConfig":
        """Configuration shifted so that site ``x`` moves to ``x + r``."""
        n = self.n_sites
        return RingConfig(tuple(self.occupancy[(x - r) % n] for x in range(n)))

    @classmethod
    def from_string(cls, s: str) -> "RingConfig":
        return cls(tuple(int(ch) for ch in s.strip()))

    def __str__(self) -> str:
        return "".join(map(str, self.occupancy))


@dataclass(frozen=True)
class DisagreementConfig:
    """Labels over {0, 1, 2}; the number of 2s is 0 or 2."""

    labels: tuple[int, ...]

    def __post_init__(self):
        lab = tuple(int(v) for v in self.labels)
        object.__setattr__(self, "labels", lab)
        if any(v not in (0, 1, 2) for v in lab):
            raise ValueError("labels must be 0, 1 or 2")
        if lab.count(2) not in (0, 2):
            raise ValueError("a disagreement configuration holds zero or two second class particles")

    @property
    def n_sites(self) -> int:
        return len(self.labels)

    def second_class_sites(self) -> tuple[int, ...]:
        return tuple(x for x, v in enumerate(self.labels) if v == 2)

    def as_array(self) -> np.ndarray:
        return np.array(self.labels, dtype=np.int8)


@dataclass(frozen=True)
class ClockSource:
    """Immutable per-site unit-rate Poisson clocks.

    ``offset`` relabels the streams: on a ring of ``n`` sites, site ``x``
    reads the stream of ``(x + offset) mod n``, which is how rotated copies
    of a run are built.
    """

    seed: int
    offset: int = 0

    @property
    def key(self) -> np.uint64:
        return as_seed(self.seed)

    def stream(self, site: int, n_sites: int) -> int:
        return (site + self.offset) % n_sites

    def interarrival(self, site: int, counter: int, n_sites: int) -> float:
        return float(_interarrival(self.key, self.stream(site, n_sites), counter))

    def ring_times(self, site: int, n_sites: int, horizon: float) -> np.ndarray:
        return _site_ring_times(self.key, self.stream(site, n_sites), float(horizon))

    def rotated(self, r: int) -> "ClockSource":
        """Clocks for a ring rotated by ``r``: new site ``x`` reads old ``x - r``."""
        return ClockSource(self.seed, self.offset - r)


@dataclass(frozen=True)
class Censored:
    """Marker for a run that hit its time cap before the event happened."""

    cap: float


@dataclass
class Trajectory:
    """Every ring on ``[0, horizon]`` with a flag telling if it moved a particle."""

    initial: RingConfig
    times: np.ndarray
    sites: np.ndarray
    applied: np.ndarray
    horizon: float = field(default=np.inf)

    def __len__(self) -> int:
        return len(self.times)

    def replay(self):
        """Yield ``(time, occupancy array)`` after each ring, starting at time 0."""
        occ = self.initial.as_array()
        n = len(occ)
        yield 0.0, occ.copy()
        for t, x, a in zip(self.times, self.sites, self.applied):
            if a:
                occ[x], occ[(x + 1) % n] = 0, 1
            yield float(t), occ.copy()

    def state_at(self, t: float) -> np.ndarray:
        occ = self.initial.as_array()
        n = len(occ)
        stop = np.searchsorted(self.times, t, side="right")
        for x in self.sites[:stop][self.applied[:stop]]:
            occ[x], occ[(x + 1) % n] = 0, 1
        return occ

    @property
    def final(self) -> RingConfig:
        return RingConfig(tuple(self.state_at(np.inf)))

    def applied_count(self) -> int:
        return int(self.applied.sum())


# -- kernels ---------------------------------------------------------------


@njit(cache=True)
def _interarrival(seed, site, counter):
    return exp1(seed, TAG_CLOCK, site, counter)


@njit(cache=True)
def _site_ring_times(seed, site, horizon):
    buf = np.empty(16, dtype=np.float64)
    n = 0
    t = 0.0
    c = 0
    while True:
        t = t + exp1(seed, TAG_CLOCK, site, c)
        c += 1
        if t > horizon:
            break
        if n == buf.shape[0]:
            nb = np.empty(2 * n, dtype=np.float64)
            nb[:n] = buf
            buf = nb
        buf[n] = t
        n += 1
    return buf[:n]


@njit(cache=True)
def _ring_sequence(seed, offset, n_sites, horizon):
    chunks = []
    total = 0
    for x in range(n_sites):
        ts = _site_ring_times(seed, (x + offset) % n_sites, horizon)
        chunks.append(ts)
        total += ts.shape[0]
    times = np.empty(total, dtype=np.float64)
    sites = np.empty(total, dtype=np.int64)
    p = 0
    for x in range(n_sites):
        ts = chunks[x]
        for i in range(ts.shape[0]):
            times[p] = ts[i]
            sites[p] = x
            p += 1
    return times, sites


def ring_sequence(clocks: ClockSource, n_sites: int, horizon: float):
    """All rings on ``[0, horizon]`` sorted by time, ties broken by site."""
    times, sites = _ring_sequence(clocks.key, clocks.offset, n_sites, float(horizon))
    order = np.lexsort((sites, times))
    return times[order], sites[order]


@njit(cache=True)
def _apply_rings(occ, sites):
    n = occ.shape[0]
    applied = np.zeros(sites.shape[0], dtype=np.bool_)
    for i in range(sites.shape[0]):
        x = sites[i]
        y = x + 1
        if y == n:
            y = 0
        if occ[x] == 1 and occ[y] == 0:
            occ[x] = 0
            occ[y] = 1
            applied[i] = True
    return applied


@njit(cache=True)
def _apply_rings_labels(labels, times, sites, stop_at_tau):
    """Disagreement dynamics over a precomputed ring sequence (reference path)."""
    n = labels.shape[0]
    tau = np.inf
    for i in range(sites.shape[0]):
        x = sites[i]
        y = x + 1
        if y == n:
            y = 0
        a = labels[x]
        b = labels[y]
        if a == 2 and b == 2:
            labels[x] = 0
            labels[y] = 1
            if tau == np.inf:
                tau = times[i]
            if stop_at_tau:
                break
        elif _PRIORITY[a] > _PRIORITY[b]:
            labels[x] = b
            labels[y] = a
    return tau


# indexed binary min-heap on (key, site); pos[site] == -1 when absent


@njit(inline="always")
def _less(keys, a, b):
    ka = keys[a]
    kb = keys[b]
    return ka < kb or (ka == kb and a < b)


@njit(cache=True)
def _sift_up(heap, pos, keys, i):
    s = heap[i]
    while i > 0:
        p = (i - 1) >> 1
        if _less(keys, s, heap[p]):
            heap[i] = heap[p]
            pos[heap[i]] = i
            i = p
        else:
            break
    heap[i] = s
    pos[s] = i


@njit(cache=True)
def _sift_down(heap, pos, keys, i, size):
    s = heap[i]
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        if c + 1 < size and _less(keys, heap[c + 1], heap[c]):
            c += 1
        if _less(keys, heap[c], s):
            heap[i] = heap[c]
            pos[heap[i]] = i
            i = c
        else:
            break
    heap[i] = s
    pos[s] = i


@njit(inline="always")
def _enabled(labels, x, n):
    y = x + 1
    if y == n:
        y = 0
    a = labels[x]
    b = labels[y]
    return (a == 2 and b == 2) or _PRIORITY[a] > _PRIORITY[b]


@njit(cache=True)
def _run_lazy(labels, seed, offset, horizon, stop_at_tau, record):
    """Event-driven run that only schedules sites whose ring would act.

    A dormant site's clock is caught up when the site becomes active again,
    so the realized dynamics equal those of processing every ring.
    Returns (tau, n_applied, rec_t, rec_x, rec_a, rec_b) where the records hold
    applied events with the labels at x and x+1 just before the move.
    """
    n = labels.shape[0]
    nxt = np.empty(n, dtype=np.float64)
    cnt = np.empty(n, dtype=np.int64)
    for x in range(n):
        nxt[x] = exp1(seed, TAG_CLOCK, (x + offset) % n, 0)
        cnt[x] = 1
    heap = np.empty(n, dtype=np.int64)
    pos = np.full(n, -1, dtype=np.int64)
    size = 0
    for x in range(n):
        if _enabled(labels, x, n):
            heap[size] = x
            pos[x] = size
            size += 1
            _sift_up(heap, pos, nxt, size - 1)

    cap = 64 if record else 1
    rec_t = np.empty(cap, dtype=np.float64)
    rec_x = np.empty(cap, dtype=np.int64)
    rec_a = np.empty(cap, dtype=np.int8)
    rec_b = np.empty(cap, dtype=np.int8)
    n_applied = 0
    tau = np.inf

    while size > 0:
        x = heap[0]
        t = nxt[x]
        if t > horizon:
            break
        y = x + 1
        if y == n:
            y = 0
        a = labels[x]
        b = labels[y]
        if record:
            if n_applied == rec_t.shape[0]:
                m = 2 * n_applied
                nt = np.empty(m, dtype=np.float64)
                nx = np.empty(m, dtype=np.int64)
                na = np.empty(m, dtype=np.int8)
                nb = np.empty(m, dtype=np.int8)
                nt[:n_applied] = rec_t
                nx[:n_applied] = rec_x
                na[:n_applied] = rec_a
                nb[:n_applied] = rec_b
                rec_t, rec_x, rec_a, rec_b = nt, nx, na, nb
            rec_t[n_applied] = t
            rec_x[n_applied] = x
            rec_a[n_applied] = a
            rec_b[n_applied] = b
        n_applied += 1
        if a == 2 and b == 2:
            labels[x] = 0
            labels[y] = 1
            if tau == np.inf:
                tau = t
        else:
            labels[x] = b
            labels[y] = a
        # advance the clock that just rang
        nxt[x] = t + exp1(seed, TAG_CLOCK, (x + offset) % n, cnt[x])
        cnt[x] += 1
        _sift_down(heap, pos, nxt, pos[x], size)
        if tau < np.inf and stop_at_tau:
            break
        # refresh x-1, x, x+1
        for d in range(-1, 2):
            s = x + d
            if s < 0:
                s += n
            elif s >= n:
                s -= n
            on = _enabled(labels, s, n)
            p = pos[s]
            if on:
                if p == -1:
                    while nxt[s] < t or (nxt[s] == t and s < x):
                        nxt[s] = nxt[s] + exp1(seed, TAG_CLOCK, (s + offset) % n, cnt[s])
                        cnt[s] += 1
                    heap[size] = s
                    pos[s] = size
                    size += 1
                    _sift_up(heap, pos, nxt, size - 1)
                else:
                    _sift_up(heap, pos, nxt, p)
                    _sift_down(heap, pos, nxt, pos[s], size)
            elif p != -1:
                size -= 1
                last = heap[size]
                pos[s] = -1
                if p < size:
                    heap[p] = last
                    pos[last] = p
                    _sift_up(heap, pos, nxt, p)
                    _sift_down(heap, pos, nxt, pos[last], size)
    k = n_applied if record else 0
    return tau, n_applied, rec_t[:k], rec_x[:k], rec_a[:k], rec_b[:k]


# -- public operations -----------------------------------------------------


def simulate(initial: RingConfig, clocks: ClockSource, horizon: float) -> Trajectory:
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    times, sites = ring_sequence(clocks, initial.n_sites, horizon)
    applied = _apply_rings(initial.as_array(), sites)
    return Trajectory(initial, times, sites, applied, float(horizon))


def couple(initials: Sequence[RingConfig], clocks: ClockSource, horizon: float) -> list[Trajectory]:
    """Run several copies off one clock stream (the canonical coupling)."""
    if not initials:
        return []
    n = initials[0].n_sites
    if any(c.n_sites != n for c in initials):
        raise ValueError("all coupled copies must live on the same ring size")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    times, sites = ring_sequence(clocks, n, horizon)
    return [Trajectory(c, times, sites, _apply_rings(c.as_array(), sites), float(horizon)) for c in initials]


def disagreement(a: RingConfig, b: RingConfig) -> DisagreementConfig:
    if a.n_sites != b.n_sites:
        raise ValueError(f"ring sizes differ: {a.n_sites} != {b.n_sites}")
    if a.k != b.k:
        raise ValueError(f"particle counts differ: {a.k} != {b.k}")
    labels = tuple(
        2 if p != q else (1 if p == 1 else 0) for p, q in zip(a.occupancy, b.occupancy)
    )
    return DisagreementConfig(labels)


def hamming(a: RingConfig, b: RingConfig) -> int:
    return sum(p != q for p, q in zip(a.occupancy, b.occupancy))


def check_pair(a: RingConfig, b: RingConfig) -> None:
    """Raise unless ``(a, b)`` differ in exactly two sites with equal particle counts."""
    if a.n_sites != b.n_sites or a.k != b.k or hamming(a, b) != 2:
        raise ValueError("pair must share N and k and differ in exactly two sites")


@dataclass
class DisagreementRun:
    final: DisagreementConfig
    tau: float | Censored
    times: np.ndarray = field(repr=False)
    sites: np.ndarray = field(repr=False)
    before_x: np.ndarray = field(repr=False)
    before_y: np.ndarray = field(repr=False)


def evolve_disagreement(
    initial: DisagreementConfig,
    clocks: ClockSource,
    horizon: float,
    *,
    stop_at_tau: bool = False,
    record: bool = False,
) -> DisagreementRun:
    """Run the disagreement process; ``tau`` is the annihilation time or :class:`Censored`.

    With ``record=True`` the run keeps every applied move together with the two
    labels it acted on.
    """
    if initial.labels.count(2) != 2:
        raise ValueError("disagreement run needs exactly two second class particles")
    labels = initial.as_array()
    tau, _, rt, rx, ra, rb = _run_lazy(labels, clocks.key, clocks.offset, float(horizon), stop_at_tau, record)
    out_tau: float | Censored = float(tau) if np.isfinite(tau) else Censored(float(horizon))
    return DisagreementRun(DisagreementConfig(tuple(labels)), out_tau, rt, rx, ra, rb)


def evolve_disagreement_reference(initial: DisagreementConfig, clocks: ClockSource, horizon: float):
    """Same dynamics by brute force over every ring; returns ``(final, tau)``."""
    labels = initial.as_array()
    times, sites = ring_sequence(clocks, initial.n_sites, horizon)
    tau = _apply_rings_labels(labels, times, sites, False)
    return DisagreementConfig(tuple(labels)), (float(tau) if np.isfinite(tau) else Censored(float(horizon)))


def coalescence_time(pair: tuple[RingConfig, RingConfig], clocks: ClockSource, cap: float) -> float | Censored:
    a, b = pair
    check_pair(a, b)
    run = evolve_disagreement(disagreement(a, b), clocks, cap, stop_at_tau=True)
    return run.tau


def coalescence_time_raw(labels: np.ndarray, seed: int, cap: float) -> float:
    """Fast path for estimators: ``inf`` when censored."""
    tau, *_ = _run_lazy(labels.astype(np.int8), as_seed(seed), 0, float(cap), True, False)
    return float(tau)


def run_tasep_lazy(initial: RingConfig, clocks: ClockSource, horizon: float) -> tuple[RingConfig, int]:
    """Final state and number of jumps, without storing the ring sequence."""
    occ = initial.as_array()
    _, n_applied, *_ = _run_lazy(occ, clocks.key, clocks.offset, float(horizon), False, False)
    return RingConfig(tuple(occ)), int(n_applied)
