"""Exact finite-N analysis of the ring TASEP.

States are enumerated lexicographically, the generator is a sparse matrix and
transient laws come from uniformization.  Worst-case total variation is taken
over one representative per rotation class, which is exact because the
dynamics commute with rotations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import hypergeom, poisson

DEFAULT_CAP = 200_000
FULL_SWEEP_MAX_N = 14


class CapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class StateSpace:
    n_sites: int
    k: int
    states: np.ndarray  # (C(N,k), N) int8, lexicographic rows
    codes: np.ndarray  # bit code of each row; ascending because rows are lexicographic

    @property
    def size(self) -> int:
        return self.states.shape[0]

    def index(self, occupancy) -> int:
        code = _code(np.asarray(occupancy, dtype=np.int64)[None, :])[0]
        i = int(np.searchsorted(self.codes, code))
        if i >= self.size or self.codes[i] != code:
            raise KeyError(f"{tuple(occupancy)} is not in the state space")
        return i

    def state(self, i: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.states[i])


def _code(states: np.ndarray) -> np.ndarray:
    # most significant bit = site 0, so code order is lexicographic order
    n = states.shape[1]
    weights = np.left_shift(np.int64(1), np.arange(n - 1, -1, -1, dtype=np.int64))
    return states.astype(np.int64) @ weights


def enumerate_states(n: int, k: int, cap: int = DEFAULT_CAP) -> StateSpace:
    if not 1 <= k <= n - 1:
        raise ValueError(f"need 1 <= k <= N-1, got N={n}, k={k}")
    size = math.comb(n, k)
    if size > cap:
        raise CapExceeded(f"C({n},{k}) = {size} exceeds the cap {cap}")
    states = np.zeros((size, n), dtype=np.int8)
    for row, sites in enumerate(itertools.combinations(range(n), k)):
        states[row, list(sites)] = 1
    # combinations come out in reverse lexicographic order of the 0/1 rows
    states = states[::-1].copy()
    return StateSpace(n, k, states, _code(states))


def build(n: int, k: int, cap: int = DEFAULT_CAP) -> tuple[StateSpace, sp.csr_matrix]:
    """State space and generator; ``Q[a, b] = 1`` when a particle of ``a`` can jump to give ``b``."""
    space = enumerate_states(n, k, cap)
    s = space.states.astype(np.int64)
    rows, cols = [], []
    codes = space.codes
    for x in range(n):
        y = (x + 1) % n
        movable = np.nonzero((s[:, x] == 1) & (s[:, y] == 0))[0]
        bx = np.int64(1) << (n - 1 - x)
        by = np.int64(1) << (n - 1 - y)
        target = codes[movable] - bx + by
        rows.append(movable)
        cols.append(np.searchsorted(codes, target))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    m = space.size
    exit_rate = np.bincount(rows, minlength=m).astype(float)
    q = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(m, m)).tocsr()
    q = (q - sp.diags(exit_rate)).tocsr()
    return space, q


def exit_rates(q: sp.csr_matrix) -> np.ndarray:
    return -q.diagonal()


def _poisson_weights(mu: float, tol: float) -> np.ndarray:
    if mu == 0:
        return np.ones(1)
    n = int(poisson.ppf(1 - tol, mu)) + 1
    while poisson.sf(n, mu) >= tol:
        n += max(1, int(math.sqrt(mu)))
    return poisson.pmf(np.arange(n + 1), mu)


def transient(dist0: np.ndarray, q: sp.csr_matrix, t: float, tol: float = 1e-13) -> np.ndarray:
    """``dist0 exp(tQ)`` by uniformization.

    ``dist0`` is a probability row vector or a stack of them (one per row).
    The Poisson series is cut once the neglected mass is below ``tol``.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = np.asarray(dist0, dtype=float)
    lam = float(exit_rates(q).max())
    if t == 0 or lam == 0:
        return p.copy()
    step = (sp.identity(q.shape[0], format="csr") + q / lam).T.tocsr()
    w = _poisson_weights(lam * t, tol)
    cur = p.T.copy()
    out = w[0] * cur
    for wn in w[1:]:
        cur = step @ cur
        out += wn * cur
    return out.T


def tv_to_uniform(dist: np.ndarray) -> np.ndarray:
    dist = np.atleast_2d(dist)
    return 0.5 * np.abs(dist - 1.0 / dist.shape[1]).sum(axis=1)


def rotation_representatives(space: StateSpace) -> np.ndarray:
    """Smallest index in each rotation class."""
    seen = np.zeros(space.size, dtype=bool)
    reps = []
    for i in range(space.size):
        if seen[i]:
            continue
        reps.append(i)
        row = space.states[i]
        for r in range(space.n_sites):
            seen[space.index(np.roll(row, r))] = True
    return np.array(reps, dtype=np.int64)


def initial_candidates(space: StateSpace, rng_seed: int = 0) -> np.ndarray:
    """Starting states for the worst-case search.

    Every rotation class up to ``FULL_SWEEP_MAX_N`` sites; beyond that the
    fully clustered block plus 64 random states.
    """
    if space.n_sites <= FULL_SWEEP_MAX_N:
        return rotation_representatives(space)
    block = np.zeros(space.n_sites, dtype=np.int8)
    block[: space.k] = 1
    rng = np.random.default_rng(rng_seed)
    extra = rng.choice(space.size, size=min(64, space.size), replace=False)
    return np.unique(np.concatenate(([space.index(block)], extra)))


@dataclass
class TVCurve:
    times: np.ndarray
    values: np.ndarray
    worst_start: np.ndarray  # state index attaining the max at each time


class MixingProblem:
    """Worst-case distance to uniform for one (N, k), evolved incrementally."""

    def __init__(self, n: int, k: int, *, cap: int = DEFAULT_CAP, tol: float = 1e-13):
        self.space, self.q = build(n, k, cap)
        self.starts = initial_candidates(self.space)
        self.tol = tol

    def initial(self) -> np.ndarray:
        p = np.zeros((self.starts.size, self.space.size))
        p[np.arange(self.starts.size), self.starts] = 1.0
        return p

    def advance(self, p: np.ndarray, dt: float) -> np.ndarray:
        return transient(p, self.q, dt, self.tol)

    def distance(self, p: np.ndarray) -> tuple[float, int]:
        tv = tv_to_uniform(p)
        i = int(np.argmax(tv))
        return float(tv[i]), int(self.starts[i])

    def curve(self, times) -> TVCurve:
        times = np.asarray(times, dtype=float)
        order = np.argsort(times, kind="stable")
        vals = np.empty(times.size)
        worst = np.empty(times.size, dtype=np.int64)
        p, now = self.initial(), 0.0
        for i in order:
            p = self.advance(p, times[i] - now)
            now = times[i]
            vals[i], worst[i] = self.distance(p)
        return TVCurve(times, vals, worst)

    def mixing_time(self, eps: float, tol: float = 1e-7) -> float:
        """Bisection for the first time the worst-case distance drops below ``eps``.

        Evaluation is non-strict at resolution ``tol``: the returned time has
        distance below ``eps`` and a time at most ``tol`` earlier does not.
        """
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        p0 = self.initial()
        if self.distance(p0)[0] < eps:
            return 0.0
        lo, p_lo = 0.0, p0
        hi = 10.0 * self.space.n_sites**2
        while True:
            p_hi = self.advance(p_lo, hi - lo)
            if self.distance(p_hi)[0] < eps:
                break
            lo, p_lo, hi = hi, p_hi, 2 * hi
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            p_mid = self.advance(p_lo, mid - lo)
            if self.distance(p_mid)[0] < eps:
                hi = mid
            else:
                lo, p_lo = mid, p_mid
        return hi


def mixing_time(n: int, k: int, eps: float, tol: float = 1e-7, *, cap: int = DEFAULT_CAP) -> float:
    return MixingProblem(n, k, cap=cap).mixing_time(eps, tol)


def tv_curve(n: int, k: int, times, *, cap: int = DEFAULT_CAP) -> TVCurve:
    return MixingProblem(n, k, cap=cap).curve(times)


def window_count_law(n: int, k: int, window_len: int, *, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Exact law of the number of particles in sites ``0 .. window_len-1`` under the uniform measure."""
    if not 1 <= window_len <= n:
        raise ValueError("window length must lie in 1..N")
    space = enumerate_states(n, k, cap)
    counts = space.states[:, :window_len].sum(axis=1)
    return np.bincount(counts, minlength=window_len + 1) / space.size


def hypergeometric_pmf(n: int, k: int, window_len: int) -> np.ndarray:
    return hypergeom.pmf(np.arange(window_len + 1), n, k, window_len)


@dataclass(frozen=True)
class CutoffRow:
    n_sites: int
    k: int
    t_small: float  # mixing time at eps
    t_large: float  # mixing time at 1 - eps
    ratio: float  # t_small / t_large, at least 1


def no_cutoff_profile(n_list, k_rule, eps: float = 0.1, tol: float = 1e-7) -> list[CutoffRow]:
    """Ratio of the ``eps`` and ``1 - eps`` mixing times for each N, ``k = k_rule(N)``.

    A sequence with cutoff has ratios tending to 1.  The ratio is infinite
    when the starting distance ``1 - 1/C(N,k)`` is already below ``1 - eps``.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    rows = []
    for n in n_list:
        k = int(k_rule(n))
        prob = MixingProblem(n, k)
        a = prob.mixing_time(eps, tol)
        b = prob.mixing_time(1 - eps, tol)
        rows.append(CutoffRow(n, k, a, b, a / b if b > 0 else math.inf))
    return rows
