"""Exponential last passage percolation on Z^2.

Passage times exclude the weight of the end cell: ``T(u, u) = 0`` and
``T(u, v) = max_p T(u, p) + w(p)`` over the two predecessors ``p`` of ``v``.
With that convention passage times add along a geodesic.

Two environments are supported: i.i.d. weights, and weights that repeat
under the shift ``(N - k, -k)``.  Weights are never stored; every cell's
weight is recomputed from the seed and the cell's canonical representative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from numba import njit

from .rng import TAG_WEIGHT, as_seed, exp1


@dataclass(frozen=True, order=True)
class Cell:
    v1: int
    v2: int

    def __add__(self, other) -> "Cell":
        o = as_cell(other)
        return Cell(self.v1 + o.v1, self.v2 + o.v2)

    def __sub__(self, other) -> "Cell":
        o = as_cell(other)
        return Cell(self.v1 - o.v1, self.v2 - o.v2)

    def __iter__(self):
        yield self.v1
        yield self.v2

    def preceq(self, other) -> bool:
        o = as_cell(other)
        return self.v1 <= o.v1 and self.v2 <= o.v2

    @property
    def norm(self) -> int:
        return self.v1 + self.v2


E1 = Cell(1, 0)
E2 = Cell(0, 1)


def as_cell(v) -> Cell:
    if isinstance(v, Cell):
        return v
    a, b = v
    return Cell(int(a), int(b))


# -- environments ----------------------------------------------------------


@njit(inline="always")
def _canonical(periodic, n, k, x, y):
    if not periodic:
        return x, y
    q = y // k
    return x + q * (n - k), y - q * k


@njit(inline="always")
def _weight_at(seed, periodic, n, k, x, y):
    cx, cy = _canonical(periodic, n, k, x, y)
    return exp1(seed, TAG_WEIGHT, cx, cy)


@njit(cache=True)
def _block(seed, periodic, n, k, x0, y0, w, h):
    out = np.empty((w, h), dtype=np.float64)
    for i in range(w):
        for j in range(h):
            out[i, j] = _weight_at(seed, periodic, n, k, x0 + i, y0 + j)
    return out


@njit(cache=True)
def _weights_at(seed, periodic, n, k, xs, ys):
    out = np.empty(xs.shape[0], dtype=np.float64)
    for i in range(xs.shape[0]):
        out[i] = _weight_at(seed, periodic, n, k, xs[i], ys[i])
    return out


@njit(cache=True)
def _apply_overrides(block, x0, y0, periodic, n, k, keys1, keys2, vals):
    w, h = block.shape
    for r in range(keys1.shape[0]):
        c1 = keys1[r]
        c2 = keys2[r]
        if not periodic:
            if x0 <= c1 < x0 + w and y0 <= c2 < y0 + h:
                block[c1 - x0, c2 - y0] = vals[r]
            continue
        # translates c + i (n-k, -k) with y0 <= c2 - i k < y0 + h
        i_lo = -((y0 + h - 1 - c2) // k)
        i_hi = (c2 - y0) // k
        for i in range(i_lo, i_hi + 1):
            x = c1 + i * (n - k)
            y = c2 - i * k
            if x0 <= x < x0 + w and y0 <= y < y0 + h:
                block[x - x0, y - y0] = vals[r]


@dataclass(frozen=True)
class Environment:
    """Exponential(1) weights on Z^2, i.i.d. or ``(N, k)``-periodic.

    ``overrides`` maps canonical cells to fixed weights; it is used to build
    environments coupled to a particle run.
    """

    seed: int
    period: tuple[int, int] | None = None
    overrides: Mapping[tuple[int, int], float] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.period is not None:
            n, k = (int(p) for p in self.period)
            if not 1 <= k <= n - 1:
                raise ValueError(f"periodic environment needs 1 <= k <= N-1, got N={n}, k={k}")
            object.__setattr__(self, "period", (n, k))
        for val in self.overrides.values():
            if not val > 0:
                raise ValueError("override weights must be positive")

    @classmethod
    def iid(cls, seed: int) -> "Environment":
        return cls(seed)

    @classmethod
    def periodic(cls, n: int, k: int, seed: int) -> "Environment":
        return cls(seed, (n, k))

    @property
    def is_periodic(self) -> bool:
        return self.period is not None

    def _params(self):
        n, k = self.period if self.period is not None else (0, 1)
        return as_seed(self.seed), self.period is not None, n, k

    def canonical(self, v) -> Cell:
        v = as_cell(v)
        if self.period is None:
            return v
        n, k = self.period
        q = v.v2 // k
        return Cell(v.v1 + q * (n - k), v.v2 - q * k)

    def with_overrides(self, values: Mapping) -> "Environment":
        merged = dict(self.overrides)
        for cell, val in values.items():
            merged[tuple(self.canonical(cell))] = float(val)
        return Environment(self.seed, self.period, merged)

    def weight(self, v) -> float:
        c = self.canonical(v)
        if self.overrides:
            hit = self.overrides.get((c.v1, c.v2))
            if hit is not None:
                return hit
        seed, periodic, n, k = self._params()
        return float(_weight_at(seed, periodic, n, k, c.v1, c.v2))

    def weights_at(self, xs, ys) -> np.ndarray:
        """Weights of the cells ``(xs[i], ys[i])``."""
        xs = np.ascontiguousarray(xs, dtype=np.int64)
        ys = np.ascontiguousarray(ys, dtype=np.int64)
        seed, periodic, n, k = self._params()
        out = _weights_at(seed, periodic, n, k, xs, ys)
        if self.overrides:
            if periodic:
                q = ys // k
                cx, cy = xs + q * (n - k), ys - q * k
            else:
                cx, cy = xs, ys
            for idx in range(len(out)):
                hit = self.overrides.get((int(cx[idx]), int(cy[idx])))
                if hit is not None:
                    out[idx] = hit
        return out

    def block(self, x0: int, y0: int, w: int, h: int) -> np.ndarray:
        """Weights of the cells ``(x0 + i, y0 + j)`` as an array indexed ``[i, j]``."""
        seed, periodic, n, k = self._params()
        out = _block(seed, periodic, n, k, int(x0), int(y0), int(w), int(h))
        if self.overrides:
            keys = np.array(list(self.overrides.keys()), dtype=np.int64).reshape(-1, 2)
            vals = np.array(list(self.overrides.values()), dtype=np.float64)
            _apply_overrides(out, int(x0), int(y0), periodic, n, k, keys[:, 0].copy(), keys[:, 1].copy(), vals)
        return out


# -- paths -----------------------------------------------------------------


@dataclass(frozen=True)
class LatticePath:
    cells: tuple[Cell, ...]

    def __post_init__(self):
        cells = tuple(as_cell(c) for c in self.cells)
        object.__setattr__(self, "cells", cells)
        if not cells:
            raise ValueError("a lattice path needs at least one cell")
        for a, b in zip(cells, cells[1:]):
            if b - a not in (E1, E2):
                raise ValueError(f"step {a} -> {b} is not up-right")

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def __contains__(self, v) -> bool:
        return as_cell(v) in self.cells

    @property
    def start(self) -> Cell:
        return self.cells[0]

    @property
    def end(self) -> Cell:
        return self.cells[-1]

    def weight_sum(self, env: Environment) -> float:
        """Sum of weights along the path in order, end cell excluded."""
        total = 0.0
        for c in self.cells[:-1]:
            total = total + env.weight(c)
        return total

    def as_array(self) -> np.ndarray:
        return np.array([(c.v1, c.v2) for c in self.cells], dtype=np.int64)


def _column_spans(path: LatticePath) -> dict[int, tuple[int, int]]:
    spans: dict[int, tuple[int, int]] = {}
    for c in path:
        lo, hi = spans.get(c.v1, (c.v2, c.v2))
        spans[c.v1] = (min(lo, c.v2), max(hi, c.v2))
    return spans


def geodesic_ordered(upper: LatticePath, lower: LatticePath) -> bool:
    """True when ``upper`` lies weakly above ``lower`` as a curve.

    On every shared column both the lowest and the highest cell of ``upper``
    are at least those of ``lower``; shared vertical runs are allowed.
    """
    hi = _column_spans(upper)
    lo = _column_spans(lower)
    return all(hi[x][0] >= lo[x][0] and hi[x][1] >= lo[x][1] for x in hi.keys() & lo.keys())


# -- dynamic programming kernels --------------------------------------------


@njit(cache=True)
def _dp(wts, allowed):
    """Passage times from cell [0, 0] to every cell of the block.

    ``-inf`` marks cells not reachable through allowed cells.
    """
    w, h = wts.shape
    f = np.full((w, h), -np.inf)
    if allowed[0, 0]:
        f[0, 0] = 0.0
    for i in range(w):
        for j in range(h):
            if (i == 0 and j == 0) or not allowed[i, j]:
                continue
            best = -np.inf
            if i > 0 and f[i - 1, j] > -np.inf:
                best = f[i - 1, j] + wts[i - 1, j]
            if j > 0 and f[i, j - 1] > -np.inf:
                c = f[i, j - 1] + wts[i, j - 1]
                if c > best:
                    best = c
            f[i, j] = best
    return f


@njit(cache=True)
def _dp_sources(wts, source):
    """Set-to-cell passage times with the index of the source each geodesic starts from."""
    w, h = wts.shape
    f = np.full((w, h), -np.inf)
    root = np.full((w, h), -1, dtype=np.int64)
    for i in range(w):
        for j in range(h):
            best = -np.inf
            r = -1
            if i > 0 and f[i - 1, j] > -np.inf:
                best = f[i - 1, j] + wts[i - 1, j]
                r = root[i - 1, j]
            if j > 0 and f[i, j - 1] > -np.inf:
                c = f[i, j - 1] + wts[i, j - 1]
                if c >= best:
                    best = c
                    r = root[i, j - 1]
            if source[i, j] >= 0 and best < 0.0:
                best = 0.0
                r = source[i, j]
            f[i, j] = best
            root[i, j] = r
    return f, root


@njit(cache=True)
def _lpt_value(seed, periodic, n, k, u1, u2, w, h):
    """Passage time to the far corner, keeping only one column in memory."""
    f = np.empty(h, dtype=np.float64)
    wc = np.empty(h, dtype=np.float64)
    for j in range(h):
        wc[j] = _weight_at(seed, periodic, n, k, u1, u2 + j)
    f[0] = 0.0
    for j in range(1, h):
        f[j] = f[j - 1] + wc[j - 1]
    for i in range(1, w):
        # f, wc hold column i-1; update in place to column i
        f[0] = f[0] + wc[0]
        wc[0] = _weight_at(seed, periodic, n, k, u1 + i, u2)
        for j in range(1, h):
            best = f[j] + wc[j]
            c = f[j - 1] + wc[j - 1]
            if c > best:
                best = c
            f[j] = best
            wc[j] = _weight_at(seed, periodic, n, k, u1 + i, u2 + j)
    return f[h - 1]


@njit(cache=True)
def _backtrack(f, wts, i, j):
    n_steps = i + j
    xs = np.empty(n_steps + 1, dtype=np.int64)
    ys = np.empty(n_steps + 1, dtype=np.int64)
    p = n_steps
    xs[p] = i
    ys[p] = j
    while i > 0 or j > 0:
        c1 = -np.inf
        c2 = -np.inf
        if i > 0 and f[i - 1, j] > -np.inf:
            c1 = f[i - 1, j] + wts[i - 1, j]
        if j > 0 and f[i, j - 1] > -np.inf:
            c2 = f[i, j - 1] + wts[i, j - 1]
        if c2 >= c1:
            j -= 1
        else:
            i -= 1
        p -= 1
        xs[p] = i
        ys[p] = j
    return xs, ys


# -- passage times ---------------------------------------------------------


def _check_order(u: Cell, v: Cell) -> None:
    if not u.preceq(v):
        raise ValueError(f"passage time needs u <= v coordinatewise, got u={tuple(u)}, v={tuple(v)}")


def lpt(env: Environment, u, v) -> float:
    u, v = as_cell(u), as_cell(v)
    _check_order(u, v)
    w, h = v.v1 - u.v1 + 1, v.v2 - u.v2 + 1
    if env.overrides:
        return float(_dp(env.block(u.v1, u.v2, w, h), np.ones((w, h), dtype=np.bool_))[-1, -1])
    seed, periodic, n, k = env._params()
    return float(_lpt_value(seed, periodic, n, k, u.v1, u.v2, w, h))


def passage_table(env: Environment, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Weights and passage times from ``u`` over the rectangle ``[u, v]``."""
    u, v = as_cell(u), as_cell(v)
    _check_order(u, v)
    wts = env.block(u.v1, u.v2, v.v1 - u.v1 + 1, v.v2 - u.v2 + 1)
    return wts, _dp(wts, np.ones(wts.shape, dtype=np.bool_))


def _path_from(xs, ys, origin: Cell) -> LatticePath:
    return LatticePath(tuple(Cell(int(x) + origin.v1, int(y) + origin.v2) for x, y in zip(xs, ys)))


def geodesic(env: Environment, u, v) -> LatticePath:
    """Maximizing path from ``u`` to ``v``; exact ties go to the e2 predecessor."""
    u, v = as_cell(u), as_cell(v)
    wts, f = passage_table(env, u, v)
    xs, ys = _backtrack(f, wts, v.v1 - u.v1, v.v2 - u.v2)
    return _path_from(xs, ys, u)


def geodesic_with_value(env: Environment, u, v) -> tuple[LatticePath, float]:
    u, v = as_cell(u), as_cell(v)
    wts, f = passage_table(env, u, v)
    xs, ys = _backtrack(f, wts, v.v1 - u.v1, v.v2 - u.v2)
    return _path_from(xs, ys, u), float(f[-1, -1])


def geodesic_in_block(wts: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Geodesic across a weight block from ``[0, 0]`` to the far corner, as offsets and value."""
    f = _dp(wts, np.ones(wts.shape, dtype=np.bool_))
    xs, ys = _backtrack(f, wts, wts.shape[0] - 1, wts.shape[1] - 1)
    return xs, ys, float(f[-1, -1])


@dataclass(frozen=True)
class SetPassage:
    value: float
    source: Cell
    target: Cell


def lpt_sets(env: Environment, sources: Iterable, targets: Iterable) -> SetPassage:
    """Largest passage time over comparable pairs (source <= target)."""
    a = sorted({as_cell(c) for c in sources})
    b = sorted({as_cell(c) for c in targets})
    if not a or not b:
        raise ValueError("both sets must be nonempty")
    x0 = min(c.v1 for c in a)
    y0 = min(c.v2 for c in a)
    x1 = max(c.v1 for c in b)
    y1 = max(c.v2 for c in b)
    if x1 < x0 or y1 < y0:
        raise ValueError("no comparable pair between the two sets")
    wts = env.block(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
    src = np.full(wts.shape, -1, dtype=np.int64)
    for idx, c in enumerate(a):
        if c.v1 <= x1 and c.v2 <= y1:
            src[c.v1 - x0, c.v2 - y0] = idx
    f, root = _dp_sources(wts, src)
    best: SetPassage | None = None
    for c in b:
        if c.v1 < x0 or c.v2 < y0:
            continue
        val = f[c.v1 - x0, c.v2 - y0]
        if val > -np.inf and (best is None or val > best.value):
            best = SetPassage(float(val), a[root[c.v1 - x0, c.v2 - y0]], c)
    if best is None:
        raise ValueError("no comparable pair between the two sets")
    return best


# -- lines, segments, parallelograms ----------------------------------------


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def line_height(m, shift, v1: int) -> int:
    """The row of the discrete line of slope ``m`` and shift ``shift`` in column ``v1``."""
    return math.floor(_frac(m) * v1 + _frac(shift))


@dataclass(frozen=True)
class Line:
    """Cells ``(x, floor(m x + shift))`` for integer ``x``; ``m`` and ``shift`` are exact rationals."""

    m: Fraction
    shift: Fraction

    def __post_init__(self):
        object.__setattr__(self, "m", _frac(self.m))
        object.__setattr__(self, "shift", _frac(self.shift))

    def __contains__(self, v) -> bool:
        v = as_cell(v)
        return v.v2 == line_height(self.m, self.shift, v.v1)

    def cell_at(self, v1: int) -> Cell:
        return Cell(v1, line_height(self.m, self.shift, v1))


@dataclass(frozen=True)
class Segment:
    """Cells ``(floor(u1 + x d1), floor(u2 + x d2))`` for ``x`` in ``[0, 1]``, ``d = v - u``."""

    u: Cell
    v: Cell

    def __post_init__(self):
        object.__setattr__(self, "u", as_cell(self.u))
        object.__setattr__(self, "v", as_cell(self.v))

    def cells(self) -> list[Cell]:
        d1, d2 = self.v.v1 - self.u.v1, self.v.v2 - self.u.v2
        cuts = {Fraction(0), Fraction(1)}
        for d in (d1, d2):
            for j in range(1, abs(d)):
                cuts.add(Fraction(j, abs(d)))
        cuts = sorted(cuts)
        probes = list(cuts) + [(a + b) / 2 for a, b in zip(cuts, cuts[1:])]
        out = {Cell(self.u.v1 + math.floor(x * d1), self.u.v2 + math.floor(x * d2)) for x in probes}
        return sorted(out)

    def __contains__(self, v) -> bool:
        return as_cell(v) in set(self.cells())


@dataclass(frozen=True)
class Parallelogram:
    """Cells with ``0 <= v1 <= n`` and ``|v2 - m v1| <= width / 2``."""

    n: int
    m: Fraction
    width: Fraction

    def __post_init__(self):
        object.__setattr__(self, "m", _frac(self.m))
        object.__setattr__(self, "width", _frac(self.width))

    def __contains__(self, v) -> bool:
        v = as_cell(v)
        if not 0 <= v.v1 <= self.n:
            return False
        mid = self.m * v.v1
        return mid - self.width / 2 <= v.v2 <= mid + self.width / 2

    def cells(self) -> list[Cell]:
        out = []
        for x in range(self.n + 1):
            mid = self.m * x
            lo = math.ceil(mid - self.width / 2)
            hi = math.floor(mid + self.width / 2)
            out.extend(Cell(x, y) for y in range(lo, hi + 1))
        return out


@dataclass(frozen=True)
class Corridor:
    """Open strip strictly between the lines of shift ``-half_width`` and ``+half_width``."""

    m: Fraction
    half_width: Fraction

    def __post_init__(self):
        object.__setattr__(self, "m", _frac(self.m))
        object.__setattr__(self, "half_width", _frac(self.half_width))

    def boundary(self) -> tuple[Line, Line]:
        return Line(self.m, -self.half_width), Line(self.m, self.half_width)

    def __contains__(self, v) -> bool:
        v = as_cell(v)
        lo = line_height(self.m, -self.half_width, v.v1)
        hi = line_height(self.m, self.half_width, v.v1)
        return lo < v.v2 < hi


def in_slope_band(u, v, m) -> bool:
    """Whether the pair ``(u, v)`` has slope strictly between ``m/10`` and ``10 m``."""
    u, v = as_cell(u), as_cell(v)
    if v.v1 == u.v1:
        return False
    slope = Fraction(v.v2 - u.v2, v.v1 - u.v1)
    m = _frac(m)
    return m / 10 < slope < 10 * m


def _off_lines_mask(x0, y0, w, h, lines: Sequence[Line]) -> np.ndarray:
    mask = np.ones((w, h), dtype=np.bool_)
    for line in lines:
        for i in range(w):
            j = line_height(line.m, line.shift, x0 + i) - y0
            if 0 <= j < h:
                mask[i, j] = False
    return mask


def restricted_table(env: Environment, u, v, m, half_width):
    u, v = as_cell(u), as_cell(v)
    _check_order(u, v)
    w, h = v.v1 - u.v1 + 1, v.v2 - u.v2 + 1
    wts = env.block(u.v1, u.v2, w, h)
    lines = Corridor(m, half_width).boundary()
    return wts, _dp(wts, _off_lines_mask(u.v1, u.v2, w, h, lines))


def restricted_lpt(env: Environment, u, v, m, half_width) -> float | None:
    """Passage time over paths with no cell on either boundary line; ``None`` if there is none."""
    _, f = restricted_table(env, u, v, m, half_width)
    val = f[-1, -1]
    return None if val == -np.inf else float(val)


def restricted_geodesic(env: Environment, u, v, m, half_width) -> LatticePath | None:
    u, v = as_cell(u), as_cell(v)
    wts, f = restricted_table(env, u, v, m, half_width)
    if f[-1, -1] == -np.inf:
        return None
    xs, ys = _backtrack(f, wts, v.v1 - u.v1, v.v2 - u.v2)
    return _path_from(xs, ys, u)


def transversal_fluctuation(path: LatticePath, m) -> float:
    """Largest ``|j - m i|`` over cells ``start + (i, j)`` of the path."""
    m = _frac(m)
    s = path.start
    return float(max(abs((c.v2 - s.v2) - m * (c.v1 - s.v1)) for c in path))


@njit(cache=True)
def transversal_fluctuation_array(xs, ys, m):
    best = 0.0
    for p in range(xs.shape[0]):
        d = abs((ys[p] - ys[0]) - m * (xs[p] - xs[0]))
        if d > best:
            best = d
    return best


# -- periodic translates ----------------------------------------------------


def translates(v, n: int, k: int, indices: Iterable[int]) -> list[Cell]:
    v = as_cell(v)
    return [Cell(v.v1 + i * (n - k), v.v2 - i * k) for i in indices]


def admissible_translate_range(u, v, n: int, k: int) -> range:
    """Indices ``i`` with ``v + i (N-k, -k) >= u`` coordinatewise."""
    u, v = as_cell(u), as_cell(v)
    lo = -((v.v1 - u.v1) // (n - k))
    hi = (v.v2 - u.v2) // k
    return range(lo, hi + 1)


@dataclass(frozen=True)
class PeriodicBestPath:
    path: LatticePath
    value: float
    index: int
    values: dict[int, float]


def periodic_best_path(env: Environment, u, v, search_range: range | None = None) -> PeriodicBestPath:
    """Geodesic from ``u`` to the best periodic translate of ``v``.

    Passing ``search_range`` is only a safety check: it must contain every
    admissible translate index or the call fails.
    """
    if env.period is None:
        raise ValueError("periodic_best_path needs a periodic environment")
    n, k = env.period
    u, v = as_cell(u), as_cell(v)
    adm = admissible_translate_range(u, v, n, k)
    if len(adm) == 0:
        raise ValueError("no translate of v lies above u")
    if search_range is not None and not (search_range.start <= adm.start and adm.stop <= search_range.stop):
        raise ValueError(
            f"search range {search_range} truncates the admissible translate indices {adm}"
        )
    far = Cell(v.v1 + adm[-1] * (n - k), v.v2 - adm[0] * k)
    wts, f = passage_table(env, u, far)
    values = {}
    for i in adm:
        w = translates(v, n, k, [i])[0]
        values[i] = float(f[w.v1 - u.v1, w.v2 - u.v2])
    best = max(adm, key=lambda i: (values[i], -i))
    w = translates(v, n, k, [best])[0]
    xs, ys = _backtrack(f, wts, w.v1 - u.v1, w.v2 - u.v2)
    return PeriodicBestPath(_path_from(xs, ys, u), values[best], best, values)
