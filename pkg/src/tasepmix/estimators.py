"""Monte Carlo experiments on LPP shapes, fluctuations and coalescence times.

Every experiment is a pure function of its parameters and a seed: replica
``r`` of a scan point draws its randomness from ``derive_seed(seed, name,
point..., r)``, and replicas are reduced in index order whatever the thread
schedule.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.special import gammainc

from .growth_bridge import coalescence_criterion, coupled_pair_environment
from .periodic_lpp import Cell, Environment, geodesic_in_block, lpt, transversal_fluctuation_array
from .ring_tasep import Censored, ClockSource, RingConfig, coalescence_time_raw
from .rng import derive_seed


@dataclass(frozen=True)
class ExperimentPlan:
    """A named parameter scan; ``points()`` expands the grid in key order."""

    name: str
    grid: dict = field(default_factory=dict)
    replicas: int = 1
    seed: int = 0
    schema: str = ""

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")

    def points(self) -> list[dict]:
        keys = list(self.grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))]


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr: float
    r2: float
    x: tuple[float, ...]
    y: tuple[float, ...]


def loglog_fit(x, y) -> FitResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    res = stats.linregress(np.log(x), np.log(y))
    return FitResult(float(res.slope), float(res.intercept), float(res.stderr), float(res.rvalue**2), tuple(x), tuple(y))


def linear_fit(x, y) -> FitResult:
    res = stats.linregress(np.asarray(x, float), np.asarray(y, float))
    return FitResult(float(res.slope), float(res.intercept), float(res.stderr), float(res.rvalue**2), tuple(x), tuple(y))


def run_replicas(job: Callable[[int], object], replicas: int, threads: int = 1) -> list:
    """``[job(0), ..., job(replicas - 1)]``, possibly computed on a thread pool."""
    if threads <= 1:
        return [job(r) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, range(replicas)))


def _target(n: int, m) -> Cell:
    m = Fraction(m)
    if not 0 < m <= 1:
        raise ValueError("slope m must lie in (0, 1]")
    return Cell(n, math.floor(m * n))


def _check_size(n, m):
    if n * float(m) < 8:
        warnings.warn(f"n m = {n * float(m):g} is below 8; asymptotic shapes are unreliable", stacklevel=3)


# -- passage-time moments and tails ------------------------------------------------------


def lpp_samples(n: int, m, replicas: int, seed: int, threads: int = 1) -> np.ndarray:
    """``T_{0, (n, floor(m n))}`` in independent i.i.d. environments."""
    v = _target(n, m)
    return np.array(run_replicas(lambda r: lpt(Environment.iid(derive_seed(seed, "lpp", n, r)), Cell(0, 0), v), replicas, threads))


def shape_center(n: int, m) -> float:
    return (1 + math.sqrt(float(m))) ** 2 * n


@dataclass
class MomentsResult:
    n: tuple[int, ...]
    mean: tuple[float, ...]
    variance: tuple[float, ...]
    fit: FitResult


def lpp_moments(n_list: Sequence[int], m, replicas: int, seed: int, threads: int = 1) -> MomentsResult:
    means, variances = [], []
    for n in n_list:
        _check_size(n, m)
        t = lpp_samples(n, m, replicas, seed, threads)
        means.append(float(t.mean()))
        variances.append(float(t.var(ddof=1)) if replicas > 1 else 0.0)
    fit = loglog_fit(n_list, variances) if len(n_list) > 1 else None
    return MomentsResult(tuple(n_list), tuple(means), tuple(variances), fit)


@dataclass
class TailProfile:
    x: tuple[float, ...]
    upper: tuple[float, ...]
    lower: tuple[float, ...]
    upper_fit: FitResult | None  # log upper tail against x
    lower_fit: FitResult | None  # log lower tail against x^2


def tail_profile(n: int, m, replicas: int, x_grid: Sequence[float], seed: int, threads: int = 1, fit_range=(1.0, 3.0)) -> TailProfile:
    """Empirical tails of ``(T - (1 + sqrt m)^2 n) / (n^(1/3) m^(-1/6))``."""
    _check_size(n, m)
    t = lpp_samples(n, m, replicas, seed, threads)
    z = (t - shape_center(n, m)) / (n ** (1 / 3) * float(m) ** (-1 / 6))
    x = np.asarray(x_grid, dtype=float)
    upper = np.array([np.mean(z >= xi) for xi in x])
    lower = np.array([np.mean(z <= -xi) for xi in x])

    def fit(vals, transform):
        sel = (x >= fit_range[0]) & (x <= fit_range[1]) & (vals > 0)
        if sel.sum() < 3:
            return None
        return linear_fit(transform(x[sel]), np.log(vals[sel]))

    return TailProfile(tuple(x), tuple(upper), tuple(lower), fit(upper, lambda a: a), fit(lower, lambda a: a**2))


# -- transversal fluctuations ---------------------------------------------------------------


@dataclass
class TFResult:
    n: tuple[int, ...]
    median: tuple[float, ...]
    fit: FitResult | None


def tf_samples(n: int, m, replicas: int, seed: int, threads: int = 1) -> np.ndarray:
    v = _target(n, m)
    mf = float(Fraction(m))

    def job(r):
        env = Environment.iid(derive_seed(seed, "tf", n, r))
        xs, ys, _ = geodesic_in_block(env.block(0, 0, v.v1 + 1, v.v2 + 1))
        return transversal_fluctuation_array(xs, ys, mf)

    return np.array(run_replicas(job, replicas, threads))


def tf_scaling(n_list: Sequence[int], m, replicas: int, seed: int, threads: int = 1) -> TFResult:
    med = []
    for n in n_list:
        _check_size(n, m)
        med.append(float(np.median(tf_samples(n, m, replicas, seed, threads))))
    fit = loglog_fit(n_list, med) if len(n_list) > 1 else None
    return TFResult(tuple(n_list), tuple(med), fit)


# -- periodic against i.i.d. geodesics -------------------------------------------------------


def strip_mask(x0: int, y0: int, w: int, h: int, m, width: int) -> np.ndarray:
    """Cells with ``v2 - floor(m v1)`` in ``[-width/2, width/2)``."""
    m = Fraction(m)
    xs = np.arange(x0, x0 + w, dtype=np.int64)
    ys = np.arange(y0, y0 + h, dtype=np.int64)
    line = (m.numerator * xs) // m.denominator
    off = ys[None, :] - line[:, None]
    return (2 * off >= -width) & (2 * off < width)


def shared_strip_weights(n: int, m, n_sites: int, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Weight blocks over ``[0, n] x [0, floor(m n)]`` of a periodic environment and an
    i.i.d. one that copies it on the central strip of ``k`` lines of slope ``m``."""
    v = _target(n, m)
    per = Environment.periodic(n_sites, k, derive_seed(seed, "periodic"))
    iid = Environment.iid(derive_seed(seed, "iid"))
    a = per.block(0, 0, v.v1 + 1, v.v2 + 1)
    b = iid.block(0, 0, v.v1 + 1, v.v2 + 1)
    mask = strip_mask(0, 0, v.v1 + 1, v.v2 + 1, m, k)
    return a, np.where(mask, a, b)


def period_for_strip(k: int, m) -> int:
    """Ring size whose slope ``k^2/(N-k)^2`` equals ``m``."""
    return k + round(k / math.sqrt(float(m)))


@dataclass
class AgreementResult:
    n: int
    m: float
    n_sites: int
    k: int
    agree: int
    replicas: int

    @property
    def frequency(self) -> float:
        return self.agree / self.replicas


def periodic_vs_iid_agreement(n: int, m, n_sites: int, k: int, replicas: int, seed: int, threads: int = 1) -> AgreementResult:
    """How often the geodesic to ``(n, floor(m n))`` is the same path in both environments."""
    x = k / (float(m) ** (2 / 3) * n ** (2 / 3))
    if x < 1:
        warnings.warn(f"strip width k = {k} is below m^(2/3) n^(2/3) (x = {x:.2f})", stacklevel=2)

    def job(r):
        a, b = shared_strip_weights(n, m, n_sites, k, derive_seed(seed, "agreement", n, k, r))
        xa, ya, _ = geodesic_in_block(a)
        xb, yb, _ = geodesic_in_block(b)
        return bool(np.array_equal(xa, xb) and np.array_equal(ya, yb))

    agree = sum(run_replicas(job, replicas, threads))
    return AgreementResult(n, float(m), n_sites, k, agree, replicas)


# -- coalescence times ------------------------------------------------------------------------


class CensoringError(RuntimeError):
    pass


FAMILIES = ("antipodal", "adjacent", "random")


def family_pair(n: int, k: int, family: str, rng: np.random.Generator) -> np.ndarray:
    """Labels of a disagreement pair: one particle of a uniform configuration moved to a hole.

    ``antipodal`` picks the hole farthest around the ring from the particle,
    ``adjacent`` the hole next to it (a particle with no neighbouring hole is
    redrawn), ``random`` a uniform hole.
    """
    while True:
        occ = np.zeros(n, dtype=np.int8)
        occ[rng.choice(n, k, replace=False)] = 1
        parts = np.flatnonzero(occ == 1)
        holes = np.flatnonzero(occ == 0)
        x = int(rng.choice(parts))
        if family == "antipodal":
            dist = np.minimum((holes - x) % n, (x - holes) % n)
            y = int(holes[np.argmax(dist)])
        elif family == "adjacent":
            near = [h for h in ((x - 1) % n, (x + 1) % n) if occ[h] == 0]
            if not near:
                continue
            y = int(near[rng.integers(len(near))])
        elif family == "random":
            y = int(rng.choice(holes))
        else:
            raise ValueError(f"unknown pair family {family!r}")
        labels = occ.copy()
        labels[x] = 2
        labels[y] = 2
        return labels


def pair_from_labels(labels) -> tuple[RingConfig, RingConfig]:
    """The two configurations whose disagreement labels are ``labels`` (exactly two 2s)."""
    labels = np.asarray(labels)
    first, second = np.flatnonzero(labels == 2)
    a = (labels == 1).astype(int)
    b = a.copy()
    a[first] = 1
    b[second] = 1
    return RingConfig(tuple(int(v) for v in a)), RingConfig(tuple(int(v) for v in b))


def default_cap(n: int, k: int) -> float:
    return 20.0 * n * n / math.sqrt(min(k, n - k))


@dataclass
class CoalescenceRow:
    n_sites: int
    k: int
    runs: int
    censored: int
    median: float


@dataclass
class CoalescenceResult:
    rows: list[CoalescenceRow]
    fit: FitResult | None


def coalescence_samples(n: int, k: int, replicas: int, seed: int, cap: float, threads: int = 1, families=FAMILIES) -> np.ndarray:
    """Coalescence times, ``inf`` where the run hit ``cap``; replica ``r`` uses family ``r mod len(families)``."""

    def job(r):
        fam = families[r % len(families)]
        rng = np.random.default_rng(derive_seed(seed, "pair", n, k, r))
        labels = family_pair(n, k, fam, rng)
        return coalescence_time_raw(labels, derive_seed(seed, "clock", n, k, r), cap)

    return np.array(run_replicas(job, replicas, threads))


def coalescence_scaling(
    n_list: Sequence[int],
    k_of_n: Callable[[int], int],
    replicas: int,
    seed: int,
    cap_rule: Callable[[int, int], float] = default_cap,
    threads: int = 1,
) -> CoalescenceResult:
    """Median coalescence time per ring size and its log-log slope.

    Censored runs sit above every finished one, so the median is exact as long
    as fewer than 5% are censored; otherwise the experiment fails.
    """
    rows = []
    for n in n_list:
        k = int(k_of_n(n))
        if not 1 <= k <= n // 2:
            raise ValueError(f"k_of_n({n}) = {k} must lie in [1, N/2]")
        taus = coalescence_samples(n, k, replicas, seed, cap_rule(n, k), threads)
        cens = int(np.sum(np.isinf(taus)))
        if cens >= 0.05 * replicas:
            raise CensoringError(f"N={n}, k={k}: {cens} of {replicas} runs censored (limit 5%)")
        rows.append(CoalescenceRow(n, k, replicas, cens, float(np.median(taus))))
    fit = loglog_fit([r.n_sites for r in rows], [r.median for r in rows]) if len(rows) > 1 else None
    return CoalescenceResult(rows, fit)


# -- Gamma perturbation --------------------------------------------------------------------


def gamma_crossing(shape: int, scale: float) -> float:
    """Where the Gamma(M, 1) and Gamma(M, scale) densities cross."""
    return shape * math.log(scale) / (1 - 1 / scale)


def gamma_tv(shape: int, delta: float) -> float:
    """Total variation between Gamma(M, scale 1) and Gamma(M, scale 1/(1+delta)), by quadrature."""
    if not abs(delta) < 1:
        raise ValueError("need |delta| < 1")
    if delta == 0:
        return 0.0
    s = 1 / (1 + delta)
    f1 = stats.gamma(shape, scale=1.0)
    f2 = stats.gamma(shape, scale=s)
    xc = gamma_crossing(shape, s)
    sd = math.sqrt(shape) * max(1.0, s)
    lo = max(0.0, min(shape, shape * s) - 40 * sd)
    hi = max(shape, shape * s) + 40 * sd

    def diff(x):
        return abs(f1.pdf(x) - f2.pdf(x))

    total = 0.0
    for a, b in ((lo, xc), (xc, hi)):
        val, _ = integrate.quad(diff, a, b, epsabs=1e-11, epsrel=1e-11, limit=400, points=None)
        total += val
    return min(1.0, 0.5 * total)


def gamma_tv_closed_form(shape: int, delta: float) -> float:
    """The same distance from the regularized incomplete gamma at the crossing point."""
    if delta == 0:
        return 0.0
    s = 1 / (1 + delta)
    xc = gamma_crossing(shape, s)
    return float(abs(gammainc(shape, xc) - gammainc(shape, xc / s)))


# -- coalescence criterion frequency -----------------------------------------------------------


@dataclass
class CriterionRow:
    theta: float
    shift: int
    trials: int
    holds: int
    violations: int
    censored: int

    @property
    def frequency(self) -> float:
        return self.holds / self.trials


def criterion_shift(n: int, k: int, theta: float) -> Cell:
    return Cell(math.floor(n * n / (theta * math.sqrt(k))), 1)


def coalescence_event_frequency(n: int, k: int, theta_list: Sequence[float], replicas: int, seed: int, cap: float | None = None, threads: int = 1) -> list[CriterionRow]:
    """Frequency of the coalescence criterion and its soundness in coupled runs.

    For each trial a random disagreement pair is run on its clocks and an
    environment coupled to the run is built; the criterion is evaluated on that
    environment and, when it holds, the observed coalescence time is checked
    against the bound.  A censored run counts as a violation unless the bound
    itself exceeds the cap.
    """
    if n < 2 * k or k < 4:
        raise ValueError("need N >= 2k and k >= 4")
    cap = default_cap(n, k) if cap is None else cap
    rows = []
    for theta in theta_list:
        v = criterion_shift(n, k, theta)

        def job(r):
            rng = np.random.default_rng(derive_seed(seed, "criterion-pair", n, k, r))
            labels = family_pair(n, k, "random", rng)
            run = coupled_pair_environment(pair_from_labels(labels), ClockSource(derive_seed(seed, "criterion-clock", n, k, r)), cap, derive_seed(seed, "criterion-env", n, k, r))
            res = coalescence_criterion(run.env, run.interface, v)
            censored = isinstance(run.tau, Censored)
            bad = res.holds and ((censored and res.bound < cap) or (not censored and run.tau > res.bound))
            return res.holds, bad, censored

        out = run_replicas(job, replicas, threads)
        rows.append(CriterionRow(float(theta), v.v1, replicas, sum(o[0] for o in out), sum(o[1] for o in out), sum(o[2] for o in out)))
    return rows
