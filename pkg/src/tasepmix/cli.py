"""Command-line driver: ``tasepmix <subcommand> [--config FILE] [-p KEY=VALUE ...]``.

A run is described by a flat JSON object holding the subcommand, the common
keys (seed, out, replicas, threads, tolerance, plot) and the subcommand's own
parameters.  Flags override file values.  Every run writes one or more CSV
files, a ``manifest.json`` and, with ``plot``, an SVG per CSV.

Exit codes: 0 ok, 2 configuration error, 3 runtime failure, 4 a self-test
check failed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__

OUTPUT_ROOT_ENV = "TASEPMIX_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 2, 3, 4

REQUIRED = object()


class ConfigError(ValueError):
    pass


# -- schemas ---------------------------------------------------------------------------------

COMMON = {
    "subcommand": (str, REQUIRED),
    "seed": (int, 0),
    "out": (str, ""),
    "replicas": (int, None),
    "threads": (int, 1),
    "tolerance": (dict, {}),
    "plot": (bool, False),
}

# parameter -> (type, default); list types are written as (list, element type)
PARAMS: dict[str, dict[str, tuple]] = {
    "simulate": {"N": (int, REQUIRED), "k": (int, REQUIRED), "horizon": (float, 10.0), "samples": (int, 11), "initial": (str, "")},
    "mix-exact": {"N": (int, REQUIRED), "k": (int, REQUIRED), "epsilon": ((list, float), [0.25]), "tol": (float, 1e-7)},
    "coalesce": {"N_list": ((list, int), REQUIRED), "k_rule": (str, "half"), "k": (int, 2), "cap_factor": (float, 20.0)},
    "lpp-stats": {"n_list": ((list, int), REQUIRED), "m": (float, 1.0), "x_grid": ((list, float), [])},
    "tf-scaling": {"n_list": ((list, int), REQUIRED), "m": (float, 1.0)},
    "agreement": {"n": (int, REQUIRED), "m": (float, 1.0), "k_list": ((list, int), REQUIRED)},
    "gamma-tv": {"M_list": ((list, int), REQUIRED), "delta_list": ((list, float), REQUIRED)},
    "geodesic-coalesce": {"N": (int, REQUIRED), "k": (int, REQUIRED), "theta_list": ((list, float), REQUIRED), "cap": (float, 0.0)},
    "bridge-check": {"N": (int, 6), "k": (int, 3), "horizon": (float, 20.0), "samples": (int, 100), "law_N": (int, 8), "law_k": (int, 4), "law_time": (float, 5.0), "law_replicas": (int, 10_000), "pair_N": (int, 10), "pair_k": (int, 4)},
}

DEFAULT_REPLICAS = {
    "simulate": 1, "mix-exact": 1, "coalesce": 200, "lpp-stats": 500, "tf-scaling": 300,
    "agreement": 200, "gamma-tv": 1, "geodesic-coalesce": 100, "bridge-check": 100,
}

# self-test thresholds, overridable through ``tolerance``
TOLERANCES: dict[str, dict[str, float]] = {
    "simulate": {},
    "mix-exact": {"symmetry": 1e-6},
    "coalesce": {"slope_min": 1.3, "slope_max": 1.7},
    "lpp-stats": {"mean_scale": 3.0, "slope_min": 0.55, "slope_max": 0.79},
    "tf-scaling": {"slope_min": 0.55, "slope_max": 0.80},
    "agreement": {"min_frequency": 0.9},
    "gamma-tv": {"constant": 3.0},
    "geodesic-coalesce": {"max_violations": 0},
    "bridge-check": {"z_max": 3.0, "max_mismatches": 0},
}


def _coerce(key: str, spec, value):
    if isinstance(spec, tuple):
        _, elem = spec
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {type(value).__name__}")
        return [_coerce(f"{key}[{i}]", elem, v) for i, v in enumerate(value)]
    if spec is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {type(value).__name__}")
        return float(value)
    if spec is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {type(value).__name__}")
        return value
    if spec is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true or false, got {type(value).__name__}")
        return value
    if not isinstance(value, spec):
        raise ConfigError(f"{key}: expected {spec.__name__}, got {type(value).__name__}")
    return value


@dataclass
class RunConfig:
    subcommand: str
    params: dict[str, Any]
    seed: int = 0
    out: str = ""
    replicas: int = 1
    threads: int = 1
    tolerance: dict[str, float] = field(default_factory=dict)
    plot: bool = False

    def to_dict(self) -> dict:
        d = {"subcommand": self.subcommand, "seed": self.seed, "out": self.out, "replicas": self.replicas,
             "threads": self.threads, "tolerance": dict(self.tolerance), "plot": self.plot}
        d.update(self.params)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        sub = raw.get("subcommand", None)
        if sub is None:
            raise ConfigError("subcommand: missing required field")
        if sub not in PARAMS:
            raise ConfigError(f"subcommand: unknown subcommand {sub!r} (choose from {', '.join(PARAMS)})")
        schema = {**COMMON, **PARAMS[sub]}
        for key in raw:
            if key not in schema:
                raise ConfigError(f"{key}: unknown key for subcommand {sub!r}")
        values = {}
        for key, (typ, default) in schema.items():
            if key in raw and not (key == "replicas" and raw[key] is None):
                values[key] = _coerce(key, typ, raw[key])
            elif default is REQUIRED:
                raise ConfigError(f"{key}: missing required field")
            else:
                values[key] = default
        tol = dict(TOLERANCES[sub])
        for key, val in values["tolerance"].items():
            if key not in tol:
                raise ConfigError(f"tolerance.{key}: unknown tolerance for subcommand {sub!r}")
            tol[key] = _coerce(f"tolerance.{key}", float, val)
        if values["replicas"] is None:
            values["replicas"] = DEFAULT_REPLICAS[sub]
        if values["replicas"] < 1:
            raise ConfigError("replicas: must be at least 1")
        if values["threads"] < 1:
            raise ConfigError("threads: must be at least 1")
        params = {k: values[k] for k in PARAMS[sub]}
        _validate(sub, params)
        return cls(sub, params, values["seed"], values["out"], values["replicas"], values["threads"], tol, values["plot"])


def _validate(sub: str, p: dict) -> None:
    def ring(nk, kk):
        if not 1 <= p[kk] <= p[nk] - 1:
            raise ConfigError(f"{kk}: must satisfy 1 <= {kk} <= {nk} - 1 (got {nk}={p[nk]}, {kk}={p[kk]})")

    if sub in ("simulate", "mix-exact", "geodesic-coalesce", "bridge-check"):
        ring("N", "k")
    if sub == "bridge-check":
        ring("law_N", "law_k")
        ring("pair_N", "pair_k")
    if sub == "simulate" and p["initial"]:
        if len(p["initial"]) != p["N"] or set(p["initial"]) - {"0", "1"} or p["initial"].count("1") != p["k"]:
            raise ConfigError("initial: must be a 0/1 string of length N with k ones")
    if sub == "mix-exact" and any(not 0 < e < 1 for e in p["epsilon"]):
        raise ConfigError("epsilon: every value must lie in (0, 1)")
    if sub == "coalesce" and p["k_rule"] not in ("half", "fixed"):
        raise ConfigError("k_rule: must be 'half' or 'fixed'")
    if sub in ("lpp-stats", "tf-scaling", "agreement") and not 0 < p["m"] <= 1:
        raise ConfigError("m: must lie in (0, 1]")
    if sub == "gamma-tv" and any(abs(d) >= 1 for d in p["delta_list"]):
        raise ConfigError("delta_list: every value must satisfy |delta| < 1")
    if sub == "geodesic-coalesce" and (p["N"] < 2 * p["k"] or p["k"] < 4):
        raise ConfigError("k: geodesic-coalesce needs N >= 2k and k >= 4")
    for key, val in p.items():
        if isinstance(val, list) and not val and PARAMS[sub][key][1] is REQUIRED:
            raise ConfigError(f"{key}: must not be empty")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tasepmix", description="Ring TASEP and periodic LPP experiments.")
    ap.add_argument("subcommand", nargs="?", choices=sorted(PARAMS), help="experiment to run (or set it in the config)")
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("-p", "--param", action="append", default=[], metavar="KEY=VALUE", help="set a parameter (VALUE is JSON)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--replicas", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--tolerance", action="append", default=[], metavar="KEY=VALUE", help="override a self-test threshold")
    ap.add_argument("--plot", action="store_true", help="also write SVG plots")
    ap.add_argument("--self-test", action="store_true", help="exit with status 4 if a check fails")
    return ap


def parse_config(argv: list[str] | None = None) -> tuple[RunConfig, argparse.Namespace]:
    args = build_parser().parse_args(argv)
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config: file {args.config} not found") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: {args.config} is not valid JSON ({e})") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if args.subcommand:
        if raw.get("subcommand", args.subcommand) != args.subcommand:
            raise ConfigError(f"subcommand: flag {args.subcommand!r} disagrees with config {raw['subcommand']!r}")
        raw["subcommand"] = args.subcommand
    for item in args.param:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"{item}: parameters are given as KEY=VALUE")
        raw[key] = _parse_value(val)
    for flag in ("seed", "out", "replicas", "threads"):
        val = getattr(args, flag)
        if val is not None:
            raw[flag] = val
    if args.plot:
        raw["plot"] = True
    if args.tolerance:
        tol = dict(raw.get("tolerance", {}))
        for item in args.tolerance:
            key, sep, val = item.partition("=")
            if not sep:
                raise ConfigError(f"{item}: tolerances are given as KEY=VALUE")
            tol[key] = _parse_value(val)
        raw["tolerance"] = tol
    return RunConfig.from_dict(raw), args


# -- output ------------------------------------------------------------------------------------


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class Table:
    """One CSV file: ``# schema: <id>`` line, a header row and data rows."""

    name: str
    schema: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    plot: tuple[str, str] | None = None  # (x column, y column)
    log: bool = False

    def render(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: {self.schema}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([format_value(v) for v in row])
        return buf.getvalue()


def read_table(text: str) -> tuple[str, list[str], list[list[str]]]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# schema: "):
        raise ValueError("missing schema line")
    rows = list(csv.reader(lines[1:]))
    return lines[0][len("# schema: "):], rows[0], rows[1:]


def render_svg(csv_text: str, x: str, y: str, log: bool = False) -> str:
    """Line/scatter plot of two columns, depending only on the CSV text."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    schema, cols, rows = read_table(csv_text)
    xs = [float(r[cols.index(x)]) for r in rows]
    ys = [float(r[cols.index(y)]) for r in rows]
    with matplotlib.rc_context({"svg.hashsalt": "tasepmix", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(xs, ys, "o-")
        if log:
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlabel(x)
        ax.set_ylabel(y)
        ax.set_title(schema)
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out or os.path.join("runs", cfg.subcommand))
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


# -- subcommands -------------------------------------------------------------------------------


@dataclass
class Outcome:
    tables: list[Table]
    checks: dict[str, bool] = field(default_factory=dict)


def _sub_seed(cfg: RunConfig, *path) -> int:
    from .rng import derive_seed

    return derive_seed(cfg.seed, cfg.subcommand, *path)


def run_simulate(cfg: RunConfig) -> Outcome:
    from .ring_tasep import ClockSource, RingConfig, simulate

    p = cfg.params
    n, k = p["N"], p["k"]
    times = np.linspace(0.0, p["horizon"], p["samples"]) if p["samples"] > 1 else np.array([p["horizon"]])
    t = Table("trajectory", "tasepmix.simulate/1", ["replica", "time", "configuration", "jumps"])
    for r in range(cfg.replicas):
        if p["initial"]:
            eta = RingConfig.from_string(p["initial"])
        else:
            rng = np.random.default_rng(_sub_seed(cfg, "initial", r))
            occ = np.zeros(n, dtype=int)
            occ[rng.choice(n, k, replace=False)] = 1
            eta = RingConfig(tuple(int(v) for v in occ))
        traj = simulate(eta, ClockSource(_sub_seed(cfg, "clock", r)), p["horizon"])
        for s in times:
            state = traj.state_at(float(s))
            jumps = int(np.count_nonzero(traj.applied[: np.searchsorted(traj.times, s, side="right")]))
            t.rows.append([r, float(s), "".join(str(int(v)) for v in state), jumps])
    return Outcome([t])


def run_mix_exact(cfg: RunConfig) -> Outcome:
    from .exact_mixing import MixingProblem

    p = cfg.params
    prob = MixingProblem(p["N"], p["k"])
    t = Table("mixing", "tasepmix.mix-exact/1", ["epsilon", "t_mix"], plot=("epsilon", "t_mix"))
    for e in p["epsilon"]:
        t.rows.append([e, prob.mixing_time(e, p["tol"])])
    checks = {}
    if p["k"] != p["N"] - p["k"]:
        mirror = MixingProblem(p["N"], p["N"] - p["k"])
        worst = max(abs(row[1] - mirror.mixing_time(row[0], p["tol"])) for row in t.rows)
        checks["particle-hole symmetry"] = worst <= cfg.tolerance["symmetry"]
    return Outcome([t], checks)


def _fit_table(name: str, fit) -> Table:
    return Table(name, "tasepmix.fit/1", ["slope", "intercept", "stderr", "r2"], [[fit.slope, fit.intercept, fit.stderr, fit.r2]])


def _in_band(cfg, fit) -> bool:
    return cfg.tolerance["slope_min"] <= fit.slope <= cfg.tolerance["slope_max"]


def run_coalesce(cfg: RunConfig) -> Outcome:
    from .estimators import coalescence_scaling

    p = cfg.params
    rule = (lambda n: n // 2) if p["k_rule"] == "half" else (lambda n: p["k"])
    res = coalescence_scaling(p["N_list"], rule, cfg.replicas, _sub_seed(cfg), lambda n, k: p["cap_factor"] * n * n / math.sqrt(k), cfg.threads)
    t = Table("coalescence", "tasepmix.coalesce/1", ["N", "k", "runs", "censored", "median_tau"], plot=("N", "median_tau"), log=True)
    for r in res.rows:
        t.rows.append([r.n_sites, r.k, r.runs, r.censored, r.median])
    tables, checks = [t], {}
    if res.fit is not None:
        tables.append(_fit_table("coalescence_fit", res.fit))
        checks["slope band"] = _in_band(cfg, res.fit)
    return Outcome(tables, checks)


def run_lpp_stats(cfg: RunConfig) -> Outcome:
    from .estimators import lpp_samples, linear_fit, loglog_fit, shape_center

    p = cfg.params
    seed = _sub_seed(cfg)
    t = Table("moments", "tasepmix.lpp-moments/1", ["n", "m", "replicas", "mean", "variance", "center"], plot=("n", "variance"), log=True)
    tails = Table("tails", "tasepmix.lpp-tails/1", ["n", "x", "upper", "lower"])
    checks = {}
    var = []
    for n in p["n_list"]:
        s = lpp_samples(n, p["m"], cfg.replicas, seed, cfg.threads)
        c = shape_center(n, p["m"])
        v = float(s.var(ddof=1)) if s.size > 1 else 0.0
        var.append(v)
        t.rows.append([n, p["m"], cfg.replicas, float(s.mean()), v, c])
        checks[f"mean n={n}"] = abs(float(s.mean()) - c) <= cfg.tolerance["mean_scale"] * n ** (1 / 3)
        z = (s - c) / (n ** (1 / 3) * p["m"] ** (-1 / 6))
        for x in p["x_grid"]:
            tails.rows.append([n, x, float(np.mean(z >= x)), float(np.mean(z <= -x))])
    tables = [t]
    if p["x_grid"]:
        tables.append(tails)
    if len(p["n_list"]) > 1:
        fit = loglog_fit(p["n_list"], var)
        tables.append(_fit_table("variance_fit", fit))
        checks["variance slope band"] = _in_band(cfg, fit)
    return Outcome(tables, checks)


def run_tf_scaling(cfg: RunConfig) -> Outcome:
    from .estimators import tf_scaling

    p = cfg.params
    res = tf_scaling(p["n_list"], p["m"], cfg.replicas, _sub_seed(cfg), cfg.threads)
    t = Table("tf", "tasepmix.tf-scaling/1", ["n", "m", "replicas", "median_tf"], plot=("n", "median_tf"), log=True)
    for n, med in zip(res.n, res.median):
        t.rows.append([n, p["m"], cfg.replicas, med])
    tables, checks = [t], {}
    if res.fit is not None:
        tables.append(_fit_table("tf_fit", res.fit))
        checks["slope band"] = _in_band(cfg, res.fit)
    return Outcome(tables, checks)


def run_agreement(cfg: RunConfig) -> Outcome:
    import warnings

    from .estimators import period_for_strip, periodic_vs_iid_agreement

    p = cfg.params
    t = Table("agreement", "tasepmix.agreement/1", ["n", "m", "N", "k", "replicas", "agree", "frequency"], plot=("k", "frequency"))
    for k in p["k_list"]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = periodic_vs_iid_agreement(p["n"], p["m"], period_for_strip(k, p["m"]), k, cfg.replicas, _sub_seed(cfg), cfg.threads)
        t.rows.append([res.n, res.m, res.n_sites, res.k, res.replicas, res.agree, res.frequency])
    checks = {"frequency at widest strip": t.rows[-1][-1] >= cfg.tolerance["min_frequency"]}
    return Outcome([t], checks)


def run_gamma_tv(cfg: RunConfig) -> Outcome:
    from .estimators import gamma_tv

    p = cfg.params
    c = cfg.tolerance["constant"]
    t = Table("gamma_tv", "tasepmix.gamma-tv/1", ["M", "delta", "tv", "bound"], plot=("delta", "tv"))
    ok = True
    for m in p["M_list"]:
        for d in p["delta_list"]:
            tv = gamma_tv(m, d)
            bound = c * (m * d * d) ** 0.25
            ok &= tv <= bound
            t.rows.append([m, d, tv, bound])
    return Outcome([t], {"bound": ok})


def run_geodesic_coalesce(cfg: RunConfig) -> Outcome:
    from .estimators import coalescence_event_frequency

    p = cfg.params
    rows = coalescence_event_frequency(p["N"], p["k"], p["theta_list"], cfg.replicas, _sub_seed(cfg), p["cap"] or None, cfg.threads)
    t = Table("criterion", "tasepmix.geodesic-coalesce/1", ["theta", "shift", "trials", "holds", "frequency", "violations", "censored"], plot=("theta", "frequency"))
    for r in rows:
        t.rows.append([r.theta, r.shift, r.trials, r.holds, r.frequency, r.violations, r.censored])
    checks = {"no violations": all(r.violations <= cfg.tolerance["max_violations"] for r in rows)}
    return Outcome([t], checks)


def run_bridge_check(cfg: RunConfig) -> Outcome:
    from .estimators import family_pair, pair_from_labels
    from .growth_bridge import (
        competition_interfaces,
        competition_labels,
        coupled_pair_environment,
        lpp_driven_tasep,
        weight_driven_tasep,
    )
    from .periodic_lpp import Environment
    from .ring_tasep import Censored, ClockSource, RingConfig, simulate

    p = cfg.params
    t = Table("bridge", "tasepmix.bridge-check/1", ["check", "N", "k", "trials", "mismatches", "statistic"])

    # pathwise: arrival-table growth against the event-driven oracle
    n, k = p["N"], p["k"]
    mism = 0
    for r in range(cfg.replicas):
        rng = np.random.default_rng(_sub_seed(cfg, "growth-initial", r))
        occ = np.zeros(n, dtype=int)
        occ[rng.choice(n, k, replace=False)] = 1
        eta = RingConfig(tuple(int(v) for v in occ))
        env = Environment.periodic(n, k, _sub_seed(cfg, "growth-env", r))
        times = np.sort(rng.uniform(0, p["horizon"], p["samples"]))
        a = lpp_driven_tasep(env, eta, times)
        b = weight_driven_tasep(env, eta, times)
        mism += sum(x != y for x, y in zip(a, b))
    t.rows.append(["growth-pathwise", n, k, cfg.replicas * p["samples"], mism, 0.0])

    # law of the site-0 occupancy: growth against clocks
    ln, lk, lt, reps = p["law_N"], p["law_k"], p["law_time"], p["law_replicas"]
    eta = RingConfig(tuple([1] * lk + [0] * (ln - lk)))
    x1 = sum(lpp_driven_tasep(Environment.periodic(ln, lk, _sub_seed(cfg, "law-env", r)), eta, [lt])[0].occupancy[0] for r in range(reps))
    x2 = sum(simulate(eta, ClockSource(_sub_seed(cfg, "law-clock", r)), lt).final.occupancy[0] for r in range(reps))
    pooled = (x1 + x2) / (2 * reps)
    se = math.sqrt(pooled * (1 - pooled) * 2 / reps) if 0 < pooled < 1 else 1.0
    z = (x1 - x2) / reps / se
    t.rows.append(["growth-law", ln, lk, reps, 0, z])

    # competition interfaces against second class particles
    pn, pk = p["pair_N"], p["pair_k"]
    bad = 0
    for r in range(cfg.replicas):
        rng = np.random.default_rng(_sub_seed(cfg, "pair", r))
        pair = pair_from_labels(family_pair(pn, pk, "random", rng))
        run = coupled_pair_environment(pair, ClockSource(_sub_seed(cfg, "pair-clock", r)), 20.0 * pn * pn, _sub_seed(cfg, "pair-env", r))
        if isinstance(run.tau, Censored):
            bad += 1
            continue
        j, jt = run.expanded.peaks
        phi, phi_t = competition_interfaces(competition_labels(run.env, run.interface, j, jt, run.tau))
        for walk, moves in ((phi, run.moves[0]), (phi_t, run.moves[1])):
            got = [(d, s) for d, s in walk.moves() if s < run.tau * (1 - 1e-9)]
            same = len(got) == len(moves) and all(a[0] == b[0] and math.isclose(a[1], b[1], rel_tol=1e-9) for a, b in zip(got, moves))
            bad += not same
    t.rows.append(["competition", pn, pk, cfg.replicas, bad, 0.0])
    checks = {
        "growth pathwise": mism <= cfg.tolerance["max_mismatches"],
        "growth law": abs(z) < cfg.tolerance["z_max"],
        "competition interfaces": bad <= cfg.tolerance["max_mismatches"],
    }
    return Outcome([t], checks)


RUNNERS: dict[str, Callable[[RunConfig], Outcome]] = {
    "simulate": run_simulate,
    "mix-exact": run_mix_exact,
    "coalesce": run_coalesce,
    "lpp-stats": run_lpp_stats,
    "tf-scaling": run_tf_scaling,
    "agreement": run_agreement,
    "gamma-tv": run_gamma_tv,
    "geodesic-coalesce": run_geodesic_coalesce,
    "bridge-check": run_bridge_check,
}


# -- driver --------------------------------------------------------------------------------------


def _write_manifest(path: Path, manifest: dict) -> None:
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run(cfg: RunConfig, self_test: bool = False) -> int:
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    mpath = out / "manifest.json"
    manifest = {
        "tool": "tasepmix",
        "version": __version__,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "started": _now(),
        "finished": None,
        "status": "running",
        "files": {},
    }
    _write_manifest(mpath, manifest)
    try:
        outcome = RUNNERS[cfg.subcommand](cfg)
        for table in outcome.tables:
            text = table.render()
            fname = f"{table.name}.csv"
            (out / fname).write_text(text)
            manifest["files"][fname] = sha256(text.encode())
            if cfg.plot and table.plot is not None:
                svg = render_svg(text, *table.plot, log=table.log)
                sname = f"{table.name}.svg"
                (out / sname).write_text(svg)
                manifest["files"][sname] = sha256(svg.encode())
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        record = {"error": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}
        manifest.update(status="failed", valid=False, error=record, finished=_now())
        _write_manifest(mpath, manifest)
        print(json.dumps({"status": "failed", "error": record["error"], "message": record["message"]}), file=sys.stderr)
        return EXIT_RUNTIME
    manifest["checks"] = outcome.checks
    failed = [name for name, ok in outcome.checks.items() if not ok]
    manifest.update(status="ok", valid=True, finished=_now())
    if self_test and failed:
        manifest["status"] = "check-failed"
    _write_manifest(mpath, manifest)
    for name, ok in outcome.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    if self_test and failed:
        return EXIT_CHECK
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        cfg, args = parse_config(argv)
    except ConfigError as exc:
        print(json.dumps({"status": "config-error", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, self_test=args.self_test)


if __name__ == "__main__":
    sys.exit(main())
