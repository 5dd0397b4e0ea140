"""Batch experiment runner.

One experiment per config file.  Configs are flat ``key = value`` text::

    # Bernoulli pair, quenched gap
    kind = compare
    dist.F = atomic 0:0.3 1:0.7
    dist.G = atomic 0:0.6 1:0.4
    F = F
    G = G
    x = 1
    n_list = 8,16
    samples = 400
    seed = 7

Distribution blocks are ``dist.<id> = <kind> <params>`` with kinds
``point v``, ``atomic v:p ...``, ``exponential r``, ``uniform a b`` and
``shifted (<spec>) lambda``.  A run writes CSV tables and ``manifest.json``
into the output directory.  Exit codes: 0 success, 1 invariant failure,
2 config error, 3 resource or budget error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from . import __version__
from . import distributions as dist_mod
from .annealed import b_walk_mc, beta_upper_sequence
from .comparison import (coupled_gap_experiment, criterion_d1, crossing_box_for,
                         crossing_statistics)
from .distributions import Atomic, DistributionSpec, Exponential, PointMass, Uniform, shift_by
from .errors import ConfigError, CouplingViolation, InvariantFailure, ResourceError, RwpotError
from .fields import GENERATOR_ID, realize, replica_seed, sample_uniform_field
from .lattice import sample_walk_until
from .percolation import SUPERCRITICAL_GUARD, mu_estimate
from .quenched import RESIDUAL_TOL, alpha_estimate
from .rates import (ANNEALED, QUENCHED, EstimatorConfig, lambda_star, ldp_dp_check,
                    lyapunov_curve, rate_function)

KINDS = ("lyapunov", "rate", "compare", "criterion", "percolation", "ldp", "stats")
ENV_OUT = "ARTIFACT_OUT_DIR"
ENV_THREADS = "ARTIFACT_THREADS"

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# distribution specs

def parse_spec(text: str) -> DistributionSpec:
    """Parse ``point v`` / ``atomic v:p ...`` / ``exponential r`` /
    ``uniform a b`` / ``shifted (<spec>) lambda``."""
    text = text.strip()
    if not text:
        raise ConfigError("empty distribution")
    head, _, rest = text.partition(" ")
    rest = rest.strip()
    try:
        if head == "point":
            return PointMass(float(rest))
        if head == "atomic":
            pairs = [tok.split(":") for tok in rest.split()]
            if not pairs or any(len(p) != 2 for p in pairs):
                raise ConfigError(f"atomic needs value:prob pairs, got {rest!r}")
            return Atomic(tuple(float(v) for v, _ in pairs), tuple(float(p) for _, p in pairs))
        if head == "exponential":
            return Exponential(float(rest))
        if head == "uniform":
            a, b = rest.split()
            return Uniform(float(a), float(b))
        if head == "shifted":
            if not rest.startswith("("):
                raise ConfigError("shifted needs '(<spec>) lambda'")
            depth = 0
            for i, ch in enumerate(rest):
                depth += (ch == "(") - (ch == ")")
                if depth == 0:
                    break
            if depth != 0:
                raise ConfigError("unbalanced parentheses in shifted spec")
            return shift_by(parse_spec(rest[1:i]), float(rest[i + 1:]))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad distribution {text!r}: {exc}") from None
    raise ConfigError(f"unknown distribution kind {head!r}")


# ---------------------------------------------------------------------------
# config

def _ints(v: str) -> list:
    return [int(t) for t in v.replace(";", ",").split(",") if t.strip()]


def _floats(v: str) -> list:
    return [float(t) for t in v.replace(";", ",").split(",") if t.strip()]


def _vectors(v: str) -> list:
    """``0.2; 0.5`` or ``0.2,0.1; 0.4,0.2`` -> list of tuples."""
    return [tuple(float(t) for t in part.split(",")) for part in v.split(";") if part.strip()]


SCHEMA: Dict[str, Callable[[str], Any]] = {
    "kind": str, "d": int, "x": _floats, "x_grid": _vectors, "y": _ints, "n": int,
    "n_list": _ints, "lambda_grid": _floats, "samples": int, "walk_samples": int,
    "seed": int, "margin": int, "cap": int, "mode": str, "estimator": str,
    "phi": str, "F": str, "G": str, "M": float, "M_list": _floats, "guard": float,
    "R": int, "kappa": float, "B": int, "A": int, "potential": float, "threads": int,
}
RANGES = {
    "samples": lambda v: v >= 1, "walk_samples": lambda v: v >= 1, "n": lambda v: v >= 1,
    "n_list": lambda v: len(v) > 0 and all(n >= 1 for n in v), "margin": lambda v: v >= 1,
    "cap": lambda v: v >= 1, "R": lambda v: v >= 2 and v % 2 == 0, "B": lambda v: v >= 1,
    "A": lambda v: v >= 1, "M": lambda v: v >= 0, "threads": lambda v: v >= 1,
    "mode": lambda v: v in (QUENCHED, ANNEALED),
    "estimator": lambda v: v in ("walk_mc", "potential_mc"),
    "lambda_grid": lambda v: all(l >= 0 for l in v),
    "guard": lambda v: 0 < v <= 1,
}


def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` text; returns the typed config dict.

    Raises :class:`ConfigError` carrying the offending line and key.
    """
    cfg: dict = {"dist": {}, "_raw": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", lineno)
        if key in cfg["_raw"]:
            raise ConfigError("duplicate key", lineno, key)
        cfg["_raw"][key] = value
        if key.startswith("dist."):
            name = key[5:]
            if not name:
                raise ConfigError("empty distribution id", lineno, key)
            try:
                cfg["dist"][name] = parse_spec(value)
            except ConfigError as exc:
                raise ConfigError(str(exc), lineno, key) from None
            continue
        if key not in SCHEMA:
            raise ConfigError("unknown key", lineno, key)
        try:
            val = SCHEMA[key](value)
        except (ValueError, TypeError):
            raise ConfigError(f"cannot parse {value!r}", lineno, key) from None
        if key in RANGES and not RANGES[key](val):
            raise ConfigError(f"value {value!r} out of range", lineno, key)
        cfg[key] = val
    for ref in ("phi", "F", "G"):
        if ref in cfg and cfg[ref] not in cfg["dist"]:
            raise ConfigError(f"undefined distribution id {cfg[ref]!r}", None, ref)
    if "kind" in cfg and cfg["kind"] not in KINDS:
        raise ConfigError(f"unknown experiment kind {cfg['kind']!r}", None, "kind")
    return cfg


def load_config(path) -> dict:
    """Read a config file, or the config echoed in a run manifest (``.json``)."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if p.suffix == ".json":
        try:
            raw = json.loads(text)["config"]
        except (ValueError, KeyError):
            raise ConfigError("manifest has no 'config' block") from None
        text = "\n".join(f"{k} = {v}" for k, v in raw.items())
    return parse_config(text)


def _need(cfg, *keys):
    for k in keys:
        if k not in cfg:
            raise ConfigError("missing required key", None, k)


def _spec(cfg, key) -> DistributionSpec:
    _need(cfg, key)
    return cfg["dist"][cfg[key]]


# ---------------------------------------------------------------------------
# output

def fmt(v) -> str:
    """CSV cell: repr for floats (exact round trip), fixed inf/nan sentinels."""
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v + 0.0)    # folds -0.0 into 0.0
    if isinstance(v, (tuple, list)):
        return " ".join(fmt(c) for c in v)
    return str(v)


def write_csv(path: Path, header: List[str], rows: List[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(c) for c in r])


class Run:
    """State for one experiment: output directory, pool, collected failures."""

    def __init__(self, cfg: dict, out: Path, threads: int):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.failures: List[str] = []
        self.files: List[str] = []
        self.replicas: Dict[str, int] = {}

    def map(self, fn, jobs):
        """Ordered map over independent jobs; results do not depend on threads."""
        jobs = list(jobs)
        if self.threads <= 1 or len(jobs) <= 1:
            return [fn(j) for j in jobs]
        with ThreadPoolExecutor(max_workers=self.threads) as ex:
            return list(ex.map(fn, jobs))

    def fail(self, module: str, op: str, msg: str):
        self.failures.append(f"{module}.{op}: {msg}")

    def csv(self, name: str, header, rows):
        write_csv(self.out / name, header, rows)
        self.files.append(name)


def _x_int(cfg) -> tuple:
    _need(cfg, "x")
    x = cfg["x"]
    if any(v != int(v) for v in x):
        raise ConfigError("x must be an integer direction for this experiment", None, "x")
    x = tuple(int(v) for v in x)
    if not any(x):
        raise ConfigError("x must be nonzero", None, "x")
    return x


# ---------------------------------------------------------------------------
# experiments

def run_lyapunov(run: Run):
    cfg = run.cfg
    phi = _spec(cfg, "phi")
    x = _x_int(cfg)
    mode = cfg.get("mode", ANNEALED)
    n_list = cfg.get("n_list", [8, 16])
    samples = cfg.get("samples", 1000)
    seed = cfg["seed"]
    rows = []
    if mode == QUENCHED:
        ests = run.map(lambda n: alpha_estimate(phi, x, [n], samples, seed, cfg.get("margin"))[0], n_list)
        for e in ests:
            rows.append([phi.spec_id, len(x), x, e.n, "quenched_solve", e.value, e.std_error, 0.0,
                         cfg.get("margin", 2 * e.n)])
            for k, ok in e.checks.items():
                if not ok:
                    run.fail("quenched", "alpha_estimate", f"{k} violated at n={e.n}")
    else:
        est = cfg.get("estimator", "walk_mc")
        seq = beta_upper_sequence(phi, x, n_list, samples, seed, est, cfg.get("cap"), cfg.get("margin"))
        for e in seq.entries:
            rows.append([phi.spec_id, len(x), x, e.n, est, e.value, e.std_error, e.capped_fraction,
                         e.margin if e.margin is not None else "nan"])
            for k, ok in e.checks.items():
                if not ok:
                    run.fail("annealed", "beta_upper_sequence", f"{k} violated at n={e.n}")
    run.replicas["samples_per_n"] = samples
    run.csv("exponent.csv", ["phi_id", "d", "x", "n", "estimator", "value_nats_per_n",
                             "stderr_nats_per_n", "capped_fraction", "margin_sites"], rows)
    if "lambda_grid" in cfg:
        curve = lyapunov_curve(phi, x, cfg["lambda_grid"], mode, _est_config(cfg))
        _curve_csv(run, phi, curve)


def _est_config(cfg) -> EstimatorConfig:
    return EstimatorConfig(tuple(cfg.get("n_list", (16, 32, 64))), cfg.get("samples", 2000), cfg["seed"],
                           cfg.get("estimator", "walk_mc"), cfg.get("margin"), cfg.get("cap"))


def _curve_csv(run: Run, phi, curve, name="curve.csv"):
    rows = [[phi.spec_id, curve.mode, curve.x, l, v, s]
            for l, v, s in zip(curve.lambdas, curve.values, curve.stderrs)]
    run.csv(name, ["phi_id", "mode", "x", "lambda_nats", "value_nats", "stderr_nats"], rows)


def run_rate(run: Run):
    cfg = run.cfg
    phi = _spec(cfg, "phi")
    mode = cfg.get("mode", ANNEALED)
    xs = cfg.get("x_grid") or ([tuple(cfg["x"])] if "x" in cfg else None)
    if not xs:
        raise ConfigError("missing required key", None, "x")
    grid = cfg.get("lambda_grid")

    def job(x):
        nx = float(np.abs(x).sum())
        if nx == 0 or nx >= 1:
            r = rate_function(_trivial_curve(x, mode))
            return x, r, math.nan, None
        curve = lyapunov_curve(phi, x, grid, mode, _est_config(cfg))
        return x, rate_function(curve), lambda_star(curve), curve

    results = run.map(job, xs)
    rows = []
    for i, (x, r, ls, curve) in enumerate(results):
        rows.append([phi.spec_id, mode, x, r.value, ls, r.status])
        if curve is not None:
            _curve_csv(run, phi, curve, f"curve_{i}.csv")
    run.csv("rate.csv", ["phi_id", "mode", "x", "rate_nats", "lambda_star_nats", "status"], rows)


def _trivial_curve(x, mode):
    from .rates import LyapunovCurve
    return LyapunovCurve(tuple(float(v) for v in x), mode, [0.0], [0.0], [0.0])


def run_compare(run: Run):
    cfg = run.cfg
    F, G = _spec(cfg, "F"), _spec(cfg, "G")
    x = _x_int(cfg)
    mode = cfg.get("mode", QUENCHED)
    n_list = cfg.get("n_list", [8, 16])
    samples = cfg.get("samples", 400)
    try:
        rep = coupled_gap_experiment(F, G, x, n_list, samples, mode, cfg["seed"], cfg.get("margin"))
    except CouplingViolation as exc:
        run.fail("comparison", "coupled_gap_experiment", str(exc))
        return
    rows = [[mode, x, e.n, e.gap, e.stderr, e.per_unit, e.per_unit_stderr] for e in rep.entries]
    run.replicas["coupled_samples_per_n"] = samples
    run.csv("gap.csv", ["mode", "x", "n", "gap_nats", "stderr_nats", "per_unit_gap_nats_per_l1",
                        "per_unit_stderr_nats_per_l1"], rows)


def run_criterion(run: Run):
    cfg = run.cfg
    F, G = _spec(cfg, "F"), _spec(cfg, "G")
    n_list = cfg.get("n_list", [16, 32, 64])
    samples = cfg.get("samples", 20_000)
    seed = cfg["seed"]
    bG = beta_upper_sequence(G, 1, n_list, samples, replica_seed(seed, 1)).estimate
    bF = beta_upper_sequence(F, 1, n_list, samples, replica_seed(seed, 2)).estimate
    res = criterion_d1(F, G, bG, bF)
    if res.key_ok is False:
        run.fail("comparison", "criterion_d1", "beta_F(1) exceeds -log F(0) beyond 3 sigma")
    run.replicas["walks_per_n"] = samples
    run.csv("criterion.csv", ["F_id", "G_id", "F0", "beta_G_nats", "beta_G_stderr", "beta_F_nats",
                              "beta_F_stderr", "key_ceiling_nats", "regime"],
            [[F.spec_id, G.spec_id, res.F0, bG[0], bG[1], bF[0], bF[1], res.key_ceiling, res.regime]])


def run_percolation(run: Run):
    cfg = run.cfg
    phi = _spec(cfg, "phi")
    _need(cfg, "y")
    y = tuple(cfg["y"])
    Ms = cfg.get("M_list") or ([cfg["M"]] if "M" in cfg else None)
    if not Ms:
        raise ConfigError("missing required key", None, "M_list")
    n_list = cfg.get("n_list", [16])
    samples = cfg.get("samples", 100)
    guard = cfg.get("guard", SUPERCRITICAL_GUARD)
    res = run.map(lambda M: mu_estimate(phi, M, y, n_list, samples, cfg.get("margin"), cfg["seed"], guard), Ms)
    rows = []
    for M, ests in zip(Ms, res):
        for e in ests:
            rows.append([phi.spec_id, M, y, e.n, e.mu_hat, e.stderr, e.unreachable_fraction])
    run.replicas["samples_per_n"] = samples
    run.csv("percolation.csv", ["phi_id", "M", "y", "n", "mu_hat_per_l1", "stderr_per_l1",
                                "unreachable_fraction"], rows)


def run_ldp(run: Run):
    cfg = run.cfg
    _need(cfg, "n", "x")
    n = cfg["n"]
    x = cfg["x"][0]
    mode = cfg.get("mode", QUENCHED)
    if "phi" in cfg:
        src = _spec(cfg, "phi")
        sid = src.spec_id
    else:
        src = cfg.get("potential", 0.0)
        sid = f"constant {fmt(float(src))}"
    r = ldp_dp_check(src, n, x, mode, cfg.get("samples", 100), cfg["seed"])
    run.csv("ldp.csv", ["phi_id", "mode", "n", "x", "m", "parity_adjusted", "rate_nats_per_step",
                        "numerator_rate_nats_per_step"],
            [[sid, mode, n, x, r.m, r.adjusted, r.value, r.numerator_rate]])


def run_stats(run: Run):
    cfg = run.cfg
    F = _spec(cfg, "F")
    x = _x_int(cfg)
    n = cfg.get("n", 8)
    R = cfg.get("R", 2)
    kappa = cfg.get("kappa", 0.5)
    M = int(cfg.get("M", 2))
    B = cfg.get("B", 1)
    A = cfg.get("A", 6)
    d = len(x)
    L_B = B * R ** (2 * d)
    walks = cfg.get("walk_samples", cfg.get("samples", 100))
    target = tuple(n * c for c in x)
    cap = cfg.get("cap", 64 * (n * sum(abs(c) for c in x)) ** 2)

    def job(i):
        s = replica_seed(cfg["seed"], i)
        tr = sample_walk_until((0,) * d, [target], cap, s)
        if tr.capped:
            return None
        box = crossing_box_for(tr, R)
        omega = realize(sample_uniform_field(box, replica_seed(cfg["seed"], i, 1)), F)
        return crossing_statistics(tr, omega, kappa, R, M, L_B, target, A)

    rows = []
    capped = 0
    for i, st in enumerate(run.map(job, range(walks))):
        if st is None:
            capped += 1
            continue
        rows.append([i, st.animal_size, st.good_boxes_in_animal, st.traversals, st.boxes_traversed_M_times,
                     st.short_crossings, st.long_crossings, st.light_sites, st.light_site_threshold,
                     st.e3_bound, st.good_fraction])
    run.replicas["walks"] = walks
    run.replicas["capped_walks"] = capped
    run.csv("stats.csv", ["trace", "animal_size_boxes", "good_boxes_in_animal", "traversals",
                          "boxes_traversed_M_times", "short_crossings", "long_crossings",
                          "light_sites", "light_site_threshold", "e3_bound", "good_fraction"], rows)


DISPATCH = {
    "lyapunov": run_lyapunov, "rate": run_rate, "compare": run_compare, "criterion": run_criterion,
    "percolation": run_percolation, "ldp": run_ldp, "stats": run_stats,
}


def manifest(run: Run, wall: float) -> dict:
    return {
        "config": run.cfg["_raw"],
        "kind": run.cfg["kind"],
        "seed": run.cfg["seed"],
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "generator": GENERATOR_ID,
        "tolerances": {
            "bisection_abs": dist_mod.BISECTION_TOL,
            "quadrature_rel": dist_mod.QUADRATURE_RTOL,
            "dominance_grid": dist_mod.DOMINANCE_GRID,
            "solver_residual": RESIDUAL_TOL,
        },
        "choices": {
            "curve_fit": "weighted concave least-squares piecewise-linear",
            "giant_cluster_tie_break": "lexicographically smallest site",
        },
        "replicas": run.replicas,
        "threads": run.threads,
        "outputs": run.files,
        "failures": run.failures,
        "wall_clock_s": round(wall, 3),
    }


def run(cfg: dict, out_dir, threads: int = 1) -> int:
    """Run one experiment; returns the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.setdefault("seed", 0)
    cfg["_raw"]["seed"] = str(cfg["seed"])
    r = Run(cfg, out, threads)
    t0 = time.perf_counter()
    DISPATCH[cfg["kind"]](r)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest(r, time.perf_counter() - t0), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if r.failures:
        for f in r.failures:
            print(f"invariant failure: {f}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rwpot", description="Random walk in random potential experiments.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, help="experiment config (key = value text) or a run manifest")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./out)")
    p.add_argument("--threads", type=int, help=f"worker threads (default ${ENV_THREADS} or 1)")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.get("kind", args.kind) != args.kind:
            raise ConfigError(f"config is for {cfg['kind']!r}, not {args.kind!r}", None, "kind")
        cfg["kind"] = args.kind
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = args.out or os.environ.get(ENV_OUT) or "out"
        threads = args.threads or int(os.environ.get(ENV_THREADS, cfg.get("threads", 1)))
        if threads < 1:
            raise ConfigError("threads must be >= 1")
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return run(cfg, out, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (InvariantFailure, CouplingViolation) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except RwpotError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
