"""Command-line interface, CSV and config I/O, instrument binning and the
stratified varying-coefficient workflow.

Every numeric CSV written here starts with a comment line carrying the run's
config hash and seed, followed by a header row; floats use 17 significant
digits so files reload bit for bit. With ``--plot`` a PNG is written next to
each CSV it illustrates.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateSampleError,
    InsufficientStratumError,
    NumericalError,
    SchemaError,
    ValidationError,
)
from .ident import estimate_density_model, normal_design, pseudo_true
from .parametric import BasisSpec, fit_parametric
from .simulate import DgpSpec, generate, rate_study, run_monte_carlo
from .smoothing import Sample, default_grid
from .solver import FitResult, SolverConfig, landweber_fit

__all__ = [
    "Dataset",
    "Discretization",
    "VaryingFit",
    "load_csv",
    "write_csv",
    "read_config",
    "discretize_instrument",
    "fit_varying",
    "main",
]

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("y", "z", "w")
NA_TOKENS = {"", "na", "nan", "n/a", "null"}
MAX_AUTO_CATEGORIES = 20
STAT_NAMES = ("mean", "median", "sd", "min", "max")


# ---------------------------------------------------------------- data I/O


@dataclass
class Dataset:
    """A loaded CSV: the sample, per-column summary statistics, and what was dropped.

    ``w_levels`` maps discrete codes back to the original instrument values.
    """

    sample: Sample
    stats: dict
    dropped: int
    w_levels: Optional[np.ndarray] = None


def _summary(values: np.ndarray) -> dict:
    return {
        "mean": float(np.mean(values)),
        "median": float(np.median(values)),
        "sd": float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
        "min": float(np.min(values)),
        "max": float(np.max(values)),
    }


def load_csv(path, w_type: str = "auto", require_x: bool = False, min_n: int = 10) -> Dataset:
    """Read a comma-separated file with header columns ``y, z, w`` and optional ``x``.

    Lines starting with ``#`` are skipped. Rows with a missing cell (empty,
    ``NA``, ``NaN``) are dropped and counted. ``w_type="auto"`` treats the
    instrument as discrete when every value is an integer and there are at
    most 20 distinct values; discrete values are re-coded ``0 .. L-1`` in
    sorted order.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"data file {path} does not exist")
    if w_type not in ("auto", "discrete", "continuous"):
        raise ValidationError(f"unknown instrument type {w_type!r}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise SchemaError(f"{path} has no header row")
    header = [h.strip() for h in rows[0][1]]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if require_x and "x" not in header:
        missing.append("x")
    if missing:
        raise SchemaError(f"{path} is missing column(s): {', '.join(missing)}")
    cols = list(REQUIRED_COLUMNS) + (["x"] if "x" in header else [])
    idx = {c: header.index(c) for c in cols}

    data = {c: [] for c in cols}
    dropped = 0
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise SchemaError(f"row at line {line} has {len(row)} fields, header has {len(header)}")
        cells = {c: row[idx[c]].strip() for c in cols}
        if any(v.lower() in NA_TOKENS for v in cells.values()):
            dropped += 1
            continue
        for c, v in cells.items():
            try:
                data[c].append(float(v))
            except ValueError:
                raise SchemaError(f"non-numeric value {v!r} in column {c} at line {line}") from None
    if dropped:
        log.warning("dropped %d row(s) with missing values", dropped)
    arrays = {c: np.asarray(v, dtype=float) for c, v in data.items()}
    n = arrays["y"].size
    if n < min_n:
        raise DegenerateSampleError(f"{path} has n={n} complete rows, need at least {min_n}")
    stats = {c: _summary(a) for c, a in arrays.items()}

    w = arrays["w"]
    levels = np.unique(w)
    if w_type == "auto":
        integral = np.all(w == np.round(w))
        w_type = "discrete" if integral and levels.size <= MAX_AUTO_CATEGORIES else "continuous"
    w_levels = None
    if w_type == "discrete":
        if np.any(w != np.round(w)):
            raise SchemaError("a discrete instrument needs integer values in column w")
        w_levels = levels
        w = np.searchsorted(levels, w)
    sample = Sample(arrays["y"], arrays["z"], w, arrays.get("x"), w_type=w_type, min_n=min_n)
    return Dataset(sample, stats, dropped, w_levels)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path, columns: Mapping[str, Sequence], meta: Mapping[str, object]) -> Path:
    """Write equal-length columns after a ``# key=value ...`` comment line."""
    path = Path(path)
    lengths = {len(v) for v in columns.values()}
    if len(lengths) != 1:
        raise ValidationError(f"columns for {path.name} have unequal lengths {sorted(lengths)}")
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(list(columns))
        for row in zip(*columns.values()):
            wr.writerow([_fmt(v) for v in row])
    return path


# ---------------------------------------------------------------- config


def _solver_defaults() -> dict:
    return {f.name: f.default for f in fields(SolverConfig) if f.name != "user_curve"}


CONFIG_DEFAULTS = {
    "solver": _solver_defaults(),
    "dgp": {"dgp_id": "quadratic", "n": 1000, "alpha": 1.0, "beta": 2.0, "sigma": 0.5,
            "w_probs": (1.0 / 3.0, 2.0 / 3.0), "coefficients": (0.0, -1.5, 0.3)},
    "data": {"instrument": "auto", "bins": 0},
    "basis": {"kind": "polynomial", "k": 3, "degree": 3},
    "parametric": {"restarts": 10, "objective": "cdf", "rho": 8},
    "mc": {"reps": 100, "estimator": "landweber", "n_jobs": 1},
    "rate": {"n_list": (250, 500, 1000), "reps": 50},
    "analytic": {"means": (0.0, 1.0), "sds": (1.0, 1.0), "probs": (0.5, 0.5), "r": (1.0, 2.0)},
}
FLOAT_KEYS = {"solver.c", "solver.alpha", "solver.nu", "solver.h_u", "solver.h_w", "solver.h",
              "solver.lambda_w", "dgp.alpha", "dgp.beta", "dgp.sigma"}
INT_KEYS = {"solver.rho", "solver.n_max_override", "solver.grid_size"}


def _parse_value(key: str, text: str):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low == "none":
        return None
    if "," in text:
        return tuple(_parse_value(key, t) for t in text.split(","))
    for conv in (int, float):
        try:
            v = conv(text)
        except ValueError:
            continue
        if key in FLOAT_KEYS:
            return float(v)
        return v
    return text


def read_config(path) -> dict:
    """Parse ``section.key = value`` lines into a flat dict of dotted keys.

    Blank lines and ``#`` comments are ignored. Keys must exist in
    :data:`CONFIG_DEFAULTS`; anything else is rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    out = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in CONFIG_DEFAULTS or name not in CONFIG_DEFAULTS[section]:
            raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
        out[key] = _parse_value(key, value)
    return out


def _resolve(file_cfg: Mapping, overrides: Mapping) -> dict:
    cfg = {s: dict(v) for s, v in CONFIG_DEFAULTS.items()}
    for source in (file_cfg, overrides):
        for key, value in source.items():
            section, _, name = key.partition(".")
            cfg[section][name] = value
    return cfg


def _tuple(v) -> tuple:
    return v if isinstance(v, tuple) else (v,)


def _solver_config(cfg: dict) -> SolverConfig:
    s = dict(cfg["solver"])
    for k in INT_KEYS:
        name = k.split(".", 1)[1]
        if s.get(name) is not None:
            s[name] = int(s[name])
    try:
        return SolverConfig(**s)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _dgp_spec(cfg: dict, seed: int) -> DgpSpec:
    d = dict(cfg["dgp"])
    d["w_probs"] = tuple(float(v) for v in _tuple(d["w_probs"]))
    d["coefficients"] = tuple(float(v) for v in _tuple(d["coefficients"]))
    d["dgp_id"] = str(d["dgp_id"])
    d["n"] = int(d["n"])
    return DgpSpec(seed=seed, **d)


def config_hash(command: str, cfg: dict, seed: int, extra: Optional[dict] = None) -> str:
    payload = {"command": command, "config": cfg, "seed": seed, "extra": extra or {}}
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------- workflows


@dataclass
class Discretization:
    codes: np.ndarray
    edges: np.ndarray
    merged: list


def discretize_instrument(w, bins: int) -> Discretization:
    """Equal-width bins over ``[min w, max w]``.

    ``code = min(floor(L (w - min) / (max - min)), L - 1)``. Empty bins are
    merged into their left neighbour and the remaining codes renumbered
    consecutively, so the returned codes never skip a value. ``merged`` lists
    the original indices of the empty bins.
    """
    w = np.asarray(w, dtype=float)
    if int(bins) != bins or bins < 2:
        raise ValidationError(f"need an integer number of bins >= 2, got {bins}")
    bins = int(bins)
    lo, hi = float(w.min()), float(w.max())
    if not hi > lo:
        raise DegenerateSampleError("cannot bin a constant instrument")
    raw = np.minimum(np.floor(bins * (w - lo) / (hi - lo)), bins - 1).astype(np.int64)
    counts = np.bincount(raw, minlength=bins)
    merged = [int(j) for j in np.flatnonzero(counts == 0)]
    if merged:
        log.info("bins %s are empty and merged into their left neighbours", merged)
    # first and last bins always hold min and max, so relabelling by rank is
    # the same as merging each empty bin leftwards
    _, codes = np.unique(raw, return_inverse=True)
    return Discretization(codes.astype(np.int64), np.linspace(lo, hi, bins + 1), merged)


@dataclass
class VaryingFit:
    fit0: FitResult
    fit1: FitResult


def fit_varying(sample: Sample, cfg: SolverConfig = SolverConfig()) -> VaryingFit:
    """Separate Landweber fits for the strata ``x = 0`` and ``x = 1``."""
    if sample.x is None:
        raise ValidationError("varying-coefficient fit needs the covariate x")
    fits = []
    for level in (0, 1):
        mask = sample.x == level
        m = int(mask.sum())
        if m < 10:
            raise InsufficientStratumError(f"stratum x={level} has {m} rows, need at least 10")
        fits.append(landweber_fit(sample.subset(mask), cfg))
    return VaryingFit(*fits)


# ---------------------------------------------------------------- commands


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; route it to exit code 1."""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--config", type=Path, help="config file of 'section.key = value' lines")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (created if absent)")
    p.add_argument("--plot", action="store_true", help="also write PNG figures next to the CSVs")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _data_args(p, bins=True):
    p.add_argument("--data", type=Path, required=True, help="CSV with columns y,z,w[,x]")
    p.add_argument("--instrument", choices=("auto", "discrete", "continuous"),
                   help="instrument type (data.instrument)")
    if bins:
        p.add_argument("--bins", type=int, help="discretize w into this many equal-width bins (data.bins)")


def _solver_args(p):
    p.add_argument("--c", type=float, help="step constant in (0, 1) (solver.c)")
    p.add_argument("--n-max", type=int, dest="n_max", help="fixed iteration cap (solver.n_max_override)")
    p.add_argument("--initializer", choices=("nw_of_y_on_z", "zero"), help="starting curve (solver.initializer)")
    p.add_argument("--scan-full-trace", action="store_true", default=None,
                   help="run to N_max and keep the global minimum (solver.scan_full_trace)")


def _dgp_args(p):
    p.add_argument("--dgp", help="1/quadratic or 2/sine (dgp.dgp_id)")
    p.add_argument("--n", type=int, help="sample size (dgp.n)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="npiv-indep",
                     description="Nonparametric IV regression with an independent instrument.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw a sample from a simulation design")
    _common(p)
    _dgp_args(p)

    p = sub.add_parser("estimate", help="Landweber fit: curve.csv and trace.csv")
    _common(p)
    _data_args(p)
    _solver_args(p)

    p = sub.add_parser("mc", help="Monte Carlo replications: mc_summary.csv and mc_reps.csv")
    _common(p)
    _dgp_args(p)
    _solver_args(p)
    p.add_argument("--reps", type=int, help="replications (mc.reps)")
    p.add_argument("--estimator", choices=("landweber", "parametric", "pseudo_true_mi"),
                   help="estimator to replicate (mc.estimator)")
    p.add_argument("--n-jobs", type=int, dest="n_jobs", help="parallel workers (mc.n_jobs)")

    p = sub.add_parser("pseudo-true", help="pseudo-true value for a discrete instrument")
    _common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--data", type=Path, help="CSV with columns y,z,w (discrete w)")
    g.add_argument("--analytic", action="store_true",
                   help="normal design from the analytic.* config keys")

    p = sub.add_parser("parametric", help="minimum Cramer-von Mises fit: theta.csv")
    _common(p)
    _data_args(p, bins=False)
    p.add_argument("--k", type=int, help="number of basis functions (basis.k)")
    p.add_argument("--basis", choices=("polynomial", "bspline"), help="basis family (basis.kind)")
    p.add_argument("--restarts", type=int, help="random restarts (parametric.restarts)")
    p.add_argument("--objective", choices=("cdf", "cf"), help="distance (parametric.objective)")

    p = sub.add_parser("engel", help="stratified fits on x: curve_x0.csv and curve_x1.csv")
    _common(p)
    _data_args(p)
    _solver_args(p)

    p = sub.add_parser("rate-study", help="median MISE per sample size: rate.csv")
    _common(p)
    _dgp_args(p)
    _solver_args(p)
    p.add_argument("--n-list", dest="n_list", help="comma-separated increasing sizes (rate.n_list)")
    p.add_argument("--reps", type=int, help="replications per size (rate.reps)")
    p.add_argument("--n-jobs", type=int, dest="n_jobs", help="parallel workers (mc.n_jobs)")
    return parser


FLAG_KEYS = {
    "dgp": "dgp.dgp_id", "n": "dgp.n", "instrument": "data.instrument", "bins": "data.bins",
    "c": "solver.c", "n_max": "solver.n_max_override", "initializer": "solver.initializer",
    "scan_full_trace": "solver.scan_full_trace", "estimator": "mc.estimator",
    "n_jobs": "mc.n_jobs", "k": "basis.k", "basis": "basis.kind",
    "restarts": "parametric.restarts", "objective": "parametric.objective",
}


def _overrides(args) -> dict:
    out = {}
    for attr, key in FLAG_KEYS.items():
        v = getattr(args, attr, None)
        if v is not None:
            out[key] = v
    if getattr(args, "reps", None) is not None:
        out["rate.reps" if args.command == "rate-study" else "mc.reps"] = args.reps
    if getattr(args, "n_list", None) is not None:
        try:
            out["rate.n_list"] = tuple(int(t) for t in args.n_list.split(","))
        except ValueError:
            raise ValidationError(f"--n-list must be comma-separated integers, got {args.n_list!r}") from None
    return out


class _Run:
    """Shared state for one command: resolved config, output dir, CSV metadata."""

    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg
        self.seed = args.seed
        self.out = args.out
        extra = {}
        if getattr(args, "data", None) is not None:
            extra["data"] = hashlib.sha256(Path(args.data).read_bytes()).hexdigest()[:16]
        self.meta = {"config_hash": config_hash(args.command, cfg, args.seed, extra),
                     "seed": args.seed, "command": args.command}
        self.written = []

    def csv(self, name, columns) -> Path:
        path = write_csv(self.out / name, columns, self.meta)
        self.written.append(path)
        return path

    def png(self, name) -> Optional[Path]:
        if not self.args.plot:
            return None
        path = self.out / name
        self.written.append(path)
        return path


def _load(run: _Run, require_x=False) -> Dataset:
    d = run.cfg["data"]
    ds = load_csv(run.args.data, w_type=d["instrument"], require_x=require_x)
    bins = int(d["bins"] or 0)
    if bins:
        disc = discretize_instrument(ds.sample.w, bins)
        s = ds.sample
        ds.sample = Sample(s.y, s.z, disc.codes, s.x, w_type="discrete")
        ds.w_levels = None
        log.info("instrument binned into %d categories", ds.sample.n_categories)
    _print_stats(ds)
    return ds


def _print_stats(ds: Dataset) -> None:
    print(f"n = {ds.sample.n} (dropped {ds.dropped} incomplete row(s))")
    print("column " + " ".join(f"{s:>12}" for s in STAT_NAMES))
    for col, st in ds.stats.items():
        print(f"{col:<6} " + " ".join(f"{st[s]:>12.6g}" for s in STAT_NAMES))


def _curve_and_trace(run: _Run, fit: FitResult, suffix: str, title: str) -> None:
    from . import plotting

    c = fit.curve
    # the fitted curve has mean(y - phi) = 0; give the initializer the same level
    init = fit.initial.shifted(float(np.mean(c.at_sample) - np.mean(fit.initial.at_sample)))
    run.csv(f"curve{suffix}.csv", {"grid": c.grid, "phi": c.values, "initial": init.values})
    run.csv(f"trace{suffix}.csv", {"iteration": np.arange(fit.trace.size), "norm": fit.trace})
    print(f"{title}: N0 = {fit.n_stop} of N_max = {fit.n_max} ({fit.stopped_by}); "
          f"norm {fit.trace[0]:.4g} -> {fit.trace[fit.n_stop]:.4g}")
    if p := run.png(f"curve{suffix}.png"):
        plotting.plot_curves(p, c.grid, {"estimate": c.values, "initial": init.values}, title=title)
    if p := run.png(f"trace{suffix}.png"):
        plotting.plot_trace(p, fit.trace, fit.n_stop, fit.norm_after_stop)


def cmd_simulate(run: _Run) -> None:
    from . import plotting

    spec = _dgp_spec(run.cfg, run.seed)
    sample, truth = generate(spec)
    run.csv("sample.csv", {"y": sample.y, "z": sample.z, "w": sample.w})
    run.csv("truth.csv", {"grid": truth.grid, "phi": truth.values})
    print(f"simulated {spec.dgp_id} design, n = {spec.n}, seed = {spec.seed}")
    if p := run.png("sample.png"):
        plotting.plot_sample(p, sample.z, sample.y, sample.w, truth.grid, truth.values)


def cmd_estimate(run: _Run) -> None:
    ds = _load(run)
    fit = landweber_fit(ds.sample, _solver_config(run.cfg))
    _curve_and_trace(run, fit, "", "Landweber estimate")


def cmd_engel(run: _Run) -> None:
    ds = _load(run, require_x=True)
    vf = fit_varying(ds.sample, _solver_config(run.cfg))
    _curve_and_trace(run, vf.fit0, "_x0", "x = 0")
    _curve_and_trace(run, vf.fit1, "_x1", "x = 1")


def cmd_mc(run: _Run) -> None:
    from . import plotting

    spec = _dgp_spec(run.cfg, run.seed)
    mc_cfg = run.cfg["mc"]
    mc = run_monte_carlo(spec, int(mc_cfg["reps"]), _solver_config(run.cfg),
                         str(mc_cfg["estimator"]), n_jobs=int(mc_cfg["n_jobs"]))
    run.csv("mc_summary.csv", {"grid": mc.grid, "mean": mc.mean_curve, "lo95": mc.lo95, "hi95": mc.hi95})
    run.csv("mc_reps.csv", {
        "seed": mc.seeds, "mise_initial": mc.mise_initial, "mise_final": mc.mise_final,
        "n_stop": mc.n_stop, "n_max": mc.n_max, "stopped_by": mc.stopped_by,
    })
    print(f"{len(mc.seeds)} replications ({len(mc.diverged)} failed); "
          f"improved {mc.improved()}; median N0 {np.median(mc.n_stop):g}; "
          f"interior coverage {mc.coverage():.3f}")
    if p := run.png("mc_summary.png"):
        plotting.plot_band(p, mc.grid, mc.mean_curve, mc.lo95, mc.hi95, mc.truth,
                           title=f"{spec.dgp_id}, {len(mc.seeds)} replications")


def cmd_pseudo_true(run: _Run) -> None:
    from . import plotting

    if run.args.analytic:
        a = run.cfg["analytic"]
        model = normal_design(_tuple(a["means"]), _tuple(a["sds"]), _tuple(a["probs"]), _tuple(a["r"]))
        means = np.asarray(_tuple(a["means"]), dtype=float)
        sds = np.asarray(_tuple(a["sds"]), dtype=float)
        grid = np.linspace(np.min(means - 3 * sds), np.max(means + 3 * sds), 101)
        res = pseudo_true(model, grid)
    else:
        ds = load_csv(run.args.data, w_type="discrete")
        _print_stats(ds)
        model = estimate_density_model(ds.sample)
        res = pseudo_true(model, default_grid(ds.sample.z), ds.sample.z)
    run.csv("lambdas.csv", {"category": np.arange(res.lambdas.size), "lambda": res.lambdas, "r": model.r})
    run.csv("pseudo_true_curve.csv", {"grid": res.curve.grid, "phi": res.curve.values})
    print("lambda = " + ", ".join(f"{v:.8g}" for v in res.lambdas))
    if p := run.png("pseudo_true_curve.png"):
        plotting.plot_curves(p, res.curve.grid, {"pseudo-true": res.curve.values})


def cmd_parametric(run: _Run) -> None:
    from . import plotting

    ds = _load(run)
    b, pc = run.cfg["basis"], run.cfg["parametric"]
    basis = BasisSpec(str(b["kind"]), int(b["k"]), int(b["degree"]))
    fit = fit_parametric(ds.sample, basis, restarts=int(pc["restarts"]), seed=run.seed,
                         kind=str(pc["objective"]), rho=int(pc["rho"]))
    k = fit.theta.size
    run.csv("theta.csv", {"index": np.arange(k), "theta": fit.theta, "theta_init": fit.theta_init})
    grid = default_grid(ds.sample.z)
    curve = fit.basis(fit.theta, grid)
    run.csv("parametric_curve.csv", {"grid": grid, "phi": curve})
    print("theta = " + ", ".join(f"{v:.6g}" for v in fit.theta) + f"; objective {fit.objective:.4g}")
    if p := run.png("parametric_curve.png"):
        plotting.plot_curves(p, grid, {"CvM fit": curve, "least squares": fit.basis(fit.theta_init, grid)},
                             points=(ds.sample.z, ds.sample.y))


def cmd_rate_study(run: _Run) -> None:
    from . import plotting

    spec = _dgp_spec(run.cfg, run.seed)
    r = run.cfg["rate"]
    rows = rate_study(spec, [int(n) for n in _tuple(r["n_list"])], int(r["reps"]),
                      _solver_config(run.cfg), n_jobs=int(run.cfg["mc"]["n_jobs"]))
    run.csv("rate.csv", {k: [row[k] for row in rows] for k in rows[0]})
    for row in rows:
        print(f"n = {row['n']:>6}: median MISE {row['median_mise']:.4g}")
    if p := run.png("rate.png"):
        plotting.plot_rate(p, rows)


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "mc": cmd_mc,
    "pseudo-true": cmd_pseudo_true,
    "parametric": cmd_parametric,
    "engel": cmd_engel,
    "rate-study": cmd_rate_study,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        file_cfg = read_config(args.config) if args.config else {}
        cfg = _resolve(file_cfg, _overrides(args))
        # validate paths before any computation
        if getattr(args, "data", None) is not None and not Path(args.data).is_file():
            raise ValidationError(f"data file {args.data} does not exist")
        if args.out.exists() and not args.out.is_dir():
            raise ValidationError(f"--out {args.out} exists and is not a directory")
        args.out.mkdir(parents=True, exist_ok=True)
        run = _Run(args, cfg)
        COMMANDS[args.command](run)
        for path in run.written:
            print(f"wrote {path}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def run() -> None:
    sys.exit(main())
