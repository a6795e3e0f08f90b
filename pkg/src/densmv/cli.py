"""Command-line front end.

    densmv simulate --config run.cfg --seed 3 --out out/
    densmv converge --config converge.cfg --set converge.ns=8,16,32
    densmv assumptions --set drift.name=mean_field_unsaturated

Every run writes ``manifest.json``, ``results.csv``, ``summary.json`` and the
``densities/`` and ``plots/`` directories under ``--out``. Exit status is 0
when all configured thresholds pass, 1 on a threshold failure, 2 on a usage
or configuration error and 3 on a numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import analysis, plotting
from .config import ConfigError, RunConfig, load_config
from .drift_models import AssumptionProbeError, DriftModelError, ProbeConfig, make_drift, verify_assumptions
from .duhamel import DuhamelQuery, cross_validate
from .em_scheme import AssumptionError, SchemeConfig, SchemeError, TimeGrid, simulate
from .fokker_planck import CFLError, DomainTooSmallError, FPConfig, fp_measures, fp_solve
from .initial_conditions import make_initial
from .measures import TooLargeForExactError

log = logging.getLogger("densmv")

COMMANDS = ("simulate", "converge", "duhamel-check", "regularity", "fp-solve", "assumptions")
EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
NUMERICAL_ERRORS = (
    SchemeError,
    DriftModelError,
    AssumptionProbeError,
    DomainTooSmallError,
    analysis.ReferenceBudgetError,
    TooLargeForExactError,
    FloatingPointError,
)


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, out, command, cfg: RunConfig, seed, workers):
        self.out = Path(out)
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.workers = workers
        self.files: list[Path] = []
        self.summary: dict = {}
        self.checks: dict[str, bool] = {}
        for sub in ("densities", "plots"):
            (self.out / sub).mkdir(parents=True, exist_ok=True)

    @property
    def plots(self):
        return bool(self.cfg.get("output.plots", True))

    def add(self, *paths):
        self.files.extend(Path(p) for p in paths)

    def write_rows(self, name, rows: list[dict]):
        path = self.out / name
        cols = list(rows[0]) if rows else []
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in cols])
        self.add(path)

    def density_csv(self, name, x, series: dict):
        self.add(plotting.write_series_csv(self.out / "densities" / f"{name}.csv", x, series))

    def plot(self, stem, x, series, **kw):
        self.add(*plotting.line_plot(self.out / "plots", stem, x, series, png=self.plots, **kw))

    def check(self, name, ok):
        self.checks[name] = bool(ok)

    @property
    def passed(self):
        return all(self.checks.values())

    def finish(self, started, exit_code):
        path = self.out / "summary.json"
        ok = exit_code == EXIT_OK
        body = {"command": self.command, "seed": self.seed, "checks": self.checks, "passed": ok, **self.summary}
        path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
        self.add(path)
        manifest = {
            "command": self.command,
            "config": self.cfg.to_dict(),
            "seed": self.seed,
            "workers": self.workers,
            "versions": _versions(),
            "started": started.isoformat(),
            "wall_clock_s": round(time.perf_counter() - self._t0, 3),
            "outputs": sorted(str(p.relative_to(self.out)) for p in self.files if p.exists()),
            "passed": ok,
            "checks": self.checks,
            "exit_code": exit_code,
        }
        (self.out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "numba", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


# -- builders ---------------------------------------------------------------


def build_drift(cfg: RunConfig):
    params = cfg.section("drift")
    name = params.pop("name", "burgers_clamp")
    try:
        return make_drift(name, **params)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), "drift.name") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad drift parameters: {exc}", "drift") from None


def build_ic(cfg: RunConfig):
    params = cfg.section("ic")
    family = params.pop("family", "gaussian")
    try:
        return make_initial(family, **params)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), "ic.family") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad initial-law parameters: {exc}", "ic") from None


def build_scheme(cfg: RunConfig, seed, workers, **override) -> SchemeConfig:
    s = cfg.section("scheme")
    s.pop("verify", None)
    T = float(s.pop("T", 1.0))
    n = int(override.pop("n", s.pop("n", 32)))
    s.pop("n", None)
    if "record_times" in s:
        s["record_times"] = tuple(s["record_times"])
    s.update(override)
    try:
        return SchemeConfig(TimeGrid(n, T), seed=seed, workers=workers, **s)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad scheme settings: {exc}", "scheme") from None


def _xs(cfg, section="output", lo=-8.0, hi=8.0, num=401):
    return np.linspace(
        float(cfg.get(f"{section}.x_min", lo)), float(cfg.get(f"{section}.x_max", hi)), int(cfg.get(f"{section}.points", num))
    )


def _simulate(cfg, scfg, drift, ic):
    try:
        return simulate(scfg, drift, ic, verify=bool(cfg.get("scheme.verify", True)))
    except ValueError as exc:
        if isinstance(exc, AssumptionError):
            raise
        raise ConfigError(str(exc), "scheme") from None


# -- commands ---------------------------------------------------------------


def cmd_simulate(run: Run):
    """Run the particle scheme and dump clouds and densities."""
    cfg = run.cfg
    drift, ic = build_drift(cfg), build_ic(cfg)
    scfg = build_scheme(cfg, run.seed, run.workers)
    rec = _simulate(cfg, scfg, drift, ic)
    p = scfg.p
    rows = []
    for k in rec.recorded:
        mu = rec.clouds[k].measure()
        rows.append({"k": k, "t": k * scfg.grid.eps, "mean_x0": float(mu.mean()[0]), f"M_{p:g}": mu.moment(p), "M_2": mu.moment(2.0)})
    run.write_rows("results.csv", rows)
    run.summary["scheme"] = scfg.to_dict()
    run.summary["drift"] = drift.name
    if scfg.dim == 1:
        x = _xs(cfg)
        series = {f"t={k * scfg.grid.eps:.4g}": rec.densities[k](x) for k in rec.recorded}
        for k in rec.recorded:
            run.density_csv(f"density_k{k:04d}", x, {"density": rec.densities[k](x)})
        run.plot("densities", x, series, xlabel="x", ylabel="density")
        run.check("mass", all(abs(float(np.trapezoid(v, x)) - 1.0) < 1e-2 for v in series.values()))


def cmd_converge(run: Run):
    """Weighted-L1 convergence study in n with a log-log rate fit."""
    cfg = run.cfg
    drift, ic = build_drift(cfg), build_ic(cfg)
    c = cfg.section("converge")
    ns = c.get("ns", [8, 16, 32, 64])
    seeds = c.get("seeds", [run.seed + i for i in range(5)])
    try:
        res = analysis.convergence_study(
            drift,
            ic,
            ns,
            int(cfg.get("scheme.N", 200_000)),
            seeds,
            reference=c.get("reference", "fp_oracle"),
            T=float(cfg.get("scheme.T", 1.0)),
            p=float(cfg.get("scheme.p", 1.0)),
            fp_h=float(c.get("fp_h", 1 / 400)),
            times=c.get("times"),
            accelerator=cfg.get("scheme.accelerator", "auto"),
            workers=run.workers,
            progress=log.info,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "converge") from None
    rows = []
    for i, n in enumerate(res.ns):
        row = {"n": n, "error": res.errors[i], "half_width": res.half_widths[i], "mc_floor": res.mc_floor[i]}
        row.update({f"seed_{s}": res.per_seed[i][j] for j, s in enumerate(res.seeds)})
        rows.append(row)
    run.write_rows("results.csv", rows)
    slope_max = c.get("slope_max", -(ic.alpha / 2 - 0.15))
    hw_max = c.get("half_width_max", 0.1)
    run.summary.update(res.summary())
    run.summary["thresholds"] = {"slope_max": slope_max, "half_width_max": hw_max}
    run.check("slope", res.fit.slope <= slope_max)
    run.check("half_width", res.fit.half_width < hw_max)
    if c.get("require_monotone", True):
        run.check("monotone", res.monotone)
    x = res.grid_x
    keep = slice(None, None, max(1, x.size // 2000))
    dens = {f"n={n}": v[keep] for n, v in res.final_densities.items()}
    dens["reference"] = res.reference_final[keep]
    run.density_csv("final_time", x[keep], dens)
    run.add(*plotting.rate_plot(run.out / "plots", "rate", res.fit, png=run.plots))
    run.plot("final_densities", x[keep], dens, xlabel="x", ylabel="density")


def cmd_duhamel(run: Run):
    """Cross-check the mixture density against the Duhamel evaluation."""
    cfg = run.cfg
    drift, ic = build_drift(cfg), build_ic(cfg)
    scfg = build_scheme(cfg, run.seed, run.workers, keep_clouds="all")
    d = cfg.section("duhamel")
    t = float(d.get("t", scfg.grid.T / 2))
    rec = _simulate(cfg, scfg, drift, ic)
    x = _xs(cfg, "duhamel", num=201)
    try:
        q = DuhamelQuery(t, x, rec, nodes=int(d.get("nodes", 32)), seed=run.seed)
    except ValueError as exc:
        raise ConfigError(str(exc), "duhamel") from None
    cc = cross_validate(q, drift, ic)
    run.write_rows("results.csv", cc.to_rows())
    ratio_max, tol = d.get("ratio_max", 3.0), d.get("integral_tol", 0.01)
    run.summary.update(
        {"t": t, "max_ratio": cc.max_ratio, "duhamel_integral": cc.duhamel_integral, "mixture_integral": cc.mixture_integral,
         "thresholds": {"ratio_max": ratio_max, "integral_tol": tol}}
    )
    run.check("ratio", cc.max_ratio <= ratio_max)
    if scfg.dim == 1:
        run.check("duhamel_integral", abs(cc.duhamel_integral - 1) <= tol)
        run.check("mixture_integral", abs(cc.mixture_integral - 1) <= tol)
        xs = cc.x[:, 0]
        series = {"duhamel": cc.duhamel, "mixture": cc.mixture, "combined_error": cc.combined_error}
        run.density_csv(f"duhamel_t{t:g}", xs, series)
        run.plot("duhamel_vs_mixture", xs, {"duhamel": cc.duhamel, "mixture": cc.mixture}, xlabel="x", ylabel="density")


def cmd_regularity(run: Run):
    """Hoelder, Wasserstein-increment and tail diagnostics over several n."""
    cfg = run.cfg
    drift, ic = build_drift(cfg), build_ic(cfg)
    r = cfg.section("regularity")
    T = float(cfg.get("scheme.T", 1.0))
    ns = r.get("ns", [int(cfg.get("scheme.n", 32))])
    alpha = float(r.get("alpha", ic.alpha))
    modes = r.get("modes", ["sup_norm", "weighted"] + (["weighted_sqrt"] if ic.sqrt_weighted_integral is not None else []))
    times = tuple([0.0] + analysis.dyadic_times(T))
    rows, per_n = [], {}
    for n in ns:
        scfg = build_scheme(cfg, run.seed, run.workers, n=n, record_times=times)
        rec = _simulate(cfg, scfg, drift, ic)
        entry = {}
        for mode in modes:
            try:
                hd = analysis.holder_time_diagnostic(rec, alpha, mode)
            except ValueError as exc:
                raise ConfigError(str(exc), "regularity.modes") from None
            entry[f"holder_{mode}"] = {"max_ratio": hd.max_ratio, "slope": None if hd.fit is None else hd.fit.slope}
            rows += [{"n": n, "diagnostic": f"holder_{mode}", "s": q["s"], "t": q["t"], "value": q["increment"], "ratio": q["ratio"]} for q in hd.pairs]
        wd = analysis.wasserstein_increment_diagnostic(rec, max_points=int(r.get("max_points", 600)), seed=run.seed)
        entry["wasserstein"] = wd.fit.to_dict()
        rows += [{"n": n, "diagnostic": "wasserstein", "s": q["s"], "t": q["t"], "value": q["W"], "ratio": float("nan")} for q in wd.pairs]
        tf = analysis.tail_scan(rec, scfg.p, r.get("radii"))
        entry["tail"] = tf.to_dict()
        rows += [{"n": n, "diagnostic": "tail", "s": float("nan"), "t": R, "value": v, "ratio": float("nan")} for R, v in zip(tf.x, tf.errors)]
        per_n[n] = entry
        if scfg.dim == 1:
            x = _xs(cfg)
            run.density_csv(f"regularity_n{n}", x, {f"t={t:g}": rec.density_at(t)(x) for t in times})
    run.write_rows("results.csv", rows)
    lo, hi = r.get("w_slope_min", 0.4), r.get("w_slope_max", 0.6)
    spread_max, tail_max = r.get("holder_spread_max", 2.0), r.get("tail_slope_max", -0.8)
    ratios = [e["holder_sup_norm"]["max_ratio"] for e in per_n.values() if "holder_sup_norm" in e]
    spread = max(ratios) / min(ratios) if ratios else float("nan")
    run.summary.update(
        {"per_n": per_n, "holder_sup_norm_spread": spread,
         "thresholds": {"w_slope_min": lo, "w_slope_max": hi, "holder_spread_max": spread_max, "tail_slope_max": tail_max}}
    )
    for n, e in per_n.items():
        run.check(f"wasserstein_slope_n{n}", lo <= e["wasserstein"]["slope"] <= hi)
        run.check(f"tail_slope_n{n}", e["tail"]["slope"] <= tail_max)
    if ratios:
        run.check("holder_spread", spread <= spread_max)
    ns_f = [float(n) for n in per_n]
    run.plot("wasserstein_slope", ns_f, {"slope": [e["wasserstein"]["slope"] for e in per_n.values()]}, xlabel="n", ylabel="slope")
    if ratios:
        run.plot("holder_sup_norm_ratio", ns_f, {"max_ratio": ratios}, xlabel="n", ylabel="max ratio")


def cmd_fp(run: Run):
    """Solve the one-dimensional Fokker-Planck reference."""
    cfg = run.cfg
    drift, ic = build_drift(cfg), build_ic(cfg)
    f = cfg.section("fp")
    T = float(cfg.get("scheme.T", 1.0))
    kw = {k: f[k] for k in ("cfl", "margin", "mode") if k in f}
    try:
        fcfg = FPConfig.auto(drift, ic, T, h=float(f.get("h", 1 / 400)), **kw)
        if "dt" in f:
            fcfg = FPConfig(fcfg.L, fcfg.h, float(f["dt"]), drift, ic, mode=fcfg.mode)
    except CFLError as exc:
        raise ConfigError(str(exc), "fp.dt") from None
    except ValueError as exc:
        raise ConfigError(str(exc), "fp") from None
    times = f.get("save_times", analysis.dyadic_times(T))
    traj = fp_solve(fcfg, T, save_times=times)
    path = run.out / "densities" / "fp_trajectory.csv"
    traj.to_csv(path)
    run.add(path)
    radii = (1.0, 2.0, 4.0, 8.0)
    rows = []
    for i, t in enumerate(traj.times):
        m = fp_measures(traj, float(t), radii=radii)
        row = {"t": float(t), "mass": float(traj.mass[i])}
        row.update({f"M_{q:g}": v for q, v in m.moments.items()})
        row.update({f"tail_R{R:g}": v for R, v in m.tails.items()})
        rows.append(row)
    run.write_rows("results.csv", rows)
    drift_mass = float(np.max(np.abs(np.asarray(traj.mass) - 1.0)))
    run.summary.update({"fp": fcfg.to_dict(), "max_mass_drift": drift_mass, "clipped_mass": traj.clipped_mass, "boundary_max": traj.boundary_max})
    run.check("mass", drift_mass <= 1e-8 * max(T, 1.0))
    step = max(1, traj.x.size // 2000)
    run.plot("fp_densities", traj.x[::step], {f"t={t:.4g}": traj.density[i][::step] for i, t in enumerate(traj.times)}, xlabel="x", ylabel="density")


def cmd_assumptions(run: Run):
    """Probe a drift model against its declared constants."""
    cfg = run.cfg
    drift = build_drift(cfg)
    a = cfg.section("assumptions")
    try:
        probes = ProbeConfig(**a)
    except ValueError as exc:
        raise ConfigError(str(exc), "assumptions.n_probes") from None
    rep = verify_assumptions(drift, probes, seed=run.seed)
    d = rep.to_dict()
    run.write_rows("results.csv", [{"drift": drift.name, **d}])
    run.summary.update({"drift": drift.name, "report": d, "declared": {"C": drift.bound_C, "lip_density": drift.lip_density, "lip_measure": drift.lip_measure}})
    run.check("A1", rep.pass_A1)
    run.check("A3_density", rep.pass_A3_density)
    run.check("A3_measure", rep.pass_A3_measure)


HANDLERS = {
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "duhamel-check": cmd_duhamel,
    "regularity": cmd_regularity,
    "fp-solve": cmd_fp,
    "assumptions": cmd_assumptions,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file")
    common.add_argument("--seed", type=int, help="master seed (default: config 'seed' or 0)")
    common.add_argument("--workers", type=int, help="worker threads; results do not depend on it")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VAL", help="override a config key (repeatable)")
    common.add_argument("--out", default="out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="densmv", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HANDLERS[name].__doc__)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        if cfg.get("command") not in (None, args.command):
            raise ConfigError(f"config is for {cfg.get('command')!r}, not {args.command!r}", "command")
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if seed < 0:
            raise ConfigError("seed must be nonnegative", "seed")
        workers = args.workers if args.workers is not None else int(cfg.get("workers", 1))
        if workers < 1:
            raise ConfigError("workers must be >= 1", "workers")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    started = datetime.now(timezone.utc)
    r = Run(args.out, args.command, cfg, seed, workers)
    r._t0 = time.perf_counter()
    try:
        HANDLERS[args.command](r)
        code = EXIT_OK if r.passed else EXIT_THRESHOLD
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        r.summary["error"] = str(exc)
        code = EXIT_CONFIG
    except AssumptionError as exc:
        print(f"drift violates its declared constants: {exc}", file=sys.stderr)
        r.summary["assumptions"] = exc.report.to_dict()
        r.check("assumptions", False)
        code = EXIT_THRESHOLD
    except NUMERICAL_ERRORS as exc:
        print(f"numerical abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        r.summary["error"] = f"{type(exc).__name__}: {exc}"
        if isinstance(exc, analysis.ReferenceBudgetError):
            r.summary["budget"] = exc.budget
        code = EXIT_NUMERICAL
    r.finish(started, code)
    status = "PASS" if code == EXIT_OK else f"FAIL (exit {code})"
    print(f"{args.command}: {status} -> {r.out}")
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
