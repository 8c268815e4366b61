"""Command-line runner: theory curves, simulation, analysis and reproduction.

Exit codes: 0 success, 1 configuration or I/O error, 2 analysis error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import AnalysisError, DatasetAnalysis, analyze_dataset, chi2_against_curve, visibilities
from .event_sim import ConfigError, run_experiment
from .feedback import error_rate
from .interference import CROSS_LABELS
from .config import RunConfig, load_config
from .stream_io import ParseError, meta_path, read_streams, write_streams

log = logging.getLogger("hom_feedback")

PANELS = ("a", "b", "c", "d")
CROSS_BIN = ("C1D2", "C2D1")
# 50 windows of 36 ns every 18 ns across +-459 ns
CHI2_CENTERS = -441e-9 + 18e-9 * np.arange(50)
CHI2_WIDTH = 36e-9


def _dump_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serialisable: {type(x)}")


def _write_table(path: Path, header, rows, fmt: str) -> Path:
    path = path.with_suffix("." + fmt)
    if fmt == "json":
        _dump_json(path, [dict(zip(header, r)) for r in rows])
    else:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    return path


def _outdir(cfg: RunConfig, args) -> Path:
    out = cfg.resolved_output_dir(getattr(args, "output_dir", None))
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------


def theory(cfg: RunConfig, out: Path, panel: str) -> dict:
    sc = cfg.scenario_obj(panel)
    curve = sc.curve(cfg.latency_ns * 1e-9, n_tau=cfg.n_tau)
    curve_path = curve.to_csv(out / f"theory_{panel}.csv")
    dist = sc.outcome_distribution()
    info = {
        "scenario": panel,
        "kind": sc.kind.value,
        "mu": sc.mu,
        "phi_rad": sc.phi,
        "theta_rad": sc.theta,
        "total_probability": curve.total_probability(),
        "cross_probability": curve.cross_probability(),
        "timebin_distribution": json.loads(dist.to_json()),
        "curve_file": curve_path.name,
    }
    if sc.is_feedback:
        info["latency_ns"] = cfg.latency_ns
        info["error_rate"] = error_rate(cfg.latency_ns / cfg.delta_t_ns)
    _dump_json(out / f"outcomes_{panel}.json", info)
    return info


def simulate(cfg: RunConfig, out: Path, panel: str, n_cycles: int) -> dict:
    exp = cfg.experiment(panel)
    res = run_experiment(exp, n_cycles)
    suffix = "csv" if cfg.stream_format == "csv" else "bin"
    meta = {
        "scenario": panel,
        "n_cycles": n_cycles,
        "period_ps": exp.period_ps,
        "resolution_ps": exp.resolution_ps,
        "delay_transmission": exp.delay_transmission,
        "mu": cfg.mu,
        "phi_rad": exp.scenario.phi,
        "delta_t_ns": cfg.delta_t_ns,
        "latency_ns": cfg.latency_ns,
        "seed": cfg.seed,
    }
    path = write_streams(out / f"timestamps_{panel}.{suffix}", res.streams, cfg.stream_format, meta)
    res.ground_truth.to_jsonl(out / f"ground_truth_{panel}.jsonl")
    k, n = res.ground_truth.violation_fraction()
    return {
        "scenario": panel,
        "timestamps": path.name,
        "clicks_C": len(res.stream_c),
        "clicks_D": len(res.stream_d),
        "pairs": int(res.ground_truth.is_pair.sum()),
        "violations": k,
        "feedback_trials": n,
        "ambiguous_cycles": res.ground_truth.ambiguous_cycles,
    }


def _analyze_one(cfg: RunConfig, out: Path, label: str, path: Path) -> tuple[DatasetAnalysis, dict]:
    sc, sd, meta = read_streams(path)
    if len(sc) + len(sd) == 0:
        raise AnalysisError(f"{path}: no detector clicks")
    res = analyze_dataset(sc, sd, int(meta["n_cycles"]), int(meta["period_ps"]), float(meta["delay_transmission"]))
    summary = res.summary()
    hist = res.histogram(cfg.hist_width_ns * 1e-9, cfg.hist_step_ns * 1e-9)
    rows = [
        (f"{c * 1e9:.6g}", int(n), f"{b:.6g}", f"{v * 1e-9:.6g}", f"{e * 1e-9:.6g}")
        for c, n, b, v, e in zip(hist.centers, hist.counts, hist.background, hist.values, hist.errors)
    ]
    _write_table(out / f"histogram_{label}", ("tau_ns", "counts", "background", "p_per_ns", "err_per_ns"), rows, cfg.output_format)
    mrows = [(k, f"{res.matrix[k].value:.6g}", f"{res.matrix[k].sigma:.6g}") for k in CROSS_LABELS]
    _write_table(out / f"matrix_{label}", ("label", "probability", "sigma"), mrows, cfg.output_format)
    panel = meta.get("scenario")
    if panel in PANELS:
        meta_cfg = cfg.with_overrides(scenario=panel, mu=meta.get("mu"), latency_ns=meta.get("latency_ns"),
                                      delta_t_ns=meta.get("delta_t_ns"))
        curve = meta_cfg.scenario_obj().curve(meta_cfg.latency_ns * 1e-9, n_tau=cfg.n_tau)
        h = res.histogram(CHI2_WIDTH, 18e-9, centers=CHI2_CENTERS)
        chi2, dof = chi2_against_curve(h, curve, res.n_experiments.value)
        summary["chi2_vs_theory"] = {"chi2": chi2, "dof": dof, "per_dof": chi2 / dof,
                                     "pass": chi2 / dof < cfg.chi2_per_dof_max}
    summary["scenario"] = panel
    summary["source"] = Path(path).name
    _dump_json(out / f"analysis_{label}.json", summary)
    return res, summary


def _visibility_table(results: dict) -> dict:
    """Visibilities from whichever panels are present (keyed a-d)."""
    agg = lambda r, labels: r.aggregate(labels)  # noqa: E731
    kw = {}
    if "a" in results and "b" in results:
        kw.update(n_par=agg(results["b"], CROSS_LABELS), n_perp=agg(results["a"], CROSS_LABELS),
                  n_par_cross_bin=agg(results["b"], CROSS_BIN), n_perp_cross_bin=agg(results["a"], CROSS_BIN))
    if "b" in results and "c" in results:
        kw.update(n_0=agg(results["b"], CROSS_BIN), n_pi=agg(results["c"], CROSS_BIN))
    if "d" in results:
        kw.update(n_d1c2=agg(results["d"], ("C2D1",)), n_c1d2=agg(results["d"], ("C1D2",)))
    if not kw:
        return {}
    return {k: {"value": v.value, "sigma": v.sigma} for k, v in visibilities(**kw).items()}


def analyze(cfg: RunConfig, out: Path, inputs) -> dict:
    results, summaries = {}, {}
    for item in inputs:
        label, _, path = item.rpartition("=")
        path = Path(path)
        if not label:
            mp = meta_path(path)
            label = json.loads(mp.read_text()).get("scenario", path.stem) if mp.exists() else path.stem
        res, summ = _analyze_one(cfg, out, label, path)
        summaries[label] = summ
        panel = summ.get("scenario")
        if panel in PANELS:
            results[panel] = res
    vis = _visibility_table(results)
    if vis:
        _dump_json(out / "visibilities.json", vis)
    return {"datasets": summaries, "visibilities": vis}


def sweep_error_rate(out: Path, start: float, stop: float, num: int) -> Path:
    grid = np.linspace(start, stop, num)
    vals = [error_rate(t) for t in grid]
    if np.any(np.diff(vals) < -1e-12):
        raise AnalysisError("error-rate sweep is not monotone")
    path = out / "error_rate.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t_tilde", "probability"))
        w.writerows((f"{t:.6g}", f"{p:.10g}") for t, p in zip(grid, vals))
    return path


def reproduce_all(cfg: RunConfig, out: Path, n_cycles: int) -> dict:
    summary = {"scenarios": {}}
    inputs = []
    for panel in PANELS:
        th = theory(cfg, out, panel)
        sim = simulate(cfg, out, panel, n_cycles)
        inputs.append(f"{panel}={out / sim['timestamps']}")
        summary["scenarios"][panel] = {"theory": th, "simulation": sim}
    res = analyze(cfg, out, inputs)
    for panel in PANELS:
        summary["scenarios"][panel]["analysis"] = res["datasets"][panel]
    summary["visibilities"] = res["visibilities"]
    summary["error_rate_expected"] = error_rate(cfg.latency_ns / cfg.delta_t_ns)
    _dump_json(out / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hom-feedback", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        sp.add_argument("--config", help="flat TOML config file")
        sp.add_argument("--output-dir", help="output directory (overrides HOMFB_OUTPUT_DIR and the config)")
        sp.add_argument("--format", dest="output_format", choices=("csv", "json"))
        if scenario:
            sp.add_argument("--scenario", choices=PANELS + ("all",))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--mu", type=float)

    sp = sub.add_parser("theory", help="analytic coincidence curves and time-bin outcome tables")
    common(sp)
    sp = sub.add_parser("simulate", help="simulate timestamp streams")
    common(sp)
    sp.add_argument("--n-cycles", type=int)
    sp.add_argument("--stream-format", choices=("csv", "binary"))
    sp = sub.add_parser("analyze", help="analyse timestamp files ([label=]path ...)")
    common(sp, scenario=False)
    sp.add_argument("inputs", nargs="+")
    sp = sub.add_parser("sweep-error-rate", help="feedback error rate versus dead-time fraction")
    common(sp, scenario=False)
    sp.add_argument("--start", type=float, default=0.0)
    sp.add_argument("--stop", type=float, default=1.0)
    sp.add_argument("--num", type=int, default=101)
    sp = sub.add_parser("reproduce-all", help="theory, simulation and analysis for all scenarios")
    common(sp, scenario=False)
    sp.add_argument("--n-cycles", type=int)
    return p


def _panels(cfg: RunConfig, args):
    choice = getattr(args, "scenario", None)
    if choice == "all":
        return PANELS
    return (choice or cfg.scenario,)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(
            seed=args.seed, mu=args.mu, output_format=args.output_format,
            n_cycles=getattr(args, "n_cycles", None), stream_format=getattr(args, "stream_format", None),
        )
        out = _outdir(cfg, args)
        if args.command == "theory":
            res = [theory(cfg, out, p) for p in _panels(cfg, args)]
        elif args.command == "simulate":
            res = [simulate(cfg, out, p, int(cfg.n_cycles)) for p in _panels(cfg, args)]
        elif args.command == "analyze":
            res = analyze(cfg, out, args.inputs)
        elif args.command == "sweep-error-rate":
            if args.num < 2 or args.start < 0 or args.stop < args.start:
                raise ConfigError("sweep needs 0 <= start <= stop and num >= 2")
            res = str(sweep_error_rate(out, args.start, args.stop, args.num))
        else:
            res = reproduce_all(cfg, out, int(cfg.n_cycles))
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (AnalysisError, ParseError, ArithmeticError, ValueError) as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return 2
    log.info("done: %s", args.command)
    if args.verbose:
        print(json.dumps(res, indent=2, sort_keys=True, default=_jsonable))
    return 0


def main():  # pragma: no cover
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
