"""Command-line front end: ``roma fit``, ``roma effects`` and ``roma simulate``.

Each command writes ``<out>.jsonl`` (structured records) and ``<out>.csv``
(a flat table for plotting).  Exit codes: 0 success, 2 configuration error,
3 data error, 4 numerical failure.  ``ROMA_THREADS`` sets the number of worker
processes used by ``simulate``.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import replace
from typing import Optional

import numpy as np
from scipy.optimize import isotonic_regression

from . import __version__
from .errors import ConfigError, NumericalError, RomaError
from .estimator import (
    MediationFit,
    counterfactual_mean,
    estimate_nde,
    estimate_nie,
    estimate_te,
    fit,
    with_regularization,
)
from .inference import infer
from .io import (
    EFFECTS_SCHEMA,
    FIT_SCHEMA,
    REPORT_SCHEMA,
    DatasetFile,
    RunConfig,
    load_config,
    read_dataset,
    write_csv,
    write_jsonl,
)
from .object_spaces import ObjectPoint
from .simulation import SETTINGS, CampaignConfig, ScenarioSpec, run_campaign
from .tuning import Selection, select

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (NumericalError, ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERICAL
    return EXIT_DATA


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------


def _tune_and_fit(cfg: RunConfig, data: DatasetFile) -> tuple[MediationFit, Optional[Selection]]:
    kx, km = cfg.kernels["exposure"], cfg.kernels["mediator"]
    if cfg.eps is not None:
        return fit(data.exposure, data.mediator, data.outcome, kx, km, cfg.eps, cfg.eps_tilde), None
    sel = select(
        data.exposure, data.mediator, data.outcome, kx, km,
        bandwidths_x=cfg.bandwidths_x, bandwidths_m=cfg.bandwidths_m,
        eps_grid=cfg.eps_grid, eps_tilde_grid=cfg.eps_tilde_grid,
        strategy=cfg.strategy,
    )
    return fit(data.exposure, data.mediator, data.outcome, **sel.fit_kwargs()), sel


def _selection_record(schema: str, cfg: RunConfig, f: MediationFit, sel: Optional[Selection]) -> dict:
    return {
        "schema": schema,
        "record": "selection",
        "tuned": sel is not None,
        "strategy": cfg.strategy if sel is not None else None,
        "kernel_x": f.kernel_x.to_dict(),
        "kernel_x_phi": f.kernel_x_phi.to_dict(),
        "kernel_m": f.kernel_m.to_dict(),
        "eps": f.eps,
        "eps_tilde": f.eps_tilde,
        "n": f.n,
        "d": f.d,
        "seed": cfg.seed,
    }


def _gcv_rows(sel: Optional[Selection]):
    if sel is None:
        return
    for model, trace in (("phi", sel.trace_phi), ("outcome", sel.trace_outcome)):
        for i, (eps, bx, bm) in enumerate(trace.grid):
            yield model, eps, bx, bm, float(trace.scores[i]), i == trace.argmin


def cmd_fit(cfg: RunConfig, data: DatasetFile, out) -> list:
    """Tune and fit; write the selection, diagnostics and GCV traces."""
    f, sel = _tune_and_fit(cfg, data)
    recs = [_selection_record(FIT_SCHEMA, cfg, f, sel)]
    recs.append({
        "schema": FIT_SCHEMA,
        "record": "diagnostics",
        "df_mediator_model": f.sys_x.effective_df(),
        "df_outcome_model": f.sys_z.effective_df(),
        "gcv_phi": None if sel is None else sel.trace_phi.best_score,
        "gcv_outcome": None if sel is None else sel.trace_outcome.best_score,
    })
    rows = list(_gcv_rows(sel))
    for model, eps, bx, bm, score, chosen in rows:
        recs.append({"schema": FIT_SCHEMA, "record": "gcv", "model": model, "eps": eps,
                     "bandwidth_x": bx, "bandwidth_m": bm, "score": score, "selected": chosen})
    write_jsonl(f"{out}.jsonl", recs)
    write_csv(f"{out}.csv", ["model", "eps", "bandwidth_x", "bandwidth_m", "score", "selected"],
              [[m, e, bx, bm, s, int(c)] for m, e, bx, bm, s, c in rows])
    return recs


# --------------------------------------------------------------------------
# Effects
# --------------------------------------------------------------------------


def _exposure_value(v):
    if isinstance(v, dict):
        return ObjectPoint.from_dict(v)
    return np.asarray(v, dtype=float)


def monotone_curve(values, weights=None) -> np.ndarray:
    """Weighted L2 projection onto nondecreasing sequences."""
    return isotonic_regression(np.asarray(values, dtype=float), weights=weights).x


def cmd_effects(cfg: RunConfig, data: DatasetFile, out) -> list:
    """Effects, directional CIs, global tests and counterfactual mean curves."""
    f, sel = _tune_and_fit(cfg, data)
    x, xs = (_exposure_value(v) for v in cfg.contrast)
    fi = f if cfg.inference_shrink == 1.0 else with_regularization(
        f, f.eps * cfg.inference_shrink, f.eps_tilde * cfg.inference_shrink)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = infer(fi, x, xs, q=cfg.q, l=cfg.l, v=cfg.directions)
    meta = f.grid_meta
    levels = None if meta is None else meta.levels
    scale = np.ones(f.d) if meta is None else 1.0 / np.sqrt(meta.weights)
    on_grid = cfg.directions == "grid"
    recs = [_selection_record(EFFECTS_SCHEMA, cfg, f, sel)]
    recs[0]["inference_shrink"] = cfg.inference_shrink
    rows = []
    for kind, est in (("NDE", estimate_nde), ("NIE", estimate_nie), ("TE", estimate_te)):
        eff = est(f, x, xs)
        rec = {"schema": EFFECTS_SCHEMA, "record": "effect", "effect": kind, "contrast": list(cfg.contrast),
               "levels": levels, "coords": eff.coords, "curve": eff.value.curve()}
        if kind in res:
            r = res[kind]
            rec.update({
                "q": r.ci.q, "directions": "grid" if on_grid else r.ci.directions,
                "ci_center": r.ci.center, "ci_halfwidth": r.ci.halfwidth,
                "statistic": r.statistic, "p_value": r.p_value, "spectrum": r.spectrum,
                "cdf_method": r.cdf_method,
                "theta": {k: list(v) if isinstance(v, tuple) else v for k, v in r.theta.items()},
            })
        recs.append(rec)
        for j in range(f.d if on_grid or kind not in res else len(res[kind].ci.center)):
            level = None if levels is None or not on_grid else float(levels[j])
            if kind in res:
                ci = res[kind].ci
                s = scale[j] if on_grid else 1.0
                c, h = ci.center[j] * s, ci.halfwidth[j] * s
                est_v = eff.value.curve()[j] if on_grid else c
                rows.append([kind, j, level, est_v, c - h, c + h])
            else:
                rows.append([kind, j, level, eff.value.curve()[j], None, None])
    for a, b in ((x, xs), (xs, xs), (x, x)):
        cm = counterfactual_mean(f, a, b)
        raw = cm.curve()
        rec = {"schema": EFFECTS_SCHEMA, "record": "counterfactual",
               "exposure": _plain_point(a), "mediator_exposure": _plain_point(b),
               "levels": levels, "curve_raw": raw}
        if meta is not None:
            rec["curve"] = monotone_curve(raw, meta.weights)
        recs.append(rec)
    for w in caught:
        recs.append({"schema": EFFECTS_SCHEMA, "record": "warning", "category": w.category.__name__,
                     "message": str(w.message)})
    write_jsonl(f"{out}.jsonl", recs)
    write_csv(f"{out}.csv", ["effect", "index", "level", "estimate", "lower", "upper"], rows)
    return recs


def _plain_point(v):
    if isinstance(v, ObjectPoint):
        return v.to_dict()
    return np.asarray(v).tolist()


# --------------------------------------------------------------------------
# Simulation
# --------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> list:
    spec = ScenarioSpec(args.scenario, n=args.n, m=args.m, seed=args.seed, kernel_mode=args.mode,
                        direct_scale=args.direct_scale, indirect_scale=args.indirect_scale)
    cfg = CampaignConfig(contrast=(args.x, args.x_star), q=args.q, l=args.l, inference=not args.no_inference)
    if args.eps is not None:
        cfg = replace(cfg, tune=False, eps=args.eps, eps_tilde=args.eps_tilde,
                      bandwidth_x=args.bandwidth_x, bandwidth_m=args.bandwidth_m)
    report = run_campaign(spec, args.reps, cfg, oracle_size=args.oracle_size)
    rec = {"schema": REPORT_SCHEMA, "record": "report", **report.to_dict()}
    recs = [rec]
    for i, r in enumerate(report.records):
        recs.append({"schema": REPORT_SCHEMA, "record": "replicate", "index": i, **r})
    write_jsonl(f"{args.out}.jsonl", recs)
    rows = []
    for k in ("TE", "NDE", "NIE"):
        mean, se = report.mse[k]
        rows.append([spec.id, k, mean, se, report.coverage.get(k), report.rejection.get(k)])
    write_csv(f"{args.out}.csv", ["setting", "effect", "mse", "mse_se", "coverage", "rejection"], rows)
    return recs


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roma", description="Kernel mediation analysis for random objects.")
    p.add_argument("--version", action="version", version=f"roma {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("fit", "tune and fit, write hyperparameters and GCV traces"),
                           ("effects", "estimate effects with confidence intervals and tests")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--data", help="CSV dataset (overrides the config's 'data')")
        s.add_argument("--out", required=True, help="output prefix for .jsonl and .csv")
    s = sub.add_parser("simulate", help="run a simulation campaign")
    s.add_argument("--scenario", required=True, choices=SETTINGS)
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--m", type=int, default=100)
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=("linear", "nonlinear"))
    s.add_argument("--x", type=float, default=1.0)
    s.add_argument("--x-star", type=float, default=0.0)
    s.add_argument("--q", type=float, default=0.05)
    s.add_argument("--l", type=int)
    s.add_argument("--direct-scale", type=float, default=1.0)
    s.add_argument("--indirect-scale", type=float, default=1.0)
    s.add_argument("--oracle-size", type=int, default=100_000)
    s.add_argument("--eps", type=float, help="fixed eps (skips tuning; needs --eps-tilde)")
    s.add_argument("--eps-tilde", type=float)
    s.add_argument("--bandwidth-x", type=float)
    s.add_argument("--bandwidth-m", type=float)
    s.add_argument("--no-inference", action="store_true")
    s.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            if (args.eps is None) != (args.eps_tilde is None):
                raise ConfigError("give both --eps and --eps-tilde, or neither")
            cmd_simulate(args)
        else:
            cfg = load_config(args.config)
            path = args.data or cfg.data
            if path is None:
                raise ConfigError("no dataset: pass --data or set 'data' in the config")
            data = read_dataset(path, cfg)
            (cmd_fit if args.command == "fit" else cmd_effects)(cfg, data, args.out)
    except (RomaError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"roma: error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
