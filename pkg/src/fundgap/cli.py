"""Command-line entry point.

Exit codes
----------
0  success
2  input or configuration does not validate (row-level report on stderr)
3  nothing to estimate (no renewal pairs, linked labs or estimable cohorts)
4  report requested on an incomplete artifact directory
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from . import effects, io
from .dates import FEDERAL
from .grants import (DEFAULT_LONG_DAYS, DEFAULT_SHORT_DAYS, budget_timing_summary, classify_interruption,
                     pair_renewals, pairs_frame, periods_frame, reconstruct_all)
from .pipeline import (Inputs, MissingArtifacts, NoCohortsError, RunConfig, estimates_frame, report, run_grants,
                       run_panel, run_pipeline, run_roster, run_stack)
from .did.estimator import estimate, raw_means
from .outcomes import SECTOR_COLUMNS
from .synth.dgp import DgpConfig, InfeasibleConfig, load_config, simulate

EXIT_OK, EXIT_SCHEMA, EXIT_NO_COHORTS, EXIT_MISSING = 0, 2, 3, 4

logger = logging.getLogger("fundgap")


def _parse_subsample(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"subsample filter {item!r} must look like key=value")
        vals = [v for v in val.split(",") if v]
        if key == "fully_attached":
            vals = [int(v) for v in vals]
        out[key] = vals[0] if len(vals) == 1 else vals
    return out


def _config_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", type=Path, help="JSON with configuration fields (an estimates.json also works)")
    g.add_argument("--short-days", type=int)
    g.add_argument("--long-days", type=int)
    g.add_argument("--clean-window", type=int)
    g.add_argument("--event-window", type=int, nargs=2, metavar=("LO", "HI"))
    g.add_argument("--bootstrap-reps", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--cluster-level", choices=("pair_id", "renewal_id"))
    g.add_argument("--subsample", nargs="*", metavar="KEY=VALUE")
    g.add_argument("--covariates", nargs="*")
    g.add_argument("--outcome")
    g.add_argument("--control-group", choices=("continuous", "interrupted_multiple"))
    g.add_argument("--min-cell", type=int)
    g.add_argument("--offset-stride", type=int)
    g.add_argument("--twfe", action="store_true", default=None, help="also fit the two-way fixed-effects model")
    g.add_argument("--threads", type=int, help="bootstrap worker threads (default: $FUNDGAP_THREADS or 1)")


def resolve_config(args) -> RunConfig:
    base = {}
    if getattr(args, "config", None):
        base = dict(RunConfig.from_dict(json.loads(args.config.read_text(encoding="utf-8"))).to_dict())
    flags = {
        "short_days": args.short_days, "long_days": args.long_days, "clean_window": args.clean_window,
        "event_window": args.event_window, "bootstrap_reps": args.bootstrap_reps, "seed": args.seed,
        "cluster_level": args.cluster_level, "covariates": args.covariates, "outcome": args.outcome,
        "control_group": args.control_group, "min_cell": args.min_cell, "offset_stride": args.offset_stride,
        "twfe": args.twfe,
    }
    if args.subsample is not None:
        flags["subsample"] = _parse_subsample(args.subsample)
    base.update({k: v for k, v in flags.items() if v is not None})
    return RunConfig(**base)


def _inputs(args) -> Inputs:
    inp = Inputs.from_dir(args.input_dir) if args.input_dir else None
    for key in ("exporter", "passage", "payments", "crosswalk", "demographics", "person_years", "universities"):
        val = getattr(args, key, None)
        if val is not None:
            if inp is None:
                inp = Inputs(None, None, None, None)
            setattr(inp, key, val)
    if inp is None:
        raise ValueError("give --input-dir or the individual input files")
    return inp


def _input_args(p: argparse.ArgumentParser, which=("exporter", "passage", "payments", "crosswalk", "demographics",
                                                   "person_years", "universities")) -> None:
    p.add_argument("--input-dir", type=Path, help="directory holding the input CSVs under their standard names")
    for key in which:
        p.add_argument("--" + key.replace("_", "-"), type=Path)


# --- subcommands -------------------------------------------------------------------


def cmd_reconstruct(args) -> int:
    short = args.short_days or DEFAULT_SHORT_DAYS
    long_ = args.long_days or DEFAULT_LONG_DAYS
    records = io.read_exporter(args.exporter)
    recon = reconstruct_all(records)
    pairing = pair_renewals(recon, FEDERAL, short_days=short, long_days=long_)
    out = Path(args.out)
    stamp = {"config_hash": io.config_hash({"short_days": short, "long_days": long_})}
    io.write_csv(periods_frame(recon.all_periods()), out / "project_periods.csv", stamp)
    io.write_csv(pairs_frame(pairing.pairs), out / "renewal_pairs.csv", stamp)
    if args.passage:
        bt = budget_timing_summary(records, io.read_passage_dates(args.passage), FEDERAL)
        io.write_csv(bt, out / "budget_timing.csv", stamp)
    io.write_json({**stamp, "n_records": len(records), "n_pairs": len(pairing.pairs),
                   "malformed": recon.malformed, "dropped": dict(pairing.dropped)}, out / "diagnostics.json")
    print(f"{len(pairing.pairs)} renewal pairs written to {out}")
    return EXIT_OK


def cmd_classify(args) -> int:
    df = pd.read_csv(args.pairs, dtype={"pair_id": str, "core_project_num": str})
    if "gap_days" not in df.columns:
        raise io.SchemaError([io.RowError(Path(args.pairs).name, 1, "gap_days", "missing column")])
    short = args.short_days or DEFAULT_SHORT_DAYS
    long_ = args.long_days or DEFAULT_LONG_DAYS
    status = [classify_interruption(int(g), short, long_) for g in df["gap_days"]]
    df["status"] = [s.value for s in status]
    df["treated"] = [s.interrupted for s in status]
    stamp = {"config_hash": io.config_hash({"short_days": short, "long_days": long_})}
    io.write_csv(df.drop(columns=["config_hash", "seed"], errors="ignore"), Path(args.out), stamp)
    print(df["status"].value_counts().sort_index().to_string())
    return EXIT_OK


def cmd_build_panel(args) -> int:
    cfg = resolve_config(args)
    inputs = _inputs(args)
    grants = run_grants(cfg, inputs)
    labs, roster, _ = run_roster(cfg, inputs, grants)
    _, panel = run_panel(cfg, inputs, roster)
    out = Path(args.out)
    stamp = {"config_hash": cfg.hash, "seed": cfg.seed}
    io.write_csv(roster, out / "roster.csv", stamp)
    io.write_csv(panel, out / "panel.csv", stamp)
    print(f"roster {len(roster)} rows, panel {len(panel)} rows written to {out}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = resolve_config(args)
    roster = io.read_roster(args.roster)
    panel = io.read_panel(args.panel)
    stacked = run_stack(cfg, roster, panel)
    est = estimate(stacked, cfg.covariates, min_cell=cfg.min_cell, bootstrap_reps=cfg.bootstrap_reps,
                   seed=cfg.seed, cluster=cfg.cluster_level, threads=args.threads)
    out = Path(args.out)
    stamp = {"config_hash": cfg.hash, "seed": cfg.seed}
    d = est.to_dict()
    o = est.overall
    io.write_json({"config": cfg.to_dict(), **stamp, "att_gt": d["att_gt"], "event_study": d["event_study"],
                   "overall": {"coef": o.coef, "se": o.se, "ci": [o.ci_lo, o.ci_hi]},
                   "bootstrap_reps": d["bootstrap_reps"], "cluster_level": d["cluster_level"],
                   "diagnostics": d["diagnostics"]}, out / "estimates.json")
    io.write_csv(estimates_frame(est), out / "estimates.csv", stamp)
    extra = [c for c in SECTOR_COLUMNS if c in stacked.frame.columns and c != cfg.outcome]
    rm = raw_means(stacked, ["y", *extra])
    rm["outcome"] = rm["outcome"].replace({"y": cfg.outcome})
    io.write_csv(rm, out / "rawmeans.csv", stamp)
    print(f"overall ATT {o.coef:.6g} (se {o.se:.3g})")
    return EXIT_OK


def cmd_effects(args) -> int:
    payload = json.loads(Path(args.input).read_text(encoding="utf-8"))
    res = effects.compute_effects(payload)
    if args.out:
        io.write_json(res, Path(args.out))
    else:
        print(json.dumps(io._jsonable(res), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config) if args.config else DgpConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    sim = simulate(cfg)
    sim.write(args.out)
    print(f"simulated {sim.latent['person_id'].nunique()} persons into {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    res = report(args.artifacts, args.out)
    sys.stdout.write(res["text"])
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    res = run_pipeline(cfg, _inputs(args), args.out, threads=args.threads)
    o = res.estimates.overall
    print(f"overall ATT {o.coef:.6g} (se {o.se:.3g}); artifacts in {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fundgap", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("reconstruct", help="project periods and renewal pairs from ExPORTER rows")
    s.add_argument("--exporter", type=Path, required=True)
    s.add_argument("--passage", type=Path, help="budget passage dates (FY, DATE) for the timing summary")
    s.add_argument("--short-days", type=int)
    s.add_argument("--long-days", type=int)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("classify", help="reclassify renewal pairs under other thresholds")
    s.add_argument("--pairs", type=Path, required=True)
    s.add_argument("--short-days", type=int)
    s.add_argument("--long-days", type=int)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("build-panel", help="roster and person-by-cohort-by-year panel")
    _input_args(s)
    _config_args(s)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_build_panel)

    s = sub.add_parser("estimate", help="stacked DiD estimates from a roster and panel")
    s.add_argument("--roster", type=Path, required=True)
    s.add_argument("--panel", type=Path, required=True)
    _config_args(s)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("effects", help="closed-form effect calculations from a JSON of inputs")
    s.add_argument("--input", type=Path, required=True)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_effects)

    s = sub.add_parser("simulate", help="write a synthetic dataset with known effects")
    s.add_argument("--config", type=Path)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("report", help="summaries and plot data from a run directory")
    s.add_argument("--artifacts", type=Path, required=True)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("run", help="the whole pipeline")
    _input_args(s)
    _config_args(s)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except io.SchemaError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_SCHEMA
    except (InfeasibleConfig, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except NoCohortsError as exc:
        print(f"nothing to estimate: {exc}", file=sys.stderr)
        return EXIT_NO_COHORTS
    except MissingArtifacts as exc:
        for m in exc.missing:
            print(f"missing: {m}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
