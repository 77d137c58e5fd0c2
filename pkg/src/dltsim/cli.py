"""Command-line interface.

Subcommands:
  simulate       run the operating-characteristics study from a config file
  fit            fit one model to a patient CSV and print dose assessments
  prior-summary  prior dose-DLT quantile table (and figure) per model
  report         re-render figures from an existing simulate output directory

Exit codes: 0 ok, 2 config error, 3 data error, 4 no admissible dose
(fit only).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_config
from .likelihood import Dataset
from .mcmc import fit_with_retry
from .model import PatientRecord
from .policy import EscalationState, assess_doses, select_next_dose
from .targets import make_target

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_STOP_TOXICITY = 4


class DataError(ValueError):
    """Input data file failed to parse or validate."""


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dltsim",
        description="Multi-cycle time-to-DLT dose-escalation models and trial simulation",
    )
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("simulate", help="run the simulation study from a config file")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (beats DLTSIM_WORKERS and the config)")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("fit", help="fit one model to a patient CSV")
    p.add_argument("--model", required=True, choices=("B1", "B3", "TCO", "TCU"))
    p.add_argument("--data", required=True, help="CSV with id,dose_mg,u_cycles,delta")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--seed", type=int, default=0, help="sampler seed")
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("prior-summary", help="prior dose-DLT quantiles per model")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", default=None, help="output directory (default: stdout CSV only)")
    p.add_argument("--draws", type=int, default=200_000, help="prior Monte Carlo draws")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(handler=_cmd_prior_summary)

    p = sub.add_parser("report", help="re-render figures from simulate outputs")
    p.add_argument("--dir", required=True, help="directory holding simulate CSVs")
    p.set_defaults(handler=_cmd_report)
    return parser


def _resolve_workers(args, config_parallelism: int) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("DLTSIM_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"DLTSIM_WORKERS={env!r} is not an integer") from exc
    return config_parallelism


def _cmd_simulate(args) -> int:
    from .experiment import ExperimentPlan, run_experiment
    from .report import (
        render_experiment_figures,
        write_aggregate_text,
        write_figure_csvs,
        write_replications_csv,
        write_truth_csv,
    )

    cfg = load_config(args.config)
    plan = cfg.plan
    workers = _resolve_workers(args, plan.parallelism)
    plan = ExperimentPlan(
        cells=plan.cells,
        replications=plan.replications,
        master_seed=plan.master_seed,
        parallelism=workers,
    )
    outdir = Path(args.out)
    records, report = run_experiment(cfg.setup, plan)
    write_replications_csv(records, outdir / "replications.csv")
    write_figure_csvs(report, outdir)
    write_truth_csv(cfg.setup.toxicity_scenarios, cfg.setup.grid, outdir / "truth.csv")
    write_aggregate_text(report, outdir / "aggregate.txt")
    if not args.no_figures:
        render_experiment_figures(report, outdir / "figures")
    print(f"wrote {len(records)} replications across {len(plan.cells)} cells to {outdir}")
    return EXIT_OK


def _read_patient_csv(path: str, n_cycles: int) -> tuple[PatientRecord, ...]:
    expected = ["id", "dose_mg", "u_cycles", "delta"]
    records = []
    errors = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read data file: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return ()
        if [c.strip() for c in reader.fieldnames] != expected:
            raise DataError(
                f"{path}: expected header {','.join(expected)}, "
                f"got {','.join(reader.fieldnames)}"
            )
        for line_no, row in enumerate(reader, start=2):
            try:
                rec = PatientRecord(
                    id=row["id"],
                    dose=float(row["dose_mg"]),
                    u_cycles=int(row["u_cycles"]),
                    delta=int(row["delta"]),
                )
                if rec.u_cycles > n_cycles:
                    raise ValueError(
                        f"u_cycles {rec.u_cycles} exceeds the {n_cycles}-cycle plan"
                    )
                records.append(rec)
            except (ValueError, KeyError) as exc:
                errors.append(f"  line {line_no}: {exc}")
    if errors:
        raise DataError(f"{path}: invalid rows\n" + "\n".join(errors))
    return tuple(records)


def _cmd_fit(args) -> int:
    cfg = load_config(args.config)
    setup = cfg.setup
    records = _read_patient_csv(args.data, setup.plan.n_cycles)
    data = Dataset(records=records, grid=setup.grid, plan=setup.plan)
    target = make_target(args.model, data, setup.priors)
    draws = fit_with_retry(target, replace(setup.trial.sampler, seed=args.seed))

    assessments = assess_doses(draws, args.model, setup.grid, setup.plan,
                               setup.trial.thresholds)
    state = EscalationState()
    doses_in_data = sorted({r.dose for r in records})
    for d in doses_in_data:
        state.record_cohort(d, sum(1 for r in records if r.dose == d))
    next_dose = select_next_dose(
        assessments, state, setup.grid,
        escalation_cap=setup.trial.escalation_cap and bool(doses_in_data),
    )

    print(f"model {args.model}  patients {len(records)}  seed {args.seed}  "
          f"converged {draws.converged} (max rhat {draws.max_rhat():.3f}, "
          f"min ess {draws.min_ess():.0f})")
    print(f"{'dose_mg':>8} {'p_under':>8} {'p_target':>9} {'p_over':>8} {'admissible':>10}")
    for a in assessments:
        print(f"{a.dose:>8g} {a.p_under:>8.4f} {a.p_target:>9.4f} "
              f"{a.p_over:>8.4f} {str(a.ewoc_ok):>10}")
    if next_dose is None:
        print("recommendation: STOP (no admissible dose)")
        return EXIT_STOP_TOXICITY
    print(f"recommendation: next dose {next_dose:g} mg")
    return EXIT_OK


def _cmd_prior_summary(args) -> int:
    from .report import (
        prior_summary_rows,
        render_prior_summary_figure,
        write_prior_summary_csv,
    )

    cfg = load_config(args.config)
    setup = cfg.setup
    rows = prior_summary_rows(setup.grid, setup.plan, setup.priors, n_draws=args.draws)
    if args.out is None:
        print("model,dose_mg,kind,cycle,quantile,probability")
        for row in rows:
            print(",".join(str(v) for v in row))
        return EXIT_OK
    outdir = Path(args.out)
    write_prior_summary_csv(rows, outdir / "prior_summary.csv")
    if not args.no_figures:
        render_prior_summary_figure(
            rows, outdir / "figures" / "prior_summary.png",
            band=(setup.trial.thresholds.target_low, setup.trial.thresholds.overdose_prob),
        )
    print(f"wrote prior summary to {outdir}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .report import render_figures_from_csvs

    outdir = Path(args.dir)
    if not outdir.is_dir():
        raise DataError(f"{outdir} is not a directory")
    written = render_figures_from_csvs(outdir)
    print(f"rendered {len(written)} figures under {outdir / 'figures'}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
