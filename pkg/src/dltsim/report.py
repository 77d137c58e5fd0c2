"""Delimited outputs, the aggregate text report, and rendered figures.

Every tabular product is a plain CSV with a header row, written in a fixed
row order with full-precision floats so reruns are byte-identical.  Figures
are rendered next to the CSVs (PNG, Agg backend) and can be regenerated
from the CSVs alone.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .experiment import (
    MTD_CATEGORIES,
    AggregateReport,
    ReplicationRecord,
)
from .model import CyclePlan, DoseGrid, inv_logit
from .priors import PriorSpecBlrm, PriorSpecTte
from .scenarios import ToxScenario, true_cycle_probs
from .seeding import derive_rng

__all__ = [
    "write_replications_csv",
    "write_figure_csvs",
    "write_aggregate_text",
    "write_truth_csv",
    "render_experiment_figures",
    "prior_summary_rows",
    "write_prior_summary_csv",
    "render_prior_summary_figure",
    "prior_mean_cumulative_prob",
]

PRIOR_QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)
_ALLOC_CATEGORIES = ("underdose", "target", "overdose")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# Experiment outputs
# ---------------------------------------------------------------------------

def write_replications_csv(records: list[ReplicationRecord], path: Path) -> None:
    """One row per trial replication."""
    _write_csv(
        path,
        [
            "method", "toxicity", "dropout", "replication", "seed", "outcome",
            "mtd_dose_mg", "truth_category", "n_enrolled", "duration_days",
        ],
        (
            (
                r.method, r.toxicity, r.dropout, r.replication, r.seed, r.outcome,
                r.mtd_dose, r.truth_category, r.n_enrolled, r.duration_days,
            )
            for r in records
        ),
    )


def write_figure_csvs(report: AggregateReport, outdir: Path) -> None:
    """Tidy per-figure tables: MTD outcomes, allocation, duration, sample size."""
    mtd_rows = []
    alloc_rows = []
    dur_rows = []
    size_rows = []
    for s in report.summaries:
        c = s.cell
        for cat in MTD_CATEGORIES:
            mtd_rows.append(
                (c.method, c.toxicity, c.dropout, cat, s.mtd_probs[cat], s.mtd_mcse[cat])
            )
        mtd_rows.append(
            (c.method, c.toxicity, c.dropout, "stopped_toxicity", s.stop_toxicity_prob,
             s.mtd_mcse["stopped"])
        )
        for cat in _ALLOC_CATEGORIES:
            alloc_rows.append(
                (c.method, c.toxicity, c.dropout, cat,
                 s.allocation_fracs[cat], s.allocation_mcse[cat])
            )
        dur_rows.append((c.method, c.toxicity, c.dropout, "mean", s.duration_mean))
        for q, v in sorted(s.duration_quantiles.items()):
            dur_rows.append((c.method, c.toxicity, c.dropout, f"q{100 * q:g}", v))
        size_rows.append(
            (c.method, c.toxicity, c.dropout, s.n_enrolled_mean, s.n_enrolled_mcse)
        )
    _write_csv(outdir / "mtd_outcomes.csv",
               ["method", "toxicity", "dropout", "category", "probability", "mcse"],
               mtd_rows)
    _write_csv(outdir / "allocation.csv",
               ["method", "toxicity", "dropout", "category", "fraction", "mcse"],
               alloc_rows)
    _write_csv(outdir / "trial_duration.csv",
               ["method", "toxicity", "dropout", "stat", "days"],
               dur_rows)
    _write_csv(outdir / "sample_size.csv",
               ["method", "toxicity", "dropout", "mean_n", "mcse"],
               size_rows)


def write_truth_csv(scenarios: dict[str, ToxScenario], grid: DoseGrid, path: Path) -> None:
    """Ground-truth per-cycle and cumulative DLT probabilities per scenario."""
    rows = []
    for name in sorted(scenarios):
        scn = scenarios[name]
        for dose in grid.doses:
            q, pi_cum = true_cycle_probs(scn, dose)
            rows.append((name, dose, *[float(v) for v in q], pi_cum))
    n_cycles = len(next(iter(scenarios.values())).multipliers)
    _write_csv(
        path,
        ["toxicity", "dose_mg"] + [f"q_cycle{j + 1}" for j in range(n_cycles)] + ["pi_cumulative"],
        rows,
    )


def write_aggregate_text(report: AggregateReport, path: Path) -> None:
    """Human-readable key-value tree of every cell summary."""
    lines = [
        "aggregate_report:",
        f"  replications: {report.replications}",
        f"  master_seed: {report.master_seed}",
    ]
    for s in report.summaries:
        lines.append(f"  cell {s.cell.label()}:")
        lines.append("    mtd_probability:")
        for cat in MTD_CATEGORIES:
            lines.append(
                f"      {cat}: {s.mtd_probs[cat]:.4f} (mcse {s.mtd_mcse[cat]:.4f})"
            )
        lines.append(f"    stop_toxicity: {s.stop_toxicity_prob:.4f}")
        lines.append(f"    stop_max_patients: {s.stop_max_patients_prob:.4f}")
        lines.append("    allocation_fraction:")
        for cat in _ALLOC_CATEGORIES:
            lines.append(
                f"      {cat}: {s.allocation_fracs[cat]:.4f} (mcse {s.allocation_mcse[cat]:.4f})"
            )
        lines.append(f"    duration_days_mean: {s.duration_mean:.1f}")
        qs = " ".join(
            f"q{100 * q:g}={v:.1f}" for q, v in sorted(s.duration_quantiles.items())
        )
        lines.append(f"    duration_days_quantiles: {qs}")
        lines.append(
            f"    n_enrolled_mean: {s.n_enrolled_mean:.2f} (mcse {s.n_enrolled_mcse:.2f})"
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def _maybe_axes_grid(n_rows: int, n_cols: int, title: str):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(4.2 * n_cols, 3.2 * n_rows),
        squeeze=False, sharey="row",
    )
    fig.suptitle(title)
    return fig, axes


_CATEGORY_COLORS = {
    "underdose": "#7fb8da",
    "target": "#4daf4a",
    "overdose": "#e41a1c",
    "stopped": "#999999",
}


def _stacked_bars(ax, methods, dropouts, values):
    """values[(method, dropout)][category] -> probability."""
    width = 0.8 / max(len(dropouts), 1)
    ticks, labels = [], []
    for i, method in enumerate(methods):
        for j, drop in enumerate(dropouts):
            x = i + j * width
            bottom = 0.0
            for cat in ("underdose", "target", "overdose", "stopped"):
                v = values.get((method, drop), {}).get(cat, 0.0)
                ax.bar(x, v, width * 0.92, bottom=bottom,
                       color=_CATEGORY_COLORS[cat], edgecolor="white", linewidth=0.3)
                bottom += v
            ticks.append(x)
            labels.append(f"{method}\n{drop}")
    ax.set_xticks(ticks)
    ax.set_xticklabels(labels, fontsize=6)
    ax.set_ylim(0, 1.02)


def _figure_data_from_report(report: AggregateReport) -> dict:
    mtd, alloc, duration, size = {}, {}, {}, {}
    for s in report.summaries:
        key = (s.cell.method, s.cell.toxicity, s.cell.dropout)
        mtd[key] = dict(s.mtd_probs)
        alloc[key] = dict(s.allocation_fracs)
        duration[key] = {f"q{100 * q:g}": v for q, v in s.duration_quantiles.items()}
        duration[key]["mean"] = s.duration_mean
        size[key] = (s.n_enrolled_mean, s.n_enrolled_mcse)
    return {"mtd": mtd, "alloc": alloc, "duration": duration, "size": size}


def _figure_data_from_csvs(outdir: Path) -> dict:
    def read(name):
        with open(outdir / name, newline="") as fh:
            return list(csv.DictReader(fh))

    mtd, alloc, duration, size = {}, {}, {}, {}
    for row in read("mtd_outcomes.csv"):
        if row["category"] == "stopped_toxicity":
            continue
        key = (row["method"], row["toxicity"], row["dropout"])
        mtd.setdefault(key, {})[row["category"]] = float(row["probability"])
    for row in read("allocation.csv"):
        key = (row["method"], row["toxicity"], row["dropout"])
        alloc.setdefault(key, {})[row["category"]] = float(row["fraction"])
    for row in read("trial_duration.csv"):
        key = (row["method"], row["toxicity"], row["dropout"])
        duration.setdefault(key, {})[row["stat"]] = float(row["days"])
    for row in read("sample_size.csv"):
        key = (row["method"], row["toxicity"], row["dropout"])
        size[key] = (float(row["mean_n"]), float(row["mcse"]))
    return {"mtd": mtd, "alloc": alloc, "duration": duration, "size": size}


def _render_figures(data: dict, figdir: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    figdir.mkdir(parents=True, exist_ok=True)
    keys = sorted(data["mtd"])
    toxicities = sorted({k[1] for k in keys})
    methods = sorted({k[0] for k in keys})
    dropouts = sorted({k[2] for k in keys})
    written = []

    for name, table, ylabel, title in (
        ("mtd_outcomes", data["mtd"], "probability",
         "MTD declaration probability by true risk band"),
        ("allocation", data["alloc"], "fraction of patients",
         "Patient allocation by true risk band"),
    ):
        fig, axes = _maybe_axes_grid(1, len(toxicities), title)
        for k, tox in enumerate(toxicities):
            values = {
                (m, d): table[(m, tox, d)]
                for m in methods for d in dropouts if (m, tox, d) in table
            }
            _stacked_bars(axes[0][k], methods, dropouts, values)
            axes[0][k].set_title(f"toxicity: {tox}", fontsize=9)
        axes[0][0].set_ylabel(ylabel)
        path = figdir / f"{name}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    # trial duration quantiles
    fig, axes = _maybe_axes_grid(1, len(toxicities), "Trial length (days)")
    for k, tox in enumerate(toxicities):
        ax = axes[0][k]
        for i, m in enumerate(methods):
            xs, med, lo, hi, lo2, hi2 = [], [], [], [], [], []
            for j, d in enumerate(dropouts):
                stats = data["duration"].get((m, tox, d))
                if stats is None:
                    continue
                xs.append(j + (i - len(methods) / 2) * 0.12)
                med.append(stats["q50"])
                lo.append(stats["q25"])
                hi.append(stats["q75"])
                lo2.append(stats["q2.5"])
                hi2.append(stats["q97.5"])
            if not xs:
                continue
            ax.vlines(xs, lo2, hi2, color=f"C{i}", linewidth=1, alpha=0.5)
            ax.vlines(xs, lo, hi, color=f"C{i}", linewidth=3, alpha=0.8)
            ax.plot(xs, med, "o", color=f"C{i}", label=m, markersize=4)
        ax.set_xticks(range(len(dropouts)))
        ax.set_xticklabels(dropouts, fontsize=7)
        ax.set_title(f"toxicity: {tox}", fontsize=9)
    axes[0][0].set_ylabel("days")
    axes[0][-1].legend(fontsize=7)
    path = figdir / "trial_duration.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    # sample size
    fig, axes = _maybe_axes_grid(1, len(toxicities), "Patients enrolled per trial")
    for k, tox in enumerate(toxicities):
        ax = axes[0][k]
        width = 0.8 / max(len(methods), 1)
        for i, m in enumerate(methods):
            xs = [j + i * width for j in range(len(dropouts))]
            means = [data["size"].get((m, tox, d), (0.0, 0.0))[0] for d in dropouts]
            errs = [data["size"].get((m, tox, d), (0.0, 0.0))[1] for d in dropouts]
            ax.bar(xs, means, width * 0.9, yerr=errs, label=m, color=f"C{i}")
        ax.set_xticks([j + 0.4 for j in range(len(dropouts))])
        ax.set_xticklabels(dropouts, fontsize=7)
        ax.set_title(f"toxicity: {tox}", fontsize=9)
    axes[0][0].set_ylabel("mean patients enrolled")
    axes[0][-1].legend(fontsize=7)
    path = figdir / "sample_size.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


def render_experiment_figures(report: AggregateReport, figdir: Path) -> list[Path]:
    """Render the four operating-characteristics figures; returns written paths."""
    return _render_figures(_figure_data_from_report(report), figdir)


def render_figures_from_csvs(outdir: Path) -> list[Path]:
    """Regenerate the figures from a directory of previously written CSVs."""
    return _render_figures(_figure_data_from_csvs(outdir), outdir / "figures")


# ---------------------------------------------------------------------------
# Prior summary
# ---------------------------------------------------------------------------

def _tte_prior_curves(prior: PriorSpecTte, grid: DoseGrid, plan: CyclePlan,
                      rng: np.random.Generator, n_draws: int):
    """Per-dose (conditional, cumulative) prior draws, shapes (K, D, J)."""
    alpha1 = rng.normal(prior.alpha1_mean, prior.alpha1_sd, n_draws)
    log_beta1 = rng.normal(prior.log_beta1_mean, prior.log_beta1_sd, n_draws)
    alpha2 = rng.normal(prior.alpha2_mean, prior.alpha2_sd, n_draws)
    gamma2 = rng.normal(prior.gamma2_mean, prior.gamma2_sd, n_draws)
    xi = rng.dirichlet(np.asarray(prior.xi_concentration), size=n_draws)
    from .model import tte_hazards_batch

    h = tte_hazards_batch(
        alpha1, log_beta1, alpha2, gamma2, xi,
        grid.log_ratio(np.asarray(grid.doses)), plan.n_cycles,
    )
    q = -np.expm1(-h * plan.cycle_length_days)
    pi_cum = -np.expm1(-plan.cycle_length_days * np.cumsum(h, axis=2))
    return q, pi_cum


def _blrm_prior_curve(prior: PriorSpecBlrm, grid: DoseGrid,
                      rng: np.random.Generator, n_draws: int):
    alpha1 = rng.normal(prior.alpha1_mean, prior.alpha1_sd, n_draws)
    log_beta1 = rng.normal(prior.log_beta1_mean, prior.log_beta1_sd, n_draws)
    alpha2 = rng.normal(prior.alpha2_mean, prior.alpha2_sd, n_draws)
    from .model import blrm_probability_batch

    return blrm_probability_batch(
        alpha1, log_beta1, alpha2, grid.log_ratio(np.asarray(grid.doses))
    )


def prior_summary_rows(grid: DoseGrid, plan: CyclePlan, priors,
                       n_draws: int = 200_000, seed: int = 0):
    """Tidy prior quantiles of DLT probability per model, dose and cycle.

    The time-to-event prior reports both the conditional per-cycle and the
    cumulative probability for every cycle; the window comparators report
    the cumulative probability over their window.
    """
    rows = []
    rng = derive_rng(seed, "prior-summary", "tte")
    q, pi_cum = _tte_prior_curves(priors.tte, grid, plan, rng, n_draws)
    for d_idx, dose in enumerate(grid.doses):
        for j in range(plan.n_cycles):
            for kind, arr in (("conditional", q), ("cumulative", pi_cum)):
                values = np.quantile(arr[:, d_idx, j], PRIOR_QUANTILES)
                for qt, v in zip(PRIOR_QUANTILES, values):
                    rows.append(("tte", dose, kind, j + 1, qt, float(v)))
    for model, prior, window in (("b1", priors.b1, 1), ("b3", priors.b3, min(3, plan.n_cycles))):
        rng = derive_rng(seed, "prior-summary", model)
        pi = _blrm_prior_curve(prior, grid, rng, n_draws)
        for d_idx, dose in enumerate(grid.doses):
            values = np.quantile(pi[:, d_idx], PRIOR_QUANTILES)
            for qt, v in zip(PRIOR_QUANTILES, values):
                rows.append((model, dose, "cumulative", window, qt, float(v)))
    return rows


def write_prior_summary_csv(rows, path: Path) -> None:
    _write_csv(
        path,
        ["model", "dose_mg", "kind", "cycle", "quantile", "probability"],
        rows,
    )


def prior_mean_cumulative_prob(model: str, grid: DoseGrid, plan: CyclePlan, priors) -> float:
    """Cumulative DLT probability at the reference dose with parameters at
    their prior means (the prior's central anchor combination)."""
    if model == "tte":
        from .model import tte_hazards_batch

        p = priors.tte
        conc = np.asarray(p.xi_concentration, dtype=float)
        h = tte_hazards_batch(
            p.alpha1_mean, p.log_beta1_mean, p.alpha2_mean, p.gamma2_mean,
            (conc / conc.sum())[None, :], np.array([0.0]), plan.n_cycles,
        )
        return float(-np.expm1(-plan.cycle_length_days * h.sum()))
    prior = {"b1": priors.b1, "b3": priors.b3}[model]
    p1 = inv_logit(prior.alpha1_mean)
    p2 = inv_logit(prior.alpha2_mean)
    return float(1.0 - (1.0 - p1) * (1.0 - p2))


def render_prior_summary_figure(rows, path: Path, band=(0.16, 0.33)) -> Path:
    """Quantile fans of the prior dose-DLT curves, one panel per model/kind."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    panels = {}
    for model, dose, kind, cycle, quantile, prob in rows:
        panels.setdefault((model, kind, cycle), {}).setdefault(quantile, []).append(
            (dose, prob)
        )
    keys = sorted(panels)
    n = len(keys)
    n_cols = min(4, n)
    n_rows = (n + n_cols - 1) // n_cols
    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(3.6 * n_cols, 2.8 * n_rows), squeeze=False
    )
    for idx, key in enumerate(keys):
        ax = axes[idx // n_cols][idx % n_cols]
        model, kind, cycle = key
        curves = panels[key]
        doses = sorted({d for pts in curves.values() for d, _ in pts})
        for lo_q, hi_q, alpha in ((0.025, 0.975, 0.2), (0.25, 0.75, 0.4)):
            lo = [dict(curves[lo_q])[d] for d in doses]
            hi = [dict(curves[hi_q])[d] for d in doses]
            ax.fill_between(doses, lo, hi, color="C0", alpha=alpha, linewidth=0)
        med = [dict(curves[0.5])[d] for d in doses]
        ax.plot(doses, med, color="C0")
        ax.axhspan(band[0], band[1], color="#4daf4a", alpha=0.15)
        ax.set_xscale("log")
        ax.set_ylim(0, 1)
        ax.set_title(f"{model} {kind} cycle {cycle}", fontsize=8)
    for idx in range(len(keys), n_rows * n_cols):
        axes[idx // n_cols][idx % n_cols].axis("off")
    fig.suptitle("Prior DLT probability vs dose (2.5/25/50/75/97.5% quantiles)")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
