"""Experiment configuration: JSON schema, defaults, validation.

The file is a key-value tree; unknown keys are rejected and every omitted
key falls back to the documented default.  The one field without a default
is the reference dose, which has no canonical value and must be stated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .experiment import Cell, ExperimentPlan, ExperimentSetup
from .mcmc import SamplerConfig
from .model import CyclePlan, DoseGrid
from .policy import METHODS, EwocThresholds, MtdRules
from .priors import (
    PriorSpecBlrm,
    PriorSpecTte,
    default_b1_prior,
    default_b3_prior,
    default_tte_prior,
)
from .scenarios import (
    DEFAULT_DROPOUT_SCENARIOS,
    DEFAULT_MULTIPLIERS,
    DropoutScenario,
    ToxScenario,
    calibrated_tox_scenario,
)
from .trial import PriorLibrary, TrialConfig

__all__ = ["ConfigError", "ExperimentConfig", "load_config"]

DEFAULT_DOSES = (10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0, 1280.0)


class ConfigError(ValueError):
    """Config file failed to parse or validate; message carries the location."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration with all defaults applied."""

    setup: ExperimentSetup
    plan: ExperimentPlan


class _Section:
    """Tracked view of one mapping in the config tree."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected an object")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def get(self, key, default=None, required=False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"{self.path}.{key}: required key is missing")
            return default
        return self.data[key]

    def section(self, key) -> "_Section":
        self.seen.add(key)
        return _Section(self.data.get(key, {}), f"{self.path}.{key}")

    def finish(self):
        unknown = set(self.data) - self.seen
        if unknown:
            raise ConfigError(
                f"{self.path}: unknown key(s) {sorted(unknown)}"
            )


def _number(value, path, positive=False):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number")
    if positive and value <= 0:
        raise ConfigError(f"{path}: must be positive")
    return float(value)


def _integer(value, path, minimum=None):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{path}: expected an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}")
    return value


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a config file; raises ConfigError with location info."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    try:
        return _build(raw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _build(raw: dict) -> ExperimentConfig:
    root = _Section(raw, "config")

    sec = root.section("grid")
    doses = sec.get("doses_mg", list(DEFAULT_DOSES))
    if not isinstance(doses, list) or not doses:
        raise ConfigError("config.grid.doses_mg: expected a non-empty list")
    reference = sec.get("reference_dose_mg", required=True)
    grid = DoseGrid(
        doses=tuple(_number(d, "config.grid.doses_mg") for d in doses),
        reference_dose=_number(reference, "config.grid.reference_dose_mg", positive=True),
    )
    sec.finish()

    sec = root.section("plan")
    plan = CyclePlan(
        n_cycles=_integer(sec.get("n_cycles", 3), "config.plan.n_cycles", 1),
        cycle_length_days=_number(
            sec.get("cycle_length_days", 42.0), "config.plan.cycle_length_days", positive=True
        ),
        reference_cycle=_integer(sec.get("reference_cycle", 3), "config.plan.reference_cycle", 1),
    )
    sec.finish()

    priors = _priors(root.section("priors"), plan)

    sec = root.section("thresholds")
    thresholds = EwocThresholds(
        overdose_prob=_number(sec.get("overdose_prob", 0.33), "config.thresholds.overdose_prob"),
        feasibility=_number(sec.get("feasibility", 0.25), "config.thresholds.feasibility"),
        target_low=_number(sec.get("target_low", 0.16), "config.thresholds.target_low"),
    )
    sec.finish()

    sec = root.section("truth")
    anchor_dose = _number(sec.get("anchor_dose_mg", 160.0), "config.truth.anchor_dose_mg", positive=True)
    anchor_prob = _number(sec.get("anchor_prob", 0.25), "config.truth.anchor_prob")
    slope = _number(sec.get("log_dose_slope", 0.8), "config.truth.log_dose_slope")
    sec.finish()

    tox_scenarios = _toxicity(root.section("toxicity_scenarios"), grid, plan,
                              anchor_dose, anchor_prob, slope)
    dropout_scenarios = _dropout(root.section("dropout_scenarios"), grid)

    sec = root.section("sampler")
    sampler = SamplerConfig(
        seed=0,
        n_chains=_integer(sec.get("n_chains", 4), "config.sampler.n_chains", 2),
        n_warmup=_integer(sec.get("n_warmup", 1000), "config.sampler.n_warmup", 1),
        n_draws=_integer(sec.get("n_draws", 1000), "config.sampler.n_draws", 1),
        target_accept=_number(sec.get("target_accept", 0.30), "config.sampler.target_accept"),
        init_step_scale=_number(sec.get("init_step_scale", 0.5), "config.sampler.init_step_scale", positive=True),
        rhat_threshold=_number(sec.get("rhat_threshold", 1.05), "config.sampler.rhat_threshold"),
        ess_floor=_number(sec.get("ess_floor", 400.0), "config.sampler.ess_floor"),
    )
    sec.finish()

    sec = root.section("trial")
    start_dose = sec.get("start_dose_mg")
    rules = MtdRules(
        min_patients=_integer(sec.get("mtd_min_patients", 6), "config.trial.mtd_min_patients", 1),
        min_patients_alt=_integer(sec.get("mtd_alt_patients", 12), "config.trial.mtd_alt_patients", 1),
        target_prob=_number(sec.get("mtd_target_prob", 0.5), "config.trial.mtd_target_prob"),
        require_same_dose=bool(sec.get("mtd_require_same_dose", True)),
    )
    trial = TrialConfig(
        cohort_size=_integer(sec.get("cohort_size", 3), "config.trial.cohort_size", 1),
        start_dose=None if start_dose is None else _number(start_dose, "config.trial.start_dose_mg", positive=True),
        max_patients=_integer(sec.get("max_patients", 60), "config.trial.max_patients", 1),
        accrual_mean_days=_number(sec.get("accrual_mean_days", 10.0), "config.trial.accrual_mean_days", positive=True),
        thresholds=thresholds,
        mtd_rules=rules,
        escalation_cap=bool(sec.get("escalation_cap", True)),
        sampler=sampler,
    )
    trial.resolve_start_dose(grid)
    sec.finish()

    sec = root.section("experiment")
    methods = sec.get("methods", list(METHODS))
    toxicity = sec.get("toxicity", sorted(tox_scenarios))
    dropout = sec.get("dropout", sorted(dropout_scenarios))
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"config.experiment.methods: unknown method {m!r}")
    for t in toxicity:
        if t not in tox_scenarios:
            raise ConfigError(f"config.experiment.toxicity: unknown scenario {t!r}")
    for d in dropout:
        if d not in dropout_scenarios:
            raise ConfigError(f"config.experiment.dropout: unknown scenario {d!r}")
    cells = tuple(
        Cell(method=m, toxicity=t, dropout=d)
        for m in methods for t in toxicity for d in dropout
    )
    plan_ = ExperimentPlan(
        cells=cells,
        replications=_integer(sec.get("replications", 1000), "config.experiment.replications", 1),
        master_seed=_integer(sec.get("master_seed", 0), "config.experiment.master_seed", 0),
        parallelism=_integer(sec.get("parallelism", 1), "config.experiment.parallelism", 1),
    )
    sec.finish()
    root.finish()

    setup = ExperimentSetup(
        grid=grid,
        plan=plan,
        trial=trial,
        priors=priors,
        toxicity_scenarios=tox_scenarios,
        dropout_scenarios=dropout_scenarios,
    )
    return ExperimentConfig(setup=setup, plan=plan_)


def _priors(sec: _Section, plan: CyclePlan) -> PriorLibrary:
    tte_defaults = default_tte_prior(plan)
    b1_defaults = default_b1_prior()
    b3_defaults = default_b3_prior()

    sub = sec.section("tte")
    tte = PriorSpecTte(
        alpha1_mean=_number(sub.get("alpha1_mean", tte_defaults.alpha1_mean), f"{sub.path}.alpha1_mean"),
        alpha1_sd=_number(sub.get("alpha1_sd", tte_defaults.alpha1_sd), f"{sub.path}.alpha1_sd", positive=True),
        log_beta1_mean=_number(sub.get("log_beta1_mean", 0.0), f"{sub.path}.log_beta1_mean"),
        log_beta1_sd=_number(sub.get("log_beta1_sd", tte_defaults.log_beta1_sd), f"{sub.path}.log_beta1_sd", positive=True),
        alpha2_mean=_number(sub.get("alpha2_mean", tte_defaults.alpha2_mean), f"{sub.path}.alpha2_mean"),
        alpha2_sd=_number(sub.get("alpha2_sd", tte_defaults.alpha2_sd), f"{sub.path}.alpha2_sd", positive=True),
        gamma2_mean=_number(sub.get("gamma2_mean", 0.0), f"{sub.path}.gamma2_mean"),
        gamma2_sd=_number(sub.get("gamma2_sd", tte_defaults.gamma2_sd), f"{sub.path}.gamma2_sd", positive=True),
        xi_concentration=tuple(
            _number(c, f"{sub.path}.xi_concentration", positive=True)
            for c in sub.get("xi_concentration", list(tte_defaults.xi_concentration))
        ),
    )
    sub.finish()

    blrm = {}
    for name, defaults in (("b1", b1_defaults), ("b3", b3_defaults)):
        sub = sec.section(name)
        blrm[name] = PriorSpecBlrm(
            alpha1_mean=_number(sub.get("alpha1_mean", defaults.alpha1_mean), f"{sub.path}.alpha1_mean"),
            alpha1_sd=_number(sub.get("alpha1_sd", defaults.alpha1_sd), f"{sub.path}.alpha1_sd", positive=True),
            log_beta1_mean=_number(sub.get("log_beta1_mean", 0.0), f"{sub.path}.log_beta1_mean"),
            log_beta1_sd=_number(sub.get("log_beta1_sd", defaults.log_beta1_sd), f"{sub.path}.log_beta1_sd", positive=True),
            alpha2_mean=_number(sub.get("alpha2_mean", defaults.alpha2_mean), f"{sub.path}.alpha2_mean"),
            alpha2_sd=_number(sub.get("alpha2_sd", defaults.alpha2_sd), f"{sub.path}.alpha2_sd", positive=True),
        )
        sub.finish()
    sec.finish()
    return PriorLibrary(tte=tte, b1=blrm["b1"], b3=blrm["b3"])


def _toxicity(sec: _Section, grid, plan, anchor_dose, anchor_prob, slope) -> dict[str, ToxScenario]:
    names = set(DEFAULT_MULTIPLIERS) | set(sec.data)
    out = {}
    for name in sorted(names):
        sub = sec.section(name)
        multipliers = sub.get("multipliers", list(DEFAULT_MULTIPLIERS.get(name, ())))
        if not multipliers:
            raise ConfigError(f"{sub.path}: custom scenarios need explicit multipliers")
        out[name] = calibrated_tox_scenario(
            name,
            grid,
            plan,
            multipliers=tuple(_number(m, f"{sub.path}.multipliers") for m in multipliers),
            anchor_dose=anchor_dose,
            anchor_prob=anchor_prob,
            log_dose_slope=slope,
        )
        sub.finish()
    sec.finish()
    return out


def _dropout(sec: _Section, grid) -> dict[str, DropoutScenario]:
    default_boundary = 80.0
    names = set(DEFAULT_DROPOUT_SCENARIOS) | set(sec.data)
    out = {}
    for name in sorted(names):
        sub = sec.section(name)
        low_default, high_default = DEFAULT_DROPOUT_SCENARIOS.get(name, (None, None))
        low = sub.get("rate_low", low_default)
        high = sub.get("rate_high", high_default)
        if low is None or high is None:
            raise ConfigError(f"{sub.path}: custom scenarios need rate_low and rate_high")
        out[name] = DropoutScenario(
            name=name,
            rate_low=_number(low, f"{sub.path}.rate_low"),
            rate_high=_number(high, f"{sub.path}.rate_high"),
            boundary=_number(sub.get("boundary_mg", default_boundary), f"{sub.path}.boundary_mg", positive=True),
        )
        sub.finish()
    sec.finish()
    return out
