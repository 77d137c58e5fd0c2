"""Multi-cycle time-to-DLT dose-escalation models and trial simulation."""

from .likelihood import Dataset, log_likelihood_blrm, log_likelihood_tte
from .mcmc import PosteriorDraws, SamplerConfig, fit, fit_with_retry
from .model import (
    BlrmParams,
    CyclePlan,
    DoseGrid,
    PatientRecord,
    TteParams,
    blrm_dlt_probability,
    cloglog,
    cycle_hazards,
    event_probabilities,
    inv_cloglog,
    survivor_and_density,
)
from .policy import (
    DoseAssessment,
    EscalationState,
    EwocThresholds,
    MtdRules,
    assess_doses,
    check_mtd,
    classify_truth,
    select_next_dose,
)
from .priors import (
    PriorSpecBlrm,
    PriorSpecTte,
    default_b1_prior,
    default_b3_prior,
    default_tte_prior,
    log_prior_blrm,
    log_prior_tte,
)
from .quadrature import QuadratureSpec, quadrature_oracle
from .scenarios import (
    DropoutScenario,
    PatientOutcome,
    ToxScenario,
    calibrated_tox_scenario,
    dropout_hazard,
    sample_accrual,
    simulate_patient,
    true_cycle_probs,
)
from .targets import BlrmPosterior, TtePosterior, make_target
from .trial import PriorLibrary, TrialConfig, TrialResult, run_trial

__version__ = "0.1.0"
