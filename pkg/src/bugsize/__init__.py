"""Size-biased Bayesian estimation of eventual bug sizes from phase-wise
testing logs, a predictive density for the next phase's total, and the
stop-testing decision rule."""

from .baseline import (
    BaselineState,
    ComparisonConfig,
    ComparisonReport,
    PhaseDetection,
    baseline_stopping_phase,
    baseline_update,
    compare_models,
    initial_state,
    posterior_remaining,
)
from .ingest import (
    PhaseSummary,
    TestLogRecord,
    parse_input_log,
    parse_test_log,
    summarize_phases,
)
from .model import (
    ChainState,
    DiscretePmf,
    HyperConfig,
    Hyperparams,
    build_hyperparams,
    flat_hyperparams,
    log_likelihood,
    log_posterior_S_kernel,
    sample_hyper,
    sample_n_trials,
    size_biased_pmf,
    solve_beta_hyper,
)
from .predictor import (
    KdeConfig,
    PhaseEvent,
    Prediction,
    StopDecision,
    decide_stop,
    events_from_totals,
    kde_density,
    predict_next_total,
    select_bandwidth,
    temporal_weights,
)
from .sampler import (
    PosteriorSummary,
    SamplerConfig,
    diagnostics,
    gibbs_update_p,
    gibbs_update_t,
    mh_update_S,
    run_chain,
)
from .simulator import GroundTruth, ScenarioConfig, TestLog, default_scenario, generate

__version__ = "0.1.0"
