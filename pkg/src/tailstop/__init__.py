"""Statistical early stopping and worst-case prediction for differential fuzzing."""

from .baselines import (
    BaselineConfig,
    BayesMonitorState,
    bayes_monitor_step,
    bayes_predict,
    chebyshev_predict,
    jeffreys_min_runs,
    markov_predict,
)
from .estimators import BayesFactorEstimator, ChebyshevEstimator, MarkovEstimator, TailRiskEstimator
from .evt import (
    BootstrapConfig,
    Prediction,
    TailModelParams,
    ThresholdChoice,
    fit_exponential,
    fit_gpd,
    fit_pp,
    predict_wcdiff,
    return_level,
    select_threshold_bootstrap,
    select_threshold_quantile,
)
from .exceptions import (
    BootstrapError,
    DegenerateTailError,
    DeltaMismatchError,
    EmptyLogError,
    FitError,
    IngestError,
    NoValidThresholdError,
    SpecError,
    TailstopError,
    TooFewExceedancesError,
)
from .fuzz import FuzzConfig, builtin_target, mutate, replay_campaign, run_campaign
from .mannwhitney import mann_whitney_u
from .stopping import Decision, ExpTestConfig, LaplaceState, exponentiality_test, laplace_step
from .stream import CampaignLog, DiffSample, emit, ingest, split, summarize, top_k

__version__ = "0.1.0"
