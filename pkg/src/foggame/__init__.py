"""Strategic-behavior toolkit: games, bounded-rational prediction, risk and
social preference transforms, a fog-computing price negotiation market, and
maximum-likelihood model fitting, with a command-line front end."""

from __future__ import annotations

from .games import (
    TIE_TOL,
    Belief,
    MixedStrategy,
    NormalFormGame,
    best_response_set,
    expected_utility,
    load_game,
    pure_nash,
    save_game,
)
from .behavior import (
    BestResponse,
    CognitiveHierarchy,
    EpsilonNash,
    FixedPointError,
    LevelK,
    LogitQBR,
    NoEquilibriumError,
    NoisyIntrospection,
    logit_qbr,
    model_from_dict,
    model_to_dict,
    predict,
    qbr_equilibrium,
)
from .preferences import (
    Lottery,
    ProspectParams,
    SocialPrefParams,
    pt_evaluate,
    pt_value,
    pt_weight,
    social_utility,
    transform_game_social,
)
from .market import (
    DEMAND_FLOOR,
    FogScenario,
    NegotiationTrace,
    RoundState,
    compute_metrics,
    default_scenario,
    detect_convergence,
    fog_gain,
    inject_noise,
    optimal_demand,
    price_update,
    run_negotiation,
    signal_average,
    user_utility,
    write_trace_csv,
)
from .estimation import (
    FitResult,
    ModelFamily,
    Observation,
    ObservationDataset,
    cross_validate,
    epsilon_nash_family,
    fit_mle,
    level_k_family,
    load_observations,
    log_likelihood,
    qbr_family,
    sample_observations,
    save_observations,
)

__version__ = "0.1.0"

__all__ = [
    "TIE_TOL",
    "Belief",
    "MixedStrategy",
    "NormalFormGame",
    "best_response_set",
    "expected_utility",
    "load_game",
    "pure_nash",
    "save_game",
    "BestResponse",
    "CognitiveHierarchy",
    "EpsilonNash",
    "FixedPointError",
    "LevelK",
    "LogitQBR",
    "NoEquilibriumError",
    "NoisyIntrospection",
    "logit_qbr",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "qbr_equilibrium",
    "Lottery",
    "ProspectParams",
    "SocialPrefParams",
    "pt_evaluate",
    "pt_value",
    "pt_weight",
    "social_utility",
    "transform_game_social",
    "DEMAND_FLOOR",
    "FogScenario",
    "NegotiationTrace",
    "RoundState",
    "compute_metrics",
    "default_scenario",
    "detect_convergence",
    "fog_gain",
    "inject_noise",
    "optimal_demand",
    "price_update",
    "run_negotiation",
    "signal_average",
    "user_utility",
    "write_trace_csv",
    "FitResult",
    "ModelFamily",
    "Observation",
    "ObservationDataset",
    "cross_validate",
    "epsilon_nash_family",
    "fit_mle",
    "level_k_family",
    "load_observations",
    "log_likelihood",
    "qbr_family",
    "sample_observations",
    "save_observations",
    "__version__",
]
