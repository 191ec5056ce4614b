from ._marlbc import (
    ConfigError,
    DegenerateEconomyError,
    Economy,
    ProtocolError,
    SolverError,
    TrainingDivergedError,
    analytic_textbook_policy,
    canonical_config,
    cli,
    config_hash,
    full_depreciation_optimum,
    gini,
    law_of_motion,
    lorenz,
    ols_fit,
    parse_config,
    preset_config,
    preset_ids,
    run,
    steady_state,
)

__all__ = [
    "ConfigError",
    "DegenerateEconomyError",
    "Economy",
    "ProtocolError",
    "SolverError",
    "TrainingDivergedError",
    "analytic_textbook_policy",
    "canonical_config",
    "cli",
    "config_hash",
    "full_depreciation_optimum",
    "gini",
    "law_of_motion",
    "lorenz",
    "ols_fit",
    "parse_config",
    "preset_config",
    "preset_ids",
    "run",
    "steady_state",
]
