"""Behavioral simulator for logarithmic and stochastic Bayesian machines."""

__version__ = "0.1.0"

from .errors import (
    CompileError,
    ConfigError,
    DomainError,
    FormatError,
    TrainingError,
    ValidationError,
)
from .logprob import LogCode, compare, decode, encode, sat_add
from .stochastic import LinearCode, StochasticRunResult, draw_bit, quantize_linear, run_stochastic
from .machine import (
    InferenceResult,
    MachineConfig,
    MemoryImage,
    fabricated_config,
    infer_logarithmic,
    infer_stochastic,
    inject_errors,
    load_image,
    run_filter,
    save_image,
    scaled_config,
)
from .modelkit import (
    BayesModel,
    FittedDistribution,
    compile_model,
    discretize,
    estimate_transitions,
    fit,
    load_model,
    oracle_filter,
    oracle_infer,
    save_model,
    train_model,
)
from .tasks import (
    Dataset,
    SyntheticTaskSpec,
    generate,
    gesture_features,
    gesture_like_spec,
    psd_at,
    select_features,
    signal_power,
    sleep_like_spec,
)
from .energy import CostTable, EventCounts, count_events, crossover, energy_of, example_cost_table
