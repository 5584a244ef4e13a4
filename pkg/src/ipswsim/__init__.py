"""Simulation toolkit for target-population choice in IPSW generalization."""

__version__ = "0.1.0"

from .balance import (  # noqa: E402
    BalanceReport,
    aggregate_smd,
    love_plot_data,
    population_balance,
    smd_binary,
    smd_continuous,
    weighted_balance,
)
from .errors import (  # noqa: E402
    ConfigError,
    NonIdentifiedError,
    NumericalError,
    OutcomeGenerationError,
    SpecificationError,
)
from .montecarlo import (  # noqa: E402
    StudyConfig,
    default_config,
    effect_scale_sweep,
    pate_ipsw,
    run_monte_carlo,
    run_replication,
    sate,
)
from .outcomes import (  # noqa: E402
    PotentialOutcomes,
    ScenarioSpec,
    expected_sate,
    generate_outcomes,
    scenario_catalog,
    standardize_age,
)
from .population import (  # noqa: E402
    UNMEASURED,
    Cohort,
    PopulationSpec,
    builtin_specs,
    race_indicators,
    sample_population,
)
from .selection import (  # noqa: E402
    SelectionFit,
    WeightingSpec,
    effective_sample_size,
    fit_selection_model,
    ipsw_weights,
    weighting_catalog,
)
