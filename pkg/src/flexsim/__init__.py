"""Device-level demand-flexibility forecasting and market-scheduling simulator."""

from .errors import (
    BudgetExceededError,
    ConfigError,
    CoverageError,
    DegenerateDataError,
    FlexsimError,
    InsufficientDataError,
    ScheduleRegressionError,
    StaleArtifactError,
    ValidationError,
)
from .ingest import (
    ActivationSeries,
    GroupSpec,
    MarketSeries,
    ReadingSeries,
    derive_groups,
    hourly_energy,
    load_market,
    load_readings,
    split,
    to_daily,
    to_group,
    to_hourly,
)
from .features import FeatureLayout, FeatureMatrix, build_matrix, extract
from .classifier import (
    LogisticModel,
    PMModel,
    balanced_weights,
    cross_validate,
    gradient,
    objective,
    oversample,
    pm_fit,
    pm_predict,
    predict_proba,
    scores,
    select_threshold,
    train,
)
from .profiles import (
    EnergyProfile,
    average_profiles,
    collect_runs,
    collect_runs_daily,
    daily_profile,
    group_profile,
    hourly_profile,
    to_hourly_units,
)
from .flexoffer import AnchorModel, FlexOffer, assemble
from .market import (
    CostReport,
    MarketSlice,
    apply_shift,
    expected_cost,
    forecast_loss,
    regulation_cost,
    regulation_price,
    savings,
)
from .scheduler import (
    Schedule,
    optimal_baseline,
    schedule_auto,
    schedule_exact,
    schedule_greedy,
)
from .evaluate import (
    ConfusionBreakdown,
    DayCase,
    EvaluationContext,
    PRCurve,
    confusion,
    evaluate_day,
    f1_sweep,
    pr_curve,
    savings_sweep,
)
from .synth import UsagePattern, gen_device, gen_market, write_market_csv, write_readings_csv

__version__ = "0.1.0"
