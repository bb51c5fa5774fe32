"""Wage-bin event-study toolkit for minimum-wage effects in spot labor markets.

Pipeline: contract records -> minimum-wage-aligned wage-bin panel ->
saturated event-study DID with wage-bin-clustered inference ->
missing/excess-jobs decomposition and elasticity battery -> heterogeneity
by prefecture, occupation, and time slot. A synthetic generator with
closed-form ground truth serves as the test oracle.
"""

from .decomp import (
    BootstrapResult,
    DecompositionResult,
    ElasticityConstants,
    ElasticityReport,
    aggregate,
    bootstrap_inference,
    elasticities,
    elasticity_constants,
    employment_elasticity,
    own_wage_elasticity,
    pct_affected_employment,
    pct_affected_wage,
    wage_bill_change,
)
from .dgp import (
    DgpConfig,
    GroundTruth,
    OccupationEffect,
    PrefectureSpec,
    ReimbursementModel,
    WageMixture,
    generate,
    benchmark_config,
    placebo_config,
    pre_event_median,
    true_cell_means,
    users_series,
)
from .errors import (
    ConfigError,
    EstimationError,
    IngestionError,
    InvalidRecordError,
    SchemaError,
    SpotmwError,
)
from .estimator import (
    EventStudyFit,
    PretrendReport,
    TwoWayFeFit,
    cluster_vcov,
    fit_event_study,
    fit_two_way_fe,
    observations_from_outcomes,
    pretrend_report,
)
from .hetero import (
    StratifiedRun,
    StratumResult,
    binned_scatter,
    kaitz_index,
    kaitz_points,
    run_stratified,
)
from .model import (
    GROUP_EXCLUDED,
    GROUP_INF,
    OCCUPATIONS,
    TIME_SLOT_NAMES,
    TIME_SLOTS,
    ContractRecord,
    MinWageSchedule,
    PanelBuild,
    StudyWindow,
    assign_bin,
    assign_group,
    assign_time_slot,
    build_panel,
    change_grid,
    distribution_tables,
    group_label,
    macro_metrics,
    outcome_series,
    records_to_frame,
    weekly_earnings_panel,
)

__version__ = "0.1.0"
