"""Stratified estimation (prefecture / occupation / time slot), the Kaitz
index, and binned-scatter summaries.

Each stratum gets the full pipeline on its own disjoint record subset:
panel, outcome, saturated fit, clustered covariance, decomposition. Strata
that cannot support the saturated design (an empty required cell, or fewer
contract records per required cell than the threshold) are skipped with a
reason rather than estimated on a degenerate design.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .decomp import DecompositionResult, aggregate
from .errors import ConfigError, EstimationError
from .estimator import (
    DEFAULT_TREATED_GROUPS,
    EventStudyFit,
    cluster_vcov,
    fit_event_study,
    observations_from_outcomes,
)
from .model import (
    GROUP_INF,
    TIME_SLOT_NAMES,
    MinWageSchedule,
    StudyWindow,
    assign_time_slot,
    build_panel,
    outcome_series,
)

STRATA_DIMENSIONS = ("prefecture", "occupation", "timeslot")


@dataclass
class StratumResult:
    stratum: object
    fit: EventStudyFit
    decomposition: DecompositionResult
    kaitz: float | None
    n_records: int


@dataclass
class StratifiedRun:
    dimension: str
    results: list[StratumResult]
    skipped: list[tuple[object, str]]

    def frame(self) -> pd.DataFrame:
        rows = []
        for r in self.results:
            d = r.decomposition
            rows.append({
                "stratum": r.stratum,
                "delta_a": d.delta_a, "delta_a_se": d.delta_a_se,
                "delta_b": d.delta_b, "delta_b_se": d.delta_b_se,
                "delta_e": d.delta_e, "delta_e_se": d.delta_e_se,
                "kaitz": r.kaitz if r.kaitz is not None else np.nan,
                "n_records": r.n_records,
            })
        return pd.DataFrame(rows)


def _stratum_labels(records: pd.DataFrame, dimension: str) -> pd.Series:
    if dimension == "prefecture":
        return records["prefecture_id"]
    if dimension == "occupation":
        return records["occupation"]
    if dimension == "timeslot":
        idx = assign_time_slot(records["start_time"].to_numpy())
        return pd.Series(np.array(TIME_SLOT_NAMES)[idx], index=records.index)
    raise ConfigError(f"unknown dimension {dimension!r}, expected one of {STRATA_DIMENSIONS}")


def _run_stratum(records: pd.DataFrame, schedule: MinWageSchedule, window: StudyWindow,
                 *, outcome_kind: str, raw_outcome: bool, treated_groups,
                 min_cell_records: int, vcov_variant: str,
                 panel_kwargs: dict) -> tuple[EventStudyFit, DecompositionResult, pd.DataFrame]:
    build = build_panel(records, schedule, window, **panel_kwargs)
    panel, totals = build.panel, build.totals

    # contract records per required (group, month) cell
    required = list(treated_groups) + [GROUP_INF]
    cell_records = (
        panel[panel["exposure_group"].isin(required)]
        .groupby(["exposure_group", "month_t"])["vacancies"].sum()
    )
    for e in required:
        for t in range(1, window.n_months + 1):
            count = cell_records.get((e, t), 0)
            if count < min_cell_records:
                raise EstimationError(
                    f"cell (e={e}, t={t}) holds {count} records, "
                    f"below the threshold of {min_cell_records}"
                )

    outcomes = outcome_series(panel, totals, outcome_kind)
    if raw_outcome:
        counts = panel.merge(
            outcomes[["prefecture_id", "bin_lower", "month_t"]],
            on=["prefecture_id", "bin_lower", "month_t"], how="right")
        outcomes = outcomes.copy()
        outcomes["y"] = counts["employment"].to_numpy(dtype=float)
    obs = observations_from_outcomes(outcomes)
    include_below = not outcome_kind.startswith("reimb")
    fit = fit_event_study(obs, window, treated_groups=treated_groups)
    cluster_vcov(fit, variant=vcov_variant)
    decomposition = aggregate(fit, include_below=include_below)
    return fit, decomposition, panel


def run_stratified(records: pd.DataFrame, schedule: MinWageSchedule, window: StudyWindow,
                   dimension: str, *, outcome_kind: str = "employment_share",
                   raw_outcome: bool = False,
                   treated_groups=DEFAULT_TREATED_GROUPS,
                   min_cell_records: int = 30, vcov_variant: str = "CR1",
                   jobs: int = 1, kaitz_month: int | None = None,
                   **panel_kwargs) -> StratifiedRun:
    """Run the full pipeline separately within each stratum of `dimension`.

    Prefecture strata additionally carry the Kaitz index (new minimum wage
    over the stratum's median matched wage in the event month). Occupation
    and time-slot strata pool prefectures exactly like the main
    specification. Thin strata are skipped and listed with a reason.
    """
    labels = _stratum_labels(records, dimension)
    strata = sorted(labels.unique())
    results: list[StratumResult] = []
    skipped: list[tuple[object, str]] = []

    kaitz_map: dict[int, float] = {}
    if dimension == "prefecture":
        kaitz_map, _ = kaitz_index(records, schedule, window, month=kaitz_month)

    def worker(stratum):
        subset = records[labels == stratum]
        sub_schedule = schedule
        if dimension == "prefecture":
            sub_schedule = MinWageSchedule(
                entries={stratum: schedule.entries[stratum]},
                event_month=schedule.event_month,
            )
        try:
            fit, decomposition, _ = _run_stratum(
                subset, sub_schedule, window,
                outcome_kind=outcome_kind, raw_outcome=raw_outcome,
                treated_groups=treated_groups, min_cell_records=min_cell_records,
                vcov_variant=vcov_variant, panel_kwargs=panel_kwargs)
        except EstimationError as exc:
            return stratum, None, str(exc), len(subset)
        return stratum, (fit, decomposition), None, len(subset)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(worker, strata))
    else:
        outcomes = [worker(s) for s in strata]

    for stratum, ok, reason, n in outcomes:
        if ok is None:
            skipped.append((stratum, reason))
            continue
        fit, decomposition = ok
        kaitz = kaitz_map.get(stratum) if dimension == "prefecture" else None
        results.append(StratumResult(stratum=stratum, fit=fit,
                                     decomposition=decomposition,
                                     kaitz=kaitz, n_records=n))
    return StratifiedRun(dimension=dimension, results=results, skipped=skipped)


def kaitz_index(records: pd.DataFrame, schedule: MinWageSchedule, window: StudyWindow,
                month: int | None = None) -> tuple[dict[int, float], list[tuple[int, str]]]:
    """Kaitz index per prefecture: new minimum wage / median matched wage.

    The median over an even count is the lower-middle element, which keeps
    the index deterministic and permutation-invariant. Prefectures with no
    matched contracts in the month are reported absent with a reason.
    """
    t = window.event_index if month is None else month
    if not 1 <= t <= window.n_months:
        raise ConfigError(f"month index {t} outside the window")
    target = window.months[t - 1]

    matched = records[records["matched"].astype(bool)]
    in_month = matched["date"].astype(str).str.slice(0, 7) == target
    matched = matched[in_month]

    out: dict[int, float] = {}
    absent: list[tuple[int, str]] = []
    for pref in schedule.prefectures:
        wages = np.sort(matched.loc[matched["prefecture_id"] == pref,
                                    "hourly_wage"].to_numpy())
        if len(wages) == 0:
            absent.append((pref, f"no matched contracts in {target}"))
            continue
        median = float(wages[(len(wages) - 1) // 2])
        out[pref] = schedule.new_mw(pref) / median
    return out, absent


def kaitz_points(run: StratifiedRun) -> pd.DataFrame:
    """Kaitz scatter input: one row per estimated prefecture stratum."""
    if run.dimension != "prefecture":
        raise ConfigError("kaitz points require a prefecture-stratified run")
    rows = []
    for r in run.results:
        if r.kaitz is None:
            continue
        d = r.decomposition
        rows.append({"prefecture_id": r.stratum, "kaitz": r.kaitz,
                     "delta_a": d.delta_a, "delta_b": d.delta_b,
                     "delta_e": d.delta_e})
    return pd.DataFrame(rows)


def binned_scatter(points: pd.DataFrame, n_bins: int) -> pd.DataFrame:
    """Equal-count bins over the Kaitz index with per-bin unweighted means."""
    if n_bins < 1:
        raise ConfigError("n_bins must be >= 1")
    if n_bins > len(points):
        raise ConfigError(f"n_bins {n_bins} exceeds the {len(points)} available points")
    ordered = points.sort_values(["kaitz", "prefecture_id"]).reset_index(drop=True)
    chunks = np.array_split(np.arange(len(ordered)), n_bins)
    rows = []
    for chunk in chunks:
        sub = ordered.iloc[chunk]
        rows.append({
            "bin_center": float(sub["kaitz"].mean()),
            "mean_delta_a": float(sub["delta_a"].mean()),
            "mean_delta_b": float(sub["delta_b"].mean()),
            "mean_delta_e": float(sub["delta_e"].mean()),
            "count": int(len(sub)),
        })
    return pd.DataFrame(rows)
