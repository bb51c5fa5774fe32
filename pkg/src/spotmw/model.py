"""Domain model: wage binning, exposure groups, panel aggregation and outcomes.

Contract-level spot-work records are aggregated into a (prefecture, wage-bin,
month) panel. Wage bins are 10-JPY wide and anchored at each prefecture's new
minimum wage, so every 100-JPY exposure band is an exact union of ten bins.
Exposure groups index a bin's distance from the new minimum wage: group e
covers [MW + 100e, MW + 100e + 99] for e in {-1, ..., max_e}, the unaffected
upper tail (bins at or above MW + spill_offset) is the control group, and bins
wholly below the e = -1 band are excluded from estimation.
"""

from __future__ import annotations

import calendar
import datetime as dt
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, EstimationError, IngestionError, InvalidRecordError

# Exposure-group sentinels for the unaffected upper tail and for bins below
# the lowest band. Finite groups use their own small-integer value.
GROUP_INF = 99
GROUP_EXCLUDED = -99

DEFAULT_BIN_WIDTH = 10
DEFAULT_GROUP_WIDTH = 100
DEFAULT_MAX_E = 3
DEFAULT_SPILL_OFFSET = 400
DEFAULT_WAGE_CEILING = 5000

OCCUPATIONS = (
    "Restaurant",
    "Light Work",
    "Retail",
    "Customer Service",
    "Professional",
    "Logistics",
    "Entertainment",
    "Office Work",
    "Event Staff",
)

# Time slots by shift start, half-open [start, end) in minutes since midnight.
TIME_SLOTS = (
    ("late_night", 0, 360),
    ("morning", 360, 720),
    ("afternoon", 720, 1080),
    ("evening", 1080, 1440),
)
TIME_SLOT_NAMES = tuple(name for name, _, _ in TIME_SLOTS)

PANEL_COLUMNS = [
    "prefecture_id",
    "bin_lower",
    "exposure_group",
    "month_t",
    "employment",
    "vacancies",
    "reimbursement_sum",
    "reimbursement_positive",
]
TOTALS_COLUMNS = [
    "prefecture_id",
    "month_t",
    "postings",
    "matches",
    "earnings_sum",
]

OUTCOME_KINDS = (
    "employment_share",
    "vacancy_share",
    "reimb_amount",
    "reimb_provision",
)


def group_label(e: int) -> str:
    """Human/CSV label for an exposure-group code."""
    if e == GROUP_INF:
        return "inf"
    if e == GROUP_EXCLUDED:
        return "excluded"
    return str(int(e))


@dataclass(frozen=True)
class ContractRecord:
    """One posted spot-work slot; the atomic input row."""

    record_id: str
    prefecture_id: int
    date: str  # ISO-8601 calendar day
    hourly_wage: int
    posted_hours: float
    transport_reimbursement: int
    occupation: str
    start_time: int  # minutes since midnight
    matched: bool

    def __post_init__(self):
        if self.hourly_wage < 1:
            raise InvalidRecordError(f"hourly_wage must be >= 1, got {self.hourly_wage}")
        if self.posted_hours <= 0:
            raise InvalidRecordError(f"posted_hours must be > 0, got {self.posted_hours}")
        if self.transport_reimbursement < 0:
            raise InvalidRecordError("transport_reimbursement must be >= 0")
        if self.occupation not in OCCUPATIONS:
            raise InvalidRecordError(f"unknown occupation {self.occupation!r}")
        if not 0 <= self.start_time < 1440:
            raise InvalidRecordError(f"start_time out of range: {self.start_time}")


def records_to_frame(records) -> pd.DataFrame:
    """Build a contracts frame from an iterable of ContractRecord."""
    rows = [
        (
            r.record_id,
            r.prefecture_id,
            r.date,
            r.hourly_wage,
            r.posted_hours,
            r.transport_reimbursement,
            r.occupation,
            r.start_time,
            r.matched,
        )
        for r in records
    ]
    return pd.DataFrame(
        rows,
        columns=[
            "record_id",
            "prefecture_id",
            "date",
            "hourly_wage",
            "posted_hours",
            "transport_reimbursement",
            "occupation",
            "start_time",
            "matched",
        ],
    )


@dataclass(frozen=True)
class StudyWindow:
    """Ordered calendar months mapped to t = 1..T with an event index t*.

    Relative time is l = t - event_index; l = 0 is the first month under the
    new minimum wage and l = -1 the reference month just before it.
    """

    months: tuple[str, ...]
    event_index: int = 7

    def __post_init__(self):
        if len(self.months) < 3:
            raise ConfigError("window needs at least 3 months")
        if not 2 <= self.event_index <= len(self.months):
            raise ConfigError(
                f"event_index {self.event_index} leaves no pre-event reference "
                f"month in a window of length {len(self.months)}"
            )
        for m in self.months:
            _parse_month(m)
        if list(self.months) != sorted(set(self.months)):
            raise ConfigError("window months must be strictly increasing")

    @classmethod
    def default(cls) -> "StudyWindow":
        return cls.from_bounds("2023-04", "2024-03", "2023-10")

    @classmethod
    def from_bounds(cls, start: str, end: str, event_month: str) -> "StudyWindow":
        months = list(_iter_months(start, end))
        if event_month not in months:
            raise ConfigError(f"event month {event_month} outside window {start}..{end}")
        return cls(months=tuple(months), event_index=months.index(event_month) + 1)

    @property
    def n_months(self) -> int:
        return len(self.months)

    @property
    def event_month(self) -> str:
        return self.months[self.event_index - 1]

    @property
    def start_date(self) -> dt.date:
        y, m = _parse_month(self.months[0])
        return dt.date(y, m, 1)

    def month_index(self, month: str):
        """1-based t for a YYYY-MM month, or None if outside the window."""
        try:
            return self.months.index(month) + 1
        except ValueError:
            return None

    def l_of(self, t: int) -> int:
        return t - self.event_index

    def t_of(self, l: int) -> int:
        return l + self.event_index

    def rel_periods(self) -> list[int]:
        return [t - self.event_index for t in range(1, self.n_months + 1)]

    def post_periods(self) -> list[int]:
        return [l for l in self.rel_periods() if l >= 0]

    def pre_periods(self) -> list[int]:
        return [l for l in self.rel_periods() if l < 0]


def _parse_month(month: str) -> tuple[int, int]:
    try:
        y, m = month.split("-")
        if len(y) != 4 or len(m) != 2:
            raise ValueError
        y, m = int(y), int(m)
        if not 1 <= m <= 12:
            raise ValueError
    except (ValueError, AttributeError):
        raise ConfigError(f"bad month {month!r}, expected YYYY-MM") from None
    return y, m


def _iter_months(start: str, end: str):
    y, m = _parse_month(start)
    ye, me = _parse_month(end)
    if (y, m) > (ye, me):
        raise ConfigError(f"window start {start} after end {end}")
    while (y, m) <= (ye, me):
        yield f"{y:04d}-{m:02d}"
        m += 1
        if m > 12:
            y, m = y + 1, 1


def days_in_month(month: str) -> int:
    y, m = _parse_month(month)
    return calendar.monthrange(y, m)[1]


@dataclass(frozen=True)
class MinWageSchedule:
    """Per-prefecture old/new minimum wage plus the shared event month."""

    entries: dict[int, tuple[int, int]] = field(default_factory=dict)  # pref -> (old, new)
    event_month: str = "2023-10"

    def __post_init__(self):
        for pref, (old, new) in self.entries.items():
            if not (new >= old > 0):
                raise ConfigError(
                    f"prefecture {pref}: need new_mw >= old_mw > 0, got {old}, {new}"
                )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "MinWageSchedule":
        if frame["prefecture_id"].duplicated().any():
            dup = int(frame["prefecture_id"][frame["prefecture_id"].duplicated()].iloc[0])
            raise IngestionError(f"duplicate schedule entry for prefecture {dup}")
        events = frame["event_month"].unique()
        if len(events) > 1:
            raise IngestionError(f"schedule has multiple event months: {sorted(events)}")
        entries = {
            int(r.prefecture_id): (int(r.old_mw), int(r.new_mw))
            for r in frame.itertuples()
        }
        return cls(entries=entries, event_month=str(events[0]))

    def to_frame(self) -> pd.DataFrame:
        rows = [
            (p, old, new, self.event_month)
            for p, (old, new) in sorted(self.entries.items())
        ]
        return pd.DataFrame(rows, columns=["prefecture_id", "old_mw", "new_mw", "event_month"])

    @property
    def prefectures(self) -> list[int]:
        return sorted(self.entries)

    def new_mw(self, prefecture_id: int) -> int:
        return self.entries[prefecture_id][1]

    def old_mw(self, prefecture_id: int) -> int:
        return self.entries[prefecture_id][0]

    def pct_change(self, prefecture_id: int) -> float:
        old, new = self.entries[prefecture_id]
        return new / old - 1.0


# ---------------------------------------------------------------------------
# Binning and exposure groups
# ---------------------------------------------------------------------------

def assign_bin(wage, new_mw, bin_width: int = DEFAULT_BIN_WIDTH,
               group_width: int = DEFAULT_GROUP_WIDTH):
    """Lower edge of the wage bin containing `wage`, anchored at `new_mw`.

    Bins are aligned to the prefecture's new minimum wage so that
    bin_lower = new_mw + bin_width * floor((wage - new_mw) / bin_width),
    hence wage lies in [bin_lower, bin_lower + bin_width - 1].
    """
    if group_width % bin_width != 0:
        raise ConfigError(f"bin_width {bin_width} must divide group_width {group_width}")
    wage_arr = np.asarray(wage)
    if np.any(wage_arr < 1):
        raise InvalidRecordError("hourly wage must be a positive integer (>= 1 JPY)")
    out = np.asarray(new_mw) + bin_width * ((wage_arr - np.asarray(new_mw)) // bin_width)
    if np.isscalar(wage) or wage_arr.ndim == 0:
        return int(out)
    return out


def assign_group(bin_lower, new_mw, group_width: int = DEFAULT_GROUP_WIDTH,
                 max_e: int = DEFAULT_MAX_E, spill_offset: int = DEFAULT_SPILL_OFFSET,
                 bin_width: int = DEFAULT_BIN_WIDTH):
    """Exposure group of an MW-aligned bin.

    Group e (an integer in [-1, max_e]) iff the bin lies wholly inside
    [new_mw + group_width*e, new_mw + group_width*e + group_width - 1];
    GROUP_INF iff bin_lower >= new_mw + spill_offset; GROUP_EXCLUDED iff the
    bin lies wholly below the e = -1 band.
    """
    if spill_offset != group_width * (max_e + 1):
        raise ConfigError(
            f"spill_offset {spill_offset} must equal group_width*(max_e+1) = "
            f"{group_width * (max_e + 1)}; otherwise groups would not tile the support"
        )
    offset = np.asarray(bin_lower) - np.asarray(new_mw)
    misaligned = offset % bin_width != 0
    straddling = (offset % group_width) + bin_width - 1 >= group_width
    if np.any(misaligned) or np.any(straddling):
        raise EstimationError(
            "bin straddles a group boundary; bins must come from assign_bin "
            "with the same prefecture's new minimum wage"
        )
    e = offset // group_width
    out = np.where(offset >= spill_offset, GROUP_INF, np.where(e < -1, GROUP_EXCLUDED, e))
    if np.isscalar(bin_lower) or np.asarray(bin_lower).ndim == 0:
        return int(out)
    return out.astype(np.int64)


def assign_time_slot(start_time):
    """Time-slot index by shift start: 0 late_night, 1 morning, 2 afternoon, 3 evening."""
    mins = np.asarray(start_time)
    if np.any((mins < 0) | (mins >= 1440)):
        raise InvalidRecordError("start_time must be in [0, 1440) minutes")
    out = mins // 360
    if np.isscalar(start_time) or mins.ndim == 0:
        return int(out)
    return out.astype(np.int64)


# ---------------------------------------------------------------------------
# Panel construction
# ---------------------------------------------------------------------------

@dataclass
class PanelBuild:
    """Result of build_panel: the bin-level panel, prefecture-month totals,
    and ingestion counters."""

    panel: pd.DataFrame
    totals: pd.DataFrame
    n_used: int
    skipped_out_of_window: int
    flagged_high_wage: int


def build_panel(records: pd.DataFrame, schedule: MinWageSchedule, window: StudyWindow,
                *, bin_width: int = DEFAULT_BIN_WIDTH,
                group_width: int = DEFAULT_GROUP_WIDTH,
                max_e: int = DEFAULT_MAX_E,
                spill_offset: int = DEFAULT_SPILL_OFFSET,
                wage_ceiling: int = DEFAULT_WAGE_CEILING) -> PanelBuild:
    """Aggregate contract records into the wage-bin panel and monthly totals.

    Every (prefecture, bin, month) cell over the prefecture's observed bin
    support is materialized, with zero counts where nothing was posted; cell
    means over groups would otherwise be biased upward. Records dated outside
    the window are skipped and counted; an unknown prefecture is an error.
    Wages above `wage_ceiling` are flagged (counted) but kept.
    """
    required = {"prefecture_id", "date", "hourly_wage", "matched",
                "transport_reimbursement", "posted_hours"}
    missing = required - set(records.columns)
    if missing:
        raise IngestionError(f"records frame missing columns {sorted(missing)}")

    if len(records) == 0:
        panel = pd.DataFrame(columns=PANEL_COLUMNS)
        totals = pd.DataFrame(columns=TOTALS_COLUMNS)
        return PanelBuild(panel, totals, 0, 0, 0)

    wages = records["hourly_wage"].to_numpy()
    if np.any(wages < 1):
        bad = int(np.flatnonzero(wages < 1)[0])
        raise InvalidRecordError(f"non-positive hourly wage at row {bad}")

    prefs = records["prefecture_id"].to_numpy()
    known = np.isin(prefs, schedule.prefectures)
    if not known.all():
        bad = int(np.flatnonzero(~known)[0])
        raise IngestionError(
            f"prefecture {prefs[bad]} has no minimum-wage schedule entry", row=bad
        )

    month_map = {m: i + 1 for i, m in enumerate(window.months)}
    months = records["date"].astype(str).str.slice(0, 7)
    t = months.map(month_map)
    in_window = t.notna().to_numpy()
    skipped = int((~in_window).sum())

    df = records.loc[in_window, ["prefecture_id", "hourly_wage", "matched",
                                 "transport_reimbursement"]].copy()
    if len(df) == 0:
        panel = pd.DataFrame(columns=PANEL_COLUMNS)
        totals = pd.DataFrame(columns=TOTALS_COLUMNS)
        return PanelBuild(panel, totals, 0, skipped, 0)
    df["month_t"] = t[in_window].astype(int).to_numpy()

    mw = df["prefecture_id"].map({p: schedule.new_mw(p) for p in schedule.prefectures})
    df["bin_lower"] = assign_bin(df["hourly_wage"].to_numpy(), mw.to_numpy(),
                                 bin_width, group_width)
    flagged = int((df["hourly_wage"] > wage_ceiling).sum())

    matched = df["matched"].to_numpy().astype(np.int64)
    reimb = df["transport_reimbursement"].to_numpy()
    df["employment"] = matched
    df["reimbursement_sum"] = reimb * matched
    df["reimbursement_positive"] = ((reimb > 0) & (matched == 1)).astype(np.int64)

    grouped = (
        df.groupby(["prefecture_id", "bin_lower", "month_t"], sort=True)
        .agg(
            employment=("employment", "sum"),
            vacancies=("employment", "size"),
            reimbursement_sum=("reimbursement_sum", "sum"),
            reimbursement_positive=("reimbursement_positive", "sum"),
        )
    )

    # Zero-fill: every observed bin of a prefecture exists in all window months.
    pieces = []
    all_t = range(1, window.n_months + 1)
    for pref, sub in grouped.groupby(level="prefecture_id", sort=True):
        bins = sub.index.get_level_values("bin_lower").unique().sort_values()
        full = pd.MultiIndex.from_product(
            [[pref], bins, all_t], names=["prefecture_id", "bin_lower", "month_t"]
        )
        pieces.append(sub.reindex(full, fill_value=0))
    panel = pd.concat(pieces).reset_index()

    panel_mw = panel["prefecture_id"].map(
        {p: schedule.new_mw(p) for p in schedule.prefectures}
    )
    panel["exposure_group"] = assign_group(
        panel["bin_lower"].to_numpy(), panel_mw.to_numpy(),
        group_width, max_e, spill_offset, bin_width,
    )
    panel = panel[PANEL_COLUMNS].sort_values(
        ["prefecture_id", "bin_lower", "month_t"]
    ).reset_index(drop=True)

    earnings = (df["hourly_wage"].to_numpy(dtype=float)
                * records.loc[in_window, "posted_hours"].to_numpy()
                * matched)
    tdf = pd.DataFrame({
        "prefecture_id": df["prefecture_id"].to_numpy(),
        "month_t": df["month_t"].to_numpy(),
        "postings": 1,
        "matches": matched,
        "earnings_sum": earnings,
    })
    totals = (
        tdf.groupby(["prefecture_id", "month_t"], sort=True)
        .agg(postings=("postings", "sum"), matches=("matches", "sum"),
             earnings_sum=("earnings_sum", "sum"))
    )
    full = pd.MultiIndex.from_product(
        [sorted(df["prefecture_id"].unique()), all_t],
        names=["prefecture_id", "month_t"],
    )
    totals = totals.reindex(full, fill_value=0).reset_index()
    totals = totals[TOTALS_COLUMNS]

    return PanelBuild(panel, totals, int(len(df)), skipped, flagged)


def outcome_series(panel: pd.DataFrame, totals: pd.DataFrame, kind: str,
                   *, per_match: bool = False) -> pd.DataFrame:
    """Bin-level outcome y for the event-study regression.

    employment_share: employment / N;  vacancy_share: vacancies / N;
    reimb_amount: reimbursement_sum / N (JPY per posting, zero when no
    allowance is provided); reimb_provision: reimbursement_positive / N.
    N is the prefecture-month posting count. With per_match=True the two
    reimbursement outcomes divide by bin employment instead (bins with zero
    employment are dropped and counted alongside the zero-N drops).

    Observations in prefecture-months with N = 0 are dropped; the count is
    recorded in the result's .attrs["dropped_zero_n"].
    """
    if kind not in OUTCOME_KINDS:
        raise ConfigError(f"unknown outcome kind {kind!r}, expected one of {OUTCOME_KINDS}")
    merged = panel.merge(totals[["prefecture_id", "month_t", "postings"]],
                         on=["prefecture_id", "month_t"], how="left", validate="m:1")
    if merged["postings"].isna().any():
        raise IngestionError("totals do not cover every (prefecture, month) in the panel")

    keep = merged["postings"] > 0
    dropped = int((~keep).sum())
    merged = merged[keep]

    numerators = {
        "employment_share": "employment",
        "vacancy_share": "vacancies",
        "reimb_amount": "reimbursement_sum",
        "reimb_provision": "reimbursement_positive",
    }
    num = merged[numerators[kind]].astype(float)
    if per_match and kind in ("reimb_amount", "reimb_provision"):
        denom = merged["employment"].astype(float)
        ok = denom > 0
        dropped += int((~ok).sum())
        merged, num, denom = merged[ok], num[ok], denom[ok]
        y = num / denom
    else:
        y = num / merged["postings"].astype(float)

    out = merged[["prefecture_id", "bin_lower", "exposure_group", "month_t"]].copy()
    out["y"] = y
    out = out.reset_index(drop=True)
    out.attrs["dropped_zero_n"] = dropped
    out.attrs["kind"] = kind
    return out


# ---------------------------------------------------------------------------
# Descriptive distributions and platform metrics
# ---------------------------------------------------------------------------

HOURS_BIN_WIDTH = 1.0
REIMB_BIN_WIDTH = 100

DISTRIBUTION_AXES = ("wage", "hours", "reimbursement")


def _axis_bins(records, schedule, axis):
    if axis == "wage":
        mw = records["prefecture_id"].map(
            {p: schedule.new_mw(p) for p in schedule.prefectures}
        )
        return assign_bin(records["hourly_wage"].to_numpy(), mw.to_numpy())
    if axis == "hours":
        return np.floor(records["posted_hours"].to_numpy() / HOURS_BIN_WIDTH) * HOURS_BIN_WIDTH
    if axis == "reimbursement":
        r = records["transport_reimbursement"].to_numpy()
        return (r // REIMB_BIN_WIDTH) * REIMB_BIN_WIDTH
    raise ConfigError(f"unknown axis {axis!r}, expected one of {DISTRIBUTION_AXES}")


def distribution_tables(records: pd.DataFrame, schedule: MinWageSchedule,
                        window: StudyWindow, axis: str, months=None,
                        prefecture: int | None = None) -> pd.DataFrame:
    """Per-bin employment counts by month along one axis (tidy: bin, month_t, employment)."""
    df = records[records["matched"].astype(bool)]
    if prefecture is not None:
        df = df[df["prefecture_id"] == prefecture]
    month_map = {m: i + 1 for i, m in enumerate(window.months)}
    t = df["date"].astype(str).str.slice(0, 7).map(month_map)
    df = df[t.notna()]
    t = t[t.notna()].astype(int)
    if months is not None:
        for m in months:
            if m not in month_map:
                raise ConfigError(f"month {m} outside the study window")
        wanted = {month_map[m] for m in months}
        keep = t.isin(wanted)
        df, t = df[keep], t[keep]

    out = pd.DataFrame({"bin": _axis_bins(df, schedule, axis), "month_t": t.to_numpy()})
    table = out.groupby(["bin", "month_t"], sort=True).size().rename("employment").reset_index()
    return table


def change_grid(records: pd.DataFrame, schedule: MinWageSchedule, window: StudyWindow,
                other_axis: str, month_a: str, month_b: str,
                prefecture: int | None = None) -> pd.DataFrame:
    """2D grid of employment-count differences (month_b - month_a) over
    (wage bin, other-axis bin). Identical months yield an all-zero grid."""
    if other_axis not in ("hours", "reimbursement"):
        raise ConfigError("other_axis must be 'hours' or 'reimbursement'")
    for m in (month_a, month_b):
        if window.month_index(m) is None:
            raise ConfigError(f"month {m} outside the study window")

    df = records[records["matched"].astype(bool)]
    if prefecture is not None:
        df = df[df["prefecture_id"] == prefecture]
    months = df["date"].astype(str).str.slice(0, 7)

    def counts(month):
        sub = df[months == month]
        if len(sub) == 0:
            return pd.Series(dtype=np.int64)
        grid = pd.DataFrame({
            "wage_bin": _axis_bins(sub, schedule, "wage"),
            "other_bin": _axis_bins(sub, schedule, other_axis),
        })
        return grid.groupby(["wage_bin", "other_bin"], sort=True).size()

    ca, cb = counts(month_a), counts(month_b)
    support = ca.index.union(cb.index)
    diff = cb.reindex(support, fill_value=0) - ca.reindex(support, fill_value=0)
    out = diff.rename("diff").reset_index()
    if len(out) == 0:
        out = pd.DataFrame(columns=["wage_bin", "other_bin", "diff"])
    return out


def macro_metrics(totals: pd.DataFrame, users_by_month, window: StudyWindow) -> pd.DataFrame:
    """Monthly platform metrics: tightness V/U, job finding H/U, worker finding H/V.

    A rate with a zero denominator is reported absent (NaN), not 0.
    """
    if isinstance(users_by_month, pd.DataFrame):
        users_by_month = dict(zip(users_by_month["month"], users_by_month["users"]))
    missing = [m for m in window.months if m not in users_by_month]
    if missing:
        raise IngestionError(f"users series missing months {missing}")

    agg = totals.groupby("month_t", sort=True).agg(
        vacancies=("postings", "sum"), hires=("matches", "sum")
    )
    agg = agg.reindex(range(1, window.n_months + 1), fill_value=0)

    rows = []
    for t, row in agg.iterrows():
        month = window.months[t - 1]
        u = float(users_by_month[month])
        v, h = float(row["vacancies"]), float(row["hires"])
        rows.append({
            "month": month,
            "users": u,
            "vacancies": v,
            "hires": h,
            "tightness": v / u if u > 0 else np.nan,
            "job_finding": h / u if u > 0 else np.nan,
            "worker_finding": h / v if v > 0 else np.nan,
        })
    return pd.DataFrame(rows)


def weekly_earnings_panel(records: pd.DataFrame, window: StudyWindow) -> pd.DataFrame:
    """Prefecture-week total earnings (wage x hours over matched records).

    Weeks are 7-day blocks counted from the first day of the window; the
    emitted week label is the block's start date.
    """
    df = records[records["matched"].astype(bool)]
    month_map = {m: i + 1 for i, m in enumerate(window.months)}
    in_window = df["date"].astype(str).str.slice(0, 7).map(month_map).notna()
    df = df[in_window]
    dates = pd.to_datetime(df["date"])
    start = pd.Timestamp(window.start_date)
    week = ((dates - start).dt.days // 7).to_numpy()
    earnings = df["hourly_wage"].to_numpy() * df["posted_hours"].to_numpy()
    out = pd.DataFrame({
        "prefecture_id": df["prefecture_id"].to_numpy(),
        "week": week,
        "earnings": earnings,
    })
    agg = out.groupby(["prefecture_id", "week"], sort=True)["earnings"].sum().reset_index()
    agg["week_start"] = [
        (start + pd.Timedelta(days=7 * int(w))).date().isoformat() for w in agg["week"]
    ]
    return agg[["prefecture_id", "week", "week_start", "earnings"]]
