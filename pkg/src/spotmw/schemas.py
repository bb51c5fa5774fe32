"""CSV schemas for the external interfaces.

Contracts CSV: record_id, prefecture_id, date (ISO-8601), hourly_wage,
posted_hours, transport_reimbursement, occupation, start_time (HH:MM),
matched (0/1). Schedule CSV: prefecture_id, old_mw, new_mw, event_month
(YYYY-MM). Users CSV: month, users. All outputs are UTF-8, LF-terminated
tidy CSV with a fixed column order, written atomically (temp file + rename).
"""

from __future__ import annotations

import os
import tempfile

import numpy as np
import pandas as pd

from .errors import SchemaError
from .model import OCCUPATIONS, MinWageSchedule

CONTRACT_COLUMNS = [
    "record_id",
    "prefecture_id",
    "date",
    "hourly_wage",
    "posted_hours",
    "transport_reimbursement",
    "occupation",
    "start_time",
    "matched",
]
SCHEDULE_COLUMNS = ["prefecture_id", "old_mw", "new_mw", "event_month"]
USERS_COLUMNS = ["month", "users"]


def _check_header(frame: pd.DataFrame, expected: list[str], path) -> None:
    if list(frame.columns) != expected:
        raise SchemaError(
            f"{path}: expected header {expected}, got {list(frame.columns)}"
        )


def _first_bad_row(mask: np.ndarray) -> int:
    # +2: header line plus 1-based numbering, matching what a user sees in the file
    return int(np.flatnonzero(mask)[0]) + 2


def minutes_to_hhmm(minutes) -> pd.Series:
    m = pd.Series(np.asarray(minutes, dtype=np.int64))
    return (m // 60).map("{:02d}".format) + ":" + (m % 60).map("{:02d}".format)


def hhmm_to_minutes(values: pd.Series, path) -> np.ndarray:
    parts = values.astype(str).str.split(":", expand=True)
    bad = parts.isna().any(axis=1) | (parts.shape[1] != 2)
    if parts.shape[1] != 2 or bad.any():
        row = _first_bad_row(bad.to_numpy()) if parts.shape[1] == 2 else 2
        raise SchemaError(f"{path}: start_time must be HH:MM", row=row, column="start_time")
    try:
        hours = parts[0].astype(int)
        mins = parts[1].astype(int)
    except ValueError:
        raise SchemaError(f"{path}: non-numeric start_time", column="start_time") from None
    out = hours * 60 + mins
    bad = (out < 0) | (out >= 1440) | (mins < 0) | (mins >= 60)
    if bad.any():
        raise SchemaError(f"{path}: start_time out of range",
                          row=_first_bad_row(bad.to_numpy()), column="start_time")
    return out.to_numpy()


def read_contracts(path) -> pd.DataFrame:
    """Read and validate a contracts CSV into the in-memory records frame."""
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    _check_header(raw, CONTRACT_COLUMNS, path)

    out = pd.DataFrame({"record_id": raw["record_id"]})
    for col, caster in [("prefecture_id", int), ("hourly_wage", int),
                        ("transport_reimbursement", int)]:
        try:
            out[col] = raw[col].astype(np.int64)
        except ValueError:
            bad = pd.to_numeric(raw[col], errors="coerce").isna()
            raise SchemaError(f"{path}: non-integer value in {col}",
                              row=_first_bad_row(bad.to_numpy()), column=col) from None
    try:
        out["posted_hours"] = raw["posted_hours"].astype(float)
    except ValueError:
        bad = pd.to_numeric(raw["posted_hours"], errors="coerce").isna()
        raise SchemaError(f"{path}: non-numeric posted_hours",
                          row=_first_bad_row(bad.to_numpy()), column="posted_hours") from None

    out["date"] = raw["date"]
    bad = ~raw["date"].str.match(r"^\d{4}-\d{2}-\d{2}$")
    if bad.any():
        raise SchemaError(f"{path}: date must be ISO-8601 YYYY-MM-DD",
                          row=_first_bad_row(bad.to_numpy()), column="date")

    bad = ~raw["occupation"].isin(OCCUPATIONS)
    if bad.any():
        raise SchemaError(f"{path}: unknown occupation",
                          row=_first_bad_row(bad.to_numpy()), column="occupation")
    out["occupation"] = raw["occupation"]

    out["start_time"] = hhmm_to_minutes(raw["start_time"], path)

    bad = ~raw["matched"].isin(["0", "1"])
    if bad.any():
        raise SchemaError(f"{path}: matched must be 0 or 1",
                          row=_first_bad_row(bad.to_numpy()), column="matched")
    out["matched"] = raw["matched"] == "1"

    for col, low in [("hourly_wage", 1), ("posted_hours", np.nextafter(0, 1)),
                     ("transport_reimbursement", 0)]:
        bad = out[col].to_numpy() < low
        if bad.any():
            raise SchemaError(f"{path}: {col} below its lower bound",
                              row=_first_bad_row(bad), column=col)

    return out[CONTRACT_COLUMNS]


def write_contracts(records: pd.DataFrame, path) -> None:
    out = records.copy()
    out["start_time"] = minutes_to_hhmm(out["start_time"].to_numpy())
    out["matched"] = out["matched"].astype(bool).astype(int)
    write_csv(out[CONTRACT_COLUMNS], path)


def read_schedule(path) -> MinWageSchedule:
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    _check_header(raw, SCHEDULE_COLUMNS, path)
    frame = pd.DataFrame()
    for col in ("prefecture_id", "old_mw", "new_mw"):
        try:
            frame[col] = raw[col].astype(np.int64)
        except ValueError:
            bad = pd.to_numeric(raw[col], errors="coerce").isna()
            raise SchemaError(f"{path}: non-integer value in {col}",
                              row=_first_bad_row(bad.to_numpy()), column=col) from None
    bad = ~raw["event_month"].str.match(r"^\d{4}-\d{2}$")
    if bad.any():
        raise SchemaError(f"{path}: event_month must be YYYY-MM",
                          row=_first_bad_row(bad.to_numpy()), column="event_month")
    frame["event_month"] = raw["event_month"]
    bad = ~(frame["new_mw"] >= frame["old_mw"]) | ~(frame["old_mw"] > 0)
    if bad.any():
        raise SchemaError(f"{path}: need new_mw >= old_mw > 0",
                          row=_first_bad_row(bad.to_numpy()), column="new_mw")
    return MinWageSchedule.from_frame(frame)


def write_schedule(schedule: MinWageSchedule, path) -> None:
    write_csv(schedule.to_frame(), path)


def read_users(path) -> dict[str, int]:
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    _check_header(raw, USERS_COLUMNS, path)
    bad = ~raw["month"].str.match(r"^\d{4}-\d{2}$")
    if bad.any():
        raise SchemaError(f"{path}: month must be YYYY-MM",
                          row=_first_bad_row(bad.to_numpy()), column="month")
    try:
        users = raw["users"].astype(np.int64)
    except ValueError:
        bad = pd.to_numeric(raw["users"], errors="coerce").isna()
        raise SchemaError(f"{path}: non-integer users",
                          row=_first_bad_row(bad.to_numpy()), column="users") from None
    if raw["month"].duplicated().any():
        raise SchemaError(f"{path}: duplicate month in users series")
    return dict(zip(raw["month"], users))


def write_users(users_by_month: dict[str, int], path) -> None:
    frame = pd.DataFrame(sorted(users_by_month.items()), columns=USERS_COLUMNS)
    write_csv(frame, path)


def write_csv(frame: pd.DataFrame, path) -> None:
    """Write a tidy CSV atomically: UTF-8, LF line endings, no index."""
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)  # mkstemp defaults to owner-only
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            frame.to_csv(handle, index=False, lineterminator="\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
