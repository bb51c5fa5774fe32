import numpy as np
import pandas as pd
import pytest

from spotmw import EventStudyFit, MinWageSchedule, StudyWindow


@pytest.fixture
def window():
    return StudyWindow.default()


@pytest.fixture
def schedule():
    return MinWageSchedule(entries={13: (1072, 1113), 27: (964, 1004)},
                           event_month="2023-10")


def make_record(record_id="r1", prefecture_id=13, date="2023-04-10",
                hourly_wage=1113, posted_hours=4.0, transport_reimbursement=500,
                occupation="Restaurant", start_time=540, matched=True):
    return {
        "record_id": record_id,
        "prefecture_id": prefecture_id,
        "date": date,
        "hourly_wage": hourly_wage,
        "posted_hours": posted_hours,
        "transport_reimbursement": transport_reimbursement,
        "occupation": occupation,
        "start_time": start_time,
        "matched": matched,
    }


def records_frame(rows):
    made = [make_record(record_id=f"r{i}", **row) for i, row in enumerate(rows)]
    if not made:
        return pd.DataFrame(columns=list(make_record().keys()))
    return pd.DataFrame(made)


def obs_from_cells(cell_values, window, n_per_cell=2, noise=0.0, seed=0):
    """Observation frame with given (e, t) -> mean and n_per_cell rows per cell."""
    rng = np.random.default_rng(seed)
    rows = []
    for (e, t), value in cell_values.items():
        for i in range(n_per_cell):
            rows.append({
                "e": e,
                "t": t,
                "y": value + (noise * rng.standard_normal() if noise else 0.0),
                "cluster": f"{e}:{i}",
            })
    return pd.DataFrame(rows)


def fit_from_mu(mu_by_key, window, treated=(-1, 0, 1, 2, 3), reference_l=-1,
                vcov=None):
    """Assemble a reduced EventStudyFit directly from a coefficient grid."""
    ls = [l for l in window.rel_periods() if l != reference_l]
    mu_keys = [(l, e) for e in treated for l in ls]
    mu = np.array([mu_by_key.get(key, 0.0) for key in mu_keys])
    fit = EventStudyFit(
        window=window, treated_groups=tuple(treated), reference_l=reference_l,
        mu_keys=mu_keys, mu=mu, cell_means={}, alpha={}, lam={}, intercept=0.0,
        n_obs=0, n_clusters=0, method="cell_means",
        _mu_index={key: i for i, key in enumerate(mu_keys)},
    )
    if vcov is not None:
        fit.vcov = vcov
    return fit
