"""Saturated event-study DID estimator with wage-bin-clustered inference.

The design interacts relative-period indicators (all l except the reference
period) with exposure-group indicators (all groups except the upper-tail
control), plus group and time fixed effects. Because the specification is
saturated, the least-squares coefficients equal difference-in-differences
contrasts of (group, month) cell means:

    mu[l, e] = (ybar[e, t*+l] - ybar[e, t_ref]) - (ybar[inf, t*+l] - ybar[inf, t_ref])

`fit_event_study` exposes both computation paths; they agree to floating
precision on any input, which the test suite enforces as the central
numerical property. Also here: a generic two-way fixed-effects regression
for prefecture-week earnings with heteroskedasticity-robust intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import chi2, norm

from .errors import ConfigError, EstimationError
from .model import GROUP_EXCLUDED, GROUP_INF, StudyWindow, group_label

DEFAULT_TREATED_GROUPS = (-1, 0, 1, 2, 3)


def observations_from_outcomes(outcomes: pd.DataFrame) -> pd.DataFrame:
    """Adapt a model.outcome_series frame to estimator observations.

    Renames exposure_group/month_t to e/t and labels each wage bin
    (prefecture, bin_lower) as one cluster.
    """
    obs = pd.DataFrame({
        "e": outcomes["exposure_group"].to_numpy(),
        "t": outcomes["month_t"].to_numpy(),
        "y": outcomes["y"].to_numpy(dtype=float),
        "cluster": outcomes["prefecture_id"].astype(str) + ":"
                   + outcomes["bin_lower"].astype(str),
    })
    return obs


@dataclass
class EventStudyFit:
    """Fitted event study: coefficient grid, fixed effects, and bookkeeping
    needed for clustered inference and cluster bootstrap."""

    window: StudyWindow
    treated_groups: tuple[int, ...]
    reference_l: int
    mu_keys: list[tuple[int, int]]          # (l, e) in canonical order
    mu: np.ndarray                          # flat, aligned with mu_keys
    cell_means: dict[tuple[int, int], float]  # (e, t) -> mean y
    alpha: dict[int, float]
    lam: dict[int, float]
    intercept: float
    n_obs: int
    n_clusters: int
    method: str
    vcov: np.ndarray | None = None          # mu-block clustered covariance
    vcov_full: np.ndarray | None = field(default=None, repr=False)
    vcov_variant: str | None = None
    _mu_index: dict[tuple[int, int], int] = field(default_factory=dict, repr=False)
    _arrays: dict[str, np.ndarray] | None = field(default=None, repr=False)

    def mu_value(self, l: int, e: int) -> float:
        return float(self.mu[self._mu_index[(l, e)]])

    def mu_se(self, l: int, e: int) -> float:
        if self.vcov is None:
            return float("nan")
        k = self._mu_index[(l, e)]
        # round-off can leave a numerically-zero variance slightly negative
        return float(np.sqrt(max(self.vcov[k, k], 0.0)))

    def contrast_se(self, weights: np.ndarray) -> float:
        """Standard error of a linear combination weights @ mu."""
        if self.vcov is None:
            return float("nan")
        return float(np.sqrt(max(weights @ self.vcov @ weights, 0.0)))

    def mu_frame(self) -> pd.DataFrame:
        rows = []
        for (l, e), k in sorted(self._mu_index.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            est = float(self.mu[k])
            se = self.mu_se(l, e)
            if np.isnan(se):
                z = np.nan
            elif se > 0:
                z = est / se
            else:
                z = 0.0 if est == 0 else np.inf
            rows.append({"e": e, "l": l, "estimate": est, "se": se, "z": z})
        return pd.DataFrame(rows)

    @property
    def residuals(self) -> np.ndarray:
        if self._arrays is None:
            raise EstimationError("residuals unavailable on a reduced fit")
        return self._arrays["resid"]


def _validate_groups(obs_e: np.ndarray, treated: tuple[int, ...]):
    allowed = set(treated) | {GROUP_INF}
    present = set(int(v) for v in np.unique(obs_e))
    stray = present - allowed
    if stray:
        raise EstimationError(
            f"observations contain groups {sorted(stray)} outside the design "
            f"(treated={treated}, control={GROUP_INF})"
        )


def _encode(obs: pd.DataFrame, window: StudyWindow, treated: tuple[int, ...],
            weight_col: str | None = None):
    e_raw = obs["e"].to_numpy()
    keep = e_raw != GROUP_EXCLUDED
    obs = obs.loc[keep]
    e_raw = e_raw[keep]
    if len(e_raw) == 0:
        raise EstimationError("no observations left after dropping excluded bins")
    _validate_groups(e_raw, treated)

    t = obs["t"].to_numpy()
    if t.min() < 1 or t.max() > window.n_months:
        raise EstimationError("observation month outside the study window")

    # map group value -> code with the control group last
    group_order = list(treated) + [GROUP_INF]
    lut = np.full(512, -1, dtype=np.int64)
    for i, g in enumerate(group_order):
        lut[g + 256] = i
    e_code = lut[e_raw.astype(np.int64) + 256]
    t_code = t.astype(np.int64) - 1
    y = obs["y"].to_numpy(dtype=float)
    cluster = obs["cluster"].to_numpy() if "cluster" in obs.columns else None
    weights = None
    if weight_col is not None:
        if weight_col not in obs.columns:
            raise ConfigError(f"weight column {weight_col!r} missing from observations")
        weights = obs[weight_col].to_numpy(dtype=float)
        if np.any(weights < 0) or weights.sum() <= 0:
            raise EstimationError("weights must be non-negative with positive total")
    return e_code, t_code, y, cluster, weights, int(keep.sum()), int((~keep).sum())


def _cell_stats(e_code, t_code, y, n_groups_total, T, weights=None):
    cell = e_code * T + t_code
    w = np.ones_like(y) if weights is None else weights
    counts = np.bincount(cell, weights=w, minlength=n_groups_total * T)
    sums = np.bincount(cell, weights=w * y, minlength=n_groups_total * T)
    return cell, counts, sums


def _require_full_cells(counts, treated, T, window):
    n_groups_total = len(treated) + 1
    labels = [group_label(g) for g in list(treated) + [GROUP_INF]]
    for gi in range(n_groups_total):
        for tc in range(T):
            if counts[gi * T + tc] == 0:
                raise EstimationError(
                    f"empty cell (e={labels[gi]}, t={tc + 1}); every "
                    "(group, month) cell must contain at least one observation"
                )


def _design_matrix(e_code, t_code, n_treated, T, t_ref_code):
    """Saturated dummy design: intercept, group FE (control omitted), time FE
    (reference month omitted), and group x period interactions (reference
    period and control omitted). Column count equals the number of cells."""
    n = len(e_code)
    nonref_t = [tc for tc in range(T) if tc != t_ref_code]
    k = 1 + n_treated + (T - 1) + n_treated * (T - 1)
    X = np.zeros((n, k))
    X[:, 0] = 1.0
    for g in range(n_treated):
        X[e_code == g, 1 + g] = 1.0
    for j, tc in enumerate(nonref_t):
        X[t_code == tc, 1 + n_treated + j] = 1.0
    off = 1 + n_treated + (T - 1)
    for g in range(n_treated):
        gm = e_code == g
        for j, tc in enumerate(nonref_t):
            X[gm & (t_code == tc), off + g * (T - 1) + j] = 1.0
    return X, off


def fit_event_study(obs: pd.DataFrame, window: StudyWindow, *,
                    method: str = "cell_means",
                    treated_groups: tuple[int, ...] = DEFAULT_TREATED_GROUPS,
                    reference_l: int = -1,
                    weight_col: str | None = None) -> EventStudyFit:
    """Fit the saturated event-study regression.

    obs must carry columns e (exposure-group code, control = GROUP_INF,
    rows with GROUP_EXCLUDED are dropped), t (month index 1..T), y, and
    optionally cluster (wage-bin label) for later inference. `method`
    selects the computation path: 'cell_means' evaluates the DID contrasts
    of cell means directly; 'dummy_ols' solves the full dummy regression by
    orthogonal decomposition. The two agree to floating precision.

    Estimation is unweighted by default; passing weight_col (e.g. an
    employment-weight column) switches both paths to the weighted fit.
    """
    if method not in ("cell_means", "dummy_ols"):
        raise ConfigError(f"unknown method {method!r}")
    treated = tuple(sorted(set(int(g) for g in treated_groups)))
    if GROUP_INF in treated or GROUP_EXCLUDED in treated:
        raise ConfigError("treated_groups must be finite exposure groups")
    if reference_l >= 0:
        raise ConfigError("reference_l must be a pre-event period (l < 0)")
    t_ref = window.t_of(reference_l)
    if not 1 <= t_ref <= window.n_months:
        raise ConfigError(f"reference period l={reference_l} falls outside the window")

    e_code, t_code, y, cluster, weights, n_obs, _ = _encode(
        obs, window, treated, weight_col)
    T = window.n_months
    n_treated = len(treated)
    n_groups_total = n_treated + 1

    cell, counts, sums = _cell_stats(e_code, t_code, y, n_groups_total, T, weights)
    _require_full_cells(counts, treated, T, window)
    means = sums / counts
    M = means.reshape(n_groups_total, T)

    t_ref_code = t_ref - 1
    ls = [l for l in window.rel_periods() if l != reference_l]
    mu_keys = [(l, e) for e in treated for l in ls]

    ctrl = M[n_treated]
    mu_cm = np.array([
        (M[treated.index(e), window.t_of(l) - 1] - M[treated.index(e), t_ref_code])
        - (ctrl[window.t_of(l) - 1] - ctrl[t_ref_code])
        for (l, e) in mu_keys
    ])

    if method == "dummy_ols":
        X, off = _design_matrix(e_code, t_code, n_treated, T, t_ref_code)
        if weights is None:
            Xw, yw = X, y
        else:
            root = np.sqrt(weights)
            Xw, yw = X * root[:, None], y * root
        params, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=None)
        if rank < X.shape[1]:
            raise EstimationError(
                f"design is rank deficient beyond the designed omitted "
                f"categories (rank {rank} < {X.shape[1]} columns)"
            )
        mu = params[off:]
    else:
        mu = mu_cm

    resid = y - means[cell]
    alpha = {e: float(M[i, t_ref_code] - ctrl[t_ref_code]) for i, e in enumerate(treated)}
    alpha[GROUP_INF] = 0.0
    lam = {t: float(ctrl[t - 1] - ctrl[t_ref_code]) for t in range(1, T + 1)}
    intercept = float(ctrl[t_ref_code])
    cell_means = {
        (e, t): float(M[i, t - 1])
        for i, e in enumerate(list(treated) + [GROUP_INF])
        for t in range(1, T + 1)
    }

    n_clusters = 0
    arrays = {"e_code": e_code, "t_code": t_code, "y": y, "resid": resid}
    if weights is not None:
        arrays["weights"] = weights
    if cluster is not None:
        codes, uniques = pd.factorize(cluster, sort=True)
        arrays["cluster_code"] = codes
        n_clusters = len(uniques)

    fit = EventStudyFit(
        window=window,
        treated_groups=treated,
        reference_l=reference_l,
        mu_keys=mu_keys,
        mu=np.asarray(mu, dtype=float),
        cell_means=cell_means,
        alpha=alpha,
        lam=lam,
        intercept=intercept,
        n_obs=n_obs,
        n_clusters=n_clusters,
        method=method,
        _mu_index={key: i for i, key in enumerate(mu_keys)},
        _arrays=arrays,
    )
    return fit


def cluster_vcov(fit: EventStudyFit, *, variant: str = "CR1") -> np.ndarray:
    """Cluster-robust sandwich covariance of the coefficient grid.

    CR1 scales the plain sandwich by G/(G-1) * (n-1)/(n-k); CR0 applies no
    small-sample factor. The mu-block is stored on the fit and returned.
    """
    if variant not in ("CR0", "CR1"):
        raise ConfigError(f"unknown vcov variant {variant!r}")
    if fit._arrays is None or "cluster_code" not in fit._arrays:
        raise EstimationError("fit carries no cluster assignment")
    e_code = fit._arrays["e_code"]
    t_code = fit._arrays["t_code"]
    resid = fit._arrays["resid"]
    g_code = fit._arrays["cluster_code"]

    T = fit.window.n_months
    n_treated = len(fit.treated_groups)
    t_ref_code = fit.window.t_of(fit.reference_l) - 1
    X, off = _design_matrix(e_code, t_code, n_treated, T, t_ref_code)
    if "weights" in fit._arrays:
        root = np.sqrt(fit._arrays["weights"])
        X = X * root[:, None]
        resid = resid * root
    n, k = X.shape
    G = int(g_code.max()) + 1 if len(g_code) else 0
    if G < 2:
        raise EstimationError(f"need at least 2 clusters, got {G}")
    if n <= k:
        raise EstimationError(f"need more observations than parameters (n={n}, k={k})")

    bread = np.linalg.inv(X.T @ X)
    Xe = X * resid[:, None]
    order = np.argsort(g_code, kind="stable")
    sorted_g = g_code[order]
    starts = np.flatnonzero(np.r_[True, sorted_g[1:] != sorted_g[:-1]])
    S = np.add.reduceat(Xe[order], starts, axis=0)
    meat = S.T @ S
    V = bread @ meat @ bread
    if variant == "CR1":
        V *= (G / (G - 1.0)) * ((n - 1.0) / (n - k))
    V = (V + V.T) / 2.0

    fit.vcov_full = V
    fit.vcov = V[off:, off:]
    fit.vcov_variant = variant
    return fit.vcov


@dataclass
class PretrendReport:
    """Pre-period coefficients with per-cell z statistics and a joint Wald test."""

    table: pd.DataFrame
    joint_stat: float
    joint_df: int
    joint_p: float


def pretrend_report(fit: EventStudyFit) -> PretrendReport:
    """Per-coefficient and joint tests that all pre-event effects are zero."""
    if fit.vcov is None:
        cluster_vcov(fit)
    pre_idx = [i for i, (l, _) in enumerate(fit.mu_keys) if l < 0]
    rows = []
    for i in pre_idx:
        l, e = fit.mu_keys[i]
        est = float(fit.mu[i])
        se = float(np.sqrt(max(fit.vcov[i, i], 0.0)))
        if se > 0:
            z = est / se
        else:
            z = 0.0 if est == 0 else np.inf
        p = 2 * norm.sf(abs(z)) if np.isfinite(z) else 0.0
        rows.append({"e": e, "l": l, "estimate": est, "se": se, "z": z, "p": p})
    table = pd.DataFrame(rows)

    m = fit.mu[pre_idx]
    V = fit.vcov[np.ix_(pre_idx, pre_idx)]
    if np.allclose(m, 0.0) and np.allclose(V, 0.0):
        stat = 0.0
    else:
        stat = float(m @ np.linalg.pinv(V) @ m)
    df = len(pre_idx)
    return PretrendReport(table=table, joint_stat=stat, joint_df=df,
                          joint_p=float(chi2.sf(stat, df)) if df else 1.0)


# ---------------------------------------------------------------------------
# Two-way fixed effects for prefecture-week earnings
# ---------------------------------------------------------------------------

@dataclass
class TwoWayFeFit:
    """Unit and time fixed effects; time effects are relative to the first
    period and carry heteroskedasticity-robust 95% intervals."""

    time_effects: pd.DataFrame
    unit_effects: dict
    reference_time: object
    resid_var: float
    n_obs: int
    dropped_times: list


def fit_two_way_fe(panel: pd.DataFrame, *, unit_col: str = "prefecture_id",
                   time_col: str = "week_start", y_col: str = "earnings",
                   expected_times=None) -> TwoWayFeFit:
    """OLS of y on unit and time dummies with HC1-robust time-effect intervals."""
    df = panel[[unit_col, time_col, y_col]].dropna()
    units = sorted(df[unit_col].unique())
    times = sorted(df[time_col].unique())
    dropped = []
    if expected_times is not None:
        dropped = [t for t in expected_times if t not in set(times)]
    if len(units) < 1 or len(times) < 2:
        raise EstimationError("two-way FE needs at least one unit and two periods")

    u_code = df[unit_col].map({u: i for i, u in enumerate(units)}).to_numpy()
    t_code = df[time_col].map({t: i for i, t in enumerate(times)}).to_numpy()
    y = df[y_col].to_numpy(dtype=float)
    n = len(y)
    k = 1 + (len(units) - 1) + (len(times) - 1)
    X = np.zeros((n, k))
    X[:, 0] = 1.0
    for i in range(1, len(units)):
        X[u_code == i, i] = 1.0
    off = len(units)
    for j in range(1, len(times)):
        X[t_code == j, off + j - 1] = 1.0

    params, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < k:
        raise EstimationError("two-way FE design is rank deficient")
    resid = y - X @ params
    if n > k:
        bread = np.linalg.inv(X.T @ X)
        meat = (X * (resid ** 2)[:, None]).T @ X
        V = bread @ meat @ bread * (n / (n - k))
        resid_var = float(resid @ resid / (n - k))
    else:
        V = np.zeros((k, k))
        resid_var = 0.0

    zq = norm.ppf(0.975)
    rows = [{"time": times[0], "estimate": 0.0, "se": 0.0,
             "ci_low": 0.0, "ci_high": 0.0}]
    for j in range(1, len(times)):
        est = float(params[off + j - 1])
        se = float(np.sqrt(max(V[off + j - 1, off + j - 1], 0.0)))
        rows.append({"time": times[j], "estimate": est, "se": se,
                     "ci_low": est - zq * se, "ci_high": est + zq * se})
    unit_effects = {units[0]: 0.0}
    unit_effects.update({units[i]: float(params[i]) for i in range(1, len(units))})

    return TwoWayFeFit(
        time_effects=pd.DataFrame(rows),
        unit_effects=unit_effects,
        reference_time=times[0],
        resid_var=resid_var,
        n_obs=n,
        dropped_times=dropped,
    )
