"""Missing/excess-jobs aggregation, the elasticity battery, and the cluster
bootstrap.

Aggregates of the coefficient grid, per post-event period l:
    delta_a_l = sum over e >= 0 of mu[l, e]     (excess jobs)
    delta_b_l = mu[l, -1]                        (missing jobs)
    delta_e_l = delta_a_l + delta_b_l
and their averages over the post window (delta_a, delta_b, delta_a_e per
group). The total effect is delta_e = delta_a + delta_b. Standard errors of
these linear combinations come straight from the clustered covariance.

The elasticity battery divides the total effect by the (posting-weighted)
minimum-wage change and by the pre-event share of jobs below the new
minimum, and computes the affected group's wage change from a wage-bill
accounting identity that values each exposure band at its upper wage edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, EstimationError
from .estimator import EventStudyFit, _encode
from .model import GROUP_INF, MinWageSchedule, StudyWindow


@dataclass
class DecompositionResult:
    """Per-period and per-group effect aggregates with standard errors."""

    by_l: pd.DataFrame
    by_e: pd.DataFrame
    delta_a: float
    delta_a_se: float
    delta_b: float | None
    delta_b_se: float | None
    delta_e: float | None
    delta_e_se: float | None
    post_periods: tuple[int, ...]
    above_groups: tuple[int, ...]
    includes_below: bool


def _weight_vector(fit: EventStudyFit, combo: dict) -> np.ndarray:
    w = np.zeros(len(fit.mu))
    for key, val in combo.items():
        if key not in fit._mu_index:
            raise EstimationError(f"coefficient for (l={key[0]}, e={key[1]}) missing from fit")
        w[fit._mu_index[key]] = val
    return w


def aggregate(fit: EventStudyFit, *, include_below: bool = True,
              below_group: int = -1) -> DecompositionResult:
    """Aggregate the coefficient grid into missing/excess-jobs series.

    With include_below=False (amenity outcomes, where the below-minimum band
    empties after the event) only the at-or-above groups are aggregated and
    the missing-jobs side is reported absent.
    """
    post_ls = fit.window.post_periods()
    if not post_ls:
        raise EstimationError("window has no post-event periods")
    above = tuple(e for e in fit.treated_groups if e >= 0)
    if include_below and below_group not in fit.treated_groups:
        raise EstimationError(f"below group {below_group} not in the fit design")
    P = len(post_ls)

    def combo_est(combo):
        w = _weight_vector(fit, combo)
        return float(w @ fit.mu), fit.contrast_se(w)

    rows = []
    for l in post_ls:
        a, a_se = combo_est({(l, e): 1.0 for e in above})
        if include_below:
            b, b_se = combo_est({(l, below_group): 1.0})
            e_combo = {(l, e): 1.0 for e in above}
            e_combo[(l, below_group)] = 1.0
            te, te_se = combo_est(e_combo)
        else:
            b = b_se = te = te_se = np.nan
        rows.append({"l": l, "delta_a": a, "delta_a_se": a_se,
                     "delta_b": b, "delta_b_se": b_se,
                     "delta_e": te, "delta_e_se": te_se})
    by_l = pd.DataFrame(rows)

    erows = []
    groups_for_e = (([below_group] if include_below else []) + list(above))
    for e in groups_for_e:
        est, se = combo_est({(l, e): 1.0 / P for l in post_ls})
        erows.append({"e": e, "delta_a_e": est, "delta_a_e_se": se})
    by_e = pd.DataFrame(erows)

    delta_a, delta_a_se = combo_est({(l, e): 1.0 / P for l in post_ls for e in above})
    if include_below:
        delta_b, delta_b_se = combo_est({(l, below_group): 1.0 / P for l in post_ls})
        e_combo = {(l, e): 1.0 / P for l in post_ls for e in above}
        for l in post_ls:
            e_combo[(l, below_group)] = 1.0 / P
        delta_e, delta_e_se = combo_est(e_combo)
    else:
        delta_b = delta_b_se = delta_e = delta_e_se = None

    return DecompositionResult(
        by_l=by_l, by_e=by_e,
        delta_a=delta_a, delta_a_se=delta_a_se,
        delta_b=delta_b, delta_b_se=delta_b_se,
        delta_e=delta_e, delta_e_se=delta_e_se,
        post_periods=tuple(post_ls),
        above_groups=above,
        includes_below=include_below,
    )


# ---------------------------------------------------------------------------
# Elasticity identities (pure functions; also the acceptance identity suite)
# ---------------------------------------------------------------------------

def employment_elasticity(delta_e: float, pct_mw_change: float) -> float:
    """Employment elasticity with respect to the minimum wage: delta_e / %dMW."""
    if pct_mw_change == 0:
        raise ConfigError("percent minimum-wage change is zero; elasticity undefined")
    return delta_e / pct_mw_change


def pct_affected_employment(delta_e: float, b_bar: float) -> float:
    """Percent change of affected employment: delta_e / b_bar."""
    if b_bar == 0:
        raise ConfigError("share below the new minimum is zero; ratio undefined")
    return delta_e / b_bar


def own_wage_elasticity(affected_employment: float, affected_wage: float) -> float:
    """Own-wage elasticity: %d affected employment / %d affected wage."""
    if affected_wage == 0:
        raise ConfigError("affected wage change is zero; elasticity undefined")
    return affected_employment / affected_wage


def wage_bill_change(delta_by_e: dict[int, float], mw_bar: float, *,
                     group_width: int = 100, bin_width: int = 10,
                     valuation: str = "upper") -> float:
    """Change in the affected wage bill: sum over bands of wage-value x effect.

    Each band e is valued at its upper wage edge mw_bar + group_width*e +
    (group_width - 1) by default; valuation='midpoint' uses the band center.
    The below-minimum band enters with e = -1 and its effect is delta_b.
    """
    if valuation not in ("upper", "midpoint"):
        raise ConfigError(f"unknown valuation {valuation!r}")
    shift = group_width - 1 if valuation == "upper" else (group_width - 1) / 2.0
    return float(sum((mw_bar + group_width * e + shift) * v
                     for e, v in delta_by_e.items()))


def pct_affected_wage(b_bar: float, wb_bar: float, delta_e: float,
                      delta_wb: float) -> float:
    """Percent change of the affected group's average wage.

    Pre-event average wage is wb_bar / b_bar; post-event the wage bill and
    employment both shift, giving (wb_bar + delta_wb) / (b_bar + delta_e).
    """
    if b_bar == 0 or wb_bar == 0:
        raise ConfigError("pre-event affected employment or wage bill is zero")
    if b_bar + delta_e == 0:
        raise ConfigError("post-event affected employment is zero; wage undefined")
    w_pre = wb_bar / b_bar
    w_post = (wb_bar + delta_wb) / (b_bar + delta_e)
    return w_post / w_pre - 1.0


ELASTICITY_ROW_ORDER = (
    "missing_jobs",
    "excess_jobs",
    "affected_wages",
    "affected_employment",
    "employment_elasticity_mw",
    "own_wage_elasticity",
    "job_below_new_mw",
    "pct_mw_change",
)


@dataclass
class ElasticityReport:
    """The elasticity battery with delta-method and bootstrap standard errors."""

    values: dict[str, float]
    se_delta: dict[str, float] = field(default_factory=dict)
    se_bootstrap: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def se(self, key: str) -> float:
        if key in self.se_bootstrap:
            return self.se_bootstrap[key]
        return self.se_delta.get(key, np.nan)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for key in ELASTICITY_ROW_ORDER:
            est = self.values.get(key, np.nan)
            if key in self.se_bootstrap:
                se, method = self.se_bootstrap[key], "cluster_bootstrap"
            elif key in self.se_delta:
                se, method = self.se_delta[key], "delta"
            else:
                se, method = np.nan, ""
            rows.append({"quantity": key, "estimate": est, "se": se, "method": method})
        return pd.DataFrame(rows)


@dataclass(frozen=True)
class ElasticityConstants:
    """Data-side inputs held fixed when propagating coefficient uncertainty."""

    b_bar: float
    wb_bar: float
    pct_mw_change: float
    mw_bar: float
    group_width: int = 100
    bin_width: int = 10
    valuation: str = "upper"


def elasticity_constants(panel: pd.DataFrame, totals: pd.DataFrame,
                         schedule: MinWageSchedule, window: StudyWindow, *,
                         weighting: str = "postings", bin_width: int = 10,
                         group_width: int = 100,
                         valuation: str = "upper") -> ElasticityConstants:
    """Pre-event shares and minimum-wage statistics feeding the battery.

    b_bar is the share of postings employed below the new minimum in the
    reference month t* - 1; wb_bar its wage bill per posting, valuing each
    bin at its midpoint. %dMW and the average new minimum are averaged
    across prefectures weighted by reference-month postings (weighting
    'none' gives plain averages).
    """
    if weighting not in ("postings", "none"):
        raise ConfigError(f"unknown weighting {weighting!r}")
    t_pre = window.event_index - 1
    tot = totals[totals["month_t"] == t_pre].set_index("prefecture_id")["postings"]
    below = panel[(panel["month_t"] == t_pre) & (panel["exposure_group"] == -1)]

    n_total = float(tot.sum())
    if n_total <= 0:
        raise EstimationError("no postings in the pre-event reference month")
    emp = float(below["employment"].sum())
    midpoint = below["bin_lower"].to_numpy() + (bin_width - 1) / 2.0
    bill = float((midpoint * below["employment"].to_numpy()).sum())

    prefs = [p for p in schedule.prefectures if p in tot.index]
    if weighting == "postings":
        weights = np.array([tot.loc[p] for p in prefs], dtype=float)
    else:
        weights = np.ones(len(prefs))
    weights = weights / weights.sum()
    pct_mw = float(sum(w * schedule.pct_change(p) for w, p in zip(weights, prefs)))
    mw_bar = float(sum(w * schedule.new_mw(p) for w, p in zip(weights, prefs)))

    if weighting == "none":
        per_pref = below.groupby("prefecture_id")["employment"].sum()
        shares = [per_pref.get(p, 0) / tot.loc[p] for p in prefs if tot.loc[p] > 0]
        b_bar = float(np.mean(shares)) if shares else 0.0
        per_bill = below.assign(v=midpoint * below["employment"].to_numpy()) \
                        .groupby("prefecture_id")["v"].sum()
        bills = [per_bill.get(p, 0.0) / tot.loc[p] for p in prefs if tot.loc[p] > 0]
        wb_bar = float(np.mean(bills)) if bills else 0.0
    else:
        b_bar = emp / n_total
        wb_bar = bill / n_total

    return ElasticityConstants(b_bar=b_bar, wb_bar=wb_bar, pct_mw_change=pct_mw,
                               mw_bar=mw_bar, group_width=group_width,
                               bin_width=bin_width, valuation=valuation)


def _elasticity_values_from_mu(mu: np.ndarray, fit: EventStudyFit,
                               constants: ElasticityConstants) -> tuple[dict, list]:
    post_ls = fit.window.post_periods()
    P = len(post_ls)
    above = tuple(e for e in fit.treated_groups if e >= 0)
    idx = fit._mu_index

    delta_b = sum(mu[idx[(l, -1)]] for l in post_ls) / P
    delta_by_e = {-1: delta_b}
    for e in above:
        delta_by_e[e] = sum(mu[idx[(l, e)]] for l in post_ls) / P
    delta_a = sum(delta_by_e[e] for e in above)
    delta_e = delta_a + delta_b

    values = {
        "missing_jobs": delta_b,
        "excess_jobs": delta_a,
        "job_below_new_mw": constants.b_bar,
        "pct_mw_change": constants.pct_mw_change,
    }
    notes = []
    try:
        values["employment_elasticity_mw"] = employment_elasticity(
            delta_e, constants.pct_mw_change)
    except ConfigError as exc:
        values["employment_elasticity_mw"] = np.nan
        notes.append(f"employment_elasticity_mw absent: {exc}")
    try:
        affected_emp = pct_affected_employment(delta_e, constants.b_bar)
    except ConfigError as exc:
        affected_emp = np.nan
        notes.append(f"affected_employment absent: {exc}")
    values["affected_employment"] = affected_emp

    try:
        delta_wb = wage_bill_change(
            delta_by_e, constants.mw_bar, group_width=constants.group_width,
            valuation=constants.valuation)
        values["affected_wage_bill_change"] = delta_wb
        affected_wage = pct_affected_wage(
            constants.b_bar, constants.wb_bar, delta_e, delta_wb)
        values["affected_wages"] = affected_wage
    except ConfigError as exc:
        values["affected_wages"] = np.nan
        notes.append(f"affected_wages absent: {exc}")
        affected_wage = np.nan

    if np.isnan(affected_wage) or affected_wage == 0 or np.isnan(affected_emp):
        values["own_wage_elasticity"] = np.nan
        notes.append("own_wage_elasticity absent: affected wage change zero or undefined")
    else:
        values["own_wage_elasticity"] = own_wage_elasticity(affected_emp, affected_wage)
    return values, notes


_ELASTICITY_STAT_KEYS = (
    "missing_jobs", "excess_jobs", "affected_wages", "affected_employment",
    "employment_elasticity_mw", "own_wage_elasticity",
)


def elasticities(fit: EventStudyFit, panel: pd.DataFrame, totals: pd.DataFrame,
                 schedule: MinWageSchedule, window: StudyWindow, *,
                 weighting: str = "postings", valuation: str = "upper",
                 bootstrap_obs: pd.DataFrame | None = None,
                 n_bootstrap: int = 999, bootstrap_seed: int = 0,
                 bin_width: int = 10, group_width: int = 100) -> ElasticityReport:
    """Full elasticity battery with delta-method SEs, plus cluster-bootstrap
    SEs when `bootstrap_obs` (the fit's observation frame) is supplied.

    Pre-event shares, the wage-bill constants and %dMW are treated as fixed
    when propagating coefficient uncertainty, matching how the battery is
    reported (no SEs on those two rows).
    """
    if -1 not in fit.treated_groups:
        raise ConfigError("the elasticity battery needs the below-minimum group "
                          "(-1) in the fit design")
    constants = elasticity_constants(
        panel, totals, schedule, window, weighting=weighting,
        bin_width=bin_width, group_width=group_width, valuation=valuation)

    values, notes = _elasticity_values_from_mu(fit.mu, fit, constants)

    se_delta: dict[str, float] = {}
    if fit.vcov is not None:
        grads = {k: np.zeros(len(fit.mu)) for k in _ELASTICITY_STAT_KEYS}
        base = values
        for j in range(len(fit.mu)):
            h = 1e-7 * max(1.0, abs(float(fit.mu[j])))
            up = fit.mu.copy()
            up[j] += h
            down = fit.mu.copy()
            down[j] -= h
            vu, _ = _elasticity_values_from_mu(up, fit, constants)
            vd, _ = _elasticity_values_from_mu(down, fit, constants)
            for k in _ELASTICITY_STAT_KEYS:
                if np.isnan(base.get(k, np.nan)):
                    continue
                grads[k][j] = (vu[k] - vd[k]) / (2 * h)
        for k, g in grads.items():
            if np.isnan(base.get(k, np.nan)):
                continue
            se_delta[k] = float(np.sqrt(max(g @ fit.vcov @ g, 0.0)))

    se_boot: dict[str, float] = {}
    if bootstrap_obs is not None and n_bootstrap > 0:
        def stat(rep_fit: EventStudyFit) -> np.ndarray:
            v, _ = _elasticity_values_from_mu(rep_fit.mu, rep_fit, constants)
            return np.array([v.get(k, np.nan) for k in _ELASTICITY_STAT_KEYS])

        boot = bootstrap_inference(
            bootstrap_obs, window, stat, B=n_bootstrap, seed=bootstrap_seed,
            treated_groups=fit.treated_groups, reference_l=fit.reference_l)
        for i, k in enumerate(_ELASTICITY_STAT_KEYS):
            if not np.isnan(values.get(k, np.nan)):
                se_boot[k] = float(boot.se[i])

    return ElasticityReport(values=values, se_delta=se_delta,
                            se_bootstrap=se_boot, notes=notes)


# ---------------------------------------------------------------------------
# Cluster bootstrap
# ---------------------------------------------------------------------------

@dataclass
class BootstrapResult:
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    stats: np.ndarray
    n_redrawn: int

    def scalar_se(self) -> float:
        return float(self.se[0])


def bootstrap_inference(obs: pd.DataFrame, window: StudyWindow, statistic, *,
                        B: int = 999, seed: int = 0,
                        treated_groups: tuple[int, ...] = (-1, 0, 1, 2, 3),
                        reference_l: int = -1,
                        max_attempts_factor: int = 100) -> BootstrapResult:
    """Nonparametric cluster bootstrap: resample whole wage-bin clusters with
    replacement, refit the saturated regression, recompute the statistic.

    A replicate that leaves any required (group, month) cell empty is redrawn
    and counted. Deterministic under a fixed seed. `statistic` maps a
    (reduced) EventStudyFit to a float or a vector.
    """
    if B < 99:
        raise ConfigError(f"need at least 99 bootstrap replicates, got {B}")
    if "cluster" not in obs.columns:
        raise ConfigError("bootstrap needs a cluster column")

    treated = tuple(sorted(set(int(g) for g in treated_groups)))
    e_code, t_code, y, cluster, _, _, _ = _encode(obs, window, treated)
    T = window.n_months
    n_groups_total = len(treated) + 1
    n_cells = n_groups_total * T
    g_code, uniques = pd.factorize(cluster, sort=True)
    G = len(uniques)
    if G < 2:
        raise EstimationError(f"need at least 2 wage-bin clusters, got {G}")

    cell = e_code * T + t_code
    flat = g_code * n_cells + cell
    C = np.bincount(flat, minlength=G * n_cells).reshape(G, n_cells).astype(float)
    S = np.bincount(flat, weights=y, minlength=G * n_cells).reshape(G, n_cells)

    t_ref_code = window.t_of(reference_l) - 1
    ls = [l for l in window.rel_periods() if l != reference_l]
    mu_keys = [(l, e) for e in treated for l in ls]
    mu_index = {key: i for i, key in enumerate(mu_keys)}
    group_pos = {e: i for i, e in enumerate(list(treated) + [GROUP_INF])}

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    stats = []
    n_redrawn = 0
    attempts_left = max_attempts_factor * B
    while len(stats) < B:
        if attempts_left <= 0:
            raise EstimationError(
                "bootstrap exhausted its redraw budget; too many replicates "
                "with empty required cells"
            )
        attempts_left -= 1
        draw = rng.integers(0, G, size=G)
        w = np.bincount(draw, minlength=G).astype(float)
        cnt = w @ C
        if np.any(cnt == 0):
            n_redrawn += 1
            continue
        means = (w @ S) / cnt
        M = means.reshape(n_groups_total, T)
        ctrl = M[-1]
        mu = np.array([
            (M[group_pos[e], window.t_of(l) - 1] - M[group_pos[e], t_ref_code])
            - (ctrl[window.t_of(l) - 1] - ctrl[t_ref_code])
            for (l, e) in mu_keys
        ])
        rep = EventStudyFit(
            window=window, treated_groups=treated, reference_l=reference_l,
            mu_keys=mu_keys, mu=mu,
            cell_means={(e, t): float(M[group_pos[e], t - 1])
                        for e in list(treated) + [GROUP_INF]
                        for t in range(1, T + 1)},
            alpha={}, lam={}, intercept=float(ctrl[t_ref_code]),
            n_obs=int(w @ C.sum(axis=1)), n_clusters=G, method="cell_means",
            _mu_index=mu_index, _arrays=None,
        )
        stats.append(np.atleast_1d(np.asarray(statistic(rep), dtype=float)))

    stats = np.vstack(stats)
    se = stats.std(axis=0, ddof=1)
    ci_low, ci_high = np.percentile(stats, [2.5, 97.5], axis=0)
    return BootstrapResult(se=se, ci_low=np.atleast_1d(ci_low),
                           ci_high=np.atleast_1d(ci_high), stats=stats,
                           n_redrawn=n_redrawn)
