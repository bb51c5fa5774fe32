"""Batch front end: simulate | estimate | hetero | describe | macro | print-config.

Configuration is a flat key=value text file ('#' starts a comment); command
line flags win over the file, which wins over built-in defaults. All outputs
are tidy CSV written atomically into an existing output directory. Exit
codes: 0 success, 2 usage/config, 3 data schema, 4 estimation failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import pandas as pd

from . import decomp, dgp, hetero, schemas
from .errors import (
    ConfigError,
    EstimationError,
    IngestionError,
    InvalidRecordError,
    SpotmwError,
)
from .estimator import (
    cluster_vcov,
    fit_event_study,
    fit_two_way_fe,
    observations_from_outcomes,
    pretrend_report,
)
from .model import (
    StudyWindow,
    build_panel,
    change_grid,
    distribution_tables,
    macro_metrics,
    outcome_series,
    weekly_earnings_panel,
)

OUTPUT_DIR_ENV = "SPOTMW_OUT"

DEFAULTS: dict[str, object] = {
    # paths
    "contracts": "contracts.csv",
    "schedule": "schedule.csv",
    "users": "users.csv",
    "out": ".",
    # bin/group geometry
    "bin_width": 10,
    "group_width": 100,
    "max_e": 3,
    "spill_offset": 400,
    "wage_ceiling": 5000,
    # study window
    "window_start": "2023-04",
    "window_end": "2024-03",
    "event_month": "2023-10",
    # estimation
    "outcome": "employment_share",
    "vcov": "CR1",
    "reference_l": -1,
    "bootstrap_b": 999,
    "bootstrap_seed": 20231001,
    "weighting": "postings",
    "valuation": "upper",
    # heterogeneity
    "dimension": "prefecture",
    "min_cell_records": 30,
    "n_bins": 5,
    "kaitz_reciprocal": 0,
    # descriptives
    "describe_prefecture": 0,  # 0 = pool all prefectures
    "describe_month_a": "",    # empty = month before the event
    "describe_month_b": "",    # empty = event month
    # runtime
    "jobs": 1,
    # simulation
    "sim_calibration": "benchmark",  # benchmark | placebo | manual
    "sim_seed": 20231001,
    "sim_prefectures": 47,
    "sim_monthly_postings": 1800,
    "sim_match_prob": 0.8,
    "sim_mass_at_mw": 0.06,
    "sim_below_mw_mass": 0.085,
    "sim_tail_mu": 0.12,
    "sim_tail_sigma": 0.16,
    "sim_wage_cap": 3000,
    "sim_missing_frac": 0.0,
    "sim_excess_frac": 0.0,
    "sim_bunch_frac": 0.6,
    "sim_old_mw_gap": 100,
    "sim_users_scale": 0.6,
}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            return raw.strip() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse {raw!r}") from None


def load_config(path: str | None, sets: list[str] | None = None) -> dict:
    cfg = dict(DEFAULTS)
    if os.environ.get(OUTPUT_DIR_ENV):
        cfg["out"] = os.environ[OUTPUT_DIR_ENV]
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, value = (part.strip() for part in line.split("=", 1))
                if key not in DEFAULTS:
                    raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
                cfg[key] = _coerce(key, value)
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, value)
    return cfg


def _validate(cfg: dict) -> None:
    if cfg["spill_offset"] != cfg["group_width"] * (cfg["max_e"] + 1):
        raise ConfigError("spill_offset must equal group_width * (max_e + 1)")
    for key in ("bin_width", "group_width", "max_e", "jobs", "bootstrap_b",
                "min_cell_records", "n_bins", "wage_ceiling"):
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be positive")
    if cfg["group_width"] % cfg["bin_width"] != 0:
        raise ConfigError("bin_width must divide group_width")


def _window(cfg: dict) -> StudyWindow:
    return StudyWindow.from_bounds(cfg["window_start"], cfg["window_end"],
                                   cfg["event_month"])


def _out_path(cfg: dict, name: str) -> str:
    out = cfg["out"]
    if not os.path.isdir(out):
        raise ConfigError(f"output directory does not exist: {out}")
    return os.path.join(out, name)


def _geometry(cfg: dict) -> dict:
    return {"bin_width": cfg["bin_width"], "group_width": cfg["group_width"],
            "max_e": cfg["max_e"], "spill_offset": cfg["spill_offset"],
            "wage_ceiling": cfg["wage_ceiling"]}


def _treated_groups(cfg: dict) -> tuple[int, ...]:
    return tuple(range(-1, cfg["max_e"] + 1))


def _load_inputs(cfg: dict, window: StudyWindow):
    records = schemas.read_contracts(cfg["contracts"])
    schedule = schemas.read_schedule(cfg["schedule"])
    if schedule.event_month != window.event_month:
        raise IngestionError(
            f"schedule event month {schedule.event_month} does not match the "
            f"window's event month {window.event_month}"
        )
    return records, schedule


def cmd_simulate(cfg: dict) -> int:
    window = _window(cfg)
    cal = cfg["sim_calibration"]
    if cal == "benchmark":
        config = dgp.benchmark_config(
            seed=cfg["sim_seed"], n_prefectures=cfg["sim_prefectures"],
            monthly_postings_base=cfg["sim_monthly_postings"])
    elif cal == "placebo":
        config = dgp.placebo_config(
            seed=cfg["sim_seed"], n_prefectures=cfg["sim_prefectures"],
            monthly_postings=cfg["sim_monthly_postings"])
    elif cal == "manual":
        mws = dgp._mw_grid(cfg["sim_prefectures"])
        prefs = tuple(
            dgp.PrefectureSpec(
                prefecture_id=i + 1, new_mw=mws[i],
                old_mw=mws[i] - cfg["sim_old_mw_gap"],
                monthly_postings=cfg["sim_monthly_postings"])
            for i in range(cfg["sim_prefectures"])
        )
        config = dgp.DgpConfig(
            seed=cfg["sim_seed"], prefectures=prefs, window=window,
            wage_mixture=dgp.WageMixture(
                mass_at_mw=cfg["sim_mass_at_mw"],
                below_mw_mass=cfg["sim_below_mw_mass"],
                tail_mu=cfg["sim_tail_mu"], tail_sigma=cfg["sim_tail_sigma"],
                wage_cap=cfg["sim_wage_cap"]),
            missing_frac=cfg["sim_missing_frac"],
            excess_frac=cfg["sim_excess_frac"],
            match_prob=cfg["sim_match_prob"],
            bunch_frac=cfg["sim_bunch_frac"],
            users_scale=cfg["sim_users_scale"],
        )
    else:
        raise ConfigError(f"unknown sim_calibration {cal!r}")

    records, truth = dgp.generate(config)
    schemas.write_contracts(records, _out_path(cfg, "contracts.csv"))
    schemas.write_schedule(config.schedule(), _out_path(cfg, "schedule.csv"))
    schemas.write_users(dgp.users_series(config), _out_path(cfg, "users.csv"))
    schemas.write_csv(truth.to_frame(), _out_path(cfg, "ground_truth.csv"))
    return 0


def _vcov_long_frame(fit) -> pd.DataFrame:
    labels = [f"l={l},e={e}" for (l, e) in fit.mu_keys]
    n = len(labels)
    rows = {
        "i": np.repeat(labels, n),
        "j": np.tile(labels, n),
        "value": fit.vcov.reshape(-1),
    }
    return pd.DataFrame(rows)


def cmd_estimate(cfg: dict) -> int:
    window = _window(cfg)
    records, schedule = _load_inputs(cfg, window)

    build = build_panel(records, schedule, window, **_geometry(cfg))
    outcome = cfg["outcome"]
    series = outcome_series(build.panel, build.totals, outcome)
    obs = observations_from_outcomes(series)
    fit = fit_event_study(obs, window, treated_groups=_treated_groups(cfg),
                          reference_l=cfg["reference_l"])
    cluster_vcov(fit, variant=cfg["vcov"])

    coef = fit.mu_frame()
    coef.insert(0, "outcome", outcome)
    schemas.write_csv(coef, _out_path(cfg, "coefficients.csv"))
    schemas.write_csv(_vcov_long_frame(fit), _out_path(cfg, "vcov.csv"))

    include_below = not outcome.startswith("reimb")
    decomposition = decomp.aggregate(fit, include_below=include_below)
    rows = []
    for _, r in decomposition.by_l.iterrows():
        for q in ("delta_a", "delta_b", "delta_e"):
            rows.append({"quantity": f"{q}_l", "index": int(r["l"]),
                         "estimate": r[q], "se": r[f"{q}_se"]})
    for _, r in decomposition.by_e.iterrows():
        rows.append({"quantity": "delta_a_e", "index": int(r["e"]),
                     "estimate": r["delta_a_e"], "se": r["delta_a_e_se"]})
    for q in ("delta_a", "delta_b", "delta_e"):
        est = getattr(decomposition, q)
        se = getattr(decomposition, f"{q}_se")
        rows.append({"quantity": q, "index": "",
                     "estimate": np.nan if est is None else est,
                     "se": np.nan if se is None else se})
    schemas.write_csv(pd.DataFrame(rows), _out_path(cfg, "decomposition.csv"))

    if include_below:
        report = decomp.elasticities(
            fit, build.panel, build.totals, schedule, window,
            weighting=cfg["weighting"], valuation=cfg["valuation"],
            bootstrap_obs=obs, n_bootstrap=cfg["bootstrap_b"],
            bootstrap_seed=cfg["bootstrap_seed"],
            bin_width=cfg["bin_width"], group_width=cfg["group_width"])
        schemas.write_csv(report.to_frame(), _out_path(cfg, "elasticities.csv"))

    pre = pretrend_report(fit)
    table = pre.table.copy()
    table.insert(0, "kind", "cell")
    table["df"] = np.nan
    joint = pd.DataFrame([{"kind": "joint", "e": "", "l": "",
                           "estimate": pre.joint_stat, "se": np.nan,
                           "z": np.nan, "p": pre.joint_p, "df": pre.joint_df}])
    schemas.write_csv(pd.concat([table, joint], ignore_index=True),
                      _out_path(cfg, "pretrends.csv"))

    weekly = weekly_earnings_panel(records, window)
    twfe = fit_two_way_fe(weekly, time_col="week_start", y_col="earnings")
    schemas.write_csv(twfe.time_effects.rename(columns={"time": "week_start"}),
                      _out_path(cfg, "week_effects.csv"))
    return 0


def cmd_hetero(cfg: dict) -> int:
    window = _window(cfg)
    records, schedule = _load_inputs(cfg, window)
    run = hetero.run_stratified(
        records, schedule, window, cfg["dimension"],
        outcome_kind=cfg["outcome"], min_cell_records=cfg["min_cell_records"],
        vcov_variant=cfg["vcov"], jobs=cfg["jobs"],
        treated_groups=_treated_groups(cfg), **_geometry(cfg))

    coef_rows = []
    for r in run.results:
        frame = r.fit.mu_frame()
        frame.insert(0, "stratum", r.stratum)
        coef_rows.append(frame)
    coef = (pd.concat(coef_rows, ignore_index=True) if coef_rows
            else pd.DataFrame(columns=["stratum", "e", "l", "estimate", "se", "z"]))
    schemas.write_csv(coef, _out_path(cfg, "strata_coefficients.csv"))
    schemas.write_csv(run.frame(), _out_path(cfg, "strata_decomposition.csv"))
    skipped = pd.DataFrame(run.skipped, columns=["stratum", "reason"])
    schemas.write_csv(skipped, _out_path(cfg, "skipped_strata.csv"))

    if cfg["dimension"] == "prefecture":
        points = hetero.kaitz_points(run)
        out_points = points.copy()
        if cfg["kaitz_reciprocal"]:
            out_points["kaitz"] = 1.0 / out_points["kaitz"]
        schemas.write_csv(out_points, _out_path(cfg, "kaitz.csv"))
        if len(points) >= cfg["n_bins"]:
            scatter = hetero.binned_scatter(points, cfg["n_bins"])
            schemas.write_csv(scatter, _out_path(cfg, "binned_scatter.csv"))
    return 0


def cmd_describe(cfg: dict) -> int:
    window = _window(cfg)
    records, schedule = _load_inputs(cfg, window)
    pref = cfg["describe_prefecture"] or None

    for axis in ("wage", "hours", "reimbursement"):
        table = distribution_tables(records, schedule, window, axis, prefecture=pref)
        table["month"] = [window.months[t - 1] for t in table["month_t"]]
        schemas.write_csv(table[["bin", "month_t", "month", "employment"]],
                          _out_path(cfg, f"distribution_{axis}.csv"))

    month_a = cfg["describe_month_a"] or window.months[window.event_index - 2]
    month_b = cfg["describe_month_b"] or window.event_month
    for axis in ("hours", "reimbursement"):
        grid = change_grid(records, schedule, window, axis, month_a, month_b,
                           prefecture=pref)
        schemas.write_csv(grid, _out_path(cfg, f"change_grid_{axis}.csv"))
    return 0


def cmd_macro(cfg: dict) -> int:
    window = _window(cfg)
    records, schedule = _load_inputs(cfg, window)
    users = schemas.read_users(cfg["users"])
    build = build_panel(records, schedule, window, **_geometry(cfg))
    metrics = macro_metrics(build.totals, users, window)
    schemas.write_csv(metrics, _out_path(cfg, "macro.csv"))
    return 0


def cmd_print_config(cfg: dict) -> int:
    for key in sorted(cfg):
        print(f"{key}={cfg[key]}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "hetero": cmd_hetero,
    "describe": cmd_describe,
    "macro": cmd_macro,
    "print-config": cmd_print_config,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spotmw",
        description="Wage-bin event-study toolkit for spot labor market data",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, help="worker threads for strata")
        if name == "simulate":
            p.add_argument("--seed", type=int, help="generator seed")
        if name == "hetero":
            p.add_argument("--dimension", choices=hetero.STRATA_DIMENSIONS)
        if name == "estimate":
            p.add_argument("--outcome", help="outcome kind")
            p.add_argument("--bootstrap-b", type=int, dest="bootstrap_b")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        for flag, key in [("out", "out"), ("jobs", "jobs"), ("seed", "sim_seed"),
                          ("dimension", "dimension"), ("outcome", "outcome"),
                          ("bootstrap_b", "bootstrap_b")]:
            value = getattr(args, flag, None)
            if value is not None:
                cfg[key] = value
        _validate(cfg)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, InvalidRecordError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except SpotmwError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
