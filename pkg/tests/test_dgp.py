import numpy as np
import pandas as pd
import pytest

from spotmw import (
    GROUP_INF,
    ConfigError,
    DgpConfig,
    OccupationEffect,
    PrefectureSpec,
    StudyWindow,
    WageMixture,
    build_panel,
    generate,
    benchmark_config,
    placebo_config,
    pre_event_median,
    true_cell_means,
    users_series,
)
from spotmw.dgp import with_seed


def small_config(seed=11, **kwargs):
    defaults = dict(
        seed=seed,
        prefectures=(
            PrefectureSpec(1, 1113, 1013, 900),
            PrefectureSpec(2, 1004, 904, 700),
        ),
        window=StudyWindow.default(),
        wage_mixture=WageMixture(mass_at_mw=0.06, below_mw_mass=0.12),
        missing_frac=0.4,
        excess_frac=0.25,
    )
    defaults.update(kwargs)
    return DgpConfig(**defaults)


def band_employment_shares(config, records, groups=(-1, 0, 1, 2, 3, GROUP_INF)):
    """Empirical group-band employment shares per month, pooled across
    prefectures with equal weight (the regression's implicit weighting)."""
    build = build_panel(records, config.schedule(), config.window)
    panel = build.panel.merge(
        build.totals[["prefecture_id", "month_t", "postings"]],
        on=["prefecture_id", "month_t"])
    panel["share"] = panel.employment / panel.postings
    bands = (panel[panel.exposure_group.isin(groups)]
             .groupby(["prefecture_id", "exposure_group", "month_t"]).share.sum()
             .groupby(["exposure_group", "month_t"]).mean())
    return bands


class TestDeterminism:
    def test_same_seed_identical(self):
        cfg = small_config()
        r1, t1 = generate(cfg)
        r2, t2 = generate(cfg)
        pd.testing.assert_frame_equal(r1, r2)
        assert t1.true_mu == t2.true_mu

    def test_distinct_seeds_differ(self):
        r1, _ = generate(small_config(seed=11))
        r2, _ = generate(with_seed(small_config(seed=11), 12))
        assert not r1.equals(r2)


class TestGroundTruth:
    def test_placebo_truth_all_zero(self):
        truth = true_cell_means(placebo_config())
        assert all(v == 0.0 for v in truth.true_mu.values())
        assert truth.delta_a == truth.delta_b == truth.delta_e == 0.0

    def test_calibrated_targets_exact(self):
        truth = true_cell_means(benchmark_config())
        assert truth.delta_b == pytest.approx(-0.030, abs=1e-12)
        assert truth.delta_a == pytest.approx(0.012, abs=1e-12)
        assert truth.delta_e == pytest.approx(-0.018, abs=1e-12)

    def test_pre_event_means_time_constant(self):
        truth = true_cell_means(small_config())
        t_star = small_config().window.event_index
        for e in (-1, 0, 1, 2, 3):
            pre = {truth.cell_means[(e, t)] for t in range(1, t_star)}
            assert len(pre) == 1

    def test_control_band_constant_across_t(self):
        truth = true_cell_means(small_config())
        values = {round(truth.band_shares[(GROUP_INF, t)], 15) for t in range(1, 13)}
        assert len(values) == 1

    def test_post_group_minus1_scaled_by_survivors(self):
        cfg = small_config()
        truth = true_cell_means(cfg)
        t_star = cfg.window.event_index
        pre = truth.cell_means[(-1, t_star - 1)]
        post = truth.cell_means[(-1, t_star)]
        assert post == pytest.approx(pre * (1 - cfg.missing_frac - cfg.excess_frac))

    def test_post_group_minus1_monte_carlo(self):
        # verify the closed form against a large simulation
        cfg = small_config(seed=21,
                           prefectures=(PrefectureSpec(1, 1113, 1013, 12000),))
        records, truth = generate(cfg)
        bands = band_employment_shares(cfg, records, groups=(-1,))
        t_star = cfg.window.event_index
        pre = np.mean([bands.loc[(-1, t)] for t in range(1, t_star)])
        post = np.mean([bands.loc[(-1, t)] for t in range(t_star, 13)])
        survivors = 1 - cfg.missing_frac - cfg.excess_frac
        assert post / pre == pytest.approx(survivors, abs=0.02)
        assert pre == pytest.approx(truth.band_shares[(-1, 1)], abs=0.01)

    def test_occupation_specific_truth_ordering(self):
        cfg = small_config(
            missing_frac=0.1, excess_frac=0.05,
            occupation_effects=(
                ("Restaurant", OccupationEffect(0.6, 0.2)),
                ("Office Work", OccupationEffect(0.0, 0.0)),
            ),
        )
        t_rest = true_cell_means(cfg, occupation="Restaurant")
        t_office = true_cell_means(cfg, occupation="Office Work")
        t_other = true_cell_means(cfg, occupation="Retail")
        assert t_rest.delta_b < t_other.delta_b < t_office.delta_b == 0.0

    def test_prefecture_scale_enters_truth(self):
        cfg = small_config(prefectures=(
            PrefectureSpec(1, 1113, 1013, 500, effect_scale=1.0),
            PrefectureSpec(2, 1004, 904, 500, effect_scale=0.5),
        ))
        t1 = true_cell_means(cfg, prefecture_id=1)
        t2 = true_cell_means(cfg, prefecture_id=2)
        assert t2.delta_b == pytest.approx(t1.delta_b * 0.5)


class TestMonteCarloConsistency:
    def test_cell_means_converge(self):
        errs = {}
        for size, seed in ((400, 31), (1600, 32)):
            cfg = small_config(seed=seed, prefectures=(
                PrefectureSpec(1, 1113, 1013, size),
                PrefectureSpec(2, 1004, 904, size),
            ))
            records, truth = generate(cfg)
            bands = band_employment_shares(cfg, records)
            err = max(
                abs(bands.loc[(e, t)] - truth.band_shares[(e, t)])
                for e in (-1, 0, 1, 2, 3)
                for t in range(1, 13)
            )
            errs[size] = err
        # 4x the sample roughly halves the Monte-Carlo error
        assert errs[1600] < errs[400]
        assert errs[1600] < 0.05

    def test_limited_spillover_upper_tail(self):
        cfg = small_config(seed=41, prefectures=(
            PrefectureSpec(1, 1113, 1013, 8000),))
        records, _ = generate(cfg)
        bands = band_employment_shares(cfg, records, groups=(GROUP_INF,))
        t_star = cfg.window.event_index
        pre = np.mean([bands.loc[(GROUP_INF, t)] for t in range(1, t_star)])
        post = np.mean([bands.loc[(GROUP_INF, t)] for t in range(t_star, 13)])
        # tail share ~0.33 at n=8000/month: MC noise on the 6-month means ~0.002
        assert abs(post - pre) < 0.01

    def test_worker_finding_rate_near_match_prob(self):
        cfg = placebo_config(seed=5, n_prefectures=4, monthly_postings=2000)
        records, _ = generate(cfg)
        matched = records.matched.mean()
        assert matched == pytest.approx(cfg.match_prob, abs=0.01)


class TestRecordStream:
    def test_schema_and_invariants(self):
        cfg = small_config()
        records, _ = generate(cfg)
        assert (records.hourly_wage >= 1).all()
        assert (records.posted_hours > 0).all()
        assert (records.transport_reimbursement >= 0).all()
        assert records.occupation.isin(
            ("Restaurant", "Light Work", "Retail", "Customer Service",
             "Professional", "Logistics", "Entertainment", "Office Work",
             "Event Staff")).all()
        assert records.start_time.between(0, 1439).all()
        assert records.record_id.is_unique

    def test_monthly_posting_counts_deterministic(self):
        cfg = small_config()
        records, _ = generate(cfg)
        counts = records.groupby(["prefecture_id", records.date.str.slice(0, 7)]).size()
        for pref in cfg.prefectures:
            for m in cfg.window.months:
                assert counts.loc[(pref.prefecture_id, m)] == pref.monthly_postings

    def test_wages_respect_cap_and_floor(self):
        cfg = small_config()
        records, _ = generate(cfg)
        assert records.hourly_wage.max() <= cfg.wage_mixture.wage_cap
        old = {p.prefecture_id: p.old_mw for p in cfg.prefectures}
        floors = records.prefecture_id.map(old)
        assert (records.hourly_wage >= floors).all()

    def test_no_matched_below_mw_when_all_leave(self):
        cfg = small_config(missing_frac=0.6, excess_frac=0.4)
        records, _ = generate(cfg)
        post = records[records.date >= "2023-10"]
        new = {p.prefecture_id: p.new_mw for p in cfg.prefectures}
        below = post[post.hourly_wage < post.prefecture_id.map(new)]
        assert not below.matched.any()

    def test_bunching_spike_at_new_mw(self):
        cfg = small_config(missing_frac=0.0, excess_frac=0.6, bunch_frac=1.0)
        records, _ = generate(cfg)
        pref1 = records[records.prefecture_id == 1]
        pre_spike = (pref1[pref1.date < "2023-10"].hourly_wage == 1113).mean()
        post_spike = (pref1[pref1.date >= "2023-10"].hourly_wage == 1113).mean()
        expected_gain = cfg.wage_mixture.below_mw_mass * 0.6
        assert post_spike - pre_spike == pytest.approx(expected_gain, abs=0.02)


class TestConfigValidation:
    def test_empty_prefectures(self):
        with pytest.raises(ConfigError):
            DgpConfig(seed=1, prefectures=(), window=StudyWindow.default())

    def test_m_plus_x_bound(self):
        with pytest.raises(ConfigError):
            small_config(missing_frac=0.7, excess_frac=0.4)

    def test_occupation_override_bound(self):
        with pytest.raises(ConfigError):
            small_config(occupation_effects=(
                ("Retail", OccupationEffect(0.8, 0.3)),))

    def test_unknown_occupation_override(self):
        with pytest.raises(ConfigError):
            small_config(occupation_effects=(
                ("Plumber", OccupationEffect(0.1, 0.0)),))

    def test_effects_require_full_band_support(self):
        with pytest.raises(ConfigError, match="old_mw = new_mw - 100"):
            small_config(prefectures=(PrefectureSpec(1, 1113, 1080, 500),))

    def test_mixture_mass_bound(self):
        with pytest.raises(ConfigError):
            small_config(wage_mixture=WageMixture(mass_at_mw=0.6, below_mw_mass=0.5))


class TestHelpers:
    def test_users_series_scale(self):
        cfg = small_config()
        users = users_series(cfg)
        assert users[cfg.window.months[0]] == round(0.6 * 1600)
        assert len(users) == 12

    def test_pre_event_median_matches_empirical(self):
        cfg = placebo_config(seed=17, n_prefectures=1, monthly_postings=20000)
        records, _ = generate(cfg)
        pre = records[records.date < "2023-10"]
        pref = cfg.prefectures[0].prefecture_id
        empirical = pre[pre.prefecture_id == pref].hourly_wage.median()
        analytic = pre_event_median(cfg, pref)
        assert analytic == pytest.approx(empirical, rel=0.01)
