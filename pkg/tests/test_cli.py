import os


import pandas as pd
import pytest

from spotmw import schemas
from spotmw.cli import load_config, main
from spotmw.decomp import ELASTICITY_ROW_ORDER


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def simulate_small(tmp_path, *extra):
    code = run(tmp_path, "simulate", "--set", "sim_calibration=placebo",
               "--set", "sim_prefectures=2", "--set", "sim_monthly_postings=260",
               "--seed", "77", *extra)
    assert code == 0
    return {name: tmp_path / f"{name}.csv"
            for name in ("contracts", "schedule", "users", "ground_truth")}


def estimate_args(tmp_path, files, *extra):
    return ["estimate",
            "--set", f"contracts={files['contracts']}",
            "--set", f"schedule={files['schedule']}",
            "--set", f"users={files['users']}",
            "--out", str(tmp_path), *extra]


class TestConfig:
    def test_print_config(self, capsys, tmp_path):
        assert run(tmp_path, "print-config") == 0
        out = capsys.readouterr().out
        assert "bin_width=10" in out
        assert "spill_offset=400" in out

    def test_unknown_key_exits_2(self, tmp_path):
        assert run(tmp_path, "print-config", "--set", "nonsense=1") == 2

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("bin_width=10\njobs=3  # comment\n")
        cfg = load_config(str(cfg_file), ["jobs=5"])
        assert cfg["jobs"] == 5

    def test_bad_config_line(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("bin_width 10\n")
        assert main(["print-config", "--config", str(cfg_file)]) == 2

    def test_inconsistent_geometry_exits_2(self, tmp_path):
        assert run(tmp_path, "print-config", "--set", "spill_offset=500") == 2

    def test_missing_output_dir_exits_2(self, tmp_path):
        code = main(["simulate", "--set", "sim_prefectures=1",
                     "--set", "sim_monthly_postings=50",
                     "--out", str(tmp_path / "missing")])
        assert code == 2

    def test_env_var_default_out(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("SPOTMW_OUT", str(tmp_path))
        cfg = load_config(None)
        assert cfg["out"] == str(tmp_path)


class TestSimulate:
    def test_outputs_exist_and_round_trip(self, tmp_path):
        files = simulate_small(tmp_path)
        for path in files.values():
            assert path.exists()
        records = schemas.read_contracts(files["contracts"])
        schedule = schemas.read_schedule(files["schedule"])
        users = schemas.read_users(files["users"])
        assert len(records) == 2 * 260 * 12
        assert len(schedule.prefectures) == 2
        assert len(users) == 12

        # round trip ingests with zero warnings
        from spotmw import StudyWindow, build_panel
        build = build_panel(records, schedule, StudyWindow.default())
        assert build.skipped_out_of_window == 0
        assert build.flagged_high_wage == 0
        assert build.n_used == len(records)

    def test_byte_identical_reruns(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        d1.mkdir(); d2.mkdir()
        files1 = simulate_small(d1)
        files2 = simulate_small(d2)
        for name in files1:
            assert files1[name].read_bytes() == files2[name].read_bytes()

    def test_ground_truth_matches_closed_form(self, tmp_path):
        from spotmw.dgp import placebo_config, true_cell_means
        files = simulate_small(tmp_path)
        truth_csv = pd.read_csv(files["ground_truth"])
        deltas = truth_csv[truth_csv.quantity.isin(("delta_a", "delta_b", "delta_e"))]
        assert (deltas.value == 0).all()
        truth = true_cell_means(placebo_config(seed=77, n_prefectures=2,
                                               monthly_postings=260))
        mu_rows = truth_csv[truth_csv.quantity == "mu"]
        assert len(mu_rows) == len(truth.true_mu)


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("est")
    files = simulate_small(tmp_path)
    code = main(estimate_args(tmp_path, files, "--bootstrap-b", "99",
                              "--set", "bootstrap_b=99"))
    assert code == 0
    return tmp_path


class TestEstimate:
    def test_output_files(self, outputs):
        for name in ("coefficients", "vcov", "decomposition", "elasticities",
                     "pretrends", "week_effects"):
            assert (outputs / f"{name}.csv").exists()

    def test_coefficients_shape(self, outputs):
        coef = pd.read_csv(outputs / "coefficients.csv")
        assert list(coef.columns) == ["outcome", "e", "l", "estimate", "se", "z"]
        assert len(coef) == 55

    def test_elasticities_rows_in_order(self, outputs):
        frame = pd.read_csv(outputs / "elasticities.csv")
        assert list(frame.columns) == ["quantity", "estimate", "se", "method"]
        assert list(frame.quantity) == list(ELASTICITY_ROW_ORDER)

    def test_placebo_decomposition_near_zero(self, outputs):
        dec = pd.read_csv(outputs / "decomposition.csv")
        totals = dec[dec["quantity"].isin(("delta_a", "delta_b", "delta_e"))]
        ses = dec[dec["quantity"] == "delta_e_l"].se
        assert totals.estimate.abs().max() < 0.02
        assert (ses > 0).all()

    def test_pretrends_has_joint_row(self, outputs):
        pre = pd.read_csv(outputs / "pretrends.csv")
        joint = pre[pre.kind == "joint"]
        assert len(joint) == 1
        assert joint.df.iloc[0] == 25

    def test_byte_identical_rerun(self, tmp_path):
        files = simulate_small(tmp_path)
        d1, d2 = tmp_path / "r1", tmp_path / "r2"
        d1.mkdir(); d2.mkdir()
        for d in (d1, d2):
            code = main(["estimate",
                         "--set", f"contracts={files['contracts']}",
                         "--set", f"schedule={files['schedule']}",
                         "--set", "bootstrap_b=99", "--out", str(d)])
            assert code == 0
        for name in ("coefficients", "vcov", "decomposition", "elasticities",
                     "pretrends", "week_effects"):
            assert (d1 / f"{name}.csv").read_bytes() == (d2 / f"{name}.csv").read_bytes()

    def test_schema_violation_exits_3(self, tmp_path):
        files = simulate_small(tmp_path)
        text = files["contracts"].read_text().splitlines()
        parts = text[3].split(",")
        parts[6] = "Astronaut"
        text[3] = ",".join(parts)
        bad = tmp_path / "bad.csv"
        bad.write_text("\n".join(text) + "\n")
        code = main(["estimate", "--set", f"contracts={bad}",
                     "--set", f"schedule={files['schedule']}",
                     "--out", str(tmp_path)])
        assert code == 3

    def test_estimation_failure_exits_4(self, tmp_path):
        files = simulate_small(tmp_path)
        records = pd.read_csv(files["contracts"], dtype=str)
        schedule = pd.read_csv(files["schedule"])
        mw = dict(zip(schedule.prefecture_id.astype(str), schedule.new_mw))
        # drop the whole upper tail: the control group cells become empty
        keep = records.apply(
            lambda r: int(r.hourly_wage) < mw[r.prefecture_id] + 400, axis=1)
        truncated = tmp_path / "truncated.csv"
        records[keep].to_csv(truncated, index=False)
        code = main(["estimate", "--set", f"contracts={truncated}",
                     "--set", f"schedule={files['schedule']}",
                     "--out", str(tmp_path)])
        assert code == 4


class TestHeteroCmd:
    def test_outputs_and_jobs_determinism(self, tmp_path):
        files = simulate_small(tmp_path)
        d1, d2 = tmp_path / "j1", tmp_path / "j3"
        d1.mkdir(); d2.mkdir()
        for d, jobs in ((d1, "1"), (d2, "3")):
            code = main(["hetero", "--dimension", "prefecture",
                         "--set", f"contracts={files['contracts']}",
                         "--set", f"schedule={files['schedule']}",
                         "--set", "min_cell_records=1",
                         "--set", "n_bins=2",
                         "--jobs", jobs, "--out", str(d)])
            assert code == 0
        for name in ("strata_coefficients", "strata_decomposition", "kaitz",
                     "binned_scatter", "skipped_strata"):
            assert (d1 / f"{name}.csv").read_bytes() == (d2 / f"{name}.csv").read_bytes()

    def test_occupation_dimension(self, tmp_path):
        files = simulate_small(tmp_path)
        code = main(["hetero", "--dimension", "occupation",
                     "--set", f"contracts={files['contracts']}",
                     "--set", f"schedule={files['schedule']}",
                     "--set", "min_cell_records=1", "--out", str(tmp_path)])
        assert code == 0
        dec = pd.read_csv(tmp_path / "strata_decomposition.csv")
        skipped = pd.read_csv(tmp_path / "skipped_strata.csv")
        assert len(dec) + len(skipped) == 9
        assert not (tmp_path / "kaitz.csv").exists()


class TestDescribeAndMacro:
    def test_describe_outputs(self, tmp_path):
        files = simulate_small(tmp_path)
        code = main(["describe",
                     "--set", f"contracts={files['contracts']}",
                     "--set", f"schedule={files['schedule']}",
                     "--out", str(tmp_path)])
        assert code == 0
        for name in ("distribution_wage", "distribution_hours",
                     "distribution_reimbursement", "change_grid_hours",
                     "change_grid_reimbursement"):
            assert (tmp_path / f"{name}.csv").exists()

    def test_describe_identical_months_zero_grid(self, tmp_path):
        files = simulate_small(tmp_path)
        code = main(["describe",
                     "--set", f"contracts={files['contracts']}",
                     "--set", f"schedule={files['schedule']}",
                     "--set", "describe_month_a=2023-09",
                     "--set", "describe_month_b=2023-09",
                     "--out", str(tmp_path)])
        assert code == 0
        grid = pd.read_csv(tmp_path / "change_grid_hours.csv")
        assert (grid["diff"] == 0).all()

    def test_macro_output(self, tmp_path):
        files = simulate_small(tmp_path)
        code = main(["macro",
                     "--set", f"contracts={files['contracts']}",
                     "--set", f"schedule={files['schedule']}",
                     "--set", f"users={files['users']}",
                     "--out", str(tmp_path)])
        assert code == 0
        macro = pd.read_csv(tmp_path / "macro.csv")
        assert len(macro) == 12
        assert macro.worker_finding.between(0.7, 0.9).all()

    def test_macro_worker_finding_one_when_all_matched(self, tmp_path, window=None):
        files = simulate_small(tmp_path)
        records = pd.read_csv(files["contracts"], dtype=str)
        records["matched"] = "1"
        all_matched = tmp_path / "matched.csv"
        records.to_csv(all_matched, index=False)
        code = main(["macro", "--set", f"contracts={all_matched}",
                     "--set", f"schedule={files['schedule']}",
                     "--set", f"users={files['users']}",
                     "--out", str(tmp_path)])
        assert code == 0
        macro = pd.read_csv(tmp_path / "macro.csv")
        assert (macro.worker_finding == 1.0).all()
