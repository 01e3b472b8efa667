import json

from em2gm.cli import main


def test_no_command_is_a_usage_error(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_trajectory_runs_and_reports(tmp_path, capsys):
    code = main(["trajectory", "--d", "1", "--s", "0", "--n", "2000",
                 "--init", "fixed", "--theta0", "1.0", "--seed", "42",
                 "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "final_loss=" in out and "trajectory.csv" in out
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("t,alpha,beta,loss,loglik")
    assert (tmp_path / "trajectory.svg").read_text().startswith("<svg")


def test_trajectory_is_deterministic(tmp_path):
    args = ["trajectory", "--d", "2", "--s", "1.0", "--n", "500", "--init", "random",
            "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert ((tmp_path / "a" / "trajectory.csv").read_bytes()
            == (tmp_path / "b" / "trajectory.csv").read_bytes())


def test_dry_run_prints_plan_and_writes_nothing(tmp_path, capsys):
    out_dir = tmp_path / "never"
    code = main(["rate-sweep", "--n-grid", "100,200", "--replicates", "2",
                 "--out", str(out_dir), "--dry-run"])
    assert code == 0
    plan = capsys.readouterr().out
    assert plan.startswith("dry-run rate-sweep:")
    assert "n_grid=(100, 200)" in plan
    assert not out_dir.exists()


def test_config_file_merges_under_flags(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 500, "s": 0.25, "max-iters": 12}))
    code = main(["trajectory", "--config", str(cfg), "--s", "1.0", "--dry-run"])
    assert code == 0
    plan = capsys.readouterr().out
    assert "n=500" in plan  # from the config file
    assert "s=1.0" in plan  # flag wins over the file
    assert "max_iters=12" in plan  # dashed key normalized


def test_unknown_config_key_is_named(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nope": 1}))
    assert main(["trajectory", "--config", str(cfg)]) == 1
    assert "nope" in capsys.readouterr().err


def test_malformed_config_is_a_validation_error(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert main(["trajectory", "--config", str(cfg)]) == 1
    assert "malformed" in capsys.readouterr().err


def test_bad_flag_value_exits_one(capsys):
    assert main(["trajectory", "--n", "lots"]) == 1
    assert "expected int" in capsys.readouterr().err


def test_bad_init_name_exits_one(tmp_path, capsys):
    assert main(["trajectory", "--init", "warm", "--n", "100",
                 "--out", str(tmp_path)]) == 1
    assert "unknown init" in capsys.readouterr().err


def test_unwritable_output_exits_two(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["trajectory", "--n", "100", "--out", str(blocker / "sub")])
    assert code == 2
    assert "i/o error" in capsys.readouterr().err


def test_population_command(tmp_path, capsys):
    code = main(["population", "--alpha0", "0.1", "--beta0", "0.7", "--s", "0.35",
                 "--iters", "60", "--out", str(tmp_path)])
    assert code == 0
    assert "final_alpha=" in capsys.readouterr().out
    lines = (tmp_path / "population.csv").read_text().splitlines()
    assert lines[0] == "t,alpha,beta"
    assert len(lines) == 62
    final_alpha = float(lines[-1].split(",")[1])
    assert abs(final_alpha - 0.35) < 1e-3


def test_sandwich_command(tmp_path, capsys):
    code = main(["sandwich", "--theta0", "0.5", "--s", "1", "--w", "0.05",
                 "--iters", "50", "--out", str(tmp_path)])
    assert code == 0
    assert "upper_limit=" in capsys.readouterr().out
    lines = (tmp_path / "sandwich.csv").read_text().splitlines()
    assert lines[0] == "t,lower,upper"
    t, lo, hi = lines[-1].split(",")
    assert float(lo) <= float(hi)


def test_deviation_command(tmp_path, capsys):
    code = main(["deviation", "--d", "2", "--s", "1", "--n", "2000",
                 "--directions", "4", "--radii", "5", "--out", str(tmp_path)])
    assert code == 0
    assert "sup_ratio=" in capsys.readouterr().out
    lines = (tmp_path / "deviation.csv").read_text().splitlines()
    assert lines[0] == "direction_id,radius,ratio"
    assert len(lines) == 21


def test_mle_probe_command(tmp_path, capsys):
    code = main(["mle-probe", "--d", "2", "--s", "1", "--n", "5000",
                 "--burn-in", "10", "--extra", "10", "--out", str(tmp_path)])
    assert code == 0
    assert "max_ratio=" in capsys.readouterr().out
    assert (tmp_path / "mle_probe.csv").exists()


def test_figure2_command(tmp_path, capsys):
    code = main(["figure2", "--out", str(tmp_path)])
    assert code == 0
    assert "non_monotone_pass=True" in capsys.readouterr().out
    flags = json.loads((tmp_path / "figure2_flags.json").read_text())
    assert flags["non_monotone_pass"] and flags["monotone_pass"]


def test_sublinear_command(tmp_path, capsys):
    code = main(["sublinear", "--iters", "2000", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    slope = float(out.split("slope=")[1].split()[0])
    assert abs(slope + 0.5) < 0.05
    assert (tmp_path / "sublinear.csv").exists()


def test_rate_sweep_command(tmp_path, capsys):
    code = main(["rate-sweep", "--d", "1", "--s", "1", "--n-grid", "200,800",
                 "--replicates", "3", "--init", "fixed", "--theta0", "1.0",
                 "--threads", "1", "--out", str(tmp_path)])
    assert code == 0
    assert "slope=" in capsys.readouterr().out
    lines = (tmp_path / "rate_sweep.csv").read_text().splitlines()
    assert lines[0] == "n,d,s,replicate,final_loss,iters,final_loglik"
    assert len(lines) == 7
    assert (tmp_path / "rate_sweep.summary.json").exists()
    assert (tmp_path / "rate_sweep.svg").exists()


def test_risk_compare_command(tmp_path, capsys):
    code = main(["risk-compare", "--d", "2", "--n", "400", "--s-grid", "0.5,1.0",
                 "--replicates", "2", "--estimators", "spectral,zero",
                 "--out", str(tmp_path)])
    assert code == 0
    assert "mean_loss" in capsys.readouterr().out
    assert (tmp_path / "risk_spectral.csv").exists()
    assert (tmp_path / "risk_zero.csv").exists()
    assert not (tmp_path / "risk_em.csv").exists()
