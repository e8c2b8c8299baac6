import json
from pathlib import Path as FilePath

import numpy as np
import pandas as pd
import pytest

import experiments
import paths
from experiments import ConfigError, ResourceGuardError, SweepConfig
from lattice import RngSeed
from settings import config
from tree import line_tree

LINE_SWEEP = {
    "d": 1,
    "surrogate": "line",
    "line_length": 2000,
    "statistics": ["return_probability", "range", "exit_time"],
    "n_grid": [4, 8, 16, 32],
    "walks_per_tree": 40,
    "exit_trials": 60,
    "seed": 7,
    "threads": 1,
}


def forgets_last_step(walk):
    """Loop-erasure that drops the final step of the walk."""
    return paths.erase_loops(walk[:-1])


def test_definitional_erasure():
    points = [(0, 0), (1, 0), (2, 0), (1, 0), (1, 1)]
    assert experiments.definitional_erasure(points) == [(0, 0), (1, 0), (1, 1)]
    assert experiments.definitional_erasure([(0, 0)]) == [(0, 0)]


def test_config_from_dict():
    cfg = SweepConfig.from_dict(LINE_SWEEP)
    assert cfg.n_grid == (4, 8, 16, 32)
    assert cfg.statistics == ("return_probability", "range", "exit_time")
    assert cfg.kinds() == {"walk", "exit"}
    assert cfg.validate() is cfg
    ensemble = cfg.ensemble()
    assert ensemble.surrogate == "line"
    assert ensemble.walks_per_tree == 40
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({**LINE_SWEEP, "trees_per_walk": 3})


def test_config_files(tmp_path):
    filepath = tmp_path / "sweep.json"
    filepath.write_text(json.dumps({**LINE_SWEEP, "grids": {"exit_time": [2, 4, 6, 8]}}))
    cfg = SweepConfig.from_file(filepath)
    assert cfg.grid_for("exit_time") == (2, 4, 6, 8)
    assert cfg.grid_for("range") == (4, 8, 16, 32)
    assert SweepConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        SweepConfig.from_file(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        SweepConfig.from_file(broken)


def test_config_hash_ignores_output_settings():
    cfg = SweepConfig.from_dict(LINE_SWEEP)
    same = cfg.with_overrides(out="elsewhere.csv", format="json", threads=4, seed=None)
    assert same.seed == cfg.seed
    assert same.out == "elsewhere.csv"
    assert same.config_hash() == cfg.config_hash()
    assert cfg.with_overrides(seed=8).config_hash() != cfg.config_hash()
    assert len(cfg.config_hash()) > 0


def test_config_validation():
    # volume at n = 32 reaches radius sqrt(32) = 5.66, and 4 * 5.66 > 16
    with pytest.raises(ConfigError):
        SweepConfig().validate()
    assert SweepConfig(d=2, L=24, n_grid=(4, 8, 16, 32)).validate()
    with pytest.raises(ResourceGuardError):
        SweepConfig(d=4, L=50, statistics=("volume",), n_grid=(4, 9)).validate()
    with pytest.raises(ConfigError):
        SweepConfig(statistics=("zero_wired_radius_tail",), n_grid=(1, 2), L=8).validate()
    with pytest.raises(ConfigError):
        SweepConfig(statistics=("range",), boundary="zero-wired", n_grid=(4,)).validate()
    with pytest.raises(ConfigError):
        SweepConfig(statistics=("volume",), surrogate="line").validate()
    with pytest.raises(ConfigError):
        SweepConfig(statistics=("volume",), n_grid=(8, 4), L=20).validate()
    with pytest.raises(ConfigError):
        SweepConfig(statistics=("magnetization",)).validate()
    with pytest.raises(ConfigError):
        SweepConfig(format="xlsx").validate()
    # these statistics never sample a box, so neither guard applies
    assert SweepConfig(d=4, L=50, statistics=("lerw_concentration",), n_grid=(8,)).validate()


def test_tree_statistic_on_a_line():
    line = line_tree(20, center=10)
    assert experiments.tree_statistic("volume", line, 10, 3) == 7.0
    assert experiments.tree_statistic("resistance", line, 10, 3) == pytest.approx(1.5)
    # the origin's past is everything to its right
    assert experiments.tree_statistic("past_survival", line, 10, 10) == 1.0
    assert experiments.tree_statistic("past_survival", line, 10, 11) == 0.0
    assert experiments.tree_statistic("extrinsic_radius", line, 10, 3) == 3.0
    assert np.isnan(experiments.tree_statistic("resistance", line_tree(2), 0, 5))
    with pytest.raises(ValueError):
        experiments.tree_statistic("range", line, 10, 3)


def test_fit_recovers_exponents():
    """Y = 3 n^2 (log n)^{1/2} is fitted exactly: a = 2, b = 1/2, c = log 3."""
    n = 2.0 ** np.arange(4, 12)
    rows = pd.DataFrame({"n": n, "estimate": 3 * n**2 * np.sqrt(np.log(n))})
    fit = experiments.fit_exponents(rows)
    assert fit.a == pytest.approx(2.0, abs=1e-8)
    assert fit.b == pytest.approx(0.5, abs=1e-7)
    assert fit.c == pytest.approx(np.log(3), abs=1e-7)
    assert fit.residual_norm < 1e-8
    assert fit.points == 8
    assert (fit.n_min, fit.n_max) == (16, 2048)
    assert fit.predict(n) == pytest.approx(rows["estimate"].to_numpy(), rel=1e-6)
    assert not fit.weighted


def test_power_model_and_weights():
    n = np.array([4.0, 8.0, 16.0, 32.0, 64.0])
    y = 5 * n**0.5
    rows = pd.DataFrame({"n": n, "estimate": y, "ci_lo": 0.9 * y, "ci_hi": 1.1 * y})
    fit = experiments.fit_exponents(rows, model="power", weighted=True)
    assert fit.model == "power"
    assert fit.weighted
    assert fit.a == pytest.approx(0.5)
    assert fit.b == 0.0
    assert fit.std_errors[1] == 0.0
    assert not fit.b_identifiable
    # zero-width intervals cannot be weights
    flat = rows.assign(ci_lo=y, ci_hi=y)
    assert experiments.log_weights(flat) is None
    assert not experiments.fit_exponents(flat, weighted=True).weighted
    assert experiments.log_weights(rows[["n", "estimate"]]) is None


def test_collinearity_flag():
    n = np.array([100.0, 110.0, 120.0, 130.0])
    rows = pd.DataFrame({"n": n, "estimate": n**1.5})
    assert not experiments.fit_exponents(rows).b_identifiable
    assert experiments.fit_exponents(rows, threshold=1e300).b_identifiable
    assert experiments.fit_exponents(rows, threshold=1e300).condition_number > 1


def test_fit_validation():
    rows = pd.DataFrame({"n": [4.0, 8.0, 16.0], "estimate": [1.0, 2.0, 3.0]})
    with pytest.raises(ValueError):
        experiments.fit_exponents(rows)
    with pytest.raises(ValueError):
        experiments.fit_exponents(pd.DataFrame({"n": [2.0, 4, 8, 16], "estimate": [1.0, 2, 3, 4]}))
    with pytest.raises(ValueError):
        experiments.fit_exponents(pd.DataFrame({"n": [4.0, 8, 16, 32], "estimate": [1.0, 0, 3, 4]}))
    with pytest.raises(ValueError):
        experiments.fit_exponents(pd.DataFrame({"n": [4.0, 8, 16, 32], "estimate": [1.0, 2, 3, 4]}), model="cubic")


def test_fit_all_skips_short_series():
    n = [4, 8, 16, 32]
    rows = pd.DataFrame(
        {
            "statistic": ["volume"] * 4 + ["range"] * 3,
            "n": n + n[:3],
            "estimate": [float(x) ** 2 for x in n] + [1.0, 2.0, 3.0],
        }
    )
    fits = experiments.fit_all(rows)
    assert list(fits.columns) == experiments.FIT_COLUMNS
    assert fits["statistic"].tolist() == ["volume"]
    assert fits["a"].iloc[0] == pytest.approx(2.0)


def test_tail_and_volume_statistics_fit_from_n_1():
    # P(radius >= n) = n^-1 / 2 and a volume of 3 n^4 on n = 1..4: only the
    # plain power model is defined at n = 1 and 2
    n = [1, 2, 3, 4]
    rows = pd.DataFrame(
        {
            "statistic": ["zero_wired_radius_tail"] * 4 + ["extrinsic_volume"] * 4,
            "n": n + n,
            "estimate": [0.5 / x for x in n] + [3.0 * x**4 for x in n],
        }
    )
    fits = experiments.fit_all(rows).set_index("statistic")
    assert set(fits.index) == {"zero_wired_radius_tail", "extrinsic_volume"}
    assert (fits["model"] == "power").all()
    assert fits.loc["zero_wired_radius_tail", "a"] == pytest.approx(-1.0)
    assert fits.loc["extrinsic_volume", "a"] == pytest.approx(4.0)
    assert fits.loc["extrinsic_volume", "c"] == pytest.approx(np.log(3.0))
    assert fits.loc["zero_wired_radius_tail", "b"] == 0.0
    assert np.isfinite(fits["residual_norm"]).all()
    # forcing log log n back in drops every point below 3
    assert experiments.fit_all(rows, model="powerlog").empty


def test_sweep_on_the_line_surrogate(tmp_path):
    cfg = SweepConfig.from_dict(LINE_SWEEP)
    rows, fits = experiments.run_sweep(cfg)
    assert list(rows.columns) == experiments.CSV_COLUMNS
    assert set(rows["statistic"]) == {"return_probability", "range", "exit_time"}
    assert (rows["L"] == 0).all()
    assert (rows["config_hash"] == cfg.config_hash()).all()
    assert (rows["ci_lo"] <= rows["estimate"]).all()
    assert (rows["estimate"] <= rows["ci_hi"]).all()

    # the walk on Z leaves (-n, n) after n^2 steps on average; standard
    # deviation sqrt(2/3) n^2 over 60 walks
    exits = rows[rows["statistic"] == "exit_time"]
    assert np.all(np.abs(exits["estimate"] / exits["n"] ** 2 - 1) < 0.6)
    ranges = rows[rows["statistic"] == "range"]
    assert (ranges["estimate"] <= ranges["n"] + 1).all()
    assert (ranges["estimate"] >= np.sqrt(ranges["n"])).all()
    assert "exit_time" in set(fits["statistic"])

    written = experiments.write_results(cfg, rows, fits, tmp_path / "rows.csv")
    assert [p.name for p in written] == ["rows.csv", "rows_fits.csv"]
    again = pd.read_csv(written[0])
    assert list(again.columns) == experiments.CSV_COLUMNS
    assert len(again) == len(rows)

    as_json = cfg.with_overrides(format="json")
    (filepath,) = experiments.write_results(as_json, rows, fits, tmp_path / "rows.json")
    payload = json.loads(filepath.read_text())
    assert payload["config_hash"] == cfg.config_hash()
    assert len(payload["rows"]) == len(rows)


def test_sweep_is_reproducible():
    cfg = SweepConfig.from_dict({**LINE_SWEEP, "statistics": ["range"], "n_grid": [4, 8]})
    first, _ = experiments.run_sweep(cfg)
    second, _ = experiments.run_sweep(cfg)
    pd.testing.assert_frame_equal(first, second)


def test_battery_results():
    battery = experiments.BatteryResult("demo")
    battery.checks = 2
    assert battery.passed
    battery.fail({"first": 1})
    battery.fail({"second": 2})
    assert not battery.passed
    assert battery.violations == 2
    assert battery.to_dict()["counterexample"] == {"first": 1}
    report = experiments.OracleReport("exact", [experiments.BatteryResult("ok"), battery])
    assert not report.passed
    assert report.to_dict()["batteries"][1]["name"] == "demo"


def test_erasure_batteries_catch_a_mutant():
    seed = RngSeed(3)
    assert experiments.battery_loop_erasure(seed, count=30).passed
    assert experiments.battery_cut_times(seed, count=20).passed
    mutant = experiments.battery_loop_erasure(seed, count=30, erase=forgets_last_step)
    assert not mutant.passed
    assert mutant.violations == 30
    assert mutant.counterexample is not None


def test_small_batteries():
    seed = RngSeed(4)
    assert experiments.battery_resistance(seed, max_line=16, max_depth=6, fixtures=5).passed
    assert experiments.battery_covering(seed, instances=5).passed
    assert experiments.battery_geodesic_inequality(seed, trees=1, max_n=5).passed
    assert experiments.battery_weighted_metric(seed, trees=1, triples=100).passed


def test_statistical_batteries():
    seed = RngSeed(5)
    uniformity = experiments.battery_wilson_uniformity(seed, samples=3000)
    assert uniformity.checks == 3
    assert set(uniformity.detail) == {"K3", "C4", "K4"}
    assert uniformity.passed
    # T~ / n of the straight line: the tip term alone is H_n / n, and every
    # earlier point adds an escape sum that grows like log n
    typical = experiments.battery_typical_time(seed, trials=5000, lengths=(4, 8), t_tilde_trials=500, tail_trials=2000)
    assert typical.checks == 8
    assert typical.detail["t_tilde_slope"] > 0
    assert typical.passed
    tails = typical.detail["concentration_tail"]
    assert all(a >= b for a, b in zip(tails, tails[1:]))


def test_line_calibration():
    # sd of the exit time from (-16, 16) is about 0.82 * 16^2; 4000 walks put
    # 5% at 3.9 standard errors
    sizes = experiments.SMOKE_SIZES["line_calibration"]
    battery = experiments.battery_line_calibration(RngSeed(8), **sizes)
    assert battery.checks == 3
    assert battery.detail["mean_exit"] == pytest.approx(16**2, rel=0.05)
    assert -0.8 < battery.detail["return_probability_slope"] < -0.2
    assert 0.3 < battery.detail["intrinsic_displacement_slope"] < 0.7


def test_capacity_agreement_structure():
    battery = experiments.battery_capacity_agreement(
        RngSeed(9), sets=2, trials=300, horizon=500, green_trials=200, green_horizon=500
    )
    assert battery.checks == 3
    assert np.isfinite(battery.detail["max_z"])


def test_trend_batteries_at_smoke_size():
    hits = experiments.battery_uniform_hit_scaling(RngSeed(10), radii=(2, 4), trials=50, cap_trials=200)
    assert hits.checks == 1
    assert len(hits.detail["ratios"]) == 2
    assert all(r > 0 for r in hits.detail["ratios"])
    lerw = experiments.battery_lerw_concentration(RngSeed(11), lengths=(64,), walks=3)
    assert lerw.checks == 1
    assert set(lerw.detail["medians"]) == {64}
    assert lerw.detail["medians"][64] > 0


def test_every_battery_has_a_smoke_size():
    assert set(experiments.SUITES["all"]) == set(experiments.SMOKE_SIZES)
    assert len(experiments.SUITES["all"]) == 12
    # acceptance sizes are the defaults
    assert experiments.battery_lerw_concentration.__defaults__[:2] == ((10**4, 10**5, 10**6), 200)
    assert experiments.battery_uniform_hit_scaling.__defaults__[0] == (8, 16, 32)


def test_oracle_check():
    report = experiments.oracle_check("exact", seed=1, scale="smoke")
    assert [b.name for b in report.batteries] == list(experiments.EXACT_BATTERIES)
    assert report.passed
    broken = experiments.oracle_check("exact", seed=1, erase=forgets_last_step, scale="smoke")
    assert not broken.passed
    by_name = {b.name: b for b in broken.batteries}
    assert not by_name["loop_erasure"].passed
    assert by_name["resistance"].passed
    with pytest.raises(ConfigError):
        experiments.oracle_check("everything")
    with pytest.raises(ConfigError):
        experiments.oracle_check("exact", scale="huge")


def test_parse_points():
    assert experiments.parse_points("0,0,0,0;1,0,0,0") == [(0, 0, 0, 0), (1, 0, 0, 0)]
    assert experiments.parse_points("1,2;") == [(1, 2)]
    with pytest.raises(ConfigError):
        experiments.parse_points("0,x")


def test_main_exit_codes(tmp_path, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dimension": 4}))
    assert experiments.main(["sweep", "--config", str(bad)]) == experiments.EXIT_CONFIG

    huge = tmp_path / "huge.json"
    huge.write_text(json.dumps({"d": 4, "L": 50, "statistics": ["volume"], "n_grid": [4]}))
    assert experiments.main(["sweep", "--config", str(huge)]) == experiments.EXIT_RESOURCE
    assert (
        experiments.main(["sample-tree", "--d", "8", "--L", "10", "--out", str(tmp_path / "t.ust")])
        == experiments.EXIT_RESOURCE
    )

    good = tmp_path / "line.json"
    good.write_text(json.dumps({**LINE_SWEEP, "statistics": ["range"], "n_grid": [4, 8]}))
    out = tmp_path / "rows.csv"
    assert experiments.main(["sweep", "--config", str(good), "--out", str(out)]) == experiments.EXIT_OK
    assert pd.read_csv(out)["statistic"].unique().tolist() == ["range"]

    failing = experiments.BatteryResult("loop_erasure", checks=1, violations=1)
    monkeypatch.setattr(
        experiments, "oracle_check", lambda suite, seed, **kwargs: experiments.OracleReport(suite, [failing])
    )
    report = tmp_path / "oracle.json"
    assert experiments.main(["oracle-check", "--out", str(report)]) == experiments.EXIT_ORACLE
    assert json.loads(report.read_text())["passed"] is False


def test_tree_commands(tmp_path):
    tree_file = tmp_path / "tree.ust"
    common = ["--seed", "3"]
    assert experiments.main(["sample-tree", "--d", "2", "--L", "4", "--out", str(tree_file), *common]) == 0
    table = tmp_path / "analyze.csv"
    assert experiments.main(["analyze", "--tree", str(tree_file), "--n", "3", "--out", str(table)]) == 0
    frame = pd.read_csv(table)
    assert frame["k"].tolist() == [0, 1, 2, 3]
    assert frame["sphere"].iloc[0] == 1
    walks = tmp_path / "walks.csv"
    argv = ["walk", "--tree", str(tree_file), "--steps", "20", "--walks", "3", "--out", str(walks)]
    assert experiments.main(argv) == 0
    assert len(pd.read_csv(walks)) == 3
    assert experiments.main(["analyze", "--tree", str(tmp_path / "nope.ust"), "--n", "2"]) == 2


def test_capacity_command(tmp_path):
    out = tmp_path / "cap.json"
    argv = ["capacity", "--points", "0,0,0,0", "--trials", "200", "--horizon", "500", "--out", str(out)]
    assert experiments.main(argv) == 0
    report = json.loads(out.read_text())
    assert report["points"] == [[0, 0, 0, 0]]
    assert report["escape_mc"]["value"] > 0
    assert experiments.main(["capacity", "--points", ";"]) == experiments.EXIT_CONFIG


def test_shipped_configs_validate():
    shipped = sorted(FilePath(config("CONFIG_DIR")).glob("*.json"))
    assert len(shipped) >= 4
    for filepath in shipped:
        SweepConfig.from_file(filepath).validate()


def test_shipped_configs_fit_every_statistic():
    for filepath in sorted(FilePath(config("CONFIG_DIR")).glob("*.json")):
        cfg = SweepConfig.from_file(filepath)
        for statistic in cfg.statistics:
            model = experiments.fit_model(statistic)
            usable = [n for n in cfg.grid_for(statistic) if n >= experiments.MIN_FIT_N[model]]
            assert len(usable) >= 4, f"{filepath.name}: {statistic} has {usable} under {model}"


def test_acceptance_configs_match_their_sizes():
    trend = SweepConfig.from_file(FilePath(config("CONFIG_DIR")) / "acceptance_d4.json").validate()
    assert trend.L == 32
    assert trend.trees >= 50
    assert trend.walks_per_tree >= 50
    lerw = SweepConfig.from_file(FilePath(config("CONFIG_DIR")) / "acceptance_trend_d4.json").validate()
    assert {10**4, 10**5, 10**6} <= set(lerw.grid_for("lerw_concentration"))
    assert {8, 16, 32} <= set(lerw.grid_for("uniform_hit_scaling"))
    assert lerw.trees >= 200
