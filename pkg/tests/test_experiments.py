import csv
import json
import numpy as np
import pytest

from bbpn import build, cli, write_csv
from bbpn import experiments as ex
from bbpn.likelihood import FitConfig


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("name", ex.bundled_configs())
def test_bundled_configs_parse(name):
    cfg = ex.load_config(name)
    assert cfg.name == name
    assert cfg.problem in ex.make_adapter_factory(cfg.problem).__globals__["REGISTRY"]


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        ex.ExperimentConfig.from_dict({"name": "x", "problem": "riemann", "colour": "red"})


def test_config_rejects_bad_grid():
    with pytest.raises(ValueError):
        ex.ExperimentConfig(h_grid=(0.1, 0.2))


def test_config_sections_and_overrides(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(
        'name = "c"\nproblem = "riemann"\nseed = 4\n'
        '[model]\nkernel = "matern32"\nbasis_v = 2\n'
        '[fit]\nrestarts = 3\n[fit.bounds]\nrho_E = [0.01, 100.0]\n'
        "[calibration]\nrepetitions = 7\n"
    )
    cfg = ex.load_config(path)
    assert (cfg.kernel, cfg.basis_v, cfg.repetitions, cfg.fit.seed) == ("matern32", 2, 7, 4)
    assert cfg.fit.bounds == {"rho_E": (0.01, 100.0)}
    over = cfg.with_overrides(seed=9, fit_learn_alpha=True, kernel=None)
    assert over.seed == over.fit.seed == 9
    assert over.fit.learn_alpha and over.kernel == "matern32"


def test_missing_config():
    with pytest.raises(FileNotFoundError):
        ex.load_config("does_not_exist")


@pytest.fixture(scope="module")
def riemann_result():
    return ex.run_experiment(ex.load_config("riemann"))


def test_riemann_pipeline(riemann_result):
    st = riemann_result.final
    assert st.data.n == 4
    assert st.truth.tolist() == [np.e - 1]
    assert st.report.dof == 1
    assert set(st.baselines) == {"richardson", "bulirsch_stoer"}
    assert riemann_result.meta["problem"] == "riemann"


def test_outputs_and_schema(riemann_result, tmp_path):
    paths = ex.emit_outputs(riemann_result, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == sorted(["riemann_data.csv", "riemann_results.csv", "riemann_comparison.csv",
                            "riemann_plot.csv", "riemann_fit.json", "riemann_limit.png"])
    header, *rows = _rows(tmp_path / "riemann_results.csv")
    assert header == ["experiment", "h_finest", "posterior_mean", "posterior_sd", "truth", "W",
                      "S", "S2_band_lo", "S2_band_hi", "alpha_ml", "baseline_richardson",
                      "baseline_bs"]
    assert len(rows) == 1 and rows[0][0] == "riemann"
    header, *rows = _rows(tmp_path / "riemann_comparison.csv")
    assert header == ["method", "h_finest", "W", "max_rel_error", "S"]
    assert [r[0] for r in rows] == ["finest_run", "bbpn", "richardson", "bulirsch_stoer"]
    header, *rows = _rows(tmp_path / "riemann_plot.csv")
    assert header == ["h_finest", "mean", "lower", "upper", "truth"]
    lo, hi = float(rows[0][2]), float(rows[0][3])
    assert lo < float(rows[0][1]) < hi
    diag = json.loads((tmp_path / "riemann_fit.json").read_text())
    assert diag["stages"][0]["fits"][0]["converged"] in (True, False)
    assert (tmp_path / "riemann_limit.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_outputs_are_byte_identical(tmp_path):
    cfg = ex.load_config("riemann")
    a, b = tmp_path / "a", tmp_path / "b"
    ex.emit_outputs(ex.run_experiment(cfg), a)
    ex.emit_outputs(ex.run_experiment(cfg), b)
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_empty_query_gives_header_only(riemann_result, tmp_path):
    empty = ex.ExperimentResult(riemann_result.config, np.zeros((0, 0)))
    ex.emit_outputs(empty, tmp_path, plots=False)
    assert len(_rows(tmp_path / "riemann_results.csv")) == 1
    assert len(_rows(tmp_path / "riemann_plot.csv")) == 1


def test_cumulative_study_has_one_stage_per_prefix(tmp_path):
    cfg = ex.load_config("ode_euler").with_overrides(fit_restarts=3, plots=False)
    res = ex.run_experiment(cfg)
    assert [s.data.n for s in res.stages] == [2, 3, 4, 5]
    assert res.final.posterior.mean.shape == (2,)
    assert len(res.final.fits) == 2  # one fit per independent component
    ex.emit_outputs(res, tmp_path, plots=True)
    rows = _rows(tmp_path / "ode_euler_comparison.csv")[1:]
    assert len(rows) == 4 * 4  # (method, h) pairs
    assert (tmp_path / "ode_euler_convergence.png").exists()


def test_failure_marker_and_partial_outputs(tmp_path):
    # identically zero observations leave no usable likelihood
    data = build([(h, (t,), 0.0) for h in (0.4, 0.2) for t in (0.0, 1.0)])
    cfg = ex.ExperimentConfig(name="broken", fit=FitConfig(restarts=1), plots=False)
    with pytest.raises(ex.ExperimentError) as exc:
        ex.run_dataset(data, cfg)
    assert exc.value.phase == "fit"
    partial = exc.value.partial
    assert partial.failed_phase == "fit"
    paths = ex.emit_outputs(partial, tmp_path)
    marker = tmp_path / "broken.FAILED"
    assert marker in paths
    assert marker.read_text().startswith("phase: fit")
    assert (tmp_path / "broken_data.csv").exists()
    # a later successful run clears the marker
    ok = build([(h, (t,), 1.0 + h * t) for h in (0.4, 0.2) for t in (0.0, 1.0)])
    ex.emit_outputs(ex.run_dataset(ok, cfg), tmp_path)
    assert not marker.exists()


def test_query_shape_is_checked():
    cfg = ex.ExperimentConfig(name="q", problem="riemann", query=((0.5,),))
    with pytest.raises(ValueError, match="coordinate"):
        ex.run_experiment(cfg)


def test_generate_failure_is_labelled():
    cfg = ex.ExperimentConfig(name="bad", problem="qr_laplacian", h_grid=(0.5, 0.05))
    with pytest.raises(ex.ExperimentError) as exc:
        ex.run_experiment(cfg)
    assert exc.value.phase == "generate"


def test_run_dataset_from_csv(tmp_path):
    pts = [(h, (t,), np.cos(t) + h * t) for h in (0.4, 0.2, 0.1) for t in (0.0, 1.0)]
    data = build(pts)
    cfg = ex.ExperimentConfig(name="user", fit=FitConfig(restarts=2), plots=False)
    res = ex.run_dataset(data, cfg)
    assert res.query.tolist() == [[0.0], [1.0]]
    np.testing.assert_allclose(res.final.posterior.mean, [1.0, np.cos(1.0)], atol=0.05)
    assert res.final.report is None
    path = write_csv(data, tmp_path / "in.csv")
    code = cli.main(["extrapolate", str(path), "--out-dir", str(tmp_path / "out"), "--no-plots",
                     "--restarts", "2", "--name", "user"])
    assert code == 0
    assert len(_rows(tmp_path / "out" / "user_results.csv")) == 3


def test_cli_list_configs(capsys):
    assert cli.main(["list-configs"]) == 0
    assert "qr" in capsys.readouterr().out.split()


def test_cli_riemann(tmp_path, capsys):
    code = cli.main(["riemann", "--out-dir", str(tmp_path), "--no-plots"])
    out = capsys.readouterr().out
    assert code == 0
    assert "inside=True" in out
    assert (tmp_path / "riemann_results.csv").exists()
    assert not (tmp_path / "riemann_limit.png").exists()


def test_cli_flags_reach_the_config():
    args = cli.build_parser().parse_args(["eigen-qr", "--stationary", "--kernel", "gaussian",
                                          "--basis-v", "0", "--seed", "5"])
    cfg = cli._config(args)
    assert cfg.fit.stationary and not cfg.fit.learn_alpha
    assert (cfg.kernel, cfg.basis_v, cfg.fit.seed) == ("gaussian", 0, 5)
    args = cli.build_parser().parse_args(["ode", "--solver", "ab2"])
    cfg = cli._config(args)
    assert cfg.problem_params["solver"] == "ab2" and cfg.fit.alpha == 2.0


def test_cli_reports_bad_input(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "missing.toml")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_failed_run_exit_code(tmp_path):
    data = build([(h, (t,), 0.0) for h in (0.4, 0.2) for t in (0.0, 1.0)])
    path = write_csv(data, tmp_path / "zeros.csv")
    code = cli.main(["extrapolate", str(path), "--name", "zeros", "--out-dir", str(tmp_path),
                     "--no-plots", "--restarts", "1"])
    assert code == 3
    assert (tmp_path / "zeros.FAILED").exists()
    bad = tmp_path / "bad.toml"
    bad.write_text('name = "bad"\nproblem = "riemann"\nquery = [[0.5]]\n')
    assert cli.main(["run", "--config", str(bad), "--out-dir", str(tmp_path)]) == 2


def test_calibration_rows(tmp_path):
    cfg = ex.load_config("ode_euler_calibration").with_overrides(repetitions=2, fit_restarts=2)
    rows, results = ex.calibrate(cfg)
    assert [r["seed"] for r in rows] == [0, 1]
    assert results[0].meta["y0"] != results[1].meta["y0"]
    paths = ex.emit_calibration(rows, cfg, tmp_path)
    assert [p.name for p in paths] == ["ode_euler_calibration_calibration.csv",
                                       "ode_euler_calibration_calibration.png"]
    assert len(_rows(paths[0])) == 3
