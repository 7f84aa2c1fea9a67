# tests/test_experiment.py
import json

import pytest
import yaml

from cli import main
from utils.errors import ConfigError, SchemaMismatchError
from utils.experiment import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_INCONCLUSIVE,
    EXIT_OK,
    EXIT_RESOURCE,
    ExperimentConfig,
    load_config_file,
    merge_overrides,
    run_experiment,
    run_suite,
)
from utils.reports import emit_summary, to_jsonable


def _run(tmp_path, **values):
    values.setdefault("out", str(tmp_path))
    return run_experiment(ExperimentConfig.from_mapping(values))


def test_dim_report_on_z2(tmp_path):
    result = _run(tmp_path, task="dim", group="Z^d:d=2", measure="srw", k=2, radii=[8, 12, 16])
    assert result.exit_code == EXIT_OK
    report = json.loads(result.paths[0].read_text())
    assert report["schema_version"] == "1"
    assert report["status"] == "ok"
    assert report["dimension"] == 5
    assert report["kleiner_bound"] >= 5
    assert report["flags"]["within_kleiner_bound"]
    assert "workers" not in report["config"]
    assert result.paths[0].name.startswith("dim-")


def test_hitting_report_headline(tmp_path):
    result = _run(tmp_path, task="hitting", group="Z", subgroup="sublattice:basis=[[2]]", measure="srw")
    assert result.exit_code == EXIT_OK
    measure = result.report["measure"]
    assert measure.keys() == {"-2", "0", "2"}
    assert measure["0"] == pytest.approx(0.5, abs=1e-9)
    assert measure["-2"] == pytest.approx(0.25, abs=1e-9)
    assert measure["2"] == pytest.approx(0.25, abs=1e-9)


def test_weights_report_is_unipotent_on_z2(tmp_path):
    result = _run(tmp_path, task="weights", group="Z^d:d=2", measure="srw", k=2, radii=[8])
    assert result.exit_code == EXIT_OK
    assert result.report["chain_dims"] == [1, 3, 5]
    assert result.report["flags"]["unipotent"]
    assert result.report["gated_flags"] == ["unipotent"]
    assert result.report["failed_checks"] == []


def test_failed_check_has_its_own_exit_code(tmp_path):
    result = _run(tmp_path, task="polytest", group="Z", k=2, radii=[8], functions=["x**3"])
    assert result.exit_code == EXIT_CHECK_FAILED
    assert result.report["status"] == "check_failed"
    assert result.report["failed_checks"] == ["all_degree_at_most_k"]
    assert result.status_line().startswith("status=check_failed failed=all_degree_at_most_k ")
    assert result.paths[0].exists()


def test_monte_carlo_hitting_passes_symmetry_check(tmp_path):
    result = _run(tmp_path, task="hitting", group="Z", subgroup="sublattice:basis=[[2]]", measure="srw",
                  mode="monte_carlo", n_samples=20_000, seed=11)
    assert result.exit_code == EXIT_OK
    assert result.report["flags"]["symmetric"]
    assert result.report["constants"]["symmetry_tol"] > 1e-3
    assert result.report["constants"]["ambient_trunc_radius"] is None


def test_doubling_cover_bounds_are_informational(tmp_path):
    result = _run(tmp_path, task="cover", group="Z^d:d=2", radii=[24], epsilon="1/4")
    assert result.exit_code == EXIT_OK
    assert "J_within_doubling" in result.report["informational_flags"]
    assert "J_within_counting" in result.report["gated_flags"]


def test_empty_radii_is_a_config_error(tmp_path):
    result = run_experiment(ExperimentConfig(task="dim", radii=[], out=str(tmp_path)))
    assert result.exit_code == EXIT_CONFIG
    assert result.error == "config"
    assert result.status_line().startswith("error=config reason=")
    assert not list(tmp_path.iterdir())


@pytest.mark.parametrize(
    "values",
    [
        {"task": "poincare"},
        {"task": "hitting", "subgroup": "sublattice:basis=[[2]]", "mode": "monte_carlo"},
        {"task": "hitting"},
        {"task": "dim", "radii": [8, 8]},
        {"task": "cover", "epsilon": "3/4"},
        {"task": "dim", "measure": {"family": "levy"}},
        {"task": "fit"},
        {"task": "dim", "colour": "red"},
    ],
)
def test_invalid_configs(values):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping(values)


def test_monte_carlo_report_ignores_worker_count(tmp_path):
    values = dict(task="hitting", group="Z", subgroup="sublattice:basis=[[2]]", measure="srw",
                  mode="monte_carlo", n_samples=2000, seed=20240611)
    one = _run(tmp_path / "one", workers=1, **values)
    four = _run(tmp_path / "four", workers=4, **values)
    assert one.paths[0].name == four.paths[0].name
    assert one.paths[0].read_bytes() == four.paths[0].read_bytes()


def test_repeated_runs_are_byte_identical(tmp_path):
    first = _run(tmp_path / "a", task="dim", group="Z", measure="uniform", k=1, radii=[8, 12, 16])
    second = _run(tmp_path / "b", task="dim", group="Z", measure="uniform", k=1, radii=[8, 12, 16])
    assert first.paths[0].read_bytes() == second.paths[0].read_bytes()


def test_lamplighter_dimension_is_inconclusive(tmp_path):
    result = _run(tmp_path, task="dim", group="lamplighter", measure="srw", k=1, radii=[4, 8, 12])
    assert result.exit_code == EXIT_INCONCLUSIVE
    assert result.report["status"] == "inconclusive"
    assert result.report["dimension"] is None


def test_truncation_failure_is_a_resource_error(tmp_path):
    result = _run(tmp_path, task="hitting", group="Z", subgroup="sublattice:basis=[[2]]", measure="srw",
                  trunc_radius=1)
    assert result.exit_code == EXIT_RESOURCE
    assert result.error == "resource"


def test_csv_format_writes_tables(tmp_path):
    result = _run(tmp_path, task="growth", group="Z", radii=[8], format="csv")
    names = sorted(p.name for p in result.paths[1:])
    assert len(names) == 2
    assert names[0].endswith("_growth.csv")
    assert names[1].endswith("_ratios.csv")


def test_summary_over_reports(tmp_path):
    a = _run(tmp_path, task="growth", group="Z", radii=[8], name="growth_z")
    b = _run(tmp_path, task="dim", group="Z", measure="uniform", k=1, radii=[8, 12, 16], name="dim_z")
    frame = emit_summary([a.paths[0], b.paths[0]], tmp_path / "summary.csv")
    assert len(frame) == 2
    assert frame.loc[1, "dimension"] == 2
    assert (tmp_path / "summary.csv").exists()


def test_summary_rejects_mixed_schema(tmp_path):
    good = _run(tmp_path, task="growth", group="Z", radii=[8]).paths[0]
    old = tmp_path / "old.json"
    old.write_text(json.dumps({"schema_version": "0", "task": "growth"}))
    with pytest.raises(SchemaMismatchError) as info:
        emit_summary([good, old])
    assert info.value.offending == [str(old)]


def test_merge_overrides():
    base = {"task": "dim", "measure": "srw", "k": 1}
    merged = merge_overrides(base, {"k": 3, "seed": None, "measure": {"family": None, "power": 2}})
    assert merged == {"task": "dim", "measure": {"family": "srw", "power": 2}, "k": 3}


def test_yaml_config_with_fractional_epsilon(tmp_path):
    path = tmp_path / "cover.yaml"
    path.write_text(yaml.safe_dump({"task": "cover", "group": "Z^d:d=2", "radii": [12], "epsilon": "1/4"}))
    config = ExperimentConfig.from_mapping(load_config_file(path))
    assert str(config.epsilon_exact) == "1/4"


def test_run_suite_writes_summary(tmp_path):
    configs = tmp_path / "configs"
    configs.mkdir()
    (configs / "growth_z.yaml").write_text("task: growth\ngroup: Z\nradii: [8]\n")
    (configs / "bad.yaml").write_text("task: dim\nradii: []\n")
    results = run_suite(configs, tmp_path / "out")
    assert results["growth_z.yaml"].exit_code == EXIT_OK
    assert results["bad.yaml"].exit_code == EXIT_CONFIG
    assert (tmp_path / "out" / "summary.csv").exists()


def test_cli_dim(tmp_path, capsys):
    code = main(["dim", "--group", "Z", "--measure", "uniform", "--k", "1", "--radii", "8,12,16",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert capsys.readouterr().out.startswith("status=ok")


def test_cli_empty_radii(tmp_path, capsys):
    code = main(["dim", "--radii", "", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert capsys.readouterr().out.startswith("error=config")


def test_non_finite_floats_serialize_as_strings():
    assert to_jsonable({"ratio": float("inf"), "x": float("nan")}) == {"ratio": "inf", "x": "nan"}
