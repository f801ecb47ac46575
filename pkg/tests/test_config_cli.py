"""Config validation, digests, and the command-line surface."""

import copy
import json
import re
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from levyfield.cli import main
from levyfield.config import config_digest, load_config, validate_and_build
from levyfield.errors import ConfigurationError

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
SHIPPED = sorted(CONFIG_DIR.glob("*.yaml"))


def _quick_cfg(kind="simulate", **overrides):
    cfg = {
        "version": 1,
        "kind": kind,
        "seed": 5,
        "model": {
            "dim": 1,
            "beta": 2.0,
            "family": "linear_meanfield",
            "params": {"a": 1.0, "c": 0.5, "gamma_f": 0.2},
        },
        "noise": {
            "split_radius": 1.0,
            "small": {"rate": 0.5, "sampler": "annulus_uniform", "params": {"r_lo": 0.0, "r_hi": 1.0}},
            "big": None,
        },
        "initial": {"kind": "normal", "params": {"mean": 0.0, "std": 1.0}},
        "grid": {"horizon": 1.0, "step": 0.05},
        "solver": {"paths": 32, "gamma": 2.0, "tol": 1.0e-2, "max_iter": 15},
        "experiment": {"n": 16},
    }
    cfg.update(overrides)
    return cfg


def _write_cfg(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    spec = validate_and_build(load_config(path))
    assert spec.kind == load_config(path)["kind"]
    assert spec.coeffs is not None and spec.grid is not None
    assert re.fullmatch(r"[0-9a-f]{64}", config_digest(spec.raw))


def test_shipped_configs_cover_every_kind():
    kinds = {load_config(p)["kind"] for p in SHIPPED}
    assert kinds == {
        "simulate", "picard", "poc", "strong-poc", "moments",
        "common-noise", "check-assumptions",
    }


def test_validation_collects_every_violation_with_keypaths():
    cfg = _quick_cfg()
    cfg["version"] = 2
    cfg["seed"] = -3
    cfg["model"]["beta"] = 3.5
    cfg["model"]["family"] = "nope"
    cfg["grid"] = {"horizon": 1.0}
    cfg["experiment"] = {"n": 16, "bogus": True}
    with pytest.raises(ConfigurationError) as err:
        validate_and_build(cfg)
    msg = str(err.value)
    assert len(err.value.violations) >= 5
    for fragment in ["version", "seed", "model.beta", "model.family", "grid", "bogus"]:
        assert fragment in msg


_BREAKERS = [
    ("bad-version", lambda c: c.update(version=0)),
    ("bad-kind", lambda c: c.update(kind="frobnicate")),
    ("string-seed", lambda c: c.update(seed="five")),
    ("no-model", lambda c: c.pop("model")),
    ("zero-dim", lambda c: c["model"].update(dim=0)),
    ("beta-too-low", lambda c: c["model"].update(beta=1.0)),
    ("unknown-family", lambda c: c["model"].update(family="quartic")),
    ("bad-family-param", lambda c: c["model"]["params"].update(unknown_knob=1.0)),
    ("no-noise", lambda c: c.pop("noise")),
    ("band-missing-rate", lambda c: c["noise"].update(small={"sampler": "annulus_uniform"})),
    ("unknown-sampler", lambda c: c["noise"]["small"].update(sampler="cauchy")),
    ("unknown-initial", lambda c: c.update(initial={"kind": "dirac_comb"})),
    ("no-grid-step", lambda c: c.update(grid={"horizon": 1.0})),
    ("step-not-dividing", lambda c: c.update(grid={"horizon": 1.0, "step": 0.3})),
    ("bad-solver-key", lambda c: c.update(solver={"paths": 32, "warp": 9})),
    ("foreign-experiment-key", lambda c: c["experiment"].update(n_grid=[4, 8, 16])),
    ("missing-n", lambda c: c.update(experiment={})),
]


@pytest.mark.parametrize("breaker", _BREAKERS, ids=lambda b: b[0])
def test_single_field_corruptions_are_rejected(breaker):
    cfg = _quick_cfg()
    breaker[1](cfg)
    with pytest.raises(ConfigurationError):
        validate_and_build(cfg)


def test_kind_specific_experiment_checks():
    poc = _quick_cfg(kind="poc", experiment={"p": 1.0, "n_grid": [16, 8, 4], "replications": 2})
    with pytest.raises(ConfigurationError, match="n_grid"):
        validate_and_build(poc)
    strong = _quick_cfg(
        kind="strong-poc",
        experiment={"p": 1.0, "n_grid": [4, 8, 16], "replications": 2, "q1": 0.9, "q2": 0.5},
    )
    with pytest.raises(ConfigurationError, match="q1"):
        validate_and_build(strong)
    moments = _quick_cfg(kind="moments", experiment={"scalings": [1.0]})
    with pytest.raises(ConfigurationError, match="scalings"):
        validate_and_build(moments)
    common = _quick_cfg(kind="common-noise", experiment={"task": "dance", "n": 4})
    with pytest.raises(ConfigurationError, match="task"):
        validate_and_build(common)
    checks = _quick_cfg(kind="check-assumptions", experiment={"variant": "A7"})
    with pytest.raises(ConfigurationError, match="variant"):
        validate_and_build(checks)


def test_two_layer_property_reflects_common_block():
    spec = validate_and_build(_quick_cfg())
    assert spec.common is None and spec.two_layer.common.small_rate == 0.0
    layered = _quick_cfg()
    layered["common_noise"] = {
        "split_radius": 1.0,
        "small": {"rate": 0.5, "sampler": "annulus_uniform", "params": {"r_lo": 0.0, "r_hi": 1.0}},
        "big": None,
    }
    layered["model"]["params"]["gamma_f0"] = 0.2
    spec2 = validate_and_build(layered)
    assert spec2.common is not None and spec2.two_layer.common.small_rate == 0.5


def test_load_config_rejects_non_mapping_root(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_config_digest_is_canonical():
    cfg = _quick_cfg()
    reordered = dict(reversed(list(copy.deepcopy(cfg).items())))
    assert config_digest(cfg) == config_digest(reordered)
    changed = copy.deepcopy(cfg)
    changed["seed"] = 6
    assert config_digest(changed) != config_digest(cfg)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def test_cli_simulate_writes_outputs_and_manifest(tmp_path):
    cfg = _quick_cfg()
    path = _write_cfg(tmp_path, cfg)
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["simulate", "--config", path, "--out", str(out)])
    assert result.exit_code == 0, result.output
    for name in ["timeseries.csv", "final_cloud.csv", "result.json", "manifest.json"]:
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["kind"] == "simulate"
    assert manifest["seed"] == 5
    assert manifest["exit_code"] == 0
    assert manifest["jobs"] == 1
    assert manifest["config_sha256"] == config_digest(cfg)
    assert manifest["outputs"][-1] == "manifest.json"
    assert manifest["wall_seconds"] >= 0.0
    payload = json.loads((out / "result.json").read_text())
    assert payload["n"] == 16 and len(payload["final_mean"]) == 1
    lines = (out / "timeseries.csv").read_text().splitlines()
    assert lines[0] == "time,mean_0,beta_norm,lyapunov"
    assert len(lines) == 2 + 20  # header + t=0 + one row per step


def test_cli_picard_trace_and_result(tmp_path):
    cfg = _quick_cfg(kind="picard", experiment={})
    path = _write_cfg(tmp_path, cfg)
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["picard", "--config", path, "--out", str(out)])
    assert result.exit_code == 0, result.output
    payload = json.loads((out / "result.json").read_text())
    assert payload["converged"] is True
    assert payload["gamma"] == 2.0 and payload["paths"] == 32
    rows = (out / "trace.csv").read_text().splitlines()
    assert rows[0] == "iteration,distance"
    assert len(rows) - 1 == payload["iterations"]


def test_cli_seed_override_changes_results(tmp_path):
    path = _write_cfg(tmp_path, _quick_cfg())
    outs = {s: tmp_path / f"out{s}" for s in (11, 12, "11b")}
    runner = CliRunner()
    for s, out in outs.items():
        seed = int(str(s).rstrip("b"))
        res = runner.invoke(main, ["simulate", "--config", path, "--seed", str(seed), "--out", str(out)])
        assert res.exit_code == 0
    r11 = (outs[11] / "result.json").read_text()
    assert r11 == (outs["11b"] / "result.json").read_text()
    assert r11 != (outs[12] / "result.json").read_text()
    manifest = json.loads((outs[12] / "manifest.json").read_text())
    assert manifest["seed"] == 12


def test_cli_worker_count_does_not_change_bytes(tmp_path):
    cfg = _quick_cfg(
        kind="poc",
        experiment={"p": 1.0, "n_grid": [4, 8, 16], "replications": 4, "reference_paths": 64},
    )
    path = _write_cfg(tmp_path, cfg)
    runner = CliRunner()
    outs = []
    for jobs in (1, 2):
        out = tmp_path / f"jobs{jobs}"
        res = runner.invoke(main, ["poc", "--config", path, "--jobs", str(jobs), "--out", str(out)])
        assert res.exit_code in (0, 1), res.output  # verdict may fail on a toy grid
        outs.append(out)
    assert (outs[0] / "rate.csv").read_bytes() == (outs[1] / "rate.csv").read_bytes()
    assert (outs[0] / "result.json").read_bytes() == (outs[1] / "result.json").read_bytes()
    assert json.loads((outs[1] / "manifest.json").read_text())["jobs"] == 2


def test_cli_jobs_default_comes_from_environment(tmp_path):
    path = _write_cfg(tmp_path, _quick_cfg())
    out = tmp_path / "out"
    result = CliRunner().invoke(
        main, ["simulate", "--config", path, "--out", str(out)], env={"LEVYFIELD_JOBS": "3"}
    )
    assert result.exit_code == 0
    assert json.loads((out / "manifest.json").read_text())["jobs"] == 3


def test_cli_rejects_kind_mismatch_and_bad_configs(tmp_path):
    path = _write_cfg(tmp_path, _quick_cfg())
    runner = CliRunner()
    mismatch = runner.invoke(main, ["picard", "--config", path, "--out", str(tmp_path / "a")])
    assert mismatch.exit_code == 2
    assert "does not match" in mismatch.stderr

    broken = _quick_cfg()
    broken["model"]["beta"] = 9.0
    bad_path = _write_cfg(tmp_path, broken, name="bad.yaml")
    invalid = runner.invoke(main, ["simulate", "--config", bad_path, "--out", str(tmp_path / "b")])
    assert invalid.exit_code == 2
    assert "config error" in invalid.stderr

    missing = runner.invoke(main, ["simulate", "--config", str(tmp_path / "nope.yaml")])
    assert missing.exit_code == 2


def test_cli_divergent_run_writes_error_json(tmp_path):
    # deterministic explicit-scheme blowup: cubic drift, start far outside
    # the stability radius sqrt(2/step), no noise needed
    cfg = _quick_cfg()
    cfg["model"] = {"dim": 1, "beta": 2.0, "family": "cubic_interaction",
                    "params": {"c1": 1.0, "c2": 1.0, "c3": 0.1, "c4": 1.0}}
    cfg["noise"] = {"split_radius": 1.0, "small": None, "big": None}
    cfg["initial"] = {"kind": "point", "params": {"value": 20.0}}
    path = _write_cfg(tmp_path, cfg)
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["simulate", "--config", path, "--out", str(out)])
    assert result.exit_code == 2
    error = json.loads((out / "error.json").read_text())
    assert error["error"] == "DivergenceError"
    assert "diverged" in error["message"]
    assert json.loads((out / "manifest.json").read_text())["exit_code"] == 2


def test_cli_wasserstein_selftest_passes():
    result = CliRunner().invoke(main, ["wasserstein-selftest", "--instances", "25", "--seed", "3"])
    assert result.exit_code == 0, result.output
    lines = [l for l in result.output.splitlines() if l.startswith("[")]
    assert len(lines) == 4 and all(l.startswith("[PASS]") for l in lines)


def test_cli_version_and_help():
    runner = CliRunner()
    assert runner.invoke(main, ["--version"]).exit_code == 0
    help_out = runner.invoke(main, ["--help"])
    assert help_out.exit_code == 0
    for sub in ["simulate", "picard", "poc", "strong-poc", "moments",
                "common-noise", "check-assumptions", "wasserstein-selftest"]:
        assert sub in help_out.output
