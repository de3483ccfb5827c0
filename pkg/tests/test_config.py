"""Run-config loading: file values, flag overrides, env interpolation."""

from __future__ import annotations

import json

import pytest

from vpcot.config import RunConfig, load_config
from vpcot.errors import ConfigError


def scaffold(tmp_path, **data):
    """Write a tasks file, a fixture dir, and a config pointing at both."""
    (tmp_path / "tasks.jsonl").write_text('{"task_id": "t-a", "query": "q"}\n')
    (tmp_path / "bundles").mkdir(exist_ok=True)
    body = {"tasks": "tasks.jsonl", "out": "out", "backend": "fixture", "fixture_dir": "bundles"}
    body.update(data)
    config_path = tmp_path / "run.cfg"
    config_path.write_text(json.dumps(body))
    return config_path


def test_file_paths_resolve_against_config_dir(tmp_path, monkeypatch):
    config_path = scaffold(tmp_path)
    monkeypatch.chdir(tmp_path.parent)  # cwd is NOT the config dir
    config = load_config(config_path)
    assert config.tasks_path == tmp_path / "tasks.jsonl"
    assert config.output_dir == tmp_path / "out"
    assert config.fixtures_dir == tmp_path / "bundles"
    assert config.backend_mode == "fixture"


def test_flag_paths_resolve_against_cwd(tmp_path, monkeypatch):
    config_path = scaffold(tmp_path)
    elsewhere = tmp_path / "elsewhere"
    elsewhere.mkdir()
    (elsewhere / "other.jsonl").write_text('{"task_id": "t-b", "query": "q"}\n')
    monkeypatch.chdir(elsewhere)
    config = load_config(config_path, overrides={"tasks": "other.jsonl"})
    assert config.tasks_path == elsewhere / "other.jsonl"
    assert config.output_dir == tmp_path / "out"  # untouched file value


def test_overrides_win_and_none_is_ignored(tmp_path):
    config_path = scaffold(tmp_path, branch_x=2, seed=7, workers=2)
    config = load_config(config_path, overrides={"branch_x": 5, "seed": None})
    assert config.generation.branch_factor_x == 5
    assert config.seed == 7
    assert config.worker_count == 2


def test_defaults_without_config_file(tmp_path, monkeypatch):
    (tmp_path / "tasks.jsonl").write_text('{"task_id": "t-a", "query": "q"}\n')
    (tmp_path / "bundles").mkdir()
    monkeypatch.chdir(tmp_path)
    config = load_config(None, overrides={"tasks": "tasks.jsonl", "out": "out",
                                          "fixture_dir": "bundles"})
    assert config.generation.branch_factor_x == 2
    assert config.generation.max_depth == 8
    assert config.scaler.candidates_n == 4
    assert config.sandbox.memory_cap_mb == 512
    assert config.worker_count == 1
    assert not config.use_proptest


def test_max_depth_feeds_generation_and_scaling(tmp_path):
    config = load_config(scaffold(tmp_path, max_depth=3))
    assert config.generation.max_depth == 3
    assert config.scaler.max_depth == 3


def test_sandbox_and_scorer_sections(tmp_path):
    config_path = scaffold(
        tmp_path,
        sandbox={"wall_timeout_s": 2.5, "memory_cap_mb": 128, "output_cap_bytes": 4096},
        scorer={"mode": "external", "url": "http://scorer.local",
                "command": ["python3", "serve.py"]},
    )
    config = load_config(config_path)
    assert config.sandbox.wall_timeout_s == 2.5
    assert config.sandbox.memory_cap_mb == 128
    assert config.sandbox.output_cap_bytes == 4096
    assert config.scaler.scorer_mode == "external"
    assert config.scorer_url == "http://scorer.local"
    assert config.scorer_command == ("python3", "serve.py")


def test_api_key_env_interpolation(tmp_path, monkeypatch):
    config_path = scaffold(tmp_path, api_key="${DEMO_SCORER_KEY}")
    monkeypatch.setenv("DEMO_SCORER_KEY", "k-from-env")
    assert load_config(config_path).api_key == "k-from-env"

    monkeypatch.delenv("DEMO_SCORER_KEY")
    with pytest.raises(ConfigError, match="unset environment variable"):
        load_config(config_path)


def test_api_key_literal_passthrough(tmp_path):
    config = load_config(scaffold(tmp_path, api_key="k-literal"))
    assert config.api_key == "k-literal"


@pytest.mark.parametrize(
    "mutation, match",
    [
        ({"surprise": 1}, "unknown config keys"),
        ({"sandbox": {"walls": 1}}, "unknown sandbox keys"),
        ({"scorer": {"modus": "x"}}, "unknown scorer keys"),
        ({"sandbox": []}, "sandbox must be an object"),
        ({"scorer": "http"}, "scorer must be an object"),
        ({"backend": "dream"}, "backend must be one of"),
        ({"workers": 0}, "workers must be at least 1"),
        ({"branch_x": "lots"}, "bad config value"),
        ({"scorer": {"command": "python3 serve.py"}}, "list of argv strings"),
    ],
)
def test_bad_values_raise_config_error(tmp_path, mutation, match):
    with pytest.raises(ConfigError, match=match):
        load_config(scaffold(tmp_path, **mutation))


def test_live_backend_requires_endpoint(tmp_path):
    with pytest.raises(ConfigError, match="endpoint_url"):
        load_config(scaffold(tmp_path, backend="live"))
    config = load_config(scaffold(tmp_path, backend="live", endpoint_url="http://api.local"))
    assert config.endpoint_url == "http://api.local"


def test_fixture_backend_requires_fixture_dir(tmp_path, monkeypatch):
    (tmp_path / "tasks.jsonl").write_text('{"task_id": "t-a", "query": "q"}\n')
    monkeypatch.chdir(tmp_path)
    with pytest.raises(ConfigError, match="fixture_dir"):
        load_config(None, overrides={"tasks": "tasks.jsonl", "out": "out"})


def test_missing_tasks_or_out(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "bundles").mkdir()
    with pytest.raises(ConfigError, match="no tasks file"):
        load_config(None, overrides={"out": "out", "fixture_dir": "bundles"})
    (tmp_path / "tasks.jsonl").write_text('{"task_id": "t-a", "query": "q"}\n')
    with pytest.raises(ConfigError, match="no output directory"):
        load_config(None, overrides={"tasks": "tasks.jsonl", "fixture_dir": "bundles"})


def test_unreadable_config_files(tmp_path):
    with pytest.raises(ConfigError, match="config file not found"):
        load_config(tmp_path / "nope.cfg")
    bad = tmp_path / "bad.cfg"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(bad)
    bad.write_text('["list"]')
    with pytest.raises(ConfigError, match="root must be a JSON object"):
        load_config(bad)


def test_validate_paths_checks_existence(tmp_path):
    config_path = scaffold(tmp_path)
    (tmp_path / "tasks.jsonl").unlink()
    with pytest.raises(ConfigError, match="tasks file not found"):
        load_config(config_path)


def test_validate_paths_checks_fixture_dir(tmp_path):
    config_path = scaffold(tmp_path, fixture_dir="missing-bundles")
    with pytest.raises(ConfigError, match="fixture directory not found"):
        load_config(config_path)


def test_runconfig_direct_construction_validates(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig(tasks_path=tmp_path / "t.jsonl", output_dir=tmp_path / "out",
                  backend_mode="fixture", fixtures_dir=None)
