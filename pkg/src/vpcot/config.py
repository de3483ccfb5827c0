"""Run configuration: a JSON file with flag overrides on top.

Relative paths in the file resolve against the file's own directory, so a
config can ship inside a fixture bundle. Environment interpolation
(``${VAR}``) applies to credential fields only; everything else is taken
literally.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .executor import SandboxPolicy
from .generator import GenerationConfig
from .scaler import ScalerConfig

BACKEND_MODES = ("live", "fixture")

_ENV_RE = re.compile(r"^\$\{([A-Za-z_][A-Za-z0-9_]*)\}$")

_TOP_KEYS = {
    "tasks",
    "out",
    "backend",
    "fixture_dir",
    "endpoint_url",
    "api_key",
    "model",
    "branch_x",
    "candidates_n",
    "max_depth",
    "termination_marker",
    "workers",
    "seed",
    "verbosity",
    "use_proptest",
    "sandbox",
    "scorer",
}

_SANDBOX_KEYS = {"wall_timeout_s", "memory_cap_mb", "output_cap_bytes"}

_SCORER_KEYS = {"mode", "url", "command"}


@dataclass(frozen=True)
class RunConfig:
    tasks_path: Path
    output_dir: Path
    backend_mode: str = "fixture"
    fixtures_dir: Path | None = None
    endpoint_url: str = ""
    api_key: str | None = None
    model: str = "default"
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    sandbox: SandboxPolicy = field(default_factory=SandboxPolicy)
    scaler: ScalerConfig = field(default_factory=ScalerConfig)
    scorer_url: str = ""
    scorer_command: tuple[str, ...] = ()
    worker_count: int = 1
    seed: int = 0
    verbosity: int = 0
    use_proptest: bool = False

    def __post_init__(self) -> None:
        if self.backend_mode not in BACKEND_MODES:
            raise ConfigError(f"backend must be one of {BACKEND_MODES}, got {self.backend_mode!r}")
        if self.worker_count < 1:
            raise ConfigError("workers must be at least 1")
        if self.backend_mode == "live" and not self.endpoint_url:
            raise ConfigError("live backend needs an endpoint_url")
        if self.backend_mode == "fixture" and self.fixtures_dir is None:
            raise ConfigError("fixture backend needs a fixture_dir")

    def validate_paths(self) -> None:
        if not self.tasks_path.is_file():
            raise ConfigError(f"tasks file not found: {self.tasks_path}")
        if self.fixtures_dir is not None and not self.fixtures_dir.is_dir():
            raise ConfigError(f"fixture directory not found: {self.fixtures_dir}")


def _interpolate_credential(value, source: str):
    if not isinstance(value, str):
        return value
    match = _ENV_RE.match(value)
    if match is None:
        return value
    name = match.group(1)
    if name not in os.environ:
        raise ConfigError(f"{source} references unset environment variable {name}")
    return os.environ[name]


def _check_keys(data: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read the JSON config (optional) and fold in CLI overrides.

    Overrides use the same keys as the file; None values are ignored.
    Raises ConfigError for unreadable files, unknown keys, bad values, or
    missing referenced paths.
    """
    raw: dict = {}
    base_dir = Path.cwd()
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"config file not found: {config_path}")
        base_dir = config_path.parent
        try:
            raw = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        _check_keys(raw, _TOP_KEYS, "config")

    def resolve(value: str | Path, against: Path) -> Path:
        p = Path(value)
        return p if p.is_absolute() else against / p

    # Paths given in the file resolve against the file; paths given as
    # flags resolve against the working directory.
    paths: dict[str, Path | None] = {"tasks": None, "out": None, "fixture_dir": None}
    for key in paths:
        if raw.get(key) is not None:
            paths[key] = resolve(raw[key], base_dir)
    overrides = dict(overrides or {})
    for key in list(paths):
        if overrides.get(key) is not None:
            paths[key] = resolve(overrides.pop(key), Path.cwd())

    merged = dict(raw)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value

    if paths["tasks"] is None:
        raise ConfigError("no tasks file given (config key 'tasks' or --tasks)")
    if paths["out"] is None:
        raise ConfigError("no output directory given (config key 'out' or --out)")

    sandbox_raw = merged.get("sandbox", {})
    if not isinstance(sandbox_raw, dict):
        raise ConfigError("sandbox must be an object")
    _check_keys(sandbox_raw, _SANDBOX_KEYS, "sandbox")

    scorer_raw = merged.get("scorer", {})
    if not isinstance(scorer_raw, dict):
        raise ConfigError("scorer must be an object")
    _check_keys(scorer_raw, _SCORER_KEYS, "scorer")

    try:
        generation = GenerationConfig(
            branch_factor_x=int(merged.get("branch_x", 2)),
            max_depth=int(merged.get("max_depth", 8)),
            termination_marker=merged.get("termination_marker", GenerationConfig().termination_marker),
        )
        sandbox = SandboxPolicy(
            wall_timeout_s=float(sandbox_raw.get("wall_timeout_s", 10.0)),
            memory_cap_mb=int(sandbox_raw.get("memory_cap_mb", 512)),
            output_cap_bytes=int(sandbox_raw.get("output_cap_bytes", 1 << 20)),
        )
        scaler = ScalerConfig(
            candidates_n=int(merged.get("candidates_n", 4)),
            max_depth=int(merged.get("max_depth", 8)),
            scorer_mode=scorer_raw.get("mode", "oracle"),
        )
        command = scorer_raw.get("command") or ()
        if isinstance(command, str):
            raise ConfigError("scorer command must be a list of argv strings")
        config = RunConfig(
            tasks_path=paths["tasks"],
            output_dir=paths["out"],
            backend_mode=merged.get("backend", "fixture"),
            fixtures_dir=paths["fixture_dir"],
            endpoint_url=merged.get("endpoint_url", ""),
            api_key=_interpolate_credential(merged.get("api_key"), "api_key"),
            model=merged.get("model", "default"),
            generation=generation,
            sandbox=sandbox,
            scaler=scaler,
            scorer_url=scorer_raw.get("url", "") or "",
            scorer_command=tuple(command),
            worker_count=int(merged.get("workers", 1)),
            seed=int(merged.get("seed", 0)),
            verbosity=int(merged.get("verbosity", 0)),
            use_proptest=bool(merged.get("use_proptest", False)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None

    config.validate_paths()
    return config
