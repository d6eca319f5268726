"""Run configuration: backend selection per role plus stage constants.

Config files are JSON or YAML. Every key has a default matching the
pipeline's standard protocol (coder budget 3, conjecture budget 5, Pass@32,
120 s verification timeout, 60 s sandbox timeout, 100-answer cap).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import yaml

from .autoformalize import AutoformalizeConfig
from .conjecture import ConjectureConfig
from .enumerate_stage import EnumerationConfig
from .gateway import BackendConfig
from .prove import ProveConfig


class ConfigError(Exception):
    pass


_DEFAULT_ROLES = {
    "conjecturer": {"model_id": "conjecturer"},
    "prover": {"model_id": "prover"},
    "judge": {"model_id": "judge"},
    "autoformalizer": [{"model_id": "autoformalizer"}],
}


@dataclass
class RunConfig:
    roles: dict[str, Any] = field(default_factory=lambda: dict(_DEFAULT_ROLES))
    providers: dict[str, str] = field(default_factory=dict)
    enumeration: EnumerationConfig = field(default_factory=EnumerationConfig)
    conjecture: ConjectureConfig = field(default_factory=ConjectureConfig)
    prove: ProveConfig = field(default_factory=ProveConfig)
    autoformalize: AutoformalizeConfig = field(default_factory=AutoformalizeConfig)
    lean_command: tuple[str, ...] = ("lean",)
    lean_version: str = "4.23.0"
    lean_toolchain_root: str | None = None
    sandbox_command: tuple[str, ...] | None = None
    jobs: int = 1

    def backend_config(self, role: str) -> BackendConfig:
        spec = self.roles.get(role, _DEFAULT_ROLES.get(role))
        if spec is None:
            raise ConfigError(f"no backend configured for role {role!r}")
        if isinstance(spec, list):
            spec = spec[0]
        return BackendConfig.from_dict(spec)

    def autoformalizer_backends(self) -> tuple[BackendConfig, ...]:
        spec = self.roles.get("autoformalizer", _DEFAULT_ROLES["autoformalizer"])
        if isinstance(spec, dict):
            spec = [spec]
        return tuple(BackendConfig.from_dict(s) for s in spec)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) if path.endswith((".yml", ".yaml")) \
            else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if data is None:
        return RunConfig()
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return _from_dict(data)


def _from_dict(data: dict) -> RunConfig:
    cfg = RunConfig()
    try:
        if "roles" in data:
            cfg.roles.update(data["roles"])
        cfg.providers = dict(data.get("providers", {}))
        stage = data.get("stage", {})
        cfg.enumeration = EnumerationConfig(
            coder_max_attempt=stage.get("coder_max_attempt", 3),
            sandbox_timeout_s=stage.get("sandbox_timeout_s", 60.0),
            max_answers=stage.get("max_answers", 100),
            max_turns=stage.get("max_turns", 8),
        )
        cfg.conjecture = ConjectureConfig(
            conjecturing_attempt=stage.get("conjecturing_attempt", 5),
            echo_threshold=stage.get("echo_threshold", 0.90),
            compile_timeout_s=stage.get("compile_timeout_s", 120.0),
        )
        cfg.prove = ProveConfig(
            k=stage.get("pass_k", 32),
            verify_timeout_s=stage.get("verify_timeout_s", 120.0),
            prover=cfg.backend_config("prover"),
            try_cascade_first=stage.get("try_cascade_first", True),
            early_exit=stage.get("early_exit", True),
        )
        cfg.autoformalize = AutoformalizeConfig(
            max_iterations=stage.get("autoformalize_iterations", 5),
            models=cfg.autoformalizer_backends(),
            judge=cfg.backend_config("judge"),
            few_shot=stage.get("few_shot", 3),
            compile_timeout_s=stage.get("compile_timeout_s", 120.0),
        )
        lean = data.get("lean", {})
        cfg.lean_command = tuple(lean.get("command", ["lean"]))
        cfg.lean_version = lean.get("version", "4.23.0")
        cfg.lean_toolchain_root = lean.get("toolchain_root")
        sandbox = data.get("sandbox", {})
        if "command" in sandbox:
            cfg.sandbox_command = tuple(sandbox["command"])
        cfg.jobs = int(data.get("jobs", 1))
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    return cfg
