"""Pipeline configuration: one JSON file, every field overridable by a flag.

Relative paths are resolved against the config file's directory so a config
can travel with its data. Secrets never appear in the config; backend blocks
name the environment variable that holds the API key.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .backends import BackendConfig, RetryPolicy
from .collection import DepthPolicy
from .errors import ConfigError
from .grading import SCOPE_GLOBAL, SCOPE_PER_TOPIC
from .scoring import DEFAULT_CONTEXT_BUDGET, DEFAULT_SCORE_SCALE


@dataclass(frozen=True)
class ModelSpec:
    """A backend plus the scoring settings used with it."""

    backend: BackendConfig
    score_scale: float = DEFAULT_SCORE_SCALE
    context_token_budget: int = DEFAULT_CONTEXT_BUDGET
    lenient_parse: bool = True


@dataclass
class PipelineConfig:
    output_dir: Path
    topics: Path | None = None
    corpus: Path | None = None
    runs_dir: Path | None = None
    reference_qrels: Path | None = None
    run_classes: Path | None = None
    template: Path | None = None
    cache_path: Path | None = None
    depth: DepthPolicy = field(default_factory=DepthPolicy)
    grading_scope: str = SCOPE_GLOBAL
    k: int = 10
    binarize_at: int = 1
    figures: bool = True
    models: dict[str, ModelSpec] = field(default_factory=dict)

    def model_spec(self, model_id: str) -> ModelSpec:
        spec = self.models.get(model_id)
        if spec is None:
            known = ", ".join(sorted(self.models)) or "none configured"
            raise ConfigError(f"unknown model {model_id!r} (known: {known})")
        return spec

    def require(self, name: str) -> Path:
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"config field {name!r} is required for this command")
        return value


_BACKEND_KEYS = {
    "kind", "model_id", "endpoint", "max_concurrency", "timeout",
    "max_attempts", "base_backoff", "api_key_env", "temperature", "replay_mode",
}
_MODEL_EXTRA_KEYS = {"score_scale", "context_token_budget", "lenient_parse"}


def _parse_model_spec(name: str, obj: dict) -> ModelSpec:
    if not isinstance(obj, dict):
        raise ConfigError(f"backend {name!r} must be an object")
    unknown = set(obj) - _BACKEND_KEYS - _MODEL_EXTRA_KEYS
    if unknown:
        raise ConfigError(f"backend {name!r}: unknown keys {sorted(unknown)}")
    if "kind" not in obj:
        raise ConfigError(f"backend {name!r}: missing kind")
    retry = RetryPolicy(
        max_attempts=int(obj.get("max_attempts", 5)),
        base_backoff=float(obj.get("base_backoff", 1.0)),
    )
    backend = BackendConfig(
        kind=obj["kind"],
        model_id=obj.get("model_id", name),
        endpoint=obj.get("endpoint", ""),
        max_concurrency=int(obj.get("max_concurrency", 4)),
        timeout=float(obj.get("timeout", 60.0)),
        retry=retry,
        api_key_env=obj.get("api_key_env"),
        temperature=float(obj.get("temperature", 0.0)),
        replay_mode=obj.get("replay_mode", "generative"),
    )
    return ModelSpec(
        backend=backend,
        score_scale=float(obj.get("score_scale", DEFAULT_SCORE_SCALE)),
        context_token_budget=int(obj.get("context_token_budget", DEFAULT_CONTEXT_BUDGET)),
        lenient_parse=bool(obj.get("lenient_parse", True)),
    )


_TOP_LEVEL_KEYS = {
    "topics", "corpus", "runs_dir", "reference_qrels", "run_classes",
    "output_dir", "template", "cache", "depth", "grading_scope", "k",
    "binarize_at", "figures", "backends",
}


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(obj) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    base = path.parent

    def resolve(key: str) -> Path | None:
        value = obj.get(key)
        if value is None:
            return None
        return (base / str(value)).resolve() if not os.path.isabs(str(value)) else Path(value)

    depth_obj = obj.get("depth", {})
    if isinstance(depth_obj, int):
        depth = DepthPolicy(default=depth_obj)
    elif isinstance(depth_obj, dict):
        depth = DepthPolicy(
            default=int(depth_obj.get("default", 25)),
            per_tag={str(k): int(v) for k, v in depth_obj.get("per_run", {}).items()},
        )
    else:
        raise ConfigError("depth must be an integer or an object")

    scope = obj.get("grading_scope", SCOPE_GLOBAL)
    if scope not in (SCOPE_GLOBAL, SCOPE_PER_TOPIC):
        raise ConfigError(f"unknown grading_scope {scope!r}")

    models = {
        str(name): _parse_model_spec(str(name), spec)
        for name, spec in obj.get("backends", {}).items()
    }

    out_dir = resolve("output_dir")
    if out_dir is None:
        raise ConfigError("config must set output_dir")

    return PipelineConfig(
        output_dir=out_dir,
        topics=resolve("topics"),
        corpus=resolve("corpus"),
        runs_dir=resolve("runs_dir"),
        reference_qrels=resolve("reference_qrels"),
        run_classes=resolve("run_classes"),
        template=resolve("template"),
        cache_path=resolve("cache"),
        depth=depth,
        grading_scope=scope,
        k=int(obj.get("k", 10)),
        binarize_at=int(obj.get("binarize_at", 1)),
        figures=bool(obj.get("figures", True)),
        models=models,
    )


def load_run_classes(path: Path) -> dict[str, str]:
    """Run manifest: JSON object mapping run tag to clip_based | other."""
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read run classes from {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("run classes file must be a JSON object")
    classes: dict[str, str] = {}
    for tag, cls in obj.items():
        if cls not in ("clip_based", "other"):
            raise ConfigError(f"run {tag!r}: unknown system class {cls!r}")
        classes[str(tag)] = str(cls)
    return classes
