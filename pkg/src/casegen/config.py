"""Pipeline configuration: defaults, file loading, and content hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .corpus import (
    DEFAULT_DECORATOR_ALLOWLIST,
    DEFAULT_DENY_CALL_NAMES,
    DEFAULT_DENY_ATTR_PREFIXES,
    DEFAULT_JACCARD_THRESHOLD,
    DEFAULT_MODULE_ALLOWLIST,
    DEFAULT_SHINGLE_SIZE,
    DEFAULT_SOURCE_CHAR_CAP,
    ConfigError,
)
from .execution import DEFAULT_MEMORY_BYTES, DEFAULT_OUTPUT_CHARS, DEFAULT_WALL_TIME_MS, Limits
from .inputgen import WriterConfig

AUTH_TOKEN_ENV = "CASEGEN_API_TOKEN"


@dataclass
class PipelineConfig:
    """Resolved settings for every pipeline stage."""

    corpus_roots: list[str] = field(default_factory=list)
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 4

    # corpus filtering
    module_allowlist: list[str] = field(default_factory=lambda: sorted(DEFAULT_MODULE_ALLOWLIST))
    deny_call_names: list[str] = field(default_factory=lambda: sorted(DEFAULT_DENY_CALL_NAMES))
    deny_attr_prefixes: list[str] = field(default_factory=lambda: list(DEFAULT_DENY_ATTR_PREFIXES))
    decorator_allowlist: list[str] = field(default_factory=lambda: sorted(DEFAULT_DECORATOR_ALLOWLIST))
    source_char_cap: int = DEFAULT_SOURCE_CHAR_CAP
    benchmark_roots: list[str] = field(default_factory=list)
    jaccard_threshold: float = DEFAULT_JACCARD_THRESHOLD
    shingle_size: int = DEFAULT_SHINGLE_SIZE

    # input generation
    writer: dict = field(default_factory=dict)          # WriterConfig overrides
    eval_writer: dict = field(default_factory=dict)     # second pass for EVAL extras
    cache_dir: str | None = None
    generator: str = "llm"                              # llm | fallback | mixed
    fallback_k: int = 10
    eval_extra_inputs: int = 5

    # execution
    wall_time_ms: int = DEFAULT_WALL_TIME_MS
    memory_bytes: int = DEFAULT_MEMORY_BYTES
    output_chars: int = DEFAULT_OUTPUT_CHARS
    worker_cmd: list[str] | None = None
    max_requests_per_worker: int = 200
    cpu_seconds: int = 60
    stub_table: str | None = None

    # dataset
    template_dir: str | None = None
    holdout_count: int = 0
    m_min: int = 3
    m_fixed: int | None = None

    # eval
    rel_tol: float = 1e-6

    def limits(self) -> Limits:
        return Limits(
            wall_time_ms=self.wall_time_ms,
            memory_bytes=self.memory_bytes,
            output_chars=self.output_chars,
        )

    def writer_config(self, overrides: dict | None = None) -> WriterConfig:
        merged = dict(self.writer)
        merged.update(overrides or {})
        allowed = {k: v for k, v in merged.items() if k in WriterConfig.__dataclass_fields__}
        return WriterConfig(**allowed)

    def content_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def validate(self) -> None:
        if self.generator not in {"llm", "fallback", "mixed"}:
            raise ConfigError(f"unknown generator mode {self.generator!r}")
        if self.holdout_count < 0:
            raise ConfigError("holdout_count must be >= 0")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if not 0 < self.jaccard_threshold <= 1:
            raise ConfigError("jaccard_threshold must be in (0, 1]")
        try:
            self.limits()
            self.writer_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None, overrides: dict | None = None) -> PipelineConfig:
    """Read a JSON config file and apply CLI overrides on top."""
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")

    unknown = set(data) - set(PipelineConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    cfg = PipelineConfig(**data)
    cfg.validate()
    return cfg
