"""Run configuration shared by the CLI subcommands.

Precedence is defaults < config file < command-line flags. The file
format is flat ``key = value`` lines with ``#`` comments.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ParseError

# Defaults marked "reference" reproduce the published operating point of
# the pipeline; the rest are implementation choices.
_REFERENCE_DEFAULTS = {"alpha", "gamma", "nes_threshold", "top_k", "cosine_relevance"}


@dataclass
class RunConfig:
    alpha: float = 0.1971  # reward mix, reference
    gamma: float = 0.12  # epoch EMA weight, reference
    nes_threshold: float = 0.80  # entity-score filter, reference
    top_k: int = 20  # kept passages, reference
    top_n: int = 100  # candidates fetched before re-ranking
    code_bits: int = 64
    itq_iters: int = 50
    probe: int | None = None  # defaults to 8 * top_k
    seed: int = 42
    cosine_relevance: float = 0.70  # relevance cut for evaluation, reference
    threads: int = 1

    def __post_init__(self):
        if self.probe is None:
            self.probe = 8 * self.top_k
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.nes_threshold < 1.0:
            raise ValueError(f"nes_threshold must be in [0, 1), got {self.nes_threshold}")
        for name in ("top_k", "top_n", "code_bits", "itq_iters", "probe", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def load(
        cls, path: str | Path | None = None, overrides: dict | None = None
    ) -> "RunConfig":
        """Build a config from an optional file plus explicit overrides."""
        values: dict = {}
        if path is not None:
            values.update(cls._parse_file(Path(path)))
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        return cls(**values)

    @classmethod
    def _parse_file(cls, path: Path) -> dict:
        types = {f.name: f.type for f in fields(cls)}
        casts = {"alpha": float, "gamma": float, "nes_threshold": float,
                 "cosine_relevance": float}
        values: dict = {}
        with path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParseError(f"{path}: expected 'key = value'", line_no)
                key, _, raw = line.partition("=")
                key = key.strip()
                raw = raw.strip()
                if key not in types:
                    raise ParseError(f"{path}: unknown config key {key!r}", line_no)
                try:
                    values[key] = casts.get(key, int)(raw)
                except ValueError as exc:
                    raise ParseError(f"{path}: bad value for {key}: {raw!r}", line_no) from exc
        return values

    def is_reference_default(self, name: str) -> bool:
        return name in _REFERENCE_DEFAULTS
