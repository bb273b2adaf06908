"""Strict JSON experiment configuration."""

from __future__ import annotations

import hashlib
import json
import re
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigError

KINDS = ("simulate", "fixed-point", "poc-sweep", "uniform-sweep", "tails", "chaos", "bounds", "validate")

# grids each kind cannot run without
REQUIRED_GRIDS = {
    "simulate": ("N",),
    "poc-sweep": ("N", "n"),
    "uniform-sweep": ("N", "n"),
    "tails": ("N", "n", "eps"),
    "chaos": ("N",),
    "bounds": ("N", "eps"),
}


class ModelRef(BaseModel):
    """A builtin model name with parameters, or an inline spec document."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    builtin: Optional[str] = "mean-field-gaussian"
    params: dict[str, Any] = Field(default_factory=dict)
    inline: Optional[dict[str, Any]] = None

    @model_validator(mode="after")
    def _one_source(self):
        if self.inline is not None and self.params:
            raise ValueError("params apply to builtin models only")
        return self


class Constants(BaseModel):
    """Existential constants of the bounds and regime parameters."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    C1: float = Field(1.0, gt=0)
    N0: float = Field(1.0, gt=0)
    a1: float = Field(1.0, gt=0)
    a2: float = Field(1.0, gt=0)
    c_d: float = Field(1.0, gt=0)
    gamma0: float = Field(0.05, gt=0)
    gamma: float = Field(0.2, gt=0)
    zeta0: Optional[float] = Field(None, gt=0)
    initial_term: Optional[float] = Field(None, ge=0, le=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal[KINDS]
    seed: int = Field(ge=0, lt=2 ** 64)
    model: ModelRef = Field(default_factory=ModelRef)
    N: list[int] = Field(default_factory=list)
    n: list[int] = Field(default_factory=list)
    eps: list[float] = Field(default_factory=list)
    replicates: int = Field(20, ge=1)
    T: Optional[int] = Field(None, ge=1)
    burn_in: Optional[int] = Field(None, ge=0)
    k: int = Field(2, ge=1)
    N_ref: Optional[int] = Field(None, ge=1000)
    tol: float = Field(1e-3, gt=0)
    max_iter: int = Field(500, ge=1)
    constants: Constants = Field(default_factory=Constants)
    out: str = "runs"

    @model_validator(mode="after")
    def _grids(self):
        for name in REQUIRED_GRIDS.get(self.kind, ()):
            if not getattr(self, name):
                raise ValueError(f"grid '{name}' must be nonempty for kind {self.kind}")
        if any(v < 1 for v in self.N):
            raise ValueError("N values must be positive")
        if any(v < 0 for v in self.n):
            raise ValueError("n values must be nonnegative")
        if any(not 0 < v < float("inf") for v in self.eps):
            raise ValueError("eps values must be positive and finite")
        if self.kind == "chaos" and any(v < self.k for v in self.N):
            raise ValueError(f"chaos needs every N >= k = {self.k}")
        return self

    def identity(self) -> dict:
        """Everything that determines the results table (the output directory does not)."""
        return self.model_dump(mode="json", exclude={"out"})

    def config_hash(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _no_duplicates(pairs):
    seen = {}
    for key, val in pairs:
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}")
        seen[key] = val
    return seen


def _reject_constant(name):
    raise ConfigError(f"non-standard JSON constant {name}")


def _locate(text: str, path: tuple) -> Optional[tuple[int, int]]:
    # find the offset of the last key in ``path``, searching after each parent key
    pos = 0
    for part in path:
        if not isinstance(part, str):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(part)).search(text, pos)
        if m is None:
            return None
        pos = m.start()
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _format_errors(err: ValidationError, text: Optional[str]) -> str:
    msgs = []
    for e in err.errors():
        loc = tuple(e["loc"])
        where = ".".join(str(p) for p in loc) or "<root>"
        pos = _locate(text, loc) if text is not None and loc else None
        at = f" (line {pos[0]}, column {pos[1]})" if pos else ""
        if e["type"] == "extra_forbidden":
            msgs.append(f"unknown key '{where}'{at}")
        else:
            msgs.append(f"{where}: {e['msg']}{at}")
    return "; ".join(msgs)


def config_from_dict(doc: dict, text: Optional[str] = None) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "seed" not in doc:
        raise ConfigError("seed is mandatory")
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as err:
        raise ConfigError(_format_errors(err, text)) from None


def loads_strict(text: str) -> Any:
    try:
        return json.loads(text, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed JSON: {err.msg} (line {err.lineno}, column {err.colno})") from None


def parse_config(path: str, overrides: Optional[dict] = None,
                 default_kind: Optional[str] = None) -> ExperimentConfig:
    """Read and validate a config file; ``overrides`` replace top-level keys."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    doc = loads_strict(text)
    if isinstance(doc, dict):
        if default_kind is not None:
            doc.setdefault("kind", default_kind)
        doc = {**doc, **(overrides or {})}
    return config_from_dict(doc, text)
