# src/interacting_urns/config.py

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator

from .exceptions import ConfigError
from .models import WeightRule, WeightSequence

logger = logging.getLogger(__name__)

# logging.getLevelNamesMapping is Python 3.11+; same mapping on 3.10.
_level_names_mapping = getattr(
    logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel)
)

ENV_PREFIX = "URNS_"


class RunConfig(BaseModel):
    """Parameters of one CLI run.

    Values come from command-line flags, a KEY=VALUE config file, URNS_*
    environment variables (or a .env file) and the defaults below, in that
    order of precedence.
    """
    p: float = Field(default=0.3, ge=0.0, le=1.0, description="Interaction probability")
    rho: str = Field(default="inf", description="'inf' or a decimal > 1, echoed verbatim")
    urns: int = Field(default=2, ge=1)
    colors: int = Field(default=2, ge=2)
    replicas: int = Field(default=10_000, ge=1)
    horizon: Union[int, str] = Field(default="auto", description="'auto' or a positive step count")
    seed: int = Field(default=0, ge=0, lt=2**64)
    L: int = Field(default=400, ge=2, description="Truncation level of the oracle solve")
    ell_max: int = Field(default=5, ge=0)
    p_grid: str = Field(default="0:0.5:51", description="start:stop:count")
    rho_list: str = Field(default="2,8,32,128,1024")
    mode: Optional[str] = Field(default=None, description="Estimator or sampler, per subcommand")
    weights: str = Field(default="inf", description="Single-urn weight rule token")
    workers: int = Field(default=1, ge=1)
    deep_level: int = Field(default=30, ge=1)
    deep_steps: int = Field(default=100, ge=1)
    max_steps: int = Field(default=10_000, ge=1)
    log_level: str = Field(default="WARNING")
    out: Optional[str] = None

    @field_validator("rho")
    @classmethod
    def _rho_token(cls, value: str) -> str:
        return check_rho_token(value)

    @field_validator("weights")
    @classmethod
    def _weights_token(cls, value: str) -> str:
        WeightSequence.parse(value)
        return value.strip()

    @field_validator("horizon", mode="before")
    @classmethod
    def _horizon(cls, value: Any) -> Union[int, str]:
        if isinstance(value, str):
            value = value.strip().lower()
            if value == "auto":
                return value
            try:
                value = int(value)
            except ValueError:
                raise ValueError(f"horizon must be 'auto' or an integer, got {value!r}") from None
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise ValueError(f"horizon must be a positive integer, got {value!r}")
        return value

    @field_validator("p_grid")
    @classmethod
    def _grid(cls, value: str) -> str:
        parse_grid(value)
        return value

    @field_validator("rho_list")
    @classmethod
    def _rho_list(cls, value: str) -> str:
        for token in split_list(value):
            check_rho_token(token)
        return value

    @field_validator("log_level")
    @classmethod
    def _level(cls, value: str) -> str:
        level = value.strip().upper()
        if level not in _level_names_mapping():
            raise ValueError(f"unknown log level {value!r}")
        return level

    @property
    def horizon_steps(self) -> Optional[int]:
        """The explicit horizon, or None for the adaptive one."""
        return None if self.horizon == "auto" else int(self.horizon)

    @property
    def weight_sequence(self) -> WeightSequence:
        return WeightSequence.parse(self.rho)

    @property
    def grid(self) -> List[float]:
        return parse_grid(self.p_grid)

    @property
    def rho_tokens(self) -> List[str]:
        return split_list(self.rho_list)


def check_rho_token(value: str) -> str:
    """A rho token is 'inf' or a finite decimal > 1; tables are for single urns only."""
    value = value.strip()
    if WeightSequence.parse(value).rule is WeightRule.TABLE:
        raise ValueError("rho must be 'inf' or a decimal > 1")
    return value


def split_list(value: str) -> List[str]:
    tokens = [token.strip() for token in value.split(",") if token.strip()]
    if not tokens:
        raise ValueError("list must not be empty")
    return tokens


def parse_grid(value: str) -> List[float]:
    """Evenly spaced points from `start:stop:count`, both ends included."""
    parts = value.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must read start:stop:count, got {value!r}")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1:
        raise ValueError("grid needs at least one point")
    if count == 1:
        return [start]
    width = (stop - start) / (count - 1)
    # rounding keeps points like 0.3 from printing as 0.30000000000000004
    return [round(start + i * width, 12) for i in range(count)]


def _field_names() -> Dict[str, str]:
    return {name.lower(): name for name in RunConfig.model_fields}


def _normalise(raw: Mapping[str, Any], source: str) -> Dict[str, Any]:
    names = _field_names()
    values = {}
    for key, value in raw.items():
        name = names.get(key.strip().lower().lstrip("-").replace("-", "_"))
        if name is None:
            raise ConfigError(f"Unknown setting {key!r} in {source}")
        if value is not None:
            values[name] = value
    return values


def _from_environment() -> Dict[str, Any]:
    env_path = Path(".env")
    if env_path.exists():
        load_dotenv(env_path)
    values = {}
    for key, name in _field_names().items():
        value = os.getenv(f"{ENV_PREFIX}{key.upper()}")
        if value is not None:
            values[name] = value
    return values


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Merge defaults, environment, config file and flag overrides into a RunConfig."""
    layers: List[Tuple[str, Dict[str, Any]]] = [("environment", _from_environment())]
    if path:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        layers.append((path, _normalise(dotenv_values(config_path), path)))
    layers.append(("flags", _normalise(overrides or {}, "flags")))

    merged: Dict[str, Any] = {}
    for source, values in layers:
        if values:
            logger.debug(f"Settings from {source}: {sorted(values)}")
        merged.update(values)
    try:
        return RunConfig(**merged)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
