# src/interacting_urns/models.py

import math
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .exceptions import InvalidParameterError, WeightTableOverrunError


class WeightTerm(BaseModel):
    """One generalized weight u * inf**v, with the magnitude kept as log(u).

    Tabulated terms also keep u itself as given, so exact arithmetic does
    not have to go back through exp(log_u).
    """
    model_config = ConfigDict(frozen=True)

    log_u: float = Field(..., description="Natural log of the magnitude u > 0")
    v: float = Field(..., description="Exponent of the formal symbol infinity")
    magnitude: Optional[float] = Field(default=None, gt=0, description="u as tabulated, when known")

    @field_validator("log_u", "v")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("weight components must be finite")
        return value

    @model_validator(mode="after")
    def _magnitude_matches_log(self) -> "WeightTerm":
        if self.magnitude is None:
            return self
        if not math.isclose(math.log(self.magnitude), self.log_u, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"magnitude {self.magnitude} does not match log_u {self.log_u}")
        return self

    @property
    def u(self) -> float:
        if self.magnitude is not None:
            return self.magnitude
        return math.exp(self.log_u)


class WeightRule(str, Enum):
    CLASSICAL = "classical"
    GENERALIZED_POWER = "power"
    TABLE = "table"


class WeightSequence(BaseModel):
    """A reinforcement weight sequence i -> u_i * inf**v_i.

    Classical(rho) is rho**i with constant v, GeneralizedPower is inf**i and
    Table is a finite list of terms that refuses to extrapolate.
    """
    model_config = ConfigDict(frozen=True)

    rule: WeightRule
    rho: Optional[float] = Field(default=None, description="Base of the classical rule")
    terms: Tuple[WeightTerm, ...] = Field(default=(), description="Tabulated terms")

    @model_validator(mode="after")
    def _check_rule(self) -> "WeightSequence":
        if self.rule is WeightRule.CLASSICAL:
            if self.rho is None or not math.isfinite(self.rho) or self.rho <= 1:
                raise ValueError(f"Classical weights need a finite rho > 1, got {self.rho}")
        elif self.rule is WeightRule.TABLE and not self.terms:
            raise ValueError("Table weights need at least one term")
        return self

    @classmethod
    def classical(cls, rho: float) -> "WeightSequence":
        return cls(rule=WeightRule.CLASSICAL, rho=rho)

    @classmethod
    def generalized_power(cls) -> "WeightSequence":
        return cls(rule=WeightRule.GENERALIZED_POWER)

    @classmethod
    def table(cls, terms: Sequence[WeightTerm]) -> "WeightSequence":
        return cls(rule=WeightRule.TABLE, terms=tuple(terms))

    @classmethod
    def from_uv(cls, u: Sequence[float], v: Sequence[float]) -> "WeightSequence":
        """Build a table from magnitudes u_i > 0 and exponents v_i."""
        if len(u) != len(v):
            raise InvalidParameterError(f"u has {len(u)} terms but v has {len(v)}")
        if any(not x > 0 for x in u):
            raise InvalidParameterError("weight magnitudes must be strictly positive")
        return cls.table([WeightTerm(log_u=math.log(a), v=b, magnitude=a) for a, b in zip(u, v)])

    @classmethod
    def parse(cls, token: str) -> "WeightSequence":
        """Parse `inf`, `<rho>`, `classical:<rho>` or `table:u=1,2,...;v=0,0,...`."""
        text = token.strip().lower()
        if text in ("inf", "infinity", "power"):
            return cls.generalized_power()
        if text.startswith("classical:"):
            text = text.split(":", 1)[1]
        if text.startswith("table:"):
            parts = dict(
                item.split("=", 1) for item in text.split(":", 1)[1].split(";") if "=" in item
            )
            if "u" not in parts or "v" not in parts:
                raise InvalidParameterError(f"Table weights need u= and v= lists: {token}")
            u = [float(x) for x in parts["u"].split(",")]
            v = [float(x) for x in parts["v"].split(",")]
            return cls.from_uv(u, v)
        try:
            rho = float(text)
        except ValueError:
            raise InvalidParameterError(f"Unrecognised weight rule: {token}") from None
        if not rho > 1 or not math.isfinite(rho):
            raise InvalidParameterError(f"rho must be 'inf' or a finite decimal > 1, got {token}")
        return cls.classical(rho)

    @property
    def is_infinite(self) -> bool:
        """True for the inf**i rule, the rho = infinity limit."""
        return self.rule is WeightRule.GENERALIZED_POWER

    def log_u(self, i: int) -> float:
        if self.rule is WeightRule.CLASSICAL:
            return i * math.log(self.rho)
        if self.rule is WeightRule.GENERALIZED_POWER:
            return 0.0
        return self._tabulated(i).log_u

    def v(self, i: int) -> float:
        if self.rule is WeightRule.CLASSICAL:
            return 0.0
        if self.rule is WeightRule.GENERALIZED_POWER:
            return float(i)
        return self._tabulated(i).v

    def term(self, i: int) -> WeightTerm:
        if self.rule is WeightRule.TABLE:
            return self._tabulated(i)
        return WeightTerm(log_u=self.log_u(i), v=self.v(i))

    def _tabulated(self, i: int) -> WeightTerm:
        if i < 0 or i >= len(self.terms):
            raise WeightTableOverrunError(i, len(self.terms))
        return self.terms[i]


class SystemState(BaseModel):
    """Ball counts of U urns over C colors; counts[u][k] is N_k^u."""
    model_config = ConfigDict(frozen=True)

    counts: Tuple[Tuple[int, ...], ...]

    @field_validator("counts")
    @classmethod
    def _rectangular(cls, value: Tuple[Tuple[int, ...], ...]) -> Tuple[Tuple[int, ...], ...]:
        if not value:
            raise ValueError("a system needs at least one urn")
        width = len(value[0])
        if width < 2:
            raise ValueError("a system needs at least two colors")
        for row in value:
            if len(row) != width:
                raise ValueError("every urn must list the same number of colors")
            if any(n < 0 for n in row):
                raise ValueError("ball counts must be non-negative")
        return value

    @classmethod
    def empty(cls, urns: int, colors: int) -> "SystemState":
        return cls(counts=tuple((0,) * colors for _ in range(urns)))

    @property
    def urns(self) -> int:
        return len(self.counts)

    @property
    def colors(self) -> int:
        return len(self.counts[0])

    @property
    def combined(self) -> Tuple[int, ...]:
        """N_k^*, the count of each color over all urns."""
        return tuple(sum(column) for column in zip(*self.counts))

    @property
    def time(self) -> Optional[int]:
        """Elapsed steps when every urn holds the same number of balls, else None."""
        totals = {sum(row) for row in self.counts}
        return totals.pop() if len(totals) == 1 else None

    def add(self, colors: Sequence[int]) -> "SystemState":
        """One ball of colors[u] added to each urn u."""
        rows = [list(row) for row in self.counts]
        for urn, color in enumerate(colors):
            rows[urn][color] += 1
        return SystemState(counts=tuple(tuple(row) for row in rows))


class ConfigKind(str, Enum):
    C1 = "C1"
    C2 = "C2"
    C3 = "C3"


class ConfigClass(BaseModel):
    """Reduced configuration of two urns over two colors."""
    model_config = ConfigDict(frozen=True)

    kind: ConfigKind
    ell: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _ell_matches_kind(self) -> "ConfigClass":
        if self.kind is ConfigKind.C3 and self.ell is not None:
            raise ValueError("C3 carries no index")
        if self.kind is not ConfigKind.C3 and self.ell is None:
            raise ValueError(f"{self.kind.value} needs an index")
        return self

    @classmethod
    def c1(cls, ell: int) -> "ConfigClass":
        return cls(kind=ConfigKind.C1, ell=ell)

    @classmethod
    def c2(cls, ell: int) -> "ConfigClass":
        return cls(kind=ConfigKind.C2, ell=ell)

    @classmethod
    def c3(cls) -> "ConfigClass":
        return cls(kind=ConfigKind.C3)

    @property
    def phase(self) -> int:
        return {ConfigKind.C1: 1, ConfigKind.C2: 2, ConfigKind.C3: 3}[self.kind]

    def __str__(self) -> str:
        if self.kind is ConfigKind.C3:
            return "C3"
        return f"{self.kind.value}({self.ell})"


class ModelParams(BaseModel):
    """Parameters of the interacting urn model."""
    model_config = ConfigDict(frozen=True)

    urns: int = Field(default=2, ge=1, description="Number of urns U")
    colors: int = Field(default=2, ge=2, description="Number of colors C")
    p: float = Field(..., ge=0.0, le=1.0, description="Probability of drawing from all urns combined")
    weights: WeightSequence = Field(default_factory=WeightSequence.generalized_power)

    @property
    def theorem_mode(self) -> bool:
        """Two urns, two colors, p <= 1/2 under infinite weights."""
        return self.urns == 2 and self.colors == 2 and self.p <= 0.5 and self.weights.is_infinite

    @property
    def pairwise(self) -> bool:
        return self.urns == 2 and self.colors == 2


class PoolFlag(str, Enum):
    OWN = "own"
    COMBINED = "combined"


class UrnDraw(BaseModel):
    """What one urn did during a step."""
    model_config = ConfigDict(frozen=True)

    pool: PoolFlag
    color: int
    ai_draw: bool = Field(default=False, description="Color outside the argmax of the prescribed pool")


class StepRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    draws: Tuple[UrnDraw, ...]

    @property
    def ai_draw(self) -> bool:
        return any(draw.ai_draw for draw in self.draws)

    @property
    def colors(self) -> Tuple[int, ...]:
        return tuple(draw.color for draw in self.draws)


class FixationStatus(str, Enum):
    FIXATED = "fixated"
    ESCAPED = "escaped"
    UNRESOLVED = "unresolved"


class Trajectory(BaseModel):
    """Instrumented run of the model from the empty state.

    Times are step indices of the state S_k; None stands for infinity.
    """
    model_config = ConfigDict(frozen=True)

    steps: int
    final_state: SystemState
    sigma2: Optional[int] = None
    sigma3: Optional[int] = None
    tau: Optional[int] = None
    fixation: FixationStatus = FixationStatus.UNRESOLVED
    fixated_color: Optional[int] = None
    deep: bool = Field(default=False, description="Stopped by the adaptive horizon without fixating")
    exited_after_sigma3: bool = Field(default=False, description="Left absorption at some step after sigma3")
    deficit_series: Tuple[int, ...] = ()
    records: Tuple[StepRecord, ...] = ()
    classes: Tuple[ConfigClass, ...] = ()


class RngStream:
    """Uniform variates determined by (seed, replica_id) alone."""

    __slots__ = ("seed", "replica_id", "block", "_generator", "_buffer", "_cursor", "_size")

    def __init__(self, seed: int, replica_id: int = 0, block: int = 256):
        if not 0 <= seed < 2**64:
            raise InvalidParameterError(f"seed must lie in [0, 2**64), got {seed}")
        if replica_id < 0:
            raise InvalidParameterError(f"replica_id must be non-negative, got {replica_id}")
        if block < 1:
            raise InvalidParameterError(f"block must be positive, got {block}")
        self.seed = seed
        self.replica_id = replica_id
        self.block = block
        sequence = np.random.SeedSequence(seed, spawn_key=(replica_id,))
        self._generator = np.random.default_rng(sequence)
        self._buffer: List[float] = []
        self._cursor = 0
        self._size = 0

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, replica_id={self.replica_id})"

    def uniform(self) -> float:
        """Next variate in [0, 1)."""
        i = self._cursor
        if i == self._size:
            self._buffer = self._generator.random(self.block).tolist()
            self._size = self.block
            i = 0
        self._cursor = i + 1
        return self._buffer[i]

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def exponential(self, rate: float) -> float:
        return -math.log1p(-self.uniform()) / rate


class FixationTally(BaseModel):
    """Replica outcome counts; merging is associative and commutative."""
    model_config = ConfigDict(frozen=True)

    replicas: int = 0
    fixated: int = 0
    escaped: int = 0
    unresolved: int = 0
    ai_fixated: int = Field(default=0, description="Fixated trajectories containing an AI-draw")
    ai_any: int = Field(default=0, description="Trajectories containing an AI-draw")

    def __add__(self, other: "FixationTally") -> "FixationTally":
        return FixationTally(**{
            name: getattr(self, name) + getattr(other, name) for name in FixationTally.model_fields
        })


class EstimationMode(str, Enum):
    BRACKET = "bracket"
    RUIN_SHORTCUT = "ruin_shortcut"


class FixationEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    lower: float = Field(..., ge=0.0, le=1.0)
    upper: float = Field(..., ge=0.0, le=1.0)
    point: float = Field(..., ge=0.0, le=1.0)
    stderr: float = Field(..., ge=0.0)
    tally: FixationTally

    @property
    def unresolved_fraction(self) -> float:
        return self.tally.unresolved / self.tally.replicas if self.tally.replicas else 0.0


class AIDrawEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    p_F_and_Abar: float = Field(..., ge=0.0, le=1.0)
    stderr: float = Field(..., ge=0.0)
    tally: FixationTally


class NonconformistTally(BaseModel):
    """Histogram of the number of non-conformist urns over replicas."""
    model_config = ConfigDict(frozen=True)

    urns: int
    counts: Tuple[int, ...]

    @classmethod
    def zero(cls, urns: int) -> "NonconformistTally":
        return cls(urns=urns, counts=(0,) * ((urns - 1) // 2 + 1))

    @property
    def replicas(self) -> int:
        return sum(self.counts)

    def pmf(self) -> Tuple[float, ...]:
        total = self.replicas
        return tuple(n / total for n in self.counts) if total else self.counts

    def __add__(self, other: "NonconformistTally") -> "NonconformistTally":
        if other.urns != self.urns:
            raise InvalidParameterError("cannot merge tallies for different numbers of urns")
        return NonconformistTally(urns=self.urns, counts=tuple(a + b for a, b in zip(self.counts, other.counts)))


class ClosedForm(BaseModel):
    """Closed-form quantities of the two-urn fixation probability at interaction p."""
    model_config = ConfigDict(frozen=True)

    p: float = Field(..., ge=0.0, le=0.5)
    lambda_minus: float
    lambda_plus: float
    C_p: float
    A_p: float
    q0: float

    @model_validator(mode="after")
    def _check_roots(self) -> "ClosedForm":
        a = (1 - self.p / 2) ** 2
        c = (self.p / 2) ** 2
        for root in (self.lambda_minus, self.lambda_plus):
            if abs(a * root * root - root + c) > 1e-12:
                raise ValueError(f"lambda={root} is not a characteristic root at p={self.p}")
        if not 0.5 - 1e-12 <= self.q0 <= 1 + 1e-12:
            raise ValueError(f"q0={self.q0} outside [1/2, 1]")
        return self


class TruncatedSolution(BaseModel):
    """q and r solved on 0..L with q_{L+1} = r_{L+1} = boundary."""
    model_config = ConfigDict(frozen=True)

    p: float
    L: int
    boundary: float
    q: Tuple[float, ...]
    r: Tuple[float, ...]


class FixationTable(BaseModel):
    """Bracketed fixation probabilities from the truncated configuration chain."""
    model_config = ConfigDict(frozen=True)

    p: float
    L: int
    q_lower: Tuple[float, ...]
    q_upper: Tuple[float, ...]
    r_lower: Tuple[float, ...]
    r_upper: Tuple[float, ...]

    @model_validator(mode="after")
    def _ordered(self) -> "FixationTable":
        for lower, upper in ((self.q_lower, self.q_upper), (self.r_lower, self.r_upper)):
            for lo, hi in zip(lower, upper):
                if lo > hi + 1e-15 or lo < -1e-15 or hi > 1 + 1e-12:
                    raise ValueError(f"bracket [{lo}, {hi}] is not ordered inside [0, 1]")
        return self

    @property
    def q0_width(self) -> float:
        return self.q_upper[0] - self.q_lower[0]

    def contains_q(self, ell: int, value: float, slack: float = 1e-12) -> bool:
        return self.q_lower[ell] - slack <= value <= self.q_upper[ell] + slack

    def contains_r(self, ell: int, value: float, slack: float = 1e-12) -> bool:
        return self.r_lower[ell] - slack <= value <= self.r_upper[ell] + slack


# One step of an exact path: (pool, color) for each urn.
PathStep = Tuple[Tuple[PoolFlag, int], ...]


class PathDistribution(BaseModel):
    """Exact law of all (pool, color) outcome sequences of a given depth."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    start: SystemState
    depth: int
    paths: Dict[Tuple[PathStep, ...], Fraction]

    @property
    def total(self) -> Fraction:
        return sum(self.paths.values(), Fraction(0))

    def state_at(self, path: Tuple[PathStep, ...], time: int) -> SystemState:
        state = self.start
        for step in path[:time]:
            state = state.add([color for _, color in step])
        return state


class SingleUrnSampler(str, Enum):
    DIRECT = "direct"
    RUBIN = "rubin"


class SingleUrnTally(BaseModel):
    """Per-time counts over single-urn replicas.

    black[t] counts replicas whose draw number t + 1 was color 0, balanced[t]
    those holding equally many balls of both colors after that draw.
    """
    model_config = ConfigDict(frozen=True)

    replicas: int = 0
    black: Tuple[int, ...] = ()
    balanced: Tuple[int, ...] = ()

    def __add__(self, other: "SingleUrnTally") -> "SingleUrnTally":
        if not self.replicas:
            return other
        if not other.replicas:
            return self
        if len(self.black) != len(other.black):
            raise InvalidParameterError("cannot merge single-urn tallies of different horizons")
        return SingleUrnTally(
            replicas=self.replicas + other.replicas,
            black=tuple(a + b for a, b in zip(self.black, other.black)),
            balanced=tuple(a + b for a, b in zip(self.balanced, other.balanced)),
        )
