# src/interacting_urns/simulate.py

"""Discrete-time stepping of interacting urns and replica tallies.

Every replica draws its variates from RngStream(seed, replica_id), so a tally
over a set of replica ids does not depend on how the ids are split between
workers.
"""

import logging
import math
from enum import Enum
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from .core import (
    absorbed_color_rows,
    absorption_margin_rows,
    class_from_key,
    class_key,
    color_sampler,
    largest_deficit_rows,
)
from .exceptions import BudgetExceededError, InvalidParameterError, PhaseOrderError
from .models import (
    AIDrawEstimate,
    EstimationMode,
    FixationEstimate,
    FixationStatus,
    FixationTally,
    ModelParams,
    NonconformistTally,
    PoolFlag,
    RngStream,
    SingleUrnSampler,
    SingleUrnTally,
    StepRecord,
    SystemState,
    Trajectory,
    UrnDraw,
    WeightSequence,
)

logger = logging.getLogger(__name__)

DEFAULT_DEEP_LEVEL = 30
DEFAULT_DEEP_STEPS = 100
DEFAULT_MAX_STEPS = 10_000


class StopRule(str, Enum):
    AT_HORIZON = "at_horizon"
    AT_SIGMA3 = "at_sigma3"
    AT_SIGMA2_OR_SIGMA3 = "at_sigma2_or_sigma3"
    AT_TAU_OR_SIGMA3 = "at_tau_or_sigma3"
    ADAPTIVE = "adaptive"


Draw = Tuple[bool, int, bool]


def _draw_all(
    rows: List[List[int]],
    p: float,
    draw: Callable[[Sequence[int], float], int],
    uniform: Callable[[], float],
) -> List[Draw]:
    """(combined, color, ai) per urn against the current counts.

    Urns draw in ascending order, each flipping for the pool before drawing
    its color.
    """
    combined = [sum(column) for column in zip(*rows)]
    draws = []
    for row in rows:
        pooled = uniform() < p
        counts = combined if pooled else row
        color = draw(counts, uniform())
        draws.append((pooled, color, counts[color] < max(counts)))
    return draws


def _as_record(draws: List[Draw]) -> StepRecord:
    return StepRecord(draws=tuple(
        UrnDraw(pool=PoolFlag.COMBINED if pooled else PoolFlag.OWN, color=color, ai_draw=ai)
        for pooled, color, ai in draws
    ))


def step(state: SystemState, params: ModelParams, rng: RngStream) -> Tuple[SystemState, StepRecord]:
    """Advance every urn by one synchronous draw."""
    if state.urns != params.urns or state.colors != params.colors:
        raise InvalidParameterError(
            f"state has {state.urns} urns and {state.colors} colors, "
            f"params expect {params.urns} and {params.colors}"
        )
    draws = _draw_all([list(row) for row in state.counts], params.p, color_sampler(params.weights), rng.uniform)
    return state.add([color for _, color, _ in draws]), _as_record(draws)


class _Walk(NamedTuple):
    steps: int
    rows: List[List[int]]
    sigma2: Optional[int]
    sigma3: Optional[int]
    tau: Optional[int]
    absorbed: Optional[int]
    key: Optional[Tuple[int, int]]
    deep: bool
    locked: bool
    exited: bool
    deficits: List[int]
    records: List[StepRecord]
    keys: List[Tuple[int, int]]


def _walk(
    params: ModelParams,
    rng: RngStream,
    horizon: int,
    stop_rule: StopRule,
    keep_records: bool,
    deep_level: int,
    deep_steps: int,
) -> _Walk:
    """The stepping loop behind run() and the tallies, on plain lists and tuples."""
    rows = [[0] * params.colors for _ in range(params.urns)]
    p = params.p
    draw = color_sampler(params.weights)
    uniform = rng.uniform
    infinite = params.weights.is_infinite
    pairwise = params.pairwise
    adaptive = stop_rule is StopRule.ADAPTIVE
    sigma2: Optional[int] = None
    sigma3: Optional[int] = None
    tau: Optional[int] = None
    key: Optional[Tuple[int, int]] = None
    first: Optional[int] = None
    phase = 1
    deep_run = 0
    deep = locked = exited = False
    deficits: List[int] = []
    records: List[StepRecord] = []
    keys: List[Tuple[int, int]] = []
    t = 0
    while True:
        if pairwise:
            key = class_key(rows)
            current_phase, ell = key
            if keep_records:
                keys.append(key)
            if infinite:
                if current_phase < phase:
                    raise PhaseOrderError(f"entered phase {current_phase} at time {t} after phase {phase}")
                phase = current_phase
            if current_phase == 3:
                (b1, w1), (b2, w2) = rows
                g = 0 if b1 > w1 else 1
            else:
                g = None
                if current_phase == 2:
                    if sigma2 is None:
                        sigma2 = t
                    deficits.append(ell)
        else:
            g = absorbed_color_rows(rows)
        if sigma3 is None:
            if g is not None:
                sigma3 = t
                first = g
        elif g != first:
            exited = True

        if stop_rule is StopRule.AT_SIGMA3 and sigma3 is not None:
            break
        if stop_rule is StopRule.AT_SIGMA2_OR_SIGMA3 and (sigma2 is not None or sigma3 is not None):
            break
        if stop_rule is StopRule.AT_TAU_OR_SIGMA3 and (sigma3 is not None or tau is not None):
            break
        if adaptive or stop_rule is StopRule.AT_SIGMA2_OR_SIGMA3:
            if g is not None and (infinite or _margin(rows, g, pairwise) >= deep_level):
                locked = True
                break
            if pairwise:
                deficit = ell if current_phase == 2 else 0
            else:
                deficit = largest_deficit_rows(rows)
            deep_run = deep_run + 1 if deficit >= deep_level else 0
            if deep_run >= deep_steps or (infinite and p == 0 and t >= 1 and g is None):
                deep = True
                break
        if t >= horizon:
            break

        draws = _draw_all(rows, p, draw, uniform)
        if tau is None:
            for _, _, ai in draws:
                if ai:
                    tau = t + 1
                    break
        for row, (_, color, _) in zip(rows, draws):
            row[color] += 1
        if keep_records:
            records.append(_as_record(draws))
        t += 1

    return _Walk(t, rows, sigma2, sigma3, tau, g, key, deep, locked, exited, deficits, records, keys)


def _check_walk(horizon: int, deep_level: int, deep_steps: int) -> None:
    _check_horizon(horizon)
    if deep_level < 1 or deep_steps < 1:
        raise InvalidParameterError(f"deep_level and deep_steps must be positive, got {deep_level} and {deep_steps}")


def _margin(rows: List[List[int]], g: int, pairwise: bool) -> int:
    if pairwise:
        return min(row[g] - row[1 - g] for row in rows)
    return absorption_margin_rows(rows)


def run(
    params: ModelParams,
    rng: RngStream,
    horizon: int,
    stop_rule: StopRule = StopRule.AT_HORIZON,
    *,
    keep_records: bool = False,
    deep_level: int = DEFAULT_DEEP_LEVEL,
    deep_steps: int = DEFAULT_DEEP_STEPS,
) -> Trajectory:
    """Run from the empty state, recording sigma2, sigma3, tau and the deficit walk.

    `horizon` caps the number of steps for every stop rule. With
    StopRule.ADAPTIVE the run also ends when the system is settled: absorbed
    (with every pool's lead at least `deep_level` under finite weights), or
    some urn has trailed the global majority by `deep_level` or more for
    `deep_steps` consecutive steps, or p = 0 under infinite weights after the
    first draw. The last two are flagged `deep`. StopRule.AT_SIGMA2_OR_SIGMA3
    applies the same settling rules and also ends on entering C2.
    """
    _check_walk(horizon, deep_level, deep_steps)
    walk = _walk(params, rng, horizon, stop_rule, keep_records, deep_level, deep_steps)
    return Trajectory(
        steps=walk.steps,
        final_state=SystemState(counts=tuple(tuple(row) for row in walk.rows)),
        sigma2=walk.sigma2,
        sigma3=walk.sigma3,
        tau=walk.tau,
        fixation=FixationStatus.FIXATED if walk.absorbed is not None else FixationStatus.UNRESOLVED,
        fixated_color=walk.absorbed,
        deep=walk.deep,
        exited_after_sigma3=walk.exited,
        deficit_series=tuple(walk.deficits),
        records=tuple(walk.records),
        classes=tuple(class_from_key(key) for key in walk.keys),
    )


def resolve_deficit_walk(ell: int, p: float, rng: RngStream, level: int = DEFAULT_DEEP_LEVEL) -> bool:
    """Follow a non-conforming urn's deficit walk until it conforms or escapes.

    Below `level` the walk is stepped: from 0 the urn conforms with
    probability (1 + p) / 2 and otherwise trails by one; above 0 it moves down
    with probability p. At `level` or beyond, the classical ruin probability
    (p / (1 - p))**ell decides whether it ever returns to 0.
    """
    if not 0 <= p < 0.5:
        raise InvalidParameterError(f"the deficit walk drifts away only for p < 1/2, got p={p}")
    ratio = p / (1 - p)
    while True:
        if ell >= level:
            if rng.uniform() >= ratio ** ell:
                return False
            ell = 0
        if ell == 0:
            if rng.uniform() < (1 + p) / 2:
                return True
            ell = 1
        else:
            ell += -1 if rng.uniform() < p else 1


def _ruin_tail(p: float, level: int) -> float:
    """Largest chance that a walk stopped at `level` still comes back."""
    if p >= 0.5:
        return 1.0
    return (p / (1 - p)) ** level


def check_shortcut(params: ModelParams) -> None:
    if not params.weights.is_infinite:
        raise InvalidParameterError("ruin_shortcut needs infinite weights")
    if not params.pairwise:
        raise InvalidParameterError("ruin_shortcut needs 2 urns and 2 colors")
    if params.p >= 0.5:
        raise InvalidParameterError(f"ruin_shortcut needs p < 1/2, got p={params.p}")


def fixation_tally(
    params: ModelParams,
    seed: int,
    replica_ids: Iterable[int],
    mode: EstimationMode = EstimationMode.BRACKET,
    horizon: Optional[int] = None,
    stop_rule: Optional[StopRule] = None,
    deep_level: int = DEFAULT_DEEP_LEVEL,
    deep_steps: int = DEFAULT_DEEP_STEPS,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> FixationTally:
    """Outcome counts of the given replicas.

    A None horizon selects the adaptive horizon capped at `max_steps`. The
    ruin shortcut stops each run on entering C2(l) and decides it with the
    gambler's-ruin return probability (p / (1 - p))**l.

    A run counts towards `ai_fixated` when it holds an AI-draw and ends
    absorbed without having left absorption since sigma3; a lock under the
    adaptive horizon counts even after an earlier exit.
    """
    if mode is EstimationMode.RUIN_SHORTCUT:
        check_shortcut(params)
        rule = StopRule.AT_SIGMA2_OR_SIGMA3
    else:
        rule = stop_rule or (StopRule.ADAPTIVE if horizon is None else StopRule.AT_SIGMA3)
    cap = max_steps if horizon is None else horizon
    _check_walk(cap, deep_level, deep_steps)

    replicas = fixated = escaped = unresolved = ai_fixated = ai_any = 0
    for replica_id in replica_ids:
        rng = RngStream(seed, replica_id)
        walk = _walk(params, rng, cap, rule, False, deep_level, deep_steps)
        if walk.absorbed is not None:
            fixated += 1
        elif mode is EstimationMode.RUIN_SHORTCUT and walk.key is not None and walk.key[0] == 2:
            if resolve_deficit_walk(walk.key[1], params.p, rng, level=1):
                fixated += 1
            else:
                escaped += 1
        elif walk.deep:
            escaped += 1
        else:
            unresolved += 1
        replicas += 1
        if walk.tau is not None:
            ai_any += 1
            ai_fixated += walk.absorbed is not None and (walk.locked or not walk.exited)
    return FixationTally(
        replicas=replicas,
        fixated=fixated,
        escaped=escaped,
        unresolved=unresolved,
        ai_fixated=ai_fixated,
        ai_any=ai_any,
    )


def wilson_stderr(point: float, n: int) -> float:
    """Half-width of the one-sigma Wilson score interval."""
    if n <= 0:
        return 0.0
    return math.sqrt(point * (1 - point) / n + 1 / (4 * n * n)) / (1 + 1 / n)


def summarize_fixation(
    tally: FixationTally,
    params: ModelParams,
    mode: EstimationMode,
    deep_level: int = DEFAULT_DEEP_LEVEL,
) -> FixationEstimate:
    n = tally.replicas
    if n == 0:
        raise InvalidParameterError("cannot summarize an empty tally")
    tail = 0.0 if mode is EstimationMode.RUIN_SHORTCUT else _ruin_tail(params.p, deep_level)
    lower = tally.fixated / n
    upper = min(1.0, (tally.fixated + tally.unresolved + tally.escaped * tail) / n)
    point = (lower + upper) / 2
    return FixationEstimate(
        lower=lower,
        upper=upper,
        point=point,
        stderr=wilson_stderr(point, n),
        tally=tally,
    )


def estimate_fixation(
    params: ModelParams,
    replicas: int,
    seed: int,
    mode: EstimationMode = EstimationMode.BRACKET,
    horizon: Optional[int] = None,
    deep_level: int = DEFAULT_DEEP_LEVEL,
    deep_steps: int = DEFAULT_DEEP_STEPS,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> FixationEstimate:
    """Probability that every pool ends on one color, bracketed over `replicas` runs."""
    if replicas < 1:
        raise InvalidParameterError(f"replicas must be positive, got {replicas}")
    if mode is EstimationMode.RUIN_SHORTCUT:
        check_shortcut(params)
    tally = fixation_tally(
        params, seed, range(replicas), mode, horizon,
        deep_level=deep_level, deep_steps=deep_steps, max_steps=max_steps,
    )
    logger.info(f"Fixation tally p={params.p}: {tally}")
    return summarize_fixation(tally, params, mode, deep_level)


def summarize_ai_draws(tally: FixationTally) -> AIDrawEstimate:
    n = tally.replicas
    if n == 0:
        raise InvalidParameterError("cannot summarize an empty tally")
    rate = tally.ai_fixated / n
    return AIDrawEstimate(p_F_and_Abar=rate, stderr=wilson_stderr(rate, n), tally=tally)


def ai_draw_rate(
    params: ModelParams,
    replicas: int,
    seed: int,
    horizon: Optional[int] = None,
    deep_level: int = DEFAULT_DEEP_LEVEL,
    deep_steps: int = DEFAULT_DEEP_STEPS,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> AIDrawEstimate:
    """Share of runs that fixate and contain at least one AI-draw.

    With a horizon, fixation is proxied by sigma3 falling within it with no
    exit from absorption afterwards; under the adaptive horizon it is the lock.
    """
    if replicas < 1:
        raise InvalidParameterError(f"replicas must be positive, got {replicas}")
    tally = fixation_tally(
        params, seed, range(replicas), EstimationMode.BRACKET, horizon,
        stop_rule=StopRule.ADAPTIVE if horizon is None else StopRule.AT_HORIZON,
        deep_level=deep_level, deep_steps=deep_steps, max_steps=max_steps,
    )
    return summarize_ai_draws(tally)


def nonconformist_tally(
    urns: int,
    p: float,
    seed: int,
    replica_ids: Iterable[int],
    deep_level: int = DEFAULT_DEEP_LEVEL,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> NonconformistTally:
    """Number of urns that never fixate on the global majority color, under infinite weights.

    The full system is stepped until every urn has either conformed or
    trails by `deep_level`; the remaining deficit walks are resolved one urn
    at a time.
    """
    if urns < 3 or urns % 2 == 0:
        raise InvalidParameterError(f"the non-conformist law needs an odd number of urns >= 3, got {urns}")
    if not 0 <= p < 0.5:
        raise InvalidParameterError(f"the non-conformist law needs 0 <= p < 1/2, got p={p}")
    draw = color_sampler(WeightSequence.generalized_power())
    counts = [0] * ((urns - 1) // 2 + 1)
    for replica_id in replica_ids:
        rng = RngStream(seed, replica_id)
        rows = [[0, 0] for _ in range(urns)]
        t = 0
        while True:
            draws = _draw_all(rows, p, draw, rng.uniform)
            for row, (_, color, _) in zip(rows, draws):
                row[color] += 1
            t += 1
            g = 0 if sum(row[0] for row in rows) > sum(row[1] for row in rows) else 1
            open_deficits = [row[1 - g] - row[g] for row in rows if row[g] <= row[1 - g]]
            if t >= max_steps or all(d >= deep_level for d in open_deficits):
                break
        nonconformists = sum(
            not resolve_deficit_walk(d, p, rng, deep_level) for d in open_deficits
        )
        counts[nonconformists] += 1
    return NonconformistTally(urns=urns, counts=tuple(counts))


def _check_horizon(horizon: int) -> None:
    if horizon < 1:
        raise InvalidParameterError(f"horizon must be at least 1, got {horizon}")


def single_urn_direct(weights: WeightSequence, horizon: int, rng: RngStream) -> List[int]:
    """Colors drawn by one two-color urn, sampled step by step from the draw law."""
    _check_horizon(horizon)
    draw = color_sampler(weights)
    counts = [0, 0]
    colors = []
    for _ in range(horizon):
        color = draw(counts, rng.uniform())
        counts[color] += 1
        colors.append(color)
    return colors


def rubin_single_urn(weights: WeightSequence, horizon: int, rng: RngStream) -> List[int]:
    """Colors drawn by one two-color urn, built from exponential time-lines.

    When the weight exponents of the two counts differ the larger one is
    drawn outright. Otherwise each color runs an exponential clock with rate
    u at its current count and the first to ring is drawn; the loser keeps
    its residual time, and a color's clock restarts only when its count moves.
    """
    _check_horizon(horizon)
    counts = [0, 0]
    residual: List[Optional[float]] = [None, None]
    colors = []
    for _ in range(horizon):
        v_black, v_white = weights.v(counts[0]), weights.v(counts[1])
        if v_black != v_white:
            color = 0 if v_black > v_white else 1
        else:
            for c in (0, 1):
                if residual[c] is None:
                    residual[c] = rng.exponential(math.exp(weights.log_u(counts[c])))
            color = 0 if residual[0] <= residual[1] else 1
            other = 1 - color
            residual[other] -= residual[color]
        counts[color] += 1
        residual[color] = None
        colors.append(color)
    return colors


def sample_gw_total_progeny(p: float, rng: RngStream, cap: int = 1_000_000) -> int:
    """Total size of a Galton-Watson tree with offspring law P(k) = (1 - p) p**k."""
    if not 0 < p < 0.5:
        raise InvalidParameterError(f"the tree is subcritical only for 0 < p < 1/2, got p={p}")
    pending, total = 1, 0
    while pending:
        pending -= 1
        total += 1
        while rng.uniform() < p:
            pending += 1
        if total + pending > cap:
            raise BudgetExceededError(f"tree exceeded {cap} individuals")
    return total


def single_urn_tally(
    weights: WeightSequence,
    horizon: int,
    seed: int,
    replica_ids: Iterable[int],
    sampler: SingleUrnSampler = SingleUrnSampler.RUBIN,
) -> SingleUrnTally:
    """How often each draw was black, and how often the urn was balanced after it."""
    _check_horizon(horizon)
    draw = rubin_single_urn if sampler is SingleUrnSampler.RUBIN else single_urn_direct
    black = [0] * horizon
    balanced = [0] * horizon
    replicas = 0
    for replica_id in replica_ids:
        colors = draw(weights, horizon, RngStream(seed=seed, replica_id=replica_id))
        lead = 0
        for t, color in enumerate(colors):
            lead += 1 if color == 0 else -1
            black[t] += color == 0
            balanced[t] += lead == 0
        replicas += 1
    return SingleUrnTally(replicas=replicas, black=tuple(black), balanced=tuple(balanced))
