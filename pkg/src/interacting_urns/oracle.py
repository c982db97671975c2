# src/interacting_urns/oracle.py

"""Ground truth for the two-urn model that does not rely on the closed forms.

Two independent routes: the q/r recurrences of the configuration chain solved
on a truncated range with a pinned boundary, and exhaustive enumeration of
short trajectories in exact rational arithmetic.
"""

import itertools
import logging
import math
from collections import defaultdict
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import argmax_colors, classify
from .exceptions import BudgetExceededError, InvalidParameterError, SingularSystemError
from .models import (
    ConfigClass,
    FixationTable,
    ModelParams,
    PathDistribution,
    PoolFlag,
    SystemState,
    TruncatedSolution,
    WeightRule,
    WeightSequence,
)

logger = logging.getLogger(__name__)

MAX_DEPTH = 12
DEFAULT_PATH_BUDGET = 2_000_000


def solve_tridiagonal(
    sub: Sequence[float],
    diag: Sequence[float],
    sup: Sequence[float],
    rhs: Sequence[float],
) -> np.ndarray:
    """Solve a tridiagonal system by forward elimination and back substitution.

    `sub[i]` multiplies x[i-1] in row i (sub[0] is ignored), `sup[i]`
    multiplies x[i+1] (the last entry is ignored).
    """
    n = len(diag)
    if not (len(sub) == len(sup) == len(rhs) == n):
        raise InvalidParameterError("tridiagonal bands must all have the length of the diagonal")
    a = np.asarray(sub, dtype=float)
    b = np.asarray(diag, dtype=float)
    c = np.asarray(sup, dtype=float)
    d = np.asarray(rhs, dtype=float)
    c_prime = np.zeros(n)
    d_prime = np.zeros(n)
    for i in range(n):
        pivot = b[i] - (a[i] * c_prime[i - 1] if i else 0.0)
        if pivot == 0.0:
            raise SingularSystemError(f"zero pivot in row {i} of {n}")
        c_prime[i] = c[i] / pivot if i < n - 1 else 0.0
        d_prime[i] = (d[i] - (a[i] * d_prime[i - 1] if i else 0.0)) / pivot
    x = np.zeros(n)
    x[-1] = d_prime[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d_prime[i] - c_prime[i] * x[i + 1]
    return x


def truncated_solve(p: float, L: int, boundary: float = 0.0) -> TruncatedSolution:
    """q_0..q_L and r_0..r_L with q_{L+1} = r_{L+1} = boundary.

    The r-recurrences do not involve q, so they are solved first; their
    solution then enters the right-hand side of the q-recurrences.
    """
    if not 0 <= p < 0.5:
        raise InvalidParameterError(f"truncated solve needs 0 <= p < 1/2, got p={p}")
    if L < 2:
        raise InvalidParameterError(f"truncation level must be at least 2, got L={L}")
    if boundary not in (0.0, 1.0):
        raise InvalidParameterError(f"boundary must be 0 or 1, got {boundary}")
    n = L + 1

    # r_0 = (1+p)/2 + (1-p)/2 r_1 ; r_l = p r_{l-1} + (1-p) r_{l+1}
    sub = [0.0] + [-p] * L
    diag = [1.0] * n
    sup = [-(1 - p) / 2] + [-(1 - p)] * L
    rhs = [(1 + p) / 2] + [0.0] * L
    rhs[-1] += (1 - p) * boundary
    r = solve_tridiagonal(sub, diag, sup, rhs)

    # q_0 = 1/2 + q_1/2 ; q_l = (p/2)^2 q_{l-1} + (1-p/2)^2 q_{l+1} + p(1-p/2) r_{l-1}
    down, up, cross = (p / 2) ** 2, (1 - p / 2) ** 2, p * (1 - p / 2)
    sub = [0.0] + [-down] * L
    sup = [-0.5] + [-up] * L
    rhs = [0.5] + [cross * r[ell - 1] for ell in range(1, n)]
    rhs[-1] += up * boundary
    q = solve_tridiagonal(sub, diag, sup, rhs)

    logger.debug(f"Truncated solve p={p} L={L} boundary={boundary}: q0={q[0]!r}")
    return TruncatedSolution(
        p=p,
        L=L,
        boundary=boundary,
        q=tuple(float(x) for x in q),
        r=tuple(float(x) for x in r),
    )


def bracket(p: float, L: int) -> FixationTable:
    """Lower and upper fixation probabilities from the zero and one boundaries."""
    lower = truncated_solve(p, L, 0.0)
    upper = truncated_solve(p, L, 1.0)
    table = FixationTable(
        p=p,
        L=L,
        q_lower=lower.q,
        q_upper=upper.q,
        r_lower=lower.r,
        r_upper=upper.r,
    )
    logger.info(f"Bracket p={p} L={L}: q0 in [{table.q_lower[0]!r}, {table.q_upper[0]!r}]")
    return table


def _exact_p(p: float) -> Fraction:
    # str() keeps the decimal the user typed, so 0.4 becomes 2/5
    return Fraction(str(p))


def _table_masses(weights: WeightSequence, counts: Sequence[int]) -> List[Fraction]:
    """Relative masses of the colors whose exponent v is maximal, the largest scaled to 1."""
    terms = [weights.term(n) for n in counts]
    v_star = max(term.v for term in terms)
    tied = [term if term.v == v_star else None for term in terms]
    if all(term.magnitude is not None for term in tied if term is not None):
        exact = [Fraction(str(term.magnitude)) if term is not None else None for term in tied]
        top = max(m for m in exact if m is not None)
        return [m / top if m is not None else Fraction(0) for m in exact]
    # terms built from log_u alone: shifting by the largest keeps exp() at or below 1
    top_log = max(term.log_u for term in tied if term is not None)
    return [Fraction(math.exp(term.log_u - top_log)) if term is not None else Fraction(0) for term in tied]


def _exact_draws(weights: WeightSequence, counts: Sequence[int]) -> List[Tuple[int, Fraction]]:
    """Non-zero draw probabilities of a pool as exact rationals."""
    if weights.rule is WeightRule.GENERALIZED_POWER:
        winners = argmax_colors(counts)
        share = Fraction(1, len(winners))
        return [(k, share) for k in winners]
    if weights.rule is WeightRule.CLASSICAL:
        rho = Fraction(str(weights.rho))
        low = min(counts)
        # dividing through by rho**low keeps the numbers small
        masses = [rho ** (n - low) for n in counts]
    else:
        masses = _table_masses(weights, counts)
    total = sum(masses)
    return [(k, m / total) for k, m in enumerate(masses) if m]


def enumerate_paths(
    params: ModelParams,
    depth: int,
    start: Optional[SystemState] = None,
    max_paths: int = DEFAULT_PATH_BUDGET,
) -> PathDistribution:
    """Exact law of every joint (pool, color) outcome sequence of length `depth`.

    Branches of probability zero are dropped; the remaining probabilities
    sum to exactly one.
    """
    if not 0 <= depth <= MAX_DEPTH:
        raise BudgetExceededError(f"enumeration depth must lie in 0..{MAX_DEPTH}, got {depth}")
    start = start or SystemState.empty(params.urns, params.colors)
    if start.urns != params.urns or start.colors != params.colors:
        raise InvalidParameterError("start state does not match the model's urns and colors")
    p = _exact_p(params.p)
    pools = [(PoolFlag.OWN, 1 - p), (PoolFlag.COMBINED, p)]

    frontier: List[Tuple[Tuple, SystemState, Fraction]] = [((), start, Fraction(1))]
    for level in range(depth):
        expanded = []
        for path, state, prob in frontier:
            per_urn = []
            for row in state.counts:
                outcomes = []
                for flag, pool_prob in pools:
                    if not pool_prob:
                        continue
                    counts = state.combined if flag is PoolFlag.COMBINED else row
                    outcomes.extend(
                        ((flag, color), pool_prob * color_prob)
                        for color, color_prob in _exact_draws(params.weights, counts)
                    )
                per_urn.append(outcomes)
            for joint in itertools.product(*per_urn):
                step = tuple(outcome for outcome, _ in joint)
                weight = prob
                for _, share in joint:
                    weight *= share
                expanded.append((path + (step,), state.add([color for _, color in step]), weight))
            if len(expanded) > max_paths:
                raise BudgetExceededError(
                    f"enumeration passed {max_paths} paths at depth {level + 1}"
                )
        frontier = expanded
        logger.debug(f"Enumerated depth {level + 1}: {len(frontier)} paths")

    return PathDistribution(
        start=start,
        depth=depth,
        paths={path: prob for path, _, prob in frontier},
    )


def class_marginal(dist: PathDistribution, time: int) -> Dict[ConfigClass, Fraction]:
    """Exact probability of each configuration class at `time`."""
    if not 0 <= time <= dist.depth:
        raise InvalidParameterError(f"time {time} outside 0..{dist.depth}")
    marginal: Dict[ConfigClass, Fraction] = defaultdict(Fraction)
    for path, prob in dist.paths.items():
        marginal[classify(dist.state_at(path, time))] += prob
    return dict(marginal)


def transition_distribution(params: ModelParams, start: SystemState) -> Dict[ConfigClass, Fraction]:
    """One-step class transition law out of `start`."""
    return class_marginal(enumerate_paths(params, 1, start), 1)
