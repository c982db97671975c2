# src/interacting_urns/core.py

"""Draw-probability kernel, pair reduction and configuration classes."""

import math
from typing import Callable, List, Optional, Sequence, Tuple

from .exceptions import InvalidParameterError
from .models import ConfigClass, SystemState, WeightRule, WeightSequence


def draw_distribution(weights: WeightSequence, counts: Sequence[int]) -> List[float]:
    """Probability of drawing each color from a pool holding `counts`.

    Only colors whose weight exponent v attains the maximum compete; among
    them the odds are proportional to u, evaluated in log-space.
    """
    if not counts:
        raise InvalidParameterError("a pool needs at least one color")
    exponents = [weights.v(n) for n in counts]
    v_star = max(exponents)
    logs = [weights.log_u(n) if v == v_star else None for n, v in zip(counts, exponents)]
    top = max(x for x in logs if x is not None)
    masses = [math.exp(x - top) if x is not None else 0.0 for x in logs]
    total = sum(masses)
    return [m / total for m in masses]


def draw_prob(weights: WeightSequence, counts: Sequence[int], k: int) -> float:
    """pi_w for color k against all the other colors of the pool."""
    if not 0 <= k < len(counts):
        raise InvalidParameterError(f"color index {k} outside 0..{len(counts) - 1}")
    return draw_distribution(weights, counts)[k]


def _invert(masses: Sequence[float], u: float) -> int:
    """Inverse CDF over unnormalised masses, skipping colors of mass zero."""
    threshold = u * sum(masses)
    acc = 0.0
    last = 0
    for k, mass in enumerate(masses):
        if mass == 0.0:
            continue
        acc += mass
        last = k
        if threshold < acc:
            return k
    return last


def color_sampler(weights: WeightSequence) -> Callable[[Sequence[int], float], int]:
    """A function (counts, u) -> color drawing from the pool at u in [0, 1).

    The returned function is specialised to the weight rule; it is what the
    simulators call once per urn and step.
    """
    if weights.rule is WeightRule.GENERALIZED_POWER:
        def draw_majority(counts: Sequence[int], u: float) -> int:
            if len(counts) == 2:
                black, white = counts
                if black != white:
                    return 0 if black > white else 1
                return 0 if u < 0.5 else 1
            winners = argmax_colors(counts)
            return winners[min(int(u * len(winners)), len(winners) - 1)]
        return draw_majority

    if weights.rule is WeightRule.CLASSICAL:
        log_rho = math.log(weights.rho)

        def draw_classical(counts: Sequence[int], u: float) -> int:
            top = max(counts)
            return _invert([math.exp((n - top) * log_rho) for n in counts], u)
        return draw_classical

    def draw_tabulated(counts: Sequence[int], u: float) -> int:
        return _invert(draw_distribution(weights, counts), u)
    return draw_tabulated


def sample_color(weights: WeightSequence, counts: Sequence[int], u: float) -> int:
    """Color drawn by inverting the cumulative draw distribution at u in [0, 1)."""
    return color_sampler(weights)(counts, u)


def argmax_colors(counts: Sequence[int]) -> Tuple[int, ...]:
    top = max(counts)
    return tuple(k for k, n in enumerate(counts) if n == top)


def strict_majority(counts: Sequence[int]) -> Optional[int]:
    """The unique most frequent color, or None on a tie."""
    winners = argmax_colors(counts)
    return winners[0] if len(winners) == 1 else None


def reduce_pair(black: int, white: int) -> Tuple[int, int]:
    """Withdraw one ball of each color until one color is absent."""
    if black < 0 or white < 0:
        raise InvalidParameterError("ball counts must be non-negative")
    m = min(black, white)
    return black - m, white - m


def global_majority(state: SystemState) -> Optional[int]:
    return strict_majority(state.combined)


def classify(state: SystemState) -> ConfigClass:
    """Reduce a two-urn, two-color state to C1(l), C2(l) or C3."""
    if state.urns != 2 or state.colors != 2:
        raise InvalidParameterError(
            f"classify needs 2 urns and 2 colors, got {state.urns} urns and {state.colors} colors"
        )
    return classify_rows(state.counts)


def classify_rows(rows: Sequence[Sequence[int]]) -> ConfigClass:
    return class_from_key(class_key(rows))


def class_key(rows: Sequence[Sequence[int]]) -> Tuple[int, int]:
    """(phase, l) of a two-urn, two-color state; l is 0 for C3."""
    (b1, w1), (b2, w2) = rows
    if b1 + b2 == w1 + w2:
        return 1, abs(b1 - w1)
    if b1 + b2 > w1 + w2:
        lead1, lead2 = b1 - w1, b2 - w2
    else:
        lead1, lead2 = w1 - b1, w2 - b2
    if lead1 > 0 and lead2 > 0:
        return 3, 0
    # both urns failing would contradict the global majority
    return 2, -min(lead1, lead2)


def class_from_key(key: Tuple[int, int]) -> ConfigClass:
    phase, ell = key
    if phase == 3:
        return ConfigClass.c3()
    return ConfigClass.c1(ell) if phase == 1 else ConfigClass.c2(ell)


def absorbed_color(state: SystemState) -> Optional[int]:
    """Color that is the strict majority of every pool, if there is one.

    Every pool means each urn and the urns combined; for two urns and two
    colors this is exactly the class C3.
    """
    return absorbed_color_rows(state.counts)


def absorbed_color_rows(rows: Sequence[Sequence[int]]) -> Optional[int]:
    g = strict_majority([sum(column) for column in zip(*rows)])
    if g is None:
        return None
    for row in rows:
        if strict_majority(row) != g:
            return None
    return g


def absorption_margin(state: SystemState) -> int:
    return absorption_margin_rows(state.counts)


def absorption_margin_rows(rows: Sequence[Sequence[int]]) -> int:
    """Smallest lead of the absorbing color over any rival, across all pools."""
    g = absorbed_color_rows(rows)
    if g is None:
        return 0
    combined = [sum(column) for column in zip(*rows)]
    return min(
        pool[g] - max(n for k, n in enumerate(pool) if k != g) for pool in (*rows, combined)
    )


def largest_deficit_rows(rows: Sequence[Sequence[int]]) -> int:
    """How far the most non-conforming urn trails the global majority color.

    Zero when there is no strict global majority. For two urns and two colors
    in C2(l) this is l.
    """
    g = strict_majority([sum(column) for column in zip(*rows)])
    if g is None:
        return 0
    return max(
        max(n for k, n in enumerate(row) if k != g) - row[g] for row in rows
    )
