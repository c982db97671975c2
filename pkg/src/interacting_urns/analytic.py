# src/interacting_urns/analytic.py

"""Closed forms for two interacting urns under infinite weights.

q_l and r_l are the probabilities that the two urns end on one color when
started from C1(l) and C2(l). They solve a pair of recurrences whose
exponential generating function f_p satisfies a second-order linear ODE;
everything below evaluates the resulting formulas in double precision.
"""

import math
from typing import Iterable, Tuple

from scipy.stats import binom

from .exceptions import InvalidParameterError
from .models import ClosedForm


def _check_p(p: float, *, upper: float = 0.5, closed: bool = True) -> None:
    inside = 0.0 <= p <= upper if closed else 0.0 <= p < upper
    if not inside:
        bracket = "]" if closed else ")"
        raise InvalidParameterError(f"p must lie in [0, {upper}{bracket}, got {p}")


def lambda_pm(p: float) -> Tuple[float, float]:
    """Roots of (1 - p/2)^2 x^2 - x + (p/2)^2 = 0, smaller first."""
    _check_p(p)
    a = (1 - p / 2) ** 2
    radical = math.sqrt(1 - p * p * (1 - p / 2) ** 2)
    return (1 - radical) / (2 * a), (1 + radical) / (2 * a)


def _mu(p: float) -> float:
    """Ratio of the deficit walk's ruin probability, p / (1 - p)."""
    return p / (1 - p)


def C_of(p: float) -> float:
    _check_p(p)
    denominator = 2 * p ** 3 - 6 * p ** 2 + 9 * p - 4
    # negative on [0, 1/2]
    assert denominator != 0.0
    return -2 * (1 - p) ** 2 * (1 + p) / denominator


def A_of(p: float) -> float:
    _check_p(p)
    lam_minus, _ = lambda_pm(p)
    return (1 - p + C_of(p) * (3 * p - 2)) / ((1 - p) * (2 - lam_minus))


def q0(p: float) -> float:
    """Probability that two urns starting empty end on the same color."""
    return A_of(p) + C_of(p)


def closed_form(p: float) -> ClosedForm:
    lam_minus, lam_plus = lambda_pm(p)
    return ClosedForm(
        p=p,
        lambda_minus=lam_minus,
        lambda_plus=lam_plus,
        C_p=C_of(p),
        A_p=A_of(p),
        q0=q0(p),
    )


def r_ell(p: float, ell: int) -> float:
    """Fixation probability from C2(ell): (1 + p)/(2 - p) * (p/(1 - p))**ell."""
    _check_p(p, closed=False)
    if ell < 0:
        raise InvalidParameterError(f"ell must be non-negative, got {ell}")
    return (1 + p) / (2 - p) * _mu(p) ** ell


def r1(p: float) -> float:
    """Chance that a single urn trailing by one eventually conforms."""
    return p * (1 + p) / ((1 - p) * (2 - p))


def q_ell(p: float, ell: int) -> float:
    """Fixation probability from C1(ell), the ell-th coefficient of f_p."""
    _check_p(p)
    if ell < 0:
        raise InvalidParameterError(f"ell must be non-negative, got {ell}")
    if p == 0.5:
        return 1.0
    lam_minus, _ = lambda_pm(p)
    return A_of(p) * lam_minus ** ell + C_of(p) * _mu(p) ** ell


def f_p_eval(p: float, x: float) -> float:
    """f_p(x) = A e^(lambda_- x) + C e^(p x / (1 - p))."""
    _check_p(p, closed=False)
    lam_minus, _ = lambda_pm(p)
    return A_of(p) * math.exp(lam_minus * x) + C_of(p) * math.exp(_mu(p) * x)


def ode_residual(p: float, x: float) -> float:
    """Left-hand side of the ODE solved by f_p, with exact derivatives."""
    _check_p(p, closed=False)
    lam_minus, _ = lambda_pm(p)
    a, c, mu = A_of(p), C_of(p), _mu(p)
    homogeneous = a * math.exp(lam_minus * x)
    particular = c * math.exp(mu * x)
    f = homogeneous + particular
    f1 = lam_minus * homogeneous + mu * particular
    f2 = lam_minus ** 2 * homogeneous + mu ** 2 * particular
    forcing = p * (1 + p) / 2 * math.exp(mu * x)
    return (1 - p / 2) ** 2 * f2 - f1 + (p / 2) ** 2 * f + forcing


def growth_bound_holds(p: float, xs: Iterable[float]) -> bool:
    """f_p(x) <= e^x on the grid, the bound that rules out the lambda_+ mode."""
    return all(f_p_eval(p, x) <= math.exp(x) * (1 + 1e-12) for x in xs)


def nonconformist_bound(urns: int, p: float) -> float:
    """Almost-sure upper bound U / (2 - 2p) on the number of non-conformist urns."""
    return urns / (2 - 2 * p)


def nonconformist_pmf(urns: int, p: float) -> Tuple[float, ...]:
    """Law of the number of non-conformist urns for an odd number of urns.

    The first draws fix the global majority; the K' urns that drew the
    minority color each conform independently with probability r1(p).
    """
    if urns < 3 or urns % 2 == 0:
        raise InvalidParameterError(f"the non-conformist law is known for odd U >= 3 only, got {urns}")
    _check_p(p, closed=False)
    support = (urns - 1) // 2
    if not support < nonconformist_bound(urns, p):
        raise InvalidParameterError(f"support {support} violates U/(2-2p) at U={urns}, p={p}")
    stay = 1 - r1(p)
    pmf = [0.0] * (support + 1)
    for k in range(urns + 1):
        minority = min(k, urns - k)
        weight = binom.pmf(k, urns, 0.5)
        for n in range(minority + 1):
            pmf[n] += weight * binom.pmf(n, minority, stay)
    return tuple(float(x) for x in pmf)


def multicolor_q(colors: int, p: float) -> float:
    """Two urns, several colors: same first color, or C1(1) with the two-color law."""
    if colors < 2:
        raise InvalidParameterError(f"need at least two colors, got {colors}")
    return 1 / colors + (colors - 1) / colors * q_ell(p, 1)


def nu0(p: float) -> float:
    """Largest argument (4p(1 - p))^-1 at which the progeny generating function is finite."""
    _check_p(p, closed=False)
    if p == 0:
        raise InvalidParameterError("p must be positive")
    return 1 / (4 * p * (1 - p))


def gw_total_progeny_gf(p: float, nu: float) -> float:
    """E[nu^Z] for the total progeny Z of a geometric Galton-Watson tree.

    Offspring law P(k) = (1 - p) p^k; g is the minimal root of
    g = nu (1 - p) / (1 - p g).
    """
    limit = nu0(p)
    if not 0 <= nu <= limit:
        raise InvalidParameterError(f"nu must lie in [0, {limit}], got {nu}")
    radicand = max(0.0, 1 - 4 * p * (1 - p) * nu)
    return (1 - math.sqrt(radicand)) / (2 * p)
