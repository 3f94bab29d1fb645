"""Closed-form probability expressions for the TreeSplit family and the
exhaustive division/culprit checks.

All expressions use natural logarithms and are evaluated in log space
(``log1p``/``expm1``) so small per-file terms raised to large ``n`` keep
roughly 1e-12 relative accuracy.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

from .core import Instance, union_of
from .schedulers import balanced_divisions, first_valid_division, splits

log = logging.getLogger(__name__)


class PreconditionViolated(ValueError):
    pass


@dataclass(frozen=True)
class BoundValue:
    value: float
    is_upper_bound: bool = True

    def __post_init__(self):
        if self.value < 0 or math.isnan(self.value):
            raise ValueError(f"bound value must be non-negative, got {self.value}")

    @property
    def clamped(self) -> bool:
        return self.value > 1.0

    @property
    def clamped_value(self) -> float:
        return min(self.value, 1.0)


def _check_q(q: float) -> None:
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")


def _check_even(d: int) -> None:
    if d < 2 or d % 2:
        raise ValueError(f"d must be an even count >= 2, got {d}")


def _pow_1p(x: float, n: float) -> float:
    """(1 + x) ** n for x >= -1, accurate when x is tiny."""
    if x == -1.0:
        return 0.0 if n > 0 else 1.0
    return math.exp(n * math.log1p(x))


def split_term(n: int, d: int, q: float) -> float:
    """(1 + q^d - q^(d/2))^n, the per-group factor of a random division failure."""
    x = q ** (d / 2)
    return _pow_1p(x * x - x, n)


def p_split_violation(n: int, d: int, q: float) -> BoundValue:
    """2(1 + q^d - q^(d/2))^n: union bound on one random balanced division of d users failing."""
    _check_q(q)
    _check_even(d)
    return BoundValue(2.0 * split_term(n, d, q), True)


def p_split_violation_exact(n: int, d: int, q: float) -> float:
    """Exact probability that a fixed balanced division of d random users fails.

    P(left ⊆ right) + P(right ⊆ left) - P(left == right), each a product over files.
    """
    _check_q(q)
    _check_even(d)
    x = q ** (d / 2)
    one_side = _pow_1p(x * x - x, n)
    # per file: both halves hold it, or neither does
    equal = (1.0 - x) ** 2 + x * x
    both = equal**n
    return min(max(2.0 * one_side - both, 0.0), 1.0)


def tree_level_terms(n: int, m: int, q: float) -> list[tuple[int, int, float]]:
    """(group size, number of groups, 2(1+q^d-q^(d/2))^n) for every level of a TreeSplit on m users."""
    _check_q(q)
    if m < 2 or m & (m - 1):
        raise ValueError(f"m must be a power of two >= 2, got {m}")
    out = []
    d, count = m, 1
    while d >= 2:
        out.append((d, count, 2.0 * split_term(n, d, q)))
        d //= 2
        count *= 2
    return out


def tree_error_union_bound(n: int, m: int, q: float) -> BoundValue:
    """Sum of per-group failure bounds over all m-1 divided groups."""
    return BoundValue(sum(count * term for _, count, term in tree_level_terms(n, m, q)), True)


def tree_error_bound(n: int, m: int, q: float) -> BoundValue:
    """2m(1 + q^m - q^(m/2))^n.

    Valid as a bound only when the root term dominates every level; see
    :func:`root_term_dominates`.
    """
    _check_q(q)
    if m < 2:
        raise ValueError("m must be at least 2")
    x = q ** (m / 2)
    return BoundValue(2.0 * m * _pow_1p(x * x - x, n), True)


def root_term_dominates(n: int, m: int, q: float) -> bool:
    """Whether the root-level factor is the largest across the tree's levels."""
    terms = tree_level_terms(n, m, q)
    root = terms[0][2]
    return all(t <= root * (1 + 1e-12) for _, _, t in terms)


def log_regime_error_bound(n: int, c: float, q: float) -> BoundValue:
    """2 c log n * exp((n^(c log q / 2) - 1) * n^(1 + c log q / 2)) for m = c log n."""
    _check_q(q)
    if n < 2 or q == 0.0:
        raise ValueError("need n >= 2 and q > 0")
    ln = math.log(n)
    e = c * math.log(q) / 2.0
    return BoundValue(2.0 * c * ln * math.exp((n**e - 1.0) * n ** (1.0 + e)), True)


def p_not_file_cover(n: int, m: int, q: float) -> tuple[float, float]:
    """(1 - (1 - q^m)^n, n q^m): exact chance m users miss some file, and its union bound."""
    _check_q(q)
    qm = q**m
    exact = 1.0 if qm >= 1.0 else -math.expm1(n * math.log1p(-qm))
    return exact, n * qm


def partition_error_bound(n: int, m: int, w: float, v: float, q: float, z: float = 1.0) -> BoundValue:
    """(m / (w log n)) (n q^(w log n) + 2 v log n exp((n^(v log q / 2) - 1) n^(1 + v log q / 2))).

    ``m`` carries alpha n^z, so the same expression covers z = 1 and z > 1.
    """
    _check_q(q)
    if n < 2:
        raise ValueError("n must be at least 2")
    if w <= 0 or v <= 0 or z < 1:
        raise ValueError("need w, v > 0 and z >= 1")
    ln = math.log(n)
    if q == 0.0:
        cover, division = 0.0, 0.0
    else:
        lq = math.log(q)
        cover = n * math.exp(w * ln * lq)
        e = v * lq / 2.0
        division = 2.0 * v * ln * math.exp((n**e - 1.0) * n ** (1.0 + e))
    return BoundValue(m / (w * ln) * (cover + division), True)


def no_valid_division_base(d: int, p: float) -> float:
    q = 1.0 - p
    q1 = q ** (d - 1)
    return p + q * (q1 + (1.0 - q1) * (2.0 * p) ** (d / 2))


def p_no_valid_division_bound(n: int, d: int, p: float) -> BoundValue:
    """(p + q(q' + p'(2p)^(d/2)))^n with q' = q^(d-1), p' = 1 - q'."""
    _check_q(p)
    _check_even(d)
    return BoundValue(no_valid_division_base(d, p) ** n, True)


def existence_error_bound(n: int, m: int, p: float) -> BoundValue:
    """m (p + (1-p)(1-p+2p^2))^n: bound on some tree group having no valid division."""
    _check_q(p)
    base = p + (1.0 - p) * (1.0 - p + 2.0 * p * p)
    return BoundValue(m * base**n, True)


def find_valid_division(state: Instance, group: Sequence[int]) -> tuple[list[int], list[int]] | None:
    """First balanced division obeying the splitting condition, or None.

    Divisions are enumerated with ``group[0]`` on the left and the remaining
    left members in lexicographic position order.
    """
    if len(group) % 2:
        raise ValueError("group size must be even")
    return first_valid_division(state.masks(), list(group))


@dataclass(frozen=True)
class CulpritReport:
    candidates: frozenset[int]
    ties: int
    divisions: int

    @property
    def culprit(self) -> int | None:
        if len(self.candidates) == 1 and self.ties < self.divisions:
            return next(iter(self.candidates))
        return None


def culprit_report(state: Instance, group: Sequence[int]) -> CulpritReport:
    """Intersect the strict-superset sides of every balanced division.

    Divisions whose half-unions are equal impose no constraint.
    """
    masks = state.masks()
    group = list(group)
    core: set[int] | None = None
    ties = total = 0
    for left, right in balanced_divisions(group):
        total += 1
        ul = union_of(masks[u] for u in left)
        ur = union_of(masks[u] for u in right)
        if splits(ul, ur):
            raise PreconditionViolated(f"group {group} has a valid division {left} | {right}")
        if ul == ur:
            ties += 1
            continue
        sup = left if ur & ~ul == 0 else right
        core = set(sup) if core is None else core & set(sup)
    return CulpritReport(frozenset(core or ()), ties, total)


def culprit_user(state: Instance, group: Sequence[int]) -> int | None:
    """The single user on the superset side of every division, if there is one."""
    report = culprit_report(state, group)
    if report.culprit is None:
        log.warning(
            "culprit anomaly for group %s: candidates=%s ties=%d/%d",
            list(group), sorted(report.candidates), report.ties, report.divisions,
        )
    return report.culprit
