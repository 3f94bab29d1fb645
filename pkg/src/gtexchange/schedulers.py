"""Exchange schedulers: UniquePick, TreeSplit, padded and partitioned TreeSplit,
greedy completion, and an exhaustive optimum for tiny instances."""
from __future__ import annotations

import itertools
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np

from .acquisition import RegimeSpec, group_size, log_q_window, power_of_two_below
from .core import (
    ExchangeEvent,
    Instance,
    Schedule,
    gt_masks,
    replay_masks,
    union_of,
)


class NoValidDivision(Exception):
    def __init__(self, group: Sequence[int], attempts: int | None = None):
        self.group = list(group)
        self.attempts = attempts
        how = f"after {attempts} random attempts" if attempts else "exhaustively"
        super().__init__(f"no division obeying the splitting condition for group {self.group} ({how})")


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class RandomRetry:
    max_attempts: int = 64

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")


@dataclass(frozen=True)
class Exhaustive:
    pass


DivisionPolicy = Union[RandomRetry, Exhaustive]


@dataclass
class SplitTree:
    group: list[int]
    level: int = 0
    children: tuple[SplitTree, SplitTree] | None = None

    def to_dict(self) -> dict:
        return {
            "group": list(self.group),
            "children": [c.to_dict() for c in self.children] if self.children else [],
        }

    def nodes(self):
        yield self
        if self.children:
            for c in self.children:
                yield from c.nodes()


def splits(left_union: int, right_union: int, allow_ties: bool = False) -> bool:
    """Splitting condition on two half-unions (same test as GT on the unions).

    With ``allow_ties`` equal unions also pass: both halves then finish their
    subtrees already holding the group's union, so no cross exchange is needed.
    """
    return gt_masks(left_union, right_union) or (allow_ties and left_union == right_union)


def balanced_divisions(group: Sequence[int]):
    """Unordered balanced divisions of ``group``, each yielded once.

    The left half always contains ``group[0]``; remaining left members are drawn
    lexicographically by position, giving C(d, d/2) / 2 divisions.
    """
    d = len(group)
    if d % 2:
        raise ValueError("group size must be even")
    half = d // 2
    rest = range(1, d)
    for combo in itertools.combinations(rest, half - 1):
        chosen = {0, *combo}
        left = [group[k] for k in range(d) if k in chosen]
        right = [group[k] for k in range(d) if k not in chosen]
        yield left, right


def first_valid_division(masks: Sequence[int], group: Sequence[int], allow_ties: bool = False):
    for left, right in balanced_divisions(group):
        if splits(union_of(masks[u] for u in left), union_of(masks[u] for u in right), allow_ties):
            return left, right
    return None


def unique_pick(state: Instance) -> list[int]:
    """Prune users in ascending index order, keeping those with a file unique among survivors."""
    masks = state.masks()
    return _unique_pick_masks(masks, range(state.m))


def _unique_pick_masks(masks: Sequence[int], users: Sequence[int]) -> list[int]:
    alive = list(users)
    for u in list(alive):
        others = union_of(masks[w] for w in alive if w != u)
        if masks[u] & ~others == 0:
            alive.remove(u)
    return alive


def _is_power_of_two(k: int) -> bool:
    return k >= 1 and k & (k - 1) == 0


def tree_split(
    state: Instance,
    group: Sequence[int],
    policy: DivisionPolicy | None = None,
    rng: np.random.Generator | None = None,
    allow_ties: bool = False,
) -> tuple[Schedule, SplitTree]:
    """Recursive balanced division with leaf-to-root pairwise exchanges.

    On success every member of ``group`` ends up holding the union of the
    group's initial holdings. ``allow_ties`` accepts divisions whose halves have
    equal unions; those levels emit no cross exchanges.
    """
    group = list(group)
    if len(group) < 2 or not _is_power_of_two(len(group)):
        raise ValueError(f"group size must be a power of two >= 2, got {len(group)}")
    if len(set(group)) != len(group) or any(not 0 <= u < state.m for u in group):
        raise ValueError("group must list distinct users of the instance")
    policy = policy or Exhaustive()
    if isinstance(policy, RandomRetry) and rng is None:
        rng = np.random.default_rng(0)
    masks = state.masks()
    levels: list[list[ExchangeEvent]] = []

    def divide(members: list[int]):
        if isinstance(policy, Exhaustive):
            found = first_valid_division(masks, members, allow_ties)
            if found is None:
                raise NoValidDivision(members)
            return found
        half = len(members) // 2
        for _ in range(policy.max_attempts):
            order = [members[k] for k in rng.permutation(len(members))]
            left, right = order[:half], order[half:]
            if splits(union_of(masks[u] for u in left), union_of(masks[u] for u in right), allow_ties):
                return left, right
        raise NoValidDivision(members, policy.max_attempts)

    def build(members: list[int], level: int) -> SplitTree:
        node = SplitTree(members, level)
        if len(members) == 1:
            return node
        left, right = divide(members)
        node.children = (build(left, level + 1), build(right, level + 1))
        while len(levels) <= level:
            levels.append([])
        if union_of(masks[u] for u in left) != union_of(masks[u] for u in right):
            levels[level].extend(ExchangeEvent(a, b) for a, b in zip(left, right))
        return node

    tree = build(group, 0)
    events = [e for lvl in reversed(levels) for e in lvl]
    return Schedule(tuple(events)), tree


def greedy_completion(state: Instance, candidates: Sequence[int]) -> tuple[Schedule, frozenset[int]]:
    """Exchange GT-eligible candidate pairs with the largest union until none remain.

    Ties go to the lexicographically smallest pair. This stands in for a
    completion scheduler whose internals are not available; it is not guaranteed
    to satisfy every candidate.
    """
    candidates = sorted(set(candidates))
    masks = state.masks()
    events: list[ExchangeEvent] = []
    while True:
        best = None
        best_size = -1
        for a, b in itertools.combinations(candidates, 2):
            ma, mb = masks[a], masks[b]
            if gt_masks(ma, mb):
                size = (ma | mb).bit_count()
                if size > best_size:
                    best, best_size = (a, b), size
        if best is None:
            break
        a, b = best
        masks[a] = masks[b] = masks[a] | masks[b]
        events.append(ExchangeEvent(a, b))
    target = union_of(state.masks()[u] for u in candidates)
    done = frozenset(u for u in candidates if target & ~masks[u] == 0)
    return Schedule(tuple(events)), done


def _holders(masks: Sequence[int], target: int) -> frozenset[int]:
    return frozenset(i for i, mk in enumerate(masks) if target & ~mk == 0)


def pad_and_tree_split(
    state: Instance,
    policy: DivisionPolicy | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[Schedule, frozenset[int]]:
    """UniquePick, then TreeSplit on 2**floor(log2 m) users or greedy completion.

    Returns the schedule and the users holding the achievable universe afterwards.
    Raises NoValidDivision when the padded TreeSplit cannot divide some group.
    """
    m = state.m
    if m < 2:
        raise ValueError("need at least two users")
    masks = state.masks()
    full = union_of(masks)
    if all(mk == full for mk in masks):
        return Schedule(), frozenset(range(m))
    suff = unique_pick(state)
    # 2**floor(log2 m) keeps the padded group above m/2 for every m >= 2
    top = 1 << (m.bit_length() - 1)
    if len(suff) <= top:
        kept = set(suff)
        pad = [u for u in range(m) if u not in kept][: top - len(suff)]
        group = sorted(suff + pad)
        schedule, _ = tree_split(state, group, policy, rng)
    else:
        schedule, _ = greedy_completion(state, suff)
    final = replay_masks(masks, schedule.events)
    return schedule, _holders(final, full)


@dataclass
class PartitionOutcome:
    schedule: Schedule
    satisfied: frozenset[int]
    groups: list[list[int]] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)
    unscheduled: list[int] = field(default_factory=list)

    def __iter__(self):
        return iter((self.schedule, self.satisfied))


def partition_tree_split(
    state: Instance,
    spec: RegimeSpec,
    rng: np.random.Generator | None = None,
    target: str = "T",
    policy: DivisionPolicy | None = None,
) -> PartitionOutcome:
    """Random partition into groups of ceil(w log n) users, then per-group
    UniquePick followed by TreeSplit on a power-of-two subset or greedy completion.

    Per-group failures are recorded in the outcome; failed groups get no exchanges.
    """
    log_q_window(spec)  # rejects inconsistent regimes before any work
    if target not in ("T", "F"):
        raise ValueError("target must be 'T' or 'F'")
    n, m = state.n, state.m
    g = group_size(spec, n)
    if g < 2:
        raise ValueError(f"group size {g} is below 2")
    s = power_of_two_below(g)
    rng = rng if rng is not None else np.random.default_rng(0)
    policy = policy or RandomRetry()
    masks = state.masks()
    everything = (1 << n) - 1
    goal = everything if target == "T" else union_of(masks)

    perm = [int(u) for u in rng.permutation(m)]
    count = m // g
    groups = [perm[k * g:(k + 1) * g] for k in range(count)]
    out = PartitionOutcome(Schedule(), frozenset(), groups=groups, unscheduled=sorted(perm[count * g:]))
    events: list[ExchangeEvent] = []
    for idx, members in enumerate(groups):
        if target == "T" and union_of(masks[u] for u in members) != everything:
            out.failures.append((idx, "NotFileCover"))
            continue
        kept = _unique_pick_masks(masks, sorted(members))
        if len(kept) > s:
            sched, _ = greedy_completion(state, kept)
        else:
            kept_set = set(kept)
            pad = [u for u in sorted(members) if u not in kept_set][: s - len(kept)]
            try:
                sched, _ = tree_split(state, sorted(kept + pad), policy, rng)
            except NoValidDivision:
                out.failures.append((idx, "NoValidDivision"))
                continue
        events.extend(sched.events)
    out.schedule = Schedule(tuple(events))
    final = replay_masks(masks, out.schedule.events)
    out.satisfied = _holders(final, goal)
    return out


DEFAULT_ORACLE_LIMITS = (5, 6)


def optimal_schedule(
    state: Instance, max_users: int = DEFAULT_ORACLE_LIMITS[0], max_files: int = DEFAULT_ORACLE_LIMITS[1]
) -> tuple[int, Schedule]:
    """Exact maximum number of users that can end up holding F, with a witness schedule.

    Depth-first search over GT-eligible pairs, memoised on the multiset of holdings.
    """
    if state.m > max_users or state.n > max_files:
        raise InstanceTooLarge(
            f"instance with m={state.m}, n={state.n} exceeds oracle limits m<={max_users}, n<={max_files}"
        )
    masks = tuple(state.masks())
    full = union_of(masks)

    @lru_cache(maxsize=None)
    def best(key: tuple[int, ...]) -> int:
        value = sum(1 for mk in key if full & ~mk == 0)
        if value == len(key):
            return value
        for a, b in itertools.combinations(range(len(key)), 2):
            if gt_masks(key[a], key[b]):
                nxt = list(key)
                nxt[a] = nxt[b] = key[a] | key[b]
                value = max(value, best(tuple(sorted(nxt))))
        return value

    opt = best(tuple(sorted(masks)))
    # walk down through moves that preserve the optimum
    cur = list(masks)
    events: list[ExchangeEvent] = []
    while sum(1 for mk in cur if full & ~mk == 0) < opt:
        for a, b in itertools.combinations(range(len(cur)), 2):
            if gt_masks(cur[a], cur[b]):
                nxt = list(cur)
                nxt[a] = nxt[b] = cur[a] | cur[b]
                if best(tuple(sorted(nxt))) == opt:
                    cur = nxt
                    events.append(ExchangeEvent(a, b))
                    break
        else:  # pragma: no cover - memo guarantees a preserving move exists
            raise RuntimeError("optimum reconstruction failed")
    best.cache_clear()
    return opt, Schedule(tuple(events))

