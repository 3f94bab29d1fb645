"""Give-and-take exchange semantics: file sets, instances, schedule replay."""
from __future__ import annotations

import json
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field


class GTViolation(Exception):
    """Raised when an exchange is attempted between users failing the GT criterion."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class FileSet:
    """Set of file indices ``0..capacity-1`` stored as an integer bitmask."""

    capacity: int
    mask: int = 0

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError("capacity must be non-negative")
        if self.mask < 0 or self.mask >> self.capacity:
            raise ValueError(f"members out of range for capacity {self.capacity}")

    @classmethod
    def from_indices(cls, capacity: int, indices: Iterable[int]) -> FileSet:
        mask = 0
        for idx in indices:
            if not 0 <= idx < capacity:
                raise ValueError(f"file index {idx} out of range for capacity {capacity}")
            mask |= 1 << idx
        return cls(capacity, mask)

    @classmethod
    def full(cls, capacity: int) -> FileSet:
        return cls(capacity, (1 << capacity) - 1)

    def _check(self, other: FileSet) -> None:
        if self.capacity != other.capacity:
            raise ValueError(f"capacity mismatch: {self.capacity} != {other.capacity}")

    def __contains__(self, idx: int) -> bool:
        return 0 <= idx < self.capacity and bool(self.mask >> idx & 1)

    def __iter__(self) -> Iterator[int]:
        mask, idx = self.mask, 0
        while mask:
            if mask & 1:
                yield idx
            mask >>= 1
            idx += 1

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __bool__(self) -> bool:
        return self.mask != 0

    def __or__(self, other: FileSet) -> FileSet:
        self._check(other)
        return FileSet(self.capacity, self.mask | other.mask)

    def __and__(self, other: FileSet) -> FileSet:
        self._check(other)
        return FileSet(self.capacity, self.mask & other.mask)

    def __sub__(self, other: FileSet) -> FileSet:
        self._check(other)
        return FileSet(self.capacity, self.mask & ~other.mask)

    def __le__(self, other: FileSet) -> bool:
        self._check(other)
        return self.mask & ~other.mask == 0

    def __lt__(self, other: FileSet) -> bool:
        return self <= other and self.mask != other.mask

    def __ge__(self, other: FileSet) -> bool:
        return other <= self

    def __gt__(self, other: FileSet) -> bool:
        return other < self

    issubset = __le__
    issuperset = __ge__

    def sorted(self) -> list[int]:
        return list(self)

    def __repr__(self) -> str:
        return f"FileSet({self.capacity}, {self.sorted()})"


@dataclass(frozen=True)
class ExchangeEvent:
    i: int
    j: int

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("a user cannot exchange with itself")
        if self.i < 0 or self.j < 0:
            raise ValueError("user indices must be non-negative")


@dataclass(frozen=True)
class Schedule:
    events: tuple[ExchangeEvent, ...] = ()

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[int]]) -> Schedule:
        return cls(tuple(ExchangeEvent(int(i), int(j)) for i, j in pairs))

    def pairs(self) -> list[tuple[int, int]]:
        return [(e.i, e.j) for e in self.events]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[ExchangeEvent]:
        return iter(self.events)

    def __add__(self, other: Schedule) -> Schedule:
        return Schedule(self.events + other.events)

    def to_json(self) -> str:
        return json.dumps([list(p) for p in self.pairs()])

    @classmethod
    def from_json(cls, text: str) -> Schedule:
        return cls.from_pairs(json.loads(text))


@dataclass(frozen=True)
class Instance:
    """World state: ``m`` users, each holding a :class:`FileSet` over ``n`` files."""

    n: int
    holdings: tuple[FileSet, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "holdings", tuple(self.holdings))
        for h in self.holdings:
            if h.capacity != self.n:
                raise ValueError(f"holding capacity {h.capacity} != n={self.n}")

    @property
    def m(self) -> int:
        return len(self.holdings)

    @classmethod
    def from_lists(cls, n: int, holdings: Iterable[Iterable[int]]) -> Instance:
        return cls(n, tuple(FileSet.from_indices(n, h) for h in holdings))

    @classmethod
    def from_masks(cls, n: int, masks: Iterable[int]) -> Instance:
        return cls(n, tuple(FileSet(n, mk) for mk in masks))

    def masks(self) -> list[int]:
        return [h.mask for h in self.holdings]

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "holdings": [h.sorted() for h in self.holdings]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> Instance:
        inst = cls.from_lists(int(data["n"]), data["holdings"])
        if "m" in data and int(data["m"]) != inst.m:
            raise ValueError(f"m={data['m']} does not match {inst.m} holdings")
        return inst

    @classmethod
    def from_json(cls, text: str) -> Instance:
        return cls.from_dict(json.loads(text))


def gt_satisfied(a: FileSet, b: FileSet) -> bool:
    """True iff each set holds a file the other lacks."""
    if a.capacity != b.capacity:
        raise ValueError(f"capacity mismatch: {a.capacity} != {b.capacity}")
    return gt_masks(a.mask, b.mask)


def gt_masks(a: int, b: int) -> bool:
    return bool(a & ~b) and bool(b & ~a)


def exchange(state: Instance, e: ExchangeEvent) -> Instance:
    if e.i >= state.m or e.j >= state.m:
        raise IndexError(f"exchange {e} references a user outside 0..{state.m - 1}")
    a, b = state.holdings[e.i], state.holdings[e.j]
    if not gt_satisfied(a, b):
        raise GTViolation(f"users {e.i} and {e.j} fail the GT criterion")
    merged = a | b
    holdings = list(state.holdings)
    holdings[e.i] = holdings[e.j] = merged
    return Instance(state.n, tuple(holdings))


def replay_masks(masks: Sequence[int], events: Iterable[ExchangeEvent]) -> list[int]:
    """Mask-level replay used by schedulers; raises GTViolation with the failing step."""
    masks = list(masks)
    for step, e in enumerate(events):
        a, b = masks[e.i], masks[e.j]
        if not gt_masks(a, b):
            raise GTViolation(f"step {step}: users {e.i} and {e.j} fail the GT criterion", step)
        masks[e.i] = masks[e.j] = a | b
    return masks


def apply_schedule(state: Instance, s: Schedule | Iterable[ExchangeEvent]) -> Instance:
    events = s.events if isinstance(s, Schedule) else tuple(s)
    for e in events:
        if e.i >= state.m or e.j >= state.m:
            raise IndexError(f"exchange {e} references a user outside 0..{state.m - 1}")
    return Instance.from_masks(state.n, replay_masks(state.masks(), events))


def union_of(masks: Iterable[int]) -> int:
    out = 0
    for mk in masks:
        out |= mk
    return out


def achievable_universe(state: Instance) -> FileSet:
    return FileSet(state.n, union_of(state.masks()))


def satisfied_users(state: Instance, target: FileSet) -> list[int]:
    if target.capacity != state.n:
        raise ValueError(f"target capacity {target.capacity} != n={state.n}")
    t = target.mask
    return [i for i, h in enumerate(state.holdings) if t & ~h.mask == 0]


def satisfied_count(state: Instance, target: FileSet) -> int:
    return len(satisfied_users(state, target))
