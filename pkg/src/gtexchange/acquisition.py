"""Random Sampling acquisition and regime-specific windows for the non-pickup probability q.

Logarithms are natural throughout, so ``q ** (c * log n) == n ** (c * log q)`` holds exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Union

import numpy as np

from .core import FileSet, Instance

Mode = Literal["a-priori", "a-posteriori"]


class EmptyWindow(ValueError):
    """The regime inequality on log q admits no value."""


@dataclass(frozen=True)
class SamplingParams:
    n: int
    m: int
    p: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.n < 0 or self.m < 0:
            raise ValueError("n and m must be non-negative")

    @property
    def q(self) -> float:
        return 1.0 - self.p


@dataclass(frozen=True)
class LogRegime:
    """m = c log n."""

    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be positive")


@dataclass(frozen=True)
class LinearRegime:
    """m = alpha n, groups of w log n users, TreeSplit on v log n of them."""

    alpha: float
    w: float
    v: float

    def __post_init__(self):
        if self.alpha <= 0 or self.w <= 0 or self.v <= 0:
            raise ValueError("alpha, w and v must be positive")


@dataclass(frozen=True)
class PolyRegime:
    """m = alpha n**z with z > 1; z == 1 is accepted and reduces to the linear window."""

    alpha: float
    z: float
    w: float
    v: float

    def __post_init__(self):
        if self.alpha <= 0 or self.w <= 0 or self.v <= 0:
            raise ValueError("alpha, w and v must be positive")
        if self.z < 1:
            raise ValueError("z must be at least 1")


RegimeKind = Union[LogRegime, LinearRegime, PolyRegime]


@dataclass(frozen=True)
class RegimeSpec:
    kind: RegimeKind
    mode: Mode = "a-posteriori"

    def __post_init__(self):
        if self.mode not in ("a-priori", "a-posteriori"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def to_dict(self) -> dict:
        kind = self.kind
        out = {"kind": type(kind).__name__, "mode": self.mode}
        out.update(vars(kind))
        return out

    @classmethod
    def from_dict(cls, data: dict) -> RegimeSpec:
        data = dict(data)
        kinds = {"LogRegime": LogRegime, "LinearRegime": LinearRegime, "PolyRegime": PolyRegime}
        name = data.pop("kind")
        mode = data.pop("mode", "a-posteriori")
        if name not in kinds:
            raise ValueError(f"unknown regime kind {name!r}")
        return cls(kinds[name](**data), mode)


def log_q_window(spec: RegimeSpec) -> tuple[float, float]:
    kind = spec.kind
    if isinstance(kind, LogRegime):
        lo, hi = -2.0 / kind.c, -1.0 / kind.c
    elif isinstance(kind, LinearRegime):
        lo, hi = -2.0 / kind.v, -2.0 / kind.w
    elif isinstance(kind, PolyRegime):
        lo, hi = -2.0 / kind.v, -(1.0 + kind.z) / kind.w
    else:
        raise TypeError(f"unsupported regime {kind!r}")
    if not lo < hi:
        raise EmptyWindow(f"no q with {lo:.6g} < log q < {hi:.6g}")
    return lo, hi


def q_window(spec: RegimeSpec) -> tuple[float, float]:
    lo, hi = log_q_window(spec)
    return math.exp(lo), math.exp(hi)


def pick_q(spec: RegimeSpec) -> float:
    """Geometric midpoint of the q window."""
    lo, hi = log_q_window(spec)
    return math.exp((lo + hi) / 2.0)


def power_of_two_below(x: float) -> int:
    """Largest power of two strictly less than ``x``."""
    if not x > 1:
        raise ValueError(f"x must exceed 1, got {x}")
    y = math.floor(math.log2(x))
    # guard against log2 rounding at exact powers of two
    while 2**y >= x:
        y -= 1
    while 2 ** (y + 1) < x:
        y += 1
    return 2**y


def group_size(spec: RegimeSpec, n: int) -> int:
    """Integer group size ceil(w log n) for partition regimes."""
    kind = spec.kind
    if not isinstance(kind, (LinearRegime, PolyRegime)):
        raise TypeError("group size is defined for partition regimes only")
    if n < 2:
        raise ValueError("n must be at least 2")
    # tolerate float noise when w log n was built from an integer
    return math.ceil(kind.w * math.log(n) - 1e-9)


def subset_size(spec: RegimeSpec, n: int) -> int:
    return power_of_two_below(group_size(spec, n))


def posterior_linear_regime(n: int, group: int, alpha: float = 1.0) -> RegimeSpec:
    """A-posteriori linear regime with ``group`` users per partition group.

    v log n is set to the power of two below ``group``; w log n equals ``group``.
    """
    ln = math.log(n)
    s = power_of_two_below(group)
    return RegimeSpec(LinearRegime(alpha=alpha, w=group / ln, v=s / ln), "a-posteriori")


def draw_matrix(params: SamplingParams) -> np.ndarray:
    """File-major boolean pickup matrix of shape (n, m).

    Drawing file by file means the first ``k`` rows for a given seed are the
    instance with ``k`` files, which keeps sweeps over ``n`` on common random numbers.
    """
    rng = np.random.default_rng(params.seed)
    return rng.random((params.n, params.m)) < params.p


def masks_from_matrix(picked: np.ndarray) -> list[int]:
    """Convert a file-major (n, m) boolean matrix into per-user integer masks."""
    n, m = picked.shape
    if n == 0:
        return [0] * m
    packed = np.packbits(picked.T, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def sample_instance(params: SamplingParams) -> Instance:
    picked = draw_matrix(params)
    return Instance(params.n, tuple(FileSet(params.n, mk) for mk in masks_from_matrix(picked)))
