"""Seeded Monte Carlo trials, the minimum-n threshold sweep, and bound verification."""
from __future__ import annotations

import csv
import io
import math
import time
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analysis
from .acquisition import (
    LinearRegime,
    LogRegime,
    PolyRegime,
    RegimeSpec,
    SamplingParams,
    draw_matrix,
    pick_q,
    sample_instance,
)
from .core import Instance, replay_masks, union_of
from .schedulers import (
    DivisionPolicy,
    Exhaustive,
    NoValidDivision,
    RandomRetry,
    first_valid_division,
    greedy_completion,
    optimal_schedule,
    pad_and_tree_split,
    partition_tree_split,
    splits,
)

SCHEDULERS = ("PadTreeSplit", "PartitionTreeSplit", "Greedy", "Oracle")


class NotFound(LookupError):
    """No grid point met the error target."""


def derive_seed(base_seed: int, trial: int) -> int:
    """64-bit seed for trial ``trial``: numpy SeedSequence(base_seed, spawn_key=(trial,))."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(trial,))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrialConfig:
    n: int | None = None
    m: int | None = None
    p: float | None = None
    regime: RegimeSpec | None = None
    trials: int = 1
    base_seed: int = 0
    target: str = "F"
    scheduler: str = "PadTreeSplit"
    division_policy: DivisionPolicy = field(default_factory=RandomRetry)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.target not in ("F", "T"):
            raise ValueError("target must be 'F' or 'T'")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"scheduler must be one of {SCHEDULERS}")
        if self.n is None or self.n < 1:
            raise ValueError("n is required and must be positive")
        if self.regime is None:
            if self.m is None or self.p is None:
                raise ValueError("explicit configs need n, m and p")
            if not 0.0 <= self.p <= 1.0:
                raise ValueError("p must lie in [0, 1]")
        if self.scheduler == "PartitionTreeSplit" and self.regime is None:
            raise ValueError("PartitionTreeSplit needs a regime")

    def resolved(self) -> tuple[int, int, float]:
        """(n, m, p), deriving m and p from the regime when they are not given."""
        n = self.n
        if self.regime is None:
            return n, self.m, self.p
        kind = self.regime.kind
        m = self.m
        if m is None:
            if isinstance(kind, LogRegime):
                m = round(kind.c * math.log(n))
            elif isinstance(kind, LinearRegime):
                m = round(kind.alpha * n)
            elif isinstance(kind, PolyRegime):
                m = round(kind.alpha * n**kind.z)
        p = self.p if self.p is not None else 1.0 - pick_q(self.regime)
        return n, m, p


@dataclass
class TrialReport:
    trial: int
    seed: int
    n: int
    m: int
    p: float
    satisfied_count: int
    satisfied_fraction: float
    failure_kind: str | None
    schedule_length: int
    wall_time: float = 0.0


REPORT_COLUMNS = (
    "trial", "seed", "n", "m", "p", "satisfied_count", "satisfied_fraction",
    "failure_kind", "schedule_length",
)


def _run_one(config: TrialConfig, trial: int) -> TrialReport:
    n, m, p = config.resolved()
    seed = derive_seed(config.base_seed, trial)
    started = time.perf_counter()
    inst = sample_instance(SamplingParams(n, m, p, seed))
    rng = np.random.default_rng([seed, 1])
    masks = inst.masks()
    full = union_of(masks)
    everything = (1 << n) - 1
    goal = everything if config.target == "T" else full
    failure = None
    events = ()
    try:
        if config.scheduler == "PadTreeSplit":
            if m >= 2:
                events = pad_and_tree_split(inst, config.division_policy, rng)[0].events
        elif config.scheduler == "PartitionTreeSplit":
            out = partition_tree_split(inst, config.regime, rng, config.target, config.division_policy)
            events = out.schedule.events
            if out.failures:
                failure = out.failures[0][1]
        elif config.scheduler == "Greedy":
            events = greedy_completion(inst, range(m))[0].events
        else:
            events = optimal_schedule(inst)[1].events
    except NoValidDivision:
        failure = "NoValidDivision"
    final = replay_masks(masks, events)
    count = sum(1 for mk in final if goal & ~mk == 0)
    if failure is None and config.target == "T" and full != everything:
        failure = "NotFileCover"
    return TrialReport(
        trial=trial, seed=seed, n=n, m=m, p=p,
        satisfied_count=count,
        satisfied_fraction=count / m if m else 1.0,
        failure_kind=failure,
        schedule_length=len(events),
        wall_time=time.perf_counter() - started,
    )


def run_trials(config: TrialConfig, workers: int = 1) -> list[TrialReport]:
    """One report per trial, sorted by trial index; deterministic given ``base_seed``."""
    indices = range(config.trials)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            reports = list(pool.map(_run_one, [config] * config.trials, indices))
    else:
        reports = [_run_one(config, k) for k in indices]
    return sorted(reports, key=lambda r: r.trial)


def reports_to_csv(reports: Iterable[TrialReport], timing: bool = False) -> str:
    cols = REPORT_COLUMNS + (("wall_time",) if timing else ())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in reports:
        row = asdict(r)
        writer.writerow(["" if row[c] is None else row[c] for c in cols])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Tree division checks on packed holdings.
#
# Users are i.i.d., so contiguous halves of the sampled order are a uniformly
# random balanced division at every node; no explicit shuffling is needed.


def pack_users(picked: np.ndarray) -> np.ndarray:
    """Pack a (..., users, files) boolean array along the file axis."""
    return np.packbits(picked, axis=-1, bitorder="little")


def level_validity(packed: np.ndarray, allow_ties: bool = False) -> list[np.ndarray]:
    """Splitting-condition outcome of every node, by level from the leaves up.

    ``packed`` has shape (batch, m, bytes) with m a power of two; entry ``k`` of
    the result has shape (batch, m / 2**(k+1)) and covers groups of 2**(k+1) users.
    """
    out = []
    unions = packed
    while unions.shape[1] > 1:
        left, right = unions[:, 0::2], unions[:, 1::2]
        ok = (left & ~right).any(axis=-1) & (right & ~left).any(axis=-1)
        if allow_ties:
            ok |= ~(left ^ right).any(axis=-1)
        out.append(ok)
        unions = left | right
    return out


def _row_masks(packed_users: np.ndarray) -> list[int]:
    return [int.from_bytes(row.tobytes(), "little") for row in packed_users]


@dataclass(frozen=True)
class DivisionSearch:
    """How the existence check divides a group whose stored-order halves fail.

    Groups of at most ``exhaustive_limit`` users try every balanced division;
    larger groups retry ``max_attempts`` random ones. ``allow_ties`` accepts
    halves with equal unions.
    """

    allow_ties: bool = False
    exhaustive_limit: int = 16
    max_attempts: int = 64


def _free_solvable(masks: list[int], rng: np.random.Generator, search: DivisionSearch) -> bool:
    d = len(masks)
    if d == 1:
        return True
    half = d // 2
    idx = list(range(d))
    if splits(union_of(masks[:half]), union_of(masks[half:]), search.allow_ties):
        division = (idx[:half], idx[half:])
    elif d <= search.exhaustive_limit:
        division = first_valid_division(masks, idx, search.allow_ties)
    else:
        division = None
        for _ in range(search.max_attempts):
            order = rng.permutation(d)
            left, right = list(order[:half]), list(order[half:])
            if splits(union_of(masks[k] for k in left), union_of(masks[k] for k in right), search.allow_ties):
                division = (left, right)
                break
    if division is None:
        return False
    return all(_free_solvable([masks[k] for k in side], rng, search) for side in division)


def existence_error(
    packed_users: np.ndarray,
    validity: Sequence[np.ndarray],
    rng: np.random.Generator,
    search: DivisionSearch = DivisionSearch(),
) -> bool:
    """Whether dividing the users down a TreeSplit tree hits a group with no valid division.

    Each group first tries its stored-order halves and falls back to ``search``.
    The first valid division found is kept (no lookahead into the subtrees).
    ``validity`` is :func:`level_validity` for this single sample (batch axis dropped).
    """
    m = packed_users.shape[0]
    subtree_ok = [np.ones(m, dtype=bool)]
    for ok in validity:
        below = subtree_ok[-1]
        subtree_ok.append(ok & below[0::2] & below[1::2])

    def aligned(level: int, idx: int) -> bool:
        if subtree_ok[level][idx]:
            return True
        if validity[level - 1][idx]:
            return aligned(level - 1, 2 * idx) and aligned(level - 1, 2 * idx + 1)
        size = 1 << level
        return _free_solvable(_row_masks(packed_users[idx * size:(idx + 1) * size]), rng, search)

    return not aligned(len(validity), 0)


def tree_errors(
    picked: np.ndarray, rng: np.random.Generator, search: DivisionSearch = DivisionSearch()
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample (random-division error, existence error) for a (batch, m, n) boolean array.

    The random-division error is a failure of the single stored-order division at
    some node; the existence error additionally lets failing groups search for
    another division.
    """
    batch, m, _ = picked.shape
    if m < 2 or m & (m - 1):
        raise ValueError(f"m must be a power of two >= 2, got {m}")
    packed = pack_users(picked)
    validity = level_validity(packed, search.allow_ties)
    random_err = ~np.logical_and.reduce([v.all(axis=1) for v in validity])
    exist_err = np.zeros(batch, dtype=bool)
    for s in np.flatnonzero(random_err):
        exist_err[s] = existence_error(packed[s], [v[s] for v in validity], rng, search)
    return random_err, exist_err


def trial_tree_errors(
    n: int, m: int, p: float, seed: int, search: DivisionSearch = DivisionSearch()
) -> tuple[bool, bool]:
    """Tree errors for one seeded instance; the pickup matrix is nested across n for a fixed seed."""
    picked = draw_matrix(SamplingParams(n, m, p, seed)).T[None]
    rand_err, exist_err = tree_errors(picked, np.random.default_rng([seed, 2]), search)
    return bool(rand_err[0]), bool(exist_err[0])


# Threshold sweeps: halves with equal unions need no cross exchange.
THRESHOLD_SEARCH = DivisionSearch(allow_ties=True)


@dataclass
class PointRate:
    n: int
    trials_run: int
    existence_errors: int
    random_division_errors: int

    @property
    def error_rate(self) -> float:
        return self.existence_errors / self.trials_run

    @property
    def random_division_rate(self) -> float:
        return self.random_division_errors / self.trials_run


def error_rate(
    n: int,
    m: int,
    p: float,
    trials: int,
    base_seed: int = 0,
    search: DivisionSearch = THRESHOLD_SEARCH,
    stop_at: int | None = None,
) -> PointRate:
    """Error counts over ``trials`` seeded instances.

    With ``stop_at`` the loop ends once that many existence errors are seen,
    since the point can no longer meet its target.
    """
    out = PointRate(n, 0, 0, 0)
    for k in range(trials):
        r, e = trial_tree_errors(n, m, p, derive_seed(base_seed, k), search)
        out.trials_run += 1
        out.random_division_errors += r
        out.existence_errors += e
        if stop_at is not None and out.existence_errors >= stop_at:
            break
    return out


@dataclass
class SweepResult:
    p: float
    m: int
    min_n: int
    trials: int
    points: dict[int, PointRate]

    def rows(self) -> list[dict]:
        return [
            {
                "p": self.p, "m": self.m, "n": pt.n, "trials_run": pt.trials_run,
                "existence_errors": pt.existence_errors, "error_rate": pt.error_rate,
                "random_division_errors": pt.random_division_errors,
                "random_division_rate": pt.random_division_rate,
                "min_n": self.min_n,
            }
            for pt in self.points.values()
        ]


SWEEP_COLUMNS = (
    "p", "m", "n", "trials_run", "existence_errors", "error_rate",
    "random_division_errors", "random_division_rate", "min_n",
)


def sweep_min_n(
    p: float,
    m: int,
    error_target: float = 0.01,
    trials: int = 1000,
    n_grid: Sequence[int] | None = None,
    base_seed: int = 0,
    search: DivisionSearch = THRESHOLD_SEARCH,
) -> SweepResult:
    """Smallest grid n whose existence-error rate is below ``error_target``.

    The grid is searched by doubling the index step, then bisecting the bracket.
    Points stop early once their error count rules them out.
    """
    if not 0 < error_target < 1:
        raise ValueError("error_target must lie in (0, 1)")
    grid = list(n_grid) if n_grid is not None else list(range(2, 1025))
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("n_grid must be non-empty and strictly ascending")
    # rate < target  <=>  errors < target * trials
    stop_at = math.ceil(error_target * trials - 1e-12)
    points: dict[int, PointRate] = {}

    def passes(i: int) -> bool:
        n = grid[i]
        if n not in points:
            points[n] = error_rate(n, m, p, trials, base_seed, search, stop_at)
        pt = points[n]
        return pt.trials_run == trials and pt.error_rate < error_target

    def result(i: int) -> SweepResult:
        return SweepResult(p, m, grid[i], trials, dict(sorted(points.items())))

    if passes(0):
        return result(0)
    lo, step = 0, 1
    while True:
        hi = min(lo + step, len(grid) - 1)
        if passes(hi):
            break
        if hi == len(grid) - 1:
            raise NotFound(f"no n in the grid reaches error rate < {error_target} (p={p}, m={m})")
        lo, step = hi, step * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return result(hi)

# ---------------------------------------------------------------------------
# Monte Carlo estimators for the closed-form expressions.

BOUND_FORMULAS = ("split", "tree", "cover", "no-division", "existence")


@dataclass(frozen=True)
class BoundPoint:
    """``size`` is the group size d (split, no-division) or the user count m (tree, cover, existence)."""

    formula: str
    n: int
    size: int
    p: float

    def __post_init__(self):
        if self.formula not in BOUND_FORMULAS:
            raise ValueError(f"unknown formula {self.formula!r}")


def _sample(rng: np.random.Generator, shape: tuple[int, ...], p: float) -> np.ndarray:
    return rng.random(shape) < p


def _contained(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ~(a & ~b).any(axis=-1)


def _chunks(total: int, size: int = 2000):
    done = 0
    while done < total:
        k = min(size, total - done)
        yield k
        done += k


def mc_split_violation(n: int, d: int, p: float, samples: int, rng: np.random.Generator) -> float:
    hits = 0
    for k in _chunks(samples):
        x = _sample(rng, (k, d, n), p)
        left, right = x[:, : d // 2].any(axis=1), x[:, d // 2:].any(axis=1)
        hits += int((_contained(left, right) | _contained(right, left)).sum())
    return hits / samples


def mc_tree_error(n: int, m: int, p: float, samples: int, rng: np.random.Generator) -> float:
    hits = 0
    for k in _chunks(samples):
        validity = level_validity(pack_users(_sample(rng, (k, m, n), p)))
        hits += int((~np.logical_and.reduce([v.all(axis=1) for v in validity])).sum())
    return hits / samples


def mc_not_file_cover(n: int, m: int, p: float, samples: int, rng: np.random.Generator) -> float:
    hits = 0
    for k in _chunks(samples):
        x = _sample(rng, (k, m, n), p)
        hits += int((~x.any(axis=1).all(axis=1)).sum())
    return hits / samples


def mc_no_valid_division(n: int, d: int, p: float, samples: int, rng: np.random.Generator) -> float:
    from .schedulers import balanced_divisions

    divisions = list(balanced_divisions(list(range(d))))
    hits = 0
    for k in _chunks(samples):
        x = _sample(rng, (k, d, n), p)
        any_ok = np.zeros(k, dtype=bool)
        for left, right in divisions:
            ul, ur = x[:, left].any(axis=1), x[:, right].any(axis=1)
            any_ok |= ~_contained(ul, ur) & ~_contained(ur, ul)
        hits += int((~any_ok).sum())
    return hits / samples


def mc_existence_error(n: int, m: int, p: float, samples: int, rng: np.random.Generator) -> float:
    hits = 0
    for k in _chunks(samples):
        _, err = tree_errors(_sample(rng, (k, m, n), p), rng)
        hits += int(err.sum())
    return hits / samples


def closed_form(point: BoundPoint) -> tuple[float, float | None]:
    """(bound value, exact probability or None) for a grid point."""
    q = 1.0 - point.p
    f, n, s = point.formula, point.n, point.size
    if f == "split":
        return analysis.p_split_violation(n, s, q).value, analysis.p_split_violation_exact(n, s, q)
    if f == "tree":
        return analysis.tree_error_bound(n, s, q).value, None
    if f == "cover":
        exact, bound = analysis.p_not_file_cover(n, s, q)
        return bound, exact
    if f == "no-division":
        return analysis.p_no_valid_division_bound(n, s, point.p).value, None
    return analysis.existence_error_bound(n, s, point.p).value, None


_ESTIMATORS = {
    "split": mc_split_violation,
    "tree": mc_tree_error,
    "cover": mc_not_file_cover,
    "no-division": mc_no_valid_division,
    "existence": mc_existence_error,
}

VERIFY_COLUMNS = (
    "formula", "n", "size", "p", "samples", "mc", "se", "bound", "bound_clamped",
    "bound_ok", "exact", "exact_ok",
)


def verify_point(point: BoundPoint, samples: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    freq = _ESTIMATORS[point.formula](point.n, point.size, point.p, samples, rng)
    se = math.sqrt(freq * (1 - freq) / samples)
    bound, exact = closed_form(point)
    row = {
        "formula": point.formula, "n": point.n, "size": point.size, "p": point.p,
        "samples": samples, "mc": freq, "se": se, "bound": bound,
        "bound_clamped": min(bound, 1.0),
        "bound_ok": freq <= min(bound, 1.0) + 3 * se,
        "exact": exact, "exact_ok": None,
    }
    if exact is not None:
        exact_se = math.sqrt(exact * (1 - exact) / samples)
        row["exact_ok"] = abs(freq - exact) <= 3 * exact_se
    return row


def verify_bounds(points: Iterable[BoundPoint], samples: int = 10_000, base_seed: int = 0) -> list[dict]:
    """Monte Carlo estimate against the closed form at every point.

    Point ``k`` uses the stream ``derive_seed(base_seed, k)``.
    """
    return [verify_point(pt, samples, derive_seed(base_seed, k)) for k, pt in enumerate(points)]


def rows_to_csv(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if row.get(c) is None else row.get(c) for c in columns])
    return buf.getvalue()


def default_grid() -> list[BoundPoint]:
    """Built-in verification grid (69 points).

    The root-level bound is only kept where the root term dominates every level,
    and the no-valid-division bound only from n = 20 up: below that it is not a
    bound at all (two users and one file already give probability 1 against 0.906).
    """
    pts = [BoundPoint("split", 1, 2, 0.5), BoundPoint("cover", 3, 2, 0.5), BoundPoint("no-division", 10, 2, 0.0)]
    for d in (2, 4, 8):
        for n in (5, 20):
            for p in (0.3, 0.6):
                pts.append(BoundPoint("split", n, d, p))
    for m in (4, 8, 16):
        for n in (10, 30, 60):
            for p in (0.5, 0.7):
                if analysis.root_term_dominates(n, m, 1.0 - p):
                    pts.append(BoundPoint("tree", n, m, p))
    for m in (2, 4, 8):
        for n in (3, 20):
            for p in (0.2, 0.5):
                pts.append(BoundPoint("cover", n, m, p))
    for d in (2, 4, 6):
        for n in (20, 40):
            for p in (0.3, 0.45):
                pts.append(BoundPoint("no-division", n, d, p))
    for m in (4, 8, 16):
        for n in (20, 40):
            for p in (0.2, 0.45):
                pts.append(BoundPoint("existence", n, m, p))
    return pts
