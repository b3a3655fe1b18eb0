"""Direct simulation of the excited walk under the averaged law.

The environment is materialised lazily: a site's cookie vector is drawn on
first arrival and departures consume cookies in order, so a trajectory only
ever touches O(n) sites.  Batch estimators run lanes of walkers in lock-step
over a shared visit-count window that grows directionally as the walkers
spread; single-trajectory simulation goes through WalkState, which keeps the
per-site bookkeeping inspectable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .environment import CookieEnvironment, CookieVector
from .branching import SpeedEstimate
from . import streams

#: Lanes per walk block; smaller than the generic block because each lane
#: carries a visit-count row over the walk's range.
WALK_BLOCK_LANES = 1024


class WalkState:
    """One walker: position, step count, per-site visits and cookie vectors."""

    def __init__(self, env: CookieEnvironment, rng: np.random.Generator):
        self.env = env
        self.rng = rng
        self.position = 0
        self.step_count = 0
        self.visit_counts: dict[int, int] = {}
        self.site_cookies: dict[int, CookieVector] = {}

    def step(self) -> int:
        """Advance one step; the j-th departure from a site uses its j-th cookie."""
        x = self.position
        cookies = self.site_cookies.get(x)
        if cookies is None:
            cookies = self.env.sample_site(self.rng)
            self.site_cookies[x] = cookies
        j = self.visit_counts.get(x, 0) + 1
        p = cookies.strength(j)
        self.visit_counts[x] = j
        self.position += 1 if self.rng.random() < p else -1
        self.step_count += 1
        return self.position


def simulate_position(env: CookieEnvironment, n: int, rng: np.random.Generator) -> int:
    """Endpoint of one n-step trajectory."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    state = WalkState(env, rng)
    for _ in range(n):
        state.step()
    return state.position


@dataclass(frozen=True)
class HittingResult:
    target: int
    time: int | None
    path_max: int
    path_min: int
    censored: bool

    def __post_init__(self):
        if self.time is not None and self.time < abs(self.target):
            raise ValueError("nearest-neighbour walk cannot hit faster than |target|")


def hitting_time(env: CookieEnvironment, target: int, cap: int, rng: np.random.Generator) -> HittingResult:
    """First-passage time to ``target``, or a censored record after ``cap`` steps."""
    if cap < abs(target):
        raise ValueError("cap must be at least |target|")
    state = WalkState(env, rng)
    hi = lo = 0
    for k in range(1, cap + 1):
        pos = state.step()
        hi = max(hi, pos)
        lo = min(lo, pos)
        if pos == target:
            return HittingResult(target, k, hi, lo, False)
    return HittingResult(target, None, hi, lo, True)


# ---------------------------------------------------------------------------
# Lane engine
# ---------------------------------------------------------------------------


class _LaneField:
    """Visit counts (and mixture components) for a block of walkers.

    One row per lane over a window of sites that grows directionally when a
    walker reaches its edge.  Counts saturate at M: from then on the lookup
    lands on the flat 1/2 entry of the strength table.
    """

    def __init__(self, env: CookieEnvironment, lanes: int, rng: np.random.Generator):
        self.env = env
        self.lanes = lanes
        self.rng = rng
        self.m = env.m
        self.strengths = env.prob_table()  # (components, M+1)
        self.left = -32
        self.right = 32
        width = self.right - self.left + 1
        self.counts = np.zeros((lanes, width), dtype=np.uint8)
        self.comp = (
            None
            if env.is_deterministic
            else np.full((lanes, width), -1, dtype=np.int16)
        )
        self.rows = np.arange(lanes)

    def _grow(self, lo: int, hi: int) -> None:
        new_left = min(self.left, lo - 64)
        new_right = max(self.right, hi + 64)
        width = new_right - new_left + 1
        counts = np.zeros((self.lanes, width), dtype=np.uint8)
        off = self.left - new_left
        counts[:, off : off + self.counts.shape[1]] = self.counts
        self.counts = counts
        if self.comp is not None:
            comp = np.full((self.lanes, width), -1, dtype=np.int16)
            comp[:, off : off + self.comp.shape[1]] = self.comp
            self.comp = comp
        self.left, self.right = new_left, new_right

    def step_probs(self, pos: np.ndarray) -> np.ndarray:
        """Right-step probabilities at the walkers' positions (consumes a cookie)."""
        lo, hi = int(pos.min()), int(pos.max())
        if lo <= self.left or hi >= self.right:
            self._grow(lo, hi)
        idx = pos - self.left
        rows = self.rows[: pos.size]
        c = self.counts[rows, idx]
        if self.comp is None:
            table = self.strengths[0]
            p = table[np.minimum(c, self.m)]
        else:
            comp = self.comp[rows, idx]
            fresh = comp < 0
            if fresh.any():
                comp[fresh] = self.env.sample_component_indices(
                    int(fresh.sum()), self.rng
                ).astype(np.int16)
                self.comp[rows, idx] = comp
            p = self.strengths[comp, np.minimum(c, self.m)]
        self.counts[rows, idx] = np.minimum(c + 1, self.m).astype(np.uint8)
        return p

    def shrink_to(self, keep: np.ndarray) -> None:
        self.counts = self.counts[keep]
        if self.comp is not None:
            self.comp = self.comp[keep]
        self.lanes = self.counts.shape[0]
        self.rows = np.arange(self.lanes)


def _positions_block(env, n, lanes, rng):
    field = _LaneField(env, lanes, rng)
    pos = np.zeros(lanes, dtype=np.int64)
    for _ in range(n):
        p = field.step_probs(pos)
        pos += np.where(rng.random(lanes) < p, 1, -1)
    return pos


def simulate_positions(
    env: CookieEnvironment, n: int, reps: int, master_seed: int = 0, workers: int = 1
) -> np.ndarray:
    """Endpoints of ``reps`` independent n-step trajectories."""
    parts = streams.map_blocks(
        lambda i, lanes, rng: _positions_block(env, n, lanes, rng),
        reps,
        master_seed,
        tags=("walk", n),
        workers=workers,
        block=WALK_BLOCK_LANES,
    )
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def _hitting_block(env, target, cap, lanes, rng):
    field = _LaneField(env, lanes, rng)
    pos = np.zeros(lanes, dtype=np.int64)
    lane_ids = np.arange(lanes)
    out_times = np.full(lanes, -1, dtype=np.int64)
    step = 0
    while pos.size and step < cap:
        step += 1
        p = field.step_probs(pos)
        pos += np.where(rng.random(pos.size) < p, 1, -1)
        hit = pos == target
        if hit.any():
            out_times[lane_ids[hit]] = step
            keep = ~hit
            pos, lane_ids = pos[keep], lane_ids[keep]
            field.shrink_to(keep)
    return out_times  # -1 where censored at cap


def hitting_times(
    env: CookieEnvironment,
    target: int,
    cap: int,
    reps: int,
    master_seed: int = 0,
    workers: int = 1,
):
    """First-passage times to ``target`` for ``reps`` walkers; (times, censored).

    Censored lanes carry time -1; they ran ``cap`` steps without hitting.
    """
    if cap < abs(target):
        raise ValueError("cap must be at least |target|")
    parts = streams.map_blocks(
        lambda i, lanes, rng: _hitting_block(env, target, cap, lanes, rng),
        reps,
        master_seed,
        tags=("hit", target),
        workers=workers,
        block=WALK_BLOCK_LANES,
    )
    times = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return times, times < 0


def estimate_speed(
    env: CookieEnvironment, n: int, reps: int, master_seed: int = 0, workers: int = 1
) -> SpeedEstimate:
    """Mean of X_n / n over replicas, with its standard error."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ratios = simulate_positions(env, n, reps, master_seed, workers) / n
    se = float(ratios.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan")
    return SpeedEstimate(float(ratios.mean()), se, reps)


# ---------------------------------------------------------------------------
# Event-probability estimators
# ---------------------------------------------------------------------------


def wilson_interval(hits: int, total: int, z: float = 1.96) -> tuple[float, float]:
    if total == 0:
        return (0.0, 1.0)
    phat = hits / total
    denom = 1.0 + z * z / total
    centre = (phat + z * z / (2 * total)) / denom
    half = z * np.sqrt(phat * (1.0 - phat) / total + z * z / (4 * total * total)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass(frozen=True)
class ProbabilityEstimate:
    probability: float
    wilson_low: float
    wilson_high: float
    hits: int
    reps: int
    censor_rate: float = 0.0

    @property
    def stderr(self) -> float:
        p = self.probability
        return float(np.sqrt(p * (1.0 - p) / self.reps)) if self.reps else float("nan")


def _probability_result(hits: int, reps: int, censor_rate: float = 0.0) -> ProbabilityEstimate:
    lo, hi = wilson_interval(hits, reps)
    if hits < 30:
        warnings.warn(
            f"only {hits} hits out of {reps}; the estimate is unreliable",
            stacklevel=3,
        )
    return ProbabilityEstimate(hits / reps if reps else 0.0, lo, hi, hits, reps, censor_rate)


def slowdown_event_probability(
    env: CookieEnvironment,
    n: int,
    x: float,
    reps: int,
    master_seed: int = 0,
    workers: int = 1,
) -> ProbabilityEstimate:
    """Frequency of the slowdown event {X_n < n x} with a Wilson interval."""
    if not (0.0 < x < 1.0):
        raise ValueError("x must be in (0, 1)")
    endpoints = simulate_positions(env, n, reps, master_seed, workers)
    hits = int((endpoints < n * x).sum())
    return _probability_result(hits, reps)


def _backtrack_block(env, n, rs, cap, lanes, rng):
    """One block of the backtracking profile.

    Walk 2*cap steps (a reach budget plus a watch budget); from the first
    passage of each level n + r track the running minimum of the path.
    Event for r: that minimum dipped to n or below.  Nested in r by
    construction, since a larger r watches a suffix of the same path.
    """
    rs = sorted(rs)
    big = np.iinfo(np.int64).max
    field = _LaneField(env, lanes, rng)
    pos = np.zeros(lanes, dtype=np.int64)
    passed = np.zeros((len(rs), lanes), dtype=bool)
    minima = np.full((len(rs), lanes), big, dtype=np.int64)
    for _ in range(2 * cap):
        p = field.step_probs(pos)
        pos += np.where(rng.random(lanes) < p, 1, -1)
        for k, r in enumerate(rs):
            passed[k] |= pos >= n + r
            np.minimum(minima[k], np.where(passed[k], pos, big), out=minima[k])
    events = passed & (minima <= n)
    return events, passed


def backtrack_profile(
    env: CookieEnvironment,
    n: int,
    rs: list[int],
    cap: int,
    reps: int,
    master_seed: int = 0,
    workers: int = 1,
) -> dict[int, ProbabilityEstimate]:
    """Lower-bound estimates of P(walk ever returns to level n after passing n + r).

    One shared trajectory per lane serves every r (events nest pathwise).
    Censoring: lanes that never reached n + r inside the step budget count as
    non-events and are reported through ``censor_rate``; the infinite-future
    event can only be under-counted, so these are lower bounds.
    """
    if any(r < 1 for r in rs):
        raise ValueError("gaps r must be >= 1")
    parts = streams.map_blocks(
        lambda i, lanes, rng: _backtrack_block(env, n, rs, cap, lanes, rng),
        reps,
        master_seed,
        tags=("backtrack", n),
        workers=workers,
        block=WALK_BLOCK_LANES,
    )
    events = np.concatenate([p[0] for p in parts], axis=1)
    passed = np.concatenate([p[1] for p in parts], axis=1)
    out = {}
    for k, r in enumerate(sorted(rs)):
        hits = int(events[k].sum())
        censor = 1.0 - float(passed[k].mean())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = _probability_result(hits, reps, censor)
        if censor > 0.25:
            warnings.warn(
                f"{censor:.0%} of walks never reached level n+{r}; "
                "the backtracking bound is badly censored",
                stacklevel=2,
            )
        out[r] = est
    return out


def backtrack_probability(
    env: CookieEnvironment,
    n: int,
    r: int,
    cap: int,
    reps: int,
    master_seed: int = 0,
    workers: int = 1,
) -> ProbabilityEstimate:
    """Single-gap backtracking estimate (see backtrack_profile)."""
    return backtrack_profile(env, n, [r], cap, reps, master_seed, workers)[r]
