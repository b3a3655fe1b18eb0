"""The branching process with migration attached to the excited walk.

Each generation draws a fresh i.i.d. site and breeds ``failures before the
(V+1)-th success`` of that site's Bernoulli trials, the coin-tossing
construction.  Regeneration cycles are the excursions between visits to 0;
their (length, total) pairs drive the speed estimator, the empirical
log-MGF, and all tail statistics.  The immigrant-free continuation of the
chain supplies the distributional representation of hitting times:
T_n equals n + 2 * (first n generations) + 2 * (continuation bred from V_n).

Sampling is vectorized over lanes inside fixed blocks (see streams.py);
the CoinSite class gives the slow, coupling-friendly single-site view.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .environment import CookieEnvironment, CookieVector
from . import streams

CENSORED_SIGMA = np.uint64(0xFFFFFFFFFFFFFFFF)

_MAGIC = b"CWRG"
_VERSION = 1
_HEADER = struct.Struct("<4sI32sQQQ")  # magic, version, env hash, seed, cap, count


class CoinSite:
    """One site's Bernoulli trial sequence, drawn lazily and memoised.

    Outcomes are immutable once drawn, so queries at different success
    counts are coupled through the same coins (monotone in the count).
    """

    def __init__(self, cookies: CookieVector, rng: np.random.Generator):
        self.cookies = cookies
        self._rng = rng
        self._outcomes: list[bool] = []

    def outcome(self, trial: int) -> bool:
        """Result of the 1-based ``trial``-th toss."""
        while len(self._outcomes) < trial:
            j = len(self._outcomes) + 1
            self._outcomes.append(bool(self._rng.random() < self.cookies.strength(j)))
        return self._outcomes[trial - 1]

    def failures_before(self, successes: int) -> int:
        """Failures preceding the ``successes``-th success; 0 for count 0."""
        if successes < 0:
            raise ValueError("success count must be nonnegative")
        if successes == 0:
            return 0
        seen = fails = 0
        trial = 0
        while seen < successes:
            trial += 1
            if self.outcome(trial):
                seen += 1
            else:
                fails += 1
        return fails


def step_v(current: int, site: CoinSite) -> int:
    """One migration-chain step: failures before success number current + 1."""
    if current < 0:
        raise ValueError("population must be nonnegative")
    return site.failures_before(current + 1)


@dataclass(frozen=True)
class RegenSample:
    """One regeneration cycle: excursion length, total progeny, censor flag."""

    sigma: int
    w: int
    censored: bool = False

    def __post_init__(self):
        if not self.censored:
            if self.sigma < 1:
                raise ValueError("uncensored cycles have sigma >= 1")
            if self.w < self.sigma - 1:
                raise ValueError("cycle total below sigma - 1 is impossible")


# ---------------------------------------------------------------------------
# Vectorized lane engine
# ---------------------------------------------------------------------------


class _EnvTables:
    """Sampling tables hoisted out of the per-generation hot loop."""

    __slots__ = ("deterministic", "m", "probs", "table", "cum_weights")

    def __init__(self, env: CookieEnvironment):
        self.deterministic = env.is_deterministic
        self.m = env.m
        self.table = env.prob_table()
        self.probs = tuple(float(p) for p in self.table[0, : env.m])
        self.cum_weights = np.cumsum(env.weight_array())


def _draw_failures_into(counts: np.ndarray, ctx: _EnvTables, rng: np.random.Generator):
    """Failures before the counts[i]-th success, one fresh site per lane."""
    n = counts.size
    fails = np.zeros(n, dtype=np.int64)
    if n == 0:
        return fails
    succ = np.zeros(n, dtype=np.int64)
    alive = counts > 0
    if ctx.deterministic:
        for p in ctx.probs:
            won = rng.random(n) < p
            won &= alive
            fails += alive ^ won  # alive & ~won, given won <= alive
            succ += won
            alive &= succ < counts
    else:
        comp = np.searchsorted(ctx.cum_weights, rng.random(n), side="right")
        for j in range(ctx.m):
            won = rng.random(n) < ctx.table[comp, j]
            won &= alive
            fails += alive ^ won
            succ += won
            alive &= succ < counts
    rem = counts - succ
    need = rem > 0
    if need.any():
        fails[need] += rng.negative_binomial(rem[need], 0.5)
    return fails


def _draw_failures(counts: np.ndarray, env: CookieEnvironment, rng: np.random.Generator):
    return _draw_failures_into(np.asarray(counts, dtype=np.int64), _EnvTables(env), rng)


def _regen_block(env: CookieEnvironment, lanes: int, cap: int, rng: np.random.Generator):
    ctx = _EnvTables(env)
    sigma = np.full(lanes, CENSORED_SIGMA, dtype=np.uint64)
    w_out = np.zeros(lanes, dtype=np.uint64)
    ids = np.arange(lanes)
    v = np.zeros(lanes, dtype=np.int64)
    w = np.zeros(lanes, dtype=np.int64)
    for gen in range(1, cap + 1):
        if not ids.size:
            break
        v += 1
        nxt = _draw_failures_into(v, ctx, rng)
        w += nxt
        died = nxt == 0
        if died.any():
            gone = ids[died]
            sigma[gone] = gen
            w_out[gone] = w[died].astype(np.uint64)
            keep = ~died
            ids, v, w = ids[keep], nxt[keep], w[keep]
        else:
            v = nxt
    w_out[ids] = w.astype(np.uint64)  # partial totals on censored cycles
    return sigma, w_out


@dataclass
class RegenBatch:
    """A batch of regeneration cycles, sentinel-encoded like the cache file."""

    sigma: np.ndarray  # uint64, CENSORED_SIGMA marks a censored cycle
    w: np.ndarray  # uint64, partial total on censored cycles
    cap: int
    master_seed: int
    env_hash: str

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=np.uint64)
        self.w = np.asarray(self.w, dtype=np.uint64)
        if self.sigma.shape != self.w.shape:
            raise ValueError("sigma/w length mismatch")

    def __len__(self):
        return self.sigma.size

    @property
    def censored(self) -> np.ndarray:
        return self.sigma == CENSORED_SIGMA

    @property
    def censor_rate(self) -> float:
        return float(self.censored.mean()) if len(self) else 0.0

    def uncensored(self):
        """(sigma, w) arrays of the completed cycles, as int64."""
        keep = ~self.censored
        return self.sigma[keep].astype(np.int64), self.w[keep].astype(np.int64)

    def samples(self) -> list[RegenSample]:
        cens = self.censored
        return [
            RegenSample(int(s) if not c else 0, int(t), bool(c))
            if not c
            else RegenSample(0, int(t), True)
            for s, t, c in zip(self.sigma, self.w, cens)
        ]

    def merged_with(self, other: "RegenBatch") -> "RegenBatch":
        if other.env_hash != self.env_hash:
            raise ValueError("cannot merge batches from different environments")
        return RegenBatch(
            np.concatenate([self.sigma, other.sigma]),
            np.concatenate([self.w, other.w]),
            cap=min(self.cap, other.cap),
            master_seed=self.master_seed,
            env_hash=self.env_hash,
        )

    # -- binary cache ----------------------------------------------------

    def save(self, path) -> None:
        path = Path(path)
        header = _HEADER.pack(
            _MAGIC,
            _VERSION,
            bytes.fromhex(self.env_hash),
            self.master_seed & 0xFFFFFFFFFFFFFFFF,
            self.cap,
            len(self),
        )
        records = np.empty((len(self), 2), dtype="<u8")
        records[:, 0] = self.sigma
        records[:, 1] = self.w
        path.write_bytes(header + records.tobytes())

    @classmethod
    def load(cls, path, expected_env_hash: str | None = None) -> "RegenBatch":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise ValueError(f"{path}: truncated cache header")
        magic, version, env_hash, seed, cap, count = _HEADER.unpack_from(raw)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        body = raw[_HEADER.size :]
        if len(body) != count * 16:
            raise ValueError(f"{path}: record area truncated")
        env_hex = env_hash.hex()
        if expected_env_hash is not None and env_hex != expected_env_hash:
            raise ValueError(
                f"{path}: cache belongs to environment {env_hex[:12]}..., "
                f"expected {expected_env_hash[:12]}..."
            )
        records = np.frombuffer(body, dtype="<u8").reshape(count, 2)
        return cls(
            records[:, 0].copy(), records[:, 1].copy(), cap=cap,
            master_seed=seed, env_hash=env_hex,
        )


def sample_regenerations(
    env: CookieEnvironment,
    count: int,
    cap: int = 100_000,
    master_seed: int = 0,
    workers: int = 1,
) -> RegenBatch:
    """Sample ``count`` i.i.d. regeneration cycles under the averaged law."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    parts = streams.map_blocks(
        lambda i, lanes, rng: _regen_block(env, lanes, cap, rng),
        count,
        master_seed,
        tags=("regen",),
        workers=workers,
    )
    sigma = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, np.uint64)
    w = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, np.uint64)
    return RegenBatch(sigma, w, cap=cap, master_seed=master_seed, env_hash=env.env_hash())


def sample_regeneration(env: CookieEnvironment, cap: int, rng: np.random.Generator) -> RegenSample:
    """One regeneration cycle (scalar convenience path)."""
    v = np.zeros(1, dtype=np.int64)
    total = 0
    for gen in range(1, cap + 1):
        v = _draw_failures(v + 1, env, rng)
        total += int(v[0])
        if v[0] == 0:
            return RegenSample(gen, total, False)
    return RegenSample(0, total, True)


def sample_absorbed_total(
    env: CookieEnvironment, start: int, cap: int, rng: np.random.Generator
):
    """Total progeny of the immigrant-free chain started at ``start``.

    Returns (total, censored); 0 is absorbing, so start = 0 finishes at once.
    """
    if start < 0:
        raise ValueError("start must be nonnegative")
    v = np.array([start], dtype=np.int64)
    total = 0
    for _ in range(cap):
        if v[0] == 0:
            return total, False
        v = _draw_failures(v.copy(), env, rng)
        total += int(v[0])
    return total, v[0] != 0


def coupled_chain_pair(env: CookieEnvironment, n: int, horizon: int, rng: np.random.Generator):
    """Run the migration chain and its immigrant-free shadow on shared coins.

    Returns (v_path, shadow_path) with shadow_path[0] = v_path[n]; sharing the
    CoinSites realises the pathwise domination shadow[i] <= v_path[n+i].
    """
    sites = [CoinSite(env.sample_site(rng), rng) for _ in range(n + horizon)]
    v_path = [0]
    for i in range(n + horizon):
        v_path.append(sites[i].failures_before(v_path[-1] + 1))
    shadow = [v_path[n]]
    for i in range(1, horizon + 1):
        shadow.append(sites[n + i - 1].failures_before(shadow[-1]))
    return v_path, shadow


# ---------------------------------------------------------------------------
# Hitting times through the branching representation
# ---------------------------------------------------------------------------


def _representation_block(
    env: CookieEnvironment, n: int, lanes: int, value_cap: int, rng: np.random.Generator
):
    ctx = _EnvTables(env)
    v = np.zeros(lanes, dtype=np.int64)
    s1 = np.zeros(lanes, dtype=np.int64)
    for _ in range(n):
        v += 1
        v = _draw_failures_into(v, ctx, rng)
        s1 += v
    total = n + 2 * s1
    censored = total > value_cap
    live = (v > 0) & ~censored
    ids = np.flatnonzero(live)
    v = v[ids]
    # each live generation adds at least 2 to the total, so this terminates
    while ids.size:
        nxt = _draw_failures_into(v, ctx, rng)
        total[ids] += 2 * nxt
        over = total[ids] > value_cap
        censored[ids[over]] = True
        keep = (nxt > 0) & ~over
        ids, v = ids[keep], nxt[keep]
    return total, censored


def hitting_time_representation_samples(
    env: CookieEnvironment,
    n: int,
    reps: int,
    value_cap: int,
    master_seed: int = 0,
    workers: int = 1,
):
    """Draws of n + 2*(first n generations) + 2*(continuation), value-capped.

    A draw is censored exactly when its value exceeds ``value_cap``, so the
    censored law matches a step-capped direct hitting-time sample.
    Returns (values, censored) arrays.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    parts = streams.map_blocks(
        lambda i, lanes, rng: _representation_block(env, n, lanes, value_cap, rng),
        reps,
        master_seed,
        tags=("rep-hit", n),
        workers=workers,
    )
    values = np.concatenate([p[0] for p in parts])
    censored = np.concatenate([p[1] for p in parts])
    return values, censored


def hitting_time_via_representation(
    env: CookieEnvironment, n: int, value_cap: int, rng: np.random.Generator
):
    """Single draw of the representation value; (value, censored)."""
    total, censored = _representation_block(env, n, 1, value_cap, rng)
    return int(total[0]), bool(censored[0])


# ---------------------------------------------------------------------------
# Speed from regeneration cycles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeedEstimate:
    value: float
    stderr: float
    count: int


def estimate_speed_regen(batch: RegenBatch, max_censor_rate: float = 0.01) -> SpeedEstimate:
    """Limiting speed as mean(sigma) / mean(sigma + 2W) over completed cycles.

    Refuses when the censor rate exceeds ``max_censor_rate``: censoring
    truncates exactly the long cycles, which biases the ratio upward.
    """
    if batch.censor_rate > max_censor_rate:
        raise ValueError(
            f"censor rate {batch.censor_rate:.3%} exceeds {max_censor_rate:.0%}; "
            "raise the cap before estimating the speed"
        )
    sigma, w = batch.uncensored()
    if sigma.size == 0:
        raise ValueError("no completed cycles")
    x = sigma.astype(float)
    y = sigma.astype(float) + 2.0 * w.astype(float)
    n = x.size
    r = x.mean() / y.mean()
    if n > 1:
        sxx = x.var(ddof=1)
        syy = y.var(ddof=1)
        sxy = float(np.cov(x, y, ddof=1)[0, 1])
        var = (sxx - 2.0 * r * sxy + r * r * syy) / (n * y.mean() ** 2)
        se = float(np.sqrt(max(var, 0.0)))
    else:
        se = float("nan")
    return SpeedEstimate(float(r), se, int(n))


def mean_cycle_ratio(batch: RegenBatch) -> float:
    """Empirical mean(W) / mean(sigma), the zero-set edge of the mean-growth rate."""
    sigma, w = batch.uncensored()
    if sigma.size == 0:
        raise ValueError("no completed cycles")
    return float(w.mean() / sigma.mean())


def regeneration_cap_sensitivity(
    env: CookieEnvironment,
    count: int,
    cap: int,
    master_seed: int = 0,
    workers: int = 1,
) -> dict:
    """Censor-rate comparison between cap and 2*cap (truncation-bias probe)."""
    base = sample_regenerations(env, count, cap, master_seed, workers)
    double = sample_regenerations(env, count, 2 * cap, master_seed, workers)
    return {
        "cap": cap,
        "censor_rate": base.censor_rate,
        "censor_rate_doubled_cap": double.censor_rate,
        "rate_drop": base.censor_rate - double.censor_rate,
    }
