"""Exact ground truth on small instances.

Everything here is dynamic programming or explicit enumeration in plain
float64, with truncation mass carried explicitly instead of renormalised
away: a result is always a certified bracket [value, value + truncation],
never an estimate.  These laws back the Monte-Carlo samplers' tests and
the acceptance suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .environment import CookieEnvironment

MASS_TOL = 1e-9
MAX_ENUMERATION_STEPS = 22
_LOG_HALF = math.log(0.5)
_EXP_FLOOR = -745.0  # below this exp() underflows to 0


@dataclass
class ExactLaw:
    """Finite probability table plus the mass outside the computed support."""

    support: list
    probs: np.ndarray
    truncation_mass: float = 0.0

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if len(self.support) != len(self.probs):
            raise ValueError("support/probs length mismatch")
        if np.any(self.probs < -MASS_TOL):
            raise ValueError("negative probability in exact law")
        total = float(self.probs.sum()) + self.truncation_mass
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"law mass {total} not 1 within tolerance")

    def as_dict(self) -> dict:
        return {k: float(p) for k, p in zip(self.support, self.probs)}

    def prob(self, outcome) -> float:
        try:
            i = self.support.index(outcome)
        except ValueError:
            return 0.0
        return float(self.probs[i])

    def tv_distance(self, other: "ExactLaw") -> float:
        """Total variation over the union of supports (truncation not included)."""
        mine, theirs = self.as_dict(), other.as_dict()
        keys = set(mine) | set(theirs)
        return 0.5 * sum(abs(mine.get(k, 0.0) - theirs.get(k, 0.0)) for k in keys)


def _fair_negbinom_pmf(r: int, length: int) -> np.ndarray:
    """P(failures = 0..length-1 before the r-th success) for a fair coin.

    Log-space recurrence so large r does not underflow away the whole row.
    """
    if r <= 0:
        out = np.zeros(length)
        if length > 0:
            out[0] = 1.0
        return out
    ell = np.arange(1, length)
    logs = np.concatenate(
        ([r * _LOG_HALF], np.log((ell + r - 1) / ell) + _LOG_HALF)
    ).cumsum()
    out = np.zeros(length)
    ok = logs > _EXP_FLOOR
    out[ok] = np.exp(logs[ok])
    return out


@lru_cache(maxsize=100_000)
def _failures_row_cached(env: CookieEnvironment, m: int, j_max: int):
    """Exact law of F_m, the failures before the m-th success at a fresh site.

    The first M trials use the (component-shared) cookie strengths and are
    handled by a DP over (successes, failures); the remaining successes come
    from the fair-coin negative binomial.  Returns (probs[0..j_max], trunc),
    both per the mixture law.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    probs = np.zeros(j_max + 1)
    if m == 0:
        probs[0] = 1.0
        return probs, 0.0
    trunc = 0.0
    for weight, vec in zip(env.weights, env.vectors):
        finished = np.zeros(j_max + 1)
        comp_trunc = 0.0
        live = {(0, 0): 1.0}
        for p in vec.probs:
            nxt: dict[tuple[int, int], float] = {}
            for (s, f), mass in live.items():
                if p > 0.0:
                    ms = mass * p
                    if s + 1 == m:
                        finished[f] += ms
                    else:
                        key = (s + 1, f)
                        nxt[key] = nxt.get(key, 0.0) + ms
                if p < 1.0:
                    mf = mass * (1.0 - p)
                    if f + 1 > j_max:
                        comp_trunc += mf
                    else:
                        key = (s, f + 1)
                        nxt[key] = nxt.get(key, 0.0) + mf
            live = nxt
        for (s, f), mass in live.items():
            r = m - s
            tail = _fair_negbinom_pmf(r, j_max + 1 - f)
            finished[f:] += mass * tail
            comp_trunc += mass * max(0.0, 1.0 - float(tail.sum()))
        probs += weight * finished
        trunc += weight * comp_trunc
    probs.flags.writeable = False
    return probs, trunc


def _failures_row(env: CookieEnvironment, m: int, j_max: int):
    probs, trunc = _failures_row_cached(env, m, j_max)
    return probs, trunc


def transition_row(env: CookieEnvironment, current: int, j_max: int) -> ExactLaw:
    """Exact P(V_{i+1} = j | V_i = current) for j <= j_max, plus truncation."""
    if current < 0:
        raise ValueError("current population must be nonnegative")
    probs, trunc = _failures_row(env, current + 1, j_max)
    return ExactLaw(list(range(j_max + 1)), probs.copy(), trunc)


def offspring_row(env: CookieEnvironment, size: int, j_max: int) -> ExactLaw:
    """Exact next-generation law for the immigrant-free chain started at ``size``."""
    if size < 0:
        raise ValueError("size must be nonnegative")
    probs, trunc = _failures_row(env, size, j_max)
    return ExactLaw(list(range(j_max + 1)), probs.copy(), trunc)


# ---------------------------------------------------------------------------
# Path enumeration for the walk itself
# ---------------------------------------------------------------------------


def enumerate_paths(env: CookieEnvironment, n: int) -> ExactLaw:
    """Exact averaged law of the walk position after n steps (n <= 22).

    Works in probability space: a depth-first sweep over the 2^n direction
    sequences, carrying per-site mixture-component partial products so the
    averaged path probability is a product of per-site component sums.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n > MAX_ENUMERATION_STEPS:
        raise ValueError(f"path enumeration limited to n <= {MAX_ENUMERATION_STEPS}")
    law: dict[int, float] = {}

    def record(pos, mass):
        law[pos] = law.get(pos, 0.0) + mass

    _walk_dfs(env, n, None, record, None)
    support = sorted(law)
    return ExactLaw(support, np.array([law[k] for k in support]), 0.0)


def hitting_law(env: CookieEnvironment, target: int, max_steps: int) -> ExactLaw:
    """Exact law of the first-passage time to ``target``, truncated at ``max_steps``."""
    if target == 0:
        return ExactLaw([0], np.array([1.0]), 0.0)
    if max_steps < abs(target):
        raise ValueError("max_steps must be at least |target|")
    if max_steps > 2 * MAX_ENUMERATION_STEPS:
        raise ValueError(
            f"hitting-time enumeration limited to max_steps <= {2 * MAX_ENUMERATION_STEPS}"
        )
    law: dict[int, float] = {}
    leftover = [0.0]

    def record_hit(step, mass):
        law[step] = law.get(step, 0.0) + mass

    def record_leftover(pos, mass):
        leftover[0] += mass

    _walk_dfs(env, max_steps, target, record_leftover, record_hit)
    support = sorted(law)
    return ExactLaw(support, np.array([law[k] for k in support]), leftover[0])


def _walk_dfs(env, depth, target, record_end, record_hit):
    weights = np.asarray(env.weights)
    tables = env.prob_table()  # (components, M+1)
    m = env.m
    site_arrays: dict[int, np.ndarray] = {}
    site_sums: dict[int, float] = {}
    visits: dict[int, int] = {}

    def go(pos, steps_done, mass):
        if target is not None and pos == target:
            record_hit(steps_done, mass)
            return
        if steps_done == depth:
            record_end(pos, mass)
            return
        j = visits.get(pos, 0)  # departures so far; this one is number j+1
        arr = site_arrays.get(pos)
        if arr is None:
            arr = weights
            site_sums[pos] = 1.0
        old_sum = site_sums[pos] if pos in site_sums else 1.0
        p_right = tables[:, min(j, m)]
        visits[pos] = j + 1
        for direction, factors in ((1, p_right), (-1, 1.0 - p_right)):
            new_arr = arr * factors
            new_sum = float(new_arr.sum())
            if new_sum <= 0.0:
                continue
            site_arrays[pos] = new_arr
            site_sums[pos] = new_sum
            go(pos + direction, steps_done + 1, mass * new_sum / old_sum)
        # restore
        visits[pos] = j
        if j == 0:
            site_arrays.pop(pos, None)
            site_sums.pop(pos, None)
        else:
            site_arrays[pos] = arr
            site_sums[pos] = old_sum

    # seed sums dict for site 0 before first use
    go(0, 0, 1.0)


# ---------------------------------------------------------------------------
# Regeneration-cycle joint law and the log-MGF brackets
# ---------------------------------------------------------------------------


def _sigma_w_matrix(env: CookieEnvironment, sigma_max: int, w_max: int, v_max: int):
    """Joint mass[sigma, w] of the first regeneration cycle, with truncation.

    Forward DP over (generation, population v, accumulated total w), absorbing
    at v = 0.  Anything escaping the (sigma_max, w_max, v_max) box is truncated.
    """
    if sigma_max < 1 or w_max < 0 or v_max < 1:
        raise ValueError("bounds must be positive")
    if (sigma_max + 1) * (w_max + 1) * (v_max + 1) > 10_000_000:
        raise ValueError("state space exceeds the 1e7 budget")
    absorbed = np.zeros((sigma_max + 1, w_max + 1))
    live = np.zeros((v_max + 1, w_max + 1))
    trunc = 0.0

    row0, r0t = _failures_row(env, 1, v_max)
    absorbed[1, 0] = row0[0]
    trunc += r0t
    for j in range(1, v_max + 1):
        if j <= w_max:
            live[j, j] = row0[j]
        else:
            trunc += row0[j]

    for gen in range(2, sigma_max + 1):
        if live.sum() <= 0.0:
            break
        new_live = np.zeros_like(live)
        for v in range(1, v_max + 1):
            mass_v = live[v]
            total_v = mass_v.sum()
            if total_v <= 0.0:
                continue
            row, rt = _failures_row(env, v + 1, v_max)
            absorbed[gen] += row[0] * mass_v
            trunc += rt * total_v
            for vp in range(1, v_max + 1):
                if row[vp] <= 0.0:
                    continue
                keep = w_max + 1 - vp
                if keep > 0:
                    new_live[vp, vp:] += row[vp] * mass_v[:keep]
                    trunc += row[vp] * mass_v[keep:].sum()
                else:
                    trunc += row[vp] * total_v
        live = new_live
    trunc += live.sum()
    return absorbed, trunc


def sigma_w_law(
    env: CookieEnvironment, sigma_max: int, w_max: int, v_max: int | None = None
) -> ExactLaw:
    """Exact truncated joint law of (cycle length, cycle total)."""
    if v_max is None:
        v_max = w_max
    absorbed, trunc = _sigma_w_matrix(env, sigma_max, w_max, v_max)
    support, probs = [], []
    for s in range(1, absorbed.shape[0]):
        for w in range(absorbed.shape[1]):
            if absorbed[s, w] > 0.0:
                support.append((s, w))
                probs.append(absorbed[s, w])
    return ExactLaw(support, np.array(probs), trunc)


@dataclass
class MgfBracket:
    lower: float
    upper: float
    certified: bool
    truncation_mass: float = 0.0

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= x <= self.upper + slack


def exact_mgf(
    env: CookieEnvironment,
    lam: float,
    eta: float,
    sigma_max: int = 60,
    w_max: int = 150,
    v_max: int = 60,
) -> MgfBracket:
    """Bracket on log E[exp(lam*W + eta*sigma); sigma finite] from the DP law.

    Requires lam <= 0.  For eta <= -lam the truncated remainder is certified:
    a truncated cycle has W >= min(sigma_max, w_max+1, v_max+1) and
    sigma <= W + 1, so its weight is at most exp(eta + (lam+eta)*W).  For
    eta > -lam only the lower bound is meaningful.
    """
    if lam > 0.0:
        raise ValueError("lam must be <= 0 (the transform diverges above 0)")
    absorbed, trunc = _sigma_w_matrix(env, sigma_max, w_max, v_max)
    sgrid = np.arange(absorbed.shape[0])[:, None]
    wgrid = np.arange(absorbed.shape[1])[None, :]
    mask = absorbed > 0.0
    if not mask.any():
        return MgfBracket(-math.inf, -math.inf, False, trunc)
    logterms = lam * wgrid + eta * sgrid + np.log(np.where(mask, absorbed, 1.0))
    logterms = np.where(mask, logterms, -np.inf)
    shift = logterms.max()
    total = float(np.exp(logterms - shift).sum()) * math.exp(min(shift, 700.0))
    if shift > 700.0:  # keep the bracket honest if something exploded
        total = math.inf

    w_floor = min(sigma_max, w_max + 1, v_max + 1)
    if eta <= 0.0:
        # eta*sigma <= 0, and every truncated cycle has W >= w_floor
        remainder = trunc * math.exp(lam * w_floor)
        certified = True
    elif lam + eta <= 0.0:
        remainder = trunc * math.exp(eta + (lam + eta) * w_floor)
        certified = True
    else:
        remainder = math.inf
        certified = False

    lower = math.log(total) if total > 0.0 else -math.inf
    upper = math.log(total + remainder) if math.isfinite(remainder) else math.inf
    return MgfBracket(lower, upper, certified, trunc)


def lambda_v_exact(
    env: CookieEnvironment,
    lam: float,
    tol: float = 1e-6,
    sigma_max: int = 60,
    w_max: int = 150,
    v_max: int = 60,
) -> tuple[float, float]:
    """Bracket on the implicit rate value -sup{eta : mgf(lam, eta) <= 0}.

    Bisects on eta inside [0, -log E[w(1)]], where the root is guaranteed for
    lam <= log E[w(1)]; raises if the bracket cannot certify a sign.
    """
    if lam >= 0.0:
        raise ValueError("lam must be negative")
    eta_hi = -math.log(env.expect_omega1()) + 1e-12
    eta_lo = 0.0

    def bracket(eta):
        return exact_mgf(env, lam, eta, sigma_max, w_max, v_max)

    b_lo = bracket(eta_lo)
    if b_lo.lower > 0.0:
        return (0.0, 0.0)
    while eta_hi - eta_lo > tol:
        mid = 0.5 * (eta_lo + eta_hi)
        b = bracket(mid)
        if not b.certified:
            raise ValueError("cannot certify the root at this lam; enlarge the box")
        if b.upper < 0.0:
            eta_lo = mid
        elif b.lower > 0.0:
            eta_hi = mid
        else:
            # the bracket straddles zero: the root is within this bracket width
            return (-mid - (eta_hi - eta_lo), -mid + (eta_hi - eta_lo))
    return (-eta_hi, -eta_lo)


# ---------------------------------------------------------------------------
# Truncated chain powers and the escape probability
# ---------------------------------------------------------------------------


def transition_matrix(env: CookieEnvironment, v_max: int):
    """Sub-stochastic matrix T[v, v'] of the migration chain on {0..v_max}."""
    t = np.zeros((v_max + 1, v_max + 1))
    for v in range(v_max + 1):
        row, _ = _failures_row(env, v + 1, v_max)
        t[v] = row
    return t


def v_state_distribution(env: CookieEnvironment, n: int, v_max: int):
    """Sub-stochastic law of V_n on {0..v_max}; (probs, leaked_mass).

    The leaked mass is everything that ever stepped above v_max; the returned
    entries are certified lower bounds on P(V_n = k).
    """
    t = transition_matrix(env, v_max)
    dist = np.zeros(v_max + 1)
    dist[0] = 1.0
    for _ in range(n):
        dist = dist @ t
    return dist, max(0.0, 1.0 - float(dist.sum()))


def v_zero_probabilities(env: CookieEnvironment, ns: list[int], v_max: int):
    """Certified brackets [lo, hi] on P(V_n = 0) for each n in ``ns``."""
    t = transition_matrix(env, v_max)
    dist = np.zeros(v_max + 1)
    dist[0] = 1.0
    out = {}
    step = 0
    for n in sorted(ns):
        while step < n:
            dist = dist @ t
            step += 1
        leak = max(0.0, 1.0 - float(dist.sum()))
        out[n] = (float(dist[0]), float(dist[0]) + leak)
    return out


def first_passage_before_backstep(env: CookieEnvironment, n: int, v_max: int = 400):
    """Certified bracket on P(T_n < T_{-1}), the chance of reaching n
    before ever stepping to -1.

    Uses the down-crossing representation: the count of jumps from 0 to -1
    before the walk first reaches n is distributed like the n-th generation
    of the migration chain (level n - k carries generation k, with the empty
    generation 0 sitting at the target), so the probability is P(V_n = 0).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    dist, leak = v_state_distribution(env, n, v_max)
    lower = float(dist[0])
    return lower, min(1.0, lower + leak)


def ballistic_escape_lower_bound(env: CookieEnvironment, n: int) -> float:
    """Closed-form product lower bound on P(T_n < T_{-1}) for n >= 2.

    The bound follows the explicit strategy of clearing the cookies at 0 and 1
    by alternating, then advancing one level at a time with simple-random-walk
    exit probabilities, and costs a polynomial factor n^{-(M+1)} overall.
    """
    if n < 2:
        raise ValueError("bound defined for n >= 2")
    m = env.m
    head = 0.5 * env.expect_product_omega() * env.expect_product_one_minus_omega()
    ladder = 1.0
    for k in range(3, n + 1):
        ladder *= (k - 1) / k
    return head * ladder ** (m + 1) * 0.5


# ---------------------------------------------------------------------------
# Exact law of the branching-representation hitting value
# ---------------------------------------------------------------------------


def hitting_representation_law(
    env: CookieEnvironment,
    m: int,
    total_max: int,
    v_max: int,
    gen_cap: int = 400,
) -> ExactLaw:
    """Exact truncated law of m + 2*(sum of the first m generations plus the
    immigrant-free continuation), the branching-side of the hitting-time
    identity.  Values above m + 2*total_max are truncated.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    # phase 1: m generations of the immigrant chain, tracking (v, running sum)
    live = np.zeros((v_max + 1, total_max + 1))
    live[0, 0] = 1.0
    trunc = 0.0
    for _ in range(m):
        new = np.zeros_like(live)
        for v in range(v_max + 1):
            mass_v = live[v]
            tot = mass_v.sum()
            if tot <= 0.0:
                continue
            row, rt = _failures_row(env, v + 1, v_max)
            trunc += rt * tot
            for vp in range(v_max + 1):
                if row[vp] <= 0.0:
                    continue
                if vp == 0:
                    new[0] += row[0] * mass_v
                    continue
                keep = total_max + 1 - vp
                if keep > 0:
                    new[vp, vp:] += row[vp] * mass_v[:keep]
                    trunc += row[vp] * mass_v[keep:].sum()
                else:
                    trunc += row[vp] * tot
        live = new

    # phase 2: immigrant-free continuation from V_m, absorbing at 0
    finished = live[0].copy()
    live = live.copy()
    live[0] = 0.0
    for _ in range(gen_cap):
        if live.sum() <= 0.0:
            break
        new = np.zeros_like(live)
        for v in range(1, v_max + 1):
            mass_v = live[v]
            tot = mass_v.sum()
            if tot <= 0.0:
                continue
            row, rt = _failures_row(env, v, v_max)
            trunc += rt * tot
            finished += row[0] * mass_v
            for vp in range(1, v_max + 1):
                if row[vp] <= 0.0:
                    continue
                keep = total_max + 1 - vp
                if keep > 0:
                    new[vp, vp:] += row[vp] * mass_v[:keep]
                    trunc += row[vp] * mass_v[keep:].sum()
                else:
                    trunc += row[vp] * tot
        live = new
    trunc += live.sum()

    support, probs = [], []
    for s in range(total_max + 1):
        if finished[s] > 0.0:
            support.append(m + 2 * s)
            probs.append(finished[s])
    return ExactLaw(support, np.array(probs), trunc)
