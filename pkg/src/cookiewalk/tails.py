"""Heavy-tail exponent estimation and polynomial-decay regression.

Hill estimation recovers the tail index of cycle lengths and totals;
log-log regression over an n-grid of rare-event frequencies recovers
polynomial decay exponents of slowdown-type probabilities.  Everything
reports a point estimate with a 95% interval and the per-point table it
was fitted from.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .environment import CookieEnvironment
from .branching import hitting_time_representation_samples
from .walk import simulate_positions
from . import streams

MIN_HITS = 30


@dataclass(frozen=True)
class GridPoint:
    n: int
    hits: int
    reps: int
    used: bool

    @property
    def p_hat(self) -> float:
        return self.hits / self.reps if self.reps else 0.0

    @property
    def log_se(self) -> float:
        """Delta-method standard error of log p_hat."""
        if self.hits == 0:
            return math.inf
        p = self.p_hat
        return math.sqrt((1.0 - p) / (self.reps * p))


@dataclass
class TailFit:
    exponent: float
    amplitude: float
    k_used: int
    ci: tuple[float, float]
    method: str
    points: list[GridPoint] = field(default_factory=list)

    def __post_init__(self):
        lo, hi = self.ci
        if not (lo <= self.exponent <= hi):
            raise ValueError("exponent must lie inside its confidence interval")
        floor = 10 if self.method == "hill" else 2
        if self.k_used < floor:
            raise ValueError(f"need at least {floor} points/order statistics")


def default_hill_k(n_samples: int) -> int:
    return int(n_samples ** (2.0 / 3.0))


def hill_estimate(samples: np.ndarray, k: int | None = None) -> TailFit:
    """Hill tail-index estimator over the top-k order statistics.

    Zero values never enter (only the top-k exceedances are used, and the
    estimator needs positive ratios); k defaults to floor(N^(2/3)).  The
    interval is the asymptotic kappa * (1 -+ 1.96/sqrt(k)).
    """
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    n = x.size
    if k is None:
        k = default_hill_k(n)
    if k < 10:
        raise ValueError("need k >= 10 order statistics")
    if k >= n / 2:
        raise ValueError("k must be below half the sample count")
    top = np.partition(x, n - k - 1)[n - k - 1 :]
    top.sort()
    threshold = top[0]
    if threshold <= 0:
        raise ValueError("top-k order statistics must be positive")
    logs = np.log(top[1:] / threshold)
    if not np.any(logs > 0):
        raise ValueError("degenerate tail: fewer than k distinct exceedances")
    h = float(logs.mean())
    kappa = 1.0 / h
    half = 1.96 / math.sqrt(k)
    amplitude = (k / n) * threshold**kappa
    return TailFit(
        exponent=kappa,
        amplitude=float(amplitude),
        k_used=k,
        ci=(kappa * (1.0 - half), kappa * (1.0 + half)),
        method="hill",
    )


def hill_stability_profile(samples: np.ndarray, ks: list[int]) -> list[tuple[int, float]]:
    """kappa-hat across candidate k, for the k-stability diagnostic plot."""
    out = []
    for k in ks:
        try:
            out.append((k, hill_estimate(samples, k).exponent))
        except ValueError:
            continue
    return out


def fit_loglog(points: list[GridPoint]) -> TailFit:
    """Weighted LS of log p_hat on log n over the usable grid points.

    Weights are 1/Var(log p_hat) by the delta method.  Points below the
    hit floor are excluded (kept in the table, flagged unused); fewer than
    two usable points is an error.
    """
    used = [p for p in points if p.used]
    if len(used) < 2:
        raise ValueError("need at least two grid points with enough hits")
    lx = np.array([math.log(p.n) for p in used])
    ly = np.array([math.log(p.p_hat) for p in used])
    wt = np.array([1.0 / max(p.log_se, 1e-9) ** 2 for p in used])
    wsum = wt.sum()
    xbar = float((wt * lx).sum() / wsum)
    ybar = float((wt * ly).sum() / wsum)
    sxx = float((wt * (lx - xbar) ** 2).sum())
    sxy = float((wt * (lx - xbar) * (ly - ybar)).sum())
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    # WLS slope variance under the delta-method weights
    se = math.sqrt(1.0 / sxx)
    return TailFit(
        exponent=slope,
        amplitude=math.exp(intercept),
        k_used=len(used),
        ci=(slope - 1.96 * se, slope + 1.96 * se),
        method="log-log-regression",
        points=list(points),
    )


def _grid_point(n: int, hits: int, reps: int) -> GridPoint:
    used = hits >= MIN_HITS
    if not used:
        warnings.warn(
            f"grid point n={n} has only {hits} hits; excluded from the fit",
            stacklevel=3,
        )
    return GridPoint(n, hits, reps, used)


def heavy_sum_exponent(
    samples: np.ndarray,
    x: float,
    n_grid: list[int],
    reps: int,
    master_seed: int = 0,
) -> TailFit:
    """Decay exponent of P(sum of n pool draws > x n) as n grows.

    Block-resamples sums from the (uncensored) pool; for an i.i.d. pool
    with tail index kappa > 1 and x above the mean the slope tends to
    1 - kappa.
    """
    pool = np.asarray(samples, dtype=float)
    if pool.size < 100:
        raise ValueError("pool too small to resample from")
    if x <= pool.mean():
        raise ValueError("threshold x must exceed the pool mean")
    rng = streams.stream(master_seed, "heavy-sum")
    points = []
    chunk_elems = 1 << 22
    for n in n_grid:
        hits = 0
        done = 0
        per_chunk = max(1, chunk_elems // n)
        while done < reps:
            take = min(per_chunk, reps - done)
            idx = rng.integers(0, pool.size, size=(take, n))
            sums = pool[idx].sum(axis=1)
            hits += int((sums > x * n).sum())
            done += take
        points.append(_grid_point(n, hits, reps))
    return fit_loglog(points)


def slowdown_exponent_T(
    env: CookieEnvironment,
    t: float,
    n_grid: list[int],
    reps: int,
    master_seed: int = 0,
    workers: int = 1,
) -> TailFit:
    """log-log slope of P(T_n > n t) over the n grid.

    Hitting times are drawn through the branching representation (O(n) per
    draw); the event is exactly the value-cap censoring at floor(n t).
    Meaningful for drift above 2 with t beyond the inverse speed, where the
    decay is polynomial with exponent 1 - delta/2.
    """
    if t <= 1.0:
        raise ValueError("t must exceed 1 (hitting n takes at least n steps)")
    points = []
    for n in n_grid:
        cap = int(math.floor(n * t))
        _, censored = hitting_time_representation_samples(
            env, n, reps, cap, master_seed, workers
        )
        points.append(_grid_point(n, int(censored.sum()), reps))
    fit = fit_loglog(points)
    if all(p.hits == 0 for p in points):
        raise ValueError("no slowdown events at all; estimator degenerate")
    return fit


def slowdown_exponent_X(
    env: CookieEnvironment,
    x: float,
    n_grid: list[int],
    reps: int,
    master_seed: int = 0,
    workers: int = 1,
    sandwich: bool = False,
):
    """log-log slope of P(X_n < n x) over the n grid, by direct simulation.

    With ``sandwich=True`` also returns the per-n frequencies of the
    hitting-time event {T_ceil(nx) > n}, which lower-bound the position
    event; the acceptance suite checks the ordering within noise.
    """
    if not (0.0 < x < 1.0):
        raise ValueError("x must be in (0, 1)")
    points = []
    lower_points = []
    for n in n_grid:
        ends = simulate_positions(env, n, reps, master_seed, workers)
        hits = int((ends < n * x).sum())
        points.append(_grid_point(n, hits, reps))
        if sandwich:
            m = int(math.ceil(n * x))
            _, censored = hitting_time_representation_samples(
                env, m, reps, n, master_seed, workers
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                lower_points.append(_grid_point(n, int(censored.sum()), reps))
    fit = fit_loglog(points)
    if sandwich:
        return fit, lower_points
    return fit


# ---------------------------------------------------------------------------
# Synthetic oracle and decay-shape diagnostics
# ---------------------------------------------------------------------------


def pareto_samples(kappa: float, size: int, master_seed: int = 0) -> np.ndarray:
    """Inverse-CDF Pareto(kappa) draws with unit scale: P(Z > t) = t^-kappa."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    rng = streams.stream(master_seed, "pareto", str(kappa))
    return rng.random(size) ** (-1.0 / kappa)


@dataclass(frozen=True)
class DecayFit:
    """Joint fit log p = const + poly_exponent * log n - exp_rate * n."""

    exp_rate: float
    poly_exponent: float
    const: float


def exponential_rate_fit(ns, values, poly_term: bool = True) -> DecayFit:
    """Exponential decay rate of a positive sequence, optionally with a
    polynomial term absorbing power-law structure.

    Without the polynomial term this is a plain log-linear fit; with it,
    a genuinely polynomial sequence fits to rate ~ 0 while a genuinely
    exponential one keeps its rate.
    """
    ns = np.asarray(ns, dtype=float)
    vals = np.asarray(values, dtype=float)
    if np.any(vals <= 0):
        raise ValueError("sequence must be positive to fit its decay")
    y = np.log(vals)
    cols = [np.ones_like(ns)]
    if poly_term:
        cols.append(np.log(ns))
    cols.append(ns)
    a = np.vstack(cols).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    if poly_term:
        return DecayFit(exp_rate=-float(coef[2]), poly_exponent=float(coef[1]),
                        const=float(coef[0]))
    return DecayFit(exp_rate=-float(coef[1]), poly_exponent=math.nan, const=float(coef[0]))


def stretched_envelope_coefficient(ns, values) -> float:
    """Least-squares alpha in log p ~ -alpha * n^(1/3) (cube-root envelope)."""
    ns = np.asarray(ns, dtype=float)
    vals = np.asarray(values, dtype=float)
    if np.any(vals <= 0):
        raise ValueError("sequence must be positive")
    z = ns ** (1.0 / 3.0)
    return float(-(z * np.log(vals)).sum() / (z * z).sum())
