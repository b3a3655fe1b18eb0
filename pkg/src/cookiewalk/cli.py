"""Command-line harness.

Subcommands: walk (positions/speed), hit (first-passage times), regen
(sample and cache cycles), rate (build the curve family from caches),
tails (Hill and slowdown exponents), oracle (exact laws), verify (the
acceptance suite).  Operation parameters come from the config file's
section of the same name; seed/workers/output resolve flag > environment
variable > config file.  Exit codes: 0 ok, 1 validation error,
2 verification failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from . import acceptance, branching, oracle, ratefn, reporting, tails, walk
from .config import ConfigError, ExperimentConfig, load_config

ENV_PREFIX = "COOKIEWALK_"


def _resolved(flag_value, env_name: str, cfg: ExperimentConfig | None, key: str, default):
    if flag_value is not None:
        return flag_value
    env_value = os.environ.get(ENV_PREFIX + env_name)
    if env_value is not None:
        return type(default)(env_value) if default is not None else env_value
    if cfg is not None:
        file_value = cfg.get("run", key)
        if file_value is not None:
            return file_value
    return default


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cookiewalk",
        description="Excited-random-walk simulation and large-deviation toolkit",
    )
    parser.add_argument("--config", type=Path, help="experiment config file")
    parser.add_argument("--seed", type=int, help="master seed (overrides env/config)")
    parser.add_argument("--workers", type=int, help="worker threads")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--format", choices=("csv", "plot"), dest="fmt",
                        help="artifact format for curves")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("walk", "hit", "regen", "rate", "tails", "oracle"):
        sub.add_parser(name)
    verify = sub.add_parser("verify")
    verify.add_argument("--level", choices=("quick", "full"), default="quick")
    return parser


class _Run:
    def __init__(self, args):
        self.cfg = load_config(args.config) if args.config else None
        self.seed = int(_resolved(args.seed, "SEED", self.cfg, "seed", 0))
        self.workers = int(_resolved(args.workers, "WORKERS", self.cfg, "workers", 1))
        out = _resolved(args.out, "OUT", self.cfg, "out", "out")
        self.out = Path(out)
        self.fmt = _resolved(args.fmt, "FORMAT", self.cfg, "format", "csv")

    @property
    def config_hash(self) -> str:
        return self.cfg.config_hash if self.cfg else "no-config"

    def require_config(self) -> ExperimentConfig:
        if self.cfg is None:
            raise ConfigError("this command needs --config")
        return self.cfg

    def section(self, name: str) -> dict:
        return self.require_config().sections.get(name, {})

    def environment(self):
        return self.require_config().environment()

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def emit_curve(self, name: str, curve) -> None:
        if self.fmt == "plot":
            reporting.write_plot_columns(self.path(name + ".dat"), curve)
        else:
            reporting.write_curve_csv(self.path(name + ".csv"), curve, self.config_hash)


def cmd_walk(run: _Run) -> int:
    sec = run.section("walk")
    env = run.environment()
    n = int(sec.get("n", 1024))
    reps = int(sec.get("reps", 10_000))
    ends = walk.simulate_positions(env, n, reps, run.seed, run.workers)
    reporting.write_rows(
        run.path("walk_positions.csv"), ["replica", "x_n"],
        enumerate(ends.tolist()), run.config_hash,
    )
    speed = walk.estimate_speed(env, n, reps, run.seed, run.workers)
    reporting.write_rows(
        run.path("walk_summary.csv"),
        ["n", "reps", "mean_position", "speed", "speed_se"],
        [(n, reps, float(ends.mean()), speed.value, speed.stderr)],
        run.config_hash,
    )
    print(f"speed estimate {speed.value:.6f} +- {speed.stderr:.6f}")
    return 0


def cmd_hit(run: _Run) -> int:
    sec = run.section("hit")
    env = run.environment()
    target = int(sec.get("target", 5))
    cap = int(sec.get("cap", 10_000))
    reps = int(sec.get("reps", 10_000))
    times, censored = walk.hitting_times(env, target, cap, reps, run.seed, run.workers)
    reporting.write_rows(
        run.path("hitting_times.csv"), ["replica", "time", "censored"],
        ((i, int(t) if t >= 0 else cap, bool(c)) for i, (t, c) in enumerate(zip(times, censored))),
        run.config_hash,
    )
    print(f"censor rate {censored.mean():.4f}; mean finite time "
          f"{times[~censored].mean() if (~censored).any() else float('nan'):.2f}")
    return 0


def cmd_regen(run: _Run) -> int:
    sec = run.section("regen")
    env = run.environment()
    count = int(sec.get("count", 100_000))
    cap = int(sec.get("cap", 100_000))
    batch = branching.sample_regenerations(env, count, cap, run.seed, run.workers)
    cache = run.path(str(sec.get("cache", "regen.cwrg")))
    batch.save(cache)
    if run.fmt == "csv":
        reporting.write_rows(
            run.path("regen.csv"), ["sigma", "w", "censored"],
            ((int(s) if not c else -1, int(t), bool(c))
             for s, t, c in zip(batch.sigma, batch.w, batch.censored)),
            run.config_hash,
        )
    print(f"cached {count} cycles to {cache} (censor rate {batch.censor_rate:.4f})")
    return 0


def cmd_rate(run: _Run) -> int:
    sec = run.section("rate")
    env = run.environment()
    cache = sec.get("cache")
    mirror_cache = sec.get("mirror_cache")
    if cache is None or mirror_cache is None:
        raise ConfigError("[rate] needs cache and mirror_cache paths")
    batch = branching.RegenBatch.load(Path(cache), expected_env_hash=env.env_hash())
    mirror_batch = branching.RegenBatch.load(
        Path(mirror_cache), expected_env_hash=env.mirror().env_hash()
    )
    mgf = ratefn.EmpiricalMGF(batch)
    mgf_m = ratefn.EmpiricalMGF(mirror_batch)
    regime = env.classify()
    dense_max = 3.0
    if regime.delta > 2:
        dense_max = 2.5 * branching.mean_cycle_ratio(batch)
    fam = ratefn.build_rate_family(mgf, mgf_m, dense_max=dense_max)
    for name, curve in (("lambda_v", fam.lambda_v), ("i_v", fam.i_v),
                        ("i_t", fam.i_t), ("i_x", fam.i_x)):
        run.emit_curve(name, curve)
    refs = {"log_e_omega1": math.log(env.expect_omega1()),
            "log_e_one_minus_omega1": math.log(1.0 - env.expect_omega1())}
    if regime.delta > 2:
        refs["m0"] = branching.mean_cycle_ratio(batch)
        refs["v0"] = branching.estimate_speed_regen(batch).value
    reports = [ratefn.check_properties(fam.i_v, regime, refs),
               ratefn.check_properties(fam.i_x, regime, refs)]
    reporting.write_property_report(run.path("properties.txt"), reports)
    for rep in reports:
        for line in rep.lines():
            print(line)
    return 0


def cmd_tails(run: _Run) -> int:
    sec = run.section("tails")
    env = run.environment()
    mode = sec.get("mode", "hill")
    if mode == "hill":
        cache = sec.get("cache")
        if cache is None:
            raise ConfigError("[tails] hill mode needs a cache path")
        batch = branching.RegenBatch.load(Path(cache), expected_env_hash=env.env_hash())
        sigma, w = batch.uncensored()
        fit_s = tails.hill_estimate(sigma.astype(float), sec.get("k"))
        fit_w = tails.hill_estimate(w[w > 0].astype(float), sec.get("k"))
        reporting.write_rows(
            run.path("hill.csv"),
            ["pool", "exponent", "ci_low", "ci_high", "k"],
            [("sigma", fit_s.exponent, *fit_s.ci, fit_s.k_used),
             ("w", fit_w.exponent, *fit_w.ci, fit_w.k_used)],
            run.config_hash,
        )
        print(f"hill sigma {fit_s.exponent:.3f}, W {fit_w.exponent:.3f}")
        return 0
    n_grid = [int(v) for v in sec.get("n_grid", [128, 256, 512, 1024, 2048])]
    reps = int(sec.get("reps", 100_000))
    if mode == "slowdown-t":
        fit = tails.slowdown_exponent_T(env, float(sec.get("t", 4.0)), n_grid, reps,
                                        run.seed, run.workers)
    elif mode == "slowdown-x":
        fit = tails.slowdown_exponent_X(env, float(sec.get("x", 0.2)), n_grid, reps,
                                        run.seed, run.workers)
    else:
        raise ConfigError(f"unknown tails mode {mode!r}")
    reporting.write_grid_points_csv(run.path(f"{mode}.csv"), fit.points, run.config_hash)
    print(f"{mode} slope {fit.exponent:.4f} ci ({fit.ci[0]:.4f}, {fit.ci[1]:.4f})")
    return 0


def cmd_oracle(run: _Run) -> int:
    sec = run.section("oracle")
    env = run.environment()
    mode = sec.get("mode", "paths")
    if mode == "paths":
        law = oracle.enumerate_paths(env, int(sec.get("n", 8)))
        name = "oracle_positions.csv"
    elif mode == "transition":
        law = oracle.transition_row(env, int(sec.get("current", 0)), int(sec.get("j_max", 30)))
        name = "oracle_transition.csv"
    elif mode == "sigma-w":
        law = oracle.sigma_w_law(env, int(sec.get("sigma_max", 6)),
                                 int(sec.get("w_max", 12)))
        name = "oracle_sigma_w.csv"
    elif mode == "mgf":
        bracket = oracle.exact_mgf(env, float(sec.get("lam", -1.0)), float(sec.get("eta", 0.0)))
        reporting.write_rows(
            run.path("oracle_mgf.csv"),
            ["lam", "eta", "lower", "upper", "certified"],
            [(sec.get("lam", -1.0), sec.get("eta", 0.0),
              bracket.lower, bracket.upper, bracket.certified)],
            run.config_hash,
        )
        print(f"mgf bracket [{bracket.lower:.6f}, {bracket.upper:.6f}]")
        return 0
    else:
        raise ConfigError(f"unknown oracle mode {mode!r}")
    reporting.write_exact_law_csv(run.path(name), law, run.config_hash)
    print(f"wrote {name} ({len(law.support)} atoms, truncation {law.truncation_mass:.2e})")
    return 0


def cmd_verify(run: _Run, level: str) -> int:
    results = acceptance.run_acceptance(level, run.out, run.seed or acceptance.DEFAULT_SEED,
                                        run.workers)
    return 0 if all(r.passed for r in results) else 2


COMMANDS = {
    "walk": cmd_walk,
    "hit": cmd_hit,
    "regen": cmd_regen,
    "rate": cmd_rate,
    "tails": cmd_tails,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = _Run(args)
        if args.command == "verify":
            return cmd_verify(run, args.level)
        return COMMANDS[args.command](run)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
