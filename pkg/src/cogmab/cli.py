"""Command-line front end: ``cogmab simulate | bounds | figure | oracle``.

Every command writes CSV (UTF-8, LF line endings, floats in shortest
round-trip form). Settings come from flags, then from an optional flat
``key = value`` config file (``--config``), then from built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import analysis
from .harness import (
    ConfigError, ExperimentConfig, default_mu, fixed_ratio_sweep, run_experiment,
    simulate_absorption, sweep,
)
from .model import InputDomainError

POLICY_FLAGS = {
    "single": "single", "centralized": "centralized", "rho-rand": "rho_rand",
    "rho-est": "rho_est", "perfect-rho-rand": "perfect_rho_rand",
}
FEEDBACK_FLAGS = {"transmission": "transmission", "overlap": "sensing_overlap"}
FIGURES = ("algocomp", "statcomp", "collisions", "users", "channels", "fixed-ratio", "fairness")
DEFAULTS = {
    "policy": "rho-rand", "statistic": "mean", "users": 4, "channels": None, "mu": None,
    "slots": 2500, "reps": 100, "seed": 0, "feedback": "transmission",
    "threshold_scale": 1.0, "out": None, "checkpoints": None,
}
CSV_HEADER = ["slot", "metric", "mean", "stderr", "policy", "U", "C", "seed"]


class UsageError(Exception):
    """Invalid configuration; reported with exit status 1."""


def parse_mu(text: str) -> list[float]:
    """Comma-separated availabilities; ``a,b,...,z`` expands an arithmetic run."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if "..." in parts:
        i = parts.index("...")
        if i < 2 or i != len(parts) - 2:
            raise UsageError("'...' needs two leading values and one final value")
        a, b, end = float(parts[i - 2]), float(parts[i - 1]), float(parts[-1])
        step = b - a
        if step == 0:
            raise UsageError("'...' needs a non-zero step")
        count = int(round((end - a) / step)) + 1
        head = [float(p) for p in parts[: i - 2]]
        return head + [round(a + step * t, 12) for t in range(count)]
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"bad --mu value: {exc}") from None


def read_config_file(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _settings(args) -> dict:
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        file_values = read_config_file(args.config)
        unknown = set(file_values) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(file_values)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def build_config(args) -> ExperimentConfig:
    s = _settings(args)
    mu = parse_mu(s["mu"]) if s["mu"] is not None else None
    channels = int(s["channels"]) if s["channels"] is not None else None
    if mu is None:
        mu = default_mu(channels or 9)
    elif channels is not None and channels != len(mu):
        raise UsageError(f"--channels {channels} does not match the {len(mu)} values of --mu")
    policy = s["policy"]
    if policy not in POLICY_FLAGS:
        raise UsageError(f"unknown policy {policy!r}")
    feedback = s["feedback"]
    if feedback not in FEEDBACK_FLAGS:
        raise UsageError(f"unknown feedback mode {feedback!r}")
    checkpoints = ()
    if s["checkpoints"]:
        checkpoints = tuple(int(c) for c in str(s["checkpoints"]).split(","))
    try:
        return ExperimentConfig(
            users=int(s["users"]), mu=tuple(mu), horizon=int(s["slots"]),
            replications=int(s["reps"]), policy=POLICY_FLAGS[policy],
            statistic=str(s["statistic"]), feedback=FEEDBACK_FLAGS[feedback],
            threshold_scale=float(s["threshold_scale"]), seed=int(s["seed"]),
            checkpoints=checkpoints,
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write(rows, header, out):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    text = buf.getvalue()
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return text


def simulation_rows(metrics, config: ExperimentConfig, policy_flag: str):
    rows = []
    scalar = ["regret", "collisions", "wrong_order", "feedback_collisions", "uworst_time"]
    for i, slot in enumerate(metrics.checkpoints):
        tail = [policy_flag, config.users, config.channels, config.seed]
        for name in scalar:
            rows.append([int(slot), name, metrics.mean[name][i], metrics.stderr[name][i], *tail])
        for j in range(config.users):
            rows.append([int(slot), f"successes_user{j}", metrics.mean["successes"][i, j],
                         metrics.stderr["successes"][i, j], *tail])
            if config.policy == "rho_est":
                rows.append([int(slot), f"u_hat_user{j}", metrics.mean["u_hat"][i, j],
                             metrics.stderr["u_hat"][i, j], *tail])
    return rows


def cmd_simulate(args) -> int:
    config = build_config(args)
    metrics = run_experiment(config)
    policy_flag = next(k for k, v in POLICY_FLAGS.items() if v == config.policy)
    _write(simulation_rows(metrics, config, policy_flag), CSV_HEADER, _settings(args)["out"])
    return 0


def bound_rows(mu, users, n, regime="all", threshold_scale=1.0):
    """Rows ``(kind, value)`` plus the per-term breakdowns keyed by kind."""
    rows, terms = [], {}
    regimes = analysis.REGIMES if regime == "all" else (regime,)
    for r in regimes:
        if r == "single" and users != 1:
            if regime == "all":
                continue
        rows.append((f"lower_{r}", analysis.asymptotic_lower_bound(mu, users, r)))
    for kind in analysis.BOUND_KINDS:
        rep = analysis.finite_time_upper_bound(mu, users, n, kind, threshold_scale=threshold_scale)
        rows.append((kind, rep.value))
        terms[kind] = rep.per_term
    count, bound = analysis.compositions_bound(users)
    rows.append(("compositions_count", count))
    rows.append(("compositions_bound", bound))
    rows.append(("optimal_reward", analysis.optimal_reward(mu, users, n)))
    return rows, terms


def cmd_bounds(args) -> int:
    s = _settings(args)
    mu = parse_mu(s["mu"]) if s["mu"] is not None else default_mu(int(s["channels"] or 9))
    users, n = int(s["users"]), int(s["slots"])
    try:
        rows, terms = bound_rows(mu, users, n, args.regime, float(s["threshold_scale"]))
    except InputDomainError as exc:
        raise UsageError(str(exc)) from None
    _write(rows, ["kind", "value"], s["out"])
    if args.terms:
        flat = [(kind, ":".join(str(x) for x in key), v)
                for kind, per in terms.items() for key, v in per.items()]
        _write(flat, ["kind", "term", "value"], args.terms)
    return 0


def oracle_report(users: int, channels: int, mc_reps: int = 0, seed: int = 0) -> str:
    lines = [f"U={users} k={channels}"]
    count, bound = analysis.compositions_bound(users)
    exact = None
    if channels < users:
        lines.append("E[Upsilon] = diverges")
    else:
        if channels ** users <= 4096:
            exact = analysis.exact_absorption_time(users, channels)
            lines.append(f"E[Upsilon] = {float(exact)!r} (exact {exact})")
        else:
            res = analysis.markov_absorption_oracle(analysis.AbsorptionSpec(users, channels))
            exact = res.expected
            lines.append(f"E[Upsilon] = {res.expected!r}")
    lines.append(f"bound binom(2U-1,U)-1 = {count - 1}")
    lines.append(f"collision bound U*(binom(2U-1,U)-1) = {bound}")
    if mc_reps and exact is not None:
        res = analysis.markov_absorption_oracle(analysis.AbsorptionSpec(users, channels))
        times = simulate_absorption(users, channels, mc_reps, seed, start=res.worst_state)
        mean = float(times.mean())
        half = 1.96 * float(times.std(ddof=1)) / math.sqrt(mc_reps) if mc_reps > 1 else 0.0
        lines.append(f"monte carlo = {mean!r} +/- {half!r} (95% CI, {mc_reps} runs)")
    return "\n".join(lines) + "\n"


def cmd_oracle(args) -> int:
    if args.users < 1 or args.channels < 1:
        raise UsageError("need --users >= 1 and --channels >= 1")
    sys.stdout.write(oracle_report(args.users, args.channels, args.mc_reps, args.seed))
    return 0


# --------------------------------------------------------------------------
# figures
# --------------------------------------------------------------------------

CANONICAL_MU = tuple(default_mu(9))
FIG_HEADER = ["figure", "series", "x", "mean", "stderr"]

PLOT_TEMPLATE = '''\
"""Plot {figure}.csv; generated by `cogmab figure {figure}`."""
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
series = defaultdict(lambda: ([], [], []))
with open(here / "{figure}.csv", newline="", encoding="utf-8") as fh:
    for row in csv.DictReader(fh):
        xs, ys, es = series[row["series"]]
        xs.append(float(row["x"]))
        ys.append(float(row["mean"]))
        es.append(float(row["stderr"]))

fig, ax = plt.subplots(figsize=(5, 3.5))
for name, (xs, ys, es) in series.items():
    ax.errorbar(xs, ys, yerr=es, label=name, marker=".", capsize=2)
ax.set_xlabel({xlabel!r})
ax.set_ylabel({ylabel!r})
{xscale}ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig(here / "{figure}.png", dpi=150)
'''


def _normalized_rows(figure, name, metrics, start=2):
    rows = []
    for i, t in enumerate(metrics.checkpoints):
        if t < start:
            continue
        ln = math.log(t)
        rows.append([figure, name, int(t), metrics.mean["regret"][i] / ln,
                     metrics.stderr["regret"][i] / ln])
    return rows


def _constant_rows(figure, name, xs, value):
    return [[figure, name, x, value, 0.0] for x in xs]


def _sweep_rows(figure, name, points, bounds):
    rows = []
    for p in points:
        ln = math.log(p.config.horizon)
        mean, se = p.metrics.at("regret", p.config.horizon)
        rows.append([figure, name, p.value, mean / ln, se / ln])
        if bounds:
            for key in ("lower_centralized", "lower_distributed"):
                rows.append([figure, key, p.value, p.bounds[key], 0.0])
    return rows


def figure_data(figure: str, reps: int | None = None, seed: int = 0, bounds: bool = True):
    """Rows of the figure CSV plus axis labels for the plot script."""
    mu, n = CANONICAL_MU, 2500
    base = dict(mu=mu, horizon=n, seed=seed)
    rows = []
    if figure in ("algocomp", "statcomp"):
        runs = ([("centralized", "mean"), ("rho_rand", "mean")] if figure == "algocomp"
                else [("rho_rand", "mean"), ("rho_rand", "opt")])
        xs = None
        for pol, stat in runs:
            cfg = ExperimentConfig(4, replications=reps or 200, policy=pol, statistic=stat, **base)
            m = run_experiment(cfg)
            rows += _normalized_rows(figure, f"{pol}_{stat}", m)
            xs = [int(t) for t in m.checkpoints if t >= 2]
        if bounds:
            regimes = ("centralized", "distributed") if figure == "algocomp" else ("distributed",)
            for r in regimes:
                rows += _constant_rows(figure, f"lower_{r}", xs,
                                       analysis.asymptotic_lower_bound(mu, 4, r))
        return rows, "slots n", "R(n) / ln n", True
    if figure == "collisions":
        xs = None
        for pol, label in (("rho_rand", "mu_unknown"), ("perfect_rho_rand", "mu_known")):
            cfg = ExperimentConfig(4, replications=reps or 200, policy=pol, **base)
            m = run_experiment(cfg)
            xs = [int(t) for t in m.checkpoints]
            rows += [[figure, label, int(t), m.mean["collisions"][i], m.stderr["collisions"][i]]
                     for i, t in enumerate(m.checkpoints)]
        ups = analysis.exact_absorption_time(4, 4)
        rows += _constant_rows(figure, "U*E[Upsilon(U,U)]", xs, 4 * float(ups))
        if bounds:
            rows += _constant_rows(figure, "upper_bound_U*E[Upsilon]", xs,
                                   analysis.compositions_bound(4)[1])
        return rows, "slots n", "collisions M(n)", True
    if figure in ("users", "channels", "fixed-ratio"):
        for pol in ("centralized", "rho_rand"):
            if figure == "users":
                tmpl = ExperimentConfig(1, replications=reps or 200, policy=pol, **base)
                points = sweep(tmpl, "U", range(1, 9))
            elif figure == "channels":
                tmpl = ExperimentConfig(2, replications=reps or 200, policy=pol,
                                        mu=default_mu(2), horizon=n, seed=seed)
                points = sweep(tmpl, "C", range(2, 10))
            else:
                tmpl = ExperimentConfig(1, replications=reps or 200, policy=pol,
                                        mu=default_mu(2), horizon=n, seed=seed)
                points = fixed_ratio_sweep(tmpl, range(1, 5))
            rows += _sweep_rows(figure, pol, points, bounds and pol == "rho_rand")
        xlabel = "channels C" if figure == "channels" else "users U"
        return rows, xlabel, "R(n) / ln n", False
    if figure == "fairness":
        cfg = ExperimentConfig(4, replications=reps or 1000, policy="rho_rand", **base)
        m = run_experiment(cfg)
        best = int(np.argmax(mu))
        on_best = m.final["final_channel"] == best
        slots = m.final["best_slots"]
        R = m.replications
        for j in range(4):
            rows.append([figure, "frequency_final_best", j + 1, on_best[:, j].mean(),
                         on_best[:, j].std(ddof=1) / math.sqrt(R) if R > 1 else 0.0])
            rows.append([figure, "slots_on_best", j + 1, slots[:, j].mean(),
                         slots[:, j].std(ddof=1) / math.sqrt(R) if R > 1 else 0.0])
        return rows, "user", "frequency / slots on best channel", False
    raise UsageError(f"unknown figure {figure!r}")


def cmd_figure(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, xlabel, ylabel, logx = figure_data(args.figure, args.reps, args.seed, not args.no_bounds)
    _write(rows, FIG_HEADER, out_dir / f"{args.figure}.csv")
    script = PLOT_TEMPLATE.format(figure=args.figure, xlabel=xlabel, ylabel=ylabel,
                                  xscale='ax.set_xscale("log")\n' if logx else "")
    (out_dir / f"plot_{args.figure.replace('-', '_')}.py").write_text(
        script, encoding="utf-8", newline="\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cogmab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_flags(p, simulate=True):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--users", type=int)
        p.add_argument("--channels", type=int)
        p.add_argument("--mu", help="comma list, e.g. 0.1,0.2,...,0.9")
        p.add_argument("--slots", type=int, help="horizon n")
        p.add_argument("--threshold-scale", dest="threshold_scale", type=float)
        p.add_argument("--out", help="output CSV path (default: stdout)")
        if simulate:
            p.add_argument("--policy", choices=sorted(POLICY_FLAGS))
            p.add_argument("--statistic", choices=["mean", "opt"])
            p.add_argument("--reps", type=int)
            p.add_argument("--seed", type=int)
            p.add_argument("--feedback", choices=sorted(FEEDBACK_FLAGS))
            p.add_argument("--checkpoints", help="extra checkpoint slots, comma list")

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    experiment_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bounds", help="evaluate closed-form bounds")
    experiment_flags(p, simulate=False)
    p.add_argument("--regime", choices=["all", *analysis.REGIMES], default="all")
    p.add_argument("--terms", help="also write the per-term breakdown CSV here")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("figure", help="regenerate figure data and a plot script")
    p.add_argument("figure", choices=FIGURES)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-bounds", action="store_true")
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("oracle", help="exact absorption time of the rank chain")
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--channels", type=int, required=True)
    p.add_argument("--mc-reps", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, InputDomainError) as exc:
        print(f"cogmab {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
