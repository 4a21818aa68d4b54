"""``lcr`` command line.

Exit codes: 0 success, 2 usage error, 3 computational failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .montecarlo import SimConfig, SimulationDefect, chips_trajectory, expected_winnings, run_simulation
from .rules import MODIFIED, STANDARD, roll_distribution
from .solver import (
    DEFAULT_MAX_PLAYERS,
    SolverError,
    analyze,
    build_transition_system,
    expected_chips_exact,
)
from .states import count_states

EXIT_USAGE = 2
EXIT_FAILURE = 3
FORCED_MAX_PLAYERS = 64
DEFAULT_GAMES = 1_000_000


class UsageError(Exception):
    pass


def _envelope(command: str, parameters: dict, results) -> dict:
    return {
        "command": command,
        "parameters": parameters,
        "results": results,
        "provenance": {"version": __version__, "timestamp": datetime.now(timezone.utc).isoformat()},
    }


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _table(header: list[str], rows) -> str:
    cells = [header] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _variant(args):
    return MODIFIED if args.modified_start else STANDARD


def _exact_cap(args) -> int:
    return FORCED_MAX_PLAYERS if getattr(args, "force", False) else DEFAULT_MAX_PLAYERS


def _check_players(players: int, cap: int | None = None):
    if players < 2:
        raise UsageError(f"--players must be at least 2, got {players}")
    if cap is not None and players > cap:
        raise UsageError(f"exact analysis is capped at {cap} players; pass --force to go beyond")


# -- commands -----------------------------------------------------------------


def cmd_analyze(args) -> tuple[dict, str, str]:
    _check_players(args.players, _exact_cap(args))
    variant = _variant(args)
    report = analyze(args.players, variant, max_players=_exact_cap(args))
    winnings = expected_winnings(report, args.stake)
    params = {"players": args.players, "variant": variant.name, "stake": args.stake}
    results = {
        "expected_length": report.expected_length,
        "length_std_dev": report.length_std_dev,
        "win_probability": list(report.win_probability),
        "expected_winnings": list(winnings),
        "solver_residual": report.solver_residual,
    }
    header = ["seat", "win_probability", "expected_winnings"]
    seats = list(zip(range(1, args.players + 1), report.win_probability, winnings))
    text = (
        f"{args.players} players, {variant.name} start (exact)\n"
        f"expected length: {report.expected_length:.1f} turns\n"
        f"std deviation:   {report.length_std_dev:.1f} turns\n\n"
        + _table(header, [(s, f"{p:.3f}", f"{w:+.2f}") for s, p, w in seats])
    )
    csv_text = _csv(
        ["players", "variant", "expected_length", "length_std_dev", *header],
        [(args.players, variant.name, repr(report.expected_length), repr(report.length_std_dev), s, repr(p), repr(w))
         for s, p, w in seats],
    )
    return _envelope("analyze", params, results), text, csv_text


def _sim_results(report, stake):
    return {
        "games": report.games,
        "mean_length": report.mean_length,
        "length_sample_std": report.length_sample_std,
        "length_mc_error": report.length_mc_error,
        "wins": list(report.wins),
        "win_proportion": list(report.win_proportion),
        "win_proportion_se": list(report.win_proportion_se),
        "expected_winnings": list(expected_winnings(report, stake)),
    }


def cmd_simulate(args):
    _check_players(args.players)
    if args.games < 1:
        raise UsageError("--games must be at least 1")
    variant = _variant(args)
    config = SimConfig(args.players, args.games, args.seed, variant, args.chunk_size, args.chips_turns)
    report = run_simulation(config)
    params = {
        "players": args.players,
        "games": args.games,
        "seed": args.seed,
        "variant": variant.name,
        "chunk_size": args.chunk_size,
        "chips_turns": args.chips_turns,
        "stake": args.stake,
    }
    results = _sim_results(report, args.stake)
    if report.chips_by_turn is not None:
        results["chips_by_turn"] = report.chips_by_turn.tolist()
    header = ["seat", "wins", "win_proportion", "two_se"]
    rows = list(zip(range(1, args.players + 1), report.wins, report.win_proportion, report.win_proportion_se))
    text = (
        f"{args.players} players, {variant.name} start, {args.games} games, seed {args.seed}\n"
        f"mean length: {report.mean_length:.5f} +/- {2 * report.length_mc_error:.5f} (2 sigma_R)\n"
        f"sample std:  {report.length_sample_std:.5f}\n\n"
        + _table(header, [(s, w, f"{p:.5f}", f"{2 * se:.6f}") for s, w, p, se in rows])
    )
    csv_text = _csv(
        ["players", "games", "seed", "variant", "mean_length", "length_sample_std", "length_mc_error", *header],
        [(args.players, args.games, args.seed, variant.name, repr(report.mean_length), repr(report.length_sample_std),
          repr(report.length_mc_error), s, w, repr(p), repr(2 * se)) for s, w, p, se in rows],
    )
    return _envelope("simulate", params, results), text, csv_text


def cmd_count_states(args):
    _check_players(args.players)
    total = count_states(args.players)
    envelope = _envelope("count-states", {"players": args.players}, {"states": total})
    return envelope, f"{total:,}\n", _csv(["players", "states"], [(args.players, total)])


def cmd_roll_dist(args):
    if not 0 <= args.dice <= 3:
        raise UsageError(f"--dice must be in 0..3, got {args.dice}")
    outcomes = roll_distribution(args.dice)
    rows = [(o.l, o.c, o.r, str(o.probability), float(o.probability)) for o in outcomes]
    results = {
        "outcomes": [{"l": l, "c": c, "r": r, "fraction": f, "probability": p} for l, c, r, f, p in rows],
        "count": len(rows),
    }
    header = ["l", "c", "r", "fraction", "probability"]
    text = _table(header, [(l, c, r, f, f"{p:.6f}") for l, c, r, f, p in rows]) + f"\n{len(rows)} outcomes\n"
    csv_text = _csv(header, [(l, c, r, f, repr(p)) for l, c, r, f, p in rows])
    return _envelope("roll-dist", {"dice": args.dice}, results), text, csv_text


def _chips_table(args):
    variant = _variant(args)
    mode = args.mode
    if mode == "auto":
        mode = "exact" if args.players <= _exact_cap(args) else "simulate"
    if mode == "exact":
        _check_players(args.players, _exact_cap(args))
        system = build_transition_system(args.players, max_players=_exact_cap(args))
        return mode, expected_chips_exact(system, variant, args.turns)
    _check_players(args.players)
    config = SimConfig(args.players, args.games, args.seed, variant)
    return mode, chips_trajectory(config, args.turns)


def cmd_chips(args):
    _check_players(args.players)
    if args.turns < 1:
        raise UsageError("--turns must be at least 1")
    mode, table = _chips_table(args)
    n = args.players
    params = {"players": n, "turns": args.turns, "variant": _variant(args).name, "mode": mode}
    if mode == "simulate":
        params.update(games=args.games, seed=args.seed)
    header = ["turn", *(f"seat_{k}" for k in range(1, n + 1)), "center"]
    rows = [(j, *row) for j, row in enumerate(table.tolist(), start=1)]
    results = {"columns": header, "rows": [list(r) for r in rows]}
    text = _table(header, [(j, *(f"{x:.2f}" for x in row)) for j, *row in rows])
    csv_text = _csv(header, [(j, *(repr(x) for x in row)) for j, *row in rows])
    return _envelope("chips", params, results), text, csv_text


def cmd_sweep(args):
    if args.players_min < 2 or args.players_max < args.players_min:
        raise UsageError("need 2 <= --players-min <= --players-max")
    cap = _exact_cap(args)
    if args.mode == "exact" and args.players_max > cap:
        raise UsageError(f"exact sweep is capped at {cap} players; pass --force to go beyond")
    variant = _variant(args)
    records = []
    for n in range(args.players_min, args.players_max + 1):
        exact = args.mode == "exact" or (args.mode == "auto" and n <= cap)
        if exact:
            rep = analyze(n, variant, max_players=cap)
            records.append({
                "players": n,
                "source": "exact",
                "expected_length": rep.expected_length,
                "length_std_dev": rep.length_std_dev,
                "length_error": 0.0,
                "win_probability": list(rep.win_probability),
                "error_bar": [0.0] * n,
            })
        else:
            rep = run_simulation(SimConfig(n, args.games, args.seed, variant))
            records.append({
                "players": n,
                "source": "simulate",
                "expected_length": rep.mean_length,
                "length_std_dev": rep.length_sample_std,
                "length_error": 2 * rep.length_mc_error,
                "win_probability": list(rep.win_proportion),
                "error_bar": [2 * se for se in rep.win_proportion_se],
            })
    params = {
        "players_min": args.players_min,
        "players_max": args.players_max,
        "mode": args.mode,
        "games": args.games,
        "seed": args.seed,
        "variant": variant.name,
    }
    header = ["players", "source", "expected_length", "length_std_dev", "length_error", "seat", "win_probability",
              "error_bar"]
    flat = [
        (r["players"], r["source"], r["expected_length"], r["length_std_dev"], r["length_error"], k, p, e)
        for r in records
        for k, (p, e) in enumerate(zip(r["win_probability"], r["error_bar"]), start=1)
    ]
    lines = []
    for r in records:
        probs = " ".join(f"{p:.3f}" for p in r["win_probability"])
        lines.append(f"n={r['players']:<3} {r['source']:<8} length {r['expected_length']:.1f} "
                     f"(sd {r['length_std_dev']:.1f})  wins {probs}")
    csv_text = _csv(header, [(a, b, repr(c), repr(d), repr(e), k, repr(p), repr(x)) for a, b, c, d, e, k, p, x in flat])
    return _envelope("sweep", params, {"records": records}), "\n".join(lines) + "\n", csv_text


# -- parser -------------------------------------------------------------------


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcr", description="Exact and simulated analysis of Left, Center, Right.")
    parser.add_argument("--version", action="version", version=f"lcr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--format", choices=["table", "json", "csv"], default="table")
        p.set_defaults(func=func, parser=p)
        return p

    p = command("analyze", cmd_analyze, "exact expected length and win probabilities")
    p.add_argument("--players", type=int, required=True)
    p.add_argument("--modified-start", action="store_true")
    p.add_argument("--stake", type=float, default=30.0)
    p.add_argument("--force", action="store_true", help="lift the exact-analysis player cap")

    p = command("simulate", cmd_simulate, "Monte Carlo estimates with error bars")
    p.add_argument("--players", type=int, required=True)
    p.add_argument("--games", type=int, default=DEFAULT_GAMES)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--modified-start", action="store_true")
    p.add_argument("--chips-turns", type=int, default=None)
    p.add_argument("--chunk-size", type=int, default=65_536)
    p.add_argument("--stake", type=float, default=30.0)

    p = command("count-states", cmd_count_states, "size of the state graph")
    p.add_argument("--players", type=int, required=True)

    p = command("roll-dist", cmd_roll_dist, "roll outcome probabilities")
    p.add_argument("--dice", type=int, required=True)

    p = command("chips", cmd_chips, "expected chips per seat at the start of each turn")
    p.add_argument("--players", type=int, required=True)
    p.add_argument("--turns", type=int, default=10)
    p.add_argument("--modified-start", action="store_true")
    p.add_argument("--mode", choices=["auto", "exact", "simulate"], default="auto")
    p.add_argument("--games", type=int, default=DEFAULT_GAMES)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--force", action="store_true")

    p = command("sweep", cmd_sweep, "win probabilities over a range of player counts")
    p.add_argument("--players-min", type=int, required=True)
    p.add_argument("--players-max", type=int, required=True)
    p.add_argument("--mode", choices=["auto", "exact", "simulate"], default="auto")
    p.add_argument("--games", type=int, default=DEFAULT_GAMES)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--modified-start", action="store_true")
    p.add_argument("--force", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        envelope, text, csv_text = args.func(args)
    except UsageError as exc:
        args.parser.error(str(exc))
    except (SolverError, SimulationDefect, MemoryError) as exc:
        print(f"lcr: computation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if args.format == "json":
        sys.stdout.write(json.dumps(envelope, indent=2, default=_jsonable) + "\n")
    elif args.format == "csv":
        sys.stdout.write(csv_text)
    else:
        sys.stdout.write(text)
    return 0


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
