"""Command-line entry point: ``shield {dist,epsilon,simulate,circuit,pareto}``.

Exit codes: 0 success, 1 usage, 2 validation or parse error, 3 internal.
Every report is JSON with ``"schema": 1``; the pareto command also writes
CSV tables and PNG figures into ``--out-dir``.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import math
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .circuit import DEFAULT_SLOTS, CapacityError, circuit_cost, run_circuit
from .core import FAIL, PolyParam, ShieldError, ValidationError, format_poly, parse_poly
from .distribution import (exact_argmax_accuracy, exact_argmax_distribution, gta,
                           mean_metrics_from_histograms, output_distribution)
from .explorer import (DEFAULT_MAX_DEGREE, DEFAULT_QUERIES, DEFAULT_SUMS, SpaceReport,
                       enumerate_polys, evaluate_space)
from .io import SCHEMA, atomic_write, dumps, read_truth, read_votes
from .privacy import DEFAULT_DELTA, MODES, account, exact_argmax_privacy
from .simulator import monte_carlo, run_shield

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which we reserve
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _delta(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"delta must lie in (0, 1), got {text}")
    return value


def _sums(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("coefficient sums must be positive")
    return values


def _poly_or_argmax(text: str) -> PolyParam | None:
    return None if text.strip().lower() == "argmax" else parse_poly(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="shield", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, poly_required=True):
        sp.add_argument("votes", help="vote CSV (sample_id,teacher_id,class) or histogram JSON")
        if poly_required:
            sp.add_argument("--poly", required=True, help='polynomial such as "2X^3+3X^2+X"')
        sp.add_argument("--offset", type=_nonneg_int, default=None,
                        help="dummy votes per class (default: from the file, else 1)")
        sp.add_argument("--classes", type=_positive_int, default=None,
                        help="number of classes for integer CSV labels (default: max label)")
        sp.add_argument("--out", default=None, help="write the JSON report here instead of stdout")

    sp = sub.add_parser("dist", help="exact output distribution per sample")
    common(sp)
    sp.add_argument("--truth", default=None, help="ground-truth CSV sample_id,class")
    sp.add_argument("--include-dummies", action="store_true",
                    help="weight GTA by augmented rather than real vote frequencies")

    sp = sub.add_parser("epsilon", help="moments-accountant privacy report")
    common(sp)
    sp.add_argument("--delta", type=_delta, default=DEFAULT_DELTA)
    sp.add_argument("--queries", type=_positive_int, default=None,
                    help="number of released queries (default: every sample)")
    sp.add_argument("--mode", choices=MODES, default="canonical")
    sp.add_argument("--orders", type=_positive_int, default=32, help="moment orders 1..N")
    sp.add_argument("--float", dest="exact", action="store_false",
                    help="float64 moments instead of exact rationals")

    sp = sub.add_parser("simulate", help="seeded runs and Monte Carlo frequencies")
    common(sp)
    sp.add_argument("--trials", type=_positive_int, default=100_000)
    sp.add_argument("--seed", type=_nonneg_int, default=0)

    sp = sub.add_parser("circuit", help="packed circuit evaluation and cost report")
    common(sp)
    sp.add_argument("--seed", type=_nonneg_int, default=0)
    sp.add_argument("--slots", type=_positive_int, default=DEFAULT_SLOTS)
    sp.add_argument("--pack-rounds", action=argparse.BooleanOptionalAction, default=True)
    sp.add_argument("--check", action="store_true",
                    help="fail unless the circuit matches the reference simulator")

    sp = sub.add_parser("pareto", help="sweep polynomial spaces and write Pareto fronts")
    common(sp, poly_required=False)
    sp.add_argument("--max-degree", type=_positive_int, default=DEFAULT_MAX_DEGREE)
    sp.add_argument("--max-sum", type=_sums, default=DEFAULT_SUMS,
                    help="comma-separated coefficient-sum bounds")
    sp.add_argument("--require-a1", action="store_true", help="only polynomials with a_1 = 1")
    sp.add_argument("--delta", type=_delta, default=DEFAULT_DELTA)
    sp.add_argument("--queries", type=_positive_int, default=DEFAULT_QUERIES)
    sp.add_argument("--mode", choices=MODES, default="compat")
    sp.add_argument("--orders", type=_positive_int, default=32)
    sp.add_argument("--exact", action="store_true", help="rational pipeline (slow)")
    sp.add_argument("--slots", type=_positive_int, default=DEFAULT_SLOTS)
    sp.add_argument("--out-dir", default="pareto_out")
    sp.add_argument("--no-figures", action="store_true")
    return p


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _eps_fields(name: str, value: float | None) -> dict:
    if value is None:
        return {name: None}
    return {name: value if math.isfinite(value) else None,
            f"{name}_infinite": not math.isfinite(value)}


def _dist_json(d) -> dict:
    return {"probs": list(d.probs), "fail": d.fail}


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(out, text)


def _header(args, command: str, votes, hists, **extra) -> dict:
    return {"schema": SCHEMA, "command": command, "input": Path(args.votes).name,
            "num_samples": len(hists), "num_classes": hists[0].num_classes,
            "num_teachers": hists[0].n_real, "offset": hists[0].offset, **extra}


def _load(args):
    votes = read_votes(args.votes, args.classes)
    hists = votes.hists(args.offset)
    if args.offset is None and votes.file_offset is None:
        args.offset = 1
    elif args.offset is None:
        args.offset = votes.file_offset
    return votes, hists


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_dist(args) -> int:
    poly = _poly_or_argmax(args.poly)
    votes, hists = _load(args)
    truth = read_truth(args.truth, votes) if args.truth else None
    samples = []
    for sid, h in zip(votes.sample_ids, hists):
        d = exact_argmax_distribution(h) if poly is None else output_distribution(h, poly)
        samples.append({"sample_id": sid, "counts": list(h.counts), **_dist_json(d),
                        "gta": gta(h, poly, args.include_dummies),
                        "exact_argmax_accuracy": exact_argmax_accuracy(h, poly)})
    mean = mean_metrics_from_histograms(hists, poly, truth, args.include_dummies)
    report = _header(args, "dist", votes, hists,
                     poly="argmax" if poly is None else format_poly(poly),
                     classes=votes.class_names, include_dummies=args.include_dummies,
                     mean={"gta": mean.gta, "gta_float": float(mean.gta),
                           "exact_argmax_accuracy": mean.exact_argmax_accuracy,
                           "fail": mean.fail,
                           "expected_correct": mean.expected_correct},
                     samples=samples)
    _emit(dumps(report), args.out)
    return EXIT_OK


def cmd_epsilon(args) -> int:
    poly = _poly_or_argmax(args.poly)
    votes, hists = _load(args)
    if args.mode != "compat" and args.queries is not None and args.queries > len(hists):
        raise ValidationError(f"--queries {args.queries} exceeds the {len(hists)} samples "
                              f"(only compat mode rescales)")
    orders = tuple(range(1, args.orders + 1))
    if poly is not None and not args.exact and min(h.offset for h in hists) == 0:
        args.exact = True  # the float path clips ratios; zero offsets need exact supports
    acct = account(hists, poly, args.delta, args.queries, args.mode, orders, args.exact)
    report = _header(args, "epsilon", votes, hists,
                     poly="argmax" if poly is None else format_poly(poly),
                     mode=args.mode, delta=args.delta, queries=acct.queries,
                     exact=args.exact, orders=list(orders),
                     composed_alpha=[{"order": l, "alpha": a,
                                      "alpha_infinite": not math.isfinite(a)}
                                     for l, a in zip(orders, acct.composed)],
                     best_order=acct.best_order,
                     **_eps_fields("epsilon", acct.epsilon))
    if args.mode == "compat":
        report.update(_eps_fields("compat_mean_epsilon_times_queries", acct.compat_mean_epsilon))
        report.update(_eps_fields("compat_mean_alpha_epsilon", acct.compat_mean_alpha))
    if poly is None:
        report["exact_argmax"] = [
            {"sample_id": sid, **_eps_fields("epsilon", e.epsilon),
             "highly_dominant": e.highly_dominant, "margin": e.margin, "tie": e.tie}
            for sid, e in zip(votes.sample_ids, map(exact_argmax_privacy, hists))]
    _emit(dumps(report), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    poly = parse_poly(args.poly)
    votes, hists = _load(args)
    try:
        matrix = votes.as_matrix()
    except ValidationError:
        matrix = None
    samples = []
    for i, (sid, h) in enumerate(zip(votes.sample_ids, hists)):
        mc = monte_carlo(h, poly, trials=args.trials, seed=args.seed, sample=i)
        exact = output_distribution(h, poly)
        z = [abs(p - float(q)) / s if s > 0 else 0.0
             for p, q, s in zip(mc.probs, exact.probs, mc.sigma)]
        entry = {"sample_id": sid, "counts": list(h.counts),
                 "mc_probs": [float(x) for x in mc.probs], "mc_fail": mc.fail,
                 "exact_probs": [float(x) for x in exact.probs],
                 "exact_fail": float(exact.fail),
                 "max_z": max(z)}
        if matrix is not None:
            out = run_shield(matrix, i, poly, args.offset, args.seed)
            entry["outcome"] = None if out is FAIL else votes.class_names[out - 1]
        samples.append(entry)
    report = _header(args, "simulate", votes, hists, poly=format_poly(poly),
                     seed=args.seed, trials=args.trials, samples=samples)
    _emit(dumps(report), args.out)
    return EXIT_OK


def cmd_circuit(args) -> int:
    poly = parse_poly(args.poly)
    votes, hists = _load(args)
    m = votes.as_matrix()
    result = run_circuit(m, poly, args.offset, args.seed, args.slots, args.pack_rounds)
    report = _header(args, "circuit", votes, hists, poly=format_poly(poly), seed=args.seed,
                     pack_rounds=args.pack_rounds, cost=result.cost.as_dict())
    mismatches = []
    if args.check:
        predicted = circuit_cost(poly, m.num_teachers, m.num_classes, m.num_samples,
                                 args.offset, args.slots, args.pack_rounds)
        if predicted.as_dict() != result.cost.as_dict():
            raise AssertionError("closed-form cost disagrees with the evaluated circuit")
        for i, got in enumerate(result.outcomes):
            want = run_shield(m, i, poly, args.offset, args.seed)
            if got != want:
                mismatches.append(votes.sample_ids[i])
        report["check"] = {"simulator_agrees": not mismatches, "mismatches": mismatches}
    report["samples"] = [{"sample_id": sid,
                          "outcome": None if o is FAIL else votes.class_names[o - 1]}
                         for sid, o in zip(votes.sample_ids, result.outcomes)]
    _emit(dumps(report), args.out)
    if mismatches:
        raise AssertionError(f"circuit and simulator disagree on {len(mismatches)} samples")
    return EXIT_OK


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ("inf" if x > 0 else "-inf")
    return str(x)


SPACE_COLUMNS = ("poly", "gta", "epsilon", "fail_prob", "exact_argmax_accuracy",
                 "epsilon_canonical", "epsilon_mean_alpha", "depth", "ct_ct_mults",
                 "rotations", "on_front")


def space_csv(report: SpaceReport) -> str:
    front = {r.label for r in report.front}
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SPACE_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(v) for v in (r.label, r.gta, r.epsilon, r.fail,
                                      r.exact_argmax_accuracy, r.epsilon_canonical,
                                      r.epsilon_mean_alpha, r.depth, r.ct_ct_mults,
                                      r.rotations, int(r.label in front))])
    return buf.getvalue()


def _row_json(r) -> dict:
    return {"poly": r.label, "gta": r.gta, **_eps_fields("epsilon", r.epsilon),
            "fail_prob": r.fail, "depth": r.depth, "ct_ct_mults": r.ct_ct_mults,
            "rotations": r.rotations}


def cmd_pareto(args) -> int:
    votes, hists = _load(args)
    if args.mode != "compat" and args.queries > len(hists):
        raise ValidationError(f"--queries {args.queries} exceeds the {len(hists)} samples "
                              f"(only compat mode rescales)")
    spaces = {}
    for bound in sorted(set(args.max_sum)):
        polys = enumerate_polys(args.max_degree, bound, args.require_a1)
        if not polys:
            raise ValidationError(f"empty polynomial space for max-sum {bound}")
        spaces[bound] = polys
    orders = tuple(range(1, args.orders + 1))
    reports = {b: evaluate_space(hists, polys, None, args.delta, args.queries, args.mode,
                                 orders, args.exact, args.slots)
               for b, polys in spaces.items()}

    files: dict[str, str | bytes] = {}
    for bound, rep in reports.items():
        files[f"space_S{bound}.csv"] = space_csv(rep)
        files[f"pareto_S{bound}.json"] = dumps({
            "schema": SCHEMA, "max_degree": args.max_degree, "max_sum": bound,
            "require_a1": args.require_a1, "mode": rep.mode, "delta": rep.delta,
            "queries": rep.queries, "num_polynomials": len(rep.rows),
            "exact_argmax": _row_json(rep.exact_argmax),
            "front": [_row_json(r) for r in rep.front],
            "excluded_infinite": [r.label for r in rep.excluded_infinite]})
    if not args.no_figures:
        from .plotting import fronts_figure, pareto_figure
        for bound, rep in reports.items():
            files[f"pareto_S{bound}.png"] = pareto_figure(
                rep, f"degree <= {args.max_degree}, coefficient sum <= {bound}")
        files["pareto_fronts.png"] = fronts_figure(reports)
    # everything is computed before the first write, so errors leave no partial output
    out_dir = Path(args.out_dir)
    for name, data in files.items():
        atomic_write(out_dir / name, data)

    summary = _header(args, "pareto", votes, hists, out_dir=str(out_dir),
                      files=sorted(files),
                      spaces=[{"max_sum": b, "num_polynomials": len(r.rows),
                               "front": [x.label for x in r.front]}
                              for b, r in reports.items()])
    _emit(dumps(summary), args.out)
    return EXIT_OK


COMMANDS = {"dist": cmd_dist, "epsilon": cmd_epsilon, "simulate": cmd_simulate,
            "circuit": cmd_circuit, "pareto": cmd_pareto}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (ShieldError, ValidationError, CapacityError) as exc:
        print(f"shield {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(f"shield {args.command}: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
