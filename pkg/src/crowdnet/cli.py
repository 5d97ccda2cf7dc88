"""Command-line interface: ``crowdnet simulate|sweep|analyze|predict``.

Exit status is 0 on success, 1 for invalid input and 2 for anything else.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import heuristic, pipeline, simlab
from .errors import ValidationError

EXIT_OK, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2


class _ArgumentError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; usage errors are validation errors here
    def error(self, message):
        raise _ArgumentError(f"{self.prog}: {message}")


def _add_spec_args(p):
    p.add_argument("--condition", choices=simlab.CONDITIONS, default="discussion")
    p.add_argument("--n", type=int, default=20, help="group size")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--dist", default=None, help="estimate distribution, e.g. lognormal:4.605,1 (default: log-mean at truth, sd 1)")
    p.add_argument("--truth", type=float, default=100.0)
    p.add_argument("--rho", type=float, default=0.0, help="stubbornness/error rank correlation (delphi)")
    p.add_argument("--self-weight", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=4, help="revision rounds (delphi)")
    p.add_argument("--network", choices=("talkativeness", "star"), default="talkativeness",
                   help="discussion influence model")
    p.add_argument("--talk-dist", default="lognormal:0,1", help="talkativeness distribution (discussion)")
    p.add_argument("--phi-target", type=float, default=None)
    p.add_argument("--jitter", type=float, default=0.0, help="sd of per-trial location shift of estimates")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dataset-id", default="sim")


def _spec_from_args(a) -> simlab.TrialSpec:
    dist = (simlab.Distribution.parse(a.dist) if a.dist
            else simlab.Distribution.lognormal(math.log(a.truth) if a.truth > 0 else 0.0, 1.0))
    return simlab.TrialSpec(
        group_size=a.n,
        condition=a.condition,
        estimate_distribution=dist,
        truth=a.truth,
        rounds=a.rounds,
        stubbornness_error_rho=a.rho,
        talkativeness_distribution=simlab.Distribution.parse(a.talk_dist),
        self_weight=a.self_weight,
        seed=a.seed,
        discussion_network=a.network,
        phi_target=a.phi_target,
        location_jitter=a.jitter,
    )


def _emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_simulate(a) -> int:
    spec = _spec_from_args(a)
    report = simlab.run_ensemble(spec, a.trials, a.seed, a.workers)
    if a.out in (None, "-"):
        pipeline.write_csv(report.records, sys.stdout, a.dataset_id)
    else:
        pipeline.write_csv(report.records, a.out, a.dataset_id)
    if a.json:
        _emit(pipeline.report_json(report.to_json()), a.json)
    return EXIT_OK


def cmd_sweep(a) -> int:
    spec = _spec_from_args(a)
    try:
        levels = [float(v) for v in a.levels.split(",") if v.strip()]
    except ValueError:
        raise _ArgumentError(f"--levels must be comma-separated numbers, got {a.levels!r}") from None
    reports = simlab.sweep(spec, a.axis, levels, a.trials, a.seed, a.workers)
    rows = simlab.sweep_table(reports, a.axis, levels)
    if a.format == "json":
        _emit(pipeline.report_json({"rows": rows}), a.out)
        return EXIT_OK
    target = sys.stdout if a.out in (None, "-") else open(a.out, "w", newline="", encoding="utf-8")
    try:
        writer = csv.DictWriter(target, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if target is not sys.stdout:
            target.close()
    return EXIT_OK


def cmd_analyze(a) -> int:
    try:
        ds = pipeline.load_csv(sys.stdin if a.input == "-" else a.input)
    except (FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        raise _ArgumentError(f"cannot read {a.input}: {exc}") from None
    report = pipeline.analyze(ds, a.clusters, a.fixed_effects)
    _emit(pipeline.report_json(report), a.out)
    return EXIT_OK


def _read_estimates(text: str) -> np.ndarray:
    path = Path(text)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    values = []
    for token in text.replace("\n", ",").split(","):
        token = token.strip()
        if not token:
            continue
        try:
            values.append(float(token))
        except ValueError:
            raise _ArgumentError(f"cannot parse estimate {token!r}") from None
    if not values:
        raise _ArgumentError("no estimates given")
    return np.array(values)


def cmd_predict(a) -> int:
    x = _read_estimates(a.estimates)
    summary = heuristic.phi(x, a.truth)
    out = {
        "n": int(x.shape[0]),
        "mean": float(x.mean()),
        "phi": summary.phi,
        "label": summary.label.value,
        "degenerate": summary.degenerate,
        "phi_rule": heuristic.phi_rule(summary).value,
    }
    if a.high_index is not None:
        if not 0 <= a.high_index < x.shape[0]:
            raise _ArgumentError(f"--high-index must be in [0, {x.shape[0] - 1}]")
        influence = a.influence if a.influence is not None else 1.0 / x.shape[0]
        g = heuristic.ReducedGroup.from_estimates(x, a.high_index, influence, a.truth)
        crit = heuristic.critical_c(g)
        out["reduced_model"] = {
            "high_estimate": g.high_estimate,
            "low_mean": g.low_mean,
            "hub_toward_truth": g.hub_toward_truth,
            "critical_c": crit.value,
            "critical_c_unclamped": crit.unclamped,
        }
        if a.influence is not None:
            out["reduced_model"]["influence"] = g.influence
            out["reduced_model"]["mu_post"] = g.mu_post
            out["reduced_model"]["prediction"] = heuristic.predict_outcome(g).value
    sys.stdout.write(pipeline.report_json(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crowdnet", description="Group estimation under social influence: simulate, analyze, predict.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run an ensemble and write long-format CSV")
    _add_spec_args(p)
    p.add_argument("--out", default="-", help="CSV path (default stdout)")
    p.add_argument("--json", default=None, help="also write an ensemble summary JSON here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="one ensemble per level of a parameter")
    _add_spec_args(p)
    p.add_argument("--axis", choices=simlab.SWEEP_AXES, required=True)
    p.add_argument("--levels", required=True, help="comma-separated levels")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="aggregate report from a trial CSV")
    p.add_argument("--in", dest="input", required=True, help="CSV path or - for stdin")
    p.add_argument("--out", default="-", help="JSON path (default stdout)")
    p.add_argument("--clusters", choices=("auto", "group", "none"), default="auto")
    p.add_argument("--fixed-effects", choices=("none", "task"), default="none")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("predict", help="phi and reduced-model prediction for one set of estimates")
    p.add_argument("--estimates", required=True, help="comma-separated values or a file of them")
    p.add_argument("--truth", type=float, required=True)
    p.add_argument("--high-index", type=int, default=None, help="index of the influential member")
    p.add_argument("--influence", type=float, default=None, help="its centrality C")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
