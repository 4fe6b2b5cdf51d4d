"""Command-line driver: run, converge-space, converge-time, sweep."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_scenario
from .domain import ConfigurationError, SolvabilityError
from .harness import SWEEP_ALIASES, SWEEPS, converge_space, converge_time, run, sweep
from .linsolve import SolverError
from . import io as dio


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value scenario file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one setting (repeatable)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dropform", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="time-step one scenario")
    _common(p)
    p.add_argument("--restart", type=Path, help="checkpoint to continue from")
    p.add_argument("--steps", type=int, help="number of steps instead of end_time")

    p = sub.add_parser("converge-space", help="grid refinement study")
    _common(p)
    p.add_argument("--levels", type=_floats, default=[1 / 10, 1 / 20, 1 / 40])
    p.add_argument("--reference", type=float, default=1 / 80)
    p.add_argument("--end-time", type=float, default=0.2)
    p.add_argument("--dt", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1.7)

    p = sub.add_parser("converge-time", help="time-step refinement study")
    _common(p)
    p.add_argument("--steps", type=_floats, default=[4e-4, 2e-4, 1e-4, 5e-5])
    p.add_argument("--reference", type=float, default=1e-5)
    p.add_argument("--end-time", type=float, default=0.2)
    p.add_argument("--threshold", type=float, default=0.85)

    p = sub.add_parser("sweep", help="radius against one parameter")
    _common(p)
    p.add_argument("parameter", choices=sorted(set(SWEEPS) | set(SWEEP_ALIASES)))
    p.add_argument("--values", type=_floats, help="comma separated; defaults to the preset list")
    return parser


def _report_payload(report) -> dict:
    return {"levels": list(report.levels), "errors": report.errors, "orders": report.orders,
            "pairwise": report.pairwise, "threshold": report.threshold,
            "passed": report.passed(), "notes": report.notes}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scenario = load_scenario(args.config, args.overrides)
        out: Path = args.out
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "run":
            ckpt = dio.load_checkpoint(args.restart) if args.restart else None
            res = run(scenario, out, checkpoint=ckpt, n_steps=args.steps)
            last = res.records[-1]
            print(f"step {last.step} time {last.time:.6g} E_M {last.E_M:.10g} "
                  f"Rd {res.radius_max:.4f} pinch {res.pinched}")
        elif args.command == "converge-space":
            rep = converge_space(scenario, args.levels, args.reference, args.end_time, args.dt,
                                 args.threshold)
            (out / "converge_space.json").write_text(json.dumps(_report_payload(rep), indent=2))
            print(rep.table())
            return 0 if rep.passed() else 1
        elif args.command == "converge-time":
            rep = converge_time(scenario, args.steps, args.reference, args.end_time, args.threshold)
            (out / "converge_time.json").write_text(json.dumps(_report_payload(rep), indent=2))
            print(rep.table())
            return 0 if rep.passed() else 1
        else:
            name = SWEEP_ALIASES.get(args.parameter, args.parameter)
            values = args.values or list(SWEEPS[name][0])
            table = sweep(name, values, scenario)
            lines = ["value,Rd,pinch_time"]
            lines += [f"{r.value:.17g},{r.radius:.17g},{'' if r.censored else r.pinch_time}"
                      for r in table.rows]
            (out / f"sweep_{name}.csv").write_text("\n".join(lines) + "\n")
            print("\n".join(lines))
            print("verdict", table.verdict())
    except (ConfigurationError, SolvabilityError, SolverError, dio.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
