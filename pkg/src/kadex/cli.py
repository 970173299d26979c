"""Command-line front end.

Exit codes: 0 success, 2 validation failure, 3 runtime failure (including an
unknown observation id for ``explain``), 4 usage error or missing input file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import power as pw
from .cache import CapacityError
from .perception import StreamError
from .sim import (
    ScenarioError, bundled_scenarios, compare, explain, format_comparison, load_scenario,
    read_events, run, validate_scenario,
)
from .skg import GraphError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_USAGE = 4
OUT_ENV = "KADEX_OUT_DIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: usage error: {message}\n")


def _overcast(text: str) -> pw.Overcast:
    try:
        start, days, factor = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:DAYS:FACTOR, got {text!r}") from None
    return pw.Overcast(start, days, factor)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kadex", description="Knowledge-adaptation lifecycle simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="check a scenario and every file it references")
    v.add_argument("scenario", help="scenario file, directory or bundled name")

    r = sub.add_parser("run", help="simulate a scenario and write its outputs")
    r.add_argument("scenario")
    r.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV}/<name>)")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--policy", choices=["adaptive", "fixed_window", "always_on"],
                   help="override the uplink policy")

    g = sub.add_parser("gen-trace", help="write a synthetic diurnal harvest trace")
    g.add_argument("--days", type=int, required=True)
    g.add_argument("--peak", type=float, required=True, help="clear-sky Wh per slot at noon")
    g.add_argument("--slot-minutes", type=int, default=pw.DEFAULT_SLOT_MINUTES)
    g.add_argument("--sunrise", type=float, default=6.0)
    g.add_argument("--sunset", type=float, default=20.0)
    g.add_argument("--overcast", type=_overcast, action="append", default=[],
                   metavar="START:DAYS:FACTOR")
    g.add_argument("--jitter", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True)

    c = sub.add_parser("compare", help="compare two run directories (deltas are B - A)")
    c.add_argument("run_a", type=Path)
    c.add_argument("run_b", type=Path)
    c.add_argument("--out", type=Path, help="write the comparison JSON here")

    e = sub.add_parser("explain", help="print the evidence path of one observation")
    e.add_argument("run_dir", type=Path)
    e.add_argument("obs_id")

    sub.add_parser("list", help="list bundled scenarios")
    return p


def _read_summary(run_dir: Path) -> dict:
    path = run_dir / "summary.json"
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found")
    return json.loads(path.read_text(encoding="utf-8"))


def _cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    for note in validate_scenario(scenario):
        print(f"ok: {note}")
    print(f"PASS {scenario.name}")
    return EXIT_OK


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    if args.policy:
        scenario = scenario.with_policy(args.policy)
    out = args.out
    if out is None:
        out = Path(os.environ.get(OUT_ENV, "kadex-runs")) / scenario.name
    result = run(scenario)
    files = result.write(out)
    m = result.metrics
    print(f"scenario {m['scenario']} policy {m['policy']['kind']} seed {m['seed']}")
    print(f"  LOLP {m['lolp']:.6f}  final soc {m['final_soc']:.3f} Wh")
    print(f"  frames {m['frames_processed']} (routine {m['routine_frames']}, "
          f"insight {m['insight_frames']})  uploaded {m['packets_uploaded']}")
    print(f"  patches {m['patches_applied']}  evictions {m['evictions']}  "
          f"anomalies {m['anomalies']}")
    for path in files.values():
        print(f"  wrote {path}")
    return EXIT_OK


def _cmd_gen_trace(args) -> int:
    gen = pw.TraceGenerator(days=args.days, peak=args.peak, slot_minutes=args.slot_minutes,
                            sunrise_hour=args.sunrise, sunset_hour=args.sunset,
                            overcast=tuple(args.overcast), jitter=args.jitter, seed=args.seed)
    trace = pw.generate_trace(gen)
    pw.write_trace(trace, args.out)
    print(f"wrote {len(trace)} slots to {args.out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    report = compare(_read_summary(args.run_a), _read_summary(args.run_b))
    sys.stdout.write(format_comparison(report))
    if args.out:
        args.out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_explain(args) -> int:
    path = args.run_dir / "events.jsonl"
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found")
    try:
        text = explain(read_events(path), args.obs_id)
    except KeyError:
        print(f"kadex: unknown observation {args.obs_id!r} in {path}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_list(args) -> int:
    for name in bundled_scenarios():
        print(name)
    return EXIT_OK


COMMANDS = {
    "validate": _cmd_validate,
    "run": _cmd_run,
    "gen-trace": _cmd_gen_trace,
    "compare": _cmd_compare,
    "explain": _cmd_explain,
    "list": _cmd_list,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"kadex: missing file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphError, StreamError, ScenarioError, pw.TraceError) as exc:
        print(f"kadex: validation failed: {exc}", file=sys.stderr)
        if args.command == "validate":
            print("FAIL")
        return EXIT_VALIDATION
    except (CapacityError, RuntimeError) as exc:
        print(f"kadex: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
