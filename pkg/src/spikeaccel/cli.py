"""Command line front end.

    spikeaccel run --spec desk --mode cycle --report out.json
    spikeaccel metrics --area-mm2 0.844 --power-mw 416.1
    spikeaccel compare --report out.json

Set SPIKEACCEL_LOG=debug|info|... to see progress logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources

from . import harness
from .errors import SimError
from .network import load_network_spec, network_from_json
from .pe import ArithmeticTrace
from .tensors import ByteImage, load_tensor

BUNDLED = {
    "desk": "desk.json",
    "full": "spikformer-v2-8-512.json",
    "spikformer-v2-8-512": "spikformer-v2-8-512.json",
}


def _setup_logging() -> None:
    level = os.environ.get("SPIKEACCEL_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_spec(name: str):
    if name in BUNDLED:
        text = (resources.files("spikeaccel") / "specs" / BUNDLED[name]).read_text()
        return network_from_json(json.loads(text))
    return load_network_spec(name)


def _load_image(arg: str, spec) -> ByteImage | None:
    if arg == "random":
        return None  # run() synthesizes one from the seed
    tensor = load_tensor(arg)
    if not isinstance(tensor, ByteImage):
        raise SimError(f"{arg} does not hold an 8-bit image")
    return tensor


def _cmd_run(args: argparse.Namespace) -> int:
    spec = _load_spec(args.spec)
    image = None
    if args.mode != harness.MODE_SHAPE:
        image = _load_image(args.image, spec)
    trace = ArithmeticTrace() if args.trace else None
    dump: list[str] | None = [] if args.dump_schedule else None
    report = harness.run(
        spec,
        image=image,
        mode=args.mode,
        seed=args.seed,
        clock_mhz=args.clock_mhz,
        area_mm2=args.area_mm2,
        power_mw=args.power_mw,
        trace=trace,
        dump=dump,
    )
    text = harness.render_report(report)
    if args.report:
        with open(args.report, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    if trace is not None:
        trace.write(args.trace)
    if dump is not None:
        with open(args.dump_schedule, "w") as f:
            f.write("\n".join(dump) + "\n")
    eq = report.get("equivalence")
    if eq is not None and not (
        eq["logits_match"] and eq["layers_match"] and eq["counters_match"]
    ):
        print("equivalence FAILED", file=sys.stderr)
        return 1
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    metrics = harness.efficiency_metrics(
        num_pes=args.pes,
        clock_mhz=args.clock_mhz,
        area_mm2=args.area_mm2,
        power_mw=args.power_mw,
    )
    sys.stdout.write(json.dumps(metrics, indent=2) + "\n")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    with open(args.report) as f:
        report = json.load(f)
    shares = harness.report_shares(report)
    verdict = harness.compare_distribution(shares, tolerance_pp=args.tolerance_pp)
    sys.stdout.write(json.dumps(verdict, indent=2) + "\n")
    print(verdict["mandatory"], verdict["tight"])
    if verdict["mandatory"] != "PASS-ORDER":
        return 1
    if args.strict and verdict["tight"] != "PASS-TIGHT":
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikeaccel",
        description="Quantized spiking transformer on a 512x8 PE array: "
                    "functional golden model and cycle-level simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a network")
    p_run.add_argument("--spec", default="desk",
                       help="bundled name (desk, full) or a network JSON path")
    p_run.add_argument("--mode", default=harness.MODE_CYCLE,
                       choices=harness.MODES)
    p_run.add_argument("--image", default="random",
                       help="input image tensor file, or 'random'")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--clock-mhz", type=float,
                       default=harness.REFERENCE_CLOCK_MHZ)
    p_run.add_argument("--area-mm2", type=float,
                       help="silicon area for efficiency arithmetic")
    p_run.add_argument("--power-mw", type=float,
                       help="power draw for efficiency arithmetic")
    p_run.add_argument("--report", help="write the JSON report here")
    p_run.add_argument("--trace", help="write a PE arithmetic trace here")
    p_run.add_argument("--dump-schedule",
                       help="write one line per scheduled cycle here")
    p_run.set_defaults(func=_cmd_run)

    p_met = sub.add_parser("metrics", help="peak efficiency arithmetic")
    p_met.add_argument("--pes", type=int, default=4096)
    p_met.add_argument("--clock-mhz", type=float,
                       default=harness.REFERENCE_CLOCK_MHZ)
    p_met.add_argument("--area-mm2", type=float)
    p_met.add_argument("--power-mw", type=float)
    p_met.set_defaults(func=_cmd_metrics)

    p_cmp = sub.add_parser("compare",
                           help="judge a report's cycle distribution")
    p_cmp.add_argument("--report", required=True)
    p_cmp.add_argument("--reference", default="reported", choices=["reported"],
                       help="reference distribution to compare against")
    p_cmp.add_argument("--tolerance-pp", type=float, default=5.0)
    p_cmp.add_argument("--strict", action="store_true",
                       help="fail when the tight tolerance is missed")
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SimError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
