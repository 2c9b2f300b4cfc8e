"""Command-line front end.

Subcommands: verify (bound report per property), repair point / repair
region, eval (accuracy + property metrics), synth-box (debug trajectory
of proxy-box synthesis as CSV). Exit codes: 0 success or Repaired, 1
Failed or unverified, 2 usage or input-parse errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bounds import BoundMode, linear_lower_bounds
from .preimage import synthesize_proxy_box
from .repair import RepairConfig, point_wise_repair, region_wise_repair
from .specio import (
    NNetParseError,
    PropertySpecError,
    eval_metrics,
    load_dataset,
    load_model,
    parse_properties,
    save_network,
)

__all__ = ["main"]


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--radius", type=float, default=0.1, help="proxy box radius")
    parser.add_argument("--box-iters", type=int, default=100, help="max synthesis shifts")
    parser.add_argument("--repair-iters", type=int, default=1000, help="max optimizer steps")
    parser.add_argument("--budget", type=int, default=10000, help="max live sub-properties")
    parser.add_argument("--split", type=int, default=None, help="feature/head split index")
    parser.add_argument(
        "--bounds-mode", choices=["backward", "ibp"], default="backward",
        help="intermediate bound propagation mode",
    )
    parser.add_argument("--lr", type=float, default=1e-2, help="Adam learning rate")
    parser.add_argument(
        "--seed", type=int, default=None,
        help="record a seed and emit a byte-deterministic report (timing omitted)",
    )
    parser.add_argument("--report", type=Path, default=None, help="write a JSON report here")
    parser.add_argument("--out", type=Path, default=None, help="save the repaired model here")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxrepair",
        description="Provable repair of dense classifiers via certified feature-space boxes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="bound report per property")
    p_verify.add_argument("net")
    p_verify.add_argument("props")
    _add_common_flags(p_verify)

    p_repair = sub.add_parser("repair", help="repair a model against properties")
    mode = p_repair.add_subparsers(dest="mode", required=True)
    for name in ("point", "region"):
        p = mode.add_parser(name)
        p.add_argument("net")
        p.add_argument("props")
        _add_common_flags(p)

    p_eval = sub.add_parser("eval", help="accuracy and property metrics")
    p_eval.add_argument("net")
    p_eval.add_argument("test")
    p_eval.add_argument("props", nargs="?", default=None)
    _add_common_flags(p_eval)

    p_synth = sub.add_parser("synth-box", help="emit a synthesis trajectory as CSV")
    p_synth.add_argument("net")
    p_synth.add_argument("point", help="comma-separated input coordinates")
    p_synth.add_argument("props")
    _add_common_flags(p_synth)
    return parser


def _config(args) -> RepairConfig:
    return RepairConfig(
        radius=args.radius,
        box_iters=args.box_iters,
        repair_iters=args.repair_iters,
        budget=args.budget,
        lr=args.lr,
        bounds_mode=BoundMode.BACKWARD if args.bounds_mode == "backward" else BoundMode.IBP,
    )


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def _write_report(args, payload: dict) -> None:
    if args.report is None:
        return
    payload = _jsonable(payload)
    if args.seed is not None:
        payload["seed"] = args.seed
        payload = _strip_timing(payload)
    args.report.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _strip_timing(value):
    if isinstance(value, dict):
        return {
            k: _strip_timing(v) for k, v in value.items() if not k.startswith("wall_time")
        }
    if isinstance(value, list):
        return [_strip_timing(v) for v in value]
    return value


def _cmd_verify(args) -> int:
    net = load_model(args.net, args.split)
    props = parse_properties(args.props, net)
    mode = _config(args).bounds_mode
    all_ok = True
    records = []
    for prop in props:
        report = linear_lower_bounds(net.layers, prop.input, prop.constraints, mode)
        ok = report.all_satisfied
        all_ok &= ok
        worst = float(report.lower_values.min())
        status = "VERIFIED" if ok else f"UNKNOWN ({len(report.violated)} constraints, min lb {worst:.6g})"
        print(f"{prop.label}: {status}")
        records.append(
            {
                "label": prop.label,
                "verified": bool(ok),
                "lower_bounds": report.lower_values,
                "violated": list(report.violated),
            }
        )
    _write_report(args, {"command": "verify", "properties": records, "all_verified": all_ok})
    return 0 if all_ok else 1


def _cmd_repair(args) -> int:
    net = load_model(args.net, args.split)
    props = parse_properties(args.props, net)
    cfg = _config(args)
    if args.mode == "point":
        outcome = point_wise_repair(net, props, cfg)
    else:
        outcome = region_wise_repair(net, props, cfg)
    print(f"status: {outcome.status.value}")
    if not outcome.repaired and "reason" in outcome.stats:
        print(f"reason: {outcome.stats['reason']}")
    if args.out is not None:
        save_network(outcome.network, args.out)
        print(f"model written to {args.out}")
    report = {"command": f"repair-{args.mode}", "status": outcome.status.value}
    report.update(outcome.stats)
    _write_report(args, report)
    return 0 if outcome.repaired else 1


def _cmd_eval(args) -> int:
    net = load_model(args.net, args.split)
    dataset = load_dataset(args.test)
    props = parse_properties(args.props, net) if args.props else ()
    metrics = eval_metrics(net, dataset, props, _config(args))
    for key in ("acc", "psr", "gene"):
        value = metrics[key]
        print(f"{key}: {'n/a' if value is None else f'{value:.4f}'}")
    _write_report(args, {"command": "eval", **metrics})
    return 0


def _cmd_synth_box(args) -> int:
    net = load_model(args.net, args.split)
    props = parse_properties(args.props, net)
    prop = props[0]
    try:
        point = np.array([float(v) for v in args.point.split(",")])
    except ValueError:
        print(f"unparseable point: {args.point!r}", file=sys.stderr)
        return 2
    if point.shape[0] != net.input_dim:
        print(f"point has {point.shape[0]} coordinates, network takes {net.input_dim}",
              file=sys.stderr)
        return 2
    cfg = _config(args)
    start = net.forward_features(point)

    q = len(prop.constraints)
    print("iteration," + ",".join(f"lb_{k}" for k in range(q)) + ","
          + ",".join(f"center_{i}" for i in range(net.feature_dim)))

    def emit(iteration, center, lbs):
        row = [str(iteration)] + [repr(float(v)) for v in lbs] + [repr(float(v)) for v in center]
        print(",".join(row))

    proxy = synthesize_proxy_box(
        net.head_layers, start, prop, cfg.radius, cfg.box_iters, cfg.bounds_mode, on_step=emit
    )
    if proxy is None:
        print("synthesis failed", file=sys.stderr)
        return 1
    print(f"certified center after shifts: {proxy.center.tolist()}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "verify": _cmd_verify,
        "repair": _cmd_repair,
        "eval": _cmd_eval,
        "synth-box": _cmd_synth_box,
    }
    try:
        return handlers[args.command](args)
    except (NNetParseError, PropertySpecError) as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
