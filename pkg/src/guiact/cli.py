"""Command-line entry point.

Exit codes: 0 success, 1 domain failure (invalid data, join failure, bad
config), 2 I/O failure. A run manifest goes to stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .action import to_compact_str, validate
from .adapters import FORMATS, UNIFIED_FORMAT, ConversionError, convert
from .evaluator import DEFAULT_TOLERANCE, TEXT_RULE, StepEvaluation, aggregate, evaluate_step
from .grpo import GRPOConfig, TokenSequenceLogProbs, advantage_group, grpo_objective
from .records import (
    RecordError,
    dump_jsonl,
    load_ground_truth,
    parse_screen,
    prediction_from_record,
    read_jsonl,
    step_key,
)
from .reward import score
from .rollout_sim import InvalidConfig, SimConfig, run, run_with_trace

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


class DomainFailure(Exception):
    pass


def _digest(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _manifest(command: str, inputs: List[str], digest: str) -> Dict[str, Any]:
    return {
        "command": command,
        "inputs": inputs,
        "config_digest": digest,
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _screen_arg(value: str):
    try:
        return parse_screen(value)
    except RecordError as e:
        raise argparse.ArgumentTypeError(str(e))


# -- subcommands -----------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    rows = []
    with open(args.path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            rep = validate(line, evaluation=args.evaluation, require_thought=args.require_thought)
            rows.append({"line": n, "verdict": rep.verdict, "detail": rep.detail})
    _emit(dump_jsonl(rows), args.output)
    return EXIT_OK if all(r["verdict"] == "valid" for r in rows) else EXIT_DOMAIN


def _load_predictions(args: argparse.Namespace):
    preds = []
    for n, rec in read_jsonl(args.predictions):
        try:
            preds.append(prediction_from_record(
                rec, format_override=args.format, low_instruction=args.low_instruction,
                screen_override=args.screen))
        except (RecordError, ValueError) as e:
            raise DomainFailure(f"{args.predictions}:{n}: {e}") from None
    return preds


def cmd_convert(args: argparse.Namespace) -> int:
    rows = []
    failed = False
    for p in _load_predictions(args):
        row = dict(p.extra)
        row.update(format=p.raw.format, action=None, dropped=False, reason="")
        try:
            out = convert(p.raw)
        except ConversionError as e:
            failed = True
            row.update(reason=f"{e.kind}: {e}")
        else:
            row.update(dropped=out.dropped, reason=out.reason)
            if out.action is not None:
                row["action"] = to_compact_str(out.action, evaluation=True)
        rows.append(row)
    _emit(dump_jsonl(rows), args.output)
    return EXIT_DOMAIN if failed else EXIT_OK


def _evaluate_one(p, gt, tolerance: float) -> StepEvaluation:
    try:
        outcome = convert(p.raw)
    except ConversionError:
        outcome = None
    return evaluate_step(outcome, gt, tolerance)


def cmd_evaluate(args: argparse.Namespace) -> int:
    gts = load_ground_truth(args.ground_truth)
    preds = _load_predictions(args)
    seen = set()
    orphans = []
    for p in preds:
        if p.key is None:
            raise DomainFailure("evaluate needs episode_id and step_id on every prediction")
        if p.key not in gts:
            orphans.append(p.key)
        elif p.key in seen:
            raise DomainFailure(f"duplicate prediction for {p.key}")
        seen.add(p.key)
    if orphans:
        raise DomainFailure("join_failure: predictions without ground truth: "
                            + ", ".join(f"{e}/{s}" for e, s in orphans))
    by_key = {p.key: p for p in preds}
    evals = []
    missing = 0
    for k, gt in gts.items():
        if k in by_key:
            evals.append(_evaluate_one(by_key[k], gt, args.tolerance))
        else:
            missing += 1
            evals.append(evaluate_step(None, gt, args.tolerance))
    if not evals:
        raise DomainFailure("empty ground-truth file")
    report = aggregate(evals).to_dict()
    report.update(missing_predictions=missing, tolerance=args.tolerance, text_rule=TEXT_RULE)
    _emit(json.dumps(report, sort_keys=True, indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_reward(args: argparse.Namespace) -> int:
    gts = load_ground_truth(args.ground_truth)
    rows = []
    for n, rec in read_jsonl(args.predictions):
        try:
            key = step_key(rec)
        except (RecordError, TypeError) as e:
            raise DomainFailure(f"{args.predictions}:{n}: {e}") from None
        if key not in gts:
            raise DomainFailure(f"join_failure: no ground truth for {key[0]}/{key[1]}")
        text = rec.get("text")
        if not isinstance(text, str):
            raise DomainFailure(f"{args.predictions}:{n}: prediction needs a 'text' string")
        sig = score(text, gts[key], require_thought=args.require_thought, tolerance=args.tolerance)
        rows.append({"episode_id": key[0], "step_id": rec["step_id"], "reward": sig.value,
                     "stage": sig.stage, "detail": sig.detail})
    _emit(dump_jsonl(rows), args.output)
    return EXIT_OK


def cmd_advantages(args: argparse.Namespace) -> int:
    rows = []
    for n, rec in read_jsonl(args.path):
        row = dict(rec) if isinstance(rec, dict) else {}
        rewards = rec.get("rewards") if isinstance(rec, dict) else rec
        try:
            g = advantage_group(rewards)
        except (ValueError, TypeError) as e:
            raise DomainFailure(f"{args.path}:{n}: {e}") from None
        row.update(rewards=list(g.rewards), advantages=list(g.advantages), zero_variance=g.zero_variance)
        rows.append(row)
    _emit(dump_jsonl(rows), args.output)
    return EXIT_OK


def cmd_objective(args: argparse.Namespace) -> int:
    doc = json.loads(Path(args.path).read_text(encoding="utf-8"))
    try:
        cfg = GRPOConfig(**doc.get("config", {}))
        groups = []
        for g in doc["groups"]:
            responses = [TokenSequenceLogProbs(r["logp_theta"], r["logp_old"], r["logp_ref"])
                         for r in g["responses"]]
            groups.append((responses, g["advantages"]))
        value = grpo_objective(groups, cfg)
    except (KeyError, TypeError, ValueError) as e:
        raise DomainFailure(f"bad objective document: {e!r}") from None
    out = {"objective": value, "config": {"epsilon": cfg.epsilon, "beta": cfg.beta,
                                          "group_size": cfg.group_size}}
    _emit(json.dumps(out, sort_keys=True) + "\n", args.output)
    return EXIT_OK


def _load_sim_config(args: argparse.Namespace) -> SimConfig:
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
    else:
        text = resources.files("guiact").joinpath("data/example_sim.json").read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DomainFailure(f"config is not JSON: {e}") from None
    if not isinstance(doc, dict):
        raise DomainFailure("config must be a JSON object")
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        return SimConfig.from_dict(doc)
    except (InvalidConfig, TypeError, ValueError) as e:
        raise DomainFailure(f"invalid_config: {e}") from None


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_sim_config(args)
    args._digest = cfg.digest()
    if args.trace:
        report, events = run_with_trace(cfg)
        rows = [{"t": e.virtual_time, "kind": e.kind, **e.payload} for e in events]
        Path(args.trace).write_text(dump_jsonl(rows), encoding="utf-8")
    else:
        report = run(cfg)
    _emit(report.to_json() + "\n", args.output)
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def _add_pred_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=FORMATS + (UNIFIED_FORMAT,),
                   help="adapter for every line (default: per-line 'format')")
    p.add_argument("--low-instruction", action="store_true", help="low-level instruction setting")
    p.add_argument("--screen", type=_screen_arg, help="screen size WxH for qwen25vl")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guiact", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check compact action strings, one per line")
    p.add_argument("path")
    p.add_argument("--evaluation", action="store_true", help="admit evaluation-only keys (RECENT)")
    p.add_argument("--require-thought", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("convert", help="convert baseline outputs to unified actions")
    p.add_argument("predictions")
    _add_pred_flags(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("evaluate", help="TM/EM report for predictions against ground truth")
    p.add_argument("predictions")
    p.add_argument("ground_truth")
    _add_pred_flags(p)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reward", help="per-line RFT reward")
    p.add_argument("predictions")
    p.add_argument("ground_truth")
    p.add_argument("--require-thought", action="store_true")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--output")
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("advantages", help="group-normalized advantages per line")
    p.add_argument("path")
    p.add_argument("--output")
    p.set_defaults(func=cmd_advantages)

    p = sub.add_parser("objective", help="evaluate the clipped GRPO objective from a JSON document")
    p.add_argument("path")
    p.add_argument("--output")
    p.set_defaults(func=cmd_objective)

    p = sub.add_parser("simulate", help="run the rollout simulator")
    p.add_argument("--config", help="JSON config (default: bundled example)")
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", help="write the event trace as JSON lines")
    p.add_argument("--output")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    inputs = [str(getattr(args, k)) for k in ("path", "predictions", "ground_truth", "config")
              if getattr(args, k, None)]
    try:
        code = args.func(args)
    except DomainFailure as e:
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_DOMAIN
    except RecordError as e:
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_DOMAIN
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    opts = {k: v for k, v in vars(args).items() if k not in ("func", "output", "trace", "_digest")}
    digest = getattr(args, "_digest", None) or _digest(opts)
    print(json.dumps(_manifest(args.command, inputs, digest), sort_keys=True), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
