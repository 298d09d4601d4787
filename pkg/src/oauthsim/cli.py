"""Command line entry point: run, explore, check and replay scenarios."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .derive import check_recipe
from .explore import explore
from .properties import ALL, LEMMAS, MAIN, PropertyVerdict, check_trace, verify_witness
from .runtime import ReplayMismatch, Trace, replay_lines, run_random, run_scripted
from .scenarios import _TOGGLE_NAMES, SCENARIOS, ConfigError, Scenario, build, parse_toggles
from .terms import ParseError, parse

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2

TRACE_FILE = "trace.txt"
VERDICT_FILE = "verdicts.json"
REPORT_FILE = "report.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oauthsim", description="Symbolic web-model OAuth simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a scenario and evaluate all properties")
    run.add_argument("--scenario", required=True, choices=SCENARIOS)
    run.add_argument("--seed", type=_u64, default=0)
    run.add_argument("--max-steps", type=_positive, default=200)
    run.add_argument("--toggle", action="append", default=[], metavar="K=V")
    run.add_argument("--mode", choices=("auto", "scripted", "random"), default="auto",
                     help="auto: scripted schedule for attacks, seeded random scheduler for honest-fixed")
    run.add_argument("--out", required=True)

    ex = sub.add_parser("explore", help="bounded exhaustive exploration")
    ex.add_argument("--scenario", required=True, choices=SCENARIOS)
    ex.add_argument("--depth", type=_positive, required=True)
    ex.add_argument("--branch", type=_positive, required=True)
    ex.add_argument("--toggle", action="append", default=[], metavar="K=V")
    ex.add_argument("--out", required=True)

    chk = sub.add_parser("check", help="evaluate one property on a trace file")
    chk.add_argument("--trace", required=True)
    chk.add_argument("--property", required=True, choices=ALL)

    rep = sub.add_parser("replay", help="re-execute a trace and compare byte for byte")
    rep.add_argument("--trace", required=True)
    return p


# ---------------------------------------------------------------------------
# trace files


def parse_header(line: str) -> dict:
    if not line.startswith("# "):
        raise ConfigError("trace file has no header line")
    header = {}
    for item in line[2:].split():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"malformed header item {item!r}")
        header[key] = value
    if "scenario" not in header:
        raise ConfigError("trace header names no scenario")
    return header


def scenario_from_header(header: dict) -> Scenario:
    overrides = {k: v for k, v in header.items() if k in _TOGGLE_NAMES}
    return build(header["scenario"], overrides)


def load_trace(path: str | Path) -> tuple[Scenario, Trace, str]:
    """Rebuild the scenario named in the header and re-execute every step."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read trace: {e}") from None
    lines = text.splitlines()
    if not lines:
        raise ConfigError("empty trace file")
    header = parse_header(lines[0])
    sc = scenario_from_header(header)
    trace = replay_lines(sc.system, lines[1:], header)
    return sc, trace, text


def _expected_for(sc: Scenario, header: dict) -> set:
    # only the scripted schedules are designed to reach a violation
    return set(sc.expected) if header.get("mode") == "scripted" else set()


def verdict_outcome(sc: Scenario, header: dict, verdicts: dict) -> tuple[bool, set]:
    violated = {name for name in MAIN if not verdicts[name].holds}
    expected = _expected_for(sc, header)
    ok = violated == expected
    if not expected:
        # without an attack in play the lemma monitors must stay silent too
        ok = ok and all(verdicts[name].holds for name in LEMMAS)
    return ok, violated


def _verdict_line(v: PropertyVerdict) -> str:
    if v.holds:
        return f"{v.name}: holds"
    return f"{v.name}: VIOLATED at step {v.step} ({v.detail})"


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    sc = build(args.scenario, parse_toggles(args.toggle))
    mode = args.mode
    if mode == "auto":
        mode = "random" if args.scenario == "honest-fixed" else "scripted"
    header = sc.header(args.seed, {"mode": mode, "max_steps": str(args.max_steps)})
    if mode == "scripted":
        trace = run_scripted(sc.system, sc.schedule[:args.max_steps], header)
    else:
        trace = run_random(sc.system, args.seed, args.max_steps, header)
    verdicts = check_trace(trace).verdicts

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / TRACE_FILE).write_text(trace.serialize(), encoding="utf-8")
    ok, violated = verdict_outcome(sc, header, verdicts)
    payload = {
        "scenario": sc.name,
        "header": header,
        "steps": len(trace.steps),
        "digest": trace.digest(),
        "expected_violations": sorted(_expected_for(sc, header)),
        "violated": sorted(violated),
        "outcome": "expected" if ok else "unexpected",
        "verdicts": [verdicts[name].to_dict() for name in ALL],
    }
    (out / VERDICT_FILE).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    print(f"{sc.name}: {len(trace.steps)} steps, mode={mode}, digest={trace.digest()[:16]}")
    for name in ALL:
        print("  " + _verdict_line(verdicts[name]))
    print(f"outcome: {'expected' if ok else 'UNEXPECTED'}")
    return EXIT_OK if ok else EXIT_UNEXPECTED


def cmd_explore(args) -> int:
    sc = build(args.scenario, parse_toggles(args.toggle))
    report = explore(sc.system, args.depth, args.branch)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = sc.header(None, {"mode": "explore"})
    for f in report.findings:
        f.trace.header = dict(header)
        (out / f"finding-{f.property}.txt").write_text(f.trace.serialize(), encoding="utf-8")
    payload = {"scenario": sc.name, **report.to_dict()}
    (out / REPORT_FILE).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    print(f"{sc.name}: depth={args.depth} branch={args.branch} nodes={report.nodes} "
          f"duplicates={report.duplicates} time={report.elapsed:.1f}s")
    for f in report.findings:
        print(f"  {f.property}: violated at depth {f.depth} ({f.detail})")
    found = {f.property for f in report.findings}
    if sc.name == "honest-fixed":
        ok = not found
    else:
        ok = bool(found & set(sc.expected)) if sc.expected else not found
    print(f"violations: {len(found)}; outcome: {'expected' if ok else 'UNEXPECTED'}")
    return EXIT_OK if ok else EXIT_UNEXPECTED


def cmd_check(args) -> int:
    sc, trace, _ = load_trace(args.trace)
    verdicts = check_trace(trace).verdicts
    v = verdicts[args.property]
    data = v.to_dict()
    if not v.holds and v.recipe is not None:
        data["witness_verified"] = verify_witness(trace, v)
    print(json.dumps(data, indent=2))
    if args.property in LEMMAS:
        ok = v.holds or bool(_expected_for(sc, trace.header))
    else:
        ok = v.holds != (args.property in _expected_for(sc, trace.header))
    return EXIT_OK if ok else EXIT_UNEXPECTED


def _recheck_recorded_witnesses(trace: Trace, path: Path) -> list:
    """Re-derive every recorded witness recipe; returns the properties that fail."""
    data = json.loads(path.read_text(encoding="utf-8"))
    bad = []
    for rec in data.get("verdicts", []):
        if rec.get("holds") or rec.get("recipe") is None:
            continue
        pid = rec["roles"]["attacker"]
        state = trace.configs[rec["step"] + 1].state_of(trace.system, pid)
        if not check_recipe(parse(rec["recipe"]), [state], parse(rec["term"])):
            bad.append(rec["property"])
    return bad


def cmd_replay(args) -> int:
    try:
        sc, trace, text = load_trace(args.trace)
    except ReplayMismatch as e:
        print(f"replay mismatch: {e}")
        return EXIT_UNEXPECTED
    same = trace.serialize() == text
    print(f"{sc.name}: {len(trace.steps)} steps replayed, digest={trace.digest()}")
    print("serialization: " + ("identical" if same else "DIFFERS"))
    ok = same
    verdict_path = Path(args.trace).with_name(VERDICT_FILE)
    if verdict_path.exists():
        bad = _recheck_recorded_witnesses(trace, verdict_path)
        print("witnesses: " + ("all re-derive" if not bad else "FAILED for " + ", ".join(bad)))
        ok = ok and not bad
    return EXIT_OK if ok else EXIT_UNEXPECTED


COMMANDS = {"run": cmd_run, "explore": cmd_explore, "check": cmd_check, "replay": cmd_replay}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ParseError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
