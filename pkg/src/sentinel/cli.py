"""``sentinel`` command line: ingest, detect, trace, heuristics, simulate.

Exit codes: 0 ran clean with nothing to report, 1 detections/findings/chain
present, 2 operational error (unreadable input, malformed rule or IOC file).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from dataclasses import dataclass, field
from typing import List, Optional

from .chain import SeedNotFound, build_process_graph, forward_track, render_timeline
from .heuristics import run_heuristics
from .ingest import IoFailure, ingest_path
from .iocs import IocError, default_iocs, load_iocs, match_event
from .rules import RuleError, eval_rules, load_rules
from .simulator import InvalidSpec, ScenarioSpec, generate_reference_log, generate_scenario

SCHEMA_VERSION = "1"
IOC_ENV = "SENTINEL_IOC_PATH"

EXIT_CLEAN, EXIT_FOUND, EXIT_ERROR = 0, 1, 2


@dataclass
class RunReport:
    command: str
    inputs: dict
    detections: list = field(default_factory=list)
    findings: list = field(default_factory=list)
    ioc_hits: list = field(default_factory=list)
    chain: Optional[dict] = None
    timeline: List[str] = field(default_factory=list)
    stats: Optional[dict] = None
    messages: List[str] = field(default_factory=list)
    exit_code: int = EXIT_CLEAN
    generated_at: Optional[str] = None

    def counts(self) -> dict:
        return {
            "detections": len(self.detections),
            "findings": len(self.findings),
            "ioc_hits": len(self.ioc_hits),
            "chain_processes": len(self.chain["processes"]) if self.chain else 0,
        }

    def to_dict(self) -> dict:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "inputs": self.inputs,
            "exit_code": self.exit_code,
            "counts": self.counts(),
            "stats": self.stats,
            "detections": self.detections,
            "findings": self.findings,
            "ioc_hits": self.ioc_hits,
            "chain": self.chain,
            "messages": self.messages,
        }
        if self.generated_at:
            doc["generated_at"] = self.generated_at
        return doc

    def render_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def render_text(self) -> str:
        out: List[str] = []
        out.extend(self.timeline)
        if self.timeline:
            out.append("")
        for d in self.detections:
            out.append(f"{d['utc_time']} [{d['severity']}] {d['rule_id']}: {d['table_name']} "
                       f"{d['action']} {d['process_name']} -> {d['target_path']}")
        for f in self.findings:
            out.append(f"{f['utc_time']} {f['heuristic_id']}: {f['explanation']}")
        if self.ioc_hits:
            summary = Counter(h["field"] for h in self.ioc_hits)
            out.append("ioc hits: " + ", ".join(f"{k}={v}" for k, v in sorted(summary.items())))
        if self.chain:
            for s in self.chain["stages"]:
                out.append(f"stage {s['stage']} at {s['utc_time']} ({len(s['evidence'])} events)")
        if self.stats:
            out.append(f"ingested {self.stats['accepted']} events, "
                       f"{len(self.stats['rejected'])} rejected, {self.stats['skipped']} skipped")
            if "by_kind" in self.stats:
                out.append("by kind: " + ", ".join(f"{k}={v}" for k, v in sorted(self.stats["by_kind"].items())))
            for r in self.stats["rejected"]:
                out.append(f"  line {r['line']}: {r['error']}: {r['message']}")
        out.extend(self.messages)
        c = self.counts()
        out.append(f"{self.command}: {c['detections']} detections, {c['findings']} findings, "
                   f"{c['ioc_hits']} ioc hits, exit {self.exit_code}")
        return "\n".join(out) + "\n"


def _iocs(iocs_path):
    path = iocs_path or os.environ.get(IOC_ENV)
    if not path:
        return default_iocs()
    try:
        with open(path, encoding="utf-8") as fh:
            return load_iocs(fh, label=os.path.basename(path))
    except IocError as exc:
        raise IocError(f"{path}: {exc}") from exc


def run_ingest(log_path) -> RunReport:
    report = RunReport("ingest", {"log": str(log_path)})
    store, stats = ingest_path(log_path)
    report.stats = dict(stats.to_dict(), by_kind=store.stats["by_kind"], host=store.host)
    return report


def run_detect(log_path, rules_dir=None, iocs_path=None) -> RunReport:
    """Ingest ``log_path``, evaluate every loaded rule plus IOC matching."""
    report = RunReport("detect", {"log": str(log_path), "rules": rules_dir and str(rules_dir),
                                  "iocs": iocs_path or os.environ.get(IOC_ENV)})
    rules = load_rules(rules_dir)
    iocs = _iocs(iocs_path)
    store, stats = ingest_path(log_path)
    report.stats = stats.to_dict()
    detections = eval_rules(rules, store)
    report.detections = [d.to_record() for d in detections]
    for pos in store.by_time():
        event = store[pos]
        for hit in match_event(event, iocs):
            report.ioc_hits.append(dict(hit.to_dict(), eid=event.eid, utc_time=event.utc_time,
                                        table_name=event.table_name))
    report.inputs["rule_ids"] = [r.rule_id for r in rules]
    report.exit_code = EXIT_FOUND if report.detections or report.ioc_hits else EXIT_CLEAN
    return report


def run_trace(log_path, seed_hash, max_depth=16) -> RunReport:
    report = RunReport("trace", {"log": str(log_path), "seed": seed_hash, "max_depth": max_depth})
    store, stats = ingest_path(log_path)
    report.stats = stats.to_dict()
    graph = build_process_graph(store)
    report.messages.extend(str(w) for w in graph.warnings)
    try:
        chain = forward_track(seed_hash, store, graph, max_depth=max_depth)
    except SeedNotFound as exc:
        report.messages.append(str(exc))
        return report
    report.chain = chain.to_dict()
    report.timeline = render_timeline(chain)
    if chain.duplicate_eids:
        report.messages.append("duplicate event ids in chain: " + ", ".join(chain.duplicate_eids))
    report.exit_code = EXIT_FOUND
    return report


def run_heuristics_cmd(log_path) -> RunReport:
    report = RunReport("heuristics", {"log": str(log_path)})
    store, stats = ingest_path(log_path)
    report.stats = stats.to_dict()
    report.findings = [f.to_dict() for f in run_heuristics(store)]
    report.exit_code = EXIT_FOUND if report.findings else EXIT_CLEAN
    return report


def run_simulate(out_path, scenario_path=None, seed=None, noise=None) -> RunReport:
    report = RunReport("simulate", {"scenario": scenario_path, "seed": seed, "noise": noise,
                                    "out": out_path})
    if scenario_path is None and seed is None and noise is None:
        text = generate_reference_log()
    else:
        spec = ScenarioSpec()
        if scenario_path is not None:
            with open(scenario_path, encoding="utf-8") as fh:
                spec = ScenarioSpec.from_json(fh.read())
        overrides = {}
        if seed is not None:
            overrides["jitter_seed"] = seed
        if noise is not None:
            overrides["noise_events"] = noise
        spec = ScenarioSpec.from_dict(dict(spec.to_dict(), **overrides))
        report.inputs["spec"] = spec.to_dict()
        text = generate_scenario(spec)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    report.messages.append(f"wrote {text.count(chr(10))} events to {out_path}")
    return report


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["json", "text"], default=argparse.SUPPRESS,
                        help="report format (default text)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="write report here (default stdout)")
    common.add_argument("--now", default=argparse.SUPPRESS,
                        help="timestamp recorded in the report instead of omitting it")
    # simulate's --out is the log it writes; its report always goes to stdout.
    sim_common = argparse.ArgumentParser(add_help=False)
    sim_common.add_argument("--format", choices=["json", "text"], default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="sentinel", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse a results log and report counts")
    p.add_argument("--log", required=True)
    p.add_argument("--stats", action="store_true", help="include per-kind counts and rejects")

    p = sub.add_parser("detect", parents=[common], help="run detection rules and IOC matching")
    p.add_argument("--log", required=True)
    p.add_argument("--rules", help="directory of *.json rule files (built-in rule always loaded)")
    p.add_argument("--iocs", help=f"IOC file overriding the bundled corpus (also ${IOC_ENV})")

    p = sub.add_parser("trace", parents=[common], help="forward-track a file hash into an attack chain")
    p.add_argument("--log", required=True)
    p.add_argument("--seed", required=True, help="MD5 or SHA-256 of the initial file")
    p.add_argument("--max-depth", type=int, default=16)

    p = sub.add_parser("heuristics", parents=[common], help="run behavioural heuristics")
    p.add_argument("--log", required=True)

    p = sub.add_parser("simulate", parents=[sim_common], help="write a simulated results log")
    p.add_argument("--scenario", help="JSON scenario file")
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("--noise", type=int, help="number of benign background events")
    p.add_argument("--out", required=True, help="log file to write")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    fmt = getattr(args, "format", "text")
    out = getattr(args, "out", None)
    try:
        if args.command == "ingest":
            report = run_ingest(args.log)
            if not args.stats:
                report.stats = {k: report.stats[k] for k in ("accepted", "rejected", "skipped")}
        elif args.command == "detect":
            report = run_detect(args.log, args.rules, args.iocs)
        elif args.command == "trace":
            report = run_trace(args.log, args.seed, args.max_depth)
        elif args.command == "heuristics":
            report = run_heuristics_cmd(args.log)
        else:
            report = run_simulate(args.out, args.scenario, args.seed, args.noise)
            out = None
    except (IoFailure, OSError, RuleError, IocError, InvalidSpec, ValueError) as exc:
        print(f"sentinel {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report.generated_at = getattr(args, "now", None)

    text = report.render_json() if fmt == "json" else report.render_text()
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
