"""Bounded depth-first exploration of a system with property monitors."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .properties import ALL, Checker
from .runtime import TRIGGER, Configuration, DnsServer, System, Trace, config_key, enumerate_branches


@dataclass
class Finding:
    property: str
    depth: int
    path: list
    detail: str
    trace: Trace | None = None


@dataclass
class ExplorationReport:
    depth: int
    branch: int
    nodes: int = 0
    duplicates: int = 0
    max_depth: int = 0
    elapsed: float = 0.0
    findings: list = field(default_factory=list)
    properties: tuple = ALL

    @property
    def violations(self) -> int:
        return len(self.findings)

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "branch": self.branch,
            "nodes": self.nodes,
            "duplicates": self.duplicates,
            "max_depth": self.max_depth,
            "elapsed_seconds": round(self.elapsed, 3),
            "properties": list(self.properties),
            "violations": [
                {"property": f.property, "depth": f.depth, "detail": f.detail, "path": f.path} for f in self.findings
            ],
        }


def _dns_first(system: System, config: Configuration):
    """Position of the oldest event only a DNS server can take, if any.

    A DNS server step changes no state and its answer is addressed to the
    requester, so it commutes with every other step and no monitor can see
    it. Taking it alone is a sound reduction unless a network attacker could
    also consume the query.
    """
    if any(p.is_attacker() and getattr(p, "listen_all", False) for p in system.processes):
        return None
    for pos in reversed(range(len(config.pool))):
        takers = system.receivers(config.pool[pos].receiver)
        if len(takers) == 1 and isinstance(takers[0], DnsServer):
            return takers[0].pid, pos
    return None


def successors(system: System, config: Configuration, index: int, reduce: bool = True):
    """Non-stutter successor steps: pool events oldest first per process, then triggers."""
    if reduce:
        first = _dns_first(system, config)
        if first is not None:
            step, nxt = next(enumerate_branches(system, config, first[0], first[1], index))
            if not step.stutter:
                yield step, nxt
                return
    for proc in system.processes:
        for pos in reversed(range(len(config.pool))):
            if proc.listens(config.pool[pos].receiver):
                for step, nxt in enumerate_branches(system, config, proc.pid, pos, index):
                    if not step.stutter:
                        yield step, nxt
    for proc in system.processes:
        for step, nxt in enumerate_branches(system, config, proc.pid, None, index):
            if step.stutter:
                continue
            # an attacker swallowing its own trigger only grows its history
            if proc.is_attacker() and step.event.msg == TRIGGER and not step.emitted:
                continue
            yield step, nxt


def explore(system: System, depth: int, branch: int, stop_on_violation: bool = False,
            reduce: bool = True) -> ExplorationReport:
    """Depth-first search to ``depth`` steps taking at most ``branch`` unseen successors per node.

    Configurations are deduplicated across the whole search by their
    fingerprint up to renaming of stream nonces.
    """
    report = ExplorationReport(depth, branch)
    start = time.perf_counter()
    seen: set = set()
    root = system.initial_config()
    seen.add(config_key(system, root))
    reported: set = set()

    def visit(config: Configuration, checker: Checker, steps: list, configs: list, d: int) -> bool:
        report.nodes += 1
        report.max_depth = max(report.max_depth, d)
        if d >= depth:
            return False
        taken = 0
        for step, nxt in successors(system, config, len(steps), reduce):
            h = config_key(system, nxt)
            if h in seen:
                report.duplicates += 1
                continue
            seen.add(h)
            taken += 1
            c2 = checker.copy()
            c2.observe(step, nxt)
            steps2, configs2 = steps + [step], configs + [nxt]
            for name in c2.violated:
                if name not in reported and checker.verdicts[name].holds:
                    reported.add(name)
                    report.findings.append(Finding(name, d + 1, [f"{x.pid}:{x.label}" for x in steps2],
                                                   c2.verdicts[name].detail, path_trace(system, steps2, configs2)))
                    if stop_on_violation:
                        return True
            # fused DNS answers do not count towards the depth bound
            fused = reduce and isinstance(system.process(step.pid), DnsServer)
            if visit(nxt, c2, steps2, configs2, d if fused else d + 1):
                return True
            if taken >= branch:
                break
        return False

    visit(root, Checker(system), [], [], 0)
    report.elapsed = time.perf_counter() - start
    return report


def path_trace(system: System, steps: list, configs: list, header: dict | None = None) -> Trace:
    return Trace(system, [system.initial_config()] + list(configs), list(steps), dict(header or {}))
