"""Generic Dolev-Yao runtime: events, configurations, processing steps, runs.

A process relation is written as an ordinary Python function that asks a
``Chooser`` whenever the model is nondeterministic. Enumerating the branches
of a relation means re-running it with different choice prefixes; running it
under a recorded label replays one branch exactly. A relation ends a branch
without effect by raising ``Stop``.

Outputs may contain process placeholders ``ν<i>``; ``apply_step`` replaces
those that occur, in index order, with the next nonces of the stream.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

from .derive import Knowledge, derive
from .messages import DnsResponse, try_validate
from .terms import (
    Addr,
    Fn,
    Nonce,
    Seq,
    Str,
    Term,
    Var,
    seq,
    subterms,
    substitute,
    to_text,
)

TRIGGER = Str("TRIGGER")
STREAM_BASE = 1000
# choice label of a scheduled step whose event never showed up
MISSING = "missing"


class Stop(Exception):
    """The relation offers no output for this branch (a stutter)."""


class NoBranch(Stop):
    """A scripted or replayed choice does not name an available option."""


class ReplayMismatch(Exception):
    pass


class ForbiddenEmission(Exception):
    pass


@dataclass(frozen=True)
class Event:
    receiver: Term
    sender: Term
    msg: Term

    def to_term(self) -> Seq:
        return seq(self.receiver, self.sender, self.msg)

    @classmethod
    def from_term(cls, t: Term) -> "Event":
        if type(t) is not Seq or len(t.items) != 3:
            raise ValueError(f"not an event: {t}")
        return cls(*t.items)

    def __str__(self) -> str:
        return to_text(self.to_term())


def nu(i: int) -> Var:
    return Var("ν", i)


def lam(i: int) -> Var:
    return Var("λ", i)


# ---------------------------------------------------------------------------
# choices


def show(option) -> str:
    if isinstance(option, Term):
        return to_text(option)
    if isinstance(option, tuple):
        return "/".join(show(x) for x in option)
    return str(option)


def parse_label(label: str) -> dict:
    out = {}
    if not label:
        return out
    for part in label.split(";"):
        name, _, value = part.partition("=")
        out[name] = value
    return out


class Chooser:
    """Resolves nondeterminism for one processing step.

    mode "script": named directives, unnamed picks take the first option.
    mode "strict": every pick must be named (used by replay).
    mode "random": uniform choice from ``rng``.
    mode "enum": follow ``prefix`` of option indices, then first options;
    ``widths`` records how many options each pick had.
    """

    def __init__(self, mode: str = "script", directives: dict | None = None, rng: random.Random | None = None,
                 prefix: Sequence[int] = ()):
        self.mode = mode
        self.directives = directives or {}
        self.rng = rng
        self.prefix = list(prefix)
        self.record: list[tuple[str, str]] = []
        self.indices: list[int] = []
        self.widths: list[int] = []
        self._names: dict[str, int] = {}

    def pick(self, name: str, options: Sequence, render: Callable = show):
        options = list(options)
        n = self._names.get(name, 0) + 1
        self._names[name] = n
        key = name if n == 1 else f"{name}#{n}"
        if not options:
            raise Stop(f"no options for {key}")
        if self.mode in ("script", "strict") and key in self.directives:
            want = self.directives[key]
            for i, o in enumerate(options):
                if render(o) == want:
                    return self._take(key, i, options, render)
            if self.mode == "strict":
                raise ReplayMismatch(f"choice {key}={want} not available")
            raise NoBranch(f"choice {key}={want} not available")
        if self.mode == "strict":
            raise ReplayMismatch(f"choice {key} not recorded")
        if self.mode == "random":
            i = self.rng.randrange(len(options))
        elif self.mode == "enum":
            pos = len(self.indices)
            i = self.prefix[pos] if pos < len(self.prefix) else 0
        else:
            i = 0
        return self._take(key, i, options, render)

    def _take(self, key, i, options, render):
        self.record.append((key, render(options[i])))
        self.indices.append(i)
        self.widths.append(len(options))
        return options[i]

    @property
    def label(self) -> str:
        return ";".join(f"{k}={v}" for k, v in self.record)


# ---------------------------------------------------------------------------
# processes and configurations


class StepContext:
    """Per-step side channel: system access and runtime metadata."""

    def __init__(self, system: "System", index: int):
        self.system = system
        self.index = index
        self.meta: dict = {}


class Process:
    pid: str = ""
    addresses: tuple = ()
    kind: str = "honest"

    def initial_state(self) -> Term:
        raise NotImplementedError

    def relation(self, event: Event, state: Term, ch: Chooser, ctx: StepContext) -> tuple:
        raise NotImplementedError

    def listens(self, addr: Term) -> bool:
        return addr in self.addresses

    def is_attacker(self) -> bool:
        return self.kind in ("network-attacker", "web-attacker")


class DnsServer(Process):
    """Flat DNS server: answers from a fixed domain table, ignores the rest."""

    kind = "dns"

    def __init__(self, pid: str, address: Addr, table: dict):
        self.pid = pid
        self.addresses = (address,)
        self.table = dict(table)

    def initial_state(self) -> Term:
        return Seq(seq(Str(d), a) for d, a in sorted(self.table.items()))

    def relation(self, event, state, ch, ctx):
        req = try_validate("dns-request", event.msg)
        if req is None or type(req.domain) is not Str or req.domain.value not in self.table:
            raise Stop("unresolvable")
        answer = DnsResponse(req.domain, self.table[req.domain.value], req.nonce).to_term()
        return [Event(event.sender, event.receiver, answer)], state


@dataclass(frozen=True)
class Configuration:
    states: tuple
    pool: tuple
    next_nonce: int = STREAM_BASE
    origins: tuple = ()

    def state_of(self, system: "System", pid: str) -> Term:
        return self.states[system.index[pid]]


class System:
    def __init__(self, processes: Sequence[Process], registry=None):
        self.processes = list(processes)
        self.index = {p.pid: i for i, p in enumerate(self.processes)}
        self.registry = registry
        self.scripts: dict = {}

    def process(self, pid: str) -> Process:
        return self.processes[self.index[pid]]

    def initial_config(self) -> Configuration:
        return Configuration(tuple(p.initial_state() for p in self.processes), (), STREAM_BASE, ())

    def receivers(self, addr: Term) -> list:
        return [p for p in self.processes if p.listens(addr)]

    def trigger_event(self, proc: Process) -> Event:
        a = proc.addresses[0]
        return Event(a, a, TRIGGER)


@dataclass
class ProcessingStep:
    index: int
    event: Event
    pid: str
    label: str
    emitted: tuple
    bindings: tuple
    consumed: int | None
    origin: int
    stutter: bool = False
    meta: dict = field(default_factory=dict)

    def line(self) -> str:
        emits = ",".join(to_text(e.to_term()) for e in self.emitted)
        binds = ",".join(f"ν{i}:n{n}" for i, n in self.bindings)
        return (
            f"step {self.index} | event={to_text(self.event.to_term())} | proc={self.pid} | "
            f"choice={self.label} | emits=[{emits}] | bindings={{{binds}}}"
        )


def _placeholders(terms: Iterable[Term]) -> list:
    found = set()
    for t in terms:
        for x in subterms(t):
            if type(x) is Var and x.kind == "ν":
                found.add(x.index)
    return sorted(found)


def _subst_meta(value, mapping):
    if isinstance(value, Term):
        return substitute(value, mapping)
    if isinstance(value, dict):
        return {k: _subst_meta(v, mapping) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return type(value)(_subst_meta(v, mapping) for v in value)
    return value


def apply_step(system: System, config: Configuration, pid: str, event_pos: int | None, ch: Chooser,
               index: int) -> tuple:
    """Run one processing step; a Stop yields a stutter step."""
    pi = system.index[pid]
    proc = system.processes[pi]
    if event_pos is None:
        event = system.trigger_event(proc)
        origin = -1
    else:
        event = config.pool[event_pos]
        origin = config.origins[event_pos] if config.origins else -1
        if not proc.listens(event.receiver):
            raise ValueError(f"{pid} does not listen on {event.receiver}")
    state = config.states[pi]
    ctx = StepContext(system, index)
    try:
        out, new_state = proc.relation(event, state, ch, ctx)
    except Stop:
        step = ProcessingStep(index, event, pid, ch.label, (), (), event_pos, origin, True, ctx.meta)
        return step, config
    out = list(out)
    terms = [e.to_term() for e in out] + [new_state]
    ids = _placeholders(terms)
    mapping = {}
    bindings = []
    n = config.next_nonce
    for i in ids:
        mapping[Var("ν", i)] = Nonce(n)
        bindings.append((i, n))
        n += 1
    emitted = tuple(Event(*(substitute(x, mapping) for x in (e.receiver, e.sender, e.msg))) for e in out)
    new_state = substitute(new_state, mapping)
    if proc.kind == "web-attacker":
        for e in emitted:
            if e.sender not in proc.addresses:
                raise ForbiddenEmission(f"{pid} may not send from {e.sender}")
    if mapping:
        ctx.meta = _subst_meta(ctx.meta, mapping)
    pool = list(config.pool)
    origins = list(config.origins) if config.origins else [-1] * len(pool)
    if event_pos is not None:
        del pool[event_pos]
        del origins[event_pos]
    states = list(config.states)
    states[pi] = new_state
    new_config = Configuration(
        tuple(states), emitted + tuple(pool), n, tuple([index] * len(emitted) + origins)
    )
    step = ProcessingStep(index, event, pid, ch.label, emitted, tuple(bindings), event_pos, origin, False, ctx.meta)
    return step, new_config


def enumerate_branches(system: System, config: Configuration, pid: str, event_pos: int | None, index: int,
                       limit: int | None = None) -> Iterator[tuple]:
    """Yield (step, config') for every branch of the relation, depth-first over choices."""
    prefix: list[int] = []
    count = 0
    while True:
        ch = Chooser("enum", prefix=prefix)
        yield apply_step(system, config, pid, event_pos, ch, index)
        count += 1
        if limit is not None and count >= limit:
            return
        idx, widths = ch.indices, ch.widths
        j = len(idx) - 1
        while j >= 0 and idx[j] + 1 >= widths[j]:
            j -= 1
        if j < 0:
            return
        prefix = idx[:j] + [idx[j] + 1]


# ---------------------------------------------------------------------------
# traces


@dataclass
class Trace:
    system: System
    configs: list
    steps: list
    header: dict = field(default_factory=dict)

    @property
    def final(self) -> Configuration:
        return self.configs[-1]

    def serialize(self) -> str:
        lines = ["# " + " ".join(f"{k}={v}" for k, v in self.header.items())]
        lines.extend(step.line() for step in self.steps)
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()

    def state_before(self, i: int, pid: str) -> Term:
        return self.configs[i].state_of(self.system, pid)

    def state_after(self, i: int, pid: str) -> Term:
        return self.configs[i + 1].state_of(self.system, pid)


def canonical_text(system: System, config: Configuration) -> str:
    """Configuration text with stream nonces renamed by first appearance."""
    names: dict[int, str] = {}

    def rename(n: Nonce) -> str:
        if n.id < STREAM_BASE:
            return f"n{n.id}"
        name = names.get(n.id)
        if name is None:
            name = f"m{len(names)}"
            names[n.id] = name
        return name

    parts = [to_text(s, rename) for s in config.states]
    parts.extend(to_text(e.to_term(), rename) for e in config.pool)
    return "\n".join(parts)


def config_hash(system: System, config: Configuration) -> str:
    return hashlib.blake2b(canonical_text(system, config).encode("utf-8"), digest_size=16).hexdigest()


_SN_CACHE: dict = {}


def _stream_nonces(t: Term) -> tuple:
    """Stream nonce ids of ``t`` in order of first appearance (cached per subterm)."""
    tt = type(t)
    if tt is Nonce:
        return (t.id,) if t.id >= STREAM_BASE else ()
    if tt is not Seq and tt is not Fn:
        return ()
    got = _SN_CACHE.get(t)
    if got is not None:
        return got
    out: list = []
    seen: set = set()
    for x in (t.items if tt is Seq else t.args):
        for n in _stream_nonces(x):
            if n not in seen:
                seen.add(n)
                out.append(n)
    got = tuple(out)
    if len(_SN_CACHE) > 500000:
        _SN_CACHE.clear()
    _SN_CACHE[t] = got
    return got


def _canon(t: Term, ren: dict):
    if not _stream_nonces(t):
        return t
    tt = type(t)
    if tt is Nonce:
        r = ren.get(t.id)
        if r is None:
            r = ren[t.id] = len(ren)
        return ("n", r)
    if tt is Seq:
        return ("s",) + tuple(_canon(x, ren) for x in t.items)
    return ("f", t.symbol, t.index) + tuple(_canon(x, ren) for x in t.args)


def config_key(system: System, config: Configuration) -> int:
    """Fast in-memory fingerprint equal for configurations that agree up to stream nonce renaming.

    Same equivalence as ``config_hash`` but built from cached subterm hashes
    instead of text; used to deduplicate search nodes.
    """
    ren: dict = {}
    states = tuple(_canon(x, ren) for x in config.states)
    pool = tuple(_canon(e.to_term(), ren) for e in config.pool)
    return hash((states, pool))


# ---------------------------------------------------------------------------
# schedules


@dataclass
class ScheduleEntry:
    """One scripted step: which process, which event, which branch.

    ``event`` is "trigger", "next" (oldest pool event the process can take),
    or a predicate over Event picking the oldest matching pool event.
    """

    pid: str
    event: object = "next"
    choices: dict = field(default_factory=dict)
    note: str = ""


def deliverable(system: System, config: Configuration, pid: str) -> list:
    proc = system.process(pid)
    return [i for i, e in enumerate(config.pool) if proc.listens(e.receiver)]


def _select(system: System, config: Configuration, entry: ScheduleEntry):
    if entry.event == "trigger":
        return None, True
    cands = deliverable(system, config, entry.pid)
    # oldest first: the pool lists newest events at the front
    cands = list(reversed(cands))
    if entry.event == "next":
        return (cands[0], True) if cands else (None, False)
    for i in cands:
        if entry.event(config.pool[i]):
            return i, True
    return None, False


def run_scripted(system: System, schedule: Sequence[ScheduleEntry], header: dict | None = None,
                 observer: Callable | None = None) -> Trace:
    config = system.initial_config()
    trace = Trace(system, [config], [], dict(header or {}))
    for entry in schedule:
        idx = len(trace.steps)
        pos, ok = _select(system, config, entry)
        ch = Chooser("script", directives=entry.choices)
        if not ok:
            proc = system.process(entry.pid)
            step = ProcessingStep(idx, system.trigger_event(proc), entry.pid, MISSING, (), (), None, -1, True,
                                  {"missing_event": True})
            new_config = config
        else:
            step, new_config = apply_step(system, config, entry.pid, pos, ch, idx)
        trace.steps.append(step)
        trace.configs.append(new_config)
        config = new_config
        if observer:
            observer(trace)
    return trace


def run_random(system: System, seed: int, max_steps: int, header: dict | None = None,
               trigger_bias: float = 0.3, observer: Callable | None = None) -> Trace:
    """Seeded random scheduler: uniform event/process, random branch."""
    rng = random.Random(seed)
    config = system.initial_config()
    trace = Trace(system, [config], [], dict(header or {}))
    procs = system.processes
    rr = 0
    for idx in range(max_steps):
        pairs = [(i, p.pid) for i, e in enumerate(config.pool) for p in procs if p.listens(e.receiver)]
        if pairs and rng.random() >= trigger_bias:
            pos, pid = pairs[rng.randrange(len(pairs))]
        else:
            # lazy E0: triggers are offered round-robin over processes
            pid = procs[rr % len(procs)].pid if rng.random() < 0.5 else procs[rng.randrange(len(procs))].pid
            rr += 1
            pos = None
        ch = Chooser("random", rng=rng)
        step, config = apply_step(system, config, pid, pos, ch, idx)
        trace.steps.append(step)
        trace.configs.append(config)
        if observer:
            observer(trace)
    return trace


def parse_step_line(line: str) -> dict:
    from .terms import parse_prefix

    if not line.startswith("step "):
        raise ReplayMismatch(f"not a step line: {line[:40]}")
    head, rest = line.split(" | event=", 1)
    index = int(head[5:])
    event, pos = parse_prefix(rest, 0)
    rest = rest[pos:]
    if not rest.startswith(" | proc="):
        raise ReplayMismatch("malformed step line")
    pid, rest = rest[len(" | proc="):].split(" | choice=", 1)
    label, rest = rest.split(" | emits=", 1)
    return {"index": index, "event": Event.from_term(event), "pid": pid, "label": label}


def replay_lines(system: System, lines: Sequence[str], header: dict | None = None) -> Trace:
    """Re-execute recorded steps; every re-serialized line must match exactly."""
    config = system.initial_config()
    trace = Trace(system, [config], [], dict(header or {}))
    for line in lines:
        rec = parse_step_line(line)
        idx = len(trace.steps)
        if rec["index"] != idx:
            raise ReplayMismatch(f"step index {rec['index']} out of order")
        proc = system.process(rec["pid"])
        ev = rec["event"]
        if ev.msg == TRIGGER and ev == system.trigger_event(proc):
            pos = None
        else:
            cands = [i for i, e in enumerate(config.pool) if e == ev and proc.listens(e.receiver)]
            if not cands:
                raise ReplayMismatch(f"step {idx}: event not in pool")
            pos = cands[-1]
        if rec["label"] == MISSING:
            step = ProcessingStep(idx, ev, rec["pid"], MISSING, (), (), None, -1, True, {"missing_event": True})
            new_config = config
        else:
            ch = Chooser("strict", directives=parse_label(rec["label"]))
            step, new_config = apply_step(system, config, rec["pid"], pos, ch, idx)
            if ch.label != rec["label"]:
                raise ReplayMismatch(f"step {idx}: choice label differs")
        if step.line() != line:
            raise ReplayMismatch(f"step {idx}: re-executed step differs\n  recorded: {line}\n  replayed: {step.line()}")
        trace.steps.append(step)
        trace.configs.append(new_config)
        config = new_config
    return trace


# ---------------------------------------------------------------------------
# attackers


@dataclass
class Move:
    label: str
    events: list


class AttackerKnowledge:
    """Incremental attacker knowledge over the facts s0, e1, E1, e2, E2, ...

    The state after m steps is ⟨e_m, E_m, ⟨e_(m-1), ...⟩⟩; both the received
    event and the emitted events are part of it, so both are facts.
    """

    def __init__(self, initial: Term):
        self.kb = Knowledge([initial])
        self.count = 0

    def _copy(self) -> "AttackerKnowledge":
        k = AttackerKnowledge.__new__(AttackerKnowledge)
        k.kb = self.kb.copy()
        k.count = self.count
        return k

    def with_event(self, event_term: Term) -> "AttackerKnowledge":
        k = self._copy()
        k.kb.add(event_term)
        return k

    def with_emitted(self, emitted: Term) -> "AttackerKnowledge":
        k = self._copy()
        k.kb.add(emitted)
        k.count += 1
        return k

    def derive(self, target: Term, placeholders=()):
        return derive(target, self.kb, placeholders)

    def knows(self, t: Term) -> bool:
        if type(t) is Nonce:
            return t in self.kb.known
        return self.kb.synthesize(t) is not None

    def state_recipe(self, recipe: Term) -> Term:
        """Rewrite a recipe over facts into one over the attacker state term x0."""
        from .terms import proj

        m = self.count
        x: Term = Var("x", 0)

        def down(hops: int) -> Term:
            base = x
            for _ in range(hops):
                base = proj(3, base)
            return base

        mapping = {Var("x", 0): down(m)}
        for j in range(1, m + 1):
            mapping[Var("x", 2 * j - 1)] = proj(1, down(m - j))
            mapping[Var("x", 2 * j)] = proj(2, down(m - j))
        return substitute(recipe, mapping)


class AttackerProcess(Process):
    """Network or web attacker with a finite, scenario supplied move menu.

    State is the recorded history ⟨e, E, s⟩. Every emitted message is checked
    to be derivable from the knowledge (with placeholders) before it leaves.
    """

    def __init__(self, pid: str, addresses: Sequence[Addr], kind: str, initial: Term,
                 menu: Sequence[Callable] = (), listen_all: bool = False):
        self.pid = pid
        self.addresses = tuple(addresses)
        self.kind = kind
        self.initial = initial
        self.menu = list(menu)
        self.listen_all = listen_all
        self._cache: dict = {}

    def listens(self, addr: Term) -> bool:
        return self.listen_all or addr in self.addresses

    def initial_state(self) -> Term:
        return self.initial

    def knowledge(self, state: Term) -> AttackerKnowledge:
        k = self._cache.get(state)
        if k is not None:
            return k
        chain = []
        cur = state
        while cur != self.initial:
            k = self._cache.get(cur)
            if k is not None:
                break
            chain.append(cur)
            cur = cur.items[2]
        else:
            k = AttackerKnowledge(self.initial)
            self._cache[self.initial] = k
        for st in reversed(chain):
            k = k.with_event(st.items[0]).with_emitted(st.items[1])
            self._cache[st] = k
        if len(self._cache) > 50000:
            self._cache.clear()
        return k

    def relation(self, event, state, ch, ctx):
        kn = self.knowledge(state)
        e_term = event.to_term()
        kn2 = kn.with_event(e_term)
        view = AttackerView(self, event, kn2, ctx, state)
        moves: list[Move] = [Move("absorb", [])]
        for gen in self.menu:
            moves.extend(gen(view))
        move = ch.pick("move", moves, lambda m: m.label)
        for e in move.events:
            ph = [x for x in subterms(e.msg) if type(x) is Var and x.kind == "ν"]
            if not kn2.derive(e.msg, ph):
                raise ForbiddenEmission(f"{self.pid}: move {move.label} emits an underivable message")
            if self.kind == "web-attacker" and e.sender not in self.addresses:
                raise ForbiddenEmission(f"{self.pid} may not send from {e.sender}")
        new_state = seq(e_term, Seq(e.to_term() for e in move.events), state)
        ctx.meta["move"] = move.label
        return move.events, new_state


@dataclass
class AttackerView:
    """What a move generator may look at: the new event, knowledge, history."""

    attacker: AttackerProcess
    event: Event
    knowledge: AttackerKnowledge
    ctx: StepContext
    state: Term = None

    @property
    def registry(self):
        return self.ctx.system.registry

    def received(self) -> list:
        """Received event terms, oldest first, ending with the current event."""
        out = []
        cur = self.state
        while cur is not None and cur != self.attacker.initial:
            out.append(cur.items[0])
            cur = cur.items[2]
        out.reverse()
        out.append(self.event.to_term())
        return out
