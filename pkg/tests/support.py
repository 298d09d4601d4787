"""Shared helpers for the test suite: event injection, a scripted web server
for browser micro-traces, random term generators and a brute-force
derivability oracle."""

from __future__ import annotations

import random
from dataclasses import replace

from oauthsim.browser import Browser, ScriptInput, initial_browser_state
from oauthsim.messages import (
    H_LOCATION,
    HTTP_RESP,
    P,
    S,
    DecryptError,
    HttpRequest,
    https_unwrap_request,
    https_unwrap_response,
    https_wrap,
    try_validate,
    url,
)
from oauthsim.runtime import (
    Chooser,
    Configuration,
    DnsServer,
    Event,
    Process,
    Stop,
    System,
    apply_step,
)
from oauthsim.terms import (
    BOT,
    DIAMOND,
    EMPTY,
    Addr,
    Fn,
    Nonce,
    Num,
    Seq,
    Str,
    Term,
    dec_a,
    dec_s,
    enc_a,
    enc_s,
    extractmsg,
    is_constant,
    make_dict,
    normalize,
    proj,
    pub,
    seq,
    sig,
    subterms,
)

# ---------------------------------------------------------------------------
# configurations


def inject(config: Configuration, event: Event) -> Configuration:
    """Put an event at the front of the pool (position 0)."""
    origins = config.origins if config.origins else (-1,) * len(config.pool)
    return replace(config, pool=(event,) + config.pool, origins=(-1,) + origins)


def deliver(system: System, config: Configuration, pid: str, event: Event, index: int = 0, **choices):
    """Inject ``event`` and let ``pid`` process it under scripted choices."""
    cfg = inject(config, event)
    return apply_step(system, cfg, pid, 0, Chooser("script", directives=choices), index)


def https_request(reg, sender_pid: str, host: str, req: HttpRequest, sym_key: Term) -> Event:
    msg = https_wrap(req, sym_key, pub(reg.private_key(host)))
    return Event(reg.address_of_domain(host), reg.address(sender_pid), msg)


def open_response(step, sym_key: Term):
    """Decrypt the single HTTPS response a step emitted."""
    assert len(step.emitted) == 1, step.line()
    return https_unwrap_response(step.emitted[0].msg, sym_key)


# ---------------------------------------------------------------------------
# browser micro-traces


class WebServer(Process):
    """Test server for a set of domains, answering over P and S.

    ``routes`` maps a path to a function (request, protocol) -> (status,
    headers, body). Every request it receives is appended to its state so a
    test can inspect exactly what the browser sent.
    """

    kind = "test-server"

    def __init__(self, pid: str, address: Addr, keys: dict, routes: dict):
        self.pid = pid
        self.addresses = (address,)
        self.keys = keys
        self.routes = routes

    def initial_state(self) -> Term:
        return EMPTY

    def relation(self, event, state, ch, ctx):
        msg = event.msg
        key = None
        req = try_validate("http-request", msg)
        protocol = P
        if req is None:
            for priv in self.keys.values():
                try:
                    req, key = https_unwrap_request(msg, priv)
                except DecryptError:
                    continue
                protocol = S
                break
        if req is None or req.path.value not in self.routes:
            raise Stop("not served")
        status, headers, body = self.routes[req.path.value](req, protocol)
        resp = seq(HTTP_RESP, req.nonce, status, headers, body)
        out = resp if key is None else enc_s(resp, key)
        new_state = Seq(state.items + (seq(protocol, req.to_term()),))
        return [Event(event.sender, event.receiver, out)], new_state


class Recorder:
    """Script that remembers its inputs and emits a fixed command."""

    def __init__(self, command: Term = EMPTY):
        self.command = command
        self.inputs: list[ScriptInput] = []

    def __call__(self, inp: ScriptInput, ch, ctx) -> Term:
        self.inputs.append(inp)
        return inp.output(self.command)


class Micro:
    """One browser, one DNS server and one scripted web server."""

    def __init__(self, routes: dict, menu: list, scripts: dict | None = None, domains=("a.com", "b.com")):
        keys = {d: Nonce(i + 1) for i, d in enumerate(domains)}
        key_mapping = make_dict([(Str(d), pub(kk)) for d, kk in keys.items()])
        self.server = WebServer("srv", Addr("srv"), keys, routes)
        dns = DnsServer("dns", Addr("dns"), {d: Addr("srv") for d in domains})
        init = initial_browser_state(EMPTY, EMPTY, key_mapping, Addr("dns"))
        self.browser = Browser("b", Addr("b"), init, menu)
        self.system = System([self.browser, self.server, dns])
        self.system.scripts = dict(scripts or {})
        self.config = self.system.initial_config()
        self.steps = []

    def step(self, pid: str, pos: int | None, **choices):
        ch = Chooser("script", directives=choices)
        st, self.config = apply_step(self.system, self.config, pid, pos, ch, len(self.steps))
        self.steps.append(st)
        return st

    def trigger(self, **choices):
        st = self.step("b", None, **choices)
        self.settle()
        return st

    def settle(self, limit: int = 50) -> None:
        """Deliver pool events oldest first until the pool is empty."""
        for _ in range(limit):
            if not self.config.pool:
                return
            pos = len(self.config.pool) - 1
            ev = self.config.pool[pos]
            taker = next(p for p in self.system.processes if p.listens(ev.receiver))
            self.step(taker.pid, pos)
        raise AssertionError("pool did not drain")

    def requests(self) -> list:
        """(protocol, HttpRequest) for everything the server received, in order."""
        st = self.config.state_of(self.system, "srv")
        return [(e.items[0], try_validate("http-request", e.items[1])) for e in st.items]

    def browser_state(self):
        return self.config.state_of(self.system, "b")


def page(script: str, scriptstate: Term = EMPTY, headers: Term = EMPTY, status: int = 200):
    return lambda req, proto: (Num(status), headers, seq(Str(script), scriptstate))


def redirect(status: int, location: Term, headers: Term = EMPTY):
    return lambda req, proto: (Num(status), Seq(headers.items + (seq(H_LOCATION, location),)), EMPTY)


def https_url(host: str, path: str, params=EMPTY, fragment: Term = BOT) -> Term:
    return url(S, host, path, params, fragment).to_term()


def http_url(host: str, path: str, params=EMPTY, fragment: Term = BOT) -> Term:
    return url(P, host, path, params, fragment).to_term()


# ---------------------------------------------------------------------------
# random terms


ATOMS = [Nonce(i) for i in range(1, 7)] + [Str("a"), Str("b")]


def random_term(rng: random.Random, depth: int, atoms=ATOMS) -> Term:
    """Random ground term over the constructors (and a few destructors)."""
    if depth <= 0 or rng.random() < 0.25:
        return rng.choice(atoms)
    d = depth - 1
    r = rng.random()
    if r < 0.25:
        return Seq(random_term(rng, d, atoms) for _ in range(rng.randint(0, 3)))
    if r < 0.42:
        return enc_a(random_term(rng, d, atoms), pub(random_term(rng, d, atoms)))
    if r < 0.6:
        return enc_s(random_term(rng, d, atoms), random_term(rng, d, atoms))
    if r < 0.72:
        return sig(random_term(rng, d, atoms), random_term(rng, d, atoms))
    if r < 0.82:
        return pub(random_term(rng, d, atoms))
    if r < 0.88:
        return proj(rng.randint(1, 3), random_term(rng, d, atoms))
    if r < 0.94:
        return dec_s(random_term(rng, d, atoms), random_term(rng, d, atoms))
    return extractmsg(random_term(rng, d, atoms))


def random_instance(rng: random.Random, max_facts: int = 6, max_depth: int = 4):
    """Knowledge set and target; targets are often buried inside the facts."""
    facts = [random_term(rng, rng.randint(0, max_depth)) for _ in range(rng.randint(1, max_facts))]
    r = rng.random()
    if r < 0.5:
        pool = [t for f in facts for t in subterms(normalize(f))]
        target = rng.choice(pool)
    elif r < 0.8:
        target = random_term(rng, rng.randint(0, max_depth))
    else:
        target = Seq(rng.choice(facts + ATOMS) for _ in range(rng.randint(1, 3)))
    return facts, target


# ---------------------------------------------------------------------------
# derivability oracle


def closure_derivable(facts, target) -> bool:
    """Brute-force derivability over the finite set of subterms.

    Saturates by applying every constructor and destructor to every
    combination of known terms and keeping results that are subterms of the
    facts or the target. The equational theory is subterm convergent, so no
    derivation needs a term outside that set.
    """
    facts = [normalize(f) for f in facts]
    target = normalize(target)
    universe = set()
    for t in facts + [target]:
        universe.update(subterms(t))
    known = set(facts)
    known.update(t for t in universe if is_constant(t))
    changed = True
    while changed:
        changed = False
        for u in universe - known:
            if type(u) is Seq and all(x in known for x in u.items):
                known.add(u)
                changed = True
            elif type(u) is Fn and all(x in known for x in u.args):
                known.add(u)
                changed = True
        snapshot = list(known)
        for t in snapshot:
            results = [normalize(extractmsg(t))]
            if type(t) is Seq:
                results.extend(normalize(proj(i, t)) for i in range(1, len(t.items) + 1))
            if type(t) is Fn and t.symbol in ("enc_a", "enc_s"):
                for key in snapshot:
                    results.append(normalize(dec_a(t, key)))
                    results.append(normalize(dec_s(t, key)))
            for res in results:
                if res in universe and res not in known:
                    known.add(res)
                    changed = True
    return target in known or target == DIAMOND

