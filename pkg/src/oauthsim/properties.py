"""Security properties and lemma monitors evaluated over traces.

``Checker`` consumes processing steps one at a time. Post-hoc checks feed it
a whole trace; exploration keeps one checker per search node and copies it
when branching. Each property records its first violation.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .browser import FULLCORRUPT
from .derive import check_recipe
from .runtime import Configuration, System, Trace
from .terms import BOT, Nonce, Term, to_text

AUTHZ = "authorization"
AUTHN = "authentication"
SI_AUTHZ = "si-authz"
SI_AUTHN = "si-authn"
LEMMA_PASSWORDS = "lemma-passwords"
LEMMA_CODES = "lemma-codes"
LEMMA_TOKENS = "lemma-tokens"
LEMMA_STATE = "lemma-state"
LEMMA_HTTPS_KEYS = "lemma-https-keys"

MAIN = (AUTHZ, AUTHN, SI_AUTHZ, SI_AUTHN)
LEMMAS = (LEMMA_PASSWORDS, LEMMA_CODES, LEMMA_TOKENS, LEMMA_STATE, LEMMA_HTTPS_KEYS)
ALL = MAIN + LEMMAS
# knowledge based properties carry a derivation recipe in their witness
KNOWLEDGE_BASED = (AUTHZ, AUTHN) + LEMMAS


@dataclass
class PropertyVerdict:
    name: str
    holds: bool = True
    step: int | None = None
    term: Term | None = None
    recipe: Term | None = None
    roles: dict = field(default_factory=dict)
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "property": self.name,
            "holds": self.holds,
            "step": self.step,
            "term": to_text(self.term) if self.term is not None else None,
            "recipe": to_text(self.recipe) if self.recipe is not None else None,
            "roles": {k: v if isinstance(v, str) else to_text(v) for k, v in self.roles.items()},
            "detail": self.detail,
        }


# ---------------------------------------------------------------------------
# corruption and knowledge


def is_corrupted(system: System, config: Configuration, pid: str) -> bool:
    proc = system.process(pid)
    if proc.is_attacker():
        return True
    if proc.kind in ("browser", "rp", "idp"):
        return config.state_of(system, pid).items[-1] != BOT
    return False


def fully_corrupted(system: System, config: Configuration, pid: str) -> bool:
    proc = system.process(pid)
    if proc.is_attacker():
        return True
    if proc.kind == "browser":
        return config.state_of(system, pid).items[-1] == FULLCORRUPT
    return is_corrupted(system, config, pid)


def attackers(system: System) -> list:
    return [p for p in system.processes if p.is_attacker()]


def _knows(system: System, config: Configuration, t: Term) -> bool:
    for att in attackers(system):
        kn = att.knowledge(config.state_of(system, att.pid))
        if kn.knows(t):
            return True
    return False


def attacker_knows(trace: Trace, config_index: int, target: Term):
    """(known, recipe, attacker pid) at a configuration; the recipe is over x0 = attacker state."""
    system = trace.system
    config = trace.configs[config_index]
    for att in attackers(system):
        state = config.state_of(system, att.pid)
        kn = att.knowledge(state)
        res = kn.derive(target)
        if res:
            return True, kn.state_recipe(res.recipe), att.pid
    return False, None, None


def verify_witness(trace: Trace, verdict: PropertyVerdict) -> bool:
    """Re-evaluate a witness recipe against the attacker state it cites."""
    if verdict.holds or verdict.recipe is None:
        return False
    pid = verdict.roles.get("attacker")
    state = trace.configs[verdict.step + 1].state_of(trace.system, pid)
    return check_recipe(verdict.recipe, [state], verdict.term)


# ---------------------------------------------------------------------------
# sessions


def _dom(reg, pid: str) -> set:
    return set(reg.domains_of(pid))


def _host_of_command(cmd) -> str | None:
    try:
        return cmd.items[1].items[2].value
    except (AttributeError, IndexError):
        return None


def starts_oa(step, reg):
    """(browser, rp, idp) if the step starts an OAuth session, else None."""
    m = step.meta
    if step.stutter or m.get("script") != "script_rp_index" or not m.get("starts_oa"):
        return None
    host = _host_of_command(m.get("command"))
    rp = reg.owner_of_domain(host) if host else None
    idp = reg.owner_of_domain(m["selected_domain"])
    if rp is None or idp is None:
        return None
    return step.pid, rp, idp


def ends_oa(step, reg):
    """(browser, rp, idp, resource) if the step ends an OAuth session, else None."""
    ends = step.meta.get("ends")
    if step.stutter or ends is None:
        return None
    b = reg.pid_of_address(ends["to"])
    if b is None or reg.party(b).kind != "browser":
        return None
    i = reg.owner_of_domain(ends["idp_host"])
    if i is None:
        return None
    return b, step.pid, i, ends["resource"]


@dataclass
class OAuthSession:
    browser: str
    rp: str
    idp: str
    steps: list
    start: int
    end: int | None
    evidence: str
    selected: list


class SessionGraph:
    """Connectedness over the steps of a trace (or a search path)."""

    def __init__(self, steps: list, reg):
        self.steps = steps
        self.reg = reg
        self.doc_origin: dict = {}
        self.preds: list = []
        for st in steps:
            self._add(st)

    def _add(self, st) -> None:
        p = set()
        if st.origin >= 0:
            p.add(st.origin)
        m = st.meta
        if "doc_created" in m:
            self.doc_origin[m["doc_created"]] = st.origin
        if m.get("switch") == "script" and "doc" in m:
            o = self.doc_origin.get(m["doc"], -1)
            if o >= 0:
                p.add(o)
        self.preds.append(p)

    def extend(self, st) -> None:
        self.steps.append(st)
        self._add(st)

    def connected(self, a: int, b: int) -> bool:
        return a in self.preds[b]

    def reach(self, start: int, end: int, blocked: set) -> set:
        seen = {start}
        for k in range(start + 1, end + 1):
            if k in blocked:
                continue
            if self.preds[k] & seen:
                seen.add(k)
        return seen

    def form_steps(self, b: str, i: str, lo: int, hi: int) -> list:
        doms = _dom(self.reg, i)
        out = []
        for k in range(lo, hi + 1):
            st = self.steps[k]
            m = st.meta
            if st.pid == b and not st.stutter and "form_id" in m and m.get("form_host") is not None \
                    and m["form_host"].value in doms:
                out.append((k, m["form_id"]))
        return out

    def _blocked(self, b: str, r: str, i: str, q0: int, q: int) -> set:
        blocked = set()
        for k in range(q0 + 1, q):
            st = self.steps[k]
            s = starts_oa(st, self.reg)
            if s is not None and s[0] == b and s[1] == r:
                blocked.add(k)
                continue
            e = ends_oa(st, self.reg)
            if e is not None and e[:3] == (b, r, i):
                blocked.add(k)
        return blocked

    def starts(self, b: str, r: str, i: str, upto: int) -> list:
        return [k for k in range(upto + 1) if starts_oa(self.steps[k], self.reg) == (b, r, i)]

    def session_with(self, b: str, r: str, i: str, q: int, targets: set | None, nia_targets: set | None):
        """A session containing step q whose selected identity set equals the targets.

        ``targets`` applies to interactive starts, ``nia_targets`` to the
        password mode; returns (start, reached steps) or None.
        """
        for q0 in self.starts(b, r, i, q):
            blocked = self._blocked(b, r, i, q0, q)
            interactive = self.steps[q0].meta.get("interactive")
            if interactive == BOT:
                sel = self.steps[q0].meta["selected_id"]
                if nia_targets != {sel}:
                    continue
                seen = self.reach(q0, q, blocked)
                if q in seen:
                    return q0, seen
                continue
            forms = self.form_steps(b, i, q0, q)
            bad = {k for k, ident in forms if ident not in targets}
            seen = self.reach(q0, q, blocked | bad)
            if q not in seen:
                continue
            if targets and not any(k in seen for k, ident in forms if ident in targets):
                continue
            return q0, seen
        return None

    def sessions(self, b: str, r: str, i: str) -> list:
        """Maximal sessions from each start, cut at the first end step."""
        out = []
        n = len(self.steps)
        for q0 in self.starts(b, r, i, n - 1):
            blocked = set()
            end = None
            seen = {q0}
            for k in range(q0 + 1, n):
                st = self.steps[k]
                if not (self.preds[k] & seen):
                    continue
                s = starts_oa(st, self.reg)
                if s is not None and s[:2] == (b, r):
                    blocked.add(k)
                    continue
                seen.add(k)
                e = ends_oa(st, self.reg)
                if e is not None and e[:3] == (b, r, i):
                    end = k
                    break
            interactive = self.steps[q0].meta.get("interactive")
            if interactive == BOT:
                evidence, selected = "nia", [self.steps[q0].meta["selected_id"]]
            else:
                forms = self.form_steps(b, i, q0, end if end is not None else n - 1)
                selected = [ident for k, ident in forms if k in seen]
                evidence = "ia" if selected else "none"
            out.append(OAuthSession(b, r, i, sorted(seen), q0, end, evidence, selected))
        return out


def extract_sessions(trace: Trace, b: str, r: str, i: str) -> list:
    return SessionGraph(list(trace.steps), trace.system.registry).sessions(b, r, i)


# ---------------------------------------------------------------------------
# the checker


class Checker:
    def __init__(self, system: System):
        self.system = system
        self.reg = system.registry
        self.verdicts = {name: PropertyVerdict(name) for name in ALL}
        self.graph = SessionGraph([], self.reg)
        # protected nonce -> (property, roles)
        self.protected: dict = {}
        self.service_tokens: list = []
        self.configs: list = []
        reg = self.reg
        for ident in reg.identities:
            owner = reg.party(ident.owner)
            if owner.kind == "browser" and reg.party(ident.governor).honest:
                self.protected[ident.secret] = (LEMMA_PASSWORDS, {"identity": ident.term, "browser": ident.owner})
        self.resources = []
        for (i, r, u), n in reg.resources.items():
            if reg.party(i).honest and (r is None or reg.party(r).honest):
                self.resources.append((n, i, r, u))

    def copy(self) -> "Checker":
        c = copy.copy(self)
        c.verdicts = {k: copy.copy(v) for k, v in self.verdicts.items()}
        c.graph = copy.copy(self.graph)
        c.graph.steps = list(self.graph.steps)
        c.graph.preds = list(self.graph.preds)
        c.graph.doc_origin = dict(self.graph.doc_origin)
        c.protected = dict(self.protected)
        c.service_tokens = list(self.service_tokens)
        c.configs = list(self.configs)
        return c

    @property
    def violated(self) -> list:
        return [n for n in ALL if not self.verdicts[n].holds]

    def _violate(self, name: str, step: int, term, detail: str, roles: dict, config: Configuration,
                 with_recipe: bool = True) -> None:
        v = self.verdicts[name]
        if not v.holds:
            return
        v.holds = False
        v.step = step
        v.term = term
        v.detail = detail
        v.roles = dict(roles)
        if with_recipe:
            for att in attackers(self.system):
                state = config.state_of(self.system, att.pid)
                kn = att.knowledge(state)
                res = kn.derive(term)
                if res:
                    v.recipe = kn.state_recipe(res.recipe)
                    v.roles["attacker"] = att.pid
                    break

    def _honest_user(self, config, ident) -> bool:
        reg = self.reg
        info = reg.identity(ident)
        if info is None:
            return False
        owner = reg.party(info.owner)
        return owner.kind == "browser" and not is_corrupted(self.system, config, info.owner)

    def observe(self, step, config: Configuration) -> None:
        """Account for one processing step and the configuration it produced."""
        reg, system = self.reg, self.system
        self.graph.extend(step)
        self.configs.append(config)
        m = step.meta
        k = step.index
        if not step.stutter:
            proc = system.process(step.pid)
            if proc.kind == "idp" and reg.party(step.pid).honest:
                if "code_issued" in m:
                    cid, user = m["code_for"]
                    owner = reg.client_owner(step.pid, cid)
                    if owner and reg.party(owner).honest and self._honest_user(config, user):
                        self.protected[m["code_issued"]] = (LEMMA_CODES, {"idp": step.pid, "rp": owner})
                if "token_issued" in m and "token_for" in m:
                    cid, user = m["token_for"]
                    owner = reg.client_owner(step.pid, cid)
                    if owner and reg.party(owner).honest and (user == BOT or self._honest_user(config, user)):
                        self.protected[m["token_issued"]] = (LEMMA_TOKENS, {"idp": step.pid, "rp": owner})
            if proc.kind == "rp" and reg.party(step.pid).honest:
                idp_owner = reg.owner_of_domain(m["login_idp"]) if "login_idp" in m else None
                if "state_nonce" in m and reg.kind_of_address(m["login_for"]) == "browser" \
                        and type(m["state_nonce"]) is Nonce and idp_owner and reg.party(idp_owner).honest:
                    self.protected[m["state_nonce"]] = (LEMMA_STATE, {"rp": step.pid})
                peer = reg.owner_of_domain(m["https_host"]) if "https_host" in m else None
                if "https_key" in m and peer is not None and reg.party(peer).honest:
                    self.protected[m["https_key"]] = (LEMMA_HTTPS_KEYS, {"rp": step.pid})
                if "service_token" in m:
                    self.service_tokens.append((m["service_token"], m["service_record"], step.pid))
            self._session_integrity(step, config)
        self._knowledge(k, config)

    # -- knowledge based ----------------------------------------------------

    def _knowledge(self, k: int, config: Configuration) -> None:
        reg, system = self.reg, self.system
        for n, (name, roles) in self.protected.items():
            if self.verdicts[name].holds and _knows(system, config, n):
                if name == LEMMA_PASSWORDS and is_corrupted(system, config, roles["browser"]):
                    continue
                self._violate(name, k, n, f"attacker derives protected {name[6:]} value", roles, config)
        if self.verdicts[AUTHZ].holds:
            for n, i, r, u in self.resources:
                if not _knows(system, config, n):
                    continue
                if is_corrupted(system, config, i):
                    continue
                if r is not None and is_corrupted(system, config, r):
                    continue
                if u is not None and self._user_excused(config, u):
                    continue
                self._violate(AUTHZ, k, n, "attacker derives a protected resource",
                              {"idp": i, "rp": r, "user": u}, config)
                break
        if self.verdicts[AUTHN].holds:
            for n, record, r in self.service_tokens:
                if is_corrupted(system, config, r):
                    continue
                user, domain = record.items
                i = reg.owner_of_domain(domain)
                if i is None or not reg.party(i).honest or is_corrupted(system, config, i):
                    continue
                if not _knows(system, config, n):
                    continue
                if self._user_excused(config, user):
                    continue
                self._violate(AUTHN, k, n, "attacker derives a service token", {"rp": r, "idp": i, "user": user},
                              config)
                break

    def _user_excused(self, config, user) -> bool:
        reg = self.reg
        info = reg.identity(user)
        if info is None:
            # unknown identities have no honest owner
            return True
        if fully_corrupted(self.system, config, info.owner):
            return True
        return any(is_corrupted(self.system, config, r) for r in info.trusted_rps)

    # -- session integrity --------------------------------------------------

    def _session_integrity(self, step, config: Configuration) -> None:
        reg, system = self.reg, self.system
        e = ends_oa(step, reg)
        if e is None:
            return
        b, r, i, t = e
        if is_corrupted(system, config, b) or is_corrupted(system, config, r):
            return
        k = step.index
        roles = {"browser": b, "rp": r, "idp": i}
        i_honest = reg.party(i).honest and not is_corrupted(system, config, i)
        has_start = bool(self.graph.starts(b, r, i, k))
        if self.verdicts[SI_AUTHZ].holds:
            if not has_start:
                self._violate(SI_AUTHZ, k, t, "flow ends without a matching OAuth session", roles, config, False)
            elif i_honest:
                ids = [x.term for x in reg.identities]
                targets = {u for u in ids if reg.resources.get((i, r, u)) == t}
                nia = {u for u in ids if t in (reg.resources.get((i, r, u)), reg.resources.get((i, None, u)))}
                if self.graph.session_with(b, r, i, k, targets, nia) is None:
                    self._violate(SI_AUTHZ, k, t, "resource does not match the selected identity", roles, config,
                                  False)
        token = step.meta.get("service_token")
        if token is not None and self.verdicts[SI_AUTHN].holds:
            user = step.meta["service_record"].items[0]
            roles = dict(roles, user=user)
            if not has_start:
                self._violate(SI_AUTHN, k, token, "login without a matching OAuth session", roles, config, False)
            elif i_honest and self.graph.session_with(b, r, i, k, {user}, {user}) is None:
                self._violate(SI_AUTHN, k, token, "logged in under an identity the user did not select", roles,
                              config, False)


def check_trace(trace: Trace) -> Checker:
    checker = Checker(trace.system)
    for step, config in zip(trace.steps, trace.configs[1:]):
        checker.observe(step, config)
    return checker


def check_authorization(trace: Trace) -> PropertyVerdict:
    return check_trace(trace).verdicts[AUTHZ]


def check_authentication(trace: Trace) -> PropertyVerdict:
    return check_trace(trace).verdicts[AUTHN]


def check_si_authz(trace: Trace) -> PropertyVerdict:
    return check_trace(trace).verdicts[SI_AUTHZ]


def check_si_authn(trace: Trace) -> PropertyVerdict:
    return check_trace(trace).verdicts[SI_AUTHN]


def lemma_monitors(trace: Trace) -> dict:
    c = check_trace(trace)
    return {name: c.verdicts[name] for name in LEMMAS}
