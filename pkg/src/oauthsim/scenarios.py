"""Scenario worlds: parties, keys, identities, toggles and scripted schedules."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .attacks import ATT_SCRIPT, Toolkit
from .browser import FORM, HREF, Browser, ScriptInput, att_script, get_doc_window, initial_browser_state
from .idp import SCRIPT_IDP_FORM, IdentityProvider, IdpToggles, initial_idp_state, script_idp_form
from .messages import POST, S, URL
from .rp import (
    SCRIPT_RP_IMPLICIT,
    SCRIPT_RP_INDEX,
    IdpRecord,
    RelyingParty,
    RpToggles,
    initial_rp_state,
    script_rp_implicit,
    script_rp_index,
)
from .runtime import AttackerProcess, DnsServer, ScheduleEntry, System, show
from .terms import BOT, EMPTY, Addr, Nonce, Seq, Str, Term, make_dict, pub, seq

SCENARIOS = ("attack-307", "mixup-code", "mixup-implicit", "state-leak", "naive-rp", "honest-fixed")

MAIN_PROPERTIES = ("authorization", "authentication", "si-authz", "si-authn")

EXPECTED = {
    "attack-307": {"authorization", "authentication"},
    "mixup-code": {"authorization", "authentication"},
    "mixup-implicit": {"authorization", "authentication"},
    "state-leak": {"si-authz", "si-authn"},
    "naive-rp": {"si-authz", "si-authn"},
    "honest-fixed": set(),
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# toggles


_TOGGLE_NAMES = {
    "redirectStatus": "redirect_status",
    "issParamCheck": "iss_param_check",
    "referrerPolicy": "referrer_policy",
    "intentionTracking": "intention_tracking",
    "freshStatePerAttempt": "fresh_state",
    "clientSecretPresent": "client_secret_present",
}


@dataclass
class FixToggles:
    """Each toggle's default is the fixed behaviour."""

    redirect_status: int = 303
    iss_param_check: bool = True
    referrer_policy: bool = True
    intention_tracking: str = "explicit"
    fresh_state: bool = True
    client_secret_present: bool = True

    def set(self, name: str, value: str) -> None:
        attr = _TOGGLE_NAMES.get(name)
        if attr is None:
            raise ConfigError(f"unknown toggle {name!r}")
        if attr == "redirect_status":
            if value not in ("303", "307"):
                raise ConfigError("redirectStatus must be 303 or 307")
            self.redirect_status = int(value)
        elif attr == "intention_tracking":
            if value not in ("explicit", "naive"):
                raise ConfigError("intentionTracking must be explicit or naive")
            self.intention_tracking = value
        else:
            low = value.lower()
            if low not in ("true", "false"):
                raise ConfigError(f"{name} must be true or false")
            setattr(self, attr, low == "true")

    def as_dict(self) -> dict:
        inv = {v: key for key, v in _TOGGLE_NAMES.items()}
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[inv[f.name]] = str(v).lower() if isinstance(v, bool) else str(v)
        return out


def parse_toggles(pairs) -> dict:
    out = {}
    for item in pairs or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"toggle {item!r} is not of the form key=value")
        if name not in _TOGGLE_NAMES:
            raise ConfigError(f"unknown toggle {name!r}")
        out[name] = value
    return out


SCENARIO_TOGGLES = {
    "attack-307": {"redirectStatus": "307"},
    "mixup-code": {"issParamCheck": "false", "clientSecretPresent": "false"},
    "mixup-implicit": {"issParamCheck": "false"},
    "state-leak": {"referrerPolicy": "false"},
    "naive-rp": {"intentionTracking": "naive"},
    "honest-fixed": {},
}


# ---------------------------------------------------------------------------
# the world


@dataclass
class Identity:
    term: Term
    secret: Nonce
    owner: str
    governor: str
    trusted_rps: tuple = ()


@dataclass
class Party:
    pid: str
    kind: str
    address: Addr
    domains: tuple
    honest: bool = True


def ident(name: str, domain: str) -> Seq:
    return seq(Str(name), Str(domain))


def https(host: str, path: str, params=EMPTY) -> Seq:
    return seq(URL, S, Str(host), Str(path), params, EMPTY)


class Registry:
    """Static facts about one scenario world.

    Processes consult it for the functions their algorithms leave abstract
    (secretOfID, resourceOf, client secrets); properties consult it for
    ownership and honesty.
    """

    def __init__(self, toggles: FixToggles, attacker_idp: bool):
        self.toggles = toggles
        self.parties: dict[str, Party] = {}
        self.keys: dict[str, Nonce] = {}
        self.identities: list[Identity] = []
        self.clients: dict[tuple, tuple] = {}
        self.resources: dict[tuple, Nonce] = {}
        self.attacker_sym: dict[str, Nonce] = {}
        self.attacker_idp = attacker_idp
        self.honest_rp = "rp"
        self.honest_idp = "idp"
        self.honest_rp_domain = "rp.com"
        self.honest_idp_domain = "idp.com"
        self.links: list = [("att", https("att.com", "/"))]
        self._next = 1

    def fresh(self) -> Nonce:
        n = Nonce(self._next)
        self._next += 1
        return n

    # -- lookups --------------------------------------------------------------

    def party(self, pid: str) -> Party:
        return self.parties[pid]

    def address(self, pid: str) -> Addr:
        return self.parties[pid].address

    def owner_of_domain(self, domain) -> str | None:
        name = domain.value if isinstance(domain, Str) else domain
        for p in self.parties.values():
            if name in p.domains:
                return p.pid
        return None

    def address_of_domain(self, domain: str) -> Addr:
        return self.address(self.owner_of_domain(domain))

    def private_key(self, domain: str) -> Nonce:
        return self.keys[domain]

    def kind_of_address(self, addr: Term) -> str | None:
        for p in self.parties.values():
            if p.address == addr:
                return p.kind
        return None

    def pid_of_address(self, addr: Term) -> str | None:
        for p in self.parties.values():
            if p.address == addr:
                return p.pid
        return None

    def domains_of(self, pid: str) -> tuple:
        return self.parties[pid].domains

    def identity(self, t: Term) -> Identity | None:
        for i in self.identities:
            if i.term == t:
                return i
        return None

    def secret_of_id(self, t: Term) -> Nonce | None:
        i = self.identity(t)
        return i.secret if i else None

    def owner_of_id(self, t: Term) -> str | None:
        i = self.identity(t)
        return i.owner if i else None

    def client_id_string(self, rp_pid: str, idp_pid: str) -> Str:
        return self.clients[(rp_pid, idp_pid)][0]

    def client_owner(self, idp_pid: str, client_id: Term) -> str | None:
        for (r, i), (cid, _) in self.clients.items():
            if i == idp_pid and cid == client_id:
                return r
        return None

    def secret_of_client_id(self, idp_pid: str, client_id: Term) -> Term | None:
        for (r, i), (cid, secret) in self.clients.items():
            if i == idp_pid and cid == client_id:
                return secret
        return None

    def resource_of(self, idp_pid: str, client_id: Term, user: Term) -> Nonce | None:
        rp = self.client_owner(idp_pid, client_id) if client_id != BOT else None
        if client_id != BOT and rp is None:
            return None
        u = None if user in (BOT, EMPTY) else user
        if u is not None and self.identity(u) is None:
            return None
        return self.resources.get((idp_pid, rp, u))

    def link_menu(self) -> list:
        return list(self.links)

    def att_script_menu(self, inp: ScriptInput) -> list:
        window = get_doc_window(inp.tree, inp.docnonce)
        return [
            ("form-rp", seq(FORM, https(self.honest_rp_domain, "/startInteractiveLogin"), POST,
                            Str(self.honest_idp_domain), BOT)),
            ("href-rp", seq(HREF, https(self.honest_rp_domain, "/"), window, BOT)),
        ]

    # -- attackers ------------------------------------------------------------

    def attacker_private_keys(self, pid: str) -> list:
        return [(d, self.keys[d]) for d in self.parties[pid].domains]

    def attacker_sym_key(self, pid: str) -> Nonce:
        return self.attacker_sym[pid]

    def attacker_credentials(self, pid: str) -> list:
        return [(i.term, i.secret) for i in self.identities if i.owner == pid]

    def attackers(self) -> list:
        return [p.pid for p in self.parties.values() if p.kind.endswith("attacker")]

    def browsers(self) -> list:
        return [p.pid for p in self.parties.values() if p.kind == "browser"]

    def rps(self) -> list:
        return [p.pid for p in self.parties.values() if p.kind == "rp"]

    def idps(self) -> list:
        return [p.pid for p in self.parties.values() if p.kind == "idp"]


# ---------------------------------------------------------------------------
# building


@dataclass
class Scenario:
    name: str
    system: System
    registry: Registry
    toggles: FixToggles
    schedule: list = field(default_factory=list)
    expected: set = field(default_factory=set)

    def header(self, seed: int | None = None, extra: dict | None = None) -> dict:
        h = {"scenario": self.name}
        if seed is not None:
            h["seed"] = str(seed)
        h.update(self.toggles.as_dict())
        h.update(extra or {})
        return h


def _world(name: str, toggles: FixToggles) -> Registry:
    attacker_idp = name in ("mixup-code", "mixup-implicit", "naive-rp", "honest-fixed")
    reg = Registry(toggles, attacker_idp)
    att_domains = ("att.com", "arp.com", "aidp.com")
    reg.parties = {
        "b": Party("b", "browser", Addr("b"), ()),
        "rp": Party("rp", "rp", Addr("rp"), ("rp.com",)),
        "idp": Party("idp", "idp", Addr("idp"), ("idp.com",)),
        "att": Party("att", "web-attacker", Addr("att"), att_domains, honest=False),
        "dns": Party("dns", "dns", Addr("dns"), ()),
    }
    for d in ("rp.com", "idp.com") + att_domains:
        reg.keys[d] = reg.fresh()
    reg.attacker_sym["att"] = reg.fresh()
    reg.identities = [
        Identity(ident("alice", "idp.com"), reg.fresh(), "b", "idp", ("rp",)),
        Identity(ident("eve", "idp.com"), reg.fresh(), "att", "idp", ()),
    ]
    if attacker_idp:
        reg.identities.append(Identity(ident("alice", "aidp.com"), reg.fresh(), "b", "att", ("rp",)))
    rp_secret = reg.fresh()
    reg.clients[("rp", "idp")] = (Str("cid-rp"), rp_secret if toggles.client_secret_present else BOT)
    reg.clients[("att", "idp")] = (Str("cid-arp"), BOT)
    if attacker_idp:
        reg.clients[("rp", "att")] = (Str("cid-rp-a"), BOT)
    users = [None] + [i.term for i in reg.identities if i.governor == "idp"]
    for r in ("rp", "att", None):
        for u in users:
            reg.resources[("idp", r, u)] = reg.fresh()
    reg.static_state = reg.fresh()
    return reg


def _key_mapping(reg: Registry) -> Term:
    return make_dict([(Str(d), pub(k)) for d, k in reg.keys.items()])


def _sslkeys(reg: Registry, pid: str) -> Term:
    return make_dict([(Str(d), reg.keys[d]) for d in reg.domains_of(pid)])


def registered_rp_uri(cid: str, host: str = "rp.com") -> Seq:
    return https(host, "/redirectionEndpoint",
                 make_dict([(Str("iss"), Str("idp.com")), (Str("client_id"), Str(cid))]))


def _idp_record(host: str, cid: Term, password: Term) -> Term:
    return IdpRecord(https(host, "/token"), https(host, "/auth"), https(host, "/introspect"), cid,
                     password).to_term()


URL_MENUS = {
    "rp": https("rp.com", "/"),
    "att": https("att.com", "/"),
    "arp-login": https("idp.com", "/auth", make_dict([(Str("response_type"), Str("code")),
                                                      (Str("client_id"), Str("cid-arp")),
                                                      (Str("state"), Str("st"))])),
}


ATTACK_COMBOS = {
    "attack-307": ["steal-login+start-login", "introspect+implicit-post"],
    "mixup-code": ["mixup-redirect", "redeem-code+start-login", "introspect+implicit-post"],
    "mixup-implicit": ["mixup-redirect", "introspect+start-login", "implicit-post"],
    "state-leak": ["eve-login", "leak-redirect"],
    "naive-rp": ["eve-login", "naive-redirect"],
}

# singleton actions offered when exploring
EXPLORE_ACTIONS = ["serve-page", "start-login", "eve-login", "introspect", "redeem-code", "steal-login",
                   "implicit-post", "leak-redirect", "mixup-redirect", "naive-redirect"]


def expected_violations(name: str, toggles: FixToggles) -> set:
    """Main properties the scripted run should violate.

    Overriding any toggle the attack depends on switches a fix back on, and
    then the scripted schedule is expected to fail.
    """
    current = toggles.as_dict()
    if any(current[key] != v for key, v in SCENARIO_TOGGLES[name].items()):
        return set()
    return set(EXPECTED[name])


def _check_consistent(name: str, toggles: FixToggles) -> None:
    """Reject override combinations under which the scenario's schedule is meaningless."""
    if name.startswith("mixup") and toggles.intention_tracking == "naive":
        # naive tracking trusts the iss parameter, which the mix-up schedule relies on being absent
        raise ConfigError(f"{name} cannot run with intentionTracking=naive")


def build(name: str, overrides: dict | None = None, combos: list | None = None) -> Scenario:
    """Construct the system for a named scenario; ``overrides`` maps toggle names to strings."""
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}")
    toggles = FixToggles()
    for key, v in {**SCENARIO_TOGGLES[name], **(overrides or {})}.items():
        toggles.set(key, v)
    _check_consistent(name, toggles)
    reg = _world(name, toggles)
    km = _key_mapping(reg)
    dns_addr = reg.address("dns")

    # browser
    ids = Seq(i.term for i in reg.identities if i.owner == "b")
    secrets = {}
    for i in reg.identities:
        if i.owner != "b":
            continue
        host = i.term.items[1]
        secrets.setdefault(host, []).append(i.secret)
        for r in i.trusted_rps:
            for d in reg.domains_of(r):
                secrets.setdefault(Str(d), []).append(i.secret)
    secret_dict = make_dict([(seq(h, S), Seq(v)) for h, v in secrets.items()])
    menu_names = {"attack-307": ["arp-login", "rp"], "honest-fixed": ["rp", "att"]}.get(name, ["rp"])
    browser = Browser("b", reg.address("b"), initial_browser_state(ids, secret_dict, km, dns_addr),
                      [(n, URL_MENUS[n]) for n in menu_names])

    # relying party
    rp_idps = [(Str("idp.com"), _idp_record("idp.com", *reg.clients[("rp", "idp")]))]
    if reg.attacker_idp:
        rp_idps.append((Str("aidp.com"), _idp_record("aidp.com", *reg.clients[("rp", "att")])))
    rp = RelyingParty(
        "rp", [reg.address("rp")], initial_rp_state(dns_addr, make_dict(rp_idps), km, _sslkeys(reg, "rp")),
        RpToggles(iss_check=toggles.iss_param_check, intention_tracking=toggles.intention_tracking,
                  referrer_policy=toggles.referrer_policy, start_status=303, fresh_state=toggles.fresh_state),
        static_state=reg.static_state,
    )

    # identity provider
    clients = make_dict([
        (Str("cid-rp"), seq(registered_rp_uri("cid-rp"))),
        (Str("cid-arp"), seq(registered_rp_uri("cid-arp", "arp.com"))),
    ])
    idp = IdentityProvider("idp", [reg.address("idp")],
                           initial_idp_state(_sslkeys(reg, "idp"), EMPTY, clients),
                           IdpToggles(redirect_status=toggles.redirect_status,
                                      referrer_policy=toggles.referrer_policy))

    # attacker
    creds = Seq(seq(t, s) for t, s in reg.attacker_credentials("att"))
    initial = seq(_sslkeys(reg, "att"), km, EMPTY, seq(creds, reg.attacker_sym["att"]))
    tool = Toolkit(reg, "att")
    if combos is None:
        combos = ATTACK_COMBOS.get(name, EXPLORE_ACTIONS)
    att = AttackerProcess("att", [reg.address("att")], "web-attacker", initial, [tool.menu(combos)])

    dns = DnsServer("dns", dns_addr, {d: reg.address_of_domain(d) for d in reg.keys})
    system = System([browser, rp, idp, att, dns], reg)
    system.scripts = {
        SCRIPT_RP_INDEX.value: script_rp_index,
        SCRIPT_RP_IMPLICIT.value: script_rp_implicit,
        SCRIPT_IDP_FORM.value: script_idp_form,
        ATT_SCRIPT.value: att_script,
    }
    sc = Scenario(name, system, reg, toggles, [], expected_violations(name, toggles))
    sc.schedule = SCHEDULES[name](reg)
    return sc


# ---------------------------------------------------------------------------
# schedules


def N(pid: str, **choices) -> ScheduleEntry:
    return ScheduleEntry(pid, "next", dict(choices))


def T(pid: str, **choices) -> ScheduleEntry:
    return ScheduleEntry(pid, "trigger", dict(choices))


def _ids(reg: Registry):
    alice = ident("alice", "idp.com")
    return alice, show(alice), show(reg.secret_of_id(alice))


def _open(url: str) -> list:
    """Type a URL into a new window and load the page."""
    return [T("b", switch="urlbar", url=url), N("dns"), N("b")]


def _victim_start(reg: Registry, domain: str, mode: str) -> list:
    """Victim opens the RP, picks an identity at ``domain`` and the RP redirects."""
    who = show(ident("alice", domain))
    return _open("rp") + [
        N("rp"), N("b"),
        T("b", switch="script", sw="auth", id=who, interactive="⊤"),
        N("dns"), N("b"),
        N("rp", mode=show(Str(mode))),
        N("b"),
    ]


def _idp_login(reg: Registry) -> list:
    """Browser at the IdP login page: load the form, submit credentials."""
    _, who, pw = _ids(reg)
    return [N("dns"), N("b"), N("idp"), N("b"),
            T("b", switch="script", id=who, secret=pw),
            N("dns"), N("b"), N("idp"), N("b")]


def schedule_307(reg: Registry) -> list:
    _, who, pw = _ids(reg)
    return [
        T("b", switch="urlbar", url="arp-login"),
        N("dns"), N("b"), N("idp"), N("b"),
        T("b", switch="script", id=who, secret=pw),
        N("dns"), N("b"),
        N("idp"),                      # 307 keeps the POST body
        N("b"), N("dns"), N("b"),      # credentials go to arp.com
        N("att", move="steal-login+start-login"),
        N("idp"), N("rp", mode=show(Str("token"))),
        N("att"),
        N("att", move="introspect+implicit-post"),
        N("idp"),
        N("att"),                      # protected resource
        N("rp"), N("dns"), N("rp"), N("idp"),
        N("rp", goal="authn"),
        N("att"),                      # service token
    ]


def schedule_mixup_code(reg: Registry) -> list:
    return _victim_start(reg, "aidp.com", "code") + [
        N("dns"), N("b"),
        N("att", move="mixup-redirect"),
    ] + [N("b")] + _idp_login(reg) + [
        N("dns"), N("b"),
        N("rp"), N("dns"), N("rp"),    # code goes to the attacker's token endpoint
        N("att", move="redeem-code+start-login"),
        N("idp"), N("rp"),
        N("att"),
        N("att", move="introspect+implicit-post"),
        N("idp"),
        N("att"),
        N("rp"), N("dns"), N("rp"), N("idp"),
        N("rp", goal="authn"),
        N("att"),
    ]


def schedule_mixup_implicit(reg: Registry) -> list:
    return _victim_start(reg, "aidp.com", "token") + [
        N("dns"), N("b"),
        N("att", move="mixup-redirect"),
    ] + [N("b")] + _idp_login(reg) + [
        N("dns"), N("b"),
        N("rp"), N("b"),               # implicit page
        T("b", switch="script"),
        N("dns"), N("b"),
        N("rp"), N("dns"), N("rp"),    # token goes to the attacker's introspection endpoint
        N("att", move="introspect+start-login"),
        N("idp"), N("rp"),
        N("att"),
        N("att", move="implicit-post"),
        N("rp"), N("dns"), N("rp"), N("idp"),
        N("rp", goal="authn"),
        N("att"),
    ]


def _code_flow(reg: Registry, goal: str) -> list:
    """Honest code flow from the RP index document to the final RP page."""
    alice, who, _ = _ids(reg)
    return [
        T("b", switch="script", sw="auth", id=who, interactive="⊤"),
        N("dns"), N("b"),
        N("rp", mode=show(Str("code"))),
        N("b"),
    ] + _idp_login(reg) + [
        N("dns"), N("b"),
        N("rp"), N("dns"), N("rp"), N("idp"),
        N("rp"), N("dns"), N("rp"), N("idp"),
        N("rp", goal=goal),
        N("b"),
    ]


def schedule_state_leak(reg: Registry) -> list:
    return _open("rp") + [N("rp"), N("b")] + _code_flow(reg, "authz") + [
        T("b", switch="script", sw="link", link="att"),
        N("dns"), N("b"),
        N("att", move="eve-login"),
        N("idp"),
        N("att", move="leak-redirect"),
        N("b"), N("dns"), N("b"),
        N("rp"), N("dns"), N("rp"), N("idp"),
        N("rp"), N("dns"), N("rp"), N("idp"),
        N("rp", goal="authn"),
        N("b"),
    ]


def schedule_naive(reg: Registry) -> list:
    return [
        T("att", move="eve-login"),
        N("idp"),
        N("att"),
    ] + _victim_start(reg, "aidp.com", "code") + [
        N("dns"), N("b"),
        N("att", move="naive-redirect"),
        N("b"), N("dns"), N("b"),
        N("rp"), N("dns"), N("rp"), N("idp"),
        N("rp"), N("dns"), N("rp"), N("idp"),
        N("rp", goal="authn"),
        N("b"),
    ]


def schedule_honest(reg: Registry) -> list:
    return _open("rp") + [N("rp"), N("b")] + _code_flow(reg, "authz") + _code_flow(reg, "authn")


SCHEDULES = {
    "attack-307": schedule_307,
    "mixup-code": schedule_mixup_code,
    "mixup-implicit": schedule_mixup_implicit,
    "state-leak": schedule_state_leak,
    "naive-rp": schedule_naive,
    "honest-fixed": schedule_honest,
}
