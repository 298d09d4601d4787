"""Attacker move menus.

A move is a list of events the attacker emits after receiving one event. The
atomic actions below read the attacker's own history (decrypting whatever it
can) and build messages; the runtime independently checks that every emitted
message is derivable from the attacker's knowledge.
"""

from __future__ import annotations

from .messages import (
    GET,
    H_COOKIE,
    H_LOCATION,
    H_ORIGIN,
    H_REFERER,
    H_SET_COOKIE,
    HTTP_RESP,
    POST,
    S,
    URL,
    DecryptError,
    HttpRequest,
    https_unwrap_request,
    https_unwrap_response,
    try_validate,
)
from .runtime import Event, Move, nu
from .terms import EMPTY, Num, Seq, Str, Term, dict_get, dict_has, enc_a, enc_s, items_of, make_dict, pub, seq

ATOMS = (
    "steal-login",
    "start-login",
    "introspect",
    "implicit-post",
    "redeem-code",
    "mixup-redirect",
    "naive-redirect",
    "eve-login",
    "leak-redirect",
    "serve-page",
)

ATT_SCRIPT = Str("att_script")


def k(name: str) -> Str:
    return Str(name)


class _Received:
    """Decrypted view of one received event."""

    def __init__(self, event: Term, request=None, key=None, response=None, domain=None):
        self.event = event
        self.request = request
        self.key = key
        self.response = response
        self.domain = domain


class Toolkit:
    def __init__(self, registry, attacker_pid: str):
        self.reg = registry
        self.pid = attacker_pid
        self._cache: dict = {}

    # -- reading the history ------------------------------------------------

    def decode(self, ev: Term) -> _Received:
        got = self._cache.get(ev)
        if got is not None:
            return got
        msg = ev.items[2]
        got = _Received(ev)
        for domain, priv in self.reg.attacker_private_keys(self.pid):
            try:
                req, key = https_unwrap_request(msg, priv)
            except DecryptError:
                continue
            got = _Received(ev, request=req, key=key, domain=domain)
            break
        else:
            try:
                got = _Received(ev, response=https_unwrap_response(msg, self.reg.attacker_sym_key(self.pid)))
            except DecryptError:
                pass
        self._cache[ev] = got
        return got

    def history(self, view) -> list:
        return [self.decode(e) for e in view.received()]

    def newest_token(self, hist) -> Term | None:
        found = None
        for r in hist:
            if r.response is not None:
                t = dict_get(r.response.body, k("access_token"))
                if t != EMPTY:
                    found = t
                loc = try_validate("url", r.response.header(H_LOCATION))
                if loc is not None and type(loc.fragment) is Seq and dict_has(loc.fragment, k("access_token")):
                    found = dict_get(loc.fragment, k("access_token"))
            if r.request is not None and dict_has(r.request.params, k("token")):
                found = r.request.param(k("token"))
        return found

    def newest_code(self, hist) -> Term | None:
        found = None
        for r in hist:
            if r.request is not None and dict_get(r.request.body, k("grant_type")) == k("authorization_code"):
                found = dict_get(r.request.body, k("code"))
        return found

    def rp_login(self, hist):
        """(session id, state) from the newest login redirect an RP sent us."""
        found = None
        for r in hist:
            if r.response is None:
                continue
            cookies = r.response.header(H_SET_COOKIE)
            sid = None
            for c in items_of(cookies):
                if type(c) is Seq and len(c.items) == 2 and c.items[0] == k("loginSessionId"):
                    sid = c.items[1].items[0]
            loc = try_validate("url", r.response.header(H_LOCATION))
            if sid is not None and loc is not None:
                found = (sid, dict_get(loc.params, k("state")))
        return found

    def credentials(self, hist):
        found = None
        for r in hist:
            if r.request is None:
                continue
            u = dict_get(r.request.body, k("username"))
            p = dict_get(r.request.body, k("password"))
            if u != EMPTY and p != EMPTY:
                found = (u, p)
        return found

    def leaked_state(self, hist) -> Term | None:
        found = None
        for r in hist:
            if r.request is None:
                continue
            ref = try_validate("url", r.request.header(H_REFERER))
            if ref is not None and dict_has(ref.params, k("state")):
                found = dict_get(ref.params, k("state"))
        return found

    def own_code_location(self, hist) -> Term | None:
        found = None
        for r in hist:
            if r.response is None:
                continue
            loc = try_validate("url", r.response.header(H_LOCATION))
            if loc is not None and dict_has(loc.params, k("code")):
                found = loc
        return found

    def browser_request(self, hist):
        """Newest request an honest browser sent to one of our domains."""
        found = None
        for r in hist:
            if r.request is not None and self.reg.kind_of_address(r.event.items[1]) == "browser":
                found = r
        return found

    # -- building messages --------------------------------------------------

    def request(self, host: str, method: Term, path: str, params=EMPTY, headers=EMPTY, body=EMPTY,
                nonce_index: int = 1) -> Event:
        req = HttpRequest(nu(nonce_index), method, Str(host), Str(path), params, headers, body)
        msg = enc_a(seq(req.to_term(), self.reg.attacker_sym_key(self.pid)), pub(self.reg.private_key(host)))
        return Event(self.reg.address_of_domain(host), self.reg.address(self.pid), msg)

    @staticmethod
    def reply(r: _Received, status: int, headers=EMPTY, body=EMPTY) -> Event:
        resp = seq(HTTP_RESP, r.request.nonce, Num(status), headers, body)
        receiver, sender = r.event.items[0], r.event.items[1]
        return Event(sender, receiver, enc_s(resp, r.key))

    # -- atomic actions -----------------------------------------------------
    # each returns a list of events or None when unavailable

    def action(self, name: str, view, hist, n: int):
        reg = self.reg
        idp_host = reg.honest_idp_domain
        rp_host = reg.honest_rp_domain
        cid = reg.client_id_string(reg.honest_rp, reg.honest_idp)
        cur = hist[-1]
        if name == "steal-login":
            creds = self.credentials(hist)
            if creds is None:
                return None
            body = make_dict([(k("username"), creds[0]), (k("password"), creds[1]), (k("client_id"), cid),
                              (k("response_type"), k("token")), (k("state"), k("st"))])
            return [self.request(idp_host, POST, "/auth", headers=seq(seq(H_ORIGIN, seq(Str(idp_host), S))),
                                 body=body, nonce_index=n)]
        if name == "eve-login":
            creds = reg.attacker_credentials(self.pid)
            if not creds:
                return None
            state = self.leaked_state(hist) or k("st")
            body = make_dict([(k("username"), creds[0][0]), (k("password"), creds[0][1]), (k("client_id"), cid),
                              (k("response_type"), k("code")), (k("state"), state)])
            return [self.request(idp_host, POST, "/auth", headers=seq(seq(H_ORIGIN, seq(Str(idp_host), S))),
                                 body=body, nonce_index=n)]
        if name == "start-login":
            return [self.request(rp_host, POST, "/startInteractiveLogin",
                                 headers=seq(seq(H_ORIGIN, seq(Str(rp_host), S))), body=Str(idp_host),
                                 nonce_index=n)]
        if name == "introspect":
            token = self.newest_token(hist)
            if token is None:
                return None
            return [self.request(idp_host, GET, "/introspect", params=seq(seq(k("token"), token)), nonce_index=n)]
        if name == "implicit-post":
            token = self.newest_token(hist)
            login = self.rp_login(hist)
            if token is None or login is None:
                return None
            sid, state = login
            headers = seq(seq(H_ORIGIN, seq(Str(rp_host), S)), seq(H_COOKIE, seq(seq(k("loginSessionId"), sid))))
            return [self.request(rp_host, POST, "/receiveTokenFromImplicitGrant", headers=headers,
                                 body=seq(token, state, Str(idp_host)), nonce_index=n)]
        if name == "redeem-code":
            code = self.newest_code(hist)
            if code is None:
                return None
            body = make_dict([(k("grant_type"), k("authorization_code")), (k("code"), code), (k("client_id"), cid)])
            return [self.request(idp_host, POST, "/token", body=body, nonce_index=n)]
        if name in ("mixup-redirect", "naive-redirect"):
            if cur.request is None or cur.request.path != k("/auth"):
                return None
            params = cur.request.params
            if name == "mixup-redirect":
                target = seq(URL, S, Str(idp_host), k("/auth"),
                             make_dict([(k("response_type"), dict_get(params, k("response_type"))),
                                        (k("client_id"), cid), (k("state"), dict_get(params, k("state")))]),
                             EMPTY)
            else:
                loc = self.own_code_location(hist)
                if loc is None:
                    return None
                target = loc.with_(params=make_dict(
                    [(x.items[0], x.items[1]) for x in items_of(loc.params) if x.items[0] != k("state")]
                    + [(k("state"), dict_get(params, k("state")))])).to_term()
            return [self.reply(cur, 303, seq(seq(H_LOCATION, target)))]
        if name == "leak-redirect":
            loc = self.own_code_location(hist)
            target = self.browser_request(hist)
            if loc is None or target is None:
                return None
            return [self.reply(target, 303, seq(seq(H_LOCATION, loc.to_term())))]
        if name == "serve-page":
            if cur.request is None:
                return None
            return [self.reply(cur, 200, EMPTY, seq(ATT_SCRIPT, EMPTY))]
        raise ValueError(f"unknown attacker action {name}")

    def menu(self, combos):
        """Move generator offering each combination whose actions all apply."""
        combos = [tuple(c.split("+")) if isinstance(c, str) else tuple(c) for c in combos]

        def gen(view):
            hist = self.history(view)
            moves = []
            for combo in combos:
                events = []
                n = 1
                for name in combo:
                    got = self.action(name, view, hist, n)
                    if got is None:
                        break
                    events.extend(got)
                    n += 1
                else:
                    moves.append(Move("+".join(combo), events))
            return moves

        return gen
