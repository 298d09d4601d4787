"""Relying party process and the two RP scripts."""

from __future__ import annotations

from dataclasses import dataclass

from .browser import FORM, HREF, ScriptInput, get_doc_window, get_url
from .messages import (
    DNS_RESOLVE,
    GET,
    H_AUTHORIZATION,
    H_COOKIE,
    H_LOCATION,
    H_ORIGIN,
    H_REFERRER_POLICY,
    H_SET_COOKIE,
    HTTP_RESP,
    ORIGIN_POLICY,
    POST,
    S,
    URL,
    DecryptError,
    HttpRequest,
    HttpResponse,
    https_unwrap_request,
    try_validate,
)
from .runtime import Chooser, Event, Process, StepContext, Stop, TRIGGER, nu
from .terms import (
    BOT,
    EMPTY,
    TOP,
    Addr,
    Num,
    Seq,
    Str,
    Term,
    dec_s,
    dict_get,
    dict_has,
    dict_put,
    dict_remove,
    enc_a,
    enc_s,
    items_of,
    normalize,
    proj,
    seq,
    to_text,
)

CORRUPT = Str("corrupt")

# reference tags
CODE = Str("code")
TOKEN = Str("token")
PASSWORD = Str("password")
CLIENT_CREDENTIALS = Str("client_credentials")
INTROSPECT = Str("introspect")
IMPLICIT = Str("implicit")

LOGIN_SESSION_ID = Str("loginSessionId")
SERVICE_TOKEN = Str("serviceToken")

SCRIPT_RP_INDEX = Str("script_rp_index")
SCRIPT_RP_IMPLICIT = Str("script_rp_implicit")


def k(name: str) -> Str:
    return Str(name)


@dataclass(frozen=True)
class IdpRecord:
    """IdP registration record as stored in the RP state."""

    token_endpoint: Term
    authorization_endpoint: Term
    introspection_endpoint: Term
    client_id: Term
    client_password: Term

    def to_term(self) -> Seq:
        return seq(self.token_endpoint, self.authorization_endpoint, self.introspection_endpoint, self.client_id,
                   self.client_password)

    @classmethod
    def from_term(cls, t: Term) -> "IdpRecord":
        return cls(*t.items)


def initial_rp_state(dns_address: Term, idps: Term, key_mapping: Term, sslkeys: Term) -> Seq:
    return seq(dns_address, idps, EMPTY, EMPTY, key_mapping, sslkeys, EMPTY, EMPTY, BOT)


@dataclass
class RpToggles:
    iss_check: bool = True
    intention_tracking: str = "explicit"
    referrer_policy: bool = True
    start_status: int | None = 303
    fresh_state: bool = True


class RpState:
    def __init__(self, t: Term):
        (self.dns_address, self.idps, self.service_tokens, self.login_sessions, self.key_mapping, self.sslkeys,
         self.pending_dns, self.pending_requests, self.corrupt) = t.items

    def to_term(self) -> Seq:
        return seq(self.dns_address, self.idps, self.service_tokens, self.login_sessions, self.key_mapping,
                   self.sslkeys, self.pending_dns, self.pending_requests, self.corrupt)

    def idp(self, domain: Term) -> IdpRecord | None:
        rec = dict_get(self.idps, domain)
        if type(rec) is not Seq or len(rec.items) != 5:
            return None
        return IdpRecord.from_term(rec)


def _url_parts(u: Term):
    v = try_validate("url", u)
    if v is None:
        raise Stop("bad endpoint url")
    return v


class RelyingParty(Process):
    kind = "rp"

    def __init__(self, pid: str, addresses, initial: Term, toggles: RpToggles | None = None,
                 static_state: Term | None = None):
        self.pid = pid
        self.addresses = tuple(addresses)
        self.initial = initial
        self.toggles = toggles or RpToggles()
        # only used when fresh_state is off: one state value for every login
        self.static_state = static_state

    def initial_state(self) -> Term:
        return self.initial

    def _policy(self, headers: Term) -> Term:
        if self.toggles.referrer_policy:
            return Seq(items_of(headers) + (seq(H_REFERRER_POLICY, ORIGIN_POLICY),))
        return headers

    def relation(self, event: Event, state: Term, ch: Chooser, ctx: StepContext):
        s = RpState(state)
        a, f, m = event.receiver, event.sender, event.msg
        if s.corrupt != BOT or m == CORRUPT:
            s.corrupt = seq(event.to_term(), s.corrupt)
            return [], s.to_term()
        for entry in items_of(s.pending_requests):
            if type(entry) is not Seq or len(entry.items) != 4:
                continue
            reference, request, key, _ = entry.items
            plain = normalize(dec_s(m, key))
            if normalize(proj(1, plain)) != HTTP_RESP:
                continue
            resp = try_validate("http-response", plain)
            if resp is None or resp.nonce != request.items[1]:
                raise Stop("response nonce mismatch")
            s.pending_requests = Seq(e for e in s.pending_requests.items if e != entry)
            ctx.meta["response_from"] = request.items[3]
            out = self._https_response(s, a, resp, reference, ch, ctx)
            return out, s.to_term()
        dns = try_validate("dns-response", m)
        if dns is not None:
            if not dict_has(s.pending_dns, dns.nonce) or type(dns.address) is not Addr:
                raise Stop("unexpected DNS response")
            reference, request = dict_get(s.pending_dns, dns.nonce).items
            if dns.domain != request.items[3]:
                raise Stop("DNS domain mismatch")
            s.pending_requests = Seq(items_of(s.pending_requests) + (seq(reference, request, nu(4), dns.address),))
            message = enc_a(seq(request, nu(4)), dict_get(s.key_mapping, request.items[3]))
            s.pending_dns = dict_remove(s.pending_dns, dns.nonce)
            ctx.meta["https_key"] = nu(4)
            ctx.meta["https_host"] = request.items[3]
            return [Event(dns.address, a, message)], s.to_term()
        if m == TRIGGER:
            entries = list(items_of(s.idps))
            entry = ch.pick("idp", entries, lambda e: to_text(e.items[0]))
            idp = entry.items[0]
            rec = s.idp(idp)
            te = _url_parts(rec.token_endpoint)
            headers = seq(seq(H_AUTHORIZATION, seq(rec.client_id, rec.client_password)))
            msg = HttpRequest(nu(5), POST, te.host, te.path, te.params, headers,
                              seq(seq(k("grant_type"), CLIENT_CREDENTIALS)))
            s.pending_dns = dict_put(s.pending_dns, nu(6),
                                     seq(seq(CLIENT_CREDENTIALS, idp, BOT, BOT, BOT, BOT), msg.to_term()))
            return [Event(s.dns_address, a, seq(DNS_RESOLVE, te.host, nu(6)))], s.to_term()
        out = self._http_request(s, a, f, m, ch, ctx)
        return out, s.to_term()

    # -- responses from IdPs ----------------------------------------------------

    def _https_response(self, s: RpState, a: Term, resp: HttpResponse, reference: Term, ch: Chooser,
                        ctx: StepContext) -> list:
        mode = reference.items[0] if type(reference) is Seq and reference.items else BOT
        if mode in (CODE, PASSWORD, CLIENT_CREDENTIALS):
            if len(reference.items) != 6:
                raise Stop("bad reference")
            _, idp, a2, f2, n2, k2 = reference.items
            token = dict_get(resp.body, k("access_token"))
            rec = s.idp(idp)
            if rec is None:
                raise Stop("unknown idp")
            ie = _url_parts(rec.introspection_endpoint)
            params = Seq(items_of(ie.params) + (seq(k("token"), token),))
            msg = HttpRequest(nu(1), GET, ie.host, ie.path, params, EMPTY, EMPTY)
            s.pending_dns = dict_put(s.pending_dns, nu(2),
                                     seq(seq(INTROSPECT, mode, idp, a2, f2, n2, k2), msg.to_term()))
            ctx.meta["introspect_token"] = token
            return [Event(s.dns_address, a, seq(DNS_RESOLVE, ie.host, nu(2)))]
        if mode == INTROSPECT:
            body = resp.body
            if not (type(body) is Seq and len(body.items) == 3
                    and all(type(x) is Seq and len(x.items) == 2 for x in body.items)
                    and body.items[0].items[0] == k("protected_resource")
                    and body.items[1].items[0] == k("client_id")
                    and body.items[2].items[0] == k("user")):
                raise Stop("bad introspection body")
            resource, client_id, user = (x.items[1] for x in body.items)
            if len(reference.items) != 7:
                raise Stop("bad reference")
            _, mode2, idp, a2, f2, n2, k2 = reference.items
            if mode2 == CLIENT_CREDENTIALS:
                raise Stop("client credentials: no service token")
            goal = ch.pick("goal", ["authz", "authn"])
            rec = s.idp(idp)
            if rec is None:
                raise Stop("unknown idp")
            if goal == "authz":
                headers = EMPTY
            else:
                ok = client_id == rec.client_id or (
                    client_id == EMPTY and mode2 == PASSWORD and rec.client_password == BOT)
                if not ok:
                    raise Stop("foreign client id")
                if user == EMPTY:
                    raise Stop("no user")
                s.service_tokens = dict_put(s.service_tokens, nu(3), seq(user, idp))
                headers = seq(seq(H_SET_COOKIE, seq(seq(SERVICE_TOKEN, seq(nu(3), BOT, BOT, TOP)))))
                ctx.meta["service_token"] = nu(3)
                ctx.meta["service_record"] = seq(user, idp)
            headers = self._policy(headers)
            out = enc_s(seq(HTTP_RESP, n2, Num(200), headers, seq(SCRIPT_RP_INDEX, EMPTY)), k2)
            ctx.meta["ends"] = {"idp_domain": idp, "idp_host": ctx.meta.get("response_from"), "resource": resource,
                                "user": user, "client_id": client_id, "to": f2, "goal": goal, "mode": mode2}
            return [Event(f2, a2, out)]
        raise Stop("unknown reference")

    # -- requests from browsers -------------------------------------------------

    def _decrypt(self, s: RpState, m: Term):
        for entry in items_of(s.sslkeys):
            domain, key = entry.items
            try:
                req, sym = https_unwrap_request(m, key)
            except DecryptError:
                continue
            if req.host != domain:
                continue
            return req, sym, domain
        return None

    def _http_request(self, s: RpState, a, f, m, ch: Chooser, ctx: StepContext) -> list:
        got = self._decrypt(s, m)
        if got is None:
            raise Stop("not for us")
        req, key, in_domain = got
        n, method, path, params, headers, body = req.nonce, req.method, req.path, req.params, req.headers, req.body
        own_origin = seq(in_domain, S)
        ctx.meta["request_path"] = path.value

        def reply(resp: Term) -> list:
            return [Event(f, a, enc_s(resp, key))]

        if path == k("/"):
            return reply(seq(HTTP_RESP, n, Num(200), self._policy(EMPTY), seq(SCRIPT_RP_INDEX, EMPTY)))

        if path == k("/startInteractiveLogin") and method == POST:
            if dict_get(headers, H_ORIGIN) != own_origin:
                raise Stop("CSRF")
            idp = body
            rec = s.idp(idp)
            if rec is None or not dict_has(s.idps, idp):
                raise Stop("unknown idp")
            state = nu(7) if self.toggles.fresh_state else self.static_state
            mode = ch.pick("mode", [CODE, TOKEN])
            if self.toggles.start_status is None:
                status = ch.pick("status", [Num(303), Num(307)])
            else:
                status = Num(self.toggles.start_status)
            ae = _url_parts(rec.authorization_endpoint)
            params2 = Seq(items_of(ae.params) + (seq(k("response_type"), mode), seq(k("client_id"), rec.client_id),
                                                 seq(k("state"), state)))
            auth_url = ae.with_(params=params2).to_term()
            want_uri = ch.pick("redirect_uri", [BOT, TOP])
            if want_uri == TOP:
                sslkey = ch.pick("rp_domain", list(items_of(s.sslkeys)), lambda e: to_text(e.items[0]))
                redirect_uri = seq(URL, S, sslkey.items[0], k("/redirectionEndpoint"), seq(seq(k("idp"), idp)), EMPTY)
            else:
                redirect_uri = BOT
            s.login_sessions = Seq(items_of(s.login_sessions)
                                   + (seq(nu(8), seq(idp, state, mode, redirect_uri)),))
            hdrs = seq(seq(H_LOCATION, auth_url),
                       seq(H_SET_COOKIE, seq(seq(LOGIN_SESSION_ID, seq(nu(8), TOP, TOP, TOP)))))
            hdrs = self._policy(hdrs)
            ctx.meta["login_session"] = nu(8)
            ctx.meta["state_nonce"] = state
            ctx.meta["login_for"] = f
            ctx.meta["login_idp"] = idp
            return reply(seq(HTTP_RESP, n, status, hdrs, BOT))

        if path == k("/redirectionEndpoint"):
            sid = dict_get(dict_get(headers, H_COOKIE), LOGIN_SESSION_ID)
            session = dict_get(s.login_sessions, sid)
            if type(session) is not Seq or len(session.items) != 4:
                raise Stop("no login session")
            idp, state, mode, redirect_uri = session.items
            if self.toggles.intention_tracking == "naive":
                # the IdP is inferred from the redirect parameters alone
                idp = dict_get(params, k("iss"))
                rec = s.idp(idp)
                if rec is None:
                    raise Stop("unknown issuer")
                if rec.client_id != dict_get(params, k("client_id")):
                    raise Stop("client id mismatch")
            else:
                rec = s.idp(idp)
                if rec is None:
                    raise Stop("unknown idp")
                if self.toggles.iss_check and (idp != dict_get(params, k("iss"))
                                               or rec.client_id != dict_get(params, k("client_id"))):
                    raise Stop("issuer check failed")
            ctx.meta["redirect_session"] = sid
            if mode == CODE:
                if dict_get(params, k("state")) != state:
                    raise Stop("state mismatch")
                code = dict_get(params, k("code"))
                tr_headers = EMPTY
                tr_body = [seq(k("grant_type"), k("authorization_code")), seq(k("code"), code)]
                if redirect_uri != BOT:
                    tr_body.append(seq(k("redirect_uri"), redirect_uri))
                if rec.client_password == BOT:
                    tr_body.append(seq(k("client_id"), rec.client_id))
                else:
                    tr_headers = seq(seq(H_AUTHORIZATION, seq(rec.client_id, rec.client_password)))
                te = _url_parts(rec.token_endpoint)
                msg = HttpRequest(nu(9), POST, te.host, te.path, te.params, tr_headers, Seq(tr_body))
                s.pending_dns = dict_put(s.pending_dns, nu(10), seq(seq(CODE, idp, a, f, n, key), msg.to_term()))
                ctx.meta["code_sent"] = code
                return [Event(s.dns_address, a, seq(DNS_RESOLVE, te.host, nu(10)))]
            if mode == TOKEN:
                return reply(seq(HTTP_RESP, n, Num(200), self._policy(EMPTY), seq(SCRIPT_RP_IMPLICIT, idp)))
            raise Stop("unknown mode")

        if path == k("/passwordLogin") and method == POST:
            if dict_get(headers, H_ORIGIN) != own_origin:
                raise Stop("CSRF")
            if not (type(body) is Seq and len(body.items) == 2 and type(body.items[0]) is Seq
                    and len(body.items[0].items) == 2):
                raise Stop("bad body")
            (username, idp), password = body.items[0].items, body.items[1]
            rec = s.idp(idp)
            if rec is None:
                raise Stop("unknown idp")
            tr_headers = EMPTY
            tr_body = seq(seq(k("grant_type"), PASSWORD), seq(k("username"), seq(username, idp)),
                          seq(k("password"), password))
            if rec.client_password != BOT:
                tr_headers = seq(seq(H_AUTHORIZATION, seq(rec.client_id, rec.client_password)))
            te = _url_parts(rec.token_endpoint)
            msg = HttpRequest(nu(11), POST, te.host, te.path, te.params, tr_headers, tr_body)
            s.pending_dns = dict_put(s.pending_dns, nu(12), seq(seq(PASSWORD, idp, a, f, n, key), msg.to_term()))
            return [Event(s.dns_address, a, seq(DNS_RESOLVE, te.host, nu(12)))]

        if path == k("/receiveTokenFromImplicitGrant") and method == POST:
            if dict_get(headers, H_ORIGIN) != own_origin:
                raise Stop("CSRF")
            sid = dict_get(dict_get(headers, H_COOKIE), LOGIN_SESSION_ID)
            session = dict_get(s.login_sessions, sid)
            if type(session) is not Seq or len(session.items) != 4:
                raise Stop("no login session")
            idp, state, mode, redirect_uri = session.items
            if not (type(body) is Seq and len(body.items) == 3 and body.items[1] == state and body.items[2] == idp):
                raise Stop("bad token body")
            token = body.items[0]
            rec = s.idp(idp)
            ie = _url_parts(rec.introspection_endpoint)
            params2 = Seq(items_of(ie.params) + (seq(k("token"), token),))
            msg = HttpRequest(nu(13), GET, ie.host, ie.path, params2, EMPTY, EMPTY)
            s.pending_dns = dict_put(s.pending_dns, nu(14),
                                     seq(seq(INTROSPECT, IMPLICIT, idp, a, f, n, key), msg.to_term()))
            ctx.meta["introspect_token"] = token
            return [Event(s.dns_address, a, seq(DNS_RESOLVE, ie.host, nu(14)))]
        raise Stop("unhandled request")


# ---------------------------------------------------------------------------
# scripts


def script_rp_index(inp: ScriptInput, ch: Chooser, ctx: StepContext) -> Term:
    reg = ctx.system.registry
    links = reg.link_menu() if reg is not None else []
    switches = ["auth", "link"] if links else ["auth"]
    switch = ch.pick("sw", switches)
    ctx.meta["script_switch"] = switch
    if switch == "auth":
        url = try_validate("url", get_url(inp.tree, inp.docnonce))
        if url is None:
            raise Stop("document not found")
        ident = ch.pick("id", list(items_of(inp.ids)))
        domain = normalize(proj(2, ident))
        interactive = ch.pick("interactive", [BOT, TOP])
        ctx.meta["selected_id"] = ident
        ctx.meta["selected_domain"] = domain
        ctx.meta["interactive"] = interactive
        if interactive == TOP:
            target = seq(URL, S, url.host, k("/startInteractiveLogin"), EMPTY, EMPTY)
            command = seq(FORM, target, POST, domain, BOT)
        else:
            target = seq(URL, S, url.host, k("/passwordLogin"), EMPTY, EMPTY)
            secret = reg.secret_of_id(ident) if reg is not None else None
            if secret is None or secret not in items_of(inp.secrets):
                return inp.output(EMPTY)
            command = seq(FORM, target, POST, seq(ident, secret), BOT)
        ctx.meta["starts_oa"] = True
        return inp.output(command)
    name, url = ch.pick("link", links, lambda o: o[0])
    return inp.output(seq(HREF, url, get_doc_window(inp.tree, inp.docnonce), BOT))


def script_rp_implicit(inp: ScriptInput, ch: Chooser, ctx: StepContext) -> Term:
    url = try_validate("url", get_url(inp.tree, inp.docnonce))
    if url is None:
        raise Stop("document not found")
    target = seq(URL, S, url.host, k("/receiveTokenFromImplicitGrant"), EMPTY, EMPTY)
    frag = url.fragment
    body = seq(dict_get(frag, k("access_token")), dict_get(frag, k("state")), inp.scriptstate)
    return inp.output(seq(FORM, target, POST, body, BOT))
