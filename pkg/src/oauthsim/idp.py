"""Identity provider process and the login form script."""

from __future__ import annotations

from dataclasses import dataclass

from .browser import FORM, ScriptInput, get_url
from .messages import (
    GET,
    H_AUTHORIZATION,
    H_LOCATION,
    H_ORIGIN,
    H_REFERRER_POLICY,
    HTTP_RESP,
    ORIGIN_POLICY,
    POST,
    S,
    DecryptError,
    https_unwrap_request,
    try_validate,
)
from .runtime import Chooser, Event, Process, StepContext, Stop
from .terms import (
    BOT,
    EMPTY,
    Num,
    Seq,
    Str,
    Term,
    dict_get,
    dict_remove,
    enc_s,
    items_of,
    matches,
    normalize,
    proj,
    seq,
)
from .runtime import nu

CORRUPT = Str("corrupt")
SCRIPT_IDP_FORM = Str("script_idp_form")


def k(name: str) -> Str:
    return Str(name)


def initial_idp_state(sslkeys: Term, resources: Term, clients: Term, auth_path: str = "/auth",
                      token_path: str = "/token", introspect_path: str = "/introspect") -> Seq:
    return seq(sslkeys, resources, Str(auth_path), Str(token_path), Str(introspect_path), clients, EMPTY, EMPTY, BOT)


class IdpState:
    def __init__(self, t: Term):
        (self.sslkeys, self.srlist, self.auth_endpoint, self.token_endpoint, self.introspect_endpoint,
         self.clients, self.codes, self.atokens, self.corrupt) = t.items

    def to_term(self) -> Seq:
        return seq(self.sslkeys, self.srlist, self.auth_endpoint, self.token_endpoint, self.introspect_endpoint,
                   self.clients, self.codes, self.atokens, self.corrupt)


@dataclass
class IdpToggles:
    redirect_status: int = 303
    referrer_policy: bool = True


def _matches_any(uri: Term, patterns: Term) -> bool:
    return any(matches(uri, p) for p in items_of(patterns))


def _has_wildcard(t: Term) -> bool:
    from .terms import Var, subterms

    return any(type(x) is Var and x.kind == "*" for x in subterms(t))


class IdentityProvider(Process):
    kind = "idp"

    def __init__(self, pid: str, addresses, initial: Term, toggles: IdpToggles | None = None):
        self.pid = pid
        self.addresses = tuple(addresses)
        self.initial = initial
        self.toggles = toggles or IdpToggles()

    def initial_state(self) -> Term:
        return self.initial

    def _password(self, reg, username: Term) -> Term | None:
        # only identities this IdP governs can log in here
        ident = reg.identity(username)
        if ident is None or ident.governor != self.pid:
            return None
        return ident.secret

    def relation(self, event: Event, state: Term, ch: Chooser, ctx: StepContext):
        s = IdpState(state)
        a, f, m = event.receiver, event.sender, event.msg
        if s.corrupt != BOT or m == CORRUPT:
            s.corrupt = seq(event.to_term(), s.corrupt)
            return [], s.to_term()
        got = None
        for entry in items_of(s.sslkeys):
            domain, key = entry.items
            try:
                req, sym = https_unwrap_request(m, key)
            except DecryptError:
                continue
            if req.host == domain:
                got = req, sym, domain
                break
        if got is None:
            raise Stop("not for us")
        req, key, in_domain = got
        reg = ctx.system.registry
        out = self._handle(s, req, in_domain, reg, ch, ctx)
        ctx.meta["request_path"] = req.path.value
        return [Event(f, a, enc_s(out, key))], s.to_term()

    def _handle(self, s: IdpState, req, in_domain: Term, reg, ch: Chooser, ctx: StepContext) -> Term:
        n, method, path, params, headers, body = req.nonce, req.method, req.path, req.params, req.headers, req.body
        if path == s.auth_endpoint:
            if method == GET or (method == POST and (dict_get(body, k("username")) == EMPTY
                                                     or dict_get(body, k("password")) == EMPTY)):
                hdrs = seq(seq(H_REFERRER_POLICY, ORIGIN_POLICY)) if self.toggles.referrer_policy else EMPTY
                return seq(HTTP_RESP, n, Num(200), hdrs, seq(SCRIPT_IDP_FORM, params))
            if method != POST:
                raise Stop("bad method")
            if dict_get(headers, H_ORIGIN) != seq(in_domain, S):
                raise Stop("CSRF")
            username = dict_get(body, k("username"))
            password = dict_get(body, k("password"))
            client_id = dict_get(body, k("client_id"))
            allowed = dict_get(s.clients, client_id)
            secret = self._password(reg, username)
            if secret is None or password != secret:
                raise Stop("wrong password")
            if allowed == EMPTY:
                raise Stop("unknown client")
            redirect_uri = dict_get(body, k("redirect_uri"))
            if redirect_uri != EMPTY:
                if not _matches_any(redirect_uri, allowed):
                    raise Stop("redirect uri not registered")
            else:
                # only concrete registrations can serve as a default target
                options = [u for u in items_of(allowed) if not _has_wildcard(u)]
                redirect_uri = ch.pick("redirect", options)
            target = try_validate("url", redirect_uri)
            if target is None:
                raise Stop("redirect uri is not a url")
            status = Num(self.toggles.redirect_status)
            if dict_get(body, k("response_type")) == k("code"):
                s.codes = Seq(items_of(s.codes) + (seq(nu(1), seq(client_id, dict_get(body, k("redirect_uri")),
                                                                  username)),))
                target = target.with_(params=Seq(items_of(target.params) + (
                    seq(k("code"), nu(1)), seq(k("state"), dict_get(body, k("state"))))))
                ctx.meta["code_issued"] = nu(1)
                ctx.meta["code_for"] = (client_id, username)
            else:
                s.atokens = Seq(items_of(s.atokens) + (seq(nu(1), client_id, username),))
                frag = target.fragment if type(target.fragment) is Seq else EMPTY
                target = target.with_(fragment=Seq(items_of(frag) + (
                    seq(k("access_token"), nu(1)), seq(k("token_type"), k("bearer")),
                    seq(k("state"), dict_get(body, k("state"))))))
                ctx.meta["token_issued"] = nu(1)
                ctx.meta["token_for"] = (client_id, username)
            ctx.meta["login_user"] = username
            return seq(HTTP_RESP, n, status, seq(seq(H_LOCATION, target.to_term())), EMPTY)

        if path == s.token_endpoint:
            if method != POST:
                raise Stop("bad method")
            auth = BOT
            client_id = BOT
            if dict_get(body, k("client_id")) != EMPTY:
                client_id = dict_get(body, k("client_id"))
                if dict_get(s.clients, client_id) == EMPTY or reg.secret_of_client_id(self.pid, client_id) != BOT:
                    raise Stop("client needs a secret")
            elif normalize(proj(1, dict_get(headers, H_AUTHORIZATION))) != EMPTY:
                cred = dict_get(headers, H_AUTHORIZATION)
                client_id = normalize(proj(1, cred))
                client_pw = normalize(proj(2, cred))
                expected = reg.secret_of_client_id(self.pid, client_id)
                if expected is None or expected != client_pw or client_pw == BOT:
                    raise Stop("client authentication failed")
                auth = client_id
            grant = dict_get(body, k("grant_type"))
            if grant == k("authorization_code"):
                if client_id == BOT:
                    raise Stop("no client")
                code = dict_get(body, k("code"))
                info = dict_get(s.codes, code)
                if info == EMPTY or type(info) is not Seq or len(info.items) != 3 \
                        or info.items[0] != client_id or info.items[1] != dict_get(body, k("redirect_uri")):
                    raise Stop("bad code")
                s.codes = dict_remove(s.codes, code)
                s.atokens = Seq(items_of(s.atokens) + (seq(nu(1), client_id, info.items[2]),))
                ctx.meta["code_redeemed"] = code
                ctx.meta["token_for"] = (client_id, info.items[2])
            elif grant == k("password"):
                username = dict_get(body, k("username"))
                secret = self._password(reg, username)
                if secret is None or dict_get(body, k("password")) != secret:
                    raise Stop("wrong password")
                s.atokens = Seq(items_of(s.atokens) + (seq(nu(1), client_id, username),))
                ctx.meta["token_for"] = (client_id, username)
            elif grant == k("client_credentials"):
                if auth == BOT:
                    raise Stop("client credentials need authentication")
                s.atokens = Seq(items_of(s.atokens) + (seq(nu(1), client_id, BOT),))
                ctx.meta["token_for"] = (client_id, BOT)
            else:
                raise Stop("unknown grant")
            ctx.meta["token_issued"] = nu(1)
            return seq(HTTP_RESP, n, Num(200), EMPTY,
                       seq(seq(k("access_token"), nu(1)), seq(k("token_type"), k("bearer"))))

        if path == s.introspect_endpoint:
            if method != GET:
                raise Stop("bad method")
            token = dict_get(params, k("token"))
            for entry in items_of(s.atokens):
                if type(entry) is Seq and len(entry.items) == 3 and entry.items[0] == token:
                    _, client_id, user = entry.items
                    break
            else:
                raise Stop("unknown token")
            resource = reg.resource_of(self.pid, client_id, user)
            if resource is None:
                raise Stop("no resource")
            ctx.meta["introspected"] = {"client_id": client_id, "user": user, "resource": resource}
            return seq(HTTP_RESP, n, Num(200), EMPTY,
                       seq(seq(k("protected_resource"), resource), seq(k("client_id"), client_id),
                           seq(k("user"), user)))
        raise Stop("unknown endpoint")


def script_idp_form(inp: ScriptInput, ch: Chooser, ctx: StepContext) -> Term:
    url = try_validate("url", get_url(inp.tree, inp.docnonce))
    if url is None:
        raise Stop("document not found")
    # the path menu is the document's own path
    path = ch.pick("path", [url.path])
    url = url.with_(path=path)
    ident = ch.pick("id", list(items_of(inp.ids)))
    secret = ch.pick("secret", list(items_of(inp.secrets)))
    formdata = Seq(items_of(inp.scriptstate) + (seq(k("username"), ident), seq(k("password"), secret)))
    ctx.meta["form_id"] = ident
    ctx.meta["form_host"] = url.host
    return inp.output(seq(FORM, url.to_term(), POST, formdata, BOT))
