"""Typed views over web message terms: URLs, origins, cookies, HTTP and DNS.

Views are plain dataclasses of Terms. ``validate(kind, t)`` returns the view
for a well-shaped term or raises ``ShapeError`` naming the first offending
field. ``to_term()`` goes back to the canonical term.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .terms import (
    BOT,
    EMPTY,
    TOP,
    Fn,
    Nonce,
    Seq,
    Str,
    Term,
    Num,
    dec_a,
    dec_s,
    dict_get,
    enc_a,
    enc_s,
    normalize,
    seq,
)

URL = Str("URL")
P = Str("P")
S = Str("S")
HTTP_REQ = Str("HTTPReq")
HTTP_RESP = Str("HTTPResp")
DNS_RESOLVE = Str("DNSResolve")
DNS_RESOLVED = Str("DNSResolved")

GET = Str("GET")
POST = Str("POST")
HEAD = Str("HEAD")
CONNECT_LIKE = frozenset(Str(m) for m in ("CONNECT", "TRACE", "TRACK"))
METHODS = frozenset(Str(m) for m in ("GET", "POST", "HEAD", "PUT", "DELETE", "OPTIONS", "CONNECT", "TRACE", "TRACK"))

H_ORIGIN = Str("Origin")
H_SET_COOKIE = Str("Set-Cookie")
H_COOKIE = Str("Cookie")
H_LOCATION = Str("Location")
H_REFERER = Str("Referer")
H_STS = Str("Strict-Transport-Security")
H_AUTHORIZATION = Str("Authorization")
H_REFERRER_POLICY = Str("ReferrerPolicy")
HEADER_NAMES = frozenset(
    (H_ORIGIN, H_SET_COOKIE, H_COOKIE, H_LOCATION, H_REFERER, H_STS, H_AUTHORIZATION, H_REFERRER_POLICY)
)
NOREFERRER = Str("noreferrer")
ORIGIN_POLICY = Str("origin")

STATUS_OK = Num(200)
STATUS_SEE_OTHER = Num(303)
STATUS_TEMPORARY = Num(307)


class ShapeError(ValueError):
    def __init__(self, kind: str, field: str):
        super().__init__(f"{kind}: bad {field}")
        self.kind = kind
        self.field = field


def _is_dict(t: Term) -> bool:
    if type(t) is not Seq:
        return False
    keys = []
    for e in t.items:
        if type(e) is not Seq or len(e.items) != 2:
            return False
        keys.append(e.items[0])
    return len(set(keys)) == len(keys)


@dataclass(frozen=True)
class Url:
    protocol: Term
    host: Term
    path: Term
    params: Term = EMPTY
    fragment: Term = BOT

    def to_term(self) -> Seq:
        return seq(URL, self.protocol, self.host, self.path, self.params, self.fragment)

    @property
    def origin(self) -> Seq:
        return seq(self.host, self.protocol)

    def with_(self, **kw) -> "Url":
        return replace(self, **kw)


@dataclass(frozen=True)
class HttpRequest:
    nonce: Term
    method: Term
    host: Term
    path: Term
    params: Term = EMPTY
    headers: Term = EMPTY
    body: Term = EMPTY

    def to_term(self) -> Seq:
        return seq(HTTP_REQ, self.nonce, self.method, self.host, self.path, self.params, self.headers, self.body)

    def header(self, name: Term) -> Term:
        return dict_get(self.headers, name)

    def param(self, name: Term) -> Term:
        return dict_get(self.params, name)

    def with_(self, **kw) -> "HttpRequest":
        return replace(self, **kw)


@dataclass(frozen=True)
class HttpResponse:
    nonce: Term
    status: Term
    headers: Term = EMPTY
    body: Term = EMPTY

    def to_term(self) -> Seq:
        return seq(HTTP_RESP, self.nonce, self.status, self.headers, self.body)

    def header(self, name: Term) -> Term:
        return dict_get(self.headers, name)


@dataclass(frozen=True)
class DnsRequest:
    domain: Term
    nonce: Term

    def to_term(self) -> Seq:
        return seq(DNS_RESOLVE, self.domain, self.nonce)


@dataclass(frozen=True)
class DnsResponse:
    domain: Term
    address: Term
    nonce: Term

    def to_term(self) -> Seq:
        return seq(DNS_RESOLVED, self.domain, self.address, self.nonce)


@dataclass(frozen=True)
class Cookie:
    name: Term
    value: Term
    secure: Term = BOT
    session: Term = BOT
    http_only: Term = BOT

    def to_term(self) -> Seq:
        return seq(self.name, seq(self.value, self.secure, self.session, self.http_only))


def _flag(t: Term) -> bool:
    return t == TOP or t == BOT


def _url(t: Term, kind: str = "url") -> Url:
    if type(t) is not Seq or len(t.items) != 6 or t.items[0] != URL:
        raise ShapeError(kind, "url")
    _, protocol, host, path, params, fragment = t.items
    if protocol not in (P, S):
        raise ShapeError(kind, "protocol")
    if type(host) is not Str:
        raise ShapeError(kind, "host")
    if type(path) is not Str:
        raise ShapeError(kind, "path")
    if not _is_dict(params):
        raise ShapeError(kind, "parameters")
    return Url(protocol, host, path, params, fragment)


def _origin(t: Term, kind: str = "origin") -> Seq:
    if type(t) is not Seq or len(t.items) != 2 or type(t.items[0]) is not Str or t.items[1] not in (P, S):
        raise ShapeError(kind, "origin")
    return t


def _cookie(t: Term, kind: str = "cookie") -> Cookie:
    if type(t) is not Seq or len(t.items) != 2:
        raise ShapeError(kind, "cookie")
    name, content = t.items
    if type(content) is not Seq or len(content.items) != 4:
        raise ShapeError(kind, "cookie content")
    value, secure, session, http_only = content.items
    if not (_flag(secure) and _flag(session) and _flag(http_only)):
        raise ShapeError(kind, "cookie flags")
    return Cookie(name, value, secure, session, http_only)


def _headers(t: Term, kind: str) -> Term:
    if not _is_dict(t):
        raise ShapeError(kind, "headers")
    for e in t.items:
        name, value = e.items
        if name not in HEADER_NAMES:
            raise ShapeError(kind, f"header {name}")
        if name == H_REFERRER_POLICY and value not in (NOREFERRER, ORIGIN_POLICY):
            raise ShapeError(kind, "ReferrerPolicy")
        if name == H_COOKIE and not _is_dict(value):
            raise ShapeError(kind, "Cookie")
        if name == H_SET_COOKIE:
            if type(value) is not Seq:
                raise ShapeError(kind, "Set-Cookie")
            for c in value.items:
                _cookie(c, kind)
    return t


def _request(t: Term, kind: str = "http-request") -> HttpRequest:
    if type(t) is not Seq or len(t.items) != 8 or t.items[0] != HTTP_REQ:
        raise ShapeError(kind, "arity")
    _, nonce, method, host, path, params, headers, body = t.items
    if method not in METHODS:
        raise ShapeError(kind, "method")
    if type(host) is not Str:
        raise ShapeError(kind, "host")
    if type(path) is not Str:
        raise ShapeError(kind, "path")
    if not _is_dict(params):
        raise ShapeError(kind, "parameters")
    _headers(headers, kind)
    return HttpRequest(nonce, method, host, path, params, headers, body)


def _response(t: Term, kind: str = "http-response") -> HttpResponse:
    if type(t) is not Seq or len(t.items) != 5 or t.items[0] != HTTP_RESP:
        raise ShapeError(kind, "arity")
    _, nonce, status, headers, body = t.items
    if type(status) is not Num:
        raise ShapeError(kind, "status")
    _headers(headers, kind)
    return HttpResponse(nonce, status, headers, body)


def _dns_request(t: Term, kind: str = "dns-request") -> DnsRequest:
    if type(t) is not Seq or len(t.items) != 3 or t.items[0] != DNS_RESOLVE:
        raise ShapeError(kind, "arity")
    return DnsRequest(t.items[1], t.items[2])


def _dns_response(t: Term, kind: str = "dns-response") -> DnsResponse:
    if type(t) is not Seq or len(t.items) != 4 or t.items[0] != DNS_RESOLVED:
        raise ShapeError(kind, "arity")
    return DnsResponse(t.items[1], t.items[2], t.items[3])


_VALIDATORS = {
    "url": _url,
    "origin": _origin,
    "cookie": _cookie,
    "http-request": _request,
    "http-response": _response,
    "dns-request": _dns_request,
    "dns-response": _dns_response,
}


def validate(kind: str, t: Term):
    try:
        fn = _VALIDATORS[kind]
    except KeyError:
        raise ValueError(f"unknown message kind {kind}") from None
    return fn(t)


def try_validate(kind: str, t: Term):
    try:
        return validate(kind, t)
    except ShapeError:
        return None


# ---------------------------------------------------------------------------
# HTTPS


class DecryptError(ValueError):
    pass


def https_wrap(req: HttpRequest | Term, sym_key: Term, server_pub: Term) -> Fn:
    body = req.to_term() if isinstance(req, HttpRequest) else req
    return enc_a(seq(body, sym_key), server_pub)


def https_unwrap_request(t: Term, priv_key: Term) -> tuple:
    inner = normalize(dec_a(t, priv_key))
    if type(inner) is not Seq or len(inner.items) != 2:
        raise DecryptError("request does not decrypt under this key")
    try:
        req = _request(inner.items[0])
    except ShapeError as exc:
        raise DecryptError(str(exc)) from None
    return req, inner.items[1]


def https_wrap_response(resp: HttpResponse | Term, sym_key: Term) -> Fn:
    body = resp.to_term() if isinstance(resp, HttpResponse) else resp
    return enc_s(body, sym_key)


def https_unwrap_response(t: Term, sym_key: Term) -> HttpResponse:
    inner = normalize(dec_s(t, sym_key))
    try:
        return _response(inner)
    except ShapeError as exc:
        raise DecryptError(str(exc)) from None


def dns_pair(domain: Term, nonce: Term, answer: Term) -> tuple:
    return DnsRequest(domain, nonce).to_term(), DnsResponse(domain, answer, nonce).to_term()


def url(protocol: Term, host: str | Term, path: str | Term, params=EMPTY, fragment: Term = BOT) -> Url:
    host = Str(host) if isinstance(host, str) else host
    path = Str(path) if isinstance(path, str) else path
    return Url(protocol, host, path, params, fragment)


def origin_of(host: Term, protocol: Term = S) -> Seq:
    return seq(host, protocol)


def is_nonce(t: Term) -> bool:
    return type(t) is Nonce
