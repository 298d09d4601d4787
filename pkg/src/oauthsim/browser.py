"""The web browser atomic process.

The state term is unpacked into small mutable objects (windows and
documents) for the duration of one step, updated in place by the browser
algorithms, and packed back into a term at the end. Window pointers are plain
references to ``Win`` objects.
"""

from __future__ import annotations

from dataclasses import dataclass

from .messages import (
    CONNECT_LIKE,
    DNS_RESOLVE,
    GET,
    H_COOKIE,
    H_LOCATION,
    H_ORIGIN,
    H_REFERER,
    H_REFERRER_POLICY,
    H_SET_COOKIE,
    H_STS,
    HEAD,
    HTTP_RESP,
    NOREFERRER,
    ORIGIN_POLICY,
    POST,
    S,
    STATUS_SEE_OTHER,
    STATUS_TEMPORARY,
    HttpRequest,
    Url,
    try_validate,
)
from .runtime import Chooser, Event, Process, StepContext, Stop, TRIGGER, nu
from .terms import (
    BOT,
    DIAMOND,
    EMPTY,
    TOP,
    Addr,
    Nonce,
    Seq,
    Str,
    Term,
    Var,
    dec_s,
    dict_get,
    dict_has,
    dict_put,
    dict_remove,
    enc_a,
    items_of,
    normalize,
    proj,
    seq,
    substitute,
    to_text,
)

FULLCORRUPT = Str("FULLCORRUPT")
CLOSECORRUPT = Str("CLOSECORRUPT")
BLANK = Str("_BLANK")

HREF = Str("HREF")
IFRAME = Str("IFRAME")
FORM = Str("FORM")
SETSCRIPT = Str("SETSCRIPT")
SETSCRIPTSTATE = Str("SETSCRIPTSTATE")
XMLHTTPREQUEST = Str("XMLHTTPREQUEST")
BACK = Str("BACK")
FORWARD = Str("FORWARD")
CLOSE = Str("CLOSE")
POSTMESSAGE = Str("POSTMESSAGE")

TRIGGER_SWITCHES = ("script", "urlbar", "reload", "forward", "back")


# ---------------------------------------------------------------------------
# windows and documents


class Doc:
    __slots__ = ("nonce", "location", "headers", "referrer", "script", "scriptstate", "scriptinputs",
                 "subwindows", "active")

    def __init__(self, nonce, location, headers, referrer, script, scriptstate, scriptinputs, subwindows, active):
        self.nonce = nonce
        self.location = location
        self.headers = headers
        self.referrer = referrer
        self.script = script
        self.scriptstate = scriptstate
        self.scriptinputs = scriptinputs
        self.subwindows: list[Win] = subwindows
        self.active = active

    @classmethod
    def from_term(cls, t: Term) -> "Doc":
        f = t.items
        return cls(f[0], f[1], f[2], f[3], f[4], f[5], f[6], [Win.from_term(w) for w in f[7].items], f[8])

    def to_term(self) -> Seq:
        return seq(self.nonce, self.location, self.headers, self.referrer, self.script, self.scriptstate,
                   self.scriptinputs, Seq(w.to_term() for w in self.subwindows), self.active)

    @property
    def origin(self) -> Term:
        loc = self.location
        if type(loc) is Seq and len(loc.items) == 6:
            return seq(loc.items[2], loc.items[1])
        return DIAMOND


class Win:
    __slots__ = ("nonce", "documents", "opener")

    def __init__(self, nonce, documents, opener):
        self.nonce = nonce
        self.documents: list[Doc] = documents
        self.opener = opener

    @classmethod
    def from_term(cls, t: Term) -> "Win":
        n, docs, opener = t.items
        return cls(n, [Doc.from_term(d) for d in docs.items], opener)

    def to_term(self) -> Seq:
        return seq(self.nonce, Seq(d.to_term() for d in self.documents), self.opener)

    @property
    def active(self) -> Doc | None:
        for d in self.documents:
            if d.active == TOP:
                return d
        return None


def window_term(nonce: Term, opener: Term = BOT) -> Seq:
    return seq(nonce, EMPTY, opener)


class BrowserState:
    FIELDS = ("windows", "ids", "secrets", "cookies", "local_storage", "session_storage", "key_mapping", "sts",
              "dns_address", "pending_dns", "pending_requests", "corrupted")

    def __init__(self, t: Term):
        f = t.items
        self.windows: list[Win] = [Win.from_term(w) for w in f[0].items]
        (self.ids, self.secrets, self.cookies, self.local_storage, self.session_storage, self.key_mapping,
         self.sts, self.dns_address, self.pending_dns, self.pending_requests, self.corrupted) = f[1:]

    def to_term(self) -> Seq:
        return seq(Seq(w.to_term() for w in self.windows), self.ids, self.secrets, self.cookies,
                   self.local_storage, self.session_storage, self.key_mapping, self.sts, self.dns_address,
                   self.pending_dns, self.pending_requests, self.corrupted)

    # Subwindows(s): every window reachable through active documents
    def subwindows(self) -> list:
        out = []

        def walk(w: Win):
            out.append(w)
            d = w.active
            if d is not None:
                for sw in d.subwindows:
                    walk(sw)

        for w in self.windows:
            walk(w)
        return out

    def parents(self) -> dict:
        """Map id(window) to its parent window (None for top-level windows)."""
        out = {}

        def walk(w: Win, parent):
            out[id(w)] = parent
            d = w.active
            if d is not None:
                for sw in d.subwindows:
                    walk(sw, w)

        for w in self.windows:
            walk(w, None)
        return out

    def top_level_of(self, target: Win) -> Win:
        parents = self.parents()
        w = target
        while parents.get(id(w)) is not None:
            w = parents[id(w)]
        return w

    def find_doc(self, nonce: Term):
        for w in self.subwindows():
            d = w.active
            if d is not None and d.nonce == nonce:
                return w, d
        return None


def initial_browser_state(ids: Term, secrets: Term, key_mapping: Term, dns_address: Term) -> Seq:
    return seq(EMPTY, ids, secrets, EMPTY, EMPTY, EMPTY, key_mapping, EMPTY, dns_address, EMPTY, EMPTY, BOT)


# ---------------------------------------------------------------------------
# cookies


def _valid_cookie(c: Term) -> bool:
    return try_validate("cookie", c) is not None


def cookie_merge(old: Term, new: Term) -> Seq:
    """CookieMerge: script-set cookies cannot add or overwrite httpOnly cookies."""
    fresh = [c for c in items_of(new) if _valid_cookie(c) and c.items[1].items[3] != TOP]
    by_name: dict = {}
    for c in fresh:
        by_name.pop(c.items[0], None)
        by_name[c.items[0]] = c
    out = []
    seen = set()
    for c in items_of(old):
        name = c.items[0]
        seen.add(name)
        if name in by_name and c.items[1].items[3] == BOT:
            out.append(by_name[name])
        else:
            out.append(c)
    out.extend(c for n, c in by_name.items() if n not in seen)
    return Seq(out)


def add_cookie(old: Term, c: Term) -> Seq:
    name = c.items[0]
    return Seq([x for x in items_of(old) if x.items[0] != name] + [c])


# ---------------------------------------------------------------------------
# script plumbing


def clean_tree(state: BrowserState, doc: Doc) -> Seq:
    """Clean(s, d): active documents only, foreign documents limited, headers emptied."""
    origin = doc.origin

    def win(w: Win) -> Seq:
        d = w.active
        docs = EMPTY if d is None else seq(document(d))
        return seq(w.nonce, docs, w.opener)

    def document(d: Doc) -> Seq:
        subs = Seq(win(sw) for sw in d.subwindows)
        if d.origin != origin:
            return seq(d.nonce, subs)
        return seq(d.nonce, d.location, EMPTY, d.referrer, d.script, d.scriptstate, d.scriptinputs, subs, d.active)

    return Seq(win(w) for w in state.windows)


def _tree_docs(tree: Term):
    """Yield (window nonce, document) for every full document term in a cleaned tree."""
    stack = list(items_of(tree))
    while stack:
        w = stack.pop(0)
        if type(w) is not Seq or len(w.items) != 3:
            continue
        for d in items_of(w.items[1]):
            if type(d) is not Seq:
                continue
            subs = d.items[7] if len(d.items) == 9 else (d.items[1] if len(d.items) == 2 else EMPTY)
            if len(d.items) == 9:
                yield w.items[0], d
            stack.extend(items_of(subs))


def get_url(tree: Term, docnonce: Term) -> Term:
    for _, d in _tree_docs(tree):
        if d.items[0] == docnonce:
            return d.items[1]
    return DIAMOND


def get_doc_window(tree: Term, docnonce: Term) -> Term:
    for wn, d in _tree_docs(tree):
        if d.items[0] == docnonce:
            return wn
    return DIAMOND


@dataclass
class ScriptInput:
    tree: Term
    docnonce: Term
    scriptstate: Term
    scriptinputs: Term
    cookies: Term
    local_storage: Term
    session_storage: Term
    ids: Term
    secrets: Term

    @classmethod
    def from_term(cls, t: Seq) -> "ScriptInput":
        return cls(*t.items)

    def to_term(self) -> Seq:
        return seq(self.tree, self.docnonce, self.scriptstate, self.scriptinputs, self.cookies,
                   self.local_storage, self.session_storage, self.ids, self.secrets)

    def output(self, command: Term, scriptstate: Term | None = None) -> Seq:
        """Script output that keeps storage and cookies untouched."""
        state = self.scriptstate if scriptstate is None else scriptstate
        return seq(state, EMPTY, self.local_storage, self.session_storage, command)


def att_script(inp: ScriptInput, ch: Chooser, ctx: StepContext) -> Term:
    """Attacker script: emits one of the commands offered by the registry menu.

    The full attacker script may output anything derivable from its input;
    here the options are a finite menu, each checked for derivability.
    """
    from .derive import derive

    reg = ctx.system.registry
    menu = [("idle", EMPTY)]
    if reg is not None:
        menu.extend(reg.att_script_menu(inp))
    label, command = ch.pick("att", menu, lambda o: o[0])
    out = inp.output(command)
    lam_vars = [x for x in _vars(out) if x.kind == "λ"]
    if not derive(out, [inp.to_term()], lam_vars):
        raise Stop("attacker script output not derivable")
    return out


def _vars(t: Term):
    from .terms import subterms

    return {x for x in subterms(t) if type(x) is Var}


def is_nonce_like(t: Term) -> bool:
    return type(t) is Nonce or (type(t) is Var and t.kind == "ν")


# ---------------------------------------------------------------------------
# the browser relation


class Browser(Process):
    """Honest web browser.

    ``url_menu`` is the finite list of (name, Url term) a user may type into
    the address bar.
    """

    kind = "browser"

    def __init__(self, pid: str, address: Addr, initial: Term, url_menu=()):
        self.pid = pid
        self.addresses = (address,)
        self.initial = initial
        self.url_menu = list(url_menu)

    def initial_state(self) -> Term:
        return self.initial

    def relation(self, event: Event, state: Term, ch: Chooser, ctx: StepContext):
        run = _BrowserStep(self, event, state, ch, ctx)
        out = run.main()
        return out, run.s.to_term()


class _BrowserStep:
    def __init__(self, browser: Browser, event: Event, state: Term, ch: Chooser, ctx: StepContext):
        self.browser = browser
        self.a = event.receiver
        self.f = event.sender
        self.m = event.msg
        self.state = state
        self.s = BrowserState(state)
        self.ch = ch
        self.ctx = ctx

    # -- helpers ------------------------------------------------------------

    def navigable_windows(self, w: Win) -> list:
        s = self.s
        subs = s.subwindows()
        parents = s.parents()
        wd = w.active
        w_origin = wd.origin if wd is not None else None

        def origin_of(x: Win):
            d = x.active
            return d.origin if d is not None else None

        def ancestors(x: Win):
            p = parents.get(id(x))
            while p is not None:
                yield p
                p = parents.get(id(p))

        result: list = []
        ids = set()

        def add(x):
            if id(x) not in ids:
                ids.add(id(x))
                result.append(x)
                return True
            return False

        for x in subs:
            if w_origin is not None and origin_of(x) == w_origin:
                add(x)
            elif parents.get(id(x)) is None and any(a is x for a in ancestors(w)):
                add(x)
            elif w_origin is not None and any(origin_of(p) == w_origin for p in ancestors(x)):
                add(x)
        changed = True
        while changed:
            changed = False
            for x in subs:
                if id(x) in ids or x.opener == BOT:
                    continue
                if any(p.nonce == x.opener for p in result):
                    changed = add(x) or changed
        order = {id(x): i for i, x in enumerate(subs)}
        result.sort(key=lambda x: order[id(x)])
        return result

    def get_navigable_window(self, w: Win, window: Term, noreferrer: Term) -> Win:
        if window == BLANK:
            opener = BOT if noreferrer == TOP else w.nonce
            nw = Win(nu(9), [], opener)
            self.s.windows.append(nw)
            return nw
        cands = [x for x in self.navigable_windows(w) if x.nonce == window]
        if not cands:
            return w
        return self.ch.pick("navwindow", cands, lambda x: to_text(x.nonce))

    def get_window(self, w: Win, window: Term) -> Win:
        cands = [x for x in self.s.subwindows() if x.nonce == window]
        if not cands:
            return w
        x = self.ch.pick("getwindow", cands, lambda x: to_text(x.nonce))
        xd, wd = x.active, w.active
        if xd is not None and wd is not None and xd.origin == wd.origin:
            return x
        return w

    def cancel_nav(self, n: Term) -> None:
        s = self.s
        s.pending_requests = Seq(e for e in items_of(s.pending_requests)
                                 if not (type(e) is Seq and e.items and e.items[0] == n))
        s.pending_dns = Seq(e for e in items_of(s.pending_dns)
                            if not (type(e) is Seq and len(e.items) == 2 and type(e.items[1]) is Seq
                                    and e.items[1].items and e.items[1].items[0] == n))

    def nav_back(self, w: Win) -> None:
        for j in range(1, len(w.documents)):
            if w.documents[j].active == TOP:
                w.documents[j].active = BOT
                w.documents[j - 1].active = TOP
                self.cancel_nav(w.nonce)
                return

    def nav_forward(self, w: Win) -> None:
        for j in range(len(w.documents) - 1):
            if w.documents[j].active == TOP:
                w.documents[j].active = BOT
                w.documents[j + 1].active = TOP
                self.cancel_nav(w.nonce)
                return

    def remove_window(self, target: Win) -> None:
        if any(x is target for x in self.s.windows):
            self.s.windows = [x for x in self.s.windows if x is not target]
            return
        for x in self.s.subwindows():
            d = x.active
            if d is not None and any(y is target for y in d.subwindows):
                d.subwindows = [y for y in d.subwindows if y is not target]
                return

    # -- SEND ---------------------------------------------------------------

    def send(self, reference: Term, req: HttpRequest, url: Url, origin: Term, referrer: Term,
             policy: Term) -> list:
        s = self.s
        if req.host in items_of(s.sts):
            url = url.with_(protocol=S)
        cookies = []
        for c in items_of(dict_get(s.cookies, req.host)):
            name, content = c.items
            if content.items[1] == TOP and url.protocol != S:
                continue
            cookies.append(seq(name, content.items[0]))
        headers = dict_put(req.headers, H_COOKIE, Seq(cookies))
        if origin != BOT:
            headers = dict_put(headers, H_ORIGIN, origin)
        if policy == NOREFERRER:
            referrer = BOT
        if referrer != BOT:
            ref = try_validate("url", referrer)
            if ref is not None:
                if policy == ORIGIN_POLICY:
                    ref = Url(ref.protocol, ref.host, Str("/"), EMPTY, BOT)
                ref = ref.with_(fragment=BOT)
                headers = dict_put(headers, H_REFERER, ref.to_term())
        req = req.with_(headers=headers)
        key = nu(8)
        s.pending_dns = dict_put(s.pending_dns, key, seq(reference, req.to_term(), url.to_term()))
        self.ctx.meta["sent"] = req.to_term()
        return [Event(s.dns_address, self.a, seq(DNS_RESOLVE, req.host, key))]

    # -- RUNSCRIPT ------------------------------------------------------------

    def run_script(self, w: Win, d: Doc) -> list:
        s = self.s
        ctx = self.ctx
        origin = d.origin
        host = origin.items[0] if type(origin) is Seq else DIAMOND
        tree = clean_tree(s, d)
        cookies = []
        for c in items_of(dict_get(s.cookies, host)):
            name, content = c.items
            if content.items[3] != BOT:
                continue
            if content.items[1] == TOP and origin.items[1] != S:
                continue
            cookies.append(seq(name, content.items[0]))
        tlw = s.top_level_of(w)
        ss_key = seq(origin, tlw.nonce)
        inp = ScriptInput(tree, d.nonce, d.scriptstate, d.scriptinputs, Seq(cookies),
                          dict_get(s.local_storage, origin), dict_get(s.session_storage, ss_key), s.ids,
                          dict_get(s.secrets, origin))
        scripts = ctx.system.scripts
        name = d.script.value if type(d.script) is Str else None
        fn = scripts.get(name, att_script) if name is not None else att_script
        ctx.meta["script"] = name if fn is not att_script else "att_script"
        ctx.meta["doc"] = d.nonce
        ctx.meta["doc_origin"] = origin
        out = normalize(fn(inp, self.ch, ctx))
        mapping = {x: nu(9 + x.index) for x in _vars(out) if x.kind == "λ"}
        if mapping:
            out = substitute(out, mapping)
        if type(out) is not Seq or len(out.items) != 5:
            raise Stop("malformed script output")
        state2, cookies2, ls2, ss2, command = out.items
        if type(cookies2) is not Seq or not all(_valid_cookie(c) for c in cookies2.items):
            raise Stop("script cookies are not cookies")
        s.cookies = dict_put(s.cookies, host, cookie_merge(dict_get(s.cookies, host), cookies2))
        s.local_storage = dict_put(s.local_storage, origin, ls2)
        s.session_storage = dict_put(s.session_storage, ss_key, ss2)
        d.scriptstate = state2
        ctx.meta["command"] = command
        return self.dispatch(w, d, command)

    def dispatch(self, w: Win, d: Doc, command: Term) -> list:
        if type(command) is not Seq or not command.items:
            return []
        tag, args = command.items[0], command.items[1:]
        policy = dict_get(d.headers, H_REFERRER_POLICY)
        if tag == HREF and len(args) == 3:
            url, hrefwindow, noreferrer = args
            u = try_validate("url", url)
            if u is None:
                return []
            w2 = self.get_navigable_window(w, hrefwindow, noreferrer)
            req = HttpRequest(nu(4), GET, u.host, u.path, u.params, EMPTY, EMPTY)
            pol = NOREFERRER if noreferrer == TOP else policy
            self.cancel_nav(w2.nonce)
            return self.send(w2.nonce, req, u, BOT, d.location, pol)
        if tag == IFRAME and len(args) == 2:
            url, window = args
            u = try_validate("url", url)
            if u is None:
                return []
            w2 = self.get_window(w, window)
            ad = w2.active
            if ad is None:
                return []
            req = HttpRequest(nu(4), GET, u.host, u.path, u.params, EMPTY, EMPTY)
            ad.subwindows.append(Win(nu(5), [], BOT))
            return self.send(nu(5), req, u, BOT, ad.location, policy)
        if tag == FORM and len(args) == 4:
            url, method, data, hrefwindow = args
            if method not in (GET, POST):
                return []
            u = try_validate("url", url)
            if u is None:
                return []
            w2 = self.get_navigable_window(w, hrefwindow, BOT)
            if method == GET:
                body, params, origin = EMPTY, data, BOT
            else:
                body, params, origin = data, u.params, d.origin
            req = HttpRequest(nu(4), method, u.host, u.path, params, EMPTY, body)
            self.cancel_nav(w2.nonce)
            return self.send(w2.nonce, req, u, origin, d.location, policy)
        if tag == SETSCRIPT and len(args) == 2:
            w2 = self.get_window(w, args[0])
            if w2.active is not None:
                w2.active.script = args[1]
            return []
        if tag == SETSCRIPTSTATE and len(args) == 2:
            w2 = self.get_window(w, args[0])
            if w2.active is not None:
                w2.active.scriptstate = args[1]
            return []
        if tag == XMLHTTPREQUEST and len(args) == 4:
            url, method, data, xhrref = args
            if method in CONNECT_LIKE or not (xhrref == BOT or is_nonce_like(xhrref)):
                return []
            u = try_validate("url", url)
            if u is None or type(d.origin) is not Seq or u.host != d.origin.items[0] or u.protocol != d.origin.items[1]:
                return []
            if method in (GET, HEAD):
                data, origin = EMPTY, BOT
            else:
                origin = d.origin
            req = HttpRequest(nu(4), method, u.host, u.path, u.params, EMPTY, data)
            return self.send(seq(d.nonce, xhrref), req, u, origin, d.location, policy)
        if tag == BACK and len(args) == 1:
            self.nav_back(self.get_navigable_window(w, args[0], BOT))
            return []
        if tag == FORWARD and len(args) == 1:
            self.nav_forward(self.get_navigable_window(w, args[0], BOT))
            return []
        if tag == CLOSE and len(args) == 1:
            self.remove_window(self.get_navigable_window(w, args[0], BOT))
            return []
        if tag == POSTMESSAGE and len(args) == 3:
            window, message, origin = args
            cands = [x for x in self.s.subwindows() if x.nonce == window]
            if not cands:
                return []
            w2 = self.ch.pick("pmwindow", cands, lambda x: to_text(x.nonce))
            ad = w2.active
            if ad is not None and (origin == BOT or ad.origin == origin):
                ad.scriptinputs = Seq(items_of(ad.scriptinputs) + (seq(POSTMESSAGE, w.nonce, d.origin, message),))
            return []
        return []

    # -- PROCESSRESPONSE ------------------------------------------------------

    def process_response(self, resp, reference: Term, request: HttpRequest, request_url: Url) -> list:
        s = self.s
        if dict_has(resp.headers, H_SET_COOKIE):
            for c in items_of(resp.header(H_SET_COOKIE)):
                if _valid_cookie(c):
                    s.cookies = dict_put(s.cookies, request.host, add_cookie(dict_get(s.cookies, request.host), c))
        if dict_has(resp.headers, H_STS) and request_url.protocol == S:
            if request.host not in items_of(s.sts):
                s.sts = Seq(items_of(s.sts) + (request.host,))
        referrer = request.header(H_REFERER) if dict_has(request.headers, H_REFERER) else BOT
        windows = {id(x): x for x in s.subwindows()}
        target = next((x for x in windows.values() if x.nonce == reference), None)
        if dict_has(resp.headers, H_LOCATION) and resp.status in (STATUS_SEE_OTHER, STATUS_TEMPORARY):
            u = try_validate("url", resp.header(H_LOCATION))
            if u is None:
                return []
            if u.fragment == BOT:
                u = u.with_(fragment=request_url.fragment)
            method, body = request.method, request.body
            if dict_has(request.headers, H_ORIGIN):
                origin = seq(request.header(H_ORIGIN), seq(request.host, u.protocol))
            else:
                origin = BOT
            if resp.status == STATUS_SEE_OTHER and method not in (GET, HEAD):
                method, body = GET, EMPTY
            if target is None:
                # XHRs are not redirected
                return []
            req = HttpRequest(nu(6), method, u.host, u.path, u.params, EMPTY, body)
            self.ctx.meta["redirect"] = int(resp.status.value)
            return self.send(reference, req, u, origin, referrer, resp.header(H_REFERRER_POLICY))
        if target is not None:
            body = resp.body
            if type(body) is not Seq or len(body.items) != 2:
                return []
            script, scriptstate = body.items
            doc = Doc(nu(7), request_url.to_term(), resp.headers, referrer, script, scriptstate, EMPTY, [], TOP)
            if target.documents:
                for i, x in enumerate(target.documents):
                    if x.active == TOP:
                        x.active = BOT
                        del target.documents[i + 1:]
                        break
            target.documents.append(doc)
            self.ctx.meta["doc_created"] = nu(7)
            return []
        if type(reference) is Seq and len(reference.items) == 2:
            found = s.find_doc(reference.items[0])
            if found is not None:
                _, d = found
                headers = dict_remove(resp.headers, H_SET_COOKIE)
                d.scriptinputs = Seq(items_of(d.scriptinputs)
                                     + (seq(XMLHTTPREQUEST, headers, resp.body, reference.items[1]),))
        return []

    # -- main -----------------------------------------------------------------

    def main(self) -> list:
        s, m = self.s, self.m
        if s.corrupted != BOT:
            # a corrupted browser keeps a log of everything it receives
            s.pending_requests = seq(m, s.pending_requests)
            return []
        if m == TRIGGER:
            return self.trigger()
        if m == FULLCORRUPT:
            s.corrupted = FULLCORRUPT
            return []
        if m == CLOSECORRUPT:
            s.secrets = EMPTY
            s.windows = []
            s.pending_dns = EMPTY
            s.pending_requests = EMPTY
            s.session_storage = EMPTY
            s.cookies = Seq(
                seq(dom, Seq(c for c in items_of(cs) if c.items[1].items[2] == BOT))
                for dom, cs in (e.items for e in items_of(s.cookies))
            )
            s.corrupted = CLOSECORRUPT
            return []
        for entry in items_of(s.pending_requests):
            if type(entry) is not Seq or len(entry.items) != 5:
                continue
            reference, request, url, key, _ = entry.items
            if key == BOT:
                continue
            plain = normalize(dec_s(m, key))
            if normalize(proj(1, plain)) != HTTP_RESP:
                continue
            resp = try_validate("http-response", plain)
            req = try_validate("http-request", request)
            if resp is None or req is None or resp.nonce != req.nonce:
                raise Stop("response nonce mismatch")
            s.pending_requests = Seq(e for e in s.pending_requests.items if e != entry)
            self.ctx.meta["response_to"] = req.nonce
            return self.process_response(resp, reference, req, try_validate("url", url))
        if type(m) is Seq and m.items and m.items[0] == HTTP_RESP:
            resp = try_validate("http-response", m)
            if resp is None:
                raise Stop("malformed response")
            for entry in items_of(s.pending_requests):
                if type(entry) is not Seq or len(entry.items) != 5 or entry.items[3] != BOT:
                    continue
                reference, request, url, _, _ = entry.items
                req = try_validate("http-request", request)
                if req is not None and resp.nonce == req.nonce:
                    s.pending_requests = Seq(e for e in s.pending_requests.items if e != entry)
                    self.ctx.meta["response_to"] = req.nonce
                    return self.process_response(resp, reference, req, try_validate("url", url))
            raise Stop("no pending plain request")
        dns = try_validate("dns-response", m)
        if dns is not None:
            pending = dict_get(s.pending_dns, dns.nonce)
            if not dict_has(s.pending_dns, dns.nonce) or type(dns.address) is not Addr:
                raise Stop("unexpected DNS response")
            reference, message, url = pending.items
            if dns.domain != message.items[3]:
                raise Stop("DNS domain mismatch")
            if url.items[1] == S:
                s.pending_requests = Seq(items_of(s.pending_requests)
                                         + (seq(reference, message, url, nu(3), dns.address),))
                message = enc_a(seq(message, nu(3)), dict_get(s.key_mapping, message.items[3]))
            else:
                s.pending_requests = Seq(items_of(s.pending_requests)
                                         + (seq(reference, message, url, BOT, dns.address),))
            s.pending_dns = dict_remove(s.pending_dns, dns.nonce)
            return [Event(dns.address, self.a, message)]
        raise Stop("ignored")

    def trigger(self) -> list:
        s, ch = self.s, self.ch
        loaded = [w for w in s.subwindows() if w.documents]
        switches = [x for x in TRIGGER_SWITCHES if x == "urlbar" or loaded]
        if not self.browser.url_menu:
            switches = [x for x in switches if x != "urlbar"]
        switch = ch.pick("switch", switches)
        self.ctx.meta["switch"] = switch
        if switch == "urlbar":
            tops = [w for w in s.windows if w.documents]
            newwindow = ch.pick("newwindow", [TOP, BOT] if tops else [TOP])
            if newwindow == TOP:
                windownonce = nu(1)
                s.windows.append(Win(windownonce, [], BOT))
            else:
                windownonce = ch.pick("tlw", tops, lambda x: to_text(x.nonce)).nonce
            name, url = ch.pick("url", self.browser.url_menu, lambda o: o[0])
            u = try_validate("url", url)
            req = HttpRequest(nu(2), GET, u.host, u.path, u.params, EMPTY, EMPTY)
            return self.send(windownonce, req, u, BOT, BOT, BOT)
        w = ch.pick("window", loaded, lambda x: to_text(x.nonce))
        if switch == "script":
            d = w.active
            if d is None:
                raise Stop("no active document")
            return self.run_script(w, d)
        if switch == "reload":
            d = w.active
            u = try_validate("url", d.location)
            if u is None:
                raise Stop("bad location")
            req = HttpRequest(nu(2), GET, u.host, u.path, u.params, EMPTY, EMPTY)
            self.cancel_nav(w.nonce)
            return self.send(w.nonce, req, u, BOT, d.referrer, BOT)
        if switch == "forward":
            self.nav_forward(w)
        else:
            self.nav_back(w)
        return []
