"""Browser behaviour on small hand-driven traces."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oauthsim.browser import FORM, HREF, cookie_merge, initial_browser_state
from oauthsim.messages import (
    GET,
    H_COOKIE,
    H_ORIGIN,
    H_REFERER,
    H_REFERRER_POLICY,
    H_SET_COOKIE,
    H_STS,
    NOREFERRER,
    ORIGIN_POLICY,
    POST,
    P,
    S,
    Cookie,
    try_validate,
)
from oauthsim.terms import BOT, EMPTY, TOP, Addr, Num, Seq, Str, dict_get, dict_has, make_dict, seq

from .support import Micro, Recorder, http_url, https_url, page, redirect

BODY = make_dict([(Str("user"), Str("alice")), (Str("pw"), Str("secret"))])


def form_post(target, data=BODY):
    return Recorder(seq(FORM, target, POST, data, BOT))


def href(target, noreferrer=BOT):
    return Recorder(seq(HREF, target, BOT, noreferrer))


def cookie(name, value, secure=BOT, http_only=BOT):
    return Cookie(Str(name), Str(value), secure, BOT, http_only).to_term()


def set_cookies(*cookies, script="idle"):
    hdrs = seq(seq(H_SET_COOKIE, Seq(cookies)))
    return lambda req, proto: (Num(200), hdrs, seq(Str(script), EMPTY))


def by_path(micro, path):
    return [(proto, r) for proto, r in micro.requests() if r.path == Str(path)]


def load(micro, entry):
    micro.trigger(switch="urlbar", url=entry)


def run_script(micro):
    micro.trigger(switch="script")


class TestRedirects:
    @pytest.mark.parametrize("status", [303, 307])
    def test_post_then_redirect(self, status):
        m = Micro(
            {"/start": page("post"), "/submit": redirect(status, https_url("a.com", "/next")), "/next": page("idle")},
            [("start", https_url("a.com", "/start"))],
            {"post": form_post(https_url("a.com", "/submit")), "idle": Recorder()},
        )
        load(m, "start")
        run_script(m)
        [(_, submit)] = by_path(m, "/submit")
        [(_, nxt)] = by_path(m, "/next")
        assert submit.method == POST and submit.body == BODY
        if status == 303:
            assert nxt.method == GET
            assert nxt.body == EMPTY
        else:
            assert nxt.method == POST
            assert nxt.body == BODY

    def test_origin_header_on_cross_origin_redirect_lists_both_hops(self):
        m = Micro(
            {"/start": page("post"), "/submit": redirect(307, https_url("b.com", "/next")), "/next": page("idle")},
            [("start", https_url("a.com", "/start"))],
            {"post": form_post(https_url("a.com", "/submit")), "idle": Recorder()},
        )
        load(m, "start")
        run_script(m)
        [(_, nxt)] = by_path(m, "/next")
        origin = dict_get(nxt.headers, H_ORIGIN)
        assert origin == seq(seq(Str("a.com"), S), seq(Str("a.com"), S))

    def test_redirect_keeps_fragment_of_original_url(self):
        m = Micro(
            {"/start": redirect(303, https_url("a.com", "/next")), "/next": page("idle")},
            [("start", https_url("a.com", "/start", fragment=Str("frag")))],
            {"idle": Recorder()},
        )
        load(m, "start")
        b = m.browser_state()
        doc = b.items[0].items[0].items[1].items[0]
        assert try_validate("url", doc.items[1]).fragment == Str("frag")


class TestCookies:
    def _micro(self, scripts=None):
        routes = {
            "/set": set_cookies(cookie("sec", "s1", secure=TOP), cookie("plain", "p1"),
                                cookie("ho", "h1", http_only=TOP), script="rec"),
            "/page": page("rec"),
        }
        menu = [("set", https_url("a.com", "/set")), ("http", http_url("a.com", "/page")),
                ("https", https_url("a.com", "/page"))]
        return Micro(routes, menu, scripts or {"rec": Recorder()})

    @staticmethod
    def names(req):
        return {e.items[0].value for e in dict_get(req.headers, H_COOKIE).items}

    def test_secure_cookie_not_sent_over_plain_http(self):
        m = self._micro()
        load(m, "set")
        load(m, "http")
        load(m, "https")
        [(p_proto, over_p), (s_proto, over_s)] = by_path(m, "/page")
        assert p_proto == P and s_proto == S
        assert self.names(over_p) == {"plain", "ho"}
        assert self.names(over_s) == {"sec", "plain", "ho"}

    def test_http_only_cookie_never_reaches_script(self):
        rec = Recorder()
        m = self._micro({"rec": rec})
        load(m, "set")
        run_script(m)
        [inp] = rec.inputs
        names = {c.items[0].value for c in inp.cookies.items}
        assert "ho" not in names
        assert names == {"sec", "plain"}

    def test_secure_cookie_hidden_from_script_on_plain_origin(self):
        rec = Recorder()
        m = self._micro({"rec": rec})
        load(m, "set")
        load(m, "http")
        rec.inputs.clear()
        windows = m.browser_state().items[0].items
        plain = [w for w in windows if w.items[1].items[0].items[1].items[1] == P]
        assert len(windows) == 2 and len(plain) == 1
        m.trigger(switch="script", window=str(plain[0].items[0]))
        [inp] = rec.inputs
        assert {c.items[0].value for c in inp.cookies.items} == {"plain"}

    def test_script_cannot_overwrite_http_only_cookie(self):
        old = seq(cookie("ho", "h1", http_only=TOP), cookie("plain", "p1"))
        new = seq(cookie("ho", "evil"), cookie("plain", "p2"), cookie("extra", "x"))
        merged = cookie_merge(old, new)
        values = {c.items[0].value: c.items[1].items[0].value for c in merged.items}
        assert values == {"ho": "h1", "plain": "p2", "extra": "x"}

    def test_script_cannot_set_http_only_cookie(self):
        merged = cookie_merge(EMPTY, seq(cookie("ho", "h", http_only=TOP)))
        assert merged == EMPTY


class TestReferer:
    def test_fragment_is_stripped(self):
        m = Micro(
            {"/start": page("go"), "/next": page("idle")},
            [("start", https_url("a.com", "/start", make_dict([(Str("q"), Str("1"))]), Str("secretfrag")))],
            {"go": href(https_url("a.com", "/next")), "idle": Recorder()},
        )
        load(m, "start")
        run_script(m)
        [(_, nxt)] = by_path(m, "/next")
        ref = try_validate("url", dict_get(nxt.headers, H_REFERER))
        assert ref.fragment == BOT
        assert ref.path == Str("/start")
        assert dict_get(ref.params, Str("q")) == Str("1")

    def test_origin_policy_strips_path_and_params(self):
        policy = seq(seq(H_REFERRER_POLICY, ORIGIN_POLICY))
        m = Micro(
            {"/start": page("go", headers=policy), "/next": page("idle")},
            [("start", https_url("a.com", "/start", make_dict([(Str("state"), Str("xyz"))])))],
            {"go": href(https_url("b.com", "/next")), "idle": Recorder()},
        )
        load(m, "start")
        run_script(m)
        [(_, nxt)] = by_path(m, "/next")
        ref = try_validate("url", dict_get(nxt.headers, H_REFERER))
        assert ref.path == Str("/")
        assert ref.params == EMPTY
        assert ref.fragment == BOT
        assert ref.host == Str("a.com")

    def test_origin_policy_on_redirect_response(self):
        policy = seq(seq(H_REFERRER_POLICY, ORIGIN_POLICY))
        m = Micro(
            {"/start": page("go"), "/hop": redirect(303, https_url("b.com", "/next"), policy), "/next": page("idle")},
            [("start", https_url("a.com", "/start", make_dict([(Str("code"), Str("c"))])))],
            {"go": href(https_url("a.com", "/hop")), "idle": Recorder()},
        )
        load(m, "start")
        run_script(m)
        [(_, nxt)] = by_path(m, "/next")
        ref = try_validate("url", dict_get(nxt.headers, H_REFERER))
        assert ref.path == Str("/") and ref.params == EMPTY

    def test_noreferrer_link(self):
        m = Micro(
            {"/start": page("go"), "/next": page("idle")},
            [("start", https_url("a.com", "/start"))],
            {"go": href(https_url("a.com", "/next"), noreferrer=TOP), "idle": Recorder()},
        )
        load(m, "start")
        run_script(m)
        [(_, nxt)] = by_path(m, "/next")
        assert not dict_has(nxt.headers, H_REFERER)

    def test_noreferrer_policy_header(self):
        m = Micro(
            {"/start": page("go", headers=seq(seq(H_REFERRER_POLICY, NOREFERRER))), "/next": page("idle")},
            [("start", https_url("a.com", "/start"))],
            {"go": href(https_url("a.com", "/next")), "idle": Recorder()},
        )
        load(m, "start")
        run_script(m)
        [(_, nxt)] = by_path(m, "/next")
        assert not dict_has(nxt.headers, H_REFERER)

    def test_typed_url_has_no_referer(self):
        m = Micro({"/start": page("idle")}, [("start", https_url("a.com", "/start"))], {"idle": Recorder()})
        load(m, "start")
        [(_, req)] = by_path(m, "/start")
        assert not dict_has(req.headers, H_REFERER)

    @settings(max_examples=40, deadline=None)
    @given(
        params=st.dictionaries(st.sampled_from(["a", "state", "code"]), st.sampled_from(["1", "x"]), max_size=3),
        fragment=st.one_of(st.just(BOT), st.sampled_from([Str("f"), Str("access_token")])),
        origin_policy=st.booleans(),
    )
    def test_referer_property(self, params, fragment, origin_policy):
        headers = seq(seq(H_REFERRER_POLICY, ORIGIN_POLICY)) if origin_policy else EMPTY
        p = make_dict([(Str(key), Str(v)) for key, v in params.items()])
        m = Micro(
            {"/start": page("go", headers=headers), "/next": page("idle")},
            [("start", https_url("a.com", "/start", p, fragment))],
            {"go": href(https_url("b.com", "/next")), "idle": Recorder()},
        )
        load(m, "start")
        run_script(m)
        [(_, nxt)] = by_path(m, "/next")
        ref = try_validate("url", dict_get(nxt.headers, H_REFERER))
        assert ref.fragment == BOT
        if origin_policy:
            assert ref.path == Str("/") and ref.params == EMPTY
        else:
            assert ref.path == Str("/start") and ref.params == p


class TestNavigation:
    def test_sts_upgrades_later_requests(self):
        sts = seq(seq(H_STS, TOP))
        m = Micro(
            {"/start": lambda req, proto: (Num(200), sts, seq(Str("idle"), EMPTY)), "/page": page("idle")},
            [("start", https_url("a.com", "/start")), ("plain", http_url("a.com", "/page"))],
            {"idle": Recorder()},
        )
        load(m, "start")
        load(m, "plain")
        [(proto, _)] = by_path(m, "/page")
        assert proto == S

    def test_response_without_pending_request_is_ignored(self):
        m = Micro({"/start": page("idle")}, [("start", https_url("a.com", "/start"))], {"idle": Recorder()})
        from oauthsim.messages import HTTP_RESP
        from oauthsim.runtime import Event

        from .support import inject

        stray = Event(Addr("b"), Addr("srv"), seq(HTTP_RESP, Str("n"), Num(200), EMPTY, EMPTY))
        m.config = inject(m.config, stray)
        st = m.step("b", 0)
        assert st.stutter

    def test_new_window_each_urlbar_load(self):
        m = Micro({"/start": page("idle")}, [("start", https_url("a.com", "/start"))], {"idle": Recorder()})
        load(m, "start")
        load(m, "start")
        assert len(m.browser_state().items[0].items) == 2

    def test_initial_state_shape(self):
        s = initial_browser_state(EMPTY, EMPTY, EMPTY, Addr("dns"))
        assert len(s.items) == 12 and s.items[-1] == BOT
