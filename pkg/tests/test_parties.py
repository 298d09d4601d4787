"""Relying party and identity provider endpoints, driven by injected requests."""

import pytest

from oauthsim.messages import (
    GET,
    H_AUTHORIZATION,
    H_COOKIE,
    H_LOCATION,
    H_ORIGIN,
    H_REFERRER_POLICY,
    H_SET_COOKIE,
    ORIGIN_POLICY,
    POST,
    S,
    URL,
    HttpRequest,
    try_validate,
)
from oauthsim.rp import LOGIN_SESSION_ID, SCRIPT_RP_INDEX
from oauthsim.idp import SCRIPT_IDP_FORM
from oauthsim.scenarios import build
from oauthsim.terms import BOT, EMPTY, TOP, Nonce, Num, Str, dict_get, dict_has, make_dict, seq

from .support import deliver, https_request, open_response

KEY = Nonce(500)


def k(name):
    return Str(name)


class World:
    def __init__(self, scenario="honest-fixed", **overrides):
        self.sc = build(scenario, {a: b for a, b in overrides.items()})
        self.system = self.sc.system
        self.reg = self.sc.registry
        self.config = self.system.initial_config()
        self.index = 0
        alice = self.reg.identities[0]
        self.alice, self.password = alice.term, alice.secret
        self.cid, self.client_secret = self.reg.clients[("rp", "idp")]

    def send(self, pid, host, req, key=KEY, sender="b", **choices):
        ev = https_request(self.reg, sender, host, req, key)
        step, cfg = deliver(self.system, self.config, pid, ev, self.index, **choices)
        self.index += 1
        if not step.stutter:
            self.config = cfg
        return step

    def to_idp(self, method, path, params=EMPTY, headers=EMPTY, body=EMPTY, **choices):
        req = HttpRequest(Nonce(600 + self.index), method, k("idp.com"), k(path), params, headers, body)
        return self.send("idp", "idp.com", req, **choices)

    def to_rp(self, method, path, params=EMPTY, headers=EMPTY, body=EMPTY, **choices):
        req = HttpRequest(Nonce(700 + self.index), method, k("rp.com"), k(path), params, headers, body)
        return self.send("rp", "rp.com", req, **choices)

    def login_body(self, response_type="code", password=None, client_id=None, redirect_uri=None, state="st"):
        pairs = [(k("username"), self.alice), (k("password"), password or self.password),
                 (k("client_id"), client_id or self.cid), (k("response_type"), k(response_type)),
                 (k("state"), k(state))]
        if redirect_uri is not None:
            pairs.append((k("redirect_uri"), redirect_uri))
        return make_dict(pairs)

    def idp_origin(self):
        return seq(seq(H_ORIGIN, seq(k("idp.com"), S)))

    def authorize(self, **kw):
        return self.to_idp(POST, "/auth", headers=self.idp_origin(), body=self.login_body(**kw))


def location(step):
    resp = open_response(step, KEY)
    return resp, try_validate("url", resp.header(H_LOCATION))


class TestIdp:
    def test_form_page(self):
        w = World()
        resp = open_response(w.to_idp(GET, "/auth", params=make_dict([(k("state"), k("s"))])), KEY)
        assert resp.status == Num(200)
        assert resp.body.items[0] == SCRIPT_IDP_FORM
        assert dict_get(resp.headers, H_REFERRER_POLICY) == ORIGIN_POLICY

    def test_form_page_without_policy_when_disabled(self):
        w = World("state-leak")
        resp = open_response(w.to_idp(GET, "/auth"), KEY)
        assert not dict_has(resp.headers, H_REFERRER_POLICY)

    def test_code_redirect(self):
        w = World()
        step = w.authorize()
        resp, loc = location(step)
        assert resp.status == Num(303)
        assert loc.host == k("rp.com") and loc.path == k("/redirectionEndpoint")
        assert dict_get(loc.params, k("iss")) == k("idp.com")
        assert dict_get(loc.params, k("state")) == k("st")
        assert dict_get(loc.params, k("code")) == step.meta["code_issued"]

    def test_307_toggle(self):
        w = World("attack-307")
        resp, _ = location(w.authorize())
        assert resp.status == Num(307)

    def test_implicit_redirect_carries_token_in_fragment(self):
        w = World()
        step = w.authorize(response_type="token")
        _, loc = location(step)
        assert dict_get(loc.fragment, k("access_token")) == step.meta["token_issued"]
        assert dict_get(loc.params, k("code")) == EMPTY

    @pytest.mark.parametrize("kw", [
        {"password": Nonce(999)},
        {"client_id": k("nobody")},
        {"redirect_uri": seq(URL, S, k("evil.com"), k("/x"), EMPTY, EMPTY)},
    ])
    def test_rejections(self, kw):
        assert World().authorize(**kw).stutter

    def test_identity_of_another_idp_rejected(self):
        w = World()
        foreign = [i for i in w.reg.identities if i.governor != "idp"][0]
        body = make_dict([(k("username"), foreign.term), (k("password"), foreign.secret),
                          (k("client_id"), w.cid), (k("response_type"), k("token")), (k("state"), k("st"))])
        assert w.to_idp(POST, "/auth", headers=w.idp_origin(), body=body).stutter

    def test_csrf_origin_required(self):
        w = World()
        assert w.to_idp(POST, "/auth", body=w.login_body()).stutter

    def test_code_is_single_use(self):
        w = World()
        code = w.authorize().meta["code_issued"]
        auth = seq(seq(H_AUTHORIZATION, seq(w.cid, w.client_secret)))
        body = make_dict([(k("grant_type"), k("authorization_code")), (k("code"), code)])
        first = w.to_idp(POST, "/token", headers=auth, body=body)
        assert not first.stutter
        assert dict_get(open_response(first, KEY).body, k("access_token")) == first.meta["token_issued"]
        assert w.to_idp(POST, "/token", headers=auth, body=body).stutter

    def test_token_endpoint_checks_client_secret(self):
        w = World()
        code = w.authorize().meta["code_issued"]
        body = make_dict([(k("grant_type"), k("authorization_code")), (k("code"), code)])
        wrong = seq(seq(H_AUTHORIZATION, seq(w.cid, Nonce(999))))
        assert w.to_idp(POST, "/token", headers=wrong, body=body).stutter
        # a client with a secret cannot authenticate by id alone
        body_id = make_dict([(k("grant_type"), k("authorization_code")), (k("code"), code), (k("client_id"), w.cid)])
        assert w.to_idp(POST, "/token", body=body_id).stutter

    def test_secretless_client_redeems_by_id(self):
        w = World("mixup-code")
        assert w.client_secret == BOT
        code = w.authorize().meta["code_issued"]
        body = make_dict([(k("grant_type"), k("authorization_code")), (k("code"), code), (k("client_id"), w.cid)])
        assert not w.to_idp(POST, "/token", body=body).stutter

    def test_introspection_returns_resource(self):
        w = World()
        token = w.authorize(response_type="token").meta["token_issued"]
        step = w.to_idp(GET, "/introspect", params=make_dict([(k("token"), token)]))
        body = open_response(step, KEY).body
        assert dict_get(body, k("protected_resource")) == w.reg.resource_of("idp", w.cid, w.alice)
        assert dict_get(body, k("user")) == w.alice
        assert w.to_idp(GET, "/introspect", params=make_dict([(k("token"), Nonce(998))])).stutter


class TestRp:
    def rp_origin(self):
        return seq(seq(H_ORIGIN, seq(k("rp.com"), S)))

    def start(self, w, mode="code", idp="idp.com"):
        return w.to_rp(POST, "/startInteractiveLogin", headers=self.rp_origin(), body=k(idp),
                       mode=f'"{mode}"', redirect_uri="⊥")

    def test_index_page(self):
        resp = open_response(World().to_rp(GET, "/"), KEY)
        assert resp.body.items[0] == SCRIPT_RP_INDEX
        assert dict_get(resp.headers, H_REFERRER_POLICY) == ORIGIN_POLICY

    def test_start_login(self):
        w = World()
        step = self.start(w)
        resp, loc = location(step)
        assert resp.status == Num(303)
        assert loc.host == k("idp.com") and loc.path == k("/auth")
        assert dict_get(loc.params, k("state")) == step.meta["state_nonce"]
        assert dict_get(loc.params, k("client_id")) == w.cid
        [c] = dict_get(resp.headers, H_SET_COOKIE).items
        assert c.items[0] == LOGIN_SESSION_ID
        assert c.items[1].items[1:] == (TOP, TOP, TOP)

    def test_start_requires_origin(self):
        w = World()
        assert w.to_rp(POST, "/startInteractiveLogin", body=k("idp.com")).stutter

    def test_start_unknown_idp(self):
        assert self.start(World(), idp="nowhere.com").stutter

    def test_fresh_state_per_attempt(self):
        w = World()
        assert self.start(w).meta["state_nonce"] != self.start(w).meta["state_nonce"]

    def test_static_state_when_fresh_state_off(self):
        w = World(freshStatePerAttempt="false")
        assert self.start(w).meta["state_nonce"] == self.start(w).meta["state_nonce"]

    def _redirect(self, w, sid, iss="idp.com", client_id=None, state=None, code=Nonce(321)):
        params = make_dict([(k("iss"), k(iss)), (k("client_id"), client_id or w.cid),
                            (k("code"), code), (k("state"), state)])
        headers = seq(seq(H_COOKIE, seq(seq(LOGIN_SESSION_ID, sid))))
        return w.to_rp(GET, "/redirectionEndpoint", params=params, headers=headers)

    def test_redirect_without_session(self):
        w = World()
        assert self._redirect(w, Nonce(404), state=k("x")).stutter

    def test_redirect_proceeds_to_token_request(self):
        w = World()
        st = self.start(w)
        step = self._redirect(w, st.meta["login_session"], state=st.meta["state_nonce"])
        assert not step.stutter and step.meta["code_sent"] == Nonce(321)
        [ev] = step.emitted
        assert ev.msg.items[1] == k("idp.com")

    def test_state_mismatch(self):
        w = World()
        st = self.start(w)
        assert self._redirect(w, st.meta["login_session"], state=k("forged")).stutter

    def test_issuer_check(self):
        w = World()
        st = self.start(w)
        cid_a = w.reg.clients[("rp", "att")][0]
        assert self._redirect(w, st.meta["login_session"], iss="aidp.com", client_id=cid_a,
                              state=st.meta["state_nonce"]).stutter

    def test_issuer_check_off_accepts_foreign_iss(self):
        w = World("mixup-code")
        st = self.start(w)
        step = self._redirect(w, st.meta["login_session"], iss="aidp.com", state=st.meta["state_nonce"])
        assert not step.stutter
        # the code still goes to the IdP the session was started with
        assert step.emitted[0].msg.items[1] == k("idp.com")

    def test_naive_tracking_trusts_iss(self):
        w = World("naive-rp")
        st = self.start(w)
        cid_a = w.reg.clients[("rp", "att")][0]
        step = self._redirect(w, st.meta["login_session"], iss="aidp.com", client_id=cid_a,
                              state=st.meta["state_nonce"])
        assert not step.stutter
        assert step.emitted[0].msg.items[1] == k("aidp.com")

    def test_corrupted_rp_only_records(self):
        from oauthsim.rp import CORRUPT
        from oauthsim.runtime import Event

        w = World()
        step, w.config = deliver(w.system, w.config, "rp", Event(w.reg.address("rp"), w.reg.address("att"), CORRUPT))
        assert step.emitted == ()
        log = w.config.state_of(w.system, "rp").items[-1]
        assert log.items[0].items[2] == CORRUPT
        # afterwards even a well-formed request is only logged
        after = w.to_rp(GET, "/")
        assert after.emitted == ()
        assert len(w.config.state_of(w.system, "rp").items[-1].items) == 2
