import pytest
from hypothesis import given
from hypothesis import strategies as st

from oauthsim.scenarios import (
    EXPECTED,
    SCENARIO_TOGGLES,
    SCENARIOS,
    ConfigError,
    FixToggles,
    build,
    expected_violations,
    parse_toggles,
)
from oauthsim.terms import BOT, Nonce

TOGGLE_VALUES = {
    "redirectStatus": ["303", "307"],
    "issParamCheck": ["true", "false"],
    "referrerPolicy": ["true", "false"],
    "intentionTracking": ["explicit", "naive"],
    "freshStatePerAttempt": ["true", "false"],
    "clientSecretPresent": ["true", "false"],
}


@pytest.mark.parametrize("name", SCENARIOS)
class TestRegistry:
    def test_client_ids_injective_per_idp(self, name):
        reg = build(name).registry
        by_idp = {}
        for (rp, idp), (cid, _) in reg.clients.items():
            by_idp.setdefault(idp, []).append(cid)
        for cids in by_idp.values():
            assert len(cids) == len(set(cids))

    def test_resources_and_secrets_are_distinct_nonces(self, name):
        reg = build(name).registry
        nonces = list(reg.resources.values()) + [i.secret for i in reg.identities] + list(reg.keys.values())
        assert all(isinstance(n, Nonce) for n in nonces)
        assert len(nonces) == len(set(nonces))

    def test_domains_disjoint(self, name):
        reg = build(name).registry
        owned = [d for p in reg.parties.values() for d in p.domains]
        assert len(owned) == len(set(owned))
        for d in owned:
            assert reg.owner_of_domain(d) is not None

    def test_identity_lookups(self, name):
        reg = build(name).registry
        for ident in reg.identities:
            assert reg.secret_of_id(ident.term) == ident.secret
            assert reg.owner_of_id(ident.term) == ident.owner

    def test_expected_matches_table(self, name):
        assert build(name).expected == EXPECTED[name]

    def test_schedule_not_empty(self, name):
        assert build(name).schedule


def test_default_toggles_are_the_fixed_ones():
    assert FixToggles().as_dict() == {
        "redirectStatus": "303", "issParamCheck": "true", "referrerPolicy": "true",
        "intentionTracking": "explicit", "freshStatePerAttempt": "true", "clientSecretPresent": "true",
    }


def test_scenario_toggles_applied():
    for name, overrides in SCENARIO_TOGGLES.items():
        got = build(name).toggles.as_dict()
        for key, v in overrides.items():
            assert got[key] == v


def test_mixup_code_client_has_no_secret():
    assert build("mixup-code").registry.clients[("rp", "idp")][1] == BOT
    assert build("honest-fixed").registry.clients[("rp", "idp")][1] != BOT


@pytest.mark.parametrize("bad", [
    {"redirectStatus": "302"},
    {"issParamCheck": "maybe"},
    {"intentionTracking": "psychic"},
    {"noSuchToggle": "true"},
])
def test_bad_toggle_values(bad):
    with pytest.raises(ConfigError):
        build("honest-fixed", bad)


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        build("nope")


@pytest.mark.parametrize("name", ["mixup-code", "mixup-implicit"])
def test_mixup_with_naive_tracking_is_inconsistent(name):
    with pytest.raises(ConfigError):
        build(name, {"intentionTracking": "naive"})


def test_parse_toggles():
    assert parse_toggles(["issParamCheck=false", "redirectStatus=307"]) == {
        "issParamCheck": "false", "redirectStatus": "307"}
    assert parse_toggles(None) == {}
    with pytest.raises(ConfigError):
        parse_toggles(["issParamCheck"])
    with pytest.raises(ConfigError):
        parse_toggles(["bogus=1"])


def test_booleans_case_insensitive():
    t = FixToggles()
    t.set("referrerPolicy", "FALSE")
    assert t.referrer_policy is False


@given(st.fixed_dictionaries({}, optional={k: st.sampled_from(v) for k, v in TOGGLE_VALUES.items()}))
def test_expected_violations_only_for_the_scenarios_own_toggles(overrides):
    for name in SCENARIOS:
        t = FixToggles()
        for key, v in {**SCENARIO_TOGGLES[name], **overrides}.items():
            t.set(key, v)
        got = expected_violations(name, t)
        matches = all(t.as_dict()[key] == v for key, v in SCENARIO_TOGGLES[name].items())
        assert got == (EXPECTED[name] if matches else set())
