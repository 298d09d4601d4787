from oauthsim.explore import explore, successors
from oauthsim.properties import LEMMA_PASSWORDS, check_trace
from oauthsim.runtime import replay_lines
from oauthsim.scenarios import build


def test_small_honest_search_is_clean():
    report = explore(build("honest-fixed").system, 8, 2)
    assert report.violations == 0
    assert report.nodes > 50
    assert report.max_depth == 8


def test_307_search_finds_password_leak():
    sc = build("attack-307")
    report = explore(sc.system, 10, 2)
    props = {f.property for f in report.findings}
    assert LEMMA_PASSWORDS in props
    [f] = [f for f in report.findings if f.property == LEMMA_PASSWORDS]
    assert f.depth <= 10


def test_findings_replay_and_recheck():
    sc = build("attack-307")
    report = explore(sc.system, 10, 2, stop_on_violation=True)
    [f] = report.findings
    lines = f.trace.serialize().splitlines()[1:]
    again = replay_lines(build("attack-307").system, lines)
    assert again.serialize().splitlines()[1:] == lines
    assert f.property in check_trace(again).violated


def test_branch_bound_limits_children():
    sc = build("honest-fixed")
    narrow = explore(sc.system, 5, 1)
    wide = explore(sc.system, 5, 3)
    assert narrow.nodes <= 1 + 5 * 2
    assert wide.nodes > narrow.nodes


def test_search_is_deterministic():
    a = explore(build("honest-fixed").system, 6, 2)
    b = explore(build("honest-fixed").system, 6, 2)
    assert (a.nodes, a.duplicates) == (b.nodes, b.duplicates)


def test_successors_are_not_stutters():
    sc = build("honest-fixed")
    cfg = sc.system.initial_config()
    succ = list(successors(sc.system, cfg, 0))
    assert succ
    assert all(not step.stutter for step, _ in succ)


def test_report_dict_lists_violations():
    report = explore(build("attack-307").system, 10, 2)
    d = report.to_dict()
    assert d["branch"] == 2 and d["depth"] == 10
    assert [v["property"] for v in d["violations"]] == [f.property for f in report.findings]
