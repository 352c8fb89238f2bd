import itertools

import numpy as np
import pytest

from valleyscope.rbm import RbmParams


def random_rbm(n_v, n_h, seed, scale=1.0):
    return RbmParams.random(n_v, n_h, np.random.default_rng(seed), scale)


def brute_states(n):
    """All +-1 vectors of length n in itertools order (independent of the package's enumeration)."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


def naive_energy(params, v, h):
    e = 0.0
    for i in range(params.n_h):
        for j in range(params.n_v):
            e -= params.w[i, j] * h[i] * v[j]
    for j in range(params.n_v):
        e -= params.b[j] * v[j]
    for i in range(params.n_h):
        e -= params.c[i] * h[i]
    return e


@pytest.fixture
def rbm43():
    return random_rbm(4, 3, 7)


# one summary line per acceptance criterion, printed after the run
_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = item.get_closest_marker("criterion")
    if crit is None or rep.when not in ("setup", "call"):
        return
    cid = crit.args[0]
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.failed or (rep.when == "call"):
        prev = _CRITERIA.get(cid, (True, ""))
        _CRITERIA[cid] = (prev[0] and rep.passed, detail or prev[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: int(c[1:])):
        ok, detail = _CRITERIA[cid]
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")
