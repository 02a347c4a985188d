import pytest

from nbtree import Config, NBTree, key_from_int


def K(i):
    return key_from_int(i)


def V(i, n=8):
    return i.to_bytes(n, "big")


@pytest.fixture
def small_config():
    return Config(page_bytes=512, sigma=32, stree_fanout=3, value_bytes=8)


@pytest.fixture
def small_tree(small_config):
    return NBTree(small_config)


# criterion id -> list of (ok, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(ac, ok, detail):
    ACCEPTANCE.setdefault(ac, []).append((bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(ACCEPTANCE, key=lambda a: int(a[2:])):
        results = ACCEPTANCE[ac]
        ok = all(r[0] for r in results)
        details = "; ".join(d for _, d in results)
        terminalreporter.write_line(f"{ac} {'PASS' if ok else 'FAIL'}: {details}")
