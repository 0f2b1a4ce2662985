import numpy as np
import pytest

from pvcast import synth

# acceptance results, filled by test_acceptance.py and printed at the end
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0][2:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def linear_map_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("linear_map")
    synth.linear_map(out, seed=42)
    return out
