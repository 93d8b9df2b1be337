import pytest

from fedsov import pairing_sig as ps
from fedsov.fl_sim import FLConfig, run_federation, save_run


@pytest.fixture(scope="session")
def desk():
    return ps.setup("desk_toy", seed=1)


@pytest.fixture(scope="session")
def bls():
    return ps.setup("bls12_381")


@pytest.fixture(scope="session")
def desk_cfg():
    return FLConfig(seed=0)


@pytest.fixture(scope="session")
def trained(desk_cfg):
    """The default desk-scale FedSOV run (K=10, omega=512, n=256)."""
    return run_federation(desk_cfg)


@pytest.fixture(scope="session")
def run_dir(trained, tmp_path_factory):
    return save_run(trained, tmp_path_factory.mktemp("run"))


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
