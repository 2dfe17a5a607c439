import random

import pytest

from rapidmem.core import Configuration, Member, NodeId, ProtocolParams
from rapidmem.simnet import endpoint_for
from rapidmem.topology import build, spectral_gap


def random_config(n: int, K: int = 10, seed: int = 0, H: int | None = None,
                  L: int = 1) -> Configuration:
    rng = random.Random(seed)
    members = [Member(NodeId(rng.getrandbits(128)), endpoint_for(i)) for i in range(n)]
    return Configuration.initial(members, ProtocolParams(K=K, H=H or K, L=L))


@pytest.fixture(scope="session")
def spectral_reports_1000():
    """Spectral reports for 20 seeded n=1000, K=10 overlays (shared, slow to build)."""
    return [spectral_gap(build(random_config(1000, 10, seed)), seed=seed) for seed in range(20)]


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES):
            terminalreporter.write_line(line)
