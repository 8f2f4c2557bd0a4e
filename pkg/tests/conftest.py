import numpy as np
import pytest

from tmmse.channel import correlation_from_betas, sample_channel
from tmmse.config import SystemConfig
from tmmse.pilot import PilotAssignment, mmse_estimate, pilot_observation


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_estimates(config: SystemConfig, betas, pilots, trials, rng, model=None):
    """Channels and MMSE estimates for explicit (K, L) betas and pilot indices."""
    corr = correlation_from_betas(np.asarray(betas, dtype=float), config.antennas_per_ap, model)
    assignment = PilotAssignment(np.asarray(pilots))
    h = sample_channel(corr, rng, trials)
    z = pilot_observation(h, assignment, config, rng)
    return corr, assignment, h, mmse_estimate(z, corr, assignment, config)


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
