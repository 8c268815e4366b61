import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hom_feedback.event_sim import ExperimentConfig, Scenario, ScenarioKind

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    def _report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def ideal_config(kind=ScenarioKind.PERPENDICULAR, mu=1.0, **kw):
    """Lossless, noiseless detectors with one photon per cycle."""
    base = dict(
        emission_probability=1.0,
        delay_transmission=1.0,
        detector_efficiency=1.0,
        dark_rate=0.0,
        repump_light_rate=0.0,
        scenario=Scenario(kind, mu=mu),
    )
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
