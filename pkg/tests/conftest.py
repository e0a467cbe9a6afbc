import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

REFERENCE_SEQUENCE = ["Z0", "X0", "Z1", "X0", "Z0"]


@pytest.fixture(scope="session")
def reference_scenario():
    """The five-state reference run at dt = 0.1 ps with default settings."""
    from injqkd.config import RunConfig
    from injqkd.scenario import run_scenario

    return run_scenario(RunConfig.from_dict({"sequence": REFERENCE_SEQUENCE}))


@pytest.fixture
def no_outdir_env(monkeypatch):
    monkeypatch.delenv("INJQKD_OUTPUT_DIR", raising=False)


def pytest_terminal_summary(terminalreporter):
    lines = [v for reports in terminalreporter.stats.values() for r in reports
             if getattr(r, "when", None) == "call"
             for k, v in getattr(r, "user_properties", ()) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
