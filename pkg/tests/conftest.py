from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from biphoton.model import make_state
from biphoton.pipeline import run
from biphoton.scenario import load_preset

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# Filled by tests/test_acceptance.py; printed once at the end of the session.
CRITERIA: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        title, ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")


@pytest.fixture
def table1_state():
    return make_state(10.56, 9.69, -0.9951, 2586.9, 2276.9)


@pytest.fixture(scope="session")
def preset_run(tmp_path_factory):
    """``preset_run(name, tag="a", **overrides) -> (out_dir, RunResult)``, cached per session.

    Different tags give independent executions of the same configuration.
    """
    cache = {}

    def get(name, tag="a", **overrides):
        key = (name, tag, tuple(sorted(overrides.items())))
        if key not in cache:
            out = tmp_path_factory.mktemp(f"{name}-{tag}")
            scenario = load_preset(name)
            if overrides:
                scenario = scenario.with_overrides(**overrides)
            cache[key] = (out, run(scenario, "all", out))
        return cache[key]

    return get


def random_states(n, seed, chirp=0.05, rho=(-0.995, 0.95), sigma=(1.0, 15.0)):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        out.append(make_state(
            rng.uniform(*sigma), rng.uniform(*sigma), rng.uniform(*rho),
            rng.uniform(-50, 50), rng.uniform(-50, 50),
            rng.uniform(-chirp, chirp), rng.uniform(-chirp, chirp),
        ))
    return out
