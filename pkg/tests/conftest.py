"""Shared trained runs. Each is built at most once per session and only when a test asks for it."""
import time

import pytest

from beamtrack.tracker.config import TrackerConfig
from beamtrack.tracker.experiment import build_dataset, run_experiment

def pytest_terminal_summary(terminalreporter):
    lines = [value for rep in terminalreporter.getreports("passed") + terminalreporter.getreports("failed")
             for key, value in getattr(rep, "user_properties", []) if key == "criterion"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


# t002 episodes carry 5 receivers x 20 scenes, about three times the t001
# sample count; 10 epochs keep the number of optimizer steps comparable.
T002_EPOCHS = 10


def _run(preset, config, static=False, with_selection=True, n_episodes=None):
    timings = {}
    t = time.perf_counter()
    samples = build_dataset(preset, n_episodes, seed=1, mode=config.input_mode, static=static, timings=timings)
    timings["assemble"] = time.perf_counter() - t - sum(timings.values())
    return run_experiment(samples, config, with_selection=with_selection, timings=timings)


@pytest.fixture(scope="session")
def t001_run():
    return _run("t001", TrackerConfig())


@pytest.fixture(scope="session")
def t002_run():
    return _run("t002", TrackerConfig(epochs=T002_EPOCHS), with_selection=False)


@pytest.fixture(scope="session")
def static_run():
    return _run("t001", TrackerConfig(), static=True, with_selection=False, n_episodes=60)
