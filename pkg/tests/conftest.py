import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from markedratio.simulation import example1, simulate_marked_process

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def ex1():
    return example1()


@pytest.fixture(scope="session")
def ex1_path_1000(ex1):
    truth, spec = ex1
    stream, path = simulate_marked_process(truth, spec, 1000.0, seed=12345)
    return stream, path


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def lob_days():
    """21 synthetic trading days (fit on day d, predict d+1 gives 20 evaluation days)."""
    from markedratio.lob import LobConfig, simulate_synthetic_lob
    cfg = LobConfig()
    seeds = np.random.SeedSequence(2024).spawn(21)
    return cfg, [simulate_synthetic_lob(cfg, seed=s) for s in seeds]


@pytest.fixture(scope="session")
def lob_prediction_runs(lob_days):
    from markedratio.prediction import PredictionPlan, run_prediction_study
    cfg, days = lob_days
    plan = PredictionPlan(marked_sets=[("12", "13", "1")], unmarked_sets=["14689"], hawkes4d=True, bayes=cfg)
    return run_prediction_study(days, plan)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record, print and assert one acceptance criterion."""
    store = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def check(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[number] = line
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE_KEY, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for n in sorted(store):
            terminalreporter.write_line(store[n])
