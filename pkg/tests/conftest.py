import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from finetec.core import full_sequence

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_sequence(seed: int, T: int = 16, label=None, id_: str = "s") -> object:
    gen = np.random.default_rng(seed)
    return full_sequence(gen.normal(size=(T, 17, 2)), id=id_, label=label)


@pytest.fixture
def seq16():
    return random_sequence(0)


TINY_CONFIG = {
    "synth": {"num_classes": 3, "per_class": 5, "T": 12},
    "completion": {"embed": 8, "blocks": 1, "steps": 6, "batch_size": 4, "query_rates": [0.25, 0.5]},
    "corruption": {"rate": 0.25},
    "dynamics": {"feature_width": 4, "hidden": 8, "fusion_width": 4},
    "recognition": {"channels": [4, 8, 8]},
    "training": {"epochs": 2, "batch_size": 6},
}


@pytest.fixture
def tiny_config():
    from finetec.config import RunConfig

    return RunConfig.from_dict(TINY_CONFIG)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
