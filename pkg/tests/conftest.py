import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xmodal.numerics import Rng
from xmodal.synthdata import WorldConfig
from xmodal.trainer import EncoderConfig, EvalConfig, ExperimentConfig

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return Rng(2024)


def tiny_config(**overrides) -> ExperimentConfig:
    """A seconds-scale experiment for plumbing tests."""
    base = dict(
        world=WorldConfig(num_identities=40, frames=4, dim_a=6, dim_b=7, content_classes=5),
        encoder=EncoderConfig(hidden=[8], output_dim=4),
        eval=EvalConfig(every=5, clips_per_identity=2, cbm_pairs=200, sv_pairs=200, recall_k=3,
                        probe_train_clips=40, probe_epochs=20, probe_k=2),
        batch_size=8, sync_batch_size=4, steps=10,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture
def tiny():
    return tiny_config


def random_rows(rng: Rng, n: int, d: int) -> np.ndarray:
    return rng.normal(size=(n, d))


# one verdict line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
