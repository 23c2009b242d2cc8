import numpy as np
import pytest

from aefl.autoencoder import AEConfig
from aefl.codec import ModelShape, flatten
from aefl.data import Layout, gen_blobs, partition
from aefl.fl import AggregatorState, make_collaborators, run_prepass
from aefl.nn import TrainConfig

# 8x8 grayscale blobs, MLP 64-16-4 (1,108 parameters)
SMALL_SHAPE = ModelShape.from_sizes([64, 16, 4], ["tanh", "softmax"])


def small_parts(n=400, n_parts=2, seed=0, spread=0.5):
    ds = gen_blobs(n, 64, 4, spread, seed=seed, layout=Layout("gray", 8, 8))
    return partition(ds, n_parts, seed=seed + 1)


def small_setup(n_parts=2, seed=0, lr=0.02):
    parts = small_parts(n_parts=n_parts, seed=seed)
    collabs = make_collaborators(parts, SMALL_SHAPE, TrainConfig(lr, 16, 1, shuffle_seed=seed))
    agg = AggregatorState(flatten(SMALL_SHAPE.build(seed + 100)), SMALL_SHAPE)
    return collabs, agg


def fast_ae(epochs=150, latent=16):
    return AEConfig(latent_dim=latent,
                    train=TrainConfig(2.0, 4, epochs, "mse", step_scale="fan_in"))


@pytest.fixture(scope="session")
def prepassed():
    """Two collaborators after a 12-epoch pre-pass with a quickly trained AE."""
    collabs, agg = small_setup()
    init = agg.global_weights.copy()
    histories = run_prepass(collabs, agg, 12, fast_ae())
    return collabs, agg, histories, init


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance results, printed once at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
