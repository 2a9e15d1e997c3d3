"""Session-scoped fixtures: the synthetic corpus and trained models are shared."""

import pytest

from spikedec.data import SplitSpec, split, synth_reaching
from spikedec.model import Model, preset
from spikedec.numerics import Rng
from spikedec.train import TrainConfig, fit

SYNTH_SEED = 42
SYNTH_SECONDS = 1200.0
SYNTH_CHANNELS = 96


@pytest.fixture(scope="session")
def synth_recording():
    """The seed-fixed 20-minute, 96-channel corpus used across the suite."""
    return synth_reaching(Rng(SYNTH_SEED), SYNTH_SECONDS, SYNTH_CHANNELS)


@pytest.fixture(scope="session")
def synth_splits(synth_recording):
    return split(synth_recording, SplitSpec((0.5, 0.25, 0.25)))


@pytest.fixture(scope="session")
def small_recording():
    """Two minutes of data for fast data-handling tests."""
    return synth_reaching(Rng(7), 120.0, 96)


@pytest.fixture(scope="session")
def trained_models(synth_splits):
    """Lazily trained track-2 models, keyed by (recurrence, seed)."""
    train_rec, val_rec, _ = synth_splits
    cache = {}

    def get(recurrence: str, seed: int, epochs: int = 14):
        key = (recurrence, seed, epochs)
        if key not in cache:
            cfg = preset("track2", recurrence)
            cfg.seed = seed
            model = Model.init(cfg)
            tcfg = TrainConfig(epochs=epochs, seed=seed, early_stop_patience=6)
            best, history = fit(model, train_rec, val_rec, tcfg)
            cache[key] = (best, history)
        return cache[key]

    return get
