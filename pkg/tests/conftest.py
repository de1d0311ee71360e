import os

import hypothesis
import numpy as np
import pytest

from config import OfdmConfig, derive_params, load_config

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))


def make_config(subcarriers, cp_length, symbols, **overrides):
    values = dict(
        carrier_frequency=3.5e9,
        bandwidth=200e6,
        subcarriers=subcarriers,
        cp_length=cp_length,
        symbols=symbols,
    )
    values.update(overrides)
    return OfdmConfig(**values)


@pytest.fixture
def tiny_config():
    return make_config(64, 16, 8)


@pytest.fixture
def tiny_params(tiny_config):
    return derive_params(tiny_config)


@pytest.fixture
def small_config():
    return make_config(256, 32, 16)


@pytest.fixture
def small_params(small_config):
    return derive_params(small_config)


@pytest.fixture
def desk_config():
    return load_config('desk')


@pytest.fixture
def desk_params(desk_config):
    return derive_params(desk_config)


@pytest.fixture(autouse=True)
def isolated_dirs(tmp_path, monkeypatch):
    from config import Config

    monkeypatch.setattr(Config, 'LOG_DIR', str(tmp_path / 'logs'))
    monkeypatch.setattr(Config, 'OUTPUT_DIR', str(tmp_path / 'results'))
    monkeypatch.setattr(Config, 'PROGRESS', False)
