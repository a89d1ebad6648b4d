"""Shared fixtures: the seeded default dataset and the detector trained on
it are expensive enough to build once per session and reuse across modules."""

import numpy as np
import pytest

from coolguard import forest, simgen


@pytest.fixture(scope="session")
def default_dataset():
    cfg = simgen.SimConfig()
    readings, events = simgen.generate_dataset(cfg)
    return cfg, readings, events


@pytest.fixture(scope="session")
def default_flags(default_dataset):
    _, readings, events = default_dataset
    return simgen.leak_flags(readings, events)


@pytest.fixture(scope="session")
def default_arrays(default_dataset, default_flags):
    _, readings, _ = default_dataset
    x = np.array([r.channel_values() for r in readings], dtype=np.float64)
    y = np.array(default_flags, dtype=bool)
    return x, y


@pytest.fixture(scope="session")
def default_forest(default_arrays):
    x, y = default_arrays
    return forest.fit(x, y)


@pytest.fixture(scope="session")
def slice_dataset(default_dataset, default_flags, tmp_path_factory):
    """A 6-hour slice of the reference week centred on its first onset.

    Big enough to exercise the full inference path (one episode, five
    hours of approach) while keeping replay-style tests fast.
    """
    from coolguard.model import NS_PER_MINUTE, write_dataset

    cfg, readings, events = default_dataset
    onset_minute = int((events[0].onset - cfg.start_ns) // NS_PER_MINUTE)
    lo = max(0, onset_minute - 300)
    hi = min(len(readings), onset_minute + 60)
    path = tmp_path_factory.mktemp("slice") / "slice.csv"
    write_dataset(path, readings[lo:hi], default_flags[lo:hi])
    return path
