import time

import numpy as np
import pytest

from pinhole.core import EmbeddingSet
from pinhole.sim import SimulationConfig, run_simulation


def make_set(vectors, spk_ids, partitions=None, prefix="u"):
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    n = len(spk_ids)
    partitions = partitions or ["F"] * n
    return EmbeddingSet([f"{prefix}{i:04d}" for i in range(n)], spk_ids, partitions, vectors)


def clustered_set(rng, n_spk=5, n_utt=6, dim=8, spread=3.0, noise=0.3, prefix="s"):
    means = rng.normal(0, spread, size=(n_spk, dim))
    vecs = np.repeat(means, n_utt, axis=0) + rng.normal(0, noise, size=(n_spk * n_utt, dim))
    spk = [f"{prefix}{s:02d}" for s in range(n_spk) for _ in range(n_utt)]
    utt = [f"{prefix}{s:02d}-{u:02d}" for s in range(n_spk) for u in range(n_utt)]
    part = ["F" if s % 2 == 0 else "M" for s in range(n_spk) for _ in range(n_utt)]
    return EmbeddingSet(utt, spk, part, vecs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_run():
    """The shipped default simulation (5 seeds), timed."""
    t0 = time.perf_counter()
    report = run_simulation(SimulationConfig())
    return report, time.perf_counter() - t0
