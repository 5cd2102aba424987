import numpy as np
import pytest

from soundloc.acoustics import RoomSpec, render_mixture, sample_scene


@pytest.fixture
def room():
    return RoomSpec()


@pytest.fixture
def anechoic():
    return RoomSpec(max_reflection_order=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_recordings(room, n, M=4, K=1, U=0, n_samples=512, seed0=0, noise_std=1e-3):
    out = []
    for s in range(seed0, seed0 + n):
        sc = sample_scene(room, M, K, U, seed=s, n_samples=n_samples)
        out.append(render_mixture(room, sc.mics, sc.sources, noise_std=noise_std, seed=s))
    return out
