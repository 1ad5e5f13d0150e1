import math

import numpy as np
import pytest
from hypothesis import strategies as st

from ppsmeter.core import Observable, PPSPair


def random_state(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_instance(rng, d=None, degenerate=False):
    d = d or int(rng.integers(2, 6))
    a = rng.uniform(-1, 1, d)
    if degenerate:
        a[1] = a[0]
    a /= np.abs(a).max()
    return Observable(a), PPSPair(random_state(rng, d), random_state(rng, d))


def readout_vector(r):
    return np.array([r.probability, r.dp, r.dq, r.sd_p, r.sd_q])


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


angles_theta = st.floats(0.0, math.pi, allow_nan=False)
angles_phi = st.floats(0.0, 2 * math.pi, allow_nan=False, exclude_max=True)


@st.composite
def instances(draw, dims=(2, 3, 4, 5)):
    d = draw(st.sampled_from(dims))
    seed = draw(st.integers(0, 2**32 - 1))
    degenerate = draw(st.booleans())
    return random_instance(np.random.default_rng(seed), d, degenerate and d > 2)
