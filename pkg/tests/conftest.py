import numpy as np
import pytest

from beamtrack import dqmath


def random_quat(rng, size=None):
    q = rng.normal(size=(size, 4) if size else 4)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def random_unit_dq(rng, size=None):
    """Uniformly random rigid transforms as unit dual quaternions."""
    if size is None:
        r = random_quat(rng)
        t = rng.uniform(-1.0, 1.0, 3)
        return dqmath.dq_from_rt(r, t)
    out = np.empty((size, 8))
    for k in range(size):
        out[k] = dqmath.dq_from_rt(random_quat(rng), rng.uniform(-1.0, 1.0, 3))
    return out


def random_pure_dq(rng):
    g = np.zeros(8)
    g[1:4] = rng.uniform(-1.5, 1.5, 3)
    g[5:] = rng.uniform(-1.0, 1.0, 3)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
