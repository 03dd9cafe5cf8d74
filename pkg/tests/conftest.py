import numpy as np
import pytest
from hypothesis import settings

from aris_privacy.channels import ChannelSet, draw_channels
from aris_privacy.scenario import Scenario, place_nodes
from aris_privacy.units import make_rng

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def small_instance(seed, M=4, K=4, E=2, n0=16, n_e=(8, 8), **overrides):
    """Placed scenario plus a partitioned channel draw sized exactly to the partition."""
    n_t = n0 + sum(n_e)
    s = place_nodes(Scenario(M=M, K=K, E=E, n_t=n_t, **overrides), make_rng(seed, 0))
    full = draw_channels(s, make_rng(seed, 1))
    return s, ChannelSet.partitioned(full, n0, n_e)


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def default_scene():
    return place_nodes(Scenario(), make_rng(11, 0))
