import numpy as np
import pytest

import sparsegnn as sg


@pytest.fixture
def clique2():
    """2-node clique with self-loops; symmetric normalization gives all 0.5."""
    g = sg.add_self_loops(sg.from_edges(2, [0, 1], [1, 0]))
    return sg.normalize_adjacency(g, 0.5)


@pytest.fixture
def path3():
    """3-node path 0-1-2 with self-loops, degrees (2,3,2)."""
    g = sg.add_self_loops(sg.from_edges(3, [0, 1, 1, 2], [1, 0, 2, 1]))
    return sg.normalize_adjacency(g, 0.5)


def er_diffusion(n, seed, p=0.3, r=0.5):
    return sg.theory.random_diffusion(n, p, seed, r)


def rand_features(n, f, seed):
    return np.random.default_rng(seed).standard_normal((n, f))
