import numpy as np
import pytest

from weightedgcl import (BipartiteGraph, GranularitySchedule, SplitSpec, build_adjacency,
                         generate_interactions, init_params, kcore_filter, split)

import reference


@pytest.fixture(scope="session")
def tiny_dataset():
    """~20-user synthetic dataset shared by training-level tests."""
    inter = kcore_filter(generate_interactions(20, 30, 2, 0.4, 0.05, seed=11), 2)
    return split(inter, SplitSpec(seed=3))


@pytest.fixture
def tiny_instance():
    """Small random graph + params for forward/gradient tests.

    Seed chosen so the exciter has live ReLU units and pre-activations
    comfortably away from the kink (finite differences stay valid).
    """
    rng = np.random.default_rng(0)
    num_users, num_items, d, n_layers, levels = 5, 7, 8, 2, 2
    edges = reference.random_bipartite(rng, num_users, num_items)
    adj = build_adjacency(BipartiteGraph(num_users, num_items, edges))
    params = init_params(adj.num_nodes, d, GranularitySchedule(d, levels), seed=0)
    return {
        "num_users": num_users,
        "num_items": num_items,
        "d": d,
        "n_layers": n_layers,
        "levels": levels,
        "edges": edges,
        "adj": adj,
        "params": params,
    }
