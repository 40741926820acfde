import os
import sys
from importlib import resources

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from nodehmc.network import load_network  # noqa: E402


def data_dir(name):
    return str(resources.files("nodehmc") / "data" / name)


@pytest.fixture
def synthetic_config():
    return os.path.join(data_dir("synthetic"), "config.ini")


@pytest.fixture
def diamond_config():
    return os.path.join(data_dir("diamond"), "config.ini")


def graph(edges, nodes=None):
    return load_network([(a, b, 1.0) for a, b in edges], nodes=nodes)


def clique_edges(names):
    return [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]


def barbell(k=6):
    left = [f"l{i}" for i in range(k)]
    right = [f"r{i}" for i in range(k)]
    return graph(clique_edges(left) + clique_edges(right) + [(left[0], right[0])]), left, right
