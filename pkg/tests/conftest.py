"""Shared fixtures: a small deterministic synthetic ensemble, a trained
SOM over it, the default embedding, a two-county spatial index aligned
with the offline LLM stub, and a ready-to-serve project."""

from __future__ import annotations

import numpy as np
import pytest

from ensomap.data import (
    CountyIndex,
    MemberId,
    SyntheticSpec,
    flatten_samples,
    generate_synthetic_ensemble,
    make_archetypes,
    normalize_per_month,
)
from ensomap.embed import build_node_graph, mde_project
from ensomap.project import Project
from ensomap.som import SomConfig, train_som


ROWS, COLS = 6, 6


def _spec() -> SyntheticSpec:
    arche = make_archetypes(ROWS, COLS, 2, seed=7)
    return SyntheticSpec(
        rows=ROWS,
        cols=COLS,
        archetypes=arche,
        member_ids=[
            MemberId("gcmA", "historical"),
            MemberId("gcmA", "ssp245"),
            MemberId("gcmB", "historical"),
            MemberId("gcmB", "ssp245"),
        ],
        member_weights=[
            np.array([0.9, 0.1]),
            np.array([0.1, 0.9]),
            np.array([0.8, 0.2]),
            np.array([0.2, 0.8]),
        ],
        years=3,
        months=[1, 2, 3],
        start_year=2000,
        noise=0.05,
    )


@pytest.fixture(scope="session")
def dataset():
    return normalize_per_month(generate_synthetic_ensemble(_spec(), seed=11))


@pytest.fixture(scope="session")
def samples(dataset):
    return flatten_samples(dataset)


@pytest.fixture(scope="session")
def som(samples):
    config = SomConfig(rows=4, cols=4, kR=0.03, kS=0.2, iterations=2000, seed=0)
    return train_som(samples, config)


@pytest.fixture(scope="session")
def embedding(som):
    edges, targets = build_node_graph(som)
    return mde_project(edges, targets, grid=som, num_nodes=som.num_nodes)


def make_counties() -> CountyIndex:
    """Two rectangular counties splitting the synthetic grid at lat 37.

    The synthetic grid spans lats 32..42 and lons -124..-114; rows at
    lats {32, 34, 36} fall in South-XX and {38, 40, 42} in North-XX.
    Rings are (lon, lat) and explicitly closed.
    """

    def rect(lon0, lat0, lon1, lat1):
        return [[np.array([
            (lon0, lat0), (lon1, lat0), (lon1, lat1), (lon0, lat1), (lon0, lat0)
        ], dtype=float)]]

    return CountyIndex(counties={
        "North-XX": rect(-125.0, 37.0, -113.0, 43.0),
        "South-XX": rect(-125.0, 31.0, -113.0, 37.0),
    })


@pytest.fixture(scope="session")
def counties():
    return make_counties()


@pytest.fixture()
def project(dataset, som, embedding, counties):
    p = Project()
    p.dataset = dataset
    p.som = som
    p.embedding = embedding
    p.counties = counties
    return p


@pytest.fixture()
def client(project):
    from fastapi.testclient import TestClient

    from ensomap.service import create_app

    return TestClient(create_app(project, llm_stub=True))
