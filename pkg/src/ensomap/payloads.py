"""Analysis payload builders shared by the HTTP service and the CLI so
both produce byte-identical JSON for identical requests."""

from __future__ import annotations

import json

import numpy as np

from . import cluster as cl
from . import compare as cp
from . import distribution as ds
from .project import Project, ProjectError


def dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _require(project: Project):
    if project.dataset is None:
        raise ProjectError("no dataset loaded")
    if project.som is None:
        raise ProjectError("no trained SOM")
    if project.embedding is None:
        raise ProjectError("no embedding")


def _months_set(months: list[int] | None) -> set[int] | None:
    return set(months) if months else None


def _kde_payload(k: ds.KdeResult) -> dict:
    return {
        "bandwidth": [k.bandwidth[0], k.bandwidth[1]],
        "x": [float(v) for v in k.x_edges],
        "y": [float(v) for v in k.y_edges],
        "density": [[float(v) for v in row] for row in k.density],
        "contours": {
            str(q): [[[float(x), float(y)] for x, y in poly] for poly in polys]
            for q, polys in k.contours.items()
        },
        "thresholds": {str(q): float(t) for q, t in k.thresholds.items()},
    }


def distribution_payload(
    project: Project, members: list[str], months: list[int] | None, grid_res: int = 128
) -> dict:
    _require(project)
    dist = ds.project_runs(
        project.dataset, members, _months_set(months), project.som, project.embedding
    )
    kde = ds.kde(dist, grid_res=grid_res)
    breakdown = ds.annotation_breakdown(dist, project.annotations)
    return {
        "members": dist.members,
        "months": dist.months,
        "points": [[float(x), float(y)] for x, y in dist.points],
        "provenance": [
            {"member": int(m), "year": int(y), "month": int(mo)}
            for m, y, mo in zip(dist.member_index, dist.year, dist.month)
        ],
        "kde": _kde_payload(kde),
        "breakdown": {
            "fractions": {k: float(v) for k, v in breakdown.fractions.items()},
            "unannotated": float(breakdown.unannotated),
        },
    }


def side_by_side_payload(
    project: Project,
    members_a: list[str],
    members_b: list[str],
    months: list[int] | None,
    grid_res: int = 128,
) -> dict:
    _require(project)
    ra = ds.project_runs(project.dataset, members_a, _months_set(months), project.som, project.embedding)
    rb = ds.project_runs(project.dataset, members_b, _months_set(months), project.som, project.embedding)
    ka, kb = cp.side_by_side(ra, rb, grid_res=grid_res)
    return {"a": _kde_payload(ka), "b": _kde_payload(kb)}


def _field_payload(f: cp.VectorField) -> dict:
    return {
        "origin": [f.origin[0], f.origin[1]],
        "extent": [f.extent[0], f.extent[1]],
        "n": f.n,
        "vectors": [[[float(v[0]), float(v[1])] for v in row] for row in f.vectors],
        "support": [[bool(v) for v in row] for row in f.support_mask],
    }


def vector_field_payload(
    project: Project,
    members_a: list[str],
    members_b: list[str],
    months: list[int] | None,
    k: int = 20,
    n: int = 16,
    seed: int = 0,
) -> dict:
    _require(project)
    ra = ds.project_runs(project.dataset, members_a, _months_set(months), project.som, project.embedding)
    rb = ds.project_runs(project.dataset, members_b, _months_set(months), project.som, project.embedding)
    field = cp.bootstrap_vector_field(ra, rb, k=k, n=n, seed=seed)
    return _field_payload(field)


def transitions_payload(
    project: Project,
    members_a: list[str],
    members_b: list[str],
    months: list[int] | None,
    k: int = 20,
    seed: int = 0,
) -> dict:
    _require(project)
    ra = ds.project_runs(project.dataset, members_a, _months_set(months), project.som, project.embedding)
    rb = ds.project_runs(project.dataset, members_b, _months_set(months), project.som, project.embedding)
    tm = cp.transition_matrix(ra, rb, project.annotations, k=k, seed=seed)
    return {
        "regions": tm.regions,
        "flows": [[float(v) for v in row] for row in tm.flows],
    }


def _timeline_payload(tl: cl.MonthlyClusterTimeline) -> dict:
    return {
        "months": tl.months,
        "entities": tl.entity_labels,
        "clusters": {
            str(month): [
                {
                    "id": mc.cluster_id,
                    "position": float(mc.position),
                    "mean_anomaly": float(mc.mean_anomaly),
                    "entities": [int(e) for e in mc.entities],
                    "noise_singleton": bool(mc.is_noise_singleton),
                }
                for mc in mcs
            ]
            for month, mcs in tl.clusters.items()
        },
        "lines": {
            label: [[int(m), int(c)] for m, c in seq] for label, seq in tl.lines.items()
        },
    }


def timeline_runs_payload(
    project: Project,
    members: list[str] | None,
    months: list[int],
    min_cluster_size: int = 3,
    min_samples: int = 2,
) -> dict:
    _require(project)
    dataset = project.dataset
    if members:
        entities = [dataset.member_index(*m.split("_")[:2]) for m in members]
    else:
        entities = list(range(len(dataset.members)))
    tl = cl.monthly_timeline(
        dataset, entities, months, project.som, project.embedding,
        min_cluster_size=min_cluster_size, min_samples=min_samples,
    )
    return _timeline_payload(tl)


def timeline_forcings_payload(
    project: Project,
    gcms: list[str] | None,
    ssp: str,
    months: list[int],
    k: int = 20,
    n: int = 16,
    seed: int = 0,
    min_cluster_size: int = 3,
    min_samples: int = 2,
) -> dict:
    _require(project)
    dataset = project.dataset
    if not gcms:
        gcms = sorted(
            {m.gcm for m in dataset.members if m.ssp == ssp}
            & {m.gcm for m in dataset.members if m.ssp == "historical"}
        )
    tl = cl.forcing_timeline(
        dataset, gcms, ssp, months, project.som, project.embedding,
        k=k, n=n, seed=seed, min_cluster_size=min_cluster_size, min_samples=min_samples,
    )
    return _timeline_payload(tl)


def som_nodes_payload(project: Project) -> dict:
    if project.som is None:
        raise ProjectError("no trained SOM")
    grid = project.som
    payload: dict = {
        "rows": grid.config.rows,
        "cols": grid.config.cols,
        "num_cells": grid.weights.shape[1],
        "node_means": [float(v) for v in grid.weights.mean(axis=1)],
    }
    if project.embedding is not None:
        payload["positions"] = [[float(x), float(y)] for x, y in project.embedding.positions]
        payload["anchors"] = {
            str(k): [float(v[0]), float(v[1])]
            for k, v in sorted(project.embedding.anchors.items())
        }
    return payload


def node_payload(project: Project, node: int) -> dict:
    if project.som is None:
        raise ProjectError("no trained SOM")
    grid = project.som
    if not 0 <= node < grid.num_nodes:
        raise KeyError(f"node {node} out of range")
    dataset = project.dataset
    payload: dict = {
        "node": node,
        "pattern": [float(v) for v in grid.weights[node]],
    }
    if dataset is not None:
        g = dataset.grid
        rr, cc = np.nonzero(g.valid_mask)
        payload["geometry"] = {
            "rows": g.rows,
            "cols": g.cols,
            "cell_rows": [int(r) for r in rr],
            "cell_cols": [int(c) for c in cc],
            "lats": [float(v) for v in g.lats],
            "lons": [float(v) for v in g.lons],
        }
    return payload
