"""Batch entry points: train a SOM, sweep the kR/kS parameter grid,
dump analysis payloads headlessly, and serve the HTTP API."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import payloads
from .data import flatten_samples, load_ensemble
from .project import Project, load_project, save_project
from .service import create_app, parse_months
from .som import SomConfig, metrics as som_metrics, save_checkpoint, train_som

SWEEP_HEADER = "kR,kS,explained_variance,mean_smoothness,quantization_error,topographic_error"


@click.group()
def main():
    """Ensemble analysis over a steerable SOM node space."""


def _validate_ks(ctx, param, value):
    if not 0 < value <= 1:
        raise click.BadParameter("kS must be in (0, 1]")
    return value


def _validate_kr(ctx, param, value):
    if value <= 0:
        raise click.BadParameter("kR must be positive")
    return value


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--rows", default=30, show_default=True)
@click.option("--cols", default=30, show_default=True)
@click.option("--kR", "kr", default=0.03, show_default=True, callback=_validate_kr)
@click.option("--kS", "ks", default=0.2, show_default=True, callback=_validate_ks)
@click.option("--iters", default=0, show_default=True, help="0 = 20 passes over the data")
@click.option("--seed", default=0, show_default=True)
@click.option("--months", default=None, help="month filter, e.g. '10-5' or '1,2,3'")
@click.option("--out", default="som.ckpt", show_default=True, type=click.Path())
def train(dataset_dir, rows, cols, kr, ks, iters, seed, months, out):
    """Train a SOM and write a checkpoint plus a metrics JSON."""
    dataset = load_ensemble(dataset_dir)
    month_set = set(parse_months(months)) if months else None
    samples = flatten_samples(dataset, month_set)
    config = SomConfig(rows=rows, cols=cols, kR=kr, kS=ks, iterations=iters, seed=seed)
    grid = train_som(samples, config)
    save_checkpoint(grid, out)
    m = som_metrics(grid, samples)
    metrics_path = Path(out).with_suffix(".metrics.json")
    metrics_path.write_text(
        json.dumps(
            {
                "explained_variance": m.explained_variance,
                "mean_smoothness": m.mean_smoothness,
                "quantization_error": m.quantization_error,
                "topographic_error": m.topographic_error,
            },
            sort_keys=True, indent=1,
        )
    )
    click.echo(f"wrote {out} (EV={m.explained_variance:.4f})")


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--kR-list", "kr_list", required=True, help="comma-separated kR values")
@click.option("--kS-list", "ks_list", required=True, help="comma-separated kS values")
@click.option("--rows", default=10, show_default=True)
@click.option("--cols", default=10, show_default=True)
@click.option("--iters", default=0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--months", default=None)
@click.option("--out", default="sweep.csv", show_default=True, type=click.Path())
def sweep(dataset_dir, kr_list, ks_list, rows, cols, iters, seed, months, out):
    """Train over the Cartesian product of kR and kS lists; CSV sorted by
    (kR, kS)."""
    krs = sorted(float(x) for x in kr_list.split(",") if x.strip())
    kss = sorted(float(x) for x in ks_list.split(",") if x.strip())
    if not krs or not kss:
        raise click.BadParameter("empty kR/kS list")
    dataset = load_ensemble(dataset_dir)
    month_set = set(parse_months(months)) if months else None
    samples = flatten_samples(dataset, month_set)
    rows_out = []
    for kr in krs:
        for ks in kss:
            config = SomConfig(rows=rows, cols=cols, kR=kr, kS=ks, iterations=iters, seed=seed)
            grid = train_som(samples, config)
            m = som_metrics(grid, samples)
            rows_out.append(
                (kr, ks, m.explained_variance, m.mean_smoothness,
                 m.quantization_error, m.topographic_error)
            )
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_HEADER.split(","))
        for row in rows_out:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    click.echo(f"wrote {out} ({len(rows_out)} rows)")


@main.group()
def analyze():
    """Headless analysis dumps identical to the service payloads."""


def _load(project_path: str) -> Project:
    return load_project(project_path)


def _echo_payload(payload: dict, out: str | None):
    body = payloads.dumps(payload)
    if out:
        Path(out).write_text(body)
    else:
        click.echo(body)


@analyze.command()
@click.option("--project", "project_path", required=True, type=click.Path(exists=True))
@click.option("--members", required=True, help="comma-separated member keys")
@click.option("--months", default=None)
@click.option("--grid-res", default=128, show_default=True)
@click.option("--out", default=None, type=click.Path())
def distribution(project_path, members, months, grid_res, out):
    project = _load(project_path)
    month_list = parse_months(months) if months else None
    payload = payloads.distribution_payload(project, members.split(","), month_list, grid_res)
    _echo_payload(payload, out)


@analyze.command("vector-field")
@click.option("--project", "project_path", required=True, type=click.Path(exists=True))
@click.option("--members-a", required=True)
@click.option("--members-b", required=True)
@click.option("--months", default=None)
@click.option("-k", default=20, show_default=True)
@click.option("-n", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, type=click.Path())
def vector_field(project_path, members_a, members_b, months, k, n, seed, out):
    project = _load(project_path)
    month_list = parse_months(months) if months else None
    payload = payloads.vector_field_payload(
        project, members_a.split(","), members_b.split(","), month_list, k=k, n=n, seed=seed
    )
    _echo_payload(payload, out)


@analyze.command("timeline")
@click.option("--project", "project_path", required=True, type=click.Path(exists=True))
@click.option("--kind", type=click.Choice(["runs", "forcings"]), default="runs", show_default=True)
@click.option("--months", required=True)
@click.option("--members", default=None)
@click.option("--gcms", default=None)
@click.option("--ssp", default=None)
@click.option("--min-cluster-size", default=3, show_default=True)
@click.option("--min-samples", default=2, show_default=True)
@click.option("-k", default=20, show_default=True)
@click.option("-n", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, type=click.Path())
def timeline(project_path, kind, months, members, gcms, ssp, min_cluster_size, min_samples, k, n, seed, out):
    project = _load(project_path)
    month_list = parse_months(months)
    if kind == "runs":
        payload = payloads.timeline_runs_payload(
            project, members.split(",") if members else None, month_list,
            min_cluster_size, min_samples,
        )
    else:
        if not ssp:
            raise click.BadParameter("--ssp required for forcings timeline")
        payload = payloads.timeline_forcings_payload(
            project, gcms.split(",") if gcms else None, ssp, month_list,
            k=k, n=n, seed=seed,
            min_cluster_size=min_cluster_size, min_samples=min_samples,
        )
    _echo_payload(payload, out)


@main.command()
@click.option("--project", "project_path", default=None, type=click.Path(exists=True))
@click.option("--dataset", "dataset_dir", default=None, type=click.Path(exists=True, file_okay=False))
@click.option("--port", default=8000, show_default=True, envvar="PORT")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--llm-stub/--llm-live", default=True, show_default=True)
def serve(project_path, dataset_dir, port, host, llm_stub):
    """Run the HTTP API."""
    import uvicorn

    if project_path:
        project = load_project(project_path)
    else:
        project = Project()
    if dataset_dir:
        project.dataset = load_ensemble(dataset_dir)
        project.dataset_path = str(dataset_dir)
    app = create_app(project, llm_stub=llm_stub)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
