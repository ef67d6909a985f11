"""HTTP API exposing the full workflow. Project state is single-writer /
multi-reader; SOM training runs on a background thread and is polled via
the jobs endpoints. Errors use the envelope {"code": ..., "message": ...}.
"""

from __future__ import annotations

import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from . import payloads
from .annotate import (
    AnnotateError,
    apply_filter,
    bucket_nodes,
    parse_forward_query,
    summarize_region,
)
from .data import DataError
from .embed import EmbedError, set_anchors
from .llm import LlmError, default_client
from .project import Project, ProjectError, load_project, save_project
from .som import SomConfig, metrics as som_metrics, train_som
from .data import flatten_samples


class TrainRequest(BaseModel):
    rows: int = 30
    cols: int = 30
    kR: float = 0.03
    kS: float = 0.2
    iterations: int = 0
    lr_initial: float = 0.5
    lr_final: float = 0.01
    seed: int = 0
    months: list[int] | None = None


class AnchorsRequest(BaseModel):
    anchors: dict[int, tuple[float, float]]


class AnnotationRequest(BaseModel):
    label: str
    vertices: list[tuple[float, float]]
    id: str | None = None


class ForwardRequest(BaseModel):
    query: str


class BackwardRequest(BaseModel):
    vertices: list[tuple[float, float]]
    cutoffs: tuple[float, float, float, float] | None = None
    samples: int = 9


class SelectionRequest(BaseModel):
    members: list[str]
    months: list[int] | None = None
    grid_res: int = 128


class ComparisonRequest(BaseModel):
    members_a: list[str]
    members_b: list[str]
    months: list[int] | None = None
    grid_res: int = 128
    k: int = 20
    n: int = 16
    seed: int = 0


class ProjectPathRequest(BaseModel):
    path: str


def create_app(project: Project, llm_stub: bool = True) -> FastAPI:
    app = FastAPI(title="ensomap")
    llm = default_client(stub=llm_stub)

    def error(code: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=code, content={"code": code, "message": message})

    @app.exception_handler(ProjectError)
    async def _project_err(request: Request, exc: ProjectError):
        msg = str(exc)
        if "already running" in msg:
            return error(409, msg)
        return error(422, msg)

    @app.exception_handler(AnnotateError)
    async def _annotate_err(request: Request, exc: AnnotateError):
        return error(422, str(exc))

    @app.exception_handler(DataError)
    async def _data_err(request: Request, exc: DataError):
        return error(422, str(exc))

    @app.exception_handler(EmbedError)
    async def _embed_err(request: Request, exc: EmbedError):
        return error(422, str(exc))

    @app.exception_handler(LlmError)
    async def _llm_err(request: Request, exc: LlmError):
        return error(503, str(exc))

    @app.exception_handler(KeyError)
    async def _key_err(request: Request, exc: KeyError):
        return error(404, f"not found: {exc}")

    @app.exception_handler(ValueError)
    async def _value_err(request: Request, exc: ValueError):
        return error(422, str(exc))

    def cached_json(kind: str, params: dict, build) -> Response:
        key = project.cache_key(kind, params)
        body = project.cached(key)
        if body is None:
            body = payloads.dumps(build())
            project.store(key, body)
        return Response(content=body, media_type="application/json")

    # --- SOM -----------------------------------------------------------------

    @app.post("/som/train")
    def som_train(req: TrainRequest):
        if project.dataset is None:
            raise ProjectError("no dataset loaded")
        job = project.start_job()
        config = SomConfig(
            rows=req.rows, cols=req.cols, kR=req.kR, kS=req.kS,
            iterations=req.iterations, lr_initial=req.lr_initial,
            lr_final=req.lr_final, seed=req.seed,
        )
        months = set(req.months) if req.months else None

        def run():
            job.state = "running"
            try:
                samples = flatten_samples(project.dataset, months)
                total = config.iterations or 20 * len(samples.X)

                def progress(t, sigma, qe):
                    job.progress = (t + 1) / total
                    if project.job_cancelled(job.id):
                        raise _Cancelled()

                grid = train_som(samples, config, progress=progress)
                if project.job_cancelled(job.id):
                    project.finish_job(job.id, "cancelled")
                    return
                project.som = grid
                project.init_embedding()
                project.finish_job(job.id, "done")
            except _Cancelled:
                project.finish_job(job.id, "cancelled")
            except Exception as exc:  # previous SOM stays intact on failure
                project.finish_job(job.id, "failed", str(exc))

        threading.Thread(target=run, daemon=True).start()
        return {"job_id": job.id}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = project.jobs[job_id]
        return {"id": job.id, "state": job.state, "progress": job.progress, "message": job.message}

    @app.post("/jobs/{job_id}/cancel")
    def job_cancel(job_id: str):
        project.jobs[job_id]
        project.cancel_job(job_id)
        return {"ok": True}

    @app.get("/som/nodes")
    def som_nodes():
        return payloads.som_nodes_payload(project)

    @app.get("/som/metrics")
    def som_metrics_ep():
        if project.som is None or project.dataset is None:
            raise ProjectError("no trained SOM")
        m = som_metrics(project.som, flatten_samples(project.dataset))
        return {
            "quantization_error": m.quantization_error,
            "topographic_error": m.topographic_error,
            "explained_variance": m.explained_variance,
            "mean_smoothness": m.mean_smoothness,
        }

    @app.get("/som/node/{node}")
    def som_node(node: int):
        return payloads.node_payload(project, node)

    # --- embedding -----------------------------------------------------------

    @app.get("/embedding/anchors")
    def get_anchors():
        if project.embedding is None:
            raise ProjectError("no embedding")
        e = project.embedding
        return {
            "anchors": {str(k): list(v) for k, v in sorted(e.anchors.items())},
            "positions": [[float(x), float(y)] for x, y in e.positions],
        }

    @app.put("/embedding/anchors")
    def put_anchors(req: AnchorsRequest):
        if project.embedding is None:
            raise ProjectError("no embedding")
        emb = set_anchors(project.embedding, {int(k): v for k, v in req.anchors.items()})
        project.set_embedding(emb)
        return {
            "anchors": {str(k): list(v) for k, v in sorted(emb.anchors.items())},
            "positions": [[float(x), float(y)] for x, y in emb.positions],
            "status": emb.status,
        }

    # --- annotations ---------------------------------------------------------

    @app.get("/annotations")
    def list_annotations():
        return [
            {
                "id": a.id, "label": a.label,
                "vertices": [[float(x), float(y)] for x, y in a.vertices],
                "created_order": a.created_order,
            }
            for a in sorted(project.annotations, key=lambda a: a.created_order)
        ]

    @app.post("/annotations")
    def create_annotation(req: AnnotationRequest):
        ann = project.add_annotation(req.label, req.vertices, ann_id=req.id)
        return {"id": ann.id, "created_order": ann.created_order}

    @app.put("/annotations/{ann_id}")
    def update_annotation(ann_id: str, req: AnnotationRequest):
        existing = project.get_annotation(ann_id)
        if existing is None:
            raise KeyError(ann_id)
        order = existing.created_order
        project.remove_annotation(ann_id)
        ann = project.add_annotation(req.label, req.vertices, ann_id=ann_id)
        ann.created_order = order
        return {"id": ann.id, "created_order": ann.created_order}

    @app.delete("/annotations/{ann_id}")
    def delete_annotation(ann_id: str):
        if not project.remove_annotation(ann_id):
            raise KeyError(ann_id)
        return {"ok": True}

    # --- LLM pipelines -------------------------------------------------------

    @app.post("/llm/forward")
    def llm_forward(req: ForwardRequest):
        if project.counties is None:
            raise ProjectError("no county index loaded")
        if project.som is None or project.embedding is None or project.dataset is None:
            raise ProjectError("no trained SOM")
        filt = parse_forward_query(req.query, project.counties, llm)
        nodes, hull = apply_filter(filt, project.som, project.dataset.grid, project.embedding)
        return {
            "kind": filt.kind,
            "nodes": nodes,
            "boundary": [[float(x), float(y)] for x, y in hull] if hull is not None else None,
        }

    @app.post("/llm/backward")
    def llm_backward(req: BackwardRequest):
        if project.counties is None:
            raise ProjectError("no county index loaded")
        if project.som is None or project.embedding is None or project.dataset is None:
            raise ProjectError("no trained SOM")
        kwargs = {}
        if req.cutoffs is not None:
            kwargs["cutoffs"] = req.cutoffs
        buckets = bucket_nodes(
            np.array(req.vertices, dtype=float),
            project.som, project.dataset.grid, project.embedding,
            project.counties, samples=req.samples, **kwargs,
        )
        summary = summarize_region(buckets, llm)
        return {
            "summary": summary,
            "nodes": [b.node for b in buckets],
            "buckets": [{"node": b.node, **{k: v for k, v in b.buckets.items()}} for b in buckets],
        }

    # --- analysis ------------------------------------------------------------

    @app.post("/analysis/distribution")
    def analysis_distribution(req: SelectionRequest):
        params = req.model_dump()
        return cached_json(
            "distribution", params,
            lambda: payloads.distribution_payload(project, req.members, req.months, req.grid_res),
        )

    @app.post("/analysis/side-by-side")
    def analysis_side_by_side(req: ComparisonRequest):
        params = req.model_dump()
        return cached_json(
            "side-by-side", params,
            lambda: payloads.side_by_side_payload(
                project, req.members_a, req.members_b, req.months, req.grid_res
            ),
        )

    @app.post("/analysis/vector-field")
    def analysis_vector_field(req: ComparisonRequest):
        params = req.model_dump()
        return cached_json(
            "vector-field", params,
            lambda: payloads.vector_field_payload(
                project, req.members_a, req.members_b, req.months,
                k=req.k, n=req.n, seed=req.seed,
            ),
        )

    @app.post("/analysis/transitions")
    def analysis_transitions(req: ComparisonRequest):
        params = req.model_dump()
        return cached_json(
            "transitions", params,
            lambda: payloads.transitions_payload(
                project, req.members_a, req.members_b, req.months, k=req.k, seed=req.seed
            ),
        )

    @app.get("/analysis/timeline/runs")
    def analysis_timeline_runs(
        months: str, members: str | None = None,
        min_cluster_size: int = 3, min_samples: int = 2,
    ):
        month_list = parse_months(months)
        member_list = members.split(",") if members else None
        params = {
            "months": month_list, "members": member_list,
            "min_cluster_size": min_cluster_size, "min_samples": min_samples,
        }
        return cached_json(
            "timeline-runs", params,
            lambda: payloads.timeline_runs_payload(
                project, member_list, month_list, min_cluster_size, min_samples
            ),
        )

    @app.get("/analysis/timeline/forcings")
    def analysis_timeline_forcings(
        months: str, ssp: str, gcms: str | None = None,
        k: int = 20, n: int = 16, seed: int = 0,
        min_cluster_size: int = 3, min_samples: int = 2,
    ):
        month_list = parse_months(months)
        gcm_list = gcms.split(",") if gcms else None
        params = {
            "months": month_list, "ssp": ssp, "gcms": gcm_list,
            "k": k, "n": n, "seed": seed,
            "min_cluster_size": min_cluster_size, "min_samples": min_samples,
        }
        return cached_json(
            "timeline-forcings", params,
            lambda: payloads.timeline_forcings_payload(
                project, gcm_list, ssp, month_list,
                k=k, n=n, seed=seed,
                min_cluster_size=min_cluster_size, min_samples=min_samples,
            ),
        )

    # --- project persistence -------------------------------------------------

    @app.put("/project")
    def project_save(req: ProjectPathRequest):
        save_project(project, req.path)
        return {"ok": True}

    @app.get("/project")
    def project_info():
        return {
            "dataset": project.dataset_path,
            "members": [m.key for m in project.dataset.members] if project.dataset else [],
            "has_som": project.som is not None,
            "has_embedding": project.embedding is not None,
            "annotations": len(project.annotations),
            "embedding_version": project.embedding_version,
            "annotation_version": project.annotation_version,
        }

    return app


class _Cancelled(Exception):
    pass


def parse_months(spec: str) -> list[int]:
    """Parse '10-5' (wrapping across the year boundary), '1,2,3', or '4'."""
    months: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if "-" in part:
            a, b = (int(x) for x in part.split("-", 1))
            if not (1 <= a <= 12 and 1 <= b <= 12):
                raise ValueError(f"invalid month range {part!r}")
            m = a
            while True:
                months.append(m)
                if m == b:
                    break
                m = m % 12 + 1
        else:
            m = int(part)
            if not 1 <= m <= 12:
                raise ValueError(f"invalid month {part!r}")
            months.append(m)
    return months
