"""Mutable project state shared by the HTTP service and the CLI: dataset,
trained SOM, embedding, annotations, counties, analysis cache, and the
training job registry. Persistence is a single JSON document plus an
adjacent SOM checkpoint binary.
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotate import Annotation
from .data import CountyIndex, EnsembleDataset, load_ensemble
from .embed import Embedding, MdeConfig, build_node_graph, mde_project
from .som import SomConfig, SomGrid, load_checkpoint, save_checkpoint

PROJECT_VERSION = 1


class ProjectError(ValueError):
    pass


@dataclass
class JobStatus:
    id: str
    state: str = "pending"  # pending -> running -> done | failed | cancelled
    progress: float = 0.0
    message: str = ""


@dataclass
class Project:
    dataset: EnsembleDataset | None = None
    dataset_path: str | None = None
    som: SomGrid | None = None
    embedding: Embedding | None = None
    annotations: list[Annotation] = field(default_factory=list)
    counties: CountyIndex | None = None
    embedding_version: int = 0
    annotation_version: int = 0
    _cache: dict[str, object] = field(default_factory=dict)
    _lock: threading.RLock = field(default_factory=threading.RLock)
    jobs: dict[str, JobStatus] = field(default_factory=dict)
    _active_job: str | None = None
    _cancel_flags: dict[str, bool] = field(default_factory=dict)

    # --- embedding lifecycle -------------------------------------------------

    def init_embedding(self) -> Embedding:
        if self.som is None:
            raise ProjectError("no trained SOM")
        edges, targets = build_node_graph(self.som)
        emb = mde_project(edges, targets, grid=self.som, num_nodes=self.som.num_nodes)
        with self._lock:
            self.embedding = emb
            self.embedding_version += 1
            self._cache.clear()
        return emb

    def set_embedding(self, emb: Embedding) -> None:
        with self._lock:
            self.embedding = emb
            self.embedding_version += 1
            self._cache.clear()

    # --- annotations ---------------------------------------------------------

    def add_annotation(self, label: str, vertices, ann_id: str | None = None) -> Annotation:
        with self._lock:
            order = max((a.created_order for a in self.annotations), default=-1) + 1
            ann = Annotation(
                id=ann_id or uuid.uuid4().hex[:8],
                label=label,
                vertices=np.asarray(vertices, dtype=float),
                created_order=order,
            )
            self.annotations.append(ann)
            self.annotation_version += 1
            self._cache.clear()
        return ann

    def remove_annotation(self, ann_id: str) -> bool:
        with self._lock:
            before = len(self.annotations)
            self.annotations = [a for a in self.annotations if a.id != ann_id]
            changed = len(self.annotations) != before
            if changed:
                self.annotation_version += 1
                self._cache.clear()
        return changed

    def get_annotation(self, ann_id: str) -> Annotation | None:
        return next((a for a in self.annotations if a.id == ann_id), None)

    # --- analysis cache ------------------------------------------------------

    def cache_key(self, kind: str, payload: dict) -> str:
        blob = json.dumps(
            {
                "kind": kind,
                "payload": payload,
                "embedding_version": self.embedding_version,
                "annotation_version": self.annotation_version,
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()

    def cached(self, key: str):
        return self._cache.get(key)

    def store(self, key: str, value) -> None:
        with self._lock:
            self._cache[key] = value

    # --- training jobs -------------------------------------------------------

    def start_job(self) -> JobStatus:
        with self._lock:
            if self._active_job is not None and self.jobs[self._active_job].state in ("pending", "running"):
                raise ProjectError("training already running")
            job = JobStatus(id=uuid.uuid4().hex[:12])
            self.jobs[job.id] = job
            self._active_job = job.id
            self._cancel_flags[job.id] = False
        return job

    def cancel_job(self, job_id: str) -> None:
        with self._lock:
            if job_id in self._cancel_flags:
                self._cancel_flags[job_id] = True

    def job_cancelled(self, job_id: str) -> bool:
        return self._cancel_flags.get(job_id, False)

    def finish_job(self, job_id: str, state: str, message: str = "") -> None:
        with self._lock:
            job = self.jobs[job_id]
            job.state = state
            job.message = message
            if state == "done":
                job.progress = 1.0
            if self._active_job == job_id:
                self._active_job = None


def save_project(project: Project, path: str | Path) -> None:
    """Project JSON + adjacent '<path>.som' checkpoint; the analysis cache
    is not persisted."""
    path = Path(path)
    doc: dict = {
        "version": PROJECT_VERSION,
        "dataset_path": project.dataset_path,
        "annotations": [
            {
                "id": a.id,
                "label": a.label,
                "vertices": [[float(x), float(y)] for x, y in a.vertices],
                "created_order": a.created_order,
            }
            for a in sorted(project.annotations, key=lambda a: a.created_order)
        ],
    }
    if project.som is not None:
        som_file = path.name + ".som"
        save_checkpoint(project.som, path.parent / som_file)
        doc["som_checkpoint"] = som_file
    if project.embedding is not None:
        e = project.embedding
        doc["embedding"] = {
            "positions": [[float(x), float(y)] for x, y in e.positions],
            "anchors": {str(k): [float(v[0]), float(v[1])] for k, v in sorted(e.anchors.items())},
            "edges": [[int(a), int(b)] for a, b in e.edges],
            "targets": [float(t) for t in e.targets],
            "config": {
                "step_size": e.config.step_size,
                "max_iterations": e.config.max_iterations,
                "tolerance": e.config.tolerance,
            },
        }
    path.write_text(json.dumps(doc, sort_keys=True, indent=1))


def load_project(path: str | Path, load_dataset: bool = True) -> Project:
    path = Path(path)
    if not path.exists():
        raise ProjectError(f"project file not found: {path}")
    doc = json.loads(path.read_text())
    if doc.get("version") != PROJECT_VERSION:
        raise ProjectError(f"unknown project version: {doc.get('version')!r}")
    project = Project()
    project.dataset_path = doc.get("dataset_path")
    if load_dataset and project.dataset_path:
        project.dataset = load_ensemble(project.dataset_path)
    if "som_checkpoint" in doc:
        project.som = load_checkpoint(path.parent / doc["som_checkpoint"])
    if "embedding" in doc:
        e = doc["embedding"]
        project.embedding = Embedding(
            positions=np.array(e["positions"], dtype=float),
            anchors={int(k): (v[0], v[1]) for k, v in e["anchors"].items()},
            edges=np.array(e["edges"], dtype=int).reshape(-1, 2),
            targets=np.array(e["targets"], dtype=float),
            config=MdeConfig(**e["config"]),
        )
    for a in doc.get("annotations", []):
        project.annotations.append(
            Annotation(
                id=a["id"], label=a["label"],
                vertices=np.array(a["vertices"], dtype=float),
                created_order=a["created_order"],
            )
        )
    return project
