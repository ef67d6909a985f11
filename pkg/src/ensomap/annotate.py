"""Annotations over the adjusted node space plus the two LLM pipelines:
forward (natural-language query -> node region) and backward (node-space
region -> textual summary).

The forward direction never asks the model for SQL or raw boundaries: the
model only resolves region names to county keys and emits a constrained
structured filter; all spatial evaluation happens in-engine.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .data import CountyIndex, SpatialGrid, region_mean
from .embed import Embedding
from .llm import LlmError, render_prompt
from .som import SomGrid


class AnnotateError(ValueError):
    pass


DEFAULT_CUTOFFS = (-1.5, -0.5, 0.5, 1.5)
BUCKET_NAMES = ("low", "mod_low", "neutral", "mod_high", "high")


@dataclass
class Annotation:
    id: str
    label: str
    vertices: np.ndarray  # (n, 2) in embedding coordinates, no closing repeat
    created_order: int

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if len(v) >= 2 and np.allclose(v[0], v[-1]):
            v = v[:-1]
        if len(np.unique(v, axis=0)) < 3:
            raise AnnotateError("annotation polygon needs >= 3 distinct vertices")
        if geometry.polygon_self_intersects(v):
            raise AnnotateError("annotation polygon is self-intersecting")
        self.vertices = v


@dataclass
class StructuredFilter:
    kind: str  # threshold_above | threshold_below | between | region_vs_region
    region_a: list  # polygon list (region geometry)
    region_b: list | None = None
    x: float | None = None
    y: float | None = None
    op: str = "higher"  # for region_vs_region
    region_a_name: str = ""
    region_b_name: str = ""

    def __post_init__(self):
        kinds = {"threshold_above", "threshold_below", "between", "region_vs_region"}
        if self.kind not in kinds:
            raise AnnotateError(f"unknown filter kind {self.kind!r}")
        if self.kind == "between" and not (self.x is not None and self.y is not None and self.x < self.y):
            raise AnnotateError("between filter requires x < y")
        if self.kind == "region_vs_region" and self.region_b is None:
            raise AnnotateError("region_vs_region requires region_b")
        if self.kind in ("threshold_above", "threshold_below") and self.x is None:
            raise AnnotateError("threshold filter requires x")


@dataclass
class NodeSummaryBuckets:
    node: int
    buckets: dict[str, list[str]]  # bucket name -> county keys
    cutoffs: tuple[float, float, float, float] = DEFAULT_CUTOFFS


@dataclass
class RegionResolution:
    counties: list[str]
    dropped: list[str] = field(default_factory=list)


def resolve_region(name: str, index: CountyIndex, client) -> RegionResolution:
    """Map a free-text region name to county keys via the LLM; keys absent
    from the index are dropped with a warning list."""
    raw = client.complete(render_prompt("region_to_counties", region=name))
    keys = _parse_county_list(raw)
    known = [k for k in keys if k in index.counties]
    dropped = [k for k in keys if k not in index.counties]
    if not known:
        raise AnnotateError(f"zero resolvable counties for region {name!r}")
    return RegionResolution(counties=known, dropped=dropped)


def _parse_county_list(raw: str) -> list[str]:
    raw = raw.strip()
    try:
        data = json.loads(raw)
        if isinstance(data, list):
            return [str(x).strip() for x in data]
    except json.JSONDecodeError:
        pass
    return [s.strip() for s in re.split(r"[,\n]", raw) if s.strip()]


def parse_forward_query(text: str, index: CountyIndex, client) -> StructuredFilter:
    """Turn a user query into a structured filter; malformed model output
    gets one retry before erroring."""
    prompt = render_prompt("structured_filter", question=text)
    last_err: Exception | None = None
    for _attempt in range(2):
        raw = client.complete(prompt)
        try:
            spec = json.loads(raw)
            if not isinstance(spec, dict) or "kind" not in spec:
                raise AnnotateError("filter response missing kind")
            return _build_filter(spec, index, client)
        except (json.JSONDecodeError, AnnotateError, KeyError) as exc:
            last_err = exc
    raise AnnotateError(f"unparseable query after retry: {last_err}")


def _build_filter(spec: dict, index: CountyIndex, client) -> StructuredFilter:
    region_name = spec.get("region", "")
    if not region_name:
        raise AnnotateError("unsupported question shape: no region")
    res_a = resolve_region(region_name, index, client)
    region_a = index.region(res_a.counties)
    kind = spec["kind"]
    if kind == "region_vs_region":
        res_b = resolve_region(spec["region_b"], index, client)
        op = spec.get("op", "higher")
        return StructuredFilter(
            kind=kind, region_a=region_a, region_b=index.region(res_b.counties),
            op=op, region_a_name=region_name, region_b_name=spec["region_b"],
        )
    return StructuredFilter(
        kind=kind, region_a=region_a,
        x=float(spec["x"]) if "x" in spec else None,
        y=float(spec["y"]) if "y" in spec else None,
        region_a_name=region_name,
    )


def apply_filter(
    filt: StructuredFilter,
    grid: SomGrid,
    spatial: SpatialGrid,
    embedding: Embedding,
) -> tuple[list[int], np.ndarray | None]:
    """Nodes whose weight-vector region mean satisfies the predicate, plus
    the convex hull of their embedding positions (None when < 3 nodes)."""
    means_a = np.array([region_mean(w, filt.region_a, spatial) for w in grid.weights])
    if filt.kind == "threshold_above":
        passing = means_a > filt.x
    elif filt.kind == "threshold_below":
        passing = means_a < filt.x
    elif filt.kind == "between":
        passing = (means_a > filt.x) & (means_a < filt.y)
    else:
        means_b = np.array([region_mean(w, filt.region_b, spatial) for w in grid.weights])
        passing = means_a > means_b if filt.op == "higher" else means_a < means_b
    nodes = [int(i) for i in np.flatnonzero(passing)]
    if not nodes:
        return [], None
    hull = geometry.convex_hull(embedding.positions[nodes])
    return nodes, hull


def farthest_point_sample(points: np.ndarray, count: int, start: int = 0) -> list[int]:
    """Deterministic farthest-point subset of row indices, seeded at
    ``start``."""
    n = len(points)
    count = min(count, n)
    chosen = [start]
    mind = np.linalg.norm(points - points[start], axis=1)
    while len(chosen) < count:
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, np.linalg.norm(points - points[nxt], axis=1))
    return chosen


def bucket_nodes(
    region_polygon: np.ndarray,
    grid: SomGrid,
    spatial: SpatialGrid,
    embedding: Embedding,
    counties: CountyIndex,
    cutoffs: tuple[float, float, float, float] = DEFAULT_CUTOFFS,
    samples: int = 9,
) -> list[NodeSummaryBuckets]:
    """Farthest-point sample nodes inside the region and bucket every
    county by its mean value on each sampled node's pattern."""
    if not all(cutoffs[i] < cutoffs[i + 1] for i in range(3)):
        raise AnnotateError("cutoffs must be strictly ascending")
    ring = np.asarray(region_polygon, dtype=float)
    contained = [
        i for i, (x, y) in enumerate(embedding.positions)
        if geometry.point_in_ring(x, y, ring)
    ]
    if not contained:
        raise AnnotateError("polygon contains no nodes")
    pos = embedding.positions[contained]
    sampled = [contained[i] for i in farthest_point_sample(pos, samples, start=0)]

    out = []
    for node in sampled:
        buckets: dict[str, list[str]] = {name: [] for name in BUCKET_NAMES}
        for key in sorted(counties.counties):
            try:
                mean = region_mean(grid.weights[node], counties.counties[key], spatial)
            except Exception:
                continue  # county outside the data grid
            buckets[_bucket_of(mean, cutoffs)].append(key)
        out.append(NodeSummaryBuckets(node=node, buckets=buckets, cutoffs=tuple(cutoffs)))
    return out


def _bucket_of(value: float, cutoffs) -> str:
    c0, c1, c2, c3 = cutoffs
    if value < c0:
        return "low"
    if value < c1:
        return "mod_low"
    if value < c2:
        return "neutral"
    if value < c3:
        return "mod_high"
    return "high"


def summarize_region(buckets: list[NodeSummaryBuckets], client) -> str:
    """Compress each node record to regional phrases (counties-to-regions
    prompt) and aggregate everything into a ~50-word summary."""
    if not buckets:
        raise AnnotateError("empty bucket list")
    records = []
    for b in buckets:
        record = {}
        for cat in BUCKET_NAMES:
            keys = b.buckets.get(cat, [])
            if keys:
                phrase = client.complete(
                    render_prompt("counties_to_regions", list_of_counties=", ".join(keys))
                )
                record[cat] = [phrase.strip()]
            else:
                record[cat] = []
        records.append(record)
    concatenated = "\n".join(json.dumps(r) for r in records)
    return client.complete(
        render_prompt("aggregate_summaries", concatenated_descriptions_dictionary=concatenated)
    ).strip()
