"""Ensemble ingestion, normalization, spatial geometry, and the synthetic
ensemble generator used throughout the test suite.

Storage format: a directory holding ``manifest.json`` plus one raw
little-endian float32 array per member, laid out [time][cell] (C-order).
Values are precipitation (or any scalar) anomalies; after
:func:`normalize_per_month` they are expressed in standard deviations.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import geometry


class DataError(ValueError):
    """Raised for malformed ensemble directories or invalid inputs."""


@dataclass(frozen=True)
class MemberId:
    gcm: str
    ssp: str
    variant: str = "r1i1p1f1"

    @property
    def key(self) -> str:
        return f"{self.gcm}_{self.ssp}_{self.variant}"


@dataclass(frozen=True)
class SpatialGrid:
    """Valid cells of the source raster with lat/lon centers.

    ``cells`` is (num_cells, 2) as (lat, lon); ``valid_mask`` is the
    row-major (rows, cols) boolean mask; flat cell index k corresponds to
    the k-th True entry of the mask in row-major order.
    """

    rows: int
    cols: int
    lats: np.ndarray  # (rows,)
    lons: np.ndarray  # (cols,)
    valid_mask: np.ndarray  # (rows, cols) bool

    def __post_init__(self):
        mask = np.asarray(self.valid_mask, dtype=bool)
        if mask.shape != (self.rows, self.cols):
            raise DataError("valid_mask shape mismatch")
        object.__setattr__(self, "valid_mask", mask)
        object.__setattr__(self, "lats", np.asarray(self.lats, dtype=float))
        object.__setattr__(self, "lons", np.asarray(self.lons, dtype=float))

    @property
    def num_cells(self) -> int:
        return int(self.valid_mask.sum())

    @property
    def cells(self) -> np.ndarray:
        """(num_cells, 2) array of (lat, lon) for valid cells."""
        rr, cc = np.nonzero(self.valid_mask)
        return np.column_stack([self.lats[rr], self.lons[cc]])

    @property
    def cell_lonlat(self) -> np.ndarray:
        """(num_cells, 2) array of (lon, lat) — the point-in-polygon order."""
        c = self.cells
        return c[:, ::-1]


@dataclass
class EnsembleDataset:
    members: list[MemberId]
    grid: SpatialGrid
    start_year: int
    months: list[int]  # calendar months stored per year, ordered
    years: int
    values: np.ndarray  # (num_members, time_len, num_cells) float64
    normalized: bool = False

    @property
    def time_len(self) -> int:
        return self.years * len(self.months)

    def time_coords(self) -> list[tuple[int, int]]:
        """(year, month) per time index, in storage order."""
        return [
            (self.start_year + y, m)
            for y in range(self.years)
            for m in self.months
        ]

    def member_index(self, gcm: str, ssp: str) -> int:
        for i, m in enumerate(self.members):
            if m.gcm == gcm and m.ssp == ssp:
                return i
        raise DataError(f"no member ({gcm}, {ssp})")


@dataclass
class SampleMatrix:
    """Flattened (member, time step) rows over valid cells with provenance."""

    X: np.ndarray  # (num_samples, num_cells)
    member_index: np.ndarray  # (num_samples,) int
    year: np.ndarray  # (num_samples,) int
    month: np.ndarray  # (num_samples,) int


@dataclass(frozen=True)
class CountyIndex:
    """County polygons keyed 'Name-State'; each value is a list of polygons,
    each polygon a list of rings (exterior first)."""

    counties: dict[str, list[list[np.ndarray]]]

    def __len__(self) -> int:
        return len(self.counties)

    def region(self, keys: list[str]) -> list[list[np.ndarray]]:
        """Union region (polygon list) for a set of county keys."""
        polys: list[list[np.ndarray]] = []
        for k in keys:
            polys.extend(self.counties[k])
        return polys


def _pack_mask(mask: np.ndarray) -> str:
    bits = np.packbits(mask.astype(np.uint8).ravel())
    return base64.b64encode(bits.tobytes()).decode("ascii")


def _unpack_mask(s: str, rows: int, cols: int) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(s), dtype=np.uint8)
    bits = np.unpackbits(raw)[: rows * cols]
    return bits.reshape(rows, cols).astype(bool)


def load_ensemble(path: str | Path) -> EnsembleDataset:
    """Load an ensemble directory (manifest.json + per-member .f32 arrays)."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())

    g = manifest["grid"]
    grid = SpatialGrid(
        rows=g["rows"],
        cols=g["cols"],
        lats=np.array(g["lats"], dtype=float),
        lons=np.array(g["lons"], dtype=float),
        valid_mask=_unpack_mask(g["valid_mask"], g["rows"], g["cols"]),
    )
    t = manifest["time"]
    months = [int(m) for m in t["months"]]
    years = int(t["years"])
    time_len = years * len(months)
    num_cells = grid.num_cells

    members: list[MemberId] = []
    arrays: list[np.ndarray] = []
    for entry in manifest["members"]:
        members.append(MemberId(entry["gcm"], entry["ssp"], entry.get("variant", "")))
        raw = np.fromfile(path / entry["file"], dtype="<f4")
        if raw.size != time_len * num_cells:
            raise DataError(
                f"member array length mismatch for {entry['file']}: "
                f"{raw.size} != {time_len} x {num_cells}"
            )
        arr = raw.astype(np.float64).reshape(time_len, num_cells)
        if not np.all(np.isfinite(arr)):
            raise DataError(f"non-finite value in {entry['file']}")
        arrays.append(arr)

    return EnsembleDataset(
        members=members,
        grid=grid,
        start_year=int(t["start_year"]),
        months=months,
        years=years,
        values=np.stack(arrays),
        normalized=bool(manifest.get("normalized", False)),
    )


def save_ensemble(dataset: EnsembleDataset, path: str | Path) -> None:
    """Write a dataset back out in the manifest + .f32 directory format."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, m in enumerate(dataset.members):
        fname = f"member_{i:03d}.f32"
        dataset.values[i].astype("<f4").tofile(path / fname)
        entries.append({"gcm": m.gcm, "ssp": m.ssp, "variant": m.variant, "file": fname})
    manifest = {
        "members": entries,
        "grid": {
            "rows": dataset.grid.rows,
            "cols": dataset.grid.cols,
            "lats": list(dataset.grid.lats),
            "lons": list(dataset.grid.lons),
            "valid_mask": _pack_mask(dataset.grid.valid_mask),
        },
        "time": {
            "start_year": dataset.start_year,
            "months": dataset.months,
            "years": dataset.years,
        },
        "normalized": dataset.normalized,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))


def normalize_per_month(dataset: EnsembleDataset) -> EnsembleDataset:
    """Divide every value by the pooled (population) standard deviation of
    its calendar month, computed across members, years, and cells."""
    if dataset.normalized:
        raise DataError("dataset already normalized")
    values = dataset.values.copy()
    n_months = len(dataset.months)
    for mi, month in enumerate(dataset.months):
        # time indices of this calendar month across all years
        idx = np.arange(mi, dataset.time_len, n_months)
        block = values[:, idx, :]
        std = float(np.sqrt(np.mean((block - block.mean()) ** 2)))
        if std <= 0.0:
            raise DataError(f"zero pooled standard deviation for month {month}")
        values[:, idx, :] = block / std
    return replace(dataset, values=values, normalized=True)


def flatten_samples(dataset: EnsembleDataset, months: set[int] | None = None) -> SampleMatrix:
    """One row per (member, time step) whose calendar month passes the
    filter, ordered by (member, time)."""
    if months is None:
        months = set(dataset.months)
    if not months:
        raise DataError("empty month filter")
    bad = months - set(range(1, 13))
    if bad:
        raise DataError(f"invalid month: {sorted(bad)}")
    months = months & set(dataset.months)
    if not months:
        raise DataError("month filter matches no dataset months")

    coords = dataset.time_coords()
    keep = [t for t, (_, m) in enumerate(coords) if m in months]
    rows = []
    member_idx = []
    yy = []
    mm = []
    for i in range(len(dataset.members)):
        rows.append(dataset.values[i, keep, :])
        member_idx.extend([i] * len(keep))
        yy.extend(coords[t][0] for t in keep)
        mm.extend(coords[t][1] for t in keep)
    return SampleMatrix(
        X=np.concatenate(rows, axis=0),
        member_index=np.array(member_idx, dtype=int),
        year=np.array(yy, dtype=int),
        month=np.array(mm, dtype=int),
    )


def region_mean(pattern: np.ndarray, region: list[list[np.ndarray]], grid: SpatialGrid) -> float:
    """Mean of ``pattern`` over cells whose (lon, lat) center lies in the
    region (even-odd rule, boundary inside)."""
    pattern = np.asarray(pattern, dtype=float)
    if pattern.shape != (grid.num_cells,):
        raise DataError("pattern length != num_cells")
    mask = region_cell_mask(region, grid)
    if not mask.any():
        raise DataError("region contains no cells")
    return float(pattern[mask].mean())


def region_cell_mask(region: list[list[np.ndarray]], grid: SpatialGrid) -> np.ndarray:
    """Boolean mask over valid cells contained in the region."""
    lonlat = grid.cell_lonlat
    return np.array(
        [geometry.point_in_region(x, y, region) for x, y in lonlat], dtype=bool
    )


def load_counties(path: str | Path) -> CountyIndex:
    """Parse a GeoJSON FeatureCollection with name/state properties."""
    doc = json.loads(Path(path).read_text())
    counties: dict[str, list[list[np.ndarray]]] = {}
    for feat in doc["features"]:
        props = feat["properties"]
        key = f"{props['name']}-{props['state']}"
        if key in counties:
            raise DataError(f"duplicate county key: {key}")
        geom = feat["geometry"]
        if geom["type"] == "Polygon":
            poly_coords = [geom["coordinates"]]
        elif geom["type"] == "MultiPolygon":
            poly_coords = geom["coordinates"]
        else:
            raise DataError(f"unsupported geometry type {geom['type']} for {key}")
        polys: list[list[np.ndarray]] = []
        for rings in poly_coords:
            parsed = []
            for ring in rings:
                r = np.asarray(ring, dtype=float)
                if len(r) < 4 or not np.allclose(r[0], r[-1]):
                    raise DataError(f"unclosed or too-short ring in {key}")
                parsed.append(r)
            polys.append(parsed)
        counties[key] = polys
    return CountyIndex(counties=counties)


@dataclass
class SyntheticSpec:
    """Recipe for the synthetic test ensemble.

    Each member draws each time step from its archetype mixture: an
    archetype index is sampled from ``member_weights`` and Gaussian noise
    of scale ``noise`` is added to the archetype pattern.
    """

    rows: int = 6
    cols: int = 6
    archetypes: list[np.ndarray] = field(default_factory=list)  # (num_cells,) each
    member_ids: list[MemberId] = field(default_factory=list)
    member_weights: list[np.ndarray] = field(default_factory=list)  # (K,) each
    years: int = 3
    months: list[int] = field(default_factory=lambda: list(range(1, 13)))
    start_year: int = 2000
    noise: float = 0.05


def make_archetypes(rows: int, cols: int, count: int, seed: int = 0) -> list[np.ndarray]:
    """Well-separated smooth spatial patterns on a full (rows, cols) raster."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:rows, 0:cols]
    pats = []
    for _ in range(count):
        cy, cx = rng.uniform(0, rows - 1), rng.uniform(0, cols - 1)
        amp = rng.choice([-2.0, 2.0]) * rng.uniform(1.0, 1.5)
        width = rng.uniform(1.0, 2.0)
        pat = amp * np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2)))
        pats.append(pat.ravel())
    return pats


def generate_synthetic_ensemble(spec: SyntheticSpec, seed: int = 0) -> EnsembleDataset:
    """Deterministic synthetic ensemble from archetype mixtures."""
    if not spec.archetypes:
        raise DataError("zero archetypes")
    rng = np.random.default_rng(seed)
    num_cells = len(spec.archetypes[0])
    if num_cells != spec.rows * spec.cols:
        raise DataError("archetype length != rows*cols")
    grid = SpatialGrid(
        rows=spec.rows,
        cols=spec.cols,
        lats=np.linspace(32.0, 42.0, spec.rows),
        lons=np.linspace(-124.0, -114.0, spec.cols),
        valid_mask=np.ones((spec.rows, spec.cols), dtype=bool),
    )
    time_len = spec.years * len(spec.months)
    arche = np.stack(spec.archetypes)
    values = np.empty((len(spec.member_ids), time_len, num_cells))
    for i, w in enumerate(spec.member_weights):
        w = np.asarray(w, dtype=float)
        w = w / w.sum()
        picks = rng.choice(len(arche), size=time_len, p=w)
        noise = rng.normal(0.0, spec.noise, size=(time_len, num_cells))
        values[i] = arche[picks] + noise
    return EnsembleDataset(
        members=list(spec.member_ids),
        grid=grid,
        start_year=spec.start_year,
        months=list(spec.months),
        years=spec.years,
        values=values,
        normalized=False,
    )
