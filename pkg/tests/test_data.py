"""Ensemble ingestion, normalization, flattening, spatial means, county
loading, and the synthetic generator."""

import json

import numpy as np
import pytest

from ensomap.data import (
    CountyIndex,
    DataError,
    EnsembleDataset,
    MemberId,
    SpatialGrid,
    SyntheticSpec,
    flatten_samples,
    generate_synthetic_ensemble,
    load_counties,
    load_ensemble,
    make_archetypes,
    normalize_per_month,
    region_cell_mask,
    region_mean,
    save_ensemble,
)


def tiny_dataset(values, months=(1,), years=1, rows=1, cols=3):
    """Single-member dataset wrapping a raw (time, cells) array."""
    values = np.asarray(values, dtype=float)
    grid = SpatialGrid(
        rows=rows, cols=cols,
        lats=np.linspace(0.0, max(rows - 1, 1), rows),
        lons=np.linspace(0.0, max(cols - 1, 1), cols),
        valid_mask=np.ones((rows, cols), dtype=bool),
    )
    return EnsembleDataset(
        members=[MemberId("g", "historical")],
        grid=grid,
        start_year=2000,
        months=list(months),
        years=years,
        values=values[None, :, :],
    )


class TestNormalizePerMonth:
    def test_hand_computed_pooled_std(self):
        # one month, values {-2, 0, 2}: pooled std = sqrt(8/3)
        ds = tiny_dataset([[-2.0, 0.0, 2.0]])
        out = normalize_per_month(ds)
        std = np.sqrt(8.0 / 3.0)
        np.testing.assert_allclose(out.values[0, 0], np.array([-2, 0, 2]) / std)

    def test_result_has_unit_pooled_std(self):
        rng = np.random.default_rng(3)
        ds = tiny_dataset(rng.normal(2.0, 5.0, size=(4, 3)), months=(1, 2), years=2)
        out = normalize_per_month(ds)
        for mi in range(2):
            block = out.values[:, mi::2, :]
            assert np.sqrt(np.mean((block - block.mean()) ** 2)) == pytest.approx(1.0)

    def test_identity_when_already_unit(self):
        rng = np.random.default_rng(4)
        raw = rng.normal(size=(2, 3))
        raw = (raw - raw.mean()) / np.sqrt(np.mean((raw - raw.mean()) ** 2))
        ds = tiny_dataset(raw, months=(1, 2), years=1)
        out = normalize_per_month(ds)
        # each month is a separate pool; renormalizing a unit pool is a no-op
        for mi in range(2):
            block = raw[mi::2]
            expect = block / np.sqrt(np.mean((block - block.mean()) ** 2))
            np.testing.assert_allclose(out.values[0, mi::2], expect, atol=1e-12)

    def test_zero_std_month_errors(self):
        ds = tiny_dataset([[0.0, 0.0, 0.0]])
        with pytest.raises(DataError, match="zero pooled standard deviation"):
            normalize_per_month(ds)

    def test_double_normalize_errors(self, dataset):
        with pytest.raises(DataError, match="already normalized"):
            normalize_per_month(dataset)


class TestFlattenSamples:
    def test_shape_and_order(self, dataset):
        sm = flatten_samples(dataset)
        n = len(dataset.members) * dataset.time_len
        assert sm.X.shape == (n, dataset.grid.num_cells)
        # ordered by (member, time)
        assert list(sm.member_index) == sorted(sm.member_index)
        first = sm.member_index == 0
        coords = list(zip(sm.year[first], sm.month[first]))
        assert coords == dataset.time_coords()

    def test_month_filter(self, dataset):
        sm = flatten_samples(dataset, {2})
        assert set(sm.month) == {2}
        assert sm.X.shape[0] == len(dataset.members) * dataset.years

    def test_rows_match_values(self, dataset):
        sm = flatten_samples(dataset, {3})
        # member 1, first year, month 3 is time index 2
        row = sm.X[(sm.member_index == 1) & (sm.year == 2000)][0]
        np.testing.assert_array_equal(row, dataset.values[1, 2])

    def test_empty_filter_errors(self, dataset):
        with pytest.raises(DataError, match="empty month filter"):
            flatten_samples(dataset, set())

    def test_invalid_month_errors(self, dataset):
        with pytest.raises(DataError, match="invalid month"):
            flatten_samples(dataset, {13})

    def test_unmatched_filter_errors(self, dataset):
        with pytest.raises(DataError, match="matches no dataset months"):
            flatten_samples(dataset, {12})


class TestRoundTrip:
    def test_save_load_preserves_f32_values(self, dataset, tmp_path):
        out = tmp_path / "ens"
        save_ensemble(dataset, out)
        back = load_ensemble(out)
        assert [m.key for m in back.members] == [m.key for m in dataset.members]
        assert back.months == dataset.months
        assert back.years == dataset.years
        assert back.start_year == dataset.start_year
        assert back.normalized == dataset.normalized
        np.testing.assert_array_equal(back.grid.valid_mask, dataset.grid.valid_mask)
        np.testing.assert_allclose(back.grid.lats, dataset.grid.lats)
        # storage is float32: round-trip equals the f32 cast exactly
        np.testing.assert_array_equal(
            back.values, dataset.values.astype("<f4").astype(np.float64)
        )

    def test_second_roundtrip_bit_identical(self, dataset, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        save_ensemble(dataset, a)
        save_ensemble(load_ensemble(a), b)
        np.testing.assert_array_equal(load_ensemble(a).values, load_ensemble(b).values)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError, match="missing manifest"):
            load_ensemble(tmp_path)

    def test_length_mismatch(self, dataset, tmp_path):
        out = tmp_path / "ens"
        save_ensemble(dataset, out)
        f = out / "member_000.f32"
        f.write_bytes(f.read_bytes()[:-8])
        with pytest.raises(DataError, match="length mismatch"):
            load_ensemble(out)

    def test_non_finite_rejected(self, dataset, tmp_path):
        out = tmp_path / "ens"
        save_ensemble(dataset, out)
        arr = np.fromfile(out / "member_000.f32", dtype="<f4").copy()
        arr[0] = np.nan
        arr.tofile(out / "member_000.f32")
        with pytest.raises(DataError, match="non-finite"):
            load_ensemble(out)


class TestRegionMean:
    def test_split_counties_partition_grid(self, dataset, counties):
        north = region_cell_mask(counties.counties["North-XX"], dataset.grid)
        south = region_cell_mask(counties.counties["South-XX"], dataset.grid)
        assert north.sum() == 18 and south.sum() == 18
        assert not (north & south).any()

    def test_hand_computed_mean(self, dataset, counties):
        pattern = np.arange(dataset.grid.num_cells, dtype=float)
        north = region_cell_mask(counties.counties["North-XX"], dataset.grid)
        got = region_mean(pattern, counties.counties["North-XX"], dataset.grid)
        assert got == pytest.approx(pattern[north].mean())

    def test_empty_region_errors(self, dataset):
        far = [[np.array([(50.0, 50.0), (51.0, 50.0), (51.0, 51.0), (50.0, 50.0)])]]
        with pytest.raises(DataError, match="no cells"):
            region_mean(np.zeros(dataset.grid.num_cells), far, dataset.grid)

    def test_pattern_length_checked(self, dataset, counties):
        with pytest.raises(DataError, match="num_cells"):
            region_mean(np.zeros(3), counties.counties["North-XX"], dataset.grid)


class TestLoadCounties:
    def _write(self, tmp_path, features):
        p = tmp_path / "counties.geojson"
        p.write_text(json.dumps({"type": "FeatureCollection", "features": features}))
        return p

    def _feature(self, name, state, ring, gtype="Polygon"):
        coords = ring if gtype != "Polygon" else ring
        return {
            "type": "Feature",
            "properties": {"name": name, "state": state},
            "geometry": {"type": gtype, "coordinates": coords},
        }

    RING = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0]]

    def test_polygon_and_multipolygon(self, tmp_path):
        feats = [
            self._feature("A", "CA", [self.RING]),
            self._feature("B", "CA", [[self.RING], [self.RING]], gtype="MultiPolygon"),
        ]
        idx = load_counties(self._write(tmp_path, feats))
        assert set(idx.counties) == {"A-CA", "B-CA"}
        assert len(idx.counties["B-CA"]) == 2
        assert len(idx.region(["A-CA", "B-CA"])) == 3

    def test_duplicate_key_rejected(self, tmp_path):
        feats = [self._feature("A", "CA", [self.RING])] * 2
        with pytest.raises(DataError, match="duplicate county key"):
            load_counties(self._write(tmp_path, feats))

    def test_unclosed_ring_rejected(self, tmp_path):
        open_ring = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.5, 0.5]]
        feats = [self._feature("A", "CA", [open_ring])]
        with pytest.raises(DataError, match="unclosed"):
            load_counties(self._write(tmp_path, feats))

    def test_unsupported_geometry(self, tmp_path):
        feats = [{
            "type": "Feature",
            "properties": {"name": "A", "state": "CA"},
            "geometry": {"type": "Point", "coordinates": [0.0, 0.0]},
        }]
        with pytest.raises(DataError, match="unsupported geometry"):
            load_counties(self._write(tmp_path, feats))


class TestSynthetic:
    def test_deterministic(self):
        arche = make_archetypes(4, 4, 2, seed=1)
        spec = SyntheticSpec(
            rows=4, cols=4, archetypes=arche,
            member_ids=[MemberId("g", "historical")],
            member_weights=[np.array([0.5, 0.5])],
            years=2, months=[1],
        )
        a = generate_synthetic_ensemble(spec, seed=5)
        b = generate_synthetic_ensemble(spec, seed=5)
        np.testing.assert_array_equal(a.values, b.values)
        c = generate_synthetic_ensemble(spec, seed=6)
        assert not np.array_equal(a.values, c.values)

    def test_archetypes_well_separated(self):
        arche = make_archetypes(6, 6, 2, seed=7)
        d = np.linalg.norm(arche[0] - arche[1])
        assert d > 1.0

    def test_member_index_lookup(self, dataset):
        assert dataset.member_index("gcmB", "ssp245") == 3
        with pytest.raises(DataError, match="no member"):
            dataset.member_index("gcmZ", "ssp245")

    def test_member_key(self):
        assert MemberId("miroc6", "ssp370").key == "miroc6_ssp370_r1i1p1f1"
