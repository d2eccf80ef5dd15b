from __future__ import annotations

from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forewarn.errors import (
    CoordinateMismatchError,
    InvalidCoordinateError,
    InvalidResolutionError,
)
from forewarn.grid import (
    DIMS,
    BoundingBox,
    CoordinateSet,
    ForecastTensor,
    bbox_indices,
    bbox_point_count,
    build_catalog,
    coords_for_grid,
    grid_spec,
    latlon_to_index,
    validate_coords,
)

RUN_T0 = datetime(2026, 2, 3, 6, tzinfo=timezone.utc)


def brute_force_index(spec, lat, lon):
    """Independent nearest-node search: scan every node, keep the smallest
    distance per axis, resolve exact ties toward the lower index. Longitude
    distance wraps around the sphere."""
    lats = spec.latitudes()
    lons = spec.longitudes()
    best_i, best_d = 0, abs(lats[0] - lat)
    for i in range(1, len(lats)):
        d = abs(lats[i] - lat)
        if d < best_d:
            best_i, best_d = i, d
    lon_n = lon % 360.0
    def wrap_dist(a, b):
        d = abs(a - b) % 360.0
        return min(d, 360.0 - d)
    best_j, best_dj = 0, wrap_dist(lons[0], lon_n)
    for j in range(1, len(lons)):
        d = wrap_dist(lons[j], lon_n)
        if d < best_dj:
            best_j, best_dj = j, d
    return best_i, best_j


class TestCatalog:
    def test_catalog_size_and_order(self, catalog):
        assert len(catalog) == 75
        names = catalog.names
        assert names[:8] == ("u10m", "v10m", "u100m", "v100m", "t2m", "sp", "msl", "tcwv")
        assert names[8] == "u50"
        assert names[8 + 13] == "v50"
        assert names[-2:] == ("sst", "tp")
        # pressure block: grouped by field, levels ascending
        levels = [catalog.lookup(n).level for n in names[8:21]]
        assert levels == sorted(levels)

    def test_lookup_total_over_catalog(self, catalog):
        for i, entry in enumerate(catalog):
            assert catalog.lookup(entry.name) is entry
            assert catalog.index_of(entry.name) == i

    def test_kinds_partition(self, catalog):
        assert len(catalog.by_kind("surface")) == 8
        assert len(catalog.by_kind("pressure")) == 65
        assert len(catalog.by_kind("extra")) == 2

    def test_units(self, catalog):
        assert catalog.lookup("t2m").units == "K"
        assert catalog.lookup("z500").units == "m2 s-2"
        assert catalog.lookup("z500").level == 500
        assert catalog.lookup("tcwv").units == "mm"

    def test_export_table_lists_every_variable(self, catalog):
        table = catalog.export_table()
        for name in catalog.names:
            assert name in table

    def test_custom_levels(self):
        cat = build_catalog(levels=(500, 850))
        assert len(cat) == 8 + 5 * 2 + 2
        assert "z500" in cat and "z300" not in cat


class TestGridSpec:
    def test_quarter_degree_dimensions(self):
        s = grid_spec(0.25)
        assert (s.nlat, s.nlon) == (721, 1440)
        assert s.npoints == 1_038_240

    def test_one_degree_dimensions(self):
        s = grid_spec(1.0)
        assert (s.nlat, s.nlon) == (181, 360)
        assert s.npoints == 65_160

    def test_latitudes_run_north_to_south(self):
        s = grid_spec(1.0)
        lats = s.latitudes()
        assert lats[0] == 90.0 and lats[-1] == -90.0
        assert np.all(np.diff(lats) < 0)

    def test_longitudes_run_east(self):
        s = grid_spec(0.25)
        lons = s.longitudes()
        assert lons[0] == 0.0 and lons[-1] == 359.75

    @pytest.mark.parametrize("bad", [0.3, 0.1, 0.7, 7.0, 0.0, -1.0, float("nan"), float("inf")])
    def test_invalid_resolutions_rejected(self, bad):
        with pytest.raises(InvalidResolutionError):
            grid_spec(bad)

    @pytest.mark.parametrize("res,nlat,nlon", [(0.25, 721, 1440), (0.5, 361, 720), (1.0, 181, 360), (2.5, 73, 144), (20.0, 10, 18)])
    def test_valid_resolutions(self, res, nlat, nlon):
        s = grid_spec(res)
        assert (s.nlat, s.nlon) == (nlat, nlon)


class TestLatLonToIndex:
    def test_johannesburg_quarter_degree(self):
        s = grid_spec(0.25)
        assert latlon_to_index(s, -26.2, 28.05) == (465, 112)
        assert latlon_to_index(s, -26.2, 28.05) == brute_force_index(s, -26.2, 28.05)

    def test_corners(self):
        s = grid_spec(0.25)
        assert latlon_to_index(s, 90.0, 0.0) == (0, 0)
        assert latlon_to_index(s, -90.0, 359.75) == (720, 1439)

    def test_longitude_normalization(self):
        s = grid_spec(0.25)
        assert latlon_to_index(s, 0.0, 360.0) == latlon_to_index(s, 0.0, 0.0)
        assert latlon_to_index(s, 0.0, -0.125) == (360, 0)  # tie resolves down
        assert latlon_to_index(s, 0.0, -0.2) == (360, 1439)

    def test_ties_round_to_lower_index(self):
        s = grid_spec(1.0)
        # 89.5 is equidistant from nodes 0 (90) and 1 (89)
        assert latlon_to_index(s, 89.5, 0.0)[0] == 0
        assert latlon_to_index(s, 0.0, 0.5)[1] == 0
        assert latlon_to_index(s, 0.0, 358.5)[1] == 358

    def test_rejects_bad_coordinates(self):
        s = grid_spec(1.0)
        with pytest.raises(InvalidCoordinateError):
            latlon_to_index(s, 91.0, 0.0)
        with pytest.raises(InvalidCoordinateError):
            latlon_to_index(s, float("nan"), 0.0)
        with pytest.raises(InvalidCoordinateError):
            latlon_to_index(s, 0.0, float("inf"))

    def test_against_brute_force_random(self):
        s = grid_spec(1.0)
        rng = np.random.default_rng(42)
        for _ in range(300):
            lat = float(rng.uniform(-90, 90))
            lon = float(rng.uniform(0, 360))
            assert latlon_to_index(s, lat, lon) == brute_force_index(s, lat, lon)

    @given(i=st.integers(0, 180), j=st.integers(0, 359))
    @settings(max_examples=200, deadline=None)
    def test_grid_nodes_map_to_themselves(self, i, j):
        s = grid_spec(1.0)
        lat = float(s.latitudes()[i])
        lon = float(s.longitudes()[j])
        assert latlon_to_index(s, lat, lon) == (i, j)

    def test_nodes_map_to_themselves_quarter_degree(self):
        s = grid_spec(0.25)
        rng = np.random.default_rng(7)
        lats, lons = s.latitudes(), s.longitudes()
        for _ in range(500):
            i = int(rng.integers(0, s.nlat))
            j = int(rng.integers(0, s.nlon))
            assert latlon_to_index(s, float(lats[i]), float(lons[j])) == (i, j)


def brute_force_bbox(spec, box):
    """Independent box membership: test every node against the inclusive
    bounds directly."""
    nodes = set()
    lats = spec.latitudes()
    lons = spec.longitudes()
    for i in range(spec.nlat):
        if not (box.lat_min <= lats[i] <= box.lat_max):
            continue
        for j in range(spec.nlon):
            if box.wraps:
                inside = lons[j] >= box.lon_min or lons[j] <= box.lon_max
            else:
                inside = box.lon_min <= lons[j] <= box.lon_max
            if inside:
                nodes.add((i, j))
    return nodes


def expand_bbox(lat_range, lon_ranges):
    return {(i, j) for i in lat_range for r in lon_ranges for j in r}


class TestBoundingBox:
    def test_validation(self):
        with pytest.raises(InvalidCoordinateError):
            BoundingBox(10, -10, 0, 20)  # lat_min > lat_max
        with pytest.raises(InvalidCoordinateError):
            BoundingBox(-10, 10, -5, 20)  # lon out of [0, 360)
        with pytest.raises(InvalidCoordinateError):
            BoundingBox(-10, 10, 0, float("nan"))

    def test_degenerate_single_point(self):
        s = grid_spec(1.0)
        assert bbox_point_count(s, BoundingBox(0, 0, 0, 0)) == 1

    def test_full_globe(self):
        s = grid_spec(1.0)
        assert bbox_point_count(s, BoundingBox.full_globe()) == s.npoints

    def test_wraparound_box(self):
        s = grid_spec(1.0)
        box = BoundingBox(-5, 5, 355, 5)
        lat_range, lon_ranges = bbox_indices(s, box)
        assert len(lon_ranges) == 2
        assert expand_bbox(lat_range, lon_ranges) == brute_force_bbox(s, box)

    def test_empty_between_nodes(self):
        s = grid_spec(1.0)
        box = BoundingBox(0.2, 0.8, 0.2, 0.8)
        assert bbox_point_count(s, box) == 0

    def test_random_boxes_match_brute_force(self):
        s = grid_spec(2.5)
        rng = np.random.default_rng(123)
        for k in range(1000):
            a, b = sorted(rng.uniform(-90, 90, 2))
            lo, hi = rng.uniform(0, 360, 2)  # unordered: wraps when lo > hi
            box = BoundingBox(float(a), float(b), float(lo), float(hi))
            lat_range, lon_ranges = bbox_indices(s, box)
            assert expand_bbox(lat_range, lon_ranges) == brute_force_bbox(s, box), box

    def test_node_aligned_edges_inclusive(self):
        s = grid_spec(1.0)
        box = BoundingBox(-26.0, -25.0, 27.0, 29.0)
        lat_range, lon_ranges = bbox_indices(s, box)
        assert len(lat_range) == 2
        assert sum(len(r) for r in lon_ranges) == 3


def _frame(run_time):
    cat = build_catalog(levels=(500,))
    return coords_for_grid(grid_spec(20.0), cat, run_time, lead_hours=(0, 6))


class TestCoordinateSet:
    def test_dims_order(self):
        assert DIMS == ("batch", "time", "lead_time", "variable", "lat", "lon")

    def test_shape(self, run_time):
        c = _frame(run_time)
        assert c.shape == (1, 1, 2, 15, 10, 18)

    def test_replace_returns_new_frame(self, run_time):
        c = _frame(run_time)
        c2 = c.replace(lead_time=(6,))
        assert c2.lead_time == (6,)
        assert c.lead_time == (0, 6)

    def test_validate_passes_on_equal(self, run_time):
        c = _frame(run_time)
        validate_coords(c, c.replace())

    @pytest.mark.parametrize("dim", DIMS)
    def test_validate_names_offending_dimension(self, dim, run_time):
        c = _frame(run_time)
        perturbed = {
            "batch": (1,),
            "time": (datetime(2020, 1, 1, tzinfo=timezone.utc),),
            "lead_time": (0, 12),
            "variable": ("t2m",) * 15,
            "lat": tuple(range(10)),
            "lon": tuple(range(18)),
        }
        c2 = c.replace(**{dim: perturbed[dim]})
        with pytest.raises(CoordinateMismatchError) as ei:
            validate_coords(c, c2)
        assert ei.value.dimension == dim
        assert dim in str(ei.value)
        # symmetric
        with pytest.raises(CoordinateMismatchError) as ei2:
            validate_coords(c2, c)
        assert ei2.value.dimension == dim

    @given(dim_pair=st.sets(st.sampled_from(DIMS), min_size=1, max_size=3))
    @settings(max_examples=50, deadline=None)
    def test_validate_reports_first_dim_in_canonical_order(self, dim_pair):
        c = _frame(RUN_T0)
        perturbed = {
            "batch": (1,),
            "time": (datetime(2020, 1, 1, tzinfo=timezone.utc),),
            "lead_time": (0, 12),
            "variable": ("t2m",) * 15,
            "lat": tuple(range(10)),
            "lon": tuple(range(18)),
        }
        c2 = c.replace(**{d: perturbed[d] for d in dim_pair})
        with pytest.raises(CoordinateMismatchError) as ei:
            validate_coords(c, c2)
        first = min(dim_pair, key=DIMS.index)
        assert ei.value.dimension == first


class TestForecastTensor:
    def test_shape_must_match_coords(self, run_time):
        c = _frame(run_time)
        with pytest.raises(ValueError):
            ForecastTensor(values=np.zeros((1, 1, 1, 15, 10, 18), dtype=np.float32), coords=c)

    def test_valid_construction(self, run_time):
        c = _frame(run_time)
        t = ForecastTensor(values=np.zeros(c.shape, dtype=np.float32), coords=c)
        assert t.variables == c.variable
