import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from beamtrack.encoders import (
    GridSpec,
    PointCloud,
    coord_matrix,
    heading_step,
    run_length,
    virtual_lidar,
    voxelize,
)
from beamtrack.errors import EncodingError
from beamtrack.geometry import Box
from beamtrack.scene import CAR_SIZE, VehicleState, make_scenario
from beamtrack.tensorio import decode_blob, encode_blob, read_blob, write_blob

GRID = GridSpec((0.0, 0.0, 0.0), 1.0, (8, 8, 4))
PLANE = GridSpec((0.0, 0.0), 1.0, (20, 20))


def car(vid, x, y, heading=0.0):
    return VehicleState(vid, (x, y, 0.0), (math.cos(heading), math.sin(heading), 0.0), heading, CAR_SIZE)


class TestVirtualLidar:
    def test_empty_scene(self):
        cloud = virtual_lidar(None, [], (0.0, 0.0, 5.0), n_elevation=4, el_range=(0.0, 0.5))
        assert len(cloud) == 0

    def test_enclosing_cube(self):
        r = 10.0
        walls = [
            Box((r, -50, -50), (r + 1, 50, 50)), Box((-r - 1, -50, -50), (-r, 50, 50)),
            Box((-50, r, -50), (50, r + 1, 50)), Box((-50, -r - 1, -50), (50, -r, 50)),
            Box((-50, -50, r), (50, 50, r + 1)), Box((-50, -50, -r - 1), (50, 50, -r)),
        ]
        cloud = virtual_lidar(None, [], (0.0, 0.0, 0.0), 90, 8, 100.0, extra_boxes=walls)
        assert len(cloud) == 90 * 8
        d = np.linalg.norm(cloud.points, axis=1)
        assert d.min() >= r - 1e-9 and d.max() <= r * math.sqrt(3) + 1e-9

    def test_wall_hit_coordinates(self):
        wall = Box((10.0, -100, -100), (11.0, 100, 100))
        cloud = virtual_lidar(None, [], (0.0, 0.0, 0.0), 360, 1, 100.0, el_range=(0.0, 0.0), extra_boxes=[wall])
        assert len(cloud) > 0
        np.testing.assert_allclose(cloud.points[:, 0], 10.0, atol=1e-9)

    def test_out_of_range_is_dropped(self):
        wall = Box((50.0, -100, -100), (51.0, 100, 100))
        cloud = virtual_lidar(None, [], (0.0, 0.0, 0.0), 36, 1, 20.0, el_range=(0.0, 0.0), extra_boxes=[wall])
        assert len(cloud) == 0

    def test_vehicles_toggle(self):
        v = [car(0, 5.0, 0.0)]
        with_v = virtual_lidar(None, v, (0.0, 0.0, 1.0), 72, 4)
        without = virtual_lidar(None, v, (0.0, 0.0, 1.0), 72, 4, include_vehicles=False)
        assert len(with_v) > 0 and len(without) == 0

    def test_canyon_points_finite(self):
        sc = make_scenario("urban_canyon")
        cloud = virtual_lidar(sc, [], (2.0, 70.0, 6.0, 0.0))
        assert len(cloud) > 0 and np.isfinite(cloud.points).all()


class TestVoxelize:
    def test_markers(self):
        pts = np.array([[0.5, 0.5, 0.5], [2.5, 2.5, 0.5], [7.9, 7.9, 3.9]])
        v = voxelize(pts, GRID, (2.2, 2.7, 0.1), (5.0, 5.0, 1.0))
        assert v.dtype == np.int8 and v.shape == (8, 8, 4)
        assert v[0, 0, 0] == -1 and v[7, 7, 3] == -1
        assert v[2, 2, 0] == -2  # BS overrides obstacle
        assert v[5, 5, 1] == -3
        assert np.count_nonzero(v) == 4

    def test_cell_boundary_floor(self):
        v = voxelize(np.array([[1.0, 2.0, 3.0]]), GRID, (0.0, 0.0, 0.0), (7.5, 0.5, 0.5))
        assert v[1, 2, 3] == -1

    def test_ue_overrides_bs(self):
        v = voxelize(np.zeros((0, 3)), GRID, (3.1, 3.1, 1.1), (3.9, 3.9, 1.9))
        assert v[3, 3, 1] == -3
        assert not (v == -2).any()

    def test_points_outside_are_dropped(self):
        v = voxelize(np.array([[-0.1, 0, 0], [8.0, 0, 0], [0, 0, 4.0]]), GRID, (0, 0, 0), (1, 1, 1))
        assert np.count_nonzero(v) == 2

    @pytest.mark.parametrize("bs,ue", [((-1, 0, 0), (1, 1, 1)), ((1, 1, 1), (1, 1, 9))])
    def test_marker_outside_grid(self, bs, ue):
        with pytest.raises(EncodingError):
            voxelize(np.zeros((0, 3)), GRID, bs, ue)

    def test_accepts_point_cloud(self):
        cloud = PointCloud(np.array([[1.5, 1.5, 1.5]]), (0, 0, 0, 0))
        assert voxelize(cloud, GRID, (0, 0, 0), (7, 7, 3))[1, 1, 1] == -1

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(0, 40), st.just(3)), elements=st.floats(-2, 10)), st.randoms())
    def test_permutation_invariant(self, pts, rnd):
        perm = list(range(len(pts)))
        rnd.shuffle(perm)
        a = voxelize(pts, GRID, (0.5, 0.5, 0.5), (6.5, 6.5, 2.5))
        b = voxelize(pts[perm], GRID, (0.5, 0.5, 0.5), (6.5, 6.5, 2.5))
        np.testing.assert_array_equal(a, b)

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(np.int64, st.tuples(st.integers(0, 30), st.just(3)), elements=st.integers(0, 15)),
        st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.integers(-2, 2)),
    )
    def test_translation_equivariant(self, cells, shift):
        # dyadic lattice points: coordinates are exact, so floor is exact
        pts = cells.astype(float) * 0.5 + 0.25
        shift = np.array(shift, float)
        big = GridSpec((-8.0, -8.0, -8.0), 1.0, (32, 32, 24))
        a = voxelize(pts, big, (0.25, 0.25, 0.25), (3.25, 3.25, 3.25))
        b = voxelize(pts + shift, big, 0.25 + shift, 3.25 + shift)
        s = shift.astype(int)
        np.testing.assert_array_equal(np.roll(a, tuple(s), axis=(0, 1, 2)), b)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(0, 40), st.just(3)), elements=st.floats(-2, 10)))
    def test_value_set(self, pts):
        v = voxelize(pts, GRID, (0.5, 0.5, 0.5), (6.5, 6.5, 2.5))
        assert set(np.unique(v)) <= {0, -1, -2, -3}
        assert (v == -2).sum() == 1 and (v == -3).sum() == 1


class TestCoordMatrix:
    def test_gradient_along_heading(self):
        rx = car(0, 5.5, 5.5, 0.0)
        m = coord_matrix(None, [rx], PLANE, (15.5, 15.5, 6.0), rx)
        assert [m[5 + k, 5] for k in range(4)] == [3, 4, 5, 6]
        assert m[15, 15] == 10
        assert run_length(m) == 4
        assert set(np.unique(m)) == {0, 3, 4, 5, 6, 10}

    @pytest.mark.parametrize("heading,step", [
        (0.0, (1, 0)), (math.pi / 2, (0, 1)), (math.pi, (-1, 0)), (-math.pi / 2, (0, -1)),
        (math.radians(30), (1, 0)), (math.radians(60), (0, 1)),
    ])
    def test_nearest_axis(self, heading, step):
        assert heading_step(heading) == step

    def test_truncated_at_edge(self):
        rx = car(0, 18.5, 5.5, 0.0)
        m = coord_matrix(None, [rx], PLANE, (1.5, 1.5, 6.0), rx)
        assert m[18, 5] == 3 and m[19, 5] == 4
        assert run_length(m) == 2

    def test_scatterers(self):
        rx = car(0, 2.5, 2.5, 0.0)
        other = car(1, 10.0, 10.0, 0.0)
        m = coord_matrix(None, [rx, other], PLANE, (18.5, 18.5, 6.0), rx)
        assert m[10, 10] == 1
        m2 = coord_matrix(None, [rx, other], PLANE, (18.5, 18.5, 6.0), rx, include_vehicles=False)
        assert m2[10, 10] == 0

    def test_buildings_and_override(self):
        sc = make_scenario("urban_canyon")
        grid = GridSpec((-5.0, 0.0), 1.0, (30, 200))
        rx = car(0, 7.5, 60.0, math.pi / 2)
        m = coord_matrix(sc, [rx], grid, (2.0, 70.0, 6.0), rx)
        assert m[0, 60] == 1  # inside a building footprint (x=-5)
        assert m[7, 70] == 10
        assert m[12, 60] == 3 and m[12, 63] == 6

    def test_gradient_len_bounds(self):
        rx = car(0, 5.5, 5.5)
        with pytest.raises(ValueError):
            coord_matrix(None, [rx], PLANE, (1, 1, 1), rx, gradient_len=8)
        m = coord_matrix(None, [rx], PLANE, (1, 1, 1), rx, gradient_len=7)
        assert m.max() == 10 and run_length(m) == 7

    def test_outside_grid(self):
        rx = car(0, 25.0, 5.0)
        with pytest.raises(EncodingError):
            coord_matrix(None, [rx], PLANE, (1, 1, 1), rx)
        rx = car(0, 5.0, 5.0)
        with pytest.raises(EncodingError):
            coord_matrix(None, [rx], PLANE, (-1, 1, 1), rx)


class TestTensorBlob:
    @pytest.mark.parametrize("dtype", [np.int8, np.float32, np.float64])
    def test_round_trip(self, dtype, tmp_path):
        a = (np.arange(24).reshape(2, 3, 4) - 12).astype(dtype)
        write_blob(tmp_path / "a.bin", a)
        b = read_blob(tmp_path / "a.bin")
        assert b.dtype == a.dtype
        np.testing.assert_array_equal(a, b)

    def test_header_layout(self):
        data = encode_blob(np.zeros((2, 5), np.int8))
        assert data[:4] == b"BTTN"
        assert data[4] == 2 and data[5] == 1
        assert int.from_bytes(data[8:16], "little") == 10
        assert int.from_bytes(data[16:20], "little") == 2 and int.from_bytes(data[20:24], "little") == 5
        assert len(data) == 24 + 10

    def test_scalar_and_empty(self):
        for a in (np.float64(3.5), np.zeros((0, 4), np.float32)):
            b = decode_blob(encode_blob(a))
            assert b.shape == np.shape(a)

    def test_corrupt(self):
        data = encode_blob(np.ones(3))
        with pytest.raises(ValueError):
            decode_blob(b"XXXX" + data[4:])
        with pytest.raises(ValueError):
            decode_blob(data[:-1])
        with pytest.raises(TypeError):
            encode_blob(np.ones(3, np.int32))

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(0, 5), st.integers(0, 5)), elements=st.floats(allow_nan=False)))
    def test_round_trip_property(self, a):
        np.testing.assert_array_equal(decode_blob(encode_blob(a)), a)
