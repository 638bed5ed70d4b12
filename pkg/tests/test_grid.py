import math

import numpy as np
import pytest

from pear.grid import (
    GridSpec,
    Scheme,
    children,
    coord_to_pixel,
    nest2ring,
    nest2ring_table,
    parent,
    pixel_center,
    ring2nest,
    ring2nest_table,
    ring_census,
)

from oracles import nested_pixel_center, ring_order_table

# nested -> ring permutation for n_side=2, frozen from the brute-force
# geometric ordering in oracles.py
NEST2RING_N2 = [
    13, 5, 4, 0, 15, 7, 6, 1, 17, 9, 8, 2, 19, 11, 10, 3,
    28, 20, 27, 12, 30, 22, 21, 14, 32, 24, 23, 16, 34, 26, 25, 18,
    44, 37, 36, 29, 45, 39, 38, 31, 46, 41, 40, 33, 47, 43, 42, 35,
]


class TestGridSpec:
    @pytest.mark.parametrize("k,n_side,n_pix", [(0, 1, 12), (3, 8, 768), (6, 64, 49152)])
    def test_from_k(self, k, n_side, n_pix):
        spec = GridSpec.from_k(k)
        assert (spec.n_side, spec.n_pix) == (n_side, n_pix)
        assert GridSpec.from_nside(n_side) == spec

    @pytest.mark.parametrize("k", range(8))
    def test_area_covers_sphere(self, k):
        spec = GridSpec.from_k(k)
        total = spec.pixel_area * spec.n_pix
        assert abs(total - 4.0 * math.pi) <= 8 * np.spacing(4.0 * math.pi)

    @pytest.mark.parametrize("bad", [0, 3, 12, -2])
    def test_rejects_non_power_of_two(self, bad):
        with pytest.raises(ValueError):
            GridSpec.from_nside(bad)

    def test_rejects_negative_k(self):
        with pytest.raises(ValueError):
            GridSpec.from_k(-1)


class TestIndexConversion:
    def test_base_resolution_is_identity(self):
        spec = GridSpec.from_nside(1)
        pix = np.arange(12)
        assert nest2ring(spec, pix).tolist() == list(range(12))
        assert ring2nest(spec, pix).tolist() == list(range(12))

    def test_nside2_frozen_table(self):
        spec = GridSpec.from_nside(2)
        got = nest2ring(spec, np.arange(48))
        assert got.tolist() == NEST2RING_N2

    def test_scalar_round_trip(self):
        spec = GridSpec.from_nside(2)
        assert nest2ring(spec, 3) == 0
        assert ring2nest(spec, 0) == 3
        assert isinstance(nest2ring(spec, 3), int)

    @pytest.mark.parametrize("n_side", [1, 2, 4, 8, 16])
    def test_matches_geometric_ordering(self, n_side):
        spec = GridSpec.from_nside(n_side)
        expect = ring_order_table(n_side)
        got = nest2ring(spec, np.arange(spec.n_pix))
        np.testing.assert_array_equal(got, expect)

    @pytest.mark.parametrize("n_side", [1, 2, 4, 8, 16, 64])
    def test_bijection(self, n_side):
        spec = GridSpec.from_nside(n_side)
        pix = np.arange(spec.n_pix)
        forward = nest2ring(spec, pix)
        assert np.array_equal(np.sort(forward), pix)
        np.testing.assert_array_equal(ring2nest(spec, forward), pix)
        np.testing.assert_array_equal(nest2ring(spec, ring2nest(spec, pix)), pix)

    def test_ring_order_is_north_to_south(self):
        # independent geometric property at a size where the brute-force
        # oracle is too slow: colatitude must be non-decreasing along the
        # ring index, strictly increasing between rings
        spec = GridSpec.from_nside(64)
        coord = pixel_center(spec, np.arange(spec.n_pix), scheme=Scheme.RING)
        starts = np.cumsum(np.concatenate([[0], ring_census(spec)[:-1]]))
        ring_colat = coord.colat[starts]
        assert np.all(np.diff(ring_colat) > 0)
        edges = np.append(starts, spec.n_pix)
        for a, b in zip(edges[:-1], edges[1:]):
            assert np.ptp(coord.colat[a:b]) < 1e-12
            assert np.all(np.diff(coord.azimuth[a:b]) > 0)

    def test_rejects_out_of_range(self):
        spec = GridSpec.from_nside(2)
        with pytest.raises(ValueError):
            nest2ring(spec, 48)
        with pytest.raises(ValueError):
            ring2nest(spec, -1)

    def test_cached_tables(self):
        spec = GridSpec.from_nside(4)
        n2r = nest2ring_table(spec)
        r2n = ring2nest_table(spec)
        np.testing.assert_array_equal(n2r[r2n], np.arange(spec.n_pix))
        assert n2r is nest2ring_table(spec)
        assert not n2r.flags.writeable


class TestPixelCenter:
    def test_first_ring_colatitude(self):
        # z = 1 - 1/3 for the four pixels around the north pole at n_side=1
        spec = GridSpec.from_nside(1)
        coord = pixel_center(spec, 0)
        assert coord.colat == pytest.approx(0.8410686705679303, abs=1e-15)
        assert coord.azimuth == pytest.approx(math.pi / 4, abs=1e-15)

    def test_base_pixels(self):
        spec = GridSpec.from_nside(1)
        coord = pixel_center(spec, np.arange(12))
        z = np.cos(coord.colat)
        np.testing.assert_allclose(z, [2 / 3] * 4 + [0.0] * 4 + [-2 / 3] * 4, atol=1e-15)
        expect_phi = np.array([1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7]) * math.pi / 4
        np.testing.assert_allclose(coord.azimuth, expect_phi, atol=1e-15)

    @pytest.mark.parametrize("n_side", [1, 2, 4, 8])
    def test_matches_planar_projection(self, n_side):
        spec = GridSpec.from_nside(n_side)
        coord = pixel_center(spec, np.arange(spec.n_pix), scheme=Scheme.NESTED)
        for p in range(spec.n_pix):
            z, phi = nested_pixel_center(n_side, p)
            assert math.cos(coord.colat[p]) == pytest.approx(z, abs=1e-12)
            assert coord.azimuth[p] % (2 * math.pi) == pytest.approx(
                phi % (2 * math.pi), abs=1e-12
            )

    def test_schemes_agree(self):
        spec = GridSpec.from_nside(8)
        pix = np.arange(spec.n_pix)
        nested = pixel_center(spec, pix, scheme=Scheme.NESTED)
        ring = pixel_center(spec, nest2ring(spec, pix), scheme=Scheme.RING)
        np.testing.assert_allclose(nested.colat, ring.colat, atol=0)
        np.testing.assert_allclose(nested.azimuth, ring.azimuth, atol=0)

    @pytest.mark.parametrize("n_side", [1, 2, 16, 64])
    def test_centers_balance(self, n_side):
        # the pixel set is antipodally symmetric, so centers sum to zero
        spec = GridSpec.from_nside(n_side)
        coord = pixel_center(spec, np.arange(spec.n_pix), scheme=Scheme.RING)
        sin_t = np.sin(coord.colat)
        xyz = np.stack(
            [sin_t * np.cos(coord.azimuth), sin_t * np.sin(coord.azimuth), np.cos(coord.colat)]
        )
        assert np.all(np.abs(xyz.mean(axis=1)) < 1e-12)


class TestCoordToPixel:
    def test_poles_and_equator(self):
        spec = GridSpec.from_nside(1)
        assert coord_to_pixel(spec, 0.0, 0.0) == 0
        assert coord_to_pixel(spec, math.pi, 0.0) == 8
        assert coord_to_pixel(spec, math.pi / 2, 0.0) == 4

    @pytest.mark.parametrize("n_side", [1, 2, 4, 8, 16])
    def test_center_maps_to_own_pixel(self, n_side):
        spec = GridSpec.from_nside(n_side)
        pix = np.arange(spec.n_pix)
        coord = pixel_center(spec, pix, scheme=Scheme.RING)
        np.testing.assert_array_equal(coord_to_pixel(spec, coord.colat, coord.azimuth), pix)

    def test_random_points_land_near_center(self):
        rng = np.random.default_rng(7)
        spec = GridSpec.from_nside(16)
        colat = np.arccos(rng.uniform(-1, 1, size=500))
        az = rng.uniform(0, 2 * math.pi, size=500)
        pix = coord_to_pixel(spec, colat, az)
        center = pixel_center(spec, pix, scheme=Scheme.RING)
        cos_d = np.cos(center.colat) * np.cos(colat) + np.sin(center.colat) * np.sin(
            colat
        ) * np.cos(center.azimuth - az)
        # a point is never further from its pixel center than ~2 pixel widths
        assert np.all(np.arccos(np.clip(cos_d, -1, 1)) < 2.5 * math.sqrt(spec.pixel_area))

    def test_azimuth_wraps(self):
        spec = GridSpec.from_nside(4)
        a = coord_to_pixel(spec, 1.0, 0.3)
        assert coord_to_pixel(spec, 1.0, 0.3 + 2 * math.pi) == a
        assert coord_to_pixel(spec, 1.0, 0.3 - 2 * math.pi) == a

    def test_rejects_bad_coords(self):
        spec = GridSpec.from_nside(4)
        with pytest.raises(ValueError):
            coord_to_pixel(spec, -0.1, 0.0)
        with pytest.raises(ValueError):
            coord_to_pixel(spec, math.nan, 0.0)


class TestHierarchy:
    def test_children_of_base_pixel(self):
        spec = GridSpec.from_nside(1)
        assert children(spec, 5).tolist() == [20, 21, 22, 23]

    def test_parent_inverts_children(self):
        spec = GridSpec.from_nside(8)
        fine = GridSpec.from_nside(16)
        pix = np.arange(spec.n_pix)
        kids = children(spec, pix)
        assert kids.shape == (spec.n_pix, 4)
        np.testing.assert_array_equal(parent(fine, kids.ravel()), np.repeat(pix, 4))

    def test_base_has_no_parent(self):
        with pytest.raises(ValueError):
            parent(GridSpec.from_nside(1), 0)

    @pytest.mark.parametrize("n_side", [2, 4, 8])
    def test_children_stay_near_parent(self, n_side):
        coarse = GridSpec.from_nside(n_side // 2)
        fine = GridSpec.from_nside(n_side)
        limit = 2.0 * math.sqrt(coarse.pixel_area)
        pc = pixel_center(coarse, np.arange(coarse.n_pix))
        fc = pixel_center(fine, np.arange(fine.n_pix))
        up = parent(fine, np.arange(fine.n_pix))
        cos_d = np.cos(pc.colat[up]) * np.cos(fc.colat) + np.sin(pc.colat[up]) * np.sin(
            fc.colat
        ) * np.cos(pc.azimuth[up] - fc.azimuth)
        assert np.all(np.arccos(np.clip(cos_d, -1, 1)) < limit)


class TestRingCensus:
    @pytest.mark.parametrize(
        "n_side,expect",
        [
            (1, [4, 4, 4]),
            (2, [4, 8, 8, 8, 8, 8, 4]),
            (4, [4, 8, 12, 16, 16, 16, 16, 16, 16, 16, 16, 16, 12, 8, 4]),
        ],
    )
    def test_small_grids(self, n_side, expect):
        assert ring_census(GridSpec.from_nside(n_side)).tolist() == expect

    @pytest.mark.parametrize("n_side", [1, 2, 4, 8, 16, 64])
    def test_accounts_for_every_pixel(self, n_side):
        spec = GridSpec.from_nside(n_side)
        census = ring_census(spec)
        assert census.sum() == spec.n_pix
        assert len(census) == 4 * n_side - 1
