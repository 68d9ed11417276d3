import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poroprecond.checks import face_closure_error
from poroprecond.grid import (WellSpec, build_grid, half_transmissibility, peaceman_radius,
                              transmissibility, well_index)


def test_indexing_natural_order():
    g = build_grid(4, 3, 2)
    ijk = g.cell_ijk
    assert g.cell_index(1, 2, 1) == 1 + 4 * (2 + 3 * 1)
    np.testing.assert_array_equal(g.cell_index(ijk[:, 0], ijk[:, 1], ijk[:, 2]),
                                  np.arange(g.n_cells))


def test_interior_faces_ordered_and_counted():
    g = build_grid(4, 3, 2)
    K, L = g.face_cells.T
    assert np.all(K < L)
    assert K.size == 3 * 3 * 2 + 4 * 2 * 2 + 4 * 3 * 1


def test_centroids_and_volume():
    g = build_grid(2, 2, 2, (4.0, 2.0, 1.0), origin=(1.0, 0.0, -1.0))
    np.testing.assert_allclose(g.cell_centroids[0], [2.0, 0.5, -0.75])
    assert g.cell_volume == pytest.approx(1.0)


@pytest.mark.parametrize("shape", [(1, 1, 1), (3, 2, 4), (5, 1, 1)])
def test_face_normals_close(shape):
    assert face_closure_error(build_grid(*shape, (3.0, 2.0, 7.0))) < 1e-12


def test_bad_grids_rejected():
    with pytest.raises(ValueError):
        build_grid(0, 1, 1)
    with pytest.raises(ValueError):
        build_grid(1, 1, 1, (1.0, -1.0, 1.0))
    with pytest.raises(ValueError):
        build_grid(1, 1, 1, mech_bc={"top": "free"})
    with pytest.raises(ValueError):
        build_grid(1, 1, 1, mech_bc={"zmax": "sliding"})


def test_half_transmissibility_examples():
    one = half_transmissibility(1.0, [0.5, 0, 0], [0, 0, 0], [1.0, 1.0, 1.0], [1, 0, 0])
    assert one == pytest.approx(2.0, rel=1e-14)
    assert half_transmissibility(1.0, [0.5, 0, 0], [0, 0, 0], [4.0] * 3, [1, 0, 0]) == \
        pytest.approx(8.0, rel=1e-14)
    assert half_transmissibility(1.0, [0.5, 0, 0], [0, 0, 0], [0.0] * 3, [1, 0, 0]) == 0.0
    with pytest.raises(ValueError):
        half_transmissibility(0.0, [0.5, 0, 0], [0, 0, 0], [1.0] * 3, [1, 0, 0])
    with pytest.raises(ValueError):
        half_transmissibility(1.0, [0, 0, 0], [0, 0, 0], [1.0] * 3, [1, 0, 0])


def test_transmissibility_harmonic():
    assert transmissibility(2.0, 2.0) == 1.0
    assert abs(transmissibility(2.0, 8.0) - 1.6) < 1e-15
    assert transmissibility(3.0, 0.0) == 0.0
    assert transmissibility(0.0, 0.0) == 0.0


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_transmissibility_symmetric_and_bounded(a, b):
    t = transmissibility(a, b)
    assert t == pytest.approx(transmissibility(b, a), rel=1e-14)
    assert t <= min(a, b) * (1 + 1e-14)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**31 - 1))
def test_transmissibility_scales_linearly(c, seed):
    g = build_grid(3, 2, 2, (3.0, 5.0, 2.0))
    perm = np.random.default_rng(seed).uniform(0.1, 10.0, (g.n_cells, 3))
    T, Tb = g.transmissibilities(perm)
    T2, Tb2 = g.transmissibilities(c * perm)
    np.testing.assert_allclose(T2, c * T, rtol=1e-13)
    np.testing.assert_allclose(Tb2, c * Tb, rtol=1e-13)


def test_well_index_hand_value():
    r = peaceman_radius((1.0, 1.0, 1.0), (1.0, 1.0))
    assert r == pytest.approx(0.28 * math.sqrt(2) / 2, rel=1e-14)
    wi = well_index((1.0, 1.0, 1.0), (1.0, 1.0, 1.0), 0.1524)
    assert abs(wi - 2 * math.pi / math.log(r / 0.1524)) < 1e-10
    assert wi == pytest.approx(24.008438569770142, abs=1e-10)


def test_well_index_limits():
    assert well_index((1.0, 1.0, 1.0), (1.0, 1.0, 1.0), 0.1524, math.inf) == 0.0
    with pytest.raises(ValueError, match="cell 7"):
        well_index((1.0, 1.0, 1.0), (1.0, 1.0, 1.0), 0.5, cell=7)
    with pytest.raises(ValueError):
        well_index((1.0, 1.0, 1.0), (1.0, 1.0, 1.0), 0.0)


@given(st.floats(0.1, 100.0), st.floats(1e-3, 1e3))
def test_peaceman_isotropic_radius(h, k):
    assert peaceman_radius((h, h, 1.0), (k, k)) == pytest.approx(0.28 * h * math.sqrt(2) / 2,
                                                                 rel=1e-12)


def test_well_spec_validation():
    g = build_grid(3, 3, 3)
    with pytest.raises(ValueError):
        WellSpec("w", [0], "observer", 1.0)
    w = WellSpec("w", [g.cell_index(0, 0, 0), g.cell_index(1, 0, 1)], "injector", 1.0)
    with pytest.raises(ValueError, match="vertical column"):
        w.validate(g)
    w = WellSpec("w", [g.cell_index(0, 0, 0), g.cell_index(0, 0, 2)], "injector", 1.0)
    with pytest.raises(ValueError, match="contiguous"):
        w.validate(g)
    ok = WellSpec("w", g.column(1, 1, 0, 2), "producer", -1.0)
    ok.validate(g)
    assert ok.reference_elevation(g) == pytest.approx(g.cell_centroids[g.cell_index(1, 1, 1), 2])
