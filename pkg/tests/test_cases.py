import dataclasses
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poroprecond.cases import (CaseParseError, OutputWriter, RasterError, build_case,
                               generate_staircase, load_raster, lognormal_field, parse_case,
                               parse_case_text, read_stats, refine_case, run_case,
                               serialize_case, staircase_layout, summarize, write_case,
                               write_raster, write_stats, write_staircase)
from poroprecond.cases.output import read_vtk_cell_scalars, write_vtk
from poroprecond.cases.raster import read_regions, write_int_raster

MINIMAL = """
[grid]
nx = 2
ny = 2
nz = 2
extent = 10 10 10 m

[region.rock]
perm = 100 mD
porosity = 0.2
youngs_modulus = 5000 MPa
poisson = 0.25

[fluid.wetting]
density = 1035 kg/m3
compressibility = 4.34e-4 1/MPa
viscosity = 0.3 cP

[fluid.nonwetting]
density = 863 kg/m3
compressibility = 1.98e-4 1/MPa
viscosity = 3 cP

[initial]
datum_pressure = 20 MPa
"""


def dn(case):
    """Total unknowns of a case: 3 per free node component plus 2 per cell."""
    s = build_case(case)
    return s.model.n_u + 2 * s.model.n_cells


def test_minimal_case_defaults():
    c = parse_case_text(MINIMAL)
    assert c.regions[0].perm == (100.0, 100.0, 100.0)
    assert c.time.end == 100.0 and c.linear.tol == 1e-6
    assert c.mechanics.bc["zmax"] == "free" and c.mechanics.bc["xmin"] == "roller"
    assert c.precond.cpr_mode == "quasi"


def test_serialize_round_trip(tiny_case):
    text = serialize_case(tiny_case)
    again = parse_case_text(text)
    assert again == tiny_case
    assert serialize_case(again) == text


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 1e4), st.floats(0.01, 0.49), st.integers(1, 50),
       st.sampled_from(["quasi", "true", "rsl"]))
def test_round_trip_property(perm, nu, nz, mode):
    c = parse_case_text(MINIMAL)
    c.regions[0].perm = (perm, perm, 2 * perm)
    c.regions[0].poisson = nu
    c.grid.nz = nz
    c.precond.cpr_mode = mode
    assert parse_case_text(serialize_case(c)) == c


def test_units_in_input_are_converted():
    text = (MINIMAL.replace("100 mD", "0.1 D").replace("20 MPa", "200 bar")
            .replace("0.3 cP", "0.0003 Pa.s").replace("1035 kg/m3", "1.035 g/cm3")
            .replace("4.34e-4 1/MPa", "4.34e-10 1/Pa"))
    a, b = parse_case_text(MINIMAL), parse_case_text(text)
    assert b.regions[0].perm[0] == pytest.approx(a.regions[0].perm[0], rel=1e-15)
    assert b.initial.datum_pressure == pytest.approx(20.0, rel=1e-15)
    assert b.wetting.viscosity == pytest.approx(0.3, rel=1e-15)
    assert b.wetting.density == pytest.approx(1035.0, rel=1e-15)
    assert b.wetting.compressibility == pytest.approx(4.34e-4, rel=1e-15)


def test_input_units_do_not_change_iteration_counts():
    """The same staircase written in bar, D, Pa.s, g/cm3 and hours runs identically."""
    case, _ = generate_staircase(0, 4)
    case.time.end = 2.0
    text = serialize_case(case)
    alt = (text.replace("20.0 MPa", "200.0 bar").replace("1000.0 1000.0 1000.0 mD", "1 1 1 D")
           .replace("0.3 cP", "0.0003 Pa.s").replace("3.0 cP", "0.003 Pa.s")
           .replace("1035.0 kg/m3", "1.035 g/cm3").replace("ramp = 1.0 day", "ramp = 24 hour")
           .replace("end = 2.0 day", "end = 48 hour"))
    assert alt.count("bar") and alt.count("hour") == 3
    runs = []
    for t in (text, alt):
        c = parse_case_text(t)
        c.region_override = case.region_override
        runs.append(run_case(build_case(c)))
    a, b = runs
    assert [r.linear_iterations for r in a.records] == [r.linear_iterations for r in b.records]
    assert [r.newton_iterations for r in a.records] == [r.newton_iterations for r in b.records]
    np.testing.assert_allclose(a.state.p, b.state.p, rtol=1e-12)


def test_bundled_case_matches_generator():
    path = resources.files("poroprecond") / "data" / "staircase_small.case"
    c = parse_case(path)
    ref, regions = generate_staircase(0, 10)
    assert dataclasses.replace(c, name=ref.name, fields=ref.fields) == ref
    from poroprecond.cases.model import cell_regions
    np.testing.assert_array_equal(cell_regions(c), regions)


def _line_of(text, marker):
    return next(n for n, ln in enumerate(text.splitlines(), 1) if marker in ln)


@pytest.mark.parametrize("text, marker, msg", [
    ("", None, "missing required"),
    (MINIMAL.replace("poisson = 0.25", "poisson = 0.25\ncolour = red"), "colour", "unknown key"),
    (MINIMAL.replace("[initial]\ndatum_pressure = 20 MPa", ""), None, "[initial]"),
    (MINIMAL.replace("100 mD", "100 furlong"), "furlong", "expected 1 or 3"),
    (MINIMAL.replace("0.3 cP", "0.3 MPa"), "0.3 MPa", "expected viscosity"),
    (MINIMAL.replace("nx = 2", "nx = 2 m"), "nx =", "takes no unit"),
    (MINIMAL.replace("nx = 2", "nx = two"), "nx =", "cannot read"),
    (MINIMAL + "\n[grid]\n", None, "duplicate section"),
    (MINIMAL.replace("[fluid.wetting]", "[fluid.water]"), "fluid.water", "fluid sections"),
    ("x = 1\n" + MINIMAL, "x = 1", "outside"),
    (MINIMAL + "[well.a]\ni = 0\nj = 0\nrole = injector\n", "[well.a]", "delta_bhp"),
    (MINIMAL.replace("poisson = 0.25", "poisson = 0.7"), None, "poisson"),
    (MINIMAL.replace("nx = 2", "nx = 0"), None, "grid counts"),
])
def test_parse_errors(text, marker, msg):
    with pytest.raises(CaseParseError) as e:
        parse_case_text(text)
    assert msg in str(e.value)
    if marker:
        assert e.value.line == _line_of(text, marker)
    if msg == "duplicate section":
        assert e.value.line == len(text.splitlines())


def test_missing_file(tmp_path):
    with pytest.raises(CaseParseError):
        parse_case(tmp_path / "nope.case")


def test_staircase_layout_level0():
    regions, inj, prod = staircase_layout(10)
    cube = regions.reshape(10, 10, 10)
    # four stacked channel segments two layers thick, sealed above and below
    layers = [np.count_nonzero(cube[k]) for k in range(10)]
    assert layers == [0, 12, 12, 12, 12, 12, 12, 8, 8, 0]
    assert np.count_nonzero(cube) == 88
    for col in (inj, prod):
        i, j, k0, k1 = col
        assert np.all(cube[k0:k1 + 1, j, i] == 1)
    # the channel is one connected body
    from scipy import ndimage
    _, ncomp = ndimage.label(cube)
    assert ncomp == 1
    with pytest.raises(ValueError):
        staircase_layout(2)


def test_staircase_sizes():
    assert dn(generate_staircase(0, 10)[0]) == 5388
    assert dn(generate_staircase(1, 10)[0]) == 41578


def test_staircase_refinement_is_nested():
    c0, r0 = generate_staircase(0, 5)
    c1, r1 = generate_staircase(1, 5)
    np.testing.assert_array_equal(r1.reshape(10, 10, 10)[::2, ::2, ::2], r0.reshape(5, 5, 5))
    w0, w1 = c0.wells[0], c1.wells[0]
    assert (w1.i, w1.j, w1.k0, w1.k1) == (2 * w0.i, 2 * w0.j, 2 * w0.k0, 2 * w0.k1 + 1)
    r = refine_case(c0, 1)
    np.testing.assert_array_equal(r.region_override, r1)
    assert (r.grid.nx, r.grid.ny, r.grid.nz) == (10, 10, 10)
    assert [(w.i, w.j, w.k0, w.k1) for w in r.wells] == \
        [(w.i, w.j, w.k0, w.k1) for w in c1.wells]


def test_write_staircase_round_trip(tmp_path):
    path = write_staircase(tmp_path, 0, 4)
    c = parse_case(path)
    ref, regions = generate_staircase(0, 4)
    from poroprecond.cases.model import cell_regions
    np.testing.assert_array_equal(cell_regions(c), regions)


def test_refine_case_with_rasters(tmp_path):
    c = parse_case_text(MINIMAL, base_dir=str(tmp_path))
    perm = np.arange(8.0) + 1.0
    write_raster(tmp_path / "perm.txt", perm, per_line=5)
    c.fields.perm = "perm.txt"
    r = refine_case(c, 1)
    s = build_case(r)
    assert s.grid.n_cells == 64
    fine = r.perm_override.reshape(4, 4, 4, 3)
    np.testing.assert_array_equal(fine[::2, ::2, ::2, 0].ravel(), perm)
    np.testing.assert_array_equal(fine[1::2, 1::2, 1::2, 2].ravel(), perm)
    assert refine_case(c, 0) is c


def test_raster_layout_threshold_and_crop(tmp_path):
    p = tmp_path / "r.txt"
    vals = np.arange(24.0)
    # ragged lines and comments are fine
    p.write_text("# header\n0 1 2\n3 4 5 6 7\n" + "\n".join(str(v) for v in vals[8:]) + "\n")
    np.testing.assert_array_equal(load_raster(p, 2, 3, 4), vals)
    np.testing.assert_array_equal(load_raster(p, 2, 3, 4, threshold=5.0), np.maximum(vals, 5.0))
    sub = load_raster(p, 1, 2, 2, source_shape=(2, 3, 4), crop_offset=(1, 1, 2))
    cube = vals.reshape(4, 3, 2)
    np.testing.assert_array_equal(sub, cube[2:4, 1:3, 1:2].ravel())


def test_raster_three_components(tmp_path):
    v = np.arange(12.0).reshape(4, 3, order="F")
    write_raster(tmp_path / "k.txt", v)
    np.testing.assert_array_equal(load_raster(tmp_path / "k.txt", 2, 2, 1, components=3), v)


@pytest.mark.parametrize("content, kw", [("1 2 3", {}), ("1 2 x 4 5 6 7 8", {}),
                                         ("1 2 3 4 5 6 7 8",
                                          dict(source_shape=(2, 2, 2), crop_offset=(1, 0, 0)))])
def test_raster_errors(tmp_path, content, kw):
    p = tmp_path / "r.txt"
    p.write_text(content)
    with pytest.raises(RasterError):
        load_raster(p, 2, 2, 2, **kw)
    with pytest.raises(RasterError):
        load_raster(tmp_path / "absent.txt", 2, 2, 2)


def test_region_raster_rejects_fractions(tmp_path):
    write_raster(tmp_path / "r.txt", [0, 1, 0.5, 1, 0, 1, 0, 1])
    with pytest.raises(RasterError):
        read_regions(tmp_path / "r.txt", 2, 2, 2)
    write_int_raster(tmp_path / "ok.txt", [0, 1] * 4)
    np.testing.assert_array_equal(read_regions(tmp_path / "ok.txt", 2, 2, 2), [0, 1] * 4)


def test_lognormal_field():
    a = lognormal_field(6, 5, 4, 1.0, 0.5, seed=3)
    np.testing.assert_array_equal(a, lognormal_field(6, 5, 4, 1.0, 0.5, seed=3))
    assert np.all(a > 0)
    assert np.log(a).mean() == pytest.approx(1.0)
    assert np.log(a).std() == pytest.approx(0.5)


def test_outputs_and_stats(tmp_path, tiny_case):
    tiny_case = parse_case_text(serialize_case(tiny_case))
    tiny_case.region_override = generate_staircase(0, 3)[1]
    tiny_case.time.end = 0.5
    setup = build_case(tiny_case)
    writer = OutputWriter(tmp_path / "vtk", setup.model, stride=2, name="t")
    res = run_case(setup, callback=writer)
    steps = [r.step for r in res.records if r.converged]
    assert [f.name for f in writer.files] == [f"t_{k:05d}.vtk" for k in steps if k % 2 == 0]
    write_vtk(tmp_path / "final.vtk", setup.grid, res.state, setup.model)
    back = read_vtk_cell_scalars(tmp_path / "final.vtk")
    np.testing.assert_array_equal(back["pressure"], res.state.p)
    np.testing.assert_array_equal(back["saturation"], res.state.s)
    summary = write_stats(tmp_path / "stats.csv", res.records, {"case": "tiny"})
    rows, read = read_stats(tmp_path / "stats.csv")
    assert read == pytest.approx(summary, rel=1e-12)
    acc = [r for r in rows if r["converged"] == "1"]
    newton = sum(int(r["newton_iterations"]) for r in acc)
    gm = sum(int(r["gmres_total"]) for r in acc)
    assert read["gmres_per_newton"] == pytest.approx(gm / newton, rel=1e-12)
    assert read["newton_per_step"] == pytest.approx(newton / len(acc), rel=1e-12)
    assert summarize(res.records)["accepted_steps"] == len(acc)


def test_write_case_file(tmp_path, tiny_case):
    write_case(tiny_case, tmp_path / "c.case")
    assert parse_case(tmp_path / "c.case") == tiny_case
