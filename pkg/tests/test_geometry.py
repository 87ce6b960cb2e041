import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from landau_ids.geometry import (
    FiberPoint,
    SampledField,
    gelfand_section,
    magnetic_translate,
    make_grid,
    make_lattice,
    rational_flux_cell,
    theta_nodes,
)
from landau_ids.specfun import basis_e

B = 2 * math.pi


def test_lattice_examples():
    lat = make_lattice(B, 1, 1)
    assert (lat.L, lat.flux_per_cell, lat.degeneracy) == (1.5, 1, 9)
    lat = make_lattice(4 * math.pi, 1, 2)
    assert (lat.L, lat.flux_per_cell, lat.degeneracy) == (2.5, 2, 50)
    assert lat.degeneracy == pytest.approx(2 * lat.b * lat.L**2 / math.pi)


def test_noninteger_flux_rejected_with_value():
    with pytest.raises(ValueError, match="0.5"):
        make_lattice(math.pi, 1, 1)


@given(flux=st.integers(1, 6), a=st.sampled_from([0.5, 1.0, 1.5, 2.0]), n=st.integers(1, 6))
def test_degeneracy_is_integer(flux, a, n):
    lat = make_lattice(2 * math.pi * flux / a**2, a, n)
    d = 2 * lat.b * lat.L**2 / math.pi
    assert abs(d - round(d)) < 1e-9
    assert lat.degeneracy == round(d) == flux * (2 * n + 1) ** 2
    assert lat.dual_area == pytest.approx(math.pi**2 / lat.L**2, rel=1e-15)
    assert lat.cell.dual_area == pytest.approx(lat.dual_area, rel=1e-14)


def test_grid_invariants():
    for b, a, n in [(B, 1, 1), (B, 1, 2), (4 * math.pi, 1, 1), (2 * math.pi / 4, 2, 1)]:
        lat = make_lattice(b, a, n)
        g = make_grid(lat)
        assert g.weights.sum() == pytest.approx(lat.period**2, rel=1e-12)
        assert max(g.spacing) <= 1 / (4 * math.sqrt(b)) + 1e-12
        # unit shifts are index shifts
        k = a / g.spacing[0]
        assert abs(k - round(k)) < 1e-9


def test_theta_nodes_and_reduction():
    lat = make_lattice(B, 1, 1)
    nodes, w = theta_nodes(lat, 4)
    assert len(nodes) == 16 and w.sum() == pytest.approx(math.pi**2 / lat.L**2)
    half = math.pi / (2 * lat.L)
    assert np.all(np.abs(nodes) < half)
    fp = FiberPoint.reduce((half + 0.1, -3 * half), lat)
    assert fp.theta[0] == pytest.approx(-half + 0.1)
    assert fp.theta[1] == pytest.approx(half)
    assert -half < fp.theta[1] <= half


def _gauss(center=(0.0, 0.0)):
    c = np.array(center)
    return lambda p: np.exp(-np.sum((p - c) ** 2, axis=-1)) * (1 + 0.3j * (p[..., 0] - c[0]))


def _sample(f, half=12.0, h=0.1):
    n = int(round(2 * half / h))
    x = -half + (np.arange(n) + 0.5) * h
    return SampledField.from_function(f, x, x)


def test_translation_identity_and_unitarity():
    f = _sample(_gauss())
    same = magnetic_translate((0.0, 0.0), f, B)
    assert np.array_equal(same.values, f.values)
    g = magnetic_translate((2.0, -1.0), f, B)
    assert g.norm() == pytest.approx(f.norm(), rel=1e-10)


def test_period_translations_commute_under_integer_flux():
    lat = make_lattice(B, 1, 1)
    f = _sample(_gauss((0.4, -0.2)), half=10.5, h=0.1)
    g1, g2 = (lat.period, 0.0), (0.0, lat.period)
    ab = magnetic_translate(g1, magnetic_translate(g2, f, B), B)
    ba = magnetic_translate(g2, magnetic_translate(g1, f, B), B)
    assert np.max(np.abs(ab.values - ba.values)) < 1e-10
    # half-integer flux through the unit square: unit translations anticommute
    f2 = _sample(_gauss(), half=6.0, h=0.1)
    ab = magnetic_translate((1.0, 0), magnetic_translate((0, 1.0), f2, math.pi), math.pi)
    ba = magnetic_translate((0, 1.0), magnetic_translate((1.0, 0), f2, math.pi), math.pi)
    assert np.max(np.abs(ab.values + ba.values)) < 1e-10


def test_translation_outside_domain():
    f = _sample(_gauss(), half=1.0, h=0.1)
    with pytest.raises(ValueError):
        magnetic_translate((3.0, 0.0), f, B)


def test_callable_translation_matches_grid():
    f = _gauss((0.2, 0.1))
    s = _sample(f, half=5.0)
    y = (1.0, 0.5)
    grid_version = magnetic_translate(y, s, B)
    call_version = SampledField.from_function(magnetic_translate(y, f, B), grid_version.x1, grid_version.x2)
    assert np.max(np.abs(grid_version.values - call_version.values)) < 1e-13


def test_gelfand_section_tail_estimate_dominates_error():
    lat = make_lattice(B, 1, 1)
    pts = make_grid(lat).points
    for q in range(3):
        f = lambda p: basis_e(0, q, B, p)
        theta = (0.3, -0.5)
        for shells in (1, 2):
            approx, est = gelfand_section(f, theta, lat, pts, shells=shells, tol=np.inf)
            ref, _ = gelfand_section(f, theta, lat, pts, shells=6, tol=np.inf)
            assert est >= np.max(np.abs(approx - ref))
        _, est3 = gelfand_section(f, theta, lat, pts)
        assert est3 < 1e-8


def test_gelfand_section_of_zero_and_tolerance_error():
    lat = make_lattice(B, 1, 1)
    pts = make_grid(lat).points
    vals, est = gelfand_section(lambda p: np.zeros(p.shape[:-1]), (0, 0), lat, pts)
    assert np.all(vals == 0) and est == 0
    slow = lambda p: 1 / (1 + np.sum(p**2, axis=-1))
    with pytest.raises(ValueError):
        gelfand_section(slow, (0, 0), lat, pts)


def test_rational_flux_cell():
    cell = rational_flux_cell(2, 3)
    assert cell.degeneracy == 2 and cell.b == pytest.approx(4 * math.pi / 3)
    with pytest.raises(ValueError):
        rational_flux_cell(2, 4)
