import math

import numpy as np
import pytest

from landau_ids.disorder import AlloyField, DisorderModel, Exponential, Window, periodize, sample_couplings, sup_V
from landau_ids.geometry import QuadratureGrid, gelfand_section, make_grid, make_lattice, random_thetas
from landau_ids.projection import (
    ProjectionError,
    build_fiber_projection,
    dump_spectrum_csv,
    eigen_count,
    fiber_hamiltonian,
    fiber_kernel,
    kernel_matrix,
    plane_kernel,
    reduced_matrix,
)

B = 2 * math.pi
LAT = make_lattice(B, 1, 1)
GRID = make_grid(LAT)


@pytest.fixture(scope="module")
def alloy():
    window = Window.around(LAT, 6)
    field = AlloyField(Exponential(2.0), sample_couplings(DisorderModel(1.0), window, seed=7), window)
    return periodize(field, LAT)


def test_plane_kernel_basics():
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-2, 2, (2, 20, 2))
    for q in range(4):
        assert np.allclose(plane_kernel(q, B, x, x), B / (2 * math.pi))
        assert np.allclose(plane_kernel(q, B, x, y), np.conj(plane_kernel(q, B, y, x)))


def test_plane_kernel_idempotent_by_quadrature():
    b = 1.0
    R = 14 / math.sqrt(b)
    r, wr = np.polynomial.legendre.leggauss(200)
    r = R * (r + 1) / 2
    wr = wr * R / 2
    phi = 2 * math.pi * np.arange(128) / 128
    rr, pp = np.meshgrid(r, phi, indexing="ij")
    pts = np.stack([rr * np.cos(pp), rr * np.sin(pp)], axis=-1).reshape(-1, 2)
    w = ((wr[:, None] * rr) * (2 * math.pi / 128)).ravel()
    x = np.array([0.4, -0.3])
    for q in range(3):
        for xp in (np.array([0.4, -0.3]), np.array([1.1, 0.5]), np.array([-0.8, 1.2])):
            lhs = np.sum(w * plane_kernel(q, b, x, pts) * plane_kernel(q, b, pts, xp))
            assert abs(lhs - plane_kernel(q, b, x, xp)) < 1e-4


def test_fiber_kernel_single_term_is_plane_kernel():
    rng = np.random.default_rng(2)
    x, y = rng.uniform(-1.5, 1.5, (2, 30, 2))
    for q in range(3):
        val, _ = fiber_kernel(q, (0.0, 0.0), x, y, LAT, shells=0)
        np.testing.assert_allclose(val, plane_kernel(q, B, x, y), atol=1e-14)


def test_fiber_kernel_hermitian_trace_and_matrix():
    pts = GRID.points
    theta = (0.4, -0.7)
    for q in range(3):
        K = kernel_matrix(q, theta, LAT, GRID)
        assert np.max(np.abs(K - K.conj().T)) < 1e-10
        diag, tail = fiber_kernel(q, theta, pts, pts, LAT)
        assert tail < 1e-12
        assert abs(GRID.weight * np.sum(diag).real - LAT.degeneracy) <= 0.02 * LAT.degeneracy
        idx = np.random.default_rng(q).integers(0, GRID.size, (200, 2))
        ref, _ = fiber_kernel(q, theta, pts[idx[:, 0]], pts[idx[:, 1]], LAT)
        np.testing.assert_allclose(K[idx[:, 0], idx[:, 1]], GRID.weight * ref, atol=1e-13)


def test_rank_equals_degeneracy_for_many_theta():
    thetas = random_thetas(LAT, 16, np.random.default_rng(5))
    for q in (0, 1):
        for th in thetas:
            p = build_fiber_projection(q, th, LAT, GRID)
            assert p.rank == 9
            assert p.idempotency_defect <= 0.05


def test_dense_and_randomized_ranges_agree():
    th = (0.2, 0.9)
    a = build_fiber_projection(2, th, LAT, GRID, method="dense")
    b = build_fiber_projection(2, th, LAT, GRID, method="randomized")
    w = GRID.weight
    Pa = w * a.basis @ a.basis.conj().T
    Pb = w * b.basis @ b.basis.conj().T
    assert np.max(np.abs(Pa - Pb)) < 1e-8
    assert a.idempotency_defect < 1e-10


def test_coarse_grid_rejected():
    coarse = QuadratureGrid(np.linspace(-1.4, 1.4, 12), np.linspace(-1.4, 1.4, 12))
    with pytest.raises(ProjectionError):
        build_fiber_projection(0, (0, 0), LAT, coarse)


def test_spectrum_checks():
    from landau_ids.projection import _check_spectrum

    good = np.r_[np.ones(9), np.zeros(5)]
    _check_spectrum(good, 1e-9, 9, 0.05)
    with pytest.raises(ProjectionError, match="degeneracy"):
        _check_spectrum(good, 1e-9, 8, 0.05)
    with pytest.raises(ProjectionError, match="coarse"):
        _check_spectrum(np.r_[np.ones(9), 0.3, np.zeros(4)], 1e-9, 9, 0.05)
    with pytest.raises(ProjectionError):
        _check_spectrum(good, 0.6, 9, 0.05)


def test_trial_section_lies_in_range():
    from landau_ids.specfun import basis_e

    for q in range(3):
        for th in [(0.0, 0.0), (0.5, -0.3)]:
            p = build_fiber_projection(q, th, LAT, GRID)
            phi, _ = gelfand_section(lambda x: basis_e(0, q, B, x), th, LAT, GRID.points)
            coef = GRID.weight * p.basis.conj().T @ phi
            resid = phi - p.basis @ coef
            assert np.linalg.norm(resid) < 1e-8 * np.linalg.norm(phi)


def test_reduced_matrix_constant_potentials():
    p = build_fiber_projection(1, (0.3, 0.3), LAT, GRID)
    assert np.allclose(reduced_matrix(p, 0.0).entries, 0)
    assert np.allclose(reduced_matrix(p, 0.37).entries, 0.37 * np.eye(9), atol=1e-12)


def test_reduced_matrix_spectrum_in_range(alloy):
    M = sup_V(Exponential(2.0), DisorderModel(1.0))
    for q in range(3):
        p = build_fiber_projection(q, (0.1, -0.6), LAT, GRID)
        r = reduced_matrix(p, alloy)
        assert np.allclose(r.entries, r.entries.conj().T)
        lam = r.eigenvalues()
        assert lam.min() >= -1e-12 and lam.max() <= M * (1 + 1e-10)


def test_eigen_count_examples():
    assert eigen_count(np.zeros((4, 4)), 0.1) == 4
    assert eigen_count(np.zeros((4, 4)), 0.0) == 0
    assert eigen_count(np.diag([0.3, 0.7]), 0.5) == 1
    assert list(eigen_count(np.diag([0.3, 0.7]), [0.0, 0.3, 0.31, 1.0])) == [0, 0, 1, 2]


def test_covariance_under_unit_translation(alloy):
    v = alloy(GRID.points).reshape(GRID.shape)
    k = int(round(1 / GRID.spacing[0]))
    for q in range(3):
        p = build_fiber_projection(q, (0.25, -0.4), LAT, GRID)
        ref = reduced_matrix(p, v.ravel()).eigenvalues()
        for s in [(k, 0), (0, -k), (2 * k, k)]:
            shifted = np.roll(v, shift=(-s[0], -s[1]), axis=(0, 1)).ravel()
            got = reduced_matrix(p, shifted).eigenvalues()
            assert np.max(np.abs(got - ref)) < 1e-8


def test_lowest_eigenvalue_monotone_in_potential(alloy):
    rng = np.random.default_rng(4)
    v = alloy(GRID.points)
    p = build_fiber_projection(0, (0.0, 0.0), LAT, GRID)
    lam0 = reduced_matrix(p, v).eigenvalues()
    assert lam0[0] >= -1e-12
    for _ in range(5):
        bump = v + rng.uniform(0, 0.2, v.shape)
        lam1 = reduced_matrix(p, bump).eigenvalues()
        assert np.all(lam1 >= lam0 - 1e-12)


def test_fiber_hamiltonian_free_and_monotone(alloy):
    projs = [build_fiber_projection(q, (0.1, 0.2), LAT, GRID) for q in range(3)]
    H = fiber_hamiltonian((0.1, 0.2), LAT, 0.0, 2, projections=projs)
    assert np.allclose(H, np.diag(np.repeat([0.0, 2 * B, 4 * B], 9)), atol=1e-10)
    assert eigen_count(H, 2 * B - 1e-3) == 9
    Hv = fiber_hamiltonian((0.1, 0.2), LAT, alloy, 2, projections=projs)
    E = np.linspace(0, 4 * B, 50)
    counts = eigen_count(Hv, E)
    assert np.all(np.diff(counts) >= 0)
    with pytest.warns(UserWarning, match="trust"):
        fiber_hamiltonian((0.1, 0.2), LAT, alloy, 2, projections=projs, energies=[4 * B])


def test_spectrum_dump(tmp_path):
    p = build_fiber_projection(0, (0, 0), LAT, GRID)
    out = tmp_path / "spectrum.csv"
    dump_spectrum_csv(p, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "index,eigenvalue" and lines[-1].startswith("rest_bound")
