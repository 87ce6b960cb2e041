"""Landau-level projection kernels, discretized fiber projections and reduced matrices."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .geometry import QuadratureGrid, as_cell, make_grid
from .specfun import _laguerre_coefficients, psi
from .tolerances import TOL


class ProjectionError(ValueError):
    """The discretized projection does not look like a rank-d orthogonal projection."""


def wedge(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x[..., 0] * y[..., 1] - x[..., 1] * y[..., 0]


def plane_kernel(q: int, b: float, x, xp):
    """Integral kernel of the level-q projection on the plane."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    d = x - xp
    xi = b * (d[..., 0] ** 2 + d[..., 1] ** 2) / 2
    return b / (2 * math.pi) * np.exp(-0.5j * b * wedge(x, xp)) * psi(q, xi)


def fiber_kernel(q: int, theta, x, xp, geom, shells: int | None = None) -> tuple[np.ndarray, float]:
    """Kernel of the level-q projection in fiber theta, evaluated pointwise.

    Returns the kernel and a bound on the omitted lattice terms (next shell).
    """
    cell = as_cell(geom)
    b = cell.b
    shells = TOL.gelfand_shells if shells is None else shells
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    th = np.asarray(theta, dtype=float)
    s = x + xp
    d = x - xp
    total = np.zeros(np.broadcast_shapes(x.shape, xp.shape)[:-1], dtype=complex)
    tail = 0.0
    for k1 in range(-shells - 1, shells + 2):
        for k2 in range(-shells - 1, shells + 2):
            alpha = np.array([k1 * cell.g1, k2 * cell.g2])
            da = d + alpha
            xi = b * (da[..., 0] ** 2 + da[..., 1] ** 2) / 2
            term = psi(q, xi) * np.exp(
                -1j * (alpha @ th) + 0.5j * b * wedge(s, alpha) + 0.5j * b * alpha[0] * alpha[1]
            )
            if max(abs(k1), abs(k2)) > shells:
                tail += float(np.max(np.abs(term), initial=0.0))
            else:
                total = total + term
    pref = b / (2 * math.pi) * np.exp(1j * ((xp - x) @ th) - 0.5j * b * wedge(x, xp))
    return pref * total, b / (2 * math.pi) * tail


def _psi_separable_terms(q: int, b: float) -> list[tuple[int, int, float]]:
    """Psi_q(b(d1^2+d2^2)/2) = sum c d1^(2m) d2^(2k) exp(-b d1^2/4) exp(-b d2^2/4)."""
    terms: dict[tuple[int, int], float] = {}
    for l, c in _laguerre_coefficients(q, 0):
        for m in range(l + 1):
            key = (m, l - m)
            terms[key] = terms.get(key, 0.0) + c * (b / 2) ** l * math.comb(l, m)
    return [(m, k, c) for (m, k), c in terms.items() if c != 0.0]


def kernel_matrix(q: int, theta, geom, grid: QuadratureGrid, tol: float | None = None) -> np.ndarray:
    """Weighted grid matrix w * K(x_i, x_j) of the fiber projection, shape (N, N).

    Built from separable per-axis factors, one GEMM over (alpha, term) pairs, then
    the non-separable gauge phase.  Lattice terms whose largest entry falls below
    tol are skipped.
    """
    cell = as_cell(geom)
    b = cell.b
    tol = TOL.kernel_tail if tol is None else tol
    th = np.asarray(theta, dtype=float)
    x1, x2 = grid.x1, grid.x2
    n1, n2 = len(x1), len(x2)
    w = grid.weight
    D1 = x1[:, None] - x1[None, :]
    D2 = x2[:, None] - x2[None, :]
    S1 = x1[:, None] + x1[None, :]
    S2 = x2[:, None] + x2[None, :]
    bloch1 = np.exp(1j * th[0] * (x1[None, :] - x1[:, None]))
    bloch2 = np.exp(1j * th[1] * (x2[None, :] - x2[:, None]))
    sep = _psi_separable_terms(q, b)
    pref = w * b / (2 * math.pi)
    max_k1 = int(math.ceil(1 + 8 / (math.sqrt(b) * cell.g1)))
    max_k2 = int(math.ceil(1 + 8 / (math.sqrt(b) * cell.g2)))
    A_list, B_list = [], []
    for k1 in range(-max_k1, max_k1 + 1):
        a1 = k1 * cell.g1
        d1 = D1 + a1
        g1 = np.exp(-b * d1**2 / 4)
        for k2 in range(-max_k2, max_k2 + 1):
            a2 = k2 * cell.g2
            d2 = D2 + a2
            g2 = np.exp(-b * d2**2 / 4)
            scalar = pref * np.exp(-1j * (th[0] * a1 + th[1] * a2) + 0.5j * b * a1 * a2)
            ph1 = bloch1 * np.exp(0.5j * b * S1 * a2)
            ph2 = bloch2 * np.exp(-0.5j * b * S2 * a1)
            for m, k, c in sep:
                A = d1 ** (2 * m) * g1
                B = d2 ** (2 * k) * g2
                if abs(c * scalar) * np.abs(A).max() * np.abs(B).max() < tol:
                    continue
                A_list.append((c * scalar) * (A * ph1))
                B_list.append(B * ph2)
    if not A_list:
        raise ProjectionError("all lattice terms fell below tolerance")
    A = np.stack(A_list).reshape(len(A_list), n1 * n1)
    B = np.stack(B_list).reshape(len(B_list), n2 * n2)
    K4 = (A.T @ B).reshape(n1, n1, n2, n2).transpose(0, 2, 1, 3)
    K4 = np.ascontiguousarray(K4)
    # gauge phase exp(-i b/2 (x1 x2' - x2 x1')) couples the two axes
    K4 *= np.exp(-0.5j * b * x1[:, None, None, None] * x2[None, None, None, :])
    K4 *= np.exp(0.5j * b * x2[None, :, None, None] * x1[None, None, :, None])
    N = n1 * n2
    K = K4.reshape(N, N)
    K += K.conj().T
    K *= 0.5
    return K


@dataclass
class FiberProjection:
    """Range of the discretized level-q projection at quasi-momentum theta.

    basis holds d columns of grid values, orthonormal for the weighted inner product.
    eigenvalues are those resolved explicitly; every other eigenvalue has modulus
    at most rest_bound.
    """

    q: int
    theta: np.ndarray
    grid: QuadratureGrid
    basis: np.ndarray
    eigenvalues: np.ndarray
    rest_bound: float
    trace: float
    matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def idempotency_defect(self) -> float:
        """Operator norm of P^2 - P, from the resolved eigenvalues and the rest bound."""
        lam = self.eigenvalues
        rb = self.rest_bound
        return float(max(np.max(np.abs(lam * lam - lam), initial=0.0), rb + rb * rb))


def _check_spectrum(lam: np.ndarray, rest: float, d: int, tol: float):
    above = int(np.sum(lam > 0.5))
    if rest >= 0.5:
        raise ProjectionError(f"unresolved spectral weight {rest:.3g}: rank cannot be certified")
    if above != d:
        raise ProjectionError(f"{above} eigenvalues exceed 1/2, expected the degeneracy {d}")
    guard = (lam > TOL.guard_low) & (lam < TOL.guard_high)
    worst = max(np.max(np.abs(lam * lam - lam), initial=0.0), rest + rest * rest)
    if np.any(guard) or worst > tol:
        raise ProjectionError(
            f"eigenvalues not clustered at 0 and 1 (defect {worst:.3g}); grid too coarse"
        )


def build_fiber_projection(q: int, theta, geom, grid: QuadratureGrid | None = None,
                           method: str = "randomized", oversample: int = 10,
                           keep_matrix: bool = False, tol: float | None = None) -> FiberProjection:
    """Discretize the level-q fiber projection and extract its range.

    method="dense" diagonalizes the full weighted kernel.  method="randomized"
    projects onto a (d + oversample)-dimensional Krylov-type subspace; the
    remaining eigenvalues are bounded through the Frobenius norm, which equals
    the sum of all squared eigenvalues.
    """
    cell = as_cell(geom)
    grid = make_grid(geom) if grid is None else grid
    tol = TOL.proj_idempotency if tol is None else tol
    h = min(grid.spacing)
    if h > 1 / (4 * math.sqrt(cell.b)) * (1 + 1e-9):
        raise ProjectionError(f"grid spacing {h:.4g} exceeds a quarter magnetic length")
    d = cell.degeneracy
    K = kernel_matrix(q, theta, cell, grid)
    trace = float(np.real(np.trace(K)))
    if method == "dense":
        lam, U = sla.eigh(K)
        order = np.argsort(lam)[::-1]
        lam, U = lam[order], U[:, order]
        top = lam > 0.5
        resolved = lam
        rest = 0.0
    elif method == "randomized":
        rng = np.random.default_rng(12345)
        s = min(d + oversample, K.shape[0])
        Y = K @ (rng.standard_normal((K.shape[0], s)) + 1j * rng.standard_normal((K.shape[0], s)))
        Y = K @ Y
        Q, _ = np.linalg.qr(Y)
        T = Q.conj().T @ (K @ Q)
        lam, V = np.linalg.eigh(0.5 * (T + T.conj().T))
        order = np.argsort(lam)[::-1]
        lam, V = lam[order], V[:, order]
        U = Q @ V
        top = lam > 0.5
        frob2 = float(np.vdot(K, K).real)
        rest = math.sqrt(max(frob2 - float(np.sum(lam**2)), 0.0))
        resolved = lam
    else:
        raise ValueError(f"unknown method {method!r}")
    _check_spectrum(resolved, rest, d, tol)
    basis = U[:, top] / math.sqrt(grid.weight)
    return FiberProjection(
        q=q, theta=np.asarray(theta, dtype=float), grid=grid, basis=basis,
        eigenvalues=resolved, rest_bound=rest, trace=trace,
        matrix=K if keep_matrix else None,
    )


def grid_values(V, grid: QuadratureGrid) -> np.ndarray:
    if callable(V):
        return np.asarray(V(grid.points), dtype=float).ravel()
    v = np.asarray(V, dtype=float)
    return np.full(grid.size, float(v)) if v.ndim == 0 else v.ravel()


@dataclass(frozen=True)
class ReducedMatrix:
    theta: np.ndarray
    q: int
    entries: np.ndarray

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)


def reduced_matrix(proj: FiberProjection, V) -> ReducedMatrix:
    """Compression of the multiplication operator V to the projection's range."""
    v = grid_values(V, proj.grid) * proj.grid.weight
    B = proj.basis
    r = B.conj().T @ (v[:, None] * B)
    return ReducedMatrix(proj.theta, proj.q, 0.5 * (r + r.conj().T))


def eigen_count(matrix_or_eigs, E):
    """Number of eigenvalues strictly below E (array E gives an array of counts)."""
    a = np.asarray(matrix_or_eigs)
    lam = np.linalg.eigvalsh(a) if a.ndim == 2 else np.sort(a)
    counts = np.searchsorted(lam, np.asarray(E, dtype=float), side="left")
    return int(counts) if np.ndim(counts) == 0 else counts


def trust_threshold(b: float, q_max: int, M: float) -> float:
    """Energies below 2b*q_max - M are counted correctly by the level-truncated fiber operator."""
    return 2 * b * q_max - M


def fiber_hamiltonian(theta, geom, V, q_max: int, grid: QuadratureGrid | None = None,
                      projections: list[FiberProjection] | None = None,
                      energies=None) -> np.ndarray:
    """Free fiber operator plus V, compressed to Landau levels 0..q_max.

    Off-level blocks B_q* V B_q' are kept.  With energies given, warns if any lies
    beyond the truncation trust threshold.
    """
    cell = as_cell(geom)
    if q_max < 1:
        raise ValueError("q_max must be at least 1")
    if projections is None:
        grid = make_grid(geom) if grid is None else grid
        projections = [build_fiber_projection(q, theta, cell, grid) for q in range(q_max + 1)]
    projections = projections[: q_max + 1]
    grid = projections[0].grid
    B = np.concatenate([p.basis for p in projections], axis=1)
    w = grid.weight
    gram = w * (B.conj().T @ B)
    defect = float(np.max(np.abs(gram - np.eye(B.shape[1]))))
    if defect > TOL.gram_defect:
        warnings.warn(f"level bases not jointly orthonormal (defect {defect:.2e})", stacklevel=2)
    v = grid_values(V, grid)
    H = B.conj().T @ ((w * v)[:, None] * B)
    H = 0.5 * (H + H.conj().T)
    levels = np.concatenate([np.full(p.rank, 2 * cell.b * p.q) for p in projections])
    H[np.diag_indices_from(H)] += levels
    if energies is not None:
        limit = trust_threshold(cell.b, q_max, float(np.max(v)))
        if np.max(energies) >= limit:
            warnings.warn(
                f"energies up to {np.max(energies):.4g} exceed the truncation trust threshold {limit:.4g}",
                stacklevel=2,
            )
    return H


def dump_spectrum_csv(proj: FiberProjection, path) -> None:
    """Diagnostic table of the resolved projection eigenvalues."""
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "eigenvalue"])
        for i, lam in enumerate(proj.eigenvalues):
            wr.writerow([i, repr(float(lam))])
        wr.writerow(["rest_bound", repr(proj.rest_bound)])
