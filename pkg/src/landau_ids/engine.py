"""Monte Carlo reduced IDS, periodic IDS, sandwich and trial-function probes, band sweeps."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .disorder import (
    DisorderModel,
    OneSitePotential,
    Window,
    check_h4,
    coupling_matrix,
    cutoff_radius,
    potential_to_dict,
    sup_V,
    tail_bound,
)
from .geometry import (
    Cell,
    MagneticLattice,
    QuadratureGrid,
    gelfand_section,
    make_grid,
    make_lattice,
    rational_flux_cell,
    theta_nodes,
)
from .projection import FiberProjection, build_fiber_projection, eigen_count, fiber_hamiltonian, grid_values
from .specfun import basis_e
from .tolerances import TOL

INV_4PI2 = 1 / (4 * math.pi**2)


class StarvationWarning(UserWarning):
    """Too few samples have a nonzero count at the smallest energy."""


@dataclass
class IDSCurve:
    energies: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)
    nonzero: np.ndarray | None = None


def _lattice_meta(lattice: MagneticLattice) -> dict:
    return {"b": lattice.b, "a": lattice.a, "n": lattice.n, "L": lattice.L, "degeneracy": lattice.degeneracy}


def window_for(lattice: MagneticLattice, potential: OneSitePotential, M: float,
               max_radius: int = 16) -> tuple[Window, int, float]:
    """Coupling window around the torus box and the bound on what it leaves out."""
    R = min(cutoff_radius(potential, TOL.alloy_tail_rel * M), max_radius)
    window = Window.around(lattice, R)
    # outside sites sit at sup-distance >= R + 1 from sites' box, >= R + 1/2 from the torus box
    clearance = math.floor(lattice.L) + R + 1 - lattice.L
    return window, R, tail_bound(potential, clearance)


class ReducedEnsemble:
    """Precomputed site operators so that r_q(theta, omega) = sum_g omega_g R_g(theta).

    R_g(theta) = B(theta)* diag(w u(x - g)) B(theta) for each window site g and
    quadrature node theta; a batch of couplings then costs one matrix product.
    """

    def __init__(self, q: int, lattice: MagneticLattice, potential: OneSitePotential,
                 disorder: DisorderModel, thetas: np.ndarray, grid: QuadratureGrid | None = None,
                 max_window: int = 16, projections: list[FiberProjection] | None = None):
        self.q = q
        self.lattice = lattice
        self.potential = potential
        self.disorder = disorder
        self.M = sup_V(potential, disorder)
        check_h4(self.M, lattice.b)
        self.grid = make_grid(lattice) if grid is None else grid
        self.thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        self.window, self.radius, self.remainder = window_for(lattice, potential, self.M, max_window)
        self.sites = self.window.sites()
        self.d = lattice.degeneracy
        if projections is None:
            projections = [build_fiber_projection(q, th, lattice, self.grid) for th in self.thetas]
        self.projections = projections
        pts = self.grid.points
        U = np.empty((len(self.sites), len(pts)))
        for chunk in np.array_split(np.arange(len(self.sites)), max(1, len(self.sites) // 64)):
            U[chunk] = self.potential(pts[None, :, :] - self.sites[chunk, None, :].astype(float))
        U *= self.grid.weight
        self.site_weights_grid = U
        d = self.d
        iu = np.triu_indices(d, 1)
        self._iu = iu
        blocks = []
        for p in projections:
            Bm = p.basis
            diag = np.abs(Bm) ** 2
            off = Bm.conj()[:, iu[0]] * Bm[:, iu[1]]
            # Hermitian d x d block packed as d real parameters per row: diag, Re upper, Im upper
            blocks.append(U @ np.concatenate([diag, off.real, off.imag], axis=1))
        self._G = np.ascontiguousarray(np.concatenate(blocks, axis=1))

    @property
    def theta_count(self) -> int:
        return len(self.thetas)

    def matrices(self, omega: np.ndarray) -> np.ndarray:
        """Reduced matrices for a batch of couplings: shape (batch, thetas, d, d)."""
        d = self.d
        n_off = len(self._iu[0])
        P = (np.asarray(omega, dtype=float) @ self._G).reshape(len(omega), self.theta_count, d * d)
        R = np.zeros((len(omega), self.theta_count, d, d), dtype=complex)
        idx = np.arange(d)
        R[..., idx, idx] = P[..., :d]
        upper = P[..., d : d + n_off] + 1j * P[..., d + n_off :]
        R[..., self._iu[0], self._iu[1]] = upper
        R[..., self._iu[1], self._iu[0]] = upper.conj()
        return R

    def eigenvalues(self, omega: np.ndarray) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrices(omega))

    def couplings(self, seed: int, realizations) -> np.ndarray:
        return coupling_matrix(self.disorder, self.sites, seed, realizations)

    def counts(self, seed: int, realizations, energies) -> np.ndarray:
        """Integer eigenvalue counts, shape (batch, thetas, energies)."""
        lam = self.eigenvalues(self.couplings(seed, realizations))
        E = np.asarray(energies, dtype=float)
        return (lam[..., :, None] < E).sum(axis=-2)


def _chunk_sums(ens: ReducedEnsemble, seed: int, start: int, stop: int, energies) -> tuple:
    counts = ens.counts(seed, np.arange(start, stop), energies).sum(axis=1).astype(np.int64)
    return counts.sum(axis=0), (counts * counts).sum(axis=0), (counts > 0).sum(axis=0)


def _sample_statistics(ens: ReducedEnsemble, seed: int, samples: int, energies,
                       threads: int, chunk: int):
    bounds = [(s, min(s + chunk, samples)) for s in range(0, samples, chunk)]
    E = np.asarray(energies, dtype=float)
    # single-threaded BLAS keeps every GEMM/eigensolve bit-identical whatever the pool size
    with threadpool_limits(limits=1):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda se: _chunk_sums(ens, seed, se[0], se[1], E), bounds))
        else:
            parts = [_chunk_sums(ens, seed, s, e, E) for s, e in bounds]
    S1 = np.zeros(len(E), dtype=np.int64)
    S2 = np.zeros(len(E), dtype=np.int64)
    nz = np.zeros(len(E), dtype=np.int64)
    for a, b, c in parts:
        S1 += a
        S2 += b
        nz += c
    return S1, S2, nz


def reduced_ids(q: int, lattice: MagneticLattice, potential: OneSitePotential, disorder: DisorderModel,
                energies, theta_per_side: int = 4, samples: int = 1000, seed: int = 0,
                threads: int = 1, chunk: int = 256, max_window: int = 16,
                ensemble: ReducedEnsemble | None = None) -> IDSCurve:
    """Expected reduced IDS (2 pi)^-2 sum_theta w_theta E N(E; r_q(theta)).

    Counts are accumulated as integers in fixed chunk order, so the result does not
    depend on the number of threads.
    """
    E = np.asarray(energies, dtype=float)
    if np.any(np.diff(E) < 0) or np.any(E < 0):
        raise ValueError("energies must be non-negative and ordered")
    if ensemble is None:
        nodes, _ = theta_nodes(lattice, theta_per_side)
        ensemble = ReducedEnsemble(q, lattice, potential, disorder, nodes, max_window=max_window)
    ens = ensemble
    S1, S2, nz = _sample_statistics(ens, seed, samples, E, threads, chunk)
    scale = INV_4PI2 * lattice.dual_area / ens.theta_count
    mean = S1 / samples
    var = (S2 / samples - mean**2) * samples / max(samples - 1, 1)
    values = scale * mean
    stderr = scale * np.sqrt(np.maximum(var, 0.0) / samples)
    starved = bool(len(E) and nz[0] < TOL.starvation_count)
    if starved:
        warnings.warn(
            f"only {int(nz[0])} samples have a nonzero count at E = {E[0]:.4g}",
            StarvationWarning, stacklevel=2,
        )
    meta = {
        "quantity": "reduced_ids",
        "q": q,
        "lattice": _lattice_meta(lattice),
        "potential": potential_to_dict(potential),
        "disorder": {"kappa": disorder.kappa, "omega_minus": 0.0, "omega_plus": 1.0},
        "samples": samples,
        "theta_nodes": ens.theta_count,
        "seed": seed,
        "sup_V": ens.M,
        "window_radius": ens.radius,
        "window_remainder_bound": ens.remainder,
        "grid_shape": list(ens.grid.shape),
        "starved": starved,
        "saturation_value": lattice.b / (2 * math.pi),
    }
    return IDSCurve(E, values, stderr, meta, nz)


def periodic_ids(lattice: MagneticLattice, V, energies, theta_per_side: int = 4, q_max: int = 3,
                 grid: QuadratureGrid | None = None) -> IDSCurve:
    """(2 pi)^-2 sum_theta w_theta N(E; h(theta)) for one periodic potential."""
    grid = make_grid(lattice) if grid is None else grid
    E = np.asarray(energies, dtype=float)
    v = grid_values(V, grid)
    limit = 2 * lattice.b * q_max - float(np.max(v))
    if np.max(E) >= limit:
        warnings.warn(f"energies beyond the truncation trust threshold {limit:.4g}", stacklevel=2)
    nodes, weights = theta_nodes(lattice, theta_per_side)
    total = np.zeros(len(E))
    for th, w in zip(nodes, weights):
        projs = [build_fiber_projection(q, th, lattice, grid) for q in range(q_max + 1)]
        H = fiber_hamiltonian(th, lattice, v, q_max, projections=projs)
        total += w * eigen_count(np.linalg.eigvalsh(H), E)
    meta = {"quantity": "periodic_ids", "lattice": _lattice_meta(lattice), "q_max": q_max,
            "theta_nodes": len(nodes), "trust_threshold": limit}
    return IDSCurve(E, INV_4PI2 * total, np.zeros(len(E)), meta)


def ids_increment(q: int, energies, d1: float, d2: float, lattice: MagneticLattice,
                  potential: OneSitePotential, disorder: DisorderModel, **kw) -> dict:
    """Bracket (E rho_q(d1 E), E rho_q(d2 E)) for the IDS increment above level 2bq.

    Corrections that are exponentially small in a negative power of E are not
    included; at desk scale they are below the Monte Carlo noise.
    """
    if not (0 < d1 <= 1 <= d2):
        raise ValueError("need 0 < d1 <= 1 <= d2")
    E = np.asarray(energies, dtype=float)
    grid = np.unique(np.concatenate([d1 * E, d2 * E]))
    curve = reduced_ids(q, lattice, potential, disorder, grid, **kw)
    lookup = dict(zip(grid.tolist(), zip(curve.values, curve.stderr)))
    lo = np.array([lookup[x][0] for x in (d1 * E).tolist()])
    hi = np.array([lookup[x][0] for x in (d2 * E).tolist()])
    lo_se = np.array([lookup[x][1] for x in (d1 * E).tolist()])
    hi_se = np.array([lookup[x][1] for x in (d2 * E).tolist()])
    return {"energies": E, "lower": lo, "upper": hi, "lower_stderr": lo_se, "upper_stderr": hi_se,
            "caveat": "exponentially small finite-volume corrections not included"}


@dataclass
class SandwichReport:
    q: int
    q_max: int
    energies: np.ndarray
    constants: tuple[float, ...]
    lower: np.ndarray   # (samples, energies)
    middle: np.ndarray
    upper: np.ndarray
    hypothesis_ok: bool

    @property
    def violations(self) -> np.ndarray:
        return (self.lower > self.middle) | (self.middle > self.upper)

    @property
    def violation_fraction(self) -> float:
        return float(self.violations.mean()) if self.violations.size else 0.0


def sandwich_counts(q: int, b: float, r_eigs: np.ndarray, h_eigs: np.ndarray, energies,
                    c0: float | None = None, c12: tuple[float, float] | None = None):
    """Counts (lower, middle, upper) for one sample at each energy."""
    E = np.asarray(energies, dtype=float)
    if q == 0:
        lo = eigen_count(r_eigs, E)
        mid = eigen_count(h_eigs, E)
        up = eigen_count(r_eigs, c0 * E)
    else:
        c1, c2 = c12
        lo = eigen_count(r_eigs, c1 * E)
        mid = eigen_count(h_eigs, 2 * b * q + E) - eigen_count(h_eigs, 2 * b * q)
        up = eigen_count(r_eigs, c2 * E)
    return lo, mid, up


def sandwich_check(q: int, lattice: MagneticLattice, pairs, energies, c0: float | None = None,
                   c12: tuple[float, float] | None = None, q_max: int = 3,
                   grid: QuadratureGrid | None = None, projection_cache: dict | None = None) -> SandwichReport:
    """Compare N(E; h(theta)) with reduced counts for each (theta, V) pair.

    pairs is a sequence of (theta, V) with V a callable or grid values.  Violations
    are recorded, never dropped.  projection_cache maps (theta, level) to a
    FiberProjection and is filled as a side effect so level sets can be shared.
    """
    b = lattice.b
    grid = make_grid(lattice) if grid is None else grid
    E = np.asarray(energies, dtype=float)
    cache = {} if projection_cache is None else projection_cache
    lows, mids, ups = [], [], []
    Vmax = 0.0
    for theta, V in pairs:
        key = tuple(np.round(np.asarray(theta, dtype=float), 15))
        projs = []
        for level in range(q_max + 1):
            if (key, level) not in cache:
                cache[(key, level)] = build_fiber_projection(level, theta, lattice, grid)
            projs.append(cache[(key, level)])
        v = grid_values(V, grid)
        Vmax = max(Vmax, float(v.max()))
        H = fiber_hamiltonian(theta, lattice, v, q_max, projections=projs)
        Bq = projs[q].basis
        r = Bq.conj().T @ ((grid.weight * v)[:, None] * Bq)
        lo, mid, up = sandwich_counts(q, b, np.linalg.eigvalsh(0.5 * (r + r.conj().T)),
                                      np.linalg.eigvalsh(H), E, c0, c12)
        lows.append(lo)
        mids.append(mid)
        ups.append(up)
    ratio = Vmax / (2 * b)
    if q == 0:
        ok = c0 is not None and c0 > 1 + ratio
        consts = (c0,)
    else:
        c1, c2 = c12
        ok = c1 < 1 - ratio and c2 > 1 + ratio
        consts = (c1, c2)
    if not ok:
        warnings.warn("sandwich constants outside the admissible range; violations are expected", stacklevel=2)
    return SandwichReport(q, q_max, E, consts, np.array(lows), np.array(mids), np.array(ups), ok)


def random_pairs(lattice: MagneticLattice, potential: OneSitePotential, disorder: DisorderModel,
                 count: int, seed: int, grid: QuadratureGrid | None = None, max_window: int = 16):
    """(theta, V on grid) pairs with uniform theta and couplings from the counter stream."""
    grid = make_grid(lattice) if grid is None else grid
    M = sup_V(potential, disorder)
    window, _, _ = window_for(lattice, potential, M, max_window)
    sites = window.sites()
    pts = grid.points
    U = np.empty((len(sites), len(pts)))
    for chunk in np.array_split(np.arange(len(sites)), max(1, len(sites) // 64)):
        U[chunk] = potential(pts[None, :, :] - sites[chunk, None, :].astype(float))
    omega = coupling_matrix(disorder, sites, seed, np.arange(count))
    rng = np.random.default_rng(seed)
    half = np.array([math.pi / lattice.period] * 2)
    thetas = rng.uniform(-half, half, size=(count, 2))
    return [(thetas[i], omega[i] @ U) for i in range(count)]


def trial_section(q: int, lattice: MagneticLattice, theta, grid: QuadratureGrid) -> np.ndarray:
    """Bloch sum of conj(z)^q exp(-b|z|^2/4) over the torus lattice, on the grid (no normalization)."""
    b = lattice.b
    f = lambda x: (x[..., 0] - 1j * x[..., 1]) ** q * np.exp(-b * (x[..., 0] ** 2 + x[..., 1] ** 2) / 4)
    vals, _ = gelfand_section(f, theta, lattice, grid.points)
    return vals * math.sqrt(lattice.dual_area)


@dataclass
class TrialBound:
    energies: np.ndarray
    probability: np.ndarray
    stderr: np.ndarray
    implied_ids: np.ndarray
    implied_stderr: np.ndarray
    product_bound: np.ndarray
    weights: np.ndarray
    thetas: np.ndarray


def trial_lower_bound(q: int, energies, lattice: MagneticLattice, potential: OneSitePotential,
                      disorder: DisorderModel, samples: int, seed: int = 0, thetas=None,
                      c: float = 1.0, grid: QuadratureGrid | None = None, max_window: int = 16,
                      chunk: int = 4096) -> TrialBound:
    """Probability that the trial Rayleigh quotient sum_g omega_g w_g stays below c E.

    With the same seed, the couplings coincide with those used by reduced_ids, so
    the two estimates are paired sample by sample.
    """
    grid = make_grid(lattice) if grid is None else grid
    thetas = np.zeros((1, 2)) if thetas is None else np.atleast_2d(np.asarray(thetas, dtype=float))
    E = np.asarray(energies, dtype=float)
    M = sup_V(potential, disorder)
    window, _, _ = window_for(lattice, potential, M, max_window)
    sites = window.sites()
    pts = grid.points
    weights = []
    for th in thetas:
        phi2 = np.abs(trial_section(q, lattice, th, grid)) ** 2
        w = np.empty(len(sites))
        for ch in np.array_split(np.arange(len(sites)), max(1, len(sites) // 64)):
            w[ch] = potential(pts[None, :, :] - sites[ch, None, :].astype(float)) @ phi2
        weights.append(w / phi2.sum())
    W = np.array(weights)  # (thetas, sites)
    hits = np.zeros((len(thetas), len(E)), dtype=np.int64)
    for start in range(0, samples, chunk):
        omega = coupling_matrix(disorder, sites, seed, np.arange(start, min(start + chunk, samples)))
        quotient = omega @ W.T  # (batch, thetas)
        hits += (quotient[:, :, None] < c * E).sum(axis=0)
    p_theta = hits / samples
    p = p_theta.mean(axis=0)
    se = np.sqrt(np.maximum(p_theta * (1 - p_theta), 0.0) / samples).mean(axis=0)
    scale = INV_4PI2 * lattice.dual_area
    active = W[0] > 0
    K = int(active.sum())
    with np.errstate(divide="ignore"):
        ratio = np.clip((c * E[:, None]) / (K * W[0][active][None, :]), 0.0, 1.0)
        log_prod = disorder.kappa * np.sum(np.log(ratio), axis=1)
    return TrialBound(E, p, se, scale * p, scale * se, np.exp(log_prod), W, thetas)


@dataclass
class NormTrial:
    q: int
    torus_norm: float
    plane_norm: float
    c1: float

    @property
    def ok(self) -> bool:
        return self.torus_norm >= self.c1


def plane_norm(q: int, b: float) -> float:
    """Integral of |conj(z)^q exp(-b|z|^2/4)|^2 over the plane: (2 pi/b)(2/b)^q q!."""
    return 2 * math.pi / b * (2 / b) ** q * math.factorial(q)


def norm_trial(q: int, lattice: MagneticLattice, grid: QuadratureGrid | None = None) -> NormTrial:
    """Squared norm of the theta = 0 trial function over the torus box, with c1 = plane norm / 2."""
    grid = make_grid(lattice) if grid is None else grid
    phi = trial_section(q, lattice, (0.0, 0.0), grid)
    val = float(np.sum(np.abs(phi) ** 2) * grid.weight)
    ref = plane_norm(q, lattice.b)
    return NormTrial(q, val, ref, ref / 2)


def image_tail_fit(q: int, b: float, a: float, ns) -> dict:
    """Fit sup over the box of the off-origin image sum to c exp(-rate L^2)."""
    Ls, sups = [], []
    for n in ns:
        lat = make_lattice(b, a, n)
        grid = make_grid(lat)
        full = trial_section(q, lat, (0.0, 0.0), grid)
        pts = grid.points
        own = (pts[:, 0] - 1j * pts[:, 1]) ** q * np.exp(-b * (pts ** 2).sum(axis=1) / 4)
        Ls.append(lat.L)
        sups.append(float(np.max(np.abs(full - own))))
    L2 = np.array(Ls) ** 2
    slope, intercept = np.polyfit(L2, np.log(sups), 1)
    return {"L": Ls, "sup": sups, "rate": -slope, "log_amplitude": intercept}


@dataclass
class BandSweep:
    cell: Cell
    thetas: np.ndarray
    bands: np.ndarray  # (thetas, bands), sorted per theta
    band_min: np.ndarray
    band_max: np.ndarray
    nonconstant: np.ndarray
    simple_lower: np.ndarray
    simple_upper: np.ndarray
    trusted: np.ndarray
    overlapping: bool


def _edge_multiplicity(E: float, lo: np.ndarray, hi: np.ndarray, tol: float) -> int:
    return int(np.sum((lo - tol <= E) & (E <= hi + tol)))


def band_sweep(W, p: int, r: int, theta_per_side: int = 8, q_max: int = 2,
               band_tol: float | None = None) -> BandSweep:
    """Floquet bands of the level-compressed h_0(theta) + W for flux b/2pi = p/r on the cell r x 1."""
    band_tol = TOL.band_tol if band_tol is None else band_tol
    cell = rational_flux_cell(p, r)
    grid = make_grid(cell)
    v = grid_values(W, grid)
    if callable(W):
        pts = grid.points
        for shift in ((cell.g1, 0.0), (0.0, cell.g2)):
            if np.max(np.abs(np.asarray(W(pts + np.array(shift))).ravel() - v)) > 1e-9 * max(1.0, np.abs(v).max()):
                raise ValueError("W is not periodic with respect to the cell")
    nodes, _ = theta_nodes(cell, theta_per_side)
    rows = []
    for th in nodes:
        projs = [build_fiber_projection(q, th, cell, grid) for q in range(q_max + 1)]
        H = fiber_hamiltonian(th, cell, v, q_max, projections=projs)
        rows.append(np.linalg.eigvalsh(H))
    bands = np.array(rows)
    lo = bands.min(axis=0)
    hi = bands.max(axis=0)
    nonconstant = hi - lo > band_tol
    simple_lo = np.array([_edge_multiplicity(e, lo, hi, band_tol) == 1 for e in lo])
    simple_hi = np.array([_edge_multiplicity(e, lo, hi, band_tol) == 1 for e in hi])
    trusted = hi < 2 * cell.b * q_max - float(v.max())
    overlapping = bool(np.any(~simple_lo[trusted]) or np.any(~simple_hi[trusted]))
    if overlapping:
        warnings.warn("bands touch or overlap within band_tol; edge classification unreliable", stacklevel=2)
    return BandSweep(cell, nodes, bands, lo, hi, nonconstant, simple_lo, simple_hi, trusted, overlapping)
