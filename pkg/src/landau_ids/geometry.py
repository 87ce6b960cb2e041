"""Flux-quantized cells, quadrature grids, magnetic translations and Bloch sections."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .tolerances import TOL


@dataclass(frozen=True)
class Cell:
    """Rectangular period cell (-g1/2, g1/2) x (-g2/2, g2/2) carrying integer flux."""

    b: float
    g1: float
    g2: float

    def __post_init__(self):
        if self.b <= 0 or self.g1 <= 0 or self.g2 <= 0:
            raise ValueError("field and periods must be positive")
        flux = self.b * self.g1 * self.g2 / (2 * math.pi)
        if abs(flux - round(flux)) > TOL.flux_integer * max(1.0, flux) or round(flux) < 1:
            raise ValueError(f"flux through the cell is {flux:.12g}, not a positive integer")

    @property
    def degeneracy(self) -> int:
        """Dimension of each Landau-level fiber space: the flux through the cell."""
        return int(round(self.b * self.g1 * self.g2 / (2 * math.pi)))

    @property
    def area(self) -> float:
        return self.g1 * self.g2

    @property
    def dual_half(self) -> tuple[float, float]:
        return (math.pi / self.g1, math.pi / self.g2)

    @property
    def dual_area(self) -> float:
        return (2 * math.pi) ** 2 / (self.g1 * self.g2)


@dataclass(frozen=True)
class MagneticLattice:
    """Square torus of side 2L = (2n+1)a built from n-fold copies of an integer-flux a-cell."""

    b: float
    a: float
    n: int

    @property
    def L(self) -> float:
        return (2 * self.n + 1) * self.a / 2

    @property
    def period(self) -> float:
        return 2 * self.L

    @property
    def flux_per_cell(self) -> int:
        return int(round(self.b * self.a**2 / (2 * math.pi)))

    @property
    def degeneracy(self) -> int:
        return self.flux_per_cell * (2 * self.n + 1) ** 2

    @property
    def dual_area(self) -> float:
        return math.pi**2 / self.L**2

    @cached_property
    def cell(self) -> Cell:
        return Cell(self.b, self.period, self.period)


def make_lattice(b: float, a: float, n: int) -> MagneticLattice:
    if b <= 0 or a <= 0:
        raise ValueError("b and a must be positive")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be an integer >= 1, got {n}")
    flux = b * a * a / (2 * math.pi)
    if abs(flux - round(flux)) > TOL.flux_integer * max(1.0, flux) or round(flux) < 1:
        raise ValueError(f"flux per cell b*a^2/(2*pi) = {flux:.12g} is not a positive integer")
    return MagneticLattice(float(b), float(a), int(n))


def rational_flux_cell(p: int, r: int) -> Cell:
    """Cell r x 1 for field b = 2*pi*p/r; each level then has p states per fiber."""
    if p < 1 or r < 1 or math.gcd(p, r) != 1:
        raise ValueError(f"need coprime positive p, r; got {p}/{r}")
    return Cell(2 * math.pi * p / r, float(r), 1.0)


def as_cell(geom) -> Cell:
    return geom.cell if isinstance(geom, MagneticLattice) else geom


@dataclass(frozen=True)
class FiberPoint:
    """Quasi-momentum reduced to the half-open dual cell (-pi/g, pi/g]."""

    theta: tuple[float, float]

    @classmethod
    def reduce(cls, theta, geom) -> "FiberPoint":
        cell = as_cell(geom)
        out = []
        for t, g in zip(theta, (cell.g1, cell.g2)):
            period = 2 * math.pi / g
            r = -((-(t - period / 2)) % period) + period / 2
            out.append(float(r))
        return cls(tuple(out))


@dataclass(frozen=True)
class QuadratureGrid:
    """Midpoint tensor grid on the cell; equal weights h1*h2."""

    x1: np.ndarray
    x2: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.x1), len(self.x2))

    @property
    def size(self) -> int:
        return len(self.x1) * len(self.x2)

    @property
    def spacing(self) -> tuple[float, float]:
        return (float(self.x1[1] - self.x1[0]), float(self.x2[1] - self.x2[0]))

    @property
    def weight(self) -> float:
        h1, h2 = self.spacing
        return h1 * h2

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, self.weight)

    @property
    def points(self) -> np.ndarray:
        X1, X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        return np.stack([X1.ravel(), X2.ravel()], axis=1)


def _midpoints(length: float, count: int) -> np.ndarray:
    h = length / count
    return -length / 2 + (np.arange(count) + 0.5) * h


def make_grid(geom, refine: float = 1.0) -> QuadratureGrid:
    """Default grid with spacing <= 1/(4 sqrt(b)).

    For a MagneticLattice the spacing divides a, so unit translations are index shifts.
    """
    if isinstance(geom, MagneticLattice):
        k = math.ceil(refine * 4 * geom.a * math.sqrt(geom.b) - 1e-9)
        m = (2 * geom.n + 1) * k
        return QuadratureGrid(_midpoints(geom.period, m), _midpoints(geom.period, m))
    cell = geom
    m1 = math.ceil(refine * 4 * cell.g1 * math.sqrt(cell.b) - 1e-9)
    m2 = math.ceil(refine * 4 * cell.g2 * math.sqrt(cell.b) - 1e-9)
    return QuadratureGrid(_midpoints(cell.g1, m1), _midpoints(cell.g2, m2))


def theta_nodes(geom, per_side: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint rule on the dual cell: nodes (K, 2) and weights summing to its area."""
    cell = as_cell(geom)
    t1 = _midpoints(2 * math.pi / cell.g1, per_side)
    t2 = _midpoints(2 * math.pi / cell.g2, per_side)
    T1, T2 = np.meshgrid(t1, t2, indexing="ij")
    nodes = np.stack([T1.ravel(), T2.ravel()], axis=1)
    weights = np.full(len(nodes), cell.dual_area / len(nodes))
    return nodes, weights


def random_thetas(geom, count: int, rng: np.random.Generator) -> np.ndarray:
    cell = as_cell(geom)
    half = np.array(cell.dual_half)
    return rng.uniform(-half, half, size=(count, 2))


@dataclass(frozen=True)
class SampledField:
    """Complex values on a tensor grid, indexed [i1, i2]."""

    x1: np.ndarray
    x2: np.ndarray
    values: np.ndarray

    @classmethod
    def from_function(cls, f: Callable, x1, x2) -> "SampledField":
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        return cls(x1, x2, np.asarray(f(np.stack([X1, X2], axis=-1))))

    def norm(self) -> float:
        h1 = self.x1[1] - self.x1[0]
        h2 = self.x2[1] - self.x2[0]
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * h1 * h2))


def translation_phase(y, x, b: float):
    """exp(i b y1 y2 / 2) exp(i b (x ^ y) / 2) with x ^ y = x1 y2 - x2 y1."""
    y1, y2 = y
    return np.exp(0.5j * b * (y1 * y2 + x[..., 0] * y2 - x[..., 1] * y1))


def magnetic_translate(y, f, b: float):
    """(tau_y f)(x) = exp(i b y1 y2/2) exp(i b (x^y)/2) f(x + y).

    For a SampledField, y must be a multiple of the grid spacing and the result
    lives on the sub-grid where x + y stays inside the samples.
    """
    y = (float(y[0]), float(y[1]))
    if callable(f) and not isinstance(f, SampledField):
        shift = np.array(y)
        return lambda x: translation_phase(y, np.asarray(x), b) * f(np.asarray(x) + shift)
    h1 = f.x1[1] - f.x1[0]
    h2 = f.x2[1] - f.x2[0]
    s1, s2 = y[0] / h1, y[1] / h2
    if abs(s1 - round(s1)) > 1e-9 or abs(s2 - round(s2)) > 1e-9:
        raise ValueError("translation must be a multiple of the grid spacing")
    s1, s2 = int(round(s1)), int(round(s2))
    n1, n2 = f.values.shape
    lo1, hi1 = max(0, -s1), n1 - max(0, s1)
    lo2, hi2 = max(0, -s2), n2 - max(0, s2)
    if lo1 >= hi1 or lo2 >= hi2:
        raise ValueError("x + y leaves the sampled domain everywhere")
    x1 = f.x1[lo1:hi1]
    x2 = f.x2[lo2:hi2]
    shifted = f.values[lo1 + s1 : hi1 + s1, lo2 + s2 : hi2 + s2]
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    phase = translation_phase(y, np.stack([X1, X2], axis=-1), b)
    return SampledField(x1, x2, phase * shifted)


def _shell(k: int) -> list[tuple[int, int]]:
    if k == 0:
        return [(0, 0)]
    return [(i, j) for i in range(-k, k + 1) for j in range(-k, k + 1) if max(abs(i), abs(j)) == k]


def gelfand_section(f: Callable, theta, geom, points, shells: int | None = None,
                    tol: float | None = None) -> tuple[np.ndarray, float]:
    """Bloch section (vol T*)^(-1/2) sum_g exp(-i theta.(x+g)) (tau_g f)(x) at the given points.

    The lattice sum runs over |k|_inf <= shells.  The returned tail estimate sums
    |f(x + g)| over the next three shells plus a rounding allowance for the kept
    terms, maximized over the points.  Raises if it exceeds tol (pass
    tol=float('inf') to disable).
    """
    cell = as_cell(geom)
    shells = TOL.gelfand_shells if shells is None else shells
    tol = TOL.gelfand_tail if tol is None else tol
    x = np.asarray(points, dtype=float)
    th = np.asarray(theta, dtype=float)
    norm = cell.dual_area ** -0.5
    acc = np.zeros(x.shape[:-1], dtype=complex)
    mag = np.zeros(x.shape[:-1])
    terms = 0
    for k in range(shells + 1):
        for i, j in _shell(k):
            g = (i * cell.g1, j * cell.g2)
            xg = x + np.array(g)
            fx = f(xg)
            acc += np.exp(-1j * (xg @ th)) * translation_phase(g, x, cell.b) * fx
            mag += np.abs(fx)
            terms += 1
    tail = 4 * terms * np.finfo(float).eps * mag
    for k in range(shells + 1, shells + 4):
        for i, j in _shell(k):
            tail += np.abs(f(x + np.array((i * cell.g1, j * cell.g2))))
    tail_est = norm * float(tail.max(initial=0.0))
    if tail_est > tol:
        raise ValueError(f"lattice-sum tail {tail_est:.3e} exceeds tolerance {tol:.1e}")
    return norm * acc, tail_est
