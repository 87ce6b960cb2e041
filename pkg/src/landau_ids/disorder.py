"""One-site potentials, coupling laws, alloy fields and their periodizations."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np

from .geometry import MagneticLattice
from .rng import site_uniforms
from .tolerances import TOL

_HALF_DIAG = math.sqrt(2) / 2


def _radius(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.hypot(x[..., 0], x[..., 1])


@dataclass(frozen=True)
class PowerLaw:
    """u(x) = C (1+|x|)^(-varkappa); C defaults to the lower constant c_minus."""

    varkappa: float
    c_minus: float = 1.0
    c_plus: float = 1.0
    C: float | None = None
    family: str = field(default="powerlaw", init=False)

    def __post_init__(self):
        if self.varkappa <= 2:
            raise ValueError(f"power-law decay needs varkappa > 2, got {self.varkappa}")
        if self.c_minus <= 0 or self.c_plus < self.c_minus:
            raise ValueError("need 0 < c_minus <= c_plus")
        if self.C is None:
            object.__setattr__(self, "C", self.c_minus)
        if not self.c_minus <= self.C <= self.c_plus * (1 + 1e-12):
            raise ValueError(f"amplitude {self.C} outside [c_minus, c_plus]")

    def __call__(self, x):
        return self.C * (1 + _radius(x)) ** (-self.varkappa)

    def envelope(self, r):
        return self.C * (1 + np.asarray(r, dtype=float)) ** (-self.varkappa)

    def scaled(self, factor: float) -> "PowerLaw":
        return replace(self, c_minus=self.c_minus * factor, c_plus=self.c_plus * factor,
                       C=self.C * factor)

    @property
    def positive_set(self):
        return (0.0, 0.0), 1.0, self.C * 2.0 ** (-self.varkappa)


@dataclass(frozen=True)
class Exponential:
    """u(x) = C exp(-rate |x|^beta) with beta in (0, 2]."""

    beta: float
    C: float = 1.0
    rate: float = 1.0
    family: str = field(default="exponential", init=False)

    def __post_init__(self):
        if not 0 < self.beta <= 2:
            raise ValueError(f"beta must lie in (0, 2], got {self.beta}")
        if self.C <= 0 or self.rate <= 0:
            raise ValueError("amplitude and rate must be positive")

    def __call__(self, x):
        return self.C * np.exp(-self.rate * _radius(x) ** self.beta)

    def envelope(self, r):
        return self.C * np.exp(-self.rate * np.asarray(r, dtype=float) ** self.beta)

    def scaled(self, factor: float) -> "Exponential":
        return replace(self, C=self.C * factor)

    @property
    def positive_set(self):
        return (0.0, 0.0), 1.0, self.C * math.exp(-self.rate)


@dataclass(frozen=True)
class SuperGaussianPair:
    """Bump squeezed between 1_{|x-x0|<eps}/c_plus and exp(-c_minus |x|^2)/c_minus.

    Concretely u = scale * min(exp(-c_minus|x|^2)/c_minus, exp(-dist(x, B)^4)/c_plus)
    with B the eps-ball about x0, which decays faster than any Gaussian.
    """

    c_minus: float = 1.0
    c_plus: float = 2.0
    x0: tuple[float, float] = (0.0, 0.0)
    eps: float = 0.5
    scale: float = 1.0
    family: str = field(default="supergaussian", init=False)

    def __post_init__(self):
        if self.c_minus <= 0 or self.c_plus <= 0 or self.eps <= 0 or self.scale <= 0:
            raise ValueError("constants must be positive")
        reach = math.hypot(*self.x0) + self.eps
        if math.exp(-self.c_minus * reach**2) / self.c_minus < 1 / self.c_plus:
            raise ValueError("Gaussian upper envelope falls below 1/c_plus on the ball")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = _radius(x)
        dist = np.maximum(_radius(x - np.asarray(self.x0)) - self.eps, 0.0)
        upper = np.exp(-self.c_minus * r**2) / self.c_minus
        return self.scale * np.minimum(upper, np.exp(-dist**4) / self.c_plus)

    def envelope(self, r):
        return self.scale * np.exp(-self.c_minus * np.asarray(r, dtype=float) ** 2) / self.c_minus

    def scaled(self, factor: float) -> "SuperGaussianPair":
        return replace(self, scale=self.scale * factor)

    @property
    def positive_set(self):
        return tuple(self.x0), self.eps, self.scale / self.c_plus


@dataclass(frozen=True)
class Indicator:
    """u(x) = C on the open disc |x - x0| < eps, zero elsewhere."""

    x0: tuple[float, float] = (0.0, 0.0)
    eps: float = 0.5
    C: float = 1.0
    family: str = field(default="indicator", init=False)

    def __post_init__(self):
        if self.eps <= 0 or self.C <= 0:
            raise ValueError("eps and C must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(_radius(x - np.asarray(self.x0)) < self.eps, self.C, 0.0)

    def envelope(self, r):
        reach = math.hypot(*self.x0) + self.eps
        return np.where(np.asarray(r, dtype=float) < reach, self.C, 0.0)

    def scaled(self, factor: float) -> "Indicator":
        return replace(self, C=self.C * factor)

    @property
    def positive_set(self):
        return tuple(self.x0), self.eps, self.C


OneSitePotential = PowerLaw | Exponential | SuperGaussianPair | Indicator

_FAMILIES = {
    "powerlaw": PowerLaw,
    "exponential": Exponential,
    "supergaussian": SuperGaussianPair,
    "indicator": Indicator,
}


def potential_from_dict(params: dict) -> OneSitePotential:
    params = dict(params)
    family = params.pop("family")
    if family not in _FAMILIES:
        raise ValueError(f"unknown potential family {family!r}")
    for key in ("x0",):
        if key in params:
            params[key] = tuple(params[key])
    return _FAMILIES[family](**params)


def potential_to_dict(u: OneSitePotential) -> dict:
    d = asdict(u)
    return {"family": d.pop("family"), **d}


def eval_one_site(u: OneSitePotential, x) -> np.ndarray:
    return u(x)


@dataclass(frozen=True)
class DisorderModel:
    """i.i.d. couplings omega = U^(1/kappa), so P(omega <= E) = E^kappa on [0, 1]."""

    kappa: float
    omega_minus: float = 0.0
    omega_plus: float = 1.0

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.omega_minus != 0.0 or self.omega_plus != 1.0:
            raise ValueError("only the law on [0, 1] with P(omega <= E) = E^kappa is supported")

    def transform(self, uniforms: np.ndarray) -> np.ndarray:
        return uniforms ** (1.0 / self.kappa)

    def cdf(self, E):
        return np.clip(np.asarray(E, dtype=float), 0.0, 1.0) ** self.kappa


@dataclass(frozen=True)
class Window:
    """Inclusive integer box [lo1, hi1] x [lo2, hi2] of lattice sites."""

    lo1: int
    hi1: int
    lo2: int
    hi2: int

    @classmethod
    def around(cls, lattice: MagneticLattice, radius: int) -> "Window":
        """All unit-lattice sites whose sup-distance to the torus box is at most radius."""
        m = math.floor(lattice.L) + int(radius)
        return cls(-m, m, -m, m)

    def sites(self) -> np.ndarray:
        g1, g2 = np.meshgrid(np.arange(self.lo1, self.hi1 + 1), np.arange(self.lo2, self.hi2 + 1),
                             indexing="ij")
        return np.stack([g1.ravel(), g2.ravel()], axis=1)

    def clearance(self, x) -> np.ndarray:
        """Euclidean distance from x to the nearest site outside the window (lower bound)."""
        x = np.asarray(x, dtype=float)
        gaps = np.stack([
            x[..., 0] - (self.lo1 - 1), (self.hi1 + 1) - x[..., 0],
            x[..., 1] - (self.lo2 - 1), (self.hi2 + 1) - x[..., 1],
        ], axis=-1)
        return gaps.min(axis=-1)


@dataclass(frozen=True)
class Couplings:
    sites: np.ndarray
    values: np.ndarray
    seed: int
    realization: int = 0

    def as_dict(self) -> dict:
        return {(int(a), int(b)): float(v) for (a, b), v in zip(self.sites, self.values)}

    def to_json(self) -> str:
        return json.dumps({
            "seed": self.seed,
            "realization": self.realization,
            "sites": self.sites.tolist(),
            "values": [repr(float(v)) for v in self.values],
        })


def coupling_matrix(model: DisorderModel, sites: np.ndarray, seed: int, realizations) -> np.ndarray:
    """Couplings for each realization (rows) and site (columns); schedule independent."""
    r = np.asarray(realizations, dtype=np.int64)[:, None]
    u = site_uniforms(seed, r, sites[None, :, 0], sites[None, :, 1])
    return model.transform(u)


def sample_couplings(model: DisorderModel, window: Window, seed: int, realization: int = 0) -> Couplings:
    sites = window.sites()
    vals = coupling_matrix(model, sites, seed, [realization])[0]
    return Couplings(sites, vals, int(seed), int(realization))


def tail_bound(u: OneSitePotential, R: float) -> float:
    """Upper bound on sup_x sum over sites with |x - g| > R of u(x - g).

    Lattice points in the annulus R+k < r <= R+k+1 number at most
    pi((R+k+1+s)^2 - max(R+k-s, 0)^2) with s the half cell diagonal.
    """
    K = 200_000
    r = R + np.arange(K, dtype=float)
    counts = math.pi * ((r + 1 + _HALF_DIAG) ** 2 - np.maximum(r - _HALF_DIAG, 0.0) ** 2)
    total = float(np.sum(counts * u.envelope(r)))
    if isinstance(u, PowerLaw):
        r_end = R + K
        total += math.pi * (1 + 2 * _HALF_DIAG) * 2 * u.C * r_end ** (2 - u.varkappa) / (u.varkappa - 2)
    return total


@lru_cache(maxsize=64)
def cutoff_radius(u: OneSitePotential, tol_abs: float, cap: int = 10_000) -> int:
    """Smallest integer R whose tail bound is below tol_abs, capped."""
    lo, hi = 0, 1
    while tail_bound(u, hi) > tol_abs:
        if hi >= cap:
            return cap
        lo, hi = hi, min(2 * hi, cap)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_bound(u, mid) > tol_abs:
            lo = mid
        else:
            hi = mid
    return hi


def _lattice_sum(u: OneSitePotential, x: np.ndarray, R: int) -> np.ndarray:
    g = np.arange(-R, R + 1)
    G1, G2 = np.meshgrid(g, g, indexing="ij")
    sites = np.stack([G1.ravel(), G2.ravel()], axis=1).astype(float)
    out = np.zeros(len(x))
    for chunk in np.array_split(np.arange(len(sites)), max(1, len(sites) // 2000)):
        out += u(x[:, None, :] - sites[None, chunk, :]).sum(axis=1)
    return out


@lru_cache(maxsize=64)
def sup_W(u: OneSitePotential, resolution: int = 40, near: int = 30, far: int = 400) -> float:
    """sup over x of W(x) = sum_g u(x - g) over the unit lattice.

    Grid maximization over one unit cell with the near-field lattice sum, plus the
    far field evaluated at the maximizer and a rigorous bound on the remainder.
    """
    t = np.linspace(0.0, 1.0, resolution + 1)
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    x = np.stack([T1.ravel(), T2.ravel()], axis=1)
    w_near = _lattice_sum(u, x, near)
    k = int(np.argmax(w_near))
    best = float(w_near[k])
    if isinstance(u, Indicator) or float(u.envelope(near - 1)) == 0.0:
        return best
    x_star = x[k : k + 1]
    far_sum = float(_lattice_sum(u, x_star, far)[0]) - best
    return best + far_sum + tail_bound(u, far - 1)


def sup_V(u: OneSitePotential, model: DisorderModel) -> float:
    """M = omega_plus * sup W, the essential supremum of the alloy potential."""
    return model.omega_plus * sup_W(u)


def match_sup_norm(u: OneSitePotential, target: float) -> OneSitePotential:
    """Rescale the amplitude so that sup W equals target."""
    return u.scaled(target / sup_W(u))


def check_h4(M: float, b: float) -> None:
    if not M < 2 * b:
        raise ValueError(f"sup V = {M:.6g} is not below the Landau gap 2b = {2 * b:.6g}")


@dataclass(frozen=True)
class AlloyField:
    """sum over window sites of omega_g u(x - g)."""

    potential: OneSitePotential
    couplings: Couplings
    window: Window

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        out = np.zeros(len(flat))
        sites = self.couplings.sites.astype(float)
        nz = np.flatnonzero(self.couplings.values != 0)
        for chunk in np.array_split(nz, max(1, len(nz) // 500)):
            if len(chunk):
                out += (self.potential(flat[:, None, :] - sites[None, chunk, :])
                        * self.couplings.values[chunk]).sum(axis=1)
        return out.reshape(x.shape[:-1])

    def remainder_bound(self, x) -> float:
        """Bound on the contribution of sites outside the window (couplings <= 1)."""
        c = float(np.min(self.window.clearance(x)))
        return tail_bound(self.potential, max(c, 0.0))

    __call__ = evaluate


def eval_alloy(f: AlloyField, x) -> tuple[np.ndarray, float]:
    """Alloy potential at x, and a bound on what the window truncation omitted."""
    return f.evaluate(x), f.remainder_bound(x)


@dataclass(frozen=True)
class PeriodizedField:
    """2L-periodic extension of a field restricted to the box (-L, L)^2."""

    base: object
    lattice: MagneticLattice

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        P = self.lattice.period
        reduced = np.mod(x + self.lattice.L, P) - self.lattice.L
        return self.base(reduced)


def periodize(f, lattice: MagneticLattice) -> PeriodizedField:
    if isinstance(f, PeriodizedField) and f.lattice == lattice:
        return f
    return PeriodizedField(f, lattice)


def ks_tail_law(kappa: float, n: int, seed: int) -> float:
    """p-value of the two-sided KS test of n couplings against E^kappa."""
    from scipy.stats import kstest

    model = DisorderModel(kappa)
    omega = coupling_matrix(model, np.array([[0, 0]]), seed, np.arange(n))[:, 0]
    return float(kstest(omega, lambda e: np.clip(e, 0, 1) ** kappa).pvalue)
