"""Numerical probes of the standalone inequalities: resolvent decay, scale schedules,
Gram-determinant bounds, local mass ratios and large deviations of coupling sums."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy import integrate, optimize, special
from scipy.sparse.linalg import eigsh, splu

from .specfun import basis_e

# ---------------------------------------------------------------- resolvent decay


@dataclass
class DecayFit:
    z: complex
    separations: np.ndarray
    norms: np.ndarray
    rate: float
    intercept: float
    eta: float
    dist: float
    epsilon_admissible: float

    @property
    def rate_over_eta(self) -> float:
        return self.rate / self.eta


def torus_magnetic_laplacian(b: float, side: float, points: int) -> tuple[sp.csr_matrix, float]:
    """Peierls-phase five-point (-i grad - A)^2 on a square torus with integer total flux.

    Landau gauge A = (0, b x1); the x1 seam carries the twist exp(-i b side x2) so
    that every plaquette encloses flux b h^2.  Returns (matrix, h).
    """
    flux = b * side * side / (2 * math.pi)
    if abs(flux - round(flux)) > 1e-9 * max(1.0, flux):
        raise ValueError(f"total flux {flux:.12g} through the torus is not an integer")
    n = points
    h = side / n
    idx = np.arange(n * n).reshape(n, n)  # [i1, i2]
    x1 = np.arange(n) * h
    x2 = np.arange(n) * h
    # hop +x2 at column i1: phase exp(i b x1 h)
    ph2 = np.exp(1j * b * x1 * h)[:, None] * np.ones((1, n))
    T2 = sp.coo_matrix((ph2.ravel(), (idx.ravel(), np.roll(idx, -1, axis=1).ravel())), shape=(n * n, n * n))
    ph1 = np.ones((n, n), dtype=complex)
    ph1[-1, :] = np.exp(-1j * b * side * x2)
    T1 = sp.coo_matrix((ph1.ravel(), (idx.ravel(), np.roll(idx, -1, axis=0).ravel())), shape=(n * n, n * n))
    T = (T1 + T2).tocsr()
    H = (4 * sp.identity(n * n, format="csr") - T - T.conj().T) / (h * h)
    return H.tocsr(), h


def torus_side(b: float, cells: int) -> float:
    """Integer-flux torus side closest to `cells` magnetic lengths."""
    k = max(1, round(b * (cells / math.sqrt(b)) ** 2 / (2 * math.pi)))
    return math.sqrt(2 * math.pi * k / b)


def torus_alloy(b: float, cells: int = 24, amplitude: float = 0.5, width: float = 0.5, seed: int = 0):
    """Bounded random potential on the probe torus: Gaussian bumps at cell corners, uniform couplings."""
    side = torus_side(b, cells)
    g = np.arange(cells) * side / cells
    sites = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    omega = np.random.default_rng(seed).uniform(0.0, 1.0, len(sites))

    def Q(points):
        out = np.zeros(len(points))
        for chunk in np.array_split(np.arange(len(points)), max(1, len(points) // 2048)):
            d = points[chunk, None, :] - sites[None, :, :]
            d -= side * np.round(d / side)
            out[chunk] = np.exp(-(d**2).sum(-1) / width**2) @ omega
        return amplitude * out

    return Q


def combes_thomas_probe(b: float, Q=None, z: complex = None, cells: int = 24, per_cell: int = 4,
                        fit_range: tuple[float, float] = (2.0, 10.0), eta_min: float = 1e-3) -> DecayFit:
    """Cell-block Hilbert-Schmidt norms of (X - z)^-1 with X = H0 + Q on a magnetic torus.

    The torus side is the integer-flux length closest to `cells` magnetic lengths,
    split into cells x cells blocks of per_cell^2 grid points.  Q is a callable on
    points (N, 2) or None.
    """
    side = torus_side(b, cells)
    n = cells * per_cell
    H, h = torus_magnetic_laplacian(b, side, n)
    x = (np.arange(n) + 0.5) * h
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=1)
    q_vals = np.zeros(n * n) if Q is None else np.asarray(Q(pts), dtype=float).ravel()
    X = (H - b * sp.identity(n * n) + sp.diags(q_vals)).tocsc()
    z = complex(b if z is None else z)
    near = eigsh(X, k=6, sigma=z.real, which="LM", return_eigenvectors=False)
    dist = float(np.min(np.abs(near - z)))
    q_inf = float(np.max(np.abs(q_vals))) if q_vals.size else 0.0
    eta = dist / (abs(z) + q_inf + 1)
    if eta < eta_min:
        raise ValueError(f"z = {z} is too close to the spectrum (eta = {eta:.2e})")
    cell_of = (np.arange(n) // per_cell)
    C1, C2 = np.meshgrid(cell_of, cell_of, indexing="ij")
    cell_id = (C1 * cells + C2).ravel()
    source = np.flatnonzero(cell_id == 0)
    rhs = np.zeros((n * n, len(source)), dtype=complex)
    rhs[source, np.arange(len(source))] = 1.0
    G = splu((X - z * sp.identity(n * n, format="csc")).tocsc()).solve(rhs)
    block_sq = np.bincount(cell_id, weights=np.sum(np.abs(G) ** 2, axis=1), minlength=cells * cells)
    a1, a2 = np.divmod(np.arange(cells * cells), cells)
    d1 = np.minimum(a1, cells - a1)
    d2 = np.minimum(a2, cells - a2)
    sep = np.hypot(d1, d2) * side / cells
    norms = np.sqrt(block_sq)
    sel = (sep >= fit_range[0]) & (sep <= fit_range[1]) & (norms > 0)
    slope, intercept = np.polyfit(sep[sel], np.log(norms[sel]), 1)
    C = max(math.sqrt((2 * q + 1) * b) / (2 * b * q + 1) for q in range(200))
    return DecayFit(z, sep, norms, float(-slope), float(intercept), eta, dist, 1 / (8 * (C + 1)))


# ---------------------------------------------------------------- scale schedules


@dataclass
class ScheduleParams:
    case: str
    E_log: float                 # ln E
    L_log: float
    l: float
    m: float
    nu: float
    C: float
    m_lower_ok: bool
    m_upper_ok: bool
    tail_ok: bool
    tail_margin: float            # lhs - rhs in log form; > 0 means it holds

    @property
    def violated(self) -> list[str]:
        out = []
        if not self.m_lower_ok:
            out.append("mode-count-lower")
        if not self.m_upper_ok:
            out.append("mode-count-upper")
        if not self.tail_ok:
            out.append("tail-smallness")
        return out

    @property
    def ok(self) -> bool:
        return not self.violated


@dataclass(frozen=True)
class PowerLawCase:
    varkappa: float = 4.0
    varkappa_prime: float = 4.5
    m_scale: float = 1.0

    def __post_init__(self):
        if not (2 < self.varkappa < self.varkappa_prime):
            raise ValueError("need 2 < varkappa < varkappa'")


@dataclass(frozen=True)
class ExponentialCase:
    beta: float = 2.0
    beta_prime: float = 2.5
    m_scale: float = 1.0

    def __post_init__(self):
        if not (0 < self.beta < self.beta_prime):
            raise ValueError("need 0 < beta < beta'")


@dataclass(frozen=True)
class SuperGaussianCase:
    varsigma: float = 3.0
    delta: float = 0.25
    m_scale: float = 1.0

    def __post_init__(self):
        if not (self.varsigma > 1 and 0 < self.delta < 0.5):
            raise ValueError("need varsigma > 1 and delta in (0, 1/2)")


def _log_L(t: float, nu: float, a: float) -> float:
    # L = (2n+1) a / 2 with n = E^-nu, evaluated in logs for tiny E
    return math.log(a / 2) + float(np.logaddexp(math.log(2) + nu * t, 0.0))


def _schedule_point(t: float, case, b: float, a: float, C: float, nu: float) -> ScheduleParams:
    """Constraints at E = exp(-t)."""
    if isinstance(case, PowerLawCase):
        nu0 = max(1 / (case.varkappa - 2), nu) + 0.1
        log_l = t / (case.varkappa_prime - 2)
        log_m = math.log(case.m_scale) + 2 * t / (case.varkappa - 2)
        name = "powerlaw"
    elif isinstance(case, ExponentialCase):
        nu0 = nu
        beta0 = max(1.0, 2 / case.beta)
        log_l = math.log(t) / case.beta_prime if t > 0 else -np.inf
        log_m = math.log(case.m_scale) + beta0 * math.log(t)
        name = "exponential"
    elif isinstance(case, SuperGaussianCase):
        mu = C * case.varsigma * case.delta / 2
        if mu >= 1:
            raise ValueError(f"mu = C varsigma delta / 2 = {mu:.4g} must be < 1")
        nu0 = nu
        log_l = case.delta / 2 * math.log(t)
        lt = math.log(t)
        log_m = math.log(case.m_scale * case.varsigma * t / lt) if lt > 0 else np.inf
        name = "supergaussian"
    else:
        raise TypeError(f"unknown schedule case {case!r}")
    log_L = _log_L(t, nu0, a)
    log_bl2 = math.log(b) + 2 * log_l
    lower = log_bl2 - math.log(C) <= log_m
    upper = log_m <= math.log(C * b) + 2 * log_L
    with np.errstate(over="ignore", invalid="ignore"):
        m = math.exp(log_m) if log_m < 700 else math.inf
        log_ratio = math.log(C) + log_bl2 - log_m
        mterm = m * log_ratio if m != math.inf else (math.inf if log_ratio > 0 else -math.inf)
    rhs = math.log(C) - 0.5 * math.exp(min(log_bl2, 700.0)) + mterm
    lhs = -t + 2 * (log_l - log_L)
    margin = lhs - rhs
    return ScheduleParams(name, -t, log_L, math.exp(min(log_l, 700.0)), m, nu0, C, bool(lower), bool(upper),
                          bool(margin > 0), float(margin))


def schedule_check(E: float, case, b: float = 2 * math.pi, a: float = 1.0, C: float = 2.0,
                   nu: float = 0.5) -> ScheduleParams:
    """Materialize (L, l, m) for energy E and test both scale constraints.

    E may be given as a float in (0, 1); use schedule_threshold for energies below
    double-precision range.
    """
    if not (0 < E < 1):
        raise ValueError("E must lie in (0, 1)")
    return _schedule_point(-math.log(E), case, b, a, C, nu)


@dataclass
class ScheduleThreshold:
    log10_E_star: float | None
    scanned_to_log10: float
    first_failure: ScheduleParams | None


def schedule_threshold(case, b: float = 2 * math.pi, a: float = 1.0, C: float = 2.0, nu: float = 0.5,
                       t_max: float = 1e60, points: int = 3000) -> ScheduleThreshold:
    """Largest scanned E* such that both constraints hold at every scanned E <= E*.

    Scans t = -ln E geometrically on [0.01, t_max].
    """
    ts = np.geomspace(0.01, t_max, points)
    results = [_schedule_point(float(t), case, b, a, C, nu) for t in ts]
    ok = np.array([r.ok for r in results])
    if not ok[-1]:
        return ScheduleThreshold(None, -t_max / math.log(10), results[-1])
    bad = np.flatnonzero(~ok)
    start = 0 if len(bad) == 0 else bad[-1] + 1
    failure = results[bad[-1]] if len(bad) else None
    return ScheduleThreshold(-float(ts[start]) / math.log(10), -t_max / math.log(10), failure)


# ---------------------------------------------------------------- Gram determinants


def _det_fraction(rows: list[list[Fraction]]) -> Fraction:
    a = [r[:] for r in rows]
    n = len(a)
    det = Fraction(1)
    for i in range(n):
        piv = next((r for r in range(i, n) if a[r][i] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != i:
            a[i], a[piv] = a[piv], a[i]
            det = -det
        det *= a[i][i]
        for r in range(i + 1, n):
            f = a[r][i] / a[i][i]
            if f:
                a[r] = [x - f * y for x, y in zip(a[r], a[i])]
    return det


def delta_direct(q: int, p: int) -> Fraction:
    """Exact determinant of the (q+1) x (q+1) matrix 1/(j+k+p+1)."""
    return _det_fraction([[Fraction(1, j + k + p + 1) for k in range(q + 1)] for j in range(q + 1)])


def delta_recurrence(q: int, p: int) -> Fraction:
    d = Fraction(1, p + 1)
    for k in range(1, q + 1):
        den = p + 2 * k + 1
        for r in range(k):
            den *= (p + k + r + 1) ** 2
        d *= Fraction(math.factorial(k) ** 2, den)
    return d


def delta_lower(q: int, p: int) -> Fraction:
    num = math.prod(math.factorial(r) ** 2 for r in range(q + 1))
    return Fraction(num, (p + 2 * q + 1) ** ((q + 1) ** 2))


@dataclass
class DeltaCheck:
    q: int
    p: int
    direct: float
    recurrence: float
    lower: float
    exact_agreement: bool

    @property
    def relative_gap(self) -> float:
        return abs(self.direct - self.recurrence) / abs(self.direct)

    @property
    def lower_ok(self) -> bool:
        return self.lower <= self.direct


def delta_q_recurrence(q: int, p: int) -> DeltaCheck:
    if not (0 <= q <= 8) or p < 0:
        raise ValueError("need 0 <= q <= 8 and p >= 0")
    d = delta_direct(q, p)
    r = delta_recurrence(q, p)
    return DeltaCheck(q, p, float(d), float(r), float(delta_lower(q, p)), d == r)


@dataclass
class DeterminantCheck:
    q: int
    p: int
    rho: float
    lower: float
    value: float
    upper: float
    upper_corrected: float
    slack: float = 1e-6

    @property
    def lower_ok(self) -> bool:
        return self.lower <= self.value * (1 + self.slack) + 1e-300

    @property
    def upper_ok(self) -> bool:
        return self.value <= self.upper * (1 + self.slack)

    @property
    def corrected_ok(self) -> bool:
        return self.lower_ok and self.value <= self.upper_corrected * (1 + self.slack)

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def determinant_bound_check(q: int, p: int, rho: float, c) -> DeterminantCheck:
    """Two-sided bound on the integral of |pi(s)|^2 e^-s s^p over (0, rho), pi(s) = sum c_j s^j.

    `upper` is the bound (1 + rho^q) rho^(p+1)/(p+1) |c|^2.  `upper_corrected`
    uses the operator norm of the rank-one integrand sum_j s^(2j) e^-s s^p, which
    the former underestimates once q >= 1 and rho > 1.
    """
    c = np.asarray(c, dtype=complex)
    if len(c) != q + 1:
        raise ValueError("need q + 1 coefficients")
    if not (0 <= q <= 8) or p < 0 or rho <= 0:
        raise ValueError("need 0 <= q <= 8, p >= 0, rho > 0")
    c2 = float(np.sum(np.abs(c) ** 2))
    if c2 == 0:
        return DeterminantCheck(q, p, rho, 0.0, 0.0, 0.0, 0.0)

    def integrand(s):
        return abs(np.polyval(c[::-1], s)) ** 2 * math.exp(-s) * s**p

    value, err, info = integrate.quad(integrand, 0.0, rho, epsabs=1e-9, epsrel=1e-11, limit=200,
                                      full_output=True)[:3]
    if err > 1e-9 + 1e-9 * abs(value):
        raise RuntimeError(f"quadrature did not converge (error estimate {err:.2e})")
    prod = math.prod(math.factorial(r) ** 2 for r in range(q + 1))
    log_lower = (math.log(prod) - (q + 1) * rho + q * (q + 1) * math.log(rho) - q * math.log1p(rho**q)
                 + (p + 1) * math.log(rho) - ((q + 1) ** 2 - q) * math.log(p + 2 * q + 1))
    lower = math.exp(log_lower) * c2
    upper = (1 + rho**q) * rho ** (p + 1) / (p + 1) * c2
    upper_c = sum(rho ** (2 * j + p + 1) / (2 * j + p + 1) for j in range(q + 1)) * c2
    return DeterminantCheck(q, p, rho, lower, float(value), upper, upper_c)


def determinant_suite(count: int = 1000, seed: int = 0, q_max: int = 4, p_max: int = 10,
                      rho_range=(0.1, 10.0)) -> list[DeterminantCheck]:
    """Random cases with complex unit coefficient vectors."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        q = int(rng.integers(0, q_max + 1))
        p = int(rng.integers(0, p_max + 1))
        rho = float(rng.uniform(*rho_range))
        c = rng.normal(size=q + 1) + 1j * rng.normal(size=q + 1)
        out.append(determinant_bound_check(q, p, rho, c / np.linalg.norm(c)))
    return out


# ---------------------------------------------------------------- local mass ratios


CALIBRATION_FILE = "mass_ratio_calibration.json"


def _disc_rule(radius: float, nr: int = 48, nphi: int = 64):
    r, wr = np.polynomial.legendre.leggauss(nr)
    r = radius * (r + 1) / 2
    wr = wr * radius / 2
    phi = 2 * math.pi * np.arange(nphi) / nphi
    R, P = np.meshgrid(r, phi, indexing="ij")
    pts = np.stack([R * np.cos(P), R * np.sin(P)], axis=-1).reshape(-1, 2)
    w = (wr[:, None] * R * (2 * math.pi / nphi)).ravel()
    return pts, w


def _centered_mass(j: int, q: int, b: float, radius: float, nodes: int = 400) -> float:
    """Integral of |e_{j,q}|^2 over the disc |x| <= radius (radial quadrature)."""
    edges = np.linspace(0.0, radius, 9)
    total = 0.0
    x, w = np.polynomial.legendre.leggauss(nodes // 8)
    for lo, hi in zip(edges[:-1], edges[1:]):
        r = lo + (hi - lo) * (x + 1) / 2
        vals = np.abs(basis_e(j, q, b, np.stack([r, np.zeros_like(r)], axis=-1))) ** 2
        total += float(np.sum(w * (hi - lo) / 2 * vals * r)) * 2 * math.pi
    return total


@dataclass
class MassRatio:
    q: int
    m: int
    l: float
    gamma: tuple[float, float]
    eps: float
    ratio: float
    C: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.ratio >= self.bound

    @property
    def required_C(self) -> float:
        """Smallest constant for which this case satisfies the bound."""
        return -math.log(self.ratio) / (self.m * math.log(self.l))


def local_mass_ratio(q: int, coeffs, l: float, gamma, eps: float = 0.5, b: float = 1.0) -> float:
    coeffs = np.asarray(coeffs, dtype=complex)
    if np.hypot(*gamma) > l * math.sqrt(2) / 2 + 1e-12:
        raise ValueError("|gamma| must not exceed l sqrt(2)/2")
    if eps >= l:
        raise ValueError("need eps < l")
    if len(coeffs) > 65:
        raise ValueError("at most 65 coefficients (m <= 64)")
    pts, w = _disc_rule(eps)
    x = pts + np.asarray(gamma, dtype=float)
    P = sum(c * basis_e(j, q, b, x) for j, c in enumerate(coeffs) if c != 0)
    num = float(np.sum(w * np.abs(P) ** 2))
    big = math.sqrt(2) * l
    den = sum(abs(c) ** 2 * _centered_mass(j, q, b, big) for j, c in enumerate(coeffs))
    return num / den


def frozen_mass_constant() -> float:
    data = json.loads(resources.files("landau_ids").joinpath("data", CALIBRATION_FILE).read_text())
    return float(data["C"])


def mass_ratio_check(q: int, m: int, l: float, gamma, coeffs, eps: float = 0.5, b: float = 1.0,
                     C: float | None = None) -> MassRatio:
    """Ratio of |P_m|^2 mass on the eps-disc at gamma to the mass on |x| <= sqrt(2) l.

    P_m = sum_{j <= m} c_j e_{j,q}.  The denominator uses rotational orthogonality of
    the e_{j,q} on centered discs.  Bound exp(-C m ln l) with the frozen C by default.
    """
    if m < 0 or m > 64:
        raise ValueError("need 0 <= m <= 64")
    coeffs = np.asarray(coeffs, dtype=complex)
    if len(coeffs) != m + 1:
        raise ValueError("need m + 1 coefficients")
    C = frozen_mass_constant() if C is None else C
    ratio = local_mass_ratio(q, coeffs, l, gamma, eps, b)
    return MassRatio(q, m, l, tuple(map(float, gamma)), eps, ratio, C, math.exp(-C * m * math.log(l)))


def mass_ratio_cases(seed: int, qs=(0, 1, 2), ms=(1, 2, 4, 8, 16, 32), ls=(8.0, 16.0), per: int = 2):
    """Deterministic case list: random unit complex coefficients and gamma in the admissible disc."""
    rng = np.random.default_rng(seed)
    cases = []
    for q in qs:
        for m in ms:
            for l in ls:
                for _ in range(per):
                    c = rng.normal(size=m + 1) + 1j * rng.normal(size=m + 1)
                    c /= np.linalg.norm(c)
                    r = l * math.sqrt(2) / 2 * math.sqrt(rng.uniform())
                    a = rng.uniform(0, 2 * math.pi)
                    cases.append((q, m, l, (r * math.cos(a), r * math.sin(a)), c))
    return cases


def calibrate_mass_constant(seed: int = 2024, safety: float = 1.25, **kw) -> dict:
    """Largest required constant over the calibration set, times a safety factor, rounded up."""
    cases = mass_ratio_cases(seed, **kw)
    req = [mass_ratio_check(q, m, l, g, c, C=0.0).required_C for q, m, l, g, c in cases]
    return {"C": math.ceil(max(req) * safety * 100) / 100, "max_required": max(req), "seed": seed,
            "safety": safety, "cases": len(cases), "eps": 0.5, "b": 1.0}


# ---------------------------------------------------------------- large deviations


def disc_sites(l: float) -> np.ndarray:
    k = int(math.floor(l))
    g = np.arange(-k, k + 1)
    G = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    return G[np.hypot(G[:, 0], G[:, 1]) <= l]


def irwin_hall_log_cdf(n: int, x: Fraction) -> float:
    """ln P(U_1 + ... + U_n <= x) for i.i.d. uniforms, exact rational arithmetic."""
    x = Fraction(x)
    if x <= 0:
        return -math.inf
    if x >= n:
        return 0.0
    total = Fraction(0)
    for k in range(int(math.floor(x)) + 1):
        total += (-1) ** k * math.comb(n, k) * (x - k) ** n
    total /= math.factorial(n)
    return math.log(total.numerator) - math.log(total.denominator)


def chernoff_log_bound(kappa: float, n: int, x: float) -> float:
    """ln of inf_lambda exp(lambda x) E[exp(-lambda omega)]^n with omega = U^(1/kappa)."""
    def log_mgf(lam):
        # E exp(-lam w) = kappa lam^-kappa gamma_lower(kappa, lam)
        return math.log(kappa) - kappa * math.log(lam) + special.gammaln(kappa) + math.log(
            special.gammainc(kappa, lam))

    f = lambda s: math.exp(s) * x + n * log_mgf(math.exp(s))
    res = optimize.minimize_scalar(f, bounds=(-10.0, 12.0), method="bounded", options={"xatol": 1e-10})
    return float(min(res.fun, 0.0))


@dataclass
class LargeDeviation:
    kappa: float
    l: float
    t: float
    sites: int
    samples: int
    hits: int
    log_bound: float
    log_chernoff: float
    log_exact: float | None
    C3: float
    C4: float

    @property
    def empirical(self) -> float:
        return self.hits / self.samples

    @property
    def confidence_upper(self) -> float:
        """One-sided 95% upper bound on the probability (exact binomial)."""
        if self.hits == self.samples:
            return 1.0
        from scipy.stats import beta

        return float(beta.ppf(0.95, self.hits + 1, self.samples - self.hits))

    @property
    def ok(self) -> bool:
        """Empirical frequency below the bound (zero hits pass; the confidence bound is reported)."""
        if self.hits == 0:
            return True
        return math.log(self.empirical) <= self.log_bound


def large_deviation_probe(kappa: float, l: float, t: float, samples: int, seed: int = 0,
                          C3: float = 2.0, C4: float = 1.0, chunk: int = 20000) -> LargeDeviation:
    """Frequency of l^-2 sum_{|gamma| <= l} omega_gamma <= t versus exp(C4 l^2 ln P(omega <= C3 t))."""
    if l > 64 or l <= 0 or t <= 0:
        raise ValueError("need 0 < l <= 64 and t > 0")
    n = len(disc_sites(l))
    rng = np.random.Generator(np.random.Philox(seed))
    hits = 0
    thresh = t * l * l
    for start in range(0, samples, chunk):
        size = min(chunk, samples - start)
        s = (rng.random((size, n)) ** (1 / kappa)).sum(axis=1)
        hits += int(np.sum(s <= thresh))
    p0 = min(1.0, (C3 * t) ** kappa)
    log_bound = C4 * l * l * math.log(p0) if p0 > 0 else -math.inf
    exact = None
    if kappa == 1.0:
        exact = irwin_hall_log_cdf(n, Fraction(t).limit_denominator(10**9) * Fraction(l * l).limit_denominator(10**9))
    chern = chernoff_log_bound(kappa, n, thresh)
    return LargeDeviation(kappa, l, t, n, samples, hits, log_bound, chern, exact, C3, C4)


# ---------------------------------------------------------------- reporting


def write_rows_csv(path, rows: list[dict], header_lines: list[str] = ()) -> None:
    """CSV with '#' comment lines followed by a header row; keys of the first row fix the columns."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
