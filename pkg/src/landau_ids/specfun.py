"""Generalized Laguerre polynomials and the angular-momentum Landau basis.

Conventions: the field is b > 0 with symmetric gauge A = (b/2)(-x2, x1), so the
free operator (-i grad - A)^2 - b has levels 2bq and the lowest level consists of
functions g(z) exp(-b|z|^2/4) with g holomorphic in z = x1 + i x2.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .geometry import SampledField
from .tolerances import TOL


class GridResolutionWarning(UserWarning):
    """A sampled derivative is likely inaccurate on the given grid."""


def _laguerre_coefficients(q: int, alpha: int) -> list[tuple[int, float]]:
    """(power, coefficient) pairs of L_q^(alpha) with alpha >= -q."""
    j = q + alpha
    out = []
    for l in range(max(0, q - j), q + 1):
        out.append((l, math.comb(j, q - l) * (-1) ** l / math.factorial(l)))
    return out


def _kahan_sum(terms):
    total = 0.0
    comp = 0.0
    for t in terms:
        y = t - comp
        s = total + y
        comp = (s - total) - y
        total = s
    return total


def laguerre(q: int, alpha: int, xi):
    """L_q^(alpha)(xi) from the finite sum, valid for integer alpha >= -q.

    Negative superscripts are allowed; the sum then starts at l = -alpha.
    Accepts real or complex scalars and arrays.
    """
    q = int(q)
    alpha = int(alpha)
    if q < 0:
        raise ValueError(f"degree must be non-negative, got {q}")
    if alpha < -q:
        raise ValueError(f"superscript {alpha} below -q = {-q}: finite sum undefined")
    x = np.asarray(xi)
    coeffs = _laguerre_coefficients(q, alpha)
    val = _kahan_sum(c * x**l for l, c in coeffs)
    if np.ndim(val) == 0:
        return val.item() if hasattr(val, "item") else val
    return val


def laguerre_derivative(q: int, alpha: int, xi, s: int):
    """s-th derivative of L_q^(alpha), via (-1)^s L_{q-s}^(alpha+s)."""
    if s > q:
        return np.zeros_like(np.asarray(xi, dtype=float)) if np.ndim(xi) else 0.0
    return (-1) ** s * laguerre(q - s, alpha + s, xi)


def laguerre_recurrence(q: int, alpha: int, xi):
    """Three-term recurrence evaluation; an independent route used as a cross-check."""
    x = np.asarray(xi, dtype=float)
    prev = np.ones_like(x)
    if q == 0:
        return prev
    cur = 1.0 + alpha - x
    for k in range(1, q):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur


def psi(q: int, xi):
    """L_q^(0)(xi) exp(-xi/2), the radial profile of the level-q plane kernel."""
    return laguerre(q, 0, xi) * np.exp(-np.asarray(xi) / 2)


def basis_e(j: int, q: int, b: float, x):
    """Angular-momentum basis function e_{j,q} at points x of shape (..., 2).

    Evaluated as a sum of monomials z^(j-q+l) conj(z)^l, so j < q is finite at
    the origin without cancellation.
    """
    if j < 0 or q < 0 or b <= 0:
        raise ValueError("need j >= 0, q >= 0, b > 0")
    x = np.asarray(x, dtype=float)
    z = x[..., 0] + 1j * x[..., 1]
    zb = np.conj(z)
    r2 = (x[..., 0] ** 2 + x[..., 1] ** 2)
    half_b = b / 2
    acc = np.zeros(z.shape, dtype=complex)
    for l, c in _laguerre_coefficients(q, j - q):
        acc = acc + (c * half_b**l) * z ** (j - q + l) * zb**l
    log_pref = 0.5 * (math.lgamma(q + 1) - math.lgamma(j + 1) - math.log(math.pi))
    log_pref += 0.5 * (j - q + 1) * math.log(half_b)
    vals = (-1j) ** q * math.exp(log_pref) * acc * np.exp(-b * r2 / 4)
    return vals if vals.ndim else complex(vals)


def _spectral_diff(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    n = values.shape[axis]
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    shape = [1] * values.ndim
    shape[axis] = n
    f_hat = np.fft.fft(values, axis=axis)
    return np.fft.ifft(1j * k.reshape(shape) * f_hat, axis=axis)


def _resolution_defect(values: np.ndarray) -> float:
    """Largest of edge magnitude and top-quarter spectral weight, relative to the field."""
    scale = np.max(np.abs(values))
    if scale == 0:
        return 0.0
    edge = max(
        np.abs(values[0]).max(), np.abs(values[-1]).max(),
        np.abs(values[:, 0]).max(), np.abs(values[:, -1]).max(),
    ) / scale
    f_hat = np.abs(np.fft.fft2(values))
    n1, n2 = values.shape
    k1 = np.abs(np.fft.fftfreq(n1))[:, None]
    k2 = np.abs(np.fft.fftfreq(n2))[None, :]
    high = (k1 > 0.375) | (k2 > 0.375)
    tail = f_hat[high].max(initial=0.0) / f_hat.max()
    return float(max(edge, tail))


def creation_raise(f: SampledField, b: float, method: str = "spectral") -> SampledField:
    """Apply the creation operator -i d1 - A1 - i(-i d2 - A2) to a sampled field.

    The spectral method treats the sample box as periodic; a GridResolutionWarning
    is issued when the field is not negligible at the box edge or carries
    significant weight near the Nyquist frequency.
    """
    values = np.asarray(f.values, dtype=complex)
    h1 = f.x1[1] - f.x1[0]
    h2 = f.x2[1] - f.x2[0]
    if method == "spectral":
        defect = _resolution_defect(values)
        if defect > TOL.derivative:
            warnings.warn(
                f"grid too coarse or box too small for a spectral derivative "
                f"(relative defect {defect:.2e})",
                GridResolutionWarning,
                stacklevel=2,
            )
        d1 = _spectral_diff(values, h1, 0)
        d2 = _spectral_diff(values, h2, 1)
    elif method == "fd":
        d1 = np.gradient(values, h1, axis=0, edge_order=2)
        d2 = np.gradient(values, h2, axis=1, edge_order=2)
    else:
        raise ValueError(f"unknown derivative method {method!r}")
    X1, X2 = np.meshgrid(f.x1, f.x2, indexing="ij")
    a1 = -b * X2 / 2
    a2 = b * X1 / 2
    out = -1j * d1 - a1 * values - 1j * (-1j * d2 - a2 * values)
    return SampledField(f.x1, f.x2, out)


def check_laguerre_upper(q: int, j: int, xi: float) -> bool:
    """L_q^(j-q)(j xi)^2 <= j^(2q) e^(2 xi)."""
    lhs = laguerre(q, j - q, j * xi) ** 2
    return bool(lhs <= float(j) ** (2 * q) * math.exp(2 * xi))


def check_laguerre_lower(q: int, j: int, xi: float) -> bool:
    """L_q^(j-q)(j xi)^2 >= (q!)^-2 (1/2)^(2+2q) (j-q)^(2q)."""
    lhs = laguerre(q, j - q, j * xi) ** 2
    rhs = 0.5 ** (2 + 2 * q) * float(j - q) ** (2 * q) / math.factorial(q) ** 2
    return bool(lhs >= rhs)


def upper_sweep(q_max: int = 4, j_max: int = 300, xis=None) -> list[tuple[int, int, float]]:
    """All (q, j, xi) on the grid where the upper bound fails."""
    if xis is None:
        xis = np.round(np.arange(0, 3.0 + 1e-12, 0.05), 10)
    bad = []
    for q in range(q_max + 1):
        for j in range(1, j_max + 1):
            xi = np.asarray(xis, dtype=float)
            lhs = laguerre(q, j - q, j * xi) ** 2
            rhs = float(j) ** (2 * q) * np.exp(2 * xi)
            for k in np.flatnonzero(~(lhs <= rhs)):
                bad.append((q, j, float(xi[k])))
    return bad


def lower_threshold(q: int, xis=None, j_max: int = 2000) -> int | None:
    """Smallest j0 > q such that the lower bound holds for every j in [j0, j_max] on the xi grid.

    Returns None if it fails at j_max itself.
    """
    if xis is None:
        xis = np.linspace(0, 0.5, 51)
    xi = np.asarray(xis, dtype=float)
    ok = np.empty(j_max + 1, dtype=bool)
    ok[: q + 1] = False
    rhs_scale = 0.5 ** (2 + 2 * q) / math.factorial(q) ** 2
    for j in range(q + 1, j_max + 1):
        lhs = laguerre(q, j - q, j * xi) ** 2
        ok[j] = bool(np.all(lhs >= rhs_scale * float(j - q) ** (2 * q)))
    if not ok[j_max]:
        return None
    j0 = j_max
    while j0 - 1 > q and ok[j0 - 1]:
        j0 -= 1
    return j0
