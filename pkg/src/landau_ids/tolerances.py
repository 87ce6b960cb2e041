"""Numerical tolerances shared across modules."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    flux_integer: float = 1e-9
    # fiber projections
    proj_idempotency: float = 0.05
    guard_low: float = 0.1
    guard_high: float = 0.9
    kernel_tail: float = 1e-12
    # lattice sums of the Gelfand section / fiber kernel
    gelfand_tail: float = 1e-8
    gelfand_shells: int = 3
    # spectral derivative diagnostics
    derivative: float = 1e-6
    # alloy truncation, relative to sup V
    alloy_tail_rel: float = 1e-8
    # cross-level Gram defect tolerated in compressed fiber Hamiltonians
    gram_defect: float = 1e-8
    # bands narrower than this count as flat
    band_tol: float = 1e-8
    # minimum nonzero per-sample counts at the smallest energy
    starvation_count: int = 100


TOL = Tolerances()
