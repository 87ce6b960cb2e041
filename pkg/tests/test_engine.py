import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landau_ids.disorder import DisorderModel, Exponential, PowerLaw, match_sup_norm
from landau_ids.engine import (
    ReducedEnsemble,
    StarvationWarning,
    band_sweep,
    ids_increment,
    norm_trial,
    periodic_ids,
    plane_norm,
    random_pairs,
    reduced_ids,
    sandwich_check,
    trial_lower_bound,
)
from landau_ids.geometry import make_grid, make_lattice, theta_nodes

B = 2 * math.pi
LAT = make_lattice(B, 1, 1)
SAT = B / (2 * math.pi)
KAPPA1 = DisorderModel(1.0)
EXP = match_sup_norm(Exponential(2.0), 0.4 * 2 * B)


@pytest.fixture(scope="module")
def ensemble():
    nodes, _ = theta_nodes(LAT, 2)
    return ReducedEnsemble(0, LAT, EXP, KAPPA1, nodes, max_window=8)


def test_saturation_above_sup_norm(ensemble):
    E = np.array([0.05, 0.2, 1.01]) * ensemble.M
    curve = reduced_ids(0, LAT, EXP, KAPPA1, E, samples=64, seed=1, ensemble=ensemble)
    assert curve.values[-1] == pytest.approx(SAT, rel=1e-12)
    assert curve.stderr[-1] == 0.0
    assert curve.meta["saturation_value"] == pytest.approx(SAT)


def test_curve_is_monotone_and_bounded(ensemble):
    E = np.geomspace(1e-2, 1.0, 12) * ensemble.M
    curve = reduced_ids(0, LAT, EXP, KAPPA1, E, samples=128, seed=2, ensemble=ensemble)
    assert np.all(np.diff(curve.values) >= 0)
    assert np.all((curve.values >= 0) & (curve.values <= SAT))


def test_bit_reproducible_across_runs_and_threads(ensemble):
    E = np.geomspace(0.05, 1.0, 6) * ensemble.M
    a = reduced_ids(0, LAT, EXP, KAPPA1, E, samples=300, seed=5, chunk=64, ensemble=ensemble)
    b = reduced_ids(0, LAT, EXP, KAPPA1, E, samples=300, seed=5, chunk=64, ensemble=ensemble, threads=3)
    c = reduced_ids(0, LAT, EXP, KAPPA1, E, samples=300, seed=6, chunk=64, ensemble=ensemble)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.stderr.tobytes() == b.stderr.tobytes()
    assert a.values.tobytes() != c.values.tobytes()


def test_rejects_unordered_energies(ensemble):
    with pytest.raises(ValueError):
        reduced_ids(0, LAT, EXP, KAPPA1, [1.0, 0.5], samples=4, ensemble=ensemble)


def test_reduced_matrices_hermitian(ensemble):
    R = ensemble.matrices(ensemble.couplings(0, np.arange(3)))
    assert np.allclose(R, np.conj(np.swapaxes(R, -1, -2)))
    assert R.shape == (3, ensemble.theta_count, LAT.degeneracy, LAT.degeneracy)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), bump=st.floats(0.0, 1.0))
def test_counts_decrease_when_couplings_increase(ensemble, seed, bump):
    omega = ensemble.couplings(seed, [0])
    rng = np.random.default_rng(seed)
    larger = omega + bump * rng.uniform(size=omega.shape)
    lo = ensemble.eigenvalues(omega)
    hi = ensemble.eigenvalues(larger)
    # V is monotone in the couplings (u >= 0), hence so is every eigenvalue
    assert np.all(hi >= lo - 1e-10)


def test_starvation_warning(ensemble):
    with pytest.warns(StarvationWarning):
        curve = reduced_ids(0, LAT, EXP, KAPPA1, [1e-6, 1e-5], samples=16, seed=0, ensemble=ensemble)
    assert curve.meta["starved"]


def test_window_remainder_reported(ensemble):
    curve = reduced_ids(0, LAT, EXP, KAPPA1, [0.5], samples=4, ensemble=ensemble)
    assert 0 <= curve.meta["window_remainder_bound"] < 1e-6


def test_periodic_free_operator_has_level_jumps():
    E = np.array([-0.5, 0.5, 2 * B - 0.5, 2 * B + 0.5, 4 * B - 0.5])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        curve = periodic_ids(LAT, lambda x: np.zeros(len(x)), E, theta_per_side=2, q_max=3)
    assert np.allclose(curve.values, SAT * np.array([0, 1, 1, 2, 2]), atol=1e-12)


def test_periodic_nonnegative_potential_lowers_ids():
    V = lambda x: 1.5 * (2 + np.cos(2 * np.pi * x[:, 0]) + np.cos(2 * np.pi * x[:, 1]))
    E = np.linspace(0.5, 6.5, 13)
    free = periodic_ids(LAT, lambda x: np.zeros(len(x)), E, theta_per_side=2, q_max=1)
    pert = periodic_ids(LAT, V, E, theta_per_side=2, q_max=1)
    assert np.all(pert.values <= free.values + 1e-12)


def test_periodic_ids_stable_under_box_growth():
    V = lambda x: 1.5 * (2 + np.cos(2 * np.pi * x[:, 0]) + np.cos(2 * np.pi * x[:, 1]))
    E = np.linspace(0.5, 6.5, 25)
    small = periodic_ids(make_lattice(B, 1, 1), V, E, theta_per_side=4, q_max=1)
    big = periodic_ids(make_lattice(B, 1, 2), V, E, theta_per_side=4, q_max=1)
    assert np.mean(np.abs(small.values - big.values)) < 0.01


def test_ids_increment_bracket_is_ordered():
    out = ids_increment(0, [0.2, 0.5], 0.5, 2.0, LAT, EXP, KAPPA1, samples=64, seed=3, max_window=6)
    assert np.all(out["lower"] <= out["upper"])
    with pytest.raises(ValueError):
        ids_increment(0, [0.2], 1.5, 2.0, LAT, EXP, KAPPA1)


@pytest.fixture(scope="module")
def pairs():
    return random_pairs(LAT, EXP, KAPPA1, 12, seed=3, max_window=8)


def test_sandwich_admissible_constants_have_no_violations(pairs):
    E = np.array([0.05, 0.1, 0.2]) * 2 * B
    cache = {}
    rep0 = sandwich_check(0, LAT, pairs, E, c0=2.0, q_max=2, projection_cache=cache)
    rep1 = sandwich_check(1, LAT, pairs, E, c12=(0.5, 2.0), q_max=2, projection_cache=cache)
    assert rep0.hypothesis_ok and rep1.hypothesis_ok
    assert rep0.violation_fraction == 0.0
    assert rep1.violation_fraction == 0.0


def test_sandwich_warns_on_inadmissible_constants(pairs):
    with pytest.warns(UserWarning, match="admissible"):
        rep = sandwich_check(0, LAT, pairs[:2], [1.0], c0=1.0, q_max=1)
    assert not rep.hypothesis_ok


def test_trial_bound_below_reduced_ids():
    pl = match_sup_norm(PowerLaw(4.0), 0.4 * 2 * B)
    nodes, _ = theta_nodes(LAT, 2)
    ens = ReducedEnsemble(0, LAT, pl, KAPPA1, nodes, max_window=8)
    E = np.array([0.2, 0.4, 0.8]) * ens.M
    curve = reduced_ids(0, LAT, pl, KAPPA1, E, samples=400, seed=9, ensemble=ens)
    trial = trial_lower_bound(0, E, LAT, pl, KAPPA1, samples=400, seed=9, max_window=8)
    assert np.all(curve.values >= trial.implied_ids - 2 * (curve.stderr + trial.implied_stderr))
    # the analytic product bound never exceeds the exact probability by more than noise
    assert np.all(trial.product_bound <= trial.probability + 3 * trial.stderr + 1e-12)


def test_plane_norm_closed_form():
    assert plane_norm(0, B) == pytest.approx(1.0)
    assert plane_norm(1, B) == pytest.approx(1 / math.pi)
    assert plane_norm(2, 2.0) == pytest.approx(2 * math.pi)


@pytest.mark.parametrize("q", [0, 1])
def test_norm_trial_on_torus(q):
    res = norm_trial(q, LAT)
    assert res.ok
    assert res.torus_norm == pytest.approx(res.plane_norm, rel=1e-4)


def test_band_sweep_constant_potential_gives_flat_shifted_levels():
    sweep = band_sweep(lambda x: np.full(len(x), 0.3), 1, 2, theta_per_side=3, q_max=1)
    b = sweep.cell.b
    assert not sweep.nonconstant.any()
    assert np.allclose(sweep.band_min, [0.3, 2 * b + 0.3], atol=1e-9)


def test_band_sweep_zero_potential_sits_on_levels():
    sweep = band_sweep(lambda x: np.zeros(len(x)), 2, 3, theta_per_side=3, q_max=1)
    b = sweep.cell.b
    assert sweep.bands.shape[1] == 2 * 2
    assert np.allclose(sweep.band_max, [0, 0, 2 * b, 2 * b], atol=1e-9)


def test_band_sweep_bump_has_dispersive_band():
    def bumps(x):
        y = x - np.array([2.0, 1.0]) * np.round(x / np.array([2.0, 1.0]))
        return 0.5 * np.exp(-(y**2).sum(axis=1) / 0.09)

    sweep = band_sweep(bumps, 1, 2, theta_per_side=3, q_max=1)
    assert sweep.nonconstant.any()
    assert (sweep.band_max - sweep.band_min).max() > 1e-3


def test_band_sweep_rejects_nonperiodic_potential():
    with pytest.raises(ValueError, match="periodic"):
        band_sweep(lambda x: x[:, 0] ** 2, 1, 2, theta_per_side=2, q_max=1)


def test_grid_reuse_matches_default():
    grid = make_grid(LAT)
    pairs_a = random_pairs(LAT, EXP, KAPPA1, 2, seed=1, grid=grid, max_window=4)
    pairs_b = random_pairs(LAT, EXP, KAPPA1, 2, seed=1, max_window=4)
    for (ta, va), (tb, vb) in zip(pairs_a, pairs_b):
        assert np.array_equal(ta, tb) and np.array_equal(va, vb)
