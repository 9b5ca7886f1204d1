import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from romlift.core import Potential, SnapshotMatrix, SpatialGrid, gram, tuple_norm, tuple_norm_diff
from romlift.diagnostics import (
    ProjectionKind,
    causal_projection,
    condition_number,
    evaluate_bounds,
    full_projection,
    residual_matrix,
    stewart_sun_check,
)
from romlift.errors import GridMismatchError, NotPositiveDefiniteError, ValidationError
from romlift.gramian import GramianMatrix, lift_internal, mass_from_data, mass_from_snapshots
from romlift.harness.verify import random_spd, stewart_sun_random

from helpers import hat_setup, rel, simulate, step_setup


def _weak(grid):
    return Potential.gaussian(grid, 0.05, 2.0, 0.5)


def test_projection_of_background_is_identity():
    grid, fam, samp = hat_setup()
    _, _, U0 = simulate(grid, fam, samp, Potential.zero(grid))
    p = causal_projection(U0, U0)
    assert p.kind is ProjectionKind.CAUSAL
    assert np.allclose(p.coefficients, np.eye(samp.n), atol=1e-12)
    assert np.allclose(p.factor, mass_from_snapshots(U0).cholesky(), atol=1e-12)


def test_projection_checks_inputs():
    grid, fam, samp = hat_setup()
    _, _, U0 = simulate(grid, fam, samp, Potential.zero(grid))
    with pytest.raises(ValidationError):
        causal_projection(SnapshotMatrix(U0.columns[:, :3], grid), U0)
    with pytest.raises(GridMismatchError):
        causal_projection(SnapshotMatrix(U0.columns[::2], SpatialGrid(40.0, 400)), U0)
    with pytest.raises(ValidationError):
        causal_projection(U0, U0, method="qr")


@pytest.mark.parametrize("setup", [hat_setup, step_setup])
def test_cholesky_and_gram_schmidt_agree(setup):
    grid, fam, samp = setup()
    U, _, U0 = simulate(grid, fam, samp, _weak(grid))
    a = causal_projection(U, U0)
    b = causal_projection(U, U0, method="gram_schmidt")
    assert rel(b.coefficients, a.coefficients) < 1e-10
    assert rel(b.factor, a.factor) < 1e-10


def test_causal_residual_orthogonal_to_leading_span():
    grid, fam, samp = hat_setup()
    U, _, U0 = simulate(grid, fam, samp, _weak(grid))
    p = causal_projection(U, U0)
    G = gram(U0, U - p.projected)
    scale = np.abs(gram(U0, U)).max()
    assert np.max(np.abs(np.triu(G))) < 1e-12 * scale
    # coefficients only use background columns up to the same index
    assert np.array_equal(p.coefficients, np.triu(p.coefficients))


def test_projection_idempotent():
    grid, fam, samp = hat_setup()
    U, _, U0 = simulate(grid, fam, samp, _weak(grid))
    p = causal_projection(U, U0).projected
    pp = causal_projection(p, U0).projected
    assert rel(pp.columns, p.columns) < 1e-12
    f = full_projection(U, U0).projected
    assert rel(full_projection(f, U0).projected.columns, f.columns) < 1e-12


def test_step_causal_equals_full():
    # the step background is orthogonal, so later columns add nothing to earlier projections
    grid, fam, samp = step_setup()
    U, _, U0 = simulate(grid, fam, samp, _weak(grid))
    c = causal_projection(U, U0)
    f = full_projection(U, U0)
    assert tuple_norm_diff(c.combination, f.combination) < 1e-10 * tuple_norm(U)
    assert np.linalg.norm(residual_matrix(U, c)) < 1e-10 * np.linalg.norm(gram(U))


def test_full_projection_no_worse_than_causal():
    grid, fam, samp = hat_setup()
    U, _, U0 = simulate(grid, fam, samp, _weak(grid))
    c = causal_projection(U, U0)
    f = full_projection(U, U0)
    assert tuple_norm_diff(U, f.combination) <= tuple_norm_diff(U, c.combination) * (1 + 1e-12)


def test_residual_matrix_matches_direct_inner_products():
    grid, fam, samp = hat_setup()
    U, _, U0 = simulate(grid, fam, samp, _weak(grid))
    p = causal_projection(U, U0)
    Uh = p.projected
    G = gram(U - Uh, Uh)
    direct = np.triu(G, 1) + np.tril(G.T, -1)
    R = residual_matrix(U, p)
    assert np.allclose(R, direct, rtol=0, atol=1e-11 * np.abs(gram(U)).max())
    assert np.allclose(np.diag(R), 0)


def test_gramian_defect_bounded_by_residuals():
    grid, fam, samp = hat_setup()
    U, _, U0 = simulate(grid, fam, samp, _weak(grid))
    p = causal_projection(U, U0)
    defect = np.linalg.norm(gram(U) - p.factor @ p.factor.T)
    best = tuple_norm_diff(U, p.combination)
    assert defect <= best**2 + np.linalg.norm(residual_matrix(U, p)) + 1e-12


def test_condition_number():
    assert condition_number(np.diag([1.0, 4.0])) == pytest.approx(4.0)
    assert condition_number(GramianMatrix(np.eye(3))) == pytest.approx(1.0)
    with pytest.raises(NotPositiveDefiniteError):
        condition_number(np.diag([1.0, -1.0]))


def test_stewart_sun_identity_example():
    rec = stewart_sun_check(np.eye(4), np.eye(4) * (1 + 1e-8))
    assert rec.kappa == pytest.approx(1.0)
    assert rec.in_regime and not rec.violated
    assert rec.actual <= 2 * rec.bound


def test_stewart_sun_out_of_regime_not_violated():
    M = np.diag([1.0, 1e-4])
    rec = stewart_sun_check(M, M + 0.05 * np.ones((2, 2)))
    assert not rec.in_regime and not rec.violated and rec.note


def test_stewart_sun_non_spd_perturbation():
    M = np.diag([1.0, 1e-3])
    rec = stewart_sun_check(M, np.diag([1.0, -1e-3]))
    assert rec.actual == math.inf and "not SPD" in rec.note


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), size=st.floats(1e-9, 1e-4))
def test_stewart_sun_bound_random(seed, size):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, 8, cond=rng.uniform(2, 50))
    E = rng.standard_normal((8, 8))
    E = E + E.T
    E *= size / np.linalg.norm(E)
    rec = stewart_sun_check(A, A + E)
    if rec.in_regime:
        assert not rec.violated


def test_stewart_sun_random_batch():
    recs = stewart_sun_random()
    assert len(recs) == 20
    assert all(r.in_regime and not r.violated for r in recs)


def _report(setup, q):
    grid, fam, samp = setup()
    U, F, U0 = simulate(grid, fam, samp, q(grid))
    lift = lift_internal(U0, mass_from_snapshots(U0), mass_from_data(F, samp.n))
    return U, U0, lift, evaluate_bounds(U, U0, lift)


def test_bounds_zero_potential():
    U, U0, lift, rep = _report(hat_setup, Potential.zero)
    assert rep.lift_error < 1e-10 * rep.truth_norm
    assert rep.best_error < 1e-10 * rep.truth_norm
    assert rep.bound_holds and rep.in_regime and rep.residual_inequality_holds
    assert rep.max_diag_ratio < 1e-10


@pytest.mark.parametrize("setup", [hat_setup, step_setup])
def test_bounds_weak_potential(setup):
    U, U0, lift, rep = _report(setup, _weak)
    p = causal_projection(U, U0)
    assert rep.lift_vs_projection == pytest.approx(np.linalg.norm(lift.chol_true - p.factor),
                                                   rel=1e-8)
    assert rep.factor_defect == pytest.approx(rep.lift_vs_projection, rel=1e-8)
    assert rep.full_projection_error <= rep.best_error * (1 + 1e-12)
    assert rep.residual_inequality_holds
    assert len(rep.diag_ratios) == U.n and len(rep.residual_sup) == U.n
    assert rep.in_regime and rep.bound_holds
    # triangle inequality between lift, projection and truth
    assert rep.lift_error <= rep.best_error + rep.lift_vs_projection + 1e-12


def test_bound_report_json():
    _, _, _, rep = _report(hat_setup, _weak)
    d = json.loads(rep.to_json())
    for key in ("n", "eps", "kappa", "r_frobenius", "best_error", "lift_error", "bound_rhs",
                "diag_ratios", "in_regime", "bound_holds", "warnings"):
        assert key in d
    assert d["n"] == rep.n and d["lift_error"] == rep.lift_error
