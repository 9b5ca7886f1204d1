"""Best-approximation references and the quantities entering the error bounds.

Notation: ``U`` true snapshots, ``U0`` background snapshots, ``Uhat`` the
causal projection (column i projected onto the first i+1 background columns),
``M``/``M0``/``Mhat`` the corresponding Gramians with Cholesky factors
``L``/``L0``/``Lhat``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .core import Combination, SnapshotMatrix, gram, tuple_norm, tuple_norm_diff
from .errors import GridMismatchError, NotPositiveDefiniteError, ValidationError
from .gramian import GramianMatrix, GramianSource, LiftResult, cholesky, mass_from_snapshots

SLACK = 2.0
REGIME = 0.1
ROUNDING_FLOOR = 1e-10


class ProjectionKind(str, enum.Enum):
    CAUSAL = "causal"
    FULL = "full"


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    """Projection ``U0 @ coefficients``; ``projected`` is formed on first access."""

    basis: SnapshotMatrix
    coefficients: np.ndarray
    kind: ProjectionKind
    # lower factor of the projected Gramian (causal kind only): Uhat = U0 L0^-T Lhat^T
    factor: np.ndarray | None = None
    # background Gramian, used to form residual inner products without the fields
    background_gram: np.ndarray | None = None

    @property
    def combination(self) -> Combination:
        return Combination(self.basis, self.coefficients)

    @cached_property
    def projected(self) -> SnapshotMatrix:
        return self.basis @ self.coefficients


def _check_pair(U: SnapshotMatrix, U0: SnapshotMatrix):
    if U.grid != U0.grid:
        raise GridMismatchError("U and U0 live on different grids")
    if U.n != U0.n:
        raise ValidationError(f"U has {U.n} columns, U0 has {U0.n}")


def _background(U0, M0):
    if M0 is None:
        M0 = mass_from_snapshots(U0)
    return M0, M0.cholesky("background Gramian")


def _weighted_mgs(U0: SnapshotMatrix):
    """Modified Gram-Schmidt (two passes) in the trapezoid inner product: U0 = Q R."""
    w = U0.grid.weights
    V = U0.columns.copy()
    n = U0.n
    R = np.zeros((n, n))
    for i in range(n):
        for _ in range(2):
            for j in range(i):
                r = w @ (V[:, j] * V[:, i])
                R[j, i] += r
                V[:, i] -= r * V[:, j]
        nrm2 = w @ (V[:, i] * V[:, i])
        if not nrm2 > 0:
            raise NotPositiveDefiniteError(i, nrm2, "Gram-Schmidt on background snapshots")
        R[i, i] = math.sqrt(nrm2)
        V[:, i] /= R[i, i]
    return V, R


def causal_projection(U: SnapshotMatrix, U0: SnapshotMatrix, M0: GramianMatrix | None = None,
                      method: str = "cholesky") -> ProjectionResult:
    """Project ``u_i`` onto span{u0_0, ..., u0_i} for every i.

    With ``B = U0^T W U`` the coefficients are ``L0^-T triu(L0^-1 B)``: the
    triangular solve with ``L0`` restricted to its leading block is the same
    as the solve with the full factor, so all columns go through at once.
    """
    _check_pair(U, U0)
    M0, L0 = _background(U0, M0)
    if method == "cholesky":
        B = gram(U0, U)
        Y = np.triu(solve_triangular(L0, B, lower=True))
        C = solve_triangular(L0.T, Y, lower=False)
        Lhat = Y.T
    elif method == "gram_schmidt":
        Q, R = _weighted_mgs(U0)
        Y = np.triu(Q.T @ (U0.grid.weights[:, None] * U.columns))
        C = solve_triangular(R, Y, lower=False)
        Lhat = Y.T
    else:
        raise ValidationError(f"unknown projection method {method!r}")
    C = np.triu(C)
    return ProjectionResult(U0, C, ProjectionKind.CAUSAL, Lhat, M0.entries)


def full_projection(U: SnapshotMatrix, U0: SnapshotMatrix, M0: GramianMatrix | None = None
                    ) -> ProjectionResult:
    """Orthogonal projection of each ``u_i`` onto the span of all background columns."""
    _check_pair(U, U0)
    M0, L0 = _background(U0, M0)
    B = gram(U0, U)
    C = solve_triangular(L0.T, solve_triangular(L0, B, lower=True), lower=False)
    return ProjectionResult(U0, C, ProjectionKind.FULL, None, M0.entries)


def residual_matrix(U: SnapshotMatrix, Uhat: ProjectionResult) -> np.ndarray:
    """``R_ij = <u_i - uhat_i, uhat_j>`` above the diagonal, mirrored-transposed below.

    Evaluated from coefficients: ``<u - uhat, uhat> = B^T C - C^T M0 C`` with
    ``B = U0^T W U``, so the projected fields are never formed.
    """
    C = Uhat.coefficients
    M0 = Uhat.background_gram
    if M0 is None:
        M0 = gram(Uhat.basis)
    G = gram(Uhat.basis, U).T @ C - C.T @ M0 @ C
    return np.triu(G, 1) + np.tril(G.T, -1)


def condition_number(M) -> float:
    E = M.entries if isinstance(M, GramianMatrix) else np.asarray(M, dtype=float)
    lam = np.linalg.eigvalsh(0.5 * (E + E.T))
    if not lam[0] > 0:
        raise NotPositiveDefiniteError(int(np.argmin(lam)), lam[0], "condition number")
    return float(lam[-1] / lam[0])


@dataclass
class StewartSunRecord:
    eps: float
    kappa: float
    bound: float
    actual: float
    ratio: float
    in_regime: bool
    violated: bool
    note: str = ""


def stewart_sun_check(M, Mhat, slack: float = SLACK) -> StewartSunRecord:
    """Compare ``||L - Lhat||_F`` with the first-order bound ``||L||_2 kappa eps / sqrt(2)``.

    ``violated`` is only ever set for inputs inside the regime ``eps kappa < 0.1``;
    outside it the comparison is recorded with a note.
    """
    A = M.entries if isinstance(M, GramianMatrix) else np.asarray(M, dtype=float)
    Ah = Mhat.entries if isinstance(Mhat, GramianMatrix) else np.asarray(Mhat, dtype=float)
    L = M.cholesky() if isinstance(M, GramianMatrix) else cholesky(A)
    kappa = condition_number(A)
    eps = float(np.linalg.norm(A - Ah, "fro") / np.linalg.norm(A, 2))
    bound = float(np.linalg.norm(L, 2) * kappa * eps / math.sqrt(2.0))
    in_regime = eps * kappa < REGIME
    try:
        Lh = Mhat.cholesky() if isinstance(Mhat, GramianMatrix) else cholesky(Ah)
    except NotPositiveDefiniteError as exc:
        return StewartSunRecord(eps, kappa, bound, math.inf, math.inf, in_regime, in_regime,
                                f"perturbed matrix not SPD ({exc})")
    actual = float(np.linalg.norm(L - Lh, "fro"))
    if bound > 0:
        ratio = actual / bound
    else:
        ratio = 0.0 if actual == 0 else math.inf
    violated = bool(in_regime and actual > slack * bound)
    note = "" if in_regime else f"outside regime: eps*kappa = {eps * kappa:.3e}"
    return StewartSunRecord(eps, kappa, bound, actual, ratio, bool(in_regime), violated, note)


@dataclass
class BoundReport:
    n: int
    eps: float
    kappa: float
    r_frobenius: float
    best_error: float
    lift_vs_projection: float
    lift_error: float
    bound_rhs: float
    diag_ratios: list
    mass_defect: float
    factor_defect: float
    full_projection_error: float
    truth_norm: float
    residual_sup: list
    stewart_sun_ratio: float
    in_regime: bool
    bound_holds: bool
    residual_inequality_holds: bool
    warnings: list = field(default_factory=list)

    @property
    def max_diag_ratio(self) -> float:
        return max(self.diag_ratios) if self.diag_ratios else 0.0

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v
        return json.dumps({k: clean(v) for k, v in self.to_dict().items()},
                          sort_keys=True, indent=1)


def evaluate_bounds(U: SnapshotMatrix, U0: SnapshotMatrix, lift: LiftResult,
                    projection: ProjectionResult | None = None) -> BoundReport:
    """Fill every error quantity for one run.

    Out-of-regime runs (``eps >= 0.1``) are reported with warnings instead of
    asserting the bound.
    """
    _check_pair(U, U0)
    n = U.n
    L, L0 = lift.chol_true, lift.chol_background
    M = GramianMatrix(L @ L.T, GramianSource.FROM_DATA, factor=L)
    if projection is None:
        projection = causal_projection(U, U0, GramianMatrix(L0 @ L0.T, factor=L0))
    Uhat = projection.combination
    Lhat = projection.factor
    Mhat = Lhat @ Lhat.T

    R = residual_matrix(U, projection)
    kappa = condition_number(M)
    m2 = float(np.linalg.norm(M.entries, 2))
    defect = float(np.linalg.norm(M.entries - Mhat, "fro"))
    eps = kappa * defect / m2

    best = tuple_norm_diff(U, Uhat)
    lvp = tuple_norm_diff(lift.lifted, Uhat)
    lift_err = tuple_norm_diff(lift.lifted, U)
    truth = tuple_norm(U)
    r_f = float(np.linalg.norm(R, "fro"))
    full = full_projection(U, U0, GramianMatrix(L0 @ L0.T, factor=L0))
    full_err = tuple_norm_diff(U, full.combination)
    sup = np.empty(n)
    for j0 in range(0, n, 64):
        J = slice(j0, min(j0 + 64, n))
        sup[J] = np.abs(U.column_block(J) - Uhat.column_block(J)).max(axis=0)

    rhs = kappa / truth * (best**2 + r_f) + best / math.sqrt(n)
    in_regime = eps < REGIME
    warnings = []
    # absolute floor so rounding-level errors (q = 0) are not judged against a zero bound
    floor = ROUNDING_FLOOR * truth / math.sqrt(n)
    holds = lift_err / math.sqrt(n) <= SLACK * rhs + floor
    if not in_regime:
        warnings.append(f"out of regime: eps = {eps:.3e} >= {REGIME}; bound not asserted")
    elif not holds:
        warnings.append("lift error exceeds twice the bound")
    defect_ok = defect <= best**2 + r_f + 1e-8 * float(np.linalg.norm(M.entries, "fro"))
    if not defect_ok:
        warnings.append("Gramian defect exceeds ||U - Uhat||^2 + ||R||_F")

    ss = stewart_sun_check(M, GramianMatrix(Mhat))
    if ss.note:
        warnings.append("stewart-sun: " + ss.note)

    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.abs(np.diag(Lhat) / np.diag(L0) - 1.0)

    return BoundReport(
        n=n,
        eps=float(eps),
        kappa=kappa,
        r_frobenius=r_f,
        best_error=best,
        lift_vs_projection=lvp,
        lift_error=lift_err,
        bound_rhs=float(rhs),
        diag_ratios=[float(v) for v in ratios],
        mass_defect=defect,
        factor_defect=float(np.linalg.norm(L - Lhat, "fro")),
        full_projection_error=full_err,
        truth_norm=truth,
        residual_sup=[float(v) for v in sup],
        stewart_sun_ratio=float(ss.ratio),
        in_regime=bool(in_regime),
        bound_holds=bool(holds),
        residual_inequality_holds=bool(defect_ok),
        warnings=warnings,
    )
