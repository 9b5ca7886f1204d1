"""Mass matrices from receiver data, Cholesky factors and the lift.

The Gramian of the true snapshots can be assembled from receiver data alone
because ``u(k tau) = cos(k tau sqrt(A)) g`` and the cosine satisfies the
angle-sum identity. Its Cholesky factor ``L`` and the background factor
``L0`` define the upper triangular transform ``T = L0^-T L^T`` that maps the
known background snapshots onto data-generated internal fields.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .core import SnapshotMatrix, gram
from .errors import (
    AsymmetricResponseError,
    GridMismatchError,
    InsufficientDataError,
    NotPositiveDefiniteError,
    ValidationError,
)
from .wave import TransferSeries


class GramianSource(str, enum.Enum):
    FROM_DATA = "from_data"
    FROM_SNAPSHOTS = "from_snapshots"
    OTHER = "other"


def cholesky(M, context=""):
    """Lower Cholesky factor with positive diagonal (left-looking, column by column).

    Raises :class:`NotPositiveDefiniteError` with the failing pivot index and
    value if ``M`` is not numerically positive definite.
    """
    A = np.asarray(M.entries if isinstance(M, GramianMatrix) else M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"cholesky needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        v = A[j:, j] - L[j:, :j] @ L[j, :j]
        d = v[0]
        if not d > 0 or not np.isfinite(d):
            raise NotPositiveDefiniteError(j, d, context)
        r = np.sqrt(d)
        L[j, j] = r
        L[j + 1:, j] = v[1:] / r
    if isinstance(M, GramianMatrix):
        M.factor = L
    return L


@dataclass(eq=False)
class GramianMatrix:
    """Symmetric n x n mass matrix; ``factor`` is filled by :meth:`cholesky`."""

    entries: np.ndarray
    source: GramianSource = GramianSource.OTHER
    factor: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        E = np.array(self.entries, dtype=float)
        if E.ndim != 2 or E.shape[0] != E.shape[1]:
            raise ValidationError(f"Gramian must be square, got shape {E.shape}")
        self.entries = 0.5 * (E + E.T)
        self.source = GramianSource(self.source)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def cholesky(self, context="") -> np.ndarray:
        if self.factor is None:
            cholesky(self, context)
        return self.factor

    def leading(self, k: int) -> "GramianMatrix":
        return GramianMatrix(self.entries[:k, :k], self.source)

    def smallest_eigenvalue_estimate(self, iterations: int = 12) -> float:
        """Inverse power iteration on the Cholesky factor.

        Used as a rank guard: a tiny value means the snapshots are close to
        linearly dependent and the lift will amplify data errors.
        """
        L = self.cholesky()
        x = np.ones(self.n) / np.sqrt(self.n)
        lam = np.inf
        for _ in range(iterations):
            y = solve_triangular(L.T, solve_triangular(L, x, lower=True), lower=False)
            nrm = np.linalg.norm(y)
            lam = float(x @ y) ** -1 if x @ y > 0 else 0.0
            x = y / nrm
        return lam

    def to_csv(self, path, which="entries"):
        data = self.entries if which == "entries" else self.cholesky()
        np.savetxt(path, data, delimiter=",", fmt="%.15e")


def mass_from_data(F, n: int) -> GramianMatrix:
    """``M_kl = (F(|k-l| tau) + F((k+l) tau)) / 2``."""
    vals = F.values if isinstance(F, TransferSeries) else np.asarray(F, dtype=float)
    if vals.ndim != 1:
        raise ValidationError("mass_from_data takes a scalar series; use block_mass_from_data")
    if vals.shape[0] < 2 * n - 1:
        raise InsufficientDataError(
            f"need {2 * n - 1} transfer samples for n={n}, got {vals.shape[0]}"
        )
    i = np.arange(n)
    M = 0.5 * (vals[np.abs(i[:, None] - i[None, :])] + vals[i[:, None] + i[None, :]])
    return GramianMatrix(M, GramianSource.FROM_DATA)


def mass_from_snapshots(U: SnapshotMatrix) -> GramianMatrix:
    return GramianMatrix(gram(U), GramianSource.FROM_SNAPSHOTS)


@dataclass(frozen=True, eq=False)
class LiftResult:
    lifted: SnapshotMatrix
    transform: np.ndarray
    chol_true: np.ndarray
    chol_background: np.ndarray


def transform_matrix(L0: np.ndarray, L: np.ndarray) -> np.ndarray:
    """``T = L0^-T L^T`` by back substitution."""
    return solve_triangular(L0.T, L.T, lower=False)


def lift_internal(U0: SnapshotMatrix, M0: GramianMatrix, M: GramianMatrix) -> LiftResult:
    """Data-generated internal fields ``U0 L0^-T L^T``."""
    if not (U0.n == M0.n == M.n):
        raise ValidationError(
            f"size mismatch: U0 has {U0.n} columns, M0 is {M0.n}x{M0.n}, M is {M.n}x{M.n}"
        )
    L0 = M0.cholesky("background Gramian")
    L = M.cholesky("data Gramian")
    T = np.triu(transform_matrix(L0, L))
    return LiftResult(U0 @ T, T, L, L0)


# --- multiple sources -------------------------------------------------------


@dataclass(eq=False)
class BlockGramian:
    """n x n array of K x K blocks, stored as ``blocks[k, l, a, b]``.

    The dense view interleaves sources fastest: row ``k*K + a``.
    """

    blocks: np.ndarray
    source: GramianSource = GramianSource.OTHER
    block_factor: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        B = np.array(self.blocks, dtype=float)
        if B.ndim != 4 or B.shape[0] != B.shape[1] or B.shape[2] != B.shape[3]:
            raise ValidationError(f"block Gramian needs shape (n, n, K, K), got {B.shape}")
        # M_kl = M_lk^T
        self.blocks = 0.5 * (B + B.transpose(1, 0, 3, 2))
        self.source = GramianSource(self.source)

    @property
    def n(self) -> int:
        return self.blocks.shape[0]

    @property
    def K(self) -> int:
        return self.blocks.shape[2]

    def to_dense(self) -> np.ndarray:
        n, K = self.n, self.K
        return self.blocks.transpose(0, 2, 1, 3).reshape(n * K, n * K)

    @classmethod
    def from_dense(cls, D, K, source=GramianSource.OTHER):
        D = np.asarray(D, dtype=float)
        n = D.shape[0] // K
        return cls(D.reshape(n, K, n, K).transpose(0, 2, 1, 3), source)

    def block_cholesky(self, context="") -> np.ndarray:
        """Block lower factor; diagonal blocks are lower Cholesky factors.

        Fixing the diagonal square roots to lower triangular factors makes the
        result coincide with the scalar Cholesky factor of the dense view.
        """
        if self.block_factor is not None:
            return self.block_factor
        n, K = self.n, self.K
        M = self.blocks
        Lb = np.zeros_like(M)
        for j in range(n):
            S = M[j, j] - np.einsum("lab,lcb->ac", Lb[j, :j], Lb[j, :j])
            try:
                Ljj = cholesky(0.5 * (S + S.T))
            except NotPositiveDefiniteError as exc:
                raise NotPositiveDefiniteError(j * K + exc.index, exc.pivot, context) from None
            Lb[j, j] = Ljj
            for i in range(j + 1, n):
                R = M[i, j] - np.einsum("lab,lcb->ac", Lb[i, :j], Lb[j, :j])
                # R Ljj^-T
                Lb[i, j] = solve_triangular(Ljj, R.T, lower=True).T
        self.block_factor = Lb
        return Lb

    def dense_factor(self) -> np.ndarray:
        Lb = self.block_cholesky()
        n, K = self.n, self.K
        return Lb.transpose(0, 2, 1, 3).reshape(n * K, n * K)


def block_mass_from_data(F, n: int, tol: float = 1e-8) -> BlockGramian:
    """``M_kl = (F((k-l) tau) + F((k+l) tau)) / 2`` with ``F(-m) = F(m)^T``."""
    vals = F.values if isinstance(F, TransferSeries) else np.asarray(F, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None, None]
    if vals.shape[0] < 2 * n - 1:
        raise InsufficientDataError(
            f"need {2 * n - 1} transfer samples for n={n}, got {vals.shape[0]}"
        )
    scale = np.abs(vals[0]).max() or 1.0
    asym = np.abs(vals - vals.transpose(0, 2, 1)).max()
    if asym > tol * scale:
        raise AsymmetricResponseError(
            f"response matrices not symmetric: max |F - F^T| = {asym:.3e} "
            f"(tolerance {tol * scale:.3e})"
        )
    i = np.arange(n)
    d = i[:, None] - i[None, :]
    Fd = np.where((d >= 0)[:, :, None, None], vals[np.abs(d)],
                  vals[np.abs(d)].transpose(0, 1, 3, 2))
    blocks = 0.5 * (Fd + vals[i[:, None] + i[None, :]])
    return BlockGramian(blocks, GramianSource.FROM_DATA)


def stack_sources(sources) -> SnapshotMatrix:
    """Interleave K snapshot families into one ``n*K``-column matrix (k-major)."""
    sources = list(sources)
    first = sources[0]
    for S in sources[1:]:
        if S.grid != first.grid or S.n != first.n:
            raise GridMismatchError("source snapshot families do not match")
    cols = np.stack([S.columns for S in sources], axis=2)
    return SnapshotMatrix(cols.reshape(first.grid.size, -1), first.grid, first.sampling)


def unstack_sources(U: SnapshotMatrix, K: int):
    cols = U.columns.reshape(U.grid.size, -1, K)
    return [SnapshotMatrix(cols[:, :, a], U.grid, U.sampling) for a in range(K)]


def block_mass_from_snapshots(sources) -> BlockGramian:
    sources = list(sources)
    D = gram(stack_sources(sources))
    return BlockGramian.from_dense(D, len(sources), GramianSource.FROM_SNAPSHOTS)


def block_lift_internal(U0_sources, M0: BlockGramian, M: BlockGramian) -> LiftResult:
    """Multi-source lift; ``lifted`` is the interleaved matrix (see :func:`unstack_sources`)."""
    U0_sources = list(U0_sources)
    U0 = stack_sources(U0_sources)
    if not (M0.K == M.K == len(U0_sources) and M0.n == M.n and U0.n == M.n * M.K):
        raise ValidationError("block sizes of U0, M0 and M do not match")
    L0 = M0.dense_factor()
    L = M.dense_factor()
    T = np.triu(transform_matrix(L0, L))
    return LiftResult(U0 @ T, T, L, L0)
