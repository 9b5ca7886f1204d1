"""Forward solvers for u_tt - u_xx + q u = 0 with Neumann ends and u_t(0) = 0.

Two independent routes discretize the same semi-discrete operator
``A = -D2 + diag(q)``:

* :func:`solve_fd` - explicit leapfrog, second order in time.
* :func:`spectral_oracle` - exact in time via the eigendecomposition of the
  weight-symmetrized tridiagonal form of ``A``.

``D2`` is the 3-point Laplacian closed with mirror ghost nodes, so its first
and last rows read ``2(u1 - u0)/h^2`` and ``2(u_{N-1} - u_N)/h^2``. Under the
trapezoid weights ``A`` is self-adjoint, which is what lets the Gramian be
recovered exactly from receiver data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .core import SnapshotMatrix, SpatialGrid, TimeSampling, Potential
from .errors import (
    CFLViolationError,
    GridAlignmentError,
    MissingRecordingError,
    NumericalInstabilityError,
    OracleSizeError,
    ValidationError,
)

ORACLE_MAX_CELLS = 20000
_GUARD_EVERY = 2048


@dataclass(frozen=True)
class SolverConfig:
    """Time stepping for ``n`` snapshots at spacing ``tau``.

    With ``record_boundary`` the run continues to ``(2n-2) tau`` so that all
    ``2n-1`` receiver readings are available.
    """

    tau: float
    n: int
    dt: float
    courant_ratio: float
    record_boundary: bool = True
    track_energy: bool = False

    @classmethod
    def from_courant(cls, grid: SpatialGrid, tau, n, courant=0.5, record_boundary=True,
                     track_energy=False):
        courant = float(courant)
        return cls.build(grid, tau, n, courant * grid.step, record_boundary, track_energy)

    @classmethod
    def build(cls, grid: SpatialGrid, tau, n, dt, record_boundary=True, track_energy=False):
        if not dt > 0:
            raise ValidationError("dt must be positive")
        ratio = dt / grid.step
        if ratio > 1 + 1e-12:
            raise CFLViolationError(f"courant ratio dt/h = {ratio:.6g} exceeds 1")
        cfg = cls(float(tau), int(n), float(dt), ratio, record_boundary, track_energy)
        cfg.steps_per_snapshot  # validates alignment
        return cfg

    @property
    def steps_per_snapshot(self) -> int:
        r = self.tau / self.dt
        s = int(round(r))
        if s < 1 or abs(r - s) > 1e-9 * r:
            raise GridAlignmentError(f"tau/dt = {r:.12g} is not a positive integer")
        return s

    @property
    def snapshot_times(self) -> np.ndarray:
        return self.tau * np.arange(self.n)

    @property
    def record_count(self) -> int:
        return 2 * self.n - 1 if self.record_boundary else self.n


@dataclass(frozen=True, eq=False)
class TransferSeries:
    """Receiver readings ``F(k tau)``, k = 0, 1, ...

    ``values`` has shape ``(m,)`` for a single source or ``(m, K, K)`` with
    ``values[k, i, j] = <g_i, u_j(k tau)>`` for K sources.
    """

    values: np.ndarray
    tau: float

    def __len__(self):
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(len(self))


@dataclass(frozen=True, eq=False)
class ForwardResult:
    snapshots: SnapshotMatrix
    transfer: TransferSeries | None
    energy: np.ndarray | None = None


def _step_coefficients(q: np.ndarray, grid: SpatialGrid, dt: float):
    c = (dt / grid.step) ** 2
    return c, 2.0 - 2.0 * c - dt * dt * q


def _apply_a(u, a, c, out):
    # out = a*u + c*(neighbour sum), Neumann mirror at both ends
    np.multiply(a, u, out=out)
    out[1:-1] += c * (u[2:] + u[:-2])
    out[0] += 2.0 * c * u[1]
    out[-1] += 2.0 * c * u[-2]
    return out


def neumann_operator_apply(u, q, grid: SpatialGrid):
    """``A u = -D2 u + q u`` with the ghost-node closure."""
    u = np.asarray(u, dtype=float)
    h2 = grid.step**2
    out = (2.0 / h2 + q) * u
    out[1:-1] -= (u[2:] + u[:-2]) / h2
    out[0] -= 2.0 * u[1] / h2
    out[-1] -= 2.0 * u[-2] / h2
    return out


def _energy(u_new, u_old, q, grid, dt):
    w = grid.weights
    v = (u_new - u_old) / dt
    return float(w @ (v * v) + w @ (neumann_operator_apply(u_new, q, grid) * u_old))


def _coerce(q, g, grid):
    qv = q.values if isinstance(q, Potential) else np.asarray(q, dtype=float)
    grid.check(qv, "potential")
    G = np.asarray(g, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    grid.check(G, "initial pulse")
    return qv, G


def _run_leapfrog(qv, G, grid: SpatialGrid, cfg: SolverConfig):
    """Advance every column of ``G`` and collect snapshots and receiver readings."""
    if (cfg.n - 1) * cfg.tau >= grid.domain_length:
        raise ValidationError(
            f"last snapshot time {(cfg.n - 1) * cfg.tau:g} reaches the far end "
            f"of the domain ({grid.domain_length:g})"
        )
    s = cfg.steps_per_snapshot
    K = G.shape[1]
    records = cfg.record_count
    total = s * (records - 1)
    c, a = _step_coefficients(qv, grid, cfg.dt)
    w = grid.weights
    WG = w[:, None] * G

    snaps = np.empty((K, grid.size, cfg.n))
    F = np.empty((records, K, K)) if cfg.record_boundary else None
    energy = np.empty((K, records)) if cfg.track_energy else None
    scale = np.abs(G).max() or 1.0

    for j in range(K):
        g = G[:, j]
        um = g.copy()
        u = np.empty_like(g)
        un = np.empty_like(g)
        # Taylor start: u1 = u0 + dt^2/2 (D2 - q) u0  ==  (a u0 + c*nbr)/2
        _apply_a(g, a, c, u)
        u *= 0.5
        snaps[j, :, 0] = g
        if F is not None:
            F[0, :, j] = WG.T @ g
        if energy is not None:
            energy[j, 0] = _energy(u, um, qv, grid, cfg.dt)
        for m in range(1, total + 1):
            if m % s == 0:
                k = m // s
                if k < cfg.n:
                    snaps[j, :, k] = u
                if F is not None:
                    F[k, :, j] = WG.T @ u
                if energy is not None:
                    nxt = _apply_a(u, a, c, un) - um
                    energy[j, k] = _energy(nxt, u, qv, grid, cfg.dt)
            if m == total:
                break
            _apply_a(u, a, c, un)
            un -= um
            um, u, un = u, un, um
            if m % _GUARD_EVERY == 0:
                peak = np.abs(u).max()
                if not np.isfinite(peak) or peak > 1e8 * scale:
                    raise NumericalInstabilityError(
                        f"leapfrog solution blew up at step {m} (max |u| = {peak:.3e}); "
                        f"reduce the courant ratio (now {cfg.courant_ratio:.4g})"
                    )
    return snaps, F, energy


def _sampling(cfg: SolverConfig):
    return TimeSampling(cfg.tau, cfg.n, cfg.n * cfg.tau)


def solve_fd(q, g, grid: SpatialGrid, cfg: SolverConfig, sampling: TimeSampling | None = None
             ) -> ForwardResult:
    """Leapfrog solve for a single pulse ``g``.

    Returns snapshots at ``k tau`` (k < n) and, when recording, the receiver
    readings ``F(k tau) = <g, u(k tau)>`` for k = 0 ... 2n-2.
    """
    qv, G = _coerce(q, g, grid)
    if G.shape[1] != 1:
        raise ValidationError("solve_fd takes a single pulse; use solve_fd_multi")
    snaps, F, energy = _run_leapfrog(qv, G, grid, cfg)
    sampling = sampling or _sampling(cfg)
    transfer = TransferSeries(F[:, 0, 0].copy(), cfg.tau) if F is not None else None
    return ForwardResult(SnapshotMatrix(snaps[0], grid, sampling), transfer,
                         None if energy is None else energy[0])


def solve_fd_multi(q, sources, grid: SpatialGrid, cfg: SolverConfig,
                   sampling: TimeSampling | None = None):
    """Leapfrog solve for K pulses at once.

    Returns a list of K ForwardResults sharing one TransferSeries of shape
    ``(2n-1, K, K)`` with entry ``[k, i, j] = <g_i, u_j(k tau)>``.
    """
    G = np.column_stack([np.asarray(s, dtype=float) for s in sources])
    qv, G = _coerce(q, G, grid)
    snaps, F, energy = _run_leapfrog(qv, G, grid, cfg)
    sampling = sampling or _sampling(cfg)
    transfer = TransferSeries(F, cfg.tau) if F is not None else None
    return [
        ForwardResult(SnapshotMatrix(snaps[j], grid, sampling), transfer,
                      None if energy is None else energy[j])
        for j in range(G.shape[1])
    ]


def sample_transfer(result: ForwardResult) -> TransferSeries:
    if result.transfer is None:
        raise MissingRecordingError("forward solve was run with record_boundary=False")
    return result.transfer


def spectral_oracle(q, g, grid: SpatialGrid, times) -> SnapshotMatrix:
    """``u(t) = cos(t sqrt(A)) g`` evaluated exactly for each requested time.

    ``A`` is symmetrized as ``W^(1/2) A W^(-1/2)``, a symmetric tridiagonal
    matrix, and diagonalized once.
    """
    if grid.cell_count > ORACLE_MAX_CELLS:
        raise OracleSizeError(
            f"spectral oracle limited to {ORACLE_MAX_CELLS} cells, grid has {grid.cell_count}"
        )
    qv, G = _coerce(q, g, grid)
    h2 = grid.step**2
    sw = np.sqrt(grid.weights)
    diag = 2.0 / h2 + qv
    # A[i, i+1] and A[i+1, i], scaled by sqrt(w_i / w_j)
    upper = np.full(grid.cell_count, -1.0 / h2)
    lower = np.full(grid.cell_count, -1.0 / h2)
    upper[0] = -2.0 / h2
    lower[-1] = -2.0 / h2
    sup = upper * sw[:-1] / sw[1:]
    sub = lower * sw[1:] / sw[:-1]
    assert np.allclose(sup, sub, rtol=1e-12, atol=0), "symmetrized operator is not symmetric"
    lam, V = eigh_tridiagonal(diag, 0.5 * (sup + sub))
    omega = np.sqrt(np.clip(lam, 0.0, None))
    coef = V.T @ (sw * G[:, 0])
    times = np.atleast_1d(np.asarray(times, dtype=float))
    cols = (V @ (np.cos(np.outer(omega, times)) * coef[:, None])) / sw[:, None]
    # cos(0) = I exactly; avoid round-trip rounding at t = 0
    cols[:, times == 0] = G[:, [0]]
    return SnapshotMatrix(cols, grid)


def dump_snapshots_csv(U: SnapshotMatrix, path, header=None):
    """Write nodes in the first column and one column per snapshot."""
    data = np.column_stack([U.grid.nodes, U.columns])
    if header is None:
        header = ",".join(["x"] + [f"u{k}" for k in range(U.n)])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.15e")
