"""Grids, pulse families, potentials and snapshot containers.

Everything here works on a uniform node grid over ``[0, L]`` with the
composite trapezoid rule as the only quadrature. All integrals in the package
(receiver readings, Gramians, projections, error norms) go through
:func:`inner_product` / :func:`gram` so discrete identities hold to rounding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    GridAlignmentError,
    GridMismatchError,
    PulseUnderresolvedError,
    ValidationError,
)

# relative slack when checking that tau is an integer multiple of h
_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class SpatialGrid:
    domain_length: float
    cell_count: int

    def __post_init__(self):
        if self.cell_count < 1:
            raise ValidationError("cell_count must be positive")
        if not self.domain_length > 0:
            raise ValidationError("domain_length must be positive")

    @property
    def step(self) -> float:
        return self.domain_length / self.cell_count

    @property
    def size(self) -> int:
        return self.cell_count + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.size) * self.step
        x[-1] = self.domain_length
        x.setflags(write=False)
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights (h/2 at both ends, h inside)."""
        w = np.full(self.size, self.step)
        w[0] = w[-1] = 0.5 * self.step
        w.setflags(write=False)
        return w

    def cells_per(self, length: float) -> float:
        return length / self.step

    def aligned_count(self, length: float, what: str = "length") -> int:
        """Return ``length / h`` as an int, or raise if it is not one."""
        r = length / self.step
        m = int(round(r))
        if m < 1 or abs(r - m) > _ALIGN_TOL * max(1.0, r):
            raise GridAlignmentError(
                f"{what}={length!r} is not an integer multiple of h={self.step!r} "
                f"(ratio {r:.12g})"
            )
        return m

    def check(self, values: np.ndarray, what: str = "grid function") -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.size:
            raise GridMismatchError(
                f"{what} has {values.shape[0]} nodal values, grid has {self.size}"
            )
        return values


class PulseKind(str, enum.Enum):
    STEP = "step"
    HAT = "hat"


@dataclass(frozen=True)
class PulseFamily:
    kind: PulseKind
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "kind", PulseKind(self.kind))
        if not self.tau > 0:
            raise ValidationError("tau must be positive")

    def final_time(self, n: int) -> float:
        """Horizon covered by ``n`` background snapshots."""
        if self.kind is PulseKind.STEP:
            return (n - 0.5) * self.tau
        return n * self.tau

    def width_nodes(self, grid: SpatialGrid) -> int:
        """Return tau/h after checking the alignment this family needs.

        Hat breakpoints sit on nodes, so tau/h must be an integer. Step
        breakpoints sit at cell midpoints, so tau/h must be odd; this is what
        makes the trapezoid rule integrate ``g`` and the squared columns exactly
        and keeps neighbouring step columns on disjoint node sets.
        """
        r = grid.cells_per(self.tau)
        if r < 2 - _ALIGN_TOL:
            raise PulseUnderresolvedError(
                f"tau={self.tau!r} spans {r:.3g} cells; at least 2 are required"
            )
        m = grid.aligned_count(self.tau, "tau")
        if self.kind is PulseKind.STEP and m % 2 == 0:
            raise GridAlignmentError(
                f"step pulse needs an odd tau/h so jumps fall between nodes, got {m}"
            )
        return m


@dataclass(frozen=True)
class TimeSampling:
    tau: float
    n: int
    final_time: float

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("n must be positive")
        if not self.tau > 0:
            raise ValidationError("tau must be positive")

    @classmethod
    def for_pulse(cls, family: PulseFamily, n: int) -> "TimeSampling":
        return cls(family.tau, n, family.final_time(n))

    @property
    def measurement_count(self) -> int:
        return 2 * self.n - 1

    @property
    def snapshot_times(self) -> np.ndarray:
        return self.tau * np.arange(self.n)

    def validate(self, family: PulseFamily, grid: SpatialGrid | None = None):
        expected = family.final_time(self.n)
        if abs(expected - self.final_time) > 1e-9 * max(1.0, expected):
            raise ValidationError(
                f"final_time {self.final_time!r} inconsistent with {family.kind.value} "
                f"pulse (expected {expected!r})"
            )
        if abs(family.tau - self.tau) > 1e-12 * self.tau:
            raise ValidationError("pulse tau and sampling tau differ")
        if grid is not None and not self.final_time < grid.domain_length:
            raise ValidationError(
                f"final_time {self.final_time!r} must be below domain_length "
                f"{grid.domain_length!r} (far-boundary reflections)"
            )
        return self


@dataclass(frozen=True, eq=False)
class Potential:
    """Nonnegative nodal potential with known right support end."""

    values: np.ndarray
    support_end: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValidationError("potential values must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, grid: SpatialGrid) -> "Potential":
        return cls(np.zeros(grid.size), 0.0)

    @classmethod
    def gaussian(cls, grid: SpatialGrid, amplitude: float, center: float, rate: float):
        """``amplitude * exp(-rate (x - center)^2)``, cut to zero where it underflows."""
        if amplitude < 0 or rate <= 0:
            raise ValidationError("gaussian potential needs amplitude >= 0 and rate > 0")
        x = grid.nodes
        radius = np.sqrt(700.0 / rate)
        expo = rate * (x - center) ** 2
        v = np.where(expo < 700.0, amplitude * np.exp(-np.minimum(expo, 700.0)), 0.0)
        if amplitude == 0:
            return cls(v, 0.0)
        return cls(v, min(center + radius, grid.domain_length))

    @classmethod
    def from_values(cls, grid: SpatialGrid, values) -> "Potential":
        v = grid.check(values, "potential")
        nz = np.nonzero(v)[0]
        end = float(grid.nodes[nz[-1]]) if nz.size else 0.0
        return cls(v, end)

    @classmethod
    def from_file(cls, grid: SpatialGrid, path) -> "Potential":
        """Read node values: one column (q) or two columns (x, q), comma separated."""
        data = np.loadtxt(Path(path), delimiter=",", ndmin=2, comments="#")
        values = data[:, -1]
        if data.shape[1] >= 2 and not np.allclose(data[:, 0], grid.nodes, atol=1e-9 * grid.domain_length):
            raise GridMismatchError(f"node positions in {path} do not match the grid")
        return cls.from_values(grid, values)

    @property
    def sup_norm(self) -> float:
        return float(self.values.max(initial=0.0))


@dataclass(frozen=True, eq=False)
class SnapshotMatrix:
    """``n`` grid functions stored as the columns of a ``(N+1, n)`` array."""

    columns: np.ndarray
    grid: SpatialGrid
    sampling: TimeSampling | None = field(default=None)

    def __post_init__(self):
        c = np.asarray(self.columns, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        self.grid.check(c, "snapshot matrix")
        object.__setattr__(self, "columns", c)

    @property
    def n(self) -> int:
        return self.columns.shape[1]

    def column(self, k: int) -> np.ndarray:
        return self.columns[:, k]

    def with_columns(self, columns) -> "SnapshotMatrix":
        return SnapshotMatrix(columns, self.grid, self.sampling)

    def _peer(self, other: "SnapshotMatrix") -> np.ndarray:
        if other.grid != self.grid or other.columns.shape != self.columns.shape:
            raise GridMismatchError("snapshot matrices live on different grids or sizes")
        return other.columns

    def __sub__(self, other: "SnapshotMatrix") -> "SnapshotMatrix":
        return self.with_columns(self.columns - self._peer(other))

    def __add__(self, other: "SnapshotMatrix") -> "SnapshotMatrix":
        return self.with_columns(self.columns + self._peer(other))

    def __matmul__(self, coeffs) -> "SnapshotMatrix":
        """Right-multiply by a coefficient matrix: ``U @ T``."""
        return self.with_columns(self.columns @ np.asarray(coeffs, dtype=float))

    def norms(self) -> np.ndarray:
        """Per-column L2 norms."""
        return np.sqrt(self.grid.weights @ self.columns**2)

    def column_block(self, cols: slice) -> np.ndarray:
        return self.columns[:, cols]


@dataclass(frozen=True, eq=False)
class Combination:
    """``basis @ coeffs`` without materializing it; columns are formed in blocks."""

    basis: SnapshotMatrix
    coeffs: np.ndarray

    @property
    def grid(self) -> SpatialGrid:
        return self.basis.grid

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    def column_block(self, cols: slice) -> np.ndarray:
        return self.basis.columns @ self.coeffs[:, cols]

    def materialize(self) -> SnapshotMatrix:
        return self.basis @ self.coeffs


def evaluate_pulse(family: PulseFamily, grid: SpatialGrid) -> np.ndarray:
    """Sample the initial pulse ``g`` on the grid nodes.

    Hat: ``2 phi(x/tau)/tau``. Step: ``2/tau`` on the nodes inside
    ``[0, tau/2)``; with tau/h odd the jump sits mid-cell and the trapezoid
    sum of ``g`` is exactly 1.
    """
    m = family.width_nodes(grid)
    j = np.arange(grid.size)
    if family.kind is PulseKind.HAT:
        return 2.0 * np.maximum(0.0, 1.0 - j / m) / family.tau
    return np.where(j <= (m - 1) // 2, 2.0 / family.tau, 0.0)


def source_pulse(family: PulseFamily, grid: SpatialGrid, position: float = 0.0) -> np.ndarray:
    """Unit-mass pulse at ``position``: ``g`` at 0, the full symmetric pulse inside.

    An interior pulse is the translate ``g(x - p)/2`` so its integral is also 1.
    """
    if position == 0:
        return evaluate_pulse(family, grid)
    m = family.width_nodes(grid)
    c = grid.aligned_count(position, "source position")
    if c - m < 0 or c + m > grid.cell_count:
        raise ValidationError(f"pulse at {position!r} does not fit inside the domain")
    j = np.arange(grid.size)
    if family.kind is PulseKind.HAT:
        return np.maximum(0.0, 1.0 - np.abs(j - c) / m) / family.tau
    return np.where(np.abs(j - c) <= (m - 1) // 2, 1.0 / family.tau, 0.0)


def background_snapshots(
    family: PulseFamily, sampling: TimeSampling, grid: SpatialGrid
) -> SnapshotMatrix:
    """Analytic ``q = 0`` snapshots: column 0 is ``g``, column k is ``g(x - k tau)/2``."""
    sampling.validate(family, grid)
    m = family.width_nodes(grid)
    j = np.arange(grid.size)[:, None]
    centers = m * np.arange(sampling.n)[None, :]
    if family.kind is PulseKind.HAT:
        cols = np.maximum(0.0, 1.0 - np.abs(j - centers) / m) / family.tau
    else:
        cols = np.where(np.abs(j - centers) <= (m - 1) // 2, 1.0 / family.tau, 0.0)
    cols[:, 0] = evaluate_pulse(family, grid)
    return SnapshotMatrix(cols, grid, sampling)


def inner_product(u, v, grid: SpatialGrid) -> float:
    """Trapezoid approximation of the integral of ``u v`` over the domain."""
    u = grid.check(u, "u")
    v = grid.check(v, "v")
    return float(grid.weights @ (u * v))


# columns per block when large snapshot families are combined
BLOCK = 64


def _blocks(n):
    return (slice(i, min(i + BLOCK, n)) for i in range(0, n, BLOCK))


def gram(U: SnapshotMatrix, V: SnapshotMatrix | None = None) -> np.ndarray:
    """Matrix of pairwise inner products ``<u_i, v_j>``."""
    A = U.columns
    if V is not None and (V.grid != U.grid):
        raise GridMismatchError("snapshot matrices live on different grids")
    B = A if V is None else V.columns
    w = U.grid.weights[:, None]
    G = np.empty((A.shape[1], B.shape[1]))
    for J in _blocks(B.shape[1]):
        G[:, J] = A.T @ (w * B[:, J])
    if V is None:
        G = 0.5 * (G + G.T)
    return G


def tuple_norm(V) -> float:
    """``(sum_i ||v_i||^2)^(1/2)``."""
    w = V.grid.weights
    total = 0.0
    for J in _blocks(V.n):
        B = V.column_block(J)
        total += float(np.sum(w @ (B * B)))
    return float(np.sqrt(total))


def tuple_norm_diff(X, Y) -> float:
    """``tuple_norm(X - Y)`` for snapshot matrices or :class:`Combination` objects.

    Columns are differenced block by block, so no full-size temporary exists.
    """
    if X.grid != Y.grid or X.n != Y.n:
        raise GridMismatchError("operands differ in grid or column count")
    w = X.grid.weights
    total = 0.0
    for J in _blocks(X.n):
        D = X.column_block(J) - Y.column_block(J)
        total += float(np.sum(w @ (D * D)))
    return float(np.sqrt(total))


def sup_norms(V: SnapshotMatrix) -> np.ndarray:
    return np.abs(V.columns).max(axis=0)
