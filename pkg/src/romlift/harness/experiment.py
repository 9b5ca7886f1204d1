"""Convergence studies: one forward solve, Gramian, lift and projection per n."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import background_snapshots, gram, source_pulse
from ..diagnostics import BoundReport, causal_projection, evaluate_bounds, residual_matrix
from ..errors import InsufficientDataError, NotPositiveDefiniteError, ValidationError
from ..gramian import (
    GramianMatrix,
    block_lift_internal,
    block_mass_from_data,
    block_mass_from_snapshots,
    lift_internal,
    mass_from_data,
    mass_from_snapshots,
    stack_sources,
    unstack_sources,
)
from ..wave import SolverConfig, solve_fd, solve_fd_multi
from .config import ExperimentConfig

log = logging.getLogger(__name__)

# columns of convergence.csv, in order
ROW_FIELDS = (
    "n", "tau", "final_time", "lift_error", "best_error", "lift_vs_projection",
    "full_projection_error", "kappa", "eps", "max_diag_ratio", "r_frobenius",
    "r_offband_fraction", "bound_rhs", "interpolation_error", "data_gramian_mismatch",
    "min_eigenvalue", "localization", "final_l2_error",
)


@dataclass
class ConvergenceRow:
    n: int
    tau: float
    final_time: float
    lift_error: float
    best_error: float
    lift_vs_projection: float
    full_projection_error: float
    kappa: float
    eps: float
    max_diag_ratio: float
    r_frobenius: float
    r_offband_fraction: float
    bound_rhs: float
    interpolation_error: float
    data_gramian_mismatch: float
    min_eigenvalue: float
    localization: float
    final_l2_error: float


@dataclass
class RunArtifacts:
    """Per-n data kept after the big snapshot matrices are released."""

    report: BoundReport
    nodes: np.ndarray
    quartet: np.ndarray  # x-less columns: reconstructed, true, background, causal projection
    transform: np.ndarray


@dataclass
class RateFit:
    slope: float
    intercept: float
    ratios: list

    def to_dict(self):
        return asdict(self)


@dataclass
class ConvergenceRecord:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    runs: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def taus(self) -> np.ndarray:
        return self.column("tau")

    def fit(self, column="lift_error") -> RateFit:
        return fit_rate(self.taus, self.column(column))

    @property
    def slope(self) -> float:
        return self.fit().slope


def fit_rate(taus, errors=None) -> RateFit:
    """Least-squares line through ``(log tau, log error)``.

    ``ratios[i]`` is ``error[i] / error[i+1]`` for rows sorted by decreasing tau.
    Accepts a :class:`ConvergenceRecord` in place of the two arrays.
    """
    if isinstance(taus, ConvergenceRecord):
        taus, errors = taus.taus, taus.column("lift_error")
    taus = np.asarray(taus, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if taus.shape != errors.shape or taus.ndim != 1:
        raise ValidationError("tau and error arrays must be 1-D and of equal length")
    if taus.size < 3:
        raise InsufficientDataError(f"rate fit needs at least 3 rows, got {taus.size}")
    if np.any(taus <= 0) or np.any(errors <= 0):
        raise ValidationError("rate fit needs positive tau and error values")
    order = np.argsort(-taus)
    taus, errors = taus[order], errors[order]
    slope, intercept = np.polyfit(np.log(taus), np.log(errors), 1)
    return RateFit(float(slope), float(intercept), [float(v) for v in errors[:-1] / errors[1:]])


def localization_fraction(error: np.ndarray, nodes, weights, front: float, width: float) -> float:
    """Share of ``int e^2`` that falls within ``width`` of ``front``."""
    e2 = weights * error * error
    total = e2.sum()
    if total == 0:
        return 1.0
    near = np.abs(nodes - front) <= width
    return float(e2[near].sum() / total)


def _offband_fraction(R: np.ndarray) -> float:
    total = np.linalg.norm(R)
    if total == 0:
        return 0.0
    band = np.abs(np.subtract.outer(np.arange(R.shape[0]), np.arange(R.shape[0]))) <= 1
    return float(np.linalg.norm(np.where(band, 0.0, R)) / total)


def _relative(a, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb else float(np.linalg.norm(a))


@dataclass
class Pipeline:
    """All intermediate objects of one run (large; not kept across runs)."""

    cfg: ExperimentConfig
    n: int
    family: object
    sampling: object
    U: object
    U0: object
    M: GramianMatrix
    M0: GramianMatrix
    lift: object
    interpolation_error: float
    data_gramian_mismatch: float


def build_pipeline(cfg: ExperimentConfig, n: int) -> Pipeline:
    """Forward solve, Gramians and lift for one snapshot count."""
    grid = cfg.grid()
    fam = cfg.family(n)
    samp = cfg.sampling(n)
    q = cfg.build_potential(grid)
    solver = SolverConfig.from_courant(grid, fam.tau, n, float(cfg.courant))
    bg_solver = SolverConfig.from_courant(grid, fam.tau, n, float(cfg.courant),
                                          record_boundary=False)
    zero = np.zeros(grid.size)
    context = f"n={n}"

    if cfg.is_mimo:
        sources = [source_pulse(fam, grid, p) for p in cfg.sources]
        results = solve_fd_multi(q, sources, grid, solver, samp)
        Ms = [r.snapshots for r in results]
        U = stack_sources(Ms)
        M_blocks = block_mass_from_data(results[0].transfer, n)
        U0s = [r.snapshots for r in solve_fd_multi(zero, sources, grid, bg_solver, samp)]
        U0 = stack_sources(U0s)
        M0_blocks = block_mass_from_snapshots(U0s)
        try:
            lift = block_lift_internal(U0s, M0_blocks, M_blocks)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(exc.index, exc.pivot, context) from None
        M = GramianMatrix(M_blocks.to_dense(), "from_data", factor=lift.chol_true)
        M0 = GramianMatrix(M0_blocks.to_dense(), "from_snapshots", factor=lift.chol_background)
        lifted = unstack_sources(lift.lifted, len(sources))
        interp = _relative(block_mass_from_snapshots(lifted).to_dense(), M.entries)
        consistency = _relative(block_mass_from_snapshots(Ms).to_dense(), M.entries)
        del results, Ms
    else:
        g = source_pulse(fam, grid, cfg.sources[0])
        fwd = solve_fd(q, g, grid, solver, samp)
        U = fwd.snapshots
        M = mass_from_data(fwd.transfer, n)
        del fwd
        if cfg.background == "discrete":
            U0 = solve_fd(zero, g, grid, bg_solver, samp).snapshots
        else:
            U0 = background_snapshots(fam, samp, grid)
        M0 = mass_from_snapshots(U0)
        try:
            lift = lift_internal(U0, M0, M)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(exc.index, exc.pivot, context) from None
        interp = _relative(mass_from_snapshots(lift.lifted).entries, M.entries)
        consistency = _relative(gram(U), M.entries)
    return Pipeline(cfg, n, fam, samp, U, U0, M, M0, lift, interp, consistency)


def run_single(cfg: ExperimentConfig, n: int):
    """Everything for one snapshot count. Returns (row, artifacts)."""
    return summarize(build_pipeline(cfg, n))


def summarize(p: Pipeline):
    cfg, n, fam, samp = p.cfg, p.n, p.family, p.sampling
    grid = cfg.grid()
    U, U0, M, lift = p.U, p.U0, p.M, p.lift
    interp, consistency = p.interpolation_error, p.data_gramian_mismatch
    lam_min = GramianMatrix(M.entries, factor=lift.chol_true).smallest_eigenvalue_estimate()
    proj = causal_projection(U, U0, GramianMatrix(lift.chol_background @ lift.chol_background.T,
                                                  factor=lift.chol_background))
    report = evaluate_bounds(U, U0, lift, proj)
    R = residual_matrix(U, proj)

    # final snapshot of the first source (columns are interleaved k-major for MIMO)
    k = (n - 1) * len(cfg.sources)
    front = (n - 1) * fam.tau + cfg.sources[0]
    last = slice(k, k + 1)
    quartet = np.column_stack([
        lift.lifted.columns[:, k], U.columns[:, k], U0.columns[:, k],
        proj.combination.column_block(last)[:, 0],
    ])
    err = quartet[:, 0] - quartet[:, 1]
    sqrt_n = math.sqrt(U.n)
    row = ConvergenceRow(
        n=n,
        tau=fam.tau,
        final_time=samp.final_time,
        lift_error=report.lift_error / sqrt_n,
        best_error=report.best_error / sqrt_n,
        lift_vs_projection=report.lift_vs_projection / sqrt_n,
        full_projection_error=report.full_projection_error / sqrt_n,
        kappa=report.kappa,
        eps=report.eps,
        max_diag_ratio=report.max_diag_ratio,
        r_frobenius=report.r_frobenius,
        r_offband_fraction=_offband_fraction(R),
        bound_rhs=report.bound_rhs,
        interpolation_error=interp,
        data_gramian_mismatch=consistency,
        min_eigenvalue=lam_min,
        localization=localization_fraction(err, grid.nodes, grid.weights, front, 3 * fam.tau),
        final_l2_error=float(np.sqrt(grid.weights @ (err * err))),
    )
    art = RunArtifacts(report, np.array(grid.nodes), quartet, lift.transform)
    return row, art


def run_experiment(cfg: ExperimentConfig, n_values=None, output_dir=None) -> ConvergenceRecord:
    """Run every n (largest tau first); write files when ``output_dir`` is given."""
    cfg.validate()
    record = ConvergenceRecord(cfg)
    ns = sorted(n_values or cfg.n_values)
    for n in ns:
        log.info("%s: n=%d", cfg.name, n)
        row, art = run_single(cfg, n)
        record.rows.append(row)
        record.runs[n] = art
        if output_dir is not None:
            write_run_files(Path(output_dir), n, art)
    record.rows.sort(key=lambda r: -r.tau)
    if output_dir is not None:
        emit_outputs(record, cfg, output_dir, per_run=False)
    return record


# --- output -----------------------------------------------------------------

_FMT = "%.15e"


def _write_table(path: Path, header, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=_FMT)


def write_run_files(out: Path, n: int, art: RunArtifacts):
    out.mkdir(parents=True, exist_ok=True)
    x = art.nodes
    _write_table(out / f"snapshots_n{n}.csv",
                 ["x", "reconstructed", "true", "background", "causal_projection"],
                 np.column_stack([x, art.quartet]))
    err = art.quartet[:, 0] - art.quartet[:, 1]
    # cumulative L2 error from the left end; last entry is the L2 error of the snapshot
    w = np.full_like(x, 0.0)
    w[1:] = np.diff(x)
    cum = np.sqrt(np.concatenate([[0.0], np.cumsum(0.5 * w[1:] * (err[1:] ** 2 + err[:-1] ** 2))]))
    _write_table(out / f"error_profile_n{n}.csv", ["x", "error", "cumulative_l2_error"],
                 np.column_stack([x, err, cum]))
    (out / f"bound_report_n{n}.json").write_text(art.report.to_json() + "\n")


def emit_outputs(record: ConvergenceRecord, cfg: ExperimentConfig, output_dir=None,
                 per_run=True):
    """Write convergence.csv, rate_fit.json and (optionally) the per-n files."""
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if per_run:
        for n, art in sorted(record.runs.items()):
            write_run_files(out, n, art)
    rows = sorted(record.rows, key=lambda r: -r.tau)
    with open(out / "convergence.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(ROW_FIELDS)
        for r in rows:
            wr.writerow([r.n] + [_FMT % getattr(r, f) for f in ROW_FIELDS[1:]])
    fits = {}
    if len(rows) >= 3:
        for col in ("lift_error", "best_error", "lift_vs_projection", "max_diag_ratio"):
            try:
                fits[col] = record.fit(col).to_dict()
            except ValidationError as exc:
                fits[col] = {"error": str(exc)}
    else:
        fits["note"] = "fewer than 3 rows; no slope fitted"
    (out / "rate_fit.json").write_text(json.dumps(fits, sort_keys=True, indent=1) + "\n")
    (out / "config.cfg").write_text(cfg.to_text())
    return out


def read_convergence(path):
    """Load convergence.csv as a dict of column arrays."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InsufficientDataError(f"{path} has no data rows")
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
