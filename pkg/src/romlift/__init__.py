"""Internal wave fields from boundary data via Gramian Cholesky lifts."""

from .core import (
    PulseFamily,
    PulseKind,
    Potential,
    SnapshotMatrix,
    SpatialGrid,
    TimeSampling,
    background_snapshots,
    evaluate_pulse,
    gram,
    inner_product,
    tuple_norm,
)
from .diagnostics import (
    BoundReport,
    ProjectionResult,
    causal_projection,
    condition_number,
    evaluate_bounds,
    full_projection,
    residual_matrix,
    stewart_sun_check,
)
from .errors import NotPositiveDefiniteError, NumericalError, ValidationError
from .gramian import (
    BlockGramian,
    GramianMatrix,
    LiftResult,
    block_lift_internal,
    block_mass_from_data,
    block_mass_from_snapshots,
    cholesky,
    lift_internal,
    mass_from_data,
    mass_from_snapshots,
)
from .wave import (
    ForwardResult,
    SolverConfig,
    TransferSeries,
    sample_transfer,
    solve_fd,
    solve_fd_multi,
    spectral_oracle,
)

__version__ = "0.1.0"
