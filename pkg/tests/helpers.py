import numpy as np

from romlift.core import PulseFamily, SpatialGrid, TimeSampling


def hat_setup(L=40.0, N=800, tau=0.5, n=8):
    grid = SpatialGrid(L, N)
    fam = PulseFamily("hat", tau)
    return grid, fam, TimeSampling.for_pulse(fam, n)


def step_setup(L=40.0, N=1600, tau=0.525, n=8):
    """tau/h = 21 (odd), so step jumps fall between nodes."""
    grid = SpatialGrid(L, N)
    fam = PulseFamily("step", tau)
    return grid, fam, TimeSampling.for_pulse(fam, n)


def rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


def simulate(grid, fam, samp, q, courant=1.0):
    """(U, F, U0) for a single boundary source."""
    from romlift.core import background_snapshots, evaluate_pulse
    from romlift.wave import SolverConfig, sample_transfer, solve_fd

    cfg = SolverConfig.from_courant(grid, fam.tau, samp.n, courant)
    res = solve_fd(q, evaluate_pulse(fam, grid), grid, cfg, samp)
    return res.snapshots, sample_transfer(res), background_snapshots(fam, samp, grid)
