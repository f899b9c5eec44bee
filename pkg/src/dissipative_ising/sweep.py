"""Parameter-grid scans and hysteresis experiments.

Grid points are independent tasks: failures are recorded per row and
never abort a sweep, output order is row-major over the grid no matter
how many workers run, and every point derives its RNG seed from the
base seed and its linear index, so results are reproducible bit for
bit at any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from multiprocessing import get_context

import numpy as np

from .liouville import (
    DENSE_N_MAX,
    build_basis,
    build_liouvillian,
    liouvillian_gap,
    magnetization,
    ramped_evolution,
    steady_state,
)
from .meanfield import (
    FixedPoint,
    ModelParams,
    bloch_rhs,
    continuation_sweep,
    detect_limit_cycle,
    find_fixed_points,
    integrate_trajectory,
    settle,
)

__all__ = [
    "Axis",
    "GridSpec",
    "PhasePoint",
    "HysteresisResult",
    "phase_diagram",
    "multistability_map",
    "analytic_boundaries",
    "hysteresis_experiment",
]

SWEEPABLE_NAMES = ("V", "g", "p")

# Starting point for branch selection: the south pole nudged off the
# exact pole, which is an invariant (sometimes unstable) fixed point.
SOUTH_POLE_SEED = np.array([1e-3, 1e-3, -math.sqrt(1.0 - 2e-6)])

# Bistable-interval threshold on |Z_up - Z_down|.
BRANCH_SPLIT_TOL = 0.05


@dataclass(frozen=True)
class Axis:
    """One swept parameter: name in {V, g, p}, inclusive range, count."""

    name: str
    start: float
    stop: float
    count: int

    def __post_init__(self):
        if self.name not in SWEEPABLE_NAMES:
            raise ValueError(f"axis name must be one of {SWEEPABLE_NAMES}, got {self.name!r}")
        if self.count < 2:
            raise ValueError(f"axis count must be >= 2, got {self.count}")
        if not self.start < self.stop:
            raise ValueError(f"axis requires start < stop, got [{self.start}, {self.stop}]")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)


@dataclass(frozen=True)
class GridSpec:
    """A 1D or 2D grid over model parameters around fixed defaults."""

    axis1: Axis
    axis2: Axis | None
    fixed: ModelParams

    def __post_init__(self):
        if self.axis2 is not None and self.axis2.name == self.axis1.name:
            raise ValueError(f"grid axes must be distinct, both are {self.axis1.name!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.axis1.count, self.axis2.count if self.axis2 else 1)

    def param_list(self) -> list[ModelParams]:
        """Row-major parameter sets: axis2 varies fastest."""
        out = []
        for v1 in self.axis1.values():
            base = replace(self.fixed, **{self.axis1.name: float(v1)})
            if self.axis2 is None:
                out.append(base)
            else:
                for v2 in self.axis2.values():
                    out.append(replace(base, **{self.axis2.name: float(v2)}))
        return out


@dataclass(frozen=True)
class PhasePoint:
    """Result at one grid point.

    ``stable_points`` and ``selected_Z`` come from the mean-field
    solver; ``magnetization``, ``gap`` and ``zero_multiplicity`` from
    the quantum solver.  ``error`` carries a per-point failure message
    instead of aborting the sweep.
    """

    index: tuple[int, int]
    params: ModelParams
    stable_points: list[FixedPoint]
    stable_count: int
    selected_Z: float
    limit_cycle: bool
    magnetization: np.ndarray | None = None
    gap: float | None = None
    zero_multiplicity: int | None = None
    error: str | None = None


def _select_branch(params: ModelParams, stable: list[FixedPoint], settle_time: float):
    """Z of the stable fixed point reached from (just off) the south pole.

    Integration restarts for up to four settle windows; points that are
    still moving after that (limit cycles, marginal slivers) report NaN.
    """
    end = SOUTH_POLE_SEED
    residual = math.inf
    for _ in range(4):
        end = settle(end, params, settle_time)
        residual = float(np.abs(bloch_rhs(end, params)).max())
        if residual < 1e-8:
            break
    if residual >= 1e-8:
        return math.nan, end, False
    if stable:
        dists = [np.linalg.norm(end - fp.state) for fp in stable]
        k = int(np.argmin(dists))
        if dists[k] < 1e-3:
            return float(stable[k].state[2]), end, True
    return float(end[2]), end, True


def _detect_cycle_from(state, params: ModelParams) -> bool:
    traj = integrate_trajectory(state, params, t_end=150.0, rel_tol=1e-9, abs_tol=1e-11)
    try:
        return detect_limit_cycle(traj, transient_fraction=0.3) is not None
    except Exception:
        return False


def _mf_point(task) -> PhasePoint:
    (index, params, seed, n_seeds, select_branch, detect_cycles, settle_time) = task
    try:
        points = find_fixed_points(params, n_seeds=n_seeds, rng_seed=seed)
        stable = [fp for fp in points if fp.stable]
        selected_z = math.nan
        limit_cycle = False
        if select_branch or (detect_cycles and not stable):
            selected_z, end, converged = _select_branch(params, stable, settle_time)
            # a non-converged selection means the pole feeds a cycle: either
            # the bare unstable region or a cycle coexisting with fixed points
            if detect_cycles and not converged:
                limit_cycle = _detect_cycle_from(end, params)
        return PhasePoint(
            index=index,
            params=params,
            stable_points=stable,
            stable_count=len(stable),
            selected_Z=selected_z,
            limit_cycle=limit_cycle,
        )
    except Exception as exc:  # failures isolate to this row
        return PhasePoint(
            index=index,
            params=params,
            stable_points=[],
            stable_count=0,
            selected_Z=math.nan,
            limit_cycle=False,
            error=f"{type(exc).__name__}: {exc}",
        )


def _quantum_point(task) -> PhasePoint:
    (index, params, compute_gap, k) = task
    try:
        basis = build_basis(params.N)
        liouv = build_liouvillian(params, basis)
        method = "dense" if params.N <= DENSE_N_MAX else "iterative"
        if compute_gap:
            spectral = liouvillian_gap(liouv, method=method, k=k)
            rho = spectral.steady_state
            gap = spectral.gap
            mult = spectral.zero_multiplicity
        else:
            result = steady_state(liouv, method=method, k=k)
            rho, gap, mult = result.rho, None, result.zero_multiplicity
        mag = magnetization(rho)
        return PhasePoint(
            index=index,
            params=params,
            stable_points=[],
            stable_count=0,
            selected_Z=float(mag[2]),
            limit_cycle=False,
            magnetization=mag,
            gap=gap,
            zero_multiplicity=mult,
        )
    except Exception as exc:
        return PhasePoint(
            index=index,
            params=params,
            stable_points=[],
            stable_count=0,
            selected_Z=math.nan,
            limit_cycle=False,
            error=f"{type(exc).__name__}: {exc}",
        )


def _run_tasks(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("spawn")) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def _grid_indices(grid: GridSpec):
    n2 = grid.axis2.count if grid.axis2 else 1
    for i1 in range(grid.axis1.count):
        for i2 in range(n2):
            yield (i1, i2)


def phase_diagram(
    grid: GridSpec,
    solver: str = "mf",
    workers: int = 1,
    n_seeds: int = 200,
    rng_seed: int = 0,
    select_branch: bool = True,
    detect_cycles: bool = True,
    settle_time: float = 200.0,
    compute_gap: bool = False,
    gap_k: int = 12,
) -> list[PhasePoint]:
    """Scan a parameter grid with the mean-field or quantum solver.

    The mean-field solver records the stable fixed points at every
    point (seeded per point from ``rng_seed`` and the linear index),
    the Z of the branch reachable from the south pole, and a
    limit-cycle flag where no stable point exists.  The quantum solver
    records the steady-state magnetization and optionally the
    Liouvillian gap, selecting the iterative eigensolver above N = 30.
    Rows come back in row-major grid order at any worker count.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    params_list = grid.param_list()
    indices = list(_grid_indices(grid))
    if solver == "mf":
        tasks = [
            (idx, prm, [int(rng_seed), lin], n_seeds, select_branch, detect_cycles, settle_time)
            for lin, (idx, prm) in enumerate(zip(indices, params_list))
        ]
        return _run_tasks(_mf_point, tasks, workers)
    if solver == "quantum":
        for prm in params_list:
            if prm.N is None:
                raise ValueError("quantum sweeps require N in the fixed parameters")
            if prm.N > 100:
                raise ValueError(f"quantum sweeps are capped at N=100, got N={prm.N}")
        tasks = [
            (idx, prm, compute_gap, gap_k)
            for idx, prm in zip(indices, params_list)
        ]
        return _run_tasks(_quantum_point, tasks, workers)
    raise ValueError(f"solver must be 'mf' or 'quantum', got {solver!r}")


def multistability_map(
    grid: GridSpec,
    workers: int = 1,
    n_seeds: int = 200,
    rng_seed: int = 0,
    detect_cycles: bool = True,
) -> list[PhasePoint]:
    """Stable-solution counts over a (g, p) grid at fixed V.

    Branch selection is skipped (only counts and cycle flags matter),
    which keeps large scans cheap.
    """
    names = {grid.axis1.name} | ({grid.axis2.name} if grid.axis2 else set())
    if not names <= {"g", "p"}:
        raise ValueError(f"multistability map sweeps (g, p); got axes {sorted(names)}")
    return phase_diagram(
        grid,
        solver="mf",
        workers=workers,
        n_seeds=n_seeds,
        rng_seed=rng_seed,
        select_branch=False,
        detect_cycles=detect_cycles,
    )


def analytic_boundaries(v_values, gamma: float = 1.0) -> list[dict]:
    """Closed-form phase boundaries as a table over V.

    For p = 1 the stable region ends at |g| = sqrt(16 V^2 + Gamma^2)/8.
    For p = 0 the ordered window [g-, g+] exists for V <= -Gamma/2 with
    g(+/-) = Gamma^2 / (8 (2V +/- sqrt(4V^2 - Gamma^2))) (the printed
    units-of-Gamma form rescaled to carry rate units); both the signed
    values and their magnitudes are tabulated, NaN where the window is
    closed.
    """
    if gamma <= 0.0:
        raise ValueError(f"Gamma must be positive, got {gamma}")
    rows = []
    for v in np.asarray(v_values, dtype=float):
        gc_p1 = math.sqrt(16.0 * v * v + gamma * gamma) / 8.0
        disc = 4.0 * v * v - gamma * gamma
        if disc >= 0.0 and v != 0.0:
            root = math.sqrt(disc)
            gplus = gamma * gamma / (8.0 * (2.0 * v + root))
            gminus = gamma * gamma / (8.0 * (2.0 * v - root))
        else:
            gplus = gminus = math.nan
        rows.append(
            {
                "V": float(v),
                "gc_p1": gc_p1,
                "gplus_c": abs(gplus),
                "gminus_c": abs(gminus),
                "gplus_c_signed": gplus,
                "gminus_c_signed": gminus,
            }
        )
    return rows


@dataclass(frozen=True)
class HysteresisResult:
    """Up/down sweep branches over p and the detected bistable interval."""

    p_values: np.ndarray
    up: np.ndarray | None
    down: np.ndarray | None
    up_converged: np.ndarray | None
    down_converged: np.ndarray | None
    bistable_interval: tuple[float, float] | None
    solver: str
    threshold: float


def _mf_branch(p_values, base: ModelParams, settle_time: float):
    path = [replace(base, p=float(p)) for p in p_values]
    initial = np.array([0.0, 0.0, -1.0])
    points = continuation_sweep(path, initial, settle_time=settle_time)
    states = np.array([pt.state for pt in points])
    converged = np.array([pt.converged for pt in points])
    return states, converged


def _quantum_branch(p_values, base: ModelParams, window: float):
    basis = build_basis(base.N)
    first = replace(base, p=float(p_values[0]))
    method = "dense" if base.N <= DENSE_N_MAX else "iterative"
    rho0 = steady_state(build_liouvillian(first, basis), method=method).rho
    schedule = [(replace(base, p=float(p)), window) for p in p_values]
    records = ramped_evolution(rho0, schedule)
    return np.array([mag for _prm, mag in records])


def hysteresis_experiment(
    p_range: tuple[float, float, int],
    base: ModelParams,
    direction: str = "both",
    solver: str = "mf",
    settle_time: float = 200.0,
    window: float = 40.0,
    threshold: float = BRANCH_SPLIT_TOL,
) -> HysteresisResult:
    """Sweep p up and/or down and locate the bistable interval.

    The mean-field solver uses continuation with ``settle_time`` per
    station; the quantum solver evolves the density matrix for
    ``window`` per station starting from the steady state at the first
    station.  Both branches are reported on the ascending p grid; the
    bistable interval is where |Z_up - Z_down| exceeds ``threshold``.
    """
    p_lo, p_hi, count = p_range
    if count < 1:
        raise ValueError(f"p_range count must be >= 1, got {count}")
    if p_lo > p_hi:
        raise ValueError(f"p_range requires p_lo <= p_hi, got [{p_lo}, {p_hi}]")
    if count == 1 and p_lo != p_hi:
        raise ValueError("count=1 requires p_lo == p_hi")
    if direction not in ("up", "down", "both"):
        raise ValueError(f"direction must be up, down or both, got {direction!r}")
    if solver not in ("mf", "quantum"):
        raise ValueError(f"solver must be 'mf' or 'quantum', got {solver!r}")
    if solver == "quantum" and base.N is None:
        raise ValueError("quantum hysteresis requires N in the base parameters")
    p_values = np.linspace(p_lo, p_hi, count)

    up = down = up_conv = down_conv = None
    if direction in ("up", "both"):
        if solver == "mf":
            up, up_conv = _mf_branch(p_values, base, settle_time)
        else:
            up = _quantum_branch(p_values, base, window)
    if direction in ("down", "both"):
        if solver == "mf":
            states, conv = _mf_branch(p_values[::-1], base, settle_time)
            down, down_conv = states[::-1], conv[::-1]
        else:
            down = _quantum_branch(p_values[::-1], base, window)[::-1]

    interval = None
    if up is not None and down is not None:
        split = np.abs(up[:, 2] - down[:, 2]) > threshold
        if split.any():
            lo, hi = np.flatnonzero(split)[[0, -1]]
            interval = (float(p_values[lo]), float(p_values[hi]))
    return HysteresisResult(
        p_values=p_values,
        up=up,
        down=down,
        up_converged=up_conv,
        down_converged=down_conv,
        bistable_interval=interval,
        solver=solver,
        threshold=threshold,
    )
