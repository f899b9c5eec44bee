"""Mean-field Bloch dynamics of the driven-dissipative collective spin.

The normalized magnetization (X, Y, Z) = <J>/(N/2) obeys the closed
Bloch equations (all rates in the same units, Gamma is the collective
decay rate, p in [0, 1] mixes the two Hamiltonian orientations):

    dX/dt = -p (V/2) Y Z - (1-p) g Y + (Gamma/8) X Z
    dY/dt = p ((V/2) X Z - g Z) + (1-p) (g X - (V/2) X Z) + (Gamma/8) Y Z
    dZ/dt = p g Y + (1-p) (V/2) X Y - (Gamma/8) (1 - Z^2)

Total angular momentum conservation keeps on-sphere initial data on the
unit sphere: d(r^2)/dt = (Gamma/4) Z (r^2 - 1) vanishes at r = 1.

This module provides the right-hand side and its analytic Jacobian,
closed-form steady states for the two limiting orientations p = 1 and
p = 0, a multi-start damped-Newton fixed-point search with linear
stability classification, adaptive trajectory integration, limit-cycle
detection, and continuation sweeps along a parameter path.

Bloch vectors are plain length-3 float arrays (X, Y, Z) throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InsufficientDataError, IntegrationError, NotAFixedPointError

__all__ = [
    "ModelParams",
    "FixedPoint",
    "Trajectory",
    "LimitCycle",
    "ContinuationPoint",
    "STABILITY_TOL",
    "ROOT_TOL",
    "bloch_rhs",
    "jacobian",
    "analytic_p1",
    "analytic_p0",
    "classify_stability",
    "find_fixed_points",
    "integrate_trajectory",
    "settle",
    "detect_limit_cycle",
    "continuation_sweep",
]

# Eigenvalue real parts within this band of zero count as marginal.
STABILITY_TOL = 1e-9
# Max-abs residual below which a state counts as a root of the flow.
ROOT_TOL = 1e-10
# Roots closer than this (Euclidean) are considered the same fixed point.
DEDUP_TOL = 1e-6


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the model, all rates in units of Gamma.

    V is the Ising interaction strength, g the Rabi frequency of the
    external field, p in [0, 1] the mixing parameter between the two
    Hamiltonian orientations, Gamma the collective decay rate.  N is
    the spin count and is only consulted by the quantum solvers.
    """

    V: float
    g: float
    p: float
    Gamma: float = 1.0
    N: int | None = None

    def __post_init__(self):
        for name in ("V", "g", "p", "Gamma"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must satisfy 0 <= p <= 1, got {self.p}")
        if self.Gamma <= 0.0:
            raise ValueError(f"Gamma must be positive, got {self.Gamma}")
        if self.N is not None:
            if not isinstance(self.N, (int, np.integer)) or isinstance(self.N, bool):
                raise ValueError(f"N must be a positive integer, got {self.N!r}")
            if self.N < 1:
                raise ValueError(f"N must be >= 1, got {self.N}")

    def with_value(self, name: str, value) -> "ModelParams":
        """Copy with one field replaced (used by sweeps)."""
        return replace(self, **{name: value})


@dataclass(frozen=True)
class FixedPoint:
    """A root of the Bloch flow with its linear stability verdict.

    ``stable`` is True iff every Jacobian eigenvalue has real part
    below -STABILITY_TOL; eigenvalues within +/-STABILITY_TOL of the
    imaginary axis flag the point as ``marginal`` instead.
    """

    state: np.ndarray
    eigenvalues: np.ndarray
    stable: bool
    marginal: bool
    residual: float


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered Bloch states from one integration run."""

    times: np.ndarray
    states: np.ndarray
    params: ModelParams


@dataclass(frozen=True)
class LimitCycle:
    """Period and peak-to-trough Z amplitude of a detected cycle."""

    period: float
    z_amplitude: float


@dataclass(frozen=True)
class ContinuationPoint:
    """One station of a continuation sweep."""

    params: ModelParams
    state: np.ndarray
    converged: bool
    residual: float


def _rhs_many(states: np.ndarray, params: ModelParams) -> np.ndarray:
    """Bloch right-hand side for a stack of states, shape (n, 3)."""
    x, y, z = states[..., 0], states[..., 1], states[..., 2]
    v, g, p, gam = params.V, params.g, params.p, params.Gamma
    fx = -p * (v / 2.0) * y * z - (1.0 - p) * g * y + (gam / 8.0) * x * z
    fy = (
        p * ((v / 2.0) * x * z - g * z)
        + (1.0 - p) * (g * x - (v / 2.0) * x * z)
        + (gam / 8.0) * y * z
    )
    fz = p * g * y + (1.0 - p) * (v / 2.0) * x * y - (gam / 8.0) * (1.0 - z * z)
    return np.stack([fx, fy, fz], axis=-1)


def bloch_rhs(state, params: ModelParams) -> np.ndarray:
    """Time derivative (dX, dY, dZ) of the Bloch vector at ``state``."""
    state = np.asarray(state, dtype=float)
    return _rhs_many(state[None, :], params)[0]


def _jacobian_many(states: np.ndarray, params: ModelParams) -> np.ndarray:
    """Analytic Jacobian of the Bloch flow for a stack of states, (n, 3, 3)."""
    x, y, z = states[..., 0], states[..., 1], states[..., 2]
    v, g, p, gam = params.V, params.g, params.p, params.Gamma
    n = states.shape[0]
    jac = np.empty((n, 3, 3), dtype=float)
    jac[:, 0, 0] = gam * z / 8.0
    jac[:, 0, 1] = (p - 1.0) * g - (p / 2.0) * v * z
    jac[:, 0, 2] = -(p / 2.0) * v * y + gam * x / 8.0
    jac[:, 1, 0] = (2.0 * p - 1.0) / 2.0 * v * z + (1.0 - p) * g
    jac[:, 1, 1] = gam * z / 8.0
    jac[:, 1, 2] = (2.0 * p - 1.0) / 2.0 * v * x - p * g + gam * y / 8.0
    jac[:, 2, 0] = (1.0 - p) / 2.0 * v * y
    jac[:, 2, 1] = p * g + (1.0 - p) / 2.0 * v * x
    jac[:, 2, 2] = gam * z / 4.0
    return jac


def jacobian(state, params: ModelParams) -> np.ndarray:
    """3x3 Jacobian matrix of the Bloch flow at ``state``."""
    state = np.asarray(state, dtype=float)
    return _jacobian_many(state[None, :], params)[0]


def analytic_p1(params: ModelParams) -> np.ndarray | None:
    """Closed-form stable steady state for p = 1.

    Returns (32 g V / D, 8 g Gamma / D, -sqrt(1 - 64 g^2 / D)) with
    D = 16 V^2 + Gamma^2, or None where the radicand is negative (the
    region without stable fixed points).  The returned vector lies on
    the unit sphere identically: X^2 + Y^2 = 64 g^2 / D.
    """
    if params.p != 1.0:
        raise ValueError(f"closed form requires p=1, got p={params.p}")
    v, g, gam = params.V, params.g, params.Gamma
    d = 16.0 * v * v + gam * gam
    radicand = 1.0 - 64.0 * g * g / d
    if radicand < 0.0:
        return None
    return np.array([32.0 * g * v / d, 8.0 * g * gam / d, -math.sqrt(radicand)])


def analytic_p0(params: ModelParams) -> list[tuple[np.ndarray, str]]:
    """Closed-form steady-state candidates for p = 0, with branch labels.

    The nontrivial family is (X, Y, Z) = (eta, Gamma*eta*xi, 8*g*xi)
    where xi solves Gamma^2 xi^2 - 4 V xi + 1 = 0, i.e.
    xi(+/-) = (2V +/- sqrt(4V^2 - Gamma^2)) / Gamma^2, and
    eta = +/- sqrt(1 - (64 g^2 + Gamma^2) xi / (4V)).  Labels are two
    sign characters (xi branch, eta sign).  The polarized poles
    (0, 0, -1) and (0, 0, +1), which are always roots at p = 0, are
    appended with labels "pole-" and "pole+".

    Only branches with a real eta are returned; every returned vector
    lies on the unit sphere (the quadratic for xi enforces it).
    """
    if params.p != 0.0:
        raise ValueError(f"closed form requires p=0, got p={params.p}")
    v, g, gam = params.V, params.g, params.Gamma
    out: list[tuple[np.ndarray, str]] = []
    disc = 4.0 * v * v - gam * gam
    if disc >= 0.0 and v != 0.0:
        root = math.sqrt(disc)
        for s_xi, xi in (("+", (2.0 * v + root) / gam**2), ("-", (2.0 * v - root) / gam**2)):
            radicand = 1.0 - (64.0 * g * g + gam * gam) * xi / (4.0 * v)
            if radicand < 0.0:
                continue
            eta = math.sqrt(radicand)
            for s_eta, e in (("+", eta), ("-", -eta)):
                out.append((np.array([e, gam * e * xi, 8.0 * g * xi]), s_xi + s_eta))
    out.append((np.array([0.0, 0.0, -1.0]), "pole-"))
    out.append((np.array([0.0, 0.0, 1.0]), "pole+"))
    return out


def classify_stability(state, params: ModelParams, root_tol: float = 1e-8) -> FixedPoint:
    """Linear stability of a fixed point via the Jacobian spectrum.

    Raises
    ------
    NotAFixedPointError
        If the max-abs Bloch residual at ``state`` exceeds ``root_tol``.
    """
    state = np.asarray(state, dtype=float)
    residual = float(np.abs(bloch_rhs(state, params)).max())
    if residual > root_tol:
        raise NotAFixedPointError(
            f"residual {residual:.3e} exceeds root tolerance {root_tol:.1e}"
        )
    eigs = np.linalg.eigvals(jacobian(state, params))
    order = np.lexsort((eigs.imag, -eigs.real))
    eigs = eigs[order]
    max_re = float(eigs.real.max())
    stable = max_re < -STABILITY_TOL
    marginal = (not stable) and (max_re <= STABILITY_TOL)
    return FixedPoint(
        state=state.copy(),
        eigenvalues=eigs,
        stable=stable,
        marginal=marginal,
        residual=residual,
    )


def find_fixed_points(
    params: ModelParams,
    n_seeds: int = 200,
    rng_seed=0,
    max_iter: int = 80,
    root_tol: float = ROOT_TOL,
    dedup_tol: float = DEDUP_TOL,
) -> list[FixedPoint]:
    """Multi-start damped-Newton search for all fixed points of the flow.

    Seeds are drawn uniformly on the unit sphere from a generator
    seeded with ``rng_seed``; the Newton iteration runs on the raw
    3-component residual (no constraint elimination) with backtracking
    damping and a pseudo-inverse step, so it tolerates the singular
    Jacobians that occur on marginal manifolds.  Converged roots
    (max-abs residual below ``root_tol``) are deduplicated at distance
    ``dedup_tol`` in seed order and classified.

    Returns stable points first, then the rest, each group ordered by
    (Z, X, Y).  An empty list is a legal result (no roots found).
    """
    if n_seeds < 1:
        raise ValueError(f"n_seeds must be >= 1, got {n_seeds}")
    rng = np.random.default_rng(rng_seed)
    seeds = rng.normal(size=(n_seeds, 3))
    seeds /= np.maximum(np.linalg.norm(seeds, axis=1, keepdims=True), 1e-300)

    states = seeds.copy()
    resid_vec = _rhs_many(states, params)
    res = np.abs(resid_vec).max(axis=1)
    alive = np.ones(n_seeds, dtype=bool)

    for _ in range(max_iter):
        active = alive & (res > root_tol)
        if not active.any():
            break
        idx = np.flatnonzero(active)
        s = states[idx]
        f = resid_vec[idx]
        jac = _jacobian_many(s, params)
        step = -np.einsum("nij,nj->ni", np.linalg.pinv(jac, rcond=1e-10), f)
        # Clamp runaway steps (pinv can still be large near rank changes).
        norms = np.linalg.norm(step, axis=1)
        too_big = norms > 2.0
        if too_big.any():
            step[too_big] *= (2.0 / norms[too_big])[:, None]

        base = np.abs(f).max(axis=1)
        lam = np.ones(len(idx))
        accepted = np.zeros(len(idx), dtype=bool)
        for _bt in range(14):
            todo = np.flatnonzero(~accepted)
            if todo.size == 0:
                break
            trial = s[todo] + lam[todo, None] * step[todo]
            f_trial = _rhs_many(trial, params)
            r_trial = np.abs(f_trial).max(axis=1)
            ok = r_trial <= (1.0 - 1e-4 * lam[todo]) * base[todo]
            hit = todo[ok]
            states[idx[hit]] = trial[ok]
            resid_vec[idx[hit]] = f_trial[ok]
            res[idx[hit]] = r_trial[ok]
            accepted[hit] = True
            lam[todo[~ok]] *= 0.5
        # Seeds whose line search failed outright are abandoned.
        alive[idx[~accepted]] = False
        # Seeds that wandered far off the sphere chase irrelevant roots.
        far = np.linalg.norm(states[idx], axis=1) > 10.0
        alive[idx[far]] = False

    conv = np.flatnonzero((res <= root_tol) & np.isfinite(res))
    unique: list[tuple[np.ndarray, float]] = []
    for i in conv:
        st, r = states[i], res[i]
        for k, (u_state, u_res) in enumerate(unique):
            if np.linalg.norm(st - u_state) < dedup_tol:
                if r < u_res:
                    unique[k] = (st, r)
                break
        else:
            unique.append((st, r))

    points = [classify_stability(st, params, root_tol=10 * root_tol) for st, _ in unique]
    points.sort(key=lambda fp: (not fp.stable, fp.state[2], fp.state[0], fp.state[1]))
    return points


def _validate_tols(rel_tol: float, abs_tol: float):
    if not 0.0 < rel_tol <= 1e-3:
        raise ValueError(f"rel_tol must be in (0, 1e-3], got {rel_tol}")
    if not 0.0 < abs_tol <= 1e-3:
        raise ValueError(f"abs_tol must be in (0, 1e-3], got {abs_tol}")


def integrate_trajectory(
    initial,
    params: ModelParams,
    t_end: float,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-12,
    n_eval: int | None = None,
) -> Trajectory:
    """Adaptive integration of the Bloch equations from ``initial``.

    Uses an 8th-order explicit Runge-Kutta scheme; with the default
    tolerances the unit-sphere norm drifts by less than 1e-8 over
    t <= 100/Gamma for on-sphere initial data.  Output is sampled on a
    uniform grid of ``n_eval`` points (default 100 per time unit,
    clipped to [2000, 50000]) so downstream peak detection sees a
    regular sampling.
    """
    if t_end <= 0.0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    _validate_tols(rel_tol, abs_tol)
    if n_eval is None:
        n_eval = int(min(50_000, max(2_000, 100 * t_end)))
    initial = np.asarray(initial, dtype=float)
    sol = solve_ivp(
        lambda _t, y: _rhs_many(y[None, :], params)[0],
        (0.0, float(t_end)),
        initial,
        method="DOP853",
        rtol=rel_tol,
        atol=abs_tol,
        t_eval=np.linspace(0.0, float(t_end), n_eval),
    )
    if not sol.success:
        raise IntegrationError(f"Bloch integration failed: {sol.message}")
    return Trajectory(times=sol.t, states=sol.y.T.copy(), params=params)


def settle(
    initial,
    params: ModelParams,
    settle_time: float,
    rel_tol: float = 1e-12,
    abs_tol: float = 1e-14,
) -> np.ndarray:
    """Endpoint of an integration over ``settle_time`` (no trajectory kept)."""
    if settle_time <= 0.0:
        raise ValueError(f"settle_time must be positive, got {settle_time}")
    _validate_tols(rel_tol, abs_tol)
    initial = np.asarray(initial, dtype=float)
    sol = solve_ivp(
        lambda _t, y: _rhs_many(y[None, :], params)[0],
        (0.0, float(settle_time)),
        initial,
        method="DOP853",
        rtol=rel_tol,
        atol=abs_tol,
        t_eval=[float(settle_time)],
    )
    if not sol.success:
        raise IntegrationError(f"Bloch integration failed: {sol.message}")
    return sol.y[:, -1].copy()


def detect_limit_cycle(
    traj: Trajectory, transient_fraction: float = 0.5
) -> LimitCycle | None:
    """Detect a periodic steady state from the Z(t) maxima spacing.

    The first ``transient_fraction`` of the trajectory is discarded.
    Returns None when Z has converged (total variation in the window
    below 1e-6, or no oscillation at all) and a LimitCycle when the
    successive-maxima spacings are regular (coefficient of variation
    below 1%) with stationary peak heights.  Irregular oscillation
    also returns None.

    Raises
    ------
    InsufficientDataError
        If the post-transient window holds fewer than five full
        oscillations (or too few samples to tell).
    """
    if not 0.0 <= transient_fraction < 1.0:
        raise ValueError(f"transient_fraction must be in [0, 1), got {transient_fraction}")
    times, z = traj.times, traj.states[:, 2]
    t_cut = times[0] + transient_fraction * (times[-1] - times[0])
    start = int(np.searchsorted(times, t_cut))
    t_win, z_win = times[start:], z[start:]
    if t_win.size < 16:
        raise InsufficientDataError(
            f"post-transient window has only {t_win.size} samples"
        )
    if np.abs(np.diff(z_win)).sum() < 1e-6:
        return None

    interior = np.flatnonzero((z_win[1:-1] > z_win[:-2]) & (z_win[1:-1] >= z_win[2:])) + 1
    if interior.size == 0:
        # no maxima: either a monotone relaxation that has essentially
        # stopped, or a window shorter than one oscillation
        dt = t_win[1] - t_win[0]
        if abs(z_win[-1] - z_win[-2]) / dt < 1e-6:
            return None
        raise InsufficientDataError("window holds no complete oscillation")
    if interior.size < 6:
        raise InsufficientDataError(
            f"only {interior.size} Z maxima in the window; need >= 6 for a period"
        )

    # Quadratic refinement of each peak position/height (uniform sampling).
    peak_t = np.empty(interior.size)
    peak_h = np.empty(interior.size)
    dt = t_win[1] - t_win[0]
    for k, i in enumerate(interior):
        a, b, c = z_win[i - 1], z_win[i], z_win[i + 1]
        denom = a - 2.0 * b + c
        shift = 0.0 if denom == 0.0 else 0.5 * (a - c) / denom
        peak_t[k] = t_win[i] + shift * dt
        peak_h[k] = b - 0.25 * (a - c) * shift

    spacing = np.diff(peak_t)
    mean_spacing = spacing.mean()
    if mean_spacing <= 0.0:
        return None
    cv = spacing.std() / mean_spacing
    amplitude = float(z_win.max() - z_win.min())
    heights_stationary = (peak_h.max() - peak_h.min()) <= 0.01 * amplitude
    if cv < 0.01 and heights_stationary:
        return LimitCycle(period=float(mean_spacing), z_amplitude=amplitude)
    return None


_SWEEPABLE = ("V", "g", "p", "Gamma")


def continuation_sweep(
    params_path: list[ModelParams],
    initial,
    settle_time: float = 200.0,
    rel_tol: float = 1e-12,
    abs_tol: float = 1e-14,
) -> list[ContinuationPoint]:
    """Follow a steady-state branch along a parameter path.

    At each station the flow is integrated for ``settle_time`` starting
    from the previous converged state (the first station starts from
    ``initial``); the endpoint is recorded together with a convergence
    flag (max-abs residual below 1e-8).  Consecutive path entries must
    differ in exactly one of V, g, p, Gamma.
    """
    if not params_path:
        raise ValueError("params_path must not be empty")
    for a, b in zip(params_path, params_path[1:]):
        changed = [n for n in _SWEEPABLE if getattr(a, n) != getattr(b, n)]
        if len(changed) != 1:
            raise ValueError(
                f"consecutive path entries must differ in exactly one of "
                f"{_SWEEPABLE}, got changes in {changed or 'nothing'}"
            )
    state = np.asarray(initial, dtype=float)
    branch: list[ContinuationPoint] = []
    for params in params_path:
        state = settle(state, params, settle_time, rel_tol=rel_tol, abs_tol=abs_tol)
        residual = float(np.abs(bloch_rhs(state, params)).max())
        branch.append(
            ContinuationPoint(
                params=params,
                state=state.copy(),
                converged=residual < 1e-8,
                residual=residual,
            )
        )
    return branch
