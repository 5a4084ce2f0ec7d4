"""Time stepping for the two-species stochastic reaction-diffusion system.

Two schemes advance the truncated system

    dU = [Laplacian U + f_{n,1}(x, U, V)] dt + sigma_1 U dW_1
    dV = [Laplacian V + f_{n,2}(x, U, V)] dt + sigma_2 V dW_2

with Neumann conditions on [0, 1]:

  fd        semi-implicit Euler: implicit tridiagonal diffusion step with
            mirrored ghost cells (exact discrete mass conservation for the
            pure heat flow), explicit truncated drift, explicit
            multiplicative sheet noise sigma u dW / h;
  spectral  exponential Euler on the DCT-II modes: the full right-hand side
            is assembled in physical space, transformed, damped by
            exp(-k^2 pi^2 dt), and transformed back; noise enters as
            sum_k lambda_k dbeta_k e_k(x) with K = grid_size modes by
            default, matching the sheet discretization's per-cell variance.

Both schemes clamp negative cells to zero after the step and account the
clipped mass.  Paths are advanced in batches along a leading axis; every
path owns its own noise streams, so results are bit-identical regardless of
batch decomposition or thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .grid import from_modes, to_modes
from .model import (
    CoefficientSet,
    Field,
    default_truncation_radius,
    drift_lipschitz_bound,
    truncated_drift,
)
from .noise import SPECIES_U, SPECIES_V, NoisePlan

# dt * (drift Lipschitz bound at the truncation radius) must stay below this.
STABILITY_LIMIT = 0.5

# Target elements per noise block draw; bounds memory, never changes results.
_BLOCK_BUDGET = 8_000_000


class SimulationBlowup(RuntimeError):
    """A state stopped being finite; carries the step and recent history."""


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and recording choices for one run.

    Parameters
    ----------
    scheme : "fd" or "spectral"
    dt, t_final : float
        Step and horizon; t_final must be an integer number of steps.
    grid_size : int
        Number of cells.
    snapshot_times : tuple of float
        Times at which full fields are kept (single-path runs).
    record_interval : float, optional
        Spacing of the scalar record series; defaults to t_final / 200.
    truncation_radius : float, optional
        Drift truncation ball radius; defaults to 10 (1 + |init|_E).
    n_modes : int, optional
        Spectral noise modes; defaults to grid_size.
    positivity_policy : str
        Only "clamp" is implemented: negatives are set to zero post step.
    probe_sites : tuple of float
        x locations whose values enter the record series and the
        time-increment statistics.
    stats_after : float, optional
        Accumulate increment statistics from this time on (None: disabled).
    space_lag_cells : tuple of int
        Cell separations for spatial increment statistics.
    time_lag_steps : tuple of int
        Step separations for temporal increment statistics at probe sites.
    space_anchor : float, optional
        If set, spatial increments at lag l are the dyadic pairs
        (anchor - 2l, anchor - l) and (anchor + l, anchor + 2l) instead of
        pooled over all pairs.  For profiles with one distinguished feature
        the lag-l modulus lives beside the feature; pairs through the
        feature cell would measure its value, not the increment scaling.
    """

    scheme: str = "fd"
    dt: float = 1e-3
    t_final: float = 1.0
    grid_size: int = 64
    snapshot_times: tuple = ()
    record_interval: float | None = None
    truncation_radius: float | None = None
    n_modes: int | None = None
    positivity_policy: str = "clamp"
    probe_sites: tuple = (0.125, 0.375, 0.5, 0.625, 0.875)
    stats_after: float | None = None
    space_lag_cells: tuple = ()
    time_lag_steps: tuple = ()
    space_anchor: float | None = None

    def __post_init__(self):
        if self.scheme not in ("fd", "spectral"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.positivity_policy != "clamp":
            raise ValueError(f"unknown positivity policy {self.positivity_policy!r}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least one step")
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        n_steps = round(self.t_final / self.dt)
        if abs(n_steps * self.dt - self.t_final) > 1e-9 * max(1.0, self.t_final):
            raise ValueError(f"t_final = {self.t_final} is not a multiple of dt = {self.dt}")
        for t in self.snapshot_times:
            if not 0.0 <= t <= self.t_final + 1e-12:
                raise ValueError(f"snapshot time {t} outside [0, t_final]")
        if self.record_interval is not None and self.record_interval < self.dt:
            raise ValueError("record_interval must be >= dt")
        if self.truncation_radius is not None and self.truncation_radius <= 0:
            raise ValueError("truncation_radius must be positive")
        if self.n_modes is not None and not 1 <= self.n_modes <= self.grid_size:
            raise ValueError("n_modes must be in [1, grid_size]")
        for x in self.probe_sites:
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"probe site {x} outside [0, 1]")
        if any(l < 1 for l in self.space_lag_cells) or any(l >= self.grid_size for l in self.space_lag_cells):
            raise ValueError("space lags must be in [1, grid_size)")
        if any(l < 1 for l in self.time_lag_steps):
            raise ValueError("time lags must be >= 1 step")

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)

    @property
    def record_every(self) -> int:
        interval = self.record_interval if self.record_interval is not None else self.t_final / 200
        return max(1, round(interval / self.dt))

    def site_indices(self) -> np.ndarray:
        n = self.grid_size
        return np.clip(np.round(np.asarray(self.probe_sites) * n - 0.5).astype(int), 0, n - 1)


def validate_run(config: SolverConfig, coeffs: CoefficientSet, init: Field) -> float:
    """Check grid agreement and the dt-Lipschitz stability bound.

    Returns the effective truncation radius.
    """
    if coeffs.n != config.grid_size or init.n != config.grid_size:
        raise ValueError(
            f"grid mismatch: config {config.grid_size}, coefficients {coeffs.n}, init {init.n}")
    radius = config.truncation_radius
    if radius is None:
        radius = default_truncation_radius(init)
    lip = drift_lipschitz_bound(coeffs, radius)
    if config.dt * lip > STABILITY_LIMIT:
        raise ValueError(
            f"dt * drift Lipschitz bound = {config.dt * lip:.3g} exceeds {STABILITY_LIMIT}; "
            f"reduce dt below {STABILITY_LIMIT / lip:.3g} or the truncation radius {radius:.3g}")
    return radius


# ---------------------------------------------------------------------------
# Single steps (batched along leading axes).
# ---------------------------------------------------------------------------

def heat_matrix_banded(n: int, dt: float) -> np.ndarray:
    """Banded (I - dt L) for the mirrored-ghost Neumann Laplacian.

    Layout for scipy.linalg.solve_banded with (1, 1) bands:

        ab[0, 1:] upper diagonal      -dt/h^2
        ab[1, :]  main diagonal       1 + 2 dt/h^2  (1 + dt/h^2 at the ends)
        ab[2, :-1] lower diagonal     -dt/h^2
    """
    r = dt * n * n
    ab = np.zeros((3, n))
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[1, 0] = ab[1, -1] = 1.0 + r
    ab[2, :-1] = -r
    return ab


def _clamp(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Returns (clipped mass ratio per path, clip event count per path);
    # arr is modified in place.
    neg = np.minimum(arr, 0.0)
    clipped = -neg.sum(axis=-1)
    pre_mass = arr.sum(axis=-1)
    np.maximum(arr, 0.0, out=arr)
    ratio = clipped / np.maximum(np.abs(pre_mass), 1e-300)
    return ratio, (neg < 0).sum(axis=-1)


def step_fd(u, v, coeffs: CoefficientSet, xi_u, xi_v, dt: float, radius: float,
            ab: np.ndarray | None = None):
    """One semi-implicit step.  xi are standard normals, shape like u.

    Returns (u_next, v_next, clip_ratio_u, clip_ratio_v); clip ratios are the
    clipped-to-total mass ratios of the positivity clamp this step.
    """
    n = u.shape[-1]
    if ab is None:
        ab = heat_matrix_banded(n, dt)
    f1, f2 = truncated_drift(u, v, coeffs, radius)
    scale1 = coeffs.sigma1 * np.sqrt(dt * n)
    scale2 = coeffs.sigma2 * np.sqrt(dt * n)
    rhs_u = u + dt * f1 + scale1 * u * xi_u
    rhs_v = v + dt * f2 + scale2 * v * xi_v
    u_next = solve_banded((1, 1), ab, np.atleast_2d(rhs_u).reshape(-1, n).T).T.reshape(u.shape).copy()
    v_next = solve_banded((1, 1), ab, np.atleast_2d(rhs_v).reshape(-1, n).T).T.reshape(v.shape).copy()
    ratio_u, _ = _clamp(u_next)
    ratio_v, _ = _clamp(v_next)
    return u_next, v_next, ratio_u, ratio_v


def step_spectral(u, v, coeffs: CoefficientSet, xi_u, xi_v, dt: float, radius: float,
                  weights: np.ndarray | None = None):
    """One exponential-Euler step.  xi are standard normals, shape (..., K).

    Modes K <= grid_size; the increment field sum_k lambda_k sqrt(dt) xi_k e_k
    is realized on the grid before multiplying the state.
    """
    n = u.shape[-1]
    k_modes = xi_u.shape[-1]
    coeff_u = np.sqrt(dt) * xi_u
    coeff_v = np.sqrt(dt) * xi_v
    if weights is not None:
        coeff_u = coeff_u * weights
        coeff_v = coeff_v * weights
    if k_modes < n:
        pad = np.zeros(u.shape[:-1] + (n - k_modes,))
        coeff_u = np.concatenate([coeff_u, pad], axis=-1)
        coeff_v = np.concatenate([coeff_v, pad], axis=-1)
    dw_u = from_modes(coeff_u)
    dw_v = from_modes(coeff_v)
    f1, f2 = truncated_drift(u, v, coeffs, radius)
    damp = np.exp(-(np.arange(n) ** 2) * np.pi**2 * dt)
    u_next = from_modes(to_modes(u + dt * f1 + coeffs.sigma1 * u * dw_u) * damp)
    v_next = from_modes(to_modes(v + dt * f2 + coeffs.sigma2 * v * dw_v) * damp)
    ratio_u, _ = _clamp(u_next)
    ratio_v, _ = _clamp(v_next)
    return u_next, v_next, ratio_u, ratio_v


# ---------------------------------------------------------------------------
# Ensembles.
# ---------------------------------------------------------------------------

@dataclass
class EnsembleStats:
    """Per-path summary series and increment statistics of an ensemble.

    All per-path arrays have the path axis first; merging ensembles is
    concatenation along it, so chunked and threaded runs reproduce the
    single-chunk result exactly.
    """

    master_seed: int
    scheme: str
    dt: float
    grid_size: int
    path_indices: np.ndarray        # (P,)
    times: np.ndarray               # (R,) record times
    mass_u: np.ndarray              # (P, R)
    mass_v: np.ndarray              # (P, R)
    supnorm: np.ndarray             # (P, R)
    rough_u: np.ndarray             # (P, R) max adjacent jump of U over sqrt(h)
    site_x: np.ndarray              # (S,)
    site_u: np.ndarray              # (P, R, S)
    site_v: np.ndarray              # (P, R, S)
    exit_step: np.ndarray           # (P,) first step outside the ball, -1 if none
    clip_max_ratio: np.ndarray      # (P,) worst per-step clipped mass ratio
    clip_events: np.ndarray         # (P,) steps-with-clamp count, summed over species
    truncation_radius: float
    space_lags: np.ndarray = field(default_factory=lambda: np.empty(0))
    space_p2: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    space_p4: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    space_count: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    time_lags: np.ndarray = field(default_factory=lambda: np.empty(0))
    time_p2: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    time_p4: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    time_count: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def n_paths(self) -> int:
        return self.path_indices.size

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        if (self.master_seed, self.scheme, self.dt, self.grid_size) != \
           (other.master_seed, other.scheme, other.dt, other.grid_size):
            raise ValueError("cannot merge ensembles with different run parameters")
        if not np.array_equal(self.times, other.times):
            raise ValueError("cannot merge ensembles with different record times")
        if np.intersect1d(self.path_indices, other.path_indices).size:
            raise ValueError("cannot merge ensembles with overlapping path indices")
        if not (np.array_equal(self.space_count, other.space_count)
                and np.array_equal(self.time_count, other.time_count)):
            raise ValueError("cannot merge ensembles with different statistics plans")
        cat = lambda a, b: np.concatenate([a, b], axis=0)
        return replace(
            self,
            path_indices=cat(self.path_indices, other.path_indices),
            mass_u=cat(self.mass_u, other.mass_u),
            mass_v=cat(self.mass_v, other.mass_v),
            supnorm=cat(self.supnorm, other.supnorm),
            rough_u=cat(self.rough_u, other.rough_u),
            site_u=cat(self.site_u, other.site_u),
            site_v=cat(self.site_v, other.site_v),
            exit_step=cat(self.exit_step, other.exit_step),
            clip_max_ratio=cat(self.clip_max_ratio, other.clip_max_ratio),
            clip_events=cat(self.clip_events, other.clip_events),
            space_p2=cat(self.space_p2, other.space_p2),
            space_p4=cat(self.space_p4, other.space_p4),
            time_p2=cat(self.time_p2, other.time_p2),
            time_p4=cat(self.time_p4, other.time_p4),
        )

    def exit_fraction(self) -> float:
        return float(np.mean(self.exit_step >= 0))


@dataclass
class Trajectory:
    """A single path: snapshot fields plus its record series."""

    snapshots: list
    stats: EnsembleStats

    @property
    def times(self) -> np.ndarray:
        return np.array([f.time for f in self.snapshots])


def _run_paths(init: Field, coeffs: CoefficientSet, plan: NoisePlan,
               config: SolverConfig, path_indices,
               keep_snapshots: bool = False) -> tuple[EnsembleStats, list]:
    radius = validate_run(config, coeffs, init)
    if plan.representation == "sheet" and config.scheme != "fd":
        raise ValueError("sheet noise drives the fd scheme; use a spectral plan for the spectral scheme")
    if plan.representation == "spectral" and config.scheme != "spectral":
        raise ValueError("spectral noise drives the spectral scheme")

    path_indices = np.asarray(path_indices, dtype=np.int64)
    p = path_indices.size
    n = config.grid_size
    dt = config.dt
    n_steps = config.n_steps
    k_modes = (config.n_modes or n) if config.scheme == "spectral" else n
    weights = plan.weights
    if weights is not None:
        if weights.size < k_modes:
            raise ValueError(
                f"noise plan provides {weights.size} mode weights, scheme needs {k_modes}")
        weights = weights[:k_modes]

    u = np.tile(init.u, (p, 1))
    v = np.tile(init.v, (p, 1))

    ab = heat_matrix_banded(n, dt) if config.scheme == "fd" else None

    record_steps = np.arange(0, n_steps + 1, config.record_every)
    if record_steps[-1] != n_steps:
        record_steps = np.append(record_steps, n_steps)
    n_rec = record_steps.size
    record_lookup = {int(s): i for i, s in enumerate(record_steps)}

    snapshot_steps = {}
    if keep_snapshots:
        for t_snap in config.snapshot_times:
            step_idx = round(t_snap / dt)
            snapshot_steps.setdefault(step_idx, []).append(t_snap)

    site_idx = config.site_indices()
    n_sites = site_idx.size

    mass_u = np.empty((p, n_rec))
    mass_v = np.empty((p, n_rec))
    supnorm_rec = np.empty((p, n_rec))
    rough_u = np.empty((p, n_rec))
    site_u = np.empty((p, n_rec, n_sites))
    site_v = np.empty((p, n_rec, n_sites))
    exit_step = np.full(p, -1, dtype=np.int64)
    clip_max = np.zeros(p)
    clip_events = np.zeros(p, dtype=np.int64)

    space_lags = np.asarray(config.space_lag_cells, dtype=np.int64)
    time_lags = np.asarray(config.time_lag_steps, dtype=np.int64)
    do_stats = config.stats_after is not None
    stats_start = round(config.stats_after / dt) if do_stats else n_steps + 1
    space_p2 = np.zeros((p, space_lags.size))
    space_p4 = np.zeros((p, space_lags.size))
    space_count = np.zeros(space_lags.size, dtype=np.int64)
    time_p2 = np.zeros((p, time_lags.size))
    time_p4 = np.zeros((p, time_lags.size))
    time_count = np.zeros(time_lags.size, dtype=np.int64)
    anchor_idx = None
    if config.space_anchor is not None:
        anchor_idx = int(np.clip(round(config.space_anchor * n - 0.5), 0, n - 1))

    max_time_lag = int(time_lags.max()) if time_lags.size else 0
    ring = np.empty((max_time_lag + 1, p, n_sites)) if max_time_lag else None

    sqrt_h = np.sqrt(1.0 / n)

    def record(state_step: int, row: int):
        mass_u[:, row] = u.mean(axis=1)
        mass_v[:, row] = v.mean(axis=1)
        supnorm_rec[:, row] = np.hypot(u, v).max(axis=1)
        rough_u[:, row] = np.abs(np.diff(u, axis=1)).max(axis=1) / sqrt_h
        site_u[:, row, :] = u[:, site_idx]
        site_v[:, row, :] = v[:, site_idx]
        if do_stats and state_step * dt >= config.stats_after - 1e-12 and space_lags.size:
            for j, lag in enumerate(space_lags):
                if anchor_idx is None:
                    d = u[:, lag:] - u[:, :-lag]
                    space_p2[:, j] += np.sum(d**2, axis=1)
                    space_p4[:, j] += np.sum(d**4, axis=1)
                    space_count[j] += n - lag
                else:
                    # dyadic pairs just off the anchor; the anchor cell
                    # itself never enters (its value relaxes on the heat
                    # time scale and would swamp the ambient scaling)
                    for lo, hi in ((anchor_idx - 2 * lag, anchor_idx - lag),
                                   (anchor_idx + lag, anchor_idx + 2 * lag)):
                        if 0 <= lo and hi < n:
                            d = u[:, hi] - u[:, lo]
                            space_p2[:, j] += d**2
                            space_p4[:, j] += d**4
                            space_count[j] += 1

    record(0, 0)
    snapshots = []
    for step_idx in sorted(snapshot_steps):
        if step_idx == 0:
            for t_snap in snapshot_steps[0]:
                snapshots.append(Field(u[0].copy(), v[0].copy(), time=t_snap))
    if ring is not None:
        ring[0] = u[:, site_idx]

    gens_u = [plan.generator(int(idx), SPECIES_U) for idx in path_indices]
    gens_v = [plan.generator(int(idx), SPECIES_V) for idx in path_indices]
    draw_width = k_modes if config.scheme == "spectral" else n
    block = max(1, min(n_steps, _BLOCK_BUDGET // max(1, p * draw_width)))

    xi_u = np.empty((p, block, draw_width))
    xi_v = np.empty((p, block, draw_width))

    step = 0
    while step < n_steps:
        s_block = min(block, n_steps - step)
        for i in range(p):
            xi_u[i, :s_block] = gens_u[i].standard_normal((s_block, draw_width))
            xi_v[i, :s_block] = gens_v[i].standard_normal((s_block, draw_width))
        for s in range(s_block):
            step += 1
            if config.scheme == "fd":
                u, v, ratio_u, ratio_v = step_fd(
                    u, v, coeffs, xi_u[:, s], xi_v[:, s], dt, radius, ab)
            else:
                u, v, ratio_u, ratio_v = step_spectral(
                    u, v, coeffs, xi_u[:, s], xi_v[:, s], dt, radius, weights)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                bad = int(np.argmax(~np.all(np.isfinite(u), axis=1) | ~np.all(np.isfinite(v), axis=1)))
                raise SimulationBlowup(
                    f"non-finite state at step {step} (t = {step * dt:.6g}) on path "
                    f"{int(path_indices[bad])}")
            np.maximum(clip_max, np.maximum(ratio_u, ratio_v), out=clip_max)
            clip_events += (ratio_u > 0) + (ratio_v > 0)

            newly_out = (exit_step < 0) & (np.hypot(u, v).max(axis=1) >= radius)
            exit_step[newly_out] = step

            if ring is not None:
                ring[step % (max_time_lag + 1)] = u[:, site_idx]
                if step >= stats_start:
                    cur = ring[step % (max_time_lag + 1)]
                    for j, lag in enumerate(time_lags):
                        if step - lag >= stats_start:
                            past = ring[(step - lag) % (max_time_lag + 1)]
                            d = cur - past
                            time_p2[:, j] += np.sum(d**2, axis=1)
                            time_p4[:, j] += np.sum(d**4, axis=1)
                            time_count[j] += n_sites

            if step in record_lookup:
                record(step, record_lookup[step])
            if step in snapshot_steps:
                for t_snap in snapshot_steps[step]:
                    snapshots.append(Field(u[0].copy(), v[0].copy(), time=t_snap))

    stats = EnsembleStats(
        master_seed=plan.master_seed,
        scheme=config.scheme,
        dt=dt,
        grid_size=n,
        path_indices=path_indices,
        times=record_steps * dt,
        mass_u=mass_u, mass_v=mass_v,
        supnorm=supnorm_rec, rough_u=rough_u,
        site_x=(site_idx + 0.5) / n,
        site_u=site_u, site_v=site_v,
        exit_step=exit_step,
        clip_max_ratio=clip_max,
        clip_events=clip_events,
        truncation_radius=radius,
        space_lags=space_lags / n,
        space_p2=space_p2, space_p4=space_p4, space_count=space_count,
        time_lags=time_lags * dt,
        time_p2=time_p2, time_p4=time_p4, time_count=time_count,
    )
    return stats, snapshots


def simulate_path(init: Field, coeffs: CoefficientSet, plan: NoisePlan,
                  config: SolverConfig, path_index: int = 0) -> Trajectory:
    """Advance one path, keeping full fields at the configured snapshot times."""
    stats, snapshots = _run_paths(init, coeffs, plan, config, [path_index],
                                  keep_snapshots=True)
    return Trajectory(snapshots=snapshots, stats=stats)


def _worker(args):
    init, coeffs, plan, config, chunk = args
    stats, _ = _run_paths(init, coeffs, plan, config, chunk)
    return stats


def run_ensemble(init: Field, coeffs: CoefficientSet, plan: NoisePlan,
                 config: SolverConfig, n_paths: int, path_offset: int = 0,
                 threads: int = 1, chunk_size: int | None = None) -> EnsembleStats:
    """Advance n_paths independent paths and collect their statistics.

    threads > 1 distributes path chunks over processes; threads = 0 uses the
    CPU count.  Chunking never changes results, only memory and wall time.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if threads == 0:
        threads = os.cpu_count() or 1
    indices = np.arange(path_offset, path_offset + n_paths)
    if chunk_size is None:
        per = max(1, _BLOCK_BUDGET // max(1, config.grid_size * 64))
        chunk_size = min(n_paths, max(64, per)) if threads == 1 else max(1, -(-n_paths // (threads * 2)))
    chunks = [indices[i:i + chunk_size] for i in range(0, n_paths, chunk_size)]

    if threads == 1 or len(chunks) == 1:
        results = [_run_paths(init, coeffs, plan, config, c)[0] for c in chunks]
    else:
        jobs = [(init, coeffs, plan, config, c) for c in chunks]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_worker, jobs))

    merged = results[0]
    for stats in results[1:]:
        merged = merged.merge(stats)
    return merged
