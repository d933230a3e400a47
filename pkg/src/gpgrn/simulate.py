"""Synthetic ground-truth generators for tests and demos.

Parametric drifts (stable linear, Michaelis-Menten-like saturating) are
integrated with the Euler scheme under additive Gaussian process noise,
then subsampled and corrupted with measurement noise.  The drifts are
explicit functions so tests have exact oracles (matrix exponentials,
steady-state solves).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gpgrn.dataio import Dataset, KnockoutExperiment, TimeSeries
from gpgrn.density import Grid, Trajectory
from gpgrn.errors import InvalidDataError


@dataclass
class SyntheticModel:
    """Test system dx = f(x) dt + dw with known adjacency.

    kind "linear": f(x) = A x + u with Hurwitz A; adjacency[i, j] = 1 iff
    A[i, j] != 0 for i != j.  kind "saturating": Hill-type activation /
    repression with first-order decay.
    """

    n: int
    adjacency: np.ndarray
    kind: str = "linear"
    A: np.ndarray | None = None
    offset: np.ndarray | None = None
    hill_weights: np.ndarray | None = None   # signed interaction strengths
    hill_k: float = 0.5
    decay: np.ndarray | None = None
    basal: np.ndarray | None = None
    process_var: np.ndarray = field(default_factory=lambda: np.array([]))
    meas_var: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency)
        if self.kind == "linear":
            if self.A is None:
                raise InvalidDataError("linear model needs matrix A")
            self.A = np.asarray(self.A, dtype=float)
            if np.any(np.real(np.linalg.eigvals(self.A)) >= 0):
                raise InvalidDataError("linear drift matrix must be Hurwitz")
            off_diag = (self.A != 0) & ~np.eye(self.n, dtype=bool)
            if not np.array_equal(off_diag, self.adjacency.astype(bool) & ~np.eye(self.n, dtype=bool)):
                raise InvalidDataError("adjacency must match the drift sparsity off the diagonal")
            if self.offset is None:
                self.offset = np.zeros(self.n)
        elif self.kind == "saturating":
            if self.hill_weights is None or self.decay is None:
                raise InvalidDataError("saturating model needs hill_weights and decay")
            self.hill_weights = np.asarray(self.hill_weights, dtype=float)
            if self.basal is None:
                self.basal = np.zeros(self.n)
        else:
            raise InvalidDataError(f"unknown drift kind {self.kind!r}")

    def drift(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return self.A @ x + self.offset
        h = x**2 / (self.hill_k**2 + x**2)
        return self.basal + self.hill_weights @ h - self.decay * x


def simulate_euler(model: SyntheticModel, x0: np.ndarray, grid: Grid, rng) -> Trajectory:
    """Euler scheme with increments N(0, process_var * dt); exact recursion."""
    X = np.zeros((grid.n_points, model.n))
    X[grid.series_starts] = np.asarray(x0, dtype=float)
    q = np.asarray(model.process_var, dtype=float)
    if q.size == 0:
        q = np.zeros(model.n)
    noisy = np.any(q > 0)
    for prev, nxt, dt in zip(grid.trans_prev, grid.trans_next, grid.delta):
        noise = rng.standard_normal(model.n) * np.sqrt(q * dt) if noisy else 0.0
        X[nxt] = X[prev] + dt * model.drift(X[prev]) + noise
    return Trajectory(X, grid)


def _uniform_grid(T: float, steps: int) -> Grid:
    return Grid(
        tau=np.linspace(0.0, T, steps + 1),
        meas_index=np.array([0, steps]),
        series_starts=np.array([0]),
    )


def convergence_experiment(
    model: SyntheticModel,
    x0: np.ndarray,
    T: float,
    n_levels: int,
    base_steps: int,
    rng,
) -> tuple[list[tuple[float, float]], float]:
    """Sup-error of the Euler scheme on halving grids with a shared noise path.

    The Brownian path is drawn on the finest grid and coarsened by summing
    increments.  The reference is the finest-grid solution (or, if noise is
    zero and the drift is linear, the analytic matrix-exponential solution).
    Returns [(mesh, sup_error), ...] and the log-log least-squares slope.
    """
    finest = base_steps * 2 ** (n_levels - 1)
    dt_fine = T / finest
    q = np.asarray(model.process_var, dtype=float)
    if q.size == 0:
        q = np.zeros(model.n)
    dW = rng.standard_normal((finest, model.n)) * np.sqrt(q * dt_fine)

    def euler_path(steps: int) -> np.ndarray:
        ratio = finest // steps
        dt = T / steps
        incr = dW.reshape(steps, ratio, model.n).sum(axis=1)
        X = np.zeros((steps + 1, model.n))
        X[0] = x0
        for k in range(steps):
            X[k + 1] = X[k] + dt * model.drift(X[k]) + incr[k]
        return X

    deterministic_linear = model.kind == "linear" and not np.any(q > 0)
    if deterministic_linear:
        from scipy.linalg import expm

        def reference_at(times: np.ndarray) -> np.ndarray:
            # x(t) = e^{At} x0 + A^-1 (e^{At} - I) u
            out = np.zeros((times.size, model.n))
            Ainv_u = np.linalg.solve(model.A, model.offset)
            for k, t in enumerate(times):
                E = expm(model.A * t)
                out[k] = E @ np.asarray(x0, dtype=float) + E @ Ainv_u - Ainv_u
            return out
    else:
        X_ref = euler_path(finest)

        def reference_at(times: np.ndarray) -> np.ndarray:
            idx = np.rint(times / dt_fine).astype(int)
            return X_ref[idx]

    levels = range(n_levels) if deterministic_linear else range(n_levels - 1)
    table = []
    for lvl in levels:
        steps = base_steps * 2**lvl
        times = np.linspace(0.0, T, steps + 1)
        err = float(np.max(np.abs(euler_path(steps) - reference_at(times))))
        table.append((T / steps, err))
    meshes = np.log([m for m, _ in table])
    errs = np.log([max(e, 1e-300) for _, e in table])
    slope = float(np.polyfit(meshes, errs, 1)[0])
    return table, slope


def knockout_steady_state(model: SyntheticModel, gene: int) -> np.ndarray:
    """Noise-free steady state with one gene clamped to zero (linear models)."""
    if model.kind != "linear":
        raise InvalidDataError("closed-form knockout steady state needs the linear drift")
    keep = [i for i in range(model.n) if i != gene]
    A_red = model.A[np.ix_(keep, keep)]
    u_red = model.offset[keep]
    x = np.zeros(model.n)
    x[keep] = -np.linalg.solve(A_red, u_red)
    return x


def steady_state(model: SyntheticModel) -> np.ndarray:
    """Noise-free global steady state of the linear drift."""
    if model.kind != "linear":
        raise InvalidDataError("closed-form steady state needs the linear drift")
    return -np.linalg.solve(model.A, model.offset)


def make_dataset(
    model: SyntheticModel,
    n_series: int,
    m_points: int,
    dt: float,
    rng,
    fine_steps_per_interval: int = 20,
    x0_scale: float = 1.0,
) -> tuple[Dataset, np.ndarray]:
    """Simulate, subsample at measurement times, add measurement noise.

    Each series starts from an independent random perturbation around the
    model steady state (or the origin), mimicking perturbation-response
    experiments.  Returns the dataset and the ground-truth adjacency.
    """
    r = np.asarray(model.meas_var, dtype=float)
    if r.size == 0:
        r = np.zeros(model.n)
    base = steady_state(model) if model.kind == "linear" else np.zeros(model.n)
    series = []
    for _ in range(n_series):
        x0 = base + x0_scale * rng.standard_normal(model.n)
        grid = Grid(
            tau=np.linspace(0.0, (m_points - 1) * dt, (m_points - 1) * fine_steps_per_interval + 1),
            meas_index=np.arange(0, (m_points - 1) * fine_steps_per_interval + 1, fine_steps_per_interval),
            series_starts=np.array([0]),
        )
        traj = simulate_euler(model, x0, grid, rng)
        times = grid.tau[grid.meas_index]
        vals = traj.X[grid.meas_index]
        if np.any(r > 0):
            vals = vals + rng.standard_normal(vals.shape) * np.sqrt(r)
        series.append(
            TimeSeries(times, vals, np.ones(vals.shape, dtype=bool))
        )
    genes = [f"G{i + 1}" for i in range(model.n)]
    return Dataset(genes=genes, series=series), model.adjacency.copy()


def attach_knockouts(dataset: Dataset, model: SyntheticModel, genes: list[int], rng=None, noise_std: float = 0.0) -> None:
    """Append knockout steady-state experiments for the given genes."""
    for g in genes:
        vals = knockout_steady_state(model, g)
        if rng is not None and noise_std > 0:
            vals = vals + noise_std * rng.standard_normal(model.n)
        dataset.ko_experiments.append(KnockoutExperiment(g, "knockout", vals))
