"""Closed-form log-density of discretized latent trajectories.

The Euler-discretized SDE with a GP drift admits an analytic marginal over
the drift: per gene the transition increments are jointly Gaussian with
covariance  D K D + q D  where D = diag of time increments, K the Gram
matrix of the drift GP over the left states, and q the process-noise
variance.  Everything here is evaluated and returned in log space.

Steady-state / knockout measurements enter by bordering the per-gene
system: zero pseudo-increments with unit time step and their own noise
variances, and Gram rows at the steady-state points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg.lapack import dpotrf

from gpgrn.errors import InvalidDataError, NumericalDegeneracyError
from gpgrn.kernels import (
    DEFAULT_JITTER_SCALE,
    KernelHyperparams,
    PseudoInputSet,
    gram_matrix,
)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Grid:
    """Discretization grid, possibly concatenating several experiments.

    tau holds the grid times of all series back to back.  Transitions never
    span a series boundary; series_starts marks the first grid index of each
    series.  meas_index maps the j-th stacked measurement row (series
    concatenated in order) to its grid row, so every measurement time is a
    grid point.
    """

    tau: np.ndarray
    meas_index: np.ndarray
    series_starts: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        mi = np.asarray(self.meas_index, dtype=int)
        starts = np.asarray(self.series_starts, dtype=int)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "meas_index", mi)
        object.__setattr__(self, "series_starts", starts)
        if starts.size == 0 or starts[0] != 0:
            raise InvalidDataError("series_starts must begin with 0")
        # transition index pairs (k-1, k), skipping series boundaries
        prev = np.arange(tau.size - 1)
        nxt = prev + 1
        keep = ~np.isin(nxt, starts)
        prev, nxt = prev[keep], nxt[keep]
        delta = tau[nxt] - tau[prev]
        if np.any(delta <= 0):
            raise InvalidDataError("grid times must be strictly increasing within a series")
        object.__setattr__(self, "trans_prev", prev)
        object.__setattr__(self, "trans_next", nxt)
        object.__setattr__(self, "delta", delta)

    @property
    def n_points(self) -> int:
        return self.tau.size

    @property
    def n_transitions(self) -> int:
        return self.delta.size

    @property
    def n_series(self) -> int:
        return self.series_starts.size

    def series_slices(self) -> list[slice]:
        bounds = np.append(self.series_starts, self.n_points)
        return [slice(bounds[s], bounds[s + 1]) for s in range(self.n_series)]


@dataclass
class Trajectory:
    """Latent states on a grid: one row per grid time, one column per gene."""

    X: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != self.grid.n_points:
            raise InvalidDataError(
                f"trajectory must have {self.grid.n_points} rows, got shape {self.X.shape}"
            )

    @property
    def n_genes(self) -> int:
        return self.X.shape[1]

    def copy(self) -> "Trajectory":
        return Trajectory(self.X.copy(), self.grid)


@dataclass
class AugmentationData:
    """Steady-state / knockout constraints entering the per-gene density.

    ko_points[i] holds the steady-state vectors usable when inferring the
    regulators of gene i, i.e. excluding experiments where gene i itself was
    perturbed.  steady_state is the sampled global steady state (or None
    when only knockout rows are used).
    """

    steady_state: np.ndarray | None
    ss_noise_var: np.ndarray | None  # per-gene variance for the steady-state row
    ko_noise_var: np.ndarray | None  # per-gene variance for the knockout rows
    ko_points: Sequence[np.ndarray] | None  # per gene, (n_ko_i, n) arrays

    def n_extra_rows(self, gene: int) -> int:
        extra = 0 if self.steady_state is None else 1
        if self.ko_points is not None:
            extra += np.atleast_2d(self.ko_points[gene]).shape[0] if len(self.ko_points[gene]) else 0
        return extra


def chol_with_jitter(C: np.ndarray, scale: float) -> tuple[np.ndarray, float]:
    """Cholesky factor of C, escalating diagonal jitter up to 1e-4 * scale.

    Returns (L, jitter_used).  Raises NumericalDegeneracyError when even the
    largest allowed jitter fails.  Uses the raw LAPACK routine so a failed
    factorization is an info flag, not an exception.
    """
    L, info = dpotrf(C, lower=1)
    if info == 0:
        return L, 0.0
    jitter = 1e-8 * scale
    eye = np.eye(C.shape[0])
    while jitter <= 1e-4 * scale:
        L, info = dpotrf(C + jitter * eye, lower=1)
        if info == 0:
            return L, jitter
        jitter *= 10.0
    raise NumericalDegeneracyError("covariance not positive definite after jitter escalation")


def gaussian_quadratic_log_integral(A: np.ndarray, b: np.ndarray, c: float) -> float:
    """log of the Gaussian integral of exp(-<x,Ax> - <b,x> - c) over R^N.

    Equals (N/2) log pi - 1/2 log|A| - c + 1/4 <b, A^-1 b>, via Cholesky.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    N = A.shape[0]
    if A.shape != (N, N) or b.shape != (N,):
        raise ValueError("A must be square and b conforming")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("A is not positive definite") from exc
    half_logdet = float(np.sum(np.log(np.diag(L))))
    u = np.linalg.solve(L, b)
    return 0.5 * N * float(np.log(np.pi)) - half_logdet - float(c) + 0.25 * float(u @ u)


def _gene_system(
    gene: int,
    params: KernelHyperparams,
    process_var: float,
    traj: Trajectory,
    aug: AugmentationData | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Assemble (states, residual, dt, noise) for one gene's Gaussian factor.

    states are the Gram input rows; residual is the drift-corrected
    increment vector; covariance of the factor is
    diag(dt) K diag(dt) + diag(noise * dt).
    """
    grid = traj.grid
    # left states are shared by every gene's factor; trajectories are
    # immutable (replaced wholesale on accept), so cache on the instance
    X_left = getattr(traj, "_left_states", None)
    if X_left is None:
        X_left = traj.X[grid.trans_prev]
        traj._left_states = X_left
    incr = traj.X[grid.trans_next, gene] - traj.X[grid.trans_prev, gene]
    dt = grid.delta
    mean = params.basal - params.decay * X_left[:, gene]
    resid = incr - dt * mean
    noise = np.full(dt.size, process_var)

    if aug is not None:
        extra_states, extra_resid, extra_noise = [], [], []
        if aug.steady_state is not None:
            s = np.asarray(aug.steady_state, dtype=float)
            extra_states.append(s[None, :])
            extra_resid.append([-(params.basal - params.decay * s[gene])])
            extra_noise.append([aug.ss_noise_var[gene]])
        if aug.ko_points is not None and len(aug.ko_points[gene]):
            pts = np.atleast_2d(np.asarray(aug.ko_points[gene], dtype=float))
            extra_states.append(pts)
            extra_resid.append(-(params.basal - params.decay * pts[:, gene]))
            extra_noise.append(np.full(pts.shape[0], aug.ko_noise_var[gene]))
        if extra_states:
            X_left = np.vstack([X_left] + extra_states)
            resid = np.concatenate([resid] + [np.asarray(r, dtype=float) for r in extra_resid])
            dt = np.concatenate([dt, np.ones(sum(len(r) for r in extra_noise))])
            noise = np.concatenate([noise] + [np.asarray(v, dtype=float) for v in extra_noise])
    return X_left, resid, dt, noise


def log_gene_factor(
    gene: int,
    params: KernelHyperparams,
    process_var: float,
    traj: Trajectory,
    aug: AugmentationData | None = None,
) -> float:
    """Log of one gene's factor of the trajectory density (exact Gram).

    Includes this factor's share of the (2 pi)^(-dim/2) normalization, so the
    total trajectory log-density is just the sum over genes.
    """
    if process_var <= 0:
        raise ValueError("process_var must be positive")
    states, resid, dt, noise = _gene_system(gene, params, process_var, traj, aug)
    K = gram_matrix(params, states)
    C = (dt[:, None] * K) * dt[None, :] + np.diag(noise * dt)
    L, _ = chol_with_jitter(C, params.signal_var)
    half_logdet = float(np.sum(np.log(np.diag(L))))
    u = np.linalg.solve(L, resid)
    return -half_logdet - 0.5 * float(u @ u) - 0.5 * resid.size * LOG_2PI


def pseudo_chol_factors(
    params: KernelHyperparams, pseudo: PseudoInputSet
) -> tuple[np.ndarray, np.ndarray]:
    """Jittered pseudo-input Gram and its Cholesky factor.

    Depends only on the kernel hyperparameters and the pseudo set, so a
    sampler can reuse it across trajectory/noise updates.
    """
    jitter = (
        pseudo.jitter
        if pseudo.jitter is not None
        else DEFAULT_JITTER_SCALE * params.signal_var
    )
    K_pp = gram_matrix(params, pseudo.points) + jitter * np.eye(pseudo.n_points)
    L_pp, _ = chol_with_jitter(K_pp, params.signal_var)
    return K_pp, L_pp


def log_gene_factor_pseudo(
    gene: int,
    params: KernelHyperparams,
    process_var: float,
    traj: Trajectory,
    pseudo: PseudoInputSet,
    aug: AugmentationData | None = None,
    pp_factors: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Low-rank version of log_gene_factor via the pseudo-input approximation.

    With K ~ K_xp K_pp^-1 K_xp^T the Woodbury identity and matrix
    determinant lemma reduce the solve and determinant to the number of
    pseudo-inputs; the cost is linear in the trajectory length.
    """
    if process_var <= 0:
        raise ValueError("process_var must be positive")
    states, resid, dt, noise = _gene_system(gene, params, process_var, traj, aug)
    if pp_factors is None:
        pp_factors = pseudo_chol_factors(params, pseudo)
    K_pp, L_pp = pp_factors
    K_xp = gram_matrix(params, states, pseudo.points)
    nv = noise * dt  # diagonal of the additive noise term
    # inner p x p system: K_pp + K_xp^T diag(dt^2 / nv) K_xp
    w = dt * dt / nv
    inner = K_pp + (K_xp * w[:, None]).T @ K_xp
    L_in, _ = chol_with_jitter(inner, params.signal_var)
    logdet = (
        float(np.sum(np.log(nv)))
        - 2.0 * float(np.sum(np.log(np.diag(L_pp))))
        + 2.0 * float(np.sum(np.log(np.diag(L_in))))
    )
    u = K_xp.T @ (dt / nv * resid)
    v = np.linalg.solve(L_in, u)
    quad = float(resid @ (resid / nv)) - float(v @ v)
    return -0.5 * logdet - 0.5 * quad - 0.5 * resid.size * LOG_2PI


def log_p_trajectory(hyper, traj: Trajectory, aug: AugmentationData | None = None) -> float:
    """Total trajectory log-density: sum of the per-gene factors.

    The initial-state factor coincides with the first measurement's Gaussian
    and lives in log_measurement_fit, so it is deliberately absent here.
    """
    return sum(
        log_gene_factor(i, hyper.kernel_params(i), hyper.process_var[i], traj, aug)
        for i in range(traj.n_genes)
    )


def log_p_trajectory_pseudo(
    hyper,
    traj: Trajectory,
    pseudo: PseudoInputSet,
    aug: AugmentationData | None = None,
) -> float:
    """Low-rank counterpart of log_p_trajectory."""
    return sum(
        log_gene_factor_pseudo(
            i, hyper.kernel_params(i), hyper.process_var[i], traj, pseudo, aug
        )
        for i in range(traj.n_genes)
    )


def log_measurement_fit(dataset, traj: Trajectory, meas_var: np.ndarray) -> float:
    """Gaussian data-fit log-density, skipping masked entries componentwise.

    Each observed scalar contributes log N(y; x_at_grid, meas_var_gene); the
    first measurement of each series doubles as the initial-state factor of
    the trajectory density.
    """
    meas_var = np.asarray(meas_var, dtype=float)
    y, mask = dataset.stacked_values, dataset.stacked_mask
    if y.shape[0] != traj.grid.meas_index.size:
        raise InvalidDataError("measurement count does not match the grid's index map")
    x_at = traj.X[traj.grid.meas_index]
    resid2 = np.where(mask, (y - x_at) ** 2, 0.0)
    per_gene_terms = -0.5 * (LOG_2PI + np.log(meas_var))[None, :] - resid2 / (2.0 * meas_var)[None, :]
    return float(np.sum(np.where(mask, per_gene_terms, 0.0)))
