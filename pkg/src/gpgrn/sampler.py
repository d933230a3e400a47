"""Metropolis-within-Gibbs sampler over trajectories and hyperparameters.

One sweep visits, in order: per-gene indicator/hyperparameter rows,
measurement noise, pseudo-inputs, steady-state augmentation parameters
(when present), and the trajectory + process-noise block.  Two trajectory
proposals are available: an additive damped sinusoidal-basis perturbation,
and a Crank-Nicolson update that preserves a Gaussian reference measure
(data-fit Gaussians at observed points times Brownian bridges between
them), keeping acceptance stable under grid refinement.

All proposal kernels are symmetric (uniform flip, reflected random walks,
additive basis noise) except the CN kernel, whose exactness comes from the
reference-measure construction; acceptance ratios are formed in log space.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.linalg.lapack import dpotrf as _dpotrf, dtrtrs as _dtrtrs

from gpgrn import dataio, density, priors
from gpgrn.density import LOG_2PI, AugmentationData, Grid, Trajectory
from gpgrn.errors import InvalidDataError, NumericalDegeneracyError
from gpgrn.evaluate import ConfidenceMatrix
from gpgrn.kernels import KernelHyperparams, PseudoInputSet

CHECKPOINT_VERSION = 1

# unique tokens for cheap identity keys on trajectories and pseudo factors
_token_counter = itertools.count()


# ---------------------------------------------------------------------------
# state containers


@dataclass
class HyperState:
    """All sampled hyperparameters of one chain."""

    indicators: np.ndarray   # (n, n) {0,1}; row i gates regulators of gene i
    magnitudes: np.ndarray   # (n, n) nonnegative ARD magnitudes
    signal_var: np.ndarray   # (n,)
    process_var: np.ndarray  # (n,)
    meas_var: np.ndarray     # (n,)
    decay: np.ndarray        # (n,)
    basal: np.ndarray        # (n,)
    ss_noise_var: np.ndarray | None = None
    ko_noise_var: np.ndarray | None = None
    steady_state: np.ndarray | None = None
    pseudo: PseudoInputSet | None = None

    @property
    def n_genes(self) -> int:
        return self.indicators.shape[0]

    def kernel_params(self, gene: int) -> KernelHyperparams:
        return KernelHyperparams(
            signal_var=float(self.signal_var[gene]),
            ard_weights=self.indicators[gene] * self.magnitudes[gene],
            decay=float(self.decay[gene]),
            basal=float(self.basal[gene]),
        )

    def copy(self) -> "HyperState":
        return HyperState(
            indicators=self.indicators.copy(),
            magnitudes=self.magnitudes.copy(),
            signal_var=self.signal_var.copy(),
            process_var=self.process_var.copy(),
            meas_var=self.meas_var.copy(),
            decay=self.decay.copy(),
            basal=self.basal.copy(),
            ss_noise_var=None if self.ss_noise_var is None else self.ss_noise_var.copy(),
            ko_noise_var=None if self.ko_noise_var is None else self.ko_noise_var.copy(),
            steady_state=None if self.steady_state is None else self.steady_state.copy(),
            pseudo=self.pseudo,
        )


@dataclass
class SamplerConfig:
    """Chain configuration; defaults follow the desk-scale benchmark setup."""

    n_burn: int = 3000
    n_samples: int = 10000
    thinning: int = 10
    proposal: str = "crank-nicolson"   # or "basis"
    refinement: int = 3
    seed: int = 0
    n_chains: int = 1
    eta: float | None = None           # sparsity weight; None -> 1/n
    n_pseudo: int = 20
    use_pseudo: bool | None = None     # None -> pseudo with CN, exact with basis
    freeze_diag: bool = False          # pin self-indicators to 1
    scale_data: bool = True
    step_hyper: float = 0.05
    step_meas_noise: float = 0.05
    step_process_noise: float = 0.05
    step_traj: float = 0.05            # basis proposal variance
    cn_epsilon: float = 0.1
    step_pseudo: float = 0.05
    step_steady_state: float = 0.05
    step_aug_var: float = 0.1
    adapt: bool = True
    adapt_target: float = 0.25
    constant_likelihood: bool = False  # prior-recovery test mode
    store_hyper_samples: bool = False
    store_trajectories: bool = False
    n_mean_snapshots: int = 100

    def __post_init__(self):
        if self.thinning < 1 or self.refinement < 1:
            raise ValueError("thinning and refinement must be >= 1")
        if not (0.0 < self.cn_epsilon < 1.0):
            raise ValueError("cn_epsilon must lie in (0, 1)")
        if self.proposal not in ("crank-nicolson", "basis"):
            raise ValueError(f"unknown proposal kind {self.proposal!r}")

    def resolved_eta(self, n_genes: int) -> float:
        return self.eta if self.eta is not None else 1.0 / n_genes

    def resolved_use_pseudo(self) -> bool:
        if self.use_pseudo is not None:
            return self.use_pseudo
        return self.proposal == "crank-nicolson"


@dataclass
class ChainOutput:
    """Accumulated indicator counts plus bookkeeping of one chain."""

    S_sum: np.ndarray
    n_collected: int
    accepts: dict
    proposals: dict
    genes: list
    mean_snapshots: list = field(default_factory=list)  # (count, mean matrix)
    hyper_samples: list = field(default_factory=list)
    trajectories: list = field(default_factory=list)
    degeneracy_rejections: int = 0

    def acceptance_rates(self) -> dict:
        return {
            k: (self.accepts[k] / self.proposals[k]) if self.proposals[k] else 0.0
            for k in self.proposals
        }

    def confidence(self) -> np.ndarray:
        if self.n_collected == 0:
            return np.zeros_like(self.S_sum, dtype=float)
        return self.S_sum / self.n_collected

    def cumulative_mean_curve(self) -> list:
        return [(c, m.copy()) for c, m in self.mean_snapshots]


# ---------------------------------------------------------------------------
# elementary proposals


def propose_indicator_flip(row: np.ndarray, rng) -> tuple[np.ndarray, int]:
    """Toggle one uniformly chosen bit; symmetric proposal."""
    j = int(rng.integers(row.size))
    new = row.copy()
    new[j] = 1 - new[j]
    return new, j


def propose_rw_reflected(value, step, rng):
    """Reflected Gaussian random walk on [0, inf); symmetric by reflection."""
    if isinstance(value, (float, int, np.floating)):
        return abs(float(value) + float(step) * rng.standard_normal())
    value = np.asarray(value, dtype=float)
    return np.abs(value + step * rng.standard_normal(value.shape))


def reflect_into_box(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Billiard reflection into [lo, hi] elementwise; symmetric map."""
    width = hi - lo
    y = np.mod(values - lo, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return lo + y


def basis_matrix(grid: Grid) -> np.ndarray:
    """Damped sinusoidal trajectory-perturbation basis, block diagonal per series.

    For a series with M transitions the block has 2*floor(M/2) columns:
    sines damped by 1/j followed by cosines damped by 1/(j - m_b), all
    evaluated at the grid times with period the series duration.
    """
    blocks = []
    for sl in grid.series_slices():
        tau = grid.tau[sl]
        M = tau.size - 1
        m_b = M // 2
        T = tau[-1] - tau[0]
        cols = []
        for j in range(1, m_b + 1):
            cols.append(np.sin(2.0 * np.pi * j * tau / T) / j)
        for j in range(m_b + 1, 2 * m_b + 1):
            cols.append(np.cos(2.0 * np.pi * (j - m_b) * tau / T) / (j - m_b))
        blocks.append(np.column_stack(cols) if cols else np.zeros((tau.size, 0)))
    total_cols = sum(b.shape[1] for b in blocks)
    B = np.zeros((grid.n_points, total_cols))
    r0 = c0 = 0
    for b in blocks:
        B[r0:r0 + b.shape[0], c0:c0 + b.shape[1]] = b
        r0 += b.shape[0]
        c0 += b.shape[1]
    return B


def propose_trajectory_basis(x_col: np.ndarray, B: np.ndarray, eps: float, rng) -> np.ndarray:
    """Additive perturbation x + B g with g ~ N(0, eps I)."""
    g = rng.standard_normal(B.shape[1]) * np.sqrt(eps)
    return x_col + B @ g


def cn_proposal(x: np.ndarray, m: np.ndarray, xi: np.ndarray, eps: float) -> np.ndarray:
    """Crank-Nicolson update m + sqrt(1 - eps^2)(x - m) + eps xi with xi ~ N(0, P)."""
    if not (0.0 < eps <= 1.0):
        raise ValueError("cn epsilon must lie in (0, 1]")
    return m + np.sqrt(1.0 - eps * eps) * (x - m) + eps * xi


# ---------------------------------------------------------------------------
# Crank-Nicolson reference measure


class CnReference:
    """Gaussian reference measure for one gene's trajectory column.

    Observed points anchor the trajectory with the measurement-noise
    variance; between consecutive anchors the reference is a Brownian
    bridge, before the first / after the last anchor free Brownian motion.
    The endpoint-increment Gaussians that complete the Wiener measure are
    exposed via log_bridge_density and belong to the acceptance ratio.
    """

    def __init__(self, grid: Grid, anchor_rows: np.ndarray, anchor_values: np.ndarray):
        self.grid = grid
        self.anchor_rows = np.asarray(anchor_rows, dtype=int)
        self.anchor_values = np.asarray(anchor_values, dtype=float)
        if self.anchor_rows.size == 0:
            raise InvalidDataError("reference measure needs at least one anchored point")
        n_rows = grid.n_points
        is_anchor = np.zeros(n_rows, dtype=bool)
        is_anchor[self.anchor_rows] = True
        tau = grid.tau

        la = np.full(n_rows, -1)
        ra = np.full(n_rows, -1)
        seg_start = np.zeros(n_rows, dtype=int)
        frac = np.zeros(n_rows)
        mean = np.zeros(n_rows)
        mean[self.anchor_rows] = self.anchor_values
        bridge_pairs = []

        for sl in grid.series_slices():
            rows = np.arange(sl.start, sl.stop)
            a_here = [r for r in rows if is_anchor[r]]
            if not a_here:
                raise InvalidDataError(
                    "CN sampling needs at least one observed point per gene per series"
                )
            anchor_val = {r: mean[r] for r in a_here}
            first, last = a_here[0], a_here[-1]
            # head: free Brownian motion run backwards from the first anchor
            for r in rows[rows < first]:
                ra[r] = first
                seg_start[r] = sl.start
                mean[r] = anchor_val[first]
            # tail: free Brownian motion from the last anchor
            for r in rows[rows > last]:
                la[r] = last
                seg_start[r] = last
                mean[r] = anchor_val[last]
            # bridges between consecutive anchors
            for k0, k1 in zip(a_here[:-1], a_here[1:]):
                if k1 > k0 + 1:
                    inner = np.arange(k0 + 1, k1)
                    la[inner] = k0
                    ra[inner] = k1
                    seg_start[inner] = k0
                    f = (tau[inner] - tau[k0]) / (tau[k1] - tau[k0])
                    frac[inner] = f
                    mean[inner] = (1 - f) * anchor_val[k0] + f * anchor_val[k1]
                bridge_pairs.append((k0, k1))

        self.is_anchor = is_anchor
        self.free_rows = np.flatnonzero(~is_anchor)
        self.la = la
        self.ra = ra
        self.seg_start = seg_start
        self.frac = frac
        self.mean = mean
        self.bridge_k0 = np.array([p[0] for p in bridge_pairs], dtype=int)
        self.bridge_k1 = np.array([p[1] for p in bridge_pairs], dtype=int)
        self.bridge_dt = tau[self.bridge_k1] - tau[self.bridge_k0]

        # static index arrays so sample_noise does no boolean masking per call
        fr = self.free_rows
        la_f, ra_f, f_f = la[fr], ra[fr], frac[fr]
        seg_f = seg_start[fr]
        bridge = (la_f >= 0) & (ra_f >= 0)
        tail = (la_f >= 0) & (ra_f < 0)
        head = (la_f < 0) & (ra_f >= 0)
        self._rows_b, self._la_b, self._ra_b = fr[bridge], la_f[bridge], ra_f[bridge]
        self._f_b, self._seg_b = f_f[bridge], seg_f[bridge]
        self._rows_t, self._la_t, self._seg_t = fr[tail], la_f[tail], seg_f[tail]
        self._rows_h, self._ra_h, self._seg_h = fr[head], ra_f[head], seg_f[head]
        self._cum_slices = []
        t0 = 0
        for sl in grid.series_slices():
            n_tr = sl.stop - sl.start - 1
            self._cum_slices.append((slice(sl.start + 1, sl.stop), slice(t0, t0 + n_tr)))
            t0 += n_tr
        self._sqrt_delta = np.sqrt(grid.delta)

    def sample_noise(self, process_var: float, meas_var: float, rng) -> np.ndarray:
        """Draw xi ~ N(0, P) for the reference measure."""
        grid = self.grid
        xi = np.zeros(grid.n_points)
        xi[self.anchor_rows] = math.sqrt(meas_var) * rng.standard_normal(self.anchor_rows.size)
        dW = rng.standard_normal(grid.n_transitions) * (math.sqrt(process_var) * self._sqrt_delta)
        # per-series cumulative Brownian path, restarted at each series start
        C = np.zeros(grid.n_points)
        for tgt, src in self._cum_slices:
            C[tgt] = np.cumsum(dW[src])
        if self._rows_b.size:
            W = C[self._rows_b] - C[self._seg_b]
            w_end = C[self._ra_b] - C[self._seg_b]
            xi[self._rows_b] = (
                (1 - self._f_b) * xi[self._la_b]
                + self._f_b * xi[self._ra_b]
                + W
                - self._f_b * w_end
            )
        if self._rows_t.size:
            xi[self._rows_t] = xi[self._la_t] + (C[self._rows_t] - C[self._seg_t])
        if self._rows_h.size:
            w_end = C[self._ra_h] - C[self._seg_h]
            xi[self._rows_h] = xi[self._ra_h] + (C[self._rows_h] - C[self._seg_h]) - w_end
        return xi

    def log_bridge_density(self, x_col: np.ndarray, process_var: float) -> float:
        """Log-density of the non-anchor reference factors at x.

        Full Wiener increments over every grid step, minus the
        endpoint-increment Gaussians of the bridged intervals (those live in
        the acceptance ratio instead).
        """
        grid = self.grid
        d = x_col[grid.trans_next] - x_col[grid.trans_prev]
        var = process_var * grid.delta
        total = float(np.sum(-0.5 * np.log(2 * np.pi * var) - d * d / (2 * var)))
        if self.bridge_k0.size:
            d_end = x_col[self.bridge_k1] - x_col[self.bridge_k0]
            var_end = process_var * self.bridge_dt
            total -= float(
                np.sum(-0.5 * np.log(2 * np.pi * var_end) - d_end * d_end / (2 * var_end))
            )
        return total

    def log_bridge_diff(self, x_new: np.ndarray, x_old: np.ndarray, process_var: float) -> float:
        """log_bridge_density(x_new) - log_bridge_density(x_old) at equal
        process variance: the Gaussian normalizations cancel, leaving only
        the quadratic terms."""
        grid = self.grid
        dn = x_new[grid.trans_next] - x_new[grid.trans_prev]
        do = x_old[grid.trans_next] - x_old[grid.trans_prev]
        total = -float(((dn * dn - do * do) / (2.0 * process_var * grid.delta)).sum())
        if self.bridge_k0.size:
            en = x_new[self.bridge_k1] - x_new[self.bridge_k0]
            eo = x_old[self.bridge_k1] - x_old[self.bridge_k0]
            total += float(((en * en - eo * eo) / (2.0 * process_var * self.bridge_dt)).sum())
        return total


# ---------------------------------------------------------------------------
# chain state


class ChainState:
    """Mutable state of one chain plus cached log-density pieces."""

    def __init__(self, dataset: dataio.Dataset, cfg: SamplerConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        if cfg.scale_data:
            dataset, self.transform = dataio.scale_dataset(dataset)
        else:
            self.transform = None
        self.dataset = dataset
        self.n = dataset.n_genes
        self.eta = cfg.resolved_eta(self.n)
        self.grid = dataio.build_grid(dataset, cfg.refinement)
        self.stats = priors.compute_data_stats(dataset)
        self.use_pseudo = cfg.resolved_use_pseudo()

        self.has_aug = bool(dataset.ko_experiments) or bool(dataset.ss_measurements)
        if self.has_aug:
            self.ko_points = [dataset.ko_points_for_gene(i) for i in range(self.n)]
            self.ko_counts = np.array([p.shape[0] for p in self.ko_points])
            self.ss_prior = priors.SteadyStatePrior.from_points(dataset.all_steady_points())
        else:
            self.ko_points = None
            self.ko_counts = np.zeros(self.n, dtype=int)
            self.ss_prior = None

        self.traj = self._initial_trajectory()
        self.hyper = self._initial_hyper()
        self._init_steps()

        lo = np.min(self.traj.X, axis=0)
        hi = np.max(self.traj.X, axis=0)
        if self.has_aug:
            # Steady-state rows evaluate the drift GP at states (e.g. a gene
            # pinned to zero) that can lie outside the time-series range; the
            # pseudo-input box must cover them or the low-rank approximation
            # has no support where those rows live.
            aug_pts = self.dataset.all_steady_points()
            if aug_pts.size:
                lo = np.minimum(lo, aug_pts.min(axis=0))
                hi = np.maximum(hi, aug_pts.max(axis=0))
        pad = 0.05 * np.maximum(hi - lo, 1e-3)
        self.box_lo, self.box_hi = lo - pad, hi + pad

        if cfg.proposal == "basis":
            self.basis = basis_matrix(self.grid)
        else:
            self.basis = None
            self.cn_refs = self._build_cn_references()

        # measurement-fit bookkeeping: per-gene observation count and
        # squared-residual sum at the current trajectory
        self.meas_count = self.dataset.stacked_mask.sum(axis=0).astype(float)
        self._refresh_fit_residuals()

        self._pp_cache: dict[int, dict] = {i: {} for i in range(self.n)}
        self._kxp_cache: dict[int, dict] = {i: {} for i in range(self.n)}
        self._params_cache: list[KernelHyperparams | None] = [None] * self.n
        self._log_dt_sum = float(np.log(self.grid.delta).sum())
        self.log_P = np.array([self._gene_factor(i) for i in range(self.n)])
        self.accepts: dict[str, int] = {}
        self.proposals: dict[str, int] = {}
        self.degeneracy_rejections = 0
        self.sweeps_done = 0

    # -- initialization ----------------------------------------------------

    def _initial_trajectory(self) -> Trajectory:
        X = np.zeros((self.grid.n_points, self.n))
        bounds = np.append(self.grid.series_starts, self.grid.n_points)
        row0 = 0
        for s_idx, s in enumerate(self.dataset.series):
            sl = slice(bounds[s_idx], bounds[s_idx + 1])
            tau = self.grid.tau[sl]
            for i in range(self.n):
                obs = np.flatnonzero(s.mask[:, i])
                if obs.size == 0:
                    raise InvalidDataError(
                        f"gene {self.dataset.genes[i]} has no observation in series {s_idx}"
                    )
                X[sl, i] = np.interp(tau, s.times[obs], s.values[obs, i])
            row0 = sl.stop
        return Trajectory(X, self.grid)

    def _initial_hyper(self) -> HyperState:
        n = self.n
        stats = self.stats
        mean_dt = float(np.mean(np.diff(self.dataset.series[0].times)))
        sigma = np.maximum(stats.deriv_var, 1e-8)
        hyper = HyperState(
            indicators=np.zeros((n, n), dtype=np.int8),
            magnitudes=np.tile(0.5 * np.maximum(stats.value_range, 1e-3), (n, 1)),
            signal_var=2.0 * sigma,
            process_var=np.maximum(0.1 * sigma * mean_dt, 1e-6),
            meas_var=np.full(n, 1e-2),
            decay=np.maximum(stats.variation, 1e-3),
            basal=0.5 * np.maximum(stats.variation, 1e-3),
        )
        if self.cfg.freeze_diag:
            np.fill_diagonal(hyper.indicators, 1)
        if self.has_aug:
            hyper.ss_noise_var = 0.1 * sigma
            hyper.ko_noise_var = 0.2 * sigma
            hyper.steady_state = self.ss_prior.mean.copy()
        if self.use_pseudo:
            p = min(self.cfg.n_pseudo, self.grid.n_transitions)
            rows = np.linspace(0, self.grid.n_points - 1, p).astype(int)
            pts = self.traj.X[rows].copy()
            if self.has_aug:
                # start with some inducing points at the steady-state rows so
                # the low-rank factors have support there from sweep one
                aug_pts = self.dataset.all_steady_points()
                k = min(aug_pts.shape[0], p // 4)
                if k:
                    pts[-k:] = aug_pts[:k]
            hyper.pseudo = PseudoInputSet(pts)
        return hyper

    def _init_steps(self):
        stats = self.stats
        sigma = np.maximum(stats.deriv_var, 1e-8)
        self.scale_magnitudes = np.maximum(stats.value_range, 1e-3)
        self.scale_signal = 5.0 * sigma
        self.scale_decay = 10.0 * np.maximum(stats.variation, 1e-3)
        self.scale_basal = 5.0 * np.maximum(stats.variation, 1e-3)
        self.scale_meas = np.maximum(self.hyper.meas_var, 1e-4)
        self.scale_process = np.maximum(self.hyper.process_var, 1e-6)
        if self.has_aug:
            self.scale_aug_ss = np.maximum(self.hyper.ss_noise_var, 1e-6)
            self.scale_aug_ko = np.maximum(self.hyper.ko_noise_var, 1e-6)
        # adaptable per-block multipliers (log scale), frozen after burn-in
        self.step_mult = {
            "hyper": 1.0,
            "meas_noise": 1.0,
            "process_noise": 1.0,
            "trajectory": 1.0,
            "pseudo": 1.0,
            "steady_state": 1.0,
            "aug_var": 1.0,
        }
        self._adapt_counts = {k: 0 for k in self.step_mult}
        self.adapting = self.cfg.adapt
        # constants of the per-gene prior terms, hoisted out of the MH loop
        self._log_eta = math.log(self.eta)
        self._sigma_floor = np.maximum(stats.deriv_var, 1e-300)
        self._decay_rate = 1.0 / (10.0 * np.maximum(stats.variation, 1e-300))
        self._basal_rate = 1.0 / (5.0 * np.maximum(stats.variation, 1e-300))
        self._inv_range = 1.0 / np.maximum(stats.value_range, 1e-300)

    def _build_cn_references(self) -> list[CnReference]:
        refs = []
        y = self.dataset.stacked_values
        mask = self.dataset.stacked_mask
        for i in range(self.n):
            rows = self.grid.meas_index[mask[:, i]]
            vals = y[mask[:, i], i]
            refs.append(CnReference(self.grid, rows, vals))
        return refs

    # -- cached log-density pieces ----------------------------------------

    def _refresh_fit_residuals(self, traj: Trajectory | None = None):
        traj = traj or self.traj
        y = self.dataset.stacked_values
        mask = self.dataset.stacked_mask
        x_at = traj.X[self.grid.meas_index]
        self.fit_ssq = np.sum(np.where(mask, (y - x_at) ** 2, 0.0), axis=0)

    def _fit_ssq_for(self, traj: Trajectory) -> np.ndarray:
        y = self.dataset.stacked_values
        mask = self.dataset.stacked_mask
        x_at = traj.X[self.grid.meas_index]
        return np.sum(np.where(mask, (y - x_at) ** 2, 0.0), axis=0)

    def gene_fit(self, gene: int, meas_var: float, ssq: float | None = None) -> float:
        if self.cfg.constant_likelihood:
            return 0.0
        ssq = self.fit_ssq[gene] if ssq is None else ssq
        c = self.meas_count[gene]
        return float(-0.5 * c * np.log(2 * np.pi * meas_var) - ssq / (2 * meas_var))

    def aug_view(self, hyper: HyperState | None = None) -> AugmentationData | None:
        if not self.has_aug:
            return None
        hyper = hyper or self.hyper
        return AugmentationData(
            steady_state=hyper.steady_state,
            ss_noise_var=hyper.ss_noise_var,
            ko_noise_var=hyper.ko_noise_var,
            ko_points=self.ko_points,
        )

    def _cur_params(self, gene: int) -> KernelHyperparams:
        p = self._params_cache[gene]
        if p is None:
            p = self.hyper.kernel_params(gene)
            self._params_cache[gene] = p
        return p

    def _gene_factor(
        self,
        gene: int,
        params: KernelHyperparams | None = None,
        process_var: float | None = None,
        traj: Trajectory | None = None,
        hyper: HyperState | None = None,
    ) -> float:
        if self.cfg.constant_likelihood:
            return 0.0
        hyper = hyper or self.hyper
        # trial hyper states never carry different kernel parameters, so the
        # per-gene cached params are valid for every caller that omits them
        params = params if params is not None else self._cur_params(gene)
        q = float(hyper.process_var[gene]) if process_var is None else process_var
        traj = traj or self.traj
        if self.use_pseudo:
            ext = self._pp_factors(gene, params, hyper.pseudo)
            if not self.has_aug:
                return self._gene_factor_pseudo_fast(gene, params, q, traj, ext)
            return density.log_gene_factor_pseudo(
                gene, params, q, traj, hyper.pseudo, self.aug_view(hyper),
                pp_factors=(ext[0], ext[1]),
            )
        return density.log_gene_factor(gene, params, q, traj, self.aug_view(hyper))

    def _gene_factor_pseudo_fast(self, gene, params, q, traj, ext):
        """Low-rank gene factor specialized for the unaugmented case.

        Algebraically identical to density.log_gene_factor_pseudo with
        aug=None; reuses the cached pseudo-side quantities and the constant
        sum(log dt) so each call touches only gene-sized temporaries.  The
        cross Gram K_xp and G = K_xp^T diag(dt) K_xp depend only on
        (trajectory, kernel params, pseudo set), so process-noise updates
        hit a small per-gene cache.
        """
        grid = self.grid
        dt = grid.delta
        if getattr(traj, "_tok", None) is None:
            if getattr(traj, "_left_states", None) is None:
                traj._left_states = traj.X[grid.trans_prev]
            traj._incr = traj.X[grid.trans_next] - traj._left_states
            traj._tok = next(_token_counter)
        X_left = traj._left_states
        resid = traj._incr[:, gene] - dt * (params.basal - params.decay * X_left[:, gene])
        K_pp, L_pp, half_ld_pp, scaled_pts, pts_sqnorm, root_w, ext_tok = ext
        xkey = (traj._tok, ext_tok)
        kcache = self._kxp_cache[gene]
        hit = kcache.get(xkey)
        if hit is None:
            As = X_left * root_w
            a2 = np.einsum("ij,ij->i", As, As)
            d2 = a2[:, None] + pts_sqnorm[None, :] - 2.0 * (As @ scaled_pts.T)
            np.maximum(d2, 0.0, out=d2)
            K_xp = params.signal_var * np.exp(-d2)
            G = (K_xp * dt[:, None]).T @ K_xp
            if len(kcache) >= 8:
                kcache.clear()
            kcache[xkey] = hit = (K_xp, G)
        K_xp, G = hit
        # noise diagonal is q*dt, so dt^2/nv = dt/q and dt/nv = 1/q
        inner = K_pp + G * (1.0 / q)
        L_in, info = _dpotrf(inner, lower=1)
        if info != 0:
            L_in, _ = density.chol_with_jitter(inner, params.signal_var)
        M = dt.size
        logdet = (
            M * math.log(q) + self._log_dt_sum
            - 2.0 * half_ld_pp
            + 2.0 * float(np.log(L_in.diagonal()).sum())
        )
        u = (K_xp.T @ resid) / q
        v, _ = _dtrtrs(L_in, u, lower=1)
        quad = float(resid @ (resid / dt)) / q - float(v @ v)
        return -0.5 * (logdet + quad) - 0.5 * M * LOG_2PI

    def _pp_factors(self, gene, params, pseudo):
        """Memoized pseudo-input factors, keyed by the exact inputs.

        Entries hold (K_pp, L_pp, sum log diag L_pp, weight-scaled pseudo
        points, their squared norms, sqrt weights) so repeated factor
        evaluations skip all pseudo-side work.
        """
        key = (
            params.signal_var,
            params.ard_weights.tobytes(),
            pseudo.points.tobytes(),
            pseudo.jitter,
        )
        cache = self._pp_cache[gene]
        hit = cache.get(key)
        if hit is not None:
            return hit
        K_pp, L_pp = density.pseudo_chol_factors(params, pseudo)
        root_w = np.sqrt(params.ard_weights)
        scaled_pts = pseudo.points * root_w
        ext = (
            K_pp,
            L_pp,
            float(np.log(L_pp.diagonal()).sum()),
            scaled_pts,
            np.einsum("ij,ij->i", scaled_pts, scaled_pts),
            root_w,
            next(_token_counter),
        )
        if len(cache) >= 8:
            cache.clear()
        cache[key] = ext
        return ext

    # -- bookkeeping -------------------------------------------------------

    def _tally(self, block: str, accepted: bool):
        self.proposals[block] = self.proposals.get(block, 0) + 1
        if accepted:
            self.accepts[block] = self.accepts.get(block, 0) + 1
        if self.adapting:
            self._adapt_counts[block] += 1
            t = self._adapt_counts[block]
            gain = 1.0 / (1.0 + t) ** 0.6
            m = self.step_mult[block] * math.exp(
                gain * ((1.0 if accepted else 0.0) - self.cfg.adapt_target)
            )
            self.step_mult[block] = min(max(m, 1e-3), 1e3)

    def _accept(self, log_ratio: float) -> bool:
        if log_ratio >= 0:
            return True
        return float(np.log(self.rng.random())) < log_ratio


# ---------------------------------------------------------------------------
# Gibbs blocks


def _gene_prior_terms(state: ChainState, S_row, H_row, signal_var, decay, basal, gene) -> float:
    """Prior log-density terms that involve gene `gene`'s row only."""
    if decay < 0 or basal < 0 or H_row.min() < 0:
        return -np.inf
    ratio = signal_var / state._sigma_floor[gene]
    if signal_var <= 0 or ratio >= priors.SIGNAL_VAR_TRUNCATION:
        return -np.inf
    total = float(np.count_nonzero(S_row)) * state._log_eta
    total += math.log(signal_var) - ratio / 5.0 + math.log(priors.SIGNAL_VAR_TRUNCATION - ratio)
    total -= decay * state._decay_rate[gene] + basal * state._basal_rate[gene]
    total -= float(H_row @ state._inv_range)
    return total


def gibbs_hyper_block(gene: int, state: ChainState) -> None:
    """Joint indicator flip + reflected walks on one gene's GP hyperparameters."""
    h = state.hyper
    rng = state.rng
    mult = state.step_mult["hyper"]
    S_new, flipped = propose_indicator_flip(h.indicators[gene], rng)
    if state.cfg.freeze_diag:
        S_new[gene] = 1
    H_new = propose_rw_reflected(
        h.magnitudes[gene], state.cfg.step_hyper * mult * state.scale_magnitudes, rng
    )
    g_new = float(propose_rw_reflected(
        h.signal_var[gene], state.cfg.step_hyper * mult * state.scale_signal[gene], rng
    ))
    a_new = float(propose_rw_reflected(
        h.decay[gene], state.cfg.step_hyper * mult * state.scale_decay[gene], rng
    ))
    b_new = float(propose_rw_reflected(
        h.basal[gene], state.cfg.step_hyper * mult * state.scale_basal[gene], rng
    ))
    lp_old = _gene_prior_terms(
        state, h.indicators[gene], h.magnitudes[gene], h.signal_var[gene],
        h.decay[gene], h.basal[gene], gene,
    )
    lp_new = _gene_prior_terms(state, S_new, H_new, g_new, a_new, b_new, gene)
    if not np.isfinite(lp_new):
        state._tally("hyper", False)
        return
    params_new = KernelHyperparams(g_new, S_new * H_new, a_new, b_new)
    try:
        logP_new = state._gene_factor(gene, params=params_new)
    except NumericalDegeneracyError:
        state.degeneracy_rejections += 1
        state._tally("hyper", False)
        return
    log_ratio = (logP_new - state.log_P[gene]) + (lp_new - lp_old)
    if state._accept(log_ratio):
        h.indicators[gene] = S_new
        h.magnitudes[gene] = H_new
        h.signal_var[gene] = g_new
        h.decay[gene] = a_new
        h.basal[gene] = b_new
        state._params_cache[gene] = params_new
        state.log_P[gene] = logP_new
        state._tally("hyper", True)
    else:
        state._tally("hyper", False)


def gibbs_measurement_noise_block(state: ChainState) -> None:
    """Per-gene reflected walk on the measurement-noise variances."""
    h = state.hyper
    mult = state.step_mult["meas_noise"]
    for i in range(state.n):
        r_new = float(propose_rw_reflected(
            h.meas_var[i], state.cfg.step_meas_noise * mult * state.scale_meas[i], state.rng
        ))
        if r_new <= 0:
            state._tally("meas_noise", False)
            continue
        lp_old = -1.001 * np.log(h.meas_var[i]) - 1e-5 / h.meas_var[i]
        lp_new = -1.001 * np.log(r_new) - 1e-5 / r_new
        d_fit = state.gene_fit(i, r_new) - state.gene_fit(i, h.meas_var[i])
        if state._accept(d_fit + lp_new - lp_old):
            h.meas_var[i] = r_new
            state._tally("meas_noise", True)
        else:
            state._tally("meas_noise", False)


def gibbs_pseudo_block(state: ChainState) -> None:
    """Random-walk update of the shared pseudo-input locations.

    Uniform prior on the data hypercube; the walk reflects at the box
    boundary, so the proposal stays symmetric and the prior cancels.
    """
    h = state.hyper
    std = state.cfg.step_pseudo * state.step_mult["pseudo"]
    prop = h.pseudo.points + std * (state.box_hi - state.box_lo) * state.rng.standard_normal(
        h.pseudo.points.shape
    )
    prop = reflect_into_box(prop, state.box_lo, state.box_hi)
    pseudo_new = PseudoInputSet(prop, h.pseudo.jitter)
    trial = h.copy()
    trial.pseudo = pseudo_new
    try:
        logP_new = np.array(
            [state._gene_factor(i, hyper=trial) for i in range(state.n)]
        )
    except NumericalDegeneracyError:
        state.degeneracy_rejections += 1
        state._tally("pseudo", False)
        return
    if state._accept(float(np.sum(logP_new - state.log_P))):
        h.pseudo = pseudo_new
        state.log_P = logP_new
        state._tally("pseudo", True)
    else:
        state._tally("pseudo", False)


def gibbs_steady_state_block(state: ChainState) -> None:
    """Random-walk update of the sampled global steady state."""
    h = state.hyper
    std = state.cfg.step_steady_state * state.step_mult["steady_state"]
    prop = h.steady_state + std * np.sqrt(state.ss_prior.var + 1e-4) * state.rng.standard_normal(state.n)
    trial = h.copy()
    trial.steady_state = prop
    try:
        logP_new = np.array([state._gene_factor(i, hyper=trial) for i in range(state.n)])
    except NumericalDegeneracyError:
        state.degeneracy_rejections += 1
        state._tally("steady_state", False)
        return
    d_prior = state.ss_prior.log_density(prop) - state.ss_prior.log_density(h.steady_state)
    if state._accept(float(np.sum(logP_new - state.log_P)) + d_prior):
        h.steady_state = prop
        state.log_P = logP_new
        state._tally("steady_state", True)
    else:
        state._tally("steady_state", False)


def gibbs_aug_variance_block(state: ChainState) -> None:
    """Reflected walks on the steady-state and knockout noise variances."""
    h = state.hyper
    mult = state.step_mult["aug_var"]
    for i in range(state.n):
        ss_new = float(propose_rw_reflected(
            h.ss_noise_var[i], state.cfg.step_aug_var * mult * state.scale_aug_ss[i], state.rng
        ))
        ko_new = float(propose_rw_reflected(
            h.ko_noise_var[i], state.cfg.step_aug_var * mult * state.scale_aug_ko[i], state.rng
        ))
        if ss_new <= 0 or ko_new <= 0:
            state._tally("aug_var", False)
            continue
        trial = h.copy()
        trial.ss_noise_var[i] = ss_new
        trial.ko_noise_var[i] = ko_new
        lp_old = (
            -1.001 * np.log(h.ss_noise_var[i]) - 1e-5 / h.ss_noise_var[i]
            - (state.ko_counts[i] / 2.0) * np.log(h.ko_noise_var[i])
            - state.ko_counts[i] * state.stats.deriv_var[i] / (10.0 * h.ko_noise_var[i])
        )
        lp_new = (
            -1.001 * np.log(ss_new) - 1e-5 / ss_new
            - (state.ko_counts[i] / 2.0) * np.log(ko_new)
            - state.ko_counts[i] * state.stats.deriv_var[i] / (10.0 * ko_new)
        )
        try:
            logP_new = state._gene_factor(i, hyper=trial)
        except NumericalDegeneracyError:
            state.degeneracy_rejections += 1
            state._tally("aug_var", False)
            continue
        if state._accept((logP_new - state.log_P[i]) + (lp_new - lp_old)):
            h.ss_noise_var[i] = ss_new
            h.ko_noise_var[i] = ko_new
            state.log_P[i] = logP_new
            state._tally("aug_var", True)
        else:
            state._tally("aug_var", False)


def _process_var_prior(q: float) -> float:
    return -1.001 * np.log(q) - 1e-5 / q


def gibbs_trajectory_block(state: ChainState) -> None:
    """Trajectory + process-noise block.

    basis kind: joint additive basis proposal for every gene column plus a
    reflected walk on all process variances, one accept/reject with the
    full density ratio.

    crank-nicolson kind: per-gene process-variance sub-updates (exact MH)
    followed by a CN update of the whole trajectory accepted with the ratio
    of the non-Gaussian factors only.
    """
    if state.cfg.proposal == "basis":
        _trajectory_block_basis(state)
    else:
        _process_noise_substep(state)
        _trajectory_block_cn(state)


def _trajectory_block_basis(state: ChainState) -> None:
    h = state.hyper
    eps = state.cfg.step_traj * state.step_mult["trajectory"] ** 2
    X_new = np.column_stack([
        propose_trajectory_basis(state.traj.X[:, i], state.basis, eps, state.rng)
        for i in range(state.n)
    ])
    traj_new = Trajectory(X_new, state.grid)
    q_new = propose_rw_reflected(
        h.process_var, state.cfg.step_process_noise * state.step_mult["process_noise"] * state.scale_process,
        state.rng,
    )
    trial = h.copy()
    trial.process_var = q_new
    try:
        logP_new = np.array([
            state._gene_factor(i, process_var=q_new[i], traj=traj_new, hyper=trial)
            for i in range(state.n)
        ])
    except NumericalDegeneracyError:
        state.degeneracy_rejections += 1
        state._tally("trajectory", False)
        return
    ssq_new = state._fit_ssq_for(traj_new)
    d_fit = sum(
        state.gene_fit(i, h.meas_var[i], ssq_new[i]) - state.gene_fit(i, h.meas_var[i])
        for i in range(state.n)
    )
    d_prior = float(np.sum([
        _process_var_prior(q_new[i]) - _process_var_prior(h.process_var[i])
        for i in range(state.n)
    ]))
    if state._accept(float(np.sum(logP_new - state.log_P)) + d_fit + d_prior):
        state.traj = traj_new
        h.process_var = q_new
        state.log_P = logP_new
        state.fit_ssq = ssq_new
        state._tally("trajectory", True)
    else:
        state._tally("trajectory", False)


def _process_noise_substep(state: ChainState) -> None:
    h = state.hyper
    mult = state.step_mult["process_noise"]
    for i in range(state.n):
        q_new = float(propose_rw_reflected(
            h.process_var[i], state.cfg.step_process_noise * mult * state.scale_process[i], state.rng
        ))
        if q_new <= 0:
            state._tally("process_noise", False)
            continue
        try:
            logP_new = state._gene_factor(i, process_var=q_new)
        except NumericalDegeneracyError:
            state.degeneracy_rejections += 1
            state._tally("process_noise", False)
            continue
        d = (logP_new - state.log_P[i]) + _process_var_prior(q_new) - _process_var_prior(h.process_var[i])
        if state._accept(d):
            h.process_var[i] = q_new
            state.log_P[i] = logP_new
            state._tally("process_noise", True)
        else:
            state._tally("process_noise", False)


def _trajectory_block_cn(state: ChainState) -> None:
    h = state.hyper
    eps = min(state.cfg.cn_epsilon * state.step_mult["trajectory"], 0.999)
    X_new = state.traj.X.copy()
    for i in range(state.n):
        ref = state.cn_refs[i]
        xi = ref.sample_noise(h.process_var[i], h.meas_var[i], state.rng)
        X_new[:, i] = cn_proposal(state.traj.X[:, i], ref.mean, xi, eps)
    traj_new = Trajectory(X_new, state.grid)
    try:
        logP_new = np.array([
            state._gene_factor(i, traj=traj_new) for i in range(state.n)
        ])
    except NumericalDegeneracyError:
        state.degeneracy_rejections += 1
        state._tally("trajectory", False)
        return
    d_bridge = sum(
        state.cn_refs[i].log_bridge_diff(
            traj_new.X[:, i], state.traj.X[:, i], h.process_var[i]
        )
        for i in range(state.n)
    )
    # acceptance: ratio of target over reference; the anchor (data-fit)
    # Gaussians are part of the reference and cancel against the likelihood
    if state._accept(float(np.sum(logP_new - state.log_P)) - d_bridge):
        state.traj = traj_new
        state.log_P = logP_new
        state._refresh_fit_residuals()
        state._tally("trajectory", True)
    else:
        state._tally("trajectory", False)


def sweep(state: ChainState) -> None:
    """One full Gibbs sweep over all blocks."""
    for i in range(state.n):
        gibbs_hyper_block(i, state)
    gibbs_measurement_noise_block(state)
    if state.use_pseudo and not state.cfg.constant_likelihood:
        gibbs_pseudo_block(state)
    if state.has_aug:
        gibbs_steady_state_block(state)
        gibbs_aug_variance_block(state)
    if state.cfg.constant_likelihood:
        # prior-recovery mode: the trajectory is irrelevant, but the
        # process-noise variances still need their prior updates
        _process_noise_substep(state)
    else:
        gibbs_trajectory_block(state)
    state.sweeps_done += 1


# ---------------------------------------------------------------------------
# chain driver


def run_chain(
    dataset: dataio.Dataset,
    cfg: SamplerConfig,
    seed: int | None = None,
    checkpoint_path: str | Path | None = None,
    checkpoint_every: int = 0,
) -> ChainOutput:
    """Run one chain: burn-in, then n_samples * thinning sweeps collecting
    every thinning-th indicator sample.  Deterministic given the seed."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    state = ChainState(dataset, cfg, rng)
    return _drive(state, cfg, checkpoint_path, checkpoint_every)


def _drive(state, cfg, checkpoint_path, checkpoint_every, resume_from=None):
    n = state.n
    out = ChainOutput(
        S_sum=np.zeros((n, n)),
        n_collected=0,
        accepts={},
        proposals={},
        genes=list(state.dataset.genes),
    )
    if resume_from is not None:
        out.S_sum = resume_from["S_sum"]
        out.n_collected = resume_from["n_collected"]
        out.mean_snapshots = resume_from.get("mean_snapshots", [])

    total_burn = cfg.n_burn
    total_main = cfg.n_samples * cfg.thinning
    snap_every = max(1, cfg.n_samples // max(cfg.n_mean_snapshots, 1))

    while state.sweeps_done < total_burn:
        sweep(state)
    state.adapting = False

    while state.sweeps_done < total_burn + total_main:
        sweep(state)
        post = state.sweeps_done - total_burn
        if post % cfg.thinning == 0:
            out.S_sum += state.hyper.indicators
            out.n_collected += 1
            if out.n_collected % snap_every == 0:
                out.mean_snapshots.append(
                    (out.n_collected, out.S_sum / out.n_collected)
                )
            if cfg.store_hyper_samples:
                out.hyper_samples.append({
                    "signal_var": state.hyper.signal_var.copy(),
                    "decay": state.hyper.decay.copy(),
                    "basal": state.hyper.basal.copy(),
                    "process_var": state.hyper.process_var.copy(),
                    "meas_var": state.hyper.meas_var.copy(),
                })
            if cfg.store_trajectories:
                out.trajectories.append(state.traj.X.copy())
        if checkpoint_path and checkpoint_every and state.sweeps_done % checkpoint_every == 0:
            save_checkpoint(state, out, checkpoint_path)

    out.accepts = dict(state.accepts)
    out.proposals = dict(state.proposals)
    out.degeneracy_rejections = state.degeneracy_rejections
    if checkpoint_path:
        save_checkpoint(state, out, checkpoint_path)
    return out


def run_chains(dataset: dataio.Dataset, cfg: SamplerConfig, n_workers: int = 1) -> list[ChainOutput]:
    """Run cfg.n_chains independent chains with spawned RNG streams."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    seeded = [np.random.default_rng(s) for s in seeds]
    outputs = []
    if n_workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            futures = [
                ex.submit(_run_chain_entropy, dataset, cfg, s.entropy, idx)
                for idx, s in enumerate(seeds)
            ]
            outputs = [f.result() for f in futures]
    else:
        for idx, rng in enumerate(seeded):
            state = ChainState(dataset, cfg, rng)
            outputs.append(_drive(state, cfg, None, 0))
    return outputs


def _run_chain_entropy(dataset, cfg, entropy, idx):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=entropy))
    state = ChainState(dataset, cfg, rng)
    return _drive(state, cfg, None, 0)


def pool_chains(outputs: list[ChainOutput]) -> ConfidenceMatrix:
    """Count-weighted pooled posterior mean of the indicator samples."""
    if not outputs:
        raise ValueError("need at least one chain output")
    total = sum(o.S_sum for o in outputs)
    count = sum(o.n_collected for o in outputs)
    mat = total / count if count else np.zeros_like(outputs[0].S_sum, dtype=float)
    return ConfidenceMatrix(matrix=np.clip(mat, 0.0, 1.0), genes=list(outputs[0].genes))


# ---------------------------------------------------------------------------
# checkpointing


def save_checkpoint(state: ChainState, out: ChainOutput, path: str | Path) -> None:
    """Serialize the resumable chain state to versioned JSON."""
    h = state.hyper
    doc = {
        "version": CHECKPOINT_VERSION,
        "sweeps_done": state.sweeps_done,
        "rng_state": state.rng.bit_generator.state,
        "step_mult": state.step_mult,
        "adapting": state.adapting,
        "hyper": {
            "indicators": h.indicators.tolist(),
            "magnitudes": h.magnitudes.tolist(),
            "signal_var": h.signal_var.tolist(),
            "process_var": h.process_var.tolist(),
            "meas_var": h.meas_var.tolist(),
            "decay": h.decay.tolist(),
            "basal": h.basal.tolist(),
            "ss_noise_var": None if h.ss_noise_var is None else h.ss_noise_var.tolist(),
            "ko_noise_var": None if h.ko_noise_var is None else h.ko_noise_var.tolist(),
            "steady_state": None if h.steady_state is None else h.steady_state.tolist(),
            "pseudo_points": None if h.pseudo is None else h.pseudo.points.tolist(),
        },
        "trajectory": state.traj.X.tolist(),
        "S_sum": out.S_sum.tolist(),
        "n_collected": out.n_collected,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def resume_chain(
    dataset: dataio.Dataset, cfg: SamplerConfig, path: str | Path
) -> ChainOutput:
    """Continue a checkpointed chain to the configured total sweep count."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise InvalidDataError(f"unsupported checkpoint version {doc.get('version')}")
    state = ChainState(dataset, cfg, np.random.default_rng(cfg.seed))
    h = doc["hyper"]
    state.hyper.indicators = np.array(h["indicators"], dtype=np.int8)
    state.hyper.magnitudes = np.array(h["magnitudes"])
    state.hyper.signal_var = np.array(h["signal_var"])
    state.hyper.process_var = np.array(h["process_var"])
    state.hyper.meas_var = np.array(h["meas_var"])
    state.hyper.decay = np.array(h["decay"])
    state.hyper.basal = np.array(h["basal"])
    if h["ss_noise_var"] is not None:
        state.hyper.ss_noise_var = np.array(h["ss_noise_var"])
    if h["ko_noise_var"] is not None:
        state.hyper.ko_noise_var = np.array(h["ko_noise_var"])
    if h["steady_state"] is not None:
        state.hyper.steady_state = np.array(h["steady_state"])
    if h["pseudo_points"] is not None:
        state.hyper.pseudo = PseudoInputSet(np.array(h["pseudo_points"]))
    state.traj = Trajectory(np.array(doc["trajectory"]), state.grid)
    state.rng.bit_generator.state = doc["rng_state"]
    state.step_mult = dict(doc["step_mult"])
    state.adapting = bool(doc["adapting"])
    state.sweeps_done = int(doc["sweeps_done"])
    state._refresh_fit_residuals()
    state._params_cache = [None] * state.n  # hyper arrays were replaced above
    state.log_P = np.array([state._gene_factor(i) for i in range(state.n)])
    resume_from = {
        "S_sum": np.array(doc["S_sum"], dtype=float),
        "n_collected": int(doc["n_collected"]),
    }
    return _drive(state, cfg, path, 0, resume_from=resume_from)
