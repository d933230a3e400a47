"""Hyperparameter priors and the data statistics that set their scales.

All priors are independent across parameters and returned as an
unnormalized log-density (constants that cancel in MCMC ratios are
dropped):

  * indicator matrix: |S|_0 * log(sparsity weight), i.e. each link is on
    independently with prior odds eta : 1
  * process / measurement / steady-state variances: weak inverse gamma
    with shape 0.001 and scale 1e-5
  * decay, basal, ARD magnitudes: exponentials scaled by the data's
    variation per time unit and per-gene range
  * signal variance: gamma shaped, truncated at 30x the mean squared
    difference quotient
  * knockout-row variance: informative inverse gamma whose strength grows
    with the number of usable knockout rows
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gpgrn.errors import InvalidDataError

SIGNAL_VAR_TRUNCATION = 30.0


@dataclass(frozen=True)
class DataStats:
    """Per-gene scale statistics estimated from the time series."""

    variation: np.ndarray      # mean absolute increment per time unit
    value_range: np.ndarray    # max - min over observed values
    deriv_var: np.ndarray      # mean squared difference quotient

    def __post_init__(self):
        for name in ("variation", "value_range", "deriv_var"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if np.any(arr < 0):
                raise InvalidDataError(f"{name} must be nonnegative")


def compute_data_stats(dataset) -> DataStats:
    """Data statistics pooled over series; increments use consecutive observed points."""
    n = dataset.n_genes
    abs_incr = np.zeros(n)
    duration = np.zeros(n)
    sq_quot = np.zeros(n)
    n_incr = np.zeros(n)
    for s in dataset.series:
        if s.times.size < 2:
            raise InvalidDataError("each series needs at least two time points")
        for i in range(n):
            obs = np.flatnonzero(s.mask[:, i])
            if obs.size < 2:
                continue
            t = s.times[obs]
            y = s.values[obs, i]
            dy = np.diff(y)
            dt = np.diff(t)
            abs_incr[i] += np.sum(np.abs(dy))
            duration[i] += t[-1] - t[0]
            sq_quot[i] += np.sum((dy / dt) ** 2)
            n_incr[i] += dy.size
    if np.all(n_incr == 0):
        raise InvalidDataError("no gene has two observed points; cannot form statistics")
    variation = np.where(duration > 0, abs_incr / np.where(duration > 0, duration, 1.0), 0.0)
    deriv_var = np.where(n_incr > 0, sq_quot / np.where(n_incr > 0, n_incr, 1.0), 0.0)
    vals, mask = dataset.stacked_values, dataset.stacked_mask
    lo = np.where(mask, vals, np.inf).min(axis=0)
    hi = np.where(mask, vals, -np.inf).max(axis=0)
    value_range = np.where(np.isfinite(lo) & np.isfinite(hi), hi - lo, 0.0)
    return DataStats(variation=variation, value_range=value_range, deriv_var=deriv_var)


def _inv_gamma_weak(v: np.ndarray) -> float:
    """Noninformative inverse-gamma log-density, up to a constant."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        return -np.inf
    return float(np.sum(-1.001 * np.log(v) - 1e-5 / v))


def log_indicator_prior(indicators: np.ndarray, eta: float) -> float:
    """Sparsity prior: log(eta) per active link."""
    return float(np.count_nonzero(indicators) * np.log(eta))


def log_signal_var_prior(signal_var: np.ndarray, deriv_var: np.ndarray) -> float:
    """Truncated gamma prior; -inf at or beyond 30x the derivative-variance scale."""
    g = np.asarray(signal_var, dtype=float)
    sigma = np.maximum(np.asarray(deriv_var, dtype=float), 1e-300)
    ratio = g / sigma
    if np.any(g <= 0) or np.any(ratio >= SIGNAL_VAR_TRUNCATION):
        return -np.inf
    return float(np.sum(np.log(g) - ratio / 5.0 + np.log(SIGNAL_VAR_TRUNCATION - ratio)))


def log_ko_var_prior(ko_var: np.ndarray, deriv_var: np.ndarray, n_ko: np.ndarray) -> float:
    """Informative inverse gamma keeping knockout-row variances in a sane range."""
    v = np.asarray(ko_var, dtype=float)
    if np.any(v <= 0):
        return -np.inf
    n_ko = np.asarray(n_ko, dtype=float)
    return float(np.sum(-(n_ko / 2.0) * np.log(v) - n_ko * deriv_var / (10.0 * v)))


def log_prior(
    hyper,
    stats: DataStats,
    eta: float,
    ko_counts: np.ndarray | None = None,
    ss_prior: "SteadyStatePrior | None" = None,
) -> float:
    """Total log-prior of a hyperparameter state; -inf outside the support."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if (
        np.any(hyper.magnitudes < 0)
        or np.any(hyper.decay < 0)
        or np.any(hyper.basal < 0)
    ):
        return -np.inf
    total = log_indicator_prior(hyper.indicators, eta)
    total += _inv_gamma_weak(hyper.process_var)
    total += _inv_gamma_weak(hyper.meas_var)
    v_scale = np.maximum(stats.variation, 1e-300)
    r_scale = np.maximum(stats.value_range, 1e-300)
    total += float(np.sum(-hyper.decay / (10.0 * v_scale)))
    total += float(np.sum(-hyper.basal / (5.0 * v_scale)))
    total += float(np.sum(-hyper.magnitudes / r_scale[None, :]))
    total += log_signal_var_prior(hyper.signal_var, stats.deriv_var)
    if ko_counts is not None and np.any(np.asarray(ko_counts) > 0):
        total += _inv_gamma_weak(hyper.ss_noise_var)
        total += log_ko_var_prior(hyper.ko_noise_var, stats.deriv_var, ko_counts)
    if ss_prior is not None and hyper.steady_state is not None:
        total += ss_prior.log_density(hyper.steady_state)
    return total


@dataclass(frozen=True)
class SteadyStatePrior:
    """Normal prior for the sampled global steady state.

    Mean/covariance come from the pool of steady-state-like measurements;
    the covariance is the sample covariance divided by the number of points
    (the uncertainty of their mean).
    """

    mean: np.ndarray
    var: np.ndarray  # diagonal

    @classmethod
    def from_points(cls, points: np.ndarray) -> "SteadyStatePrior":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        m = points.shape[0]
        if m == 0:
            raise InvalidDataError("no steady-state points to build a prior from")
        mean = points.mean(axis=0)
        if m > 1:
            var = points.var(axis=0, ddof=1) / m
        else:
            var = np.full(points.shape[1], 1.0)
        var = np.maximum(var, 1e-8)
        return cls(mean=mean, var=var)

    def log_density(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sum(-0.5 * np.log(2 * np.pi * self.var) - (x - self.mean) ** 2 / (2 * self.var)))
