"""Squared-exponential ARD covariance, linear mean, and low-rank pseudo-input factors.

One gene's drift component is a GP over the full state vector with covariance

    k(x, z) = signal_var * exp(-sum_j w_j (x_j - z_j)^2)

where the ARD weight vector ``w`` is the elementwise product of a binary
indicator row and a nonnegative magnitude row.  A zero weight makes the
kernel invariant to that coordinate, i.e. switches the putative regulator
off.  The mean is linear in the gene's own coordinate: basal production
minus first-order decay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_JITTER_SCALE = 1e-6


@dataclass(frozen=True)
class KernelHyperparams:
    """Hyperparameters of one gene's drift GP.

    ard_weights is the gated product indicator * magnitude; the sampler
    keeps the two factors separately and builds this on demand.
    """

    signal_var: float
    ard_weights: np.ndarray
    decay: float = 0.0
    basal: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.ard_weights, dtype=float)
        object.__setattr__(self, "ard_weights", w)
        if self.signal_var <= 0:
            raise ValueError(f"signal_var must be positive, got {self.signal_var}")
        if w.ndim != 1 or (w.size and w.min() < 0):
            raise ValueError("ard_weights must be a 1-D nonnegative vector")
        if self.decay < 0 or self.basal < 0:
            raise ValueError("decay and basal must be nonnegative")

    @property
    def n_genes(self) -> int:
        return self.ard_weights.shape[0]


@dataclass(frozen=True)
class PseudoInputSet:
    """Inducing locations summarizing the drift GP.

    jitter=None means "use DEFAULT_JITTER_SCALE * signal_var" at
    factorization time; an explicit value is used as-is.
    """

    points: np.ndarray  # (p, n)
    jitter: float | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if pts.shape[0] < 1:
            raise ValueError("need at least one pseudo-input point")
        if self.jitter is not None and self.jitter <= 0:
            raise ValueError("jitter must be positive")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def se_kernel_eval(params: KernelHyperparams, x: np.ndarray, z: np.ndarray) -> float:
    """Evaluate the ARD squared-exponential kernel at a single pair of states."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != (params.n_genes,) or z.shape != (params.n_genes,):
        raise ValueError(
            f"state vectors must have shape ({params.n_genes},), "
            f"got {x.shape} and {z.shape}"
        )
    return float(params.signal_var * np.exp(-np.dot(params.ard_weights, (x - z) ** 2)))


def mean_function(params: KernelHyperparams, x: np.ndarray, gene: int) -> float:
    """Linear drift mean basal - decay * x_gene for the given gene index."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.n_genes:
        raise ValueError(f"state must have {params.n_genes} components")
    return params.basal - params.decay * x[..., gene]


def gram_matrix(
    params: KernelHyperparams, A: np.ndarray, B: np.ndarray | None = None
) -> np.ndarray:
    """Cross-covariance matrix between two row-wise sets of state points."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != params.n_genes or B.shape[1] != params.n_genes:
        raise ValueError("state points must have one column per gene")
    # weighted squared distances via the inner-product expansion (BLAS-bound)
    root_w = np.sqrt(params.ard_weights)
    As = A * root_w
    Bs = As if B is A else B * root_w
    a2 = np.einsum("ij,ij->i", As, As)
    b2 = a2 if B is A else np.einsum("ij,ij->i", Bs, Bs)
    d2 = np.maximum(a2[:, None] + b2[None, :] - 2.0 * As @ Bs.T, 0.0)
    return params.signal_var * np.exp(-d2)


def lipschitz_bound(params: KernelHyperparams) -> float:
    """Quadratic-variation constant signal_var * max weight (diagnostics only)."""
    if params.n_genes == 0:
        return 0.0
    return float(params.signal_var * np.max(params.ard_weights))


def pseudo_gram_factors(
    params: KernelHyperparams, states: np.ndarray, pseudo: PseudoInputSet
) -> tuple[np.ndarray, np.ndarray]:
    """Low-rank factors (K_xp, K_pp) of the Gram approximation K ~ K_xp K_pp^-1 K_xp^T.

    K_pp gets jitter on its diagonal; the full states-by-states product is
    never formed.  Degenerate pseudo-input configurations surface as a
    NumericalDegeneracyError when the caller factorizes K_pp.
    """
    K_xp = gram_matrix(params, states, pseudo.points)
    jitter = (
        pseudo.jitter
        if pseudo.jitter is not None
        else DEFAULT_JITTER_SCALE * params.signal_var
    )
    K_pp = gram_matrix(params, pseudo.points) + jitter * np.eye(pseudo.n_points)
    return K_xp, K_pp
