"""Network inference from sparsely sampled noisy time series.

Latent gene-expression trajectories are modelled as solutions of a
stochastic differential equation whose drift is a Gaussian process with a
squared-exponential ARD covariance.  An indicator-gated ARD weight matrix
encodes which genes regulate which, and a Metropolis-within-Gibbs sampler
explores trajectories and hyperparameters jointly.  The posterior mean of
the indicator matrix is the ranked-link output.
"""

from gpgrn.errors import (
    InvalidDataError,
    NumericalDegeneracyError,
    UndefinedScoreError,
)

__all__ = [
    "InvalidDataError",
    "NumericalDegeneracyError",
    "UndefinedScoreError",
]

__version__ = "0.1.0"
