"""Markov-switching vector autoregression for driver-behavior time series.

Pipeline: ingest car-following data (dataio), define and evaluate the
regime-switching model (model), infer regimes (inference), estimate by EM
(em) or Gibbs sampling (gibbs), forecast as mixtures of Gaussians
(forecast), pick the order by information criteria (selection), and
generate synthetic ground truth (simulate). The `msvar` console script
exposes the whole pipeline.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND

__all__ = ["__version__", "KERNEL_BACKEND"]
