"""tokcast: tokenized time-series forecasting with optimal-transport losses.

Pipeline: scale and quantize a series to tokens, train a small
autoregressive model under cross-entropy or a Wasserstein loss, forecast by
sampling token paths, and score with MASE/WQL against a seasonal-naive
baseline.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .loss import LossKind, LossOutput
from .quantizer import Grid, TimeSeries, TokenizedSeries, build_grid

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "KERNEL_BACKEND",
    "LossKind",
    "LossOutput",
    "TimeSeries",
    "TokenizedSeries",
    "build_grid",
    "__version__",
]
