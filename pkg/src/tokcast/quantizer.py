"""Mean-absolute scaling and uniform-grid quantization of univariate series.

A raw series is normalized by the mean of its absolute training values and
then binned on a uniform grid of ``d`` centroids between ``y_min`` and
``y_max``. Value tokens occupy ids ``0 .. d-1``; two special ids above the
value range are reserved for PAD and EOS, so the full vocabulary has size
``d + 2``. All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Library defaults: 4094 value bins on [-15, 15], vocabulary 4096 with specials.
DEFAULT_GRID_SIZE = 4094
DEFAULT_Y_MIN = -15.0
DEFAULT_Y_MAX = 15.0

# Scale used when the training slice is identically zero, so scaling is a no-op
# and zero series tokenize to the center of the grid.
ZERO_SERIES_SCALE = 1.0


def pad_token(d: int) -> int:
    """Id of the padding token for a grid with ``d`` value tokens."""
    return d


def eos_token(d: int) -> int:
    """Id of the end-of-sequence token for a grid with ``d`` value tokens."""
    return d + 1


def vocab_size(d: int) -> int:
    """Total vocabulary size: ``d`` value tokens plus PAD and EOS."""
    return d + 2


@dataclass
class TimeSeries:
    """One raw univariate series with its evaluation metadata.

    ``season_length`` is the number of periods per season (used by the
    seasonal-naive baseline and MASE scaling) and ``horizon`` is the number
    of future steps held out as the test slice.
    """

    id: str
    values: np.ndarray
    season_length: int = 1
    horizon: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError(f"series {self.id!r}: values must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.id!r}: values contain non-finite entries")
        if self.season_length < 1:
            raise ValueError(f"series {self.id!r}: season_length must be >= 1")
        if self.horizon < 1:
            raise ValueError(f"series {self.id!r}: horizon must be >= 1")

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Grid:
    """Uniform quantization lattice.

    Centroids are ``c_i = y_min + i * r`` for ``i = 0 .. d-1`` with spacing
    ``r = (y_max - y_min) / (d - 1)``; boundaries are the midpoints between
    neighboring centroids.
    """

    d: int
    y_min: float
    y_max: float
    centroids: np.ndarray = field(init=False, repr=False, compare=False)
    boundaries: np.ndarray = field(init=False, repr=False, compare=False)
    r: float = field(init=False)

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"grid needs at least 2 value tokens, got d={self.d}")
        if not (np.isfinite(self.y_min) and np.isfinite(self.y_max)):
            raise ValueError("grid bounds must be finite")
        if self.y_min >= self.y_max:
            raise ValueError(f"grid bounds must satisfy y_min < y_max, got [{self.y_min}, {self.y_max}]")
        r = (self.y_max - self.y_min) / (self.d - 1)
        centroids = self.y_min + np.arange(self.d, dtype=np.float64) * r
        # endpoint correction: the closed form can miss y_max by a few ulps
        if abs(centroids[-1] - self.y_max) <= 4 * np.spacing(self.y_max):
            centroids[-1] = self.y_max
        boundaries = 0.5 * (centroids[:-1] + centroids[1:])
        if not np.all(np.diff(boundaries) > 0):
            raise ValueError("grid is too fine for its bounds: boundaries not strictly increasing")
        object.__setattr__(self, "centroids", centroids)
        object.__setattr__(self, "boundaries", boundaries)
        object.__setattr__(self, "r", r)

    @property
    def pad_token(self) -> int:
        return pad_token(self.d)

    @property
    def eos_token(self) -> int:
        return eos_token(self.d)

    @property
    def vocab_size(self) -> int:
        return vocab_size(self.d)


@dataclass
class TokenizedSeries:
    """Token ids plus the scale factor needed to invert the encoding."""

    tokens: np.ndarray
    scale: float
    grid_ref: Grid

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        d = self.grid_ref.d
        if self.tokens.size and (self.tokens.min() < 0 or self.tokens.max() >= d):
            raise ValueError(f"tokens out of range [0, {d - 1}]")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be strictly positive, got {self.scale}")

    def __len__(self) -> int:
        return self.tokens.size


def build_grid(d: int = DEFAULT_GRID_SIZE, y_min: float = DEFAULT_Y_MIN,
               y_max: float = DEFAULT_Y_MAX) -> Grid:
    """Construct the uniform grid with ``d`` value tokens on ``[y_min, y_max]``."""
    return Grid(d=int(d), y_min=float(y_min), y_max=float(y_max))


def fit_scale(train_values) -> float:
    """Mean absolute value of the training slice, used as the series scale.

    An all-zero training slice falls back to scale 1 so that scaling stays a
    well-defined no-op.
    """
    values = np.asarray(train_values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty series")
    if not np.all(np.isfinite(values)):
        raise ValueError("cannot fit a scale on non-finite values")
    s = float(np.mean(np.abs(values)))
    return s if s > 0.0 else ZERO_SERIES_SCALE


def tokenize(y, grid: Grid):
    """Map scaled value(s) to token ids in ``[0, d-1]``.

    Values outside the grid bounds are clamped first. A value exactly on a
    bin boundary belongs to the upper cell, so the token id is the number of
    boundaries at or below ``y``. Accepts a scalar or an array; returns an
    ``int`` or an ``int64`` array accordingly.
    """
    arr = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot tokenize non-finite values")
    clamped = np.clip(arr, grid.y_min, grid.y_max)
    tokens = np.searchsorted(grid.boundaries, clamped, side="right")
    if np.isscalar(y) or arr.ndim == 0:
        return int(tokens)
    return tokens.astype(np.int64)


def detokenize(token, grid: Grid):
    """Map token id(s) back to the centroid of their bin."""
    arr = np.asarray(token)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"tokens must be integers, got dtype {arr.dtype}")
    if arr.size and (arr.min() < 0 or arr.max() >= grid.d):
        raise ValueError(f"token out of range [0, {grid.d - 1}]")
    values = grid.centroids[arr]
    if np.isscalar(token) or arr.ndim == 0:
        return float(values)
    return values


def encode_series(ts: TimeSeries, grid: Grid, scale_from) -> TokenizedSeries:
    """Scale a series and quantize it to tokens.

    ``scale_from`` must be the training slice of the series: the scale is
    never allowed to see test data.
    """
    scale = fit_scale(scale_from)
    tokens = tokenize(ts.values / scale, grid)
    return TokenizedSeries(tokens=tokens, scale=scale, grid_ref=grid)


def decode_tokens(tokens, grid: Grid, scale: float) -> np.ndarray:
    """Invert ``encode_series`` up to quantization: centroid times scale."""
    return detokenize(np.asarray(tokens), grid) * scale
