"""Time series container and small helpers shared by all modules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LengthError, ParameterError


@dataclass
class TimeSeries:
    """Ordered real-valued samples plus provenance metadata.

    ``dt`` is the sampling interval in model time units and is ``None`` for
    discrete maps and other unit-free sources.  ``meta`` records whatever is
    needed to regenerate the series (system name, parameters, seed, burn-in).
    """

    samples: np.ndarray
    dt: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ParameterError(
                f"samples must be one-dimensional, got shape {self.samples.shape}"
            )
        if self.samples.size < 1:
            raise LengthError("a time series needs at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("all samples must be finite")

    def __len__(self):
        return self.samples.size

    def with_samples(self, samples, **meta_updates) -> "TimeSeries":
        """Copy of this series with new samples and updated metadata."""
        meta = dict(self.meta)
        meta.update(meta_updates)
        return TimeSeries(np.asarray(samples, dtype=float), dt=self.dt, meta=meta)


def as_samples(series) -> np.ndarray:
    """Coerce a TimeSeries or array-like to a 1-D float array."""
    if isinstance(series, TimeSeries):
        return series.samples
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 1:
        raise ParameterError(f"expected a 1-D series, got shape {arr.shape}")
    return arr
