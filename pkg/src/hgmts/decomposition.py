"""Trend/seasonal split of a window via moving average.

The trend is a length-preserving moving average of each row; the seasonal part
is the residual, so trend + seasonal reconstructs the input exactly.  Edge
padding (replicating end values) is the default; strict zero padding is kept
as an alternative because it drags the boundary trend toward zero, which some
pipelines want to probe.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class DecomposedSeries:
    trend: Tensor
    seasonal: Tensor


def decompose(x: Tensor, kernel: int, padding: str = "edge") -> DecomposedSeries:
    """Split rows of x (nodes x length) into moving-average trend and residual."""
    trend = ad.avgpool1d(x, kernel, padding)
    seasonal = ad.sub(x, trend)
    return DecomposedSeries(trend=trend, seasonal=seasonal)
