"""Node feature generation: the four distribution moments of each
series over a look-back window."""

import numpy as np

from ..errors import RangeError
from ..linalg import TimeSeriesPanel


def window_moments(rows: np.ndarray) -> np.ndarray:
    """Per-column (mean, sample std, skewness, excess kurtosis) of a window.

    Std uses divisor n-1; skewness and kurtosis use the population-moment
    ratios m3 / m2^1.5 and m4 / m2^2 - 3. Zero-variance columns yield
    (mean, 0, 0, 0) so constant windows cannot inject NaNs downstream.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise RangeError(f"moment window needs at least 2 rows, got shape {rows.shape}")
    count = rows.shape[0]
    mean = rows.mean(axis=0)
    centered = rows - mean
    m2 = (centered ** 2).mean(axis=0)
    degenerate = m2 == 0.0
    safe_m2 = np.where(degenerate, 1.0, m2)
    std = np.sqrt((centered ** 2).sum(axis=0) / (count - 1))
    skew = (centered ** 3).mean(axis=0) / safe_m2 ** 1.5
    kurt = (centered ** 4).mean(axis=0) / safe_m2 ** 2 - 3.0
    skew[degenerate] = 0.0
    kurt[degenerate] = 0.0
    return np.column_stack([mean, std, skew, kurt])


def node_features(panel: TimeSeriesPanel, window: tuple[int, int]) -> np.ndarray:
    """N x 4 moment features for the panel slice [start, stop)."""
    start, stop = window
    return window_moments(panel.window(start, stop))
