"""Classical score-based reference detectors.

Each detector maps a series to one finite score per point; :func:`detect`
turns scores into intervals with the top-fraction protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import IntervalSet, TimeSeries, labels_to_intervals
from .errors import DetectorError
from .metrics.interval import topk_threshold

EPS = 1e-9
DETECTOR_KINDS = ("zscore", "matrix_profile", "iforest")


@dataclass(frozen=True)
class DetectorConfig:
    kind: str = "zscore"
    window: int = 50
    trees: int = 100
    sample_size: int | None = None  # None: min(256, number of windows)
    exclusion: int | None = None  # None: ceil(window / 2)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in DETECTOR_KINDS:
            raise DetectorError(f"unknown detector kind {self.kind!r}")
        if self.window < 2:
            raise DetectorError("window must be >= 2")


def _values(series: TimeSeries | Sequence[float]) -> np.ndarray:
    vals = series.values if isinstance(series, TimeSeries) else series
    return np.asarray(vals, dtype=np.float64)


def _centered_windows(x: np.ndarray, window: int) -> np.ndarray:
    left = window // 2
    right = window - left - 1
    padded = np.concatenate([np.full(left, np.nan), x, np.full(right, np.nan)])
    return sliding_window_view(padded, window)


def zscore_scores(series: TimeSeries | Sequence[float], window: int) -> np.ndarray:
    """|x - rolling mean| / (rolling std + eps) over a centered window, truncated at the edges."""
    x = _values(series)
    if window > x.size:
        raise DetectorError(f"window {window} exceeds series length {x.size}")
    win = _centered_windows(x, window)
    mean = np.nanmean(win, axis=1)
    std = np.nanstd(win, axis=1)
    flat = (np.nanmax(win, axis=1) - np.nanmin(win, axis=1)) == 0
    scores = np.abs(x - mean) / (std + EPS)
    scores[flat] = 0.0
    return scores


def matrix_profile(x: np.ndarray, m: int, exclusion: int | None = None, block: int = 512) -> np.ndarray:
    """Z-normalized nearest-neighbour distance for every length-``m`` subsequence.

    Neighbours closer than ``exclusion`` positions (default ceil(m/2)) are
    trivial matches and skipped. Constant subsequences are at distance 0 from
    each other and sqrt(m) from anything else.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if m < 2 or n < 2 * m:
        raise DetectorError(f"matrix profile needs m >= 2 and T >= 2m (T={n}, m={m})")
    excl = math.ceil(m / 2) if exclusion is None else exclusion
    subs = sliding_window_view(x, m)
    mu = subs.mean(axis=1)
    sd = subs.std(axis=1)
    flat = sd < 1e-12
    z = np.where(flat[:, None], 0.0, (subs - mu[:, None]) / np.where(flat, 1.0, sd)[:, None])
    k = subs.shape[0]
    profile = np.empty(k)
    idx = np.arange(k)
    for lo in range(0, k, block):
        hi = min(lo + block, k)
        corr = z[lo:hi] @ z.T / m
        d2 = 2.0 * m * (1.0 - corr)
        both_flat = flat[lo:hi, None] & flat[None, :]
        one_flat = flat[lo:hi, None] ^ flat[None, :]
        d2 = np.where(both_flat, 0.0, np.where(one_flat, float(m), d2))
        np.maximum(d2, 0.0, out=d2)
        near = np.abs(idx[lo:hi, None] - idx[None, :]) < excl
        d2[near] = np.inf
        profile[lo:hi] = np.sqrt(d2.min(axis=1))
    return profile


def _spread_max(sub_scores: np.ndarray, m: int, n: int) -> np.ndarray:
    padded = np.concatenate([np.full(m - 1, -np.inf), sub_scores, np.full(m - 1, -np.inf)])
    # point t (0-based) is covered by subsequences t-m+1 .. t
    return sliding_window_view(padded, m).max(axis=1)[:n]


def _spread_mean(sub_scores: np.ndarray, m: int, n: int) -> np.ndarray:
    total = np.convolve(sub_scores, np.ones(m))
    cover = np.convolve(np.ones(sub_scores.size), np.ones(m))
    return (total / cover)[:n]


def matrix_profile_scores(series: TimeSeries | Sequence[float], m: int, exclusion: int | None = None) -> np.ndarray:
    """Per-point score: max profile value among the subsequences covering the point."""
    x = _values(series)
    prof = matrix_profile(x, m, exclusion)
    prof = np.where(np.isfinite(prof), prof, 0.0)
    return _spread_max(prof, m, x.size)


def iforest_scores(series: TimeSeries | Sequence[float], window: int, trees: int = 100,
                   sample_size: int | None = None, seed: int = 0) -> np.ndarray:
    """Isolation-forest score 2^(-E[h]/c(n)) per sliding window, averaged onto points."""
    x = _values(series)
    if window > x.size:
        raise DetectorError(f"window {window} exceeds series length {x.size}")
    emb = sliding_window_view(x, window)
    n_win = emb.shape[0]
    if sample_size is None:
        sample_size = min(256, n_win)
    if sample_size > n_win:
        raise DetectorError(f"sample_size {sample_size} exceeds number of windows {n_win}")
    from sklearn.ensemble import IsolationForest  # heavy import, only needed here

    forest = IsolationForest(n_estimators=trees, max_samples=sample_size, random_state=seed)
    forest.fit(emb)
    win_scores = -forest.score_samples(emb)
    return _spread_mean(win_scores, window, x.size)


def scores_for(series: TimeSeries, cfg: DetectorConfig) -> np.ndarray:
    if cfg.window > len(series):
        raise DetectorError(f"window {cfg.window} exceeds series length {len(series)}")
    if cfg.kind == "zscore":
        return zscore_scores(series, cfg.window)
    if cfg.kind == "matrix_profile":
        return matrix_profile_scores(series, cfg.window, cfg.exclusion)
    return iforest_scores(series, cfg.window, cfg.trees, cfg.sample_size, cfg.seed)


def detect(series: TimeSeries, cfg: DetectorConfig, fraction: float = 0.05) -> IntervalSet:
    return labels_to_intervals(topk_threshold(scores_for(series, cfg), fraction))
