"""Meteorological verification scores.

Grids are ``[T, C, H, W]`` with rows (``H``) running along latitude; the
latitude weight of a row is ``H * cos(phi) / sum(cos(phi))`` so the weights
average to one. WRMSE and ACC are computed for a single channel (one physical
variable), per frame, then averaged over frames.

ACC uses uncentered anomalies against a day-of-year climatology, the usual
convention for medium-range verification:

    ACC_t = sum(a * y * yhat) / sqrt(sum(a * y^2) * sum(a * yhat^2))
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    CoverageError,
    DegenerateAnomalyError,
    DegenerateSeriesError,
    DomainError,
    RangeError,
    ShapeError,
)
from .npyio import read_npy, write_npy
from .tensor import SEVIR_THRESHOLDS, SequenceTensor, as_array

CSI_THRESHOLDS = SEVIR_THRESHOLDS
# (row_start, row_len, col_start, col_len) of the 5S-5N, 170W-120W box on the
# 24 x 48 ICAR-ENSO grid.
NINO34_REGION = (10, 3, 19, 11)
DAYS = 366


@dataclass(frozen=True)
class LatitudeGrid:
    phi: np.ndarray
    alpha: np.ndarray

    @property
    def rows(self) -> int:
        return self.phi.size


def latitude_weights(phi: Sequence[float]) -> LatitudeGrid:
    phi = np.asarray(phi, dtype=np.float64).ravel()
    if phi.size == 0:
        raise ShapeError("need at least one latitude")
    if (np.abs(phi) >= 90.0).any() or not np.isfinite(phi).all():
        raise DomainError("latitudes must lie strictly between -90 and 90 degrees")
    c = np.cos(np.deg2rad(phi))
    return LatitudeGrid(phi, phi.size * c / c.sum())


def default_latitudes(rows: int) -> np.ndarray:
    """Equiangular cell-centre latitudes, south to north (poles excluded)."""
    step = 180.0 / rows
    return -90.0 + (np.arange(rows) + 0.5) * step


def _channel_pair(pred, target, grid: LatitudeGrid, channel: int) -> tuple[np.ndarray, np.ndarray]:
    p, t = as_array(pred), as_array(target)
    if p.shape != t.shape or p.ndim != 4:
        raise ShapeError(f"shape mismatch: pred {p.shape} vs target {t.shape}")
    if grid.rows != p.shape[2]:
        raise ShapeError(f"latitude grid has {grid.rows} rows, fields have {p.shape[2]}")
    if not 0 <= channel < p.shape[1]:
        raise ShapeError(f"channel {channel} out of range for {p.shape[1]} channels")
    return p[:, channel], t[:, channel]


def wrmse_frames(pred, target, grid: LatitudeGrid, channel: int = 0) -> np.ndarray:
    p, t = _channel_pair(pred, target, grid, channel)
    d = p - t
    w = grid.alpha[None, :, None]
    return np.sqrt((w * d * d).mean(axis=(1, 2)))


def wrmse(pred, target, grid: LatitudeGrid, channel: int = 0) -> float:
    return float(wrmse_frames(pred, target, grid, channel).mean())


@dataclass
class Climatology:
    """Per-day-of-year mean fields, ``means[doy - 1]`` is ``[C, H, W]``."""

    means: np.ndarray
    coverage: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        if self.means.ndim != 4 or self.means.shape[0] != DAYS:
            raise ShapeError(f"climatology must be [{DAYS}, C, H, W], got {self.means.shape}")
        if self.coverage is None:
            self.coverage = np.ones(DAYS, dtype=bool)
        self.coverage = np.asarray(self.coverage, dtype=bool)

    def field(self, doy: int) -> tuple[np.ndarray, bool]:
        """Mean field for a day and whether the leap-day fallback was used."""
        if not 1 <= doy <= DAYS:
            raise CoverageError(f"day-of-year {doy} outside 1..{DAYS}")
        if self.coverage[doy - 1]:
            return self.means[doy - 1], False
        if doy == 366 and self.coverage[364]:
            return self.means[364], True
        raise CoverageError(f"climatology has no data for day-of-year {doy}")

    def resolve(self, dates: Sequence[int]) -> tuple[np.ndarray, int]:
        fields, fallbacks = [], 0
        for d in dates:
            f, fb = self.field(int(d))
            fields.append(f)
            fallbacks += fb
        return np.stack(fields), fallbacks


def fit_climatology(history: Iterable[tuple[int, np.ndarray]]) -> Climatology:
    """Per-day, per-pixel arithmetic mean of ``(day_of_year, [C, H, W] frame)`` pairs."""
    sums: Optional[np.ndarray] = None
    counts = np.zeros(DAYS, dtype=np.int64)
    for doy, frame in history:
        frame = np.asarray(frame, dtype=np.float64)
        if frame.ndim != 3:
            raise ShapeError(f"climatology frames must be [C, H, W], got {frame.shape}")
        if not 1 <= doy <= DAYS:
            raise RangeError(f"day-of-year {doy} outside 1..{DAYS}")
        if sums is None:
            sums = np.zeros((DAYS,) + frame.shape)
        elif frame.shape != sums.shape[1:]:
            raise ShapeError("all climatology frames must share one shape")
        sums[doy - 1] += frame
        counts[doy - 1] += 1
    if sums is None:
        raise ShapeError("empty climatology history")
    covered = counts > 0
    means = np.zeros_like(sums)
    means[covered] = sums[covered] / counts[covered][:, None, None, None]
    return Climatology(means, covered)


def save_climatology(clim: Climatology, path) -> None:
    """NPY array plus a ``<path>.json`` coverage sidecar."""
    write_npy(path, clim.means)
    days = (np.flatnonzero(clim.coverage) + 1).tolist()
    with open(f"{path}.json", "w") as fh:
        json.dump({"days": DAYS, "covered": days}, fh)


def load_climatology(path) -> Climatology:
    means = read_npy(path, ndim=4)
    coverage = np.ones(DAYS, dtype=bool)
    try:
        with open(f"{path}.json") as fh:
            side = json.load(fh)
        coverage[:] = False
        coverage[np.asarray(side["covered"], dtype=int) - 1] = True
    except FileNotFoundError:
        pass
    return Climatology(means, coverage)


def acc_frames(pred, target, clim: Climatology, grid: LatitudeGrid, channel: int, dates: Sequence[int]) -> np.ndarray:
    p, t = _channel_pair(pred, target, grid, channel)
    if len(dates) != p.shape[0]:
        raise ShapeError(f"{len(dates)} dates for {p.shape[0]} frames")
    fields, _ = clim.resolve(dates)
    if fields.shape[1:] != (as_array(target).shape[1],) + p.shape[1:]:
        raise ShapeError(f"climatology fields {fields.shape[1:]} do not match data")
    c = fields[:, channel]
    y, yh = t - c, p - c
    w = grid.alpha[None, :, None]
    num = (w * y * yh).sum(axis=(1, 2))
    e_t = (w * y * y).sum(axis=(1, 2))
    e_p = (w * yh * yh).sum(axis=(1, 2))
    if (e_t == 0).any() or (e_p == 0).any():
        raise DegenerateAnomalyError("a frame has zero anomaly energy; ACC undefined")
    return np.clip(num / np.sqrt(e_t * e_p), -1.0, 1.0)


def acc(pred, target, clim: Climatology, grid: LatitudeGrid, channel: int, dates: Sequence[int]) -> float:
    return float(acc_frames(pred, target, clim, grid, channel, dates).mean())


@dataclass(frozen=True)
class ContingencyTable:
    hit: int
    mis: int
    fas: int
    cr: int

    @property
    def total(self) -> int:
        return self.hit + self.mis + self.fas + self.cr

    @property
    def vacuous(self) -> bool:
        return self.hit + self.mis + self.fas == 0

    def csi(self) -> float:
        """hit / (hit + mis + fas); 1.0 when nothing was observed or predicted."""
        if self.vacuous:
            return 1.0
        return self.hit / (self.hit + self.mis + self.fas)


def _resolve_range(target, value_range) -> tuple[float, float]:
    if value_range is None:
        if not isinstance(target, SequenceTensor):
            raise RangeError("value_range is required for raw arrays")
        value_range = target.value_range
    vmin, vmax = float(value_range[0]), float(value_range[1])
    if vmin == vmax:
        raise RangeError("value_range has zero width")
    return vmin, vmax


def to_byte_scale(x: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    return (x - vmin) / (vmax - vmin) * 255.0


def contingency_frames(pred, target, tau: float, value_range=None) -> np.ndarray:
    """Per-frame counts, shape ``[T, 4]`` in (hit, mis, fas, cr) order."""
    vmin, vmax = _resolve_range(target, value_range)
    p, t = as_array(pred), as_array(target)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch: pred {p.shape} vs target {t.shape}")
    obs = (to_byte_scale(t, vmin, vmax) >= tau).reshape(t.shape[0], -1)
    fc = (to_byte_scale(p, vmin, vmax) >= tau).reshape(p.shape[0], -1)
    hit = (obs & fc).sum(axis=1)
    mis = (obs & ~fc).sum(axis=1)
    fas = (~obs & fc).sum(axis=1)
    cr = (~obs & ~fc).sum(axis=1)
    return np.stack([hit, mis, fas, cr], axis=1)


def contingency(pred, target, tau: float, value_range=None) -> ContingencyTable:
    """Counts over all frames after rescaling both fields from ``value_range`` to [0, 255]."""
    h, m, f, c = (int(v) for v in contingency_frames(pred, target, tau, value_range).sum(axis=0))
    return ContingencyTable(h, m, f, c)


class CsiResult(NamedTuple):
    per_threshold: list[float]
    mean: float
    vacuous: list[float]


def csi_scores(pred, target, taus: Sequence[float] = CSI_THRESHOLDS, value_range=None) -> CsiResult:
    if not len(taus):
        raise ShapeError("need at least one threshold")
    per, vac = [], []
    for tau in taus:
        table = contingency(pred, target, tau, value_range)
        per.append(table.csi())
        if table.vacuous:
            vac.append(tau)
    return CsiResult(per, float(np.mean(per)), vac)


def csi_mean(pred, target, taus: Sequence[float] = CSI_THRESHOLDS, value_range=None) -> tuple[list[float], float]:
    res = csi_scores(pred, target, taus, value_range)
    return res.per_threshold, res.mean


class NinoSeries(NamedTuple):
    values: np.ndarray


def nino34_index(seq, region: Sequence[int] = NINO34_REGION) -> NinoSeries:
    """Three-step moving average of the region-mean field; length ``T - 2``."""
    x = as_array(seq)
    if x.ndim != 4:
        raise ShapeError(f"expected [T, C, H, W], got {x.shape}")
    if x.shape[0] < 3:
        raise RangeError(f"need at least 3 frames, got {x.shape[0]}")
    r0, rl, c0, cl = (int(v) for v in region)
    if r0 < 0 or c0 < 0 or rl < 1 or cl < 1 or r0 + rl > x.shape[2] or c0 + cl > x.shape[3]:
        raise RangeError(f"region {tuple(region)} outside {x.shape[2]}x{x.shape[3]} grid")
    m = x[:, :, r0 : r0 + rl, c0 : c0 + cl].mean(axis=(1, 2, 3))
    return NinoSeries((m[:-2] + m[1:-1] + m[2:]) / 3.0)


def c_nino34(pred_series, target_series) -> float:
    """Pearson correlation of two Nino3.4 index series."""
    a = np.asarray(getattr(pred_series, "values", pred_series), dtype=np.float64)
    b = np.asarray(getattr(target_series, "values", target_series), dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"series shapes differ: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ShapeError("series need at least 2 points")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DegenerateSeriesError("constant series; correlation undefined")
    u, v = a - a.mean(), b - b.mean()
    den = np.sqrt((u * u).sum() * (v * v).sum())
    if den == 0:
        raise DegenerateSeriesError("zero-variance series; correlation undefined")
    return float(np.clip((u * v).sum() / den, -1.0, 1.0))
