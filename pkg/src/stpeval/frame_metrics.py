"""Per-frame error and similarity metrics.

Every metric here is computed frame by frame over all ``C*H*W`` values of a
frame and then averaged over time (MAE, whose per-frame means have equal
weight, reduces to the global mean). The ``*_frames`` variants return the
per-frame values used for horizon curves; the scalar variants return the
sequence value.

Argument order is ``(pred, target)`` throughout. Inputs may be
:class:`~stpeval.tensor.SequenceTensor` instances or raw ``[T, C, H, W]``
arrays; values are promoted to float64 without rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DegenerateFrameError, ShapeError
from .tensor import SequenceTensor, as_array

PSNR_CAP = 100.0


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p, t = as_array(pred), as_array(target)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch: pred {p.shape} vs target {t.shape}")
    if p.ndim != 4:
        raise ShapeError(f"expected [T, C, H, W] arrays, got {p.shape}")
    return p, t


def _flat(a: np.ndarray) -> np.ndarray:
    return a.reshape(a.shape[0], -1)


def mae_frames(pred, target) -> np.ndarray:
    p, t = _pair(pred, target)
    return np.abs(_flat(p) - _flat(t)).mean(axis=1)


def mae(pred, target) -> float:
    p, t = _pair(pred, target)
    return float(np.abs(p - t).mean())


def rmse_frames(pred, target) -> np.ndarray:
    p, t = _pair(pred, target)
    d = _flat(p) - _flat(t)
    return np.sqrt((d * d).mean(axis=1))


def rmse(pred, target) -> float:
    """Mean over frames of the per-frame RMSE (not the global RMSE)."""
    return float(rmse_frames(pred, target).mean())


def wmape_frames(pred, target) -> np.ndarray:
    p, t = _pair(pred, target)
    num = np.abs(_flat(p) - _flat(t)).sum(axis=1)
    den = np.abs(_flat(t)).sum(axis=1)
    if (den == 0).any():
        bad = np.flatnonzero(den == 0).tolist()
        raise DegenerateFrameError(f"target frames {bad} are all zero; WMAPE undefined")
    return num / den


def wmape(pred, target) -> float:
    return float(wmape_frames(pred, target).mean())


@dataclass(frozen=True)
class SsimConstants:
    data_range: float = 1.0
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0 or self.data_range <= 0:
            raise ConfigError("SSIM constants k1, k2 and data_range must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2

    @classmethod
    def for_target(cls, target) -> "SsimConstants":
        if isinstance(target, SequenceTensor):
            lo, hi = target.value_range
            return cls(hi - lo)
        return cls()


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _filter_valid(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    # separable correlation over the last two axes, 'valid' region only
    a = sliding_window_view(a, k.size, axis=-1) @ k
    return sliding_window_view(a, k.size, axis=-2) @ k


def ssim_frames(pred, target, consts: Optional[SsimConstants] = None, windowed: bool = False) -> np.ndarray:
    """SSIM per frame.

    The default uses whole-frame statistics (mean, population variance and
    covariance over all ``C*H*W`` values). ``windowed=True`` switches to the
    classic 11x11 Gaussian window (sigma 1.5), applied per channel over the
    valid region and averaged.
    """
    if consts is None:
        consts = SsimConstants.for_target(target)
    p, t = _pair(pred, target)
    c1, c2 = consts.c1, consts.c2
    if windowed:
        if p.shape[2] < 11 or p.shape[3] < 11:
            raise ShapeError("windowed SSIM needs frames of at least 11x11")
        k = _gaussian_kernel()
        mu_p, mu_t = _filter_valid(p, k), _filter_valid(t, k)
        var_p = _filter_valid(p * p, k) - mu_p * mu_p
        var_t = _filter_valid(t * t, k) - mu_t * mu_t
        cov = _filter_valid(p * t, k) - mu_p * mu_t
        smap = ((2 * mu_p * mu_t + c1) * (2 * cov + c2)) / (
            (mu_p * mu_p + mu_t * mu_t + c1) * (var_p + var_t + c2)
        )
        return _flat(smap).mean(axis=1)
    fp, ft = _flat(p), _flat(t)
    if fp.shape[1] < 2:
        raise ShapeError("SSIM needs frames with at least 2 values")
    mu_p = fp.mean(axis=1)
    mu_t = ft.mean(axis=1)
    dp = fp - mu_p[:, None]
    dt = ft - mu_t[:, None]
    var_p = (dp * dp).mean(axis=1)
    var_t = (dt * dt).mean(axis=1)
    cov = (dp * dt).mean(axis=1)
    num = (2 * mu_p * mu_t + c1) * (2 * cov + c2)
    den = (mu_p * mu_p + mu_t * mu_t + c1) * (var_p + var_t + c2)
    return num / den


def ssim(pred, target, consts: Optional[SsimConstants] = None, windowed: bool = False) -> float:
    return float(ssim_frames(pred, target, consts, windowed).mean())


def psnr_frames(
    pred, target, data_range: Optional[float] = None, cap: float = PSNR_CAP
) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame PSNR and a boolean mask of frames clipped to ``cap``.

    The peak is the maximum of each target frame unless ``data_range`` fixes
    it. Identical frames have infinite PSNR and are reported as ``cap``.
    """
    p, t = _pair(pred, target)
    if data_range is None:
        peak = _flat(t).max(axis=1)
        if (peak <= 0).any():
            bad = np.flatnonzero(peak <= 0).tolist()
            raise DegenerateFrameError(f"target frames {bad} have max <= 0; pass data_range")
    else:
        if data_range <= 0:
            raise ConfigError("data_range must be positive")
        peak = np.full(p.shape[0], float(data_range))
    err = rmse_frames(p, t)
    with np.errstate(divide="ignore"):
        vals = 20.0 * np.log10(peak / err)
    capped = ~(vals < cap)
    return np.where(capped, cap, vals), capped


def psnr(pred, target, data_range: Optional[float] = None, cap: float = PSNR_CAP) -> float:
    vals, _ = psnr_frames(pred, target, data_range, cap)
    return float(vals.mean())
