"""Distribution-level and perceptual metrics.

FVD is the Fréchet distance between Gaussians fitted to video embeddings:

    FD = |mu1 - mu2|^2 + tr(S1) + tr(S2) - 2 tr((S1^1/2 S2 S1^1/2)^1/2)

The trace term is evaluated through the symmetric product
``S1^1/2 S2 S1^1/2`` (same trace as ``(S1 S2)^1/2``) so only symmetric
eigensolvers are needed.

Real FVD/LPIPS numbers require I3D/AlexNet features; those are exported by
the user and read from NPY files. :func:`pooled_feature_extractor` is a
deterministic stand-in so the machinery can run without any network.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, SampleError, ShapeError, SpectrumError
from .tensor import as_array

SYM_RTOL = 1e-12
EIG_RTOL = 1e-10
FD_NEG_TOL = 1e-8
REG_SCALE = 1e-6


@dataclass(frozen=True)
class FeatureSet:
    features: np.ndarray
    source: str = "external-file"

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise ShapeError(f"features must be an n x d matrix with n, d >= 1, got {f.shape}")
        if not np.isfinite(f).all():
            raise ValueError("features contain NaN or Inf")
        object.__setattr__(self, "features", f)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class GaussianStats:
    """Mean, covariance and sample count. ``n=None`` marks analytic stats."""

    mean: np.ndarray
    cov: np.ndarray
    n: Optional[int] = None

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if mu.ndim != 1 or cov.shape != (mu.size, mu.size):
            raise ShapeError(f"mean {mu.shape} and covariance {cov.shape} disagree")
        scale = max(np.abs(cov).max(initial=0.0), 1.0)
        if np.abs(cov - cov.T).max(initial=0.0) > SYM_RTOL * scale:
            raise SpectrumError("covariance is not symmetric")
        if self.n is not None and self.n < 2:
            raise SampleError("sample count must be >= 2")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "cov", cov)

    @property
    def d(self) -> int:
        return self.mean.size

    @property
    def rank_deficient(self) -> bool:
        return self.n is not None and self.n <= self.d


def fit_gaussian(fs) -> GaussianStats:
    """Column means and unbiased (n-1) sample covariance, symmetrized."""
    if not isinstance(fs, FeatureSet):
        fs = FeatureSet(fs)
    if fs.n < 2:
        raise SampleError(f"need at least 2 samples to fit a covariance, got {fs.n}")
    x = fs.features
    mu = x.mean(axis=0)
    dx = x - mu
    cov = dx.T @ dx / (fs.n - 1)
    return GaussianStats(mu, 0.5 * (cov + cov.T), fs.n)


def sqrtm_psd(m) -> np.ndarray:
    """Principal square root of a symmetric positive semi-definite matrix.

    Eigenvalues in ``[-1e-10 |m|_F, 0)`` are treated as zero; anything more
    negative raises :class:`SpectrumError`.
    """
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got {m.shape}")
    norm = np.linalg.norm(m)
    if norm == 0.0:
        return np.zeros_like(m)
    if np.linalg.norm(m - m.T) > EIG_RTOL * norm:
        raise SpectrumError("matrix is not symmetric")
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    if w[0] < -EIG_RTOL * norm:
        raise SpectrumError(f"matrix is not positive semi-definite (min eigenvalue {w[0]:.3e})")
    s = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return 0.5 * (s + s.T)


def regularized_cov(stats: GaussianStats) -> np.ndarray:
    """Covariance with ``eps*I`` added when the fit has no more samples than dimensions."""
    cov = stats.cov
    if stats.rank_deficient:
        eps = REG_SCALE * np.trace(cov) / stats.d
        cov = cov + eps * np.eye(stats.d)
    return cov


def frechet_distance(a: GaussianStats, b: GaussianStats, regularize: bool = True) -> float:
    if a.d != b.d:
        raise ShapeError(f"dimension mismatch: {a.d} vs {b.d}")
    s1 = regularized_cov(a) if regularize else a.cov
    s2 = regularized_cov(b) if regularize else b.cov
    root1 = sqrtm_psd(s1)
    inner = root1 @ s2 @ root1
    inner = 0.5 * (inner + inner.T)
    w = np.linalg.eigvalsh(inner)
    norm = np.linalg.norm(inner)
    if norm > 0 and w[0] < -EIG_RTOL * norm:
        raise SpectrumError(f"covariance product is not PSD (min eigenvalue {w[0]:.3e})")
    tr_cross = np.sqrt(np.clip(w, 0.0, None)).sum()
    diff = a.mean - b.mean
    fd = float(diff @ diff + np.trace(s1) + np.trace(s2) - 2.0 * tr_cross)
    if fd < 0.0:
        scale = max(1.0, float(np.trace(s1) + np.trace(s2)))
        if fd < -FD_NEG_TOL * scale:
            raise SpectrumError(f"Fréchet distance numerically negative ({fd:.3e})")
        fd = 0.0
    return fd


def frechet_from_features(real, fake) -> tuple[float, dict]:
    """Fit both feature sets and return (FD, metadata)."""
    ga, gb = fit_gaussian(real), fit_gaussian(fake)
    meta = {
        "n_real": ga.n, "n_fake": gb.n, "dim": ga.d,
        "regularized_real": ga.rank_deficient, "regularized_fake": gb.rank_deficient,
    }
    return frechet_distance(ga, gb), meta


def _unit_channels(x: np.ndarray) -> np.ndarray:
    norm = np.sqrt((x * x).sum(axis=-3, keepdims=True))
    return np.divide(x, norm, out=np.zeros_like(x), where=norm > 0)


def lpips_aggregate(
    layers_a: Sequence[np.ndarray],
    layers_b: Sequence[np.ndarray],
    weights: Optional[Sequence[np.ndarray]] = None,
) -> float:
    """LPIPS distance from precomputed feature stacks.

    Each layer is ``[C, H, W]`` (one frame) or ``[N, C, H, W]`` (N frames).
    Feature vectors are unit-normalized along channels, the squared
    difference is weighted per channel, averaged spatially and summed over
    layers. With frame stacks the per-frame distances are averaged.
    """
    if len(layers_a) != len(layers_b) or not layers_a:
        raise ShapeError("layer lists must be non-empty and of equal length")
    if weights is not None and len(weights) != len(layers_a):
        raise ShapeError("need one weight vector per layer")
    total = None
    for i, (fa, fb) in enumerate(zip(layers_a, layers_b)):
        fa = np.asarray(fa, dtype=np.float64)
        fb = np.asarray(fb, dtype=np.float64)
        if fa.shape != fb.shape or fa.ndim not in (3, 4):
            raise ShapeError(f"layer {i}: shapes {fa.shape} and {fb.shape} invalid or mismatched")
        if fa.ndim == 3:
            fa, fb = fa[None], fb[None]
        diff = _unit_channels(fa) - _unit_channels(fb)
        sq = diff * diff
        if weights is not None:
            w = np.asarray(weights[i], dtype=np.float64)
            if w.shape != (fa.shape[1],):
                raise ShapeError(f"layer {i}: weights shape {w.shape}, expected ({fa.shape[1]},)")
            if (w < 0).any():
                raise ConfigError("LPIPS channel weights must be nonnegative")
            sq = sq * w[None, :, None, None]
        per_frame = sq.sum(axis=1).mean(axis=(1, 2))
        if total is None:
            total = per_frame
        elif total.shape != per_frame.shape:
            raise ShapeError("all layers must cover the same number of frames")
        else:
            total = total + per_frame
    return float(total.mean())


def _edges(n: int, bins: int) -> list[int]:
    return [(i * n) // bins for i in range(bins + 1)]


def pooled_feature_extractor(seq, d: int) -> np.ndarray:
    """Average-pool a video onto a ``(d/16) x 4 x 4`` time/row/column grid.

    ``d`` must be a positive multiple of 16. Bin ``i`` of an axis of length
    ``n`` split into ``k`` bins covers ``[floor(i*n/k), floor((i+1)*n/k))``;
    channels are averaged together. Output index is
    ``(tbin * 4 + rbin) * 4 + cbin``.
    """
    x = as_array(seq)
    if x.ndim != 4:
        raise ShapeError(f"expected [T, C, H, W], got {x.shape}")
    T, _, H, W = x.shape
    if d <= 0 or d % 16:
        raise ConfigError(f"feature dim must be a positive multiple of 16, got {d}")
    tb = d // 16
    if tb > T or H < 4 or W < 4:
        raise ConfigError(f"cannot pool a {T}x{H}x{W} video into {tb}x4x4 bins")
    te, re, ce = _edges(T, tb), _edges(H, 4), _edges(W, 4)
    out = np.empty(d, dtype=np.float64)
    k = 0
    for i in range(tb):
        for r in range(4):
            for c in range(4):
                out[k] = x[te[i] : te[i + 1], :, re[r] : re[r + 1], ce[c] : ce[c + 1]].mean()
                k += 1
    return out
