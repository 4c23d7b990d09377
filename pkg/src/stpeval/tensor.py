"""Sequence tensors, task contracts and temporal windowing.

All frame indexing in the package is 0-based. The strided windowing used by
the temporal-robustness protocol is written in 1-based form in the literature
(history ``x_1, x_{1+dt}, ...``); that translation happens in
:func:`subsample_indices` and nowhere else.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .errors import ConfigError, RangeError, ShapeError

ALLOWED_DTYPES = (np.dtype("float32"), np.dtype("float64"), np.dtype("uint8"))


@dataclass(frozen=True, eq=False)
class SequenceTensor:
    """A ``[T, C, H, W]`` array with a declared value range.

    The array is copied into C order (if needed) and made read-only, so
    instances can be shared freely between threads.

    Parameters
    ----------
    data : array_like
        Frames, element type float32, float64 or uint8.
    value_range : (float, float), optional
        Declared dynamic range. Defaults to ``(0, 255)`` for uint8 and
        ``(0, 1)`` otherwise.
    frame_interval : float, optional
        Physical time per step (hours, months, ...). Purely informational.
    """

    data: np.ndarray
    value_range: tuple[float, float] = None  # type: ignore[assignment]
    frame_interval: Optional[float] = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype not in ALLOWED_DTYPES:
            raise TypeError(f"unsupported element type {arr.dtype}; expected float32, float64 or uint8")
        if arr.ndim != 4:
            raise ShapeError(f"expected a 4-D [T, C, H, W] array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ShapeError(f"all dimensions must be >= 1, got {arr.shape}")
        if arr.dtype.kind == "f" and not np.isfinite(arr).all():
            raise ValueError("sequence contains NaN or Inf")
        arr = np.array(arr, order="C", copy=True) if (arr.flags.writeable or not arr.flags.c_contiguous) else arr
        arr.flags.writeable = False

        vr = self.value_range
        if vr is None:
            vr = (0.0, 255.0) if arr.dtype == np.uint8 else (0.0, 1.0)
        vmin, vmax = float(vr[0]), float(vr[1])
        if not (np.isfinite(vmin) and np.isfinite(vmax)) or not vmin < vmax:
            raise RangeError(f"value_range must satisfy vmin < vmax, got {vr}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "value_range", (vmin, vmax))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def T(self) -> int:
        return self.data.shape[0]

    def __len__(self) -> int:
        return self.data.shape[0]

    def as_f64(self) -> np.ndarray:
        """Values promoted to float64; no rescaling is applied."""
        return self.data.astype(np.float64, copy=False)

    def with_data(self, data) -> "SequenceTensor":
        return SequenceTensor(data, self.value_range, self.frame_interval)

    def __eq__(self, other):
        if not isinstance(other, SequenceTensor):
            return NotImplemented
        return (
            self.data.dtype == other.data.dtype
            and self.data.shape == other.data.shape
            and self.value_range == other.value_range
            and self.frame_interval == other.frame_interval
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None  # type: ignore[assignment]


def as_array(x) -> np.ndarray:
    """float64 view of a SequenceTensor or raw array."""
    if isinstance(x, SequenceTensor):
        return x.as_f64()
    return np.asarray(x, dtype=np.float64)


def slice_window(seq: SequenceTensor, start: int, length: int) -> SequenceTensor:
    """Frames ``[start, start + length)`` of ``seq`` with the same metadata."""
    if start < 0 or length < 0 or start + length > seq.T:
        raise RangeError(f"window [{start}, {start + length}) outside sequence of length {seq.T}")
    if length == 0:
        raise RangeError("window length must be >= 1")
    return seq.with_data(seq.data[start : start + length])


def subsample_indices(dt: int, l_in: int, l_s: int) -> tuple[list[int], list[int]]:
    """0-based frame indices for the strided history and target windows.

    The history is ``x_1, x_{1+dt}, ..., x_{(L_in-1)dt+1}`` and the target
    ``x_{L_in dt+1}, ..., x_{(L_in+L_s-1)dt+1}`` in 1-based notation; shifting
    by one gives ``k*dt`` and ``(L_in+k)*dt``.
    """
    if dt < 1 or l_in < 1 or l_s < 1:
        raise ConfigError(f"dt, l_in and l_s must be >= 1 (got {dt}, {l_in}, {l_s})")
    inputs = [k * dt for k in range(l_in)]
    targets = [(l_in + k) * dt for k in range(l_s)]
    return inputs, targets


def required_length(dt: int, l_in: int, l_s: int) -> int:
    return (l_in + l_s - 1) * dt + 1


def subsample_temporal(
    seq: SequenceTensor, dt: int, l_in: int, l_s: int
) -> tuple[SequenceTensor, SequenceTensor]:
    """Split ``seq`` into a strided (input, target) pair at frame interval ``dt``."""
    inputs, targets = subsample_indices(dt, l_in, l_s)
    need = required_length(dt, l_in, l_s)
    if seq.T < need:
        raise RangeError(f"sequence of length {seq.T} too short for dt={dt} (needs {need})")
    interval = None if seq.frame_interval is None else seq.frame_interval * dt
    x = SequenceTensor(seq.data[inputs], seq.value_range, interval)
    y = SequenceTensor(seq.data[targets], seq.value_range, interval)
    return x, y


@dataclass(frozen=True)
class TaskSpec:
    """Evaluation contract for one dataset."""

    name: str
    l_in: int
    l_s: int
    l_l: Optional[int] = None
    channels: int = 1
    height: int = 64
    width: int = 64
    value_range: tuple[float, float] = (0.0, 1.0)
    dt_multipliers: tuple[int, ...] = (1, 2, 3)
    metrics: tuple[str, ...] = ("mae", "rmse", "ssim", "psnr")
    n_train: Optional[int] = None
    n_val: Optional[int] = None
    n_test: Optional[int] = None
    # per-metric settings, e.g. {"csi_thresholds": [...], "nino_region": [...]}
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.l_in < 1 or self.l_s < 1:
            raise ConfigError(f"{self.name}: l_in and l_s must be >= 1")
        if self.l_l is not None and self.l_l <= self.l_s:
            raise ConfigError(f"{self.name}: l_l must exceed l_s")
        dts = tuple(int(d) for d in self.dt_multipliers)
        if not dts or dts[0] < 1 or any(b <= a for a, b in zip(dts, dts[1:])):
            raise ConfigError(f"{self.name}: dt_multipliers must be >= 1 and strictly increasing")
        if not self.value_range[0] < self.value_range[1]:
            raise ConfigError(f"{self.name}: value_range must satisfy vmin < vmax")
        object.__setattr__(self, "dt_multipliers", dts)
        object.__setattr__(self, "metrics", tuple(self.metrics))
        object.__setattr__(self, "value_range", (float(self.value_range[0]), float(self.value_range[1])))

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["value_range"] = list(self.value_range)
        d["dt_multipliers"] = list(self.dt_multipliers)
        d["metrics"] = list(self.metrics)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown TaskSpec fields: {sorted(unknown)}")
        d = dict(d)
        if "value_range" in d:
            d["value_range"] = tuple(d["value_range"])
        return cls(**d)

    def replace(self, **changes) -> "TaskSpec":
        return dataclasses.replace(self, **changes)


SEVIR_THRESHOLDS = (16, 74, 133, 160, 181, 219)

_VIDEO = ("mae", "rmse", "ssim", "psnr", "fvd")
_TRAFFIC = ("ssim", "psnr", "mae", "rmse", "wmape")

# Dataset statistics and input/output lengths per benchmark task.
_PRESET_ROWS: Sequence[tuple] = (
    # name, n_train, n_val, n_test, C, H, W, L_in, L_s, L_l, metrics
    ("moving_mnist", None, 10_000, 10_000, 1, 64, 64, 10, 10, None, _VIDEO),
    ("kth", 7_482, 1_628, 4_047, 1, 128, 128, 10, 10, None, _VIDEO),
    ("human36m", 66_063, 7_341, 8_582, 3, 256, 256, 4, 4, None, _VIDEO),
    ("bair", 38_937, 4_327, 256, 3, 64, 64, 2, 10, None, _VIDEO),
    ("robonet", 145_944, 16_218, 256, 3, 120, 160, 2, 10, None, _VIDEO),
    ("bridgedata", 31_767, 3_970, 3_971, 3, 120, 160, 2, 10, 30, _VIDEO),
    ("cityscapes", 8_925, 1_500, 1_525, 3, 128, 128, 2, 5, None, _VIDEO),
    ("kitti", 9_209, 2_224, 2_198, 3, 128, 160, 10, 10, None, _VIDEO),
    ("nuscenes", 31_269, 4_658, 4_518, 3, 128, 160, 10, 10, 30, _VIDEO),
    ("caltech", None, None, 1_980, 3, 128, 160, 10, 10, None, _VIDEO),
    ("taxibj", 19_961, 500, 500, 2, 32, 32, 4, 4, None, _TRAFFIC),
    ("traffic4cast2021", 35_840, 4_480, 4_508, 8, 128, 112, 9, 3, None, _TRAFFIC),
    ("icar_enso", 5_205, 334, 1_667, 1, 24, 48, 12, 14, None, ("c_nino34", "rmse")),
    ("sevir", 35_718, 9_060, 12_159, 1, 384, 384, 13, 12, None, ("csi", "rmse")),
    ("weatherbench", 53_944, 2_922, 5_828, 69, 128, 256, 2, 1, 20, ("wrmse", "acc")),
)

_PRESET_OPTIONS = {
    "icar_enso": {"nino_region": [10, 3, 19, 11]},
    "sevir": {"csi_thresholds": list(SEVIR_THRESHOLDS)},
}
_PRESET_RANGES = {"sevir": (0.0, 255.0)}


def _build_presets() -> dict[str, TaskSpec]:
    out = {}
    for name, ntr, nva, nte, c, h, w, lin, ls, ll, metrics in _PRESET_ROWS:
        out[name] = TaskSpec(
            name=name, l_in=lin, l_s=ls, l_l=ll, channels=c, height=h, width=w,
            value_range=_PRESET_RANGES.get(name, (0.0, 1.0)), metrics=metrics,
            n_train=ntr, n_val=nva, n_test=nte, options=dict(_PRESET_OPTIONS.get(name, {})),
        )
    return out


TASK_PRESETS: dict[str, TaskSpec] = _build_presets()


def get_task(name_or_path: str) -> TaskSpec:
    """Look up a preset by name, or read a TaskSpec JSON file."""
    if name_or_path in TASK_PRESETS:
        return TASK_PRESETS[name_or_path]
    try:
        with open(name_or_path) as fh:
            return TaskSpec.from_dict(json.load(fh))
    except FileNotFoundError:
        raise ConfigError(
            f"unknown task {name_or_path!r}; presets: {', '.join(sorted(TASK_PRESETS))}"
        ) from None
