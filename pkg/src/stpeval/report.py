"""Metric reports: aggregation, stability statistics, serialization, frame dumps."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, EmptyDatasetError, IoError
from .stats import mean, student_ttest
from .tensor import SequenceTensor

SCHEMA_VERSION = 1


def pairwise_sum(values) -> np.ndarray | float:
    """Sum along axis 0 with a fixed balanced tree.

    Neighbours are added level by level (``x[0]+x[1], x[2]+x[3], ...``); an odd
    tail is carried up by adding 0.0. The result depends only on the order of
    the values, never on worker scheduling.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.shape[0] == 0:
        raise EmptyDatasetError("nothing to sum")
    while x.shape[0] > 1:
        if x.shape[0] % 2:
            x = np.concatenate([x, np.zeros((1,) + x.shape[1:])])
        x = x[0::2] + x[1::2]
    out = x[0]
    return float(out) if out.ndim == 0 else out


def aggregate(values) -> float:
    """Arithmetic mean of per-sequence values using :func:`pairwise_sum`."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise EmptyDatasetError("no non-skipped sequences to aggregate")
    return pairwise_sum(x) / x.shape[0]


def aggregate_curves(rows) -> list[float]:
    """Per-frame-index mean of equally long per-sequence curves."""
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyDatasetError("no curves to aggregate")
    return (pairwise_sum(x) / x.shape[0]).tolist()


@dataclass
class MetricReport:
    task: str
    dimension: str
    dt: int
    sequence_ids: list[int] = field(default_factory=list)
    per_sequence: dict[str, list[float]] = field(default_factory=dict)
    per_frame_index: dict[str, list[float]] = field(default_factory=dict)
    aggregate: dict[str, float] = field(default_factory=dict)
    dataset_metrics: dict[str, float] = field(default_factory=dict)
    flags: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def results(self) -> dict:
        """Everything except provenance metadata; used for content comparisons."""
        d = dataclasses.asdict(self)
        for key in ("meta", "dimension", "schema_version"):
            d.pop(key)
        return d

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**d)


def to_json(report: MetricReport) -> str:
    # repr-based float formatting round-trips every finite f64 exactly
    return json.dumps(report.to_dict(), sort_keys=True, indent=1, allow_nan=False) + "\n"


def from_json(text: str) -> MetricReport:
    return MetricReport.from_dict(json.loads(text))


def _g17(v: float) -> str:
    return format(v, ".17g")


def to_csv(report: MetricReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "sequence", "metric", "value"])
    for metric in sorted(report.per_sequence):
        for sid, v in zip(report.sequence_ids, report.per_sequence[metric]):
            w.writerow(["sequence", sid, metric, _g17(v)])
    for metric in sorted(report.aggregate):
        w.writerow(["aggregate", "", metric, _g17(report.aggregate[metric])])
    for metric in sorted(report.dataset_metrics):
        w.writerow(["dataset", "", metric, _g17(report.dataset_metrics[metric])])
    for metric in sorted(report.per_frame_index):
        for i, v in enumerate(report.per_frame_index[metric]):
            w.writerow(["frame", i, metric, _g17(v)])
    return buf.getvalue()


@dataclass
class StabilityReport:
    metric: str
    runs: list[float]
    std: float
    p_value: Optional[float]
    t_stat: Optional[float]
    df: Optional[int]
    split: str
    flags: list[str] = field(default_factory=list)


def stability(runs: Sequence[float], metric: str = "", split: str = "halves", ddof: int = 1) -> StabilityReport:
    """Spread of repeated runs and a two-sample t-test between two equal groups.

    ``split="halves"`` compares the first half of the runs with the second;
    ``"interleaved"`` compares odd- and even-numbered runs. With an odd count
    the last run is left out of the test. ``ddof=1`` gives the sample standard
    deviation; ``ddof=0`` the population one.
    """
    runs = [float(r) for r in runs]
    if len(runs) < 2:
        raise ConfigError("stability needs at least 2 runs")
    if split not in ("halves", "interleaved"):
        raise ConfigError(f"unknown split {split!r}")
    if ddof not in (0, 1):
        raise ConfigError("ddof must be 0 or 1")
    flags = []
    m = mean(runs)
    std = math.sqrt(math.fsum((r - m) ** 2 for r in runs) / (len(runs) - ddof))
    used = runs
    if len(used) % 2:
        used = used[:-1]
        flags.append("odd_run_count_last_dropped")
    if len(used) < 4:
        flags.append("too_few_runs_for_t_test")
        return StabilityReport(metric, runs, std, None, None, None, split, flags)
    if split == "halves":
        half = len(used) // 2
        a, b = used[:half], used[half:]
    else:
        a, b = used[0::2], used[1::2]
    res = student_ttest(a, b)
    if res.degenerate:
        flags.append("zero_pooled_variance")
    t = None if math.isinf(res.t) else res.t
    return StabilityReport(metric, runs, std, res.p_value, t, res.df, split, flags)


def frame_bytes(seq: SequenceTensor) -> np.ndarray:
    """Map values from the declared range to bytes (round half to even, clipped)."""
    vmin, vmax = seq.value_range
    scaled = (seq.as_f64() - vmin) / (vmax - vmin) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def dump_frames(seq: SequenceTensor, out_dir, prefix: str = "frame") -> list[str]:
    """Write one binary PGM (1 channel) or PPM (3 channels) per frame."""
    C = seq.shape[1]
    if C not in (1, 3):
        raise ConfigError(f"can only dump 1- or 3-channel sequences, got {C} channels")
    os.makedirs(out_dir, exist_ok=True)
    data = frame_bytes(seq)
    H, W = seq.shape[2], seq.shape[3]
    magic, ext = (b"P5", "pgm") if C == 1 else (b"P6", "ppm")
    paths = []
    for t in range(seq.T):
        pixels = data[t, 0] if C == 1 else np.transpose(data[t], (1, 2, 0))
        path = os.path.join(out_dir, f"{prefix}_{t:04d}.{ext}")
        try:
            with open(path, "wb") as fh:
                fh.write(magic + f"\n{W} {H}\n255\n".encode("ascii"))
                fh.write(np.ascontiguousarray(pixels).tobytes())
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
        paths.append(path)
    return paths
