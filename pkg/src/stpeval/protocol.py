"""Evaluation engine: baselines, rollout and the four evaluation dimensions.

Dimensions
----------
``short_term``
    Frames ``[0, L_in)`` in, the next ``L_s`` frames as target, one predictor call.
``long_term``
    Same input, target ``L_l`` frames, reached by iterative rollout
    (:func:`extrapolate`).
``generalization``
    Short-term mechanics on a dataset the model was not trained on; the report
    records both provenance tags.
``robustness``
    Strided windows at frame interval ``dt`` (:func:`~stpeval.tensor.subsample_temporal`).

Sequences too short for the requested windows are skipped and counted.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import dist_metrics as dm
from . import frame_metrics as fm
from . import weather as wm
from .errors import ConfigError, ContractError, CoverageError, EmptyDatasetError, RangeError, STPEvalError
from .npyio import load_array, save_array
from .report import MetricReport, aggregate, aggregate_curves
from .tensor import SequenceTensor, TaskSpec, slice_window, subsample_temporal

DIMENSIONS = ("short_term", "long_term", "generalization", "robustness")
FRAME_METRICS = ("mae", "rmse", "wmape", "ssim", "psnr", "csi", "wrmse", "acc")
SEQUENCE_METRICS = ("c_nino34",)
DATASET_METRICS = ("fvd",)
KNOWN_METRICS = FRAME_METRICS + SEQUENCE_METRICS + DATASET_METRICS
CLAMP_TOL = 1e-6


class Predictor:
    """Base predictor: maps ``[l_in, C, H, W]`` to ``[l_s, C, H, W]``.

    Subclasses that are not safe to call from several threads at once should
    set ``thread_safe = False``; the engine then runs them serially.
    """

    name = "predictor"
    thread_safe = True

    def __init__(self, l_in: int, l_s: int):
        if l_in < 1 or l_s < 1:
            raise ConfigError("l_in and l_s must be >= 1")
        self.l_in = l_in
        self.l_s = l_s

    def predict(self, x: SequenceTensor):
        raise NotImplementedError


class PersistencePredictor(Predictor):
    name = "persistence"

    def predict(self, x: SequenceTensor) -> SequenceTensor:
        last = x.data[-1:]
        return x.with_data(np.repeat(last, self.l_s, axis=0))


class LinearPredictor(Predictor):
    """Pixelwise linear extrapolation from the last two frames, clamped to range."""

    name = "linear"

    def __init__(self, l_in: int, l_s: int):
        if l_in < 2:
            raise ConfigError("linear extrapolation needs l_in >= 2")
        super().__init__(l_in, l_s)

    def predict(self, x: SequenceTensor) -> SequenceTensor:
        a = x.as_f64()
        last, prev = a[-1], a[-2]
        k = np.arange(1, self.l_s + 1, dtype=np.float64)[:, None, None, None]
        out = last[None] + k * (last - prev)[None]
        vmin, vmax = x.value_range
        return SequenceTensor(np.clip(out, vmin, vmax), x.value_range, x.frame_interval)


def _window_key(data: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(data, dtype=np.float64)
    return hashlib.sha1(repr(arr.shape).encode() + arr.tobytes()).digest()


class OraclePredictor(Predictor):
    """Returns the true continuation of any input window found in ``sequences``.

    Every window of ``l_in`` frames at stride ``dt`` is indexed by content, so
    the oracle also serves rollouts (its own predictions are the truth).
    """

    name = "oracle"

    def __init__(self, sequences: Iterable[SequenceTensor], l_in: int, l_s: int, dt: int = 1):
        super().__init__(l_in, l_s)
        self._table: dict[bytes, np.ndarray] = {}
        span = (l_in + l_s - 1) * dt + 1
        for seq in sequences:
            for s in range(seq.T - span + 1):
                idx = s + dt * np.arange(l_in + l_s)
                key = _window_key(seq.data[idx[:l_in]])
                self._table.setdefault(key, seq.data[idx[l_in:]])

    def predict(self, x: SequenceTensor) -> SequenceTensor:
        try:
            return x.with_data(self._table[_window_key(x.data)])
        except KeyError:
            raise ContractError("oracle has no continuation for this input window") from None


_PRED_RE = re.compile(r"^seq(\d+)_pred\.npy$")


class FilePredictor(Predictor):
    """Predictions produced offline by an external model.

    ``directory`` holds ``seq{N}_in.npy`` (as written by :func:`export_inputs`)
    and the model's ``seq{N}_pred.npy`` outputs. Inputs are matched by content,
    so the engine can feed windows in any order.
    """

    name = "files"

    def __init__(self, directory):
        self.directory = os.fspath(directory)
        table: dict[bytes, np.ndarray] = {}
        l_in = l_s = None
        for fname in sorted(os.listdir(self.directory)):
            m = _PRED_RE.match(fname)
            if not m:
                continue
            n = m.group(1)
            x = load_array(os.path.join(self.directory, f"seq{n}_in.npy"))
            y = load_array(os.path.join(self.directory, fname))
            if l_in is None:
                l_in, l_s = x.T, y.T
            elif (x.T, y.T) != (l_in, l_s):
                raise ContractError(f"seq{n}: window lengths differ from the other files")
            table[_window_key(x.data)] = y.data
        if l_in is None:
            raise EmptyDatasetError(f"no seq*_pred.npy files in {self.directory}")
        super().__init__(l_in, l_s)
        self._table = table

    def predict(self, x: SequenceTensor) -> SequenceTensor:
        try:
            return x.with_data(self._table[_window_key(x.data)])
        except KeyError:
            raise ContractError("no prediction file matches this input window") from None


def predict_persistence(x: SequenceTensor, l_s: int) -> SequenceTensor:
    return PersistencePredictor(x.T, l_s).predict(x)


def predict_linear(x: SequenceTensor, l_s: int) -> SequenceTensor:
    return LinearPredictor(x.T, l_s).predict(x)


def _checked_call(p: Predictor, window: SequenceTensor) -> tuple[SequenceTensor, float]:
    """Run the predictor and enforce its contract; returns (output, range excess)."""
    try:
        out = p.predict(window)
    except STPEvalError:
        raise
    except ValueError as exc:
        raise ContractError(f"predictor produced an invalid tensor: {exc}") from exc
    data = out.data if isinstance(out, SequenceTensor) else np.asarray(out)
    expect = (p.l_s,) + window.shape[1:]
    if data.shape != expect:
        raise ContractError(f"predictor returned shape {data.shape}, expected {expect}")
    if data.dtype.kind == "f" and not np.isfinite(data).all():
        raise ContractError("predictor returned NaN or Inf")
    vmin, vmax = window.value_range
    excess = 0.0
    if data.dtype.kind == "f":
        excess = max(vmin - float(data.min()), float(data.max()) - vmax, 0.0)
        if excess > 0.0:
            data = np.clip(data, vmin, vmax)
    try:
        return SequenceTensor(data, window.value_range, window.frame_interval), excess
    except (TypeError, ValueError) as exc:
        raise ContractError(f"predictor returned an invalid tensor: {exc}") from exc


def rollout(p: Predictor, x: SequenceTensor, total: int) -> tuple[SequenceTensor, int, float]:
    """Iterated prediction; returns (first ``total`` frames, calls made, max range excess)."""
    if total < p.l_s:
        raise ConfigError(f"rollout length {total} shorter than predictor output {p.l_s}")
    if x.T < p.l_in:
        raise RangeError(f"input has {x.T} frames, predictor needs {p.l_in}")
    history = x.data
    produced: list[np.ndarray] = []
    count = calls = 0
    worst = 0.0
    while count < total:
        window = SequenceTensor(history[-p.l_in :], x.value_range, x.frame_interval)
        out, excess = _checked_call(p, window)
        calls += 1
        worst = max(worst, excess)
        produced.append(out.data)
        count += out.T
        history = np.concatenate([history[-p.l_in :], out.data])
    pred = np.concatenate(produced)[:total]
    return SequenceTensor(pred, x.value_range, x.frame_interval), calls, worst


def extrapolate(p: Predictor, x: SequenceTensor, total: int) -> SequenceTensor:
    """Roll ``p`` forward until ``total`` frames are predicted.

    Each call sees the last ``l_in`` frames of (input + predictions so far);
    surplus frames from the final call are dropped.
    """
    return rollout(p, x, total)[0]


@dataclass
class EvalContext:
    """Per-metric settings; unset fields fall back to task options or defaults."""

    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    ssim_windowed: bool = False
    psnr_range: Optional[float] = None
    psnr_cap: float = fm.PSNR_CAP
    csi_thresholds: Optional[Sequence[float]] = None
    latitudes: Optional[Sequence[float]] = None
    channels: Optional[Sequence[int]] = None
    climatology: Optional[wm.Climatology] = None
    # (sequence index, absolute target frame indices) -> day-of-year per frame
    day_of_year: Optional[Callable[[int, list[int]], list[int]]] = None
    nino_region: Optional[Sequence[int]] = None
    fvd_dim: Optional[int] = None

    def describe(self) -> dict:
        clim = None
        if self.climatology is not None:
            clim = hashlib.sha256(self.climatology.means.tobytes()).hexdigest()
        return {
            "ssim_k1": self.ssim_k1, "ssim_k2": self.ssim_k2, "ssim_windowed": self.ssim_windowed,
            "psnr_range": self.psnr_range, "psnr_cap": self.psnr_cap,
            "csi_thresholds": None if self.csi_thresholds is None else list(self.csi_thresholds),
            "latitudes": None if self.latitudes is None else [float(v) for v in self.latitudes],
            "channels": None if self.channels is None else list(self.channels),
            "climatology_sha256": clim,
            "nino_region": None if self.nino_region is None else list(self.nino_region),
            "fvd_dim": self.fvd_dim,
        }


@dataclass
class _SeqResult:
    index: int
    skipped: bool = False
    values: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    features: Optional[tuple] = None


def _windows(seq: SequenceTensor, task: TaskSpec, dimension: str, dt: int):
    if dimension == "robustness":
        x, y = subsample_temporal(seq, dt, task.l_in, task.l_s)
        return x, y, [(task.l_in + k) * dt for k in range(task.l_s)]
    horizon = task.l_l if dimension == "long_term" else task.l_s
    if seq.T < task.l_in + horizon:
        raise RangeError(f"sequence of length {seq.T} shorter than {task.l_in + horizon}")
    x = slice_window(seq, 0, task.l_in)
    y = slice_window(seq, task.l_in, horizon)
    return x, y, list(range(task.l_in, task.l_in + horizon))


def _channel_keys(metric: str, C: int, channels) -> list[tuple[str, int]]:
    chans = list(range(C)) if channels is None else list(channels)
    if C == 1:
        return [(metric, chans[0] if chans else 0)]
    return [(f"{metric}.c{c}", c) for c in chans]


class _Scorer:
    def __init__(self, task: TaskSpec, metrics: Sequence[str], ctx: EvalContext):
        self.task = task
        self.metrics = list(metrics)
        self.ctx = ctx
        opts = task.options
        self.thresholds = list(
            ctx.csi_thresholds if ctx.csi_thresholds is not None
            else opts.get("csi_thresholds", wm.CSI_THRESHOLDS)
        )
        self.region = tuple(
            ctx.nino_region if ctx.nino_region is not None else opts.get("nino_region", wm.NINO34_REGION)
        )
        self._grid = None
        if "acc" in self.metrics and (ctx.climatology is None or ctx.day_of_year is None):
            raise ConfigError("acc needs a climatology and a day_of_year mapping")

    def grid(self, H: int) -> wm.LatitudeGrid:
        if self._grid is None or self._grid.rows != H:
            lats = self.ctx.latitudes if self.ctx.latitudes is not None else wm.default_latitudes(H)
            self._grid = wm.latitude_weights(lats)
        return self._grid

    def score(self, index: int, pred: SequenceTensor, target: SequenceTensor, frames: list[int]) -> _SeqResult:
        res = _SeqResult(index)
        ctx = self.ctx
        p, t = pred.as_f64(), target.as_f64()
        lo, hi = target.value_range
        for m in self.metrics:
            if m == "mae":
                res.values[m] = fm.mae(p, t)
                res.curves[m] = fm.mae_frames(p, t)
            elif m == "rmse":
                c = fm.rmse_frames(p, t)
                res.values[m], res.curves[m] = float(c.mean()), c
            elif m == "wmape":
                c = fm.wmape_frames(p, t)
                res.values[m], res.curves[m] = float(c.mean()), c
            elif m == "ssim":
                consts = fm.SsimConstants(hi - lo, ctx.ssim_k1, ctx.ssim_k2)
                c = fm.ssim_frames(p, t, consts, ctx.ssim_windowed)
                res.values[m], res.curves[m] = float(c.mean()), c
            elif m == "psnr":
                c, capped = fm.psnr_frames(p, t, ctx.psnr_range, ctx.psnr_cap)
                res.values[m], res.curves[m] = float(c.mean()), c
                if capped.any():
                    res.flags.append({"kind": "psnr_cap", "sequence": index, "frames": np.flatnonzero(capped).tolist()})
            elif m == "csi":
                per_frame = np.zeros(p.shape[0])
                per_tau, vacuous = [], []
                for tau in self.thresholds:
                    counts = wm.contingency_frames(p, t, tau, (lo, hi))
                    table = wm.ContingencyTable(*(int(v) for v in counts.sum(axis=0)))
                    per_tau.append(table.csi())
                    if table.vacuous:
                        vacuous.append(tau)
                    hmf = counts[:, 0] + counts[:, 1] + counts[:, 2]
                    per_frame += np.where(hmf > 0, counts[:, 0] / np.maximum(hmf, 1), 1.0)
                res.values[m] = float(np.mean(per_tau))
                res.curves[m] = per_frame / len(self.thresholds)
                for tau, v in zip(self.thresholds, per_tau):
                    res.values[f"csi@{tau:g}"] = v
                if vacuous:
                    res.flags.append({"kind": "csi_vacuous", "sequence": index, "thresholds": vacuous})
            elif m == "wrmse":
                grid = self.grid(p.shape[2])
                for key, ch in _channel_keys(m, p.shape[1], ctx.channels):
                    c = wm.wrmse_frames(p, t, grid, ch)
                    res.values[key], res.curves[key] = float(c.mean()), c
            elif m == "acc":
                grid = self.grid(p.shape[2])
                dates = [int(d) for d in ctx.day_of_year(index, frames)]
                _, fallbacks = ctx.climatology.resolve(dates)
                if fallbacks:
                    res.flags.append({"kind": "leap_day_fallback", "sequence": index, "frames": fallbacks})
                for key, ch in _channel_keys(m, p.shape[1], ctx.channels):
                    c = wm.acc_frames(p, t, ctx.climatology, grid, ch, dates)
                    res.values[key], res.curves[key] = float(c.mean()), c
            elif m == "c_nino34":
                res.values[m] = wm.c_nino34(wm.nino34_index(p, self.region), wm.nino34_index(t, self.region))
            elif m == "fvd":
                d = self.fvd_dim(p.shape[0])
                res.features = (dm.pooled_feature_extractor(p, d), dm.pooled_feature_extractor(t, d))
            else:  # pragma: no cover - validated up front
                raise ConfigError(f"unknown metric {m!r}")
        return res

    def fvd_dim(self, horizon: int) -> int:
        if self.ctx.fvd_dim is not None:
            return self.ctx.fvd_dim
        return 16 * min(4, horizon)


def _config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def evaluate(
    p: Predictor,
    dataset: Iterable[SequenceTensor],
    task: TaskSpec,
    dimension: str = "short_term",
    metrics: Optional[Sequence[str]] = None,
    dt: int = 1,
    context: Optional[EvalContext] = None,
    workers: int = 1,
    eval_tag: Optional[str] = None,
    train_tag: Optional[str] = None,
) -> MetricReport:
    """Evaluate ``p`` on every sequence of ``dataset`` along one dimension.

    ``dataset`` may be any iterable (including a lazy generator); sequences are
    processed in chunks so memory stays bounded. Results are reduced in
    sequence order, so the report does not depend on ``workers``.
    """
    from . import __version__

    if dimension not in DIMENSIONS:
        raise ConfigError(f"unknown dimension {dimension!r}; expected one of {DIMENSIONS}")
    if dimension != "robustness" and dt != 1:
        raise ConfigError("dt != 1 is only meaningful for the robustness dimension")
    if dimension == "long_term" and task.l_l is None:
        raise ConfigError(f"task {task.name} has no long-term horizon l_l")
    if p.l_in > task.l_in:
        raise ConfigError(f"predictor needs {p.l_in} input frames, task provides {task.l_in}")
    metrics = list(task.metrics if metrics is None else metrics)
    unknown = [m for m in metrics if m not in KNOWN_METRICS]
    if unknown:
        raise ConfigError(f"unknown metrics {unknown}; known: {list(KNOWN_METRICS)}")
    ctx = context or EvalContext()
    scorer = _Scorer(task, metrics, ctx)
    horizon = task.l_l if dimension == "long_term" else task.l_s

    def run_one(item):
        index, seq = item
        try:
            x, y, frames = _windows(seq, task, dimension, dt)
        except RangeError:
            return _SeqResult(index, skipped=True)
        pred, _calls, excess = rollout(p, x, horizon)
        res = scorer.score(index, pred, y, frames)
        if excess > CLAMP_TOL:
            res.flags.append({"kind": "clamp", "sequence": index, "max_excess": excess})
        return res

    results: list[_SeqResult] = []
    n_workers = workers if (workers > 1 and p.thread_safe) else 1
    chunk = max(1, n_workers * 4)
    items = enumerate(dataset)
    if n_workers == 1:
        results = [run_one(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            batch = []
            for it in items:
                batch.append(it)
                if len(batch) == chunk:
                    results.extend(pool.map(run_one, batch))
                    batch = []
            if batch:
                results.extend(pool.map(run_one, batch))

    if not results:
        raise EmptyDatasetError("dataset is empty")
    kept = [r for r in results if not r.skipped]
    skipped = [r.index for r in results if r.skipped]
    if not kept:
        raise CoverageError(f"all {len(results)} sequences were too short for {dimension} (dt={dt})")

    report = MetricReport(task=task.name, dimension=dimension, dt=dt)
    report.sequence_ids = [r.index for r in kept]
    for key in kept[0].values:
        report.per_sequence[key] = [r.values[key] for r in kept]
        report.aggregate[key] = aggregate(report.per_sequence[key])
    for key in kept[0].curves:
        report.per_frame_index[key] = aggregate_curves([r.curves[key] for r in kept])
    for r in kept:
        report.flags.extend(r.flags)
    if skipped:
        report.flags.append({"kind": "skipped", "count": len(skipped), "sequences": skipped})

    if "fvd" in metrics:
        fp = np.stack([r.features[0] for r in kept])
        ft = np.stack([r.features[1] for r in kept])
        if len(kept) < 2:
            report.flags.append({"kind": "fvd_unavailable", "reason": "fewer than 2 sequences"})
        else:
            fd, meta = dm.frechet_from_features(ft, fp)
            report.dataset_metrics["fvd_builtin"] = fd
            report.flags.append({"kind": "fvd_builtin_features", **meta})

    config = {
        "engine_version": __version__,
        "task": task.to_dict(),
        "dimension": dimension,
        "dt": dt,
        "metrics": metrics,
        "predictor": getattr(p, "name", type(p).__name__),
        "predictor_io": [p.l_in, p.l_s],
        "context": ctx.describe(),
        "eval_tag": eval_tag,
        "train_tag": train_tag,
    }
    report.meta = {
        "engine_version": __version__,
        "config_hash": _config_hash(config),
        "config": config,
        "offered": len(results),
        "consumed": len(kept),
        "skipped": len(skipped),
        "horizon": horizon,
        "eval_tag": eval_tag,
        "train_tag": train_tag,
    }
    return report


def robustness_sweep(
    p: Predictor,
    dataset: Sequence[SequenceTensor],
    task: TaskSpec,
    metrics: Optional[Sequence[str]] = None,
    context: Optional[EvalContext] = None,
    workers: int = 1,
    eval_tag: Optional[str] = None,
) -> list[MetricReport]:
    """One robustness report per entry of ``task.dt_multipliers``.

    ``dataset`` is traversed once per interval, so it must be re-iterable.
    """
    return [
        evaluate(p, dataset, task, "robustness", metrics, dt, context, workers, eval_tag=eval_tag)
        for dt in task.dt_multipliers
    ]


def export_inputs(
    dataset: Iterable[SequenceTensor],
    task: TaskSpec,
    out_dir,
    dimension: str = "short_term",
    dt: int = 1,
) -> dict:
    """Write ``seq{N}_in.npy`` input windows for an external model.

    The model is expected to write ``seq{N}_pred.npy`` next to each input;
    :class:`FilePredictor` then serves them to :func:`evaluate`. For long-term
    runs the prediction files may hold all ``L_l`` frames at once.
    """
    os.makedirs(out_dir, exist_ok=True)
    written, skipped = [], []
    for n, seq in enumerate(dataset):
        try:
            x, _, _ = _windows(seq, task, dimension, dt)
        except RangeError:
            skipped.append(n)
            continue
        save_array(x, os.path.join(out_dir, f"seq{n}_in.npy"))
        written.append(n)
    index = {"task": task.name, "dimension": dimension, "dt": dt, "written": written, "skipped": skipped,
             "naming": "seq{N}_in.npy -> seq{N}_pred.npy"}
    with open(os.path.join(out_dir, "index.json"), "w") as fh:
        json.dump(index, fh, indent=1)
    return index
