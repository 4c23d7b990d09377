"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 predictor
contract violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional

from . import protocol as proto
from .dist_metrics import frechet_from_features
from .errors import ConfigError, STPEvalError
from .npyio import load_array, load_features, save_array
from .report import dump_frames, stability, to_csv, to_json
from .synthgen import GenConfig, SynthDataset
from .tensor import get_task
from .weather import load_climatology

SPEED_NOTE = "speed ~ U[min, max] px/frame, direction ~ U[0, 2pi)"


class ManifestDataset:
    """Sequences listed in a JSON manifest, loaded lazily."""

    def __init__(self, path: str):
        with open(path) as fh:
            self.manifest = json.load(fh)
        if "sequences" not in self.manifest:
            raise ConfigError(f"{path}: manifest lacks a 'sequences' list")
        root = os.path.dirname(os.path.abspath(path))
        self.paths = [os.path.join(root, p) for p in self.manifest["sequences"]]
        vr = self.manifest.get("value_range")
        self.value_range = None if vr is None else tuple(vr)
        self.frame_interval = self.manifest.get("frame_interval")
        self.tag = self.manifest.get("tag", os.path.basename(path))

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, i):
        return load_array(self.paths[i], self.value_range, self.frame_interval)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def cmd_generate(args) -> int:
    base = GenConfig(seed=args.seed, n_sprites=args.n_sprites, T=args.frames, H=args.height,
                     W=args.width, speed_range=(args.speed_min, args.speed_max))
    ds = SynthDataset(base, args.count)
    os.makedirs(args.out, exist_ok=True)
    names = []
    for i in range(args.count):
        name = f"seq{i:05d}.npy"
        save_array(ds[i], os.path.join(args.out, name))
        names.append(name)
    manifest = {
        "tag": args.tag,
        "generator": {**base.to_dict(), "per_sequence_seed": "seed + index", "speed_distribution": SPEED_NOTE},
        "value_range": [0.0, 1.0],
        "sequences": names,
    }
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    print(f"wrote {args.count} sequences to {args.out}")
    return 0


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _resolve(args, cfg: dict, key: str, default=None):
    val = getattr(args, key, None)
    if val is not None:
        return val
    return cfg.get(key, default)


def _dataset(args, cfg: dict, manifest_key: str = "manifest"):
    manifest = _resolve(args, cfg, manifest_key)
    synth = _resolve(args, cfg, "synth")
    if manifest:
        ds = ManifestDataset(manifest)
        return ds, ds.tag, {"kind": "manifest", "tag": ds.tag, "count": len(ds)}
    if synth is not None:
        seed = int(_resolve(args, cfg, "seed", 0))
        ds = SynthDataset(GenConfig(seed=seed), int(synth))
        return ds, "synthgen", {"kind": "synth", "count": int(synth), "seed": seed}
    raise ConfigError("give --manifest or --synth N")


def _predictor(spec: str, task):
    if spec == "persistence":
        return proto.PersistencePredictor(task.l_in, task.l_s)
    if spec == "linear":
        return proto.LinearPredictor(task.l_in, task.l_s)
    if spec.startswith("files:"):
        return proto.FilePredictor(spec[len("files:"):])
    raise ConfigError(f"unknown predictor {spec!r}; use persistence, linear or files:DIR")


def _context(cfg: dict) -> proto.EvalContext:
    c = dict(cfg.get("context", {}))
    clim_path = c.pop("climatology", None)
    start = c.pop("start_doy", None)
    hours = c.pop("hours_per_frame", 24.0)
    try:
        ctx = proto.EvalContext(**c)
    except TypeError as exc:
        raise ConfigError(f"bad context settings: {exc}") from exc
    if clim_path:
        ctx.climatology = load_climatology(clim_path)
    if start is not None:
        def day_of_year(index, frames, start=start, hours=float(hours)):
            s = start[index] if isinstance(start, list) else start
            return [int((s - 1 + math.floor(f * hours / 24.0)) % 365) + 1 for f in frames]
        ctx.day_of_year = day_of_year
    return ctx


def _emit(text: str, out: Optional[str]):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_eval(args, dimension: str) -> int:
    cfg = _load_config(args.config)
    task = get_task(_resolve(args, cfg, "task", "moving_mnist"))
    if getattr(args, "dts", None):
        task = task.replace(dt_multipliers=tuple(int(v) for v in args.dts.split(",")))
    metrics = _resolve(args, cfg, "metrics")
    if isinstance(metrics, str):
        metrics = [m for m in metrics.split(",") if m]
    workers = int(_resolve(args, cfg, "workers", 1))
    ds, tag, source = _dataset(args, cfg, "eval_manifest" if dimension == "generalization" else "manifest")

    export = getattr(args, "export_inputs", None)
    if export:
        index = proto.export_inputs(ds, task, export, "long_term" if dimension == "long_term" else "short_term")
        print(f"exported {len(index['written'])} input windows to {export}")
        return 0

    predictor = _predictor(_resolve(args, cfg, "predictor", "persistence"), task)
    ctx = _context(cfg)
    train_tag = None
    if dimension == "generalization":
        train = _resolve(args, cfg, "train_manifest")
        if not train:
            raise ConfigError("xeval needs --train-manifest")
        train_tag = ManifestDataset(train).tag

    if dimension == "robustness":
        reports = proto.robustness_sweep(predictor, ds, task, metrics, ctx, workers, eval_tag=tag)
        for r in reports:
            r.meta["source"] = source
        text = json.dumps({"reports": [r.to_dict() for r in reports]}, sort_keys=True, indent=1, allow_nan=False) + "\n"
        _emit(text, args.out)
        if args.csv:
            with open(args.csv, "w") as fh:
                fh.write("".join(to_csv(r) for r in reports))
        return 0

    report = proto.evaluate(predictor, ds, task, dimension, metrics, 1, ctx, workers,
                            eval_tag=tag, train_tag=train_tag)
    report.meta["source"] = source
    _emit(to_json(report), args.out)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(to_csv(report))
    return 0


def cmd_features_fd(args) -> int:
    fd, meta = frechet_from_features(load_features(args.features_real), load_features(args.features_fake))
    _emit(json.dumps({"frechet_distance": fd, **meta}, sort_keys=True, indent=1) + "\n", args.out)
    return 0


def cmd_stability(args) -> int:
    if args.values:
        runs = [float(v) for v in args.values.split(",")]
    elif args.file:
        with open(args.file) as fh:
            runs = [float(v) for v in json.load(fh)]
    else:
        raise ConfigError("give --values or --file")
    rep = stability(runs, args.metric, args.split, args.ddof)
    _emit(json.dumps(rep.__dict__, sort_keys=True, indent=1) + "\n", args.out)
    return 0


def cmd_dump(args) -> int:
    vr = None if args.vmin is None else (args.vmin, args.vmax)
    seq = load_array(args.input, vr)
    paths = dump_frames(seq, args.out)
    print(f"wrote {len(paths)} frames to {args.out}")
    return 0


def _add_eval_args(sp, manifest: bool = True):
    sp.add_argument("--config", help="JSON config; command-line flags override it")
    sp.add_argument("--task", help="preset name or TaskSpec JSON path")
    if manifest:
        sp.add_argument("--manifest", help="dataset manifest JSON")
    sp.add_argument("--synth", type=int, help="evaluate on N built-in synthetic sequences")
    sp.add_argument("--seed", type=int, help="base seed for --synth")
    sp.add_argument("--predictor", help="persistence | linear | files:DIR")
    sp.add_argument("--metrics", help="comma-separated metric ids")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out", help="report path (default stdout)")
    sp.add_argument("--csv", help="also write CSV here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stpeval", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic bouncing-sprite sequences")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--frames", type=int, default=20)
    g.add_argument("--height", type=int, default=64)
    g.add_argument("--width", type=int, default=64)
    g.add_argument("--n-sprites", type=int, default=2)
    g.add_argument("--speed-min", type=float, default=2.0)
    g.add_argument("--speed-max", type=float, default=4.0)
    g.add_argument("--tag", default="synthgen")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("eval", help="short-term evaluation")
    _add_eval_args(e)
    e.add_argument("--export-inputs", help="write seq{N}_in.npy windows here and exit")
    e.set_defaults(func=lambda a: _run_eval(a, "short_term"))

    r = sub.add_parser("rollout-eval", help="long-term evaluation by iterative rollout")
    _add_eval_args(r)
    r.add_argument("--export-inputs", help="write seq{N}_in.npy windows here and exit")
    r.set_defaults(func=lambda a: _run_eval(a, "long_term"))

    rb = sub.add_parser("robustness", help="evaluate at several frame intervals")
    _add_eval_args(rb)
    rb.add_argument("--dts", help="comma-separated frame-interval multipliers (default from task)")
    rb.set_defaults(func=lambda a: _run_eval(a, "robustness"))

    x = sub.add_parser("xeval", help="generalization: evaluate on a different manifest")
    _add_eval_args(x, manifest=False)
    x.add_argument("--train-manifest", help="manifest the model was trained on (provenance only)")
    x.add_argument("--eval-manifest", help="manifest to evaluate on")
    x.set_defaults(func=lambda a: _run_eval(a, "generalization"))

    f = sub.add_parser("features-fd", help="Fréchet distance between two feature files")
    f.add_argument("--features-real", required=True)
    f.add_argument("--features-fake", required=True)
    f.add_argument("--out")
    f.set_defaults(func=cmd_features_fd)

    s = sub.add_parser("stability", help="std and t-test p-value over repeated runs")
    s.add_argument("--values", help="comma-separated run values")
    s.add_argument("--file", help="JSON list of run values")
    s.add_argument("--metric", default="")
    s.add_argument("--split", choices=("halves", "interleaved"), default="halves")
    s.add_argument("--ddof", type=int, choices=(0, 1), default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_stability)

    d = sub.add_parser("dump", help="write frames of an NPY sequence as PGM/PPM")
    d.add_argument("--input", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--vmin", type=float)
    d.add_argument("--vmax", type=float)
    d.set_defaults(func=cmd_dump)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except STPEvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
