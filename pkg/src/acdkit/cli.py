"""Command-line front end: scene synthesis, detection, evaluation, sweeps.

Every command writes a run manifest with content digests of its inputs and
outputs; stdout carries machine-readable key=value lines and diagnostics go
to stderr. Exit codes: 1 configuration/validation, 2 I/O, 3 numerical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .acda import AcdaConfig, default_shape, prepare_samples, run_acda
from .baselines import diff_rx, run_baseline
from .core import cube_to_map, flatten, read_cube, read_mask, write_cube, write_mask
from .errors import AcdkitError, DataIOError, NumericalError, ValidationError
from .evaluate import export_curve, export_map, export_map_pgm, roc
from .neural import NetworkShape, TrainConfig
from .synth import SceneSpec, describe, generate

_ACDA_DEFAULTS = {
    "h1": None,
    "h2": None,
    "output_activation": "linear",
    "epochs": 200,
    "batch_size": 256,
    "learning_rate": 1e-3,
    "l2_lambda": 1e-3,
    "sample_count": None,
    "repeats": 10,
    "base_seed": 0,
}
_LINEAR_DEFAULTS = {"ridge": None}


def _digest(path: Path) -> str:
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise DataIOError(f"cannot digest {path}: {exc}") from exc
    return "sha256:" + hashlib.sha256(payload).hexdigest()


def _cube_files(header_path) -> list[Path]:
    header_path = Path(header_path)
    return [header_path, header_path.with_suffix(".raw")]


def _ensure_out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write_manifest(
    out_dir: Path,
    command: str,
    config: dict,
    inputs: list[Path],
    outputs: list[Path],
    seeds: list[int],
    started: float,
) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": {p.name: _digest(p) for p in outputs},
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    path = out_dir / "manifest.json"
    try:
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot write manifest {path}: {exc}") from exc
    return path


def _emit(**pairs) -> None:
    for key, value in pairs.items():
        print(f"{key}={value}")


def _coerce(text: str):
    lowered = text.lower()
    if lowered in {"null", "none"}:
        return None
    if lowered in {"true", "false"}:
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _load_config(path, defaults: dict, overrides: list[str]) -> dict:
    merged = dict(defaults)
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataIOError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError(f"config {path} must hold a JSON object")
        unknown = set(data) - set(defaults)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        merged.update(data)
    for item in overrides or []:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        if key not in defaults:
            raise ValidationError(f"unknown config key '{key}'")
        merged[key] = _coerce(value.strip())
    return merged


def _int_field(conf: dict, key: str) -> int:
    try:
        return int(conf[key])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"config key '{key}' must be an integer, got {conf[key]!r}") from exc


def _float_field(conf: dict, key: str) -> float:
    try:
        return float(conf[key])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"config key '{key}' must be a number, got {conf[key]!r}") from exc


def _acda_config(conf: dict, bands: int) -> AcdaConfig:
    if (conf["h1"] is None) != (conf["h2"] is None):
        raise ValidationError("h1 and h2 must be set together")
    activation = str(conf["output_activation"])
    if conf["h1"] is None:
        shape = default_shape(bands, activation)
    else:
        shape = NetworkShape.bottleneck(
            bands, _int_field(conf, "h1"), _int_field(conf, "h2"), activation
        )
    base_seed = _int_field(conf, "base_seed")
    train = TrainConfig(
        epochs=_int_field(conf, "epochs"),
        batch_size=_int_field(conf, "batch_size"),
        learning_rate=_float_field(conf, "learning_rate"),
        l2_lambda=_float_field(conf, "l2_lambda"),
        seed=base_seed,
    )
    sample_count = None if conf["sample_count"] is None else _int_field(conf, "sample_count")
    return AcdaConfig(
        shape=shape,
        train=train,
        sample_count=sample_count,
        repeats=_int_field(conf, "repeats"),
        base_seed=base_seed,
    )


def _read_pair(x_path, y_path):
    x_cube = read_cube(x_path)
    y_cube = read_cube(y_path)
    if x_cube.shape != y_cube.shape:
        raise ValidationError(
            f"cube dimensions disagree: {x_cube.shape} vs {y_cube.shape}"
        )
    return x_cube, y_cube


def cmd_synth(args) -> int:
    started = time.perf_counter()
    spec = SceneSpec.from_json_file(args.spec)
    out = _ensure_out_dir(args.out)
    x_cube, y_cube, mask = generate(spec)
    write_cube(x_cube, out / "x.json")
    write_cube(y_cube, out / "y.json")
    write_mask(mask, out / "truth.pgm")
    (out / "scene.json").write_text(describe(spec) + "\n", encoding="utf-8")
    outputs = _cube_files(out / "x.json") + _cube_files(out / "y.json")
    outputs += [out / "truth.pgm", out / "scene.json"]
    manifest = _write_manifest(
        out, "synth", spec.to_dict(), [Path(args.spec)], outputs, [spec.seed], started
    )
    _emit(
        x=out / "x.json",
        y=out / "y.json",
        truth=out / "truth.pgm",
        scene=out / "scene.json",
        manifest=manifest,
    )
    return 0


def _write_histories(runs, path: Path) -> None:
    lines = ["repeat,direction,epoch,loss"]
    for r, run in enumerate(runs):
        for direction, series in zip(("fwd", "bwd"), run.training_losses):
            for epoch, value in enumerate(series):
                lines.append(f"{r},{direction},{epoch},{value!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_detect(args) -> int:
    started = time.perf_counter()
    x_cube, y_cube = _read_pair(args.x, args.y)
    out = _ensure_out_dir(args.out)
    outputs: list[Path] = []
    if args.method == "acda":
        conf = _load_config(args.config, _ACDA_DEFAULTS, args.set)
        cfg = _acda_config(conf, x_cube.bands)
        samples = prepare_samples(x_cube, y_cube, cfg)
        workers = 1 if args.sequential else None
        mean_map, runs = run_acda(x_cube, y_cube, cfg, workers=workers, samples=samples)
        export_map(mean_map, out / "map.json")
        outputs += _cube_files(out / "map.json")
        _write_histories(runs, out / "losses.csv")
        outputs.append(out / "losses.csv")
        if args.save_samples:
            sample_lines = ["index"] + [str(i) for i in samples.indices]
            (out / "samples.csv").write_text("\n".join(sample_lines) + "\n", encoding="utf-8")
            outputs.append(out / "samples.csv")
        if args.save_run_maps:
            for r, run in enumerate(runs):
                for tag, intensity in (
                    ("fwd", run.loss_map_fwd),
                    ("bwd", run.loss_map_bwd),
                    ("fused", run.fused),
                ):
                    name = out / f"run{r}_{tag}.json"
                    export_map(intensity, name)
                    outputs += _cube_files(name)
        seeds = [cfg.base_seed + r for r in range(cfg.repeats)]
        snapshot = dict(conf)
        snapshot["h1"], snapshot["h2"] = cfg.shape.hidden[0], cfg.shape.hidden[1]
        snapshot["resolved_sample_count"] = samples.size
    else:
        conf = _load_config(args.config, _LINEAR_DEFAULTS, args.set)
        ridge = None if conf["ridge"] is None else _float_field(conf, "ridge")
        if args.method == "diffrx":
            plane = (x_cube.height, x_cube.width)
            intensity = diff_rx(flatten(x_cube), flatten(y_cube), plane, ridge)
        else:
            intensity = run_baseline(args.method, x_cube, y_cube, ridge)
        export_map(intensity, out / "map.json")
        outputs += _cube_files(out / "map.json")
        seeds = []
        snapshot = dict(conf)
        snapshot["scoring"] = "per-pixel MSE, bidirectional min fusion" if args.method in (
            "cc",
            "ce",
        ) else "mahalanobis distance of differences"
    inputs = _cube_files(args.x) + _cube_files(args.y)
    if args.config:
        inputs.append(Path(args.config))
    snapshot["method"] = args.method
    manifest = _write_manifest(out, "detect", snapshot, inputs, outputs, seeds, started)
    _emit(method=args.method, map=out / "map.json", manifest=manifest)
    return 0


def cmd_eval(args) -> int:
    started = time.perf_counter()
    map_cube = read_cube(args.map)
    intensity = cube_to_map(map_cube)
    mask = read_mask(args.mask, expected_shape=intensity.values.shape)
    out = _ensure_out_dir(args.out)
    curve = roc(intensity, mask)
    export_curve(curve, out / "roc.csv")
    export_map_pgm(intensity, out / "map.pgm")
    outputs = [out / "roc.csv", out / "map.pgm"]
    inputs = _cube_files(args.map) + [Path(args.mask)]
    manifest = _write_manifest(out, "eval", {}, inputs, outputs, [], started)
    _emit(auc=f"{curve.auc:.6f}", roc=out / "roc.csv", rendering=out / "map.pgm", manifest=manifest)
    return 0


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    x_cube, y_cube = _read_pair(args.x, args.y)
    mask = read_mask(args.mask, expected_shape=(x_cube.height, x_cube.width))
    out = _ensure_out_dir(args.out)
    try:
        grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataIOError(f"cannot read grid {args.grid}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"grid {args.grid} is not valid JSON: {exc}") from exc
    if not isinstance(grid, dict) or "h1" not in grid or "h2" not in grid:
        raise ValidationError("grid must be a JSON object with 'h1' and 'h2' lists")
    h1_values = sorted({int(v) for v in grid["h1"]}, reverse=True)
    h2_values = sorted({int(v) for v in grid["h2"]}, reverse=True)
    if not h1_values or not h2_values:
        raise ValidationError("grid lists must be non-empty")
    shared = {k: v for k, v in grid.items() if k not in ("h1", "h2")}
    unknown = set(shared) - set(_ACDA_DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown grid config keys: {sorted(unknown)}")
    conf = _load_config(None, dict(_ACDA_DEFAULTS, **shared), args.set)

    bands = x_cube.bands
    rows = ["h2/h1," + ",".join(str(h1) for h1 in h1_values)]
    for h2 in h2_values:
        cells = []
        for h1 in h1_values:
            if not (0 < h2 < h1 < bands):
                cells.append("-")
                continue
            cell_conf = dict(conf)
            cell_conf["h1"], cell_conf["h2"] = h1, h2
            try:
                cfg = _acda_config(cell_conf, bands)
                mean_map, _ = run_acda(
                    x_cube, y_cube, cfg, workers=1 if args.sequential else None
                )
                auc = roc(mean_map, mask).auc
            except AcdkitError as exc:
                logging.getLogger(__name__).warning("cell h1=%d h2=%d failed: %s", h1, h2, exc)
                cells.append("nan")
                continue
            cells.append(f"{auc:.6f}")
            _emit(**{f"auc_h1_{h1}_h2_{h2}": f"{auc:.6f}"})
        rows.append(f"{h2}," + ",".join(cells))
    table = out / "sweep.csv"
    try:
        table.write_text("\n".join(rows) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot write sweep table {table}: {exc}") from exc
    inputs = _cube_files(args.x) + _cube_files(args.y) + [Path(args.mask), Path(args.grid)]
    manifest = _write_manifest(
        out, "sweep", dict(conf, h1=h1_values, h2=h2_values), inputs, [table],
        [_int_field(conf, "base_seed")], started,
    )
    _emit(table=table, manifest=manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acdkit",
        description="Anomaly change detection for co-registered hyperspectral image pairs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic acquisition pair")
    p_synth.add_argument("spec", help="scene spec JSON file")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.set_defaults(func=cmd_synth)

    p_detect = sub.add_parser("detect", help="run a change detector on a cube pair")
    p_detect.add_argument("method", choices=("acda", "diffrx", "cc", "ce"))
    p_detect.add_argument("x", help="first acquisition header (.json)")
    p_detect.add_argument("y", help="second acquisition header (.json)")
    p_detect.add_argument("--config", help="detector config JSON file")
    p_detect.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="override a config key"
    )
    p_detect.add_argument("--out", required=True, help="output directory")
    p_detect.add_argument(
        "--sequential", action="store_true", help="single-threaded, bitwise-reproducible run"
    )
    p_detect.add_argument(
        "--save-run-maps", action="store_true", help="also write per-repeat directional maps"
    )
    p_detect.add_argument(
        "--save-samples", action="store_true", help="also write selected sample indices as CSV"
    )
    p_detect.set_defaults(func=cmd_detect)

    p_eval = sub.add_parser("eval", help="score an intensity map against ground truth")
    p_eval.add_argument("map", help="intensity map header (.json)")
    p_eval.add_argument("mask", help="ground-truth mask (.pgm)")
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="grid-sweep bottleneck widths and tabulate AUCs")
    p_sweep.add_argument("x", help="first acquisition header (.json)")
    p_sweep.add_argument("y", help="second acquisition header (.json)")
    p_sweep.add_argument("mask", help="ground-truth mask (.pgm)")
    p_sweep.add_argument("grid", help="grid JSON file with h1/h2 lists and shared config")
    p_sweep.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="override a shared config key"
    )
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument(
        "--sequential", action="store_true", help="single-threaded, bitwise-reproducible runs"
    )
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
