"""Command-line surface: patchify, train, predict, evaluate.

Every command resolves its configuration (flags over config file over
defaults), writes its outputs atomically, and drops a JSON run manifest
next to the primary output recording the resolved configuration, input and
output digests, seed, and toolkit version. Re-running a command with the
configuration recorded in a manifest reproduces its outputs byte for byte.

Exit codes: 0 success, 2 input error, 3 training divergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import io
import json
import os
import sys

import numpy as np
from PIL import Image

from . import __version__, dataset_io, estimators, metrics, network, trainer
from .errors import DivergenceDetected, VarsrError
from .image_core import (
    RgbImage,
    make_ilr,
    plane_to_u8,
    read_rgb_png,
    rgb_to_chroma,
    rgb_to_luminance,
    ycbcr_to_rgb,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _atomic_write_bytes(path, data: bytes) -> None:
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def _atomic_write_text(path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _atomic_write_via(path, writer) -> None:
    """Run writer(tmp_path), then move the result into place."""
    tmp = f"{path}.tmp-{os.getpid()}"
    writer(tmp)
    os.replace(tmp, path)


def _png_bytes_gray(plane) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(plane_to_u8(plane), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _png_bytes_rgb(img: RgbImage) -> bytes:
    arr = np.stack([plane_to_u8(img.r), plane_to_u8(img.g), plane_to_u8(img.b)], axis=2)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _write_manifest(out_path, command, config, inputs, outputs, extras=None):
    manifest = {
        "command": command,
        "toolkit_version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    if extras:
        manifest.update(extras)
    _atomic_write_text(f"{out_path}.manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _parse_scales(text) -> tuple:
    try:
        scales = tuple(int(s) for s in str(text).split(",") if s.strip())
    except ValueError:
        raise VarsrError(f"bad scale list {text!r}")
    if not scales or any(s not in (2, 3, 4) for s in scales):
        raise VarsrError(f"scales must be drawn from 2,3,4, got {text!r}")
    return scales


def _read_config_file(path) -> dict:
    """Plain key=value lines; blank lines and #-comments ignored."""
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise VarsrError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _list_images(directory) -> list:
    try:
        entries = sorted(os.listdir(directory))
    except OSError as e:
        raise VarsrError(f"cannot read input directory: {e}")
    return [
        os.path.join(directory, name)
        for name in entries
        if name.lower().endswith(IMAGE_EXTENSIONS)
    ]


# ---------------------------------------------------------------- patchify


def cmd_patchify(args) -> int:
    paths = _list_images(args.input_dir)
    if not paths:
        print("error: no input images", file=sys.stderr)
        return EXIT_INPUT
    scales = _parse_scales(args.scales)
    pairs = []
    used = 0
    for path in paths:
        name = os.path.basename(path)
        try:
            image = read_rgb_png(path)
            pairs.extend(
                trainer.build_dataset(
                    [image],
                    scales=scales,
                    patch_size=args.patch_size,
                    per_image_count=args.count,
                    names=[name],
                )
            )
            used += 1
        except (VarsrError, OSError) as e:
            print(f"skipping {name}: {e}", file=sys.stderr)
    if not pairs:
        print("error: no usable input images, zero pairs produced", file=sys.stderr)
        return EXIT_INPUT
    _atomic_write_via(args.out, lambda tmp: dataset_io.write_archive(tmp, pairs, args.patch_size))
    config = {
        "input_dir": args.input_dir,
        "patch_size": args.patch_size,
        "count": args.count,
        "scales": list(scales),
    }
    _write_manifest(args.out, "patchify", config, paths, [args.out])
    print(f"images: {used}  scales: {list(scales)}  pairs: {len(pairs)}")
    print(f"wrote {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------ train


def _resolve_train_config(args) -> dict:
    file_cfg = _read_config_file(args.config) if args.config else {}

    def pick(flag_value, key, default, cast):
        if flag_value is not None:
            return flag_value
        if key in file_cfg:
            return cast(file_cfg[key])
        return default

    estimator_kind = pick(args.estimator, "estimator", estimators.MSE, str)
    if estimator_kind not in (estimators.MSE, estimators.VAR_NORM):
        raise VarsrError(f"unknown estimator {estimator_kind!r}")
    lr = pick(args.lr, "lr", trainer.DEFAULT_LEARNING_RATE, float)
    resolved = {
        "estimator": estimator_kind,
        "r": pick(args.r, "r", estimators.DEFAULT_STABILITY_R, float),
        "epochs": pick(args.epochs, "epochs", trainer.DEFAULT_EPOCHS[estimator_kind], int),
        "batch": pick(args.batch, "batch", trainer.DEFAULT_MINI_BATCH, int),
        "lr": lr,
        "clip_theta": pick(
            args.clip_theta,
            "clip_theta",
            trainer.default_clip_theta(lr if lr > 0 else 1.0),
            float,
        ),
        "seed": pick(args.seed, "seed", 0, int),
        "depth": pick(args.depth, "depth", 20, int),
        "filters": pick(args.filters, "filters", 64, int),
        "kernel": pick(args.kernel, "kernel", 3, int),
        "init": args.init,
    }
    return resolved


def cmd_train(args) -> int:
    cfg = _resolve_train_config(args)
    pairs, header = dataset_io.read_archive(args.data)
    scales = tuple(header["scales"])

    if cfg["init"] == "fresh":
        model = network.init_model(
            cfg["depth"], cfg["filters"], cfg["kernel"], seed=cfg["seed"]
        )
    else:
        model = network.load_model(cfg["init"])

    est = (
        estimators.LossEstimator.mse()
        if cfg["estimator"] == estimators.MSE
        else estimators.LossEstimator.var_norm(cfg["r"])
    )
    train_cfg = trainer.TrainingConfig(
        estimator=est,
        epochs=cfg["epochs"],
        mini_batch=cfg["batch"],
        learning_rate=cfg["lr"],
        clip_theta=cfg["clip_theta"],
        scales=scales,
        patch_size=header["patch_size"],
        seed=cfg["seed"],
    )

    log_lines = []

    def on_epoch(log):
        line = (
            f"epoch={log.epoch} rmse={log.rmse:.17g} "
            f"loss={log.loss:.17g} seconds={log.seconds:.3f}"
        )
        log_lines.append(line)
        print(line)

    model, _ = trainer.train(model, pairs, train_cfg, on_epoch=on_epoch)

    _atomic_write_via(args.out, lambda tmp: network.save_model(tmp, model))
    log_path = args.log or f"{args.out}.log"
    _atomic_write_text(log_path, "\n".join(log_lines) + "\n")
    outputs = [args.out, log_path]
    manifest_cfg = dict(cfg, scales=list(scales), patch_size=header["patch_size"])
    inputs = [args.data] + ([cfg["init"]] if cfg["init"] != "fresh" else [])
    _write_manifest(args.out, "train", manifest_cfg, inputs, outputs)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- predict


def _synthesized_protocol(model, rgb: RgbImage, factor: int):
    """Degrade to LR, rebuild the ILR planes, super-resolve the luminance.

    Runs in YCbCr: every plane is bicubically downsampled and resampled
    back (matching how training data is built); the network sharpens the
    luminance and chroma stays at its interpolated version.
    """
    y = rgb_to_luminance(rgb)
    cb, cr = rgb_to_chroma(rgb)
    y_ilr = make_ilr(y, factor)
    cb_ilr = make_ilr(cb, factor)
    cr_ilr = make_ilr(cr, factor)
    residual = network.forward_residual(model, y_ilr[None, None, :, :])[0, 0]
    y_sr = np.clip(y_ilr + residual, 0.0, 1.0)
    return y, y_ilr, y_sr, residual, cb_ilr, cr_ilr


def _stretch_residual(residual):
    """Map signed residuals onto [0, 1] for viewing: 0 becomes mid-gray."""
    max_abs = float(np.max(np.abs(residual)))
    if max_abs == 0.0:
        return np.full_like(residual, 0.5), 0.0
    return 0.5 + residual / (2.0 * max_abs), max_abs


def cmd_predict(args) -> int:
    model = network.load_model(args.model)
    if model.scales and args.scale not in model.scales:
        print(
            f"warning: model was trained at scales {list(model.scales)}, "
            f"predicting at {args.scale}",
            file=sys.stderr,
        )
    rgb = read_rgb_png(args.input)
    _, y_ilr, y_sr, residual, cb_ilr, cr_ilr = _synthesized_protocol(model, rgb, args.scale)

    _atomic_write_bytes(args.out_sr, _png_bytes_rgb(ycbcr_to_rgb(y_sr, cb_ilr, cr_ilr)))
    outputs = [args.out_sr]
    max_abs = None
    if args.out_bicubic:
        _atomic_write_bytes(
            args.out_bicubic, _png_bytes_rgb(ycbcr_to_rgb(y_ilr, cb_ilr, cr_ilr))
        )
        outputs.append(args.out_bicubic)
    if args.out_residual:
        stretched, max_abs = _stretch_residual(residual)
        _atomic_write_bytes(args.out_residual, _png_bytes_gray(stretched))
        outputs.append(args.out_residual)

    config = {"model": args.model, "input": args.input, "scale": args.scale}
    extras = {"residual_stretch": {"max_abs": max_abs}} if max_abs is not None else None
    _write_manifest(args.out_sr, "predict", config, [args.model, args.input], outputs, extras)
    print(f"wrote {args.out_sr}")
    return EXIT_OK


# --------------------------------------------------------------- evaluate


def _parse_labeled_model(text):
    label, sep, path = text.partition("=")
    if not sep or not label or not path:
        raise VarsrError(f"expected LABEL=PATH, got {text!r}")
    return label, path


def _scene_paths(scenes) -> list:
    paths = []
    for entry in scenes:
        if os.path.isdir(entry):
            paths.extend(_list_images(entry))
        else:
            paths.append(entry)
    return paths


def cmd_evaluate(args) -> int:
    labeled = [_parse_labeled_model(m) for m in args.model]
    models = [(label, network.load_model(path)) for label, path in labeled]
    scene_paths = _scene_paths(args.scenes)
    if not scene_paths:
        print("error: no scene images", file=sys.stderr)
        return EXIT_INPUT

    columns = ["bicubic"] + [label for label, _ in models]
    table_rows = []
    records = []
    for path in scene_paths:
        scene = os.path.basename(path)
        try:
            rgb = read_rgb_png(path)
            y = rgb_to_luminance(rgb)
            y_ilr = make_ilr(y, args.scale)
            scores = [metrics.score_pair(y, y_ilr)]
            for _, model in models:
                residual = network.forward_residual(model, y_ilr[None, None, :, :])[0, 0]
                y_sr = np.clip(y_ilr + residual, 0.0, 1.0)
                scores.append(metrics.score_pair(y, y_sr))
        except (VarsrError, OSError) as e:
            print(f"skipping scene {scene}: {e}", file=sys.stderr)
            continue
        table_rows.append([scene] + [metrics.format_score(s) for s in scores])
        for method, score in zip(columns, scores):
            records.append((scene, method, score.psnr_db, score.ssim))

    if not table_rows:
        print("error: every scene failed to process", file=sys.stderr)
        return EXIT_INPUT

    table = "\t".join(["scene"] + columns) + "\n"
    table += "".join("\t".join(row) + "\n" for row in table_rows)
    _atomic_write_text(args.out, table)
    csv_path = args.out_csv or f"{args.out}.csv"
    csv_text = "scene,method,psnr_db,ssim\n" + "".join(
        f"{scene},{method},{psnr!r},{ssim!r}\n" for scene, method, psnr, ssim in records
    )
    _atomic_write_text(csv_path, csv_text)

    config = {
        "models": {label: path for label, path in labeled},
        "scenes": scene_paths,
        "scale": args.scale,
    }
    inputs = [path for _, path in labeled] + scene_paths
    _write_manifest(args.out, "evaluate", config, inputs, [args.out, csv_path])
    sys.stdout.write(table)
    return EXIT_OK


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varsr",
        description="Residual-CNN single-image super-resolution toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("patchify", help="cut a directory of images into a patch-pair archive")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--out", required=True, help="dataset archive path")
    p.add_argument("--patch-size", type=int, default=trainer.PATCH_SIZE)
    p.add_argument("--count", type=int, default=trainer.PATCHES_PER_IMAGE,
                   help="patches per image")
    p.add_argument("--scales", default="2,3,4", help="comma-separated subset of 2,3,4")
    p.set_defaults(func=cmd_patchify)

    p = sub.add_parser("train", help="train a model on a patch-pair archive")
    p.add_argument("--data", required=True, help="dataset archive from patchify")
    p.add_argument("--out", required=True, help="output model path")
    p.add_argument("--config", help="key=value config file (flags win)")
    p.add_argument("--estimator", choices=[estimators.MSE, estimators.VAR_NORM])
    p.add_argument("--r", type=float, help="stability parameter for var-norm")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--clip-theta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--filters", type=int)
    p.add_argument("--kernel", type=int)
    p.add_argument("--init", default="fresh", help='"fresh" or a model file to start from')
    p.add_argument("--log", help="epoch log output path (default: <out>.log)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="super-resolve one image (synthesized protocol)")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--scale", type=int, choices=(2, 3, 4), required=True)
    p.add_argument("--out-sr", required=True)
    p.add_argument("--out-residual")
    p.add_argument("--out-bicubic")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score models against scenes, emit a table")
    p.add_argument("--model", action="append", required=True, metavar="LABEL=PATH")
    p.add_argument("--scenes", nargs="+", required=True, help="image files or directories")
    p.add_argument("--scale", type=int, choices=(2, 3, 4), required=True)
    p.add_argument("--out", required=True, help="table output path")
    p.add_argument("--out-csv", help="machine-readable output (default: <out>.csv)")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceDetected as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except VarsrError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
