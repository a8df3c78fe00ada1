"""Command-line interface: ``trypoconv {synth,train,eval,gradcam,params}``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .data import AugmentConfig, Sample, downsample, load_dataset, read_png, resize, write_png
from .gradcam import gradcam, heatmap_image, localization_score, overlay
from .model import EXPECTED_PARAMS, ConfigError, ModelConfig, build_model, count_config_params, count_params
from .synth import SynthConfig, synth_generate, write_dataset
from .train import TrainConfig, evaluate, train
from .weights import WeightFileError, load_weights, read_config, save_weights

log = logging.getLogger("trypoconv")

MANIFEST = "manifest.json"
HISTORY = "history.csv"
WEIGHTS = "model.weights"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _threads(args):
    n = args.threads if args.threads is not None else os.environ.get("TRYPOCONV_THREADS")
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(n))


def _prepare(samples: list[Sample], factor: int) -> list[Sample]:
    return samples if factor == 1 else [downsample(s, factor) for s in samples]


def _write_manifest(out: Path, payload: dict):
    payload = {"tool": "trypoconv", "version": __version__, **payload}
    (out / MANIFEST).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _model_config(args, input_size: int) -> ModelConfig:
    head = args.head or ("flatten" if args.blocks == 5 else "conv")
    cfg = ModelConfig(
        blocks=args.blocks,
        head=head,
        pool_mode=args.pool,
        conv_width=args.conv_width,
        hidden=args.hidden,
        dropout_rate=args.dropout,
        input_size=input_size,
    )
    try:
        return cfg.validate()
    except ConfigError as e:
        raise UsageError(str(e)) from None


# -- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    try:
        cfg = SynthConfig(
            n_trypo=args.n_trypo,
            n_neutral=args.n_neutral,
            size=args.size,
            hole_count_range=tuple(args.hole_count),
            hole_radius_range=tuple(args.hole_radius),
            seed=args.seed,
            emit_masks=not args.no_masks,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    samples, masks = synth_generate(cfg)
    write_dataset(args.out, samples, masks)
    print(f"wrote {cfg.n_trypo} trypophobic and {cfg.n_neutral} neutral images to {args.out}")
    return 0


def _train_settings(args) -> tuple[dict, dict, dict]:
    if args.manifest:
        m = json.loads(Path(args.manifest).read_text())
        return m["model"], m["train"], m["data"]
    if args.data is None:
        raise UsageError("--data is required (or --manifest)")
    if args.size % args.downsample:
        raise UsageError(f"--size {args.size} is not divisible by --downsample {args.downsample}")
    model_cfg = _model_config(args, args.size // args.downsample)
    aug = AugmentConfig.disabled() if args.no_augment else AugmentConfig()
    train_cfg = dict(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch,
        optimizer=args.optimizer,
        seed=args.seed,
        augment=aug.__dict__,
    )
    data = dict(train=str(args.data), val=None if args.val is None else str(args.val), size=args.size, downsample=args.downsample)
    return model_cfg.to_dict(), train_cfg, data


def cmd_train(args) -> int:
    model_d, train_d, data = _train_settings(args)
    try:
        model_cfg = ModelConfig.from_dict(model_d).validate()
        train_cfg = TrainConfig(**{**train_d, "augment": AugmentConfig(**train_d["augment"])})
    except (ConfigError, ValueError) as e:
        raise UsageError(str(e)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set = _prepare(load_dataset(data["train"], data["size"]), data["downsample"])
    val_set = None
    if data["val"]:
        val_set = _prepare(load_dataset(data["val"], data["size"]), data["downsample"])
    model = build_model(model_cfg, np.random.default_rng([train_cfg.seed, 0]))
    n_params = count_params(model)
    _write_manifest(out, {"command": "train", "model": model_d, "train": train_d, "data": data, "param_count": n_params})
    print(f"model: {model_cfg.blocks} blocks, {model_cfg.head} head, {n_params:,} parameters")
    model, history = train(model, train_set, val_set, train_cfg)
    (out / HISTORY).write_text(history.to_csv())
    save_weights(model, out / WEIGHTS)
    last = history[-1]
    print(f"final train_loss {last.train_loss:.4f} train_acc {last.train_acc:.4f}")
    if last.val is not None:
        print(f"final val_acc {last.val.accuracy:.4f} val_auc {last.val.auc_text()}")
    return 0


def _load_model(path):
    try:
        return load_weights(path, read_config(path))
    except FileNotFoundError:
        raise
    except WeightFileError as e:
        raise RuntimeError(str(e)) from None


def cmd_eval(args) -> int:
    model = _load_model(args.weights)
    size = args.size or model.config.input_size * args.downsample
    samples = _prepare(load_dataset(args.data, size, require_both=False), args.downsample)
    if samples[0].image.shape[-1] != model.config.input_size:
        raise RuntimeError(
            f"weights expect input size {model.config.input_size}, data prepared at {samples[0].image.shape[-1]}"
        )
    m = evaluate(model, samples)
    rows = [
        ("accuracy", repr(m.accuracy)),
        ("auc", m.auc_text()),
        ("loss", repr(m.loss)),
        ("tp", m.tp),
        ("fp", m.fp),
        ("tn", m.tn),
        ("fn", m.fn),
        ("n", m.total),
    ]
    for k, v in rows:
        print(f"{k}\t{v}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow([k for k, _ in rows])
            w.writerow([v for _, v in rows])
    return 0


def _image_paths(items) -> list[Path]:
    paths = []
    for item in items:
        p = Path(item)
        paths.extend(sorted(p.rglob("*.png")) if p.is_dir() else [p])
    return paths


def _read_mask(path: Path, size: int) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        m = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    if m.shape != (size, size):
        m = resize(m, size)
    return m >= 0.5


def cmd_gradcam(args) -> int:
    model = _load_model(args.weights)
    tap = args.tap if args.tap is not None else model.config.blocks
    if f"block{tap}" not in model.taps:
        raise UsageError(f"--tap {tap} does not exist for a {model.config.blocks}-block model")
    size = model.config.input_size
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in _image_paths(args.images):
        image = read_png(path)
        image = resize(image, size * args.downsample)
        image = _prepare([Sample(image, 0)], args.downsample)[0].image
        heat = gradcam(model, image, tap)
        write_png(out / f"{path.stem}.heatmap.png", heatmap_image(heat))
        write_png(out / f"{path.stem}.overlay.png", overlay(image, heat, args.alpha))
        if args.masks:
            mask_path = Path(args.masks) / path.name
            if not mask_path.exists():
                log.warning("no mask for %s", path.name)
                continue
            logit = float(model.forward(image)[0, 0])
            rows.append((path.name, logit, localization_score(heat, _read_mask(mask_path, size))))
    if args.masks:
        with open(out / "localization.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["image", "logit", "localization"])
            for name, logit, score in rows:
                w.writerow([name, repr(logit), repr(score)])
        if rows:
            print(f"median localization {float(np.median([r[2] for r in rows])):.4f} over {len(rows)} images")
    print(f"wrote heatmaps to {out}")
    return 0


def cmd_params(args) -> int:
    print("config\tparameters\texpected")
    for k in (5, 4, 3, 2, 1):
        n = count_config_params(ModelConfig.default(k))
        label = "full" if k == 5 else f"{k}_blocks"
        print(f"{label}\t{n:,}\t{EXPECTED_PARAMS[k]:,}")
    if args.blocks is not None:
        cfg = _model_config(args, args.size)
        print(f"custom\t{count_config_params(cfg):,}\t-")
    return 0


# -- parser -----------------------------------------------------------------


def _add_model_flags(p, require_blocks=True):
    p.add_argument("--blocks", type=int, choices=range(1, 6), default=2 if require_blocks else None)
    p.add_argument("--head", choices=("conv", "flatten"), default=None, help="default: flatten for 5 blocks, else conv")
    p.add_argument("--pool", choices=("avg", "max"), default="avg")
    p.add_argument("--conv-width", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--dropout", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trypoconv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-trypo", type=int, default=200)
    p.add_argument("--n-neutral", type=int, default=200)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--hole-count", type=int, nargs=2, default=(10, 20), metavar=("MIN", "MAX"))
    p.add_argument("--hole-radius", type=float, nargs=2, default=(2.0, 4.5), metavar=("MIN", "MAX"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-masks", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a cut VGG16 model")
    p.add_argument("--data")
    p.add_argument("--val")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="rerun exactly the settings recorded in a manifest")
    _add_model_flags(p)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=224, help="resolution images are loaded at")
    p.add_argument("--downsample", type=int, choices=(1, 2, 4), default=1)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate weights on a dataset")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--size", type=int, help="load resolution (default: model input x downsample)")
    p.add_argument("--downsample", type=int, choices=(1, 2, 4), default=1)
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcam", help="write Grad-CAM heatmaps and overlays")
    p.add_argument("--weights", required=True)
    p.add_argument("--images", nargs="+", required=True, help="PNG files or directories")
    p.add_argument("--out", required=True)
    p.add_argument("--tap", type=int, help="block index (default: deepest)")
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--masks", help="directory of masks named like the images")
    p.add_argument("--downsample", type=int, choices=(1, 2, 4), default=1)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_gradcam)

    p = sub.add_parser("params", help="parameter counts of the cut models")
    _add_model_flags(p, require_blocks=False)
    p.add_argument("--size", type=int, default=224)
    p.set_defaults(func=cmd_params, threads=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", None) is None:
        args.threads = None
    try:
        with _threads(args):
            return args.func(args)
    except UsageError as e:
        print(f"trypoconv: error: {e}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ValueError, KeyError) as e:
        print(f"trypoconv: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
