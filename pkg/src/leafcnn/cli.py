"""Command-line entry point: ``leafcnn {split,train,eval,predict,serve,synth}``.

Exit codes: 0 success, 1 internal error (including divergence), 2 user or
data error.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .checkpoint import checkpoint_digest, load_checkpoint
from .config import load_config
from .datapipe import DatasetManifest, ImageDataset, load_image, scan_dataset, split_dataset
from .errors import DataError, DivergenceError, LeafCNNError
from .evaluation import evaluate_model, format_report
from .model import Sequential
from .service import Predictor, make_server
from .training import fit

log = logging.getLogger("leafcnn")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2


def _overrides(args):
    """Translate flags into a config overlay; ``None`` means the flag was not given."""
    train = {k: v for k, v in (
        ("epochs", getattr(args, "epochs", None)),
        ("batch_size", getattr(args, "batch_size", None)),
        ("loss", getattr(args, "loss", None)),
        ("seed", getattr(args, "seed", None)),
    ) if v is not None}
    out = {}
    if train:
        out["train"] = train
    if getattr(args, "lr", None) is not None:
        out["optimizer"] = {"alpha": args.lr}
    if getattr(args, "no_augment", False):
        out["augment"] = None
    if getattr(args, "crop_boxes", False):
        out["crop_boxes"] = True
    for key in ("data", "manifest", "model", "port"):
        if getattr(args, key, None) is not None:
            out[key] = getattr(args, key)
    return out


def _config(args):
    return load_config(getattr(args, "config", None), _overrides(args))


def cmd_split(args):
    cfg = _config(args)
    if not cfg.data:
        raise DataError("no dataset directory given (--data)")
    seed = args.seed if args.seed is not None else cfg.train.seed
    manifest = split_dataset(scan_dataset(cfg.data), seed=seed)
    manifest.write(args.out)
    for label, counts in manifest.counts().items():
        print(f"{label}: " + " ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def _datasets(cfg, manifest_path):
    manifest = DatasetManifest.read(manifest_path, load_boxes=cfg.crop_boxes)
    kw = {"crop_boxes": cfg.crop_boxes}
    train = ImageDataset(manifest.split("train"), augment_spec=cfg.augment, seed=cfg.train.seed, **kw)
    val = ImageDataset(manifest.split("val"), **kw)
    return train, val


def cmd_train(args):
    from dataclasses import replace

    from .plotting import plot_history

    cfg = _config(args)
    if not cfg.manifest:
        raise DataError("no manifest given (--manifest)")
    out = Path(args.out)
    train_set, val_set = _datasets(cfg, cfg.manifest)
    if len(train_set) == 0:
        raise DataError("empty train split")
    if len(val_set) == 0:
        raise DataError("empty val split")
    model = Sequential(cfg.arch.model_config(), seed=cfg.train.seed)
    train_cfg = replace(cfg.train, checkpoint_path=str(out))
    result = fit(model, train_set, val_set, train_cfg, cfg.optimizer)
    history_path = Path(args.history) if args.history else out.with_suffix(".history.csv")
    result.history.to_csv(history_path)
    if not args.no_figures:
        plot_history(result.history, history_path.with_suffix(".png"))
    best = load_checkpoint(out)
    report = evaluate_model(best, val_set)
    print(f"best epoch {result.best_epoch}, val_loss {result.best_val_loss:.6f}")
    print(format_report(report), end="")
    return EXIT_OK


def cmd_eval(args):
    cfg = _config(args)
    if not cfg.model or not Path(cfg.model).exists():
        raise DataError(f"checkpoint not found: {cfg.model}")
    model = load_checkpoint(cfg.model)
    manifest = DatasetManifest.read(cfg.manifest, load_boxes=cfg.crop_boxes)
    samples = manifest.split(args.split)
    if not samples:
        raise DataError(f"empty {args.split} split")
    dataset = ImageDataset(samples, crop_boxes=cfg.crop_boxes, class_names=model.class_names,
                           size=model.config.input_shape[0])
    report = evaluate_model(model, dataset)
    print(format_report(report, args.format, model.class_names), end="")
    if args.report_dir:
        from .plotting import plot_confusion_matrix

        d = Path(args.report_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "metrics.txt").write_text(format_report(report, "text", model.class_names))
        (d / "metrics.csv").write_text(format_report(report, "csv", model.class_names))
        plot_confusion_matrix(report, d / "confusion_matrix.png", model.class_names)
    return EXIT_OK


def cmd_predict(args):
    from .explain import grad_cam, overlay, write_pfm, write_ppm

    cfg = _config(args)
    if not cfg.model or not Path(cfg.model).exists():
        raise DataError(f"checkpoint not found: {cfg.model}")
    predictor = Predictor(load_checkpoint(cfg.model), checkpoint_digest(cfg.model))
    image = load_image(args.image, size=predictor.model.config.input_shape[0])
    response = predictor.predict_tensor(image)
    print(response.to_json())
    if args.gradcam or args.heatmap or args.figure:
        target = predictor.model.class_names.index(response.label)
        heatmap = grad_cam(predictor.model, image, target)
        if args.gradcam:
            write_ppm(args.gradcam, overlay(image, heatmap))
        if args.heatmap:
            write_pfm(args.heatmap, heatmap.values)
        if args.figure:
            from .plotting import plot_gradcam

            plot_gradcam(image, heatmap, args.figure, title=response.label)
    return EXIT_OK


def cmd_serve(args):
    cfg = _config(args)
    if not cfg.model or not Path(cfg.model).exists():
        raise DataError(f"checkpoint not found: {cfg.model}")
    server = make_server(cfg.model, args.host, cfg.port)
    log.info("serving %s on http://%s:%d/predict", cfg.model, args.host, server.server_address[1])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_synth(args):
    from .synthetic import make_quadrant_blobs, write_image_folder

    x, y = make_quadrant_blobs(args.n, seed=args.seed if args.seed is not None else 0)
    paths = write_image_folder(args.out, x, y)
    print(f"wrote {len(paths)} images under {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="leafcnn", description="Tomato-leaf CNN: split, train, evaluate, explain, serve.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("split", help="assign train/val/test splits and write a manifest")
    common(sp)
    sp.add_argument("--data", help="dataset root with Healthy/ and Diseased/")
    sp.add_argument("--out", required=True, help="manifest path")
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("train", help="fit the model, keeping the best validation checkpoint")
    common(sp)
    sp.add_argument("--manifest")
    sp.add_argument("--out", required=True, help="checkpoint path (.tldc)")
    sp.add_argument("--history", help="history CSV path (default: <out>.history.csv)")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--loss", choices=("categorical_ce", "binary_ce"))
    sp.add_argument("--no-augment", action="store_true")
    sp.add_argument("--crop-boxes", action="store_true", help="crop to the union of YOLO boxes")
    sp.add_argument("--no-figures", action="store_true", help="skip the history plot")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="metrics report on one split")
    common(sp)
    sp.add_argument("--model")
    sp.add_argument("--manifest")
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.add_argument("--format", default="text", choices=("text", "csv"))
    sp.add_argument("--report-dir", help="also write metrics.txt, metrics.csv and confusion_matrix.png here")
    sp.add_argument("--crop-boxes", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("predict", help="classify one image")
    common(sp)
    sp.add_argument("--model")
    sp.add_argument("--image", required=True)
    sp.add_argument("--gradcam", help="write a Grad-CAM overlay (PPM)")
    sp.add_argument("--heatmap", help="write the raw Grad-CAM heatmap (PFM)")
    sp.add_argument("--figure", help="write an input/heatmap/overlay figure (PNG)")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("serve", help="HTTP service with POST /predict")
    common(sp)
    sp.add_argument("--model")
    sp.add_argument("--port", type=int)
    sp.add_argument("--host", default="127.0.0.1")
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("synth", help="write a synthetic quadrant-blob dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=40)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: training diverged at epoch {exc.epoch}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (LeafCNNError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
