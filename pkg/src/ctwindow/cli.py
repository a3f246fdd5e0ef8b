"""Command-line surface.

Subcommands: window, dice, compare, sweep, phantom, augment. Every command
is deterministic given its arguments and config seeds; reruns produce
byte-identical outputs. CTWINDOW_THREADS caps worker threads (0 = auto).
"""

import argparse
import json
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from .augmentation import AugmentConfig, augment_pair
from .metrics import multi_label_dice, read_dice_csv, write_dice_csv
from .simulation import (ExperimentConfig, FitParams, OrganSpec, PhantomConfig,
                         StrategySpec, derive_seed, generate_phantom,
                         reference_experiment, run_experiment, write_sweep_csv)
from .stats import compare_methods, write_comparison_csv, write_comparison_metadata
from .volume import (CtVolume, LabelVolume, extract_slice, load_label_volume,
                     load_volume, save_label_volume, save_volume, stack_slices)
from .windowing import (STRATEGIES, SwnParams, WindowSampler, apply_window,
                        normalize_for_testing, normalize_for_training, preset)


class ConfigError(ValueError):
    pass


def _check_keys(obj, context, required, optional=()):
    if not isinstance(obj, dict):
        raise ConfigError(f"{context}: expected a JSON object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(f"{context}: missing keys {sorted(missing)}")


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def parse_strategy(obj, context="strategy"):
    _check_keys(obj, context, required=("strategy",), optional=("x", "y", "seed"))
    if obj["strategy"] not in STRATEGIES:
        raise ConfigError(f"{context}: unknown strategy {obj['strategy']!r}")
    return StrategySpec(obj["strategy"], x=float(obj.get("x", 0.0)),
                        y=float(obj.get("y", 0.0)), seed=obj.get("seed"))


def parse_shifts(obj, context="shifts"):
    if isinstance(obj, list):
        if not obj:
            raise ConfigError(f"{context}: shift list must be nonempty")
        return [int(s) for s in obj]
    _check_keys(obj, context, required=("start", "stop", "step"))
    start, stop, step = int(obj["start"]), int(obj["stop"]), int(obj["step"])
    if step <= 0 or stop < start:
        raise ConfigError(f"{context}: need step > 0 and stop >= start")
    return list(range(start, stop + 1, step))


def parse_phantom(obj, context="phantom"):
    _check_keys(obj, context, required=("dims", "organs"),
                optional=("spacing_mm", "background_hu", "background_noise_std", "seed"))
    organs = []
    for i, org in enumerate(obj["organs"]):
        octx = f"{context}.organs[{i}]"
        _check_keys(org, octx,
                    required=("label_id", "label_name", "center", "radii", "mean_hu"),
                    optional=("noise_std",))
        organs.append(OrganSpec(int(org["label_id"]), str(org["label_name"]),
                                tuple(org["center"]), tuple(org["radii"]),
                                float(org["mean_hu"]), float(org.get("noise_std", 0.0))))
    return PhantomConfig(dims=tuple(obj["dims"]), organs=organs,
                         background_hu=float(obj.get("background_hu", -1000.0)),
                         background_noise_std=float(obj.get("background_noise_std", 0.0)),
                         spacing=tuple(obj.get("spacing_mm", (1.0, 1.0, 1.0))),
                         seed=int(obj.get("seed", 0)))


def parse_fit(obj, context="fit"):
    _check_keys(obj, context, required=(),
                optional=("epochs", "percentiles", "band_epsilon", "tie_break"))
    defaults = FitParams()
    return FitParams(epochs=int(obj.get("epochs", defaults.epochs)),
                     percentiles=tuple(obj.get("percentiles", defaults.percentiles)),
                     band_epsilon=float(obj.get("band_epsilon", defaults.band_epsilon)),
                     tie_break=str(obj.get("tie_break", defaults.tie_break)))


def parse_experiment(cfg):
    _check_keys(cfg, "config", required=("seed", "phantom", "strategies", "shifts"),
                optional=("n_train", "n_test", "fit", "slice_axis"))
    strategies = [parse_strategy(s, f"strategies[{i}]")
                  for i, s in enumerate(cfg["strategies"])]
    if not strategies:
        raise ConfigError("config: strategies must be nonempty")
    return ExperimentConfig(
        phantom=parse_phantom(cfg["phantom"]),
        strategies=strategies,
        shifts=parse_shifts(cfg["shifts"]),
        n_train=int(cfg.get("n_train", 5)),
        n_test=int(cfg.get("n_test", 5)),
        fit=parse_fit(cfg.get("fit", {})),
        seed=int(cfg["seed"]),
        slice_axis=int(cfg.get("slice_axis", 2)),
    )


def parse_augment(obj, context="augment"):
    _check_keys(obj, context, required=("crop_size",),
                optional=("max_rotation_deg", "max_translation",
                          "pad_value_image", "pad_value_label", "seed"))
    defaults = AugmentConfig(crop_size=(1, 1))
    return AugmentConfig(
        crop_size=tuple(obj["crop_size"]),
        max_rotation_deg=float(obj.get("max_rotation_deg", defaults.max_rotation_deg)),
        max_translation=tuple(obj.get("max_translation", defaults.max_translation)),
        pad_value_image=float(obj.get("pad_value_image", defaults.pad_value_image)),
        pad_value_label=int(obj.get("pad_value_label", defaults.pad_value_label)),
        seed=int(obj.get("seed", 0)),
    )


def experiment_to_config(exp):
    """Inverse of parse_experiment; used to print the default config."""
    return {
        "seed": exp.seed,
        "slice_axis": exp.slice_axis,
        "n_train": exp.n_train,
        "n_test": exp.n_test,
        "phantom": {
            "dims": list(exp.phantom.dims),
            "spacing_mm": list(exp.phantom.spacing),
            "background_hu": exp.phantom.background_hu,
            "background_noise_std": exp.phantom.background_noise_std,
            "organs": [
                {"label_id": o.label_id, "label_name": o.label_name,
                 "center": list(o.center), "radii": list(o.radii),
                 "mean_hu": o.mean_hu, "noise_std": o.noise_std}
                for o in exp.phantom.organs
            ],
        },
        "strategies": [
            {k: v for k, v in asdict(s).items() if not (k == "seed" and v is None)}
            for s in exp.strategies
        ],
        "fit": {"epochs": exp.fit.epochs, "percentiles": list(exp.fit.percentiles),
                "band_epsilon": exp.fit.band_epsilon, "tie_break": exp.fit.tie_break},
        "shifts": {"start": min(exp.shifts), "stop": max(exp.shifts),
                   "step": exp.shifts[1] - exp.shifts[0] if len(exp.shifts) > 1 else 1},
    }


def cmd_window(args):
    volume = load_volume(args.input)
    axis = args.slice_axis
    planes = []
    if args.strategy == "SWN" and args.mode == "train":
        # one fresh window per slice, exactly what training normalization draws
        sampler = WindowSampler(SwnParams(args.x, args.y, seed=args.seed))
        for index in range(volume.dims[axis]):
            window = sampler.sample()
            out = apply_window(extract_slice(volume, axis, index), window)
            print(json.dumps({"slice": index, "level": window.level,
                              "half_width": window.half_width}))
            planes.append(out.values)
    else:
        for index in range(volume.dims[axis]):
            s = extract_slice(volume, axis, index)
            if args.mode == "train":
                out = normalize_for_training(s, args.strategy)
            else:
                out = normalize_for_testing(s, args.strategy)
            planes.append(out.values)
        window = preset("whole_range" if args.strategy == "WIR" else "soft_tissue")
        print(json.dumps({"strategy": args.strategy, "level": window.level,
                          "half_width": window.half_width}))
    save_volume(CtVolume(stack_slices(planes, axis), spacing=volume.spacing), args.output)
    return 0


def cmd_dice(args):
    pred = load_label_volume(args.pred)
    truth = load_label_volume(args.truth)
    if args.labels:
        labels = [int(x) for x in args.labels.split(",")]
    else:
        labels = sorted(lid for lid in truth.label_names if lid != 0)
    subject = args.subject
    if subject is None:
        subject = os.path.basename(args.truth)
        if subject.endswith(".ctv.json"):
            subject = subject[: -len(".ctv.json")]
    records = multi_label_dice(pred, truth, labels, subject_id=subject)
    write_dice_csv(records, args.output)
    return 0


def cmd_compare(args):
    tables = {}
    for item in args.table:
        if "=" not in item:
            raise ConfigError(f"--table expects name=path, got {item!r}")
        name, path = item.split("=", 1)
        if name in tables:
            raise ConfigError(f"duplicate method name {name!r}")
        tables[name] = read_dice_csv(path)
    rows = compare_methods(tables, args.reference, alpha=args.alpha, m=args.m)
    write_comparison_csv(rows, args.output)
    meta_path = (args.output[:-4] if args.output.endswith(".csv") else args.output) + ".meta.json"
    write_comparison_metadata(meta_path, args.reference, args.alpha, args.m)
    return 0


def cmd_sweep(args):
    if args.default_config:
        print(json.dumps(experiment_to_config(reference_experiment()), indent=2))
        return 0
    if not args.config or not args.output:
        raise ConfigError("sweep requires a config path and -o output.csv")
    exp = parse_experiment(_load_json(args.config))
    rows, _ = run_experiment(exp)
    write_sweep_csv(rows, args.output)
    return 0


def cmd_phantom(args):
    exp = parse_experiment(_load_json(args.config))
    os.makedirs(args.out_dir, exist_ok=True)
    for role, role_key, count in (("train", 0, exp.n_train), ("test", 1, exp.n_test)):
        for i in range(count):
            cfg = replace(exp.phantom, seed=derive_seed(exp.seed, role_key, i))
            vol, lab = generate_phantom(cfg)
            stem = os.path.join(args.out_dir, f"{role}_{i:02d}")
            save_volume(vol, stem + "_image.ctv.json")
            save_label_volume(lab, stem + "_labels.ctv.json", spacing=cfg.spacing)
    return 0


def cmd_augment(args):
    raw = _load_json(args.config)
    cfg = parse_augment(raw.get("augment", raw))
    volume = load_volume(args.image)
    labels = load_label_volume(args.labels)
    if volume.dims != labels.dims:
        raise ConfigError(f"image/label dims mismatch: {volume.dims} vs {labels.dims}")
    axis = args.slice_axis
    rng = np.random.default_rng(cfg.seed)
    img_planes, lab_planes = [], []
    for index in range(volume.dims[axis]):
        s = extract_slice(volume, axis, index)
        plane = np.take(labels.voxels, index, axis=axis)
        out_img, out_lab = augment_pair(s, plane, cfg, rng)
        img_planes.append(out_img.values)
        lab_planes.append(out_lab)
    save_volume(CtVolume(stack_slices(img_planes, axis), spacing=volume.spacing),
                args.out_image)
    save_label_volume(LabelVolume(stack_slices(lab_planes, axis),
                                  label_names=labels.label_names),
                      args.out_labels, spacing=volume.spacing)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ctwindow",
        description="CT window normalization, segmentation metrics, paired "
                    "statistics, and the intensity-shift robustness sweep.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("window", help="normalize a CTV volume slice-wise")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--x", type=float, default=0.0, help="sigma of the level draw (SWN)")
    p.add_argument("--y", type=float, default=0.0, help="sigma of the width draw (SWN)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("train", "test"), default="train")
    p.add_argument("--slice-axis", type=int, default=2, choices=(0, 1, 2))
    p.set_defaults(func=cmd_window)

    p = sub.add_parser("dice", help="per-label dice between two label CTVs")
    p.add_argument("pred")
    p.add_argument("truth")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--labels", help="comma-separated label ids (default: all in truth)")
    p.add_argument("--subject", help="subject id for the CSV (default: truth file stem)")
    p.set_defaults(func=cmd_dice)

    p = sub.add_parser("compare", help="Wilcoxon + FDR comparison of dice tables")
    p.add_argument("--table", action="append", required=True, metavar="NAME=CSV")
    p.add_argument("--reference", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--m", type=int, default=12, help="comparison count for FDR")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="phantom suite, band fit, and shift sweep")
    p.add_argument("config", nargs="?")
    p.add_argument("-o", "--output")
    p.add_argument("--default-config", action="store_true",
                   help="print the bundled reference config and exit")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("phantom", help="write a phantom suite as CTV files")
    p.add_argument("config")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("augment", help="paired spatial augmentation of a CTV pair")
    p.add_argument("image")
    p.add_argument("labels")
    p.add_argument("config")
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-labels", required=True)
    p.add_argument("--slice-axis", type=int, default=2, choices=(0, 1, 2))
    p.set_defaults(func=cmd_augment)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"ctwindow: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
