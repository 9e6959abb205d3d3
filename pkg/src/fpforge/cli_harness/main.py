"""fpforge command line: dataset, training, perturbation, evaluation stages.

Heavy imports happen inside command handlers so that --threads can cap the
BLAS pool before numpy is loaded. Exit codes: 0 success, 1 configuration or
validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


class CliError(Exception):
    """Bad command line usage; reported like a config error."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _add_common(p) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int,
                   help="cap BLAS/OpenMP threads (set before numpy loads)")


def build_parser() -> _Parser:
    parser = _Parser(prog="fpforge",
                     description="fingerprint-domain augmentation pipeline")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("gen-data", help="generate the synthetic benchmark")
    _add_common(p)

    p = sub.add_parser("train-extractor", help="train the fingerprint autoencoder")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--no-adv", action="store_true",
                   help="disable the adversarial branch")

    p = sub.add_parser("perturb", help="write an augmented copy of a dataset")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--extractor", required=True, help="extractor checkpoint (.fpck)")
    p.add_argument("--strategy", choices=("scaling", "mixup"), default="scaling")

    p = sub.add_parser("train-detector", help="train a real/fake detector")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--arm", choices=("none", "scaling", "mixup"), default="none",
                   help="augmentation arm")
    p.add_argument("--extractor", help="extractor checkpoint, required unless --arm none")

    p = sub.add_parser("evaluate", help="per-GAN accuracy and AP on the test split")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--detector", required=True,
                   help="detector directory (detector.fpck + meta.json)")

    p = sub.add_parser("spectrum", help="average residual spectrum of a selection")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--label", choices=("real", "fake"), default="fake")
    p.add_argument("--gan", default="any", help="restrict fakes to one GAN id")

    p = sub.add_parser("experiment", help="run a full experiment pipeline")
    _add_common(p)

    return parser


def _load_config(args, default_experiment: str = "cross_gan"):
    from .config import parse_config, validate_config_dict
    if args.config:
        cfg = parse_config(args.config)
        if args.seed is not None or args.out:
            raw = cfg.to_canonical()
            raw["out"] = args.out or cfg.out
            raw["cache_dir"] = cfg.cache_dir
            if args.seed is not None:
                raw["seed"] = args.seed
            cfg = validate_config_dict(raw)
        return cfg
    seed = args.seed if args.seed is not None else 0
    return validate_config_dict({"experiment": default_experiment, "seed": seed,
                                 "out": args.out or ""})


def _require_out(args, fallback: str) -> str:
    out = args.out or fallback
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_gen_data(args) -> int:
    from ..synthgan import make_benchmark
    cfg = _load_config(args)
    out = _require_out(args, "dataset")
    ds = make_benchmark(cfg.dataset_config(), cfg.seed, out)
    print(f"wrote {len(ds.records)} samples to {out}")
    return 0


def _cmd_train_extractor(args) -> int:
    import numpy as np
    from ..detector_eval import psnr
    from ..extractor import (discriminator_accuracy, history_to_csv,
                             reconstruct, save_extractor, train_extractor)
    from ..synthgan import Dataset
    cfg = _load_config(args)
    out = _require_out(args, "extractor")
    dataset = Dataset(args.data)
    cat_idx = {c: i for i, c in enumerate(sorted({r.category_id for r in dataset.records}))}
    reals = dataset.stack(dataset.select(split="train", label="real"))
    fake_recs = dataset.select(split="train", label="fake")
    fakes = dataset.stack(fake_recs)
    labels = np.array([cat_idx[r.category_id] for r in fake_recs])
    ecfg = cfg.extractor_config(adv_enabled=False if args.no_adv else None)
    ae, disc, hist = train_extractor(reals, fakes, labels, ecfg)
    save_extractor(os.path.join(out, "extractor.fpck"), ae, disc)
    with open(os.path.join(out, "history.csv"), "w", encoding="utf-8") as f:
        f.write(history_to_csv(hist))
    test_reals = dataset.stack(dataset.select(split="test", label="real"))
    stats = {
        "disc_category_accuracy": (discriminator_accuracy(ae, disc, fakes, labels)
                                   if disc is not None else None),
        "recon_psnr_test_reals": float(np.median(
            [psnr(a, b) for a, b in zip(test_reals, reconstruct(test_reals, ae))])),
        "final_rec_loss": hist[-1][1],
    }
    with open(os.path.join(out, "stats.json"), "w", encoding="utf-8") as f:
        json.dump(stats, f, sort_keys=True, indent=2)
    print(f"extractor trained: rec_loss={hist[-1][1]:.6f}, "
          f"psnr={stats['recon_psnr_test_reals']:.1f} dB -> {out}")
    return 0


def _cmd_perturb(args) -> int:
    import numpy as np
    from ..augment import augment_batch
    from ..extractor import extract_fingerprint, load_extractor, reconstruct
    from ..synthgan import _IMG_DTYPE, MANIFEST_VERSION, Dataset
    cfg = _load_config(args)
    out = _require_out(args, "perturbed")
    dataset = Dataset(args.data)
    ae, _ = load_extractor(args.extractor)
    pcfg = cfg.perturb_config(args.strategy)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 31]))

    fake_idx = [r.index for r in dataset.records if r.label == "fake"]
    pert_by_index = {}
    images = {}
    chunk = 128
    for lo in range(0, len(fake_idx), chunk):
        sel = fake_idx[lo:lo + chunk]
        batch = dataset.stack([dataset.records[i] for i in sel])
        recons = reconstruct(batch, ae)
        fps = extract_fingerprint(batch, ae)
        outb, report = augment_batch(batch, ae, pcfg, rng, recons=recons,
                                     fingerprints=fps)
        for j, i in enumerate(sel):
            images[i] = outb[j]
            sample = dict(report.samples[j])
            # partner indices are chunk-local; map back to dataset indices
            if "partners" in sample:
                sample["partners"] = [sel[p] for p in sample["partners"]]
            sample.pop("index", None)
            pert_by_index[i] = sample

    img_bytes = dataset.channels * dataset.side * dataset.side * _IMG_DTYPE.itemsize
    records = []
    with open(os.path.join(out, "data.f32"), "wb") as blob:
        for r in dataset.records:
            img = images.get(r.index, None)
            if img is None:
                img = dataset.image(r.index)
            blob.write(np.ascontiguousarray(img, dtype=_IMG_DTYPE).tobytes())
            d = r.to_json()
            d["offset"] = r.index * img_bytes
            if r.index in pert_by_index:
                d["perturbation"] = pert_by_index[r.index]
            records.append(d)
    manifest = {"version": MANIFEST_VERSION, "side": dataset.side,
                "channels": dataset.channels, "records": records}
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, separators=(",", ":"))
    n_applied = sum(1 for s in pert_by_index.values() if s.get("applied"))
    print(f"perturbed {n_applied}/{len(fake_idx)} fakes ({args.strategy}) -> {out}")
    return 0


def _cmd_train_detector(args) -> int:
    from ..extractor import load_extractor
    from ..detector_eval import train_detector
    from ..synthgan import Dataset
    from .experiment import _save_detector
    cfg = _load_config(args)
    if args.arm != "none" and not args.extractor:
        raise CliError("--extractor is required when --arm is not 'none'")
    out = _require_out(args, "detector")
    dataset = Dataset(args.data)
    reals = dataset.stack(dataset.select(split="train", label="real"))
    fakes = dataset.stack(dataset.select(split="train", label="fake"))
    ae = None
    pcfg = None
    if args.arm != "none":
        ae, _ = load_extractor(args.extractor)
        pcfg = cfg.perturb_config(args.arm)
    dcfg = cfg.detector_config()
    det, hist = train_detector(reals, fakes, dcfg, pcfg, ae)
    _save_detector(os.path.join(out, "detector.fpck"), det)
    with open(os.path.join(out, "meta.json"), "w", encoding="utf-8") as f:
        json.dump({"variant": dcfg.variant, "arm": args.arm}, f, sort_keys=True)
    with open(os.path.join(out, "history.csv"), "w", encoding="utf-8") as f:
        f.write("epoch,bce_loss\n")
        for epoch, loss in hist:
            f.write(f"{epoch},{loss:.9g}\n")
    print(f"detector trained ({args.arm}): loss={hist[-1][1]:.6f} -> {out}")
    return 0


def _cmd_evaluate(args) -> int:
    from ..detector_eval import cross_gan_eval
    from ..synthgan import Dataset
    from .experiment import _load_detector
    from .tables import emit_table
    _load_config(args)
    out = _require_out(args, "eval")
    dataset = Dataset(args.data)
    det = _load_detector(args.detector)
    rep = cross_gan_eval(det, dataset)
    text, mirror = emit_table([("detector", rep)])
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as f:
        json.dump({"eval": rep.to_json(), "table": mirror}, f,
                  sort_keys=True, separators=(",", ":"))
    with open(os.path.join(out, "table.txt"), "w", encoding="utf-8") as f:
        f.write(text)
    print(text, end="")
    return 0


def _cmd_spectrum(args) -> int:
    from ..spectrum import average_spectrum, export_csv, export_pgm
    from ..synthgan import Dataset
    _load_config(args)
    out = _require_out(args, "spectrum")
    dataset = Dataset(args.data)
    recs = dataset.select(split=args.split, label=args.label,
                          gan_id=args.gan if args.label == "fake" else "any")
    if not recs:
        raise ValueError(f"no samples match split={args.split} label={args.label} "
                         f"gan={args.gan}")
    spec = average_spectrum(dataset.stack(recs))
    export_pgm(spec, os.path.join(out, "spectrum.pgm"))
    export_csv(spec, os.path.join(out, "spectrum.csv"))
    print(f"averaged {spec.n_images} spectra -> {out}")
    return 0


def _cmd_experiment(args) -> int:
    from .experiment import run_experiment
    cfg = _load_config(args)
    record = run_experiment(cfg)
    print(f"experiment {cfg.experiment} done: {record.artifacts['report']}")
    with open(os.path.join(record.artifacts["out"], "table.txt"), encoding="utf-8") as f:
        print(f.read(), end="")
    return 0


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "train-extractor": _cmd_train_extractor,
    "perturb": _cmd_perturb,
    "train-detector": _cmd_train_detector,
    "evaluate": _cmd_evaluate,
    "spectrum": _cmd_spectrum,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if not args.command:
        parser.print_help()
        return 1
    if getattr(args, "threads", None):
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from .config import ConfigError
    try:
        return _HANDLERS[args.command](args)
    except (CliError, ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
