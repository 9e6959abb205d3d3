"""Experiment orchestration: staged pipelines with content-addressed caching.

Each expensive stage (dataset, extractor, detector) lives in a cache
directory keyed by the sha256 of exactly the config sections that feed it,
so experiment variants re-use earlier work. Reports exclude timestamps and
absolute paths: report.json is a pure function of (config, seed).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from .. import __version__
from ..augment import augment_batch, force_apply
from ..detector_eval import (Detector, EvalReport, cross_category_eval,
                             cross_gan_eval, new_detector, psnr, train_detector)
from ..extractor import (discriminator_accuracy, history_to_csv, load_extractor,
                         save_extractor, train_extractor, reconstruct)
from ..autodiff import load_checkpoint, save_checkpoint
from ..spectrum import average_spectrum, export_pgm, peak_to_median, relative_l2
from ..synthgan import Dataset, characteristic_bin, make_benchmark
from .config import ARMS, ExperimentConfig
from .tables import emit_table


class StageError(RuntimeError):
    """A pipeline stage failed; the message names the stage and cause."""


def _hash_obj(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunRecord:
    config_hash: str
    version: str
    started_at: str
    finished_at: str
    artifacts: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "artifacts": self.artifacts,
            "report": self.report,
        }


class _Cache:
    def __init__(self, root):
        self.root = str(root)
        os.makedirs(self.root, exist_ok=True)

    def dir_for(self, kind: str, key: str) -> str:
        return os.path.join(self.root, f"{kind}-{key}")

    @staticmethod
    def done(d: str) -> bool:
        return os.path.exists(os.path.join(d, "_done"))

    @staticmethod
    def mark(d: str) -> None:
        with open(os.path.join(d, "_done"), "w", encoding="utf-8") as f:
            f.write("ok\n")


def _run_stage(name: str, fn):
    try:
        return fn()
    except Exception as e:
        raise StageError(f"stage {name!r} failed: {e}") from e


def _category_index(dataset: Dataset) -> dict:
    return {c: i for i, c in enumerate(sorted({r.category_id for r in dataset.records}))}


def _stage_dataset(cache: _Cache, cfg: ExperimentConfig):
    ds_cfg = cfg.dataset_config()
    # profiles/categories are code-level defaults, not config keys; hash the
    # resolved definitions so editing them invalidates cached datasets
    key = _hash_obj({
        "dataset": cfg.to_canonical()["dataset"],
        "profiles": [asdict(p) for p in ds_cfg.profiles],
        "categories": [asdict(c) for c in ds_cfg.categories],
        "seed": cfg.seed,
    })
    d = cache.dir_for("ds", key)

    def build():
        if not cache.done(d):
            make_benchmark(cfg.dataset_config(), cfg.seed, d)
            cache.mark(d)
        return Dataset(d), key

    return _run_stage("gen-data", build)


def _stage_extractor(cache: _Cache, cfg: ExperimentConfig, dataset: Dataset,
                     ds_key: str, adv_enabled=None):
    ecfg = cfg.extractor_config(adv_enabled)
    key = _hash_obj({"extractor": asdict(ecfg), "dataset": ds_key})
    d = cache.dir_for("ex", key)

    def build():
        if not cache.done(d):
            os.makedirs(d, exist_ok=True)
            cat_idx = _category_index(dataset)
            reals = dataset.stack(dataset.select(split="train", label="real"))
            fake_recs = dataset.select(split="train", label="fake")
            fakes = dataset.stack(fake_recs)
            labels = np.array([cat_idx[r.category_id] for r in fake_recs])
            ae, disc, hist = train_extractor(reals, fakes, labels, ecfg)
            save_extractor(os.path.join(d, "extractor.fpck"), ae, disc)
            with open(os.path.join(d, "history.csv"), "w", encoding="utf-8") as f:
                f.write(history_to_csv(hist))
            test_reals = dataset.stack(dataset.select(split="test", label="real"))
            recon = reconstruct(test_reals, ae)
            stats = {
                "disc_category_accuracy": (
                    discriminator_accuracy(ae, disc, fakes, labels)
                    if disc is not None else None),
                "n_categories": len(cat_idx),
                "recon_psnr_test_reals": float(np.median(
                    [psnr(a, b) for a, b in zip(test_reals, recon)])),
                "final_rec_loss": hist[-1][1],
            }
            with open(os.path.join(d, "stats.json"), "w", encoding="utf-8") as f:
                json.dump(stats, f, sort_keys=True)
            cache.mark(d)
        with open(os.path.join(d, "stats.json"), "r", encoding="utf-8") as f:
            stats = json.load(f)
        return d, key, stats

    return _run_stage("train-extractor", build)


def _save_detector(path, det: Detector) -> None:
    save_checkpoint(path, {f"det.{k}": v.data for k, v in det.params().items()})


def _load_detector(stage_dir) -> Detector:
    with open(os.path.join(stage_dir, "meta.json"), "r", encoding="utf-8") as f:
        variant = json.load(f)["variant"]
    det = new_detector(0, variant)
    arrays = load_checkpoint(os.path.join(stage_dir, "detector.fpck"))
    det.load_params({k[4:]: v for k, v in arrays.items() if k.startswith("det.")})
    return det


def _stage_detector(cache: _Cache, cfg: ExperimentConfig, dataset: Dataset,
                    ex_dir: str, ex_key: str, arm: str, train_cats=None,
                    variant=None):
    if arm not in ARMS:
        raise StageError(f"stage 'train-detector' failed: unknown arm {arm!r}")
    dcfg = cfg.detector_config(variant)
    key = _hash_obj({
        "detector": asdict(dcfg), "arm": arm,
        "perturb": cfg.to_canonical()["perturb"] if arm != "none" else None,
        "extractor": ex_key if arm != "none" else None,
        "train_cats": sorted(train_cats) if train_cats else "all",
    })
    d = cache.dir_for("det", key)

    def build():
        if not cache.done(d):
            os.makedirs(d, exist_ok=True)
            real_recs = dataset.select(split="train", label="real")
            fake_recs = dataset.select(split="train", label="fake")
            if train_cats:
                real_recs = [r for r in real_recs if r.category_id in train_cats]
                fake_recs = [r for r in fake_recs if r.category_id in train_cats]
            reals = dataset.stack(real_recs)
            fakes = dataset.stack(fake_recs)
            ae = None
            pcfg = None
            if arm != "none":
                ae, _ = load_extractor(os.path.join(ex_dir, "extractor.fpck"))
                pcfg = cfg.perturb_config(arm)
            det, hist = train_detector(reals, fakes, dcfg, pcfg, ae)
            _save_detector(os.path.join(d, "detector.fpck"), det)
            with open(os.path.join(d, "meta.json"), "w", encoding="utf-8") as f:
                json.dump({"variant": dcfg.variant, "arm": arm}, f, sort_keys=True)
            with open(os.path.join(d, "history.csv"), "w", encoding="utf-8") as f:
                f.write("epoch,bce_loss\n")
                for epoch, loss in hist:
                    f.write(f"{epoch},{loss:.9g}\n")
            cache.mark(d)
        return _load_detector(d), d

    return _run_stage("train-detector", build)


def _seen_profile(cfg: ExperimentConfig):
    ds_cfg = cfg.dataset_config()
    seen_id = ds_cfg.seen_gan_ids[0]
    for p in ds_cfg.profiles:
        if p.gan_id == seen_id:
            return p
    raise ValueError(f"seen GAN {seen_id!r} missing from profiles")


def _mechanism(cfg: ExperimentConfig, dataset: Dataset, ex_dir: str, fig_dir):
    """Diagnostic measurements: spectra figures, perturbation PSNR, spectral
    distances, and the seen profile's peak-to-median ratios."""
    os.makedirs(fig_dir, exist_ok=True)
    profile = _seen_profile(cfg)
    ae, _ = load_extractor(os.path.join(ex_dir, "extractor.fpck"))
    reals = dataset.stack(dataset.select(split="test", label="real"))
    fakes = dataset.stack(dataset.select(split="test", label="fake",
                                         gan_id=profile.gan_id))
    recons = reconstruct(fakes, ae)
    fps = fakes - recons

    perturbed = {}
    psnr_median = {}
    for arm in ("scaling", "mixup"):
        pcfg = force_apply(cfg.perturb_config(arm))
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 29]))
        out = np.empty_like(fakes)
        chunk = 128
        for i in range(0, len(fakes), chunk):
            sel = slice(i, min(i + chunk, len(fakes)))
            out[sel], _ = augment_batch(fakes[sel], ae, pcfg, rng,
                                        recons=recons[sel], fingerprints=fps[sel])
        perturbed[arm] = out
        psnr_median[arm] = float(np.median([psnr(a, b) for a, b in zip(fakes, out)]))

    spec_real = average_spectrum(reals)
    spec_fake = average_spectrum(fakes)
    spec_arm = {arm: average_spectrum(p) for arm, p in perturbed.items()}

    export_pgm(spec_real, os.path.join(fig_dir, "spectrum_real.pgm"))
    export_pgm(spec_fake, os.path.join(fig_dir, "spectrum_seen_fake.pgm"))
    for arm, s in spec_arm.items():
        export_pgm(s, os.path.join(fig_dir, f"spectrum_{arm}.pgm"))

    cb = characteristic_bin(profile, dataset.side)
    return {
        "seen_gan": profile.gan_id,
        "characteristic_bin": list(cb),
        "peak_to_median_fake": peak_to_median(spec_fake, cb),
        "peak_to_median_real": peak_to_median(spec_real, cb),
        "psnr_median": psnr_median,
        "spectral_rel_l2": {arm: relative_l2(spec_fake, s)
                            for arm, s in spec_arm.items()},
    }


def _summarize_cross_gan(cfg: ExperimentConfig, arm_reports: dict) -> dict:
    seen = list(cfg.dataset_config().seen_gan_ids)
    unseen = list(cfg.dataset_config().unseen_gan_ids)
    summary = {}
    for arm, rep in arm_reports.items():
        seen_acc, seen_ap = rep.mean_over(seen)
        unseen_acc, unseen_ap = rep.mean_over(unseen)
        summary[arm] = {
            "seen_acc": seen_acc, "seen_ap": seen_ap,
            "unseen_acc": unseen_acc, "unseen_ap": unseen_ap,
        }
    base = summary.get("none")
    deltas = {}
    if base:
        for arm in arm_reports:
            if arm == "none":
                continue
            deltas[arm] = {
                "unseen_acc": summary[arm]["unseen_acc"] - base["unseen_acc"],
                "unseen_ap": summary[arm]["unseen_ap"] - base["unseen_ap"],
            }
    return {"arms": summary, "deltas_vs_none": deltas}


def run_experiment(cfg: ExperimentConfig) -> RunRecord:
    """Execute the configured experiment pipeline; returns the RunRecord.

    Writes report.json (deterministic bytes), table.txt, run_record.json,
    and figures/ under the output directory.
    """
    started = _utcnow()
    out = cfg.out or os.path.join("runs", f"{cfg.experiment}-seed{cfg.seed}")
    os.makedirs(out, exist_ok=True)
    cache_root = cfg.cache_dir or os.path.join(os.path.dirname(os.path.abspath(out)),
                                               "fpforge-cache")
    cache = _Cache(cache_root)
    artifacts = {"out": os.path.abspath(out), "cache": os.path.abspath(cache_root)}

    dataset, ds_key = _stage_dataset(cache, cfg)
    artifacts["dataset"] = dataset.root
    report = {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": cfg.to_canonical(),
        "version": __version__,
    }
    table_rows = []

    if cfg.experiment in ("cross_gan", "cross_category"):
        ex_dir, ex_key, ex_stats = _stage_extractor(cache, cfg, dataset, ds_key)
        artifacts["extractor"] = ex_dir
        report["extractor_stats"] = ex_stats
        gan_ids = [p.gan_id for p in cfg.dataset_config().profiles]
        train_cat = None
        if cfg.experiment == "cross_category":
            cat_ids = [c.category_id for c in cfg.dataset_config().categories]
            train_cat = cfg.train_category or cat_ids[0]
            eval_cats = [c for c in cat_ids if c != train_cat]
            report["train_category"] = train_cat
        arm_reports = {}
        for arm in ARMS:
            det, det_dir = _stage_detector(
                cache, cfg, dataset, ex_dir, ex_key, arm,
                train_cats=[train_cat] if train_cat else None)
            artifacts[f"detector_{arm}"] = det_dir

            def evaluate(det=det, arm=arm):
                if cfg.experiment == "cross_gan":
                    return cross_gan_eval(det, dataset, expected_gans=gan_ids,
                                          config={"arm": arm})
                return cross_category_eval(det, dataset,
                                           cfg.dataset_config().seen_gan_ids[0],
                                           eval_cats, config={"arm": arm})

            rep = _run_stage("evaluate", evaluate)
            arm_reports[arm] = rep
            table_rows.append((arm, rep))
        report["arms"] = {a: r.to_json() for a, r in arm_reports.items()}
        if cfg.experiment == "cross_gan":
            report["summary"] = _summarize_cross_gan(cfg, arm_reports)
            report["mechanism"] = _run_stage("spectrum", lambda: _mechanism(
                cfg, dataset, ex_dir, os.path.join(out, "figures")))
        else:
            report["summary"] = {
                arm: {"mean_acc": r.mean_acc, "mean_ap": r.mean_ap}
                for arm, r in arm_reports.items()}

    elif cfg.experiment == "category_sweep":
        ex_dir, ex_key, ex_stats = _stage_extractor(cache, cfg, dataset, ds_key)
        artifacts["extractor"] = ex_dir
        report["extractor_stats"] = ex_stats
        gan_ids = [p.gan_id for p in cfg.dataset_config().profiles]
        cat_ids = [c.category_id for c in cfg.dataset_config().categories]
        rows = {}
        for count in cfg.category_counts:
            cats = cat_ids[:count]
            for arm in ARMS:
                det, det_dir = _stage_detector(cache, cfg, dataset, ex_dir, ex_key,
                                               arm, train_cats=cats)
                rep = _run_stage("evaluate", lambda det=det, arm=arm: cross_gan_eval(
                    det, dataset, expected_gans=gan_ids, config={"arm": arm}))
                label = f"{count}cat/{arm}"
                rows[label] = rep
                table_rows.append((label, rep))
                artifacts[f"detector_{label}"] = det_dir
        report["rows"] = {k: r.to_json() for k, r in rows.items()}

    elif cfg.experiment == "ablation_adv":
        gan_ids = [p.gan_id for p in cfg.dataset_config().profiles]
        rows = {}
        for label, adv in (("with_adv", True), ("without_adv", False)):
            ex_dir, ex_key, ex_stats = _stage_extractor(cache, cfg, dataset,
                                                        ds_key, adv_enabled=adv)
            det, det_dir = _stage_detector(cache, cfg, dataset, ex_dir, ex_key,
                                           cfg.ablation_strategy)
            rep = _run_stage("evaluate", lambda det=det: cross_gan_eval(
                det, dataset, expected_gans=gan_ids,
                config={"arm": cfg.ablation_strategy, "adv_enabled": adv}))
            rows[label] = rep
            table_rows.append((label, rep))
            artifacts[f"extractor_{label}"] = ex_dir
            artifacts[f"detector_{label}"] = det_dir
            report.setdefault("extractor_stats", {})[label] = ex_stats
        report["rows"] = {k: r.to_json() for k, r in rows.items()}
        report["summary"] = {
            k: {"mean_acc": r.mean_acc, "mean_ap": r.mean_ap,
                "disc_category_accuracy":
                    report["extractor_stats"][k]["disc_category_accuracy"]}
            for k, r in rows.items()}

    elif cfg.experiment == "ablation_detector":
        ex_dir, ex_key, ex_stats = _stage_extractor(cache, cfg, dataset, ds_key)
        artifacts["extractor"] = ex_dir
        report["extractor_stats"] = ex_stats
        gan_ids = [p.gan_id for p in cfg.dataset_config().profiles]
        rows = {}
        for variant in ("smaller", "small", "larger"):
            for arm in ARMS:
                det, det_dir = _stage_detector(cache, cfg, dataset, ex_dir, ex_key,
                                               arm, variant=variant)
                rep = _run_stage("evaluate", lambda det=det, arm=arm: cross_gan_eval(
                    det, dataset, expected_gans=gan_ids,
                    config={"arm": arm, "variant": variant}))
                label = f"{variant}/{arm}"
                rows[label] = rep
                table_rows.append((label, rep))
                artifacts[f"detector_{label}"] = det_dir
        report["rows"] = {k: r.to_json() for k, r in rows.items()}

    else:
        raise StageError(f"stage 'plan' failed: unknown experiment {cfg.experiment!r}")

    text, mirror = emit_table(table_rows)
    report["table"] = mirror

    report_path = os.path.join(out, "report.json")
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(report, f, sort_keys=True, separators=(",", ":"))
    with open(os.path.join(out, "table.txt"), "w", encoding="utf-8") as f:
        f.write(text)
    artifacts["report"] = os.path.abspath(report_path)
    artifacts["table"] = os.path.abspath(os.path.join(out, "table.txt"))

    record = RunRecord(
        config_hash=_hash_obj(cfg.to_canonical()),
        version=__version__,
        started_at=started,
        finished_at=_utcnow(),
        artifacts=artifacts,
        report=report,
    )
    with open(os.path.join(out, "run_record.json"), "w", encoding="utf-8") as f:
        json.dump(record.to_json(), f, sort_keys=True, indent=2)
    return record
