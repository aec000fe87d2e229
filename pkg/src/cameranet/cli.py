"""Command-line entry point.

Subcommands: synth, train, infer, eval, analyze-hist, ablate. All
experiment configuration lives in JSON files; flags only select files,
paths, seeds, and step subsets. Exit codes: 0 success, 2 validation
error, 1 runtime failure. CAMERANET_LOG sets the logging level.
"""

import argparse
import csv
import json
import logging
import math
import os
import statistics
import sys
from pathlib import Path

import numpy as np

from cameranet import isp, metrics, pipeline, synth, training, unet
from cameranet.errors import CameraNetError, ValidationError
from cameranet.image import RawImage
from cameranet.synth import (SynthConfig, generate_scene, load_dataset,
                             load_triplet, preset_config, save_dataset,
                             write_scene)
from cameranet.training import TrainingSchedule
from cameranet.unet import ModuleParams

log = logging.getLogger("cameranet")

HIST_OPERATORS = ("demosaic-roundtrip", "denoise-roundtrip", "enhance",
                  "identity")
DENOISE_SIGMA = 20.0 / 255.0
ABLATION_VARIANTS = ("default", "one_stage", "without_steps12",
                     "without_step3")


def _load_json(path, what):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{what} file missing: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} is not valid JSON: {exc}") from exc


def _synth_config(config_path):
    doc = _load_json(config_path, "config") if config_path else {}
    preset = doc.pop("preset", None)
    overrides = doc.pop("overrides", {})
    meta = {k: doc.pop(k) for k in list(doc)
            if k in ("count", "test_count")}
    if doc:
        raise ValidationError(f"unknown synth config fields: {sorted(doc)}")
    try:
        cfg = (preset_config(preset, **overrides) if preset
               else SynthConfig(**overrides))
    except TypeError as exc:
        raise ValidationError(f"bad synth config field: {exc}") from exc
    return cfg, meta


def cmd_synth(args):
    cfg, meta = _synth_config(args.config)
    count = args.count if args.count is not None else meta.get("count")
    if count is None:
        raise ValidationError("scene count required (--count or config)")
    count = int(count)
    if count < 0:
        raise ValidationError("--count must be non-negative")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(count):
        scene_seed = int(np.random.SeedSequence(
            [args.seed, i]).generate_state(1)[0])
        triplet, params = generate_scene(scene_seed, cfg)
        rec = write_scene(triplet, params, f"scene_{i:04d}", out, cfg,
                          scene_seed)
        records.append(rec)
        log.info("wrote %s", rec.scene_id)
    test_count = int(meta.get("test_count", max(1, count // 5))) if count \
        else 0
    if test_count > count:
        raise ValidationError("test_count exceeds scene count")
    ids = [r.scene_id for r in records]
    split = {"train": ids[:count - test_count], "test": ids[count - test_count:]}
    manifest_path = out / "manifest.json"
    save_dataset(records, manifest_path, split)
    print(f"wrote {count} scenes and {manifest_path}")
    return 0


def _train_config(config_path, seed_flag):
    doc = _load_json(config_path, "config") if config_path else {}
    sched_doc = dict(doc.get("schedule", {}))
    scenario = doc.get("scenario")
    if scenario is not None:
        if scenario not in training.SCENARIO_LAMBDA:
            raise ValidationError(
                f"unknown scenario {scenario!r}; choose from "
                f"{sorted(training.SCENARIO_LAMBDA)}")
        sched_doc.setdefault("lambda_weight",
                             training.SCENARIO_LAMBDA[scenario])
    if seed_flag is not None:
        sched_doc["seed"] = seed_flag
    try:
        schedule = TrainingSchedule(**sched_doc)
        spec1 = unet.restore_spec(**doc.get("restore_spec", {}))
        spec2 = unet.enhance_spec(**doc.get("enhance_spec", {}))
    except TypeError as exc:
        raise ValidationError(f"bad config field: {exc}") from exc
    return schedule, spec1, spec2


def _init_seed(schedule, role_id):
    return int(np.random.SeedSequence(
        [schedule.seed, 100 + role_id]).generate_state(1)[0])


def _load_train_split(manifest_path):
    manifest = load_dataset(manifest_path)
    records = manifest.subset("train") or manifest.records
    if not records:
        raise ValidationError("manifest has no training scenes")
    return [load_triplet(r, manifest.root) for r in records], manifest


def _parse_steps(text):
    try:
        steps = sorted({int(s) for s in text.split(",") if s.strip()})
    except ValueError as exc:
        raise ValidationError(f"bad --steps value {text!r}") from exc
    if not steps or any(s not in (1, 2, 3) for s in steps):
        raise ValidationError("--steps must be a subset of 1,2,3")
    return steps


def cmd_train(args):
    schedule, spec1, spec2 = _train_config(args.config, args.seed)
    steps = _parse_steps(args.steps)
    triplets, _ = _load_train_split(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    logger = training.jsonl_logger(out / "train_log.jsonl")
    (out / "schedule.json").write_text(json.dumps(schedule.to_json(),
                                                  indent=2))

    theta1 = theta2 = None
    if 1 in steps:
        theta1 = unet.build_unet(spec1, _init_seed(schedule, 1), "restore")
        training.train_step1(theta1, spec1, triplets, schedule,
                             log=logger, out_dir=out)
        theta1.save(out / "restore_step1", spec=spec1)
        log.info("step 1 done")
    if 2 in steps:
        theta2 = unet.build_unet(spec2, _init_seed(schedule, 2), "enhance")
        training.train_step2(theta2, spec2, triplets, schedule,
                             log=logger, out_dir=out)
        theta2.save(out / "enhance_step2", spec=spec2)
        log.info("step 2 done")
    if 3 in steps:
        if theta1 is None:
            theta1, spec1 = _load_params(out / "restore_step1", spec1,
                                         "step 1", args.force, schedule, 1,
                                         "restore")
        if theta2 is None:
            theta2, spec2 = _load_params(out / "enhance_step2", spec2,
                                         "step 2", args.force, schedule, 2,
                                         "enhance")
        training.train_step3(theta1, spec1, theta2, spec2, triplets,
                             schedule, log=logger, out_dir=out)
        theta1.save(out / "restore_final", spec=spec1)
        theta2.save(out / "enhance_final", spec=spec2)
        log.info("step 3 done")
    logger.close()
    print(f"trained steps {steps}; checkpoints in {out}")
    return 0


def _load_params(base, default_spec, step_name, force, schedule, role_id,
                 role):
    if Path(str(base) + ".json").exists():
        params, spec = ModuleParams.load(base)
        return params, (spec or default_spec)
    if not force:
        raise ValidationError(
            f"step 3 requires the {step_name} checkpoint at {base}; "
            "rerun with that step or pass --force to start from scratch")
    return unet.build_unet(default_spec, _init_seed(schedule, role_id),
                           role), default_spec


def _load_checkpoint_pair(ckpt_dir):
    ckpt_dir = Path(ckpt_dir)
    pairs = []
    for role, final, staged in (("restore", "restore_final", "restore_step1"),
                                ("enhance", "enhance_final", "enhance_step2")):
        base = ckpt_dir / final
        if not Path(str(base) + ".json").exists():
            base = ckpt_dir / staged
        if not Path(str(base) + ".json").exists():
            raise ValidationError(f"no {role} checkpoint under {ckpt_dir}")
        params, spec = ModuleParams.load(base)
        if spec is None:
            raise ValidationError(f"checkpoint {base} lacks its spec")
        pairs.append((params, spec))
    return pairs


def cmd_infer(args):
    (theta1, spec1), (theta2, spec2) = _load_checkpoint_pair(args.checkpoint)
    raw = RawImage.load(Path(args.raw))
    result = pipeline.run_full(raw, theta1, theta2, spec1, spec2, pad=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.raw).stem
    result.i_rest_xyz.save_f32(out / f"{stem}_restored")
    result.i_enh_srgb.save_f32(out / f"{stem}_enhanced")
    result.i_enh_srgb.save_ppm(out / f"{stem}_enhanced.ppm")
    print(f"wrote outputs for {stem} to {out}")
    return 0


def _scene_metrics(pred_srgb, gt_srgb):
    return {"psnr": metrics.psnr(pred_srgb, gt_srgb),
            "ssim": metrics.ssim(pred_srgb, gt_srgb),
            "color_error_deg": metrics.color_error(pred_srgb, gt_srgb)}


def _fmt(value):
    return "inf" if math.isinf(value) else f"{value:.6f}"


def cmd_eval(args):
    manifest = load_dataset(args.manifest)
    records = manifest.subset("test")
    if not records:
        raise ValidationError("manifest test split is empty")
    (theta1, spec1), (theta2, spec2) = _load_checkpoint_pair(args.checkpoint)
    rows = []
    for rec in records:
        triplet = load_triplet(rec, manifest.root)
        result = pipeline.run_full(triplet.raw, theta1, theta2, spec1, spec2)
        row = {"scene_id": rec.scene_id}
        row.update(_scene_metrics(result.i_enh_srgb, triplet.g_enh))
        rows.append(row)
        log.info("%s psnr=%.3f", rec.scene_id, row["psnr"])
    report = Path(args.report)
    report.parent.mkdir(parents=True, exist_ok=True)
    with open(report, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene_id", "psnr", "ssim", "color_error_deg"])
        for row in rows:
            writer.writerow([row["scene_id"], _fmt(row["psnr"]),
                             _fmt(row["ssim"]),
                             _fmt(row["color_error_deg"])])
    summary = {"count": len(rows)}
    for key in ("psnr", "ssim", "color_error_deg"):
        summary[f"{key}_mean"] = statistics.fmean(r[key] for r in rows)
    summary_path = report.with_suffix(".json")
    summary_path.write_text(json.dumps(summary, indent=2))
    print(f"evaluated {len(rows)} scenes; report {report}, "
          f"summary {summary_path}")
    return 0


def _hist_divergence(op, triplet, index):
    """Divergence introduced by one pipeline operator, measured against
    the clean linear-sRGB rendering of the scene."""
    base = isp.xyz_to_srgb(triplet.g_rest).data
    if op == "identity":
        return 0.0
    if op == "demosaic-roundtrip":
        plane = synth.mosaic(base, triplet.raw.pattern)
        redone = isp.initial_demosaic(plane.astype(np.float32),
                                      triplet.raw.pattern)
        return metrics.histogram_divergence(base, redone.data)
    if op == "denoise-roundtrip":
        rng = np.random.default_rng(np.random.SeedSequence([9000, index]))
        noisy = base + rng.normal(0.0, DENOISE_SIGMA, size=base.shape)
        return metrics.histogram_divergence(base, noisy)
    if op == "enhance":
        return metrics.histogram_divergence(base, triplet.g_enh.data)
    raise ValidationError(f"unknown operator {op!r}; "
                          f"choose from {sorted(HIST_OPERATORS)}")


def cmd_analyze_hist(args):
    manifest = load_dataset(args.manifest)
    ops = [o.strip() for o in args.operators.split(",") if o.strip()]
    if not ops:
        raise ValidationError("no operators requested")
    for op in ops:
        if op not in HIST_OPERATORS:
            raise ValidationError(f"unknown operator {op!r}; "
                                  f"choose from {sorted(HIST_OPERATORS)}")
    report = Path(args.report)
    report.parent.mkdir(parents=True, exist_ok=True)
    with open(report, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene_id"] + ops)
        for index, rec in enumerate(manifest.records):
            triplet = load_triplet(rec, manifest.root)
            row = [f"{_hist_divergence(op, triplet, index):.6f}"
                   for op in ops]
            writer.writerow([rec.scene_id] + row)
    print(f"histogram divergences for {len(manifest.records)} scenes "
          f"-> {report}")
    return 0


# -- ablation ------------------------------------------------------------------

def _eval_variant(forward, records, root):
    vals = {"psnr": [], "ssim": [], "color_error_deg": []}
    for rec in records:
        triplet = load_triplet(rec, root)
        pred = forward(triplet)
        scene = _scene_metrics(pred, triplet.g_enh)
        for k, v in scene.items():
            vals[k].append(v)
    return {k: statistics.fmean(v) for k, v in vals.items()}


def _run_variant(variant, triplets, schedule, spec1, spec2):
    """Train one ablation variant; returns a forward closure mapping a
    triplet to its enhanced sRGB prediction."""
    if variant == "one_stage":
        spec = pipeline.one_stage_spec(spec2)
        theta = unet.build_unet(spec, _init_seed(schedule, 3), "one_stage")
        training.train_one_stage(theta, spec, triplets, schedule)
        return lambda t: pipeline.run_one_stage(t.raw, theta, spec)

    theta1 = unet.build_unet(spec1, _init_seed(schedule, 1), "restore")
    theta2 = unet.build_unet(spec2, _init_seed(schedule, 2), "enhance")
    if variant == "without_steps12":
        # joint from scratch, matched update budget, full lr schedule
        sched = TrainingSchedule(**{
            **schedule.to_json(),
            "epochs_step3": schedule.epochs_step1 + schedule.epochs_step3})
        training.train_step3(theta1, spec1, theta2, spec2, triplets, sched,
                             decaying_lr=True)
    else:
        training.train_step1(theta1, spec1, triplets, schedule)
        training.train_step2(theta2, spec2, triplets, schedule)
        if variant == "default":
            training.train_step3(theta1, spec1, theta2, spec2, triplets,
                                 schedule)
        elif variant != "without_step3":
            raise ValidationError(f"unknown variant {variant!r}")
    return lambda t: pipeline.run_full(t.raw, theta1, theta2, spec1,
                                       spec2).i_enh_srgb


def cmd_ablate(args):
    doc = _load_json(args.config, "config") if args.config else {}
    seeds = doc.get("seeds", [0, 1, 2, 3, 4])
    if args.seed is not None:
        seeds = [args.seed + i for i in range(len(seeds))]
    schedule, spec1, spec2 = _train_config(args.config, None)
    manifest = load_dataset(args.manifest)
    test_records = manifest.subset("test")
    if not test_records:
        raise ValidationError("manifest test split is empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    report = {"variants": list(ABLATION_VARIANTS), "seeds": list(seeds),
              "dry": bool(args.dry), "runs": []}
    if not args.dry:
        triplets, _ = _load_train_split(args.manifest)
        for seed in seeds:
            sched = TrainingSchedule(**{**schedule.to_json(), "seed": seed})
            for variant in ABLATION_VARIANTS:
                forward = _run_variant(variant, triplets, sched, spec1,
                                       spec2)
                scores = _eval_variant(forward, test_records, manifest.root)
                report["runs"].append({"variant": variant, "seed": seed,
                                       **scores})
                log.info("seed %d %s psnr=%.3f", seed, variant,
                         scores["psnr"])

    table = []
    for variant in ABLATION_VARIANTS:
        runs = [r for r in report["runs"] if r["variant"] == variant]
        row = {"variant": variant, "runs": len(runs)}
        for key in ("psnr", "ssim", "color_error_deg"):
            row[key] = statistics.fmean(r[key] for r in runs) if runs \
                else None
        table.append(row)
    report["table"] = table

    report_path = out / "ablation_report.json"
    report_path.write_text(json.dumps(report, indent=2))
    with open(out / "ablation_report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "runs", "psnr", "ssim",
                         "color_error_deg"])
        for row in table:
            writer.writerow([row["variant"], row["runs"]] +
                            ["" if row[k] is None else _fmt(row[k])
                             for k in ("psnr", "ssim", "color_error_deg")])
    print(f"ablation report -> {report_path}")
    return 0


# -- entry point ---------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="cameranet",
        description="Two-stage learned ISP: synthesis, training, "
                    "inference, evaluation, and analysis tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON synthesis config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, help="number of scenes")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run the three-step training protocol")
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint/log directory")
    p.add_argument("--steps", default="1,2,3",
                   help="comma-separated subset of 1,2,3")
    p.add_argument("--seed", type=int, help="override schedule seed")
    p.add_argument("--force", action="store_true",
                   help="allow step 3 without prior checkpoints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run the pipeline on one raw capture")
    p.add_argument("--checkpoint", required=True,
                   help="directory holding trained checkpoints")
    p.add_argument("--out", required=True)
    p.add_argument("raw", help="path to a .raw16 capture")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="metrics over a manifest's test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True, help="CSV output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze-hist",
                       help="per-operator histogram divergence table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True, help="CSV output path")
    p.add_argument("--operators",
                   default="demosaic-roundtrip,denoise-roundtrip,enhance")
    p.set_defaults(func=cmd_analyze_hist)

    p = sub.add_parser("ablate", help="train and compare the four variants")
    p.add_argument("--config", help="JSON training config (plus seeds)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="base seed override")
    p.add_argument("--dry", action="store_true",
                   help="validate inputs and emit an empty report skeleton")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    level = os.environ.get("CAMERANET_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CameraNetError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
