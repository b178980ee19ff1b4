"""Command-line entry point.

Subcommands: synth, train, enhance, eval, align-inspect, gradcheck.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric-domain error.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checks, network, trainer
from .config import resolve_config, write_resolved
from .errors import DataError, NumericDomainError, UsageError
from .image_io import (SceneEntry, TripletManifest, load_image, load_manifest,
                       load_mask, save_image, write_manifest)
from .metrics import ab_mabd, loe, psnr, ssim_metric, warping_error
from .snapshot import load_flow
from .synthesis import SimilarityGate, gate_triplet, synth_triplet
from .visualize import draw_matches

GRADCHECK_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _add_config_args(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", dest="overrides", action="append", metavar="SECTION.KEY=VALUE",
                   help="config override (repeatable)")


def _build_parser():
    parser = _Parser(prog="mvenhance",
                     description="Multi-view low-light enhancement pipeline")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="degrade ground-truth triplets into low-light views")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    _add_config_args(p)

    p = sub.add_parser("train", help="train the enhancement network")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eval-manifest")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--seed", type=int, default=None)
    _add_config_args(p)

    p = sub.add_parser("enhance", help="enhance one triplet's primary view")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--inputs", nargs=3, required=True, metavar="VIEW")
    p.add_argument("--primary", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--out", required=True)
    p.add_argument("--dump-stages", help="directory for per-stage predictions")

    p = sub.add_parser("eval", help="compute quality/consistency metrics")
    p.add_argument("--enhanced")
    p.add_argument("--reference")
    p.add_argument("--sequence", nargs="+", metavar="IMG")
    p.add_argument("--warp-a")
    p.add_argument("--warp-b")
    p.add_argument("--flow")
    p.add_argument("--mask")
    p.add_argument("--batch", help="JSONL job file; evaluated concurrently")
    p.add_argument("--out", required=True)

    p = sub.add_parser("align-inspect", help="dump patch matches for one unit")
    p.add_argument("--inputs", nargs=3, required=True, metavar="VIEW")
    p.add_argument("--primary", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--unit", type=int, default=1)
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    _add_config_args(p)

    p = sub.add_parser("gradcheck", help="run the finite-difference suite")
    p.add_argument("--seed", type=int, default=7)

    return parser


def _cmd_synth(args):
    cfg = resolve_config(args.config, args.overrides)
    if args.seed is not None:
        cfg.synth.seed = args.seed
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out_dir)
    manifest = load_manifest(args.manifest)
    rng = np.random.default_rng(cfg.synth.seed)
    gate = SimilarityGate(threshold=cfg.synth.gate_threshold)
    entries = []
    for entry in manifest.entries:
        gts = [load_image(manifest.resolve(p)) for p in entry.gt]
        if cfg.synth.gate and not gate_triplet(gts, gate):
            print(f"synth: scene '{entry.scene}' rejected by similarity gate",
                  file=sys.stderr)
            continue
        lows, params = synth_triplet(gts, rng, shot_gain=cfg.synth.shot_gain,
                                     read_sigma=cfg.synth.read_sigma)
        low_paths = []
        for i, low in enumerate(lows):
            name = f"{entry.scene}_low{i + 1}.png"
            save_image(low, out_dir / name)
            low_paths.append(name)
        gt_abs = [str(manifest.resolve(p).resolve()) for p in entry.gt]
        entries.append(SceneEntry(scene=entry.scene, gt=gt_abs, low=low_paths,
                                  params=params))
    out_manifest = TripletManifest(split=manifest.split, entries=entries, root=".")
    write_manifest(out_manifest, out_dir / "manifest.jsonl")
    print(f"synth: wrote {len(entries)} scenes to {out_dir}")
    return 0


def _cmd_train(args):
    cfg = resolve_config(args.config, args.overrides)
    if args.seed is not None:
        cfg.train.seed = args.seed
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out_dir)
    scenes = trainer.load_dataset(load_manifest(args.manifest))
    eval_scenes = None
    if args.eval_manifest:
        eval_scenes = trainer.load_dataset(load_manifest(args.eval_manifest))
    result = trainer.train(scenes, cfg.model, cfg.train, out_dir,
                           eval_scenes=eval_scenes, resume=args.resume)
    print(f"train: final loss {result.final_loss:.6f}, log at {result.log_path}")
    return 0


def _load_params(checkpoint):
    params, _, _ = trainer.load_checkpoint(checkpoint)
    return params


def _cmd_enhance(args):
    params = _load_params(args.checkpoint)
    views = [load_image(p) for p in args.inputs]
    result = network.forward(params, views, primary=args.primary - 1)
    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    save_image(network.tensor_to_image(result.restored), out_path)
    Path(str(out_path) + ".config.json").write_text(
        json.dumps({"model": params.config.to_dict(),
                    "primary": args.primary, "inputs": list(args.inputs)}) + "\n")
    if args.dump_stages:
        stage_dir = Path(args.dump_stages)
        stage_dir.mkdir(parents=True, exist_ok=True)
        for t, inter in enumerate(result.intermediates):
            save_image(network.tensor_to_image(inter), stage_dir / f"stage_{t + 1}.png")
    print(f"enhance: wrote {out_path}")
    return 0


def _eval_one(job):
    report = {"psnr": None, "ssim": None, "loe": None,
              "ab": None, "mabd": None, "ewarp": None}
    if job.get("enhanced") or job.get("reference"):
        if not (job.get("enhanced") and job.get("reference")):
            raise UsageError("eval needs both --enhanced and --reference")
        enh = load_image(job["enhanced"])
        ref = load_image(job["reference"])
        report["psnr"] = psnr(enh, ref)
        report["ssim"] = ssim_metric(enh, ref)
        report["loe"] = loe(enh, ref)
    if job.get("sequence"):
        images = [load_image(p) for p in job["sequence"]]
        ab, mabd = ab_mabd(images)
        report["ab"] = ab
        report["mabd"] = mabd
    warp_keys = [k for k in ("warp_a", "warp_b", "flow", "mask") if job.get(k)]
    if warp_keys:
        if len(warp_keys) != 4:
            raise UsageError("eval warping needs --warp-a, --warp-b, --flow and --mask")
        a = load_image(job["warp_a"])
        b = load_image(job["warp_b"])
        flow = load_flow(job["flow"])
        mask = load_mask(job["mask"])
        report["ewarp"] = warping_error(a, b, flow, mask)
    return report


def _cmd_eval(args):
    out_path = Path(args.out)
    if args.batch:
        batch_path = Path(args.batch)
        if not batch_path.is_file():
            raise DataError(f"batch file not found: {batch_path}")
        jobs = [json.loads(ln) for ln in batch_path.read_text().splitlines() if ln.strip()]
        with ThreadPoolExecutor(max_workers=4) as pool:
            reports = list(pool.map(_eval_one, jobs))
        out_path.write_text(json.dumps(reports) + "\n")
    else:
        jobs = [{"enhanced": args.enhanced, "reference": args.reference,
                 "sequence": args.sequence, "warp_a": args.warp_a,
                 "warp_b": args.warp_b, "flow": args.flow, "mask": args.mask}]
        report = _eval_one(jobs[0])
        out_path.write_text(json.dumps(report) + "\n")
    Path(str(out_path) + ".config.json").write_text(json.dumps({"jobs": jobs}) + "\n")
    print(f"eval: wrote {out_path}")
    return 0


def _cmd_align_inspect(args):
    cfg = resolve_config(args.config, args.overrides)
    if args.checkpoint:
        params = _load_params(args.checkpoint)
    else:
        seed = args.seed if args.seed is not None else cfg.train.seed
        params = network.ModelParams.initialize(cfg.model, seed=seed)
    model_cfg = params.config
    cfg.model = model_cfg  # snapshot reflects the configuration actually run
    if not model_cfg.use_inter:
        raise DataError("align-inspect needs a configuration with use_inter enabled")
    if not 1 <= args.unit <= model_cfg.units:
        raise DataError(f"unit {args.unit} out of range 1..{model_cfg.units}")
    views = [load_image(p) for p in args.inputs]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out_dir)
    result = network.forward(params, views, primary=args.primary - 1, collect_align=True)
    records = result.align_records[args.unit - 1]
    report = {"unit": args.unit, "primary": args.primary, "patch": model_cfg.patch,
              "radius": model_cfg.radius, "top_k": model_cfg.top_k, "views": []}
    primary_img = views[args.primary - 1]
    for slot, matches in enumerate(records):
        original_view = result.view_order[slot]
        rows, cols = matches.indices.shape[:2]
        entries = []
        for r in range(rows):
            for c in range(cols):
                entries.append({
                    "patch": [r, c],
                    "indices": matches.indices[r, c].tolist(),
                    "rho": [float(v) for v in matches.rho[r, c]],
                    "count": int(matches.counts[r, c]),
                })
        report["views"].append({"view": original_view + 1, "matches": entries})
        panel = draw_matches(primary_img, views[original_view], matches, model_cfg.patch)
        save_image(panel, out_dir / f"matches_view{original_view + 1}.png")
    (out_dir / "align_report.json").write_text(json.dumps(report) + "\n")
    print(f"align-inspect: wrote report and panels to {out_dir}")
    return 0


def _cmd_gradcheck(args):
    results = checks.full_suite(seed=args.seed)
    worst = max(results.values())
    for name in sorted(results):
        print(f"{name:24s} {results[name]:.3e}")
    print(f"max relative error: {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})")
    if worst > GRADCHECK_TOLERANCE:
        print("gradcheck FAILED", file=sys.stderr)
        return 3
    print("gradcheck passed")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "enhance": _cmd_enhance,
    "eval": _cmd_eval,
    "align-inspect": _cmd_align_inspect,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericDomainError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
