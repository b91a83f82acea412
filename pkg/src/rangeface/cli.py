"""Batch command-line front end.

Stages exchange data only through files::

    rangeface synth --subjects 10 --scans 4 --out data/
    rangeface preprocess --manifest data/manifest.tsv --out images/
    rangeface describe --images images/ --out descriptors/
    rangeface evaluate --descriptors descriptors/ --manifest data/manifest.tsv --protocol LOO
    rangeface match descriptors/s00_01.suld descriptors/s00_02.suld
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._fileio import atomic_write
from .cloud_io import POSE_TAGS, ManifestEntry, load_manifest, load_xyz, save_manifest, save_xyz, synth_face
from .config import build_config, parse_override_flags, read_config
from .matching import PROTOCOLS, FaceFeatures, as_matrix, evaluate, get_protocol, reports_to_json, similarity
from .pipeline import PipelineConfig, describe_image, reference_scans
from .range_image import load_range_image, preprocess_scan, save_range_image
from .suld import load_descriptors, save_descriptors

log = logging.getLogger("rangeface")


class CommandError(Exception):
    pass


def scan_stem(subject_id: str, scan_id: int) -> str:
    return f"{subject_id}_{scan_id:02d}"


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# --- synth -----------------------------------------------------------------

def cmd_synth(args, cfg: PipelineConfig) -> int:
    if args.subjects < 1 or args.scans < 1:
        raise CommandError("--subjects and --scans must be >= 1")
    if args.scans > len(POSE_TAGS):
        raise CommandError(f"--scans must be <= {len(POSE_TAGS)}")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(f"cannot create {out}: {exc}") from None
    rng = np.random.default_rng(args.seed)
    entries = []
    for i in range(args.subjects):
        subject = f"s{i:03d}"
        identity = int(rng.integers(0, 2**31 - 1))
        for scan in range(1, args.scans + 1):
            noise_seed = int(rng.integers(0, 2**31 - 1))
            if scan == 1:
                pose = (0.0, 0.0, 0.0)
            else:
                pose = tuple(float(a) for a in rng.uniform(-args.jitter, args.jitter, size=3))
            cloud = synth_face(identity, pose, args.noise, noise_seed=noise_seed)
            path = out / f"{scan_stem(subject, scan)}.xyz"
            save_xyz(cloud, path)
            entries.append(ManifestEntry(subject, scan, POSE_TAGS[scan], path))
            log.info("wrote %s pose=(%.2f, %.2f, %.2f)", path.name, *pose)
    save_manifest(entries, out / "manifest.tsv")
    print(f"wrote {len(entries)} scans and {out / 'manifest.tsv'}")
    return 0


# --- preprocess --------------------------------------------------------------

def _preprocess_job(job):
    entry, ref_path, out_path, cfg = job
    try:
        cloud = load_xyz(entry.path)
        reference = None if ref_path == entry.path else load_xyz(ref_path)
        result = preprocess_scan(cloud, reference, cfg.grid, cfg.crop, cfg.icp)
    except Exception as exc:
        return entry, None, f"{entry.path}: {exc}"
    save_range_image(result.image, out_path)
    return entry, result, None


def cmd_preprocess(args, cfg: PipelineConfig) -> int:
    try:
        manifest = load_manifest(args.manifest)
    except (OSError, ValueError) as exc:
        raise CommandError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    refs = reference_scans(manifest)
    jobs = [(e, refs[e.subject_id], out / f"{scan_stem(e.subject_id, e.scan_id)}.pgm", cfg) for e in manifest]
    for entry, result, error in _map(_preprocess_job, jobs, args.jobs):
        if error is not None:
            raise CommandError(f"subject {entry.subject_id} scan {entry.scan_id} failed: {error}")
        reg = result.registration
        icp = "registration=skipped" if reg is None else f"icp_iterations={reg.iterations} rms={reg.rms:.4f}"
        print(
            f"{entry.subject_id}\t{entry.scan_id}\t{icp}"
            f"\tnose_tip=({result.nose_tip.u:.2f}, {result.nose_tip.v:.2f})"
        )
    return 0


# --- describe ----------------------------------------------------------------

def _describe_job(job):
    path, out_path, cfg = job
    img = load_range_image(path)
    descs, detected, skipped = describe_image(img, cfg)
    save_descriptors(descs, out_path, cfg.descriptor, skipped)
    return path, detected, skipped


def cmd_describe(args, cfg: PipelineConfig) -> int:
    src = Path(args.images)
    if not src.is_dir():
        raise CommandError(f"{src} is not a directory")
    images = sorted(src.glob("*.pgm"))
    if not images:
        log.warning("no range images in %s", src)
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(p, out / f"{p.stem}.suld", cfg) for p in images]
    try:
        results = _map(_describe_job, jobs, args.jobs)
    except (OSError, ValueError, KeyError) as exc:
        raise CommandError(f"cannot describe images: {exc}") from None
    for path, detected, skipped in results:
        print(f"{path.name}\tpoints={detected}\tdescribed={detected - skipped}\tskipped={skipped}")
    return 0


# --- match -------------------------------------------------------------------

def cmd_match(args, cfg: PipelineConfig) -> int:
    try:
        a = load_descriptors(args.probe)
        b = load_descriptors(args.gallery)
    except (OSError, ValueError) as exc:
        raise CommandError(str(exc)) from None
    print(similarity(as_matrix(a.descriptors), as_matrix(b.descriptors), cfg.matcher))
    return 0


# --- evaluate ----------------------------------------------------------------

def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    try:
        manifest = load_manifest(args.manifest)
    except (OSError, ValueError) as exc:
        raise CommandError(str(exc)) from None
    protocol = get_protocol(args.protocol).limited(args.subjects)
    root = Path(args.descriptors)
    features = {}
    for e in manifest:
        path = root / f"{scan_stem(e.subject_id, e.scan_id)}.suld"
        if not path.is_file():
            if protocol.mode != "split" or e.scan_id in protocol.train_scans | protocol.test_scans:
                raise CommandError(f"missing descriptors {path}")
            continue
        d = load_descriptors(path)
        features[(e.subject_id, e.scan_id)] = FaceFeatures(as_matrix(d.descriptors), d.detected, d.skipped)
    try:
        report = evaluate(features, protocol, cfg.matcher)
    except (KeyError, ValueError) as exc:
        raise CommandError(str(exc.args[0] if exc.args else exc)) from None
    text = report.to_text()
    print(text)
    if args.report:
        atomic_write(args.report, text + "\n")
    if args.json:
        atomic_write(args.json, reports_to_json([report]))
    return 0


GLOBAL_DEFAULTS = {"config": None, "seed": 0, "jobs": 1, "verbose": False}


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS so a subcommand's copy of a flag cannot reset one given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--jobs", type=int, help="parallel worker processes (default 1)")
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="rangeface",
        parents=[common],
        description="Range-image face recognition with significant points and SULD descriptors.",
        epilog="Any config key may also be given as --section-key VALUE, e.g. --detector-w 0.9.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic face corpus")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--scans", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise", type=float, default=0.5, help="noise sigma in scanner units")
    p.add_argument("--jitter", type=float, default=10.0, help="max pose angle (degrees) for scans after the first")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", parents=[common], help="register, rasterize and crop every scan")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("describe", parents=[common], help="detect points and write SULD descriptors")
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("match", parents=[common], help="print the match count between two descriptor files")
    p.add_argument("probe")
    p.add_argument("gallery")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("evaluate", parents=[common], help="rank-1 accuracy for a protocol")
    p.add_argument("--descriptors", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--protocol", required=True, type=str.upper, choices=sorted(PROTOCOLS))
    p.add_argument("--subjects", type=int, default=None, help="use only the first N subjects")
    p.add_argument("--report", help="write the text report here")
    p.add_argument("--json", help="write the machine-readable report here")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    for name, default in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = read_config(args.config) if args.config else {}
        settings.update(parse_override_flags(extra))
        cfg = build_config(settings)
    except (OSError, ValueError) as exc:
        parser.error(str(exc))
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args, cfg)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
