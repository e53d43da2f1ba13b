"""Batch command-line interface.

Verbs: synth, render-maps, extract-shallow, pool, reduce, train, eval,
sweep.  Exit code 0 on success; each error family maps to its own nonzero
code (see errors.EXIT_CODES).  A ``--config file`` of key=value lines
supplies defaults for the shared flags; explicit flags win.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bof, formats, patches, pipeline, pooling, spd, svm, synthetic
from .errors import CovferError, exit_code
from .mesh import PreprocessParams, estimate_curvatures, preprocess, render_curvature_map, render_depth_map


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(","))


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key=value defaults file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--streams", type=str, default=None,
                        help="comma-separated stream names, e.g. synthetic-deep,shallow")
    parser.add_argument("--codebook-size", type=int, default=None)
    parser.add_argument("--kmeans-seed", type=int, default=None)
    parser.add_argument("--regions", type=str, default=None, help="grid levels, e.g. 1,2")
    parser.add_argument("--spd-eps", type=float, default=None)
    parser.add_argument("--spd-dims", type=str, default=None,
                        help="override reduction schedule for every tensor stream")
    parser.add_argument("--svm-c", type=float, default=None)
    parser.add_argument("--folds", type=int, default=None)
    parser.add_argument("--preprocess", action="store_true",
                        help="run mesh cleanup before curvature estimation")


def _resolve(args: argparse.Namespace, key: str, fallback, cast):
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    if args.config is not None:
        cfg = formats.read_sidecar(args.config)
        if key in cfg:
            return cast(cfg[key])
    return fallback


def _run_config(args: argparse.Namespace) -> pipeline.RunConfig:
    streams = _resolve(args, "streams", pipeline.SHALLOW_STREAM, str)
    regions = _resolve(args, "regions", "1,2", str)
    spd_dims = _resolve(args, "spd-dims", None, str)
    schedules = {}
    if spd_dims:
        dims = _int_list(spd_dims)
        schedules = {
            s: dims for s in str(streams).split(",") if s != pipeline.SHALLOW_STREAM
        }
    return pipeline.RunConfig(
        streams=tuple(str(streams).split(",")),
        codebook_size=int(_resolve(args, "codebook-size", 64, int)),
        regions=_int_list(str(regions)),
        spd_epsilon=float(_resolve(args, "spd-eps", spd.DEFAULT_EPSILON, float)),
        spd_schedules=schedules,
        seed=int(_resolve(args, "seed", 0, int)),
        kmeans_seed=_resolve(args, "kmeans-seed", None, int),
        svm_c=float(_resolve(args, "svm-c", 1.0, float)),
        fold_count=int(_resolve(args, "folds", 10, int)),
        preprocess=PreprocessParams() if args.preprocess else None,
    )


def _load_mesh(entry, args):
    mesh = formats.read_mesh(entry.mesh_path)
    if args.preprocess:
        mesh = preprocess(mesh, PreprocessParams())
    return mesh


def cmd_synth(args) -> int:
    manifest = synthetic.generate_synthetic(
        args.out, seed=int(_resolve(args, "seed", 42, int)),
        subjects=args.subjects, classes=args.classes,
    )
    print(manifest)
    return 0


def cmd_render_maps(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for entry in formats.read_manifest(args.manifest):
        mesh = _load_mesh(entry, args)
        if args.kind in ("depth", "both"):
            img = render_depth_map(mesh)
            formats.write_fmap(img.pixels[None], out / f"{entry.sample_id}.depth.fmap")
            if args.pgm:
                formats.write_pgm(img.pixels, out / f"{entry.sample_id}.depth.pgm")
        if args.kind in ("curv", "both"):
            img = render_curvature_map(estimate_curvatures(mesh))
            formats.write_fmap(img.pixels[None], out / f"{entry.sample_id}.curv.fmap")
            if args.pgm:
                formats.write_pgm(img.pixels, out / f"{entry.sample_id}.curv.pgm")
    return 0


def cmd_extract_shallow(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for entry in formats.read_manifest(args.manifest):
        mesh = estimate_curvatures(_load_mesh(entry, args))
        descs = patches.shallow_descriptors(mesh)
        formats.write_fmap(np.stack(descs), out / f"{entry.sample_id}.shallow.fmap")
    return 0


def cmd_pool(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    levels = _int_list(str(_resolve(args, "regions", "1,2", str)))
    for entry in formats.read_manifest(args.manifest):
        path = entry.tensor_paths.get(args.stream)
        if path is None:
            continue
        pooled = pooling.pool_regions(formats.read_fmap(path), levels)
        formats.write_fmap(np.stack(pooled), out / f"{entry.sample_id}.{args.stream}.cov.fmap")
    return 0


def cmd_reduce(args) -> int:
    tensor = formats.read_fmap(args.infile)
    stack = tensor[None] if tensor.ndim == 2 else tensor
    channels = stack.shape[-1]
    dims_text = _resolve(args, "spd-dims", None, str)
    dims = _int_list(dims_text) if dims_text else pipeline.default_schedule(channels)
    config = spd.SpdChainConfig(
        dims=dims, epsilon=float(_resolve(args, "spd-eps", spd.DEFAULT_EPSILON, float))
    )
    weights = spd.init_chain(config, int(_resolve(args, "seed", 0, int)))
    reduced = np.stack(
        [bof.flatten(spd.spd_reduce(m, config, weights)) for m in stack]
    )
    formats.write_fmap(reduced, args.out)
    if args.save_weights:
        spd.save_chain(weights, config, args.save_weights)
    return 0


def cmd_train(args) -> int:
    config = _run_config(args)
    entries = formats.read_manifest(args.manifest)
    features = pipeline.extract_features(entries, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    books = {}
    for pos, stream in enumerate(config.streams):
        desc = np.concatenate(features.descriptors[stream])
        seed = config.kmeans_seed if config.kmeans_seed is not None else config.seed
        books[stream] = bof.train_codebook(
            desc, k=config.codebook_size, seed=pipeline._sub_seed(seed, 2, 0, pos),
            kind="shallow" if stream == pipeline.SHALLOW_STREAM else "deep",
            stream=stream,
        )
        bof.save_codebook(books[stream], out / f"codebook_{stream.replace('.', '_')}")

    fused = np.stack(
        [
            bof.fuse(
                {s: bof.quantize(features.descriptors[s][i], books[s]) for s in config.streams},
                config.streams,
            )
            for i in range(len(features.sample_ids))
        ]
    )
    model = svm.train(fused, features.labels, c=config.svm_c)
    svm.save_model(model, out / "svm")
    formats.write_sidecar(
        {
            "streams": ",".join(config.streams),
            "codebook_size": str(config.codebook_size),
            "regions": ",".join(str(g) for g in config.regions),
            "seed": str(config.seed),
        },
        out / "run.txt",
    )
    print(f"trained on {len(features.sample_ids)} samples -> {out}")
    return 0


def cmd_eval(args) -> int:
    config = _run_config(args)
    reports, summary = pipeline.run_cv(args.manifest, config)
    text, _ = pipeline.report(reports)
    print(text, end="")
    if args.summary:
        pipeline.write_summary(summary, args.summary)
    return 0


def cmd_sweep(args) -> int:
    config = _run_config(args)
    sizes = _int_list(args.sizes)
    table = pipeline.sweep_codebooks(args.manifest, config, sizes)
    lines = ["size\taccuracy"] + [f"{size}\t{acc!r}" for size, acc in table]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covfer")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--subjects", type=int, default=30)
    p.add_argument("--classes", type=int, default=6)
    _add_shared(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render-maps", help="rasterize depth/curvature maps")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--kind", choices=("depth", "curv", "both"), default="both")
    p.add_argument("--pgm", action="store_true", help="also write debug PGM files")
    _add_shared(p)
    p.set_defaults(func=cmd_render_maps)

    p = sub.add_parser("extract-shallow", help="patch covariance descriptors")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _add_shared(p)
    p.set_defaults(func=cmd_extract_shallow)

    p = sub.add_parser("pool", help="covariance pooling of feature tensors")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--stream", required=True)
    p.add_argument("--out", required=True, type=Path)
    _add_shared(p)
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("reduce", help="SPD reduction chain + flattening")
    p.add_argument("--in", dest="infile", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--save-weights", type=Path, default=None)
    _add_shared(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("train", help="train codebooks and classifier on all data")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    _add_shared(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="subject-disjoint cross-validation")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--summary", type=Path, default=None)
    _add_shared(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="codebook-size sweep")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--sizes", default="16,32,64,128,256,512,1024")
    p.add_argument("--out", type=Path, default=None)
    _add_shared(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CovferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
