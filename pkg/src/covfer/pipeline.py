"""End-to-end evaluation: feature extraction, subject-disjoint k-fold
cross-validation, codebook-size sweeps and reporting.

Folds partition subjects, never samples, so no identity appears on both
sides of a split.  Codebooks and the classifier are retrained inside each
fold from training-fold data only.  Every random choice derives from the
seeds in the run configuration, which makes summary files byte-identical
across reruns.
"""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import bof, formats, patches, pooling, spd, svm
from .errors import (
    BadShape,
    DimMismatch,
    MissingStreamArtifacts,
    TooFewSubjects,
)
from .formats import ManifestEntry
from .mesh import PreprocessParams, estimate_curvatures, preprocess

SHALLOW_STREAM = "shallow"
SHALLOW_DIM = patches.FEATURE_DIM


@dataclass(frozen=True)
class RunConfig:
    streams: tuple[str, ...] = (SHALLOW_STREAM,)
    codebook_size: int = 64
    regions: tuple[int, ...] = pooling.DEFAULT_LEVELS
    spd_epsilon: float = spd.DEFAULT_EPSILON
    spd_schedules: Mapping[str, tuple[int, ...]] = field(default_factory=dict)
    seed: int = 0
    kmeans_seed: int | None = None
    svm_c: float = 1.0
    fold_count: int = 10
    preprocess: PreprocessParams | None = None
    patch_count: int = patches.DEFAULT_PATCH_COUNT
    patch_fraction: float = patches.DEFAULT_RADIUS_FRACTION

    def __post_init__(self):
        if not self.streams:
            raise ValueError("need at least one stream")
        if self.fold_count < 2:
            raise ValueError("fold_count must be at least 2")
        if self.codebook_size not in bof.CODEBOOK_SIZES:
            raise ValueError(
                f"codebook size must be one of {bof.CODEBOOK_SIZES}"
            )


def default_schedule(channels: int) -> tuple[int, ...]:
    """Reduction ladder by channel count: the published ladders for 512 and
    256 channels, a single halving stage otherwise."""
    if channels == 512:
        return (512, 250, 100, 50)
    if channels == 256:
        return (256, 150, 100, 50)
    if channels >= 8:
        return (channels, max(4, channels // 2))
    return (channels,)


def _sub_seed(*parts) -> int:
    entropy = [int(p) & 0xFFFFFFFF for p in parts]
    return int(np.random.SeedSequence(entropy=entropy).generate_state(1)[0])


def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


@dataclass
class FeatureSet:
    """Per-sample flattened descriptors for every configured stream."""

    sample_ids: list[str]
    subjects: list[str]
    labels: list[str]
    descriptors: dict[str, list[np.ndarray]]  # stream -> per-sample (n_i, L)


def extract_features(entries: Sequence[ManifestEntry], config: RunConfig) -> FeatureSet:
    """Deterministic descriptor extraction; independent of fold splits, so
    it runs once per dataset."""
    chains: dict[str, tuple[spd.SpdChainConfig, list[np.ndarray]]] = {}
    shallow_chain = spd.SpdChainConfig(dims=(SHALLOW_DIM,), epsilon=config.spd_epsilon)
    out: dict[str, list[np.ndarray]] = {s: [] for s in config.streams}

    for entry in entries:
        for stream in config.streams:
            if stream == SHALLOW_STREAM:
                out[stream].append(_shallow_vectors(entry, config, shallow_chain))
            else:
                out[stream].append(_deep_vectors(entry, stream, config, chains))

    return FeatureSet(
        sample_ids=[e.sample_id for e in entries],
        subjects=[e.subject_id for e in entries],
        labels=[e.label for e in entries],
        descriptors=out,
    )


def _shallow_vectors(entry, config, chain_config) -> np.ndarray:
    if entry.mesh_path is None:
        raise MissingStreamArtifacts(f"{entry.sample_id}: no mesh for shallow stream")
    mesh = formats.read_mesh(entry.mesh_path)
    if config.preprocess is not None:
        mesh = preprocess(mesh, config.preprocess)
    mesh = estimate_curvatures(mesh)
    descs = patches.shallow_descriptors(mesh, config.patch_count, config.patch_fraction)
    return np.stack(
        [bof.flatten(spd.spd_reduce(d, chain_config, [])) for d in descs]
    )


def _deep_vectors(entry, stream, config, chains) -> np.ndarray:
    path = entry.tensor_paths.get(stream)
    if path is None:
        raise MissingStreamArtifacts(f"{entry.sample_id}: no tensor for {stream!r}")
    tensor = formats.read_fmap(path)
    if tensor.ndim != 3:
        raise BadShape(f"{path}: expected (c, h, w), got {tensor.shape}")
    channels = tensor.shape[0]

    if stream not in chains:
        dims = tuple(config.spd_schedules.get(stream) or default_schedule(channels))
        chain_config = spd.SpdChainConfig(dims=dims, epsilon=config.spd_epsilon)
        weights = spd.init_chain(
            chain_config, _sub_seed(config.seed, 1, _stream_key(stream))
        )
        chains[stream] = (chain_config, weights)
    chain_config, weights = chains[stream]
    if chain_config.dims[0] != channels:
        raise DimMismatch(
            f"{path}: {channels} channels but stream {stream!r} uses {chain_config.dims}"
        )

    pooled = pooling.pool_regions(tensor, config.regions)
    return np.stack(
        [bof.flatten(spd.spd_reduce(p, chain_config, weights)) for p in pooled]
    )


# --------------------------------------------------------------------------
# folds and reports
# --------------------------------------------------------------------------


def make_folds(subjects: Sequence[str], fold_count: int, seed: int) -> list[list[str]]:
    """Seeded shuffle of the distinct subjects split into fold_count
    groups."""
    distinct = sorted(set(subjects))
    if len(distinct) < fold_count:
        raise TooFewSubjects(f"{len(distinct)} subjects for {fold_count} folds")
    rng = np.random.Generator(np.random.PCG64(_sub_seed(seed, 0)))
    order = rng.permutation(len(distinct))
    shuffled = [distinct[i] for i in order]
    return [list(part) for part in np.array_split(shuffled, fold_count)]


@dataclass
class FoldReport:
    fold: int
    classes: tuple[str, ...]
    confusion: np.ndarray  # counts, rows = true, cols = predicted
    per_class: dict[str, float]
    overall: float


def fold_report_from_predictions(fold, classes, y_true, y_pred) -> FoldReport:
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        confusion[index[t], index[p]] += 1
    row_sums = confusion.sum(axis=1)
    per_class = {
        c: float(confusion[i, i] / row_sums[i])
        for i, c in enumerate(classes)
        if row_sums[i] > 0
    }
    overall = float(np.trace(confusion) / confusion.sum())
    return FoldReport(
        fold=fold, classes=classes, confusion=confusion, per_class=per_class,
        overall=overall,
    )


@dataclass
class Summary:
    classes: tuple[str, ...]
    fold_accuracies: tuple[float, ...]
    mean_accuracy: float
    per_class: dict[str, float]
    confusion: tuple[tuple[int, ...], ...]  # aggregated over folds


def summarize(reports: Sequence[FoldReport]) -> Summary:
    if not reports:
        raise ValueError("no fold reports to summarize")
    classes = reports[0].classes
    total = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for r in reports:
        total += r.confusion
    row_sums = total.sum(axis=1)
    per_class = {
        c: float(total[i, i] / row_sums[i])
        for i, c in enumerate(classes)
        if row_sums[i] > 0
    }
    accs = tuple(r.overall for r in reports)
    return Summary(
        classes=classes,
        fold_accuracies=accs,
        mean_accuracy=float(np.mean(accs)),
        per_class=per_class,
        confusion=tuple(tuple(int(v) for v in row) for row in total),
    )


# --------------------------------------------------------------------------
# cross-validation driver
# --------------------------------------------------------------------------


def _load_entries(manifest) -> list[ManifestEntry]:
    if isinstance(manifest, (str, Path)):
        return formats.read_manifest(manifest)
    return list(manifest)


def _evaluate(features: FeatureSet, config: RunConfig) -> list[FoldReport]:
    folds = make_folds(features.subjects, config.fold_count, config.seed)
    classes = tuple(sorted(set(features.labels)))
    kseed = config.kmeans_seed if config.kmeans_seed is not None else config.seed
    reports = []
    for fold_idx, test_subjects in enumerate(folds):
        test_set = set(test_subjects)
        train_idx = [i for i, s in enumerate(features.subjects) if s not in test_set]
        test_idx = [i for i, s in enumerate(features.subjects) if s in test_set]
        # leakage guard: subject sets of the two sides must be disjoint
        assert not (
            {features.subjects[i] for i in train_idx}
            & {features.subjects[i] for i in test_idx}
        )

        books = {}
        for pos, stream in enumerate(config.streams):
            train_desc = np.concatenate(
                [features.descriptors[stream][i] for i in train_idx]
            )
            books[stream] = bof.train_codebook(
                train_desc,
                k=config.codebook_size,
                seed=_sub_seed(kseed, 2, fold_idx, pos),
                kind="shallow" if stream == SHALLOW_STREAM else "deep",
                stream=stream,
            )

        def fused(i: int) -> np.ndarray:
            hists = {
                s: bof.quantize(features.descriptors[s][i], books[s])
                for s in config.streams
            }
            return bof.fuse(hists, config.streams)

        x_train = np.stack([fused(i) for i in train_idx])
        y_train = [features.labels[i] for i in train_idx]
        model = svm.train(x_train, y_train, c=config.svm_c)

        x_test = np.stack([fused(i) for i in test_idx])
        y_test = [features.labels[i] for i in test_idx]
        y_pred = svm.predict_many(model, x_test)
        reports.append(
            fold_report_from_predictions(fold_idx, classes, y_test, y_pred)
        )
    return reports


def run_cv(manifest, config: RunConfig) -> tuple[list[FoldReport], Summary]:
    """Subject-disjoint cross-validation over a manifest (path or entry
    list)."""
    entries = _load_entries(manifest)
    features = extract_features(entries, config)
    reports = _evaluate(features, config)
    return reports, summarize(reports)


def sweep_codebooks(
    manifest, config: RunConfig, sizes: Sequence[int]
) -> list[tuple[int, float]]:
    """Mean CV accuracy per codebook size with everything else fixed.
    Features are extracted once and shared across sizes."""
    entries = _load_entries(manifest)
    features = extract_features(entries, config)
    table = []
    for size in sizes:
        cfg = dataclasses.replace(config, codebook_size=int(size))
        reports = _evaluate(features, cfg)
        table.append((int(size), summarize(reports).mean_accuracy))
    return table


# --------------------------------------------------------------------------
# reporting
# --------------------------------------------------------------------------


def report(reports: Sequence[FoldReport]) -> tuple[str, Summary]:
    """Human-readable text plus the machine-readable summary."""
    summary = summarize(reports)
    lines = [f"folds: {len(summary.fold_accuracies)}"]
    lines.append("per-expression accuracy:")
    for c in summary.classes:
        rate = summary.per_class.get(c)
        lines.append(f"  {c}: {rate:.4f}" if rate is not None else f"  {c}: n/a")
    lines.append("confusion matrix (rows true, cols predicted):")
    header = "      " + " ".join(f"{c:>5}" for c in summary.classes)
    lines.append(header)
    for c, row in zip(summary.classes, summary.confusion):
        lines.append(f"  {c:>3} " + " ".join(f"{v:5d}" for v in row))
    lines.append(f"overall accuracy: {summary.mean_accuracy:.4f}")
    return "\n".join(lines) + "\n", summary


def write_summary(summary: Summary, path) -> None:
    lines = [
        "classes\t" + ",".join(summary.classes),
        f"folds\t{len(summary.fold_accuracies)}",
    ]
    for i, acc in enumerate(summary.fold_accuracies):
        lines.append(f"fold_accuracy\t{i}\t{acc!r}")
    lines.append(f"mean_accuracy\t{summary.mean_accuracy!r}")
    for c in summary.classes:
        if c in summary.per_class:
            lines.append(f"class_rate\t{c}\t{summary.per_class[c]!r}")
    for c, row in zip(summary.classes, summary.confusion):
        lines.append("confusion\t" + c + "\t" + ",".join(str(v) for v in row))
    lines.append("")
    Path(path).write_text("\n".join(lines))


def read_summary(path) -> Summary:
    classes: tuple[str, ...] = ()
    fold_acc: list[float] = []
    mean_acc = 0.0
    per_class: dict[str, float] = {}
    confusion_rows: dict[str, tuple[int, ...]] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        fields = line.split("\t")
        key = fields[0]
        if key == "classes":
            classes = tuple(fields[1].split(","))
        elif key == "fold_accuracy":
            fold_acc.append(float(fields[2]))
        elif key == "mean_accuracy":
            mean_acc = float(fields[1])
        elif key == "class_rate":
            per_class[fields[1]] = float(fields[2])
        elif key == "confusion":
            confusion_rows[fields[1]] = tuple(int(v) for v in fields[2].split(","))
    return Summary(
        classes=classes,
        fold_accuracies=tuple(fold_acc),
        mean_accuracy=mean_acc,
        per_class=per_class,
        confusion=tuple(confusion_rows[c] for c in classes),
    )
