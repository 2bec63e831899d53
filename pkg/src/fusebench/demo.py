"""Desk-scale end-to-end run on procedurally generated faces.

Pipeline: synthetic subjects -> three smoothing strengths as retouching
filters -> rgb / dct / srm features on the face crop -> a logistic detector
per feature type under leave-one-filter-out -> per-source and fused average
D-EER, DET curves and score statistics written to a report directory.

Held-out subjects are scored by every fold's model, so each fold gets its own
score table (bona fide ids carry the fold name). Fusion weights are fitted on
the mean of the per-fold average D-EERs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fusebench import beauty, metrics
from fusebench.errors import DomainError
from fusebench.fusion import FUSED_SOURCE, fuse, save_config
from fusebench.imgfeat.extract import ExtractOptions, extract_features
from fusebench.imgfeat.io import write_boxes, write_image
from fusebench.imgfeat.retouch import synth_retouch
from fusebench.imgfeat.synthetic import make_face
from fusebench.learners import train_logistic
from fusebench.optimizer import FusionObjective, PowellSettings, fit_fusion, write_trace
from fusebench.rng import substream
from fusebench.scores import BONAFIDE, Label, ManifestEntry, ScoreRecord, ScoreTable, save_manifest, save_scores

log = logging.getLogger(__name__)

FILTERS = {"smooth_light": 0.3, "smooth_medium": 0.55, "smooth_strong": 0.8}
SOURCES = ("rgb", "dct", "srm")
IMAGE_SIZE = 96
BLOCK = 8


@dataclass(frozen=True)
class DemoResult:
    out_dir: Path
    source_deer: dict[str, float]
    fused_deer: float
    weights: tuple[float, ...]


def pooled_block_stats(features: np.ndarray, block: int = BLOCK) -> np.ndarray:
    """Per plane: mean over 8x8 blocks of the block mean, log-variance and log-energy."""
    feats = features if features.ndim == 3 else features[..., None]
    h, w, p = feats.shape
    hb, wb = h // block, w // block
    if hb == 0 or wb == 0:
        raise DomainError(f"feature image {w}x{h} is smaller than one {block}x{block} block")
    tiles = feats[:hb * block, :wb * block].reshape(hb, block, wb, block, p)
    mean = tiles.mean(axis=(1, 3))
    var = tiles.var(axis=(1, 3))
    energy = (tiles ** 2).mean(axis=(1, 3))
    stats = np.stack([mean.mean(axis=(0, 1)), np.log1p(var).mean(axis=(0, 1)),
                      np.log1p(energy).mean(axis=(0, 1))], axis=1)
    return stats.ravel()


def _generate(seed: int, n_subjects: int, image_dir: Path | None):
    rng = substream(seed, "images")
    images: dict[tuple[int, str], np.ndarray] = {}
    boxes = {}
    for k in range(n_subjects):
        rgb, box = make_face(rng, IMAGE_SIZE)
        bona = np.clip(np.rint(rgb), 0, 255)
        images[(k, BONAFIDE)] = bona
        boxes[k] = box
        for name, strength in FILTERS.items():
            images[(k, name)] = np.clip(np.rint(synth_retouch(bona, strength)), 0, 255)
    if image_dir is not None:
        image_dir.mkdir(parents=True, exist_ok=True)
        named_boxes = {}
        for (k, kind), img in images.items():
            stem = f"subj{k:04d}_{kind}"
            write_image(image_dir / f"{stem}.png", img)
            named_boxes[stem] = boxes[k]
        write_boxes(named_boxes, image_dir / "boxes.csv")
    return images, boxes


def run_demo(seed: int, n_subjects: int, out_dir: str | Path, write_images: bool = True,
             settings: PowellSettings | None = None) -> DemoResult:
    if n_subjects < 2:
        raise DomainError("the demo needs at least 2 subjects (one to train, one to test)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    settings = settings or PowellSettings()

    log.info("generating %d subjects x %d variants", n_subjects, 1 + len(FILTERS))
    images, boxes = _generate(seed, n_subjects, out / "images" if write_images else None)

    log.info("extracting features")
    feats: dict[str, dict[tuple[int, str], np.ndarray]] = {s: {} for s in SOURCES}
    for key, img in images.items():
        for source in SOURCES:
            f = extract_features(img, ExtractOptions(method=source, margin=0), boxes[key[0]])
            feats[source][key] = pooled_block_stats(f)

    order = substream(seed, "split").permutation(n_subjects)
    n_train = n_subjects // 2
    train_subj, test_subj = sorted(order[:n_train].tolist()), sorted(order[n_train:].tolist())

    fold_records: dict[str, list[ScoreRecord]] = {f: [] for f in FILTERS}
    for source in SOURCES:
        for held_out in FILTERS:
            seen = [f for f in FILTERS if f != held_out]
            X = [feats[source][(k, kind)] for k in train_subj for kind in (BONAFIDE, *seen)]
            y = [0 if kind == BONAFIDE else 1 for k in train_subj for kind in (BONAFIDE, *seen)]
            model = train_logistic(np.array(X), np.array(y))
            for k in test_subj:
                for kind in (BONAFIDE, held_out):
                    score = float(model.predict_proba(feats[source][(k, kind)][None, :])[0])
                    label = Label.BONAFIDE if kind == BONAFIDE else Label.ATTACK
                    sid = f"{held_out}/subj{k:04d}/{kind}"
                    fold_records[held_out].append(ScoreRecord(sid, source, kind, label, score))
    folds = {f: ScoreTable(tuple(recs)) for f, recs in fold_records.items()}

    per_filter = {s: {f: metrics.deer(t.scores(s, f), t.scores(s, BONAFIDE))[0] for f, t in folds.items()}
                  for s in SOURCES}
    source_deer = {s: float(np.mean(list(v.values()))) for s, v in per_filter.items()}

    log.info("fitting fusion weights")
    fold_tables = [folds[f] for f in FILTERS]
    config, trace = fit_fusion(fold_tables, SOURCES, settings)
    save_config(config, out / "fusion.json")
    write_trace(trace, out / "trace.csv", settings, SOURCES)
    fused_folds = {f: fuse(t, config) for f, t in folds.items()}
    fused_per_filter = {f: metrics.deer(t.scores(FUSED_SOURCE, f), t.scores(FUSED_SOURCE, BONAFIDE))[0]
                        for f, t in fused_folds.items()}
    fused_deer = float(np.mean(list(fused_per_filter.values())))
    equal_deer = FusionObjective(fold_tables, config.with_weights((1 / 3,) * 3))(((1 / 3,) * 3))

    _write_report(out, folds, fused_folds, per_filter, source_deer, fused_per_filter, fused_deer,
                  equal_deer, config, seed, n_subjects)
    return DemoResult(out, source_deer, fused_deer, config.weights)


def _fold_stats(tables, source: str):
    """Filter statistics where each filter is compared with the bona fide scores of its own fold."""
    rows = [beauty.FilterStats(BONAFIDE, 0.0, 0.0, 0.0)]
    samples = {BONAFIDE: np.concatenate([t.scores(source, BONAFIDE) for t in tables.values()])}
    for f, t in tables.items():
        row = next(r for r in beauty.filter_stats(t, source) if r.filter == f)
        rows.append(row)
        samples[f] = t.scores(source, f)
    bona = samples[BONAFIDE]
    rows[0] = beauty.FilterStats(BONAFIDE, float(bona.mean()), float(bona.std()), 0.0, int(bona.size))
    rows.sort(key=lambda r: (r.distance, r.filter))
    return rows, samples


def _write_report(out: Path, folds, fused_folds, per_filter, source_deer, fused_per_filter,
                  fused_deer, equal_deer, config, seed, n_subjects) -> None:
    all_records = ScoreTable(tuple(r for t in folds.values() for r in t.records))
    score_dir = out / "scores"
    score_dir.mkdir(exist_ok=True)
    entries = {}
    for s in SOURCES:
        save_scores(all_records, score_dir / f"{s}.csv", source=s)
        entries[s] = ManifestEntry(s, score_dir / f"{s}.csv", None)
    save_manifest(entries, out / "manifest.json")

    for s in (*SOURCES, FUSED_SOURCE):
        tables = fused_folds if s == FUSED_SOURCE else folds
        curves = [(f, metrics.det_curve(t.scores(s, f), t.scores(s, BONAFIDE))) for f, t in tables.items()]
        metrics.emit_det_plot(curves, out / f"det_{s}.svg")
        rows, samples = _fold_stats(tables, s)
        beauty.write_stats_csv(rows, out / f"stats_{s}.csv")
        kdes = [(name, beauty.kde(v)) for name, v in samples.items() if np.unique(v).size >= 2]
        if kdes:
            beauty.emit_kde_plot(kdes, out / f"kde_{s}.svg", xlabel=f"{s} score")

    summary = {
        "seed": seed,
        "n_subjects": n_subjects,
        "filters": dict(FILTERS),
        "per_filter_deer": {**per_filter, FUSED_SOURCE: fused_per_filter},
        "average_deer": {**source_deer, FUSED_SOURCE: fused_deer},
        "equal_weight_average_deer": equal_deer,
        "fusion_weights": dict(zip(config.sources, config.weights)),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(f"fusebench demo  seed={seed}  subjects={n_subjects}\n\n")
        fh.write(f"{'source':<10}" + "".join(f"{f:>16}" for f in FILTERS) + f"{'average':>12}\n")
        for s in (*SOURCES, FUSED_SOURCE):
            row = fused_per_filter if s == FUSED_SOURCE else per_filter[s]
            avg = fused_deer if s == FUSED_SOURCE else source_deer[s]
            fh.write(f"{s:<10}" + "".join(f"{100 * row[f]:>15.2f}%" for f in FILTERS) + f"{100 * avg:>11.2f}%\n")
        fh.write(f"\nequal-weight fused average D-EER: {100 * equal_deer:.2f}%\n")
        fh.write("fusion weights: " + ", ".join(f"{s}={w:.4f}" for s, w in zip(config.sources, config.weights)) + "\n")
