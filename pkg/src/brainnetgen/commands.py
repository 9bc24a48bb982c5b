"""Implementations behind the CLI subcommands.

Each command reads its inputs, writes CSV/JSON outputs plus the resolved
config into ``out_dir`` and never modifies its inputs. Stage seeds derive
from one master seed through :func:`brainnetgen.rng.child_seed`.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from . import AUTISM, CONTROL, InputError
from .cohort import (
    SbmSpec,
    baseline_clustering_match,
    baseline_degree_preserving,
    linear_probe_accuracy,
    make_two_population_cohort,
)
from .config import ExperimentConfig, FixedThreshold, OtsuThreshold, PreprocessingConfig, write_resolved
from .connectome import (
    BinaryConnectome,
    RoiTimeSeries,
    bandpass_filter,
    binarize_fixed,
    binarize_otsu,
    global_signal_regression,
    load_time_series,
    pearson_matrix,
    transform_reverse,
    transform_upper_triangular,
)
from .discriminator import featurize, featurize_cohort, is_unstable_ratio, run_augmentation_protocol
from .fileio import read_cohort, read_time_series_manifest, write_cohort, write_rows
from .graphrnn import load_checkpoint, sample_accepted, save_checkpoint, train
from .graphs import LabeledGraph
from .metrics import avg_clustering, mmd_degree, pca_embed_2d
from .rng import SeededRng, child_seed

log = logging.getLogger(__name__)

PREPROCESSING_VARIANTS = {
    "filter+global": (True, True),
    "filter": (True, False),
    "global": (False, True),
    "none": (False, False),
}
THRESHOLD_VARIANTS = ("tau0.3", "tau0.5", "tau0.7", "otsu")


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------


def build_connectome(ts: RoiTimeSeries, label: str, prep: PreprocessingConfig) -> BinaryConnectome:
    if prep.bandpass:
        ts = bandpass_filter(ts, prep.low_hz, prep.high_hz)
    if prep.gsr:
        ts = global_signal_regression(ts)
    corr = pearson_matrix(ts)
    if isinstance(prep.threshold, OtsuThreshold):
        g = binarize_otsu(corr, prep.threshold.bins, label)
    else:
        g = binarize_fixed(corr, prep.threshold.tau, label)
    for name in prep.transforms:
        g = transform_reverse(g) if name == "reverse" else transform_upper_triangular(g)
    return g


def _variants(prep: PreprocessingConfig, ablation: str) -> list[tuple[str, PreprocessingConfig]]:
    if ablation == "none":
        return [("", prep)]
    if ablation == "preprocessing":
        return [
            (name, prep.model_copy(update={"bandpass": bp, "gsr": gsr}))
            for name, (bp, gsr) in PREPROCESSING_VARIANTS.items()
        ]
    if ablation == "threshold":
        out = []
        for name in THRESHOLD_VARIANTS:
            th = OtsuThreshold() if name == "otsu" else FixedThreshold(tau=float(name[3:]))
            out.append((name, prep.model_copy(update={"threshold": th})))
        return out
    raise InputError(f"unknown ablation {ablation!r}")


def cmd_preprocess(
    cfg: ExperimentConfig, out_dir: Path, skip_bad: bool = False, ablation: str = "none"
) -> dict:
    if cfg.io.manifest is None:
        raise InputError("io.manifest is required for preprocess")
    entries = read_time_series_manifest(cfg.io.manifest)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out_dir)

    series: dict[str, RoiTimeSeries] = {}
    skipped: list[tuple[str, str]] = []
    for e in entries:
        try:
            series[e.subject_id] = load_time_series(
                e.path, e.subject_id, e.tr_seconds, cfg.preprocessing.atlas_name
            )
        except (InputError, OSError) as exc:
            if not skip_bad:
                raise InputError(f"subject {e.subject_id}: {exc}") from exc
            log.warning("skipping subject %s: %s", e.subject_id, exc)
            skipped.append((e.subject_id, str(exc)))

    edge_table: dict[str, dict[str, int]] = {}
    variants = _variants(cfg.preprocessing, ablation)
    for name, prep in variants:
        vdir = out_dir / name if name else out_dir
        graphs, ids, summary = [], [], []
        for e in entries:
            if e.subject_id not in series:
                continue
            try:
                g = build_connectome(series[e.subject_id], e.label, prep)
            except InputError as exc:
                if not skip_bad:
                    raise InputError(f"subject {e.subject_id}: {exc}") from exc
                log.warning("skipping subject %s in %s: %s", e.subject_id, name or "run", exc)
                skipped.append((e.subject_id, f"{name}: {exc}"))
                continue
            graphs.append(g.to_graph())
            ids.append(e.subject_id)
            summary.append((e.subject_id, e.label, g.n, g.edge_count, float(g.provenance["threshold"])))
            edge_table.setdefault(e.subject_id, {})[name] = g.edge_count
        write_cohort(graphs, vdir, ids)
        write_rows(vdir / "summary.csv", ("subject_id", "label", "n", "edges", "threshold_used"), summary)
        if name:
            write_resolved(cfg.model_copy(update={"preprocessing": prep}), vdir)
    if ablation != "none":
        names = [n for n, _ in variants]
        rows = [
            [sid] + [edge_table[sid].get(n, "") for n in names]
            for sid in (e.subject_id for e in entries)
            if sid in edge_table
        ]
        write_rows(out_dir / "edge_counts.csv", ["subject_id", *names], rows)
    write_rows(out_dir / "skipped.csv", ("subject_id", "reason"), skipped)
    return {"subjects": len(series), "skipped": len(skipped), "variants": [n for n, _ in variants]}


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def _class_specs(cfg: ExperimentConfig) -> tuple[SbmSpec, SbmSpec]:
    c = cfg.cohort
    a = SbmSpec.equal_blocks(c.n, c.blocks, c.autism.p_in, c.autism.p_out, AUTISM)
    b = SbmSpec.equal_blocks(c.n, c.blocks, c.control.p_in, c.control.p_out, CONTROL)
    return a, b


def cmd_synth(cfg: ExperimentConfig, out_dir: Path, seed: int) -> dict:
    spec_a, spec_b = _class_specs(cfg)
    rng = SeededRng(child_seed(seed, "synth"))
    graphs = make_two_population_cohort(spec_a, spec_b, cfg.cohort.count_per_class, rng)
    write_resolved(cfg, out_dir)
    write_cohort(graphs, out_dir, [f"sub{i:05d}" for i in range(len(graphs))])
    x, y = featurize_cohort(graphs)
    probe = linear_probe_accuracy(x, y, 0.6, SeededRng(child_seed(seed, "probe")))
    report = {
        "graphs": len(graphs),
        "autism": int(y.sum()),
        "control": int(len(y) - y.sum()),
        "linear_probe_heldout_accuracy": probe,
    }
    (out_dir / "probe.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def cmd_baseline(cohort_dir: Path, kind: str, out_dir: Path, seed: int, cfg: ExperimentConfig) -> dict:
    """Degree- or clustering-preserving randomized copies of every graph in a cohort."""
    ids, graphs = read_cohort(cohort_dir)
    out = []
    for sid, g in zip(ids, graphs):
        rng = SeededRng(child_seed(seed, f"baseline:{kind}:{sid}"))
        shuffled = baseline_degree_preserving(g, 10 * g.edge_count, rng)
        if kind == "clustering":
            shuffled = baseline_clustering_match(shuffled, avg_clustering(g), 20 * g.edge_count, rng)
        out.append(shuffled)
    write_resolved(cfg, out_dir)
    write_cohort(out, out_dir, [f"{kind}-{sid}" for sid in ids])
    return {"graphs": len(out), "baseline": kind}


# ---------------------------------------------------------------------------
# train-gen / sample
# ---------------------------------------------------------------------------


def cmd_train_gen(
    cfg: ExperimentConfig, cohort_dir: Path, labels: Sequence[str], out_dir: Path, seed: int
) -> dict:
    _, graphs = read_cohort(cohort_dir)
    chosen = {lab: [g for g in graphs if g.label == lab] for lab in labels}
    empty = [lab for lab, gs in chosen.items() if not gs]
    if empty:
        raise InputError(f"{cohort_dir}: no graphs labelled {', '.join(empty)}")
    write_resolved(cfg, out_dir)
    result = {}
    for lab, gs in chosen.items():
        rng = SeededRng(child_seed(seed, f"train-gen:{lab}"))
        cp, curve = train(cfg.generator, gs, rng)
        ldir = out_dir / lab
        ldir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(cp, ldir / "checkpoint.json")
        write_rows(ldir / "loss.csv", ("epoch", "mean_loss"), enumerate(curve))
        write_resolved(cfg, ldir)
        result[lab] = {"epochs": len(curve), "final_loss": curve[-1] if curve else None}
        log.info("trained %s generator: %s", lab, result[lab])
    return result


def cmd_sample(checkpoint: Path, count: int, seed: int, out_dir: Path) -> dict:
    cp = load_checkpoint(checkpoint)
    rep = sample_accepted(cp, count, SeededRng(child_seed(seed, f"sample:{cp.label}")))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_cohort(rep.graphs, out_dir, [f"gen-{cp.label}-{i:05d}" for i in range(count)])
    write_rows(
        out_dir / "rejection.csv",
        ("drawn", "rejected", "accepted", "rejection_rate"),
        [(rep.drawn, rep.rejected, len(rep.graphs), rep.rejection_rate)],
    )
    resolved = {
        "checkpoint": str(Path(checkpoint).resolve()),
        "count": count,
        "seed": seed,
        "generator": cp.config.model_dump(mode="json"),
    }
    (out_dir / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    return {"accepted": len(rep.graphs), "drawn": rep.drawn, "rejected": rep.rejected}


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


def _load_generated(cfg: ExperimentConfig, raw: list[LabeledGraph], seed: int) -> list[LabeledGraph]:
    io = cfg.io
    if io.generated_cohort is not None:
        return read_cohort(io.generated_cohort)[1]
    out = []
    for lab in (AUTISM, CONTROL):
        cp = load_checkpoint(getattr(io.checkpoints, lab))
        count = io.generated_per_class or sum(g.label == lab for g in raw)
        rep = sample_accepted(cp, count, SeededRng(child_seed(seed, f"experiment-sample:{lab}")))
        # the generator's own label may be absent if its cohort was mixed
        out += [g.relabel(lab) for g in rep.graphs]
    return out


def _check_experiment_inputs(cfg: ExperimentConfig) -> None:
    io = cfg.io
    if io.raw_cohort is None:
        raise InputError("io.raw_cohort is required for experiment")
    missing = []
    if not (Path(io.raw_cohort) / "manifest.csv").is_file():
        missing.append(f"raw cohort {io.raw_cohort}")
    if io.generated_cohort is not None:
        if not (Path(io.generated_cohort) / "manifest.csv").is_file():
            missing.append(f"generated cohort {io.generated_cohort}")
    elif io.checkpoints is not None:
        for lab in (AUTISM, CONTROL):
            p = getattr(io.checkpoints, lab)
            if not Path(p).is_file():
                missing.append(f"{lab} checkpoint {p}")
    else:
        raise InputError("experiment needs io.generated_cohort or io.checkpoints")
    if missing:
        raise InputError("missing experiment inputs: " + "; ".join(missing))


def _fmt_ratio(r: float) -> str:
    return f"{r:g}"


def cmd_experiment(cfg: ExperimentConfig, out_dir: Path, seed: int) -> dict:
    _check_experiment_inputs(cfg)
    _, raw = read_cohort(cfg.io.raw_cohort)
    generated = _load_generated(cfg, raw, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "roc").mkdir(exist_ok=True)
    write_resolved(cfg, out_dir)
    arms = list(cfg.protocol.arms)

    results = []
    cells: dict[tuple[str, float], list[tuple[float, float]]] = {}
    for ratio in cfg.protocol.ratios:
        for k in range(cfg.protocol.repeats):
            res = run_augmentation_protocol(
                raw, generated, cfg.classifier, ratio, child_seed(seed, f"repeat{k}"), arms
            )
            for arm in arms:
                rep = res.reports[arm]
                results.append((f"ratio{_fmt_ratio(ratio)}-rep{k}", arm, float(ratio), rep.accuracy, rep.auc))
                cells.setdefault((arm, ratio), []).append((rep.accuracy, rep.auc))
                if k == 0:
                    write_rows(
                        out_dir / "roc" / f"{arm}_ratio{_fmt_ratio(ratio)}.csv",
                        ("threshold", "fpr", "tpr"),
                        rep.roc_points,
                    )
    write_rows(out_dir / "results.csv", ("experiment_id", "arm", "ratio", "accuracy", "auc"), results)

    summary = []
    for (arm, ratio), vals in cells.items():
        v = np.array(vals)
        std = v.std(axis=0, ddof=1) if len(v) > 1 else np.zeros(2)
        summary.append((
            arm, float(ratio), len(v), float(v[:, 0].mean()), float(std[0]),
            float(v[:, 1].mean()), float(std[1]), int(is_unstable_ratio(ratio)),
        ))
    write_rows(
        out_dir / "summary.csv",
        ("arm", "ratio", "repeats", "accuracy_mean", "accuracy_std", "auc_mean", "auc_std", "unstable"),
        summary,
    )

    x_raw, y_raw = featurize_cohort(raw)
    x_gen, y_gen = featurize_cohort(generated)
    pts, var = pca_embed_2d(np.vstack([x_raw, x_gen]))
    labels = np.concatenate([y_raw, y_gen])
    sources = ["raw"] * len(y_raw) + ["generated"] * len(y_gen)
    write_rows(
        out_dir / "pca.csv",
        ("source", "label", "pc1", "pc2"),
        [(s, AUTISM if l else CONTROL, float(p[0]), float(p[1])) for s, l, p in zip(sources, labels, pts)],
    )
    write_rows(out_dir / "pca_variance.csv", ("component", "variance"), [(1, var[0]), (2, var[1])])
    return {
        f"{arm}@{_fmt_ratio(ratio)}": {"accuracy_mean": acc, "auc_mean": auc}
        for arm, ratio, _, acc, _, auc, _, _ in summary
    }


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def cmd_metrics(cohort_dir: Path, out_dir: Path, reference: Path | None = None, sigma: float = 1.0) -> dict:
    ids, graphs = read_cohort(cohort_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {
        "cohort": str(Path(cohort_dir).resolve()),
        "reference": None if reference is None else str(Path(reference).resolve()),
        "sigma": sigma,
    }
    (out_dir / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    rows = []
    for sid, g in zip(ids, graphs):
        possible = g.n * (g.n - 1) / 2
        rows.append((sid, g.label, g.n, g.edge_count, g.edge_count / possible if possible else 0.0,
                     avg_clustering(g)))
    write_rows(out_dir / "stats.csv", ("subject_id", "label", "n", "edges", "density", "avg_clustering"), rows)
    result: dict = {"graphs": len(graphs)}
    pool = list(graphs)
    sources = ["cohort"] * len(graphs)
    if reference is not None:
        _, ref = read_cohort(reference)
        mmd_rows = [("all", sigma, mmd_degree(graphs, ref, sigma))]
        for lab in (AUTISM, CONTROL):
            a = [g for g in graphs if g.label == lab]
            b = [g for g in ref if g.label == lab]
            if a and b:
                mmd_rows.append((lab, sigma, mmd_degree(a, b, sigma)))
        write_rows(out_dir / "mmd.csv", ("subset", "sigma", "mmd_degree"), mmd_rows)
        result["mmd_degree"] = mmd_rows[0][2]
        pool += ref
        sources += ["reference"] * len(ref)
    if len({g.n for g in pool}) == 1 and len(pool) >= 2:
        pts, var = pca_embed_2d(np.array([featurize(g) for g in pool]))
        write_rows(
            out_dir / "pca.csv",
            ("source", "label", "pc1", "pc2"),
            [(s, g.label, float(p[0]), float(p[1])) for s, g, p in zip(sources, pool, pts)],
        )
        write_rows(out_dir / "pca_variance.csv", ("component", "variance"), [(1, var[0]), (2, var[1])])
    return result
