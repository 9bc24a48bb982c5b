"""On-disk formats: edge-list graphs, cohort directories and manifests."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import AUTISM, CONTROL, LABELS, InputError
from .graphs import LabeledGraph


def write_edge_list(g: LabeledGraph, path: str | Path) -> None:
    lines = [f"n {g.n} label {g.label}"]
    lines += [f"{i} {j}" for i, j in sorted(g.edges)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path: str | Path) -> LabeledGraph:
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise InputError(f"{path}: empty connectome file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "n" or head[2] != "label":
        raise InputError(f"{path}: first line must read 'n <node_count> label <label>'")
    try:
        n = int(head[1])
    except ValueError:
        raise InputError(f"{path}: node count {head[1]!r} is not an integer")
    if head[3] not in LABELS:
        raise InputError(f"{path}: unknown label {head[3]!r}")
    edges = set()
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        try:
            i, j = (int(p) for p in parts)
        except ValueError:
            raise InputError(f"{path}: line {lineno} is not an 'i j' pair")
        if not 0 <= i < j < n:
            raise InputError(f"{path}: line {lineno} needs 0 <= i < j < {n}, got {i} {j}")
        edges.add((i, j))
    return LabeledGraph(n, frozenset(edges), head[3])


@dataclass
class TimeSeriesEntry:
    subject_id: str
    path: Path
    label: str
    tr_seconds: float


def read_time_series_manifest(path: str | Path) -> list[TimeSeriesEntry]:
    """Rows of subject_id, path, label, tr_seconds; paths resolve against the manifest's folder."""
    path = Path(path)
    rows = _read_csv(path, ("subject_id", "path", "label", "tr_seconds"))
    out = []
    for r, row in enumerate(rows, start=2):
        if row["label"] not in (AUTISM, CONTROL):
            raise InputError(f"{path}: row {r} label must be autism or control")
        try:
            tr = float(row["tr_seconds"])
        except ValueError:
            raise InputError(f"{path}: row {r} tr_seconds is not a number")
        out.append(TimeSeriesEntry(row["subject_id"], path.parent / row["path"], row["label"], tr))
    return out


def write_time_series_manifest(entries: Iterable[TimeSeriesEntry], path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "path", "label", "tr_seconds"])
        for e in entries:
            rel = Path(e.path)
            if rel.is_absolute():
                rel = rel.relative_to(path.parent)
            w.writerow([e.subject_id, rel.as_posix(), e.label, repr(float(e.tr_seconds))])


def write_cohort(
    graphs: Sequence[LabeledGraph], out_dir: str | Path, ids: Sequence[str] | None = None
) -> Path:
    """Write ``graphs/<id>.txt`` edge lists and ``manifest.csv`` (subject_id, path, label)."""
    out_dir = Path(out_dir)
    (out_dir / "graphs").mkdir(parents=True, exist_ok=True)
    ids = list(ids) if ids is not None else [f"g{i:05d}" for i in range(len(graphs))]
    if len(ids) != len(graphs):
        raise ValueError("one id per graph required")
    with open(out_dir / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "path", "label"])
        for sid, g in zip(ids, graphs):
            rel = f"graphs/{sid}.txt"
            write_edge_list(g, out_dir / rel)
            w.writerow([sid, rel, g.label])
    return out_dir / "manifest.csv"


def read_cohort(cohort_dir: str | Path) -> tuple[list[str], list[LabeledGraph]]:
    cohort_dir = Path(cohort_dir)
    manifest = cohort_dir / "manifest.csv"
    if not manifest.is_file():
        raise InputError(f"{cohort_dir}: no manifest.csv (not a cohort directory)")
    ids, graphs = [], []
    for r, row in enumerate(_read_csv(manifest, ("subject_id", "path", "label")), start=2):
        g = read_edge_list(cohort_dir / row["path"])
        if g.label != row["label"]:
            raise InputError(f"{manifest}: row {r} label disagrees with {row['path']}")
        ids.append(row["subject_id"])
        graphs.append(g)
    return ids, graphs


def _read_csv(path: Path, required: tuple[str, ...]) -> list[dict[str, str]]:
    if not path.is_file():
        raise InputError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
        return [{k: (v or "").strip() for k, v in row.items()} for row in reader]


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV writer used for every results table; floats are written with ``repr``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
