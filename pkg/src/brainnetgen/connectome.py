"""ROI time series to binarized connectivity graphs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import LABELS, UNLABELED, InputError
from .graphs import LabeledGraph


@dataclass
class RoiTimeSeries:
    subject_id: str
    atlas_name: str
    tr_seconds: float
    signal: np.ndarray
    roi_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.signal = np.asarray(self.signal, dtype=float)
        if self.signal.ndim != 2:
            raise InputError("signal must be a 2-D array (n_rois x n_timepoints)")
        if self.n_rois < 2 or self.n_timepoints < 3:
            raise InputError(
                f"need at least 2 ROIs and 3 time points, got {self.signal.shape}"
            )
        if not np.all(np.isfinite(self.signal)):
            r, t = np.argwhere(~np.isfinite(self.signal))[0]
            raise InputError(f"non-finite value at ROI {r}, time point {t}")
        if self.tr_seconds <= 0:
            raise InputError("tr_seconds must be positive")
        if not self.roi_names:
            self.roi_names = [f"roi{i}" for i in range(self.n_rois)]

    @property
    def n_rois(self) -> int:
        return self.signal.shape[0]

    @property
    def n_timepoints(self) -> int:
        return self.signal.shape[1]

    def with_signal(self, signal: np.ndarray) -> "RoiTimeSeries":
        return RoiTimeSeries(
            self.subject_id, self.atlas_name, self.tr_seconds, signal, list(self.roi_names)
        )

    def zero_variance_rows(self) -> list[int]:
        centered = self.signal - self.signal.mean(axis=1, keepdims=True)
        return [int(i) for i in np.flatnonzero(np.all(centered == 0.0, axis=1))]


@dataclass
class CorrelationMatrix:
    values: np.ndarray
    subject_id: str = ""

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class BinaryConnectome:
    adjacency: np.ndarray
    label: str = UNLABELED
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.uint8)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if np.any(a > 1):
            raise ValueError("adjacency must be binary")
        if np.any(np.diag(a)):
            raise ValueError("self-loops are not allowed")
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if "upper_triangular" in self.provenance.get("transforms", []):
            if np.any(np.tril(a)):
                raise ValueError("upper-triangular connectome has lower-triangle entries")
        elif not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        self.adjacency = a

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edge_count(self) -> int:
        total = int(self.adjacency.sum())
        if "upper_triangular" in self.provenance.get("transforms", []):
            return total
        return total // 2

    def to_graph(self) -> LabeledGraph:
        upper = np.triu(self.adjacency | self.adjacency.T, k=1)
        return LabeledGraph.from_adjacency(upper, self.label)


def load_time_series(
    path: str | Path,
    subject_id: str | None = None,
    tr_seconds: float = 2.0,
    atlas_name: str = "unknown",
) -> RoiTimeSeries:
    """Read a time-series CSV: a header of ROI names, then one row per time point."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if any(not h for h in header) or len(set(header)) != len(header):
        raise InputError(f"{path}: malformed header (blank or duplicate ROI names)")
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InputError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}")
        vals = []
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}: non-numeric cell at row {r}, column {header[c]!r}")
            if not np.isfinite(v):
                raise InputError(f"{path}: non-finite value at row {r}, column {header[c]!r}")
            vals.append(v)
        data.append(vals)
    signal = np.array(data, dtype=float).T if data else np.empty((len(header), 0))
    return RoiTimeSeries(subject_id or path.stem, atlas_name, tr_seconds, signal, header)


def write_time_series(ts: RoiTimeSeries, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ts.roi_names)
        for row in ts.signal.T:
            w.writerow([repr(float(v)) for v in row])


def _check_variance(ts: RoiTimeSeries) -> None:
    bad = ts.zero_variance_rows()
    if bad:
        names = ", ".join(ts.roi_names[i] for i in bad)
        raise InputError(f"subject {ts.subject_id!r}: zero-variance ROI(s): {names}")


def global_signal_regression(ts: RoiTimeSeries) -> RoiTimeSeries:
    """Remove the across-ROI mean series from every ROI by least squares on [1, g]."""
    _check_variance(ts)
    g = ts.signal.mean(axis=0)
    if np.all(g == g[0]):
        raise InputError(f"subject {ts.subject_id!r}: global signal has zero variance")
    design = np.column_stack([np.ones_like(g), g])
    beta, *_ = np.linalg.lstsq(design, ts.signal.T, rcond=None)
    resid = ts.signal.T - design @ beta
    # one projection pass leaves O(eps * |r|) correlation with g; a second pass removes it
    beta2, *_ = np.linalg.lstsq(design, resid, rcond=None)
    resid = resid - design @ beta2
    return ts.with_signal(resid.T)


def bandpass_filter(
    ts: RoiTimeSeries, low_hz: float = 0.01, high_hz: float = 0.1
) -> RoiTimeSeries:
    """Ideal DFT-domain band-pass: zero every coefficient outside ``[low_hz, high_hz]``."""
    nyquist = 1.0 / (2.0 * ts.tr_seconds)
    if not 0.0 < low_hz < high_hz < nyquist:
        raise InputError(
            f"need 0 < low_hz < high_hz < Nyquist ({nyquist:g} Hz), got {low_hz}, {high_hz}"
        )
    n = ts.n_timepoints
    freqs = np.fft.rfftfreq(n, d=ts.tr_seconds)
    keep = (freqs >= low_hz) & (freqs <= high_hz)
    if not keep.any():
        raise InputError(
            f"no DFT bin falls in [{low_hz}, {high_hz}] Hz for {n} samples at TR={ts.tr_seconds}s"
        )
    spectrum = np.fft.rfft(ts.signal, axis=1)
    spectrum[:, ~keep] = 0.0
    return ts.with_signal(np.fft.irfft(spectrum, n=n, axis=1))


def pearson_matrix(ts: RoiTimeSeries) -> CorrelationMatrix:
    _check_variance(ts)
    x = ts.signal - ts.signal.mean(axis=1, keepdims=True)
    norms = np.sqrt((x * x).sum(axis=1))
    corr = (x @ x.T) / np.outer(norms, norms)
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return CorrelationMatrix(corr, ts.subject_id)


def _off_diagonal(corr: CorrelationMatrix) -> np.ndarray:
    return corr.values[np.triu_indices(corr.n, k=1)]


def binarize_fixed(
    corr: CorrelationMatrix, tau: float, label: str = UNLABELED
) -> BinaryConnectome:
    """Edge iff correlation strictly exceeds ``tau``."""
    if not -1.0 < tau < 1.0:
        raise InputError(f"threshold must lie in (-1, 1), got {tau}")
    return _threshold(corr, tau, f"fixed({tau:g})", label)


def _threshold(corr: CorrelationMatrix, tau: float, rule: str, label: str) -> BinaryConnectome:
    adj = (corr.values > tau).astype(np.uint8)
    np.fill_diagonal(adj, 0)
    adj = adj & adj.T
    prov = {"threshold_rule": rule, "threshold": float(tau), "transforms": [],
            "subject_id": corr.subject_id}
    return BinaryConnectome(adj, label, prov)


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Bin boundary maximizing between-class variance over an equal-width histogram.

    Candidate thresholds are the interior bin edges; values in bins below the
    edge form the lower class. Bin centres stand in for member values. Ties go
    to the lowest edge.
    """
    values = np.asarray(values, dtype=float).ravel()
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise InputError("Otsu threshold is undefined when all values are equal")
    width = (hi - lo) / bins
    idx = np.minimum(((values - lo) / width).astype(int), bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(float)
    centers = lo + (np.arange(bins) + 0.5) * width

    w0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(counts * centers)[:-1]
    total, stotal = counts.sum(), (counts * centers).sum()
    w1 = total - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = s0 / w0
        mu1 = (stotal - s0) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between = np.where((w0 > 0) & (w1 > 0), between, -np.inf)
    k = int(np.argmax(between)) + 1
    return lo + k * width


def binarize_otsu(
    corr: CorrelationMatrix, bins: int = 256, label: str = UNLABELED
) -> BinaryConnectome:
    tau = otsu_threshold(_off_diagonal(corr), bins)
    return _threshold(corr, tau, f"otsu({bins})", label)


def _with_transform(g: BinaryConnectome, adj: np.ndarray, name: str) -> BinaryConnectome:
    prov = dict(g.provenance)
    prov["transforms"] = list(prov.get("transforms", [])) + [name]
    return BinaryConnectome(adj, g.label, prov)


def transform_reverse(g: BinaryConnectome) -> BinaryConnectome:
    """Swap edges and non-edges off the diagonal."""
    adj = 1 - g.adjacency
    np.fill_diagonal(adj, 0)
    if "upper_triangular" in g.provenance.get("transforms", []):
        adj = np.triu(adj, k=1)
    return _with_transform(g, adj.astype(np.uint8), "reverse")


def transform_upper_triangular(g: BinaryConnectome) -> BinaryConnectome:
    return _with_transform(g, np.triu(g.adjacency, k=1), "upper_triangular")
