"""Dataset ingestion, validation, range scaling, grid construction, results files.

Two CSV layouts are accepted for time series:

  long:  series,time,gene,value        (blank value = missing)
  wide:  series,time,<gene1>,<gene2>,...   (series column optional)

Perturbation / steady-state data live in a second CSV with columns
perturbed_gene,kind,<gene1>,...  where kind is one of knockout, knockdown,
steady_state, multifactorial (perturbed_gene blank for the latter two).

Results are a ranked edge list CSV plus a JSON metadata sidecar.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gpgrn.density import Grid
from gpgrn.errors import InvalidDataError

KO_KINDS = ("knockout", "knockdown")
SS_KINDS = ("steady_state", "multifactorial")


@dataclass
class TimeSeries:
    """One experiment: strictly increasing timestamps, values, observation mask."""

    times: np.ndarray       # (m,)
    values: np.ndarray      # (m, n)
    mask: np.ndarray        # (m, n) bool, True = observed

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != self.mask.shape or self.values.shape[0] != self.times.size:
            raise InvalidDataError("series values/mask/times shapes are inconsistent")
        if self.times.size < 2:
            raise InvalidDataError("a series needs at least two time points")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidDataError("timestamps must be strictly increasing within a series")


@dataclass
class KnockoutExperiment:
    gene: int               # perturbed gene index
    kind: str               # "knockout" or "knockdown"
    values: np.ndarray      # steady-state n-vector

    def __post_init__(self):
        if self.kind not in KO_KINDS:
            raise InvalidDataError(f"unknown perturbation kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=float)


@dataclass
class Dataset:
    genes: list[str]
    series: list[TimeSeries]
    ko_experiments: list[KnockoutExperiment] = field(default_factory=list)
    ss_measurements: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.genes)
        for s in self.series:
            if s.values.shape[1] != n:
                raise InvalidDataError("series column count does not match gene list")
        if not self.series:
            raise InvalidDataError("dataset needs at least one time series")

    @property
    def n_genes(self) -> int:
        return len(self.genes)

    @property
    def stacked_values(self) -> np.ndarray:
        return np.vstack([s.values for s in self.series])

    @property
    def stacked_mask(self) -> np.ndarray:
        return np.vstack([s.mask for s in self.series])

    def ko_points_for_gene(self, gene: int) -> np.ndarray:
        """Steady states usable when inferring regulators of `gene`.

        Experiments perturbing the gene itself are excluded: its dynamics
        were tampered with there, so they carry no information about its
        drift component.
        """
        pts = [e.values for e in self.ko_experiments if e.gene != gene]
        return np.array(pts, dtype=float).reshape(len(pts), self.n_genes)

    def all_steady_points(self) -> np.ndarray:
        """Every steady-state-like vector: ko/kd plus direct steady states."""
        pts = [e.values for e in self.ko_experiments] + list(self.ss_measurements)
        return np.array(pts, dtype=float).reshape(len(pts), self.n_genes)


@dataclass(frozen=True)
class ScalingTransform:
    """Per-gene affine map v -> (v - offset) / scale with unit resulting range."""

    offset: np.ndarray
    scale: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.offset) / self.scale

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.scale + self.offset


def _parse_float(cell: str, where: str) -> float:
    try:
        return float(cell)
    except ValueError as exc:
        raise InvalidDataError(f"cannot parse number {cell!r} at {where}") from exc


def load_dataset(
    data_path: str | Path, perturbations_path: str | Path | None = None
) -> Dataset:
    """Load and validate a dataset from CSV files; missing cells become mask bits."""
    data_path = Path(data_path)
    if not data_path.exists():
        raise InvalidDataError(f"data file not found: {data_path}")
    with open(data_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidDataError(f"{data_path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:4] == ["series", "time", "gene", "value"]:
        dataset = _parse_long(rows[1:], data_path)
    elif "time" in header[:2]:
        dataset = _parse_wide(header, rows[1:], data_path)
    else:
        raise InvalidDataError(
            f"{data_path}: unrecognized header {header!r}; expected long or wide layout"
        )
    if perturbations_path is not None:
        _load_perturbations(dataset, Path(perturbations_path))
    return dataset


def _parse_long(rows, path: Path) -> Dataset:
    genes: list[str] = []
    per_series: dict[str, dict[float, dict[str, float | None]]] = {}
    for ln, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise InvalidDataError(f"{path}:{ln}: expected 4 columns, got {len(row)}")
        series, time_s, gene, value_s = (c.strip() for c in row)
        t = _parse_float(time_s, f"{path}:{ln} column 2")
        if gene not in genes:
            genes.append(gene)
        cell = None if value_s == "" else _parse_float(value_s, f"{path}:{ln} column 4")
        tmap = per_series.setdefault(series, {})
        gmap = tmap.setdefault(t, {})
        if gene in gmap:
            raise InvalidDataError(f"{path}:{ln}: duplicate entry for series {series}, t={t}, gene {gene}")
        gmap[gene] = cell
    series_list = []
    for name in per_series:
        times = sorted(per_series[name])
        vals = np.full((len(times), len(genes)), np.nan)
        mask = np.zeros((len(times), len(genes)), dtype=bool)
        for j, t in enumerate(times):
            for g, v in per_series[name][t].items():
                gi = genes.index(g)
                if v is not None:
                    vals[j, gi] = v
                    mask[j, gi] = True
        vals[~mask] = 0.0
        series_list.append(TimeSeries(np.array(times), vals, mask))
    return Dataset(genes=genes, series=series_list)


def _parse_wide(header, rows, path: Path) -> Dataset:
    has_series = header[0] == "series"
    time_col = 1 if has_series else 0
    genes = header[time_col + 1:]
    if not genes:
        raise InvalidDataError(f"{path}: wide layout needs at least one gene column")
    buckets: dict[str, list[tuple[float, list[float | None]]]] = {}
    for ln, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InvalidDataError(f"{path}:{ln}: expected {len(header)} columns, got {len(row)}")
        series = row[0].strip() if has_series else "1"
        t = _parse_float(row[time_col].strip(), f"{path}:{ln}")
        cells = [
            None if c.strip() == "" else _parse_float(c.strip(), f"{path}:{ln}")
            for c in row[time_col + 1:]
        ]
        buckets.setdefault(series, []).append((t, cells))
    series_list = []
    for name, entries in buckets.items():
        times = np.array([t for t, _ in entries])
        if np.any(np.diff(times) <= 0):
            raise InvalidDataError(
                f"{path}: series {name!r}: timestamps must be strictly increasing (duplicates?)"
            )
        vals = np.array([[0.0 if c is None else c for c in cells] for _, cells in entries])
        mask = np.array([[c is not None for c in cells] for _, cells in entries])
        series_list.append(TimeSeries(times, vals, mask))
    return Dataset(genes=genes, series=series_list)


def _load_perturbations(dataset: Dataset, path: Path) -> None:
    if not path.exists():
        raise InvalidDataError(f"perturbations file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidDataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["perturbed_gene", "kind"] or header[2:] != dataset.genes:
        raise InvalidDataError(
            f"{path}: header must be perturbed_gene,kind,<genes matching the dataset>"
        )
    for ln, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InvalidDataError(f"{path}:{ln}: expected {len(header)} columns")
        gene_s, kind = row[0].strip(), row[1].strip()
        values = np.array([_parse_float(c.strip(), f"{path}:{ln}") for c in row[2:]])
        if kind in KO_KINDS:
            if gene_s not in dataset.genes:
                raise InvalidDataError(f"{path}:{ln}: unknown perturbed gene {gene_s!r}")
            dataset.ko_experiments.append(
                KnockoutExperiment(dataset.genes.index(gene_s), kind, values)
            )
        elif kind in SS_KINDS:
            dataset.ss_measurements.append(values)
        else:
            raise InvalidDataError(f"{path}:{ln}: unknown kind {kind!r}")


def scale_dataset(dataset: Dataset) -> tuple[Dataset, ScalingTransform]:
    """Scale so each gene's observed range (across all data) is exactly one.

    Perturbation and steady-state vectors are transformed with the same
    per-gene map.  Constant genes keep scale 1.
    """
    n = dataset.n_genes
    vals, mask = dataset.stacked_values, dataset.stacked_mask
    lo = np.where(mask, vals, np.inf).min(axis=0)
    hi = np.where(mask, vals, -np.inf).max(axis=0)
    extra = dataset.all_steady_points()
    if extra.size:
        lo = np.minimum(lo, extra.min(axis=0))
        hi = np.maximum(hi, extra.max(axis=0))
    rng = hi - lo
    constant = ~np.isfinite(rng) | (rng <= 0)
    scale = np.where(constant, 1.0, rng)
    offset = np.where(np.isfinite(lo), lo, 0.0)
    tf = ScalingTransform(offset=offset, scale=scale)
    scaled = Dataset(
        genes=list(dataset.genes),
        series=[
            TimeSeries(s.times.copy(), tf.apply(s.values), s.mask.copy())
            for s in dataset.series
        ],
        ko_experiments=[
            KnockoutExperiment(e.gene, e.kind, tf.apply(e.values))
            for e in dataset.ko_experiments
        ],
        ss_measurements=[tf.apply(v) for v in dataset.ss_measurements],
    )
    return scaled, tf


def build_grid(dataset: Dataset, refinement: int = 3) -> Grid:
    """Concatenated grid subdividing each measurement interval into equal steps."""
    if refinement < 1:
        raise InvalidDataError("refinement must be >= 1")
    taus, meas_index, starts = [], [], []
    offset = 0
    for s in dataset.series:
        starts.append(offset)
        pts = [s.times[0]]
        idx = [0]
        for j in range(1, s.times.size):
            t0, t1 = s.times[j - 1], s.times[j]
            inner = t0 + (t1 - t0) * np.arange(1, refinement + 1) / refinement
            pts.extend(inner.tolist())
            idx.append(len(pts) - 1)
        # snap subdivision endpoints exactly onto the measurement times
        pts_arr = np.array(pts)
        pts_arr[idx] = s.times
        taus.append(pts_arr)
        meas_index.extend(offset + np.array(idx))
        offset += pts_arr.size
    return Grid(
        tau=np.concatenate(taus),
        meas_index=np.array(meas_index, dtype=int),
        series_starts=np.array(starts, dtype=int),
    )


def save_results(matrix: np.ndarray, genes: list[str], meta: dict, path: str | Path) -> None:
    """Write the ranked edge list CSV and a JSON metadata sidecar.

    Edges are sorted by confidence descending (index order breaks ties so the
    output is deterministic); self-loops are included but flagged.
    """
    path = Path(path)
    n = len(genes)
    entries = []
    for i in range(n):          # target gene
        for j in range(n):      # source gene
            entries.append((j, i, float(matrix[i, j]), i == j))
    entries.sort(key=lambda e: (-e[2], e[0], e[1]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["from", "to", "confidence", "self_loop"])
        for j, i, conf, is_self in entries:
            w.writerow([genes[j], genes[i], f"{conf:.10g}", int(is_self)])
    with open(path.with_suffix(path.suffix + ".meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_edge_matrix(path: str | Path) -> tuple[np.ndarray, list[str]]:
    """Reconstruct a confidence/adjacency matrix from an edge list CSV.

    Accepts the save_results output as well as plain from,to,value files.
    Missing pairs default to 0.
    """
    path = Path(path)
    if not path.exists():
        raise InvalidDataError(f"edge file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidDataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "from" or header[1] != "to":
        raise InvalidDataError(f"{path}: expected header starting with from,to")
    has_value = len(header) >= 3
    edges = []
    genes: list[str] = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        src, dst = row[0].strip(), row[1].strip()
        val = _parse_float(row[2].strip(), f"{path}:{ln}") if has_value else 1.0
        for g in (src, dst):
            if g not in genes:
                genes.append(g)
        edges.append((src, dst, val))
    genes = sorted(genes)
    n = len(genes)
    mat = np.zeros((n, n))
    for src, dst, val in edges:
        mat[genes.index(dst), genes.index(src)] = val
    return mat, genes
