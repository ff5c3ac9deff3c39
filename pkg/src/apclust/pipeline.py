"""End-to-end pipeline: ingest crash points, sweep (q x sample size), classify, export.

One sweep runs the full chain per cell: sample, project, similarity,
preference, message passing, unit construction. Each sample size draws one
fixed sample that is reused across every q level, so the preference
parameter is the only thing varying along a row of the report. Outputs are
deterministic byte-for-byte given the same manifest and inputs.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .core import ApcConfig, run_apc
from .errors import ApclustError, ConvergenceError, FormatError, InputError, ResourceLimitError
from .geo import GeoPoint, centroid, planar_to_array, project, unproject
from .units import ScaleThresholds, SweepCell, UnitOfAnalysis, build_units, derive_meso_threshold

log = logging.getLogger("apclust")

THREADS_ENV_VAR = "APCLUST_THREADS"
# Dense message passing holds S, R, A plus about two working matrices.
_MATRICES_PER_RUN = 5


@dataclass
class RunManifest:
    """Everything one sweep needs: inputs, parameter grid, thresholds, output location."""

    input_crashes: Path
    q_levels: list[float]
    sample_sizes: list[int]
    output_dir: Path
    input_intersections: Path | None = None
    rng_seed: int = 0
    thresholds: ScaleThresholds | str = field(default_factory=ScaleThresholds)
    damping: float = 0.9
    max_iterations: int = 1000
    convergence_window: int = 100
    jitter_scale: float = 0.0
    buffer_m: float = 15.0
    mem_warn_gb: float = 2.0
    mem_cap_gb: float = 8.0
    require_convergence: bool = False

    def validate(self) -> None:
        if not self.q_levels:
            raise InputError("q_levels must be non-empty")
        for q in self.q_levels:
            if not 0.0 <= q <= 1.0:
                raise InputError(f"q level {q} out of [0, 1]")
        if not self.sample_sizes:
            raise InputError("sample_sizes must be non-empty")
        for k in self.sample_sizes:
            if k < 2:
                raise InputError(f"sample size {k} below the minimum of 2")
        if isinstance(self.thresholds, str) and self.thresholds != "derive":
            raise InputError(f"thresholds must be explicit or 'derive', got {self.thresholds!r}")
        if self.thresholds == "derive" and self.input_intersections is None:
            raise InputError("thresholds='derive' requires an intersections input")


@dataclass
class SweepReport:
    """All sweep cells plus the run metadata behind them."""

    cells: list[SweepCell]
    dataset_size: int
    seed: int
    timestamp: str


@dataclass
class IngestResult:
    """Parsed points plus row accounting (valid + dropped = total)."""

    points: list[GeoPoint]
    n_rows: int
    n_dropped: int


def ingest_crashes(path) -> IngestResult:
    """Read lat/lon decimal-degree points from header-keyed delimited text.

    Columns other than lat/lon are ignored. Rows with missing, unparseable,
    or out-of-range coordinates are dropped and counted in a logged warning.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    points: list[GeoPoint] = []
    n_rows = 0
    n_dropped = 0
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise FormatError(f"{path}: empty file, expected a header with lat and lon")
        fields = {name.strip().lower(): name for name in reader.fieldnames}
        if "lat" not in fields or "lon" not in fields:
            raise FormatError(f"{path}: header must contain lat and lon columns, got {reader.fieldnames}")
        lat_col = fields["lat"]
        lon_col = fields["lon"]
        for row in reader:
            n_rows += 1
            try:
                lat = float(row[lat_col])
                lon = float(row[lon_col])
            except (TypeError, ValueError):
                n_dropped += 1
                continue
            if not (math.isfinite(lat) and math.isfinite(lon)):
                n_dropped += 1
                continue
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                n_dropped += 1
                continue
            points.append(GeoPoint(lon=lon, lat=lat))
    if n_dropped:
        log.warning("%s: dropped %d of %d rows with invalid coordinates", path, n_dropped, n_rows)
    if not points:
        raise InputError(f"{path}: no valid coordinate rows")
    return IngestResult(points=points, n_rows=n_rows, n_dropped=n_dropped)


def sample_points(points, k: int, seed) -> list:
    """Uniform sample of k items without replacement, in input order, deterministic per seed."""
    n = len(points)
    if k < 2:
        raise InputError(f"sample size {k} below the minimum of 2")
    if k > n:
        raise InputError(f"sample size {k} exceeds the {n} available points")
    if k == n:
        return list(points)
    idx = _sample_indices(n, k, seed)
    return [points[i] for i in idx]


def _sample_indices(n: int, k: int, seed) -> np.ndarray:
    if k == n:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=k, replace=False)
    idx.sort()
    return idx


def estimate_apc_memory_gb(n: int) -> float:
    """Rough peak estimate for one run: S, R, A and working copies at 64-bit."""
    return _MATRICES_PER_RUN * 8.0 * n * n / 1e9


def _cell_seed(rng_seed: int, sample_size: int, q: float) -> int:
    seq = np.random.SeedSequence([rng_seed, sample_size, int(round(q * 1e9))])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _max_workers(n_cells: int) -> int:
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None:
        limit = os.cpu_count() or 1
    else:
        try:
            limit = int(raw)
        except ValueError:
            raise InputError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}")
        if limit < 1:
            raise InputError(f"{THREADS_ENV_VAR} must be >= 1, got {limit}")
    return max(1, min(limit, n_cells))


def run_sweep(manifest: RunManifest) -> SweepReport:
    """Run every (q, sample size) cell, write per-cell GeoJSON and the summary table.

    Cells are independent jobs sharing read-only inputs and disjoint output
    files; they run concurrently up to the APCLUST_THREADS cap. A failed
    clustering run aborts the sweep naming the offending cell; failed
    GeoJSON exports only warn, and the summary is still written.
    """
    manifest.validate()
    out_dir = Path(manifest.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    crashes = ingest_crashes(manifest.input_crashes)
    n_total = len(crashes.points)
    for k in manifest.sample_sizes:
        if k > n_total:
            raise InputError(f"sample size {k} exceeds the {n_total}-point dataset")

    est_gb = estimate_apc_memory_gb(max(manifest.sample_sizes))
    if est_gb > manifest.mem_cap_gb:
        raise ResourceLimitError(
            f"estimated {est_gb:.1f} GB for the largest run exceeds the {manifest.mem_cap_gb:.1f} GB cap"
        )
    if est_gb > manifest.mem_warn_gb:
        log.warning("largest run estimated at %.1f GB resident", est_gb)

    # One shared planar frame: origin is the centroid of the full dataset.
    origin = centroid(crashes.points)
    xy_all = planar_to_array(project(crashes.points, origin))

    inter_xy = np.empty((0, 2))
    if manifest.input_intersections is not None:
        inter = ingest_crashes(manifest.input_intersections)
        inter_xy = planar_to_array(project(inter.points, origin))

    thresholds = manifest.thresholds
    if thresholds == "derive":
        bounds = (
            inter_xy[:, 0].min(),
            inter_xy[:, 1].min(),
            inter_xy[:, 0].max(),
            inter_xy[:, 1].max(),
        )
        meso_max = derive_meso_threshold(bounds, inter_xy, cell_km=1.0)
        thresholds = ScaleThresholds(meso_max=meso_max)
        log.info("derived meso threshold: %d intersections", meso_max)

    samples = {
        k: xy_all[_sample_indices(n_total, k, np.random.SeedSequence([manifest.rng_seed, k]))]
        for k in manifest.sample_sizes
    }

    def run_cell(q: float, k: int) -> tuple[list[UnitOfAnalysis], SweepCell, bool]:
        config = ApcConfig(
            q=q,
            damping=manifest.damping,
            max_iterations=manifest.max_iterations,
            convergence_window=manifest.convergence_window,
            jitter_scale=manifest.jitter_scale,
            rng_seed=_cell_seed(manifest.rng_seed, k, q),
        )
        result = run_apc(samples[k], config)
        units, cell = build_units(
            result,
            samples[k],
            inter_xy,
            thresholds,
            q=q,
            sample_size=k,
            buffer_m=manifest.buffer_m,
        )
        return units, cell, result.converged

    grid = [(q, k) for q in manifest.q_levels for k in manifest.sample_sizes]
    outcomes: dict[tuple[float, int], tuple[list[UnitOfAnalysis], SweepCell, bool]] = {}
    with ThreadPoolExecutor(max_workers=_max_workers(len(grid))) as pool:
        futures = {(q, k): pool.submit(run_cell, q, k) for q, k in grid}
        for (q, k), fut in futures.items():
            try:
                outcomes[(q, k)] = fut.result()
            except ApclustError as exc:
                raise type(exc)(f"sweep cell q={q:g} sample={k} failed: {exc}") from exc
            except Exception as exc:
                raise ApclustError(f"sweep cell q={q:g} sample={k} failed: {exc}") from exc

    cells = []
    any_converged = False
    for q, k in grid:
        units, cell, converged = outcomes[(q, k)]
        cells.append(cell)
        any_converged = any_converged or converged
        geojson_path = out_dir / f"clusters_q{q:g}_s{k}.geojson"
        try:
            export_geojson(units, origin, geojson_path)
        except Exception as exc:
            log.warning("GeoJSON export failed for %s: %s", geojson_path, exc)

    report = SweepReport(
        cells=cells,
        dataset_size=n_total,
        seed=manifest.rng_seed,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    export_summary(report, out_dir / "summary.csv")

    if manifest.require_convergence and not any_converged:
        raise ConvergenceError("no sweep cell converged within the iteration budget")
    return report


def export_geojson(units: list[UnitOfAnalysis], origin: GeoPoint, path) -> None:
    """Write a FeatureCollection of EPSG:4326 polygons, one feature per unit.

    Rings are un-projected through the inverse of the planar projection and
    emitted with 7 decimal places.
    """
    if not units:
        raise InputError("no units to export")
    features = []
    for u in units:
        ring = unproject(u.polygon.ring, origin)
        coords = [[round(g.lon, 7), round(g.lat, 7)] for g in ring]
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [coords]},
                "properties": {
                    "cluster_id": u.cluster_id,
                    "n_points": u.n_points,
                    "area_km2": u.polygon.area_km2,
                    "n_intersections": u.n_intersections,
                    "level": u.level,
                },
            }
        )
    payload = {"type": "FeatureCollection", "features": features}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def export_summary(report: SweepReport, path) -> None:
    """Write the sweep table: q, sample size, cluster count, medians, level.

    Areas use 3 decimals and medians 1, so re-running an identical manifest
    reproduces the file byte for byte.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(
            ["q", "sample_size", "n_clusters", "median_area_km2", "median_intersections", "level"]
        )
        for cell in report.cells:
            writer.writerow(
                [
                    f"{cell.q:g}",
                    cell.sample_size,
                    cell.n_clusters,
                    f"{cell.median_area_km2:.3f}",
                    f"{cell.median_intersections:.1f}",
                    cell.level,
                ]
            )
