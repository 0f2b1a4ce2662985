"""Ingestion of location-keyed tables and assembly of the normalized data cube.

Every source (irradiation atlas, weather stations, PVGIS-style production
estimates, plant capacity factors) is a CSV keyed by ``lat,lon``. Sources are
attached to a query grid by k-nearest-neighbour mean under great-circle
distance and then min-max normalized column by column.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import geo
from .errors import (
    ColumnConflict,
    DisjointCoverage,
    EmptyTable,
    KNotSatisfiable,
    MissingColumn,
    NonNumericCell,
    UnknownColumn,
    ValidationError,
)

logger = logging.getLogger(__name__)

ATLAS_COLUMNS = ("global_horizontal", "tilted", "direct_normal", "diffuse", "par")
STATION_COLUMNS = (
    "total_solar_irradiance",
    "days_with_precipitation",
    "atm_pressure",
    "avg_max_temp",
    "avg_rel_humidity",
    "avg_wind_speed",
    "avg_cloudiness",
    "total_precipitation",
    "avg_comp_temp",
    "avg_visibility",
    "avg_min_temp",
    "evaporation",
)
PVGIS_MONTHLY = tuple(f"em_{m:02d}" for m in range(1, 13))
PVGIS_STD = tuple(f"sd_{m:02d}" for m in range(1, 13))
PVGIS_COLUMNS = PVGIS_MONTHLY + PVGIS_STD
PVGIS_CUBE_COLUMN = "pvgis_monthly_mean"
PLANT_COLUMNS = ("capacity_factor",)

SOURCE_TAGS = ("atlas", "stations", "pvgis", "plants", "other")

# schema name -> (required value columns, whether alt is required)
SCHEMAS: Dict[str, tuple] = {
    "atlas": (ATLAS_COLUMNS, False),
    "stations": (STATION_COLUMNS, True),
    "pvgis": (PVGIS_COLUMNS, False),
    "plants": (PLANT_COLUMNS, False),
    "grid": ((), False),
    "other": ((), False),
}

CATALOG: Dict[str, tuple] = {
    "atlas": ATLAS_COLUMNS,
    "stations": STATION_COLUMNS,
    "pvgis": PVGIS_COLUMNS,
    "plants": PLANT_COLUMNS,
}
# column order of a cube
CUBE_ORDER = ATLAS_COLUMNS + STATION_COLUMNS + (PVGIS_CUBE_COLUMN,) + PLANT_COLUMNS


@dataclass
class Table:
    lat: np.ndarray
    lon: np.ndarray
    columns: Dict[str, np.ndarray] = field(default_factory=dict)
    source_tag: str = "other"
    alt: Optional[np.ndarray] = None

    def __post_init__(self):
        self.lat = np.asarray(self.lat, dtype=float)
        self.lon = np.asarray(self.lon, dtype=float)
        geo.as_coords((self.lat, self.lon))
        n = len(self.lat)
        cols = {}
        for name, values in self.columns.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != (n,):
                raise ValidationError(f"column {name!r} has {arr.shape} values for {n} rows")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"column {name!r} contains non-finite values")
            cols[name] = arr
        self.columns = cols
        if self.source_tag not in SOURCE_TAGS:
            raise ValidationError(f"unknown source tag {self.source_tag!r}")
        if self.alt is not None:
            self.alt = np.asarray(self.alt, dtype=float)

    @property
    def n_rows(self) -> int:
        return len(self.lat)

    @property
    def names(self) -> List[str]:
        return list(self.columns)

    def matrix(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        names = self.names if names is None else list(names)
        if not names:
            return np.empty((self.n_rows, 0))
        return np.column_stack([self.columns[n] for n in names])


@dataclass
class NormalizationParams:
    mins: Dict[str, float]
    maxs: Dict[str, float]
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            name: {"min": self.mins[name], "max": self.maxs[name]} for name in self.mins
        }

    @classmethod
    def from_dict(cls, data: dict, warnings=()) -> "NormalizationParams":
        return cls(
            mins={k: float(v["min"]) for k, v in data.items()},
            maxs={k: float(v["max"]) for k, v in data.items()},
            warnings=list(warnings),
        )


@dataclass
class DataCube:
    table: Table
    norm: NormalizationParams
    provenance: Dict[str, str]

    @property
    def names(self) -> List[str]:
        return self.table.names

    @property
    def n_rows(self) -> int:
        return self.table.n_rows


def parse_cell(text: str, row: int, col: str) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise NonNumericCell(row, col, text) from None
    if not math.isfinite(value):
        raise NonNumericCell(row, col, text)
    return value


def read_columns_csv(path) -> tuple[List[str], Dict[str, np.ndarray]]:
    """Strict numeric CSV reader: header row mandatory, every cell a finite float."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyTable(f"{path}: no header row") from None
        if len(set(header)) != len(header):
            raise ValidationError(f"{path}: duplicate column names in header")
        rows = []
        for i, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise ValidationError(
                    f"{path}: row {i} has {len(record)} cells, header has {len(header)}"
                )
            rows.append([parse_cell(c, i, h) for c, h in zip(record, header)])
    if not rows:
        raise EmptyTable(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    return header, {h: data[:, j].copy() for j, h in enumerate(header)}


def write_columns_csv(path, header: Sequence[str], columns: Sequence[Sequence[float]]) -> None:
    """Write equal-length numeric columns with round-trip float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([repr(float(v)) for v in row])


def load_table(path, expected: str = "other") -> Table:
    """Read a CSV into a :class:`Table`, checking the columns of schema ``expected``."""
    if expected not in SCHEMAS:
        raise ValidationError(f"unknown schema {expected!r}; expected one of {sorted(SCHEMAS)}")
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    header, cols = read_columns_csv(path)
    required, needs_alt = SCHEMAS[expected]
    for name in ("lat", "lon") + (("alt",) if needs_alt else ()) + tuple(required):
        if name not in cols:
            raise MissingColumn(name)
    lat = cols.pop("lat")
    lon = cols.pop("lon")
    alt = cols.pop("alt", None)
    tag = expected if expected in SOURCE_TAGS else "other"
    return Table(lat=lat, lon=lon, columns=cols, source_tag=tag, alt=alt)


def normalize(table: Table) -> tuple[Table, NormalizationParams]:
    """Min-max scale every column to [0, 1]; constant columns become zeros."""
    if table.n_rows == 0:
        raise EmptyTable("cannot normalize an empty table")
    mins, maxs, warns, out = {}, {}, [], {}
    for name, values in table.columns.items():
        lo, hi = float(values.min()), float(values.max())
        mins[name], maxs[name] = lo, hi
        if hi > lo:
            out[name] = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
        else:
            out[name] = np.zeros_like(values)
            warns.append(f"column {name!r} is constant ({lo!r}); normalized to zeros")
            logger.warning(warns[-1])
    normed = Table(table.lat.copy(), table.lon.copy(), out, table.source_tag,
                   None if table.alt is None else table.alt.copy())
    return normed, NormalizationParams(mins, maxs, warns)


def denormalize(table: Table, params: NormalizationParams) -> Table:
    out = {}
    for name, values in table.columns.items():
        lo, hi = params.mins[name], params.maxs[name]
        out[name] = lo + values * (hi - lo)
    return Table(table.lat.copy(), table.lon.copy(), out, table.source_tag,
                 None if table.alt is None else table.alt.copy())


def nearest_indices(base_lat, base_lon, other_lat, other_lon, k: int,
                    metric: str = "haversine") -> np.ndarray:
    """Indices (n_base, k) of the k nearest other-points.

    Equal distances are broken by (lat, lon, input order) ascending.
    """
    n_other = len(other_lat)
    if k < 1:
        raise ValidationError("k must be a positive integer")
    if k > n_other:
        raise KNotSatisfiable(f"k={k} neighbours requested but only {n_other} rows available")
    dist = geo.distance_fn(metric)(base_lat, base_lon, other_lat, other_lon)
    order = np.arange(n_other)
    out = np.empty((len(base_lat), k), dtype=int)
    for i in range(len(base_lat)):
        idx = np.lexsort((order, other_lon, other_lat, dist[i]))
        out[i] = idx[:k]
    return out


def knn_join(base: Table, other: Table, k: int = 1, metric: str = "haversine") -> Table:
    """Attach to each base row the mean of the k nearest rows of ``other``."""
    if base.n_rows == 0 or other.n_rows == 0:
        raise EmptyTable("knn_join needs non-empty tables")
    clash = set(base.columns) & set(other.columns)
    if clash:
        raise ColumnConflict(f"columns provided twice: {sorted(clash)}")
    idx = nearest_indices(base.lat, base.lon, other.lat, other.lon, k, metric)
    cols = dict(base.columns)
    for name, values in other.columns.items():
        cols[name] = values[idx].mean(axis=1)
    return Table(base.lat.copy(), base.lon.copy(), cols, base.source_tag,
                 None if base.alt is None else base.alt.copy())


def _cube_view(source: Table, include_pvgis: bool) -> Optional[Table]:
    """Validate a source against the catalog and return the columns it feeds to the cube."""
    if source.n_rows == 0:
        raise DisjointCoverage(f"{source.source_tag} source has zero rows")
    if source.source_tag == "other":
        allowed = set(CUBE_ORDER) | set(PVGIS_COLUMNS)
    else:
        allowed = set(CATALOG[source.source_tag])
    for name in source.columns:
        if name not in allowed:
            raise UnknownColumn(
                f"column {name!r} is not in the {source.source_tag} catalog "
                f"(accepted: {sorted(allowed)})"
            )
    if source.source_tag == "pvgis" or any(n in PVGIS_COLUMNS for n in source.columns):
        if not include_pvgis:
            logger.info("pvgis columns kept for evaluation only; not added to the cube")
            return None
        missing = [n for n in PVGIS_MONTHLY if n not in source.columns]
        if missing:
            raise UnknownColumn(f"pvgis source lacks monthly columns {missing}")
        reduced = {PVGIS_CUBE_COLUMN: pvgis_annual_mean(source)}
        return Table(source.lat, source.lon, reduced, source.source_tag)
    return source


def pvgis_annual_mean(table: Table) -> np.ndarray:
    return np.mean(np.column_stack([table.columns[n] for n in PVGIS_MONTHLY]), axis=1)


def build_cube(sources: Sequence[Table], query_grid, k: int = 1,
               include_pvgis: bool = False, metric: str = "haversine") -> DataCube:
    """Join ``sources`` onto ``query_grid`` and normalize the result."""
    lat, lon = geo.as_coords(query_grid)
    if len(lat) == 0:
        raise EmptyTable("query grid is empty")
    views, provenance = [], {}
    for src in sources:
        view = _cube_view(src, include_pvgis)
        if view is None:
            continue
        for name in view.columns:
            if name in provenance:
                raise ColumnConflict(
                    f"column {name!r} provided by both {provenance[name]} and {src.source_tag}"
                )
            provenance[name] = src.source_tag
        views.append(view)
    if not views:
        raise EmptyTable("no cube columns after source validation")
    joined = Table(lat, lon, {}, "other")
    for view in views:
        joined = knn_join(joined, view, k=k, metric=metric)
    order = [n for n in CUBE_ORDER if n in joined.columns]
    order += [n for n in joined.columns if n not in order]
    joined = Table(joined.lat, joined.lon, {n: joined.columns[n] for n in order}, "other")
    table, norm = normalize(joined)
    return DataCube(table, norm, {n: provenance[n] for n in order})


def write_cube(cube: DataCube, csv_path, json_path=None) -> None:
    names = cube.names
    write_columns_csv(
        csv_path, ["lat", "lon"] + names,
        [cube.table.lat, cube.table.lon] + [cube.table.columns[n] for n in names],
    )
    if json_path is None:
        json_path = Path(csv_path).with_suffix(".json")
    meta = {
        "columns": names,
        "normalization": cube.norm.to_dict(),
        "provenance": cube.provenance,
        "warnings": list(cube.norm.warnings),
    }
    Path(json_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_cube(csv_path, json_path=None) -> DataCube:
    header, cols = read_columns_csv(csv_path)
    for name in ("lat", "lon"):
        if name not in cols:
            raise MissingColumn(name)
    names = [h for h in header if h not in ("lat", "lon")]
    table = Table(cols["lat"], cols["lon"], {n: cols[n] for n in names}, "other")
    if json_path is None:
        json_path = Path(csv_path).with_suffix(".json")
    json_path = Path(json_path)
    if json_path.exists():
        meta = json.loads(json_path.read_text())
        norm = NormalizationParams.from_dict(meta["normalization"], meta.get("warnings", ()))
        provenance = meta.get("provenance", {})
    else:
        norm = NormalizationParams({n: 0.0 for n in names}, {n: 1.0 for n in names})
        provenance = {n: "other" for n in names}
    values = table.matrix()
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise ValidationError("cube values must lie in [0, 1]")
    return DataCube(table, norm, provenance)


def read_grid(path) -> tuple[np.ndarray, np.ndarray]:
    t = load_table(path, "grid")
    return t.lat, t.lon
