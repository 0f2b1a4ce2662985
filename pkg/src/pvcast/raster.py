"""Raster CSV and heatmap output for gridded fields."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .datacube import write_columns_csv
from .errors import ValidationError

# fixed colour ramp, low to high
RAMP = np.array([
    (49, 54, 149), (69, 117, 180), (116, 173, 209), (171, 217, 233), (224, 243, 248),
    (254, 224, 144), (253, 174, 97), (244, 109, 67), (215, 48, 39), (165, 0, 38),
], dtype=np.uint8)
MISSING = (0, 0, 0, 0)


def write_raster_csv(path, lat, lon, prediction, variance) -> None:
    write_columns_csv(path, ["lat", "lon", "prediction", "variance"],
                      [lat, lon, prediction, variance])


def write_field_csv(path, lat, lon, value) -> None:
    write_columns_csv(path, ["lat", "lon", "value"], [lat, lon, value])


def ramp_index(values) -> np.ndarray:
    """Nearest ramp colour for each value after min-max scaling."""
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    u = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    return np.rint(u * (len(RAMP) - 1)).astype(int)


def heatmap_array(lat, lon, values) -> np.ndarray:
    """RGBA image, one pixel per grid point: north at the top, west at the left."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if len(lat) == 0:
        raise ValidationError("cannot draw an empty field")
    lats = np.unique(lat)[::-1]
    lons = np.unique(lon)
    rows = np.searchsorted(-lats, -lat)
    cols = np.searchsorted(lons, lon)
    img = np.zeros((len(lats), len(lons), 4), dtype=np.uint8)
    img[:] = MISSING
    img[rows, cols, :3] = RAMP[ramp_index(values)]
    img[rows, cols, 3] = 255
    return img


def write_heatmap(path, lat, lon, values, scale: int = 8) -> None:
    from PIL import Image

    img = Image.fromarray(heatmap_array(lat, lon, values))
    if scale > 1:
        img = img.resize((img.width * scale, img.height * scale), Image.Resampling.NEAREST)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")
