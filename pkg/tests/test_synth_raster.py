import numpy as np
import pytest
from PIL import Image

from pvcast import datacube, geo, raster, synth
from pvcast.errors import ValidationError


def test_linear_map_files(linear_map_dir):
    for name in ("grid", "atlas", "stations", "pvgis", "plants", "reference"):
        assert (linear_map_dir / f"{name}.csv").exists()
    grid = datacube.read_grid(linear_map_dir / "grid.csv")
    assert len(grid[0]) == 169
    plants = datacube.load_table(linear_map_dir / "plants.csv", "plants")
    cf = plants.columns["capacity_factor"]
    assert plants.n_rows == 30
    assert cf.min() == pytest.approx(0.12, abs=0.02) and cf.max() <= 0.22 + 1e-12
    stations = datacube.load_table(linear_map_dir / "stations.csv", "stations")
    assert set(datacube.STATION_COLUMNS) <= set(stations.columns)
    assert stations.alt is not None


def test_synth_is_deterministic(tmp_path):
    for kind in synth.KINDS:
        a = synth.generate(kind, tmp_path / "a" / kind, seed=3)
        b = synth.generate(kind, tmp_path / "b" / kind, seed=3)
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes()
    with pytest.raises(ValidationError):
        synth.generate("nope", tmp_path)


def test_ar_sin_structure():
    y = synth.ar_sin_values(5000, seed=1)
    t = np.arange(5000)
    x = y - 1.0 - 0.3 * np.sin(0.3 * t)
    phi = np.dot(x[1:], x[:-1]) / np.dot(x[:-1], x[:-1])
    assert phi == pytest.approx(synth.AR_PHI, abs=0.03)


def test_variogram_field_exact_table(tmp_path):
    paths = synth.variogram_field(tmp_path)
    _, cols = datacube.read_columns_csv(paths["variogram"])
    np.testing.assert_allclose(cols["semivariance"], 2.0 * cols["lag"] ** 1.5, rtol=1e-15)


def test_outlier_line_fraction(tmp_path):
    _, cols = datacube.read_columns_csv(synth.outlier_line(tmp_path, n=100)["line"])
    resid = cols["y"] - (2.0 * cols["x"] + 1.0)
    assert int(np.sum(resid > 10)) == 10


def test_ramp_index_extremes():
    assert raster.ramp_index([0.0, 0.25, 1.0]).tolist() == [0, 2, 9]
    assert raster.ramp_index([2.0, 2.0]).tolist() == [0, 0]


def test_heatmap_orientation():
    lat = np.array([0.0, 0.0, 1.0])
    lon = np.array([10.0, 11.0, 10.0])
    img = raster.heatmap_array(lat, lon, [0.0, 1.0, 0.5])
    assert img.shape == (2, 2, 4)
    # north row first, west column first; the north-east cell is missing
    assert tuple(img[1, 0, :3]) == tuple(raster.RAMP[0])
    assert tuple(img[1, 1, :3]) == tuple(raster.RAMP[-1])
    assert img[0, 1, 3] == 0 and img[0, 0, 3] == 255
    with pytest.raises(ValidationError):
        raster.heatmap_array([], [], [])


def test_write_heatmap(tmp_path):
    lat, lon = geo.regular_grid(0.0, 1.0, 0.0, 2.0, 0.5)
    raster.write_heatmap(tmp_path / "h.png", lat, lon, lat + lon, scale=4)
    with Image.open(tmp_path / "h.png") as im:
        assert im.size == (5 * 4, 3 * 4)
        assert im.mode == "RGBA"
