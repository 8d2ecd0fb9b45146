import numpy as np
import pytest

from aliasfree.resample import read_png
from aliasfree.spectra import (
    DB_FLOOR, SpectraError, average_power_spectrum, dataset_stats, kaiser_window_2d, power_spectrum_linear,
    slice_csv, spectrum_csv, spectrum_frequencies, spectrum_slice, to_db, write_heatmap,
)


def test_parseval():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 3, 16, 16))
    p = power_spectrum_linear(x, 0.0, 1.0)
    win = kaiser_window_2d(16, 16)
    assert p.sum() == pytest.approx(np.mean(np.sum((x * win) ** 2, axis=(-2, -1))), rel=1e-12)


def test_white_noise_is_flat():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((256, 64, 64))
    db = average_power_spectrum(x, *dataset_stats(x))
    f = spectrum_frequencies(64)
    r = np.hypot(f[:, None], f[None, :])
    band = db[(r > 0.1) & (r < 0.4)]
    # 256 periodograms per bin leave about 0.3 dB of scatter
    assert np.percentile(np.abs(band - np.median(band)), 99) < 1.0
    rings = [db[(r > lo) & (r < lo + 0.05)].mean() for lo in (0.1, 0.2, 0.3, 0.35)]
    assert max(rings) - min(rings) < 0.3
    for angle in (0.0, 30.0, 45.0):
        radius, vals = spectrum_slice(db, angle)
        mid = vals[(radius > 0.1) & (radius < 0.4)]
        assert np.max(np.abs(mid - np.median(band))) <= 1.5


def test_sinusoid_peak():
    n = 64
    y, x = np.mgrid[0:n, 0:n]
    img = np.sin(2 * np.pi * 8 * x / n)
    db = average_power_spectrum(img, 0.0, 1.0)
    iy, ix = np.unravel_index(np.argmax(db), db.shape)
    f = spectrum_frequencies(n)
    assert abs(f[ix]) == pytest.approx(8 / n) and f[iy] == 0


def test_stack_shapes_and_errors():
    a = np.ones((8, 8))
    assert power_spectrum_linear(a, 0.0, 1.0).shape == (8, 8)
    with pytest.raises(SpectraError):
        power_spectrum_linear(np.zeros((0, 8, 8)), 0.0, 1.0)
    with pytest.raises(SpectraError):
        power_spectrum_linear(a, 0.0, 0.0)
    assert to_db(np.array([0.0]))[0] == DB_FLOOR


def test_slices():
    spec = np.zeros((16, 16))
    spec[8, 8:] = np.arange(8)
    r, v = spectrum_slice(spec, 0.0)
    np.testing.assert_allclose(r, np.arange(8) / 16)
    np.testing.assert_allclose(v, np.arange(8))
    r45, _ = spectrum_slice(spec, 45.0)
    assert r45[-1] <= 7 * np.sqrt(2) / 16 + 1e-9
    with pytest.raises(SpectraError):
        spectrum_slice(spec, 360.0)


def test_csv_and_heatmap(tmp_path):
    spec = np.zeros((4, 4))
    lines = spectrum_csv(spec).splitlines()
    assert lines[0] == "freq_x,freq_y,db" and len(lines) == 17
    assert slice_csv(np.array([0.0]), np.array([1.0])).splitlines() == ["radius,db", "0.000000,1.000000"]
    write_heatmap(tmp_path / "h.png", np.arange(16.0).reshape(4, 4))
    img = read_png(tmp_path / "h.png").data[0]
    assert img.min() == -1 and img.max() == 1
