import numpy as np
import pytest

from conftest import random_pair
from hypersharp.core import ImageCube, PanImage, SensorModel
from hypersharp.fusion import run_method
from hypersharp.fusion.mra import (_hpm_inject, atrous_decompose, glp_fs_gains, glp_lowpass,
                                   morphological_pyramid, pyramid_levels, regression_affine)
from hypersharp.resample import (filter_decimate, ideal_interp_array, mtf_gaussian,
                                 pan_mtf_lowpass)

MRA = ("mtf-glp-fs", "mtf-glp-hpm", "mtf-glp-hpm-r", "awlp", "mf")


def pan_band(pan: np.ndarray, sensor: SensorModel) -> np.ndarray:
    k = mtf_gaussian(sensor.pan_mtf_gain, sensor.ratio, sensor.kernel_taps)
    return filter_decimate(pan, k, sensor.ratio)


@pytest.mark.parametrize("name", MRA)
def test_shapes_and_finiteness(small_scene, name):
    spec, hs, pan = small_scene
    res = run_method(name, hs, pan, spec.sensor())
    assert res.cube.shape == (pan.height, pan.width, hs.bands)
    assert np.isfinite(res.cube.data).all()


@pytest.mark.parametrize("name", MRA)
def test_constant_pan_returns_interpolated_hs(rng, name):
    hs, _, sensor = random_pair(rng)
    res = run_method(name, hs, PanImage(np.full((72, 72), 2.0)), sensor)
    assert np.max(np.abs(res.cube.data - ideal_interp_array(hs.data, 6))) < 1e-6


def test_pan_detail_reconstructs(rng):
    _, pan, sensor = random_pair(rng)
    split = glp_lowpass(pan, sensor)
    rec = split.reconstruct()
    assert np.max(np.abs(rec - pan.data)) <= 4 * np.spacing(np.abs(pan.data).max())


def test_constant_pan_has_no_detail():
    split = glp_lowpass(PanImage(np.full((72, 72), 7.0)), SensorModel.default(2, 6))
    assert np.max(np.abs(split.detail.data)) < 1e-12


def test_low_frequency_pan_has_small_detail():
    n = 288
    x = np.cos(np.pi * (np.arange(n) + 0.5) / n)
    pan = PanImage(np.add.outer(x, x) + 3.0)
    split = glp_lowpass(pan, SensorModel.default(2, 6))
    amp = float(pan.data.max() - pan.data.min())
    assert np.max(np.abs(split.detail.data)) < 0.02 * amp


def test_fs_returns_pan_when_hs_is_pan_lowpass(small_scene):
    spec, _, pan = small_scene
    sensor = SensorModel.default(3, spec.ratio)
    hs = ImageCube(np.repeat(pan_band(pan.data, sensor)[:, :, None], 3, axis=2))
    res = run_method("mtf-glp-fs", hs, pan, sensor)
    assert np.allclose(res.params["diagnostics"]["gains"], 1.0, atol=1e-10)
    assert np.max(np.abs(res.cube.data - pan.data[:, :, None])) < 1e-6


def test_fs_noise_band_gets_small_gain(small_scene, rng):
    spec, _, pan = small_scene
    sensor = SensorModel.default(2, spec.ratio)
    sig = pan_band(pan.data, sensor)
    noise = rng.standard_normal(sig.shape) * sig.std() + sig.mean()
    hs = ImageCube(np.stack([sig, noise], axis=2))
    gains = run_method("mtf-glp-fs", hs, pan, sensor).params["diagnostics"]["gains"]
    assert abs(gains[0] - 1.0) < 1e-10
    assert abs(gains[1]) < 0.05


def test_fs_gain_formula(rng):
    up = rng.random((30, 30, 3))
    low = rng.random((30, 30))
    expect = [np.cov(up[:, :, b].ravel(), low.ravel(), bias=True)[0, 1] / low.var()
              for b in range(3)]
    assert np.allclose(glp_fs_gains(up, low), expect, rtol=1e-12)


def test_fs_flat_lowpass_raises(monkeypatch, rng):
    from hypersharp.fusion import mra
    from hypersharp.fusion.mra import PanDetail

    def flat(pan, sensor):
        return PanDetail(PanImage(np.ones(pan.shape)), PanImage(pan.data - 1.0))

    monkeypatch.setattr(mra, "glp_lowpass", flat)
    hs, pan, sensor = random_pair(rng)
    with pytest.raises(ValueError, match="degenerate lowpass"):
        run_method("mtf-glp-fs", hs, pan, sensor)


def test_hpm_inject_contrast(rng):
    up = rng.random((10, 10, 2)) + 1.0
    pan = rng.random((10, 10)) + 1.0
    low = rng.random((10, 10)) + 1.0
    out, guarded = _hpm_inject(up, pan, low, np.ones(2), np.zeros(2))
    assert guarded == 0
    assert np.allclose(out, up * (pan / low)[:, :, None], rtol=1e-14)
    # when the low-pass equals the band, the output is the matched PAN
    out, _ = _hpm_inject(low[:, :, None] * 2.0, pan, low, np.array([2.0]), np.zeros(1))
    assert np.allclose(out[:, :, 0], 2.0 * pan)


def test_hpm_inject_guard():
    pan = np.linspace(-1.0, 1.0, 25).reshape(5, 5)
    low = pan.copy()
    low[2, 2] = 0.0
    up = np.ones((5, 5, 1))
    out, guarded = _hpm_inject(up, pan, low, np.ones(1), np.zeros(1))
    assert guarded == 1 and out[2, 2, 0] == 1.0
    assert np.isfinite(out).all()


def test_hpm_r_planted_affine(small_scene):
    spec, _, pan = small_scene
    sensor = SensorModel.default(3, spec.ratio)
    a, c = np.array([0.5, 2.0, 1.5]), np.array([0.1, 0.3, 2.0])
    hs = ImageCube(pan_band(pan.data, sensor)[:, :, None] * a + c)
    res = run_method("mtf-glp-hpm-r", hs, pan, sensor)
    d = res.params["diagnostics"]
    assert np.allclose(d["slope"], a, rtol=1e-9) and np.allclose(d["intercept"], c, atol=1e-9)
    assert np.max(np.abs(res.cube.data - (pan.data[:, :, None] * a + c))) < 1e-6


def test_hpm_r_constant_band_is_kept(small_scene):
    spec, hs, pan = small_scene
    data = hs.data.copy()
    data[:, :, 0] = 0.4
    res = run_method("mtf-glp-hpm-r", ImageCube(data), pan, spec.sensor())
    assert np.allclose(res.cube.data[:, :, 0], 0.4, atol=1e-12)


def test_regression_affine_exact(rng):
    low = rng.random((20, 20))
    up = np.stack([3.0 * low - 1.0, 0.5 * low + 2.0], axis=2)
    slope, icpt = regression_affine(up, low)
    assert np.allclose(slope, [3.0, 0.5]) and np.allclose(icpt, [-1.0, 2.0])


def test_hpm_uses_pan_moments_per_band(small_scene):
    spec, _, pan = small_scene
    sensor = SensorModel.default(1, spec.ratio)
    hs = ImageCube(pan_band(pan.data, sensor)[:, :, None])
    out = run_method("mtf-glp-hpm", hs, pan, sensor).cube.data[:, :, 0]
    assert np.corrcoef(out.ravel(), pan.data.ravel())[0, 1] > 0.99


def test_atrous_telescopes(rng):
    plane = rng.random((40, 40))
    approx, details = atrous_decompose(plane, 3)
    assert len(details) == 3
    assert np.allclose(approx + sum(details), plane, atol=1e-13)


def test_pyramid_levels():
    assert [pyramid_levels(r) for r in (2, 3, 4, 6, 8)] == [1, 2, 2, 3, 3]


def test_awlp_identical_bands_share_detail(rng):
    h = rng.random((12, 12)) + 1.0
    hs = ImageCube(np.repeat(h[:, :, None], 3, axis=2))
    pan = PanImage(rng.random((72, 72)) + 1.0)
    sensor = SensorModel.default(3, 6)
    out = run_method("awlp", hs, pan, sensor).cube.data
    up = ideal_interp_array(hs.data, 6)
    approx, _ = atrous_decompose(pan.data, pyramid_levels(6))
    i = up[:, :, 0]
    slope = i.std() / pan.data.std()
    for b in range(3):
        assert np.allclose(out[:, :, b] - up[:, :, b], slope * (pan.data - approx), atol=1e-12)


def test_awlp_proportional_to_band_level(rng):
    h = rng.random((12, 12)) + 1.0
    hs = ImageCube(h[:, :, None] * np.array([1.0, 3.0]))
    pan = PanImage(rng.random((72, 72)) + 1.0)
    out = run_method("awlp", hs, pan, SensorModel.default(2, 6)).cube.data
    up = ideal_interp_array(hs.data, 6)
    assert np.allclose(out[:, :, 1] - up[:, :, 1], 3.0 * (out[:, :, 0] - up[:, :, 0]),
                       atol=1e-12)


def test_morphological_lattice_ordering(rng):
    plane = rng.random((30, 30))
    approx, ero, dil = morphological_pyramid(plane, 3)
    for j in range(3):
        assert np.all(ero[j] <= approx[j]) and np.all(approx[j] <= dil[j])
        assert np.all(ero[j] <= approx[j + 1]) and np.all(approx[j + 1] <= dil[j])


def test_morphological_bright_pixel():
    plane = np.zeros((21, 21))
    plane[10, 10] = 1.0
    approx, ero, dil = morphological_pyramid(plane, 1)
    assert ero[0].max() == 0.0
    assert dil[0][9:12, 9:12].min() == 1.0 and dil[0].sum() == 9.0
    assert approx[1][10, 10] == 0.5


def test_morphological_constant_plane():
    approx, _, _ = morphological_pyramid(np.full((16, 16), 3.0), 3)
    assert all(np.all(a == 3.0) for a in approx)


def test_mf_tracks_pan_when_hs_is_pan_band(small_scene):
    spec, _, pan = small_scene
    sensor = SensorModel.default(1, spec.ratio)
    hs = ImageCube(pan_band(pan.data, sensor)[:, :, None])
    out = run_method("mf", hs, pan, sensor).cube.data[:, :, 0]
    up = ideal_interp_array(hs.data, spec.ratio)[:, :, 0]
    c_out = np.corrcoef(out.ravel(), pan.data.ravel())[0, 1]
    c_up = np.corrcoef(up.ravel(), pan.data.ravel())[0, 1]
    assert c_out > c_up
