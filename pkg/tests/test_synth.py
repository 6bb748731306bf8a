import numpy as np
import pytest

from hypersharp.fusion import METHOD_NAMES, run_method
from hypersharp.metrics import ergas
from hypersharp.resample import degrade_cube_array, ideal_interp_array
from hypersharp.synth import (SceneSpec, generate_reference, generate_scene, make_rr_pair,
                              pan_weights)

SMALL = dict(size=288, bands=8)


def test_deterministic_under_seed():
    a = generate_scene(SceneSpec(seed=5, **SMALL))
    b = generate_scene(SceneSpec(seed=5, **SMALL))
    c = generate_scene(SceneSpec(seed=6, **SMALL))
    assert np.array_equal(a[0].data, b[0].data) and np.array_equal(a[1].data, b[1].data)
    assert not np.array_equal(a[0].data, c[0].data)


def test_geometry_nonnegative_and_finite():
    spec = SceneSpec(seed=1, **SMALL)
    hs, pan = generate_scene(spec)
    assert hs.shape == (48, 48, 8) and pan.shape == (288, 288)
    for arr in (hs.data, pan.data):
        assert np.isfinite(arr).all() and arr.min() >= 0.0
    wl = hs.wavelengths_nm
    assert wl[0] >= 400 and wl[-1] <= 2500 and np.all(np.diff(wl) > 0)


def test_flat_scene_gives_flat_outputs():
    spec = SceneSpec(seed=2, size=144, bands=4, noise_sigma=0.0, endmembers=1)
    hs, pan = generate_scene(spec)
    assert np.ptp(hs.data, axis=(0, 1)).max() <= 1e-12 * hs.data.max()
    sensor = spec.sensor()
    for name in METHOD_NAMES:
        kw = {"max_iters": 5} if name == "tv" else {}
        out = run_method(name, hs, pan, sensor, **kw).cube.data
        spread = np.ptp(out, axis=(0, 1)).max()
        assert spread <= 1e-6 * hs.data.max(), name


def test_pan_is_explained_by_visible_reference_bands():
    spec = SceneSpec(seed=4, size=288, bands=24)
    ref, _, pan = generate_reference(spec)
    vis = pan_weights(spec) > 0
    x = ref.data[:, :, vis].reshape(-1, int(vis.sum()))
    design = np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)
    coef = np.linalg.lstsq(design, pan.data.ravel(), rcond=None)[0]
    resid = pan.data.ravel() - design @ coef
    assert 1.0 - resid.var() / pan.data.var() >= 0.95


def test_reference_downgrades_to_emitted_hs():
    spec = SceneSpec(seed=8, **SMALL)
    ref, hs, pan = generate_reference(spec)
    hs2, pan2 = generate_scene(spec)
    assert np.array_equal(hs.data, hs2.data) and np.array_equal(pan.data, pan2.data)
    assert np.array_equal(degrade_cube_array(ref.data, spec.sensor()), hs.data)


def test_rr_pair_geometry_and_exp_error():
    spec = SceneSpec(seed=9, **SMALL)
    hs, pan = generate_scene(spec)
    hs_rr, pan_rr, gt = make_rr_pair(hs, pan, spec.sensor())
    assert gt is hs
    assert gt.shape[:2] == (6 * hs_rr.height, 6 * hs_rr.width)
    assert pan_rr.shape == gt.shape[:2]
    assert ergas(ideal_interp_array(hs_rr.data, 6), gt, 6) > 0


def test_rr_pair_depends_on_mtf_gain():
    a = SceneSpec(seed=9, hs_mtf_gain=0.2, **SMALL)
    b = SceneSpec(seed=9, hs_mtf_gain=0.4, **SMALL)
    hs, pan = generate_scene(a)
    ra = make_rr_pair(hs, pan, a.sensor())[0]
    rb = make_rr_pair(hs, pan, b.sensor())[0]
    assert not np.allclose(ra.data, rb.data)


@pytest.mark.parametrize("kw", [dict(size=100), dict(seed=-1), dict(mix=(0.5, 0.5, 0.5)),
                                dict(bands=0), dict(noise_sigma=-1.0), dict(ratio=1)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        SceneSpec(**kw)
