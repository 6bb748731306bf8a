"""Synthetic HS/PAN scenes with a known full-resolution reference.

Scenes are linear mixtures of a few endmember spectra, scaled by a shared
illumination factor. Abundances and illumination blend three layers:
Voronoi regions (piecewise constant), smooth fields and small discs
(point objects). The reference cube is degraded band by
band through the HS MTF path, so the emitted pair is Wald-consistent by
construction.

Random numbers come from numpy's Philox 4x64 counter-based generator,
keyed through ``SeedSequence([seed, stream, index])``. Stream 0 drives the
spectra, 1 the abundance layers, 2 the PAN texture, and ``(3, b)`` the
noise of band ``b``; each band is therefore reproducible on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .core import ImageCube, PanImage, SensorModel
from .resample import degrade_band, filter_separable, mtf_gaussian, wald_downgrade

WL_MIN_NM = 400.0
WL_MAX_NM = 2500.0
VISIBLE_NM = (400.0, 700.0)
PAN_GSD_M = 5.0
# spline knot range of the spectral shapes and range of the illumination
# factor; shared brightness structure dominates material contrast, as in
# real scenes, so most bands correlate positively with the PAN
KNOT_RANGE = (0.3, 1.0)
SHADE_RANGE = (0.15, 1.0)

_SPECTRA, _LAYERS, _TEXTURE, _NOISE = range(4)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of one synthetic scene.

    ``size`` is the full-resolution (PAN) side length; the HS cube is
    ``size / ratio`` pixels wide. ``mix`` gives the weights of the region,
    smooth and point layers in the abundance blend.
    """

    seed: int = 0
    size: int = 1152
    bands: int = 159
    ratio: int = 6
    mix: tuple[float, float, float] = (0.5, 0.3, 0.2)
    noise_sigma: float = 0.002
    endmembers: int = 6
    hs_mtf_gain: float = 0.30
    pan_mtf_gain: float = 0.40
    texture: float = 0.02
    regions_per_mpx: float = 120.0
    discs_per_mpx: float = 250.0

    def __post_init__(self):
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be an unsigned integer")
        if self.ratio < 2 or self.size % self.ratio:
            raise ValueError(f"size {self.size} must be divisible by ratio {self.ratio}")
        if self.bands < 1 or self.endmembers < 1:
            raise ValueError("bands and endmembers must be >= 1")
        mix = tuple(float(m) for m in self.mix)
        if len(mix) != 3 or min(mix) < 0 or abs(sum(mix) - 1.0) > 1e-9:
            raise ValueError("mix fractions must be three nonnegative numbers summing to 1")
        object.__setattr__(self, "mix", mix)
        if self.noise_sigma < 0 or self.texture < 0:
            raise ValueError("noise_sigma and texture must be >= 0")

    @property
    def hs_size(self) -> int:
        return self.size // self.ratio

    def sensor(self) -> SensorModel:
        return SensorModel.default(self.bands, self.ratio, self.hs_mtf_gain, self.pan_mtf_gain)

    def wavelengths(self) -> np.ndarray:
        return np.linspace(WL_MIN_NM, WL_MAX_NM, self.bands)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.__dict__.items()}


def endmember_spectra(spec: SceneSpec) -> np.ndarray:
    """(E, B) positive, peak-normalized cubic-spline spectra."""
    rng = _rng(spec.seed, _SPECTRA)
    knots = np.linspace(WL_MIN_NM, WL_MAX_NM, 12)
    wl = spec.wavelengths()
    out = np.empty((spec.endmembers, spec.bands))
    for e in range(spec.endmembers):
        curve = CubicSpline(knots, rng.uniform(*KNOT_RANGE, knots.size))(wl)
        curve = np.maximum(curve, 0.02)
        out[e] = curve / curve.max()
    return out


def _voronoi_labels(rng, size: int, count: int) -> np.ndarray:
    seeds = rng.uniform(0, size, (count, 2))
    tree = cKDTree(seeds)
    labels = np.empty((size, size), dtype=np.intp)
    cols = np.arange(size) + 0.5
    step = max(1, (1 << 18) // size)
    for r0 in range(0, size, step):
        rows = np.arange(r0, min(size, r0 + step)) + 0.5
        pts = np.stack(np.meshgrid(rows, cols, indexing="ij"), axis=-1).reshape(-1, 2)
        labels[r0:r0 + rows.size] = tree.query(pts)[1].reshape(rows.size, size)
    return labels


def _smooth_fields(rng, size: int, count: int, waves: int = 5) -> np.ndarray:
    """Softmax of ``count`` low-frequency random cosine sums, shape (size, size, count)."""
    y = (np.arange(size) + 0.5)[:, None] / size
    x = (np.arange(size) + 0.5)[None, :] / size
    out = np.empty((size, size, count))
    for e in range(count):
        field_e = np.zeros((size, size))
        for _ in range(waves):
            u, v = rng.uniform(-3.0, 3.0, 2)
            phase = rng.uniform(0, 2 * np.pi)
            field_e += rng.uniform(0.5, 1.5) * np.cos(2 * np.pi * (u * y + v * x) + phase)
        out[:, :, e] = field_e
    out -= out.max(axis=2, keepdims=True)
    np.exp(out, out=out)
    out /= out.sum(axis=2, keepdims=True)
    return out


def layers(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """Abundance map (size, size, E) and illumination (size, size).

    Every abundance pixel is a convex combination of endmembers. The
    illumination is a positive brightness factor shared by all bands
    (terrain shading), built from the same three layers. A single-endmember
    scene is a uniform unshaded surface.
    """
    rng = _rng(spec.seed, _LAYERS)
    n, e = spec.size, spec.endmembers
    if e == 1:
        return np.ones((n, n, 1)), np.ones((n, n))
    f_reg, f_smooth, f_pts = spec.mix
    mpx = n * n / 1e6
    n_regions = max(4, int(round(spec.regions_per_mpx * mpx)))
    region_mix = rng.dirichlet(np.full(e, 0.3), n_regions) if e > 1 else np.ones((n_regions, 1))
    region_shade = rng.uniform(*SHADE_RANGE, n_regions)
    labels = _voronoi_labels(rng, n, n_regions)
    a = region_mix[labels]
    a *= f_reg + f_pts
    shade = region_shade[labels] * (f_reg + f_pts)
    if f_smooth > 0:
        a += f_smooth * _smooth_fields(rng, n, e)
        lo, hi = SHADE_RANGE
        # a two-field softmax is a smooth map in (0, 1)
        shade += f_smooth * (lo + (hi - lo) * _smooth_fields(rng, n, 2)[:, :, 0])
    n_discs = int(round(spec.discs_per_mpx * mpx))
    centers = rng.uniform(0, n, (n_discs, 2))
    radii = rng.uniform(1.5, max(2.0, n / 150), n_discs)
    kinds = rng.integers(0, e, n_discs)
    disc_shade = rng.uniform(*SHADE_RANGE, n_discs)
    if f_pts > 0:
        for (cy, cx), rad, k, s in zip(centers, radii, kinds, disc_shade):
            r0, r1 = max(0, int(cy - rad)), min(n, int(np.ceil(cy + rad)) + 1)
            c0, c1 = max(0, int(cx - rad)), min(n, int(np.ceil(cx + rad)) + 1)
            yy = np.arange(r0, r1)[:, None] + 0.5 - cy
            xx = np.arange(c0, c1)[None, :] + 0.5 - cx
            inside = yy * yy + xx * xx <= rad * rad
            if not inside.any():
                continue
            # the point layer replaces the region layer inside the disc
            under = labels[r0:r1, c0:c1][inside]
            patch = a[r0:r1, c0:c1]
            patch[inside] -= f_pts * region_mix[under]
            patch[inside, k] += f_pts
            spatch = shade[r0:r1, c0:c1]
            spatch[inside] += f_pts * (s - region_shade[under])
    return a, shade


def pan_weights(spec: SceneSpec) -> np.ndarray:
    """Fixed PAN synthesis weights: uniform over visible bands."""
    wl = spec.wavelengths()
    vis = (wl >= VISIBLE_NM[0]) & (wl <= VISIBLE_NM[1])
    if not vis.any():
        vis[np.argmin(np.abs(wl - np.mean(VISIBLE_NM)))] = True
    return vis / vis.sum()


def _band(spec: SceneSpec, a: np.ndarray, shade: np.ndarray, spectra: np.ndarray,
          b: int) -> np.ndarray:
    plane = a @ spectra[:, b]
    plane *= shade
    if spec.noise_sigma > 0:
        plane += spec.noise_sigma * _rng(spec.seed, _NOISE, b).standard_normal(plane.shape)
    return np.maximum(plane, 0.0, out=plane)


def _texture(spec: SceneSpec, like: np.ndarray) -> np.ndarray:
    spread = float(like.std())
    if spec.texture == 0 or spread == 0:
        return np.zeros_like(like)
    noise = _rng(spec.seed, _TEXTURE).standard_normal(like.shape)
    # mild smoothing keeps the texture below Nyquist-level aliasing
    noise = filter_separable(noise, mtf_gaussian(0.9, 2, 9))
    return spec.texture * spread / float(noise.std()) * noise


def _scene(spec: SceneSpec, keep_reference: bool):
    sensor = spec.sensor()
    a, shade = layers(spec)
    spectra = endmember_spectra(spec)
    w_pan = pan_weights(spec)
    n, m = spec.size, spec.hs_size
    hs = np.empty((m, m, spec.bands))
    ref = np.empty((n, n, spec.bands)) if keep_reference else None
    pan = np.zeros((n, n))
    for b in range(spec.bands):
        plane = _band(spec, a, shade, spectra, b)
        hs[:, :, b] = degrade_band(plane, sensor.hs_mtf_gain[b], sensor)
        if w_pan[b]:
            pan += w_pan[b] * plane
        if ref is not None:
            ref[:, :, b] = plane
    pan += _texture(spec, pan)
    np.maximum(pan, 0.0, out=pan)
    wl = spec.wavelengths()
    hs_cube = ImageCube(hs, wl, PAN_GSD_M * spec.ratio)
    pan_img = PanImage(pan, PAN_GSD_M)
    ref_cube = ImageCube(ref, wl, PAN_GSD_M) if ref is not None else None
    return hs_cube, pan_img, ref_cube


def generate_scene(spec: SceneSpec) -> tuple[ImageCube, PanImage]:
    """Full-resolution pair: HS at ``size / ratio``, PAN at ``size``.

    The reference cube is streamed band by band and never held in memory.
    """
    hs, pan, _ = _scene(spec, keep_reference=False)
    return hs, pan


def generate_reference(spec: SceneSpec) -> tuple[ImageCube, ImageCube, PanImage]:
    """``(reference, hs, pan)``: also returns the full-resolution reference cube."""
    hs, pan, ref = _scene(spec, keep_reference=True)
    return ref, hs, pan


def make_rr_pair(hs: ImageCube, pan: PanImage,
                 sensor: SensorModel) -> tuple[ImageCube, PanImage, ImageCube]:
    """Wald reduced-resolution pair; the original HS is the ground truth."""
    hs_rr, pan_rr = wald_downgrade(hs, pan, sensor)
    return hs_rr, pan_rr, hs
