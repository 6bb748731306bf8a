"""Multiresolution-analysis family: MTF-GLP-FS/HPM/HPM-R, AWLP, MF.

Detail model::

    fused_b = upsampled_b + G_b * (pan - pan_lowpass)

The methods differ in the low-pass operator and in the gains ``G_b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..core import ImageCube, PanImage, SensorModel
from ..linalg import cross_covariance
from ..resample import b3_spline_kernel, filter_separable, ideal_interp_array, pan_mtf_lowpass
from ._common import (RATIO_EPS, band_moments, fusion_method, is_constant, is_flat,
                      matching_affine, safe_ratio)


@dataclass(frozen=True)
class PanDetail:
    """PAN split into its low-pass version and the residual detail."""

    lowpass: PanImage
    detail: PanImage

    def reconstruct(self) -> np.ndarray:
        return self.lowpass.data + self.detail.data


def glp_lowpass(pan: PanImage, sensor: SensorModel) -> PanDetail:
    """Single-stage GLP: PAN MTF filter, decimation by R, re-expansion."""
    low = pan_mtf_lowpass(pan.data, sensor)
    return PanDetail(PanImage(low, pan.gsd_m), PanImage(pan.data - low, pan.gsd_m))


def _hpm_inject(up: np.ndarray, pan: np.ndarray, low: np.ndarray,
                slope: np.ndarray, intercept: np.ndarray) -> tuple[np.ndarray, int]:
    """``up * P_b / P_b_lowpass`` with ``P_b = slope_b * P + intercept_b``.

    The low-pass of ``P_b`` is taken as the same affine map of the PAN
    low-pass (exact for linear DC-preserving filters and for monotone
    morphological ones). Where ``|P_b_lowpass|`` is within 1e-6 of the
    dynamic range of ``P_b`` the gain falls back to 1.
    """
    pan_b = pan[..., np.newaxis] * slope + intercept
    low_b = low[..., np.newaxis] * slope + intercept
    eps = RATIO_EPS * np.abs(slope) * float(pan.max() - pan.min())
    ratio, guard = safe_ratio(pan_b, low_b, 0.0)
    guard |= np.abs(low_b) <= eps
    ratio[guard] = 1.0
    return up * ratio, int(np.count_nonzero(guard))


@fusion_method("mtf-glp-fs")
def glp_fs(hs: ImageCube, pan: PanImage, sensor: SensorModel):
    """Projective injection with full-scale gains ``Cov(up_b, P_lp) / Var(P_lp)``."""
    up = ideal_interp_array(hs.data, sensor.ratio)
    p = pan.data
    if is_constant(p):
        return up, {"detail": "none (constant pan)"}
    split = glp_lowpass(pan, sensor)
    low = split.lowpass.data
    if is_flat(low):
        raise ValueError("degenerate lowpass: the PAN low-pass image is flat")
    gains = glp_fs_gains(up, low)
    return up + gains * split.detail.data[..., np.newaxis], {"gains": gains.tolist()}


def glp_fs_gains(up: np.ndarray, low: np.ndarray) -> np.ndarray:
    cov = cross_covariance(up.reshape(-1, up.shape[-1]), low)
    return cov / float(low.var())


@fusion_method("mtf-glp-hpm")
def glp_hpm(hs: ImageCube, pan: PanImage, sensor: SensorModel):
    """High-pass modulation after per-band moment matching of the PAN."""
    up = ideal_interp_array(hs.data, sensor.ratio)
    p = pan.data
    if is_constant(p):
        return up, {"detail": "none (constant pan)"}
    low = pan_mtf_lowpass(p, sensor)
    mu, sd = band_moments(up)
    slope, intercept = matching_affine(float(p.mean()), float(p.std()), mu, sd)
    out, guarded = _hpm_inject(up, p, low, slope, intercept)
    return out, {"guarded": guarded}


def regression_affine(up: np.ndarray, low: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-band LSQ fit ``up_b ~ a_b * low + c_b``."""
    flat = up.reshape(-1, up.shape[-1])
    var = float(low.var())
    slope = cross_covariance(flat, low) / var if var > 0 else np.zeros(flat.shape[1])
    return slope, flat.mean(axis=0) - slope * float(low.mean())


@fusion_method("mtf-glp-hpm-r")
def glp_hpm_r(hs: ImageCube, pan: PanImage, sensor: SensorModel):
    """High-pass modulation with regression-based spectral matching."""
    up = ideal_interp_array(hs.data, sensor.ratio)
    p = pan.data
    if is_constant(p):
        return up, {"detail": "none (constant pan)"}
    low = pan_mtf_lowpass(p, sensor)
    slope, intercept = regression_affine(up, low)
    out, guarded = _hpm_inject(up, p, low, slope, intercept)
    return out, {"slope": slope.tolist(), "intercept": intercept.tolist(), "guarded": guarded}


def pyramid_levels(ratio: int) -> int:
    return math.ceil(math.log2(ratio))


def atrous_decompose(plane: np.ndarray, levels: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Undecimated B3-spline wavelet decomposition.

    Returns the coarsest approximation and the detail planes, finest first;
    ``approx + sum(details)`` telescopes back to ``plane``.
    """
    approx = np.asarray(plane, dtype=np.float64)
    details = []
    for level in range(levels):
        smoother = filter_separable(approx, b3_spline_kernel(level))
        details.append(approx - smoother)
        approx = smoother
    return approx, details


@fusion_method("awlp")
def awlp(hs: ImageCube, pan: PanImage, sensor: SensorModel):
    """Additive wavelet luminance-proportional injection.

    ``fused_b = up_b + (up_b / I) * detail`` with ``I`` the mean spectrum
    ``mean_k up_k`` and ``detail`` the wavelet detail of the PAN after its
    moments are matched to ``I``.
    """
    up = ideal_interp_array(hs.data, sensor.ratio)
    p = pan.data
    if is_constant(p):
        return up, {"detail": "none (constant pan)"}
    approx, _ = atrous_decompose(p, pyramid_levels(sensor.ratio))
    intensity = up.mean(axis=2)
    slope, _ = matching_affine(float(p.mean()), float(p.std()),
                               float(intensity.mean()), float(intensity.std()))
    detail = slope * (p - approx)
    eps = RATIO_EPS * float(intensity.max() - intensity.min())
    # luminance-proportional factor up_b / I; zero where I vanishes
    guard = np.abs(intensity) <= eps
    inv = np.divide(1.0, intensity, out=np.zeros_like(intensity), where=~guard)
    return up + up * (detail * inv)[..., np.newaxis], {"guarded": int(np.count_nonzero(guard))}


def _dilated_square(level: int) -> np.ndarray:
    gap = 2 ** level
    fp = np.zeros((2 * gap + 1, 2 * gap + 1), dtype=bool)
    fp[::gap, ::gap] = True
    return fp


def morphological_pyramid(plane: np.ndarray, levels: int):
    """Half-gradient pyramid: each level is the mean of erosion and dilation.

    Returns ``(approximations, erosions, dilations)``; ``approximations[0]``
    is the input and ``approximations[j + 1]`` is built from level ``j``.
    """
    approx = [np.asarray(plane, dtype=np.float64)]
    erosions, dilations = [], []
    for level in range(levels):
        fp = _dilated_square(level)
        ero = ndimage.grey_erosion(approx[-1], footprint=fp, mode="mirror")
        dil = ndimage.grey_dilation(approx[-1], footprint=fp, mode="mirror")
        erosions.append(ero)
        dilations.append(dil)
        approx.append(0.5 * (ero + dil))
    return approx, erosions, dilations


@fusion_method("mf")
def mf(hs: ImageCube, pan: PanImage, sensor: SensorModel):
    """Morphological-filter pyramid with HPM injection."""
    up = ideal_interp_array(hs.data, sensor.ratio)
    p = pan.data
    if is_constant(p):
        return up, {"detail": "none (constant pan)"}
    approx, _, _ = morphological_pyramid(p, pyramid_levels(sensor.ratio))
    mu, sd = band_moments(up)
    slope, intercept = matching_affine(float(p.mean()), float(p.std()), mu, sd)
    out, guarded = _hpm_inject(up, p, approx[-1], slope, intercept)
    return out, {"guarded": guarded}
