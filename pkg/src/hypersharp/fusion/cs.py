"""Component-substitution family: EXP, GSA, BT-H, BDSD-PC, PRACS.

All CS methods share the detail model

    fused_b = upsampled_b + gain_b * (pan - intensity)

and differ in how the intensity component and the gains are obtained.
A constant PAN carries no spatial detail; every method then returns the
interpolated HS unchanged.
"""

from __future__ import annotations

import logging
import time

import numpy as np

from ..core import FusionResult, ImageCube, PanImage, SensorModel
from ..linalg import (COND_WARN, CsWeights, centered_moments, cross_covariance,
                      estimate_weights_lsq, nnls)
from ..resample import ideal_interp, ideal_interp_array, pan_mtf_lowpass, wald_downgrade
from ._common import (RATIO_EPS, fusion_method, is_constant, is_flat, moment_match,
                      safe_ratio)

log = logging.getLogger(__name__)

__all__ = ["exp_upsample", "estimate_weights_lsq", "CsWeights", "InjectionGains",
           "cs_gains", "gsa", "bt_h", "bdsd_pc", "bdsd_pc_coefficients", "pracs"]


class InjectionGains:
    """Detail-injection gains: one scalar per band, or one plane per band.

    Per-pixel gains are clipped to ``[0, g_max]``.
    """

    def __init__(self, gains: np.ndarray, g_max: float | None = None):
        g = np.asarray(gains, dtype=np.float64)
        if g.ndim not in (1, 3):
            raise ValueError("gains are either (B,) or (H, W, B)")
        if g.ndim == 3 and g_max is not None:
            g = np.clip(g, 0.0, g_max)
        if not np.isfinite(g).all():
            raise ValueError("gains must be finite")
        self.values = g
        self.per_pixel = g.ndim == 3

    def inject(self, upsampled: np.ndarray, detail: np.ndarray) -> np.ndarray:
        """``upsampled + gains * detail`` with ``detail`` broadcast over bands."""
        return upsampled + self.values * detail[..., np.newaxis]


def exp_upsample(hs: ImageCube, ratio: int) -> FusionResult:
    """Plain interpolation of the HS cube; no PAN information is used."""
    t0 = time.perf_counter()
    cube = ideal_interp(hs, ratio)
    return FusionResult(cube, "exp", {}, time.perf_counter() - t0)


@fusion_method("exp")
def _exp(hs, pan, sensor):
    return ideal_interp_array(hs.data, sensor.ratio), {}


def cs_gains(upsampled: np.ndarray, intensity: np.ndarray) -> np.ndarray:
    """``Cov(upsampled_b, I) / Var(I)`` for every band."""
    cov = cross_covariance(upsampled.reshape(-1, upsampled.shape[-1]), intensity)
    return cov / float(intensity.var())


def _degenerate_intensity(intensity: np.ndarray, upsampled: np.ndarray) -> bool:
    """True when I is flat; raises if I is flat although the HS is not."""
    if not is_flat(intensity):
        return False
    flat = upsampled.reshape(-1, upsampled.shape[-1])
    if all(is_flat(flat[:, b]) for b in range(flat.shape[1])):
        return True
    raise ValueError("degenerate component: the intensity image is flat")


def _intensity(upsampled: np.ndarray, pan: np.ndarray,
               sensor: SensorModel) -> tuple[CsWeights, np.ndarray]:
    """Weights fitted against the MTF-degraded, re-expanded PAN and the resulting I."""
    weights = estimate_weights_lsq(upsampled, pan_mtf_lowpass(pan, sensor))
    return weights, weights.combine(upsampled)


@fusion_method("gsa")
def gsa(hs: ImageCube, pan: PanImage, sensor: SensorModel):
    """Gram-Schmidt Adaptive: LSQ weights, covariance-ratio gains."""
    up = ideal_interp_array(hs.data, sensor.ratio)
    p = pan.data
    if is_constant(p):
        return up, {"detail": "none (constant pan)"}
    weights, intensity = _intensity(up, p, sensor)
    if _degenerate_intensity(intensity, up):
        return up, {"detail": "none (flat scene)"}
    gains = cs_gains(up, intensity)
    detail = moment_match(p, intensity) - intensity
    out = InjectionGains(gains).inject(up, detail)
    return out, {"weights": weights.w.tolist(), "bias": weights.bias, "gains": gains.tolist()}


@fusion_method("bt-h")
def bt_h(hs: ImageCube, pan: PanImage, sensor: SensorModel,
         haze_percentile: float | None = 0.5, g_max: float = 5.0):
    """Brovey transform with haze correction and per-pixel gains.

    ``haze_percentile`` is the dark-object percentile (in percent) used as
    haze estimate for every band and for the intensity; ``None`` disables
    the haze correction.
    """
    up = ideal_interp_array(hs.data, sensor.ratio)
    p = pan.data
    if is_constant(p):
        return up, {"detail": "none (constant pan)", "saturated": 0, "clipped": 0}
    weights, intensity = _intensity(up, p, sensor)
    if haze_percentile is None:
        haze_b = np.zeros(up.shape[-1])
        haze = 0.0
    else:
        haze_b = np.percentile(up.reshape(-1, up.shape[-1]), haze_percentile, axis=0)
        haze = float(np.percentile(intensity, haze_percentile))
    den = intensity - haze
    eps = RATIO_EPS * float(intensity.max() - intensity.min())
    # pixels whose intensity sits at (or below) the haze level get no detail
    guard = den <= eps
    gains = np.divide(up - haze_b, den[..., np.newaxis],
                      out=np.zeros(up.shape), where=~guard[..., np.newaxis])
    clipped = int(np.count_nonzero((gains < 0) | (gains > g_max)))
    saturated = int(np.count_nonzero(guard))
    if clipped or saturated:
        log.info("bt-h: %d guarded pixels, %d clipped gains", saturated, clipped)
    out = InjectionGains(gains, g_max).inject(up, p - intensity)
    return out, {"weights": weights.w.tolist(), "bias": weights.bias,
                 "haze": haze, "saturated": saturated, "clipped": clipped}


def bdsd_pc_coefficients(reference: np.ndarray, upsampled_lr: np.ndarray,
                         pan_lr: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Fit per-band detail coefficients under nonnegativity.

    For every band b solve, with ``gamma_b >= 0`` and ``beta_b >= 0``::

        reference_b - upsampled_lr_b ~= gamma_b * pan_lr - sum_k beta_bk * upsampled_lr_k

    where ``beta_bk = gamma_b * w_bk``. Returns ``(gamma, beta, ok)`` with
    ``gamma`` of shape (B,) and ``beta`` of shape (B, B); ``ok`` is False
    when the PAN column carries no information (constant or non-finite).
    """
    bands = upsampled_lr.shape[-1]
    design = np.concatenate(
        [pan_lr.reshape(-1, 1), -upsampled_lr.reshape(-1, bands)], axis=1)
    target = (reference - upsampled_lr).reshape(-1, bands)
    pan_col = design[:, 0]
    if not np.isfinite(design).all() or float(pan_col.max() - pan_col.min()) == 0:
        return np.zeros(bands), np.zeros((bands, bands)), False
    # NNLS on the triangular factor: same solution as on the full design,
    # without squaring its condition number through the normal equations
    q, r = np.linalg.qr(design)
    cond = np.linalg.cond(r)
    if not cond < COND_WARN:
        log.info("bdsd-pc: design condition number %.3g", cond)
    rhs = q.T @ target
    coef = np.stack([nnls(r, rhs[:, b])[0] for b in range(bands)])
    return coef[:, 0], coef[:, 1:], True


@fusion_method("bdsd-pc")
def bdsd_pc(hs: ImageCube, pan: PanImage, sensor: SensorModel):
    """Band-dependent spatial detail with a nonnegativity (physical) constraint.

    Coefficients are fitted on the Wald-degraded pair against the original
    HS and then applied at full scale.
    """
    r = sensor.ratio
    up = ideal_interp_array(hs.data, r)
    p = pan.data
    if is_constant(p):
        return up, {"detail": "none (constant pan)"}
    # fit on the largest crop whose HS side is a multiple of R
    h, w = hs.height - hs.height % r, hs.width - hs.width % r
    if min(h, w) <= sensor.kernel_taps // 2:
        log.warning("bdsd-pc: %dx%d HS image too small for a degraded-scale fit, "
                    "falling back to GSA-style gains", hs.height, hs.width)
        return _gsa_fallback(up, p, sensor)
    hs_fit = ImageCube(hs.data[:h, :w], hs.wavelengths_nm, hs.gsd_m)
    pan_fit = PanImage(p[:h * r, :w * r], pan.gsd_m)
    hs_lr, pan_lr = wald_downgrade(hs_fit, pan_fit, sensor)
    up_lr = ideal_interp_array(hs_lr.data, r)
    gamma, beta, ok = bdsd_pc_coefficients(hs_fit.data, up_lr, pan_lr.data)
    if not ok:
        log.warning("bdsd-pc: degenerate design matrix, falling back to GSA-style gains")
        return _gsa_fallback(up, p, sensor)
    out = up + p[..., np.newaxis] * gamma - up @ beta.T
    return out, {"fallback": False, "gamma": gamma.tolist()}


def _gsa_fallback(up: np.ndarray, p: np.ndarray, sensor: SensorModel):
    weights, intensity = _intensity(up, p, sensor)
    if _degenerate_intensity(intensity, up):
        return up, {"detail": "none (flat scene)", "fallback": True}
    gains = cs_gains(up, intensity)
    out = InjectionGains(gains).inject(up, moment_match(p, intensity) - intensity)
    return out, {"fallback": True, "gains": gains.tolist()}


@fusion_method("pracs")
def pracs(hs: ImageCube, pan: PanImage, sensor: SensorModel):
    """Partial replacement: each band substitutes a blend of PAN and itself.

    The blend weight ``alpha_b`` is the correlation, at HS scale, between
    band b and the intensity component (clipped to [0, 1]). Band b replaces
    ``alpha_b * I + (1 - alpha_b) * up_b`` with
    ``alpha_b * P_eq + (1 - alpha_b) * up_b``, so its detail is
    ``alpha_b * (P_eq - I)`` injected with the GSA gain.
    """
    up = ideal_interp_array(hs.data, sensor.ratio)
    p = pan.data
    if is_constant(p):
        return up, {"detail": "none (constant pan)"}
    weights, intensity = _intensity(up, p, sensor)
    if _degenerate_intensity(intensity, up):
        return up, {"detail": "none (flat scene)"}
    gains = cs_gains(up, intensity)
    alpha = replacement_weights(hs.data, weights)
    detail = moment_match(p, intensity) - intensity
    out = InjectionGains(alpha * gains).inject(up, detail)
    return out, {"alpha": alpha.tolist(), "gains": gains.tolist()}


def replacement_weights(hs: np.ndarray, weights: CsWeights) -> np.ndarray:
    """Per-band correlation with the intensity at HS scale, clipped to [0, 1]."""
    flat = hs.reshape(-1, hs.shape[-1])
    intensity = weights.combine(flat)
    _, cov_xx, _, cov_xi = centered_moments(flat, intensity)
    var_i = float(intensity.var())
    sd = np.sqrt(np.diag(cov_xx))
    denom = sd * np.sqrt(var_i)
    corr, _ = safe_ratio(cov_xi, denom, 0.0, fill=0.0)
    return np.clip(corr, 0.0, 1.0)
