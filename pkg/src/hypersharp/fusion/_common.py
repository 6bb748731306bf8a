from __future__ import annotations

import functools
import time
from typing import Callable

import numpy as np

from ..core import FusionResult, ImageCube, PanImage, SensorModel

REGISTRY: dict[str, Callable[..., FusionResult]] = {}

# relative size under which a spread is treated as numerically zero
FLAT_RTOL = 1e-12
# ratio-injection guard, relative to the dynamic range of the denominator
RATIO_EPS = 1e-6


def check_inputs(hs: ImageCube, pan: PanImage, sensor: SensorModel) -> None:
    r = sensor.ratio
    if pan.shape != (hs.height * r, hs.width * r):
        raise ValueError(
            f"pan shape {pan.shape} is not R={r} times the HS shape {hs.shape[:2]}")
    if hs.bands != sensor.bands:
        raise ValueError(
            f"HS cube has {hs.bands} bands, sensor model describes {sensor.bands}")


def fusion_method(name: str):
    """Register ``fn(hs, pan, sensor, **params) -> (array, diagnostics)``.

    The wrapper validates inputs, times the call and packs a FusionResult.
    """
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(hs: ImageCube, pan: PanImage, sensor: SensorModel, **params) -> FusionResult:
            check_inputs(hs, pan, sensor)
            t0 = time.perf_counter()
            data, diagnostics = fn(hs, pan, sensor, **params)
            runtime = time.perf_counter() - t0
            cube = hs.with_data(data, pan.gsd_m)
            return FusionResult(cube, name, {**params, "diagnostics": diagnostics}, runtime)
        REGISTRY[name] = wrapper
        return wrapper
    return deco


def is_flat(a: np.ndarray) -> bool:
    lo, hi = float(a.min()), float(a.max())
    return hi - lo <= FLAT_RTOL * max(abs(lo), abs(hi))


def is_constant(a: np.ndarray) -> bool:
    return float(a.min()) == float(a.max())


def band_moments(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-band population mean and std of an (H, W, B) array."""
    flat = data.reshape(-1, data.shape[-1])
    return flat.mean(axis=0), flat.std(axis=0)


def matching_affine(src_mean: float, src_std: float, dst_mean, dst_std):
    """Slope/intercept of the moment-matching map ``src -> dst``.

    A flat source cannot be stretched; it is only shifted onto the target mean.
    """
    dst_mean = np.asarray(dst_mean, dtype=np.float64)
    dst_std = np.asarray(dst_std, dtype=np.float64)
    if src_std == 0:
        slope = np.zeros_like(dst_std)
        return slope, dst_mean.copy()
    slope = dst_std / src_std
    return slope, dst_mean - slope * src_mean


def moment_match(p: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Shift and scale ``p`` to the mean and std of ``target``."""
    sp = float(p.std())
    if sp == 0:
        return p - p.mean() + target.mean()
    return (p - p.mean()) * (float(target.std()) / sp) + target.mean()


def safe_ratio(num: np.ndarray, den: np.ndarray, eps: float, fill: float = 1.0):
    """``num / den`` with ``fill`` wherever ``|den| <= eps``; returns (ratio, mask)."""
    guard = np.abs(den) <= eps
    ratio = np.divide(num, den, out=np.full(np.broadcast(num, den).shape, fill),
                      where=~guard)
    return ratio, guard
