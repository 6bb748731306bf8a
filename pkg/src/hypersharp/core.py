"""Domain data model: hyperspectral cubes, PAN images, sensor description.

Arrays are held as float64 in band-interleaved-by-pixel order, i.e. a cube
is an ``(height, width, bands)`` array and a PAN image is ``(height, width)``.
Instances are frozen and their arrays are flagged read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

DEFAULT_HS_MTF_GAIN = 0.30
DEFAULT_PAN_MTF_GAIN = 0.40
DEFAULT_KERNEL_TAPS = 41


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty dimension: {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite samples")
    arr = arr.view()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ImageCube:
    """H x W x B radiance raster.

    The same type serves for the native HS image, its interpolated version
    and the pansharpened product; only the dimensions differ.
    """

    data: np.ndarray
    wavelengths_nm: Optional[np.ndarray] = None
    gsd_m: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_array(self.data, 3, "cube"))
        if self.wavelengths_nm is not None:
            wl = np.asarray(self.wavelengths_nm, dtype=np.float64).copy()
            if wl.shape != (self.bands,):
                raise ValueError(
                    f"wavelengths_nm has length {wl.size}, expected {self.bands}")
            if wl.size > 1 and not np.all(np.diff(wl) > 0):
                raise ValueError("wavelengths_nm must be strictly increasing")
            wl.flags.writeable = False
            object.__setattr__(self, "wavelengths_nm", wl)
        if self.gsd_m is not None:
            object.__setattr__(self, "gsd_m", float(self.gsd_m))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def samples(self) -> np.ndarray:
        """Flat row-major view of all samples (pixel-interleaved)."""
        return self.data.reshape(-1)

    def with_data(self, data, gsd_m: Optional[float] = None) -> "ImageCube":
        """New cube sharing this cube's band metadata."""
        return ImageCube(data, self.wavelengths_nm, gsd_m)


@dataclass(frozen=True)
class PanImage:
    data: np.ndarray
    gsd_m: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_array(self.data, 2, "pan"))
        if self.gsd_m is not None:
            object.__setattr__(self, "gsd_m", float(self.gsd_m))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def samples(self) -> np.ndarray:
        return self.data.reshape(-1)


@dataclass(frozen=True)
class SensorModel:
    """Resolution ratio and Gaussian MTF model of the HS/PAN pair.

    ``hs_mtf_gain`` holds one amplitude response at the low-resolution
    Nyquist frequency per HS band; ``pan_mtf_gain`` is the same for PAN.
    """

    ratio: int
    hs_mtf_gain: np.ndarray
    pan_mtf_gain: float = DEFAULT_PAN_MTF_GAIN
    kernel_taps: int = DEFAULT_KERNEL_TAPS

    def __post_init__(self):
        if int(self.ratio) != self.ratio or self.ratio < 2:
            raise ValueError(f"ratio must be an integer >= 2, got {self.ratio}")
        object.__setattr__(self, "ratio", int(self.ratio))
        gains = np.atleast_1d(np.asarray(self.hs_mtf_gain, dtype=np.float64)).copy()
        if gains.ndim != 1 or gains.size < 1:
            raise ValueError("hs_mtf_gain must be a non-empty 1-D array")
        if not np.all((gains > 0) & (gains < 1)):
            raise ValueError("every HS MTF gain must lie in (0, 1)")
        gains.flags.writeable = False
        object.__setattr__(self, "hs_mtf_gain", gains)
        if not 0 < self.pan_mtf_gain < 1:
            raise ValueError("pan_mtf_gain must lie in (0, 1)")
        object.__setattr__(self, "pan_mtf_gain", float(self.pan_mtf_gain))
        if self.kernel_taps < 7 or self.kernel_taps % 2 == 0:
            raise ValueError("kernel_taps must be odd and >= 7")
        object.__setattr__(self, "kernel_taps", int(self.kernel_taps))

    @property
    def bands(self) -> int:
        return self.hs_mtf_gain.size

    @classmethod
    def default(cls, bands: int, ratio: int = 6, hs_gain: float = DEFAULT_HS_MTF_GAIN,
                pan_gain: float = DEFAULT_PAN_MTF_GAIN,
                kernel_taps: int = DEFAULT_KERNEL_TAPS) -> "SensorModel":
        return cls(ratio, np.full(bands, hs_gain), pan_gain, kernel_taps)

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "hs_mtf_gain": self.hs_mtf_gain.tolist(),
            "pan_mtf_gain": self.pan_mtf_gain,
            "kernel_taps": self.kernel_taps,
        }

    @classmethod
    def from_dict(cls, d: dict, bands: Optional[int] = None) -> "SensorModel":
        gain = d.get("hs_mtf_gain", DEFAULT_HS_MTF_GAIN)
        if np.isscalar(gain):
            if bands is None:
                raise ValueError("a scalar hs_mtf_gain needs the band count")
            gain = np.full(bands, float(gain))
        return cls(
            ratio=d.get("ratio", 6),
            hs_mtf_gain=gain,
            pan_mtf_gain=d.get("pan_mtf_gain", DEFAULT_PAN_MTF_GAIN),
            kernel_taps=d.get("kernel_taps", DEFAULT_KERNEL_TAPS),
        )


@dataclass(frozen=True)
class FusionResult:
    cube: ImageCube
    method: str
    params: dict[str, Any] = field(default_factory=dict)
    runtime_s: float = 0.0


@dataclass(frozen=True)
class SubspaceModel:
    """Low-dimensional spectral subspace: a cube is ``mixing @ components``."""

    mixing: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mixing, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError("mixing must be a B x C matrix")
        b, c = m.shape
        if c < 1 or c > b:
            raise ValueError(f"need 1 <= C <= B, got B={b}, C={c}")
        if np.linalg.matrix_rank(m) < c:
            raise ValueError("mixing matrix must have full column rank")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "mixing", m)

    @property
    def components(self) -> int:
        return self.mixing.shape[1]

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Map an (H, W, C) coefficient array to an (H, W, B) cube array."""
        return coeffs @ self.mixing.T

    def project(self, cube: np.ndarray) -> np.ndarray:
        """Least-squares coefficients of an (H, W, B) array in the subspace."""
        coeffs, *_ = np.linalg.lstsq(self.mixing, cube.reshape(-1, cube.shape[-1]).T,
                                     rcond=None)
        return coeffs.T.reshape(cube.shape[:-1] + (self.components,))


def cube_band(cube: ImageCube, b: int) -> np.ndarray:
    """Read-only H x W view of band ``b``."""
    if not 0 <= b < cube.bands:
        raise IndexError(f"band {b} out of range for a {cube.bands}-band cube")
    return cube.data[:, :, b]


def mean(plane) -> float:
    a = np.asarray(plane, dtype=np.float64)
    if a.size == 0:
        raise ValueError("empty plane")
    return float(a.mean())


def variance(plane) -> float:
    """Population variance (divides by N)."""
    return covariance(plane, plane)


def covariance(a, b) -> float:
    """Population covariance of two equally shaped planes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty plane")
    da = a - a.mean()
    db = da if b is a else b - b.mean()
    return float(np.mean(da * db))


def global_stats(plane) -> tuple[float, float]:
    """(mean, population variance) of a plane."""
    return mean(plane), variance(plane)
