"""Scale-space machinery: interpolation, MTF filtering, decimation, Wald degradation.

Conventions used everywhere in the package:

* boundary extension is symmetric without repeating the edge sample
  (``[c b | a b c]``), numpy's ``"reflect"`` mode;
* decimation keeps samples ``phase, phase + R, ...`` with
  ``phase = R // 2`` (see :func:`default_phase`);
* :func:`ideal_interp` places input sample ``i`` at output ``R*i + R//2`` so
  that ``decimate(ideal_interp(x, R), R, R // 2) == x`` holds bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ImageCube, PanImage, SensorModel

Array = np.ndarray


def default_phase(ratio: int) -> int:
    return ratio // 2


@dataclass(frozen=True)
class SeparableKernel:
    """Odd-length 1-D kernel applied along both image axes."""

    taps: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=np.float64).copy()
        if t.ndim != 1 or t.size % 2 == 0:
            raise ValueError("kernel length must be odd")
        if self.normalized and abs(t.sum() - 1.0) > 1e-12:
            raise ValueError("normalized kernel must sum to 1")
        t.flags.writeable = False
        object.__setattr__(self, "taps", t)

    @property
    def half(self) -> int:
        return self.taps.size // 2

    @classmethod
    def from_weights(cls, weights) -> "SeparableKernel":
        w = np.asarray(weights, dtype=np.float64)
        return cls(w / w.sum(), normalized=True)

    @classmethod
    def delta(cls) -> "SeparableKernel":
        return cls(np.ones(1))


# ---------------------------------------------------------------------------
# 1-D building blocks


def _reflect_pad(x: Array, half: int, axis: int) -> Array:
    if half == 0:
        return x
    if half > x.shape[axis] - 1:
        raise ValueError(
            f"kernel half-width {half} does not fit a {x.shape[axis]}-sample axis "
            "under symmetric extension")
    pad = [(0, 0)] * x.ndim
    pad[axis] = (half, half)
    return np.pad(x, pad, mode="reflect")


def _axis_slice(ndim: int, axis: int, sl: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def correlate_axis(x: Array, taps: Array, axis: int, step: int = 1, phase: int = 0) -> Array:
    """Filter along ``axis`` and keep every ``step``-th output from ``phase``.

    ``out[i] = sum_k taps[k] * xp[phase + step*i + k]`` with ``xp`` the
    symmetrically padded input. The accumulation order does not depend on
    ``step``, so filtering then decimating is bit-identical to the strided
    evaluation.
    """
    taps = np.asarray(taps, dtype=np.float64)
    half = taps.size // 2
    n = x.shape[axis]
    count = len(range(phase, n, step))
    xp = _reflect_pad(np.asarray(x, dtype=np.float64), half, axis)
    out_shape = list(x.shape)
    out_shape[axis] = count
    out = np.zeros(out_shape)
    stop_span = step * (count - 1) + 1
    for k, t in enumerate(taps):
        start = phase + k
        out += t * xp[_axis_slice(x.ndim, axis, slice(start, start + stop_span, step))]
    return out


def correlate_axis_adjoint(y: Array, taps: Array, n: int, axis: int,
                           step: int = 1, phase: int = 0) -> Array:
    """Adjoint of :func:`correlate_axis` for an input axis of length ``n``."""
    taps = np.asarray(taps, dtype=np.float64)
    half = taps.size // 2
    count = y.shape[axis]
    padded_shape = list(y.shape)
    padded_shape[axis] = n + 2 * half
    zp = np.zeros(padded_shape)
    stop_span = step * (count - 1) + 1
    for k, t in enumerate(taps):
        start = phase + k
        zp[_axis_slice(y.ndim, axis, slice(start, start + stop_span, step))] += t * y
    nd = y.ndim
    out = zp[_axis_slice(nd, axis, slice(half, half + n))].copy()
    # fold the mirrored margins back onto the samples they were copied from
    for j in range(half):
        src_left = zp[_axis_slice(nd, axis, slice(j, j + 1))]
        out[_axis_slice(nd, axis, slice(half - j, half - j + 1))] += src_left
        m = j + 1
        src_right = zp[_axis_slice(nd, axis, slice(half + n - 1 + m, half + n + m))]
        out[_axis_slice(nd, axis, slice(n - 1 - m, n - m))] += src_right
    return out


def _keys_cubic(s: Array, a: float = -0.5) -> Array:
    s = np.abs(s)
    out = np.zeros_like(s)
    near = s <= 1
    far = (s > 1) & (s < 2)
    out[near] = ((a + 2) * s[near] - (a + 3)) * s[near] ** 2 + 1
    sf = s[far]
    out[far] = ((a * sf - 5 * a) * sf + 8 * a) * sf - 4 * a
    return out


def interpolation_kernel(ratio: int) -> SeparableKernel:
    """The ``4R-1`` tap kernel realized by :func:`ideal_interp` (23 taps for R=6).

    Samples of the Keys cubic (a = -1/2) at ``n / R``. The kernel is
    interpolating (1 at the origin, 0 at other multiples of R) and each of
    its R polyphase components sums to one.
    """
    n = np.arange(-(2 * ratio - 1), 2 * ratio)
    return SeparableKernel(_keys_cubic(n / ratio), normalized=False)


def _reflect_index(idx: Array, n: int) -> Array:
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.mod(idx, period)
    return np.where(idx > n - 1, period - idx, idx)


def _interp_axis(x: Array, ratio: int, axis: int) -> Array:
    n = x.shape[axis]
    m = np.arange(n * ratio)
    t = (m - default_phase(ratio)) / ratio
    base = np.floor(t).astype(np.int64)
    shape = [1] * x.ndim
    shape[axis] = m.size
    out = None
    # taps are accumulated from the farthest left neighbour rightward
    for j in (-1, 0, 1, 2):
        idx = base + j
        w = _keys_cubic(t - idx).reshape(shape)
        term = w * np.take(x, _reflect_index(idx, n), axis=axis)
        out = term if out is None else out + term
    return out


def ideal_interp_array(x: Array, ratio: int) -> Array:
    """Interpolate the two leading axes of ``x`` by ``ratio``."""
    if int(ratio) != ratio or ratio < 2:
        raise ValueError(f"ratio must be an integer >= 2, got {ratio}")
    x = np.asarray(x, dtype=np.float64)
    return _interp_axis(_interp_axis(x, ratio, 0), ratio, 1)


def ideal_interp(cube: ImageCube, ratio: int) -> ImageCube:
    """Polynomial approximation of the ideal interpolator (expansion by R).

    Equivalent to zero insertion followed by separable filtering with
    :func:`interpolation_kernel`, evaluated in polyphase form.
    """
    gsd = cube.gsd_m / ratio if cube.gsd_m is not None else None
    return cube.with_data(ideal_interp_array(cube.data, ratio), gsd)


# ---------------------------------------------------------------------------
# kernels


def gaussian_sigma(gain_nyquist: float, ratio: int) -> float:
    """Std-dev (in high-resolution pixels) of a Gaussian with the given Nyquist gain."""
    return ratio / np.pi * np.sqrt(-2.0 * np.log(gain_nyquist))


def mtf_gaussian(gain_nyquist: float, ratio: int, taps: int) -> SeparableKernel:
    """Truncated, renormalized sampled Gaussian matched to an MTF gain at pi/R."""
    if not 0 < gain_nyquist < 1:
        raise ValueError(f"Nyquist gain must lie in (0, 1), got {gain_nyquist}")
    if taps % 2 == 0:
        raise ValueError("taps must be odd")
    if taps < 4 * ratio + 1:
        raise ValueError(f"need at least 4R+1 = {4 * ratio + 1} taps, got {taps}")
    sigma = gaussian_sigma(gain_nyquist, ratio)
    n = np.arange(taps) - taps // 2
    return SeparableKernel.from_weights(np.exp(-0.5 * (n / sigma) ** 2))


def ideal_lowpass(ratio: int, taps: int) -> SeparableKernel:
    """Hamming-windowed sinc with cutoff pi/R."""
    if taps % 2 == 0:
        raise ValueError("taps must be odd")
    n = np.arange(taps) - taps // 2
    h = np.sinc(n / ratio) / ratio * np.hamming(taps)
    return SeparableKernel.from_weights(h)


def b3_spline_kernel(level: int = 0) -> SeparableKernel:
    """[1, 4, 6, 4, 1] / 16 with ``2**level - 1`` zeros between taps."""
    base = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    gap = 2 ** level
    taps = np.zeros(4 * gap + 1)
    taps[::gap] = base
    return SeparableKernel(taps)


def kernel_response(kernel: SeparableKernel, omega: float) -> float:
    """Magnitude of the (1-D) DTFT of a centred kernel at angular frequency omega."""
    n = np.arange(kernel.taps.size) - kernel.half
    return float(abs(np.sum(kernel.taps * np.exp(-1j * omega * n))))


# ---------------------------------------------------------------------------
# 2-D operations


def _check_fits(shape, kernel: SeparableKernel):
    for n in shape[:2]:
        if kernel.half > n - 1:
            raise ValueError(
                f"kernel of {kernel.taps.size} taps is too long for an image axis of {n}")


def filter_separable(plane: Array, kernel: SeparableKernel) -> Array:
    """Same-size separable filtering with symmetric boundary extension.

    Works on ``(H, W)`` planes and on ``(H, W, B)`` stacks (all bands with
    the same kernel).
    """
    plane = np.asarray(plane, dtype=np.float64)
    _check_fits(plane.shape, kernel)
    return correlate_axis(correlate_axis(plane, kernel.taps, 0), kernel.taps, 1)


def decimate(plane: Array, ratio: int, phase: int) -> Array:
    """Keep samples ``(R*i + phase, R*j + phase)``."""
    if int(ratio) != ratio or ratio < 2:
        raise ValueError(f"ratio must be an integer >= 2, got {ratio}")
    if not 0 <= phase < ratio:
        raise ValueError(f"phase {phase} out of range for ratio {ratio}")
    return np.asarray(plane)[phase::ratio, phase::ratio]


def filter_decimate(plane: Array, kernel: SeparableKernel, ratio: int,
                    phase: int | None = None) -> Array:
    """``decimate(filter_separable(plane, kernel), ratio, phase)`` evaluated on
    the kept samples only; the result is bit-identical to the two-step form."""
    if phase is None:
        phase = default_phase(ratio)
    if not 0 <= phase < ratio:
        raise ValueError(f"phase {phase} out of range for ratio {ratio}")
    plane = np.asarray(plane, dtype=np.float64)
    _check_fits(plane.shape, kernel)
    rows = correlate_axis(plane, kernel.taps, 0, step=ratio, phase=phase)
    return correlate_axis(rows, kernel.taps, 1, step=ratio, phase=phase)


def filter_decimate_adjoint(y: Array, kernel: SeparableKernel, ratio: int,
                            out_hw: tuple[int, int], phase: int | None = None) -> Array:
    """Adjoint of :func:`filter_decimate` mapping back to an ``out_hw`` grid."""
    if phase is None:
        phase = default_phase(ratio)
    cols = correlate_axis_adjoint(y, kernel.taps, out_hw[1], 1, step=ratio, phase=phase)
    return correlate_axis_adjoint(cols, kernel.taps, out_hw[0], 0, step=ratio, phase=phase)


def _gain_groups(gains: Array) -> dict[float, Array]:
    groups: dict[float, list[int]] = {}
    for b, g in enumerate(gains):
        groups.setdefault(float(g), []).append(b)
    return {g: np.asarray(idx) for g, idx in groups.items()}


def mtf_filter_cube(data: Array, sensor: SensorModel) -> Array:
    """Per-band MTF-Gaussian filtering of an (H, W, B) array, same size."""
    out = np.empty(data.shape)
    for g, idx in _gain_groups(sensor.hs_mtf_gain).items():
        k = mtf_gaussian(g, sensor.ratio, sensor.kernel_taps)
        out[:, :, idx] = filter_separable(data[:, :, idx], k)
    return out


def degrade_cube_array(data: Array, sensor: SensorModel) -> Array:
    """MTF-matched filtering plus decimation by R of an (H, W, B) array."""
    if data.shape[2] != sensor.bands:
        raise ValueError(
            f"cube has {data.shape[2]} bands but the sensor model has {sensor.bands}")
    r = sensor.ratio
    groups = _gain_groups(sensor.hs_mtf_gain)
    if len(groups) == 1:
        (g,) = groups
        return filter_decimate(data, mtf_gaussian(g, r, sensor.kernel_taps), r)
    h = len(range(default_phase(r), data.shape[0], r))
    w = len(range(default_phase(r), data.shape[1], r))
    out = np.empty((h, w, data.shape[2]))
    for g, idx in groups.items():
        k = mtf_gaussian(g, r, sensor.kernel_taps)
        out[:, :, idx] = filter_decimate(data[:, :, idx], k, r)
    return out


def degrade_band(plane: Array, gain: float, sensor: SensorModel) -> Array:
    """Single-band version of :func:`degrade_cube_array` (same arithmetic)."""
    k = mtf_gaussian(gain, sensor.ratio, sensor.kernel_taps)
    return filter_decimate(plane, k, sensor.ratio)


def degrade_pan_array(pan: Array, sensor: SensorModel) -> Array:
    """Near-ideal low-pass plus decimation by R of a PAN array."""
    k = ideal_lowpass(sensor.ratio, sensor.kernel_taps)
    return filter_decimate(pan, k, sensor.ratio)


def pan_mtf_lowpass(pan: Array, sensor: SensorModel) -> Array:
    """PAN MTF-filter, decimate by R, re-expand to the original grid."""
    pan = np.asarray(pan, dtype=np.float64)
    r = sensor.ratio
    h, w = pan.shape
    ph, pw = -h % r, -w % r
    work = np.pad(pan, ((0, ph), (0, pw)), mode="reflect") if ph or pw else pan
    k = mtf_gaussian(sensor.pan_mtf_gain, r, sensor.kernel_taps)
    low = ideal_interp_array(filter_decimate(work, k, r), r)
    return low[:h, :w]


def wald_downgrade(cube: ImageCube, pan: PanImage,
                   sensor: SensorModel) -> tuple[ImageCube, PanImage]:
    """Spatially degrade an HS/PAN pair by the resolution ratio.

    HS bands go through their MTF-matched Gaussians, PAN through the
    windowed-sinc approximation of the ideal filter; both are decimated at
    the package phase. The PAN output has the HS input's dimensions.
    """
    r = sensor.ratio
    if pan.shape != (cube.height * r, cube.width * r):
        raise ValueError(
            f"pan shape {pan.shape} is not {r} x cube shape {cube.shape[:2]}")
    if cube.bands != sensor.bands:
        raise ValueError(
            f"cube has {cube.bands} bands, sensor model describes {sensor.bands}")
    hs_lr = degrade_cube_array(cube.data, sensor)
    pan_lr = degrade_pan_array(pan.data, sensor)
    hs_gsd = cube.gsd_m * r if cube.gsd_m is not None else None
    pan_gsd = pan.gsd_m * r if pan.gsd_m is not None else None
    return cube.with_data(hs_lr, hs_gsd), PanImage(pan_lr, pan_gsd)

