"""Quality indices.

Reduced resolution (reference based): ERGAS, SAM, Q2^n.
Full resolution (no reference): D_lambda, D_S and their product RQNR.

Q2^n treats each pixel spectrum as a Cayley-Dickson hypercomplex number
with 2^n components (bands zero-padded up to the next power of two). The
block statistics are

    mean      mu_z = E[z]                      (componentwise)
    variance  s_z^2 = E[|z - mu_z|^2]
    covar.    s_zw = E[(z - mu_z) (w - mu_w)^*]   (hypercomplex product)

and the block index is

    |s_zw| / (s_z s_w) * 2 s_z s_w / (s_z^2 + s_w^2) * 2 |mu_z||mu_w| / (|mu_z|^2 + |mu_w|^2)

averaged over non-overlapping 32x32 blocks. The product moment is
evaluated through bilinearity: ``e_i e_j = sign(i, j) e_(i xor j)``, so it
only needs the real B x B cross-moment matrix of the block.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.linalg

from .core import ImageCube, PanImage, SensorModel
from .linalg import centered_moments
from .resample import degrade_cube_array

log = logging.getLogger(__name__)

Q_BLOCK = 32


def _cube(x) -> np.ndarray:
    a = x.data if isinstance(x, (ImageCube, PanImage)) else x
    a = np.asarray(a, dtype=np.float64)
    return a[..., np.newaxis] if a.ndim == 2 else a


def _same_shape(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")


# ---------------------------------------------------------------------------
# reference-based indices


def ergas(pred, gt, ratio: float) -> float:
    """``(100 / R) * sqrt(mean_b (RMSE_b / mu_b)^2)`` with ``mu_b`` the GT band mean."""
    p, g = _cube(pred), _cube(gt)
    _same_shape(p, g)
    mu = g.mean(axis=(0, 1))
    if np.any(mu == 0):
        raise ValueError("degenerate reference band: zero mean")
    rmse = np.sqrt(((p - g) ** 2).mean(axis=(0, 1)))
    return float(100.0 / ratio * np.sqrt(np.mean((rmse / mu) ** 2)))


@dataclass(frozen=True)
class SamResult:
    mean_deg: float
    angles_deg: np.ndarray  # NaN where skipped
    skipped: int


def sam_map(pred, gt) -> SamResult:
    """Per-pixel spectral angles in degrees; zero-norm pixels are skipped."""
    p, g = _cube(pred), _cube(gt)
    _same_shape(p, g)
    dot = np.einsum("ijk,ijk->ij", p, g)
    norms = np.sqrt(np.einsum("ijk,ijk->ij", p, p) * np.einsum("ijk,ijk->ij", g, g))
    valid = norms > 0
    skipped = int(valid.size - np.count_nonzero(valid))
    if skipped == valid.size:
        raise ValueError("SAM undefined: every pixel has a zero-norm spectrum")
    cos = np.divide(dot, norms, out=np.zeros_like(dot), where=valid)
    angles = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    angles[~valid] = np.nan
    if skipped:
        log.info("sam: skipped %d zero-norm pixels", skipped)
    return SamResult(float(angles[valid].mean()), angles, skipped)


def sam(pred, gt) -> float:
    """Mean spectral angle in degrees."""
    return sam_map(pred, gt).mean_deg


# ---------------------------------------------------------------------------
# Cayley-Dickson algebra


def padded_components(bands: int) -> int:
    return 1 << math.ceil(math.log2(bands)) if bands > 1 else 1


def cd_conjugate(x: np.ndarray) -> np.ndarray:
    out = -np.asarray(x, dtype=np.float64)
    out[..., 0] *= -1
    return out


def cd_multiply(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Recursive Cayley-Dickson product ``(a, b)(c, d) = (ac - d*b, da + bc*)``.

    Reference implementation; works on the last axis of equal-length inputs.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[-1]
    if n == 1:
        return x * y
    m = n // 2
    a, b = x[..., :m], x[..., m:]
    c, d = y[..., :m], y[..., m:]
    first = cd_multiply(a, c) - cd_multiply(cd_conjugate(d), b)
    second = cd_multiply(d, a) + cd_multiply(b, cd_conjugate(c))
    return np.concatenate([first, second], axis=-1)


@lru_cache(maxsize=None)
def cd_sign_table(n: int) -> np.ndarray:
    """``sign[i, j]`` such that ``e_i e_j = sign[i, j] * e_(i xor j)``."""
    s = np.ones((1, 1))
    while s.shape[0] < n:
        m = s.shape[0]
        cs = -np.ones(m)
        cs[0] = 1.0
        top = np.concatenate([s, s.T], axis=1)
        bottom = np.concatenate([s * cs, -s.T * cs], axis=1)
        s = np.concatenate([top, bottom], axis=0)
    s.flags.writeable = False
    return s


@lru_cache(maxsize=None)
def _conj_product_plan(bands: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Scatter plan for ``z w^*`` from the cross moments ``z_i w_j`` (i, j < bands)."""
    n = padded_components(bands)
    i, j = np.meshgrid(np.arange(bands), np.arange(bands), indexing="ij")
    cs = np.where(j == 0, 1.0, -1.0)
    weight = cd_sign_table(n)[i, j] * cs
    return (i ^ j).ravel(), weight.ravel(), n


def conj_product_from_moments(cross: np.ndarray) -> np.ndarray:
    """Hypercomplex ``E[z w^*]`` from the real cross-moment matrices ``E[z_i w_j]``.

    ``cross`` has shape (..., B, B); the result has shape (..., 2^n).
    """
    bands = cross.shape[-1]
    idx, weight, n = _conj_product_plan(bands)
    lead = cross.shape[:-2]
    flat = cross.reshape(-1, bands * bands) * weight
    count = flat.shape[0]
    offsets = (np.arange(count)[:, None] * n + idx[None, :]).ravel()
    out = np.bincount(offsets, weights=flat.ravel(), minlength=count * n)
    return out.reshape(*lead, n)


@dataclass(frozen=True)
class HypercomplexBlock:
    """Pixels of one block as 2^n-component hypercomplex numbers, shape (N, 2^n)."""

    values: np.ndarray
    bands: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        n = v.shape[1]
        if n & (n - 1) or n != padded_components(self.bands):
            raise ValueError(f"{n} components do not pad {self.bands} bands to a power of two")
        if np.any(v[:, self.bands:]):
            raise ValueError("padding components must be zero")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_pixels(cls, block: np.ndarray) -> "HypercomplexBlock":
        """From an (h, w, B) or (N, B) block of spectra."""
        b = block.shape[-1]
        flat = block.reshape(-1, b)
        out = np.zeros((flat.shape[0], padded_components(b)))
        out[:, :b] = flat
        return cls(out, b)

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def variance(self) -> float:
        d = self.values - self.mean()
        return float((d * d).sum(axis=1).mean())

    def covariance(self, other: "HypercomplexBlock") -> np.ndarray:
        """``E[(z - mu_z)(w - mu_w)^*]`` via the cross-moment route."""
        dz = self.values[:, :self.bands] - self.mean()[:self.bands]
        dw = other.values[:, :other.bands] - other.mean()[:other.bands]
        return conj_product_from_moments(dz.T @ dw / dz.shape[0])


# ---------------------------------------------------------------------------
# Q2^n


@dataclass(frozen=True)
class Q2nResult:
    value: float
    block_values: np.ndarray
    zero_variance_blocks: int


def _block_view(a: np.ndarray, block: int) -> np.ndarray:
    h, w, b = a.shape
    nh, nw = h // block, w // block
    v = a[:nh * block, :nw * block].reshape(nh, block, nw, block, b)
    return v.transpose(0, 2, 1, 3, 4).reshape(nh * nw, block * block, b)


def q2n_blocks(pred, gt, block: int = Q_BLOCK) -> Q2nResult:
    """Q2^n with per-block values (row-major block order)."""
    p, g = _cube(pred), _cube(gt)
    _same_shape(p, g)
    if min(p.shape[:2]) < block:
        raise ValueError(f"image {p.shape[:2]} is smaller than the {block}x{block} block")
    zb, wb = _block_view(g, block), _block_view(p, block)
    mu_z, mu_w = zb.mean(axis=1), wb.mean(axis=1)
    dz, dw = zb - mu_z[:, None], wb - mu_w[:, None]
    n = zb.shape[1]
    var_z = np.einsum("knb,knb->k", dz, dz) / n
    var_w = np.einsum("knb,knb->k", dw, dw) / n
    cov = conj_product_from_moments(np.matmul(dz.transpose(0, 2, 1), dw) / n)
    cov_mod = np.sqrt((cov * cov).sum(axis=1))
    mz2, mw2 = (mu_z * mu_z).sum(axis=1), (mu_w * mu_w).sum(axis=1)

    var_sum = var_z + var_w
    flat = var_sum == 0
    # 2|s_zw| / (s_z^2 + s_w^2) merges the first two factors
    structure = np.divide(2.0 * cov_mod, var_sum, out=np.ones_like(var_sum), where=~flat)
    mean_sum = mz2 + mw2
    luminance = np.divide(2.0 * np.sqrt(mz2 * mw2), mean_sum,
                          out=np.ones_like(mean_sum), where=mean_sum > 0)
    q = structure * luminance
    n_flat = int(np.count_nonzero(flat))
    if n_flat == q.size:
        raise ValueError("Q2n undefined: both images are flat in every block")
    if n_flat:
        log.info("q2n: %d of %d blocks have zero variance in both images", n_flat, q.size)
    # bilinearity does not bound |s_zw| by s_z s_w beyond 8 components
    over = q > 1.0
    if over.any():
        log.info("q2n: %d block values above 1 clipped", int(np.count_nonzero(over)))
        q = np.minimum(q, 1.0)
    return Q2nResult(float(q.mean()), q, n_flat)


def q2n(pred, gt, block: int = Q_BLOCK) -> float:
    """Hypercomplex universal image quality index averaged over blocks."""
    return q2n_blocks(pred, gt, block).value


# ---------------------------------------------------------------------------
# no-reference indices


def d_lambda(fused, hs_orig, sensor: SensorModel) -> float:
    """``1 - Q2n(fused degraded by the HS MTF path, original HS)``."""
    f, h = _cube(fused), _cube(hs_orig)
    r = sensor.ratio
    if f.shape[:2] != (h.shape[0] * r, h.shape[1] * r) or f.shape[2] != h.shape[2]:
        raise ValueError(f"fused shape {f.shape} is not R={r} times the HS shape {h.shape}")
    return float(np.clip(1.0 - q2n(degrade_cube_array(f, sensor), h), 0.0, 1.0))


@dataclass(frozen=True)
class DsResult:
    value: float
    weights: np.ndarray
    bias: float


def d_s_details(fused, pan) -> DsResult:
    """Regression-based spatial distortion with the fitted weights."""
    f = _cube(fused)
    p = np.asarray(pan.data if isinstance(pan, PanImage) else pan, dtype=np.float64)
    if f.shape[:2] != p.shape:
        raise ValueError(f"fused {f.shape[:2]} and PAN {p.shape} differ in size")
    var_p = float(p.var())
    if var_p == 0:
        raise ValueError("D_S undefined: the PAN image has zero variance")
    x = f.reshape(-1, f.shape[2])
    t = p.reshape(-1)
    mx, cxx, mt, cxt = centered_moments(x, t)
    if np.any(cxx):
        # SVD-based solve: collinear bands are common and need no jitter here
        w = scipy.linalg.lstsq(cxx, cxt, cond=1e-13)[0]
    else:
        w = np.zeros(x.shape[1])
    bias = float(mt - mx @ w)
    resid = np.empty(t.size)
    for s in range(0, t.size, 1 << 16):
        resid[s:s + (1 << 16)] = x[s:s + (1 << 16)] @ w + bias - t[s:s + (1 << 16)]
    value = float(np.clip(resid.var() / var_p, 0.0, 1.0))
    return DsResult(value, w, bias)


def d_s(fused, pan) -> float:
    """``Var(I - P) / Var(P)`` with ``I`` the LSQ band combination best matching P."""
    return d_s_details(fused, pan).value


def rqnr(d_lam: float, d_sp: float, alpha: float = 1.0, beta: float = 1.0) -> float:
    """``(1 - D_lambda)^alpha * (1 - D_S)^beta``."""
    for name, v in (("d_lambda", d_lam), ("d_s", d_sp)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    return float((1.0 - d_lam) ** alpha * (1.0 - d_sp) ** beta)


# ---------------------------------------------------------------------------
# reports

_BOUNDS = {
    "ergas": (0.0, math.inf), "sam": (0.0, 180.0), "q2n": (0.0, 1.0),
    "d_lambda": (0.0, 1.0), "d_s": (0.0, 1.0), "rqnr": (0.0, 1.0),
}


@dataclass
class MetricReport:
    """Scores of one (method, image) pair."""

    method: str
    image: str
    scores: dict[str, float] = field(default_factory=dict)
    per_band: Optional[dict[str, list]] = None

    def __post_init__(self):
        for name, v in self.scores.items():
            lo, hi = _BOUNDS.get(name, (-math.inf, math.inf))
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")


def reduced_resolution_report(pred, gt, ratio: int, method: str = "", image: str = "",
                              names=("ergas", "sam", "q2n")) -> MetricReport:
    funcs = {"ergas": lambda: ergas(pred, gt, ratio), "sam": lambda: sam(pred, gt),
             "q2n": lambda: q2n(pred, gt)}
    return MetricReport(method, image, {n: funcs[n]() for n in names if n in funcs})


def full_resolution_report(fused, hs, pan, sensor: SensorModel, method: str = "",
                           image: str = "") -> MetricReport:
    dl = d_lambda(fused, hs, sensor)
    ds = d_s(fused, pan)
    return MetricReport(method, image, {"d_lambda": dl, "d_s": ds, "rqnr": rqnr(dl, ds)})
