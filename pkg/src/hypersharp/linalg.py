"""Small dense solvers: intercept least squares on image bands and NNLS."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

COND_WARN = 1e12
JITTER = 1e-10
_CHUNK_ROWS = 1 << 16


@dataclass(frozen=True)
class CsWeights:
    """Spectral weights ``w`` and intercept of a band combination."""

    w: np.ndarray
    bias: float = 0.0
    jittered: bool = False

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if not np.isfinite(w).all() or not np.isfinite(self.bias):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "w", w)

    def combine(self, data: np.ndarray) -> np.ndarray:
        """``sum_b w_b * data[..., b] + bias`` for an (H, W, B) array."""
        return data @ self.w + self.bias


def _as_matrix(data) -> np.ndarray:
    a = data if isinstance(data, np.ndarray) else getattr(data, "data", data)
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(-1, a.shape[-1]) if a.ndim == 3 else a


def centered_moments(x: np.ndarray, t: Optional[np.ndarray] = None):
    """Means and population (co)variances of the columns of ``x`` (N x B).

    Returns ``(mean_x, cov_xx, mean_t, cov_xt)``; the target parts are
    ``None`` when ``t`` is not given. Accumulated in row chunks so that no
    centred copy of ``x`` is ever held in full.
    """
    n, b = x.shape
    mx = x.mean(axis=0)
    cxx = np.zeros((b, b))
    mt = cxt = None
    if t is not None:
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        mt = float(t.mean())
        cxt = np.zeros(b)
    for s in range(0, n, _CHUNK_ROWS):
        xc = x[s:s + _CHUNK_ROWS] - mx
        cxx += xc.T @ xc
        if t is not None:
            cxt += xc.T @ (t[s:s + _CHUNK_ROWS] - mt)
    cxx /= n
    if t is not None:
        cxt /= n
    return mx, cxx, mt, cxt


def cross_covariance(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Population covariance of every column of ``x`` (N x B) with ``t``."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    mx = x.mean(axis=0)
    tc = t - t.mean()
    out = np.zeros(x.shape[1])
    for s in range(0, x.shape[0], _CHUNK_ROWS):
        out += (x[s:s + _CHUNK_ROWS] - mx).T @ tc[s:s + _CHUNK_ROWS]
    return out / x.shape[0]


def solve_psd(c: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, bool]:
    """Solve ``c @ x = rhs`` for symmetric PSD ``c`` by Cholesky.

    Adds a ridge of ``1e-10 * trace / B`` when ``c`` is rank deficient or
    badly conditioned. Returns the solution and whether the ridge was used.
    """
    b = c.shape[0]
    eig = np.linalg.eigvalsh(c)
    top = eig[-1]
    cond = np.inf if eig[0] <= 0 else top / eig[0]
    jittered = False
    if cond > COND_WARN:
        warnings.warn(f"ill-conditioned normal equations (cond={cond:.3g}); "
                      "applying Tikhonov jitter", RuntimeWarning, stacklevel=3)
        trace = float(np.trace(c))
        ridge = JITTER * trace / b if trace > 0 else 1.0
        c = c + ridge * np.eye(b)
        jittered = True
    return cho_solve(cho_factor(c), rhs), jittered


def estimate_weights_lsq(bands, target) -> CsWeights:
    """Least-squares weights with intercept: ``min |bands @ w + bias - target|^2``.

    ``bands`` is an (H, W, B) array or cube, ``target`` an (H, W) array or
    PAN image on the same grid.
    """
    x = _as_matrix(bands)
    t = target if isinstance(target, np.ndarray) else getattr(target, "data", target)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if x.shape[0] != t.size:
        raise ValueError(f"spatial size mismatch: {x.shape[0]} vs {t.size} pixels")
    mx, cxx, mt, cxt = centered_moments(x, t)
    if not np.any(cxx):
        # constant bands: only the intercept can explain the target
        w, jittered = np.zeros(x.shape[1]), False
    else:
        w, jittered = solve_psd(cxx, cxt)
    return CsWeights(w, float(mt - mx @ w), jittered)


# ---------------------------------------------------------------------------
# nonnegative least squares


def nnls(a: np.ndarray, b: np.ndarray, max_iter: Optional[int] = None) -> tuple[np.ndarray, float]:
    """Lawson-Hanson active-set solution of ``min |a x - b|`` s.t. ``x >= 0``.

    Returns ``(x, residual_norm)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, n = a.shape
    if max_iter is None:
        max_iter = 3 * n
    tol = 10 * np.finfo(float).eps * np.abs(a).sum(axis=0).max() * max(m, n)
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    grad = a.T @ (b - a @ x)
    outer = 0
    while (~passive).any() and (grad[~passive] > tol).any():
        outer += 1
        if outer > max_iter:
            break
        cand = np.where(~passive, grad, -np.inf)
        entering = int(np.argmax(cand))
        passive[entering] = True
        alpha = None
        for _ in range(3 * n):
            s = np.zeros(n)
            s[passive], *_ = np.linalg.lstsq(a[:, passive], b, rcond=None)
            if (s[passive] > tol).all():
                x = s
                break
            blocking = passive & (s <= tol)
            alpha = np.min(x[blocking] / (x[blocking] - s[blocking]))
            x = x + alpha * (s - x)
            passive &= x > tol
            x[~passive] = 0.0
        if not passive[entering] and alpha == 0:
            # the entering variable cannot move: numerically at the optimum
            break
        grad = a.T @ (b - a @ x)
    return x, float(np.linalg.norm(a @ x - b))


def nnls_normal(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """NNLS given the normal equations ``gram = A^T A``, ``rhs = A^T b``.

    Factors ``gram = L L^T`` and solves the equivalent square problem
    ``min |L^T x - L^{-1} rhs|`` so the active-set loop only touches a
    p x p matrix.
    """
    factor, _ = cho_factor(gram, lower=True)
    lmat = np.tril(factor)
    y = solve_triangular(lmat, rhs, lower=True)
    x, _ = nnls(lmat.T, y)
    return x
