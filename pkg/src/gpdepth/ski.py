"""Structured kernel interpolation (KISS-GP) for depth completion.

The training covariance is approximated as ``W (K_u ⊗ K_v) W^T`` where ``W``
holds sparse interpolation weights onto a regular inducing grid and ``K_u``,
``K_v`` are the 1D Matérn Gram matrices along each image axis. Posterior means
are obtained with preconditioned conjugate gradients using only
matrix-vector products, so the ``m x m`` grid covariance is never formed.

Inducing point ``(i, j)`` (``i`` along u, ``j`` along v) has flat index
``i * m_v + j``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .depthmap import DepthMap, SparsePointSet, TrainingSet, build_training_set
from .errors import CgBreakdown, HullError, InputError
from .kernels import GpHyperparams, KernelSpec, kernel_matrix_1d

log = logging.getLogger(__name__)

ORDERS = ("linear", "cubic")
PRECONDITIONERS = ("none", "jacobi")
DEPTH_FLOOR = 1e-3
DEFAULT_DENSITY = 1.0


@dataclass(frozen=True)
class CgSettings:
    rel_tolerance: float = 1e-4
    max_iters: int = 1000
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not self.rel_tolerance > 0:
            raise InputError(f"CG tolerance must be > 0, got {self.rel_tolerance}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InputError(f"CG max_iters must be a positive integer, got {self.max_iters}")
        if self.preconditioner not in PRECONDITIONERS:
            raise InputError(f"preconditioner must be one of {PRECONDITIONERS}")


@dataclass(frozen=True)
class CgInfo:
    iterations: int
    rel_residual: float
    converged: bool


@dataclass(frozen=True, eq=False)
class InducingGrid:
    u_coords: np.ndarray
    v_coords: np.ndarray

    @property
    def m_u(self) -> int:
        return len(self.u_coords)

    @property
    def m_v(self) -> int:
        return len(self.v_coords)

    @property
    def size(self) -> int:
        return self.m_u * self.m_v

    def points(self) -> np.ndarray:
        """All inducing points ``(m, 2)`` in flat-index order."""
        uu, vv = np.meshgrid(self.u_coords, self.v_coords, indexing="ij")
        return np.column_stack([uu.ravel(), vv.ravel()])


def _axis(lo, hi, count):
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    count = max(2, int(count))
    step = (hi - lo) / (count - 1)
    coords = lo + step * np.arange(count)
    coords[-1] = hi
    return coords


def build_inducing_grid(train, test, density: float = DEFAULT_DENSITY, shape=None) -> InducingGrid:
    """Uniform grid spanning the bounding box of ``train`` and ``test`` coordinates.

    ``shape = (width, height)`` is the reference resolution that ``density``
    scales; by default it is the pixel extent of the points (span + 1). At
    density 1 on pixel-center inputs the grid lands exactly on the pixel centers.
    """
    if not 0 < density <= 1:
        raise InputError(f"inducing density must be in (0, 1], got {density}")
    pts = [np.asarray(getattr(p, "inputs", p), dtype=np.float64).reshape(-1, 2) for p in (train, test)]
    pts = np.vstack(pts)
    if len(pts) == 0:
        raise InputError("cannot build an inducing grid without points")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    if shape is None:
        shape = hi - lo + 1.0
    m_u = max(2, int(math.floor(density * shape[0] + 0.5)))
    m_v = max(2, int(math.floor(density * shape[1] + 0.5)))
    return InducingGrid(_axis(lo[0], hi[0], m_u), _axis(lo[1], hi[1], m_v))


def _keys(x, a=-0.5):
    x = np.abs(x)
    near = ((a + 2) * x - (a + 3)) * x * x + 1
    far = ((a * x - 5 * a) * x + 8 * a) * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _axis_weights(x, coords, order, axis_name):
    """Per-axis stencil: index array ``(n, k)`` and weight array ``(n, k)``."""
    m = len(coords)
    lo, hi = coords[0], coords[-1]
    tol = 1e-9 * max(1.0, hi - lo)
    bad = (x < lo - tol) | (x > hi + tol)
    if bad.any():
        raise HullError(f"{int(bad.sum())} point(s) outside the inducing grid along {axis_name} "
                        f"[{lo}, {hi}], e.g. {x[bad][0]}")
    step = (hi - lo) / (m - 1)
    t = np.clip((x - lo) / step, 0.0, m - 1)
    snap = np.abs(t - np.rint(t)) < 1e-12
    t = np.where(snap, np.rint(t), t)
    i = np.clip(np.floor(t).astype(np.int64), 0, m - 2)
    f = t - i
    if order == "linear":
        return np.column_stack([i, i + 1]), np.column_stack([1.0 - f, f])
    idx = np.column_stack([i - 1, i, i + 1, i + 2])
    w = np.column_stack([_keys(1.0 + f), _keys(f), _keys(1.0 - f), _keys(2.0 - f)])
    edge = (i - 1 < 0) | (i + 2 > m - 1)
    if edge.any():
        idx[edge] = np.column_stack([i[edge], i[edge], i[edge] + 1, i[edge] + 1])
        w[edge] = np.column_stack([np.zeros(edge.sum()), 1.0 - f[edge], f[edge], np.zeros(edge.sum())])
    return idx, w


def interpolation_weights(points, grid: InducingGrid, order: str = "linear") -> sparse.csr_matrix:
    """Sparse ``(n, m)`` matrix interpolating grid values onto ``points``.

    Linear: bilinear over the enclosing cell. Cubic: separable Keys cubic
    convolution over a 4x4 stencil, falling back to bilinear next to the grid
    boundary.
    """
    if order not in ORDERS:
        raise InputError(f"interpolation order must be one of {ORDERS}, got {order!r}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    iu, wu = _axis_weights(pts[:, 0], grid.u_coords, order, "u")
    iv, wv = _axis_weights(pts[:, 1], grid.v_coords, order, "v")
    cols = (iu[:, :, None] * grid.m_v + iv[:, None, :]).reshape(n, -1)
    vals = (wu[:, :, None] * wv[:, None, :]).reshape(n, -1)
    rows = np.repeat(np.arange(n), cols.shape[1])
    W = sparse.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, grid.size))
    W.sum_duplicates()
    W.eliminate_zeros()
    return W


def kronecker_mvm(K_u, K_v, x) -> np.ndarray:
    """``(K_u ⊗ K_v) x`` without forming the Kronecker product."""
    K_u = np.asarray(K_u)
    K_v = np.asarray(K_v)
    x = np.asarray(x)
    m_u, m_v = K_u.shape[0], K_v.shape[0]
    if K_u.shape != (m_u, m_u) or K_v.shape != (m_v, m_v):
        raise InputError(f"Kronecker factors must be square, got {K_u.shape} and {K_v.shape}")
    if x.shape != (m_u * m_v,):
        raise InputError(f"vector length {x.shape} does not match {m_u} x {m_v} grid")
    return (K_u @ x.reshape(m_u, m_v) @ K_v.T).ravel()


@dataclass(frozen=True, eq=False)
class SkiModel:
    grid: InducingGrid
    K_u: np.ndarray
    K_v: np.ndarray
    W_train: sparse.csr_matrix
    noise_sq: np.ndarray
    y_centered: np.ndarray
    mean_offset: float
    settings: CgSettings = field(default_factory=CgSettings)
    order: str = "linear"

    @property
    def n(self) -> int:
        return self.W_train.shape[0]


def build_ski_model(train: TrainingSet, test, spec: KernelSpec, *, density: float = DEFAULT_DENSITY,
                    order: str = "linear", settings: Optional[CgSettings] = None,
                    shape=None, jitter: Optional[float] = None) -> SkiModel:
    """Assemble the SKI operator for ``train``; the grid also covers ``test``.

    ``jitter`` (default ``1e-8 * output_scale``) is added to the noise
    variances, the same regularization the exact solver applies.
    """
    if len(train) == 0:
        raise InputError("training set is empty")
    if jitter is None:
        jitter = 1e-8 * spec.output_scale
    grid = build_inducing_grid(train, test, density, shape)
    W = interpolation_weights(train.inputs, grid, order)
    offset = float(np.mean(train.outputs))
    return SkiModel(
        grid=grid,
        K_u=kernel_matrix_1d(grid.u_coords, spec),
        K_v=kernel_matrix_1d(grid.v_coords, spec),
        W_train=W,
        noise_sq=train.noise ** 2 + jitter,
        y_centered=train.outputs - offset,
        mean_offset=offset,
        settings=settings or CgSettings(),
        order=order,
    )


def ski_mvm(model: SkiModel, x) -> np.ndarray:
    """``(W (K_u ⊗ K_v) W^T + diag(noise_sq)) x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n,):
        raise InputError(f"vector length {x.shape} does not match N = {model.n}")
    W = model.W_train
    return W @ kronecker_mvm(model.K_u, model.K_v, W.T @ x) + model.noise_sq * x


def ski_diagonal(model: SkiModel) -> np.ndarray:
    """Exact diagonal of the SKI operator, for Jacobi preconditioning."""
    W = model.W_train.tocsr()
    n = W.shape[0]
    nnz = np.diff(W.indptr)
    k = int(nnz.max(initial=0))
    cols = np.zeros((n, max(k, 1)), dtype=np.int64)
    vals = np.zeros((n, max(k, 1)))
    rows = np.repeat(np.arange(n), nnz)
    pos = np.arange(W.nnz) - W.indptr[rows]
    cols[rows, pos] = W.indices
    vals[rows, pos] = W.data
    iu, iv = np.divmod(cols, model.grid.m_v)
    block = model.K_u[iu[:, :, None], iu[:, None, :]] * model.K_v[iv[:, :, None], iv[:, None, :]]
    return np.einsum("na,nb,nab->n", vals, vals, block) + model.noise_sq


def cg_solve(apply: Callable[[np.ndarray], np.ndarray], b, settings: Optional[CgSettings] = None,
             diag=None) -> tuple[np.ndarray, CgInfo]:
    """Solve ``A x = b`` for SPD ``A`` given only ``apply(x) = A x``.

    Stops when ``||A x - b|| <= rel_tolerance * ||b||``. With the ``jacobi``
    preconditioner, ``diag`` is the diagonal of ``A`` (omitted means identity).
    Hitting ``max_iters`` is not an error: the best iterate is returned with
    ``converged=False``.
    """
    settings = settings or CgSettings()
    b = np.asarray(b, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise CgBreakdown("right-hand side contains NaN or Inf")
    x = np.zeros_like(b)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return x, CgInfo(0, 0.0, True)
    if settings.preconditioner == "jacobi" and diag is not None:
        inv_diag = 1.0 / np.asarray(diag, dtype=np.float64)
        precond = lambda r: inv_diag * r  # noqa: E731
    else:
        precond = lambda r: r  # noqa: E731

    target = settings.rel_tolerance * b_norm
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    best_x, best_res = x.copy(), b_norm
    res = b_norm
    it = 0
    while it < settings.max_iters:
        Ap = apply(p)
        pAp = float(p @ Ap)
        if not math.isfinite(pAp) or pAp <= 0:
            raise CgBreakdown(f"non-positive or non-finite curvature p^T A p = {pAp} at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = float(np.linalg.norm(r))
        if not math.isfinite(res):
            raise CgBreakdown(f"residual became non-finite at iteration {it}")
        if res < best_res:
            best_res = res
            best_x = x.copy()
        if res <= target:
            break
        z = precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    converged = res <= target
    if not converged:
        x = best_x
    true_res = float(np.linalg.norm(b - apply(x))) / b_norm
    info = CgInfo(it, true_res, converged)
    if not converged:
        log.warning("CG did not converge in %d iterations (relative residual %.3e)", it, true_res)
    return x, info


def ski_solve(model: SkiModel) -> tuple[np.ndarray, CgInfo]:
    """``alpha = (K_SKI + D)^{-1} (y - offset)``."""
    diag = ski_diagonal(model) if model.settings.preconditioner == "jacobi" else None
    return cg_solve(lambda x: ski_mvm(model, x), model.y_centered, model.settings, diag)


def ski_posterior_mean(model: SkiModel, test, return_info: bool = False):
    """Posterior mean at ``test`` points: ``W_* (K_u ⊗ K_v) W^T alpha + offset``."""
    test = np.asarray(test, dtype=np.float64).reshape(-1, 2)
    W_test = interpolation_weights(test, model.grid, model.order)
    alpha, info = ski_solve(model)
    log.debug("CG: %d iterations, relative residual %.3e", info.iterations, info.rel_residual)
    mean = W_test @ kronecker_mvm(model.K_u, model.K_v, model.W_train.T @ alpha) + model.mean_offset
    return (mean, info) if return_info else mean


def output_grid(in_size, out_size) -> np.ndarray:
    """Pixel centers of an ``out_size = (width, height)`` image in input pixel units, row-major."""
    (w, h), (ow, oh) = in_size, out_size
    u = (np.arange(ow) + 0.5) * (w / ow)
    v = (np.arange(oh) + 0.5) * (h / oh)
    vv, uu = np.meshgrid(v, u, indexing="ij")
    return np.column_stack([uu.ravel(), vv.ravel()])


def complete_depth(dense: DepthMap, sparse_points: SparsePointSet, hp: GpHyperparams,
                   out_size=None, settings: Optional[CgSettings] = None, *,
                   density: float = DEFAULT_DENSITY, order: str = "linear", return_info: bool = False):
    """Fuse a dense depth map with sparse measurements into a refined, fully valid map.

    ``out_size = (width, height)`` may differ from the input resolution; output
    pixel centers are mapped into input pixel units. ``density`` sets the
    inducing grid size relative to the output resolution; keep the grid
    spacing below the length scale, or depth edges overshoot.
    """
    if hp.structure != "product":
        raise InputError("the SKI solver requires the product kernel structure")
    if out_size is None:
        out_size = (dense.width, dense.height)
    ow, oh = (int(s) for s in out_size)
    if ow < 1 or oh < 1:
        raise InputError(f"output size must be at least 1x1, got {out_size}")
    train = build_training_set(dense, sparse_points, hp)
    if len(train) == 0:
        raise InputError("no valid dense pixels and no sparse points: nothing to regress")
    test = output_grid((dense.width, dense.height), (ow, oh))
    model = build_ski_model(train, test, hp.kernel, density=density, order=order,
                            settings=settings, shape=(ow, oh))
    log.info("SKI: N=%d, inducing grid %dx%d (density %g), output %dx%d",
             len(train), model.grid.m_u, model.grid.m_v, density, ow, oh)
    mean, info = ski_posterior_mean(model, test, return_info=True)
    values = np.maximum(mean.reshape(oh, ow), DEPTH_FLOOR)
    out = DepthMap(values, np.ones((oh, ow), dtype=bool))
    return (out, info) if return_info else out
