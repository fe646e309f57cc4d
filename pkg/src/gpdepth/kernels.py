"""Matérn covariance functions and GP hyperparameters.

Distances are in pixels. Two 2D structures are available: a product of 1D
Matérn factors (separable, so it factors as a Kronecker product on a grid) and
the isotropic Matérn on Euclidean distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

NUS = (0.5, 1.5, 2.5)
STRUCTURES = ("product", "isotropic")


@dataclass(frozen=True)
class KernelSpec:
    nu: float = 2.5
    length_scale: float = 1.5
    output_scale: float = 1.0

    def __post_init__(self):
        if self.nu not in NUS:
            raise InputError(f"nu must be one of {NUS}, got {self.nu}")
        if not self.length_scale > 0:
            raise InputError(f"length_scale must be > 0, got {self.length_scale}")
        if not self.output_scale > 0:
            raise InputError(f"output_scale must be > 0, got {self.output_scale}")


@dataclass(frozen=True)
class GpHyperparams:
    """Hand-set hyperparameters. Defaults for ``length_scale``/``sigma_*`` are the KITTI values."""

    length_scale: float = 1.5
    sigma_dl: float = 0.05
    sigma_meas: float = 0.001
    output_scale: float = 1.0
    nu: float = 2.5
    structure: str = "product"

    def __post_init__(self):
        for name in ("length_scale", "sigma_dl", "sigma_meas", "output_scale"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.sigma_meas > self.sigma_dl:
            raise InputError(f"sigma_meas ({self.sigma_meas}) must not exceed sigma_dl ({self.sigma_dl})")
        if self.structure not in STRUCTURES:
            raise InputError(f"structure must be one of {STRUCTURES}, got {self.structure!r}")
        # validates nu
        self.kernel

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(nu=self.nu, length_scale=self.length_scale, output_scale=self.output_scale)


def _matern_unit(t, nu):
    if nu == 0.5:
        return np.exp(-t)
    if nu == 1.5:
        s = np.sqrt(3.0) * t
        return (1.0 + s) * np.exp(-s)
    s = np.sqrt(5.0) * t
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def matern_1d(r, spec: KernelSpec):
    """Matérn covariance at distance ``r`` (scalar or array), scaled by ``output_scale``."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise InputError("distance must be nonnegative")
    out = spec.output_scale * _matern_unit(r / spec.length_scale, spec.nu)
    return out if out.ndim else float(out)


def kernel_2d(a, b, spec: KernelSpec, structure: str = "product") -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(kernel_matrix(a.reshape(1, 2), b.reshape(1, 2), spec, structure)[0, 0])


def kernel_matrix(xs, ys, spec: KernelSpec, structure: str = "product") -> np.ndarray:
    """Dense covariance matrix between point lists ``xs`` (n, 2) and ``ys`` (m, 2)."""
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, 2)
    ys = np.asarray(ys, dtype=np.float64).reshape(-1, 2)
    du = np.abs(xs[:, None, 0] - ys[None, :, 0])
    dv = np.abs(xs[:, None, 1] - ys[None, :, 1])
    ell = spec.length_scale
    if structure == "product":
        return spec.output_scale * _matern_unit(du / ell, spec.nu) * _matern_unit(dv / ell, spec.nu)
    if structure == "isotropic":
        return spec.output_scale * _matern_unit(np.hypot(du, dv) / ell, spec.nu)
    raise InputError(f"structure must be one of {STRUCTURES}, got {structure!r}")


def kernel_matrix_1d(coords, spec: KernelSpec) -> np.ndarray:
    """1D Matérn Gram matrix over ``coords``; the per-axis factor of a product kernel."""
    c = np.asarray(coords, dtype=np.float64)
    return matern_1d(np.abs(c[:, None] - c[None, :]), spec)
