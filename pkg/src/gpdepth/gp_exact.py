"""Exact GP regression with per-point noise, via a dense Cholesky factorization.

Only practical for small N; used as the reference the SKI solver is checked
against, and the only path that returns posterior variances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import CholeskyError, InputError
from .kernels import KernelSpec, kernel_matrix

MAX_N = 5000


@dataclass(frozen=True, eq=False)
class PosteriorResult:
    mean: np.ndarray
    variance: Optional[np.ndarray] = None


def _factor(train, spec, structure, jitter, max_n):
    n = len(train)
    if n < 1:
        raise InputError("training set is empty")
    if n > max_n:
        raise InputError(f"exact GP capped at N <= {max_n}, got N = {n}")
    if jitter is None:
        jitter = 1e-8 * spec.output_scale
    K = kernel_matrix(train.inputs, train.inputs, spec, structure)
    K[np.diag_indices(n)] += train.noise ** 2 + jitter
    try:
        return linalg.cho_factor(K, lower=True, check_finite=False)
    except linalg.LinAlgError:
        min_eig = linalg.eigvalsh(K, subset_by_index=[0, 0])[0]
        raise CholeskyError(
            f"Cholesky of K + D failed (N={n}, minimum eigenvalue {min_eig:.3e}); "
            "check noise and kernel settings") from None


def exact_posterior(train, test, spec: KernelSpec, want_variance: bool = False, *,
                    structure: str = "product", jitter: Optional[float] = None,
                    center: bool = True, max_n: int = MAX_N) -> PosteriorResult:
    """Posterior mean (and optionally marginal variance) at ``test`` points.

    With ``center=True`` the prior mean is the mean of the training outputs
    rather than zero. ``jitter`` defaults to ``1e-8 * output_scale``.
    """
    test = np.asarray(test, dtype=np.float64).reshape(-1, 2)
    cho = _factor(train, spec, structure, jitter, max_n)
    offset = float(np.mean(train.outputs)) if center else 0.0
    alpha = linalg.cho_solve(cho, train.outputs - offset, check_finite=False)
    Ks = kernel_matrix(test, train.inputs, spec, structure)
    mean = Ks @ alpha + offset
    variance = None
    if want_variance:
        L = np.tril(cho[0])
        V = linalg.solve_triangular(L, Ks.T, lower=True, check_finite=False)
        variance = np.clip(spec.output_scale - np.einsum("ij,ij->j", V, V), 0.0, None)
    return PosteriorResult(mean, variance)


def exact_posterior_mean_only(train, test, spec: KernelSpec, **kwargs) -> np.ndarray:
    return exact_posterior(train, test, spec, want_variance=False, **kwargs).mean
