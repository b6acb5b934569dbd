"""Eigendecomposition of graph Laplacians with sign-canonical eigenvectors.

Dense LAPACK decomposition is used up to ``DENSE_LIMIT`` vertices (the
common case for segmented-person frames, and it returns the full spectrum);
larger graphs fall back to an ARPACK Lanczos solve of the smallest
eigenpairs in shift-invert mode. Eigenvectors are orthonormal up to solver
precision; eigenvalue negativity within roundoff of zero is clamped.

Sign canonicalization: each eigenvector is flipped, if needed, so that its
entry of largest absolute value (lowest index on ties) is non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import EigensolverError
from .graph import LaplacianMatrix

DEFAULT_K_VALUES = 60
DEFAULT_K_VECTORS = 40

# Largest dimension solved densely. Segmented frames are typically a few
# hundred points, so the iterative branch is an escape hatch, not the norm.
DENSE_LIMIT = 2048

# Shift for ARPACK shift-invert: L - sigma*I is positive definite for any
# sigma < 0, so the factorization cannot hit the singular eigenvalue 0.
_ARPACK_SIGMA = -1e-3
_ARPACK_SEED = 0x5C7A


@dataclass
class Spectrum:
    """Ascending Laplacian eigenvalues with sign-canonical eigenvectors.

    ``eigenvalues`` holds all N values on the dense path, or the smallest
    computed subset on the iterative path. ``eigenvectors`` holds unit-norm
    columns aligned with the leading eigenvalues; it may have fewer columns
    than there are eigenvalues.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_vertices: int

    @property
    def n_values(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_vectors(self) -> int:
        return self.eigenvectors.shape[1]


def canonical_sign(vector: np.ndarray) -> np.ndarray:
    """Return +/- vector so the largest-|entry| component (first on ties) is >= 0."""
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1 or v.size == 0 or not np.any(v != 0.0):
        raise ValueError("canonical_sign requires a non-zero 1-D vector")
    pivot = int(np.argmax(np.abs(v)))
    return -v if v[pivot] < 0 else v.copy()


def _canonicalize_columns(vectors: np.ndarray) -> np.ndarray:
    if vectors.size == 0:
        return vectors
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.where(vectors[pivots, np.arange(vectors.shape[1])] < 0, -1.0, 1.0)
    return vectors * signs


def decompose(
    L: LaplacianMatrix,
    k_values: int = DEFAULT_K_VALUES,
    k_vectors: int = DEFAULT_K_VECTORS,
) -> Spectrum:
    """Smallest eigenpairs of L, ascending, covering at least
    min(N, max(k_values, k_vectors) + 1) pairs.

    Eigenvalues in [-tol, 0) with tol = 1e-8 * max(1, lambda_max) are clamped
    to 0; anything more negative raises EigensolverError.
    """
    if k_values < 0 or k_vectors < 0:
        raise ValueError("k_values and k_vectors must be >= 0")
    n = L.dimension
    need = min(n, max(k_values, k_vectors) + 1)
    if n <= DENSE_LIMIT:
        try:
            w, v = np.linalg.eigh(L.toarray())
        except np.linalg.LinAlgError as exc:
            raise EigensolverError(f"dense eigensolver failed on n={n}: {exc}") from exc
    else:
        k = min(need, n - 1)
        rng = np.random.default_rng(_ARPACK_SEED)
        v0 = rng.standard_normal(n)
        try:
            w, v = spla.eigsh(L.csr, k=k, sigma=_ARPACK_SIGMA, which="LM", v0=v0)
        except (spla.ArpackNoConvergence, spla.ArpackError, RuntimeError) as exc:
            raise EigensolverError(
                f"iterative eigensolver failed on n={n}: {exc}"
            ) from exc
        order = np.argsort(w, kind="stable")
        w = w[order]
        v = v[:, order]

    lam_max = float(w[-1]) if w.size else 0.0
    tol = 1e-8 * max(1.0, lam_max)
    if w.size and float(w[0]) < -tol:
        raise EigensolverError(
            f"eigenvalue {w[0]:.3e} below -{tol:.1e}; decomposition untrustworthy"
        )
    w = np.where(w < 0.0, 0.0, w)
    vectors = _canonicalize_columns(v[:, :need])
    return Spectrum(eigenvalues=w, eigenvectors=vectors, n_vertices=n)
