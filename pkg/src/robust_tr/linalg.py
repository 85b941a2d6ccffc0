"""Dense symmetric eigen-computations and subspace geometry.

All routines return eigenvalues in *descending* order and apply a fixed sign
convention to eigenvectors (the entry of largest magnitude in each column is
positive), so that repeated runs produce bit-identical bases.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import NumericalError, SingularMatrixWarning, ValidationError

SYM_TOL = 1e-12
RANK_TOL = 1e-10
SPD_TOL = 1e-12


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray
    metric: np.ndarray | None = None  # M in V^T M V = I; None means identity


@dataclass(frozen=True)
class RangeBasis:
    gamma: np.ndarray
    kept_values: np.ndarray

    @property
    def rank(self) -> int:
        return self.gamma.shape[1]

    def compress(self, a: np.ndarray) -> np.ndarray:
        """Return Gamma^T a Gamma."""
        return self.gamma.T @ a @ self.gamma


def as_symmetric(a, name: str = "matrix") -> np.ndarray:
    """Validate that ``a`` is square and symmetric; return it as float array."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    scale = 1.0 + (np.abs(a).max() if a.size else 0.0)
    if a.size and np.abs(a - a.T).max() > SYM_TOL * scale:
        raise ValidationError(f"{name} is not symmetric")
    return a


def fix_signs(v: np.ndarray) -> np.ndarray:
    """Flip columns so the entry of largest magnitude is positive (first on ties)."""
    v = np.array(v, dtype=float, copy=True)
    if v.size == 0:
        return v
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def sym_eig(a) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, values descending."""
    a = as_symmetric(a)
    a = 0.5 * (a + a.T)
    values, vectors = np.linalg.eigh(a)
    return EigenDecomposition(values[::-1].copy(), fix_signs(vectors[:, ::-1]))


def sym_eigvals(a) -> np.ndarray:
    a = as_symmetric(a)
    return np.linalg.eigvalsh(0.5 * (a + a.T))[::-1]


def _check_spd(w: np.ndarray, name: str) -> None:
    lam = np.linalg.eigvalsh(w)
    if lam[-1] <= 0 or lam[0] <= SPD_TOL * lam[-1]:
        raise NumericalError(
            f"{name} is not positive definite (eigenvalues in [{lam[0]:.3g}, {lam[-1]:.3g}]); "
            "compress the pencil with range_projection first"
        )


def gen_eig_spd(b, w, scaling: str = "w", s_pooled=None) -> EigenDecomposition:
    """Solve ``b v = lambda w v`` for symmetric ``b`` and SPD ``w``.

    Parameters
    ----------
    b, w : array_like
        The pencil. ``w`` must be positive definite.
    scaling : {"w", "s_pooled"}
        Normalisation of the eigenvectors: ``V^T W V = I`` or
        ``V^T S_pooled V = I``. ``s_pooled`` must then be given and be a
        positive multiple of ``w`` (so the vectors stay orthogonal in it).

    Notes
    -----
    Uses the Cholesky reduction ``W = L L^T`` and an ordinary symmetric
    eigenproblem for ``L^{-1} B L^{-T}``.
    """
    b = as_symmetric(b, "B")
    w = as_symmetric(w, "W")
    if b.shape != w.shape:
        raise ValidationError("B and W must have the same shape")
    _check_spd(w, "W")
    chol = np.linalg.cholesky(0.5 * (w + w.T))
    linv_b = np.linalg.solve(chol, b)
    c = np.linalg.solve(chol, linv_b.T).T
    eig = sym_eig(0.5 * (c + c.T))
    vectors = np.linalg.solve(chol.T, eig.vectors)
    metric = w
    if scaling == "s_pooled":
        if s_pooled is None:
            raise ValidationError("scaling='s_pooled' requires the s_pooled matrix")
        metric = as_symmetric(s_pooled, "S_pooled")
        norms = np.sqrt(np.einsum("ij,ik,kj->j", vectors, metric, vectors))
        vectors = vectors / norms
    elif scaling != "w":
        raise ValidationError(f"unknown scaling {scaling!r}")
    return EigenDecomposition(eig.values, fix_signs(vectors), metric)


def orthonormalize(v) -> np.ndarray:
    """Orthonormal basis (QR) of the column span of ``v``, sign-normalised."""
    q, _ = np.linalg.qr(np.asarray(v, dtype=float))
    return fix_signs(q)


def _check_orthonormal(v: np.ndarray, name: str) -> None:
    gram = v.T @ v
    if np.abs(gram - np.eye(v.shape[1])).max() > 1e-8:
        raise ValidationError(f"{name} does not have orthonormal columns")


def subspace_angle(v1, v2) -> float:
    """Largest principal angle: ``arcsin ||V1 V1^T - V2 V2^T||_2``."""
    v1 = np.atleast_2d(np.asarray(v1, dtype=float))
    v2 = np.atleast_2d(np.asarray(v2, dtype=float))
    if v1.shape[0] != v2.shape[0]:
        raise ValidationError("subspaces live in spaces of different dimension")
    _check_orthonormal(v1, "v1")
    _check_orthonormal(v2, "v2")
    diff = v1 @ v1.T - v2 @ v2.T
    return math.asin(min(1.0, float(np.linalg.norm(diff, 2))))


def projector_distance(v1, v2) -> float:
    """``||V1 V1^T - V2 V2^T||_2`` for orthonormal bases (the sine of the angle)."""
    return math.sin(subspace_angle(v1, v2))


def range_projection(w) -> RangeBasis:
    """Basis of the numerical range of a PSD matrix.

    Keeps eigenvectors whose eigenvalue exceeds ``1e-10 * lambda_1``.
    """
    w = as_symmetric(w, "W")
    eig = sym_eig(w)
    top = eig.values[0] if eig.values.size else 0.0
    if top <= 0:
        raise ValidationError("W is zero (or negative semidefinite); it has no range")
    if eig.values[-1] < -RANK_TOL * top:
        raise ValidationError("W is not positive semidefinite")
    keep = eig.values > RANK_TOL * top
    return RangeBasis(eig.vectors[:, keep], eig.values[keep])


def numerical_rank(a, tol: float = RANK_TOL) -> int:
    lam = sym_eigvals(a)
    if lam.size == 0 or lam[0] <= 0:
        return 0
    return int(np.sum(lam > tol * lam[0]))


def condition_number(w) -> float:
    """``lambda_1 / lambda_p`` of an SPD matrix; ``inf`` (with a warning) if singular."""
    lam = sym_eigvals(as_symmetric(w, "W"))
    if lam[-1] <= SPD_TOL * max(lam[0], 0.0) or lam[-1] <= 0:
        warnings.warn("matrix is singular; condition number is infinite", SingularMatrixWarning)
        return math.inf
    return float(lam[0] / lam[-1])
