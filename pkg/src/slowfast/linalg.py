"""Small dense real matrices: eigenvalues, linear solves, determinants, null vectors.

Matrices are plain ``numpy`` arrays; :func:`as_matrix` validates them.  Sizes are
capped at 16 since every system handled here has at most a handful of fast
variables.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg

__all__ = [
    "MAX_DIM",
    "LinAlgError",
    "SingularMatrixError",
    "RankError",
    "as_matrix",
    "eigenvalues",
    "solve",
    "det",
    "rank",
    "null_vectors",
]

MAX_DIM = 16


class LinAlgError(ValueError):
    pass


class SingularMatrixError(LinAlgError):
    pass


class RankError(LinAlgError):
    pass


def as_matrix(a, *, square: bool = False) -> np.ndarray:
    A = np.atleast_2d(np.asarray(a, dtype=float))
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise LinAlgError(f"expected a 2-D matrix, got shape {A.shape}")
    if max(A.shape) > MAX_DIM:
        raise LinAlgError(f"matrix dimension {A.shape} exceeds cap {MAX_DIM}")
    if not np.all(np.isfinite(A)):
        raise LinAlgError("matrix has non-finite entries")
    if square and A.shape[0] != A.shape[1]:
        raise LinAlgError(f"matrix must be square, got {A.shape}")
    return A


def _sort(ev) -> np.ndarray:
    ev = np.asarray(ev, dtype=complex)
    order = np.lexsort((ev.imag, ev.real))
    return ev[order]


def eigenvalues(a) -> np.ndarray:
    """Eigenvalues sorted by real part, then imaginary part.

    Closed form for n <= 2; LAPACK (Hessenberg reduction + shifted QR) otherwise.
    """
    A = as_matrix(a, square=True)
    n = A.shape[0]
    if n == 1:
        return np.array([complex(A[0, 0])])
    if n == 2:
        tr = A[0, 0] + A[1, 1]
        half = 0.5 * tr
        # discriminant written to avoid cancellation in (tr/2)^2 - det
        disc = (0.5 * (A[0, 0] - A[1, 1])) ** 2 + A[0, 1] * A[1, 0]
        if disc >= 0:
            r = math.sqrt(disc)
            big = half + math.copysign(r, half) if half != 0 else r
            d = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
            other = d / big if big != 0 else half - r
            return _sort([big, other])
        r = math.sqrt(-disc)
        return _sort([complex(half, r), complex(half, -r)])
    try:
        return _sort(np.linalg.eigvals(A))
    except np.linalg.LinAlgError as exc:
        raise LinAlgError(f"eigenvalue iteration failed: {exc}") from exc


def _lu(A: np.ndarray):
    with warnings.catch_warnings():
        # exact singularity is reported through SingularMatrixError below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    scale = float(np.max(np.abs(A))) or 1.0
    if np.min(np.abs(np.diag(lu))) < 1e-13 * scale:
        raise SingularMatrixError("matrix is singular to working precision")
    return lu, piv


def solve(a, b) -> np.ndarray:
    A = as_matrix(a, square=True)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise LinAlgError(f"right-hand side has length {b.shape[0]}, expected {A.shape[0]}")
    return scipy.linalg.lu_solve(_lu(A), b, check_finite=False)


def det(a) -> float:
    A = as_matrix(a, square=True)
    if A.shape[0] == 1:
        return float(A[0, 0])
    if A.shape[0] == 2:
        return float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    with np.errstate(divide="ignore", invalid="ignore"):  # exactly singular input gives 0
        return float(np.linalg.det(A))


def rank(a, rtol: float = 1e-10) -> int:
    A = as_matrix(a)
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > rtol * max(1.0, s[0])))


def _unit_signed(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    for c in v:
        if abs(c) > 1e-12:
            return v if c > 0 else -v
    return v


def null_vectors(a, *, small: float = 1e-8, gap: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """Right and left unit null vectors of a matrix of rank ``dim - 1``.

    The rank is decided from eigenvalue magnitudes: the smallest must be below
    ``small * scale`` and the next at least ``gap * scale``, with
    ``scale = max(1, max|a_ij|)``.  Vectors are signed so their first nonzero
    component is positive.
    """
    A = as_matrix(a, square=True)
    n = A.shape[0]
    scale = max(1.0, float(np.max(np.abs(A))))
    mags = np.sort(np.abs(eigenvalues(A)))
    if mags[0] >= small * scale or (n > 1 and mags[1] < gap * scale):
        raise RankError(f"rank deficiency is not one (|eigenvalues| = {mags})")
    if n == 1:
        return np.ones(1), np.ones(1)
    U, _, Vt = np.linalg.svd(A)
    return _unit_signed(Vt[-1]), _unit_signed(U[:, -1])
