"""Dense complex matrix kernels shared by every solver in the package.

All operator calculus here runs on explicit complex matrices: LU solves
with a pivot guard, the principal matrix square root via a scaled
Denman-Beavers iteration, a capped matrix exponential, the spectral
operator norm by power iteration on M^H M, and the resolvent-bound
scan used to certify that an operator behaves like a positive one.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "SingularMatrix", "SqrtNotConverged", "Overflow",
    "SectorialityReport",
    "as_complex_matrix", "mat_solve", "inv", "sqrtm", "expm", "op_norm",
    "check_positivity",
    "DEFAULT_PIVOT_RTOL", "SQRT_TOL", "SQRT_MAXITER",
    "EXPM_NORM_CAP", "OPNORM_RTOL",
]

DEFAULT_PIVOT_RTOL = 1e-13
SQRT_TOL = 1e-11
SQRT_MAXITER = 100
EXPM_NORM_CAP = 1e8
OPNORM_RTOL = 1e-8
_OPNORM_MAXITER = 20000


class SingularMatrix(np.linalg.LinAlgError):
    """LU factorization met a pivot below the relative threshold."""


class SqrtNotConverged(ArithmeticError):
    """The square root iteration stalled; spectrum likely meets (-inf, 0]."""


class Overflow(OverflowError):
    """A matrix exponential exceeded the representable working range."""


def as_complex_matrix(M) -> np.ndarray:
    """Coerce to a square complex128 2-d array; reject anything else."""
    A = np.asarray(M, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not (np.all(np.isfinite(A.real)) and np.all(np.isfinite(A.imag))):
        raise ValueError("matrix entries must be finite")
    return A


def mat_solve(M, rhs) -> np.ndarray:
    """Solve M x = rhs by partial-pivot LU; rhs may be a vector or matrix."""
    A = as_complex_matrix(M)
    b = np.asarray(rhs, dtype=np.complex128)
    norm = np.linalg.norm(A, np.inf)
    if norm == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A)
    pivots = np.abs(np.diagonal(lu))
    if pivots.min() < DEFAULT_PIVOT_RTOL * norm:
        raise SingularMatrix(
            f"pivot ratio {pivots.min() / norm:.3e} below {DEFAULT_PIVOT_RTOL:.0e}")
    return scipy.linalg.lu_solve((lu, piv), b)


def inv(M) -> np.ndarray:
    A = as_complex_matrix(M)
    return mat_solve(A, np.eye(A.shape[0], dtype=np.complex128))


def sqrtm(M) -> np.ndarray:
    """Principal square root by Denman-Beavers iteration with det scaling.

    Converges quadratically when the spectrum avoids (-inf, 0]; otherwise
    raises SqrtNotConverged (directly if an iterate degenerates, or after
    SQRT_MAXITER sweeps).
    """
    A = as_complex_matrix(M)
    n = A.shape[0]
    norm = np.linalg.norm(A, "fro")
    if norm == 0.0:
        return np.zeros_like(A)
    Y = A.copy()
    Z = np.eye(n, dtype=np.complex128)
    for _ in range(SQRT_MAXITER):
        if np.linalg.norm(Y @ Y - A, "fro") <= SQRT_TOL * norm:
            return Y
        sy, ldy = np.linalg.slogdet(Y)
        sz, ldz = np.linalg.slogdet(Z)
        if sy == 0 or sz == 0:
            raise SqrtNotConverged("iterate became singular")
        mu = np.exp(-(ldy + ldz) / (2 * n))
        try:
            Yinv = mat_solve(Y, np.eye(n, dtype=np.complex128))
            Zinv = mat_solve(Z, np.eye(n, dtype=np.complex128))
        except SingularMatrix:
            raise SqrtNotConverged("iterate became singular") from None
        Y, Z = (mu * Y + Zinv / mu) / 2, (mu * Z + Yinv / mu) / 2
        if not np.all(np.isfinite(Y)) or not np.all(np.isfinite(Z)):
            raise SqrtNotConverged("iterate diverged")
    raise SqrtNotConverged(f"no convergence in {SQRT_MAXITER} iterations")


def expm(M) -> np.ndarray:
    """Matrix exponential; raises Overflow past EXPM_NORM_CAP or non-finite."""
    A = as_complex_matrix(M)
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(A)
    if not np.all(np.isfinite(E)):
        raise Overflow("matrix exponential overflowed to non-finite entries")
    norm = np.linalg.norm(E, np.inf)
    if norm > EXPM_NORM_CAP:
        raise Overflow(f"matrix exponential norm {norm:.3e} exceeds cap {EXPM_NORM_CAP:.0e}")
    return E


def op_norm(M) -> float:
    """Spectral norm (largest singular value) by power iteration on M^H M."""
    A = as_complex_matrix(M)
    n = A.shape[0]
    if n == 1:
        return float(abs(A[0, 0]))
    col_norms = np.linalg.norm(A, axis=0)
    top = col_norms.max()
    if top == 0.0:
        return 0.0
    # unit start along the heaviest column: never annihilated by M
    v = np.zeros(n, dtype=np.complex128)
    v[int(col_norms.argmax())] = 1.0
    value = 0.0
    for _ in range(_OPNORM_MAXITER):
        w = A @ v
        value_new = float(np.linalg.norm(w))
        if value_new == 0.0:
            return 0.0
        u = A.conj().T @ w
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return value_new
        v = u / nu
        if abs(value_new - value) <= OPNORM_RTOL * value_new:
            return value_new
        value = value_new
    return value


@dataclass(frozen=True)
class SectorialityReport:
    """Resolvent-bound scan of A along a ray of spectral shifts."""
    lam_samples: tuple
    values: tuple
    bound: float
    cap: float
    passed: bool
    worst_lam: complex


def check_positivity(A, lam_samples: Sequence = (0.0, 1.0, 10.0, 100.0, 1000.0),
                     cap: float = 1e3) -> SectorialityReport:
    """Measure sup over samples of (1+|lam|)*||(A+lam)^-1||.

    A uniform bound of this quantity is the operational stand-in for A
    being a positive operator.  Raises SingularMatrix when A+lam is not
    invertible at some sample.
    """
    M = as_complex_matrix(A)
    n = M.shape[0]
    eye = np.eye(n, dtype=np.complex128)
    values = []
    for lam in lam_samples:
        res = mat_solve(M + complex(lam) * eye, eye)
        values.append((1.0 + abs(complex(lam))) * op_norm(res))
    bound = max(values)
    worst = complex(lam_samples[int(np.argmax(values))])
    return SectorialityReport(
        lam_samples=tuple(complex(x) for x in lam_samples),
        values=tuple(values), bound=float(bound), cap=float(cap),
        passed=bool(bound <= cap), worst_lam=worst)
