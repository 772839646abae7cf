"""First-order limit problem and the boundary-data propagators.

The vanishing-viscosity limit of the two-point problem is the Cauchy
problem B u' + (A + lam) u = f, u(0) = u0, integrated here with the
exact propagator of the homogeneous part and midpoint quadrature of the
load (second order, exact when f = 0).

build_MN packages the solved boundary system of the elliptic problem
into the two operator kernels M(t), N(t) with u_hom(t) = M(t) f1 +
N(t) f2; their norms as functions of t and eps carry the boundary layer
structure that the measurement code in estimates quantifies.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import exprparse
from .discretize import GridFunction, OperatorPair, SpaceGrid
from .elliptic import ProblemSpec, QSystem, _boundary_blocks, compute_q_system
from .linalg import Overflow, expm, inv, mat_solve, op_norm

__all__ = [
    "CauchySpec", "cauchy_solve", "build_MN", "CAUCHY_STABILITY_CAP",
]

CAUCHY_STABILITY_CAP = 1e6


@dataclass
class CauchySpec:
    """First-order problem B u' + (A + lam) u = f on (0, T), u(0) = u0."""
    pair: OperatorPair
    lam: complex
    T: float
    u0: np.ndarray
    f: Union[None, str, Callable] = None
    n_t: int = 201

    def __post_init__(self):
        self.lam = complex(self.lam)
        self.T = float(self.T)
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.n_t < 3:
            raise ValueError("need at least 3 time nodes")
        self.u0 = np.atleast_1d(np.asarray(self.u0, dtype=np.complex128))
        if self.u0.shape != (self.pair.n,):
            raise ValueError(
                f"u0 has length {len(self.u0)}, operator size is {self.pair.n}")
        # the drift must be invertible for the problem to be well posed
        inv(self.pair.B)
        if isinstance(self.f, str):
            self._f_expr = exprparse.parse(self.f, allowed_vars=("t", "y"))
        else:
            self._f_expr = None

    @property
    def n(self) -> int:
        return self.pair.n

    @property
    def A_lam(self) -> np.ndarray:
        return self.pair.A + self.lam * np.eye(self.n)

    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t)

    def f_samples(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.f is None:
            return np.zeros((len(t), self.n), dtype=np.complex128)
        if self._f_expr is not None:
            if self.pair.grid is not None:
                y = self.pair.grid.nodes
            else:
                y = SpaceGrid.uniform_interior(self.n).nodes
            vals = exprparse.eval_expr(self._f_expr, {"t": t[:, None], "y": y[None, :]})
            return np.broadcast_to(np.asarray(vals, dtype=np.complex128),
                                   (len(t), self.n)).copy()
        rows = [np.asarray(self.f(float(ti)), dtype=np.complex128).reshape(self.n)
                for ti in t]
        return np.stack(rows)


def cauchy_solve(cspec: CauchySpec) -> GridFunction:
    """Integrate the first-order problem with the exact propagator.

    u_{i+1} = E u_i + h E_half B^-1 f(t_i + h/2), E = exp(-h G),
    G = B^-1 (A + lam).  Midpoint quadrature makes the step second
    order; with f = 0 the scheme is exact up to roundoff.  Raises
    Overflow when exp(-T G) exceeds the stability cap.
    """
    G = mat_solve(cspec.pair.B, cspec.A_lam)
    ET = expm(-cspec.T * G)
    if op_norm(ET) > CAUCHY_STABILITY_CAP:
        raise Overflow(
            f"limit propagator norm {op_norm(ET):.3e} exceeds {CAUCHY_STABILITY_CAP:.0e}")
    t = cspec.t_grid()
    h = t[1] - t[0]
    E = expm(-h * G)
    Eh = expm(-h * G / 2.0)
    u = np.empty((cspec.n_t, cspec.n), dtype=np.complex128)
    u[0] = cspec.u0
    if cspec.f is None:
        for i in range(cspec.n_t - 1):
            u[i + 1] = E @ u[i]
    else:
        fmid = cspec.f_samples(t[:-1] + h / 2.0)
        binv_f = mat_solve(cspec.pair.B, fmid.T).T
        for i in range(cspec.n_t - 1):
            u[i + 1] = E @ u[i] + h * (Eh @ binv_f[i])
    return GridFunction(t, u, meta={"path": "cauchy", "lam": cspec.lam})


def build_MN(spec: ProblemSpec, qsys: Optional[QSystem] = None):
    """Boundary-data propagators of the homogeneous two-point problem.

    Returns callables M(t), N(t) mapping to n x n matrices with
    u_hom(t) = M(t) f1 + N(t) f2; pass derivative=1 for d/dt.  They are
    built from the block inverse X of the boundary system:

        M(t) = V1(t) X11 + V2(t) X21,  N(t) = V1(t) X12 + V2(t) X22,

    V1(t) = exp(-t G1), V2(t) = exp(-(T-t) G2).
    """
    if qsys is None:
        qsys = compute_q_system(spec)
    n = spec.n
    A11, A12, A21, A22 = _boundary_blocks(
        qsys.G1, qsys.G2, qsys.E1, qsys.E2, spec.bc, spec.eps)
    S = np.block([[A11, A12], [A21, A22]])
    X = inv(S)
    X11, X12 = X[:n, :n], X[:n, n:]
    X21, X22 = X[n:, :n], X[n:, n:]

    def V(t: float, derivative: int):
        V1 = expm(-t * qsys.G1)
        V2 = expm(-(spec.T - t) * qsys.G2)
        if derivative == 0:
            return V1, V2
        if derivative == 1:
            return -qsys.G1 @ V1, qsys.G2 @ V2
        raise ValueError("derivative must be 0 or 1")

    def M(t: float, derivative: int = 0) -> np.ndarray:
        V1, V2 = V(float(t), derivative)
        return V1 @ X11 + V2 @ X21

    def N(t: float, derivative: int = 0) -> np.ndarray:
        V1, V2 = V(float(t), derivative)
        return V1 @ X12 + V2 @ X22

    return M, N
