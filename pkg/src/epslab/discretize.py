"""Spatial grids, operator pairs, boundary data and weighted norms.

The operator coefficients live on the unit interval in the variable y.
A SpaceGrid carries the interior collocation nodes plus quadrature
weights that integrate to one; matrices built on it (second order
differential operators with dynamic boundary conditions, integral
operators by Nystrom quadrature) act on vectors of nodal values.

Norms come in three layers: the weighted-ell2 norm standing in for the
ground space E, the time-integrated mixed norm standing in for
L_p(0,T;E), and a K-functional quadrature realizing the real
interpolation norm between D(A) and E.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import exprparse
from .linalg import (SectorialityReport, as_complex_matrix, check_positivity,
                     mat_solve, op_norm)

__all__ = [
    "NonPositiveCoefficient", "ConditionReport",
    "SpaceGrid", "GridFunction", "OperatorPair", "BoundaryData",
    "build_wentzell_operator", "build_integral_operator",
    "check_condition_1", "check_condition_2_1", "check_condition_4_1",
    "e_norm", "mixed_norm", "kfunctional_norm",
]


class NonPositiveCoefficient(ValueError):
    """Diffusion coefficient fails strict positivity on the closed interval."""


def _as_coefficient(fn, variables: tuple) -> Callable:
    """Accept an expression string, a callable, or a constant."""
    if isinstance(fn, str):
        node = exprparse.parse(fn, allowed_vars=variables)
        return lambda **kw: exprparse.eval_expr(node, kw)
    if callable(fn):
        return lambda **kw: fn(*(kw[v] for v in variables))
    value = float(fn)
    return lambda **kw: np.full_like(np.asarray(kw[variables[0]], dtype=float), value)


@dataclass(frozen=True)
class SpaceGrid:
    """Interior nodes of [0, 1] with quadrature weights summing to one."""
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def h(self) -> float:
        return 1.0 / (len(self.nodes) + 1)

    @classmethod
    def uniform_interior(cls, n_y: int) -> "SpaceGrid":
        """n_y equispaced interior nodes j*h, h = 1/(n_y+1).

        Weights are the trapezoid rule with the endpoint half-cells lumped
        onto the first and last interior nodes, so they sum to one exactly
        and integrate smooth functions to O(h^2).
        """
        if n_y < 1:
            raise ValueError(f"need at least one interior node, got {n_y}")
        if n_y == 1:
            return cls(nodes=np.array([0.5]), weights=np.array([1.0]))
        h = 1.0 / (n_y + 1)
        nodes = h * np.arange(1, n_y + 1)
        weights = np.full(n_y, h)
        weights[0] = weights[-1] = 1.5 * h
        return cls(nodes=nodes, weights=weights)


@dataclass
class GridFunction:
    """Vector-valued function sampled on a uniform time grid."""
    t: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.t.ndim != 1 or len(self.t) < 3:
            raise ValueError("time grid must be 1-d with at least 3 nodes")
        steps = np.diff(self.t)
        h = steps.mean()
        if h <= 0 or np.max(np.abs(steps - h)) > 1e-9 * abs(h):
            raise ValueError("time grid must be uniform and increasing")
        if self.values.ndim != 2 or self.values.shape[0] != len(self.t):
            raise ValueError(
                f"values shape {self.values.shape} does not match {len(self.t)} time nodes")

    @property
    def n_t(self) -> int:
        return len(self.t)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def T(self) -> float:
        return float(self.t[-1] - self.t[0])

    def e_norms(self, weights=None) -> np.ndarray:
        """E-norm of each time slice."""
        w = _e_weights(self.n, weights)
        return np.sqrt(np.sum(w * np.abs(self.values) ** 2, axis=1).real)


class OperatorPair:
    """Matrix pair (A, B); A is certified positive at construction.

    Pass check_positive=False to skip the resolvent scan (needed when A
    has a nontrivial kernel, as dynamic-boundary operators do).
    """

    def __init__(self, A, B, grid: Optional[SpaceGrid] = None,
                 check_positive: bool = True,
                 lam_samples: Sequence = (0.0, 1.0, 10.0, 100.0, 1000.0),
                 cap: float = 1e3):
        self.A = as_complex_matrix(A)
        self.B = as_complex_matrix(B)
        if self.A.shape != self.B.shape:
            raise ValueError(f"A and B shapes differ: {self.A.shape} vs {self.B.shape}")
        if grid is not None and grid.n != self.A.shape[0]:
            raise ValueError(f"grid has {grid.n} nodes but A is {self.A.shape[0]}x{self.A.shape[0]}")
        self.grid = grid
        self.positivity: Optional[SectorialityReport] = None
        if check_positive:
            rep = check_positivity(self.A, lam_samples=lam_samples, cap=cap)
            if not rep.passed:
                raise ValueError(
                    f"A fails the positivity scan: bound {rep.bound:.3e} at "
                    f"lam={rep.worst_lam} exceeds cap {rep.cap:.1e}")
            self.positivity = rep

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def weights(self) -> np.ndarray:
        if self.grid is not None:
            return np.asarray(self.grid.weights, dtype=float)
        return np.full(self.n, 1.0 / self.n)

    def commutator_norm(self) -> float:
        return op_norm(self.A @ self.B - self.B @ self.A)

    def commutes(self, rtol: float = 1e-10) -> bool:
        scale = op_norm(self.A) * op_norm(self.B)
        if scale == 0.0:
            return True
        return self.commutator_norm() <= rtol * scale


@dataclass(frozen=True)
class BoundaryData:
    """Two boundary functionals on (0, T), one per endpoint.

    L1 u = alpha0 u(0) + sqrt(eps) alpha1 u'(0) = f1   (order m1)
    L2 u = beta0  u(T) + sqrt(eps) beta1  u'(T) = f2   (order m2)

    m_k is 0 (value condition, first-derivative coefficient must vanish)
    or 1 (derivative/Robin condition, alpha1 resp. beta1 nonzero).  The
    determinant d = alpha0*beta1 - beta0*alpha1 must be nonzero: two pure
    value conditions or two pure derivative conditions are rejected.
    """
    m1: int
    m2: int
    alpha: tuple
    beta: tuple
    f1: np.ndarray
    f2: np.ndarray

    def __post_init__(self):
        if self.m1 not in (0, 1) or self.m2 not in (0, 1):
            raise ValueError("boundary orders m1, m2 must be 0 or 1")
        alpha = tuple(complex(c) for c in self.alpha)
        beta = tuple(complex(c) for c in self.beta)
        if len(alpha) != 2 or len(beta) != 2:
            raise ValueError("alpha and beta must each have two coefficients")
        for name, coefs, m in (("alpha", alpha, self.m1), ("beta", beta, self.m2)):
            if any(coefs[i] != 0 for i in range(m + 1, 2)):
                raise ValueError(f"{name}[{m + 1}] must vanish for order {m}")
            if coefs[m] == 0:
                raise ValueError(f"leading coefficient {name}[{m}] must be nonzero")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "f1", np.atleast_1d(np.asarray(self.f1, dtype=np.complex128)))
        object.__setattr__(self, "f2", np.atleast_1d(np.asarray(self.f2, dtype=np.complex128)))
        if self.f1.ndim != 1 or self.f2.ndim != 1:
            raise ValueError("boundary data f1, f2 must be scalars or vectors")
        if self.d == 0:
            raise ValueError(
                "degenerate boundary pair: alpha0*beta1 - beta0*alpha1 must be nonzero")

    @property
    def d(self) -> complex:
        return self.alpha[0] * self.beta[1] - self.beta[0] * self.alpha[1]

    def theta(self, p: float) -> tuple:
        """Interpolation exponents theta_k = m_k/2 + 1/(2p)."""
        return (self.m1 / 2 + 1 / (2 * p), self.m2 / 2 + 1 / (2 * p))

    def data_for(self, n: int) -> tuple:
        """Boundary vectors broadcast to dimension n."""
        out = []
        for f in (self.f1, self.f2):
            if len(f) == n:
                out.append(f.copy())
            elif len(f) == 1:
                out.append(np.full(n, f[0], dtype=np.complex128))
            else:
                raise ValueError(f"boundary vector of length {len(f)} does not fit dimension {n}")
        return tuple(out)


def _one_sided_rows(a0: float, b0: float, h: float):
    """Coefficients of a0*u'' + b0*u' at an endpoint, O(h^2) one-sided.

    Returns coefficients on (u_bnd, u_in1, u_in2, u_in3) walking inward.
    """
    # u'(0)  ~ (-3 u0 + 4 u1 - u2) / (2h)
    # u''(0) ~ (2 u0 - 5 u1 + 4 u2 - u3) / h^2
    c_dd = np.array([2.0, -5.0, 4.0, -1.0]) / h**2
    c_d = np.array([-3.0, 4.0, -1.0, 0.0]) / (2 * h)
    return a0 * c_dd + b0 * c_d


def build_wentzell_operator(grid: SpaceGrid, a, b) -> np.ndarray:
    """Matrix of A u = -(a u'' + b u') with a u'' + b u' = 0 at both ends.

    Central differences on the interior; the boundary values are
    eliminated through one-sided O(h^2) realizations of the boundary
    condition, which couples the two endpoint unknowns through a 2x2
    solve.  Constants are reproduced exactly in the kernel.
    """
    n = grid.n
    if n < 2:
        raise ValueError("dynamic boundary elimination needs at least 2 interior nodes")
    h = grid.h
    a_fn = _as_coefficient(a, ("y",))
    b_fn = _as_coefficient(b, ("y",))
    full = np.linspace(0.0, 1.0, n + 2)
    a_all = np.asarray(a_fn(y=full), dtype=float)
    b_all = np.asarray(b_fn(y=full), dtype=float)
    if np.any(a_all <= 0):
        raise NonPositiveCoefficient(
            f"diffusion coefficient must be positive; min over grid is {a_all.min():.3e}")

    # boundary rows in unknowns (u_0, u_{n+1}; u_1..u_n)
    left = _one_sided_rows(a_all[0], b_all[0], h)
    right = _one_sided_rows(a_all[-1], -b_all[-1], h)  # mirrored derivative sign
    C = np.zeros((2, 2))
    R = np.zeros((2, n))
    for k in range(4):
        idx = k            # global index of stencil point, from the left end
        coef = left[k]
        if idx == 0:
            C[0, 0] += coef
        elif idx == n + 1:
            C[0, 1] += coef
        else:
            R[0, idx - 1] += coef
        jdx = n + 1 - k    # from the right end
        coef = right[k]
        if jdx == n + 1:
            C[1, 1] += coef
        elif jdx == 0:
            C[1, 0] += coef
        else:
            R[1, jdx - 1] += coef
    if abs(np.linalg.det(C)) < 1e-12 * (np.abs(C).max() ** 2 + 1e-300):
        raise ValueError("degenerate boundary elimination (singular 2x2 system)")
    S = -np.linalg.solve(C, R)  # (u_0, u_{n+1}) = S @ u_interior

    A = np.zeros((n, n))
    for j in range(1, n + 1):
        aj, bj = a_all[j], b_all[j]
        cm = -(aj / h**2 - bj / (2 * h))   # coefficient on u_{j-1}
        cc = -(-2 * aj / h**2)             # on u_j
        cp = -(aj / h**2 + bj / (2 * h))   # on u_{j+1}
        row = np.zeros(n)
        row[j - 1] += cc
        if j - 1 >= 1:
            row[j - 2] += cm
        else:
            row += cm * S[0]
        if j + 1 <= n:
            row[j] += cp
        else:
            row += cp * S[1]
        A[j - 1] = row
    return A


def build_integral_operator(grid: SpaceGrid, kernel) -> np.ndarray:
    """Nystrom matrix B[i, j] = K(y_i, y_j) * w_j of (Bu)(y) = int K(y,s)u(s)ds."""
    k_fn = _as_coefficient(kernel, ("y", "tau"))
    Y = grid.nodes[:, None]
    Tau = grid.nodes[None, :]
    K = np.asarray(k_fn(y=Y + 0 * Tau, tau=Tau + 0 * Y), dtype=complex)
    if K.shape != (grid.n, grid.n):
        raise ValueError(f"kernel evaluation returned shape {K.shape}")
    return K * grid.weights[None, :]


@dataclass(frozen=True)
class ConditionReport:
    name: str
    passed: bool
    details: dict


def check_condition_1(bc: BoundaryData) -> ConditionReport:
    """Nondegeneracy of the boundary functionals (two-point specialization).

    Each functional here touches a single endpoint, so the cross terms in
    the general smallness inequality vanish identically and the check
    reduces to nonvanishing leading coefficients.
    """
    lead1 = bc.alpha[bc.m1]
    lead2 = bc.beta[bc.m2]
    d_lead = (-1) ** bc.m1 * lead1 * lead2
    passed = lead1 != 0 and lead2 != 0
    return ConditionReport(
        name="condition_1", passed=bool(passed),
        details={
            "alpha_leading": lead1, "beta_leading": lead2,
            "leading_determinant": d_lead,
            "smallness_lhs": 0.0, "smallness_rhs": abs(d_lead),
        })


def check_condition_2_1(pair: OperatorPair,
                        t_samples: Sequence = (0.0, 0.01, 0.1, 1.0, 10.0, 100.0),
                        bc: Optional[BoundaryData] = None) -> ConditionReport:
    """Smallness of B against A: ||B|| < sup_t ||A (A+t)^-1||.

    The supremum is sampled on t_samples; samples where A+t is singular
    are skipped (relevant when A has a kernel and 0 is a sample).  When a
    BoundaryData is supplied its determinant d != 0 is recorded too.
    """
    from .linalg import SingularMatrix
    norm_b = op_norm(pair.B)
    eye = np.eye(pair.n)
    sup = 0.0
    sup_at = None
    skipped = []
    for t in t_samples:
        try:
            value = op_norm(pair.A @ mat_solve(pair.A + float(t) * eye, eye))
        except SingularMatrix:
            skipped.append(float(t))
            continue
        if value > sup:
            sup, sup_at = value, float(t)
    passed = norm_b < sup
    details = {"norm_B": norm_b, "sup_resolvent_ratio": sup,
               "sup_at_t": sup_at, "skipped_t": skipped}
    if bc is not None:
        details["d"] = bc.d
        passed = passed and bc.d != 0
    return ConditionReport(name="condition_2_1", passed=bool(passed), details=details)


def check_condition_4_1(grid: SpaceGrid, a, b, kernel) -> ConditionReport:
    """Coefficient sanity for the concrete boundary value problem.

    Checks: kernel finite on the grid square, a positive on nodes and
    endpoints, b real, and the weight exp(-int_{1/2}^x b/a) integrable
    (finite trapezoid quadrature on a fine grid).
    """
    a_fn = _as_coefficient(a, ("y",))
    b_fn = _as_coefficient(b, ("y",))
    k_fn = _as_coefficient(kernel, ("y", "tau"))
    full = np.linspace(0.0, 1.0, grid.n + 2)
    a_all = np.asarray(a_fn(y=full), dtype=complex)
    b_all = np.asarray(b_fn(y=full), dtype=complex)
    Y = grid.nodes[:, None]
    Tau = grid.nodes[None, :]
    K = np.asarray(k_fn(y=Y + 0 * Tau, tau=Tau + 0 * Y), dtype=complex)

    a_positive = bool(np.all(a_all.real > 0) and np.all(a_all.imag == 0))
    b_real = bool(np.all(b_all.imag == 0))
    k_finite = bool(np.all(np.isfinite(K)))

    # integrability of the density exp(-int_{1/2}^x b/a dt)
    fine = np.linspace(0.0, 1.0, 2001)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.asarray(b_fn(y=fine), dtype=float) / np.asarray(a_fn(y=fine), dtype=float)
        prim = np.concatenate(([0.0], np.cumsum((ratio[1:] + ratio[:-1]) / 2) * (fine[1] - fine[0])))
        half = prim[len(fine) // 2]
        density = np.exp(-(prim - half))
        weight_mass = float(np.trapezoid(density, fine))
    weight_finite = bool(np.isfinite(weight_mass))

    passed = a_positive and b_real and k_finite and weight_finite
    return ConditionReport(
        name="condition_4_1", passed=bool(passed),
        details={"a_min": float(a_all.real.min()), "a_positive": a_positive,
                 "b_real": b_real, "kernel_finite": k_finite,
                 "kernel_max_abs": float(np.abs(K).max()),
                 "weight_mass": weight_mass, "weight_finite": weight_finite})


def _e_weights(n: int, weights=None) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights shape {w.shape} does not match dimension {n}")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return w


def e_norm(v, weights=None) -> float:
    """Weighted-ell2 norm standing in for the ground space E."""
    x = np.atleast_1d(np.asarray(v, dtype=np.complex128))
    w = _e_weights(len(x), weights)
    return float(np.sqrt(np.sum(w * np.abs(x) ** 2)))


def mixed_norm(u: GridFunction, p: float = 2.0, weights=None) -> float:
    """Discrete L_p(0,T;E) norm: trapezoid in t over per-slice E-norms."""
    slices = u.e_norms(weights)
    if p == np.inf:
        return float(slices.max())
    if p < 1:
        raise ValueError("p must be >= 1")
    wt = np.full(u.n_t, u.dt)
    wt[0] = wt[-1] = u.dt / 2
    return float(np.sum(wt * slices**p) ** (1.0 / p))


def kfunctional_norm(f, A, theta: float, p: float = 2.0,
                     t_grid=None, weights=None, mu_grid=None) -> float:
    """Real-interpolation norm of f between E and D(A) of exponent theta.

    K(t, f) = inf_g ||f - g||_E + t ||A g||_E is evaluated on a lower
    envelope: candidate splittings g solve the regularized problems
    (W + mu A^H W A) g = W f along a log grid of mu, augmented by the
    exact endpoints g = f and g = 0.  The returned value is the quadrature

        ( sum_j (t_j^-theta K(t_j))^p  dlog t )^(1/p)

    over a log-spaced t grid (default 1e-4..1e4), a truncation of the
    integral form of the (E(A), E)_{theta,p} norm.  Exact for 1x1 A.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    if p < 1:
        raise ValueError("p must be >= 1")
    M = as_complex_matrix(A)
    n = M.shape[0]
    x = np.atleast_1d(np.asarray(f, dtype=np.complex128))
    if x.shape != (n,):
        raise ValueError(f"vector of length {len(x)} does not match operator size {n}")
    w = _e_weights(n, weights)
    if t_grid is None:
        t_grid = np.logspace(-4, 4, 200)
    else:
        t_grid = np.asarray(t_grid, dtype=float)
    if mu_grid is None:
        mu_grid = np.logspace(-10, 10, 81)

    W = np.diag(w)
    AWA = M.conj().T @ W @ M
    Ax = M @ x
    # endpoint splittings: g = f (r=0) and g = 0 (s=0)
    rs = [(0.0, e_norm(Ax, w)), (e_norm(x, w), 0.0)]
    from .linalg import SingularMatrix
    for mu in mu_grid:
        try:
            g = mat_solve(W + mu * AWA, W @ x)
        except SingularMatrix:
            continue
        rs.append((e_norm(x - g, w), e_norm(M @ g, w)))
    r = np.array([q[0] for q in rs])
    s = np.array([q[1] for q in rs])
    K = np.min(r[None, :] + t_grid[:, None] * s[None, :], axis=1)

    logt = np.log(t_grid)
    integrand = (t_grid ** (-theta) * K) ** p
    return float(np.trapezoid(integrand, logt) ** (1.0 / p))
