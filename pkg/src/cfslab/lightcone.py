"""Light-cone-expansion primitives.

Three ingredients that the expansion machinery is built from:

* ordered exponentials of a matrix family F(alpha), defined by the Dyson
  series with earlier-parameter factors to the LEFT, so that
  ``ordered_exp(F, a, c) = ordered_exp(F, a, b) @ ordered_exp(F, b, c)``;
* weighted line integrals over a straight segment with the weight
  alpha^l (1-alpha)^r (alpha - alpha^2)^n;
* the leading-order gauge phase Pexp(-i int_x^y A^j (y-x)_j) picked up by
  a perturbed Green's function along the segment from x to y.

Two independent evaluators are provided for the ordered exponential: a
truncated Dyson sum (spectral collocation per level, level count capped)
and an adaptive ODE integration of dE/dt = -F(t) E backwards from the
upper endpoint.  They agree to the combined tolerances on smooth input and
cross-certify each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp

__all__ = [
    "MatrixPath",
    "LineIntegralSpec",
    "ordered_exp",
    "line_integral",
    "gauge_phase",
    "DYSON_ORDER_CAP",
]

DYSON_ORDER_CAP = 12
ODE_TOL = 1e-10


@dataclass(frozen=True)
class MatrixPath:
    """A one-parameter matrix family on [a, b]; smoothness is the caller's claim."""

    evaluator: Callable[[float], np.ndarray]
    smoothness: str = "smooth"

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.evaluator(t), dtype=complex)


@dataclass(frozen=True)
class LineIntegralSpec:
    """Weight exponents (l, r, n) and the Gauss-Legendre node count."""

    l: int = 0
    r: int = 0
    n: int = 0
    nodes: int = 32

    def __post_init__(self):
        if min(self.l, self.r, self.n) < 0:
            raise ValueError("weight exponents must be nonnegative")
        if self.nodes < 4:
            raise ValueError("need at least 4 quadrature nodes")


def _as_path(F) -> Callable[[float], np.ndarray]:
    if isinstance(F, MatrixPath):
        return F
    return lambda t: np.asarray(F(t), dtype=complex)


def _dyson(F, a: float, b: float, order: int, nodes: int = 48) -> np.ndarray:
    """Truncated Dyson sum via Chebyshev collocation of the iterated integrals.

    Level k holds I_k(t) = int_t^b F(s) I_{k-1}(s) ds on Chebyshev-Lobatto
    points; the antiderivative is taken exactly in coefficient space, so
    the only error is polynomial approximation of the smooth integrands.
    """
    f = _as_path(F)
    d = np.asarray(f(a)).shape[0]
    if order < 0:
        raise ValueError("order must be >= 0")
    if order > DYSON_ORDER_CAP:
        raise ValueError(f"Dyson order {order} exceeds cap {DYSON_ORDER_CAP}")
    if a == b or order == 0:
        return np.eye(d, dtype=complex)
    # Chebyshev-Lobatto points on [-1, 1]; u[0] = -1 corresponds to t = a
    j = np.arange(nodes)
    u = -np.cos(np.pi * j / (nodes - 1))
    ts = a + (b - a) * (u + 1.0) / 2.0
    Fs = np.array([f(t) for t in ts])            # (p, d, d)
    half = (b - a) / 2.0
    Ik = np.broadcast_to(np.eye(d, dtype=complex), (nodes, d, d)).copy()
    total = np.eye(d, dtype=complex)
    deg = nodes - 1
    for _ in range(order):
        G = np.einsum("pij,pjk->pik", Fs, Ik).reshape(nodes, d * d)
        coef = _cheb.chebfit(u, G, deg)
        anti = _cheb.chebint(coef, m=1, scl=half, axis=0)
        vals = _cheb.chebval(u, anti, tensor=True).T   # (p, d*d)
        at_b = _cheb.chebval(1.0, anti).reshape(1, d * d)
        Ik = (at_b - vals).reshape(nodes, d, d)
        total += Ik[0]
    return total


def _ode(F, a: float, b: float, tol: float = ODE_TOL) -> np.ndarray:
    """Solve E'(t) = -F(t) E(t), E(b) = I, backwards to t = a."""
    f = _as_path(F)
    d = np.asarray(f(a)).shape[0]
    if a == b:
        return np.eye(d, dtype=complex)

    def rhs(t, y):
        E = y.reshape(d, d)
        return (-(f(t) @ E)).ravel()

    sol = solve_ivp(
        rhs,
        (b, a),
        np.eye(d, dtype=complex).ravel(),
        method="DOP853",
        rtol=tol * 1e-2,
        atol=tol * 1e-3,
    )
    if not sol.success:  # pragma: no cover
        raise RuntimeError(f"ordered-exponential ODE failed: {sol.message}")
    return sol.y[:, -1].reshape(d, d)


def ordered_exp(F, a: float, b: float, method: str = "ode-adaptive") -> np.ndarray:
    """Ordered exponential Pexp(int_a^b F), earlier factors to the left.

    ``method`` is "ode-adaptive" or "dyson-order-K" with K <= 12
    (e.g. "dyson-order-8").
    """
    if a > b:
        raise ValueError("ordered_exp requires a <= b")
    if method == "ode-adaptive":
        return _ode(F, a, b)
    if method.startswith("dyson-order-"):
        order = int(method.rsplit("-", 1)[1])
        return _dyson(F, a, b, order)
    raise ValueError(f"unknown method {method!r}")


def line_integral(f, spec: LineIntegralSpec, x=None, y=None):
    """Gauss-Legendre quadrature of int_0^1 a^l (1-a)^r (a-a^2)^n f da.

    If ``x`` and ``y`` are given, ``f`` is evaluated on the straight
    segment, f(alpha*y + (1-alpha)*x); otherwise ``f`` is a function of
    alpha directly.  Exact whenever the weighted integrand is a polynomial
    of degree <= 2*nodes - 1.
    """
    u, w = leggauss(spec.nodes)
    alpha = (u + 1.0) / 2.0
    w = w / 2.0
    weight = alpha**spec.l * (1.0 - alpha) ** spec.r * (alpha - alpha**2) ** spec.n
    if x is not None or y is not None:
        if x is None or y is None:
            raise ValueError("give both segment endpoints or neither")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        samples = [f(a * y + (1.0 - a) * x) for a in alpha]
    else:
        samples = [f(a) for a in alpha]
    out = None
    for wi, gi, si in zip(w, weight, samples):
        term = (wi * gi) * np.asarray(si, dtype=complex)
        out = term if out is None else out + term
    if np.ndim(out) == 0:
        return complex(out)
    return out


def _minkowski_lower(xi: np.ndarray) -> np.ndarray:
    """Lower the index of a vector with eta = diag(1, -1, ..., -1)."""
    lo = np.array(xi, dtype=float, copy=True)
    lo[1:] *= -1.0
    return lo


def gauge_phase(A_field, chirality: str, x, y, method: str = "ode-adaptive"):
    """Pexp(-i int_0^1 A^j_c(alpha y + (1-alpha) x) (y-x)_j d alpha).

    ``A_field(z, chirality)`` must return the components A^j of the
    potential for the requested handedness at the spacetime point z, as a
    sequence of scalars (abelian) or of k x k matrices.  The contraction
    uses eta = diag(1, -1, ..., -1).  Scalars are promoted to 1x1 matrices;
    the result is the ordered exponential along the segment.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("endpoints must have the same dimension")
    xi_lo = _minkowski_lower(y - x)

    def F(alpha: float) -> np.ndarray:
        comps = A_field(alpha * y + (1.0 - alpha) * x, chirality)
        comps = [np.atleast_2d(np.asarray(c, dtype=complex)) for c in comps]
        if len(comps) != len(xi_lo):
            raise ValueError("potential component count != spacetime dimension")
        acc = sum(lo * c for lo, c in zip(xi_lo, comps))
        return -1j * acc

    return ordered_exp(F, 0.0, 1.0, method=method)
