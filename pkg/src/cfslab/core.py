"""Causal fermion systems at finite measure support.

An operator point is a finite-rank self-adjoint operator on C^N with at
most ``n`` positive and at most ``n`` negative eigenvalues, stored in
factored form x = V diag(nu) V* with V an isometry.  A discrete measure is
a weighted finite family of such points; together with (N, n) it forms a
causal fermion system.

All pairwise quantities (product spectra, the kernel between spin spaces,
the closed chain, the Lagrangian) reduce to dense algebra on r x r
matrices with r <= 2n, which is what this module computes.  The causal
action and its companion constraint functionals are plain double sums over
the atoms.

The text container written by :func:`save_system` round-trips bit-exactly:
floats are printed with 17 significant digits and the loader rebuilds the
factored representation without renormalizing.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


__all__ = [
    "OperatorPoint",
    "DiscreteMeasure",
    "CausalFermionSystem",
    "PairData",
    "CausalClass",
    "SignatureError",
    "make_operator_point",
    "zero_point",
    "product_spectrum",
    "kernel",
    "closed_chain",
    "pair_data",
    "lagrangian",
    "causal_classify",
    "action",
    "constraints",
    "pair_spectra",
    "save_system",
    "load_system",
    "loads_system",
    "dumps_system",
]

#: entries of nu below this relative size are dropped (rank reduction)
NU_DROP = 1e-14
#: default relative threshold in the spacelike test
TAU_CAUSAL = 1e-8

_FMT = "%.17e"  # exact float64 round trip


class SignatureError(ValueError):
    """More than n positive or n negative eigenvalues requested."""


@dataclass(frozen=True)
class OperatorPoint:
    """Finite-rank self-adjoint operator in factored form V diag(nu) V*."""

    N: int
    n: int
    V: np.ndarray          # N x r, orthonormal columns
    nu: np.ndarray         # r nonzero reals

    @property
    def rank(self) -> int:
        return len(self.nu)

    def matrix(self) -> np.ndarray:
        """Dense N x N representation V diag(nu) V*."""
        if self.rank == 0:
            return np.zeros((self.N, self.N), dtype=complex)
        return (self.V * self.nu) @ self.V.conj().T

    def signature(self) -> tuple[int, int]:
        return (int(np.sum(self.nu > 0)), int(np.sum(self.nu < 0)))

    def trace(self) -> float:
        return float(np.sum(self.nu))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported measure: a list of (point, positive weight)."""

    points: tuple[OperatorPoint, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) != len(w):
            raise ValueError("points and weights length mismatch")
        if np.any(w <= 0):
            raise ValueError("all weights must be positive")
        Ns = {p.N for p in self.points}
        ns = {p.n for p in self.points}
        if len(Ns) > 1 or len(ns) > 1:
            raise ValueError("all points must share N and n")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class CausalFermionSystem:
    """Hilbert dimension, spin dimension and a discrete universal measure."""

    N: int
    n: int
    measure: DiscreteMeasure

    def __post_init__(self):
        if len(self.measure) == 0:
            raise ValueError("measure must contain at least one atom")
        p0 = self.measure.points[0]
        if p0.N != self.N or p0.n != self.n:
            raise ValueError("measure atoms do not match the declared (N, n)")


@dataclass(frozen=True)
class PairData:
    """Spectral data of one pair: eigenvalues (padded to 2n), kernel, L."""

    lam: np.ndarray
    kernel_xy: np.ndarray
    lagrangian: float


class CausalClass(NamedTuple):
    kind: str              # "spacelike" | "non-spacelike"
    degenerate: bool       # all eigenvalues at numerical zero
    lagrangian: float
    scale: float           # (sum |lam|)^2 / 2n, the relative yardstick


def _orthonormalize(V: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt with one re-orthogonalization pass."""
    Q = np.array(V, dtype=complex, copy=True)
    r = Q.shape[1]
    for j in range(r):
        for _ in range(2):
            for i in range(j):
                Q[:, j] -= (Q[:, i].conj() @ Q[:, j]) * Q[:, i]
        nrm = np.linalg.norm(Q[:, j])
        if nrm < 1e-13:
            raise ValueError("columns of V are numerically dependent")
        Q[:, j] /= nrm
    return Q


def make_operator_point(V, nu, n: int) -> OperatorPoint:
    """Validate and normalize a factored operator point.

    Columns of ``V`` are orthonormalized; entries of ``nu`` below
    ``NU_DROP * max|nu|`` are dropped together with their columns, and the
    remaining spectrum must fit the (n, n) signature budget.
    """
    V = np.asarray(V, dtype=complex)
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if V.ndim != 2:
        raise ValueError("V must be a 2-d array")
    N, r = V.shape
    if len(nu) != r:
        raise ValueError("nu must have one entry per column of V")
    if n < 1:
        raise ValueError("spin dimension n must be >= 1")
    if r > 2 * n:
        raise SignatureError(f"rank {r} exceeds 2n = {2 * n}")
    if r == 0:
        return OperatorPoint(N, n, np.zeros((N, 0), dtype=complex), nu)
    amax = float(np.max(np.abs(nu)))
    if amax == 0.0:
        return zero_point(N, n)
    keep = np.abs(nu) >= NU_DROP * amax
    V, nu = V[:, keep], nu[keep]
    n_pos = int(np.sum(nu > 0))
    n_neg = int(np.sum(nu < 0))
    if n_pos > n or n_neg > n:
        raise SignatureError(
            f"signature ({n_pos}, {n_neg}) violates the (<= {n}, <= {n}) budget"
        )
    return OperatorPoint(N, n, _orthonormalize(V), nu)


def zero_point(N: int, n: int) -> OperatorPoint:
    """The zero operator (rank 0)."""
    return OperatorPoint(N, n, np.zeros((N, 0), dtype=complex), np.zeros(0))


def _check_pair(x: OperatorPoint, y: OperatorPoint) -> None:
    if x.N != y.N or x.n != y.n:
        raise ValueError(
            f"dimension mismatch: ({x.N}, n={x.n}) vs ({y.N}, n={y.n})"
        )


def _pad(lam: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(2 * n, dtype=complex)
    out[: len(lam)] = lam
    order = np.lexsort((out.imag, out.real))
    return out[order]


def product_spectrum(x: OperatorPoint, y: OperatorPoint) -> np.ndarray:
    """Eigenvalues of the product xy, zero-padded to 2n values.

    Reduces to the r_x x r_x matrix diag(nu_x) (V_x* V_y) diag(nu_y)
    (V_y* V_x), whose spectrum is the nontrivial spectrum of the full
    N x N product.
    """
    _check_pair(x, y)
    if x.rank == 0 or y.rank == 0:
        return np.zeros(2 * x.n, dtype=complex)
    G = x.V.conj().T @ y.V
    R = (x.nu[:, None] * G * y.nu[None, :]) @ G.conj().T
    return _pad(np.linalg.eigvals(R), x.n)


def kernel(x: OperatorPoint, y: OperatorPoint) -> np.ndarray:
    """Matrix of pi_x y restricted to S_y, in the column bases of V_x, V_y."""
    _check_pair(x, y)
    return (x.V.conj().T @ y.V) * y.nu[None, :]


def closed_chain(x: OperatorPoint, y: OperatorPoint) -> np.ndarray:
    """The chain kernel(x,y) kernel(y,x) acting on S_x."""
    return kernel(x, y) @ kernel(y, x)


def _lagrangian_from_abs(a: np.ndarray, two_n: int) -> float:
    s1 = float(np.sum(a))
    s2 = float(np.sum(a * a))
    val = s2 - s1 * s1 / two_n
    scale = max(s2, s1 * s1 / two_n)
    if val < 0.0:
        # Cauchy-Schwarz guarantees val >= 0 in exact arithmetic
        if val >= -1e-12 * scale:
            return 0.0
        raise FloatingPointError(f"Lagrangian {val} below the noise floor")
    return val


def lagrangian(x: OperatorPoint, y: OperatorPoint) -> float:
    """L(x,y) = sum |lam_i|^2 - (sum |lam_i|)^2 / 2n, never negative."""
    lam = product_spectrum(x, y)
    return _lagrangian_from_abs(np.abs(lam), 2 * x.n)


def pair_data(x: OperatorPoint, y: OperatorPoint) -> PairData:
    lam = product_spectrum(x, y)
    return PairData(lam, kernel(x, y), _lagrangian_from_abs(np.abs(lam), 2 * x.n))


def causal_classify(
    x: OperatorPoint, y: OperatorPoint, tau_causal: float = TAU_CAUSAL
) -> CausalClass:
    """Spacelike iff L(x,y) is negligible next to (sum|lam|)^2 / 2n.

    The all-zero spectrum is classified spacelike but flagged degenerate.
    """
    lam = product_spectrum(x, y)
    a = np.abs(lam)
    two_n = 2 * x.n
    L = _lagrangian_from_abs(a, two_n)
    scale = float(np.sum(a)) ** 2 / two_n
    if scale == 0.0:
        return CausalClass("spacelike", True, 0.0, 0.0)
    kind = "spacelike" if L <= tau_causal * scale else "non-spacelike"
    return CausalClass(kind, False, L, scale)


def pair_spectra(system: CausalFermionSystem) -> np.ndarray:
    """|eigenvalues| of all atom pairs, shape (A, A, 2n), one batched solve.

    Every point factor is zero-padded to rank 2n so the reduced pair
    matrices stack into one array; padding columns only add exact zero
    eigenvalues.
    """
    pts = system.measure.points
    A, n, N = len(pts), system.n, system.N
    r = 2 * n
    Vs = np.zeros((A, N, r), dtype=complex)
    nus = np.zeros((A, r))
    for i, p in enumerate(pts):
        Vs[i, :, : p.rank] = p.V
        nus[i, : p.rank] = p.nu
    G = np.einsum("aki,bkj->abij", Vs.conj(), Vs)
    R = np.einsum(
        "ai,abij,bj,abkj->abik", nus, G, nus, G.conj(), optimize=True
    )
    return np.abs(np.linalg.eigvals(R))


def _pairwise_lagrangians(system: CausalFermionSystem, mu: float) -> np.ndarray:
    """Matrix of |A^2| - mu |A|^2 over all atom pairs (no clamping for mu != 1/2n)."""
    a = pair_spectra(system)
    s1 = a.sum(axis=2)
    s2 = (a * a).sum(axis=2)
    return s2 - mu * s1 * s1


def action(system: CausalFermionSystem) -> float:
    """Causal action: double sum of w_a w_b L(x_a, x_b), diagonal included.

    The reduction uses numpy's pairwise summation over the fixed atom
    order, so results are bit-stable run to run.
    """
    two_n = 2 * system.n
    Lmat = np.maximum(_pairwise_lagrangians(system, 1.0 / two_n), 0.0)
    w = system.measure.weights
    return float(np.sum((w[:, None] * w[None, :]) * Lmat))


def constraints(system: CausalFermionSystem) -> tuple[float, float, float]:
    """(volume, trace, boundedness) of the measure.

    volume = sum w_a, trace = sum w_a tr(x_a), and the boundedness
    functional is the double sum of w_a w_b (sum_i |lam_i|)^2.
    """
    w = system.measure.weights
    volume = float(np.sum(w))
    trace = float(np.sum(w * np.array([p.trace() for p in system.measure.points])))
    a = pair_spectra(system)
    s1sq = a.sum(axis=2) ** 2
    bound = float(np.sum((w[:, None] * w[None, :]) * s1sq))
    return (volume, trace, bound)


# ---------------------------------------------------------------------------
# plain-text container


def dumps_system(system: CausalFermionSystem) -> str:
    buf = io.StringIO()
    buf.write("cfs-container v1\n")
    buf.write(f"N {system.N}\n")
    buf.write(f"n {system.n}\n")
    buf.write(f"atoms {len(system.measure)}\n")
    for i, (p, w) in enumerate(zip(system.measure.points, system.measure.weights)):
        buf.write(f"atom {i}\n")
        buf.write("weight " + _FMT % w + "\n")
        buf.write(f"rank {p.rank}\n")
        buf.write("nu" + "".join(" " + _FMT % v for v in p.nu) + "\n")
        flat = p.V.ravel()  # row-major
        parts = []
        for z in flat:
            parts.append(_FMT % z.real)
            parts.append(_FMT % z.imag)
        buf.write("V" + "".join(" " + s for s in parts) + "\n")
    return buf.getvalue()


def save_system(system: CausalFermionSystem, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps_system(system))


def _expect(line: str, key: str) -> list[str]:
    toks = line.split()
    if not toks or toks[0] != key:
        raise ValueError(f"container format error: expected '{key}', got {line!r}")
    return toks[1:]


def loads_system(text: str) -> CausalFermionSystem:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    it = iter(lines)
    header = next(it)
    if header.strip() != "cfs-container v1":
        raise ValueError(f"unsupported container header {header!r}")
    N = int(_expect(next(it), "N")[0])
    n = int(_expect(next(it), "n")[0])
    count = int(_expect(next(it), "atoms")[0])
    points, weights = [], []
    for i in range(count):
        idx = int(_expect(next(it), "atom")[0])
        if idx != i:
            raise ValueError(f"container format error: atom index {idx} != {i}")
        w = float(_expect(next(it), "weight")[0])
        r = int(_expect(next(it), "rank")[0])
        nu = np.array([float(t) for t in _expect(next(it), "nu")], dtype=float)
        if len(nu) != r:
            raise ValueError("container format error: nu length != rank")
        vals = [float(t) for t in _expect(next(it), "V")]
        if len(vals) != 2 * N * r:
            raise ValueError("container format error: V entry count mismatch")
        re = np.array(vals[0::2]).reshape(N, r)
        im = np.array(vals[1::2]).reshape(N, r)
        V = re + 1j * im
        n_pos = int(np.sum(nu > 0))
        n_neg = int(np.sum(nu < 0))
        if n_pos > n or n_neg > n:
            raise SignatureError("stored point violates the signature budget")
        # bit-exact: do not re-orthonormalize on load
        points.append(OperatorPoint(N, n, V, nu))
        weights.append(w)
    return CausalFermionSystem(N, n, DiscreteMeasure(tuple(points), np.array(weights)))


def load_system(path) -> CausalFermionSystem:
    with open(path, "r", encoding="ascii") as fh:
        return loads_system(fh.read())
