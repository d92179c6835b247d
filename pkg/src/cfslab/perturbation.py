"""Causal perturbation theory at finite matrix scale.

The idealized mass-shell algebra is carried by a Hermitian matrix ``k``
with spectrum inside {-1, 0, +1} and its square ``p = k^2`` (the shell
projector).  The resolvent of ``k`` then has the closed form

    R_lam = (p + k)/2 * 1/(1 - lam) + (p - k)/2 * 1/(-1 - lam) - (1 - p)/lam,

perturbations k -> k + dk are resummed by a Neumann series, and the sea
projector is extracted by a counter-clockwise contour integral around the
point -1:

    P_sea = -(1/2 pi i) oint (-lam) R~_lam d lam ,

which equals minus the eigenvalue-weighted spectral projector of the
perturbed matrix over the enclosed cluster.

The finite stand-in for the full Dirac operator is the projector onto the
orthogonal complement of the perturbed shell (eigenvalue clusters at +-1);
it annihilates the exact sea projector, and truncated constructions leave
a residual that scales quadratically in the perturbation strength.

A concrete realization on a 1+1 momentum-lattice Dirac model supplies
advanced/retarded Green's functions with +-i nu energy prescriptions, the
perturbation series for them, and the causal fundamental solution
(s_adv - s_ret)/(2 pi i).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "FiniteSeaModel",
    "Contour",
    "GreensPair",
    "LatticeDiracModel",
    "NeumannResult",
    "random_model",
    "conjugated_perturbation",
    "unperturbed_resolvent",
    "neumann_resolvent",
    "contour_sea_projector",
    "sea_projector_oracle",
    "off_shell_operator",
    "dirac_identity_residual",
    "lattice_dirac_model",
    "dumps_model",
    "loads_model",
    "save_model",
    "load_model",
    "greens_series",
    "causal_fundamental",
    "check_causality_compatibility",
]

MODEL_TOL = 1e-10
CONTOUR_GUARD = 1e-6

GAMMA0_2 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)   # sigma_3
GAMMA1_2 = np.array([[0.0, 1.0j], [1.0j, 0.0]], dtype=complex)  # i sigma_1


def _hermitize_check(M, name: str, tol: float = MODEL_TOL) -> np.ndarray:
    A = np.asarray(M, dtype=complex)
    scale = max(np.linalg.norm(A, 2), 1.0)
    if np.linalg.norm(A - A.conj().T, 2) > tol * scale:
        raise ValueError(f"{name} must be Hermitian")
    return A


@dataclass(frozen=True)
class FiniteSeaModel:
    """Matrix triple (k, p, dk) obeying k^2 = p, p^2 = p."""

    k: np.ndarray
    p: np.ndarray
    dk: np.ndarray

    def __post_init__(self):
        k = _hermitize_check(self.k, "k")
        p = _hermitize_check(self.p, "p")
        dk = _hermitize_check(self.dk, "dk")
        if not (k.shape == p.shape == dk.shape):
            raise ValueError("k, p, dk must share one square shape")
        if np.linalg.norm(k @ k - p, 2) > MODEL_TOL * max(1.0, np.linalg.norm(p, 2)):
            raise ValueError("model violates k^2 = p")
        if np.linalg.norm(p @ p - p, 2) > MODEL_TOL * max(1.0, np.linalg.norm(p, 2)):
            raise ValueError("model violates p^2 = p")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "dk", dk)

    @property
    def dim(self) -> int:
        return self.k.shape[0]

    def perturbed(self) -> np.ndarray:
        return self.k + self.dk


@dataclass(frozen=True)
class Contour:
    """Circle around the negative shell point; +1 and 0 stay outside."""

    center: complex = -1.0
    radius: float = 0.5
    nodes: int = 64

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if abs(self.center - 1.0) <= self.radius or abs(self.center) <= self.radius:
            raise ValueError("contour must leave the points 0 and +1 outside")
        if self.nodes < 8:
            raise ValueError("need at least 8 quadrature nodes")

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Trapezoidal nodes z_j and weights dz_j on the circle."""
        th = 2.0 * np.pi * (np.arange(self.nodes) + 0.5) / self.nodes
        z = self.center + self.radius * np.exp(1j * th)
        dz = 1j * self.radius * np.exp(1j * th) * (2.0 * np.pi / self.nodes)
        return z, dz


def random_model(
    d: int,
    n_neg: int,
    n_pos: int,
    rng: np.random.Generator,
    perturbation: float = 0.0,
) -> FiniteSeaModel:
    """Random unitary conjugation of diag(-1 ... , +1 ..., 0 ...).

    With ``perturbation > 0`` an in-class dk of that spectral norm is
    attached (a small unitary rotation of k, which keeps the exact
    {-1, 0, 1} spectrum of the perturbed matrix).
    """
    if n_neg + n_pos > d:
        raise ValueError("n_neg + n_pos exceeds the dimension")
    H = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Q, _ = np.linalg.qr(H)
    vals = np.array([-1.0] * n_neg + [1.0] * n_pos + [0.0] * (d - n_neg - n_pos))
    k = (Q * vals) @ Q.conj().T
    p = (Q * vals**2) @ Q.conj().T
    k = (k + k.conj().T) / 2
    p = (p + p.conj().T) / 2
    dk = np.zeros((d, d), dtype=complex)
    model = FiniteSeaModel(k, p, dk)
    if perturbation > 0.0:
        dk = conjugated_perturbation(model, perturbation, rng)
        model = FiniteSeaModel(k, p, dk)
    return model


def conjugated_perturbation(
    model: FiniteSeaModel, strength: float, rng: np.random.Generator
) -> np.ndarray:
    """dk = e^{itG} k e^{-itG} - k with random Hermitian G, ||dk|| ~ strength.

    The result is exactly a unitary rotation of k (the perturbed matrix
    keeps the {-1, 0, 1} spectrum); t is tuned so the spectral norm lands
    within 1% of the requested strength.
    """
    d = model.dim
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    G = (G + G.conj().T) / 2
    w, U = np.linalg.eigh(G)

    def rotation(t: float) -> np.ndarray:
        rot = (U * np.exp(1j * w * t)) @ U.conj().T
        dk = rot @ model.k @ rot.conj().T - model.k
        return (dk + dk.conj().T) / 2

    t = strength / max(np.linalg.norm(rotation(1.0), 2), 1e-30)
    dk = rotation(t)
    for _ in range(8):
        nrm = np.linalg.norm(dk, 2)
        if abs(nrm - strength) <= 0.01 * strength:
            break
        t *= strength / max(nrm, 1e-30)
        dk = rotation(t)
    return dk


def unperturbed_resolvent(model: FiniteSeaModel, lam: complex) -> np.ndarray:
    """Closed-form (k - lam)^{-1} built from the shell algebra."""
    if lam in (0.0, 1.0, -1.0) or min(abs(lam), abs(lam - 1), abs(lam + 1)) == 0.0:
        raise ZeroDivisionError("lambda sits on a pole of the resolvent")
    k, p = model.k, model.p
    I = np.eye(model.dim, dtype=complex)
    return (
        (p + k) / 2 * (1.0 / (1.0 - lam))
        + (p - k) / 2 * (1.0 / (-1.0 - lam))
        - (I - p) / lam
    )


class NeumannResult(NamedTuple):
    matrix: np.ndarray
    tail_bound: float
    contraction: float  # ||R_lam dk||


def neumann_resolvent(model: FiniteSeaModel, lam: complex, order: int) -> NeumannResult:
    """Truncated Neumann series sum_n (-R_lam dk)^n R_lam with a tail bound.

    Requires the contraction ||R_lam dk|| < 1; the reported bound is
    q^{order+1}/(1-q) * ||R_lam|| in the spectral norm.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    R = unperturbed_resolvent(model, lam)
    M = -R @ model.dk
    q = np.linalg.norm(M, 2)
    if q >= 1.0:
        raise ValueError(f"Neumann series diverges: ||R_lam dk|| = {q:.3f} >= 1")
    out = R.copy()
    term = R
    for _ in range(order):
        term = M @ term
        out = out + term
    tail = q ** (order + 1) / (1.0 - q) * np.linalg.norm(R, 2)
    return NeumannResult(out, float(tail), float(q))


def sea_projector_oracle(model: FiniteSeaModel, contour: Contour | None = None) -> np.ndarray:
    """-sum of lam_i Pi_i over eigenvalues of k + dk inside the contour."""
    contour = contour or Contour()
    w, V = np.linalg.eigh(model.perturbed())
    inside = np.abs(w - contour.center) < contour.radius
    Vi = V[:, inside]
    return -(Vi * w[inside]) @ Vi.conj().T


def contour_sea_projector(
    model: FiniteSeaModel, contour: Contour | None = None, order: int | None = None
) -> np.ndarray:
    """Trapezoidal contour integral of -(1/2 pi i) (-lam) R~_lam.

    With ``order`` given, the perturbed resolvent at every node comes from
    the Neumann series at that truncation (the contraction condition is
    checked node by node); with ``order=None`` it is the direct solve.
    Aborts if an eigenvalue of k + dk sits within 1e-6 of the contour.
    """
    contour = contour or Contour()
    kt = model.perturbed()
    w = np.linalg.eigvalsh(kt)
    dist = np.abs(np.abs(w - contour.center) - contour.radius)
    if np.min(dist) < CONTOUR_GUARD:
        raise ValueError(
            f"eigenvalue at distance {np.min(dist):.2e} from the contour; "
            "the quadrature would be ill-conditioned"
        )
    z, dz = contour.points()
    I = np.eye(model.dim, dtype=complex)
    acc = np.zeros_like(kt)
    for zj, dzj in zip(z, dz):
        if order is None:
            Rt = np.linalg.solve(kt - zj * I, I)
        else:
            Rt = neumann_resolvent(model, zj, order).matrix
        acc += (-zj) * Rt * dzj
    return -acc / (2j * np.pi)


def off_shell_operator(model: FiniteSeaModel) -> np.ndarray:
    """Projector onto the orthogonal complement of the perturbed shell.

    The shell is spanned by eigenvectors of k + dk with |eigenvalue| > 1/2
    (the clusters continuously connected to +-1).  The result annihilates
    the exact sea projector and plays the role of the Dirac operator of
    the finite model.
    """
    w, V = np.linalg.eigh(model.perturbed())
    shell = np.abs(w) > 0.5
    Vs = V[:, shell]
    return np.eye(model.dim, dtype=complex) - Vs @ Vs.conj().T


def dirac_identity_residual(P_sea: np.ndarray, D_full: np.ndarray) -> float:
    """||D P|| / ||P|| in the Frobenius norm."""
    P = np.asarray(P_sea, dtype=complex)
    D = np.asarray(D_full, dtype=complex)
    if P.shape != D.shape:
        raise ValueError("P_sea and D_full must share one shape")
    nP = np.linalg.norm(P)
    if nP == 0.0:
        return 0.0
    return float(np.linalg.norm(D @ P) / nP)


def dumps_model(model: FiniteSeaModel) -> str:
    """Plain-text container with the (k, p, dk) entries."""
    fmt = "%.17e"
    lines = ["finite-sea-model v1", f"dim {model.dim}"]
    for name, M in (("k", model.k), ("p", model.p), ("dk", model.dk)):
        for i in range(model.dim):
            row = []
            for j in range(model.dim):
                row.append(fmt % M[i, j].real)
                row.append(fmt % M[i, j].imag)
            lines.append(f"{name} " + " ".join(row))
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> FiniteSeaModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    it = iter(lines)
    if next(it).strip() != "finite-sea-model v1":
        raise ValueError("unsupported model container header")
    toks = next(it).split()
    if toks[0] != "dim":
        raise ValueError("model container: expected 'dim'")
    d = int(toks[1])
    mats = {}
    for name in ("k", "p", "dk"):
        M = np.zeros((d, d), dtype=complex)
        for i in range(d):
            toks = next(it).split()
            if toks[0] != name or len(toks) != 2 * d + 1:
                raise ValueError(f"model container: bad '{name}' row")
            vals = [float(v) for v in toks[1:]]
            M[i] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
        mats[name] = M
    return FiniteSeaModel(mats["k"], mats["p"], mats["dk"])


def save_model(model: FiniteSeaModel, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> FiniteSeaModel:
    with open(path, "r", encoding="ascii") as fh:
        return loads_model(fh.read())


# ---------------------------------------------------------------------------
# momentum-lattice Dirac model (1+1, 2-spinors)


@dataclass(frozen=True)
class GreensPair:
    """Advanced/retarded Green's functions of one discretized Dirac operator."""

    s_adv: np.ndarray
    s_ret: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.s_adv, dtype=complex)
        r = np.asarray(self.s_ret, dtype=complex)
        if a.shape != r.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("Green's functions must be square and congruent")
        object.__setattr__(self, "s_adv", a)
        object.__setattr__(self, "s_ret", r)


@dataclass(frozen=True)
class LatticeDiracModel:
    """Free Dirac operator on a finite set of (q0, q1) momentum modes.

    Each mode carries a 2x2 spinor block q0*g0 - q1*g1 - m.  The energy
    grid contains the two on-shell values +-omega(q1) exactly, plus a pair
    of off-shell values, so the causal fundamental solution concentrates
    on the shell as nu -> 0.
    """

    modes: np.ndarray          # (n_modes, 2): columns q0, q1
    mass: float
    nu: float

    @property
    def dim(self) -> int:
        return 2 * len(self.modes)

    def spin_signature(self) -> np.ndarray:
        """Block-diagonal g0: the indefinite spin product on the model space."""
        n = len(self.modes)
        S = np.zeros((2 * n, 2 * n), dtype=complex)
        for i in range(n):
            S[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = GAMMA0_2
        return S

    def _blocks(self, shift) -> np.ndarray:
        out = np.zeros((len(self.modes), 2, 2), dtype=complex)
        for i, (q0, q1) in enumerate(self.modes):
            out[i] = (q0 + shift(q0)) * GAMMA0_2 - q1 * GAMMA1_2 - self.mass * np.eye(2)
        return out

    def dirac_matrix(self, prescription: str = "none") -> np.ndarray:
        """Blockdiag Dirac matrix; prescription shifts q0 into the complex plane.

        "advanced": q0 -> q0 - i nu, "retarded": q0 -> q0 + i nu,
        "plus"/"minus": q0 -> q0 -+ i nu sign(q0), "none": no shift.
        """
        shifts = {
            "none": lambda q0: 0.0,
            "advanced": lambda q0: -1j * self.nu,
            "retarded": lambda q0: +1j * self.nu,
            "plus": lambda q0: -1j * self.nu * np.sign(q0),
            "minus": lambda q0: +1j * self.nu * np.sign(q0),
        }
        if prescription not in shifts:
            raise ValueError(f"unknown prescription {prescription!r}")
        blocks = self._blocks(shifts[prescription])
        n = len(self.modes)
        D = np.zeros((2 * n, 2 * n), dtype=complex)
        for i in range(n):
            D[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = blocks[i]
        return D

    def greens(self, kind: str = "causal") -> GreensPair:
        """Green's function pair; "causal" = (advanced, retarded) energy
        prescriptions, "shell" = the sign-symmetric (plus, minus) pair whose
        difference concentrates on the whole shell without the energy sign."""
        if kind == "causal":
            a = np.linalg.inv(self.dirac_matrix("advanced"))
            r = np.linalg.inv(self.dirac_matrix("retarded"))
        elif kind == "shell":
            a = np.linalg.inv(self.dirac_matrix("plus"))
            r = np.linalg.inv(self.dirac_matrix("minus"))
        else:
            raise ValueError(f"unknown Green's pair kind {kind!r}")
        return GreensPair(a, r)


def lattice_dirac_model(
    n_momenta: int,
    box: float,
    mass: float,
    nu: float,
    off_shell_gap: float = 1.0,
) -> LatticeDiracModel:
    """Build the (q0, q1) mode set: exact +-omega plus one off-shell pair."""
    if n_momenta < 1 or box <= 0 or mass <= 0 or nu <= 0:
        raise ValueError("need n_momenta >= 1, box > 0, mass > 0, nu > 0")
    jmax = (n_momenta - 1) // 2
    q1s = 2.0 * np.pi * np.arange(-jmax, jmax + 1) / box
    modes = []
    for q1 in q1s:
        w = np.hypot(q1, mass)
        for q0 in (-w, w, -(w + off_shell_gap), w + off_shell_gap):
            modes.append((q0, q1))
    return LatticeDiracModel(np.array(modes), mass, nu)


def causal_fundamental(g: GreensPair) -> np.ndarray:
    """(s_adv - s_ret) / (2 pi i)."""
    return (g.s_adv - g.s_ret) / (2j * np.pi)


def greens_series(
    g: GreensPair, B: np.ndarray, order: int
) -> tuple[GreensPair, list[GreensPair], float]:
    """Perturbation series s~ = sum_n (-s B)^n s for both members.

    Returns the truncated pair, the per-order partial sums (for
    diagnostics), and the larger of the two contraction norms ||s B||
    (convergence holds when it is < 1; the truncation is returned either
    way).
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    B = np.asarray(B, dtype=complex)
    out_orders: list[GreensPair] = []
    acc_a, acc_r = g.s_adv.copy(), g.s_ret.copy()
    term_a, term_r = g.s_adv, g.s_ret
    Ma, Mr = -g.s_adv @ B, -g.s_ret @ B
    out_orders.append(GreensPair(acc_a.copy(), acc_r.copy()))
    for _ in range(order):
        term_a = Ma @ term_a
        term_r = Mr @ term_r
        acc_a = acc_a + term_a
        acc_r = acc_r + term_r
        out_orders.append(GreensPair(acc_a.copy(), acc_r.copy()))
    contraction = max(np.linalg.norm(Ma, 2), np.linalg.norm(Mr, 2))
    return GreensPair(acc_a, acc_r), out_orders, float(contraction)


def check_causality_compatibility(
    D_full: np.ndarray, X: np.ndarray, S: np.ndarray, tol: float = 1e-10
) -> None:
    """Require (D) X = X^* (D) with the S-adjoint X^* = S X^dag S.

    Raised as a hard error when violated; models with a nontrivial chiral
    asymmetry must pass this before any perturbation series is trusted.
    """
    Xs = S @ X.conj().T @ S
    defect = np.linalg.norm(D_full @ X - Xs @ D_full, 2)
    scale = max(np.linalg.norm(D_full, 2) * np.linalg.norm(X, 2), 1e-30)
    if defect > tol * scale:
        raise ValueError(
            f"causality compatibility violated: relative defect {defect / scale:.3e}"
        )
