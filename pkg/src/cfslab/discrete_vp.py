"""The fermionic-projector variational principle in discrete spacetime.

The arena is an indefinite inner product space <u|v> = u^dag S v with
S^2 = 1, partitioned into even-dimensional blocks of balanced signature
(the spacetime points).  A fermion matrix P is Krein self-adjoint
(S P^dag S = P); its discrete kernel is the block P(x,y) = E_x P E_y, the
closed chain is A_xy = P(x,y) P(y,x), and the functionals are

    S[P] = sum_xy |A_xy^2|     (minimize)
    T[P] = sum_xy |A_xy|^2     (held fixed, or traded for a multiplier mu)

with |.| the spectral weight.  Admissible competitors have tr(P) = f,
rank(P) <= f and (-P) positive; variations run along Krein-unitary
conjugations P -> U P U^{-1}.

Stationarity is the commutator equation [P, Q] = 0 with Q assembled
blockwise from the gradient of the multiplier Lagrangian,
Q(x,y) = (R(x,y) + R(y,x)^*) / 4 and R(y,x) the matrix gradient of
L_mu[A_xy] with respect to P(x,y).  Along the conjugation flow generated
by a Krein self-adjoint G the first variation is

    d/dt S_mu[e^{itG} P e^{-itG}] = 4 i tr(G [P, Q]) ,

so G = -i S [P,Q] S is a strict descent direction with slope
-4 ||S [P,Q]||_F^2: gradient descent on the orbit stalls exactly at the
Euler-Lagrange equation, and el_residual measures how far away it is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

__all__ = [
    "KreinSpace",
    "SpacetimePartition",
    "FermionMatrix",
    "AdmissibilityReport",
    "FlowResult",
    "canonical_spacetime",
    "krein_adjoint",
    "krein_projector",
    "random_admissible",
    "check_admissible",
    "discrete_kernel",
    "discrete_action",
    "discrete_constraint",
    "unitary_flow_step",
    "lagrangian_gradient",
    "assemble_Q",
    "el_residual",
    "flow_descent",
    "dumps_discrete",
    "loads_discrete",
    "save_discrete",
    "load_discrete",
    "reconstruct_hilbert",
]

KREIN_TOL = 1e-10
SIMPLE_GAP = 1e-6


@dataclass(frozen=True)
class KreinSpace:
    """Indefinite inner product space: <u|v> = u^dag S v, S Hermitian, S^2 = 1."""

    S: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.S, dtype=complex)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError("S must be square")
        if np.linalg.norm(S - S.conj().T, 2) > 1e-12:
            raise ValueError("S must be Hermitian")
        if np.linalg.norm(S @ S - np.eye(S.shape[0]), 2) > 1e-12:
            raise ValueError("S must be an involution (S^2 = 1)")
        object.__setattr__(self, "S", S)

    @property
    def dim(self) -> int:
        return self.S.shape[0]

    def signature(self) -> tuple[int, int]:
        w = np.linalg.eigvalsh(self.S)
        return int(np.sum(w > 0)), int(np.sum(w < 0))


@dataclass(frozen=True)
class SpacetimePartition:
    """Ordered block ranges partitioning {0..d}; E_x selects block x."""

    blocks: tuple[tuple[int, int], ...]

    def __post_init__(self):
        blocks = tuple((int(a), int(b)) for a, b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        pos = 0
        for a, b in blocks:
            if a != pos or b <= a:
                raise ValueError("blocks must be contiguous, ordered and nonempty")
            pos = b

    @property
    def dim(self) -> int:
        return self.blocks[-1][1]

    def __len__(self) -> int:
        return len(self.blocks)

    def slice(self, x: int) -> slice:
        a, b = self.blocks[x]
        return slice(a, b)


def canonical_spacetime(n_points: int, block_dim: int) -> tuple[KreinSpace, SpacetimePartition]:
    """Balanced-signature blocks with the per-block canonical S = diag(+1.., -1..)."""
    if block_dim % 2 != 0:
        raise ValueError("block dimension must be even for a balanced signature")
    diag = []
    blocks = []
    for x in range(n_points):
        blocks.append((x * block_dim, (x + 1) * block_dim))
        diag.extend([1.0] * (block_dim // 2) + [-1.0] * (block_dim // 2))
    return KreinSpace(np.diag(diag).astype(complex)), SpacetimePartition(tuple(blocks))


@dataclass(frozen=True)
class FermionMatrix:
    """A Krein self-adjoint matrix on the given space."""

    P: np.ndarray
    space: KreinSpace

    def __post_init__(self):
        P = np.asarray(self.P, dtype=complex)
        S = self.space.S
        scale = max(np.linalg.norm(P, 2), 1e-300)
        if np.linalg.norm(S @ P.conj().T @ S - P, 2) > KREIN_TOL * scale:
            raise ValueError("P is not Krein self-adjoint")
        object.__setattr__(self, "P", P)


def krein_adjoint(M, S) -> np.ndarray:
    """S M^dag S."""
    M = np.asarray(M, dtype=complex)
    S = np.asarray(S, dtype=complex)
    return S @ M.conj().T @ S


def krein_projector(B, S) -> np.ndarray:
    """Krein-orthogonal projector onto the column span of B.

    P = B (B^* B)^{-1} B^* with B^* = B^dag S; requires the span to be
    non-degenerate (B^dag S B invertible).
    """
    B = np.asarray(B, dtype=complex)
    S = np.asarray(S, dtype=complex)
    gram = B.conj().T @ S @ B
    if np.linalg.cond(gram) > 1e12:
        raise ValueError("degenerate subspace: the Krein Gram matrix is singular")
    return B @ np.linalg.solve(gram, B.conj().T @ S)


def random_admissible(
    space: KreinSpace, f: int, rng: np.random.Generator, mixing: float = 0.3
) -> np.ndarray:
    """Krein projector onto a random negative-definite f-dim subspace.

    Columns combine an orthonormal frame in the negative part of S with a
    contraction (norm < 1) into the positive part, which keeps the span
    negative definite; the result satisfies tr P = f, rank P = f and
    (-P) >= 0.
    """
    w, V = np.linalg.eigh(space.S)
    neg = V[:, w < 0]
    pos = V[:, w > 0]
    if f > neg.shape[1]:
        raise ValueError("f exceeds the negative signature of the space")
    A = rng.normal(size=(neg.shape[1], f)) + 1j * rng.normal(size=(neg.shape[1], f))
    Qn, _ = np.linalg.qr(A)
    K = rng.normal(size=(pos.shape[1], f)) + 1j * rng.normal(size=(pos.shape[1], f))
    K *= mixing / max(np.linalg.norm(K, 2), 1e-300)
    B = neg @ Qn + pos @ (K @ np.eye(f))
    return krein_projector(B, space.S)


@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    trace_value: complex
    trace_ok: bool
    rank_value: int
    rank_ok: bool
    positivity_min: float
    positivity_ok: bool
    witness: np.ndarray | None


def check_admissible(
    P,
    f: int,
    space: KreinSpace,
    tau_rank: float = 1e-10,
    n_probes: int = 64,
    rng: np.random.Generator | None = None,
) -> AdmissibilityReport:
    """Verify tr P = f, rank P <= f and positivity of (-P).

    Positivity is equivalent to the Hermitian matrix -S P being positive
    semidefinite; its eigenbasis plus random probe vectors are pushed
    through <u|(-P) u> as a redundancy check, and the worst probe is
    returned as a witness on failure.
    """
    P = np.asarray(P, dtype=complex)
    S = space.S
    rng = rng or np.random.default_rng(2024)
    scale = max(np.linalg.norm(P, 2), 1e-300)
    tr = complex(np.trace(P))
    trace_ok = abs(tr - f) <= 1e-8 * max(1.0, abs(f))
    sv = np.linalg.svd(P, compute_uv=False)
    rank = int(np.sum(sv > tau_rank * scale))
    rank_ok = rank <= f
    G = -S @ P
    G = (G + G.conj().T) / 2
    w, V = np.linalg.eigh(G)
    probes = [V]
    probes.append(
        rng.normal(size=(space.dim, n_probes)) + 1j * rng.normal(size=(space.dim, n_probes))
    )
    U = np.hstack(probes)
    quad = np.real(np.einsum("id,ij,jd->d", U.conj(), -S @ P, U))
    norms = np.einsum("id,id->d", U.conj(), U).real
    vals = quad / norms
    worst = int(np.argmin(vals))
    pos_min = float(vals[worst])
    pos_ok = pos_min >= -1e-10 * scale
    witness = None if pos_ok else U[:, worst]
    return AdmissibilityReport(
        ok=bool(trace_ok and rank_ok and pos_ok),
        trace_value=tr,
        trace_ok=bool(trace_ok),
        rank_value=rank,
        rank_ok=bool(rank_ok),
        positivity_min=pos_min,
        positivity_ok=bool(pos_ok),
        witness=witness,
    )


def discrete_kernel(P, partition: SpacetimePartition, x: int, y: int) -> np.ndarray:
    """The (x, y) block E_x P E_y."""
    P = np.asarray(P, dtype=complex)
    if P.shape != (partition.dim, partition.dim):
        raise ValueError("P does not match the partition dimension")
    if not (0 <= x < len(partition) and 0 <= y < len(partition)):
        raise IndexError("block index out of range")
    return P[partition.slice(x), partition.slice(y)]


def _chain_abs(P, partition, x, y) -> np.ndarray:
    Z = discrete_kernel(P, partition, x, y)
    W = discrete_kernel(P, partition, y, x)
    return np.abs(np.linalg.eigvals(Z @ W))


def discrete_action(P, partition: SpacetimePartition) -> float:
    """S[P] = sum_xy |A_xy^2| with A_xy = P(x,y) P(y,x)."""
    total = 0.0
    for x in range(len(partition)):
        for y in range(len(partition)):
            a = _chain_abs(P, partition, x, y)
            total += float(np.sum(a * a))
    return total


def discrete_constraint(P, partition: SpacetimePartition) -> float:
    """T[P] = sum_xy |A_xy|^2."""
    total = 0.0
    for x in range(len(partition)):
        for y in range(len(partition)):
            a = _chain_abs(P, partition, x, y)
            total += float(np.sum(a)) ** 2
    return total


def unitary_flow_step(P, G, t: float, space: KreinSpace) -> np.ndarray:
    """Conjugate P by U = exp(i t G) for a Krein self-adjoint generator G.

    Krein self-adjointness, trace, rank and (-P)-positivity of the result
    are verified post hoc against the input.
    """
    P = np.asarray(P, dtype=complex)
    G = np.asarray(G, dtype=complex)
    S = space.S
    scale = max(np.linalg.norm(G, 2), 1e-300)
    if np.linalg.norm(krein_adjoint(G, S) - G, 2) > KREIN_TOL * scale:
        raise ValueError("generator is not Krein self-adjoint")
    U = expm(1j * t * G)
    Uinv = expm(-1j * t * G)
    out = U @ P @ Uinv
    # post-hoc checks
    pscale = max(np.linalg.norm(P, 2), 1e-300)
    if np.linalg.norm(krein_adjoint(out, S) - out, 2) > 1e-8 * pscale:
        raise FloatingPointError("conjugation lost Krein self-adjointness")
    if abs(np.trace(out) - np.trace(P)) > 1e-8 * max(1.0, abs(np.trace(P))):
        raise FloatingPointError("conjugation lost the trace")
    sv_in = np.linalg.svd(P, compute_uv=False)
    sv_out = np.linalg.svd(out, compute_uv=False)
    r_in = int(np.sum(sv_in > 1e-10 * pscale))
    r_out = int(np.sum(sv_out > 1e-10 * pscale))
    if r_out != r_in:
        raise FloatingPointError("conjugation changed the numerical rank")
    w_in = np.linalg.eigvalsh(-(S @ P + (S @ P).conj().T) / 2)
    w_out = np.linalg.eigvalsh(-(S @ out + (S @ out).conj().T) / 2)
    if np.min(w_out) < min(np.min(w_in), 0.0) - 1e-8 * pscale:
        raise FloatingPointError("conjugation lost (-P)-positivity")
    return out


def lagrangian_gradient(Z, W, alpha: float, beta: float, fd_step: float = 1e-7):
    """Gradient of alpha sum|lam|^2 + beta (sum|lam|)^2 of A = Z W w.r.t. Z.

    Returns the matrix R with d L = Re tr(R dZ) (W held fixed).  Uses
    first-order eigenvalue perturbation when the spectrum of A is simple
    and bounded away from zero, central finite differences otherwise.
    """
    Z = np.asarray(Z, dtype=complex)
    W = np.asarray(W, dtype=complex)
    A = Z @ W
    lam, V = np.linalg.eig(A)
    scale = max(np.max(np.abs(lam)), 1e-300)
    gaps_ok = True
    for i in range(len(lam)):
        for j in range(i + 1, len(lam)):
            if abs(lam[i] - lam[j]) < SIMPLE_GAP * scale:
                gaps_ok = False
    moduli_ok = bool(np.all(np.abs(lam) > SIMPLE_GAP * scale))
    if gaps_ok and moduli_ok:
        Wl = np.linalg.inv(V).conj().T  # rows^dag are left eigenvectors
        a = np.abs(lam)
        s1 = float(a.sum())
        c = 2.0 * alpha * a + 2.0 * beta * s1
        R = np.zeros_like(Z.T)
        for i in range(len(lam)):
            v = V[:, i]
            wvec = Wl[:, i]
            denom = wvec.conj() @ v
            M = np.outer(W @ v, wvec.conj()) / denom
            R = R + (c[i] * lam[i].conjugate() / a[i]) * M
        return R

    def L_of(Zm):
        aa = np.abs(np.linalg.eigvals(Zm @ W))
        return alpha * float(np.sum(aa * aa)) + beta * float(np.sum(aa)) ** 2

    h = fd_step * max(np.linalg.norm(Z), 1e-8)
    R = np.zeros_like(Z.T)
    for r in range(Z.shape[0]):
        for cidx in range(Z.shape[1]):
            E = np.zeros_like(Z)
            E[r, cidx] = h
            d_re = (L_of(Z + E) - L_of(Z - E)) / (2 * h)
            E[r, cidx] = 1j * h
            d_im = (L_of(Z + E) - L_of(Z - E)) / (2 * h)
            # dL = Re tr(R dZ):  R[c, r] = dL/dRe - i dL/dIm
            R[cidx, r] = d_re - 1j * d_im
    return R


def assemble_Q(P, partition: SpacetimePartition, space: KreinSpace, mu: float) -> np.ndarray:
    """Blockwise Q(x,y) = (R(x,y) + R(y,x)^*) / 4 from the L_mu gradients."""
    P = np.asarray(P, dtype=complex)
    d = partition.dim
    S = space.S
    R_full = np.zeros((d, d), dtype=complex)
    for x in range(len(partition)):
        sx = partition.slice(x)
        for y in range(len(partition)):
            sy = partition.slice(y)
            Z = P[sx, sy]
            W = P[sy, sx]
            # gradient of L_mu[A_xy] w.r.t. P(x,y): lives on block (y, x)
            R_full[sy, sx] += lagrangian_gradient(Z, W, 1.0, -mu)
    Q = (R_full + krein_adjoint(R_full, S)) / 4.0
    return Q


def el_residual(P, mu: float, partition: SpacetimePartition, space: KreinSpace) -> float:
    """||[P, Q]||_F for the multiplier Lagrangian at the given mu."""
    P = np.asarray(P, dtype=complex)
    Q = assemble_Q(P, partition, space, mu)
    return float(np.linalg.norm(P @ Q - Q @ P))


def s_mu_value(P, partition: SpacetimePartition, mu: float) -> float:
    """sum_xy |A_xy^2| - mu |A_xy|^2."""
    total = 0.0
    for x in range(len(partition)):
        for y in range(len(partition)):
            a = _chain_abs(P, partition, x, y)
            total += float(np.sum(a * a)) - mu * float(np.sum(a)) ** 2
    return total


@dataclass
class FlowResult:
    P: np.ndarray
    objective_history: list
    residual_history: list
    status: str


def flow_descent(
    P0,
    partition: SpacetimePartition,
    space: KreinSpace,
    mu: float,
    max_iters: int = 500,
    step_init: float = 1.0,
    tol: float = 0.0,
    preserve_constraint: bool = False,
) -> FlowResult:
    """Armijo gradient descent of S_mu along Krein-unitary conjugations.

    The descent generator is G = -i S [P, Q] S (the Krein self-adjoint
    steepest direction); with ``preserve_constraint`` the component moving
    T[P] is projected out, keeping the constraint level to first order.
    """
    P = np.asarray(P0, dtype=complex)
    S = space.S
    obj = s_mu_value(P, partition, mu)
    history = [obj]
    residuals = [el_residual(P, mu, partition, space)]
    step = step_init
    status = "max-iters"
    for _ in range(max_iters):
        Q = assemble_Q(P, partition, space, mu)
        C = P @ Q - Q @ P
        G = -1j * (S @ C @ S)
        G = (G + krein_adjoint(G, S)) / 2  # clean roundoff
        if preserve_constraint:
            Qt = _assemble_Q_general(P, partition, space, 0.0, 1.0)
            Ct = P @ Qt - Qt @ P
            Gt = -1j * (S @ Ct @ S)
            Gt = (Gt + krein_adjoint(Gt, S)) / 2
            dT_G = -4.0 * np.imag(np.trace(G @ Ct))
            dT_Gt = -4.0 * np.imag(np.trace(Gt @ Ct))
            if abs(dT_Gt) > 1e-14:
                G = G - (dT_G / dT_Gt) * Gt
        slope = 4.0 * np.real(1j * np.trace(G @ C))
        gnorm = np.linalg.norm(G)
        if gnorm == 0.0 or slope >= 0.0:
            status = "stalled"
            break
        # one spectral factorization of the generator serves every trial step
        ev, W = np.linalg.eig(G)
        Winv = np.linalg.inv(W)
        accepted = False
        t = step
        for _ in range(40):
            U = (W * np.exp(1j * t * ev)) @ Winv
            cand = U @ P @ np.linalg.inv(U)
            val = s_mu_value(cand, partition, mu)
            if val <= obj + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            status = "stalled"
            break
        # re-run the verified step for the accepted length
        P = unitary_flow_step(P, G, t, space)
        obj = s_mu_value(P, partition, mu)
        history.append(obj)
        residuals.append(el_residual(P, mu, partition, space))
        step = min(t * 2.0, step_init * 1e3)
        if tol > 0.0 and residuals[-1] <= tol:
            status = "converged"
            break
    return FlowResult(P, history, residuals, status)


def _assemble_Q_general(P, partition, space, alpha: float, beta: float) -> np.ndarray:
    P = np.asarray(P, dtype=complex)
    d = partition.dim
    R_full = np.zeros((d, d), dtype=complex)
    for x in range(len(partition)):
        sx = partition.slice(x)
        for y in range(len(partition)):
            sy = partition.slice(y)
            R_full[partition.slice(y), sx] += lagrangian_gradient(
                P[sx, sy], P[sy, sx], alpha, beta
            )
    return (R_full + krein_adjoint(R_full, space.S)) / 4.0


def dumps_discrete(P, partition: SpacetimePartition, space: KreinSpace) -> str:
    """Plain-text container: dimension, S diagonal, block ranges, P entries."""
    P = np.asarray(P, dtype=complex)
    d = partition.dim
    diag = np.real(np.diag(space.S))
    lines = ["discrete-vp v1", f"dim {d}"]
    lines.append("signature" + "".join(" %d" % int(round(v)) for v in diag))
    lines.append(
        "blocks" + "".join(f" {a}:{b}" for a, b in partition.blocks)
    )
    fmt = "%.17e"
    for i in range(d):
        row = []
        for j in range(d):
            row.append(fmt % P[i, j].real)
            row.append(fmt % P[i, j].imag)
        lines.append("P " + " ".join(row))
    return "\n".join(lines) + "\n"


def loads_discrete(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    it = iter(lines)
    if next(it).strip() != "discrete-vp v1":
        raise ValueError("unsupported discrete-vp container header")
    toks = next(it).split()
    if toks[0] != "dim":
        raise ValueError("container format error: expected 'dim'")
    d = int(toks[1])
    sig = next(it).split()
    if sig[0] != "signature" or len(sig) != d + 1:
        raise ValueError("container format error: bad signature row")
    S = np.diag([float(v) for v in sig[1:]]).astype(complex)
    blk = next(it).split()
    if blk[0] != "blocks":
        raise ValueError("container format error: expected 'blocks'")
    blocks = tuple(tuple(int(v) for v in b.split(":")) for b in blk[1:])
    P = np.zeros((d, d), dtype=complex)
    for i in range(d):
        toks = next(it).split()
        if toks[0] != "P" or len(toks) != 2 * d + 1:
            raise ValueError("container format error: bad P row")
        vals = [float(v) for v in toks[1:]]
        P[i] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
    return P, SpacetimePartition(blocks), KreinSpace(S)


def save_discrete(P, partition, space, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps_discrete(P, partition, space))


def load_discrete(path):
    with open(path, "r", encoding="ascii") as fh:
        return loads_discrete(fh.read())


def reconstruct_hilbert(P, space: KreinSpace, tol: float = 1e-10):
    """Hilbert space from an admissible P: diagonalize G = -S P.

    Divides out the null space (eigenvalues below tol * ||G||); negative
    eigenvalues beyond tolerance mean P was not admissible, which is an
    error.  Returns (dimension, map B with B^dag G B = identity,
    eigenvalues kept).
    """
    P = np.asarray(P, dtype=complex)
    S = space.S
    G = -S @ P
    G = (G + G.conj().T) / 2
    norm = max(np.linalg.norm(G, 2), 1e-300)
    w, V = np.linalg.eigh(G)
    if np.min(w) < -tol * norm:
        raise ValueError(
            f"negativity beyond tolerance: min eigenvalue {np.min(w):.3e}"
        )
    keep = w > tol * norm
    dim = int(np.sum(keep))
    B = V[:, keep] / np.sqrt(w[keep])[None, :]
    return dim, B, w[keep]
