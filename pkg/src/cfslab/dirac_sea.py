"""Regularized Dirac seas on a momentum lattice.

A box of extent ``L`` with periodic boundary conditions carries the
momenta 2*pi*j/L, |j| <= (M_k - 1)/2 per axis.  For every lattice momentum
the negative-energy subspace of the one-particle Hamiltonian is occupied,
giving an orthonormal family of plane-wave solutions with respect to the
equal-time scalar product on the box.  Two dimension modes are supported:
the full 3+1 construction with 4-spinors (two occupied states per
momentum) and a desk-scale 1+1 reduction with 2-spinors (one occupied
state per momentum, spin product of signature (1,1)).

Regularization multiplies each Fourier amplitude by exp(eps * k0); on the
lower mass shell k0 = -omega(k) < 0, so high energies are damped
exponentially.  Inserted particle and removed (anti-particle) states enter
the two-point kernel with -+ 1/(2 pi) rank-one corrections; insertion
coefficient vectors are taken unit-norm in the box scalar product.

Local correlation operators F(x) are Gram matrices of the regularized
point evaluations over the current state family; they have rank at most
the spinor dimension and at most (2, 2) signature, which is what makes the
push-forward construction land in the operator class with spin dimension
two.  Systems exported by :func:`build_cfs` always declare n = 2; the 1+1
reduction simply realizes only a (1, 1) sub-signature of that budget.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import factorial
from typing import Sequence

import numpy as np
from scipy.special import digamma

from . import core

__all__ = [
    "GammaBasis",
    "MomentumLattice",
    "RegularizationSpec",
    "SeaState",
    "SectorSpec",
    "MultiSectorKernel",
    "gamma_basis",
    "gamma_basis_1p1",
    "shell_projectors",
    "negative_energy_mode",
    "build_sea",
    "regularized_eval",
    "kernel_P_eps",
    "closed_chain_eigenvalues",
    "padded_lagrangian",
    "local_correlation",
    "build_cfs",
    "insert_states",
    "direct_sum_sectors",
    "default_log_coefficient",
    "continuum_T",
    "suppression_sweep",
]

MODE_CAP = 4096
SPAN_TOL = 1e-8


# ---------------------------------------------------------------------------
# Clifford algebra


@dataclass(frozen=True)
class GammaBasis:
    """Dirac matrices with {g^mu, g^nu} = 2 eta^{mu nu}, eta = diag(+,-,...).

    ``gammas[0]`` doubles as the spin signature matrix: the indefinite spin
    product is psi^dag gammas[0] phi.  ``gamma5`` and the chiral projectors
    are only defined in the 3+1 representation.
    """

    gammas: tuple[np.ndarray, ...]
    gamma5: np.ndarray | None

    def __post_init__(self):
        dim = self.gammas[0].shape[0]
        eta = np.diag([1.0] + [-1.0] * (len(self.gammas) - 1))
        I = np.eye(dim)
        for mu, gm in enumerate(self.gammas):
            for nu, gn in enumerate(self.gammas):
                anti = gm @ gn + gn @ gm
                if np.linalg.norm(anti - 2 * eta[mu, nu] * I) > 1e-14 * max(
                    1.0, np.linalg.norm(anti)
                ):
                    raise ValueError(
                        f"anticommutator identity failed for (mu, nu)=({mu}, {nu})"
                    )

    @property
    def spinor_dim(self) -> int:
        return self.gammas[0].shape[0]

    @property
    def signature(self) -> np.ndarray:
        return self.gammas[0]

    def chiral_projectors(self) -> tuple[np.ndarray, np.ndarray]:
        """(chi_L, chi_R) = ((1 -+ gamma5)/2)."""
        if self.gamma5 is None:
            raise ValueError("chiral projectors need the 4-spinor representation")
        I = np.eye(self.spinor_dim, dtype=complex)
        return (I - self.gamma5) / 2.0, (I + self.gamma5) / 2.0

    def slash(self, k: Sequence[float]) -> np.ndarray:
        """k_mu g^mu with the index lowered by eta."""
        k = np.asarray(k, dtype=complex)
        out = k[0] * self.gammas[0]
        for mu in range(1, len(self.gammas)):
            out = out - k[mu] * self.gammas[mu]
        return out


def gamma_basis() -> GammaBasis:
    """Standard 3+1 Dirac representation."""
    I2 = np.eye(2, dtype=complex)
    Z2 = np.zeros((2, 2), dtype=complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    g0 = np.block([[I2, Z2], [Z2, -I2]])
    gs = tuple(np.block([[Z2, s], [-s, Z2]]) for s in (sx, sy, sz))
    g5 = 1j * g0 @ gs[0] @ gs[1] @ gs[2]
    return GammaBasis((g0,) + gs, g5)


def gamma_basis_1p1() -> GammaBasis:
    """2-spinor reduction: g0 = sigma_3, g1 = i sigma_1, signature (1,1)."""
    g0 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    g1 = np.array([[0.0, 1.0j], [1.0j, 0.0]], dtype=complex)
    return GammaBasis((g0, g1), None)


# ---------------------------------------------------------------------------
# lattice and sea construction


@dataclass(frozen=True)
class MomentumLattice:
    """Periodic box: momenta 2 pi j / extent with |j| <= (points_per_axis-1)/2."""

    extent: float
    points_per_axis: int
    mode: str = "1+1"          # "1+1" | "3+1"
    mass: float = 1.0

    def __post_init__(self):
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        if self.points_per_axis < 1:
            raise ValueError("points_per_axis must be >= 1")
        if self.mode not in ("1+1", "3+1"):
            raise ValueError(f"unknown dimension mode {self.mode!r}")
        if self.mass < 0:
            raise ValueError("mass must be nonnegative")

    @property
    def space_dim(self) -> int:
        return 1 if self.mode == "1+1" else 3

    def axis_integers(self) -> np.ndarray:
        jmax = (self.points_per_axis - 1) // 2
        return np.arange(-jmax, jmax + 1)

    def momenta(self) -> np.ndarray:
        """(n_modes, space_dim) array of lattice momenta."""
        js = self.axis_integers()
        if self.mode == "1+1":
            return (2.0 * np.pi / self.extent) * js[:, None].astype(float)
        grids = np.meshgrid(js, js, js, indexing="ij")
        stacked = np.stack([g.ravel() for g in grids], axis=1).astype(float)
        return (2.0 * np.pi / self.extent) * stacked

    def gamma(self) -> GammaBasis:
        return gamma_basis_1p1() if self.mode == "1+1" else gamma_basis()

    def box_volume(self) -> float:
        return self.extent**self.space_dim


@dataclass(frozen=True)
class RegularizationSpec:
    """Ultraviolet damping scale; kind "exponential-ieps" multiplies the
    Fourier amplitude by exp(eps * k0) = exp(-eps * omega) on the sea."""

    eps: float
    kind: str = "exponential-ieps"

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.kind != "exponential-ieps":
            raise ValueError(f"unknown regularization kind {self.kind!r}")


def shell_projectors(kvec, mass: float, gb: GammaBasis) -> tuple[np.ndarray, np.ndarray]:
    """(p_plus, p_minus) = (kslash + m) g0 / (2 k0) at k0 = +-omega."""
    kvec = np.atleast_1d(np.asarray(kvec, dtype=float))
    omega = float(np.sqrt(np.dot(kvec, kvec) + mass * mass))
    if omega == 0.0:
        raise ZeroDivisionError("shell projectors are singular at omega = 0")
    out = []
    for k0 in (omega, -omega):
        kfull = np.concatenate(([k0], kvec))
        out.append((gb.slash(kfull) + mass * np.eye(gb.spinor_dim)) @ gb.signature / (2 * k0))
    return out[0], out[1]


def _hamiltonian(kvec, mass: float, gb: GammaBasis) -> np.ndarray:
    """One-particle Dirac Hamiltonian g0 (k . gamma + m) in momentum space."""
    kvec = np.atleast_1d(np.asarray(kvec, dtype=float))
    acc = mass * np.eye(gb.spinor_dim, dtype=complex)
    for i, ki in enumerate(kvec):
        acc = acc + ki * gb.gammas[i + 1]
    return gb.signature @ acc


def negative_energy_mode(kvec, mass: float, spin: int, gb: GammaBasis | None = None) -> np.ndarray:
    """Normalized spinor amplitude spanning the range of p_minus(k).

    ``spin`` indexes the negative-energy eigenbasis of the Hamiltonian
    (dimension 1 in the 2-spinor reduction, 2 in 3+1).
    """
    if mass <= 0:
        raise ValueError("negative_energy_mode requires mass > 0")
    kvec = np.atleast_1d(np.asarray(kvec, dtype=float))
    if gb is None:
        gb = gamma_basis_1p1() if len(kvec) == 1 else gamma_basis()
    w, V = np.linalg.eigh(_hamiltonian(kvec, mass, gb))
    neg = np.argsort(w)[: gb.spinor_dim // 2]
    if not 0 <= spin < len(neg):
        raise IndexError(f"spin index {spin} out of range (0..{len(neg) - 1})")
    return V[:, neg[spin]]


@dataclass(frozen=True)
class SeaState:
    """Occupied lower-shell family plus optional insertions.

    Rows of ``particles`` (coefficients over the full two-shell mode list)
    must be orthogonal to the occupied span; rows of ``removed`` must lie
    inside it.  The state is immutable; :func:`insert_states` returns a new
    one.
    """

    lattice: MomentumLattice
    momenta: np.ndarray            # (n_k, space_dim)
    omegas: np.ndarray             # (n_k,)
    occ_spinors: np.ndarray        # (n_occ, s) amplitudes, one row per occupied state
    occ_momentum_index: np.ndarray # (n_occ,) row into momenta
    pos_spinors: np.ndarray        # (n_pos, s)
    pos_momentum_index: np.ndarray # (n_pos,)
    particles: np.ndarray          # (n_p, n_occ + n_pos)
    removed: np.ndarray            # (n_a, n_occ + n_pos)

    @property
    def n_occupied(self) -> int:
        return self.occ_spinors.shape[0]

    @property
    def n_states(self) -> int:
        return self.occ_spinors.shape[0] + self.pos_spinors.shape[0]

    @property
    def spinor_dim(self) -> int:
        return self.occ_spinors.shape[1]

    def state_energies(self) -> np.ndarray:
        """k0 of every state in the full list (occupied first)."""
        return np.concatenate(
            [-self.omegas[self.occ_momentum_index], +self.omegas[self.pos_momentum_index]]
        )

    def state_momenta(self) -> np.ndarray:
        return np.vstack(
            [self.momenta[self.occ_momentum_index], self.momenta[self.pos_momentum_index]]
        )

    def state_spinors(self) -> np.ndarray:
        return np.vstack([self.occ_spinors, self.pos_spinors])


def build_sea(lattice: MomentumLattice) -> SeaState:
    """Occupy the full negative-energy subspace of every lattice momentum."""
    if lattice.mass <= 0:
        raise ValueError("build_sea requires a positive mass")
    ks = lattice.momenta()
    if len(ks) > MODE_CAP:
        raise ValueError(f"lattice too large: {len(ks)} modes exceed the cap {MODE_CAP}")
    gb = lattice.gamma()
    s = gb.spinor_dim
    n_spin = s // 2
    omegas = np.sqrt((ks**2).sum(axis=1) + lattice.mass**2)
    occ, occ_idx, pos, pos_idx = [], [], [], []
    for i, k in enumerate(ks):
        w, V = np.linalg.eigh(_hamiltonian(k, lattice.mass, gb))
        order = np.argsort(w)
        for j in order[:n_spin]:
            occ.append(V[:, j])
            occ_idx.append(i)
        for j in order[n_spin:]:
            pos.append(V[:, j])
            pos_idx.append(i)
    n_tot = len(occ) + len(pos)
    return SeaState(
        lattice=lattice,
        momenta=ks,
        omegas=omegas,
        occ_spinors=np.array(occ),
        occ_momentum_index=np.array(occ_idx, dtype=int),
        pos_spinors=np.array(pos),
        pos_momentum_index=np.array(pos_idx, dtype=int),
        particles=np.zeros((0, n_tot), dtype=complex),
        removed=np.zeros((0, n_tot), dtype=complex),
    )


def _state_phases(sea: SeaState, reg: RegularizationSpec | None, x) -> np.ndarray:
    """Regularized plane-wave factors e^{-i k x} (damped) for every state."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if len(x) != sea.lattice.space_dim + 1:
        raise ValueError(
            f"spacetime point must have {sea.lattice.space_dim + 1} components"
        )
    k0 = sea.state_energies()
    kk = sea.state_momenta()
    phase = np.exp(-1j * (k0 * x[0] - kk @ x[1:]))
    if reg is not None:
        phase = phase * np.exp(-reg.eps * np.abs(k0))
    return phase / np.sqrt(sea.lattice.box_volume())


def regularized_eval(sea: SeaState, reg: RegularizationSpec | None, ell: int, x) -> np.ndarray:
    """Value of the ell-th occupied basis solution at x, regularized.

    On the sea the damping equals exp(eps * k0) with k0 = -omega < 0; the
    same |k0| damping extends the operator to the positive shell so that
    inserted particle states are regularized consistently.
    """
    if not 0 <= ell < sea.n_occupied:
        raise IndexError(f"basis index {ell} out of range")
    ph = _state_phases(sea, reg, x)
    return sea.occ_spinors[ell] * ph[ell]


def _coeff_eval(sea: SeaState, reg, coeffs: np.ndarray, x) -> np.ndarray:
    """Evaluate sum_s c_s u_s(x) over the full state list."""
    ph = _state_phases(sea, reg, x)
    return (coeffs * ph) @ sea.state_spinors()


def kernel_P_eps(sea: SeaState, reg: RegularizationSpec | None, x, y) -> np.ndarray:
    """Two-point kernel in spinor indices.

    Vacuum sum -sum_l u_l(x) ubar_l(y) over the occupied family, with
    -1/(2 pi) corrections for inserted particles and +1/(2 pi) for removed
    states (ubar = u^dag g0).
    """
    g0 = sea.lattice.gamma().signature
    ph_x = _state_phases(sea, reg, x)
    ph_y = _state_phases(sea, reg, y)
    n_occ = sea.n_occupied
    chis = sea.occ_spinors
    vx = chis * ph_x[:n_occ, None]
    vy = chis * ph_y[:n_occ, None]
    P = -np.einsum("li,lj->ij", vx, vy.conj()) @ g0
    for c in sea.particles:
        a = _coeff_eval(sea, reg, c, x)
        b = _coeff_eval(sea, reg, c, y)
        P -= (1.0 / (2.0 * np.pi)) * np.outer(a, b.conj()) @ g0
    for c in sea.removed:
        a = _coeff_eval(sea, reg, c, x)
        b = _coeff_eval(sea, reg, c, y)
        P += (1.0 / (2.0 * np.pi)) * np.outer(a, b.conj()) @ g0
    return P


def closed_chain_eigenvalues(
    sea: SeaState, reg: RegularizationSpec | None, x, y
) -> np.ndarray:
    """Eigenvalues of P(x,y) P(y,x) in the spinor representation."""
    g0 = sea.lattice.gamma().signature
    Pxy = kernel_P_eps(sea, reg, x, y)
    Pyx = kernel_P_eps(sea, reg, y, x)
    return np.linalg.eigvals(Pxy @ Pyx)


def padded_lagrangian(lam: np.ndarray, spin_dim: int = 2) -> float:
    """Causal Lagrangian with the spectrum zero-padded to 2 * spin_dim."""
    a = np.abs(np.asarray(lam, dtype=complex))
    two_n = 2 * spin_dim
    if len(a) > two_n:
        raise ValueError("more eigenvalues than the padded budget")
    s1 = float(a.sum())
    s2 = float((a * a).sum())
    return max(s2 - s1 * s1 / two_n, 0.0)


def hilbert_basis(sea: SeaState) -> np.ndarray:
    """Orthonormal coefficient basis of the current one-particle space.

    Occupied states minus the removed directions, plus the inserted
    particle vectors; rows are coefficients over the full state list.
    """
    n_occ, n_tot = sea.n_occupied, sea.n_states
    occ = np.eye(n_tot, dtype=complex)[:n_occ]
    if len(sea.removed):
        q, _ = np.linalg.qr(sea.removed.T)
        R = q.T  # orthonormal rows spanning the removed directions
        # project the occupied span onto the complement of the removed span
        proj = occ - (occ @ R.conj().T) @ R
        q, r = np.linalg.qr(proj.T)
        keep = np.abs(np.diag(r)) > 1e-10
        occ = q[:, keep].T
    rows = [occ]
    if len(sea.particles):
        rows.append(sea.particles)
    return np.vstack(rows)


def local_correlation(sea: SeaState, reg: RegularizationSpec | None, x) -> np.ndarray:
    """Local correlation operator F(x) on the current one-particle space.

    F[u, v] = -<(R u)(x) | (R v)(x)> with the indefinite spin product; a
    Gram assembly with one column per spinor component, hence rank at most
    the spinor dimension and signature bounded by its (half, half) split.
    """
    basis = hilbert_basis(sea)
    ph = _state_phases(sea, reg, x)
    E = ((basis * ph[None, :]) @ sea.state_spinors()).T  # (s, n_H)
    g0 = sea.lattice.gamma().signature
    F = -E.conj().T @ g0 @ E
    return (F + F.conj().T) / 2.0


def build_cfs(
    sea: SeaState,
    reg: RegularizationSpec | None,
    samples: Sequence,
    weights: Sequence[float],
) -> core.CausalFermionSystem:
    """Push the sampled spacetime points forward to operator points.

    Every sample x becomes the local correlation operator F(x), factored
    through its eigendecomposition at relative threshold 1e-10; the
    weights become the measure weights.  The declared spin dimension is 2.
    """
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(samples) or np.any(weights <= 0):
        raise ValueError("need one positive weight per sample point")
    points = []
    N = hilbert_basis(sea).shape[0]
    for x in samples:
        F = local_correlation(sea, reg, x)
        w, V = np.linalg.eigh(F)
        keep = np.abs(w) > 1e-10 * max(np.max(np.abs(w)), 1e-300)
        n_pos = int(np.sum(w[keep] > 0))
        n_neg = int(np.sum(w[keep] < 0))
        if n_pos > 2 or n_neg > 2:
            raise core.SignatureError(
                f"local correlation operator at {x} has signature "
                f"({n_pos}, {n_neg}); the construction guarantees (<=2, <=2)"
            )
        points.append(core.OperatorPoint(N, 2, V[:, keep], w[keep]))
    measure = core.DiscreteMeasure(tuple(points), weights)
    return core.CausalFermionSystem(N, 2, measure)


def insert_states(sea: SeaState, particles=(), antiparticles=()) -> SeaState:
    """Return a new state with the given insertions appended.

    Particle coefficient vectors must be orthogonal (1e-8) to the current
    occupied-minus-removed span; anti-particle vectors must lie inside it.
    All vectors are normalized to unit length.
    """
    n_tot = sea.n_states
    n_occ = sea.n_occupied

    def _norm_rows(vs) -> np.ndarray:
        if len(vs) == 0:
            return np.zeros((0, n_tot), dtype=complex)
        arr = np.array([np.asarray(v, dtype=complex) for v in vs])
        if arr.shape[1] != n_tot:
            raise ValueError(f"coefficient vectors must have length {n_tot}")
        nrm = np.linalg.norm(arr, axis=1)
        if np.any(nrm == 0):
            raise ValueError("zero insertion vector")
        return arr / nrm[:, None]

    new_p = _norm_rows(particles)
    new_a = _norm_rows(antiparticles)
    # occupied-minus-removed span test
    removed = sea.removed
    for v in new_p:
        inside = v[:n_occ]
        if len(removed):
            inside = inside - ((v @ removed.conj().T) @ removed)[:n_occ]
        if np.linalg.norm(inside) > SPAN_TOL:
            raise ValueError("particle vector overlaps the occupied sea span")
    for v in new_a:
        outside = np.linalg.norm(v[n_occ:])
        if outside > SPAN_TOL:
            raise ValueError("anti-particle vector leaves the occupied sea span")
    return replace(
        sea,
        particles=np.vstack([sea.particles, new_p]),
        removed=np.vstack([sea.removed, new_a]),
    )


# ---------------------------------------------------------------------------
# multi-sector direct sums


@dataclass(frozen=True)
class SectorSpec:
    """Generation masses of one sector; a massless entry must be flagged
    right-handed (its summand enters via tau_reg * chi_R)."""

    masses: tuple[float, ...]
    right_handed: bool = False

    def __post_init__(self):
        if len(self.masses) == 0:
            raise ValueError("sector needs at least one generation")
        for m in self.masses:
            if m < 0:
                raise ValueError("masses must be nonnegative")
            if m == 0 and not self.right_handed:
                raise ValueError("a massless generation must be right-handed")


@dataclass(frozen=True)
class MultiSectorKernel:
    """Blockwise evaluator for a direct sum of vacuum seas.

    The chiral asymmetry factor is the identity on massive summands and
    tau_reg * chi_R on massless right-handed ones; it multiplies the
    kernel on the left.  The sectorial projection sums the generation
    blocks inside each sector.
    """

    lattice: MomentumLattice
    reg: RegularizationSpec | None
    sectors: tuple[SectorSpec, ...]
    tau_reg: float
    seas: tuple            # per (sector, generation): SeaState or None (massless)
    chi_R: np.ndarray | None

    def generation_kernel(self, i_sector: int, i_gen: int, x, y) -> np.ndarray:
        spec = self.sectors[i_sector]
        mass = spec.masses[i_gen]
        sea = self.seas[i_sector][i_gen]
        if mass == 0.0:
            base = _massless_kernel(self.lattice, self.reg, x, y)
        else:
            base = kernel_P_eps(sea, self.reg, x, y)
        if spec.right_handed and mass == 0.0:
            if self.chi_R is None:
                raise ValueError("chiral asymmetry needs the 4-spinor mode")
            return self.tau_reg * (self.chi_R @ base)
        return base

    def sector_kernel(self, i_sector: int, x, y) -> np.ndarray:
        """Sectorial projection: sum of the generation blocks."""
        spec = self.sectors[i_sector]
        s = self.lattice.gamma().spinor_dim
        out = np.zeros((s, s), dtype=complex)
        for g in range(len(spec.masses)):
            out += self.generation_kernel(i_sector, g, x, y)
        return out

    def aux_kernel(self, x, y) -> np.ndarray:
        """Direct-sum kernel: block diagonal over all generation summands."""
        s = self.lattice.gamma().spinor_dim
        blocks = []
        for i, spec in enumerate(self.sectors):
            for g in range(len(spec.masses)):
                blocks.append(self.generation_kernel(i, g, x, y))
        n = len(blocks)
        out = np.zeros((n * s, n * s), dtype=complex)
        for b, blk in enumerate(blocks):
            out[b * s : (b + 1) * s, b * s : (b + 1) * s] = blk
        return out


def _massless_kernel(lattice: MomentumLattice, reg, x, y) -> np.ndarray:
    """Vacuum kernel of a massless sea; the zero momentum mode is skipped
    (its shell split is degenerate on a finite box)."""
    gb = lattice.gamma()
    s = gb.spinor_dim
    ks = lattice.momenta()
    keep = np.linalg.norm(ks, axis=1) > 0
    ks = ks[keep]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.zeros((s, s), dtype=complex)
    vol = lattice.box_volume()
    for k in ks:
        w = float(np.linalg.norm(k))
        Hk = _hamiltonian(k, 0.0, gb)
        ev, V = np.linalg.eigh(Hk)
        neg = V[:, np.argsort(ev)[: s // 2]]
        damp = 1.0 if reg is None else np.exp(-2.0 * reg.eps * w)
        phase = np.exp(-1j * (-w) * (x[0] - y[0]) + 1j * k @ (x[1:] - y[1:]))
        out -= (damp * phase / vol) * (neg @ neg.conj().T) @ gb.signature
    return out


def direct_sum_sectors(
    lattice: MomentumLattice,
    reg: RegularizationSpec | None,
    sectors: Sequence[SectorSpec],
    tau_reg: float = 1.0,
) -> MultiSectorKernel:
    """Assemble the auxiliary multi-sector kernel evaluator."""
    if not 0.0 < tau_reg <= 1.0:
        raise ValueError("tau_reg must lie in (0, 1]")
    sectors = tuple(sectors)
    seas = []
    for spec in sectors:
        row = []
        for m in spec.masses:
            if m == 0.0:
                row.append(None)
            else:
                row.append(build_sea(replace(lattice, mass=m)))
        seas.append(tuple(row))
    gb = lattice.gamma()
    chi_R = gb.chiral_projectors()[1] if gb.gamma5 is not None else None
    return MultiSectorKernel(lattice, reg, sectors, tau_reg, tuple(seas), chi_R)


# ---------------------------------------------------------------------------
# continuum reference evaluator


def default_log_coefficient(j: int) -> float:
    """Constant companion of log|m^2 xi^2| in the j-th series term.

    Calibrated once against a direct momentum-space quadrature of the
    scalar two-point integral (spacelike branch); the fitted values are
    reproduced to machine precision by -2 log 2 - psi(j+1) - psi(j+2).
    """
    return float(-2.0 * np.log(2.0) - digamma(j + 1) - digamma(j + 2))


def continuum_T(xi, mass: float, terms: int = 8, coeffs=None) -> complex:
    """Scalar two-point reference value off the light cone.

    Evaluates the principal-value pole plus the logarithmic mass series

        -1/(8 pi^3 xi^2) + m^2/(32 pi^3) sum_j (-1)^j / (j! (j+1)!)
            (m^2 xi^2 / 4)^j (log|m^2 xi^2| + c_j
                              + i pi Theta(xi^2) sign(xi^0))

    with xi^2 the Minkowski square.  ``coeffs`` overrides the default
    c_j (see :func:`default_log_coefficient`).  Requires
    |xi^2| >= 1e-3 / m^2.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if mass <= 0:
        raise ValueError("mass must be positive")
    if terms < 1:
        raise ValueError("need at least one series term")
    xi2 = float(xi[0] ** 2 - np.dot(xi[1:], xi[1:]))
    if abs(xi2) < 1e-3 / mass**2:
        raise ValueError("xi is too close to the light cone for the series")
    out = -1.0 / (8.0 * np.pi**3 * xi2) + 0.0j
    a = mass * mass * xi2
    theta_eps = 1j * np.pi * (1.0 if xi2 > 0 else 0.0) * np.sign(xi[0])
    for j in range(terms):
        cj = default_log_coefficient(j) if coeffs is None else coeffs[j]
        base = (-1.0) ** j / (factorial(j) * factorial(j + 1)) * (a / 4.0) ** j
        out += mass**2 / (32.0 * np.pi**3) * base * (np.log(abs(a)) + cj + theta_eps)
    return complex(out)


# ---------------------------------------------------------------------------
# causal-structure sweep


def suppression_sweep(
    lattice: MomentumLattice,
    eps_list: Sequence[float],
    grid_points: int = 4,
    grid_spacing: float = 1.0,
    spin_dim: int = 2,
):
    """Mean Lagrangian by causal class for a square sample grid, per eps.

    Sample points sit on a (grid_points x grid_points) spacetime grid with
    the given spacing; unordered pairs are classified by the Minkowski
    sign of their separation (lightlike pairs count as non-spacelike).
    Returns a list of records
    (eps, mean_spacelike, mean_nonspacelike, ratio).
    """
    if lattice.mode != "1+1":
        raise ValueError("the sweep is a 1+1 experiment")
    sea = build_sea(lattice)
    pts = [
        (t * grid_spacing, s * grid_spacing)
        for t in range(grid_points)
        for s in range(grid_points)
    ]
    seps = []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            dt = pts[i][0] - pts[j][0]
            dx = pts[i][1] - pts[j][1]
            seps.append((dt, dx, dt * dt - dx * dx))
    records = []
    for eps in eps_list:
        reg = RegularizationSpec(eps)
        sp, nsp = [], []
        for dt, dx, s2 in seps:
            lam = closed_chain_eigenvalues(sea, reg, (0.0, 0.0), (-dt, -dx))
            val = padded_lagrangian(lam, spin_dim)
            (sp if s2 < 0 else nsp).append(val)
        ms, mn = float(np.mean(sp)), float(np.mean(nsp))
        records.append(
            {
                "eps": float(eps),
                "mean_spacelike": ms,
                "mean_nonspacelike": mn,
                "ratio": ms / mn,
            }
        )
    return records
