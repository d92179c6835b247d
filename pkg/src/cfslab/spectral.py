"""Dense complex linear algebra kernel.

Everything downstream reduces to spectra of small complex matrices: the
eigenvalues of non-normal operator products (with algebraic multiplicity),
Hermitian eigendecompositions, the spectral weight (sum of absolute values
of eigenvalues) and signature counting with explicit tolerances.

All routines are pure functions of their array arguments and are safe to
call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EigenSpectrum",
    "SpectralError",
    "eigenvalues_dense",
    "spectral_weight",
    "signature_counts",
    "charpoly_roots",
    "multiset_deviation",
]

#: default relative residual bound for the dense eigensolver
TAU_EIG = 1e-10
#: default relative threshold separating "zero" from signed eigenvalues
TAU_RANK = 1e-10
#: relative Hermiticity tolerance
TAU_HERM = 1e-12
#: largest dimension accepted by the dense solver
DIM_CAP = 256


class SpectralError(ValueError):
    """Raised on contract violations (shape, symmetry, convergence)."""


@dataclass(frozen=True)
class EigenSpectrum:
    """All eigenvalues of a square matrix, with a backward-error certificate.

    ``values`` holds the full multiset (algebraic multiplicity preserved),
    sorted by (real part, imaginary part) so output is deterministic.
    ``residual`` is max_i ||M v_i - lambda_i v_i|| / ||M|| over the computed
    eigenpairs; it certifies the solve a posteriori.
    """

    values: np.ndarray
    residual: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))

    @property
    def dim(self) -> int:
        return len(self.values)


def _as_square(M) -> np.ndarray:
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {A.shape}")
    return A


def _sort_complex(v: np.ndarray) -> np.ndarray:
    order = np.lexsort((v.imag, v.real))
    return v[order]


def eigenvalues_dense(M, tol: float = TAU_EIG) -> EigenSpectrum:
    """Eigenvalues of a dense complex matrix, multiplicity included.

    Uses the LAPACK nonsymmetric solver (Hessenberg + shifted QR) and
    reports the worst relative eigenpair residual.  Raises if the matrix
    exceeds the dimension cap, if the iteration fails, or if the residual
    exceeds ``tol`` relative to ``||M||``.
    """
    A = _as_square(M)
    n = A.shape[0]
    if n > DIM_CAP:
        raise SpectralError(f"dimension {n} exceeds the dense-solver cap {DIM_CAP}")
    if n == 0:
        return EigenSpectrum(np.empty(0, dtype=complex), 0.0)
    try:
        vals, vecs = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SpectralError(f"eigen iteration did not converge: {exc}") from exc
    norm = np.linalg.norm(A, 2)
    if norm == 0.0:
        return EigenSpectrum(np.zeros(n, dtype=complex), 0.0)
    res = np.linalg.norm(A @ vecs - vecs * vals, axis=0)
    vnorm = np.linalg.norm(vecs, axis=0)
    residual = float(np.max(res / (vnorm * norm)))
    if residual > tol:
        raise SpectralError(
            f"eigen residual {residual:.3e} exceeds tolerance {tol:.3e}"
        )
    return EigenSpectrum(_sort_complex(vals), residual)


def spectral_weight(spectrum) -> float:
    """Sum of the absolute values of the eigenvalues."""
    if isinstance(spectrum, EigenSpectrum):
        vals = spectrum.values
    else:
        vals = np.asarray(spectrum, dtype=complex)
    return float(np.sum(np.abs(vals)))


def signature_counts(M, tau_rank: float = TAU_RANK) -> tuple[int, int]:
    """Count eigenvalues above/below the relative rank threshold.

    The input must be Hermitian to within ``TAU_HERM * ||M||``.  Returns
    ``(n_pos, n_neg)`` with eigenvalues in ``[-tau, tau] * ||M||`` treated
    as zero.
    """
    A = _as_square(M)
    if A.shape[0] == 0:
        return (0, 0)
    norm = np.linalg.norm(A, 2)
    if norm == 0.0:
        return (0, 0)
    herm_defect = np.linalg.norm(A - A.conj().T, 2)
    if herm_defect > TAU_HERM * norm:
        raise SpectralError(
            f"matrix is not Hermitian: defect {herm_defect:.3e} > "
            f"{TAU_HERM:.0e} * ||M||"
        )
    w = np.linalg.eigvalsh((A + A.conj().T) / 2.0)
    thresh = tau_rank * norm
    n_pos = int(np.sum(w > thresh))
    n_neg = int(np.sum(w < -thresh))
    return (n_pos, n_neg)


def multiset_deviation(a, b) -> float:
    """Largest matched distance between two eigenvalue multisets.

    Uses an optimal assignment (Hungarian method on |a_i - b_j|), which is
    stable where lexicographic sorting is not: conjugate pairs with equal
    real parts, clusters split by roundoff.
    """
    from scipy.optimize import linear_sum_assignment

    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if a.shape != b.shape:
        raise SpectralError("multisets must have equal cardinality")
    if len(a) == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def charpoly_roots(M) -> np.ndarray:
    """Roots of det(M - lambda I) via an independent route.

    The characteristic polynomial coefficients are produced by the
    Faddeev-LeVerrier trace recursion and the roots by a companion-matrix
    solve.  This never diagonalizes ``M`` itself, so it serves as an
    independent cross-check for :func:`eigenvalues_dense`.
    """
    A = _as_square(M)
    n = A.shape[0]
    if n == 0:
        return np.empty(0, dtype=complex)
    # c[0] = 1 leading coefficient; c[k] from the recursion
    coeffs = np.empty(n + 1, dtype=complex)
    coeffs[0] = 1.0
    Mk = np.eye(n, dtype=complex)
    for k in range(1, n + 1):
        Mk = A @ Mk
        ck = -np.trace(Mk) / k
        coeffs[k] = ck
        Mk += ck * np.eye(n, dtype=complex)
    return _sort_complex(np.roots(coeffs))
