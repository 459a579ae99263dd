"""Truncated Fock-basis states and operators.

Coherent states follow the convention

    <alpha|beta> = exp(-|alpha|^2/2 - |beta|^2/2 + conj(alpha) beta),

so that |<alpha|beta>|^2 = exp(-|alpha - beta|^2). Factorials and powers are
evaluated in log-space, which keeps dimensions up to a few hundred finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaln

TOL_NORM = 1e-10
TOL_HERM = 1e-10
TOL_PSD = 1e-10
TOL_EIG = 1e-10


class TruncationError(ValueError):
    """Raised when the Fock cutoff discards more weight than allowed."""

    def __init__(self, message: str, tail: float):
        super().__init__(f"{message} (tail mass {tail:.3e})")
        self.tail = tail


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class FockVector:
    """Coefficients c_0..c_{d-1} of a (possibly unnormalized) state.

    ``tail`` records the norm lost to truncation, when known.
    """

    coeffs: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        if coeffs.ndim != 1 or coeffs.size < 1:
            raise ValueError("FockVector needs a non-empty 1-D coefficient array")
        object.__setattr__(self, "coeffs", _frozen(coeffs))

    @property
    def dim(self) -> int:
        return self.coeffs.size

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.coeffs, self.coeffs).real)

    def is_normalized(self, tol: float = TOL_NORM) -> bool:
        return abs(self.norm_sq - 1.0) <= tol

    def normalized(self) -> FockVector:
        norm = math.sqrt(self.norm_sq)
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return FockVector(self.coeffs / norm, self.tail)

    def padded(self, d: int) -> FockVector:
        """Embed into dimension ``d`` (>= current support)."""
        if d < self.dim:
            if np.any(self.coeffs[d:] != 0):
                raise TruncationError(
                    f"vector has weight beyond cutoff d={d}",
                    float(np.sum(np.abs(self.coeffs[d:]) ** 2)),
                )
            return FockVector(self.coeffs[:d], self.tail)
        out = np.zeros(d, dtype=complex)
        out[: self.dim] = self.coeffs
        return FockVector(out, self.tail)

    def support(self) -> int:
        """One past the index of the last nonzero coefficient."""
        nz = np.flatnonzero(self.coeffs)
        return int(nz[-1]) + 1 if nz.size else 1

    def __mul__(self, scalar: complex) -> FockVector:
        return FockVector(self.coeffs * scalar, self.tail * abs(scalar) ** 2)

    __rmul__ = __mul__

    @classmethod
    def basis(cls, n: int, d: int) -> FockVector:
        coeffs = np.zeros(d, dtype=complex)
        coeffs[n] = 1.0
        return cls(coeffs)


@dataclass(frozen=True)
class HermitianOperator:
    """Dense d x d Hermitian matrix; ``tail`` carries any truncation budget."""

    entries: np.ndarray
    tail: float = 0.0
    tol: float = field(default=TOL_HERM, repr=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {entries.shape}")
        asym = hermiticity_error(entries)
        if asym > self.tol:
            raise ValueError(f"matrix is not Hermitian: max asymmetry {asym:.3e}")
        # store the exactly Hermitian part
        object.__setattr__(self, "entries", _frozen(0.5 * (entries + entries.conj().T)))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def expectation(self, v: FockVector) -> float:
        c = v.padded(self.dim).coeffs
        return float(np.vdot(c, self.entries @ c).real)


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: tuple[FockVector, ...]

    def top(self) -> tuple[float, FockVector]:
        return float(self.eigenvalues[0]), self.eigenvectors[0]

    def reconstruct(self) -> np.ndarray:
        vecs = np.stack([v.coeffs for v in self.eigenvectors], axis=1)
        return (vecs * self.eigenvalues) @ vecs.conj().T


def hermiticity_error(matrix: np.ndarray) -> float:
    matrix = np.asarray(matrix)
    return float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0


def _log_sqrt_factorial(d: int) -> np.ndarray:
    return 0.5 * gammaln(np.arange(d) + 1.0)


def coherent_tail(alpha: complex, d: int) -> float:
    """Norm of |alpha> beyond the first d Fock levels, P[Poisson(|alpha|^2) >= d]."""
    x = abs(alpha) ** 2
    return float(gammainc(d, x)) if x > 0 else 0.0


def coherent_matrix(alphas, d: int) -> np.ndarray:
    """Rows are the truncated expansions <n|alpha_k>, shape (len(alphas), d)."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    n = np.arange(d)
    r = np.abs(alphas)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_r = np.log(r)
        log_mag = -0.5 * r**2 + n * log_r - _log_sqrt_factorial(d)
    # 0**0 = 1 for the vacuum component
    log_mag[:, 0] = -0.5 * r[:, 0] ** 2
    phase = np.exp(1j * n * np.angle(alphas)[:, None])
    return np.exp(log_mag) * phase


def coherent_vector(alpha: complex, d: int, tol: float | None = None) -> FockVector:
    """Truncated coherent state |alpha> in dimension d.

    Raises TruncationError when ``tol`` is given and the discarded norm
    exceeds it. A safe cutoff is roughly ``|alpha|^2 + 6|alpha| + 10``.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    tail = coherent_tail(alpha, d)
    if tol is not None and tail > tol:
        raise TruncationError(f"coherent state alpha={alpha} does not fit in d={d}", tail)
    return FockVector(coherent_matrix([alpha], d)[0], tail)


def recommended_dim(alpha: complex, tol: float = 1e-12) -> int:
    """Smallest cutoff with coherent tail below ``tol``, never below |a|^2 + 6|a| + 10."""
    a = abs(alpha)
    d = math.ceil(a * a + 6 * a + 10)
    while coherent_tail(alpha, d) >= tol:
        d += 1
    return d


def coherent_overlap(alpha, beta):
    """Exact <alpha|beta>, vectorized over numpy inputs."""
    alpha = np.asarray(alpha, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    return np.exp(-0.5 * np.abs(alpha) ** 2 - 0.5 * np.abs(beta) ** 2 + np.conj(alpha) * beta)


def overlap(v: FockVector, w: FockVector) -> complex:
    """Inner product <v|w>, antilinear in the first argument."""
    if v.dim != w.dim:
        raise ValueError(f"dimension mismatch: {v.dim} vs {w.dim}")
    return complex(np.vdot(v.coeffs, w.coeffs))


def eig_hermitian(H: HermitianOperator) -> SpectralDecomposition:
    """Full eigendecomposition with eigenvalues in descending order.

    Degenerate eigenvalues keep LAPACK's ordering of the eigenvectors.
    """
    if not isinstance(H, HermitianOperator):
        H = HermitianOperator(H)
    vals, vecs = np.linalg.eigh(H.entries)
    order = np.arange(vals.size)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    return SpectralDecomposition(vals, tuple(FockVector(vecs[:, k]) for k in range(vals.size)))


def psd_eigenvalues(H: HermitianOperator | np.ndarray, tol: float = TOL_PSD) -> np.ndarray:
    """Eigenvalues (descending) of a PSD operator, small negatives clamped to zero."""
    entries = H.entries if isinstance(H, HermitianOperator) else HermitianOperator(H).entries
    vals = np.linalg.eigvalsh(entries)[::-1]
    if vals.size and vals[-1] < -tol:
        raise ValueError(f"operator is not positive semidefinite: min eigenvalue {vals[-1]:.3e}")
    return np.clip(vals, 0.0, None)


def schatten_norm_from_eigenvalues(vals: np.ndarray, p: float) -> float:
    if p < 1:
        raise ValueError(f"Schatten p-norm needs p >= 1, got {p}")
    vals = np.asarray(vals, dtype=float)
    top = float(vals.max()) if vals.size else 0.0
    if math.isinf(p) or top == 0.0:
        return top
    if p == 1:
        return float(vals.sum())
    # scale by the top eigenvalue so large p cannot underflow
    return top * float(np.sum((vals / top) ** p)) ** (1.0 / p)


def schatten_p_norm(H: HermitianOperator | np.ndarray, p: float, tol: float = TOL_PSD) -> float:
    """(tr H^p)^(1/p) for PSD ``H``; p = inf gives the top eigenvalue."""
    if p < 1:
        raise ValueError(f"Schatten p-norm needs p >= 1, got {p}")
    return schatten_norm_from_eigenvalues(psd_eigenvalues(H, tol), p)
