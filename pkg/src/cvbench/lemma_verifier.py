"""Numerical checks of the p-norm inequality behind the benchmark.

For every state phi and p >= 1,

    ||A_phi||_p <= (1 + lambda) / [(2 + lambda)^p - 1]^(1/p) * ||A_phi||_1,

and the p = inf case gives the benchmark. One route to it rewrites tr A^p and
(tr A)^p as expectations of two p-mode operators B and C in |phi>^(x p).
Both are diagonal in the Fock basis of the discrete-Fourier-rotated modes
b_k = sum_j omega^(jk) a_j / sqrt(p), omega = exp(2 pi i / p), with B
carrying weights 1/(2 + lambda - omega^k) and C carrying 1/(1 + lambda).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import convolve
from scipy.special import gammaln

from .classical_channel import a_phi_trace, benchmark_bound, build_A_phi
from .fock_space import FockVector, coherent_matrix, coherent_overlap, hermiticity_error, psd_eigenvalues
from .prior import RNG_ALGORITHM, GaussianPrior, draw_alpha, map_chunks, quadrature_grid

TOL_LEMMA = 1e-10
MAX_MULTIMODE_DIM = 10_000
MAX_ROTATION_SIZE = 5_000_000


@dataclass(frozen=True)
class LemmaCheckResult:
    phi_id: str
    lam: float
    p: float
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {"phi_id": self.phi_id, "lambda": self.lam, "p": self.p, "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack}


@dataclass(frozen=True)
class MultiModeOperator:
    """Dense operator on p modes, each truncated to ``d_mode`` levels.

    Basis index of |n_1 ... n_p> is the row-major flattening of (n_1, ..., n_p).
    """

    entries: np.ndarray
    p: int
    d_mode: int

    @property
    def dim(self) -> int:
        return self.d_mode**self.p

    def expectation_product(self, phi: FockVector) -> complex:
        """<phi|^(x p) X |phi>^(x p)."""
        c = phi.padded(self.d_mode).coeffs
        state = c
        for _ in range(self.p - 1):
            state = np.kron(state, c)
        return complex(np.vdot(state, self.entries @ state))


@dataclass(frozen=True)
class TraceIdentityResult:
    p: int
    matrix_value: float
    mc_estimate: float
    mc_stderr: float
    imag_estimate: float
    imag_stderr: float
    n: int
    seed: int

    @property
    def agrees(self) -> bool:
        return abs(self.matrix_value - self.mc_estimate) <= 3 * self.mc_stderr

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "matrix_value": self.matrix_value,
            "mc_estimate": self.mc_estimate,
            "mc_stderr": self.mc_stderr,
            "imag_estimate": self.imag_estimate,
            "imag_stderr": self.imag_stderr,
            "n": self.n,
            "seed": self.seed,
            "rng": RNG_ALGORITHM,
            "agrees_3sigma": self.agrees,
        }


@dataclass(frozen=True)
class ChainResult:
    """The three terms of tr A^p <= bound <= coefficient * (tr A)^p.

    ``rotated_value`` re-evaluates the first term from the Fourier-mode
    diagonal form of B and should equal ``first``.
    """

    p: int
    first: float
    middle: float
    last: float
    rotated_value: complex

    def ordered(self, tol: float = TOL_LEMMA) -> bool:
        scale = max(abs(self.last), 1.0)
        return self.first <= self.middle + tol * scale and self.middle <= self.last + tol * scale


def lemma_rhs_coefficient(prior: GaussianPrior, p: float) -> float:
    """(1 + lambda) / [(2 + lambda)^p - 1]^(1/p); the p -> inf limit is the benchmark."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if math.isinf(p):
        return benchmark_bound(prior)
    lam = prior.lam
    q = 2.0 + lam
    # (q^p - 1)^(1/p) = q (1 - q^-p)^(1/p)
    return (1.0 + lam) / (q * math.exp(math.log1p(-(q ** -p)) / p))


def _norms(phi: FockVector, prior: GaussianPrior, d: int | None):
    A = build_A_phi(phi, prior, d)
    return psd_eigenvalues(A)


def _pnorm(vals: np.ndarray, p: float) -> float:
    top = float(vals[0])
    if math.isinf(p) or top == 0.0:
        return top
    return top * float(np.sum((vals / top) ** p)) ** (1.0 / p)


def verify_lemma(
    phi: FockVector, prior: GaussianPrior, p_list: Iterable[float], d: int | None = None, phi_id: str = "phi"
) -> list[LemmaCheckResult]:
    if phi.norm_sq == 0:
        raise ValueError("phi must be nonzero")
    vals = _norms(phi, prior, d)
    trace = float(vals.sum())
    return [
        LemmaCheckResult(phi_id, prior.lam, float(p), _pnorm(vals, p), lemma_rhs_coefficient(prior, p) * trace)
        for p in p_list
    ]


def random_state(dim: int, rng: np.random.Generator) -> FockVector:
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return FockVector(z / np.linalg.norm(z))


def lemma_suite(
    lambdas: Sequence[float],
    trials: int,
    dim: int,
    p_list: Sequence[float],
    seed: int,
    threads: int = 1,
) -> list[LemmaCheckResult]:
    """Random normalized states (one stream per trial) checked for every lambda and p."""
    priors = [GaussianPrior(lam) for lam in lambdas]

    def one(trial: int) -> list[LemmaCheckResult]:
        rng = np.random.Generator(np.random.Philox(key=seed).jumped(trial))
        phi = random_state(dim, rng)
        out = []
        for prior in priors:
            out.extend(verify_lemma(phi, prior, p_list, phi_id=f"random-{trial}"))
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(one, range(trials)))
    else:
        batches = [one(t) for t in range(trials)]
    return [r for batch in batches for r in batch]


# -- trace identity by Monte Carlo ----------------------------------------------


def trace_identity_mc(
    phi: FockVector, prior: GaussianPrior, p: int, n: int, seed: int, threads: int = 1
) -> TraceIdentityResult:
    """Compare tr A_phi^p with its p-fold phase-space integral.

    The integrand is prod_i |<phi|alpha_i>|^2 times the cyclic overlap
    product <alpha_1|alpha_2> ... <alpha_p|alpha_1>, with alpha_i drawn
    independently from the prior.
    """
    if p not in (2, 3):
        raise ValueError("trace identity check supports p in {2, 3}")
    vals = _norms(phi, prior, None)
    matrix_value = float(np.sum(vals**p))
    s = phi.support()
    c = phi.coeffs[:s]

    def run(rng, size):
        alphas = [draw_alpha(rng, prior, size) for _ in range(p)]
        weight = np.ones(size)
        for a in alphas:
            weight *= np.abs(coherent_matrix(a, s) @ c.conj()) ** 2
        cyc = np.ones(size, dtype=complex)
        for i in range(p):
            cyc *= coherent_overlap(alphas[i], alphas[(i + 1) % p])
        return weight * cyc

    samples = np.concatenate(list(map_chunks(run, n, seed, threads)))
    rt = math.sqrt(n)
    stderr = lambda x: float(np.std(x, ddof=1) / rt) if n > 1 else 0.0
    return TraceIdentityResult(
        p,
        matrix_value,
        float(samples.real.mean()),
        stderr(samples.real),
        float(samples.imag.mean()),
        stderr(samples.imag),
        n,
        seed,
    )


# -- the operators B and C -------------------------------------------------------


def _grid_for(prior: GaussianPrior, d_mode: int, radial_order: int | None, angular_order: int | None):
    return quadrature_grid(prior, radial_order or 60, angular_order or max(32, 4 * d_mode + 8))


def single_mode_C(
    prior: GaussianPrior, d_mode: int, radial_order: int | None = None, angular_order: int | None = None
) -> np.ndarray:
    """Quadrature of integral p(alpha) |alpha><alpha| on d_mode levels."""
    grid = _grid_for(prior, d_mode, radial_order, angular_order)
    coh = coherent_matrix(grid.nodes, d_mode)
    return np.einsum("k,km,kn->mn", grid.weights, coh, coh.conj())


def thermal_diagonal(prior: GaussianPrior, d_mode: int) -> np.ndarray:
    """(lambda / (1 + lambda)) (1 / (1 + lambda))^n."""
    lam = prior.lam
    n = np.arange(d_mode)
    return lam / (1.0 + lam) * np.exp(-n * math.log1p(lam))


def _guard(p: int, d_mode: int):
    if p < 1 or d_mode < 1:
        raise ValueError("p and d_mode must be >= 1")
    if d_mode**p > MAX_MULTIMODE_DIM:
        raise ValueError(f"d_mode^p = {d_mode ** p} exceeds the multimode limit {MAX_MULTIMODE_DIM}")


def build_C(prior: GaussianPrior, p: int, d_mode: int, **grid) -> MultiModeOperator:
    """p-fold tensor power of the quadrature-built single-mode C."""
    _guard(p, d_mode)
    single = single_mode_C(prior, d_mode, **grid)
    out = single
    for _ in range(p - 1):
        out = np.kron(out, single)
    return MultiModeOperator(out, p, d_mode)


def build_B(prior: GaussianPrior, d_mode: int, p: int = 2, radial_order: int = 60, angular_order: int = 48) -> MultiModeOperator:
    """Two-mode B by tensor-grid quadrature.

    B = integral p(a1) p(a2) |<a1|a2>|^2 |a1><a1| (x) |a2><a2|. Only p = 2 is
    supported: for p >= 3 the cyclic overlap product is complex and B is no
    longer Hermitian, and the dense p-fold grid becomes impractical.
    """
    if p != 2:
        raise ValueError("build_B supports p = 2 only")
    _guard(p, d_mode)
    grid = quadrature_grid(prior, radial_order, angular_order)
    a, w = grid.nodes, grid.weights
    coh = coherent_matrix(a, d_mode)
    proj = np.einsum("km,kn->kmn", coh, coh.conj()).reshape(a.size, -1)
    kernel = np.exp(-np.abs(a[:, None] - a[None, :]) ** 2) * w[:, None] * w[None, :]
    inner = (kernel @ proj).reshape(a.size, d_mode, d_mode)
    outer = proj.reshape(a.size, d_mode, d_mode)
    B = np.einsum("kac,kbd->abcd", outer, inner).reshape(d_mode * d_mode, d_mode * d_mode)
    return MultiModeOperator(B, 2, d_mode)


def fourier_eigenvalues(p: int) -> np.ndarray:
    """d_k = omega^k, the eigenvalues of the cyclic shift on p modes."""
    return np.exp(2j * np.pi * np.arange(p) / p)


def b_prefactor(prior: GaussianPrior, p: int) -> float:
    lam = prior.lam
    return lam**p / ((2.0 + lam) ** p - 1.0)


def b_diagonal_spectrum(prior: GaussianPrior, max_photons: int) -> np.ndarray:
    """Two-mode B eigenvalues with n_+ + n_- <= max_photons, descending.

    d = +1 and d = -1 give the mode weights 1/(1 + lambda) and 1/(3 + lambda).
    """
    lam = prior.lam
    pref = b_prefactor(prior, 2)
    vals = [
        pref * (1.0 + lam) ** -a * (3.0 + lam) ** -b
        for a in range(max_photons + 1)
        for b in range(max_photons + 1 - a)
    ]
    return np.sort(vals)[::-1]


def photon_sector(d_mode: int, p: int, max_photons: int) -> np.ndarray:
    """Flat indices of product Fock states with total photon number <= max_photons."""
    grids = np.indices((d_mode,) * p).reshape(p, -1)
    return np.flatnonzero(grids.sum(axis=0) <= max_photons)


@dataclass(frozen=True)
class OperatorCheck:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance

    def to_dict(self) -> dict:
        return {"name": self.name, "error": self.error, "tolerance": self.tolerance, "passed": self.passed}


def check_C(prior: GaussianPrior, d_mode: int, phis: Sequence[FockVector], tol: float = 1e-8) -> list[OperatorCheck]:
    single = single_mode_C(prior, d_mode)
    diag_err = float(np.max(np.abs(np.diag(single).real - thermal_diagonal(prior, d_mode))))
    off_err = float(np.max(np.abs(single - np.diag(np.diag(single)))))
    C = build_C(prior, 2, d_mode)
    ident = max(
        abs(C.expectation_product(phi) - a_phi_trace(phi, prior) ** 2) for phi in phis
    )
    return [
        OperatorCheck("C_single_mode_diagonal", diag_err, tol),
        OperatorCheck("C_single_mode_offdiagonal", off_err, tol),
        OperatorCheck("C_tensor_trace_identity", float(ident), tol),
    ]


def check_B(
    prior: GaussianPrior,
    d_mode: int,
    phis: Sequence[FockVector],
    trace_tol: float = 1e-5,
    spectrum_rtol: float = 1e-4,
    commutator_tol: float = 1e-6,
) -> list[OperatorCheck]:
    B = build_B(prior, d_mode)
    C = build_C(prior, 2, d_mode)
    trace_err = 0.0
    for phi in phis:
        vals = _norms(phi, prior, None)
        trace_err = max(trace_err, abs(B.expectation_product(phi) - float(np.sum(vals**2))))
    # B conserves total photon number, so the sector below the cutoff is exact
    idx = photon_sector(d_mode, 2, d_mode - 1)
    block = B.entries[np.ix_(idx, idx)]
    numeric = np.sort(np.linalg.eigvalsh(0.5 * (block + block.conj().T)))[::-1]
    analytic = b_diagonal_spectrum(prior, d_mode - 1)
    spec_err = float(np.max(np.abs(numeric - analytic) / analytic))
    comm = B.entries @ C.entries - C.entries @ B.entries
    return [
        OperatorCheck("B_hermiticity", hermiticity_error(B.entries), commutator_tol),
        OperatorCheck("B_trace_identity", float(trace_err), trace_tol),
        OperatorCheck("B_spectrum_relative", spec_err, spectrum_rtol),
        OperatorCheck("B_C_commutator", float(np.max(np.abs(comm))), commutator_tol),
    ]


# -- Fourier-mode expansion of |phi>^(x p) --------------------------------------


def _times_linear(poly: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Multiply a p-variable polynomial by sum_k coeffs[k] z_k (degree grows along each axis)."""
    p = poly.ndim
    out = np.zeros(tuple(s + 1 for s in poly.shape), dtype=complex)
    for k in range(p):
        dst = tuple(slice(1, None) if ax == k else slice(0, poly.shape[ax]) for ax in range(p))
        out[dst] += coeffs[k] * poly
    return out


def fourier_coefficients(phi: FockVector, p: int) -> np.ndarray:
    """Coefficients of |phi>^(x p) in the Fock basis of the Fourier modes.

    Array axis k indexes the photon number of b_k. Passive rotations conserve
    the total photon number, so the expansion is exact for finite support.
    """
    s = phi.support()
    size = (p * (s - 1) + 1) ** p
    if size > MAX_ROTATION_SIZE:
        raise ValueError(f"Fourier expansion needs {size} coefficients, limit {MAX_ROTATION_SIZE}")
    c = phi.coeffs[:s]
    F = np.exp(2j * np.pi * np.outer(np.arange(p), np.arange(p)) / p) / math.sqrt(p)
    inv_sqrt_fact = np.exp(-0.5 * gammaln(np.arange(s) + 1.0))
    total = np.ones((1,) * p, dtype=complex)
    for j in range(p):
        # a_j^dag = sum_k F[k, j] b_k^dag
        power = np.ones((1,) * p, dtype=complex)
        factor = np.zeros((s,) * p, dtype=complex)
        for n in range(s):
            if n:
                power = _times_linear(power, F[:, j])
            factor[tuple(slice(0, dim) for dim in power.shape)] += c[n] * inv_sqrt_fact[n] * power
        total = convolve(total, factor, method="direct") if total.size > 1 else factor * total.flat[0]
    m = np.indices(total.shape)
    log_fact = sum(gammaln(m[k] + 1.0) for k in range(p))
    return total * np.exp(0.5 * log_fact)


def scalar_chain_check(phi: FockVector, prior: GaussianPrior, p: int, d: int | None = None) -> ChainResult:
    """tr A^p, the modulus bound, and the C-side bound for one state.

    The middle term replaces each B weight 1/(2 + lambda - d_k) by its
    modulus; the last term uses |d_k| = 1 to reach 1/(1 + lambda).
    """
    if p < 1 or int(p) != p:
        raise ValueError("p must be a positive integer")
    p = int(p)
    lam = prior.lam
    vals = _norms(phi, prior, d)
    first = float(np.sum(vals**p))
    trace = float(vals.sum())
    last = (1.0 + lam) ** p / ((2.0 + lam) ** p - 1.0) * trace**p
    coeffs = fourier_coefficients(phi, p)
    weights = 1.0 / (2.0 + lam - fourier_eigenvalues(p))
    m = np.indices(coeffs.shape)
    diag = np.ones(coeffs.shape, dtype=complex)
    for k in range(p):
        diag *= weights[k] ** m[k]
    prob = np.abs(coeffs) ** 2
    pref = b_prefactor(prior, p)
    rotated = complex(pref * np.sum(diag * prob))
    middle = float(pref * np.sum(np.abs(diag) * prob))
    return ChainResult(p, first, middle, last, rotated)
