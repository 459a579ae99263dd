"""Measure-and-prepare strategies for Gaussian-distributed coherent states.

A rank-one POVM element |phi><phi| contributes at most the top eigenvalue of

    A_phi = integral d^2alpha p(alpha) |<alpha|phi>|^2 |alpha><alpha|

to the average fidelity, and the sum of these top eigenvalues over a complete
POVM never exceeds (1 + lambda) / (2 + lambda). Heterodyne detection followed
by repreparation of |g beta> with g = 1/(1 + lambda) reaches that value.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import gammaln

from .fock_space import (
    TOL_NORM,
    FockVector,
    HermitianOperator,
    TruncationError,
    coherent_matrix,
    coherent_tail,
    eig_hermitian,
    psd_eigenvalues,
    schatten_norm_from_eigenvalues,
)
from .prior import RNG_ALGORITHM, GaussianPrior, _Flat, draw_alpha, map_chunks

TOL_POVM = 1e-8
VERDICT_ATOL = 1e-12
SCHEMA_VERSION = 1


class Verdict(str, enum.Enum):
    BELOW_CLASSICAL_LIMIT = "BELOW_CLASSICAL_LIMIT"
    AT_LIMIT = "AT_LIMIT"
    QUANTUM = "QUANTUM"


def verdict_for(value: float, stderr: float, benchmark: float) -> Verdict:
    """Compare against the benchmark at 3 standard errors.

    A floor of 1e-12 absorbs rounding in closed-form values.
    """
    resolution = max(3.0 * stderr, VERDICT_ATOL)
    if value - resolution > benchmark:
        return Verdict.QUANTUM
    if abs(value - benchmark) <= resolution:
        return Verdict.AT_LIMIT
    return Verdict.BELOW_CLASSICAL_LIMIT


@dataclass(frozen=True)
class FidelityReport:
    value: float
    stderr: float
    benchmark: float
    verdict: Verdict
    metadata: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def make(cls, value: float, stderr: float, prior, **metadata) -> FidelityReport:
        bench = benchmark_bound(prior)
        lam = "flat" if isinstance(prior, _Flat) else prior.lam
        metadata = {"lambda": lam, **metadata}
        return cls(float(value), float(stderr), bench, verdict_for(value, stderr, bench), metadata)

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "benchmark": self.benchmark,
            "verdict": self.verdict.value,
            "metadata": dict(self.metadata),
        }


def benchmark_bound(prior: GaussianPrior | _Flat) -> float:
    """Best classical average fidelity, (1 + lambda)/(2 + lambda); 1/2 when flat."""
    if isinstance(prior, _Flat):
        return 0.5
    if not isinstance(prior, GaussianPrior):
        prior = GaussianPrior(float(prior))
    lam = prior.lam
    return (1.0 + lam) / (2.0 + lam)


# -- A_phi -------------------------------------------------------------------


def a_phi_trace(phi: FockVector, prior: GaussianPrior) -> float:
    """Untruncated tr A_phi = sum_n |c_n|^2 lambda / (1 + lambda)^(n + 1)."""
    lam = prior.lam
    n = np.arange(phi.dim)
    return float(np.sum(np.abs(phi.coeffs) ** 2 * lam * np.exp(-(n + 1) * math.log1p(lam))))


def a_dimension(support: int, prior: GaussianPrior, rel_tol: float = 1e-15, max_dim: int = 1024) -> int:
    """Cutoff keeping the worst-case relative trace loss of A_phi below rel_tol.

    The slowest-decaying element with the given support is the Fock state
    |support - 1>, whose A-diagonal is lambda C(s-1+m, m) / (2+lambda)^(s+m).
    """
    s = support - 1
    log_q = math.log(2.0 + prior.lam)
    m = np.arange(max_dim)
    log_terms = gammaln(s + m + 1) - gammaln(m + 1) - (m + s + 1) * log_q
    terms = np.exp(log_terms - log_terms.max())
    tails = np.cumsum(terms[::-1])[::-1] / terms.sum()
    ok = np.flatnonzero(tails < rel_tol)
    if not ok.size:
        raise TruncationError(f"no cutoff below {max_dim} reaches the requested accuracy", float(tails[-1]))
    return max(int(ok[0]), support)


def build_A_phi(phi: FockVector, prior: GaussianPrior, d: int | None = None) -> HermitianOperator:
    """A_phi in the first ``d`` Fock levels, from its closed-form moments.

    <m|A|n> = lambda sum_L conj(c_{L-m}) c_{L-n} L! / sqrt((L-m)! m! (L-n)! n!) / (2+lambda)^(L+1).
    The result carries ``tail`` = untruncated trace minus truncated trace.
    """
    support = phi.support()
    if d is None:
        d = a_dimension(support, prior)
    if support > d:
        raise TruncationError(f"phi has weight beyond the cutoff d={d}", float(np.sum(np.abs(phi.coeffs[d:]) ** 2)))
    c = phi.coeffs[:support]
    lam = prior.lam
    L = np.arange(d + support - 1)[:, None]
    m = np.arange(d)[None, :]
    j = L - m
    valid = (j >= 0) & (j < support)
    jj = np.where(valid, j, 0)
    log_mag = 0.5 * (
        math.log(lam) + gammaln(L + 1) - gammaln(jj + 1) - gammaln(m + 1) - (L + 1) * math.log(2.0 + lam)
    )
    V = np.where(valid, np.conj(c[jj]) * np.exp(np.where(valid, log_mag, -np.inf)), 0.0)
    A = V.T @ V.conj()
    tail = max(a_phi_trace(phi, prior) - float(np.trace(A).real), 0.0)
    return HermitianOperator(A, tail=tail)


def build_A_element(element: np.ndarray, prior: GaussianPrior, d: int | None = None) -> HermitianOperator:
    """A for a general PSD POVM element, as the sum over its rank-one pieces."""
    element = HermitianOperator(element)
    vals = psd_eigenvalues(element)
    _, vecs = np.linalg.eigh(element.entries)
    vecs = vecs[:, ::-1]
    if d is None:
        d = a_dimension(element.dim, prior)
    total = np.zeros((d, d), dtype=complex)
    tail = 0.0
    for k, val in enumerate(vals):
        if val > 0:
            A = build_A_phi(FockVector(math.sqrt(val) * vecs[:, k]), prior, d)
            total += A.entries
            tail += A.tail
    return HermitianOperator(total, tail=tail)


def optimal_reconstruction(A: HermitianOperator) -> tuple[FockVector, float]:
    """Top eigenvector of A and its eigenvalue, the best achievable <chi|A|chi>."""
    value, chi = eig_hermitian(A).top()
    return chi, max(value, 0.0)


# -- strategies ---------------------------------------------------------------


@dataclass(frozen=True)
class PovmEnsemble:
    """Rank-one POVM {|phi_y><phi_y|} on the first ``dim`` Fock levels."""

    vectors: tuple[FockVector, ...]
    tol: float = field(default=TOL_POVM, repr=False)

    def __post_init__(self):
        vectors = tuple(v if isinstance(v, FockVector) else FockVector(v) for v in self.vectors)
        if not vectors:
            raise ValueError("POVM needs at least one element")
        dims = {v.dim for v in vectors}
        if len(dims) != 1:
            raise ValueError(f"POVM vectors have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "vectors", vectors)
        err = self.completeness_error()
        if err > self.tol:
            raise ValueError(f"incomplete POVM: max |sum_y phi_y phi_y^dag - 1| = {err:.3e}")

    @property
    def dim(self) -> int:
        return self.vectors[0].dim

    def matrix(self) -> np.ndarray:
        """Columns are the vectors phi_y, shape (dim, outcomes)."""
        return np.stack([v.coeffs for v in self.vectors], axis=1)

    def completeness_error(self) -> float:
        M = self.matrix()
        return float(np.max(np.abs(M @ M.conj().T - np.eye(M.shape[0]))))

    def __len__(self):
        return len(self.vectors)


@dataclass(frozen=True)
class ClassicalStrategy:
    povm: PovmEnsemble
    reconstructions: tuple[FockVector, ...]

    def __post_init__(self):
        recs = tuple(v if isinstance(v, FockVector) else FockVector(v) for v in self.reconstructions)
        if len(recs) != len(self.povm):
            raise ValueError(f"{len(recs)} reconstructions for {len(self.povm)} outcomes")
        for y, chi in enumerate(recs):
            if not chi.is_normalized(TOL_NORM):
                raise ValueError(f"reconstruction {y} is not normalized (norm^2 = {chi.norm_sq})")
        object.__setattr__(self, "reconstructions", recs)


@dataclass(frozen=True)
class Heterodyne:
    """Heterodyne detection, then preparation of |gain * beta>."""

    gain: float

    def __post_init__(self):
        if self.gain < 0:
            raise ValueError("gain must be non-negative")


def _element_analysis(povm: PovmEnsemble, prior: GaussianPrior, d: int | None):
    if d is None:
        d = a_dimension(povm.dim, prior)
    tops, traces, tails, chis = [], [], [], []
    for phi in povm.vectors:
        A = build_A_phi(phi, prior, d)
        vals, vecs = np.linalg.eigh(A.entries)
        vals = np.clip(vals[::-1], 0.0, None)
        tops.append(schatten_norm_from_eigenvalues(vals, math.inf))
        traces.append(float(vals.sum()))
        tails.append(A.tail)
        chis.append(FockVector(vecs[:, -1]))
    return d, np.array(tops), np.array(traces), float(sum(tails)), chis


def classical_fidelity(povm: PovmEnsemble, prior: GaussianPrior, d: int | None = None) -> FidelityReport:
    """sum_y ||A_phi_y||_inf: the fidelity of ``povm`` with optimal repreparation.

    ``trace_sum`` (sum_y ||A_phi_y||_1) equals 1 minus the prior mass outside
    the POVM's Fock space, lambda-wise (1/(1+lambda))^dim, which is reported
    as ``prior_tail``.
    """
    if povm.completeness_error() > povm.tol:
        raise ValueError("incomplete POVM")
    d, tops, traces, a_tail, _ = _element_analysis(povm, prior, d)
    prior_tail = math.exp(-povm.dim * math.log1p(prior.lam))
    return FidelityReport.make(
        float(tops.sum()),
        0.0,
        prior,
        method="spectral",
        d=povm.dim,
        a_dim=d,
        outcomes=len(povm),
        trace_sum=float(traces.sum()),
        prior_tail=prior_tail,
        a_truncation_tail=a_tail,
    )


def optimal_strategy(povm: PovmEnsemble, prior: GaussianPrior) -> ClassicalStrategy:
    """Pair each outcome with the top eigenvector of its A operator.

    The eigenvectors live in the (larger) A cutoff; they are cut back to the
    POVM dimension and renormalized so the strategy can be simulated there.
    """
    _, _, _, _, chis = _element_analysis(povm, prior, None)
    recs = []
    for chi in chis:
        c = chi.coeffs[: povm.dim]
        recs.append(FockVector(c / np.linalg.norm(c)))
    return ClassicalStrategy(povm, tuple(recs))


def strategy_fidelity(strategy: ClassicalStrategy, prior: GaussianPrior) -> float:
    """Exact average fidelity sum_y <chi_y|A_phi_y|chi_y> of a given strategy."""
    d = a_dimension(strategy.povm.dim, prior)
    return float(
        sum(build_A_phi(phi, prior, d).expectation(chi) for phi, chi in zip(strategy.povm.vectors, strategy.reconstructions))
    )


def optimal_gain(prior: GaussianPrior) -> float:
    return 1.0 / (1.0 + prior.lam)


def heterodyne_fidelity(prior: GaussianPrior, gain: float) -> float:
    """Average fidelity of heterodyne + |gain * beta> repreparation.

    lambda / [(1 + lambda)(1 + g^2) - 2 g], maximal at g = 1/(1 + lambda).
    """
    if gain < 0:
        raise ValueError("gain must be non-negative")
    lam = prior.lam
    return lam / ((1.0 + lam) * (1.0 + gain * gain) - 2.0 * gain)


def _summarize(scores: np.ndarray) -> tuple[float, float]:
    n = scores.size
    mean = float(np.mean(scores))
    stderr = float(np.std(scores, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, stderr


def _heterodyne_scores(prior: GaussianPrior, gain: float):
    def run(rng, size):
        alpha = draw_alpha(rng, prior, size)
        z = rng.standard_normal((2, size))
        beta = alpha + (z[0] + 1j * z[1]) * math.sqrt(0.5)
        return np.exp(-np.abs(alpha - gain * beta) ** 2)

    return run


def _strategy_scores(strategy: ClassicalStrategy, prior: GaussianPrior, tol: float):
    povm = strategy.povm
    d = povm.dim
    phis = povm.matrix()
    chis = np.stack([c.coeffs for c in strategy.reconstructions], axis=1)

    def run(rng, size):
        alpha = draw_alpha(rng, prior, size)
        u = rng.random(size)
        coh = coherent_matrix(alpha, d)  # <n|alpha>
        probs = np.abs(coh @ phis.conj()) ** 2
        total = probs.sum(axis=1)
        worst = int(np.argmax(1.0 - total))
        deficit = 1.0 - total[worst]
        cut = coherent_tail(alpha[worst], d)
        if cut > tol:
            raise TruncationError(f"sampled alpha={alpha[worst]:.4g} does not fit in d={d}", cut)
        if abs(deficit - cut) > tol:
            raise ValueError(
                f"Born probabilities sum to {total[worst]:.10f} at alpha={alpha[worst]:.4g}; POVM is incomplete"
            )
        cdf = np.cumsum(probs, axis=1)
        y = np.minimum((cdf < (u * total)[:, None]).sum(axis=1), phis.shape[1] - 1)
        fid = np.abs(np.einsum("kn,kn->k", coh.conj(), chis[:, y].T)) ** 2
        return fid

    return run


def simulate_strategy(
    strategy: ClassicalStrategy | Heterodyne,
    prior: GaussianPrior,
    n: int,
    seed: int,
    threads: int = 1,
    tol: float = TOL_POVM,
) -> FidelityReport:
    """Monte Carlo estimate of the average fidelity of a measure-and-prepare scheme.

    Each trial draws alpha from the prior, an outcome by the Born rule and
    scores |<alpha|chi_y>|^2. A single trial reports stderr 0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(strategy, Heterodyne):
        fn = _heterodyne_scores(prior, strategy.gain)
        meta = {"method": "mc-heterodyne", "gain": strategy.gain}
    else:
        fn = _strategy_scores(strategy, prior, tol)
        meta = {"method": "mc-strategy", "d": strategy.povm.dim, "outcomes": len(strategy.povm)}
    scores = np.concatenate(list(map_chunks(fn, n, seed, threads)))
    mean, stderr = _summarize(scores)
    return FidelityReport.make(mean, stderr, prior, n=n, seed=seed, rng=RNG_ALGORITHM, **meta)


def haar_isometry(m: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """m x d matrix with orthonormal columns, Haar distributed."""
    z = (rng.standard_normal((m, d)) + 1j * rng.standard_normal((m, d))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def make_random_povm(d: int, outcomes: int, seed: int) -> PovmEnsemble:
    """Rank-one POVM from the rows of a Haar-random isometry."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if outcomes < d:
        raise ValueError(f"need at least d={d} outcomes, got {outcomes}")
    V = haar_isometry(outcomes, d, np.random.Generator(np.random.Philox(key=seed)))
    return PovmEnsemble(tuple(FockVector(row.conj()) for row in V))


def fock_basis_povm(d: int) -> PovmEnsemble:
    return PovmEnsemble(tuple(FockVector.basis(n, d) for n in range(d)))


# -- JSON schema --------------------------------------------------------------
#
# {"schema_version": 1, "kind": "povm" | "strategy", "d": int,
#  "lambda": float | "flat" | null,
#  "vectors": [[[re, im], ...], ...],
#  "reconstructions": [[[re, im], ...], ...]}      (strategy only)


def _encode_vector(v: FockVector) -> list[list[float]]:
    return [[float(c.real), float(c.imag)] for c in v.coeffs]


def _decode_vector(pairs) -> FockVector:
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("vectors must be arrays of [re, im] pairs")
    return FockVector(arr[:, 0] + 1j * arr[:, 1])


def to_json_dict(obj: PovmEnsemble | ClassicalStrategy, lam=None) -> dict:
    povm = obj.povm if isinstance(obj, ClassicalStrategy) else obj
    out = {
        "schema_version": SCHEMA_VERSION,
        "kind": "strategy" if isinstance(obj, ClassicalStrategy) else "povm",
        "d": povm.dim,
        "lambda": lam,
        "vectors": [_encode_vector(v) for v in povm.vectors],
    }
    if isinstance(obj, ClassicalStrategy):
        out["reconstructions"] = [_encode_vector(v) for v in obj.reconstructions]
    return out


def from_json_dict(data: dict, tol: float = TOL_POVM) -> PovmEnsemble | ClassicalStrategy:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {data.get('schema_version')!r}")
    kind = data.get("kind", "povm")
    vectors = tuple(_decode_vector(v) for v in data["vectors"])
    if any(v.dim != data["d"] for v in vectors):
        raise ValueError("vector length does not match d")
    povm = PovmEnsemble(vectors, tol=tol)
    if kind == "povm":
        return povm
    if kind == "strategy":
        return ClassicalStrategy(povm, tuple(_decode_vector(v) for v in data["reconstructions"]))
    raise ValueError(f"unknown kind {kind!r}")


def load_json(path, tol: float = TOL_POVM) -> PovmEnsemble | ClassicalStrategy:
    with open(path, encoding="utf-8") as fh:
        return from_json_dict(json.load(fh), tol)

