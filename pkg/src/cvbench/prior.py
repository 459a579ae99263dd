"""Gaussian phase-space prior p(alpha) = (lambda/pi) exp(-lambda |alpha|^2).

Random numbers come from numpy's counter-based Philox4x64-10 generator. A
run of ``n`` samples is split into fixed-size chunks; chunk ``i`` draws from
the base stream advanced by ``i`` jumps, so chunks can be evaluated in any
order or in parallel and still merge into the same result.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, TypeVar

import numpy as np
from numpy.polynomial.laguerre import laggauss

RNG_ALGORITHM = "numpy.random.Philox(4x64-10)"
CHUNK_SIZE = 1 << 16

T = TypeVar("T")


class _Flat:
    """Marker for the lambda -> 0 limit. Never sampled."""

    def __repr__(self):
        return "FLAT"


FLAT = _Flat()


@dataclass(frozen=True)
class GaussianPrior:
    lam: float

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(
                f"lambda must be a positive finite number, got {self.lam!r}; "
                "use the flat-limit marker for lambda -> 0"
            )

    @property
    def mean_photon_number(self) -> float:
        return 1.0 / self.lam


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values) -> complex:
        return complex(np.sum(self.weights * np.asarray(values)))

    def __len__(self):
        return self.nodes.size


def density(alpha, prior: GaussianPrior):
    lam = prior.lam
    return lam / math.pi * np.exp(-lam * np.abs(alpha) ** 2)


def quadrature_grid(prior: GaussianPrior, radial_order: int = 60, angular_order: int = 32) -> QuadratureGrid:
    """Polar product rule for integrals against the prior.

    With u = |alpha|^2 the radial measure is lambda exp(-lambda u) du, handled
    by Gauss-Laguerre; the phase uses ``angular_order`` equispaced nodes,
    which integrate exp(i k theta) exactly for |k| < angular_order.
    """
    if radial_order < 2 or angular_order < 2:
        raise ValueError("quadrature orders must be >= 2")
    t, w = laggauss(radial_order)
    r = np.sqrt(t / prior.lam)
    theta = 2 * np.pi * np.arange(angular_order) / angular_order
    nodes = (r[:, None] * np.exp(1j * theta[None, :])).ravel()
    weights = np.repeat(w / angular_order, angular_order)
    return QuadratureGrid(nodes, weights)


def substream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for chunk ``index`` of the stream keyed by ``seed``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    bitgen = np.random.Philox(key=seed)
    if index:
        bitgen = bitgen.jumped(index)
    return np.random.Generator(bitgen)


def chunks(n: int, chunk_size: int = CHUNK_SIZE) -> list[tuple[int, int]]:
    """(chunk index, size) pairs covering n draws."""
    if n < 1:
        raise ValueError("sample count must be >= 1")
    return [(i, min(chunk_size, n - start)) for i, start in enumerate(range(0, n, chunk_size))]


def draw_alpha(rng: np.random.Generator, prior: GaussianPrior, size: int) -> np.ndarray:
    z = rng.standard_normal((size, 2))
    return (z[:, 0] + 1j * z[:, 1]) * math.sqrt(0.5 / prior.lam)


def map_chunks(
    fn: Callable[[np.random.Generator, int], T], n: int, seed: int, threads: int = 1
) -> Iterator[T]:
    """Apply ``fn(rng, size)`` to every chunk; results are yielded in chunk order."""
    jobs = chunks(n)
    if threads <= 1 or len(jobs) == 1:
        for index, size in jobs:
            yield fn(substream(seed, index), size)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(lambda job: fn(substream(seed, job[0]), job[1]), jobs)


def sample(prior: GaussianPrior, n: int, seed: int, threads: int = 1) -> np.ndarray:
    """n i.i.d. draws from the prior; E[alpha] = 0 and E[|alpha|^2] = 1/lambda."""
    return np.concatenate(list(map_chunks(lambda rng, m: draw_alpha(rng, prior, m), n, seed, threads)))
