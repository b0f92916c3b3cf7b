"""Seeded simulation of weighted sums under sampling without replacement.

Replicate ``r`` draws its uniforms from a Philox stream keyed by ``seed``
with counter ``(0, r, 0, 0)``, so every replicate is reproducible on its
own and results do not depend on chunking or worker count. Draws use a
partial Fisher-Yates shuffle: at step j the index swapped into position j
is ``j + floor(u_j * (N - j))``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from . import bounds
from ._parallel import ordered_map
from .core import Population, WeightVector, as_population, as_weights
from .errors import DomainError

MGF_CAP = 700.0
CHUNK = 4096
CONFIDENCE = 0.95
MAX_SEED = 2**64 - 1


def replicate_stream(seed: int, replicate: int) -> np.random.Generator:
    if not 0 <= seed <= MAX_SEED:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, replicate, 0, 0]))


def _replicate_uniforms(seed: int, start: int, stop: int, n: int) -> np.ndarray:
    """Uniforms of replicates start..stop-1, identical to ``replicate_stream``.

    One bit generator is rewound per replicate instead of constructing a
    new one, which is several times cheaper.
    """
    bg = np.random.Philox(key=seed)
    gen = np.random.Generator(bg)
    state = bg.state
    out = np.empty((stop - start, n))
    for r in range(start, stop):
        state["state"]["counter"][:] = (0, r, 0, 0)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        bg.state = state
        out[r - start] = gen.random(n)
    return out


def _fisher_yates(N: int, uniforms: np.ndarray) -> np.ndarray:
    """Partial Fisher-Yates on each row; returns (rows, n) drawn indices."""
    rows, n = uniforms.shape
    idx = np.tile(np.arange(N, dtype=np.int64), (rows, 1))
    r = np.arange(rows)
    for j in range(n):
        k = j + np.minimum((uniforms[:, j] * (N - j)).astype(np.int64), N - j - 1)
        held = idx[r, j].copy()
        idx[r, j] = idx[r, k]
        idx[r, k] = held
    return idx[:, :n]


def draw_without_replacement(population, n: int, stream: np.random.Generator) -> np.ndarray:
    """First n entries of a uniformly random ordering of the population."""
    pop = as_population(population)
    if not 0 <= n <= pop.size:
        raise DomainError(f"cannot draw n={n} from N={pop.size} without replacement")
    idx = _fisher_yates(pop.size, stream.random(n)[None, :])[0]
    return pop.values[idx]


@dataclass(frozen=True, eq=False)
class SimConfig:
    population: Population
    weights: WeightVector
    n: int
    replicates: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "population", as_population(self.population))
        object.__setattr__(self, "weights", as_weights(self.weights))
        if self.n > self.population.size:
            raise DomainError(f"n={self.n} exceeds population size N={self.population.size}")
        if self.weights.n != self.n:
            raise DomainError(f"expected {self.n} weights, got {self.weights.n}")
        if self.replicates < 1:
            raise DomainError(f"replicates must be >= 1, got {self.replicates}")
        if not 0 <= self.seed <= MAX_SEED:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class TailEstimate:
    hits: int
    replicates: int
    frequency: float
    ci_low: float
    ci_high: float


def wilson_interval(hits: int, trials: int, confidence=CONFIDENCE) -> TailEstimate:
    ci = binomtest(int(hits), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return TailEstimate(int(hits), int(trials), hits / trials, float(ci.low), float(ci.high))


@dataclass(frozen=True, eq=False)
class SimResult:
    tail: dict
    mgf: dict
    mgf_capped: dict
    replicates: int
    sums: Optional[np.ndarray] = None


def simulate_sums(config: SimConfig, workers=1, chunk=CHUNK) -> np.ndarray:
    """One value of ``S = sum_i w_i (X_i - mean(x))`` per replicate, in order."""
    x = config.population.values
    centered = x - config.population.mean
    w = config.weights.entries
    N, n = x.size, config.n

    def run(start):
        stop = min(start + chunk, config.replicates)
        idx = _fisher_yates(N, _replicate_uniforms(config.seed, start, stop, n))
        s = np.zeros(stop - start)
        for i in range(n):
            s += w[i] * centered[idx[:, i]]
        return s

    parts = ordered_map(run, range(0, config.replicates, chunk), workers)
    return np.concatenate(parts)


def simulate(config: SimConfig, thresholds: Sequence[float] = (), lambdas: Sequence[float] = (),
             keep_sums=False, workers=1) -> SimResult:
    """Empirical tail frequencies ``P(S >= t)`` and MGFs ``E[exp(lam S)]``.

    Exponents are capped at 700; the number of capped replicates is
    reported per lambda in ``mgf_capped``.
    """
    s = simulate_sums(config, workers=workers)
    R = s.size
    tail = {float(t): wilson_interval(int(np.count_nonzero(s >= t)), R) for t in thresholds}
    mgf, capped = {}, {}
    for lam in lambdas:
        z = float(lam) * s
        over = z > MGF_CAP
        capped[float(lam)] = int(np.count_nonzero(over))
        mgf[float(lam)] = float(np.mean(np.exp(np.minimum(z, MGF_CAP))))
    return SimResult(tail, mgf, capped, R, s if keep_sums else None)


@dataclass(frozen=True)
class CoverageRow:
    kind: str
    delta: float
    radius: float
    sided: str
    estimate: TailEstimate

    @property
    def passed(self) -> bool:
        return self.estimate.ci_low <= self.delta


def coverage_experiment(config: SimConfig, bound_kinds: Sequence[str], delta_grid: Sequence[float],
                        workers=1, sums: Optional[np.ndarray] = None) -> list:
    """Exceedance frequency of each bound's radius over simulated sums.

    One-sided bounds count ``S >= radius``; two-sided bounds count
    ``|S| >= radius``. N and the population variance come from the known
    population. A row passes iff the Wilson lower limit is <= delta.
    """
    if sums is None:
        sums = simulate_sums(config, workers=workers)
    R = sums.size
    rows = []
    for kind in bound_kinds:
        for delta in delta_grid:
            tr = bounds.radius(kind, config.weights, delta, population=config.population)
            stat = np.abs(sums) if tr.sided == bounds.TWO_SIDED else sums
            hits = int(np.count_nonzero(stat >= tr.radius))
            rows.append(CoverageRow(kind, tr.delta, tr.radius, tr.sided, wilson_interval(hits, R)))
    return rows
