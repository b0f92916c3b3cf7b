"""Scalar and vector primitives shared by every bound.

Harmonic numbers, the exchangeability inflation factor
``eps_N = (H_N - 1) / (N - H_N)``, finite-population statistics and
weight-vector norms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ValidationError


def harmonic(N: int) -> float:
    """Return H_N = 1 + 1/2 + ... + 1/N.

    Terms are accumulated smallest first (1/N, 1/(N-1), ..., 1) so the
    result is reproducible bit for bit.
    """
    N = _as_int(N, "N")
    if N < 1:
        raise DomainError(f"harmonic number needs N >= 1, got {N}")
    total = 0.0
    for k in range(N, 0, -1):
        total += 1.0 / k
    return total


def epsilon(N: int) -> float:
    """Inflation factor (H_N - 1) / (N - H_N), defined for N >= 2."""
    N = _as_int(N, "N")
    if N < 2:
        raise DomainError(f"epsilon_N needs N >= 2, got {N}")
    h = harmonic(N)
    return (h - 1.0) / (N - h)


def epsilon_sequence(N_max: int) -> np.ndarray:
    """Vector of eps_N for N = 2, ..., N_max (index 0 holds eps_2).

    Uses running prefix sums of 1/k, so entries can differ from
    :func:`epsilon` in the last bit. Meant for sweeps over many N.
    """
    N_max = _as_int(N_max, "N_max")
    if N_max < 2:
        raise DomainError(f"epsilon_sequence needs N_max >= 2, got {N_max}")
    k = np.arange(1, N_max + 1, dtype=float)
    H = np.cumsum(1.0 / k)[1:]
    N = k[1:]
    return (H - 1.0) / (N - H)


def _as_int(value, name: str) -> int:
    if isinstance(value, (bool, np.bool_)) or int(value) != value:
        raise DomainError(f"{name} must be an integer, got {value!r}")
    return int(value)


def _readonly(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise DomainError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Fixed weights with their 2-norm and sup-norm cached."""

    entries: np.ndarray
    norm2: float = field(init=False)
    norm_inf: float = field(init=False)
    all_nonnegative: bool = field(init=False)

    def __post_init__(self):
        w = _readonly(self.entries, "weights")
        object.__setattr__(self, "entries", w)
        object.__setattr__(self, "norm2", float(np.linalg.norm(w)))
        object.__setattr__(self, "norm_inf", float(np.max(np.abs(w))))
        object.__setattr__(self, "all_nonnegative", bool(np.all(w >= 0)))

    @property
    def n(self) -> int:
        return self.entries.size

    @property
    def sq_norm2(self) -> float:
        return float(np.dot(self.entries, self.entries))

    def __len__(self):
        return self.entries.size

    def __repr__(self):
        return f"WeightVector(n={self.n}, norm2={self.norm2:.6g}, norm_inf={self.norm_inf:.6g})"


def as_weights(w) -> WeightVector:
    return w if isinstance(w, WeightVector) else WeightVector(w)


@dataclass(frozen=True, eq=False)
class Population:
    """A finite population x in [-1, 1]^N.

    ``variance`` is the 1/N-normalised variance and ``inflated_variance``
    is ``variance + 4 * eps_N`` (``None`` when N = 1).
    """

    values: np.ndarray
    mean: float = field(init=False)
    variance: float = field(init=False)
    inflated_variance: Optional[float] = field(init=False)

    def __post_init__(self):
        x = _readonly(self.values, "population")
        bad = np.flatnonzero((x < -1.0) | (x > 1.0))
        if bad.size:
            i = int(bad[0])
            raise ValidationError(f"population value at index {i} is {x[i]!r}, outside [-1, 1]")
        object.__setattr__(self, "values", x)
        # a constant population must center to exactly zero
        mean = float(x[0]) if np.all(x == x[0]) else float(np.mean(x))
        var = float(np.mean((x - mean) ** 2))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)
        infl = var + 4.0 * epsilon(x.size) if x.size >= 2 else None
        object.__setattr__(self, "inflated_variance", infl)

    @property
    def size(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"Population(N={self.size}, mean={self.mean:.6g}, variance={self.variance:.6g})"


def population_stats(values: Sequence[float]) -> Population:
    return Population(values)


def as_population(x) -> Population:
    return x if isinstance(x, Population) else Population(x)


@dataclass(frozen=True)
class IidModel:
    """Mean and variance of a distribution supported in [-1, 1].

    ``variance <= 1 - mean**2`` is deliberately not enforced.
    """

    mean: float
    variance: float

    def __post_init__(self):
        if not abs(self.mean) <= 1.0:
            raise ValidationError(f"mean must lie in [-1, 1], got {self.mean}")
        if not 0.0 <= self.variance <= 1.0:
            raise ValidationError(f"variance must lie in [0, 1], got {self.variance}")
