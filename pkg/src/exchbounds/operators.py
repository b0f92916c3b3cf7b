"""Suffix-mean, contrast and centering operators and their permutation averages.

``B_n`` maps x to its running suffix means, ``(B_n x)_i = mean(x_i, ..., x_n)``.
``A_n`` has row i equal to ``(0, ..., 0, 1, -1/(n-i), ..., -1/(n-i))`` for
i < n and a zero last row, so that ``A_n^T (I - B_n)`` is the centering
projection ``P = I - J/n``. Every operator is applied in O(n) without
materialisation; dense matrices are available up to ``DENSE_LIMIT``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._parallel import ordered_map, tree_sum
from .core import as_weights, epsilon, harmonic
from .errors import BudgetError, DomainError

DENSE_LIMIT = 2048
ENUMERATION_MAX_N = 8
PINV_RTOL = 1e-10


def _check_n(n, minimum, what):
    if int(n) != n or n < minimum:
        raise DomainError(f"{what} needs an integer n >= {minimum}, got {n!r}")
    return int(n)


def _check_dense(n):
    if n > DENSE_LIMIT:
        raise DomainError(f"dense form limited to n <= {DENSE_LIMIT}; use apply() for n={n}")


def _vec(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise DomainError(f"expected trailing dimension {n}, got {x.shape}")
    return x


@dataclass(frozen=True)
class SuffixMeanOperator:
    n: int

    def apply(self, x):
        x = _vec(x, self.n)
        suffix_sums = np.flip(np.cumsum(np.flip(x, -1), axis=-1), -1)
        return suffix_sums / np.arange(self.n, 0, -1)

    def apply_transpose(self, y):
        y = _vec(y, self.n)
        return np.cumsum(y / np.arange(self.n, 0, -1), axis=-1)

    def matrix(self) -> np.ndarray:
        _check_dense(self.n)
        n = self.n
        rows = 1.0 / np.arange(n, 0, -1)
        return np.triu(np.ones((n, n))) * rows[:, None]

    def __matmul__(self, x):
        return self.apply(x)


@dataclass(frozen=True)
class ContrastOperator:
    n: int

    def apply(self, w):
        w = _vec(w, self.n)
        n = self.n
        out = np.zeros_like(w)
        # (A w)_i = w_i - mean(w_{i+1}, ..., w_n) for i < n
        later = np.flip(np.cumsum(np.flip(w[..., 1:], -1), axis=-1), -1)
        out[..., : n - 1] = w[..., : n - 1] - later / np.arange(n - 1, 0, -1)
        return out

    def apply_transpose(self, y):
        y = _vec(y, self.n)
        n = self.n
        scaled = np.zeros_like(y)
        scaled[..., : n - 1] = y[..., : n - 1] / np.arange(n - 1, 0, -1)
        earlier = np.cumsum(scaled, axis=-1) - scaled
        out = -earlier
        out[..., : n - 1] += y[..., : n - 1]
        return out

    def matrix(self) -> np.ndarray:
        _check_dense(self.n)
        n = self.n
        A = np.zeros((n, n))
        for i in range(n - 1):
            A[i, i] = 1.0
            A[i, i + 1 :] = -1.0 / (n - 1 - i)
        return A

    def __matmul__(self, w):
        return self.apply(w)


@dataclass(frozen=True)
class CenteringProjection:
    n: int

    def apply(self, x):
        x = _vec(x, self.n)
        return x - np.mean(x, axis=-1, keepdims=True)

    apply_transpose = apply

    def matrix(self) -> np.ndarray:
        _check_dense(self.n)
        return np.eye(self.n) - np.full((self.n, self.n), 1.0 / self.n)

    def __matmul__(self, x):
        return self.apply(x)


def build_suffix_mean(n) -> SuffixMeanOperator:
    return SuffixMeanOperator(_check_n(n, 1, "suffix-mean operator"))


def build_contrast(n) -> ContrastOperator:
    return ContrastOperator(_check_n(n, 2, "contrast operator"))


def centering(n) -> CenteringProjection:
    return CenteringProjection(_check_n(n, 1, "centering projection"))


def projection_identity_error(n) -> float:
    """Max entrywise deviation of ``A_n^T (I - B_n)`` from the centering projection."""
    n = _check_n(n, 2, "projection identity")
    A = build_contrast(n).matrix()
    B = build_suffix_mean(n).matrix()
    return float(np.max(np.abs(A.T @ (np.eye(n) - B) - centering(n).matrix())))


def pseudo_inverse_gram(n) -> np.ndarray:
    """Moore-Penrose inverse of ``A_n^T A_n`` by symmetric eigendecomposition.

    Eigenvalues below ``PINV_RTOL`` times the largest are treated as zero.
    The Gram matrix has exactly one null direction (the ones vector), which
    is asserted.
    """
    n = _check_n(n, 2, "pseudo_inverse_gram")
    A = build_contrast(n).matrix()
    G = A.T @ A
    vals, vecs = np.linalg.eigh(G)
    keep = vals > PINV_RTOL * vals[-1]
    rank = int(np.count_nonzero(keep))
    if rank != n - 1:
        raise np.linalg.LinAlgError(f"A_n^T A_n should have rank {n - 1}, found {rank}")
    inv = np.where(keep, 1.0 / np.where(keep, vals, 1.0), 0.0)
    P = (vecs * inv) @ vecs.T
    return (P + P.T) / 2


def _permutation_average(M: np.ndarray, workers=1) -> np.ndarray:
    """(1/n!) sum over permutation matrices Pi of Pi^T M Pi, by enumeration.

    Permutations are split by their first entry; blocks are summed in a
    fixed order, so the result does not depend on ``workers``.
    """
    n = M.shape[0]
    if n > ENUMERATION_MAX_N:
        raise BudgetError(f"enumeration over {math.factorial(n)} permutations exceeds the n <= {ENUMERATION_MAX_N} cap")

    def block(first):
        rest = [i for i in range(n) if i != first]
        perms = np.array([(first,) + p for p in itertools.permutations(rest)], dtype=np.intp)
        return M[perms[:, :, None], perms[:, None, :]].sum(axis=0)

    return tree_sum(ordered_map(block, range(n), workers)) / math.factorial(n)


def perm_average_gram_pinv(n, method="closed", workers=1) -> np.ndarray:
    """Permutation average of ``(A_n^T A_n)^+``.

    The closed form is ``((n - H_n)/(n - 1)) * P``; ``method="enumerate"``
    sums over all n! permutations instead (n <= 8).
    """
    n = _check_n(n, 2, "perm_average_gram_pinv")
    if method == "closed":
        return (n - harmonic(n)) / (n - 1) * centering(n).matrix()
    if method == "enumerate":
        if n > ENUMERATION_MAX_N:
            raise BudgetError(f"enumeration capped at n <= {ENUMERATION_MAX_N}, got {n}")
        return _permutation_average(pseudo_inverse_gram(n), workers)
    raise ValueError(f"unknown method {method!r}")


def perm_average_suffix_mean(n, method="closed", workers=1) -> np.ndarray:
    """Permutation average of ``B_n``.

    Closed form: ``P1/(1 + eps_n) + eps_n/(1 + eps_n) * I`` with
    ``P1 = J/n`` the projection onto the ones vector.
    """
    n = _check_n(n, 2, "perm_average_suffix_mean")
    if method == "closed":
        eps = epsilon(n)
        return np.full((n, n), 1.0 / n) / (1 + eps) + eps / (1 + eps) * np.eye(n)
    if method == "enumerate":
        if n > ENUMERATION_MAX_N:
            raise BudgetError(f"enumeration capped at n <= {ENUMERATION_MAX_N}, got {n}")
        return _permutation_average(build_suffix_mean(n).matrix(), workers)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class ContrastDomination:
    holds: bool
    contrast_sq: np.ndarray
    weight_sq: np.ndarray

    @property
    def contrast_norm_sq(self) -> float:
        return float(self.contrast_sq.sum())

    @property
    def weight_norm_sq(self) -> float:
        return float(self.weight_sq.sum())


def nonneg_contrast_domination(w, tol=1e-12) -> ContrastDomination:
    """Check ``((A_n w)_i)^2 <= w_i^2`` for nonnegative weights.

    Weights are sorted into non-increasing order first; callers may pass
    them in any order.
    """
    w = as_weights(w)
    if not w.all_nonnegative:
        raise DomainError("contrast domination applies to nonnegative weights only")
    if w.n < 2:
        raise DomainError("contrast domination needs at least two weights")
    ws = np.sort(w.entries)[::-1]
    c2 = build_contrast(w.n).apply(ws) ** 2
    w2 = ws**2
    return ContrastDomination(bool(np.all(c2 <= w2 + tol)), c2, w2)
