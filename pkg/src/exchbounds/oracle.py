"""Exact small-instance ground truth by enumerating without-replacement draws.

Draws are enumerated as ordered selections of distinct *indices*, so
repeated population values carry their correct multiplicity.
"""
from __future__ import annotations

import functools
import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from ._parallel import ordered_map
from .bounds import MgfCertificate
from .core import as_population, as_weights
from .errors import BudgetError, DomainError

log = logging.getLogger(__name__)

ENUMERATION_BUDGET = 10**7
ATOM_TOL = 1e-12
MARGIN_TOL = 1e-10
RATIO_TOL = 1e-10
MARTINGALE_MAX_N = 7
PERMUTATION_MAX_N = 7
CACHE_SCHEMA = "exactlaw-v1"

HOEFFDING = "hoeffding"
BERNSTEIN = "bernstein"


@dataclass(frozen=True, eq=False)
class ExactLaw:
    """Distribution of ``S = sum_i w_i (X_i - mean(x))`` as sorted atoms."""

    values: np.ndarray
    probs: np.ndarray
    n: int
    N: int
    digest: str

    @property
    def atoms(self) -> list:
        return list(zip(self.values.tolist(), self.probs.tolist()))

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def variance(self) -> float:
        return float(np.dot(self.values**2, self.probs) - self.mean() ** 2)


def source_digest(x, w, n) -> str:
    h = hashlib.sha256(CACHE_SCHEMA.encode())
    h.update(np.int64(n).tobytes())
    h.update(np.ascontiguousarray(x, dtype="<f8").tobytes())
    h.update(b"|")
    h.update(np.ascontiguousarray(w, dtype="<f8").tobytes())
    return h.hexdigest()


@functools.lru_cache(maxsize=16)
def _tail_orderings(m, k) -> np.ndarray:
    """All ordered k-selections from range(m), lexicographic, read-only."""
    count = math.perm(m, k)
    dtype = np.min_scalar_type(max(m - 1, 0))
    flat = np.fromiter(itertools.chain.from_iterable(itertools.permutations(range(m), k)),
                       dtype=dtype, count=count * k)
    out = flat.reshape(count, k)
    out.setflags(write=False)
    return out


def _weighted_sums(centered, w, first, tail) -> np.ndarray:
    # accumulate term by term so each sum is independent of block shape
    others = np.delete(np.arange(centered.size), first)
    s = np.full(tail.shape[0], w[0] * centered[first])
    for i in range(1, w.size):
        s += w[i] * centered[others[tail[:, i - 1]]]
    return s


def _merge_atoms(s: np.ndarray, tol=ATOM_TOL):
    s = np.sort(s)
    breaks = np.flatnonzero(np.diff(s) > tol) + 1
    starts = np.concatenate(([0], breaks))
    counts = np.diff(np.concatenate((starts, [s.size])))
    values = np.add.reduceat(s, starts) / counts
    return values, counts / s.size


def exact_law(x, w, n=None, budget=ENUMERATION_BUDGET, cache_dir=None, workers=1) -> ExactLaw:
    """Exact law of the weighted sum over all ordered n-draws from x.

    ``n`` defaults to ``len(w)``. Enumeration is split by the first drawn
    index; blocks are concatenated in index order so the result does not
    depend on ``workers``. With ``cache_dir`` the law is stored as
    ``<digest>.npz`` tagged with the schema version.
    """
    pop = as_population(x)
    wv = as_weights(w)
    n = wv.n if n is None else int(n)
    if n != wv.n:
        raise DomainError(f"expected {n} weights, got {wv.n}")
    N = pop.size
    if n > N:
        raise DomainError(f"cannot draw n={n} from N={N} without replacement")
    count = math.perm(N, n)
    if count > budget:
        raise BudgetError(f"enumeration needs {count} orderings, over the budget of {budget}")

    digest = source_digest(pop.values, wv.entries, n)
    path = Path(cache_dir) / f"{digest}.npz" if cache_dir is not None else None
    if path is not None and path.exists():
        with np.load(path) as f:
            if str(f["schema"]) == CACHE_SCHEMA:
                return ExactLaw(f["values"], f["probs"], n, N, digest)

    centered = pop.values - pop.mean
    tail = _tail_orderings(N - 1, n - 1)
    blocks = ordered_map(lambda f: _weighted_sums(centered, wv.entries, f, tail), range(N), workers)
    values, probs = _merge_atoms(np.concatenate(blocks))
    law = ExactLaw(values, probs, n, N, digest)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, schema=CACHE_SCHEMA, values=values, probs=probs)
    return law


def exact_mgf(law: ExactLaw, lam):
    lam = np.asarray(lam, dtype=float)
    out = np.exp(np.multiply.outer(lam, law.values)) @ law.probs
    return float(out) if out.ndim == 0 else out


def exact_log_mgf(law: ExactLaw, lam):
    """``log E[exp(lam S)]`` evaluated without overflow."""
    lam = np.asarray(lam, dtype=float)
    out = logsumexp(np.multiply.outer(lam, law.values), b=law.probs, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def exact_tail(law: ExactLaw, t) -> float:
    """``P(S >= t)``."""
    return float(law.probs[law.values >= t].sum())


@dataclass(frozen=True, eq=False)
class ScanReport:
    kind: str
    lambdas: np.ndarray
    log_mgf: np.ndarray
    exponents: np.ndarray
    margins: np.ndarray
    min_margin: float
    argmin_lambda: float
    passed: bool


def default_lambda_max(w) -> float:
    w = as_weights(w)
    return 4.0 / w.norm2 if w.norm2 > 0 else 1.0


def mgf_dominance_scan(x, w, n, certificate: MgfCertificate, grid_size=101,
                       lambda_max=None, law: Optional[ExactLaw] = None, workers=1) -> ScanReport:
    """Compare ``certificate`` with the exact log-MGF on a symmetric lambda grid.

    The margin at each point is ``exponent(lam) - log E[exp(lam S)]``; the
    scan passes iff the smallest margin is >= -1e-10. Unbounded domains use
    ``lambda_max`` (default ``4 / |w|_2``).
    """
    if law is None:
        law = exact_law(x, w, n, workers=workers)
    if math.isinf(certificate.half_width) and lambda_max is None:
        lambda_max = default_lambda_max(w)
    lams = certificate.grid(grid_size, lambda_max=lambda_max)
    logm = exact_log_mgf(law, lams)
    expo = certificate.exponent(lams)
    margins = expo - logm
    i = int(np.argmin(margins))
    return ScanReport(certificate.kind, lams, logm, expo, margins,
                      float(margins[i]), float(lams[i]), bool(margins[i] >= -MARGIN_TOL))


def random_instance(rng: np.random.Generator, N: int, n: int, nonnegative=False):
    """Population uniform on [-1, 1]^N and standard-normal weights.

    Weights are rescaled to a 2-norm drawn log-uniformly from [1/2, 2]
    (absolute values taken first when ``nonnegative``).
    """
    x = rng.uniform(-1.0, 1.0, size=N)
    z = rng.standard_normal(n)
    if nonnegative:
        z = np.abs(z)
    scale = np.exp(rng.uniform(np.log(0.5), np.log(2.0)))
    return x, z / np.linalg.norm(z) * scale


# --- supermartingale checks ---------------------------------------------------

def bernstein_conservative_limit(v) -> float:
    """``2 / (3 |v|_inf)``, the smaller of the two admissible lambda ranges."""
    v = as_weights(v)
    return math.inf if v.norm_inf == 0 else 2.0 / (3.0 * v.norm_inf)


def bernstein_proof_limit(v) -> float:
    """``3 / (2 |v|_inf)``, the range the basic Bernstein inequality supports."""
    v = as_weights(v)
    return math.inf if v.norm_inf == 0 else 3.0 / (2.0 * v.norm_inf)


def _compensator(family, lam, vk, var, norm_inf):
    if family == HOEFFDING:
        return lam**2 * vk**2 / 2.0
    if family == BERNSTEIN:
        return lam**2 * vk**2 * var / (2.0 * (1.0 - 2.0 * abs(lam) * norm_inf / 3.0))
    raise ValueError(f"unknown martingale family {family!r}")


@dataclass(frozen=True)
class MartingalePath:
    family: str
    values: np.ndarray

    @property
    def k(self) -> int:
        return self.values.size - 1


def martingale_path(x_ordered, v, lam, family=HOEFFDING) -> MartingalePath:
    """``M_0, ..., M_n`` along one realised ordering of the population."""
    x = np.asarray(x_ordered, dtype=float)
    v = as_weights(v)
    if v.n != x.size:
        raise DomainError("the martingale needs one weight per population value")
    log_m = [0.0]
    for k in range(x.size):
        rest = x[k:]
        inc = lam * v.entries[k] * (rest[0] - rest.mean())
        inc -= _compensator(family, lam, v.entries[k], rest.var(), v.norm_inf)
        log_m.append(log_m[-1] + inc)
    return MartingalePath(family, np.exp(np.array(log_m)))


@dataclass(frozen=True)
class MartingaleReport:
    family: str
    lam: float
    worst_ratio: float
    worst_step: int
    worst_remaining: tuple
    states_checked: int
    in_gap: bool
    passed: bool

    @property
    def asserted(self) -> bool:
        return not self.in_gap


def martingale_check(x, v, lam, family=HOEFFDING) -> MartingaleReport:
    """Exact supermartingale check over every reachable prefix.

    Given the first k-1 draws, the k-th draw is uniform over the remaining
    values, so ``E[M_k | prefix] / M_{k-1}`` depends only on the set of
    remaining indices. Every nonempty subset is reachable, so iterating
    over subsets covers all prefixes. With the population fixed, its mean
    and variance are constants and the filtration is the prefix filtration.

    For the Bernstein family, lambda in ``[2/(3|v|_inf), 3/(2|v|_inf))`` is
    reported with ``in_gap=True`` and logged rather than asserted.
    """
    pop = as_population(x)
    v = as_weights(v)
    n = pop.size
    if v.n != n:
        raise DomainError(f"need one weight per population value, got n={v.n}, N={n}")
    if n > MARTINGALE_MAX_N:
        raise BudgetError(f"martingale check enumerates prefixes for n <= {MARTINGALE_MAX_N}, got {n}")
    lam = float(lam)
    in_gap = False
    if family == BERNSTEIN:
        if abs(lam) >= bernstein_proof_limit(v):
            raise DomainError(f"|lambda| must be < {bernstein_proof_limit(v):.17g}")
        in_gap = abs(lam) >= bernstein_conservative_limit(v)
    elif family != HOEFFDING:
        raise ValueError(f"unknown martingale family {family!r}")

    xs, w = pop.values, v.entries
    worst, worst_k, worst_rem, checked = -math.inf, 0, (), 0
    for m in range(n, 0, -1):
        k = n - m
        for rem in itertools.combinations(range(n), m):
            vals = xs[list(rem)]
            mu = vals.mean()
            comp = _compensator(family, lam, w[k], np.mean((vals - mu) ** 2), v.norm_inf)
            ratio = float(np.mean(np.exp(lam * w[k] * (vals - mu) - comp)))
            checked += 1
            if ratio > worst:
                worst, worst_k, worst_rem = ratio, k + 1, rem
    passed = worst <= 1.0 + RATIO_TOL
    if in_gap:
        log.info("bernstein martingale at lambda=%g lies in the unasserted gap; worst ratio %.17g",
                 lam, worst)
    return MartingaleReport(family, lam, worst, worst_k, worst_rem, checked, in_gap, passed)


@dataclass(frozen=True)
class SuffixVarianceReport:
    passed: bool
    worst_gap: float
    checks: int


def suffix_variance_domination_check(x, tol=1e-12) -> SuffixVarianceReport:
    """Check ``var(x_{>=i}) <= mean((x_j - mean(x))^2, j >= i)`` for every ordering.

    ``worst_gap`` is the smallest value of rhs - lhs seen.
    """
    xs = np.asarray(x, dtype=float).reshape(-1)
    n = xs.size
    if n > PERMUTATION_MAX_N:
        raise BudgetError(f"suffix-variance check enumerates orderings for n <= {PERMUTATION_MAX_N}, got {n}")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    X = xs[perms]
    counts = np.arange(n, 0, -1)
    suffix_sum = np.flip(np.cumsum(np.flip(X, 1), axis=1), 1)
    suffix_sq = np.flip(np.cumsum(np.flip(X**2, 1), axis=1), 1)
    suffix_mean = suffix_sum / counts
    lhs = np.maximum(suffix_sq / counts - suffix_mean**2, 0.0)
    dev = (X - xs.mean()) ** 2
    rhs = np.flip(np.cumsum(np.flip(dev, 1), axis=1), 1) / counts
    gap = rhs - lhs
    return SuffixVarianceReport(bool(np.all(gap >= -tol)), float(gap.min()), int(gap.size))


# --- tightness search -----------------------------------------------------------

@dataclass(frozen=True)
class TightnessReport:
    reference: str
    trials: int
    best_ratio: Optional[float] = None
    witness_x: Optional[np.ndarray] = None
    witness_w: Optional[np.ndarray] = None
    history: list = field(default_factory=list)


def _mgf_ratio(x, w, n, reference, lam_unit):
    """sup over lambda of log-MGF divided by the uninflated i.i.d. exponent."""
    wv = as_weights(w)
    if wv.norm2 == 0:
        return 0.0
    law = exact_law(x, wv, n)
    if reference == HOEFFDING:
        scale = wv.sq_norm2 / 2.0
        lams = lam_unit / wv.norm2
        limit = law.variance() / wv.sq_norm2  # value as lambda -> 0
        return max(limit, float(np.max(exact_log_mgf(law, lams) / (lams**2 * scale))))
    pop_var = float(np.var(x))
    if pop_var == 0:
        return 0.0
    hw = 3.0 / (2.0 * wv.norm_inf)
    lams = np.concatenate((lam_unit, -lam_unit))
    lams = lams[np.abs(lams) < 0.995 * hw]
    expo = lams**2 * pop_var * wv.sq_norm2 / (2.0 * (1.0 - 2.0 * wv.norm_inf * np.abs(lams) / 3.0))
    limit = law.variance() / (pop_var * wv.sq_norm2)
    return max(limit, float(np.max(exact_log_mgf(law, lams) / expo)))


def tightness_search(N, n=None, trials=10, seed=0, nonnegative=False, reference=HOEFFDING,
                     iterations=40) -> TightnessReport:
    """Random-restart hill climbing for the worst MGF-to-bound ratio.

    Evidence gathering only; nothing is asserted. Restarts begin from
    random {-1, +1} populations. ``reference="bernstein"`` compares with
    the uninflated Bernstein exponent using the population variance.
    """
    n = N if n is None else n
    if trials <= 0:
        return TightnessReport(reference, 0)
    rng = np.random.default_rng(seed)
    lam_unit = np.concatenate((np.geomspace(1e-3, 8.0, 40), -np.geomspace(1e-3, 8.0, 40)))

    def score(x, w):
        return _mgf_ratio(x, w, n, reference, lam_unit)

    best = (-math.inf, None, None)
    history = []
    for _ in range(trials):
        x = rng.choice([-1.0, 1.0], size=N)
        w = rng.standard_normal(n)
        if nonnegative:
            w = np.abs(w)
        cur = score(x, w)
        step = 0.5
        for _ in range(iterations):
            improved = False
            for which, i in [("x", i) for i in range(N)] + [("w", i) for i in range(n)]:
                cx, cw = x.copy(), w.copy()
                if which == "x":
                    cx[i] = np.clip(cx[i] + step * rng.standard_normal(), -1.0, 1.0)
                else:
                    cw[i] += step * rng.standard_normal()
                    if nonnegative:
                        cw[i] = abs(cw[i])
                s = score(cx, cw)
                if s > cur:
                    x, w, cur, improved = cx, cw, s, True
            if not improved:
                step *= 0.5
        history.append(cur)
        if cur > best[0]:
            best = (cur, x, w)
    return TightnessReport(reference, trials, best[0], best[1], best[2], history)
