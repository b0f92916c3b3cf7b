"""MGF certificates, tail radii and comparison bounds.

Every MGF bound implemented here has the form

    E[exp(lam * S)] <= exp(lam**2 * a**2 / (2 * (1 - b * |lam|))),   |lam| < 1/b,

with ``b = 0`` for the sub-Gaussian (Hoeffding-type) families. A
certificate therefore stores ``(a**2, b)``; its tail radius at level delta is
``a * sqrt(2 log(1/delta)) + b * log(1/delta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import IidModel, Population, as_population, as_weights, epsilon
from .errors import DomainError, PreconditionError

HOEFFDING_IID = "hoeffding-iid"
BERNSTEIN_IID = "bernstein-iid"
SERFLING = "serfling"
HOEFFDING_EXCH = "hoeffding-exch"
HOEFFDING_EXCH_NONNEG = "hoeffding-exch-nonneg"
BERNSTEIN_EXCH = "bernstein-exch"
GAN = "gan"
POLACZYK = "polaczyk"

KINDS = (HOEFFDING_IID, BERNSTEIN_IID, SERFLING, HOEFFDING_EXCH,
         HOEFFDING_EXCH_NONNEG, BERNSTEIN_EXCH, GAN, POLACZYK)
CERTIFICATE_KINDS = KINDS[:6]

ONE_SIDED = "one-sided"
TWO_SIDED = "two-sided"

POLACZYK_CONSTANT = 36.0
MEAN_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class MgfCertificate:
    """Certifies ``E[exp(lam*S)] <= exp(exponent(lam))`` on ``|lam| < half_width``."""

    kind: str
    a2: float
    b: float = 0.0

    @property
    def a(self) -> float:
        return math.sqrt(self.a2)

    @property
    def half_width(self) -> float:
        return math.inf if self.b == 0 else 1.0 / self.b

    @property
    def lambda_domain(self) -> tuple:
        return (-self.half_width, self.half_width)

    def in_domain(self, lam) -> np.ndarray:
        return np.abs(np.asarray(lam, dtype=float)) < self.half_width

    def exponent(self, lam):
        lam = np.asarray(lam, dtype=float)
        if not np.all(self.in_domain(lam)):
            raise DomainError(
                f"{self.kind}: lambda outside the open domain |lambda| < {self.half_width:.17g}"
            )
        out = lam**2 * self.a2 / (2.0 * (1.0 - self.b * np.abs(lam)))
        return float(out) if out.ndim == 0 else out

    def radius(self, delta) -> "TailRadius":
        return bernstein_tail(self.a, self.b, delta, kind=self.kind)

    def grid(self, size=101, lambda_max=None, clip=0.995) -> np.ndarray:
        """Symmetric evenly spaced lambda grid.

        Domain-limited families are clipped to ``clip`` of the half-width;
        ``lambda_max`` is required when the domain is all of R.
        """
        if int(size) != size or size < 1:
            raise DomainError(f"grid size must be a positive integer, got {size!r}")
        limit = clip * self.half_width
        if lambda_max is not None:
            limit = min(limit, float(lambda_max))
        if not math.isfinite(limit):
            raise DomainError(f"{self.kind}: lambda_max is required for an unbounded domain")
        return np.linspace(-limit, limit, int(size))


@dataclass(frozen=True)
class TailRadius:
    """``P(S >= radius) <= delta`` (one-sided) or ``P(|S| >= radius) <= delta``."""

    kind: str
    delta: float
    radius: float
    sided: str = ONE_SIDED


def _check_delta(delta) -> float:
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie strictly inside (0, 1), got {delta}")
    return delta


def _check_N(w, N, minimum_n=2):
    if N is None or int(N) != N:
        raise DomainError(f"an integer population size N is required, got {N!r}")
    N = int(N)
    if w.n < minimum_n:
        raise DomainError(f"need n >= {minimum_n} weights, got {w.n}")
    if N < w.n:
        raise DomainError(f"need N >= n, got N={N} < n={w.n}")
    return N


# --- MGF certificates -------------------------------------------------------

def hoeffding_iid(w) -> MgfCertificate:
    """i.i.d. Hoeffding: exponent ``lam^2 |w|_2^2 / 2`` on all of R."""
    w = as_weights(w)
    return MgfCertificate(HOEFFDING_IID, w.sq_norm2)


def bernstein_iid(w, model: IidModel) -> MgfCertificate:
    w = as_weights(w)
    return MgfCertificate(BERNSTEIN_IID, model.variance * w.sq_norm2, 2.0 * w.norm_inf / 3.0)


def serfling_unweighted(n, N) -> MgfCertificate:
    """Serfling's without-replacement bound for the unweighted sum of n draws."""
    if int(n) != n or int(N) != N or n < 1:
        raise DomainError(f"need integers 1 <= n <= N, got n={n!r}, N={N!r}")
    if n > N:
        raise DomainError(f"need n <= N, got n={n} > N={N}")
    return MgfCertificate(SERFLING, n * (1.0 - (n - 1) / N))


def hoeffding_exch(w, N) -> MgfCertificate:
    """Exchangeable Hoeffding: ``lam^2 |w|_2^2 (1 + eps_N) / 2``, N >= n >= 2."""
    w = as_weights(w)
    N = _check_N(w, N)
    return MgfCertificate(HOEFFDING_EXCH, w.sq_norm2 * (1.0 + epsilon(N)))


def hoeffding_exch_nonneg(w) -> MgfCertificate:
    w = as_weights(w)
    if not w.all_nonnegative:
        i = int(np.argmin(w.entries))
        raise PreconditionError(f"weights must be nonnegative; entry {i} is {w.entries[i]!r}")
    return MgfCertificate(HOEFFDING_EXCH_NONNEG, w.sq_norm2)


def bernstein_exch(w, sigma2, N=None) -> MgfCertificate:
    """Exchangeable Bernstein certificate.

    ``sigma2`` is the variance of the full exchangeable vector, or a
    :class:`Population`, in which case its variance is used and ``N``
    defaults to its size. The variance proxy is ``sigma2 + 4 eps_N`` and
    the domain is ``|lam| < 3 / (2 |w|_inf (1 + eps_N))``.
    """
    w = as_weights(w)
    if isinstance(sigma2, Population):
        N = sigma2.size if N is None else N
        sigma2 = sigma2.variance
    N = _check_N(w, N)
    sigma2 = float(sigma2)
    if sigma2 < 0:
        raise DomainError(f"variance must be nonnegative, got {sigma2}")
    eps = epsilon(N)
    inflated = sigma2 + 4.0 * eps
    return MgfCertificate(
        BERNSTEIN_EXCH,
        (1.0 + eps) * inflated * w.sq_norm2,
        2.0 * w.norm_inf * (1.0 + eps) / 3.0,
    )


# --- tail radii -------------------------------------------------------------

def subgaussian_tail(a, delta, kind="subgaussian") -> TailRadius:
    """Radius ``a * sqrt(2 log(1/delta))`` for an exponent ``lam^2 a^2 / 2``."""
    return bernstein_tail(a, 0.0, delta, kind=kind)


def bernstein_tail(a, b, delta, kind="bernstein") -> TailRadius:
    """Radius ``a * sqrt(2 log(1/delta)) + b * log(1/delta)``."""
    delta = _check_delta(delta)
    if a < 0 or b < 0:
        raise DomainError(f"a and b must be nonnegative, got a={a}, b={b}")
    L = math.log(1.0 / delta)
    return TailRadius(kind, delta, a * math.sqrt(2.0 * L) + b * L, ONE_SIDED)


def gan_stein_tail(w, delta) -> TailRadius:
    """Two-sided exchangeable-pairs radius ``|w|_2 sqrt(4 log(2/delta))``."""
    w = as_weights(w)
    delta = _check_delta(delta)
    return TailRadius(GAN, delta, w.norm2 * math.sqrt(4.0 * math.log(2.0 / delta)), TWO_SIDED)


def polaczyk_tail(w, pop, delta) -> TailRadius:
    """Simplified rank-one permutation-sum bound for a centered population.

    Radius ``36 sigma |w|_2 sqrt(log(2/delta)) + 36 log(2/delta)``. Requires
    ``|w|_inf <= 1`` and a population mean of zero.
    """
    w = as_weights(w)
    pop = as_population(pop)
    delta = _check_delta(delta)
    if w.norm_inf > 1.0:
        raise PreconditionError(f"polaczyk bound needs |w|_inf <= 1, got {w.norm_inf}")
    if abs(pop.mean) > MEAN_ZERO_TOL:
        raise PreconditionError(f"polaczyk bound needs a centered population, mean is {pop.mean}")
    if w.n > pop.size:
        raise DomainError(f"need n <= N, got n={w.n} > N={pop.size}")
    L = math.log(2.0 / delta)
    r = POLACZYK_CONSTANT * math.sqrt(pop.variance) * w.norm2 * math.sqrt(L) + POLACZYK_CONSTANT * L
    return TailRadius(POLACZYK, delta, r, TWO_SIDED)


def certificate(kind, w, N=None, sigma2=None, n=None) -> MgfCertificate:
    """Build the certificate for ``kind`` from loosely typed inputs."""
    w = as_weights(w)
    if kind == HOEFFDING_IID:
        return hoeffding_iid(w)
    if kind == BERNSTEIN_IID:
        if sigma2 is None:
            raise PreconditionError("bernstein-iid needs a variance")
        return bernstein_iid(w, IidModel(0.0, float(sigma2)))
    if kind == SERFLING:
        # constant weights c scale the unweighted sum by c
        if not np.all(w.entries == w.entries[0]):
            raise PreconditionError("serfling applies to constant weights only")
        if N is None:
            raise PreconditionError("serfling needs N")
        cert = serfling_unweighted(w.n if n is None else n, N)
        return MgfCertificate(SERFLING, cert.a2 * float(w.entries[0]) ** 2)
    if kind == HOEFFDING_EXCH:
        if N is None:
            raise PreconditionError("hoeffding-exch needs N")
        return hoeffding_exch(w, N)
    if kind == HOEFFDING_EXCH_NONNEG:
        return hoeffding_exch_nonneg(w)
    if kind == BERNSTEIN_EXCH:
        if N is None or sigma2 is None:
            raise PreconditionError("bernstein-exch needs N and a variance")
        return bernstein_exch(w, sigma2, N)
    raise ValueError(f"{kind!r} has no MGF certificate")


def radius(kind, w, delta, N=None, sigma2=None, population: Optional[Population] = None) -> TailRadius:
    """Tail radius of any implemented family.

    When ``population`` is given it supplies N and the variance unless
    those are passed explicitly.
    """
    w = as_weights(w)
    if population is not None:
        N = population.size if N is None else N
        sigma2 = population.variance if sigma2 is None else sigma2
    if kind == GAN:
        return gan_stein_tail(w, delta)
    if kind == POLACZYK:
        if population is None:
            raise PreconditionError("polaczyk needs the population")
        return polaczyk_tail(w, population, delta)
    return certificate(kind, w, N=N, sigma2=sigma2).radius(delta)


# --- N -> infinity recovery -------------------------------------------------

@dataclass(frozen=True)
class ConvergenceReport:
    Ns: np.ndarray
    hoeffding_gap: np.ndarray
    hoeffding_expected_gap: np.ndarray
    bernstein_gap: Optional[np.ndarray]
    hoeffding_monotone: bool
    bernstein_monotone: Optional[bool]


def iid_limit_check(w, lam, N_sequence, model: Optional[IidModel] = None) -> ConvergenceReport:
    """Gap between the exchangeable and i.i.d. exponents along ``N_sequence``.

    The Hoeffding gap is exactly ``eps_N * lam^2 |w|_2^2 / 2``. With a
    model, the Bernstein gap uses ``sigma2 = model.variance`` for both
    sides; N for which ``lam`` falls outside the exchangeable domain give NaN.
    """
    w = as_weights(w)
    lam = float(lam)
    Ns = np.array(sorted(int(N) for N in N_sequence))
    if Ns.size == 0:
        raise DomainError("N_sequence is empty")
    iid_h = hoeffding_iid(w).exponent(lam)
    gap_h = np.array([hoeffding_exch(w, N).exponent(lam) - iid_h for N in Ns])
    expected = np.array([epsilon(N) for N in Ns]) * lam**2 * w.sq_norm2 / 2.0
    gap_b = mono_b = None
    if model is not None:
        iid_b = bernstein_iid(w, model).exponent(lam)
        gap_b = np.full(Ns.size, np.nan)
        for i, N in enumerate(Ns):
            cert = bernstein_exch(w, model.variance, N)
            if cert.in_domain(lam):
                gap_b[i] = cert.exponent(lam) - iid_b
        finite = gap_b[np.isfinite(gap_b)]
        mono_b = bool(np.all(np.diff(finite) <= 0) and np.all(finite >= 0))
    mono_h = bool(np.all(np.diff(gap_h) <= 0) and np.all(gap_h >= 0))
    return ConvergenceReport(Ns, gap_h, expected, gap_b, mono_h, mono_b)
