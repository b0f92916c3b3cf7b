"""Acceptance criteria, one test each, at their stated tolerances and time limits.

Each test records a PASS/FAIL line; the lines are printed immediately and
again in the pytest terminal summary. Run directly with
``python3 tests/test_acceptance.py`` for the lines alone.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from exchbounds import bounds as B
from exchbounds import oracle as O
from exchbounds.core import Population, epsilon, epsilon_sequence
from exchbounds.montecarlo import SimConfig, coverage_experiment
from exchbounds.operators import (perm_average_gram_pinv, perm_average_suffix_mean,
                                  projection_identity_error)

RESULTS = {}
X31, W31 = [1.0, -1.0], [1.0, -1.0]


def record(number, title, ok, elapsed, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({elapsed:.2f}s){'; ' + detail if detail else ''}"
    RESULTS[number] = line
    print(line)
    assert ok, line


def test_criterion_1_two_point_example():
    t0 = time.perf_counter()
    law = O.exact_law(X31, W31)
    lams = np.linspace(-2, 2, 401)
    mgf_err = float(np.max(np.abs(O.exact_mgf(law, lams) - (np.exp(2 * lams) + np.exp(-2 * lams)) / 2)))
    at_one = O.exact_mgf(law, 1.0)
    iid_bound = math.exp(B.hoeffding_iid(W31).exponent(1.0))
    cert = B.hoeffding_exch(W31, 2)
    exch_margin = float(np.min(cert.exponent(lams) - O.exact_log_mgf(law, lams)))
    scan = O.mgf_dominance_scan(X31, W31, 2, cert, lambda_max=2.0, law=law)
    elapsed = time.perf_counter() - t0
    ok = (mgf_err <= 1e-12 and at_one > iid_bound and epsilon(2) == 1.0
          and exch_margin >= -1e-10 and scan.passed and elapsed < 1.0)
    record(1, "two-point example", ok, elapsed,
           f"max|mgf-cosh|={mgf_err:.2e}, M(1)={at_one:.5f} > e={iid_bound:.5f}, "
           f"exch min margin={exch_margin:.2e}")


def test_criterion_2_mgf_dominance_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    worst = {"hoeffding-exch": math.inf, "bernstein-exch": math.inf, "hoeffding-exch-nonneg": math.inf}
    count = 500
    for _ in range(count):
        N = int(rng.integers(2, 8))
        x, w = O.random_instance(rng, N, N)
        law = O.exact_law(x, w)
        h = O.mgf_dominance_scan(x, w, N, B.hoeffding_exch(w, N), grid_size=101, law=law)
        b = O.mgf_dominance_scan(x, w, N, B.bernstein_exch(w, Population(x)), grid_size=101, law=law)
        worst["hoeffding-exch"] = min(worst["hoeffding-exch"], h.min_margin)
        worst["bernstein-exch"] = min(worst["bernstein-exch"], b.min_margin)
    for _ in range(count):
        N = int(rng.integers(2, 8))
        x, w = O.random_instance(rng, N, N, nonnegative=True)
        r = O.mgf_dominance_scan(x, w, N, B.hoeffding_exch_nonneg(w), grid_size=101)
        worst["hoeffding-exch-nonneg"] = min(worst["hoeffding-exch-nonneg"], r.min_margin)
    elapsed = time.perf_counter() - t0
    ok = all(m >= -1e-10 for m in worst.values()) and elapsed < 60
    record(2, "MGF dominance suite (3 x 500 instances)", ok, elapsed,
           ", ".join(f"{k} min margin={v:.3e}" for k, v in worst.items()))


def test_criterion_3_operator_identities():
    t0 = time.perf_counter()
    ident = max(projection_identity_error(n) for n in range(2, 51))
    perm = 0.0
    for n in range(2, 8):
        perm = max(perm,
                   float(np.max(np.abs(perm_average_gram_pinv(n, "enumerate") - perm_average_gram_pinv(n)))),
                   float(np.max(np.abs(perm_average_suffix_mean(n, "enumerate") - perm_average_suffix_mean(n)))))
    harm3 = Fraction(1) + Fraction(1, 2) + Fraction(1, 3)
    exact_scalar = (3 - harm3) / 2
    avg3 = perm_average_gram_pinv(3, "enumerate")
    scalar = float(avg3[0, 0] / (1 - 1 / 3))
    elapsed = time.perf_counter() - t0
    ok = ident <= 1e-12 and perm <= 1e-12 and exact_scalar == Fraction(7, 12) and abs(scalar - 7 / 12) <= 1e-12
    record(3, "projection and permutation-average identities", ok, elapsed,
           f"identity err={ident:.2e}, enumeration err={perm:.2e}, n=3 scalar={scalar!r}")


def test_criterion_4_supermartingales():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    worst = {O.HOEFFDING: 0.0, O.BERNSTEIN: 0.0}
    for family in (O.HOEFFDING, O.BERNSTEIN):
        for _ in range(200):
            n = int(rng.integers(2, 7))
            x, v = O.random_instance(rng, n, n)
            if family == O.BERNSTEIN:
                limit = O.bernstein_conservative_limit(v)
            else:
                limit = O.default_lambda_max(v)
            lam = rng.uniform(-1.0, 1.0) * limit * (1 - 1e-9)
            rep = O.martingale_check(x, v, lam, family)
            assert rep.asserted
            worst[family] = max(worst[family], rep.worst_ratio)
    elapsed = time.perf_counter() - t0
    ok = all(r <= 1 + 1e-10 for r in worst.values()) and elapsed < 120
    record(4, "supermartingale ratios (2 x 200 instances)", ok, elapsed,
           ", ".join(f"{k} worst ratio={v:.15f}" for k, v in worst.items()))


def test_criterion_5_inflation_factor():
    t0 = time.perf_counter()
    exact = abs(epsilon(2) - 1.0) == 0.0
    e3 = abs(epsilon(3) - 5 / 7)
    e4 = abs(epsilon(4) - 13 / 23)
    N = np.arange(2, 10**6 + 1)
    env = bool(np.all(epsilon_sequence(10**6) <= 3 * np.log(N) / N))
    w = [1.0, -1.0]
    gap = B.hoeffding_exch(w, 10**6).exponent(1.0) - B.hoeffding_iid(w).exponent(1.0)
    expected = 0.5 * 2.0 * epsilon(10**6)
    ulp = np.finfo(float).eps * B.hoeffding_exch(w, 10**6).exponent(1.0)
    rep = B.iid_limit_check(w, 1.0, [2, 3, 4, 10, 100, 10**4, 10**6])
    # each gap is a difference of O(1) exponents; allow a few ulps of the larger one
    tol = 4 * np.finfo(float).eps * np.array([B.hoeffding_exch(w, N).exponent(1.0) for N in rep.Ns])
    identity = bool(np.all(np.abs(rep.hoeffding_gap - rep.hoeffding_expected_gap) <= tol))
    elapsed = time.perf_counter() - t0
    ok = (exact and e3 <= 1e-15 and e4 <= 1e-15 and env and abs(gap - expected) <= 4 * ulp
          and identity and gap < 2e-5 and rep.hoeffding_monotone)
    record(5, "inflation factor", ok, elapsed,
           f"|eps3-5/7|={e3:.1e}, |eps4-13/23|={e4:.1e}, gap(1e6)={gap:.6e}")


def test_criterion_6_monte_carlo_coverage():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    pop = Population(rng.uniform(-1.0, 1.0, 1000))
    w = rng.standard_normal(100)
    assert (w > 0).any() and (w < 0).any()
    cfg = SimConfig(pop, w, 100, 10**5, 6)
    rows = coverage_experiment(cfg, [B.HOEFFDING_EXCH, B.BERNSTEIN_EXCH], [0.5, 0.1, 0.05, 0.01])
    elapsed = time.perf_counter() - t0
    ok = len(rows) == 8 and all(r.passed for r in rows) and elapsed < 30
    worst = max(rows, key=lambda r: r.estimate.ci_low - r.delta)
    record(6, "Monte Carlo coverage", ok, elapsed,
           f"closest row {worst.kind} delta={worst.delta}: ci_low={worst.estimate.ci_low:.4g}")


def test_criterion_7_comparison_ordering():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    delta = 0.05
    gan_ok = True
    for N in list(range(3, 60)) + [100, 1000, 10**5]:
        n = int(rng.integers(2, min(N, 20) + 1))
        w = rng.standard_normal(n)
        ours = B.hoeffding_exch(w, N).radius(delta).radius
        gan = B.gan_stein_tail(w, delta).radius
        factor_ok = math.sqrt(2 * (1 + epsilon(N))) < 2 * math.sqrt(math.log(2 / delta) / math.log(1 / delta))
        gan_ok &= ours < gan and factor_ok
    pop = Population(X31)
    ratios = [B.polaczyk_tail(W31, pop, d).radius / B.bernstein_exch(W31, pop).radius(d).radius
              for d in (0.5, 0.1, 0.05, 0.01, 1e-6)]
    elapsed = time.perf_counter() - t0
    ok = gan_ok and min(ratios) > 5
    record(7, "comparison ordering", ok, elapsed,
           f"gan > hoeffding-exch for all N >= 3 tested, min polaczyk/bernstein-exch ratio={min(ratios):.3f}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
