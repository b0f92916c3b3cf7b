import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exchbounds import bounds as B
from exchbounds import oracle as O
from exchbounds.core import Population
from exchbounds.errors import BudgetError, DomainError

X31, W31 = [1.0, -1.0], [1.0, -1.0]


def brute_law(x, w, n):
    """Independent enumeration with a dict of rounded atoms."""
    x = np.asarray(x, float)
    xbar = x.mean()
    atoms = {}
    perms = list(itertools.permutations(range(x.size), n))
    for p in perms:
        s = round(sum(wi * (x[j] - xbar) for wi, j in zip(w, p)), 9)
        atoms[s] = atoms.get(s, 0) + 1
    keys = sorted(atoms)
    return np.array(keys), np.array([atoms[k] / len(perms) for k in keys])


instance_st = st.integers(2, 5).flatmap(lambda N: st.tuples(
    st.lists(st.floats(-1, 1), min_size=N, max_size=N),
    st.integers(1, N).flatmap(lambda n: st.lists(st.floats(-2, 2), min_size=n, max_size=n)),
))


# --- exact law ----------------------------------------------------------------

def test_exact_law_examples():
    law = O.exact_law([1, 0, -1], [1, 0, 0], 3)
    np.testing.assert_allclose(law.values, [-1, 0, 1])
    np.testing.assert_allclose(law.probs, [1 / 3] * 3)
    assert O.exact_tail(law, 1) == pytest.approx(1 / 3, abs=1e-15)
    assert O.exact_tail(law, 0) == pytest.approx(2 / 3, abs=1e-15)
    assert O.exact_tail(law, -5) == pytest.approx(1.0, abs=1e-15)
    assert O.exact_tail(law, 1.5) == 0.0

    law = O.exact_law(X31, W31)
    assert law.atoms == [(-2.0, 0.5), (2.0, 0.5)]

    law = O.exact_law([0.3] * 4, [1, -2, 3])
    assert law.atoms == [(0.0, 1.0)]


def test_exact_mgf_examples():
    law = O.exact_law(X31, W31)
    assert O.exact_mgf(law, 0.5) == pytest.approx(math.cosh(1.0), abs=1e-14)
    assert O.exact_mgf(law, 0.0) == 1.0
    assert O.exact_mgf(law, 1.0) == pytest.approx(3.7621956910836314, abs=1e-13)
    assert O.exact_mgf(law, 1.0) > math.exp(B.hoeffding_iid(W31).exponent(1.0))
    lams = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(O.exact_log_mgf(law, lams), np.log(np.cosh(2 * lams)), atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(instance_st)
def test_exact_law_matches_brute_force(inst):
    x, w = inst
    law = O.exact_law(x, w)
    vals, probs = brute_law(x, w, len(w))
    # compare through the CDF on a shared grid, robust to how near-ties merge
    grid = np.union1d(vals, law.values)
    cdf_a = [probs[vals <= t + 1e-8].sum() for t in grid]
    cdf_b = [law.probs[law.values <= t + 1e-8].sum() for t in grid]
    np.testing.assert_allclose(cdf_a, cdf_b, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(instance_st, st.randoms())
def test_law_invariant_under_permutations(inst, rnd):
    x, w = inst
    px, pw = list(x), list(w)
    rnd.shuffle(px)
    rnd.shuffle(pw)
    base = O.exact_law(x, w)
    lams = np.linspace(-2, 2, 9)
    for other in (O.exact_law(px, w), O.exact_law(x, pw)):
        np.testing.assert_allclose(O.exact_mgf(other, lams), O.exact_mgf(base, lams), rtol=1e-12)
        assert abs(other.mean() - base.mean()) <= 1e-12
        assert abs(other.variance() - base.variance()) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(instance_st)
def test_sum_is_centered(inst):
    x, w = inst
    law = O.exact_law(x, w)
    assert abs(law.mean()) <= 1e-12
    assert law.probs.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.diff(law.values) > O.ATOM_TOL)


@settings(max_examples=30, deadline=None)
@given(instance_st)
def test_mgf_convex_and_one_at_zero(inst):
    x, w = inst
    law = O.exact_law(x, w)
    lams = np.linspace(-3, 3, 61)
    m = O.exact_mgf(law, lams)
    assert O.exact_mgf(law, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert np.all(m[:-2] + m[2:] - 2 * m[1:-1] >= -1e-12 * m[1:-1])


def test_exact_law_worker_independence():
    rng = np.random.default_rng(3)
    x, w = O.random_instance(rng, 7, 6)
    a = O.exact_law(x, w, workers=1)
    b = O.exact_law(x, w, workers=4)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.probs, b.probs)


def test_budget_error_names_count():
    with pytest.raises(BudgetError, match="3628800"):
        O.exact_law(np.zeros(10), np.ones(10), budget=10**6)
    with pytest.raises(DomainError):
        O.exact_law([1, -1], [1, 1, 1])


def test_cache_round_trip(tmp_path):
    x, w = [0.5, -0.25, 1.0, -1.0], [1.0, -0.5, 2.0]
    first = O.exact_law(x, w, cache_dir=tmp_path)
    files = list(tmp_path.glob("*.npz"))
    assert len(files) == 1 and files[0].stem == first.digest
    again = O.exact_law(x, w, cache_dir=tmp_path)
    assert np.array_equal(first.values, again.values) and np.array_equal(first.probs, again.probs)
    assert O.source_digest(x, w, 3) != O.source_digest(x, w[::-1], 3)


# --- dominance scans ------------------------------------------------------------

def test_scan_example_instance():
    fail = O.mgf_dominance_scan(X31, W31, 2, B.hoeffding_iid(W31))
    assert not fail.passed and fail.min_margin < 0
    i = int(np.argmin(np.abs(fail.lambdas - 1.0)))
    assert fail.lambdas[i] == pytest.approx(1.0, abs=0.05)
    assert fail.margins[i] < 0

    ok = O.mgf_dominance_scan(X31, W31, 2, B.hoeffding_exch(W31, 2))
    assert ok.passed
    np.testing.assert_allclose(ok.margins, 2 * ok.lambdas**2 - np.log(np.cosh(2 * ok.lambdas)), atol=1e-12)
    assert np.all(ok.margins[ok.lambdas != 0] > 0)


def test_scan_constant_population():
    w = [1.0, -0.5, 2.0]
    cert = B.hoeffding_exch(w, 4)
    rep = O.mgf_dominance_scan([0.2] * 4, w, 3, cert)
    np.testing.assert_allclose(rep.margins, rep.exponents, atol=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_scans_pass_for_valid_certificates(seed):
    rng = np.random.default_rng(seed)
    N = 2 + seed
    x, w = O.random_instance(rng, N, N)
    pop = Population(x)
    assert O.mgf_dominance_scan(x, w, N, B.hoeffding_exch(w, N)).passed
    assert O.mgf_dominance_scan(x, w, N, B.bernstein_exch(w, pop)).passed
    xn, wn = O.random_instance(rng, N, N, nonnegative=True)
    assert O.mgf_dominance_scan(xn, wn, N, B.hoeffding_exch_nonneg(wn)).passed
    ones = np.ones(N)
    assert O.mgf_dominance_scan(x, ones, N, B.serfling_unweighted(N, N)).passed


def test_serfling_scan_with_partial_draws():
    x = np.linspace(-1, 1, 7)
    for n in range(1, 7):
        assert O.mgf_dominance_scan(x, np.ones(n), n, B.serfling_unweighted(n, 7)).passed


# --- martingales ------------------------------------------------------------------

def test_martingale_examples():
    rep = O.martingale_check([1, -1, 0], [1, 1, 1], 0.7, O.HOEFFDING)
    assert rep.passed and rep.worst_ratio <= 1.0
    assert rep.states_checked == 7

    rep = O.martingale_check([1, 0, -1, 0.5], [1, -1, 1, -1], 0.4, O.BERNSTEIN)
    assert rep.passed and rep.asserted and rep.worst_ratio <= 1.0


def test_martingale_constant_population():
    v = np.array([0.5, -1.5, 1.0])
    lam = 0.3
    rep = O.martingale_check([0.1] * 3, v, lam, O.HOEFFDING)
    assert rep.worst_ratio == pytest.approx(max(np.exp(-lam**2 * v**2 / 2)), rel=1e-14)
    path = O.martingale_path([0.1] * 3, v, lam)
    np.testing.assert_allclose(path.values[1:] / path.values[:-1], np.exp(-lam**2 * v**2 / 2), rtol=1e-14)
    assert path.values[0] == 1.0 and path.k == 3


def test_martingale_bernstein_domains():
    v = [1.0, -1.0, 0.5]
    assert O.bernstein_conservative_limit(v) == pytest.approx(2 / 3)
    assert O.bernstein_proof_limit(v) == pytest.approx(1.5)
    gap = O.martingale_check([1, 0, -1], v, 1.0, O.BERNSTEIN)
    assert gap.in_gap and not gap.asserted
    with pytest.raises(DomainError):
        O.martingale_check([1, 0, -1], v, 1.5, O.BERNSTEIN)
    with pytest.raises(BudgetError):
        O.martingale_check(np.zeros(8), np.ones(8), 0.1)


@pytest.mark.parametrize("family", [O.HOEFFDING, O.BERNSTEIN])
def test_expected_terminal_value_at_most_one(family):
    # E[M_n] <= 1 follows from the supermartingale property; check it by brute force
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(2, 6))
        x, v = O.random_instance(rng, n, n)
        lam = rng.uniform(-1, 1) * 0.99 * O.bernstein_conservative_limit(v)
        ends = [O.martingale_path(x[list(p)], v, lam, family).values[-1]
                for p in itertools.permutations(range(n))]
        assert np.mean(ends) <= 1 + 1e-10
        assert O.martingale_check(x, v, lam, family).passed


def test_suffix_variance_examples():
    rep = O.suffix_variance_domination_check([1, 0, -1])
    assert rep.passed and rep.checks == 18
    assert rep.worst_gap == pytest.approx(0.0, abs=1e-15)  # i = 1 gives equality
    # ordering (1, 0, -1), i = 2: lhs 1/4, rhs 1/2
    tail = np.array([0.0, -1.0])
    assert tail.var() == 0.25 and np.mean((tail - 0.0) ** 2) == 0.5
    rep = O.suffix_variance_domination_check([0.4] * 5)
    assert rep.passed and rep.worst_gap == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=6))
def test_suffix_variance_always_dominated(x):
    assert O.suffix_variance_domination_check(x).passed


# --- tightness search ------------------------------------------------------------

def test_tightness_two_point_recovers_factor_two():
    rep = O.tightness_search(2, trials=4, seed=0)
    assert rep.best_ratio == pytest.approx(2.0, abs=1e-3)
    assert sorted(np.abs(rep.witness_x)) == [1.0, 1.0]
    assert rep.witness_x.sum() == 0.0
    assert rep.witness_w[0] == pytest.approx(-rep.witness_w[1], rel=1e-3)
    assert rep.best_ratio <= 2.0 + 1e-9


def test_tightness_nonnegative_never_exceeds_one():
    for N in (2, 3, 4):
        rep = O.tightness_search(N, trials=3, seed=N, nonnegative=True, iterations=15)
        assert rep.best_ratio <= 1 + 1e-9


def test_tightness_empty():
    rep = O.tightness_search(3, trials=0)
    assert rep.trials == 0 and rep.best_ratio is None and rep.history == []
