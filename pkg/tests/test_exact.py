import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glauberlab.exact import (ExactGibbsTable, WalkOperator, at_constant_search, comparison_check,
                              correlation_matrix_spin, dirichlet_form, dirichlet_form_cosh,
                              entropy_functional, flc_falsify, flc_matrix, gap_eigenvector,
                              gibbs_table, glauber_operator, measured_mixing_time,
                              mixing_time_bounds, mlsi_ratio, mlsi_search, sample_exact,
                              si_from_contraction, site_entropies, site_entropy_sum,
                              spectral_gap, spectral_independence_eta, tilt)
from glauberlab.hamiltonian import SpinHamiltonian, corners, random_hamiltonian
from glauberlab.learn import cycle_params
from oracles import brute_gibbs, brute_glauber, gap_dense, random_terms, spin_grid


def product(n, fields):
    return SpinHamiltonian(n, {(i,): float(v) for i, v in enumerate(fields)})


# ---------------------------------------------------------------- tables

def test_uniform_table():
    t = gibbs_table(SpinHamiltonian(3, {}))
    np.testing.assert_allclose(t.probs, np.full(8, 1 / 8))
    assert t.log_Z == pytest.approx(3 * math.log(2))


def test_one_site_table():
    h = 0.7
    t = gibbs_table(product(1, [h]))
    np.testing.assert_allclose(t.probs, np.array([math.exp(h), math.exp(-h)]) / (2 * math.cosh(h)))


def test_random_table_matches_enumeration():
    rng = np.random.default_rng(0)
    terms = random_terms(6, 3, rng)
    t = gibbs_table(SpinHamiltonian(6, terms))
    assert abs(t.probs.sum() - 1) <= 1e-12
    np.testing.assert_allclose(t.probs, brute_gibbs(terms, 6), rtol=1e-10)


def test_table_rejects_bad_mass():
    with pytest.raises(ValueError):
        ExactGibbsTable(1, np.array([0.5, 0.6]))


# ---------------------------------------------------------------- Glauber operator

def test_glauber_small_cases():
    np.testing.assert_allclose(glauber_operator(gibbs_table(SpinHamiltonian(1, {}))).dense(),
                               [[0.5, 0.5], [0.5, 0.5]])
    P = glauber_operator(gibbs_table(SpinHamiltonian(2, {}))).dense()
    np.testing.assert_allclose(np.diag(P), 0.5)
    assert P[0, 1] == pytest.approx(0.25) and P[0, 3] == 0.0


def test_glauber_matches_brute_force():
    rng = np.random.default_rng(1)
    terms = random_terms(5, 3, rng, 0.6)
    op = glauber_operator(gibbs_table(SpinHamiltonian(5, terms)))
    P, _ = brute_glauber(terms, 5)
    np.testing.assert_allclose(op.dense(), P, atol=1e-13)
    assert op.is_reversible()


def test_sparse_and_dense_agree():
    rng = np.random.default_rng(2)
    t = gibbs_table(random_hamiltonian(7, 2, rng, scale=0.4))
    a = glauber_operator(t, sparse=True)
    b = glauber_operator(t, sparse=False)
    assert spectral_gap(a) == pytest.approx(spectral_gap(b), abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 6, 10])
def test_uniform_gap(n):
    op = glauber_operator(gibbs_table(SpinHamiltonian(n, {})))
    assert abs(spectral_gap(op) - 1 / n) <= 1e-10


def test_uniform_gap_full_eigendecomposition():
    for n in (2, 3, 4):
        P, pi = brute_glauber({}, n)
        assert gap_dense(P, pi) == pytest.approx(1 / n, abs=1e-12)


def test_one_site_gap_is_one():
    for h in (0.0, 0.4, -2.5):
        assert spectral_gap(glauber_operator(gibbs_table(product(1, [h])))) == pytest.approx(1.0)


def test_cycle_gap_decreases_with_coupling():
    gaps = []
    for beta in (0.1, 0.3, 0.6, 1.0):
        t = cycle_params(4, beta).table()
        gaps.append(spectral_gap(glauber_operator(t)))
    assert all(g < 1 / 4 for g in gaps)
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_gap_eigenvector_is_eigenvector():
    rng = np.random.default_rng(3)
    op = glauber_operator(gibbs_table(random_hamiltonian(4, 2, rng)))
    g = gap_eigenvector(op)
    lam = 1 - spectral_gap(op)
    np.testing.assert_allclose(op.dense() @ g, lam * g, atol=1e-10)


def test_walk_operator_validation():
    with pytest.raises(ValueError):
        WalkOperator(np.array([[0.5, 0.6], [0.5, 0.5]]), np.array([0.5, 0.5]), "bad")


# ---------------------------------------------------------------- Dirichlet forms

def test_dirichlet_constant_is_zero():
    rng = np.random.default_rng(4)
    h = random_hamiltonian(4, 2, rng)
    t = gibbs_table(h)
    f = np.full(16, 2.5)
    assert dirichlet_form(glauber_operator(t), f) == 0.0
    assert dirichlet_form_cosh(h, t, f) == 0.0


def test_dirichlet_two_state():
    h = SpinHamiltonian(1, {})
    t = gibbs_table(h)
    f = np.array([1.0, 0.0])
    assert dirichlet_form(glauber_operator(t), f) == pytest.approx(0.25)
    assert dirichlet_form_cosh(h, t, f) == pytest.approx(0.25)


def test_dirichlet_cosh_identity_random():
    rng = np.random.default_rng(5)
    for trial in range(50):
        n = 1 + trial % 6
        h = random_hamiltonian(n, min(3, n), rng, scale=rng.uniform(0.1, 1.5))
        t = gibbs_table(h)
        f = rng.normal(size=2**n)
        a = dirichlet_form(glauber_operator(t), f)
        assert abs(a - dirichlet_form_cosh(h, t, f)) <= 1e-10
        # the rate-one-per-site normalization is n times larger
        assert dirichlet_form_cosh(h, t, f, per_step=False) == pytest.approx(n * a, rel=1e-12)


# ---------------------------------------------------------------- correlation matrices

def test_uniform_correlation_blocks():
    psi = correlation_matrix_spin(gibbs_table(SpinHamiltonian(3, {})))
    expect = np.kron(np.eye(3), [[0.5, -0.5], [-0.5, 0.5]])
    np.testing.assert_allclose(psi.matrix, expect, atol=1e-14)
    assert psi.lambda_max == pytest.approx(1.0)


def test_correlation_matches_conditioning():
    rng = np.random.default_rng(6)
    terms = random_terms(4, 2, rng)
    p = brute_gibbs(terms, 4)
    grid = spin_grid(4)
    psi = correlation_matrix_spin(gibbs_table(SpinHamiltonian(4, terms))).matrix
    for (i, s), (j, t) in itertools.product(itertools.product(range(4), (1, -1)), repeat=2):
        cond = grid[:, i] == s
        both = cond & (grid[:, j] == t)
        want = p[both].sum() / p[cond].sum() - p[grid[:, j] == t].sum()
        a = 2 * i + (s < 0)
        b = 2 * j + (t < 0)
        assert psi[a, b] == pytest.approx(want, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=10))
def test_product_eta_is_one(fields):
    t = gibbs_table(product(len(fields), fields))
    assert spectral_independence_eta(t) == pytest.approx(1.0, abs=1e-9)


def test_eta_gap_bound_small_sweep():
    rng = np.random.default_rng(7)
    for trial in range(40):
        n = 2 + trial % 5
        g = np.triu(rng.normal(size=(n, n)), 1) * 0.3
        h = SpinHamiltonian.from_ising(g + g.T, rng.normal(size=n) * 0.5)
        t = gibbs_table(h)
        gap = spectral_gap(glauber_operator(t))
        assert spectral_independence_eta(t) <= 1 / (n * gap) + 1e-9


# ---------------------------------------------------------------- tilts and FLC

def test_tilt_examples():
    t = gibbs_table(SpinHamiltonian(2, {(0, 1): 0.5}))
    np.testing.assert_allclose(tilt(t, np.ones(2)).probs, t.probs)
    u = tilt(gibbs_table(SpinHamiltonian(1, {})), np.array([3.0]))
    assert u.marginals()[0] == pytest.approx(0.75)
    a, b = np.array([2.0, 0.5]), np.array([0.3, 4.0])
    np.testing.assert_allclose(tilt(tilt(t, a), b).probs, tilt(t, a * b).probs)


def test_flc_product_passes():
    rng = np.random.default_rng(8)
    t = gibbs_table(product(4, rng.normal(size=4)))
    res = flc_falsify(t, 1.0, 256, seed=1)
    assert res.passed and res.checked == 257


def test_flc_curie_weiss_fails():
    n = 6
    J = (2 / n) * (np.ones((n, n)) - np.eye(n))
    res = flc_falsify(gibbs_table(SpinHamiltonian.from_ising(J)), 1.0, 256, seed=0)
    assert not res.passed
    assert res.witness_eigenvalue > 1e-10


def test_flc_small_alpha_is_negative():
    rng = np.random.default_rng(9)
    t = gibbs_table(random_hamiltonian(4, 2, rng))
    tops = [np.linalg.eigvalsh(flc_matrix(t, a))[-1] for a in (0.1, 0.01, 0.001)]
    assert all(v < 0 for v in tops)
    assert tops[0] < tops[1] < tops[2]


# ---------------------------------------------------------------- entropy

def test_entropy_constant_zero():
    t = gibbs_table(SpinHamiltonian(3, {(0, 1): 1.0}))
    assert entropy_functional(t, np.full(8, 3.0)) == pytest.approx(0.0, abs=1e-15)
    assert site_entropy_sum(t, np.full(8, 3.0)) == pytest.approx(0.0, abs=1e-15)


def test_entropy_direct_formula():
    rng = np.random.default_rng(10)
    t = gibbs_table(random_hamiltonian(3, 2, rng))
    f = rng.exponential(size=8)
    p = t.probs
    m = p @ f
    assert entropy_functional(t, f) == pytest.approx(p @ (f * np.log(f)) - m * math.log(m))


def test_entropy_accurate_near_constant():
    t = gibbs_table(SpinHamiltonian(1, {}))
    d = 1e-7
    f = np.array([1 + d, 1 - d])
    # Ent = ((1+d)log(1+d) + (1-d)log(1-d)) / 2 = d^2/2 + d^4/12 + ...
    assert entropy_functional(t, f) == pytest.approx(d * d / 2, rel=1e-9)


def test_product_tensorization():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = rng.integers(1, 6)
        t = gibbs_table(product(n, rng.normal(size=n)))
        f = rng.exponential(size=2**n)
        assert entropy_functional(t, f) <= site_entropy_sum(t, f) + 1e-12
        assert site_entropies(t, f).sum() == pytest.approx(site_entropy_sum(t, f))


def test_at_search_bounds_random_pairs():
    rng = np.random.default_rng(12)
    t = gibbs_table(random_hamiltonian(5, 2, rng, scale=0.5))
    C = at_constant_search(t, restarts=6, seed=0).value
    for _ in range(200):
        f = np.exp(rng.normal(scale=2, size=32))
        assert entropy_functional(t, f) <= C * site_entropy_sum(t, f) * (1 + 1e-9)


def test_at_product_is_one():
    rng = np.random.default_rng(13)
    for n in range(1, 6):
        t = gibbs_table(product(n, rng.uniform(-2, 2, n)))
        assert at_constant_search(t, restarts=10, seed=n).value <= 1 + 1e-6


def test_at_two_site_reproducible():
    t = gibbs_table(SpinHamiltonian(2, {(0, 1): 0.2}))
    vals = [at_constant_search(t, seed=s).value for s in range(3)]
    assert max(vals) - min(vals) <= 1e-3
    grid = np.linspace(-8, 8, 33)
    best = 0.0
    for a, b, c in itertools.product(grid, repeat=3):
        f = np.exp(np.array([0.0, a, b, c]))
        s = site_entropy_sum(t, f)
        if s > 1e-12:
            best = max(best, entropy_functional(t, f) / s)
    assert min(vals) >= best - 1e-9
    assert min(vals) <= best * 1.01


# ---------------------------------------------------------------- MLSI

def test_mlsi_linearization():
    rng = np.random.default_rng(14)
    t = gibbs_table(random_hamiltonian(3, 2, rng, scale=0.5))
    op = glauber_operator(t)
    g = (corners(3)[:, 0] > 0).astype(float)
    g -= t.probs @ g
    rayleigh = dirichlet_form(op, g) / (t.probs @ g**2)
    assert mlsi_ratio(t, op, 1 + 1e-3 * g) == pytest.approx(2 * rayleigh, rel=0.05)


def test_mlsi_two_state_grid():
    t = gibbs_table(SpinHamiltonian(1, {}))
    op = glauber_operator(t)
    a = np.logspace(-6, 6, 20001)
    grid = min(mlsi_ratio(t, op, np.array([x, 1.0])) for x in a if abs(x - 1) > 1e-9)
    assert abs(mlsi_search(t, op).value - grid) <= 1e-6


def test_mlsi_upper_bound_near_twice_gap():
    rng = np.random.default_rng(15)
    t = gibbs_table(random_hamiltonian(4, 2, rng, scale=0.5))
    op = glauber_operator(t)
    res = mlsi_search(t, op, restarts=4, seed=1)
    assert res.bound == "upper"
    assert res.value <= 2 * spectral_gap(op) * (1 + 1e-3)
    assert mlsi_ratio(t, op, res.witness) == pytest.approx(res.value)


# ---------------------------------------------------------------- mixing times

def test_mixing_bound_formulas():
    assert mixing_time_bounds(1.0, None, 0.5, 0.25)["lower_gamma"] == 0.0
    b = mixing_time_bounds(0.1, 0.05, 2.0**-10, 0.01)
    assert b["upper_gamma"] == pytest.approx(10 * math.log(100 * 2**10))
    assert b["upper_mlsi"] == pytest.approx(20 * (math.log(math.log(2**10)) + math.log(5000)))


def test_measured_mixing_in_sandwich():
    rng = np.random.default_rng(16)
    for n in range(2, 7):
        t = gibbs_table(random_hamiltonian(n, 2, rng, scale=0.4))
        op = glauber_operator(t, sparse=False)
        gap = spectral_gap(op)
        b = mixing_time_bounds(gap, None, float(t.probs.min()), 0.25)
        tau = measured_mixing_time(op, 0.25)
        assert b["lower_gamma"] <= tau <= b["upper_gamma"]


def test_measured_mixing_uniform_one_site():
    t = gibbs_table(SpinHamiltonian(1, {}))
    assert measured_mixing_time(glauber_operator(t), 0.25) == 1


# ---------------------------------------------------------------- comparison and misc

def test_comparison_zero_and_constant():
    rng = np.random.default_rng(17)
    base = gibbs_table(random_hamiltonian(3, 2, rng))
    r = comparison_check(base, np.zeros(8), trials=50)
    assert r["factor"] == 1.0 and r["violations"] == 0
    assert r["min_slack"] >= -1e-12
    r = comparison_check(base, np.full(8, 0.7), trials=50)
    assert r["factor"] == pytest.approx(math.exp(1.4)) and r["min_slack"] >= 0


def test_comparison_random():
    rng = np.random.default_rng(18)
    base = gibbs_table(random_hamiltonian(5, 2, rng, scale=0.5))
    r = comparison_check(base, rng.normal(size=32), trials=1000, seed=3)
    assert r["violations"] == 0


def test_si_from_contraction():
    n = 7
    assert si_from_contraction(1 - 1 / n, n) == pytest.approx(1.0)
    assert si_from_contraction(0.0, 1) == 1.0
    assert si_from_contraction(1 - 2 / n, n) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        si_from_contraction(1.0, 3)


def test_sample_exact_frequencies():
    rng = np.random.default_rng(19)
    t = gibbs_table(random_hamiltonian(3, 2, rng))
    idx = sample_exact(t, 200_000, rng)
    freq = np.bincount(idx, minlength=8) / idx.size
    sd = np.sqrt(t.probs * (1 - t.probs) / idx.size)
    assert np.all(np.abs(freq - t.probs) <= 5 * sd)
