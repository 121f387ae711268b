import itertools
import math

import numpy as np
import pytest

import glauberlab.learn as learn
from glauberlab.exact import gibbs_table
from glauberlab.hamiltonian import DimensionError, corners
from glauberlab.learn import (DivergenceError, IsingParams, compress, cycle_params, exact_kl,
                              exact_samples, fit_pl, learning_curve, load_params, pl_grad,
                              pl_loss, project, project_l1_ball, save_params, sk_params)
from oracles import brute_gibbs


def _random_params(n, rng, scale=0.5):
    g = np.triu(rng.normal(size=(n, n)) * scale, 1)
    return IsingParams(g + g.T, rng.normal(size=n) * scale)


def _naive_loss(J, h, x):
    total = 0.0
    for row in x:
        for j in range(len(row)):
            z = row[j] * (J[j] @ row + h[j])
            total += math.log1p(math.exp(-2 * z))
    return total / len(x)


def test_loss_at_zero():
    x = np.random.default_rng(0).choice([-1, 1], size=(50, 7))
    assert pl_loss(IsingParams.zeros(7), x) == pytest.approx(7 * math.log(2), rel=1e-14)


def test_loss_saturates():
    p = IsingParams(np.zeros((4, 4)), np.full(4, 50.0))
    assert pl_loss(p, np.ones((1, 4))) <= 4 * math.exp(-100) * 1.01
    assert pl_loss(p, -np.ones((1, 4))) == pytest.approx(4 * 100.0)


def test_loss_matches_naive():
    rng = np.random.default_rng(1)
    p = _random_params(5, rng)
    x = rng.choice([-1, 1], size=(40, 5))
    assert pl_loss(p, x) == pytest.approx(_naive_loss(p.J, p.h, x), rel=1e-12)


def test_loss_rejects_bad_input():
    with pytest.raises(ValueError):
        pl_loss(IsingParams.zeros(2), np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        pl_loss(IsingParams.zeros(2), np.array([[1, 0]]))
    with pytest.raises(DimensionError):
        pl_loss(IsingParams.zeros(3), np.ones((2, 2)))


def test_params_invariants():
    with pytest.raises(ValueError):
        IsingParams(np.array([[0, 1.0], [0.5, 0]]), np.zeros(2))
    with pytest.raises(ValueError):
        IsingParams(np.eye(2), np.zeros(2))


def test_gradient_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(5):
        n = int(rng.integers(3, 7))
        p = _random_params(n, rng)
        x = rng.choice([-1, 1], size=(60, n))
        gJ, gh = pl_grad(p, x)
        eps = 1e-5
        for i, j in itertools.combinations(range(n), 2):
            d = np.zeros((n, n))
            d[i, j] = d[j, i] = eps
            fd = (pl_loss(IsingParams(p.J + d, p.h), x) - pl_loss(IsingParams(p.J - d, p.h), x)) / (2 * eps)
            assert abs(gJ[i, j] - fd) <= 1e-6
            assert gJ[i, j] == gJ[j, i]
        for j in range(n):
            e = np.zeros(n)
            e[j] = eps
            fd = (pl_loss(IsingParams(p.J, p.h + e), x) - pl_loss(IsingParams(p.J, p.h - e), x)) / (2 * eps)
            assert abs(gh[j] - fd) <= 1e-6


def test_convexity_probe():
    rng = np.random.default_rng(3)
    n = 5
    x = rng.choice([-1, 1], size=(80, n))
    for _ in range(100):
        a, b = _random_params(n, rng, 2.0), _random_params(n, rng, 2.0)
        mid = IsingParams((a.J + b.J) / 2, (a.h + b.h) / 2)
        assert pl_loss(mid, x) <= (pl_loss(a, x) + pl_loss(b, x)) / 2 + 1e-9


def test_l1_projection():
    rng = np.random.default_rng(4)
    for _ in range(50):
        v = rng.normal(size=6) * 3
        r = float(rng.uniform(0.1, 5))
        p = project_l1_ball(v, r)
        assert np.abs(p).sum() <= r + 1e-12
        np.testing.assert_array_equal(project_l1_ball(p, r), p)
        # optimality against random feasible points
        for _ in range(20):
            q = project_l1_ball(rng.normal(size=6) * 3, r)
            assert np.linalg.norm(v - p) <= np.linalg.norm(v - q) + 1e-12


def test_box_projection_feasible_and_idempotent():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(2, 8))
        J = rng.normal(size=(n, n)) * 2
        h = rng.normal(size=n) * 2
        R = float(rng.uniform(0.2, 3))
        Jp, hp = project(J, h, R)
        assert np.array_equal(Jp, Jp.T) and not np.any(np.diag(Jp))
        assert np.abs(Jp).sum(axis=1).max() <= R and np.abs(hp).max() <= R
        J2, h2 = project(Jp, hp, R)
        np.testing.assert_array_equal(J2, Jp)
        np.testing.assert_array_equal(h2, hp)


def test_product_recovery():
    n, m = 6, 100_000
    rng = np.random.default_rng(6)
    h_true = rng.uniform(-1, 1, n)
    x = exact_samples(IsingParams(np.zeros((n, n)), h_true), m, rng)
    fit = fit_pl(x, 2.0)
    target = np.arctanh(x.mean(axis=0))
    assert np.max(np.abs(fit.params.h - target)) <= 0.02
    assert np.max(np.abs(fit.params.J)) <= 0.02


def test_fit_tracks_best_loss():
    rng = np.random.default_rng(7)
    x = exact_samples(sk_params(5, 0.4, rng), 3000, rng)
    fit = fit_pl(x, 1.5, 300)
    assert fit.final_loss <= min(fit.losses) + 0.0
    assert fit.final_loss == pytest.approx(pl_loss(fit.params, x), rel=1e-14)
    assert np.abs(fit.params.J).sum(axis=1).max() <= 1.5
    assert fit.op_norm == pytest.approx(np.max(np.abs(np.linalg.eigvalsh(fit.params.J))))


def test_duplication_invariance():
    rng = np.random.default_rng(8)
    x = exact_samples(cycle_params(5, 0.3), 500, rng)
    a = fit_pl(x, 2.0, 200)
    b = fit_pl(np.vstack([x, x]), 2.0, 200)
    np.testing.assert_array_equal(a.params.J, b.params.J)
    np.testing.assert_array_equal(a.params.h, b.params.h)
    assert compress(x).m == 500


def test_divergence_error(monkeypatch):
    calls = itertools.count()
    monkeypatch.setattr(learn, "_loss", lambda J, h, data: float(next(calls)))
    x = np.ones((3, 2))
    with pytest.raises(DivergenceError):
        fit_pl(x, 1.0, 100, step0=1e-12)


def test_fit_rejects_bad_radius():
    with pytest.raises(ValueError):
        fit_pl(np.ones((2, 2)), 0.0)


def test_cycle_kl_improves_with_m():
    truth = cycle_params(6, 0.3)
    table = truth.table()
    means = []
    for m in (10**3, 10**5):
        kls = []
        for s in range(5):
            rng = np.random.default_rng([s, m])
            kls.append(exact_kl(table, fit_pl(exact_samples(table, m, rng), 2.0).params))
        means.append(np.mean(kls))
    assert means[1] < means[0]


def test_exact_kl_identity():
    rng = np.random.default_rng(9)
    for _ in range(10):
        p = _random_params(5, rng)
        assert abs(exact_kl(p.table(), p)) <= 1e-10


def test_exact_kl_binary_closed_form():
    n = 3
    h = np.array([0.5, 0.0, 0.0])
    q = math.exp(0.5) / (2 * math.cosh(0.5))
    closed = -math.log(2) - 0.5 * math.log(q) - 0.5 * math.log(1 - q)
    uniform = IsingParams.zeros(n).table()
    kl = exact_kl(uniform, IsingParams(np.zeros((n, n)), h))
    assert kl == pytest.approx(closed, abs=1e-12)
    qb = brute_gibbs({(0,): 0.5}, n)
    enum = float(np.sum(uniform.probs * np.log(uniform.probs / qb)))
    assert kl == pytest.approx(enum, abs=1e-12)


def test_pinsker():
    rng = np.random.default_rng(10)
    for _ in range(20):
        p, q = _random_params(4, rng), _random_params(4, rng)
        tv = 0.5 * np.abs(p.table().probs - q.table().probs).sum()
        assert exact_kl(p.table(), q) >= 0.5 * tv**2 - 1e-15
        assert exact_kl(p.table(), q) >= 0


def test_learning_curve_sk():
    truth = sk_params(8, 0.2, np.random.default_rng(11))
    rows = learning_curve(truth, [10**3, 10**4, 10**5], range(5))
    kl = [r["mean_kl"] for r in rows]
    assert kl[0] > kl[1] > kl[2]
    assert rows[0]["reference"] == pytest.approx(kl[0])
    assert rows[2]["reference"] == pytest.approx(kl[0] / 10)


def test_learning_curve_product_factor():
    rows = learning_curve(IsingParams.zeros(6), [10**3, 10**5], range(5))
    assert rows[0]["mean_kl"] >= 3 * rows[1]["mean_kl"]


def test_learning_curve_empty():
    assert learning_curve(IsingParams.zeros(3), [], range(3)) == []


def test_exact_samples_law():
    p = cycle_params(3, 0.5, 0.2)
    x = exact_samples(p, 200_000, np.random.default_rng(12))
    emp = np.array([np.mean(np.all(x == s, axis=1)) for s in corners(3)])
    assert 0.5 * np.abs(emp - gibbs_table(p.hamiltonian()).probs).sum() <= 3 * math.sqrt(8 / 200_000)


def test_params_json_roundtrip(tmp_path):
    p = _random_params(4, np.random.default_rng(13))
    save_params(p, tmp_path / "p.json", 1.25)
    q = load_params(tmp_path / "p.json")
    np.testing.assert_array_equal(q.J, p.J)
    np.testing.assert_array_equal(q.h, p.h)
