import math

import numpy as np
import pytest

from glauberlab.exact import gibbs_table, glauber_operator, sample_exact, spectral_gap
from glauberlab.hamiltonian import SpinHamiltonian, corners, random_hamiltonian, smoothness_beta
from glauberlab.sampler import (ChainState, default_burn_in, gap_estimate_autocorr, glauber_step,
                                initial_state, read_samples, run_chains, trajectory, transition_band_check,
                                transition_counts, tv_to_exact, write_samples)


def _spin_after_step(h, sigma, seeds):
    return np.array([glauber_step(h, ChainState(sigma, 0, 0, s)).sigma for s in seeds])


def test_zero_field_is_fair_coin():
    h = SpinHamiltonian(3, {})
    out = _spin_after_step(h, np.ones(3), range(20_000))
    changed = out.min(axis=1) < 0
    # a flip happens iff the chosen spin is resampled to -1: probability 1/2
    assert abs(changed.mean() - 0.5) < 4 * math.sqrt(0.25 / 20_000)


def test_saturated_field():
    h = SpinHamiltonian(1, {(0,): 50.0})
    out = _spin_after_step(h, -np.ones(1), range(5000))
    assert np.all(out == 1)


def test_step_changes_at_most_one_site():
    rng = np.random.default_rng(0)
    h = random_hamiltonian(7, 3, rng)
    st = initial_state(7, seed=3)
    for _ in range(200):
        nxt = glauber_step(h, st)
        assert np.sum(nxt.sigma != st.sigma) <= 1
        assert nxt.step == st.step + 1
        st = nxt


def test_chain_state_rejects_bad_spins():
    with pytest.raises(ValueError):
        ChainState(np.array([1, 0, -1]))


def test_vectorized_matches_single_steps():
    rng = np.random.default_rng(1)
    h = random_hamiltonian(5, 3, rng)
    res = run_chains(h, 3, 40, burn_in=0, seed=9)
    for c in range(3):
        st = initial_state(5, 9, c)
        for k in range(40):
            st = glauber_step(h, st)
            np.testing.assert_array_equal(res.samples[c, k], st.sigma)


def test_determinism_and_chain_independence():
    rng = np.random.default_rng(2)
    h = random_hamiltonian(6, 2, rng)
    a = run_chains(h, 2, 500, 100, 2, seed=5)
    b = run_chains(h, 2, 500, 100, 2, seed=5)
    np.testing.assert_array_equal(a.samples, b.samples)
    # chain streams do not depend on how many chains run together
    c = run_chains(h, 4, 500, 100, 2, seed=5)
    np.testing.assert_array_equal(a.samples, c.samples[:2])
    assert not np.array_equal(a.samples[0], a.samples[1])


def test_run_chains_validation():
    h = SpinHamiltonian(2, {})
    with pytest.raises(ValueError):
        run_chains(h, 0, 10, 0)
    with pytest.raises(ValueError):
        run_chains(h, 1, 10, 20)
    with pytest.raises(ValueError):
        run_chains(h, 1, 10, 0, thin=0)


def test_zero_hamiltonian_magnetization():
    n, chains = 8, 2000
    res = run_chains(SpinHamiltonian(n, {}), chains, 400, burn_in=200, thin=200, seed=1)
    x = res.flat()
    # each sample is uniform: the magnetization has variance 1/n per sample
    sd = math.sqrt(1 / n / x.shape[0])
    assert abs(x.mean()) <= 4 * sd


def test_small_beta_tv():
    rng = np.random.default_rng(3)
    h = random_hamiltonian(6, 2, rng, scale=0.05)
    assert smoothness_beta(h).beta <= 0.3
    res = run_chains(h, 1000, default_burn_in(6) + 1000, seed=2)
    assert res.flat().shape[0] == 10**6
    assert tv_to_exact(res.flat(), gibbs_table(h)) <= 0.05


def test_tv_exact_samples_rate():
    rng = np.random.default_rng(4)
    table = gibbs_table(random_hamiltonian(5, 3, rng, scale=0.5))
    for m in (10**3, 10**4, 10**5):
        x = corners(5, sample_exact(table, m, rng))
        assert tv_to_exact(x, table) <= 3 * math.sqrt(2**5 / m)


def test_tv_single_sample():
    rng = np.random.default_rng(5)
    table = gibbs_table(random_hamiltonian(4, 2, rng))
    assert tv_to_exact(corners(4)[3], table) >= 1 - table.probs.max() - 1e-15


def test_tv_mismatched_tables():
    h = SpinHamiltonian(4, {(i,): 3.0 for i in range(4)})
    neg = SpinHamiltonian(4, {(i,): -3.0 for i in range(4)})
    x = corners(4, sample_exact(gibbs_table(h), 10_000, np.random.default_rng(6)))
    assert tv_to_exact(x, gibbs_table(neg)) >= 0.99


def test_transition_frequencies_in_band():
    rng = np.random.default_rng(7)
    h = random_hamiltonian(5, 3, rng, scale=0.5)
    counts = transition_counts(h, 100, 10_000, seed=3)
    assert counts.sum() == 10**6
    res = transition_band_check(counts, glauber_operator(gibbs_table(h)))
    assert res["impossible_moves"] == 0
    assert res["pass"], res


def test_transition_band_detects_wrong_operator():
    rng = np.random.default_rng(8)
    h = random_hamiltonian(4, 2, rng)
    counts = transition_counts(h, 50, 4000, seed=1)
    other = SpinHamiltonian(4, {s: -c for s, c in h.terms.items()})
    assert not transition_band_check(counts, glauber_operator(gibbs_table(other)))["pass"]


def test_gap_estimate_uniform():
    n = 4
    tr = trajectory(SpinHamiltonian(n, {}), 100, 100_000, seed=2)
    g = gap_estimate_autocorr(tr, 0)
    assert abs(g - 1 / n) <= 0.25 / n


def test_gap_estimate_constant_rejected():
    with pytest.raises(ValueError):
        gap_estimate_autocorr(np.ones((2, 100)))


def test_gap_estimate_two_site_ising():
    h = SpinHamiltonian(2, {(0, 1): 0.3})
    table = gibbs_table(h)
    exact = spectral_gap(glauber_operator(table))
    tr = trajectory(h, 50, 20_000, seed=4, table=table)
    g = gap_estimate_autocorr(tr, lambda s: s.sum(axis=-1))
    assert exact / 2 <= g <= 2 * exact


@pytest.mark.parametrize("fmt", ["csv", "hex"])
def test_sample_file_roundtrip(tmp_path, fmt):
    rng = np.random.default_rng(9)
    x = rng.choice(np.array([-1, 1], dtype=np.int8), size=(30, 7))
    p = tmp_path / f"s.{fmt}"
    write_samples(p, x, {"chains": 1, "steps": 30, "seed": 0}, fmt)
    y, head = read_samples(p)
    np.testing.assert_array_equal(x, y)
    assert head["n"] == 7 and head["format"] == fmt and head["seed"] == 0


def test_hex_bit_convention(tmp_path):
    p = tmp_path / "s.hex"
    write_samples(p, np.array([[1, 1, 1, -1], [-1, 1, 1, 1]]), {}, "hex")
    assert p.read_text().splitlines()[1:] == ["1", "8"]
