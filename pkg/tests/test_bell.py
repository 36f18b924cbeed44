import numpy as np
import pytest
from hypothesis import given, strategies as st

from bellsim.bell import (
    BellScenario, Behaviour, Strategy, augment, behaviour_of, chsh_canonical, chsh_correlators,
    chsh_win_probability, classify, coins_correlated, coins_general, gallery, projectivize,
    restrict_full_rank, rotate,
)
from bellsim.channels import is_projective
from bellsim.sampling import haar_unitary, random_density, random_povm, random_strategy
from bellsim.tensor_core import ket, max_abs, projector
from cases import chsh_in_qutrits, product_scenario_strategy

seeds = st.integers(0, 2**32 - 1)

# Φ+ with observables cos θ σ_z + sin θ σ_x has correlator cos(θ_A - θ_B);
# A at 0, π/2 and B at ±π/4 give entries (1 ± 1/√2)/4
HIGH = (2 + np.sqrt(2)) / 8  # 0.42677669529663687
LOW = (2 - np.sqrt(2)) / 8   # 0.07322330470336313


def test_chsh_table():
    t = behaviour_of(chsh_canonical()).table
    same = np.array([[HIGH, LOW], [LOW, HIGH]])
    for xa in range(2):
        for xb in range(2):
            want = same if (xa, xb) != (1, 1) else same[::-1]
            assert max_abs(t[xa, xb] - want) < 1e-15
    assert abs(chsh_win_probability(behaviour_of(chsh_canonical())) - np.cos(np.pi / 8) ** 2) < 1e-15
    corr = chsh_correlators(behaviour_of(chsh_canonical()))
    assert max_abs(corr - np.array([[1, 1], [1, -1]]) / np.sqrt(2)) < 1e-15


def test_coins_and_product_behaviours():
    assert max_abs(behaviour_of(coins_correlated()).table.reshape(-1) - [0.5, 0, 0, 0.5]) < 1e-15
    s = product_scenario_strategy()
    assert max_abs(behaviour_of(s).table.reshape(-1) - [1, 0, 0, 0]) == 0


def test_strategy_invariants():
    sc = BellScenario.sized(1, 1, 2, 2)
    comp = [[projector(ket(0, 2)), projector(ket(1, 2))]]
    with pytest.raises(ValueError):
        Strategy(sc, np.eye(4) / 2, (2, 2), comp, comp)
    with pytest.raises(ValueError):
        Strategy(sc, np.eye(4) / 4, (2, 2), [[np.eye(2), np.eye(2)]], comp)
    with pytest.raises(ValueError):
        Strategy(sc, np.eye(6) / 6, (2, 2), comp, comp)
    with pytest.raises(ValueError):
        BellScenario(("0", "0"), ("0",), ("0",), ("0",))
    with pytest.raises(ValueError):
        BellScenario((), ("0",), ("0",), ("0",))


def test_classify_examples():
    f = classify(chsh_canonical())
    assert (f.pure_state, f.projective, f.full_rank) == (True, True, True)
    f = classify(coins_correlated())
    assert (f.pure_state, f.projective, f.full_rank) == (False, True, True)
    assert not classify(chsh_in_qutrits()).full_rank


def test_restrict_full_rank():
    s = chsh_canonical()
    r = restrict_full_rank(s)
    assert r.dims == (2, 2) and behaviour_of(r).distance(behaviour_of(s)) < 1e-12
    r = restrict_full_rank(chsh_in_qutrits())
    assert r.dims == (2, 2) and classify(r).full_rank
    assert behaviour_of(r).distance(behaviour_of(s)) < 1e-10
    r = restrict_full_rank(product_scenario_strategy())
    assert r.dims == (1, 1) and max_abs(behaviour_of(r).table.reshape(-1) - [1, 0, 0, 0]) < 1e-12


def test_augment_examples():
    s = chsh_canonical()
    same = augment(s, np.ones((1, 1)), (1, 1))
    assert same.dims == (2, 2) and max_abs(same.state - s.state) < 1e-15
    bell = projector((ket(0, 4) + ket(3, 4)) / np.sqrt(2))
    a = augment(s, bell, (2, 2))
    assert a.dims == (4, 4) and behaviour_of(a).distance(behaviour_of(s)) < 1e-12
    c = augment(coins_correlated(), projector(ket(0, 4)), (2, 2))
    assert max_abs(behaviour_of(c).table.reshape(-1) - [0.5, 0, 0, 0.5]) < 1e-12


@given(seeds, st.integers(1, 2), st.integers(1, 2))
def test_augment_preserves_behaviour(seed, ka, kb):
    rng = np.random.default_rng(seed)
    s = random_strategy(rng=rng)
    a = augment(s, random_density(ka * kb, rng=rng), (ka, kb))
    assert behaviour_of(a).distance(behaviour_of(s)) < 1e-10


def test_projectivize_examples():
    s = chsh_canonical()
    p = projectivize(s)
    assert p.dims == s.dims and max_abs(p.state - s.state) < 1e-15
    vecs = [np.array([np.cos(a), np.sin(a)]) for a in (0, 2 * np.pi / 3, 4 * np.pi / 3)]
    trine = [2 / 3 * projector(v) for v in vecs]
    comp = [projector(ket(0, 2)), projector(ket(1, 2)), np.zeros((2, 2))]
    t = Strategy(BellScenario.sized(1, 1, 3, 3), s.state, (2, 2), [trine], [comp])
    p = projectivize(t)
    assert classify(p).projective and p.dims[0] > 2
    assert behaviour_of(p).distance(behaviour_of(t)) < 1e-9


@given(seeds, st.integers(1, 3), st.integers(1, 3), st.integers(2, 3), st.integers(2, 3),
       st.integers(1, 3), st.integers(1, 3))
def test_projectivize_property(seed, nxa, nxb, nya, nyb, da, db):
    s = random_strategy((nxa, nxb), (nya, nyb), (da, db), rng=np.random.default_rng(seed))
    p = projectivize(s)
    assert classify(p).projective
    assert behaviour_of(p).distance(behaviour_of(s)) < 1e-9


@given(seeds, st.booleans(), st.booleans())
def test_behaviour_rows_are_distributions(seed, projective, pure):
    s = random_strategy((2, 3), (3, 2), (2, 3), rng=np.random.default_rng(seed), projective=projective, pure=pure)
    t = behaviour_of(s).table
    assert t.min() > -1e-10
    assert max_abs(t.sum(axis=(2, 3)) - 1) < 1e-10


def test_rotate_keeps_behaviour(rng):
    s = chsh_canonical()
    r = rotate(s, haar_unitary(2, rng), haar_unitary(2, rng))
    assert behaviour_of(r).distance(behaviour_of(s)) < 1e-12


def test_gallery():
    assert max_abs(gallery("coins_correlated").state - np.diag([0.5, 0, 0, 0.5])) == 0
    win = chsh_win_probability(behaviour_of(gallery("chsh_canonical")))
    assert abs(win - 0.8535533905932737) < 1e-12
    g = gallery("coins_general", chi0=[1, 0], chi1=[1, 0])
    assert classify(g).pure_state
    phi = (ket(0, 4) + ket(3, 4)) / np.sqrt(2)
    assert max_abs(g.state - projector(phi)) < 1e-12
    assert max_abs(behaviour_of(g).table.reshape(-1) - [0.5, 0, 0, 0.5]) < 1e-12
    g = coins_general(weights=([0.5, 0.5], [0.2, 0.8]))
    assert max_abs(behaviour_of(g).table.reshape(-1) - [0.5, 0, 0, 0.5]) < 1e-12
    with pytest.raises(KeyError):
        gallery("nope")
    with pytest.raises(ValueError):
        coins_general(weights=([1.0], [0.3]))


def test_behaviour_validation():
    sc = BellScenario.sized(1, 1, 2, 2)
    with pytest.raises(ValueError):
        Behaviour(sc, np.zeros((2, 2, 2, 2)))
    b = Behaviour(sc, np.array([[[[0.6, 0.0], [0.0, 0.6]]]]))
    assert abs(b.check() - 0.2) < 1e-12
