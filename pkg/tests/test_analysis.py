import numpy as np
import pytest
from hypothesis import given, strategies as st

from bellsim.analysis import (
    PURE_SOURCE_MIXED_TARGET, ConvexDecomposition, build_mixing_strategy, deterministic_behaviours,
    deterministic_strategy, exhausted_environment, extract_measurement_witness, extract_state_witness,
    extremality_necessary_checks, visible_decompositions,
)
from bellsim.bell import (
    BellScenario, Behaviour, Strategy, augment, behaviour_of, chsh_canonical, coins_correlated, coins_general,
    rotate,
)
from bellsim.channels import State, apply, identity_channel
from bellsim.sampling import haar_unitary, random_density, random_strategy
from bellsim.simulation import (
    WitnessError, augmentation_witness, coins_causal_witness, identity_witness, reverse_assisted_witness,
    rotation_witness, verify_causal,
)
from bellsim.tensor_core import dagger, ket, max_abs, projector
from cases import coins_default, local_witness_gallery, product_scenario_strategy, random_coins

seeds = st.integers(0, 2**32 - 1)
GALLERY = local_witness_gallery()
COINS_SC = BellScenario(("0",), ("0",), ("0", "1"), ("0", "1"))


def delta(a, b):
    t = np.zeros((1, 1, 2, 2))
    t[0, 0, a, b] = 1
    return Behaviour(COINS_SC, t)


KAPPA_SPLIT = ConvexDecomposition([(0.5, delta(0, 0)), (0.5, delta(1, 1))])


# -- state extraction ------------------------------------------------------------

def test_state_extraction_identity():
    s = chsh_canonical()
    r = extract_state_witness(s, s, identity_witness(s))
    assert r.passed and r.residual < 1e-12
    rho = random_density(2, rng=3)
    for key in ("A", "B"):
        out = apply(r.channels[key], State.from_density(rho)).density
        assert max_abs(out - rho) < 1e-12


@pytest.mark.parametrize("case", GALLERY, ids=[c[0] for c in GALLERY])
def test_state_extraction_gallery(case):
    _, s, s_tilde, w = case
    r = extract_state_witness(s, s_tilde, w)
    assert r.passed and r.residual < 1e-8 and not r.flags


def test_state_extraction_discards_ancilla(rng):
    s_t = chsh_canonical()
    s, w = augmentation_witness(s_t, projector(ket(0, 4)), (2, 2))
    r = extract_state_witness(s, s_t, w)
    for _ in range(5):
        rho = random_density(2, rng=rng)
        out = apply(r.channels["A"], State.from_density(np.kron(rho, projector(ket(0, 2))))).density
        assert max_abs(out - rho) < 1e-12


def test_pure_source_mixed_target_flag():
    s = chsh_canonical()
    mixed = augment(s, np.eye(4) / 4, (2, 2))
    r = extract_state_witness(s, mixed, None)
    assert not r.passed and PURE_SOURCE_MIXED_TARGET in r.flags


def test_state_extraction_needs_passing_witness():
    s = chsh_canonical()
    _, sr, _, w = GALLERY[3]
    with pytest.raises(WitnessError):
        extract_state_witness(sr, s, identity_witness(s))


# -- measurement extraction ----------------------------------------------------

def test_measurement_extraction_identity(rng):
    s = chsh_canonical()
    r = extract_measurement_witness(s, s, identity_witness(s))
    assert r.passed and r.residual < 1e-12
    rho = random_density(2, rng=rng)
    assert max_abs(apply(r.channels["Xi_A"], State.from_density(rho)).density - rho) < 1e-12
    assert max_abs(r.channels["Psi_A"].choi - identity_channel(r.channels["Psi_A"].d_in).choi) < 1e-12


def test_measurement_extraction_rotation_is_conjugation(rng):
    s_t = chsh_canonical()
    ua, ub = haar_unitary(2, rng), haar_unitary(2, rng)
    s, w = rotation_witness(s_t, ua, ub)
    rev = reverse_assisted_witness(s, s_t, w)
    r = extract_measurement_witness(s, s_t, rev)
    assert r.passed and r.residual < 1e-8
    for _ in range(3):
        rho = random_density(2, rng=rng)
        assert max_abs(apply(r.channels["Xi_A"], State.from_density(rho)).density - ua @ rho @ dagger(ua)) < 1e-8
        assert max_abs(apply(r.channels["Xi_B"], State.from_density(rho)).density - ub @ rho @ dagger(ub)) < 1e-8


@pytest.mark.parametrize("case", GALLERY, ids=[c[0] for c in GALLERY])
def test_measurement_extraction_gallery(case):
    _, s, s_tilde, w = case
    r = extract_measurement_witness(s, s_tilde, reverse_assisted_witness(s, s_tilde, w))
    assert r.passed and r.residual < 1e-8


def test_measurement_extraction_rank_deficient_marginal():
    s = chsh_canonical()
    s_aug, _ = augmentation_witness(s, projector(ket(0, 4)), (2, 2))
    with pytest.raises(ValueError, match="not full rank"):
        extract_measurement_witness(s, s_aug, identity_witness(s))


# -- decompositions and visibility --------------------------------------------

def test_decomposition_invariants():
    assert abs(KAPPA_SPLIT.weights.sum() - 1) < 1e-15
    assert KAPPA_SPLIT.residual(behaviour_of(coins_correlated())) < 1e-15
    assert not KAPPA_SPLIT.is_trivial()
    with pytest.raises(ValueError):
        ConvexDecomposition([(0.3, delta(0, 0)), (0.3, delta(1, 1))])
    with pytest.raises(ValueError):
        ConvexDecomposition([(1.2, delta(0, 0)), (-0.2, delta(1, 1))])


def test_coins_split_visible():
    rep = visible_decompositions(coins_correlated(), KAPPA_SPLIT)
    assert rep.visible and rep.residual < 1e-8
    for k, rho in enumerate(rep.states):
        want = projector(ket(3 * k, 4))
        assert max_abs(rho - want) < 1e-6


def coins_general_pure():
    return coins_general([1, 0], [1, 0])


def test_coins_split_not_visible_from_pure_coins():
    rep = visible_decompositions(coins_general_pure(), KAPPA_SPLIT)
    assert not rep.visible


def test_trivial_decomposition_visible_everywhere():
    for s in (chsh_canonical(), coins_correlated(), coins_default()):
        d = ConvexDecomposition([(1.0, behaviour_of(s))])
        assert visible_decompositions(s, d).visible


def test_pure_state_nontrivial_not_visible(rng):
    s = chsh_canonical()
    for _ in range(10):
        u = haar_unitary(2, rng)
        tilted = Strategy(s.scenario, s.state, (2, 2), [[u @ e @ dagger(u) for e in p] for p in s.povm_a], s.povm_b)
        p, q = behaviour_of(s).table, behaviour_of(tilted).table
        # P = ½ lo + ½ hi with lo, hi on either side of P along the direction of Q
        step = min(1.0, p[q > p].min() / (q - p)[q > p].max())
        lo = Behaviour(s.scenario, p + step * (q - p) / 2)
        hi = Behaviour(s.scenario, p - step * (q - p) / 2)
        d = ConvexDecomposition([(0.5, lo), (0.5, hi)])
        assert not d.is_trivial()
        rep = visible_decompositions(s, d)
        assert not rep.visible and "trivial" in rep.reason


def test_visibility_rejects_mismatch():
    with pytest.raises(ValueError):
        visible_decompositions(chsh_canonical(), KAPPA_SPLIT)
    wrong = ConvexDecomposition([(0.5, delta(0, 0)), (0.5, delta(0, 0))])
    with pytest.raises(ValueError):
        visible_decompositions(coins_correlated(), wrong)


def test_mixing_examples():
    single = build_mixing_strategy([(1.0, chsh_canonical())])
    assert behaviour_of(single).distance(behaviour_of(chsh_canonical())) < 1e-12
    m = build_mixing_strategy([(0.5, deterministic_strategy(COINS_SC, (0,), (0,))),
                               (0.5, deterministic_strategy(COINS_SC, (1,), (1,)))])
    assert max_abs(behaviour_of(m).table.reshape(-1) - [0.5, 0, 0, 0.5]) < 1e-12


def test_mixing_round_trip(rng):
    s = chsh_canonical()
    parts = [(0.3, s), (0.7, rotate(s, haar_unitary(2, rng), np.eye(2)))]
    m = build_mixing_strategy(parts)
    mix = 0.3 * behaviour_of(parts[0][1]).table + 0.7 * behaviour_of(parts[1][1]).table
    assert max_abs(behaviour_of(m).table - mix) < 1e-10
    d = ConvexDecomposition([(p, behaviour_of(x)) for p, x in parts])
    rep = visible_decompositions(m, d)
    assert rep.visible and rep.residual < 1e-9


def _split_from_general(gen, m0):
    psi, p = gen.purified()
    big = psi.reshape(4, p)
    terms = []
    for m in (m0, np.eye(p) - m0):
        r = big @ m.T @ dagger(big)
        w = np.trace(r).real
        terms.append((w, behaviour_of(Strategy(gen.scenario, r / w, (2, 2), gen.povm_a, gen.povm_b))))
    return ConvexDecomposition(terms)


def test_visible_from_general_coins_visible_from_correlated():
    gen = coins_default()
    c = coins_correlated()
    assert verify_causal(c, gen, coins_causal_witness(c, gen)).passed
    d = _split_from_general(gen, np.diag([1, 0, 0]).astype(complex))
    assert visible_decompositions(gen, d).visible
    assert visible_decompositions(c, d).visible


@given(seeds)
def test_visibility_transfers_along_causal_witness(seed):
    rng = np.random.default_rng(seed)
    gen = random_coins(rng)
    c = coins_correlated()
    assert verify_causal(c, gen, coins_causal_witness(c, gen)).passed
    p = gen.purified()[1]
    if p == 1:
        return
    v = np.linalg.qr(rng.normal(size=(p, p)) + 1j * rng.normal(size=(p, p)))[0][:, :1]
    d = _split_from_general(gen, v @ dagger(v))
    if d.is_trivial():
        return
    assert visible_decompositions(gen, d).visible
    assert visible_decompositions(c, d).visible


# -- extremality ---------------------------------------------------------------

def test_kappa_not_extremal():
    rep = extremality_necessary_checks(behaviour_of(coins_correlated()))
    assert rep.verdict == "NOT extremal" and rep.nontrivial_decomposition_found
    weights = sorted(w for w, _ in rep.decomposition.terms)
    assert np.allclose(weights, [0.5, 0.5])
    tables = sorted(tuple(b.table.reshape(-1)) for _, b in rep.decomposition.terms)
    assert tables == [(0.0, 0.0, 0.0, 1.0), (1.0, 0.0, 0.0, 0.0)]


def test_chsh_outside_local_polytope():
    rep = extremality_necessary_checks(behaviour_of(chsh_canonical()))
    assert not rep.local_polytope_membership
    assert rep.verdict == "no obstruction found"
    # the L1 slack needed is (√2 - 1) * 2 for this behaviour
    assert abs(rep.local_residual - 2 * (np.sqrt(2) - 1)) < 1e-6


def test_deterministic_behaviours_are_vertices():
    sc = BellScenario.sized(2, 2, 2, 2)
    dets = deterministic_behaviours(sc)
    assert len(dets) == 16
    for _, _, b in dets[:4]:
        rep = extremality_necessary_checks(b)
        assert rep.local_polytope_membership and rep.is_vertex


def test_extremality_rejects_invalid():
    with pytest.raises(ValueError):
        extremality_necessary_checks(Behaviour(COINS_SC, np.full((1, 1, 2, 2), 0.3)))


# -- exhaustion ----------------------------------------------------------------

def test_chsh_exhausted():
    rep = exhausted_environment(chsh_canonical())
    assert rep.copy_equivalent and rep.residual < 1e-9
    assert rep.unitarity_residual < 1e-10
    for u in rep.unitaries.values():
        assert max_abs(dagger(u) @ u - np.eye(u.shape[0])) < 1e-10


def test_trivial_strategy_exhausted():
    rep = exhausted_environment(product_scenario_strategy())
    assert rep.copy_equivalent and rep.residual < 1e-12


@given(seeds)
def test_rotated_chsh_exhausted(seed):
    rng = np.random.default_rng(seed)
    s = rotate(chsh_canonical(), haar_unitary(2, rng), haar_unitary(2, rng))
    rep = exhausted_environment(s)
    assert rep.copy_equivalent and rep.unitarity_residual < 1e-10


def test_exhaustion_preconditions():
    with pytest.raises(ValueError):
        exhausted_environment(coins_correlated())
    s = chsh_canonical()
    big = augment(s, projector(ket(0, 4)), (2, 2))
    with pytest.raises(ValueError):
        exhausted_environment(big)
    with pytest.raises(ValueError):
        exhausted_environment(random_strategy(rng=1, pure=True))
