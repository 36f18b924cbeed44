import numpy as np
import pytest

from bellsim.bell import Strategy, chsh_canonical, coins_correlated
from bellsim.search import search_env_channel
from bellsim.simulation import augmentation_witness, stinespring_implementation, verify_assisted, verify_local
from bellsim.tensor_core import ket, projector


def test_identity_found_immediately():
    s = chsh_canonical()
    impl, _ = stinespring_implementation(s)
    r = search_env_channel(impl, impl)
    assert r.found and r.residual < 1e-8 and r.iterations <= 1


def test_augmentation_found_and_verifies():
    s_t = chsh_canonical()
    s, hand = augmentation_witness(s_t, projector(ket(0, 4)), (2, 2))
    lhs, _ = stinespring_implementation(s)
    rhs, _ = stinespring_implementation(s_t)
    r = search_env_channel(lhs, rhs)
    assert r.found and r.residual < 1e-8
    assert verify_local(s, s_t, r.witness).residual < 1e-8
    assert verify_local(s, s_t, hand).residual < 1e-8


def test_assisted_structure_with_trivial_assistant():
    s = chsh_canonical()
    impl, _ = stinespring_implementation(s)
    r = search_env_channel(impl, impl, "assisted", assistant=np.ones((1, 1)), assistant_dims=(1, 1, 1))
    assert r.found and verify_assisted(s, s, r.witness).passed


def test_different_behaviours_rejected():
    s = chsh_canonical()
    chsh, _ = stinespring_implementation(s)
    swapped = Strategy(s.scenario, s.state, (2, 2), s.povm_a, [p[::-1] for p in s.povm_b])
    other, _ = stinespring_implementation(swapped)
    with pytest.raises(ValueError, match="behaviours differ"):
        search_env_channel(chsh, other)
    coins, _ = stinespring_implementation(coins_correlated())
    with pytest.raises(ValueError):
        search_env_channel(coins, chsh)


def test_bad_structure_rejected():
    impl, _ = stinespring_implementation(chsh_canonical())
    with pytest.raises(ValueError):
        search_env_channel(impl, impl, "sideways")
    with pytest.raises(ValueError):
        search_env_channel(impl, impl, "causal")
