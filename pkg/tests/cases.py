"""Shared strategies and witnesses for the test modules."""
import numpy as np

from bellsim.bell import BellScenario, Strategy, chsh_canonical, coins_general
from bellsim.sampling import haar_unitary, random_density, random_state_vector
from bellsim.simulation import Witness, augmentation_witness, rotation_witness
from bellsim.tensor_core import ket, projector

COINS_CHI0 = np.array([np.sqrt(0.5), np.sqrt(0.5), 0])
COINS_CHI1 = np.array([0, np.sqrt(0.5), 1j * np.sqrt(0.5)])


def coins_default():
    return coins_general(COINS_CHI0, COINS_CHI1)


def random_coins(rng, n=None):
    """coins_general with random χ vectors on an environment of dimension ≤ 4."""
    n = n or int(rng.integers(1, 5))
    return coins_general(random_state_vector(n, rng), random_state_vector(n, rng))


def local_witness_gallery(seed=0):
    """(name, s, s_tilde, local witness for s ≥ s_tilde) for augmentation and rotation cases."""
    rng = np.random.default_rng(seed)
    chsh = chsh_canonical()
    out = []
    s, w = augmentation_witness(chsh, projector(ket(0, 4)), (2, 2))
    out.append(("augment-product", s, chsh, w))
    s, w = augmentation_witness(chsh, random_density(4, rng=rng), (2, 2))
    out.append(("augment-mixed", s, chsh, w))
    s, w = augmentation_witness(chsh, random_density(3, rng=rng), (3, 1))
    out.append(("augment-one-sided", s, chsh, w))
    for k in range(2):
        s, w = rotation_witness(chsh, haar_unitary(2, rng), haar_unitary(2, rng))
        out.append((f"rotation-{k}", s, chsh, w))
    return out


def chsh_in_qutrits():
    """CHSH embedded in C^3 ⊗ C^3 with the spare level attached to outcome +1."""
    s = chsh_canonical()
    e = np.eye(3)[:, :2]
    rho = np.kron(e, e) @ s.state @ np.kron(e, e).T
    extra = np.diag([0, 0, 1.0])

    def lift(p):
        return [e @ p[0] @ e.T + extra, e @ p[1] @ e.T]
    return Strategy(s.scenario, rho, (3, 3), [lift(p) for p in s.povm_a], [lift(p) for p in s.povm_b])


def x_phase_isometry(rng, nx=2):
    """V: X̂ ⊗ C^3 -> X̂ ⊗ C^2 ⊗ C^2, identity on the support and an x-dependent phase on level 2."""
    theta = rng.uniform(0, 2 * np.pi, nx)
    v = np.zeros((nx, 2, 2, nx, 3), dtype=complex)
    for x in range(nx):
        v[x, :, 0, x, :2] = np.eye(2)
        v[x, 0, 1, x, 2] = np.exp(1j * theta[x])
    return v.reshape(nx * 4, nx * 3)


def lemma49_chsh_case(seed=0):
    rng = np.random.default_rng(seed)
    w = Witness("lemma49_v1", isometries={"A": x_phase_isometry(rng), "B": x_phase_isometry(rng)},
                residual_state=[1, 0, 0, 0], residual_dims=(2, 2, 1))
    return chsh_in_qutrits(), chsh_canonical(), w


def product_scenario_strategy():
    comp = [[projector(ket(0, 2)), projector(ket(1, 2))]]
    return Strategy(BellScenario.sized(1, 1, 2, 2), projector(ket(0, 4)), (2, 2), comp, comp)
