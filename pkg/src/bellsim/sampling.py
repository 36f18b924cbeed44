"""Random states, channels, measurements and strategies for tests and sweeps."""
from __future__ import annotations

import numpy as np

from .bell import BellScenario, Strategy
from .channels import Channel, from_kraus
from .tensor_core import dagger


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def ginibre(rows: int, cols: int, rng=None) -> np.ndarray:
    rng = _rng(rng)
    return rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))


def haar_unitary(d: int, rng=None) -> np.ndarray:
    q, r = np.linalg.qr(ginibre(d, d, rng))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_isometry(d_out: int, d_in: int, rng=None) -> np.ndarray:
    q, _ = np.linalg.qr(ginibre(d_out, d_in, rng))
    return q


def random_state_vector(d: int, rng=None) -> np.ndarray:
    v = ginibre(d, 1, rng)[:, 0]
    return v / np.linalg.norm(v)


def random_density(d: int, rank: int | None = None, rng=None) -> np.ndarray:
    g = ginibre(d, rank or d, rng)
    rho = g @ dagger(g)
    return rho / np.trace(rho).real


def random_channel(d_in: int, d_out: int, rank: int | None = None, rng=None) -> Channel:
    """Channel from a random Stinespring isometry with ``rank`` Kraus operators.

    The rank is raised to ceil(d_in / d_out) when needed for an isometry to exist.
    """
    rank = max(rank or d_in * d_out, -(-d_in // d_out))
    v = random_isometry(d_out * rank, d_in, rng).reshape(d_out, rank, d_in)
    return from_kraus([v[:, k, :] for k in range(rank)])


def random_povm(d: int, n: int, rng=None) -> list[np.ndarray]:
    """n-outcome POVM: E_y = S^(-1/2) G_y S^(-1/2) for random positive G_y."""
    rng = _rng(rng)
    gs = [random_density(d, rng=rng) for _ in range(n)]
    total = sum(gs)
    vals, vecs = np.linalg.eigh(total)
    inv_sqrt = (vecs / np.sqrt(vals)) @ dagger(vecs)
    return [inv_sqrt @ g @ inv_sqrt for g in gs]


def random_projective_povm(d: int, n: int, rng=None) -> list[np.ndarray]:
    """Split a random basis into ``n`` groups (some possibly empty when n > d)."""
    rng = _rng(rng)
    u = haar_unitary(d, rng)
    cuts = np.sort(rng.integers(0, d + 1, size=n - 1))
    bounds = [0, *cuts, d]
    return [u[:, a:b] @ dagger(u[:, a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


def random_strategy(nx: tuple[int, int] = (2, 2), ny: tuple[int, int] = (2, 2), dims: tuple[int, int] = (2, 2),
                    rng=None, projective: bool = False, pure: bool = False, rank: int | None = None) -> Strategy:
    rng = _rng(rng)
    sc = BellScenario.sized(nx[0], nx[1], ny[0], ny[1])
    d = dims[0] * dims[1]
    if pure:
        v = random_state_vector(d, rng)
        rho = np.outer(v, v.conj())
    else:
        rho = random_density(d, rank, rng)
    meas = random_projective_povm if projective else random_povm
    pa = [meas(dims[0], ny[0], rng) for _ in range(nx[0])]
    pb = [meas(dims[1], ny[1], rng) for _ in range(nx[1])]
    return Strategy(sc, rho, dims, pa, pb)


__all__ = [
    "ginibre", "haar_unitary", "random_isometry", "random_state_vector", "random_density",
    "random_channel", "random_povm", "random_projective_povm", "random_strategy",
]
