"""Bell scenarios, strategies and behaviours, plus the named strategy gallery."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channels import ChannelError, check_density, check_povm, is_projective, povm_ensemble_channel, purify
from .dilations import naimark_extend
from .tensor_core import (
    LINALG_TOL,
    RANK_TOL,
    SystemShape,
    as_matrix,
    dagger,
    eig_hermitian,
    kron,
    max_abs,
    numerical_rank,
    partial_trace,
    permute_factors,
    permute_vector,
)


@dataclass(frozen=True)
class BellScenario:
    x_a: tuple[str, ...]
    x_b: tuple[str, ...]
    y_a: tuple[str, ...]
    y_b: tuple[str, ...]

    def __post_init__(self):
        for name in ("x_a", "x_b", "y_a", "y_b"):
            labels = tuple(str(v) for v in getattr(self, name))
            if not labels:
                raise ValueError(f"label set {name} is empty")
            if len(set(labels)) != len(labels):
                raise ValueError(f"label set {name} has repeated labels")
            object.__setattr__(self, name, labels)

    @classmethod
    def sized(cls, nx_a: int, nx_b: int, ny_a: int, ny_b: int) -> "BellScenario":
        r = lambda n: tuple(str(i) for i in range(n))
        return cls(r(nx_a), r(nx_b), r(ny_a), r(ny_b))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return len(self.x_a), len(self.x_b), len(self.y_a), len(self.y_b)


def _povm_family(povms, d: int) -> tuple[tuple[np.ndarray, ...], ...]:
    fam = tuple(tuple(as_matrix(e) for e in p) for p in povms)
    for p in fam:
        for e in p:
            if e.shape != (d, d):
                raise ValueError(f"POVM element of shape {e.shape} on a {d}-dimensional system")
    return fam


@dataclass(frozen=True, eq=False)
class Strategy:
    """State on H_A ⊗ H_B and one POVM per input on each side.

    ``povm_a[x][y]`` is the element for input ``x`` and outcome ``y``.  An
    optional ``purification`` (vector on H_A ⊗ H_B ⊗ P) fixes the purification
    used by Stinespring implementations.
    """
    scenario: BellScenario
    state: np.ndarray
    dims: tuple[int, int]
    povm_a: tuple[tuple[np.ndarray, ...], ...]
    povm_b: tuple[tuple[np.ndarray, ...], ...]
    purification: np.ndarray | None = None
    tol: float = field(default=LINALG_TOL, repr=False)

    def __post_init__(self):
        d_a, d_b = (int(d) for d in self.dims)
        object.__setattr__(self, "dims", (d_a, d_b))
        rho = as_matrix(self.state)
        if rho.shape != (d_a * d_b, d_a * d_b):
            raise ValueError(f"state of shape {rho.shape} does not fit local dims {self.dims}")
        check_density(rho, self.tol)
        object.__setattr__(self, "state", rho)
        pa, pb = _povm_family(self.povm_a, d_a), _povm_family(self.povm_b, d_b)
        nx_a, nx_b, ny_a, ny_b = self.scenario.shape
        if len(pa) != nx_a or any(len(p) != ny_a for p in pa):
            raise ValueError("povm_a does not match the scenario")
        if len(pb) != nx_b or any(len(p) != ny_b for p in pb):
            raise ValueError("povm_b does not match the scenario")
        for p in pa + pb:
            check_povm(p, self.tol)
        object.__setattr__(self, "povm_a", pa)
        object.__setattr__(self, "povm_b", pb)
        if self.purification is not None:
            psi = np.asarray(self.purification, dtype=complex).reshape(-1)
            if psi.size % (d_a * d_b):
                raise ValueError("purification length is not a multiple of the state dimension")
            m = psi.reshape(d_a * d_b, -1)
            err = max_abs(m @ dagger(m) - rho)
            if err > self.tol:
                raise ValueError(f"purification does not reproduce the state (error {err:.3e})")
            object.__setattr__(self, "purification", psi)

    @property
    def shape(self) -> SystemShape:
        return SystemShape(self.dims, ("A", "B"))

    def marginal(self, party: str) -> np.ndarray:
        return partial_trace(self.state, self.shape, [party])

    def purified(self) -> tuple[np.ndarray, int]:
        """Purification vector on H_A ⊗ H_B ⊗ P and the dimension of P."""
        if self.purification is not None:
            return self.purification, self.purification.size // (self.dims[0] * self.dims[1])
        return purify(self.state)

    def povms(self, party: str):
        return self.povm_a if party == "A" else self.povm_b

    def ensemble_channel(self, party: str):
        return povm_ensemble_channel(self.povms(party))


@dataclass(frozen=True, eq=False)
class Behaviour:
    """Table ``P[x_a, x_b, y_a, y_b]`` of output probabilities."""
    scenario: BellScenario
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.shape != self.scenario.shape:
            raise ValueError(f"table of shape {t.shape} does not match scenario {self.scenario.shape}")
        object.__setattr__(self, "table", t)

    def check(self, tol: float = 1e-10) -> float:
        """Largest deviation from being a family of distributions."""
        sums = self.table.sum(axis=(2, 3))
        return max(float(-self.table.min()), max_abs(sums - 1.0))

    def distance(self, other: "Behaviour") -> float:
        return max_abs(self.table - other.table)


def behaviour_of(s: Strategy) -> Behaviour:
    """P^x(y) = tr((E_A^{x_A}(y_A) ⊗ E_B^{x_B}(y_B)) ϱ)."""
    d_a, d_b = s.dims
    ea = np.array([[e for e in p] for p in s.povm_a])  # (xa, ya, d, d)
    eb = np.array([[e for e in p] for p in s.povm_b])
    rho = s.state.reshape(d_a, d_b, d_a, d_b)
    # tr((E ⊗ F) ρ) = sum E[i,k] F[j,l] ρ[k,l,i,j]
    t = np.einsum("xyik,uvjl,klij->xuyv", ea, eb, rho, optimize=True)
    return Behaviour(s.scenario, t.real)


@dataclass(frozen=True)
class StrategyFlags:
    pure_state: bool
    projective: bool
    full_rank: bool


def classify(s: Strategy, tol: float = LINALG_TOL) -> StrategyFlags:
    vals = np.linalg.eigvalsh(s.state)
    pure = numerical_rank(vals, max(tol, RANK_TOL)) == 1
    proj = all(is_projective(p, tol) for p in s.povm_a + s.povm_b)
    full = all(numerical_rank(np.linalg.eigvalsh(s.marginal(p)), max(tol, RANK_TOL)) == d
               for p, d in zip("AB", s.dims))
    return StrategyFlags(pure, proj, full)


def _support_isometry(rho: np.ndarray, tol: float) -> np.ndarray:
    vals, vecs = eig_hermitian(rho)
    r = max(numerical_rank(vals, max(tol, RANK_TOL)), 1)
    return vecs[:, :r]


def restrict_full_rank(s: Strategy, tol: float = LINALG_TOL) -> Strategy:
    """Cut both local systems down to the supports of the marginal states."""
    ia = _support_isometry(s.marginal("A"), tol)
    ib = _support_isometry(s.marginal("B"), tol)
    w = np.kron(ia, ib)
    rho = dagger(w) @ s.state @ w
    rho = (rho + dagger(rho)) / 2
    rho /= np.trace(rho).real

    def compress(povms, iso):
        out = []
        r = iso.shape[1]
        for p in povms:
            q = [dagger(iso) @ e @ iso for e in p]
            gap = np.eye(r) - sum(q)
            if max_abs(gap) > tol:
                q = [e + gap / len(q) for e in q]
            out.append(tuple((e + dagger(e)) / 2 for e in q))
        return tuple(out)

    psi = None
    if s.purification is not None:
        p_dim = s.purification.size // (s.dims[0] * s.dims[1])
        psi = (np.kron(dagger(w), np.eye(p_dim)) @ s.purification)
    return Strategy(s.scenario, rho, (ia.shape[1], ib.shape[1]),
                    compress(s.povm_a, ia), compress(s.povm_b, ib), psi, s.tol)


def _tensor_state_bipartite(rho: np.ndarray, dims: tuple[int, int], gamma: np.ndarray,
                            kdims: tuple[int, int]) -> np.ndarray:
    shape = SystemShape(dims + kdims, ("A", "B", "KA", "KB"))
    return permute_factors(np.kron(rho, gamma), shape, ["A", "KA", "B", "KB"])


def augment(s: Strategy, gamma, kdims: tuple[int, int]) -> Strategy:
    """The strategy with ``gamma`` on K_A ⊗ K_B appended and locally ignored.

    The new local systems are H_A ⊗ K_A and H_B ⊗ K_B.
    """
    gamma = as_matrix(gamma)
    if gamma.shape != (kdims[0] * kdims[1],) * 2:
        raise ValueError("gamma does not match kdims")
    check_density(gamma)
    rho = _tensor_state_bipartite(s.state, s.dims, gamma, tuple(kdims))
    pa = tuple(tuple(np.kron(e, np.eye(kdims[0])) for e in p) for p in s.povm_a)
    pb = tuple(tuple(np.kron(e, np.eye(kdims[1])) for e in p) for p in s.povm_b)
    dims = (s.dims[0] * kdims[0], s.dims[1] * kdims[1])
    return Strategy(s.scenario, rho, dims, pa, pb, None, s.tol)


def projectivize(s: Strategy, tol: float = LINALG_TOL) -> Strategy:
    """Naimark-extend both ensembles; the ancillas start in |0> next to ϱ.

    Local systems become H_P ⊗ K_P.  If ``s`` carries a purification it is
    extended by the ancilla states as well.
    """
    proj_a, phi_a = naimark_extend(s.povm_a, len(s.povm_a), tol)
    proj_b, phi_b = naimark_extend(s.povm_b, len(s.povm_b), tol)
    ka, kb = phi_a.size, phi_b.size
    anc = np.kron(np.outer(phi_a, phi_a.conj()), np.outer(phi_b, phi_b.conj()))
    rho = _tensor_state_bipartite(s.state, s.dims, anc, (ka, kb))
    psi, p_dim = s.purified()
    shape = SystemShape((s.dims[0], s.dims[1], p_dim, ka, kb), ("A", "B", "P", "KA", "KB"))
    psi_new = permute_vector(kron(psi, phi_a, phi_b), shape, ["A", "KA", "B", "KB", "P"])
    dims = (s.dims[0] * ka, s.dims[1] * kb)
    return Strategy(s.scenario, rho, dims, tuple(map(tuple, proj_a)), tuple(map(tuple, proj_b)),
                    psi_new, s.tol)


def naimark_data(s: Strategy, tol: float = LINALG_TOL):
    """Per-party (projective ensemble, ancilla vector) used by ``projectivize``."""
    return {p: naimark_extend(s.povms(p), len(s.povms(p)), tol) for p in "AB"}


def rotate(s: Strategy, u_a, u_b) -> Strategy:
    """Conjugate the state and all POVM elements by local unitaries."""
    u_a, u_b = as_matrix(u_a), as_matrix(u_b)
    u = np.kron(u_a, u_b)
    rho = u @ s.state @ dagger(u)
    pa = tuple(tuple(u_a @ e @ dagger(u_a) for e in p) for p in s.povm_a)
    pb = tuple(tuple(u_b @ e @ dagger(u_b) for e in p) for p in s.povm_b)
    psi = None
    if s.purification is not None:
        p_dim = s.purification.size // (s.dims[0] * s.dims[1])
        psi = np.kron(u, np.eye(p_dim)) @ s.purification
    return Strategy(s.scenario, rho, s.dims, pa, pb, psi, s.tol)


# -- gallery -----------------------------------------------------------------------

SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
PM = ("+1", "-1")


def _pvm_of_observable(obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral projections of a ±1 observable, ordered (+1, -1)."""
    one = np.eye(obs.shape[0])
    return (one + obs) / 2, (one - obs) / 2


def chsh_canonical() -> Strategy:
    """(|00>+|11>)/√2; A measures σ_z, σ_x; B measures (σ_z ± σ_x)/√2."""
    phi = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    pa = (_pvm_of_observable(SZ), _pvm_of_observable(SX))
    pb = (_pvm_of_observable((SZ + SX) / np.sqrt(2)), _pvm_of_observable((SZ - SX) / np.sqrt(2)))
    sc = BellScenario(("0", "1"), ("0", "1"), PM, PM)
    return Strategy(sc, np.outer(phi, phi.conj()), (2, 2), pa, pb, phi.copy())


def chsh_win_probability(p: Behaviour) -> float:
    """Winning probability for the predicate y_a·y_b = +1 unless x_a = x_b = 1."""
    total = 0.0
    for (i, xa), (j, xb) in itertools.product(enumerate(p.scenario.x_a), enumerate(p.scenario.x_b)):
        for (k, ya), (l, yb) in itertools.product(enumerate(p.scenario.y_a), enumerate(p.scenario.y_b)):
            same = (ya == yb)
            want_same = not (xa == "1" and xb == "1")
            if same == want_same:
                total += p.table[i, j, k, l] / 4
    return float(total)


def chsh_correlators(p: Behaviour) -> np.ndarray:
    sign = np.array([1.0, -1.0])
    return np.einsum("xuyv,y,v->xu", p.table, sign, sign)


def _coins_scenario() -> BellScenario:
    return BellScenario(("0",), ("0",), ("0", "1"), ("0", "1"))


def _computational_pvm() -> tuple[tuple[np.ndarray, np.ndarray]]:
    return ((np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex)),)


def coins_correlated() -> Strategy:
    """κ = ½|00><00| + ½|11><11| measured in the computational basis on both sides."""
    kappa = np.diag([0.5, 0, 0, 0.5]).astype(complex)
    psi = np.zeros((4, 2), dtype=complex)
    psi[0, 0] = psi[3, 1] = 1 / np.sqrt(2)
    return Strategy(_coins_scenario(), kappa, (2, 2), _computational_pvm(), _computational_pvm(),
                    psi.reshape(-1))


def coins_chi_from_weights(p, q, theta=None) -> tuple[np.ndarray, np.ndarray]:
    """χ vectors for a mixture of √q_k|00> + √(1-q_k) e^{iθ_k}|11> with weights p_k.

    Requires sum_k p_k q_k = 1/2.
    """
    p, q = np.asarray(p, float), np.asarray(q, float)
    theta = np.zeros_like(p) if theta is None else np.asarray(theta, float)
    if abs(p @ q - 0.5) > 1e-9 or abs(p.sum() - 1) > 1e-9:
        raise ValueError("weights must satisfy sum p = 1 and sum p q = 1/2")
    chi0 = np.sqrt(2 * p * q).astype(complex)
    chi1 = np.sqrt(2 * p * (1 - q)) * np.exp(1j * theta)
    return chi0, chi1


def coins_general(chi0=None, chi1=None, weights=None) -> Strategy:
    """Computational-basis coins whose purification is √½|00>|χ0> + √½|11>|χ1>.

    Either give unit vectors ``chi0``, ``chi1`` (same length) or ``weights`` as a
    tuple ``(p, q)`` or ``(p, q, theta)`` for :func:`coins_chi_from_weights`.
    """
    if weights is not None:
        chi0, chi1 = coins_chi_from_weights(*weights)
    if chi0 is None or chi1 is None:
        raise ValueError("coins_general needs chi0 and chi1 or weights")
    chi0 = np.asarray(chi0, dtype=complex).reshape(-1)
    chi1 = np.asarray(chi1, dtype=complex).reshape(-1)
    if chi0.size != chi1.size:
        raise ValueError("chi0 and chi1 must have the same length")
    for c in (chi0, chi1):
        if abs(np.linalg.norm(c) - 1) > 1e-9:
            raise ValueError("chi vectors must be unit vectors")
    n = chi0.size
    psi = np.zeros((4, n), dtype=complex)
    psi[0] = chi0 / np.sqrt(2)
    psi[3] = chi1 / np.sqrt(2)
    rho = psi @ dagger(psi)
    return Strategy(_coins_scenario(), rho, (2, 2), _computational_pvm(), _computational_pvm(),
                    psi.reshape(-1))


GALLERY = {
    "chsh_canonical": chsh_canonical,
    "coins_correlated": coins_correlated,
    "coins_general": coins_general,
}


def gallery(name: str, **kwargs) -> Strategy:
    try:
        build = GALLERY[name]
    except KeyError:
        raise KeyError(f"unknown gallery strategy {name!r}; choose from {sorted(GALLERY)}") from None
    return build(**kwargs)


__all__ = [
    "BellScenario", "Strategy", "Behaviour", "StrategyFlags", "behaviour_of", "classify",
    "restrict_full_rank", "augment", "projectivize", "rotate", "gallery", "chsh_canonical",
    "coins_correlated", "coins_general", "coins_chi_from_weights", "chsh_win_probability",
    "chsh_correlators", "naimark_data",
]
