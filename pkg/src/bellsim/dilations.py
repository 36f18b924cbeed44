"""Stinespring dilations, their uniqueness and completeness, left inverses of
isometries, and Naimark extensions of measurement ensembles.

A dilation of Λ: H -> K is a channel Φ: H -> K ⊗ E whose environment E
traces away to Λ.  Isometric dilations are stored together with their
isometry ``V: H -> K ⊗ E`` (output factor first, environment second).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import (
    Channel,
    ChannelError,
    State,
    compose_serial,
    from_kraus,
    is_isometry,
    isometric_channel,
    kraus_of,
    kraus_rank,
    povm_of,
    ensemble_of,
    is_projective,
    check_povm,
)
from .tensor_core import (
    LINALG_TOL,
    RANK_TOL,
    ShapeError,
    as_matrix,
    dagger,
    eig_hermitian,
    max_abs,
    numerical_rank,
    orthonormal_complement,
    sqrtm_psd,
)


@dataclass(frozen=True, eq=False)
class Dilation:
    channel: Channel
    base_out_dim: int
    env_dim: int
    env_label: str = "E"
    isometry: np.ndarray | None = None

    def __post_init__(self):
        if self.channel.d_out != self.base_out_dim * self.env_dim:
            raise ShapeError(
                f"dilation output {self.channel.d_out} != {self.base_out_dim} x {self.env_dim}")

    @classmethod
    def from_isometry(cls, v, base_out_dim: int, env_label: str = "E") -> "Dilation":
        v = as_matrix(v)
        if not is_isometry(v):
            raise ChannelError("not an isometry")
        env = v.shape[0] // base_out_dim
        return cls(isometric_channel(v), base_out_dim, env, env_label, v)

    def traced(self) -> Channel:
        """The dilated channel (environment discarded)."""
        t = self.channel.tensor().reshape(self.channel.d_in, self.base_out_dim, self.env_dim,
                                          self.channel.d_in, self.base_out_dim, self.env_dim)
        j = np.einsum("iaejbe->iajb", t)
        n = self.channel.d_in * self.base_out_dim
        return Channel(j.reshape(n, n), self.channel.d_in, self.base_out_dim, validate=False)

    def stinespring_isometry(self, tol: float = RANK_TOL) -> np.ndarray:
        if self.isometry is not None:
            return self.isometry
        ops = kraus_of(self.channel, tol)
        if len(ops) != 1:
            raise ChannelError("dilation is not isometric")
        return ops[0]


def stinespring_minimal(ch: Channel, tol: float = RANK_TOL, env_label: str = "E") -> tuple[np.ndarray, Dilation]:
    """Isometry V = sum_k K_k ⊗ |k> with one environment level per Kraus operator."""
    ops = kraus_of(ch, tol)
    r = len(ops)
    v = np.zeros((ch.d_out, r, ch.d_in), dtype=complex)
    for k, op in enumerate(ops):
        v[:, k, :] = op
    v = v.reshape(ch.d_out * r, ch.d_in)
    # absorb the rank-cut error so the result is isometric to machine precision
    u, _, vh = np.linalg.svd(v, full_matrices=False)
    v = u @ vh
    return v, Dilation(isometric_channel(v), ch.d_out, r, env_label, v)


def is_dilationally_pure(ch: Channel, tol: float = RANK_TOL) -> bool:
    return kraus_rank(ch, tol) == 1


def left_inverse(v, junk: State | np.ndarray | None = None) -> Channel:
    """Channel Σ⁻(B) = V*BV + τ tr(√(1-VV*) B √(1-VV*)) undoing conjugation by V.

    ``junk`` is the state τ on the domain of V; maximally mixed by default.
    """
    v = as_matrix(v)
    if not is_isometry(v):
        raise ChannelError("left_inverse needs an isometry")
    d_out, d_in = v.shape
    if junk is None:
        tau = np.eye(d_in, dtype=complex) / d_in
    else:
        tau = junk.density if isinstance(junk, State) else as_matrix(junk)
    if tau.shape != (d_in, d_in):
        raise ShapeError(f"junk state must live on the {d_in}-dimensional domain")
    # 1 - VV* is the projector onto the complement of the range
    comp = orthonormal_complement(_orthonormalize(v), d_out)
    ops = [dagger(v)]
    if comp.shape[1]:
        vals, vecs = eig_hermitian(tau)
        for lam, t in zip(vals, vecs.T):
            if lam > RANK_TOL:
                for c in comp.T:
                    ops.append(np.sqrt(lam) * np.outer(t, c.conj()))
    return from_kraus(ops)


def _orthonormalize(v: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(v, full_matrices=False)
    return u @ vh


def _env_matrix(v: np.ndarray, base: int) -> np.ndarray:
    """Rearrange V: H -> K ⊗ E into the E × (K·H) matrix used for comparisons."""
    d_in = v.shape[1]
    env = v.shape[0] // base
    return v.reshape(base, env, d_in).transpose(1, 0, 2).reshape(env, base * d_in)


def connect_isometries(v: np.ndarray, v_prime: np.ndarray, base: int,
                       tol: float = 1e-8, junk=None) -> Channel:
    """Channel Γ on environments with (id_K ⊗ Γ)(V · V*) = V' · V'*.

    Both V and V' must dilate the same channel.  Γ acts on the range of the
    environment support of V by a partial isometry C and sends everything else
    to the junk state (maximally mixed by default).
    """
    m = _env_matrix(as_matrix(v), base)
    mp = _env_matrix(as_matrix(v_prime), base)
    gram, gram_p = dagger(m) @ m, dagger(mp) @ mp
    mismatch = max_abs(gram - gram_p)
    if mismatch > tol:
        raise ChannelError(f"isometries do not dilate the same channel (mismatch {mismatch:.3e})")
    e, e_p = m.shape[0], mp.shape[0]
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    # singular values are square roots of Gram eigenvalues, so round-off in the
    # Gram matrix shows up at the square-root scale here
    keep = s > np.sqrt(RANK_TOL) * max(s[0], 1.0) if s.size else np.zeros(0, bool)
    u, s, vh = u[:, keep], s[keep], vh[keep]
    # C = M' M^+ is isometric on range(M) because the Gram matrices agree
    c = mp @ dagger(vh) @ np.diag(1.0 / s) @ dagger(u)
    c = _polar_on(c, u)
    comp = orthonormal_complement(u, e)
    ops = [c]
    if comp.shape[1]:
        tau = np.eye(e_p, dtype=complex) / e_p if junk is None else as_matrix(junk)
        vals, vecs = eig_hermitian(tau)
        for lam, t in zip(vals, vecs.T):
            if lam > RANK_TOL:
                for q in comp.T:
                    ops.append(np.sqrt(lam) * np.outer(t, q.conj()))
    return from_kraus(ops)


def _polar_on(c: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Replace C by the nearest partial isometry with initial space span(basis)."""
    if basis.shape[1] == 0:
        return np.zeros_like(c)
    w = _orthonormalize(c @ basis)
    return w @ dagger(basis)


def connect_dilations(sigma: Dilation, sigma_prime: Dilation, of: Channel | None = None,
                      tol: float = 1e-8) -> Channel:
    """Γ with Σ' = (id_K ⊗ Γ) ∘ Σ for two isometric dilations of the same channel."""
    v = sigma.stinespring_isometry()
    vp = sigma_prime.stinespring_isometry()
    if sigma.base_out_dim != sigma_prime.base_out_dim or v.shape[1] != vp.shape[1]:
        raise ShapeError("dilations have different input or output systems")
    if of is not None:
        for d in (sigma, sigma_prime):
            err = max_abs(d.traced().choi - of.choi)
            if err > tol:
                raise ChannelError(f"not a dilation of the given channel (error {err:.3e})")
    return connect_isometries(v, vp, sigma.base_out_dim, tol)


def factor_through(phi: Dilation, sigma: Dilation, of: Channel | None = None,
                   tol: float = 1e-8) -> Channel:
    """Γ: E -> F with Φ = (id_K ⊗ Γ) ∘ Σ, for Σ isometric and Φ any dilation.

    Stinespring-dilates Φ to an isometry into K ⊗ F ⊗ G, connects Σ to it and
    discards G.
    """
    if of is not None:
        for d in (phi, sigma):
            err = max_abs(d.traced().choi - of.choi)
            if err > tol:
                raise ChannelError(f"not a dilation of the given channel (error {err:.3e})")
    v = sigma.stinespring_isometry()
    w, wdil = stinespring_minimal(phi.channel)
    g = wdil.env_dim
    gamma = connect_isometries(v, w, sigma.base_out_dim, tol)
    # gamma maps E -> F ⊗ G; discard G
    f = phi.env_dim
    t = gamma.tensor().reshape(gamma.d_in, f, g, gamma.d_in, f, g)
    j = np.einsum("iagjbg->iajb", t)
    return Channel(j.reshape(gamma.d_in * f, gamma.d_in * f), gamma.d_in, f, validate=False)


def dilation_residual(phi: Dilation, gamma: Channel, sigma: Dilation) -> float:
    """max-abs Choi difference between Φ and (id_K ⊗ Γ) ∘ Σ."""
    return max_abs(apply_on_env(sigma, gamma).choi - phi.channel.choi)


def apply_on_env(sigma: Dilation, gamma: Channel) -> Channel:
    """(id_K ⊗ Γ) ∘ Σ as a channel into K ⊗ F."""
    if gamma.d_in != sigma.env_dim:
        raise ShapeError("Γ input does not match the dilation environment")
    k, e = sigma.base_out_dim, sigma.env_dim
    d = sigma.channel.d_in
    t = sigma.channel.tensor().reshape(d, k, e, d, k, e)
    g = gamma.tensor()
    j = np.einsum("iaejbf,ecfd->iacjbd", t, g)
    n = d * k * gamma.d_out
    return Channel(j.reshape(n, n), d, k * gamma.d_out, validate=False)


# -- Naimark ---------------------------------------------------------------------

def _as_ensemble(meas, n_inputs: int) -> list[list[np.ndarray]]:
    if isinstance(meas, Channel):
        if n_inputs == 1:
            return [povm_of(meas)]
        return [povm_of(ch) for ch in ensemble_of(meas, n_inputs)]
    meas = list(meas)
    if meas and isinstance(meas[0], np.ndarray) and meas[0].ndim == 2:
        return [[as_matrix(e) for e in meas]]
    return [[as_matrix(e) for e in p] for p in meas]


def naimark_extend(meas, n_inputs: int = 1, tol: float = LINALG_TOL
                   ) -> tuple[list[list[np.ndarray]], np.ndarray]:
    """Projective ensemble on H ⊗ K and ancilla vector φ reproducing ``meas``.

    ``meas`` is a measurement or ensemble channel (classical input factor first),
    a single POVM, or a list of POVMs indexed by input.  All inputs share one
    ancilla K = C^m with m = max_x sum_y rank E^x(y), prepared in |0>.  Projective
    input is returned unchanged with a one-dimensional ancilla.
    """
    povms = _as_ensemble(meas, n_inputs)
    for p in povms:
        check_povm(p, tol)
    d = povms[0][0].shape[0]
    if all(is_projective(p, tol) for p in povms):
        return [[e.copy() for e in p] for p in povms], np.ones(1, dtype=complex)
    blocks = []
    for p in povms:
        cols = []
        for y, e in enumerate(p):
            vals, vecs = eig_hermitian(e)
            r = numerical_rank(vals, RANK_TOL)
            for i in range(r):
                cols.append((y, np.sqrt(max(vals[i], 0.0)) * vecs[:, i]))
        blocks.append(cols)
    m = max(len(c) for c in blocks)
    m = max(m, 1)
    phi = np.zeros(m, dtype=complex)
    phi[0] = 1.0
    out = []
    for p, cols in zip(povms, blocks):
        n_out = len(p)
        # V: H -> C^m, row j = <e_j| sqrt(λ_j); sum_j V*|j><j|V = sum_y E(y) = 1
        v = np.zeros((m, d), dtype=complex)
        label = np.zeros(m, dtype=int)
        for j, (y, vec) in enumerate(cols):
            v[j] = vec.conj()
            label[j] = y
        # unused ancilla levels go to the first outcome
        # W = |0>_H ⊗ V embeds H isometrically into H ⊗ C^m
        w = np.kron(np.eye(d, dtype=complex)[:, :1], v)
        # unitary U on H ⊗ C^m with U (|h> ⊗ |0>) = W |h>
        src = np.kron(np.eye(d, dtype=complex), phi.reshape(-1, 1))
        u = _complete_unitary(w, src)
        proj = []
        for y in range(n_out):
            q = np.kron(np.eye(d), np.diag((label == y).astype(complex)))
            proj.append(dagger(u) @ q @ u)
        out.append(proj)
    return out, phi


def _complete_unitary(w: np.ndarray, src: np.ndarray) -> np.ndarray:
    """Unitary U with U src = w, for isometries w and src of equal shape."""
    n = w.shape[0]
    w_comp = orthonormal_complement(_orthonormalize(w), n)
    s_comp = orthonormal_complement(_orthonormalize(src), n)
    return w @ dagger(src) + w_comp @ dagger(s_comp)


def naimark_residual(meas, proj, phi, n_inputs: int = 1, trials: int = 20, seed: int = 0) -> float:
    """Largest probability discrepancy over random input states."""
    povms = _as_ensemble(meas, n_inputs)
    rng = np.random.default_rng(seed)
    d = povms[0][0].shape[0]
    worst = 0.0
    anc = np.outer(phi, phi.conj())
    for _ in range(trials):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = g @ dagger(g)
        rho /= np.trace(rho)
        big = np.kron(rho, anc)
        for p, q in zip(povms, proj):
            for e, pe in zip(p, q):
                worst = max(worst, abs(np.trace(e @ rho) - np.trace(pe @ big)))
    return float(worst)


__all__ = [
    "Dilation", "stinespring_minimal", "connect_dilations", "connect_isometries", "factor_through",
    "is_dilationally_pure", "left_inverse", "naimark_extend", "naimark_residual",
    "dilation_residual", "apply_on_env",
]
