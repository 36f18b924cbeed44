"""CPTP channels, states, measurements and ensembles.

Choi convention: ``J = sum_ij |i><j| ⊗ Λ(|i><j|)`` with the input factor first,
so ``J`` is indexed by ``(in, out), (in', out')``.  Classical sets are ordered
lists of labels and index the computational basis of the embedded system.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor_core import (
    LINALG_TOL,
    RANK_TOL,
    ShapeError,
    SystemShape,
    as_matrix,
    dagger,
    eig_hermitian,
    max_abs,
    numerical_rank,
    partial_trace,
    permute_vector,
    sqrtm_psd,
)


class ChannelError(ValueError):
    """Raised when a matrix fails to describe a valid channel or state."""


def _choi_residuals(choi: np.ndarray, d_in: int, d_out: int) -> tuple[float, float]:
    """(most negative eigenvalue, trace-preservation error) of a Choi matrix."""
    herm = (choi + dagger(choi)) / 2
    min_eig = float(np.linalg.eigvalsh(herm)[0])
    t = np.einsum("iaja->ij", choi.reshape(d_in, d_out, d_in, d_out))
    return min_eig, max_abs(t - np.eye(d_in))


@dataclass(frozen=True, eq=False)
class Channel:
    choi: np.ndarray
    d_in: int
    d_out: int
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        choi = as_matrix(self.choi)
        n = self.d_in * self.d_out
        if choi.shape != (n, n):
            raise ShapeError(f"Choi matrix of shape {choi.shape} does not fit d_in={self.d_in}, d_out={self.d_out}")
        object.__setattr__(self, "choi", choi)
        if self.validate:
            min_eig, tp = _choi_residuals(choi, self.d_in, self.d_out)
            if min_eig < -LINALG_TOL or tp > LINALG_TOL or not np.allclose(choi, dagger(choi), atol=LINALG_TOL):
                raise ChannelError(f"not CPTP: min eigenvalue {min_eig:.3e}, trace error {tp:.3e}")

    def cptp_residuals(self) -> tuple[float, float]:
        """(negativity of the Choi matrix, trace-preservation error); both 0 for an exact channel."""
        min_eig, tp = _choi_residuals(self.choi, self.d_in, self.d_out)
        return max(0.0, -min_eig), tp

    def tensor(self) -> np.ndarray:
        return self.choi.reshape(self.d_in, self.d_out, self.d_in, self.d_out)

    def __call__(self, rho) -> np.ndarray:
        rho = as_matrix(rho)
        if rho.shape != (self.d_in, self.d_in):
            raise ShapeError(f"channel expects {self.d_in}-dimensional input, got {rho.shape}")
        return np.einsum("iajb,ij->ab", self.tensor(), rho)

    def kraus(self, tol: float = RANK_TOL) -> list[np.ndarray]:
        return kraus_of(self, tol)

    def __matmul__(self, other: "Channel") -> "Channel":
        return compose_serial(self, other)


@dataclass(frozen=True, eq=False)
class State:
    density: np.ndarray
    shape: SystemShape

    def __post_init__(self):
        rho = as_matrix(self.density)
        if rho.shape != (self.shape.dim, self.shape.dim):
            raise ShapeError(f"density of shape {rho.shape} does not fit {self.shape}")
        object.__setattr__(self, "density", rho)
        check_density(rho)

    @classmethod
    def from_density(cls, rho, dims: Sequence[int] | None = None, labels: Sequence[str] | None = None) -> "State":
        rho = as_matrix(rho)
        dims = tuple(dims) if dims is not None else (rho.shape[0],)
        labels = tuple(labels) if labels is not None else tuple(f"S{i}" for i in range(len(dims)))
        return cls(rho, SystemShape(dims, labels))

    @classmethod
    def from_vector(cls, v, dims: Sequence[int] | None = None, labels: Sequence[str] | None = None) -> "State":
        v = np.asarray(v, dtype=complex).reshape(-1)
        return cls.from_density(np.outer(v, v.conj()), dims, labels)

    @property
    def dim(self) -> int:
        return self.shape.dim

    def marginal(self, kept: Sequence[str]) -> "State":
        return State(partial_trace(self.density, self.shape, kept), self.shape.sub(
            [lbl for lbl in self.shape.labels if lbl in set(kept)]))


def check_density(rho: np.ndarray, tol: float = LINALG_TOL):
    if not np.allclose(rho, dagger(rho), atol=tol):
        raise ChannelError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ChannelError(f"density matrix has trace {np.trace(rho).real:.12g}")
    min_eig = float(np.linalg.eigvalsh((rho + dagger(rho)) / 2)[0])
    if min_eig < -tol:
        raise ChannelError(f"density matrix has negative eigenvalue {min_eig:.3e}")


@dataclass(frozen=True, eq=False)
class Isometry:
    v: np.ndarray

    def __post_init__(self):
        v = as_matrix(self.v)
        object.__setattr__(self, "v", v)
        if v.shape[0] < v.shape[1]:
            raise ShapeError(f"isometry must not shrink dimension, got {v.shape}")
        if max_abs(dagger(v) @ v - np.eye(v.shape[1])) > LINALG_TOL:
            raise ChannelError("matrix is not an isometry within tolerance")

    @property
    def d_in(self) -> int:
        return self.v.shape[1]

    @property
    def d_out(self) -> int:
        return self.v.shape[0]

    def channel(self) -> Channel:
        return isometric_channel(self.v)


def is_isometry(v, tol: float = LINALG_TOL) -> bool:
    v = np.asarray(v)
    return v.shape[0] >= v.shape[1] and max_abs(dagger(v) @ v - np.eye(v.shape[1])) <= tol


# -- constructors -------------------------------------------------------------

def from_kraus(ops: Sequence[np.ndarray], validate: bool = True) -> Channel:
    ops = [as_matrix(k) for k in ops]
    d_out, d_in = ops[0].shape
    choi = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for k in ops:
        # column (i, a) of vec is K[a, i]
        vec = k.T.reshape(-1)
        choi += np.outer(vec, vec.conj())
    return Channel(choi, d_in, d_out, validate=validate)


def from_function(f: Callable[[np.ndarray], np.ndarray], d_in: int, validate: bool = True) -> Channel:
    """Choi matrix of the linear map ``f`` evaluated on matrix units."""
    blocks = []
    for i in range(d_in):
        row = []
        for j in range(d_in):
            e = np.zeros((d_in, d_in), dtype=complex)
            e[i, j] = 1.0
            row.append(as_matrix(f(e)))
        blocks.append(row)
    d_out = blocks[0][0].shape[0]
    choi = np.block(blocks)
    return Channel(choi, d_in, d_out, validate=validate)


def identity_channel(d: int) -> Channel:
    return from_kraus([np.eye(d)])


def isometric_channel(v) -> Channel:
    return from_kraus([as_matrix(v)])


def unitary_channel(u) -> Channel:
    return isometric_channel(u)


def trace_channel(d: int) -> Channel:
    """The discard map from C^d to the trivial system C^1."""
    return Channel(np.eye(d, dtype=complex), d, 1)


def prep_channel(rho) -> Channel:
    """The channel C^1 -> C^n preparing ``rho``."""
    rho = as_matrix(rho)
    return Channel(rho, 1, rho.shape[0])


def replace_channel(d_in: int, rho) -> Channel:
    """Discard the input and prepare ``rho``."""
    rho = as_matrix(rho)
    return Channel(np.kron(np.eye(d_in), rho), d_in, rho.shape[0])


def dephasing(labels) -> Channel:
    """Dephasing channel on the embedding of a classical set (or of range(n))."""
    n = labels if isinstance(labels, int) else len(labels)
    return from_kraus([np.outer(np.eye(n)[i], np.eye(n)[i]) for i in range(n)])


def compose_serial(g: Channel, f: Channel) -> Channel:
    """The channel ``g ∘ f`` (apply ``f`` first)."""
    if f.d_out != g.d_in:
        raise ShapeError(f"cannot compose: f outputs {f.d_out}, g expects {g.d_in}")
    jf = f.choi.reshape(f.d_in, f.d_out, f.d_in, f.d_out)
    jg = g.choi.reshape(g.d_in, g.d_out, g.d_in, g.d_out)
    j = np.einsum("iajb,acbd->icjd", jf, jg)
    n = f.d_in * g.d_out
    return Channel(j.reshape(n, n), f.d_in, g.d_out, validate=False)


def compose_parallel(f: Channel, g: Channel) -> Channel:
    """The channel ``f ⊗ g`` acting on the ordered pair of inputs."""
    jf = f.choi.reshape(f.d_in, f.d_out, f.d_in, f.d_out)
    jg = g.choi.reshape(g.d_in, g.d_out, g.d_in, g.d_out)
    j = np.einsum("iajb,kcld->ikacjlbd", jf, jg)
    d_in, d_out = f.d_in * g.d_in, f.d_out * g.d_out
    return Channel(j.reshape(d_in * d_out, d_in * d_out), d_in, d_out, validate=False)


def permute_channel(ch: Channel, in_shape: SystemShape | None = None, in_order=None,
                    out_shape: SystemShape | None = None, out_order=None) -> Channel:
    """Relabel the order of input and/or output tensor factors of a channel."""
    t = ch.tensor()
    if in_shape is not None:
        p = permute_vector(np.eye(ch.d_in), in_shape, in_order)
        t = np.einsum("Ii,iajb,Jj->IaJb", p, t, p.conj())
    if out_shape is not None:
        p = permute_vector(np.eye(ch.d_out), out_shape, out_order)
        t = np.einsum("Aa,iajb,Bb->iAjB", p, t, p.conj())
    return Channel(t.reshape(ch.choi.shape), ch.d_in, ch.d_out, validate=False)


def apply(ch: Channel, s: State, out_shape: SystemShape | None = None) -> State:
    if s.dim != ch.d_in:
        raise ShapeError(f"state dimension {s.dim} does not match channel input {ch.d_in}")
    out = ch(s.density)
    if out_shape is None:
        out_shape = SystemShape((ch.d_out,), ("out",))
    return State(out, out_shape)


def kraus_of(ch: Channel, tol: float = RANK_TOL) -> list[np.ndarray]:
    """Kraus operators from the eigendecomposition of the Choi matrix.

    The count equals the numerical rank of the Choi matrix (relative cut ``tol``).
    """
    # isometric channels have a rank-one Choi matrix; read it off a column and skip eigh
    k = int(np.argmax(np.real(np.diag(ch.choi))))
    top = ch.choi[k, k].real
    if top > 0:
        vec = ch.choi[:, k] / np.sqrt(top)
        if max_abs(np.outer(vec, vec.conj()) - ch.choi) <= tol * top:
            return [vec.reshape(ch.d_in, ch.d_out).T]
    vals, vecs = eig_hermitian(ch.choi, tol=max(LINALG_TOL, 10 * tol))
    r = max(numerical_rank(vals, tol), 1)
    ops = []
    for k in range(r):
        vec = np.sqrt(max(vals[k], 0.0)) * vecs[:, k]
        ops.append(vec.reshape(ch.d_in, ch.d_out).T)
    return ops


def kraus_rank(ch: Channel, tol: float = RANK_TOL) -> int:
    vals = np.linalg.eigvalsh((ch.choi + dagger(ch.choi)) / 2)
    return numerical_rank(vals, tol)


def choi_distance(a: Channel, b: Channel) -> float:
    if (a.d_in, a.d_out) != (b.d_in, b.d_out):
        raise ShapeError("channels have different dimensions")
    return max_abs(a.choi - b.choi)


# -- measurements and ensembles -----------------------------------------------

def measurement_channel(povm: Sequence[np.ndarray]) -> Channel:
    """M(A) = sum_y tr(E(y) A) |y><y|."""
    povm = [as_matrix(e) for e in povm]
    d, n = povm[0].shape[0], len(povm)
    t = np.zeros((d, n, d, n), dtype=complex)
    for y, e in enumerate(povm):
        # Choi block (i, j) is M(|i><j|) = sum_y E(y)[j, i] |y><y|
        t[:, y, :, y] = e.T
    return Channel(t.reshape(d * n, d * n), d, n)


def is_measurement(ch: Channel, n_outcomes: int | None = None, tol: float = LINALG_TOL) -> bool:
    n = ch.d_out if n_outcomes is None else n_outcomes
    if ch.d_out != n:
        return False
    return choi_distance(compose_serial(dephasing(n), ch), ch) <= tol


def povm_of(ch: Channel, tol: float = LINALG_TOL) -> list[np.ndarray]:
    if not is_measurement(ch, tol=tol):
        raise ChannelError("channel does not have classical outputs")
    t = ch.tensor()
    return [t[:, y, :, y].T.copy() for y in range(ch.d_out)]


def ensemble_channel(channels: Sequence[Channel], input_first: bool = True) -> Channel:
    """Λ(F ⊗ G) = sum_x <x|F|x> Λ^x(G), with the classical input factor first."""
    n = len(channels)
    d, d_out = channels[0].d_in, channels[0].d_out
    t = np.zeros((n, d, d_out, n, d, d_out), dtype=complex)
    for x, ch in enumerate(channels):
        if (ch.d_in, ch.d_out) != (d, d_out):
            raise ShapeError("ensemble members must share dimensions")
        t[x, :, :, x, :, :] = ch.tensor()
    if not input_first:
        t = t.transpose(1, 0, 2, 4, 3, 5)
    m = n * d * d_out
    return Channel(t.reshape(m, m), n * d, d_out, validate=False)


def has_classical_inputs(ch: Channel, n_inputs: int, tol: float = LINALG_TOL) -> bool:
    if ch.d_in % n_inputs:
        return False
    d = ch.d_in // n_inputs
    deph = compose_parallel(dephasing(n_inputs), identity_channel(d))
    return choi_distance(compose_serial(ch, deph), ch) <= tol


def ensemble_of(ch: Channel, n_inputs: int, tol: float = LINALG_TOL) -> list[Channel]:
    """Split a channel on X̂ ⊗ H with classical inputs into its family (Λ^x)."""
    if not has_classical_inputs(ch, n_inputs, tol):
        raise ChannelError("channel does not have classical inputs on the first factor")
    d = ch.d_in // n_inputs
    t = ch.choi.reshape(n_inputs, d, ch.d_out, n_inputs, d, ch.d_out)
    m = d * ch.d_out
    return [Channel(t[x, :, :, x, :, :].reshape(m, m), d, ch.d_out, validate=False) for x in range(n_inputs)]


def povm_ensemble_channel(povms: Sequence[Sequence[np.ndarray]]) -> Channel:
    """Measurement ensemble X̂ ⊗ H -> Ŷ for a family of POVMs indexed by x."""
    return ensemble_channel([measurement_channel(p) for p in povms])


def check_povm(povm: Sequence[np.ndarray], tol: float = LINALG_TOL) -> float:
    """Largest violation of positivity or completeness; raises if above ``tol``."""
    d = povm[0].shape[0]
    worst = max_abs(sum(povm) - np.eye(d))
    for e in povm:
        if not np.allclose(e, dagger(e), atol=tol):
            raise ChannelError("POVM element is not Hermitian")
        worst = max(worst, -float(np.linalg.eigvalsh((e + dagger(e)) / 2)[0]))
    if worst > tol:
        raise ChannelError(f"not a POVM: violation {worst:.3e}")
    return worst


def is_projective(povm: Sequence[np.ndarray], tol: float = LINALG_TOL) -> bool:
    return all(max_abs(e @ e - e) <= tol for e in povm)


# -- purification ---------------------------------------------------------------

def purify(s: State | np.ndarray, rel_tol: float = RANK_TOL) -> tuple[np.ndarray, int]:
    """Purification |ψ> = sum_i sqrt(λ_i) |v_i> ⊗ |i> with descending λ_i.

    Returns the vector on system ⊗ environment and the environment dimension,
    which equals the numerical rank of the density.
    """
    rho = s.density if isinstance(s, State) else as_matrix(s)
    vals, vecs = eig_hermitian(rho)
    r = max(numerical_rank(vals, rel_tol), 1)
    psi = np.zeros((rho.shape[0], r), dtype=complex)
    for i in range(r):
        psi[:, i] = np.sqrt(max(vals[i], 0.0)) * vecs[:, i]
    psi = psi.reshape(-1)
    return psi / np.linalg.norm(psi), r


def fidelity_pure(u, v) -> float:
    return float(abs(np.vdot(u, v)) ** 2)


__all__ = [
    "Channel", "State", "Isometry", "ChannelError", "apply", "compose_serial", "compose_parallel",
    "kraus_of", "kraus_rank", "dephasing", "is_measurement", "povm_of", "ensemble_of",
    "ensemble_channel", "measurement_channel", "povm_ensemble_channel", "purify",
    "identity_channel", "isometric_channel", "unitary_channel", "trace_channel", "prep_channel",
    "replace_channel", "from_kraus", "from_function", "permute_channel", "is_isometry",
    "check_povm", "is_projective", "has_classical_inputs", "choi_distance", "sqrtm_psd",
]
