"""Dense complex linear algebra on labelled tensor factors.

Matrices are plain ``numpy`` complex arrays.  A :class:`SystemShape` records how
a square matrix (or the row space of a rectangular one) splits into tensor
factors, so that partial traces and factor permutations can be addressed by
label instead of by position.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

LINALG_TOL = 1e-9
RANK_TOL = 1e-12


class ShapeError(ValueError):
    """Raised when dimensions or labels do not fit together."""


@dataclass(frozen=True)
class SystemShape:
    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(str(lbl) for lbl in self.labels)
        if len(dims) != len(labels):
            raise ShapeError(f"{len(dims)} dims but {len(labels)} labels")
        if any(d < 1 for d in dims):
            raise ShapeError(f"dimensions must be positive, got {dims}")
        if len(set(labels)) != len(labels):
            raise ShapeError(f"labels must be distinct, got {labels}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of(cls, **factors: int) -> "SystemShape":
        return cls(tuple(factors.values()), tuple(factors))

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.dims else 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ShapeError(f"unknown label {label!r}; have {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def sub(self, labels: Iterable[str]) -> "SystemShape":
        labels = list(labels)
        return SystemShape(tuple(self.dim_of(lbl) for lbl in labels), tuple(labels))

    def reordered(self, labels: Sequence[str]) -> "SystemShape":
        if sorted(labels) != sorted(self.labels):
            raise ShapeError(f"{labels} is not a permutation of {self.labels}")
        return self.sub(labels)

    def __add__(self, other: "SystemShape") -> "SystemShape":
        return SystemShape(self.dims + other.dims, self.labels + other.labels)


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ShapeError(f"expected a matrix, got array of shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def kron(*mats) -> np.ndarray:
    """Kronecker product of any number of matrices (or vectors)."""
    if not mats:
        return np.ones((1, 1), dtype=complex)
    return reduce(np.kron, (np.asarray(m, dtype=complex) for m in mats))


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def _check_square(m: np.ndarray, shape: SystemShape):
    if m.shape != (shape.dim, shape.dim):
        raise ShapeError(f"matrix of shape {m.shape} does not fit {shape}")


def partial_trace(m, shape: SystemShape, kept: Iterable[str]) -> np.ndarray:
    """Trace out every factor of ``shape`` not named in ``kept``.

    Kept factors stay in their original order.
    """
    m = np.asarray(m, dtype=complex)
    _check_square(m, shape)
    kept = set(kept)
    for lbl in kept:
        shape.index(lbl)
    n = len(shape.dims)
    keep_pos = [i for i, lbl in enumerate(shape.labels) if lbl in kept]
    drop_pos = [i for i in range(n) if i not in keep_pos]
    t = m.reshape(shape.dims + shape.dims)
    # pair each dropped ket axis with its bra axis
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    for i in drop_pos:
        letters[n + i] = letters[i]
    out = [letters[i] for i in keep_pos] + [letters[n + i] for i in keep_pos]
    res = np.einsum("".join(letters) + "->" + "".join(out), t)
    d = int(np.prod([shape.dims[i] for i in keep_pos], dtype=np.int64))
    return res.reshape(d, d)


def permute_factors(m, shape: SystemShape, order: Sequence[str]) -> np.ndarray:
    """Reorder the tensor factors of a square operator."""
    m = np.asarray(m, dtype=complex)
    _check_square(m, shape)
    perm = [shape.index(lbl) for lbl in order]
    if sorted(perm) != list(range(len(shape.dims))):
        raise ShapeError(f"{order} is not a permutation of {shape.labels}")
    n = len(perm)
    t = m.reshape(shape.dims + shape.dims).transpose(perm + [n + p for p in perm])
    return t.reshape(m.shape)


def permute_vector(v, shape: SystemShape, order: Sequence[str]) -> np.ndarray:
    """Reorder the tensor factors of a ket (or of the rows of a matrix)."""
    v = np.asarray(v, dtype=complex)
    perm = [shape.index(lbl) for lbl in order]
    if sorted(perm) != list(range(len(shape.dims))):
        raise ShapeError(f"{order} is not a permutation of {shape.labels}")
    tail = v.shape[1:]
    t = v.reshape(shape.dims + tail)
    t = t.transpose(perm + list(range(len(perm), len(perm) + len(tail))))
    return t.reshape(v.shape)


def permutation_matrix(shape: SystemShape, order: Sequence[str]) -> np.ndarray:
    """Unitary P with P (x_1 ⊗ ... ⊗ x_n) = x_{σ(1)} ⊗ ... in the new order."""
    return permute_vector(np.eye(shape.dim, dtype=complex), shape, order)


def act_on_factors(t: np.ndarray, dims: Sequence[int], targets: Sequence[int],
                   op: np.ndarray, out_dims: Sequence[int]) -> tuple[np.ndarray, list[int]]:
    """Apply ``op`` to the factors at positions ``targets`` of the row space of ``t``.

    ``t`` has shape ``(prod(dims), cols)``.  The output factors of ``op`` take
    the place of the first targeted factor; the remaining factors keep their
    order.  Returns the new array and its row dimensions.
    """
    dims = list(dims)
    cols = t.shape[1]
    n = len(dims)
    rest = [i for i in range(n) if i not in targets]
    x = t.reshape(dims + [cols]).transpose(list(targets) + rest + [n])
    d_in = int(np.prod([dims[i] for i in targets], dtype=np.int64))
    x = op @ x.reshape(d_in, -1)
    first = min(targets)
    before = [i for i in rest if i < first]
    after = [i for i in rest if i > first]
    new_dims = [dims[i] for i in before] + list(out_dims) + [dims[i] for i in after]
    k = len(out_dims)
    x = x.reshape(list(out_dims) + [dims[i] for i in rest] + [cols])
    nb = len(before)
    perm = list(range(k, k + nb)) + list(range(k)) + list(range(k + nb, k + len(rest))) + [k + len(rest)]
    x = x.transpose(perm)
    return x.reshape(int(np.prod(new_dims, dtype=np.int64)), cols), new_dims


def is_hermitian(m, tol: float = LINALG_TOL) -> bool:
    m = np.asarray(m)
    return m.shape[0] == m.shape[1] and np.max(np.abs(m - dagger(m)), initial=0.0) <= tol


def eig_hermitian(m, tol: float = LINALG_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and matching orthonormal eigenvectors.

    Each eigenvector's first component of magnitude above ``tol`` is made real
    and positive.  Ties keep the order produced by LAPACK.
    """
    m = as_matrix(m)
    if not is_hermitian(m, tol):
        raise ValueError("matrix is not Hermitian within tolerance")
    vals, vecs = np.linalg.eigh((m + dagger(m)) / 2)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        big = np.flatnonzero(np.abs(col) > tol)
        if big.size:
            z = col[big[0]]
            vecs[:, j] = col * (abs(z) / z)
    return vals, vecs


def numerical_rank(vals, rel_tol: float = RANK_TOL) -> int:
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        return 0
    top = np.max(np.abs(vals))
    if top == 0:
        return 0
    return int(np.sum(vals > rel_tol * top))


def sqrtm_psd(m, tol: float = LINALG_TOL) -> np.ndarray:
    """Square root of a PSD matrix; eigenvalues below the rank cut count as zero."""
    vals, vecs = eig_hermitian(m, tol)
    top = max(float(vals[0]), 0.0) if vals.size else 0.0
    vals = np.where(vals > RANK_TOL * top, vals, 0.0)
    return (vecs * np.sqrt(vals)) @ dagger(vecs)


def support_projector(m, rel_tol: float = RANK_TOL) -> np.ndarray:
    vals, vecs = eig_hermitian(m)
    r = numerical_rank(vals, rel_tol)
    return vecs[:, :r] @ dagger(vecs[:, :r])


def support_basis(m, rel_tol: float = RANK_TOL) -> np.ndarray:
    vals, vecs = eig_hermitian(m)
    return vecs[:, :numerical_rank(vals, rel_tol)]


def orthonormal_complement(basis: np.ndarray, dim: int) -> np.ndarray:
    """Columns spanning the orthogonal complement of ``basis`` in C^dim."""
    if basis.size == 0:
        return np.eye(dim, dtype=complex)
    q, _ = np.linalg.qr(np.hstack([basis, np.eye(dim, dtype=complex)]))
    return q[:, basis.shape[1]:dim]


def max_abs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a), initial=0.0))
