"""Heuristic search for environment channels connecting two implementations.

Alternating least squares over the Choi matrices of Γ_A, Γ_0 and Γ_B.  With
the other slots fixed the target identity is linear in one slot; that slot is
moved to the point of the set {least-squares solutions} ∩ {trace preserving}
∩ {positive semidefinite} closest to its current value, by Dykstra's
alternating projections.  A run that stalls is reported as not found, which
says nothing about whether a witness exists.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .channels import Channel
from .simulation import (
    IMPL_LABELS,
    Implementation,
    Witness,
    apply_assisted,
    apply_causal,
    apply_local,
    process_distance,
)
from .tensor_core import ShapeError, as_matrix, dagger

STRUCTURES = ("factored", "assisted", "causal")


class _Dense:
    """Dense operator on labelled factors."""

    def __init__(self, mat: np.ndarray, dims: Sequence[int], labels: Sequence[str]):
        self.mat, self.dims, self.labels = mat, list(dims), list(labels)

    def permuted(self, labels: Sequence[str]) -> "_Dense":
        perm = [self.labels.index(lbl) for lbl in labels]
        n = len(self.dims)
        t = self.mat.reshape(self.dims + self.dims).transpose(perm + [n + p for p in perm])
        return _Dense(t.reshape(self.mat.shape), [self.dims[p] for p in perm], list(labels))

    def split(self, targets: Sequence[str]):
        """(tensor (R, s, R, s), rest dims, rest labels) with ``targets`` moved last."""
        rest = [lbl for lbl in self.labels if lbl not in targets]
        p = self.permuted(rest + list(targets))
        r = int(np.prod([p.dims[i] for i in range(len(rest))], dtype=np.int64))
        s = p.mat.shape[0] // r
        return p.mat.reshape(r, s, r, s), p.dims[:len(rest)], rest

    def apply(self, j4: np.ndarray, targets, out_labels, out_dims) -> "_Dense":
        t, rdims, rest = self.split(targets)
        out = np.einsum("aibj,iojp->aobp", t, j4, optimize=True)
        r, so = out.shape[0], out.shape[1]
        return _Dense(out.reshape(r * so, r * so), rdims + list(out_dims), rest + list(out_labels))


@dataclass
class _Slot:
    name: str
    inputs: list[str]
    outputs: list[str]
    out_dims: list[int]
    d_in: int = 0

    @property
    def d_out(self) -> int:
        return int(np.prod(self.out_dims, dtype=np.int64))


@dataclass
class SearchResult:
    found: bool
    witness: Witness | None
    residual: float
    iterations: int
    history: list[float] = field(default_factory=list)
    reason: str = ""


def _choi_state(impl: Implementation) -> _Dense:
    v = impl.isometry
    f = v.T.reshape(-1, 1)  # rows (input, output)
    dims = [v.shape[1]] + list(impl.out_shape.dims)
    return _Dense(f @ dagger(f), dims, ["X"] + list(impl.out_shape.labels))


def _project_psd(j: np.ndarray) -> np.ndarray:
    h = (j + dagger(j)) / 2
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.clip(vals, 0, None)) @ dagger(vecs)


def _tp_fix(j: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    """Rescale a PSD Choi matrix so that it is exactly trace preserving."""
    t = np.einsum("iaja->ij", j.reshape(d_in, d_out, d_in, d_out))
    vals, vecs = np.linalg.eigh((t + dagger(t)) / 2)
    vals = np.clip(vals, 1e-14, None)
    a = np.kron((vecs / np.sqrt(vals)) @ dagger(vecs), np.eye(d_out))
    out = a @ j @ dagger(a)
    return (out + dagger(out)) / 2


def _solve_slot(j0: np.ndarray, system, d_in: int, d_out: int,
                iters: int = 2000, eps: float = 1e-13) -> np.ndarray:
    """Dykstra projection of ``j0`` onto {least-squares solutions} ∩ TP ∩ PSD.

    ``system`` is ``("block", V, C)`` for constraints V* Jmat = C on the
    rearranged Choi matrix Jmat[(i, j), (o, o')], or ``("full", V, c)`` for
    V* x = c on the Choi matrix flattened in (i, o, j, o') order.
    """
    n = d_in * d_out
    eye = np.eye(d_in)
    mode, v, c = system

    def p_ls(x):
        if mode == "block":
            m = x.reshape(d_in, d_out, d_in, d_out).transpose(0, 2, 1, 3).reshape(d_in * d_in, -1)
            m = m - v @ (dagger(v) @ m - c)
            return m.reshape(d_in, d_in, d_out, d_out).transpose(0, 2, 1, 3).reshape(-1)
        return x - v @ (dagger(v) @ x - c)

    def p_tp(x):
        m = x.reshape(d_in, d_out, d_in, d_out)
        gap = np.einsum("iaja->ij", m) - eye
        return (m - np.einsum("ij,ab->iajb", gap, np.eye(d_out)) / d_out).reshape(-1)

    def p_psd(x):
        return _project_psd(x.reshape(n, n)).reshape(-1)

    x = j0.reshape(-1).astype(complex)
    projs = (p_ls, p_tp, p_psd)
    corr = [np.zeros_like(x) for _ in projs]
    for _ in range(iters):
        prev = x
        for k, proj in enumerate(projs):
            y = proj(x + corr[k])
            corr[k] = x + corr[k] - y
            x = y
        if np.linalg.norm(x - prev) < eps * max(1.0, np.linalg.norm(x)):
            break
    return _tp_fix(_project_psd(x.reshape(n, n)), d_in, d_out)


def _slots(structure: str, lhs: Implementation, rhs: Implementation, assistant_dims, side_dims) -> list[_Slot]:
    ld = dict(zip(lhs.out_shape.labels, lhs.out_shape.dims))
    rd = dict(zip(rhs.out_shape.labels, rhs.out_shape.dims))
    if structure == "factored":
        slots = [_Slot("A", ["EA"], ["EA'"], [rd["EA"]]), _Slot("0", ["E0"], ["E0'"], [rd["E0"]]),
                 _Slot("B", ["EB"], ["EB'"], [rd["EB"]])]
        ins = {"A": ld["EA"], "0": ld["E0"], "B": ld["EB"]}
    elif structure == "assisted":
        ka, k0, kb = assistant_dims
        slots = [_Slot("A", ["EA", "KA"], ["EA'"], [rd["EA"]]), _Slot("0", ["E0", "K0"], ["E0'"], [rd["E0"]]),
                 _Slot("B", ["KB", "EB"], ["EB'"], [rd["EB"]])]
        ins = {"A": ld["EA"] * ka, "0": ld["E0"] * k0, "B": ld["EB"] * kb}
    elif structure == "causal":
        wa, e0, wb = side_dims
        if e0 != rd["E0"]:
            raise ShapeError("side_dims do not match the target E_0")
        slots = [_Slot("0", ["E0"], ["WA", "E0'", "WB"], [wa, e0, wb]),
                 _Slot("A", ["EA", "WA"], ["EA'"], [rd["EA"]]), _Slot("B", ["WB", "EB"], ["EB'"], [rd["EB"]])]
        ins = {"A": ld["EA"] * wa, "0": ld["E0"], "B": ld["EB"] * wb}
    else:
        raise ValueError(f"unknown structure {structure!r}; choose from {STRUCTURES}")
    for s in slots:
        s.d_in = ins[s.name]
    return slots


def _initial(slot: _Slot, rng: np.random.Generator | None = None) -> np.ndarray:
    if rng is not None:
        # Choi matrix of a random channel from a random Stinespring isometry
        g = rng.normal(size=(slot.d_out * slot.d_in, slot.d_in)) + 1j * rng.normal(size=(slot.d_out * slot.d_in, slot.d_in))
        q, _ = np.linalg.qr(g)
        ops = q.reshape(slot.d_out, slot.d_in, slot.d_in).transpose(1, 0, 2)
        vecs = ops.transpose(0, 2, 1).reshape(slot.d_in, -1)
        return vecs.T @ vecs.conj()
    if slot.d_in == slot.d_out:
        v = np.eye(slot.d_in).reshape(-1)
        return np.outer(v, v).astype(complex)
    return np.kron(np.eye(slot.d_in), np.eye(slot.d_out) / slot.d_out).astype(complex)


def _forward(state: _Dense, slots: Sequence[_Slot], chois: dict) -> _Dense:
    for s in slots:
        j4 = chois[s.name].reshape(s.d_in, s.d_out, s.d_in, s.d_out)
        state = state.apply(j4, s.inputs, s.outputs, s.out_dims)
    return state


def _svd(m: np.ndarray):
    if not np.all(np.isfinite(m)):
        raise FloatingPointError("non-finite entries in the slot system")
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")


def _slot_system(pre: _Dense, slot: _Slot, post: Sequence[_Slot], chois: dict, target: _Dense):
    """Reduced linear constraint on the slot's Choi matrix given the other channels."""
    t, rdims, rest = pre.split(slot.inputs)
    r, s = t.shape[0], t.shape[1]
    consumed = {lbl for p in post for lbl in p.inputs}
    if not consumed & set(slot.outputs):
        # later slots act on the remaining factors only, so each (i, j) block is pushed through them
        cols = []
        out_rest = None
        for i in range(s):
            for j in range(s):
                op = _forward(_Dense(t[:, i, :, j], rdims, rest), post, chois)
                if out_rest is None:
                    out_rest = [lbl for lbl in target.labels if lbl in op.labels]
                cols.append(op.permuted(out_rest).mat.reshape(-1))
        m = np.array(cols).T
        r2 = int(round(np.sqrt(m.shape[0])))
        tg = target.permuted(out_rest + slot.outputs).mat.reshape(r2, slot.d_out, r2, slot.d_out)
        tg = tg.transpose(0, 2, 1, 3).reshape(r2 * r2, slot.d_out ** 2)
        u, sv, vh = _svd(m)
        k = int(np.sum(sv > 1e-12 * max(sv[0], 1e-300)))
        coef = (dagger(u[:, :k]) @ tg) / sv[:k, None]
        return "block", dagger(vh[:k]), coef
    n = (slot.d_in * slot.d_out) ** 2
    cols = []
    for e in range(n):
        basis = np.zeros(n, dtype=complex)
        basis[e] = 1.0
        trial = dict(chois)
        trial[slot.name] = basis.reshape(slot.d_in * slot.d_out, -1)
        out = _forward(pre, [slot] + list(post), trial)
        cols.append(out.permuted(target.labels).mat.reshape(-1))
    a = np.array(cols).T
    u, sv, vh = _svd(a)
    k = int(np.sum(sv > 1e-12 * max(sv[0], 1e-300)))
    return "full", dagger(vh[:k]), (dagger(u[:, :k]) @ target.mat.reshape(-1)) / sv[:k]


def search_env_channel(lhs: Implementation, rhs: Implementation, structure: str = "factored", *,
                       assistant=None, assistant_dims=None, side_dims=None, tol: float = 1e-8,
                       max_iters: int = 500, stall_window: int = 25, behaviour_tol: float = 1e-8,
                       restarts: int = 3, seed: int = 0) -> SearchResult:
    """Look for environment channels mapping ``lhs`` onto ``rhs``.

    ``assisted`` needs a fixed ``assistant`` state and ``assistant_dims``;
    ``causal`` needs ``side_dims`` = (W_A, E'_0, W_B).  Raises ``ValueError``
    when the two implementations have different behaviours.
    """
    if lhs.in_dims != rhs.in_dims or lhs.out_shape.dims[:2] != rhs.out_shape.dims[:2]:
        raise ShapeError("implementations belong to different scenarios")
    gap = float(np.max(np.abs(lhs.behaviour_table() - rhs.behaviour_table())))
    if gap > behaviour_tol:
        raise ValueError(f"behaviours differ (gap {gap:.3e}); no witness can exist")
    if structure == "assisted" and (assistant is None or assistant_dims is None):
        raise ValueError("assisted search needs an assistant state and its dims")
    if structure == "causal" and side_dims is None:
        raise ValueError("causal search needs side_dims")
    slots = _slots(structure, lhs, rhs, assistant_dims, side_dims)
    start = _choi_state(lhs)
    if structure == "assisted":
        a = as_matrix(assistant)
        start = _Dense(np.kron(start.mat, a), start.dims + list(assistant_dims), start.labels + ["KA", "K0", "KB"])
    tgt = _choi_state(rhs)
    tgt = _Dense(tgt.mat, tgt.dims, ["X", "YA", "YB", "EA'", "E0'", "EB'"])
    kind = {"factored": "local", "assisted": "assisted", "causal": "causal"}[structure]
    kwargs = {}
    if structure == "assisted":
        kwargs = dict(assistant=as_matrix(assistant), assistant_dims=tuple(assistant_dims))
    if structure == "causal":
        kwargs = dict(side_dims=tuple(side_dims))
    runner = {"local": apply_local, "assisted": apply_assisted, "causal": apply_causal}[kind]
    rng = np.random.default_rng(seed)
    best = None
    total = 0
    for attempt in range(restarts + 1):
        # the causal wiring is degenerate at replacement channels, so it starts at random
        random_start = attempt > 0 or structure == "causal"
        chois = {s.name: _initial(s, rng if random_start else None) for s in slots}
        history, it = _alternate(start, tgt, slots, chois, tol, max_iters, stall_window)
        total += it
        gammas = {s.name: Channel(chois[s.name], s.d_in, s.d_out, validate=False) for s in slots}
        w = Witness(kind, gammas, conventions=(lhs.convention, rhs.convention), **kwargs)
        final = process_distance(runner(lhs.process(), w).reorder(list(IMPL_LABELS)), rhs.process())
        if final < tol:
            return SearchResult(True, w, final, total, history)
        if best is None or final < best[0]:
            best = (final, history)
    return SearchResult(False, None, best[0], total, best[1], "no convergence (heuristic; not a disproof)")


def _alternate(start, tgt, slots, chois, tol, max_iters, stall_window) -> tuple[list[float], int]:
    def residual():
        out = _forward(start, slots, chois).permuted(tgt.labels)
        return float(np.linalg.norm(out.mat - tgt.mat))

    history = [residual()]
    it = 0
    while history[-1] >= tol and it < max_iters:
        it += 1
        for i, slot in enumerate(slots):
            pre = _forward(start, slots[:i], chois)
            system = _slot_system(pre, slot, slots[i + 1:], chois, tgt)
            chois[slot.name] = _solve_slot(chois[slot.name], system, slot.d_in, slot.d_out)
        history.append(residual())
        if len(history) > stall_window:
            old = history[-stall_window - 1]
            if old - history[-1] < 1e-10 * max(old, 1e-300):
                break
    return history, it


__all__ = ["search_env_channel", "SearchResult", "STRUCTURES"]
