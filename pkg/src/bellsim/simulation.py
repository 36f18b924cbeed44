"""Stinespring implementations of strategies and verification of simulation witnesses.

An implementation of a strategy is the isometry

    X̂_A ⊗ X̂_B  ->  Ŷ_A ⊗ Ŷ_B ⊗ E_A ⊗ E_0 ⊗ E_B

obtained from a purification of the state (environment E_0 = P) and isometric
dilations of the two measurement ensembles.  Witnesses are bundles of
environment channels; a verifier pushes one implementation through the
witness and compares the result with the other implementation.

Compositions are carried out on a stack of Kraus operators (:class:`Process`)
rather than on Choi matrices, which keeps intermediate objects small.
Residuals are Frobenius norms of Choi-matrix differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np

from .bell import Strategy, augment, behaviour_of, classify, naimark_data, rotate
from .channels import (
    Channel,
    ChannelError,
    compose_serial,
    from_kraus,
    identity_channel,
    isometric_channel,
    kraus_of,
    povm_ensemble_channel,
    purify,
    trace_channel,
)
from .dilations import Dilation, connect_isometries, factor_through, left_inverse, stinespring_minimal
from .tensor_core import (
    LINALG_TOL,
    RANK_TOL,
    ShapeError,
    SystemShape,
    as_matrix,
    dagger,
    eig_hermitian,
    kron,
    max_abs,
    numerical_rank,
    orthonormal_complement,
    partial_trace,
    permute_vector,
    sqrtm_psd,
    support_basis,
)

VERIFY_TOL = 1e-8
CONVENTIONS = ("minimal", "canonical_projective", "canonical_povm", "naimark")
IMPL_LABELS = ("YA", "YB", "EA", "E0", "EB")


class WitnessError(ValueError):
    """Raised when a witness is malformed or a source witness fails."""


# -- Kraus-stack processes ---------------------------------------------------------

class Process:
    """A CP map from a fixed input to labelled output factors, as a Kraus stack.

    ``ops`` has shape ``(r, prod(dims), d_in)``.
    """

    def __init__(self, ops: np.ndarray, dims: Sequence[int], labels: Sequence[str]):
        self.ops = np.asarray(ops, dtype=complex)
        self.dims = [int(d) for d in dims]
        self.labels = [str(lbl) for lbl in labels]
        if len(set(self.labels)) != len(self.labels):
            raise ShapeError(f"duplicate labels {self.labels}")
        if self.ops.ndim != 3 or self.ops.shape[1] != int(np.prod(self.dims, dtype=np.int64)):
            raise ShapeError(f"Kraus stack of shape {self.ops.shape} does not fit dims {self.dims}")

    @classmethod
    def from_isometry(cls, v, dims, labels) -> "Process":
        v = as_matrix(v)
        return cls(v[None], dims, labels)

    @property
    def d_in(self) -> int:
        return self.ops.shape[2]

    @property
    def rank(self) -> int:
        return self.ops.shape[0]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ShapeError(f"unknown factor {label!r}; have {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def apply(self, targets: Sequence[str], op, out_labels: Sequence[str],
              out_dims: Sequence[int] | None = None) -> "Process":
        """Act with a channel (or isometry matrix) on the named factors."""
        targets, out_labels = list(targets), list(out_labels)
        if isinstance(op, Channel):
            kr = np.array(kraus_of(op))
            d_in_op, d_out_op = op.d_in, op.d_out
        else:
            m = as_matrix(op)
            kr = m[None]
            d_out_op, d_in_op = m.shape
        pos = [self.index(t) for t in targets]
        d_targets = int(np.prod([self.dims[p] for p in pos], dtype=np.int64))
        if d_targets != d_in_op:
            raise ShapeError(f"map expects input {d_in_op} but factors {targets} have dimension {d_targets}")
        if out_dims is None:
            if len(out_labels) > 1:
                raise ShapeError("out_dims needed when splitting the output into several factors")
            out_dims = [d_out_op] if out_labels else []
        out_dims = [int(d) for d in out_dims]
        if int(np.prod(out_dims, dtype=np.int64)) != d_out_op:
            raise ShapeError(f"out_dims {out_dims} do not multiply to {d_out_op}")
        rg = kr.shape[0]
        big = kr.reshape(rg * d_out_op, d_in_op)
        r, n, d = self.ops.shape
        t = self.ops.transpose(1, 0, 2).reshape(n, r * d)
        from .tensor_core import act_on_factors
        new, nd = act_on_factors(t, self.dims, pos, big, [rg] + out_dims)
        p0 = min(pos)
        x = new.reshape(nd + [r, d])
        x = np.moveaxis(x, p0, len(nd))
        nd_rest = nd[:p0] + nd[p0 + 1:]
        n_new = int(np.prod(nd_rest, dtype=np.int64))
        x = x.reshape(n_new, r * rg, d).transpose(1, 0, 2)
        rest = [i for i in range(len(self.dims)) if i not in pos]
        labels = ([self.labels[i] for i in rest if i < p0] + out_labels
                  + [self.labels[i] for i in rest if i > p0])
        return Process(x, nd_rest, labels)._compressed()

    def append(self, state, dims: Sequence[int], labels: Sequence[str]) -> "Process":
        """Tensor a state (vector or density) onto the output, as new last factors."""
        st = np.asarray(state, dtype=complex)
        if st.ndim == 1:
            cols = st.reshape(-1, 1)
        else:
            vals, vecs = eig_hermitian(st)
            r = max(numerical_rank(vals, RANK_TOL), 1)
            cols = vecs[:, :r] * np.sqrt(np.clip(vals[:r], 0, None))
        if cols.shape[0] != int(np.prod(dims, dtype=np.int64)):
            raise ShapeError("appended state does not match its dims")
        ops = np.einsum("rnd,mq->rqnmd", self.ops, cols)
        r, q, n, m, d = ops.shape
        return Process(ops.reshape(r * q, n * m, d), self.dims + list(dims), self.labels + list(labels))._compressed()

    def trace(self, labels: Sequence[str]) -> "Process":
        pos = [self.index(lbl) for lbl in labels]
        keep = [i for i in range(len(self.dims)) if i not in pos]
        r, _, d = self.ops.shape
        x = self.ops.reshape([r] + self.dims + [d])
        x = x.transpose([0] + [p + 1 for p in pos] + [k + 1 for k in keep] + [len(self.dims) + 1])
        dropped = int(np.prod([self.dims[p] for p in pos], dtype=np.int64))
        kept_dims = [self.dims[k] for k in keep]
        x = x.reshape(r * dropped, int(np.prod(kept_dims, dtype=np.int64)), d)
        return Process(x, kept_dims, [self.labels[k] for k in keep])._compressed()

    def reorder(self, labels: Sequence[str]) -> "Process":
        labels = list(labels)
        if sorted(labels) != sorted(self.labels):
            raise ShapeError(f"{labels} is not a permutation of {self.labels}")
        perm = [self.index(lbl) for lbl in labels]
        r, _, d = self.ops.shape
        x = self.ops.reshape([r] + self.dims + [d])
        x = x.transpose([0] + [p + 1 for p in perm] + [len(self.dims) + 1])
        return Process(x.reshape(self.ops.shape), [self.dims[p] for p in perm], labels)

    def choi_factor(self) -> np.ndarray:
        """F with Choi matrix F F*, rows indexed by (input, output)."""
        return self.ops.transpose(2, 1, 0).reshape(self.d_in * self.ops.shape[1], self.rank)

    def choi(self) -> np.ndarray:
        f = self.choi_factor()
        return f @ dagger(f)

    def channel(self) -> Channel:
        return Channel(self.choi(), self.d_in, self.ops.shape[1], validate=False)

    def _compressed(self) -> "Process":
        r, n, d = self.ops.shape
        if r <= n * d and r <= 64:
            return self
        f = self.choi_factor()
        u, s, _ = np.linalg.svd(f, full_matrices=False)
        keep = s > 1e-15 * max(s[0], 1e-300) if s.size else s > 0
        f = u[:, keep] * s[keep]
        ops = f.reshape(d, n, -1).transpose(2, 1, 0)
        return Process(ops, self.dims, self.labels)


def process_distance(p: Process, q: Process) -> float:
    """Frobenius norm of the Choi difference (factors matched by label)."""
    if sorted(p.labels) != sorted(q.labels):
        raise ShapeError(f"outputs differ: {p.labels} vs {q.labels}")
    q = q.reorder(p.labels)
    if p.dims != q.dims or p.d_in != q.d_in:
        raise ShapeError(f"dimension mismatch: {p.dims} vs {q.dims}")
    fa, fb = p.choi_factor(), q.choi_factor()
    # ||Fa Fa* - Fb Fb*|| computed in the joint column space
    _, r = np.linalg.qr(np.hstack([fa, fb]))
    ra, rb = r[:, :fa.shape[1]], r[:, fa.shape[1]:]
    return float(np.linalg.norm(ra @ dagger(ra) - rb @ dagger(rb)))


# -- implementations ---------------------------------------------------------------

def _party_data(s: Strategy, party: str):
    d = s.dims[0] if party == "A" else s.dims[1]
    return s.povms(party), d


def local_dilation(s: Strategy, party: str, convention: str = "minimal") -> tuple[np.ndarray, int]:
    """Isometry X̂_P ⊗ H_P -> Ŷ_P ⊗ E_P for one party, and the dimension of E_P."""
    povms, d = _party_data(s, party)
    nx, ny = len(povms), len(povms[0])
    if convention == "minimal":
        v, dil = stinespring_minimal(povm_ensemble_channel(povms))
        return v, dil.env_dim
    if convention == "canonical_projective":
        if not classify(s).projective:
            raise ValueError("canonical_projective needs a projective strategy")
        v = np.zeros((ny, nx, d, nx, d), dtype=complex)
        for x, p in enumerate(povms):
            for y, e in enumerate(p):
                v[y, x, :, x, :] = e
        return v.reshape(ny * nx * d, nx * d), nx * d
    if convention == "canonical_povm":
        v = np.zeros((ny, nx, ny, d, nx, d), dtype=complex)
        for x, p in enumerate(povms):
            for y, e in enumerate(p):
                v[y, x, y, :, x, :] = sqrtm_psd(e)
        return v.reshape(ny * nx * ny * d, nx * d), nx * ny * d
    if convention == "naimark":
        proj, phi = naimark_data(s)[party]
        k = phi.size
        v = np.zeros((ny, nx, d * k, nx, d), dtype=complex)
        embed = np.kron(np.eye(d), phi.reshape(-1, 1))
        for x, p in enumerate(proj):
            for y, e in enumerate(p):
                v[y, x, :, x, :] = e @ embed
        return v.reshape(ny * nx * d * k, nx * d), nx * d * k
    raise ValueError(f"unknown convention {convention!r}; choose from {CONVENTIONS}")


@dataclass(frozen=True, eq=False)
class Implementation:
    """Stinespring implementation: an isometry from X̂_A ⊗ X̂_B to Ŷ_A ⊗ Ŷ_B ⊗ E_A ⊗ E_0 ⊗ E_B."""
    isometry: np.ndarray
    out_shape: SystemShape
    in_dims: tuple[int, int]
    convention: str = "minimal"

    @property
    def env_shape(self) -> SystemShape:
        return self.out_shape.sub(["EA", "E0", "EB"])

    @cached_property
    def channel(self) -> Channel:
        return isometric_channel(self.isometry)

    def process(self) -> Process:
        return Process.from_isometry(self.isometry, self.out_shape.dims, self.out_shape.labels)

    def distance(self, other: "Implementation") -> float:
        """Frobenius norm of the Choi difference, without forming the Choi matrices."""
        return process_distance(self.process(), other.process())

    def behaviour_table(self) -> np.ndarray:
        nxa, nxb = self.in_dims
        ya, yb = self.out_shape.dims[:2]
        v = self.isometry.reshape(ya, yb, -1, nxa, nxb)
        return np.einsum("abkxu,abkxu->xuab", v, v.conj()).real


def stinespring_implementation(s: Strategy, convention: str = "minimal"
                               ) -> tuple[Implementation, dict[str, Any]]:
    """The implementation built from ``s.purified()`` and local dilations.

    Returns the implementation and its components ``{"A", "B", "psi", "env_dims"}``.
    """
    va, ea = local_dilation(s, "A", convention)
    vb, eb = local_dilation(s, "B", convention)
    psi, p = s.purified()
    nxa, nxb, nya, nyb = s.scenario.shape
    da, db = s.dims
    sa = va.reshape(nya, ea, nxa, da)
    sb = vb.reshape(nyb, eb, nxb, db)
    t = np.einsum("yexa,zfwb,abp->yzepfxw", sa, sb, psi.reshape(da, db, p), optimize=True)
    v = t.reshape(nya * nyb * ea * p * eb, nxa * nxb)
    shape = SystemShape((nya, nyb, ea, p, eb), IMPL_LABELS)
    impl = Implementation(v, shape, (nxa, nxb), convention)
    return impl, {"A": va, "B": vb, "psi": psi, "env_dims": (ea, p, eb)}


# -- witnesses and reports ---------------------------------------------------------

WITNESS_KINDS = ("local", "assisted", "causal", "reducibility", "lemma49_v1", "lemma49_v2")


@dataclass(frozen=True, eq=False)
class Witness:
    """Channels, states and isometries claimed to certify a relation.

    ``gammas`` maps "A", "0", "B" to environment channels.  For ``assisted``
    the state ``assistant`` lives on K_A ⊗ K_0 ⊗ K_B with ``assistant_dims``.
    For ``causal``, ``side_dims`` splits the output of Γ_0 into
    (W_A, E'_0, W_B).  ``isometries`` holds V_P, W_P or per-input lists
    W_P^x; ``residual_state`` is ψ_res on ``residual_dims``.
    ``conventions`` names the implementation conventions of (s, s_tilde).
    """
    kind: str
    gammas: Mapping[str, Channel] = field(default_factory=dict)
    assistant: np.ndarray | None = None
    assistant_dims: tuple[int, int, int] | None = None
    side_dims: tuple[int, int, int] | None = None
    isometries: Mapping[str, Any] = field(default_factory=dict)
    residual_state: np.ndarray | None = None
    residual_dims: tuple[int, ...] | None = None
    conventions: tuple[str, str] = ("minimal", "minimal")

    def __post_init__(self):
        if self.kind not in WITNESS_KINDS:
            raise WitnessError(f"unknown witness kind {self.kind!r}")
        for c in self.conventions:
            if c not in CONVENTIONS:
                raise WitnessError(f"unknown convention {c!r}")
        object.__setattr__(self, "conventions", tuple(self.conventions))
        need_gammas = {"local", "assisted", "causal"}
        if self.kind in need_gammas:
            if set(self.gammas) != {"A", "0", "B"} and not (
                    self.kind == "local" and set(self.isometries) == {"A", "0", "B"}):
                raise WitnessError(f"{self.kind} witness needs channels for A, 0 and B")
        if self.kind == "assisted":
            if self.assistant is None or self.assistant_dims is None:
                raise WitnessError("assisted witness needs an assistant state and its dims")
            a = as_matrix(self.assistant)
            if a.shape[0] != int(np.prod(self.assistant_dims)):
                raise WitnessError("assistant state does not match assistant_dims")
        if self.kind in ("reducibility", "lemma49_v1", "lemma49_v2"):
            if set(self.isometries) != {"A", "B"}:
                raise WitnessError(f"{self.kind} witness needs isometries for A and B")
            if self.residual_state is None or self.residual_dims is None:
                raise WitnessError(f"{self.kind} witness needs a residual state")
        if self.residual_state is not None:
            r = np.asarray(self.residual_state, dtype=complex).reshape(-1)
            if self.residual_dims is not None and r.size != int(np.prod(self.residual_dims)):
                raise WitnessError("residual state does not match residual_dims")
            object.__setattr__(self, "residual_state", r)


@dataclass
class Report:
    passed: bool
    residual: float | None
    behaviour_residual: float | None = None
    reason: str = ""
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed

    def summary(self) -> dict:
        out = {"passed": self.passed, "residual": self.residual,
               "behaviour_residual": self.behaviour_residual, "reason": self.reason}
        out.update({k: v for k, v in self.details.items() if isinstance(v, (bool, int, float, str))})
        return out


def _check_scenarios(s: Strategy, s_tilde: Strategy):
    if s.scenario.shape != s_tilde.scenario.shape:
        raise ShapeError(f"scenarios differ: {s.scenario.shape} vs {s_tilde.scenario.shape}")


def behaviour_gap(s: Strategy, s_tilde: Strategy) -> float:
    _check_scenarios(s, s_tilde)
    return behaviour_of(s).distance(behaviour_of(s_tilde))


def _implementations(s, s_tilde, w: Witness) -> tuple[Process, Process]:
    lhs = stinespring_implementation(s, w.conventions[0])[0].process()
    rhs = stinespring_implementation(s_tilde, w.conventions[1])[0].process()
    return lhs, rhs


def _gamma(w: Witness, key: str) -> Channel:
    g = w.gammas.get(key)
    if g is None:
        g = isometric_channel(w.isometries[key])
    return g


def apply_local(proc: Process, w: Witness) -> Process:
    """(Γ_A ⊗ Γ_0 ⊗ Γ_B) on the environment factors."""
    out = proc
    for key, lbl in (("A", "EA"), ("0", "E0"), ("B", "EB")):
        out = out.apply([lbl], _gamma(w, key), [lbl])
    return out


def _split(total: int, known: int, what: str) -> int:
    if known == 0 or total % known:
        raise ShapeError(f"{what}: {total} is not a multiple of {known}")
    return total // known


def apply_assisted(proc: Process, w: Witness) -> Process:
    """Append α on (K_A, K_0, K_B) and apply Γ_A(E_A,K_A), Γ_0(E_0,K_0), Γ_B(K_B,E_B)."""
    ka, k0, kb = w.assistant_dims
    ga, g0, gb = w.gammas["A"], w.gammas["0"], w.gammas["B"]
    for g, lbl, k in ((ga, "EA", ka), (g0, "E0", k0), (gb, "EB", kb)):
        if g.d_in != proc.dim_of(lbl) * k:
            raise ShapeError(f"Γ for {lbl} expects {g.d_in} but environment and assistant give {proc.dim_of(lbl) * k}")
    out = proc.append(as_matrix(w.assistant), [ka, k0, kb], ["KA", "K0", "KB"])
    out = out.apply(["EA", "KA"], ga, ["EA"])
    out = out.apply(["E0", "K0"], g0, ["E0"])
    return out.apply(["KB", "EB"], gb, ["EB"])


def causal_side_dims(proc: Process, w: Witness) -> tuple[int, int, int]:
    if w.side_dims is not None:
        return tuple(w.side_dims)
    ga, g0, gb = w.gammas["A"], w.gammas["0"], w.gammas["B"]
    wa = _split(ga.d_in, proc.dim_of("EA"), "Γ_A input")
    wb = _split(gb.d_in, proc.dim_of("EB"), "Γ_B input")
    return wa, _split(g0.d_out, wa * wb, "Γ_0 output"), wb


def apply_causal(proc: Process, w: Witness) -> Process:
    """Γ_0: E_0 -> W_A ⊗ E'_0 ⊗ W_B, then Γ_A(E_A, W_A) and Γ_B(W_B, E_B)."""
    wa, e0, wb = causal_side_dims(proc, w)
    out = proc.apply(["E0"], w.gammas["0"], ["WA", "E0", "WB"], [wa, e0, wb])
    out = out.apply(["EA", "WA"], w.gammas["A"], ["EA"])
    return out.apply(["WB", "EB"], w.gammas["B"], ["EB"])


def _verify(kind: str, s, s_tilde, w: Witness, tol: float, runner) -> Report:
    if w.kind != kind:
        raise WitnessError(f"expected a {kind} witness, got {w.kind}")
    gap = behaviour_gap(s, s_tilde)
    if gap > tol:
        return Report(False, None, gap, "behaviours differ")
    lhs, rhs = _implementations(s, s_tilde, w)
    lhs = runner(lhs, w)
    res = process_distance(lhs.reorder(list(IMPL_LABELS)), rhs)
    return Report(res < tol, res, gap, "" if res < tol else "environment identity fails")


def verify_local(s: Strategy, s_tilde: Strategy, w: Witness, tol: float = VERIFY_TOL) -> Report:
    """Check (Γ_A ⊗ Γ_0 ⊗ Γ_B) ∘ impl(s) = impl(s_tilde)."""
    return _verify("local", s, s_tilde, w, tol, apply_local)


def verify_assisted(s: Strategy, s_tilde: Strategy, w: Witness, tol: float = VERIFY_TOL) -> Report:
    return _verify("assisted", s, s_tilde, w, tol, apply_assisted)


def verify_causal(s: Strategy, s_tilde: Strategy, w: Witness, tol: float = VERIFY_TOL) -> Report:
    rep = _verify("causal", s, s_tilde, w, tol, apply_causal)
    rep.details["pure_target"] = classify(s_tilde).pure_state
    return rep


# -- vector identities: reducibility and the equivalent conditions -----------------

def _projective_check(s: Strategy, what: str):
    if not classify(s).projective:
        raise ValueError(f"{what} must be projective")


def _aligned_residual(pairs: list[tuple[np.ndarray, np.ndarray]]) -> tuple[float, float]:
    """max_k ||lhs_k - e^{iθ} rhs_k|| with one phase θ shared by all pairs."""
    overlap = sum(np.vdot(r, l) for l, r in pairs)
    theta = float(np.angle(overlap)) if abs(overlap) > 0 else 0.0
    ph = np.exp(1j * theta)
    return max(float(np.linalg.norm(l - ph * r)) for l, r in pairs), theta


def _vector_identity(s: Strategy, s_tilde: Strategy, op_a, op_b, w: Witness, with_x: bool) -> tuple[float, float]:
    """Evaluate [(op_a ⊗ op_b)(x, y) ⊗ 1_P] ψ against Π̃^x(y) ψ̃ ⊗ ψ_res for all (x, y).

    ``op_P(x, y)`` maps H_P to (X̂_P ⊗) H̃_P ⊗ res_P.
    """
    psi, p = s.purified()
    psi_t, pt = s_tilde.purified()
    if pt != 1:
        raise ValueError("target strategy must be pure-state")
    ra, rb, rp = w.residual_dims
    if rp != p:
        raise ShapeError(f"residual state carries a purifying factor of dimension {rp}, expected {p}")
    da, db = s.dims
    ta, tb = s_tilde.dims
    nxa, nxb, nya, nyb = s.scenario.shape
    xa_d, xb_d = (nxa, nxb) if with_x else (1, 1)
    psi_m = psi.reshape(da * db, p)
    pairs = []
    for xa in range(nxa):
        for xb in range(nxb):
            for ya in range(nya):
                for yb in range(nyb):
                    lhs = np.kron(op_a(xa, ya), op_b(xb, yb)) @ psi_m
                    # rows: (XA, H̃A, resA, XB, H̃B, resB), cols P
                    shape = SystemShape((xa_d, ta, ra, xb_d, tb, rb, p), ("XA", "TA", "RA", "XB", "TB", "RB", "P"))
                    lhs = permute_vector(lhs.reshape(-1), shape, ["XA", "XB", "TA", "TB", "RA", "RB", "P"])
                    proj = np.kron(s_tilde.povm_a[xa][ya], s_tilde.povm_b[xb][yb])
                    rhs = np.kron(proj @ psi_t, w.residual_state)
                    if with_x:
                        rhs = np.kron(np.kron(np.eye(nxa)[xa], np.eye(nxb)[xb]), rhs)
                    pairs.append((lhs, rhs))
    return _aligned_residual(pairs)


def verify_reducibility(s: Strategy, s_tilde: Strategy, w: Witness, tol: float = 1e-9) -> Report:
    """[W Π^x(y) ⊗ 1_P] ψ = Π̃^x(y) ψ̃ ⊗ ψ_res for all (x, y), up to one global phase."""
    if w.kind not in ("reducibility",):
        raise WitnessError(f"expected a reducibility witness, got {w.kind}")
    _check_scenarios(s, s_tilde)
    _projective_check(s, "source strategy")
    _projective_check(s_tilde, "target strategy")
    wa, wb = as_matrix(w.isometries["A"]), as_matrix(w.isometries["B"])
    res, theta = _vector_identity(
        s, s_tilde, lambda x, y: wa @ s.povm_a[x][y], lambda x, y: wb @ s.povm_b[x][y], w, False)
    return Report(res < tol, res, None, "" if res < tol else "vector identity fails", {"phase": theta})


def verify_lemma49(s: Strategy, s_tilde: Strategy, w: Witness, tol: float = 1e-9) -> Report:
    """Check the x-aware condition (``lemma49_v1``) or the per-input one (``lemma49_v2``)."""
    _check_scenarios(s, s_tilde)
    _projective_check(s, "source strategy")
    _projective_check(s_tilde, "target strategy")
    if w.kind == "lemma49_v1":
        va, vb = as_matrix(w.isometries["A"]), as_matrix(w.isometries["B"])
        nxa, nxb = s.scenario.shape[:2]

        def op(v, povms, nx):
            return lambda x, y: v @ np.kron(np.eye(nx)[:, [x]], povms[x][y])

        res, theta = _vector_identity(s, s_tilde, op(va, s.povm_a, nxa), op(vb, s.povm_b, nxb), w, True)
    elif w.kind == "lemma49_v2":
        wa = [as_matrix(m) for m in w.isometries["A"]]
        wb = [as_matrix(m) for m in w.isometries["B"]]
        res, theta = _vector_identity(
            s, s_tilde, lambda x, y: wa[x] @ s.povm_a[x][y], lambda x, y: wb[x] @ s.povm_b[x][y], w, False)
    elif w.kind == "reducibility":
        return verify_reducibility(s, s_tilde, w, tol)
    else:
        raise WitnessError(f"not a lemma49 witness: {w.kind}")
    return Report(res < tol, res, None, "" if res < tol else "vector identity fails", {"phase": theta})


def _complete_on_support(w_op: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Isometry agreeing with ``w_op`` on span(support) and completed by an orthonormal complement."""
    d_out, d = w_op.shape
    image = w_op @ support
    u, _, vh = np.linalg.svd(image, full_matrices=False)
    image = u @ vh
    comp_in = orthonormal_complement(support, d)
    comp_out = orthonormal_complement(image, d_out)
    if comp_out.shape[1] < comp_in.shape[1]:
        raise WitnessError("target space too small for an isometric completion")
    return image @ dagger(support) + comp_out[:, :comp_in.shape[1]] @ dagger(comp_in)


def lemma49_convert(w: Witness, s: Strategy, s_tilde: Strategy, tol: float = 1e-9
                    ) -> tuple[Witness, Witness, Report]:
    """Turn x-aware isometries V_P into per-input W_P^x and then into x-independent W_P.

    V_P maps X̂_P ⊗ H_P to X̂_P ⊗ H̃_P ⊗ res_P (input factor first).  Returns the
    ``lemma49_v2`` and ``reducibility`` witnesses and a report whose details
    hold the isometry and x-independence residuals on the supports.
    """
    if w.kind != "lemma49_v1":
        raise WitnessError("lemma49_convert needs a lemma49_v1 witness")
    flags = classify(s_tilde, tol)
    if not (flags.pure_state and flags.projective and flags.full_rank):
        raise ValueError("rank assumption violated: target must be pure-state, projective and locally full-rank")
    src = verify_lemma49(s, s_tilde, w, tol)
    if not src.passed:
        raise WitnessError(f"source witness fails (residual {src.residual:.3e})")
    per_x, fixed, iso_err, dep_err = {}, {}, 0.0, 0.0
    for party, nx, d in (("A", s.scenario.shape[0], s.dims[0]), ("B", s.scenario.shape[1], s.dims[1])):
        v = as_matrix(w.isometries[party])
        out = v.shape[0] // nx
        blocks = v.reshape(nx, out, nx, d)
        ws = [blocks[x, :, x, :] for x in range(nx)]
        supp = support_basis(s.marginal(party))
        for wx in ws:
            g = dagger(supp) @ dagger(wx) @ wx @ supp
            iso_err = max(iso_err, max_abs(g - np.eye(supp.shape[1])))
        if iso_err > tol:
            raise WitnessError(f"extracted operators not isometric on the support (error {iso_err:.3e})")
        for wx in ws[1:]:
            dep_err = max(dep_err, max_abs((wx - ws[0]) @ supp))
        per_x[party] = [_complete_on_support(wx, supp) for wx in ws]
        fixed[party] = per_x[party][0]
    common = dict(residual_state=w.residual_state, residual_dims=w.residual_dims, conventions=w.conventions)
    w2 = Witness("lemma49_v2", isometries=per_x, **common)
    w3 = Witness("reducibility", isometries=fixed, **common)
    r2 = verify_lemma49(s, s_tilde, w2, tol)
    r3 = verify_reducibility(s, s_tilde, w3, tol)
    ok = r2.passed and r3.passed
    rep = Report(ok, max(r2.residual, r3.residual), None, "" if ok else "converted witness fails",
                 {"source_residual": src.residual, "vers2_residual": r2.residual, "vers3_residual": r3.residual,
                  "isometry_on_support": iso_err, "x_dependence_on_support": dep_err})
    return w2, w3, rep


# -- approximate simulation --------------------------------------------------------

METRICS = ("trace", "purified", "hilbert_2norm")


def pure_distance(u: np.ndarray, v: np.ndarray, metric: str) -> float:
    """Distance between unit vectors, evaluated through the phase-aligned difference.

    For pure states the trace and purified distances coincide.
    """
    inner = np.vdot(v, u)
    ov = min(abs(inner), 1.0)
    phase = inner / abs(inner) if abs(inner) > 0 else 1.0
    # ||u - e^{iθ} v||^2 = 2 - 2|<v,u>| without the cancellation of 1 - |<v,u>|
    d2 = float(np.linalg.norm(u - phase * v))
    if metric == "hilbert_2norm":
        return d2
    if metric in ("purified", "trace"):
        return float(np.sqrt(d2 ** 2 / 2 * (1 + ov)))
    raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    vals = np.linalg.eigvalsh((rho - sigma + dagger(rho - sigma)) / 2)
    return float(0.5 * np.sum(np.abs(vals)))


def approx_distance(s: Strategy, s_tilde: Strategy, w: Witness, metric: str = "trace") -> dict:
    """Per-input distances between the two pure output states of the purified comparison.

    The witness carries isometries "A", "0", "B" mapping E_P to Ẽ_P ⊗ G_P and a
    residual state on (G_A, G_0, G_B).
    """
    if w.kind != "local" or set(w.isometries) != {"A", "0", "B"} or w.residual_state is None:
        raise WitnessError("approx_distance needs a local witness with isometries A, 0, B and a residual state")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")
    _check_scenarios(s, s_tilde)
    impl, _ = stinespring_implementation(s, w.conventions[0])
    impl_t, _ = stinespring_implementation(s_tilde, w.conventions[1])
    ga_d, g0_d, gb_d = w.residual_dims
    proc = impl.process()
    for key, lbl, gd, glbl in (("A", "EA", ga_d, "GA"), ("0", "E0", g0_d, "G0"), ("B", "EB", gb_d, "GB")):
        v = as_matrix(w.isometries[key])
        if max_abs(dagger(v) @ v - np.eye(v.shape[1])) > 1e-9:
            raise WitnessError(f"witness component {key} is not an isometry")
        out = impl_t.out_shape.dim_of(lbl)
        proc = proc.apply([lbl], v, [lbl, glbl], [out, gd])
    proc = proc.reorder(list(IMPL_LABELS) + ["GA", "G0", "GB"])
    target = np.kron(impl_t.isometry, w.residual_state.reshape(-1, 1))
    lhs = proc.ops[0]
    per = []
    for x in range(lhs.shape[1]):
        per.append(pure_distance(lhs[:, x], target[:, x], metric))
    return {"metric": metric, "per_input": per, "max": max(per)}


# -- witness builders --------------------------------------------------------------

def identity_witness(s: Strategy, convention: str = "minimal") -> Witness:
    _, comp = stinespring_implementation(s, convention)
    ea, p, eb = comp["env_dims"]
    return Witness("local", {"A": identity_channel(ea), "0": identity_channel(p), "B": identity_channel(eb)},
                   conventions=(convention, convention))


def _purification_connector(psi: np.ndarray, psi_prime: np.ndarray, sys_dim: int, keep: int) -> Channel:
    """Γ on the purifying system with (id ⊗ Γ)(ψ) = ψ' traced down to its first ``keep`` levels.

    ``psi_prime`` lives on system ⊗ (kept ⊗ discarded).
    """
    g = connect_isometries(psi.reshape(-1, 1), psi_prime.reshape(-1, 1), sys_dim)
    extra = g.d_out // keep
    t = g.tensor().reshape(g.d_in, keep, extra, g.d_in, keep, extra)
    j = np.einsum("iagjbg->iajb", t)
    return Channel(j.reshape(g.d_in * keep, g.d_in * keep), g.d_in, keep)


def augmentation_witness(s_tilde: Strategy, gamma, kdims: tuple[int, int],
                         convention: str = "minimal") -> tuple[Strategy, Witness]:
    """s = s_tilde[γ] and a local witness for s ≥ s_tilde (discarding the ancillas)."""
    s = augment(s_tilde, gamma, kdims)
    gammas = {}
    for party, k in (("A", kdims[0]), ("B", kdims[1])):
        v_s, e_s = local_dilation(s, party, convention)
        v_t, e_t = local_dilation(s_tilde, party, convention)
        ny = len(s.povms(party)[0])
        phi = from_kraus([np.kron(v_t, np.eye(k)[[i]]) for i in range(k)])
        gammas[party] = factor_through(Dilation(phi, ny, e_t), Dilation.from_isometry(v_s, ny))
    psi_s, p_s = s.purified()
    psi_t, p_t = s_tilde.purified()
    g_vec, p_g = purify(as_matrix(gamma))
    da, db = s_tilde.dims
    ka, kb = kdims
    joint = kron(psi_t, g_vec)
    shape = SystemShape((da, db, p_t, ka, kb, p_g), ("A", "B", "P", "KA", "KB", "Q"))
    joint = permute_vector(joint, shape, ["A", "KA", "B", "KB", "P", "Q"])
    gammas["0"] = _purification_connector(psi_s, joint, s.dims[0] * s.dims[1], p_t)
    return s, Witness("local", gammas, conventions=(convention, convention))


def rotation_witness(s_tilde: Strategy, u_a, u_b, convention: str = "minimal") -> tuple[Strategy, Witness]:
    """s = s_tilde conjugated by local unitaries and a local witness for s ≥ s_tilde."""
    u_a, u_b = as_matrix(u_a), as_matrix(u_b)
    s = rotate(s_tilde, u_a, u_b)
    gammas = {}
    for party, u in (("A", u_a), ("B", u_b)):
        v_s, _ = local_dilation(s, party, convention)
        v_t, _ = local_dilation(s_tilde, party, convention)
        nx = len(s.povms(party))
        ny = len(s.povms(party)[0])
        phi = v_t @ np.kron(np.eye(nx), dagger(u))
        gammas[party] = connect_isometries(v_s, phi, ny)
    psi_s, _ = s.purified()
    psi_t, p_t = s_tilde.purified()
    rotated = np.kron(np.kron(u_a, u_b), np.eye(p_t)) @ psi_t
    gammas["0"] = _purification_connector(psi_s, rotated, s.dims[0] * s.dims[1], p_t)
    return s, Witness("local", gammas, conventions=(convention, convention))


def coins_causal_witness(s: Strategy, s_tilde: Strategy) -> Witness:
    """Causal witness for correlated coins ≥ a coins_general instance.

    Γ_0 is the isometry |j> -> |j> ⊗ |χ_j> ⊗ |j> on the purifying system of
    ``s``; Γ_A and Γ_B undo the copy |j> -> |j> ⊗ |j> on (E_P, W_P).
    """
    psi, p = s.purified()
    psi_t, pt = s_tilde.purified()
    if s.dims != (2, 2) or s_tilde.dims != (2, 2):
        raise ValueError("coins strategies live on C^2 ⊗ C^2")
    e = np.array([np.sqrt(2) * psi.reshape(4, p)[3 * j] for j in range(2)])  # rows e_j on P
    chi = np.array([np.sqrt(2) * psi_t.reshape(4, pt)[3 * j] for j in range(2)])
    if max_abs(e.conj() @ e.T - np.eye(2)) > 1e-9:
        raise ValueError("purification of s does not carry orthonormal coin records")
    # Γ_0 = sum_j (|j> ⊗ |χ_j> ⊗ |j>) <e_j|
    g0 = sum(np.outer(kron(np.eye(2)[j], chi[j], np.eye(2)[j]), e[j].conj()) for j in range(2))
    g0 = g0 + _completion(g0, p)
    copy = np.zeros((4, 2), dtype=complex)
    copy[0, 0] = copy[3, 1] = 1.0
    undo = left_inverse(copy)
    return Witness("causal", {"A": undo, "0": isometric_channel(g0), "B": undo},
                   side_dims=(2, pt, 2), conventions=("canonical_projective", "canonical_projective"))


def _completion(partial: np.ndarray, d: int) -> np.ndarray:
    """Extra columns making a partial isometry on a subspace into a full isometry."""
    _, s, vh = np.linalg.svd(partial)
    rank = int(np.sum(s > 1e-9))
    if rank == d:
        return np.zeros_like(partial)
    dom = dagger(vh[:rank])
    img = partial @ dom
    comp_in = orthonormal_complement(dom, d)
    comp_out = orthonormal_complement(img, partial.shape[0])
    return comp_out[:, :comp_in.shape[1]] @ dagger(comp_in)


def reverse_assisted_witness(s: Strategy, s_tilde: Strategy, w: Witness, tol: float = VERIFY_TOL) -> Witness:
    """From a local witness for s ≥ s_tilde build an assisted witness for s_tilde ≥ s.

    Each Γ_P is replaced by a Stinespring isometry G_P: E_P -> Ẽ_P ⊗ F_P.  The
    dilated image of impl(s) is impl(s_tilde) ⊗ β; the assistant is β and the
    new environment channels are left inverses of the G_P.
    """
    rep = verify_local(s, s_tilde, w, tol)
    if not rep.passed:
        raise WitnessError(f"source witness fails ({rep.reason}, residual {rep.residual})")
    impl, _ = stinespring_implementation(s, w.conventions[0])
    impl_t, _ = stinespring_implementation(s_tilde, w.conventions[1])
    proc = impl.process()
    isos, fdims = {}, {}
    for key, lbl, flbl in (("A", "EA", "FA"), ("0", "E0", "F0"), ("B", "EB", "FB")):
        v, dil = stinespring_minimal(_gamma(w, key))
        isos[key], fdims[key] = v, dil.env_dim
        proc = proc.apply([lbl], v, [lbl, flbl], [impl_t.out_shape.dim_of(lbl), dil.env_dim])
    proc = proc.reorder(list(IMPL_LABELS) + ["FA", "F0", "FB"])
    v_left = proc.ops[0]
    v_right = impl_t.isometry
    d_in = v_right.shape[1]
    f_total = v_left.shape[0] // v_right.shape[0]
    beta = np.zeros(f_total, dtype=complex)
    for x in range(d_in):
        beta += np.kron(v_right[:, x].conj().reshape(1, -1), np.eye(f_total)) @ v_left[:, x]
    beta /= d_in
    beta /= np.linalg.norm(beta)
    fa, f0, fb = fdims["A"], fdims["0"], fdims["B"]
    gammas = {"A": left_inverse(isos["A"]), "0": left_inverse(isos["0"])}
    # Γ_B reads (F_B, Ẽ_B): reorder the isometry's output factors
    eb_t = impl_t.out_shape.dim_of("EB")
    gb = permute_vector(isos["B"], SystemShape((eb_t, fb), ("E", "F")), ["F", "E"])
    gammas["B"] = left_inverse(gb)
    return Witness("assisted", gammas, assistant=np.outer(beta, beta.conj()), assistant_dims=(fa, f0, fb),
                   conventions=(w.conventions[1], w.conventions[0]))


def assisted_to_local(s: Strategy, w: Witness, convention: str = "minimal") -> tuple[Strategy, Witness]:
    """Reduce an assisted witness for s to a local witness for s[α_AB].

    The augmented strategy carries α's A and B parts as local ancillas; the
    new Γ_0 regenerates the K_0 part from the purifying system.
    """
    if w.kind != "assisted":
        raise WitnessError("assisted_to_local needs an assisted witness")
    ka, k0, kb = w.assistant_dims
    alpha = as_matrix(w.assistant)
    a_shape = SystemShape((ka, k0, kb), ("KA", "K0", "KB"))
    alpha_ab = partial_trace(alpha, a_shape, ["KA", "KB"])
    s_aug = augment(s, alpha_ab, (ka, kb))
    gammas = {}
    for party, k in (("A", ka), ("B", kb)):
        v_aug, _ = local_dilation(s_aug, party, convention)
        v, e = local_dilation(s, party, w.conventions[0])
        ny = len(s.povms(party)[0])
        nx = len(s.povms(party))
        d = s.dims[0] if party == "A" else s.dims[1]
        big = np.kron(v, np.eye(k))  # (Y, E, K) <- (X, H, K)
        order = ["Y", "E", "K"] if party == "A" else ["Y", "K", "E"]
        big = permute_vector(big, SystemShape((ny, e, k), ("Y", "E", "K")), order)
        conn = connect_isometries(v_aug, big, ny)
        gammas[party] = compose_serial(w.gammas[party], conn)
    psi, p = s.purified()
    a_vec, q = purify(alpha)
    da, db = s.dims
    joint = kron(psi, a_vec)
    shape = SystemShape((da, db, p, ka, k0, kb, q), ("A", "B", "P", "KA", "K0", "KB", "Q"))
    joint = permute_vector(joint, shape, ["A", "KA", "B", "KB", "P", "K0", "Q"])
    psi_aug, _ = s_aug.purified()
    conn0 = _purification_connector(psi_aug, joint, s_aug.dims[0] * s_aug.dims[1], p * k0)
    gammas["0"] = compose_serial(w.gammas["0"], conn0)
    return s_aug, Witness("local", gammas, conventions=(convention, w.conventions[1]))


__all__ = [
    "Process", "process_distance", "Implementation", "stinespring_implementation", "local_dilation",
    "Witness", "WitnessError", "Report", "verify_local", "verify_assisted", "verify_causal",
    "verify_reducibility", "verify_lemma49", "lemma49_convert", "approx_distance", "pure_distance",
    "trace_distance", "identity_witness", "augmentation_witness", "rotation_witness",
    "coins_causal_witness", "reverse_assisted_witness", "assisted_to_local", "behaviour_gap",
    "apply_local", "apply_assisted", "apply_causal", "CONVENTIONS", "IMPL_LABELS", "VERIFY_TOL",
]
