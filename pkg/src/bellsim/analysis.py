"""Consequences of the simulation relations.

State and measurement extraction from simulation witnesses, visibility of
convex decompositions of a behaviour, necessary checks for extremality and
the environment leak of rank-one projective pure-state strategies.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .bell import BellScenario, Behaviour, Strategy, behaviour_of, classify
from .channels import Channel, from_function, identity_channel
from .dilations import Dilation, dilation_residual, factor_through, left_inverse
from .simulation import (
    Process,
    Witness,
    WitnessError,
    local_dilation,
    process_distance,
    verify_assisted,
    verify_local,
)
from .tensor_core import LINALG_TOL, RANK_TOL, as_matrix, dagger, eig_hermitian, numerical_rank, partial_trace
from .tensor_core import SystemShape, max_abs

PURE_SOURCE_MIXED_TARGET = "pure_source_mixed_target"


@dataclass
class ExtractionResult:
    passed: bool
    channels: dict[str, Channel] = field(default_factory=dict)
    residual: float | None = None
    flags: list[str] = field(default_factory=list)
    reason: str = ""
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed


def _on_env(mat: np.ndarray, ny: int, gamma: Channel) -> np.ndarray:
    """(id_Y ⊗ Γ) applied to an operator on Y ⊗ E."""
    e = gamma.d_in
    m = mat.reshape(ny, e, ny, e)
    out = np.einsum("iajb,yizj->yazb", gamma.tensor(), m)
    return out.reshape(ny * gamma.d_out, ny * gamma.d_out)


def _conj(v: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return v @ rho @ dagger(v)


def _trace_first(m: np.ndarray, d_first: int) -> np.ndarray:
    n = m.shape[0] // d_first
    return np.einsum("iaib->ab", m.reshape(d_first, n, d_first, n))


def _pad_x0(rho: np.ndarray, nx: int) -> np.ndarray:
    x0 = np.zeros((nx, nx), dtype=complex)
    x0[0, 0] = 1.0
    return np.kron(x0, rho)


def _transfer(v_from: np.ndarray, v_to: np.ndarray, env_map: Channel, nx: int, ny: int, d_from: int) -> Channel:
    """tr_X ∘ Σ_to⁻ ∘ (id_Y ⊗ env_map) ∘ Σ_from ∘ (|x0><x0| ⊗ ·) as a channel on the local system."""
    undo = left_inverse(v_to)

    def f(rho):
        m = _on_env(_conj(v_from, _pad_x0(rho, nx)), ny, env_map)
        return _trace_first(undo(m), nx)

    return from_function(f, d_from, validate=False)


def extract_state_witness(s: Strategy, s_tilde: Strategy, local_witness: Witness | None,
                          tol: float = 1e-8) -> ExtractionResult:
    """Channels Ξ_A, Ξ_0, Ξ_B carrying a purification of s onto one of s_tilde.

    Ξ_0 is the witness channel on the purifying system; Ξ_P undoes the
    dilation of s_tilde after the witness has acted on the dilation of s, with
    the input fixed to the first label and then discarded.  A pure-state
    ``s`` can never locally simulate a mixed-state ``s_tilde``; that case is
    reported with the ``pure_source_mixed_target`` flag instead of channels.
    """
    if classify(s).pure_state and not classify(s_tilde).pure_state:
        return ExtractionResult(False, flags=[PURE_SOURCE_MIXED_TARGET],
                                reason="a pure-state strategy cannot locally simulate a mixed-state one: "
                                       "extraction would force the target purification to factor")
    if local_witness is None:
        raise WitnessError("a local witness is required")
    rep = verify_local(s, s_tilde, local_witness, tol)
    if not rep.passed:
        raise WitnessError(f"source witness fails ({rep.reason}, residual {rep.residual})")
    conv, conv_t = local_witness.conventions
    channels = {}
    for party, idx in (("A", 0), ("B", 1)):
        v, _ = local_dilation(s, party, conv)
        v_t, _ = local_dilation(s_tilde, party, conv_t)
        nx, ny = len(s.povms(party)), len(s.povms(party)[0])
        channels[party] = _transfer(v, v_t, _witness_channel(local_witness, party), nx, ny, s.dims[idx])
    channels["0"] = _witness_channel(local_witness, "0")
    residual = _state_residual(s, s_tilde, channels)
    return ExtractionResult(residual < tol, channels, residual,
                            reason="" if residual < tol else "extracted channels do not reproduce the target",
                            details={"source_residual": rep.residual})


def _witness_channel(w: Witness, key: str) -> Channel:
    g = w.gammas.get(key)
    if g is None:
        from .channels import isometric_channel
        g = isometric_channel(w.isometries[key])
    return g


def _state_residual(s: Strategy, s_tilde: Strategy, channels: dict[str, Channel]) -> float:
    psi, p = s.purified()
    psi_t, p_t = s_tilde.purified()
    proc = Process.from_isometry(psi.reshape(-1, 1), [*s.dims, p], ["A", "B", "P"])
    proc = proc.apply(["A"], channels["A"], ["A"]).apply(["B"], channels["B"], ["B"])
    proc = proc.apply(["P"], channels["0"], ["P"])
    target = Process.from_isometry(psi_t.reshape(-1, 1), [*s_tilde.dims, p_t], ["A", "B", "P"])
    return process_distance(proc, target)


def _as_assisted(w: Witness) -> Witness:
    if w.kind == "assisted":
        return w
    if w.kind == "local":
        gammas = {k: _witness_channel(w, k) for k in ("A", "0", "B")}
        return Witness("assisted", gammas, assistant=np.ones((1, 1)), assistant_dims=(1, 1, 1),
                       conventions=w.conventions)
    raise WitnessError(f"expected an assisted or local witness, got {w.kind}")


def extract_measurement_witness(s: Strategy, s_tilde: Strategy, assisted_witness: Witness,
                                tol: float = 1e-8) -> ExtractionResult:
    """Channels Ξ̃_P on H̃_P and Ψ̃_P on environments with Σ_P ∘ (id ⊗ Ξ̃_P) = (id ⊗ Ψ̃_P) ∘ Σ̃_P.

    ``assisted_witness`` must map the implementation of ``s_tilde`` onto that
    of ``s`` (checked), and both local marginals of ``s_tilde`` must have full
    rank.  Ψ̃_P is Γ_P fed with the P-part of the assistant; Ξ̃_P is obtained
    by undoing Σ_P after Ψ̃_P ∘ Σ̃_P on a fixed input.
    """
    for party in "AB":
        marg = s_tilde.marginal(party)
        vals, _ = eig_hermitian(marg)
        if numerical_rank(vals, 1e-10) < marg.shape[0]:
            raise ValueError(f"marginal of s_tilde on {party} is not full rank")
    w = _as_assisted(assisted_witness)
    rep = verify_assisted(s_tilde, s, w, tol)
    if not rep.passed:
        raise WitnessError(f"source witness fails ({rep.reason}, residual {rep.residual})")
    conv_t, conv = w.conventions
    ka, k0, kb = w.assistant_dims
    alpha = as_matrix(w.assistant)
    a_shape = SystemShape((ka, k0, kb), ("KA", "K0", "KB"))
    channels, residuals = {}, {}
    for party, idx, lbl in (("A", 0, "KA"), ("B", 1, "KB")):
        a_p = partial_trace(alpha, a_shape, [lbl])
        g = w.gammas[party]
        e_t = g.d_in // a_p.shape[0]
        if party == "A":
            psi_map = from_function(lambda m, g=g, a=a_p: g(np.kron(m, a)), e_t, validate=False)
        else:
            psi_map = from_function(lambda m, g=g, a=a_p: g(np.kron(a, m)), e_t, validate=False)
        v, _ = local_dilation(s, party, conv)
        v_t, _ = local_dilation(s_tilde, party, conv_t)
        nx, ny = len(s.povms(party)), len(s.povms(party)[0])
        xi = _transfer(v_t, v, psi_map, nx, ny, s_tilde.dims[idx])
        channels["Xi_" + party], channels["Psi_" + party] = xi, psi_map
        residuals[party] = _measurement_residual(v, v_t, xi, psi_map, nx, ny)
    residual = max(residuals.values())
    return ExtractionResult(residual < tol, channels, residual,
                            reason="" if residual < tol else "extraction identity fails",
                            details={"per_party": residuals, "source_residual": rep.residual})


def _measurement_residual(v, v_t, xi: Channel, psi_map: Channel, nx: int, ny: int) -> float:
    """Frobenius Choi distance of Σ ∘ (id_X ⊗ Ξ̃) and (id_Y ⊗ Ψ̃) ∘ Σ̃ on X ⊗ H̃."""
    d_t = xi.d_in

    def lhs(m):
        t = m.reshape(nx, d_t, nx, d_t)
        out = np.einsum("iajb,xiyj->xayb", xi.tensor(), t).reshape(nx * xi.d_out, -1)
        return _conj(v, out)

    def rhs(m):
        return _on_env(_conj(v_t, m), ny, psi_map)

    a = from_function(lhs, nx * d_t, validate=False)
    b = from_function(rhs, nx * d_t, validate=False)
    return float(np.linalg.norm(a.choi - b.choi))


# -- convex decompositions --------------------------------------------------------------

@dataclass
class ConvexDecomposition:
    """Weights p_k > 0 and behaviours P_k with Σ p_k P_k the decomposed behaviour."""
    terms: list[tuple[float, Behaviour]]
    tol: float = 1e-9

    def __post_init__(self):
        if not self.terms:
            raise ValueError("a decomposition needs at least one term")
        weights = np.array([p for p, _ in self.terms], dtype=float)
        if np.any(weights <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(weights.sum() - 1) > self.tol:
            raise ValueError(f"weights sum to {weights.sum():.12g}")
        sc = self.terms[0][1].scenario
        if any(b.scenario.shape != sc.shape for _, b in self.terms):
            raise ValueError("terms live on different scenarios")

    @property
    def scenario(self) -> BellScenario:
        return self.terms[0][1].scenario

    @property
    def weights(self) -> np.ndarray:
        return np.array([p for p, _ in self.terms], dtype=float)

    def mixture(self) -> Behaviour:
        table = sum(p * b.table for p, b in self.terms)
        return Behaviour(self.scenario, table)

    def residual(self, target: Behaviour) -> float:
        return float(np.max(np.abs(self.mixture().table - target.table)))

    def is_trivial(self, tol: float = 1e-9) -> bool:
        first = self.terms[0][1].table
        return all(np.max(np.abs(b.table - first)) <= tol for _, b in self.terms)


@dataclass
class VisibilityReport:
    visible: bool
    states: list[np.ndarray] | None
    residual: float
    reason: str = ""
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.visible


def _behaviour_gram(s: Strategy, psi: np.ndarray, p: int) -> np.ndarray:
    """G[xa, xb, ya, yb] = Ψ* (E ⊗ F) Ψ as p x p matrices, Ψ the purification as an (AB, P) matrix."""
    big = psi.reshape(s.dims[0] * s.dims[1], p)
    nxa, nxb, nya, nyb = s.scenario.shape
    g = np.zeros((nxa, nxb, nya, nyb, p, p), dtype=complex)
    for xa, xb, ya, yb in itertools.product(range(nxa), range(nxb), range(nya), range(nyb)):
        op = np.kron(s.povm_a[xa][ya], s.povm_b[xb][yb])
        g[xa, xb, ya, yb] = dagger(big) @ op @ big
    return g


def _solve_visibility(g: np.ndarray, weights: np.ndarray, tables: np.ndarray, p: int):
    import cvxpy as cp

    n = len(weights)
    ms = [cp.Variable((p, p), hermitian=True) for _ in range(n)]
    cons = [sum(ms) == np.eye(p)]
    cons += [m >> 0 for m in ms]
    flat = g.reshape(-1, p, p)
    for k, m in enumerate(ms):
        target = weights[k] * tables[k].reshape(-1)
        for e in range(flat.shape[0]):
            cons.append(cp.real(cp.sum(cp.multiply(m, flat[e].T))) == target[e])
    prob = cp.Problem(cp.Minimize(0), cons)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    except cp.error.SolverError:
        return None
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return None
    return [np.asarray(m.value, dtype=complex) for m in ms]


def _polish(ms: list[np.ndarray], g: np.ndarray, weights: np.ndarray, tables: np.ndarray) -> list[np.ndarray]:
    """Least-norm correction onto the affine constraints, then a PSD clip."""
    p = ms[0].shape[0]
    n = len(ms)
    flat = g.reshape(-1, p, p)
    rows = []
    # unknowns: vec of each M_k (row-major); value_e,k = sum(M_k * G_e^T)
    for k in range(n):
        for e in range(flat.shape[0]):
            r = np.zeros((n, p * p), dtype=complex)
            r[k] = flat[e].T.reshape(-1)
            rows.append(r.reshape(-1))
    for i, j in itertools.product(range(p), range(p)):
        r = np.zeros((n, p, p), dtype=complex)
        r[:, i, j] = 1.0
        rows.append(r.reshape(-1))
    a = np.array(rows)
    b = np.concatenate([(weights[:, None] * tables.reshape(n, -1)).reshape(-1), np.eye(p).reshape(-1)])
    x = np.concatenate([m.reshape(-1) for m in ms])
    # the maps are real-valued on Hermitian inputs; solve in the complex least-norm sense
    corr = np.linalg.lstsq(a, b - a @ x, rcond=None)[0]
    x = x + corr
    out = []
    for m in x.reshape(n, p, p):
        m = (m + dagger(m)) / 2
        vals, vecs = np.linalg.eigh(m)
        out.append((vecs * np.clip(vals, 0, None)) @ dagger(vecs))
    return out


def visible_decompositions(s: Strategy, d: ConvexDecomposition, tol: float = 1e-8) -> VisibilityReport:
    """Decide whether ``d`` arises from splitting the state of ``s``.

    Every splitting ϱ = Σ p_k ϱ_k comes from a measurement {M_k} on the
    purifying system, so the search is an SDP feasibility problem in the M_k.
    A solution is confirmed by factoring the flagged dilation
    Σ p_k ϱ_k ⊗ |k><k| through the purification.
    """
    p_s = behaviour_of(s)
    if s.scenario.shape != d.scenario.shape:
        raise ValueError("decomposition and strategy live on different scenarios")
    gap = d.residual(p_s)
    if gap > max(tol, d.tol):
        raise ValueError(f"decomposition does not reproduce the behaviour of s (error {gap:.3e})")
    weights = d.weights
    tables = np.array([b.table for _, b in d.terms])
    n = len(weights)
    psi, p = s.purified()
    g = _behaviour_gram(s, psi, p)
    ms = _solve_visibility(g, weights, tables, p)
    pure = classify(s).pure_state
    fail = ("pure-state strategies admit only trivial visible decompositions" if pure
            else "no splitting of the state reproduces the terms")
    if ms is None:
        return VisibilityReport(False, None, float("inf"), fail)
    ms = _polish(ms, g, weights, tables)
    big = psi.reshape(s.dims[0] * s.dims[1], p)
    states, resid = [], 0.0
    for k, m in enumerate(ms):
        rho_k = big @ m.T @ dagger(big) / weights[k]
        states.append(rho_k)
        tk = np.einsum("xuyvpq,pq->xuyv", g, m.T).real / weights[k]
        resid = max(resid, float(np.max(np.abs(tk - tables[k]))))
    resid = max(resid, max_abs(sum(weights[k] * states[k] for k in range(n)) - s.state))
    factor_res = _factor_check(s.dims, psi, p, states, weights)
    ok = resid < tol and factor_res < max(tol, 1e-8)
    return VisibilityReport(ok, states if ok else None, resid,
                            "" if ok else fail,
                            {"factor_residual": factor_res, "measurement": ms})


def _factor_check(dims, psi: np.ndarray, p: int, states: Sequence[np.ndarray], weights: np.ndarray) -> float:
    n = len(states)
    d = dims[0] * dims[1]
    xi = sum(w * np.kron(rho, np.diag(np.eye(n)[k])) for k, (w, rho) in enumerate(zip(weights, states)))
    xi = (xi + dagger(xi)) / 2
    phi = Dilation(Channel(xi, 1, d * n, validate=False), d, n)
    sigma = Dilation.from_isometry(psi.reshape(-1, 1), d)
    try:
        gamma = factor_through(phi, sigma, tol=1e-6)
    except ValueError:
        return float("inf")
    return dilation_residual(phi, gamma, sigma)


def _embed(m: np.ndarray, d: int) -> np.ndarray:
    out = np.zeros((d, d), dtype=complex)
    out[:m.shape[0], :m.shape[1]] = m
    return out


def _padded_povms(povms, d_old: int, d: int):
    fill = np.zeros((d, d), dtype=complex)
    fill[d_old:, d_old:] = np.eye(d - d_old)
    return tuple(tuple(_embed(e, d) + (fill if y == 0 else 0) for y, e in enumerate(p)) for p in povms)


def build_mixing_strategy(decomp: Sequence[tuple[float, Strategy]]) -> Strategy:
    """Strategy with state Σ p_k |k><k|_A ⊗ |k><k|_B ⊗ ϱ_k and flag-reading measurements.

    Local systems are C^n ⊗ H_P with H_P large enough for every term (smaller
    terms are embedded and their POVMs padded on the complement).
    """
    decomp = list(decomp)
    if not decomp:
        raise ValueError("nothing to mix")
    weights = np.array([p for p, _ in decomp], dtype=float)
    if np.any(weights <= 0) or abs(weights.sum() - 1) > 1e-9:
        raise ValueError("weights must be positive and sum to one")
    sc = decomp[0][1].scenario
    if any(st.scenario != sc for _, st in decomp):
        raise ValueError("strategies live on different scenarios")
    n = len(decomp)
    da = max(st.dims[0] for _, st in decomp)
    db = max(st.dims[1] for _, st in decomp)
    purs = [st.purified() for _, st in decomp]
    p_max = max(q for _, q in purs)
    nxa, nxb, _, _ = sc.shape
    psi = np.zeros((n, da, n, db, n, p_max), dtype=complex)
    povm_a = [[None] * len(sc.y_a) for _ in range(nxa)]
    povm_b = [[None] * len(sc.y_b) for _ in range(nxb)]
    flags = np.eye(n)
    pa_all, pb_all = [], []
    for k, ((w, st), (vec, q)) in enumerate(zip(decomp, purs)):
        t = vec.reshape(st.dims[0], st.dims[1], q)
        psi[k, :st.dims[0], k, :st.dims[1], k, :q] = np.sqrt(w) * t
        pa_all.append(_padded_povms(st.povm_a, st.dims[0], da))
        pb_all.append(_padded_povms(st.povm_b, st.dims[1], db))
    for x in range(nxa):
        for y in range(len(sc.y_a)):
            povm_a[x][y] = sum(np.kron(np.diag(flags[k]), pa_all[k][x][y]) for k in range(n))
    for x in range(nxb):
        for y in range(len(sc.y_b)):
            povm_b[x][y] = sum(np.kron(np.diag(flags[k]), pb_all[k][x][y]) for k in range(n))
    vec = psi.reshape(n * da * n * db, n * p_max)
    rho = vec @ dagger(vec)
    out = Strategy(sc, rho, (n * da, n * db), povm_a, povm_b, vec.reshape(-1))
    want = sum(w * behaviour_of(st).table for w, st in decomp)
    err = float(np.max(np.abs(behaviour_of(out).table - want)))
    if err > 1e-9:
        raise AssertionError(f"mixing strategy misses the mixed behaviour by {err:.3e}")
    return out


# -- extremality -----------------------------------------------------------------------

def deterministic_behaviours(scenario: BellScenario) -> list[tuple[tuple[int, ...], tuple[int, ...], Behaviour]]:
    """All local deterministic behaviours, labelled by their output functions."""
    nxa, nxb, nya, nyb = scenario.shape
    out = []
    for fa in itertools.product(range(nya), repeat=nxa):
        for fb in itertools.product(range(nyb), repeat=nxb):
            t = np.zeros((nxa, nxb, nya, nyb))
            for xa, xb in itertools.product(range(nxa), range(nxb)):
                t[xa, xb, fa[xa], fb[xb]] = 1.0
            out.append((fa, fb, Behaviour(scenario, t)))
    return out


def deterministic_strategy(scenario: BellScenario, fa: Sequence[int], fb: Sequence[int]) -> Strategy:
    """A one-dimensional strategy answering y_P = f_P(x_P)."""
    nxa, nxb, nya, nyb = scenario.shape
    one = np.ones((1, 1), dtype=complex)
    pa = [[one * (y == fa[x]) for y in range(nya)] for x in range(nxa)]
    pb = [[one * (y == fb[x]) for y in range(nyb)] for x in range(nxb)]
    return Strategy(scenario, one, (1, 1), pa, pb, np.ones(1, dtype=complex))


def _hull_lp(target: np.ndarray, vertices: np.ndarray):
    """min Σ|slack| subject to Σ w_v V_v + slack = target, w >= 0, Σ w = 1."""
    m, n = vertices.shape
    c = np.concatenate([np.zeros(n), np.ones(2 * m)])
    a_eq = np.hstack([vertices, np.eye(m), -np.eye(m)])
    a_eq = np.vstack([a_eq, np.concatenate([np.ones(n), np.zeros(2 * m)])])
    b_eq = np.concatenate([target, [1.0]])
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * (n + 2 * m), method="highs")
    if res.status != 0:
        return None, float("inf")
    return res.x[:n], float(res.fun)


@dataclass
class ExtremalityReport:
    local_polytope_membership: bool
    local_residual: float
    is_vertex: bool
    nontrivial_decomposition_found: bool
    decomposition: ConvexDecomposition | None
    strategies: list[Strategy] | None
    verdict: str

    def summary(self) -> dict:
        out = {"local_polytope_membership": self.local_polytope_membership,
               "local_residual": self.local_residual, "is_vertex": self.is_vertex,
               "nontrivial_decomposition_found": self.nontrivial_decomposition_found,
               "verdict": self.verdict}
        if self.decomposition is not None:
            out["decomposition"] = [{"weight": float(w), "table": b.table.tolist()}
                                    for w, b in self.decomposition.terms]
        return out


def extremality_necessary_checks(p: Behaviour, tol: float = 1e-9,
                                 candidates: Sequence[Strategy] = ()) -> ExtremalityReport:
    """Necessary conditions for extremality among quantum-realisable behaviours.

    Checks membership in the local polytope by linear programming over the
    deterministic vertices, then looks for a decomposition of ``p`` into
    distinct realisable behaviours: deterministic ones and those of
    ``candidates`` (strategies on the same scenario).  An exhibited
    decomposition proves ``p`` is not extremal; finding none proves nothing.
    """
    dev = p.check()
    if dev > 1e-8:
        raise ValueError(f"not a family of distributions (deviation {dev:.3e})")
    verts = deterministic_behaviours(p.scenario)
    vmat = np.array([b.table.reshape(-1) for _, _, b in verts]).T
    target = p.table.reshape(-1)
    w, slack = _hull_lp(target, vmat)
    local = slack < tol
    is_vertex = any(np.max(np.abs(b.table - p.table)) < tol for _, _, b in verts)
    realisers: list[Strategy | None] = [deterministic_strategy(p.scenario, fa, fb) for fa, fb, _ in verts]
    behaviours = [b for _, _, b in verts]
    for st in candidates:
        if st.scenario.shape != p.scenario.shape:
            continue
        b = behaviour_of(st)
        if np.max(np.abs(b.table - p.table)) > tol:
            behaviours.append(b)
            realisers.append(st)
    if not local and len(behaviours) > len(verts):
        w, slack = _hull_lp(target, np.array([b.table.reshape(-1) for b in behaviours]).T)
    decomposition, strategies = None, None
    if w is not None and slack < tol and not is_vertex:
        keep = [i for i in np.argsort(-w) if w[i] > tol]
        total = sum(w[i] for i in keep)
        terms = [(float(w[i] / total), behaviours[i]) for i in keep]
        if len(terms) > 1:
            decomposition = ConvexDecomposition(terms, tol=1e-7)
            strategies = [realisers[i] for i in keep]
    found = decomposition is not None
    return ExtremalityReport(bool(local), slack, is_vertex, found, decomposition, strategies,
                             "NOT extremal" if found else "no obstruction found")


# -- exhausted environments ----------------------------------------------------------

@dataclass
class ExhaustionReport:
    env_channel: Channel
    copy_equivalent: bool
    residual: float
    unitaries: dict[str, np.ndarray]
    unitarity_residual: float

    def summary(self) -> dict:
        return {"copy_equivalent": self.copy_equivalent, "residual": self.residual,
                "unitarity_residual": self.unitarity_residual}


def _rank_one_vectors(povms, tol: float) -> np.ndarray:
    """vec[x, y] = unit vector spanning the rank-one projection povms[x][y]."""
    d = povms[0][0].shape[0]
    out = np.zeros((len(povms), len(povms[0]), d), dtype=complex)
    for x, p in enumerate(povms):
        for y, e in enumerate(p):
            vals, vecs = eig_hermitian(e)
            if numerical_rank(vals, tol) != 1 or abs(vals[0] - 1) > tol:
                raise ValueError(f"POVM element ({x}, {y}) is not a rank-one projection")
            out[x, y] = vecs[:, 0]
    return out


def exhausted_environment(s_tilde: Strategy, tol: float = 1e-9) -> ExhaustionReport:
    """Environment leak of a pure-state strategy with rank-one projective measurements.

    The channel maps classical inputs (x_A, x_B) to the environment
    (X_A ⊗ H_A) ⊗ (X_B ⊗ H_B) of the canonical projective dilations together
    with the dephased outputs (Y_A, Y_B).  After the unitaries
    |x> ⊗ |φ^x(y)> -> |x> ⊗ |y> on each side it should equal the channel that
    only records copies of x_P and y_P.
    """
    flags = classify(s_tilde, tol)
    if not flags.pure_state:
        raise ValueError("exhausted_environment needs a pure-state strategy")
    if not flags.projective:
        raise ValueError("exhausted_environment needs projective measurements")
    phi_a = _rank_one_vectors(s_tilde.povm_a, 1e-8)
    phi_b = _rank_one_vectors(s_tilde.povm_b, 1e-8)
    nxa, nxb, nya, nyb = s_tilde.scenario.shape
    da, db = s_tilde.dims
    vals, vecs = eig_hermitian(s_tilde.state)
    psi = vecs[:, 0].reshape(da, db)
    # environment vector for inputs (x, u) and outputs (y, v): (|x> ⊗ Π|.>) ⊗ (|u> ⊗ Π|.>) ψ
    n_env = nxa * da * nxb * db
    d_in = nxa * nxb
    d_out = n_env * nya * nyb
    choi = np.zeros((d_in, d_out, d_in, d_out), dtype=complex)
    target = np.zeros_like(choi)
    ua = _copy_unitary(phi_a)
    ub = _copy_unitary(phi_b)
    u = np.kron(ua, ub)
    behaviour = behaviour_of(s_tilde).table
    for xa, xb, ya, yb in itertools.product(range(nxa), range(nxb), range(nya), range(nyb)):
        pa = np.outer(phi_a[xa, ya], phi_a[xa, ya].conj())
        pb = np.outer(phi_b[xb, yb], phi_b[xb, yb].conj())
        local = pa @ psi @ pb.T
        env = np.zeros((nxa, da, nxb, db), dtype=complex)
        env[xa, :, xb, :] = local
        vec = np.kron(env.reshape(-1), np.eye(nya * nyb)[ya * nyb + yb])
        x = xa * nxb + xb
        choi[x, :, x, :] += np.outer(vec, vec.conj())
        copy = np.zeros((nxa, nya, nxb, nyb))
        copy[xa, ya, xb, yb] = 1.0
        cvec = np.kron(copy.reshape(-1), np.eye(nya * nyb)[ya * nyb + yb])
        target[x, :, x, :] += behaviour[xa, xb, ya, yb] * np.outer(cvec, cvec)
    n = d_in * d_out
    channel = Channel(choi.reshape(n, n), d_in, d_out, validate=False)
    full_u = np.kron(u, np.eye(nya * nyb))
    rotated = np.einsum("ba,iajc,dc->ibjd", full_u, choi, full_u.conj(), optimize=True)
    residual = float(np.linalg.norm(rotated - target))
    unit = max(max_abs(dagger(m) @ m - np.eye(m.shape[0])) for m in (ua, ub))
    return ExhaustionReport(channel, residual < tol, residual, {"A": ua, "B": ub}, unit)


def _copy_unitary(phi: np.ndarray) -> np.ndarray:
    """U = Σ_x Σ_y |x, y><x, φ^x(y)| from X ⊗ H onto X ⊗ Y."""
    nx, ny, d = phi.shape
    if ny != d:
        raise ValueError("rank-one projective measurements need as many outcomes as dimensions")
    u = np.zeros((nx, ny, nx, d), dtype=complex)
    for x in range(nx):
        u[x, :, x, :] = phi[x].conj()
    return u.reshape(nx * ny, nx * d)


__all__ = [
    "ExtractionResult", "extract_state_witness", "extract_measurement_witness", "PURE_SOURCE_MIXED_TARGET",
    "ConvexDecomposition", "VisibilityReport", "visible_decompositions", "build_mixing_strategy",
    "deterministic_behaviours", "deterministic_strategy", "ExtremalityReport", "extremality_necessary_checks",
    "ExhaustionReport", "exhausted_environment",
]
