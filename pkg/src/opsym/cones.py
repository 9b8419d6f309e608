"""Certificates for the matricial cones of ``E* ⊗_s S ⊗_s E``.

Every concrete ``x`` in ``M_{k,n}(E)`` factors as ``beta X_can`` with the
canonical column ``X_can`` (see :func:`symnorm.canonical_column`).  Hence
``u = x^* ⊙ s ⊙ x`` with ``s >= 0`` exactly when the canonical middle ``T_u``
of ``u`` is positive, and this gives an exact synthesis route.  When ``T_u``
has a negative direction ``w`` the pair ``psi = id_S`` and
``phi(z) = sum_l <z, b_l>_dual W_l`` (``W_l`` read off from ``w``) evaluates
``u`` to a matrix with a negative Rayleigh quotient.
"""
from dataclasses import dataclass, field

import numpy as np

from . import matcore as mc
from .certificates import POSITIVE, REFUTED, UNDECIDED, ConeCertificate
from .errors import NotHermitian, ParseError, UnsupportedSpace
from .opspace import ConcreteOpSpace
from .symnorm import (AdmissiblePair, TensorElement, canonical_column, dilation_pair, eval_pair,
                      expand_blocks, haagerup_upper, identity_pair, pair_from_contraction,
                      verify_pair, z_descent_min_eig, _level_conc)

HERM_TOL = 1e-9


@dataclass
class SynthesisWitness:
    """``u ≈ x^* ⊙ s ⊙ x`` with ``s >= 0``; coefficient arrays ``x (K, n, dim E)``, ``s (K, K, dim S)``."""

    x: np.ndarray
    s: np.ndarray
    residual: float
    s_min_eig: float
    residual_upper: float = 0.0

    def to_json(self):
        from .symnorm import _arr_json
        return {"x": _arr_json(self.x), "s": _arr_json(self.s), "residual": self.residual,
                "s_min_eig": self.s_min_eig, "residual_upper": self.residual_upper}


@dataclass
class RefutationWitness:
    """An admissible pair and a unit vector ``v`` with ``<eval(u) v, v> = value < 0``."""

    pair: AdmissiblePair
    vector: np.ndarray
    value: float

    def to_json(self):
        return {"pair": self.pair.to_json(),
                "vector": {"re": self.vector.real.tolist(), "im": self.vector.imag.tolist()},
                "value": self.value}


def refutation_witness_from_json(obj, E, S):
    """Inverse of :meth:`RefutationWitness.to_json`."""
    from .symnorm import pair_from_json
    try:
        pair = pair_from_json(obj["pair"], E, S)
        v = np.asarray(obj["vector"]["re"], float) + 1j * np.asarray(obj["vector"]["im"], float)
        return RefutationWitness(pair, v, float(obj["value"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError("malformed refutation witness: %s" % exc) from exc


def _check_hermitian(u, tol=HERM_TOL):
    d = u.hermitian_defect()
    if d > tol * max(1.0, float(np.max(np.abs(u.coeffs), initial=0.0))):
        raise NotHermitian("tensor is not hermitian (defect %.3g)" % d)


def _middle_matrix(u):
    return mc.hermitian_part(u.canonical_middle_matrix())


def verify_refutation(u, witness, tol=1e-9):
    """Replay a refutation: pair certificate valid and ``<eval v, v> <= -tol``."""
    if not verify_pair(witness.pair):
        return False
    M = eval_pair(witness.pair, u)
    v = witness.vector
    if abs(np.linalg.norm(v) - 1) > 1e-9:
        return False
    q = float(np.real(np.vdot(v, M @ v)))
    return q <= -tol and abs(q - witness.value) <= 1e-8 * max(1.0, abs(q))


def verify_synthesis(u, witness, tol=1e-7):
    built = expand_blocks([(witness.x, witness.s, witness.x)], u.n, u.E, u.S)
    res = float(np.linalg.norm(built - u.coeffs))
    K = witness.s.shape[0]
    s_conc = np.einsum("abj,juv->aubv", witness.s, u.S.basis).reshape(K * u.S.k, K * u.S.k)
    return res <= tol and mc.min_eig(s_conc) >= -1e-9 * max(1.0, mc.op_norm(s_conc))


def _functional_sum_pair(E, S, W):
    """Certified c.c. map ``phi(z) = sum_l coord_l(z) W_l`` scaled into the unit ball.

    With ``coord_l(z) = sum_t sigma_t u_t^* z v_t`` (SVD of the dual basis element)
    and ``W_l = sum_t' mu_t' g_t' h_t'^*``, ``phi(z) = sum X_s z Y_s`` with rank-one
    ``X_s, Y_s``; the stacked factors ``L, R`` give ``phi(z) = L (z ⊗ I_M) R``.

    :param W: stack ``(dim E, kS, H)`` of target images
    """
    gram = np.einsum("iab,jab->ij", np.conj(E.basis), E.basis)
    dual = np.einsum("ij,jab->iab", np.linalg.inv(gram).T, E.basis)  # tr(dual_l^* b_i) = delta
    Xs, Ys = [], []
    for l in range(E.dim):
        U, sig, Vh = np.linalg.svd(dual[l])
        G, mu, Hh = np.linalg.svd(W[l])
        for t in range(len(sig)):
            if sig[t] <= 1e-15:
                continue
            for tt in range(len(mu)):
                if mu[tt] <= 1e-15:
                    continue
                c = np.sqrt(sig[t] * mu[tt])
                # coord_l(z) = tr(dual_l^* z) = sum_t sig_t u_t^* z v_t
                Xs.append(c * np.outer(G[:, tt], np.conj(U[:, t])))
                Ys.append(c * np.outer(np.conj(Vh[t]), Hh[tt]))
    if not Xs:
        return None
    M = len(Xs)
    L = np.zeros((S.k if W.shape[1] == S.k else W.shape[1], E.k * M), dtype=complex)
    R = np.zeros((E.h * M, W.shape[2]), dtype=complex)
    for s_, (X, Y) in enumerate(zip(Xs, Ys)):
        L[:, s_::M] = X
        R[s_::M, :] = Y
    nl, nr = mc.op_norm(L), mc.op_norm(R)
    if nl > 0 and nr > 0:
        L, R = L / nl, R / nr
    return L, R, M


def _exact_refutation(u):
    E, S, n = u.E, u.S, u.n
    if S.unit is None:
        return None
    Tm = _middle_matrix(u)
    w, V = mc.eigh(Tm)
    if w[0] >= 0:
        return None
    vec = V[:, 0].reshape(E.dim, n, S.k)  # index ((i, p), a)
    W = np.transpose(vec, (0, 2, 1))  # W_l[a, q] = w_{(l,q), a}
    fac = _functional_sum_pair(E, S, W)
    if fac is None:
        return None
    L, R, M = fac
    pair = dilation_pair(E, S, L, R, M, np.eye(S.k), 1)
    return pair


def _min_rayleigh(pair, u):
    M = eval_pair(pair, u)
    w, V = mc.eigh(M)
    return float(w[0]), V[:, 0]


def refute_positive(u, restarts=8, seed=0, tol=1e-9, iters=150, truncation=2):
    """Search for an admissible pair whose evaluation of ``u`` has a negative eigenvalue.

    Candidates: the exact pair from the negative eigenvector of ``T_u``, the
    identity pair, and projected-gradient descent over contractions ``Z``
    (see :func:`symnorm.z_descent_min_eig`) from seeded random starts.  Returns
    Refuted with the best witness when its Rayleigh quotient is ``<= -tol``,
    otherwise Undecided.  Never returns Positive.

    :raises NotHermitian: when ``u`` is not hermitian
    """
    _check_hermitian(u)
    E, S = u.E, u.S
    cands = []
    p = _exact_refutation(u)
    if p is not None:
        cands.append(p)
    if S.k == E.k and S.unit is not None:
        cands.append(identity_pair(E, S))
    for m in range(1, truncation + 1):
        r = max(1, -(-E.k * m // S.k))
        for t in range(restarts):
            rng = np.random.default_rng([seed, 5, m, t])
            Z0 = mc.random_contraction(rng, S.k * r, E.k * m)
            _, Z = z_descent_min_eig(u, m, r, Z0, iters=iters)
            cands.append(pair_from_contraction(E, S, Z, m, r))
    best = None
    for pair in cands:
        val, vec = _min_rayleigh(pair, u)
        if best is None or val < best.value:
            best = RefutationWitness(pair, vec, val)
    scale = max(1.0, float(np.max(np.abs(u.coeffs), initial=0.0)))
    if best is not None and best.value <= -tol * scale and best.value <= -tol:
        return ConeCertificate(REFUTED, best, {"eigenvalue": best.value})
    return ConeCertificate(UNDECIDED, None, {"best_eigenvalue": None if best is None else best.value})


def refutation_from_pair(u, pair, tol=1e-9):
    """Refuted certificate from a given pair (e.g. from :mod:`fnspace`), or Undecided."""
    val, vec = _min_rayleigh(pair, u)
    if val <= -tol and verify_pair(pair):
        return ConeCertificate(REFUTED, RefutationWitness(pair, vec, val), {"eigenvalue": val})
    return ConeCertificate(UNDECIDED, None, {"best_eigenvalue": val})


def _s_min_eig(S, s):
    K = s.shape[0]
    conc = np.einsum("abj,juv->aubv", s, S.basis).reshape(K * S.k, K * S.k)
    return mc.min_eig(conc), conc


def synthesize_positive(u, rank=None, tol=1e-7, restarts=4, seed=0, iters=400):
    """Find ``x, s >= 0`` with ``u = x^* ⊙ s ⊙ x``.

    Without ``rank`` the exact canonical route is used: Positive iff the
    canonical middle ``T_u`` is positive (witness ``x = X_can``, ``s = T_u``).
    With ``rank`` the alternating least-squares search runs over
    ``x`` in ``M_{k,n}(E)`` and ``s`` in ``M_k(S)^+`` for ``k`` in
    ``rank, 2 rank, 4 rank``.

    :raises NotHermitian: when ``u`` is not hermitian
    """
    _check_hermitian(u)
    E, S, n = u.E, u.S, u.n
    if rank is None:
        T = u.canonical_middle()
        T = (T + np.einsum("Jj,baj->abJ", S.adjoint_coeff_matrix(), np.conj(T))) / 2
        lam, conc = _s_min_eig(S, T)
        if lam >= -1e-9 * max(1.0, mc.op_norm(conc)):
            X = canonical_column(E, n)
            built = expand_blocks([(X, T, X)], n, E, S)
            res = float(np.linalg.norm(built - u.coeffs))
            if res <= tol:
                return ConeCertificate(POSITIVE, SynthesisWitness(X, T, res, lam, res), {"route": "canonical"})
        return ConeCertificate(UNDECIDED, None, {"route": "canonical", "min_eig": lam})
    for k in (rank, 2 * rank, 4 * rank):
        wit = _als(u, k, restarts, seed, iters)
        if wit is not None and wit.residual <= tol:
            if wit.residual > 0:
                diff = TensorElement(E, S, u.coeffs - expand_blocks([(wit.x, wit.s, wit.x)], n, E, S))
                wit.residual_upper = haagerup_upper(diff, balance=False).value
            return ConeCertificate(POSITIVE, wit, {"route": "als", "rank": k})
    return ConeCertificate(UNDECIDED, None, {"route": "als"})


def _project_psd_S(S, s):
    """Alternate PSD clipping and projection onto ``M_K(S)`` (a few rounds)."""
    K = s.shape[0]
    for _ in range(20):
        conc = np.einsum("abj,juv->aubv", s, S.basis).reshape(K * S.k, K * S.k)
        clipped = mc.psd_clip(conc)
        blocks = clipped.reshape(K, S.k, K, S.k).transpose(0, 2, 1, 3)
        s_new = S.coords(blocks)
        if np.linalg.norm(s_new - s) < 1e-14:
            s = s_new
            break
        s = s_new
    return s


def _als(u, k, restarts, seed, iters):
    E, S, n = u.E, u.S, u.n
    C = u.coeffs
    dE, dS = E.dim, S.dim
    best = None
    for t in range(restarts):
        rng = np.random.default_rng([seed, 13, k, t])
        X = mc.random_complex(rng, k, n, dE)
        s = np.zeros((k, k, dS), dtype=complex)
        for a in range(k):
            s[a, a] = S.unit if S.unit is not None else 0
        for _ in range(iters):
            # s-step: linear least squares in s, then PSD projection
            A = np.einsum("api,bql->pqilab", np.conj(X), X).reshape(-1, k * k)
            rhs = C.reshape(n, n, dE, dS, dE).transpose(0, 1, 2, 4, 3).reshape(-1, dS)
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            s = _project_psd_S(S, sol.reshape(k, k, dS))
            # x-step: gradient descent on ||expand(X, s, X) - C||^2
            def resid(Xv):
                return expand_blocks([(Xv, s, Xv)], n, E, S) - C
            R = resid(X)
            f = np.linalg.norm(R) ** 2
            g = (np.einsum("abj,bql,pqijl->api", np.conj(s), np.conj(X), R) +
                 np.einsum("abj,api,pqijl->bql", s, np.conj(X), np.conj(R)))
            g = np.conj(g)
            step = 1.0
            while step > 1e-12:
                Xn = X - step * g
                fn = np.linalg.norm(resid(Xn)) ** 2
                if fn < f:
                    X = Xn
                    break
                step /= 2
            if f < 1e-22:
                break
        res = float(np.linalg.norm(expand_blocks([(X, s, X)], n, E, S) - C))
        lam, _ = _s_min_eig(S, s)
        if best is None or res < best.residual:
            best = SynthesisWitness(X, s, res, lam)
    return best


# --- operator-system obstructions -----------------------------------------------

def products_span_dim(E, tol=1e-10):
    """``dim span{b_i^* b_l}`` inside ``M_h``."""
    prods = np.einsum("iba,lbc->ilac", np.conj(E.basis), E.basis).reshape(E.dim * E.dim, -1)
    return mc.rank(prods, tol)


def not_operator_system_by_dimension(E):
    """True when ``dim span(E* E) < (dim E)^2`` (the symmetrisation cannot be unital)."""
    return products_span_dim(E) < E.dim ** 2


def dimension_report(E):
    d = products_span_dim(E)
    return {"space": E.name, "dim": E.dim, "dim_products": d, "tensor_dim": E.dim ** 2,
            "not_operator_system": d < E.dim ** 2}


@dataclass
class SemiUnitResult:
    column: list
    gram_defect: float
    unital: bool
    obstructed: bool
    info: dict = field(default_factory=dict)

    def to_json(self):
        return {"column": [mc.matrix_to_json(x) for x in self.column], "gram_defect": self.gram_defect,
                "unital": self.unital, "obstructed": self.obstructed}


def _gram_solution(E, tol):
    """PSD ``P`` with ``sum P[l, l'] b_l^* b_l' = I_h`` by a small SDP, or ``None``."""
    import cvxpy as cp

    d, h = E.dim, E.h
    prods = np.einsum("iba,lbc->ilac", np.conj(E.basis), E.basis)
    P = cp.Variable((d, d), hermitian=True)
    expr = 0
    for i in range(d):
        for l in range(d):
            expr = expr + P[i, l] * prods[i, l]
    prob = cp.Problem(cp.Minimize(cp.norm(expr - np.eye(h), "fro")), [P >> 0])
    try:
        prob.solve(solver=cp.CLARABEL)
    except Exception:
        prob.solve(solver=cp.SCS)
    if P.value is None:
        return None
    return mc.psd_clip(P.value)


def semi_unit_probe(E, pair=None, tol=1e-9):
    """Search a finite column ``x`` in ``E`` with ``sum phi(x_i)^* phi(x_i) = I``.

    The embedding ``phi`` (identity when ``pair`` is ``None``) must be completely
    isometric; this is checked on the basis by comparing norms.  The
    symmetrisation is flagged unital only when no dimension obstruction exists.
    """
    if pair is not None:
        imgs = pair.phi_images
        for i in range(E.dim):
            if abs(mc.op_norm(imgs[i]) - mc.op_norm(E.basis[i])) > 1e-9:
                raise UnsupportedSpace("embedding is not isometric on the basis")
        F = ConcreteOpSpace(imgs, name="phi(%s)" % E.name)
    else:
        F = E
    obstructed = not_operator_system_by_dimension(E)
    column = None
    # greedy: orthonormal basis rows y_i, c = sum y_i^* y_i, x_i = y_i c^{-1/2}
    Q = _orthonormal(F)
    c = sum(mc.adjoint(y) @ y for y in Q)
    w = mc.eigvalsh(c)
    if w[0] > 1e-12:
        cm = mc.psd_pinv_sqrt(c)
        cand = [y @ cm for y in Q]
        if all(F.contains(x, 1e-9) for x in cand):
            column = cand
    if column is None:
        P = _gram_solution(F, tol)
        if P is not None:
            wP, VP = mc.eigh(P)
            keep = wP > 1e-12
            R = (VP[:, keep] * np.sqrt(wP[keep])).conj().T
            column = [np.tensordot(R[t], F.basis, axes=(0, 0)) for t in range(R.shape[0])]
    if column is None:
        return SemiUnitResult([], np.inf, False, obstructed)
    defect = mc.op_norm(sum(mc.adjoint(x) @ x for x in column) - np.eye(F.h))
    if defect > max(tol, 1e-7):
        return SemiUnitResult([], defect, False, obstructed)
    return SemiUnitResult(column, defect, not obstructed, obstructed)


def _orthonormal(E):
    flat = E.basis.reshape(E.dim, -1)
    Q, _ = np.linalg.qr(flat.T)
    return [q.reshape(E.k, E.h) for q in Q.T]
