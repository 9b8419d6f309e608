"""Ternary rings of operators and the balanced symmetrisation seminorm.

A balanced context is a unital subalgebra ``A ⊆ M_k`` acting on the left of
``E ⊆ B(C^h, C^k)`` and on both sides of an operator system ``S ⊆ M_k``.  The
balanced seminorm kills the span ``J`` of relations
``y^* ⊗ (b s a) ⊗ x - (b^* y)^* ⊗ s ⊗ (a x)``; generators with ``a = 1`` or
``b = 1`` span ``J`` because the general relation is the sum of one of each.
"""
from dataclasses import dataclass, field

import numpy as np

from . import matcore as mc
from .certificates import NormInterval
from .errors import InvalidContext, ModuleConditionFailed
from .opspace import ConcreteOpSpace, scalars, span
from .symnorm import (TensorElement, canonical_column, dilation_pair, eval_pair, expand_blocks,
                      haagerup_upper, identity_pair, split_upper, sym_norm, _level_conc)


# --- TROs --------------------------------------------------------------------------

def triple_products(M):
    return np.einsum("iab,jcb,lcd->ijlad", M.basis, np.conj(M.basis), M.basis)


def is_tro(M, tol=1e-9):
    """Check ``m1 m2^* m3`` in ``span M`` on all basis triples.

    :return: ``(bool, counterexample)``; the counterexample is ``(i, j, l, product)``
    """
    P = triple_products(M)
    d = M.dim
    for i in range(d):
        for j in range(d):
            for l in range(d):
                prod = P[i, j, l]
                if not M.contains(prod, tol):
                    return False, (i, j, l, prod)
    return True, None


def _span_of(mats, name, tol=1e-10):
    mats = np.asarray(mats, dtype=complex)
    flat = mats.reshape(len(mats), -1)
    U, s, Vh = np.linalg.svd(flat, full_matrices=False)
    keep = s > tol * max(s.max(initial=0), 1e-300)
    return ConcreteOpSpace(Vh[keep].reshape((-1,) + mats.shape[1:]), name=name)


@dataclass(eq=False)
class TroSpace:
    M: ConcreteOpSpace
    left: ConcreteOpSpace = field(init=False)
    right: ConcreteOpSpace = field(init=False)

    def __post_init__(self):
        ok, bad = is_tro(self.M)
        if not ok:
            raise InvalidContext("not a TRO: basis triple %s leaves the span" % (bad[:3],))
        B = self.M.basis
        self.left = _with_unit(_span_of(np.einsum("iab,jcb->ijac", B, np.conj(B)).reshape(-1, self.M.k, self.M.k),
                                        "[MM*]"))
        self.right = _with_unit(_span_of(np.einsum("iba,jbc->ijac", np.conj(B), B).reshape(-1, self.M.h, self.M.h),
                                         "[M*M]"))


def _with_unit(A):
    """Attach unit coefficients when the identity lies in the span."""
    if A.k == A.h and A.contains(np.eye(A.k), 1e-9):
        c, _ = A.project_onto(np.eye(A.k))
        return ConcreteOpSpace(A.basis, name=A.name, unit=c, is_subalgebra=True)
    return A


def find_semi_unit(tro, tol=1e-9):
    """Finite column ``x`` in ``M`` with ``sum x_i^* x_i = I``, or ``None``.

    Uses an orthonormal basis ``y_i`` (Frobenius), ``c = sum y_i^* y_i`` and the
    correction ``x_i = y_i c^{-1/2}``; ``c^{-1/2}`` lies in ``[M*M]`` so ``x_i``
    stays in ``M``.  Returns ``None`` when ``[M*M]`` is not unital.
    """
    M = tro.M if isinstance(tro, TroSpace) else tro
    right = tro.right if isinstance(tro, TroSpace) else TroSpace(M).right
    if right.unit is None:
        return None
    flat = M.basis.reshape(M.dim, -1)
    Q, _ = np.linalg.qr(flat.T)
    ys = [q.reshape(M.k, M.h) for q in Q.T]
    c = sum(mc.adjoint(y) @ y for y in ys)
    if mc.min_eig(c) <= 1e-12:
        return None
    ci = mc.psd_pinv_sqrt(c)
    xs = [y @ ci for y in ys]
    if not all(M.contains(x, 1e-9) for x in xs):
        return None
    if mc.op_norm(sum(mc.adjoint(x) @ x for x in xs) - np.eye(M.h)) > tol:
        return None
    return xs


# --- balanced contexts -------------------------------------------------------------

@dataclass(eq=False)
class BalancedContext:
    A: ConcreteOpSpace
    E: ConcreteOpSpace
    S: ConcreteOpSpace
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        A, E, S = self.A, self.E, self.S
        if A.k != A.h or A.k != E.k or S.k != A.k:
            raise InvalidContext("A, E and S must act on a common space C^k")
        if not A.contains(np.eye(A.k), 1e-9):
            raise InvalidContext("A is not unital")
        worst_e = max(E.project_onto(a @ b)[1] for a in A.basis for b in E.basis)
        worst_s = max(max(S.project_onto(a @ s)[1], S.project_onto(s @ a)[1]) for a in A.basis for s in S.basis)
        self.report = {"left_action_residual": float(worst_e), "system_action_residual": float(worst_s)}
        if worst_e > 1e-9 or worst_s > 1e-9:
            raise InvalidContext("module conditions fail (residuals %.3g, %.3g)" % (worst_e, worst_s))

    @property
    def trivial(self):
        return self.A.dim == 1


def relation_generators(ctx):
    """Coefficient vectors (in ``C^{dE dS dE}``) spanning the balanced kernel ``J``."""
    A, E, S = ctx.A, ctx.E, ctx.S
    dE, dS = E.dim, S.dim
    gens = []
    for a in A.basis:
        ax = E.coords(np.einsum("ab,lbc->lac", a, E.basis))  # ax[l] coeffs of a b_l
        sa = S.coords(np.einsum("jab,bc->jac", S.basis, a))  # sa[j] coeffs of c_j a
        as_ = S.coords(np.einsum("ab,jbc->jac", a, S.basis))  # a c_j
        ahy = E.coords(np.einsum("ba,lbc->lac", np.conj(a), E.basis))  # a^* b_i
        for i in range(dE):
            for j in range(dS):
                for l in range(dE):
                    g = np.zeros((dE, dS, dE), dtype=complex)
                    # b_i^* ⊗ (c_j a) ⊗ b_l - b_i^* ⊗ c_j ⊗ (a b_l)
                    g[i, :, l] += sa[j]
                    g[i, j, :] -= ax[l]
                    gens.append(g.reshape(-1))
                    g = np.zeros((dE, dS, dE), dtype=complex)
                    # b_i^* ⊗ (a c_j) ⊗ b_l - (a^* b_i)^* ⊗ c_j ⊗ b_l
                    g[i, :, l] += as_[j]
                    g[:, j, l] -= np.conj(ahy[i])
                    gens.append(g.reshape(-1))
    if not gens:
        return np.zeros((0, dE * dS * dE), dtype=complex)
    G = np.array(gens)
    # row space of G from the eigenvectors of G^* G (much cheaper than an SVD of the tall stack)
    w, V = np.linalg.eigh(G.conj().T @ G)
    keep = w > 1e-12 * max(w.max(initial=0), 1e-300)
    return V[:, keep].conj().T  # orthonormal rows spanning J (rows of V^*)


def project_out_relations(u, ctx, basis=None):
    """``u - P_J u`` entrywise, with ``P_J`` the orthogonal projection onto ``J``."""
    Jb = relation_generators(ctx) if basis is None else basis
    c = u.coeffs.reshape(u.n, u.n, -1)
    if len(Jb):
        c = c - (c @ Jb.conj().T) @ Jb
    return TensorElement(u.E, u.S, c.reshape(u.coeffs.shape))


def relation_residual(diff, ctx, basis=None):
    """Distance of the coefficient array ``diff`` from ``M_n(J)``."""
    Jb = relation_generators(ctx) if basis is None else basis
    n = diff.shape[0]
    c = diff.reshape(n, n, -1)
    if len(Jb):
        c = c - (c @ Jb.conj().T) @ Jb
    return float(np.linalg.norm(c))


def a_admissible_pair(ctx, W, m):
    """``phi(x) = (x ⊗ I_m) W`` and ``psi(s) = s ⊗ I_m`` (A-admissible by construction)."""
    E, S = ctx.E, ctx.S
    return dilation_pair(E, S, np.eye(E.k * m), W, m, np.eye(S.k * m), m)


def a_admissibility_defect(ctx, pair):
    """``max ||psi(s a) phi(x) - psi(s) phi(a x)||`` over basis triples."""
    A, E, S = ctx.A, ctx.E, ctx.S
    worst = 0.0
    for a in A.basis:
        for j, c in enumerate(S.basis):
            psa = np.tensordot(S.coords(c @ a), pair.psi_images, axes=(0, 0))
            for l, b in enumerate(E.basis):
                pax = np.tensordot(E.coords(a @ b), pair.phi_images, axes=(0, 0))
                worst = max(worst, mc.op_norm(psa @ pair.phi_images[l] - pair.psi_images[j] @ pax))
    return worst


def semi_unit_rewrite(u, column):
    """``X^* ⊙ T ⊙ X`` with ``X = (I_n ⊗ c_i)_i`` and ``T = (c_i mult(u)_{pq} c_j^*)``.

    :return: ``(X coeffs, T coeffs, T concrete)``
    """
    E, S, n = u.E, u.S, u.n
    h = E.h
    Mu = u.mult().reshape(n, h, n, h)
    N = len(column)
    Cc = np.array(column)  # (N, k, h)
    T = np.einsum("ikh,phqg,jlg->ipkjql", Cc, Mu, np.conj(Cc)).reshape(N * n, E.k, N * n, E.k)
    Tco = S.coords(np.transpose(T, (0, 2, 1, 3)))
    X = np.zeros((N, n, n, E.dim), dtype=complex)
    cc = E.coords(Cc)
    for i in range(N):
        for p in range(n):
            X[i, p, p] = cc[i]
    return X.reshape(N * n, n, E.dim), Tco, T.reshape(N * n * E.k, N * n * E.k)


def balanced_seminorm(u, ctx, restarts=8, seed=0, multiplicity=2, truncation=4):
    """Interval for the balanced seminorm of ``u``.

    Lower: ``||eval||`` over A-admissible pairs (identity pair and sampled
    ``phi = (x ⊗ I_m) W``, ``psi = s ⊗ I_m``); for trivial ``A`` every admissible
    pair counts and :func:`symnorm.sym_norm` supplies the lower end.  Upper: the
    Haagerup (and hermitian-split) bound of ``u - P_J u`` and, for TRO contexts
    with a semi-unit, of the semi-unit rewrite when it differs from ``u`` by an
    element of ``M_n(J)``.
    """
    E, S = ctx.E, ctx.S
    Jb = relation_generators(ctx)
    info = {"family": "amplification (x ⊗ I_m) W, psi = s ⊗ I_m", "dim_J": int(len(Jb))}
    cands = []
    if ctx.trivial:
        iv = sym_norm(u, restarts=restarts, truncation=truncation, seed=seed)
        cands.append((iv.lower, iv.lower_witness))
    else:
        cands.append((mc.op_norm(eval_pair(identity_pair(E, S), u)), identity_pair(E, S)))
        for t in range(restarts):
            rng = np.random.default_rng([seed, 17, t])
            m = 1 + t % multiplicity
            W = mc.random_contraction(rng, E.h * m, E.h * m)
            p = a_admissible_pair(ctx, W, m)
            cands.append((mc.op_norm(eval_pair(p, u)), p))
    lower, lw = max(cands, key=lambda c: c[0])
    u2 = project_out_relations(u, ctx, Jb)
    ups = [(haagerup_upper(u2).value, "projected"), (split_upper(u2), "projected-split")]
    if ctx.trivial:
        ups.append((iv.upper, "symmetrisation"))
    col = None
    if S.k == E.k:
        try:
            col = find_semi_unit(E)
        except InvalidContext:
            col = None
    if col is not None:
        X, Tco, Tconc = semi_unit_rewrite(u, col)
        built = expand_blocks([(X, Tco, X)], u.n, E, S)
        res = relation_residual(built - u.coeffs, ctx, Jb)
        info["semi_unit_residual"] = res
        if res <= 1e-9 * max(1.0, float(np.linalg.norm(u.coeffs))):
            val = mc.op_norm(_level_conc(E, X)) ** 2 * mc.op_norm(Tconc)
            ups.append((val, "semi-unit"))
    upper, how = min(ups, key=lambda c: c[0])
    info["upper_route"] = how
    if upper < lower:
        upper = max(upper, lower) if lower - upper <= 1e-9 else upper
    return NormInterval(lower, upper, True, estimate=lower, lower_witness=lw, info=info)


# --- the collapse check -------------------------------------------------------------

@dataclass
class CollapseReport:
    samples: int
    max_admissible_excess: float
    max_identity_gap: float
    positive_to_psd_min_eig: float
    psd_to_positive_residual: float
    passed: bool
    info: dict = field(default_factory=dict)

    def to_json(self):
        return dict(self.__dict__)


def tro_context(M, S):
    """``BalancedContext`` with ``A = [M M^*]``; raises ModuleConditionFailed if ``A S ⊄ S``."""
    tro = M if isinstance(M, TroSpace) else TroSpace(M)
    try:
        return tro, BalancedContext(tro.left, tro.M, S)
    except InvalidContext as exc:
        raise ModuleConditionFailed(str(exc)) from exc


def tro_collapse_check(M, S, samples=100, seed=0, n_max=2, pairs_per_sample=4):
    """Executable form of the collapse onto ``[M^* S M]``.

    For sampled ``u``: (a) every sampled A-admissible value is at most
    ``||mult(u)|| + 1e-9``; (b) the identity pair attains ``||mult(u)||``;
    (c) ``mult`` of planted positives is PSD, and PSD targets in
    ``M_n([M^* S M])`` are synthesised back through the semi-unit column.
    """
    tro, ctx = tro_context(M, S)
    E = tro.M
    col = find_semi_unit(tro)
    rng = np.random.default_rng(seed)
    excess, gap, min_eig, back_res = -np.inf, 0.0, np.inf, 0.0
    ident = identity_pair(E, S)
    for t in range(samples):
        n = 1 + t % n_max
        K = int(rng.integers(1, 3))
        Y = mc.random_complex(rng, K, n, E.dim)
        X = mc.random_complex(rng, K, n, E.dim)
        Sc = mc.random_complex(rng, K, K, S.dim)
        from .symnorm import from_blocks
        u = from_blocks(E, S, [(Y, Sc, X)], n)
        mval = mc.op_norm(u.mult())
        gap = max(gap, abs(mc.op_norm(eval_pair(ident, u)) - mval))
        for q in range(pairs_per_sample):
            m = 1 + q % 2
            W = mc.random_contraction(rng, E.h * m, E.h * m)
            val = mc.op_norm(eval_pair(a_admissible_pair(ctx, W, m), u))
            excess = max(excess, val - mval)
        # positives: x^* ⊙ s ⊙ x with s >= 0
        Sp = _random_psd_level(S, K, rng)
        up = from_blocks(E, S, [(X, Sp, X)], n)
        Mp = up.mult()
        min_eig = min(min_eig, mc.min_eig(Mp) / max(1.0, mc.op_norm(Mp)))
        # PSD target -> synthesis through the semi-unit column
        if col is not None:
            P = Mp  # a PSD element of M_n([M^* S M])
            Xc, Tco, Tconc = semi_unit_rewrite(up, col)
            rebuilt = expand_blocks([(Xc, Tco, Xc)], n, E, S)
            back = TensorElement(E, S, rebuilt).mult()
            back_res = max(back_res, mc.op_norm(back - P) / max(1.0, mc.op_norm(P)))
            min_eig = min(min_eig, mc.min_eig(Tconc) / max(1.0, mc.op_norm(Tconc)))
    passed = excess <= 1e-9 and gap <= 1e-9 and min_eig >= -1e-9 and (col is None or back_res <= 1e-9)
    return CollapseReport(samples, float(excess), float(gap), float(min_eig), float(back_res), bool(passed),
                          {"target": "[M* S M]", "semi_unit": col is not None, "dim_A": ctx.A.dim})


def _random_psd_level(S, K, rng):
    from .trilinear import _random_positive
    return _random_positive(S, K, rng)


def block_diag_tro(shapes):
    """Direct sum ``M_{k1,n1} ⊕ M_{k2,n2} ⊕ ...`` as a block-diagonal TRO."""
    K = sum(s[0] for s in shapes)
    H = sum(s[1] for s in shapes)
    mats = []
    ro = co = 0
    for k, h in shapes:
        for a in range(k):
            for b in range(h):
                Z = np.zeros((K, H), dtype=complex)
                Z[ro + a, co + b] = 1
                mats.append(Z)
        ro += k
        co += h
    name = "+".join("M%dx%d" % s for s in shapes)
    return ConcreteOpSpace(np.array(mats), name=name, is_tro=True)


def balanced_example():
    """The block-diagonal instance ``M = M_{2,2} ⊕ M_{2,2}`` with ``y = 0 ⊕ E_22``, ``x = E_11 ⊕ 0``.

    :return: dict with the context, the unbalanced element ``y^* ⊗ x`` (``S = C``),
        its balanced counterpart ``y^* ⊗ 1 ⊗ x`` over ``A = [M M^*]`` and ``a = E_11 ⊕ 0``
    """
    M = block_diag_tro([(2, 2), (2, 2)])
    tro = TroSpace(M)
    A = tro.left
    ctx = BalancedContext(A, M, A)
    y = np.zeros((4, 4), dtype=complex)
    y[3, 3] = 1
    x = np.zeros((4, 4), dtype=complex)
    x[0, 0] = 1
    a = np.zeros((4, 4), dtype=complex)
    a[0, 0] = 1
    from .symnorm import elementary, elementary_es
    return {"M": M, "A": A, "ctx": ctx, "x": x, "y": y, "a": a,
            "unbalanced": elementary_es(M, y, x),
            "balanced": elementary(M, A, y, np.eye(4), x)}
