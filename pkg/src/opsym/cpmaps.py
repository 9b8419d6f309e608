"""Linear maps on concrete operator spaces.

A :class:`LinMap` stores the images ``phi(b_i)`` of the domain basis as an
array ``(dim, r_out, c_out)``.  This module provides the duality between maps
into ``M_n`` and functionals on ``M_n(X)``, complete-positivity tests,
cb-norm estimation and samplers in Wittstock/Stinespring form.
"""
from dataclasses import dataclass, field

import numpy as np

from . import matcore as mc
from .certificates import NormInterval
from .errors import ShapeMismatch, UnsupportedDomain
from .opspace import ConcreteOpSpace, LevelElement, full_algebra, space_from_json


@dataclass(eq=False)
class LinMap:
    """Linear map ``domain -> M_{r_out, c_out}`` given by basis images.

    :param dilation: optional ``(Z2, Z1, m)`` with ``phi(x) = Z2^* (x ⊗ I_m) Z1``
    """

    domain: ConcreteOpSpace
    images: np.ndarray
    dilation: tuple = field(default=None, repr=False)

    def __post_init__(self):
        im = np.asarray(self.images, dtype=complex)
        if im.ndim == 2 and self.domain.dim == 1:
            im = im[None]
        if im.ndim != 3 or im.shape[0] != self.domain.dim:
            raise ShapeMismatch("images must have shape (dim domain, r_out, c_out)")
        self.images = im

    @property
    def out_shape(self):
        return self.images.shape[1:]

    @property
    def action(self):
        """Matrix sending basis coefficients to row-major vectorised outputs."""
        return self.images.reshape(self.domain.dim, -1).T

    def apply_coeffs(self, c):
        return np.tensordot(np.asarray(c, dtype=complex), self.images, axes=(0, 0))

    def __call__(self, A):
        """Apply to a concrete matrix of the domain (projected onto the domain)."""
        return self.apply_coeffs(self.domain.coords(A))

    def amplify(self, x):
        """``phi^{(m,n)}`` applied to a level element or a coefficient array ``(m, n, d)``."""
        c = x.coeffs if isinstance(x, LevelElement) else np.asarray(x, dtype=complex)
        m, n, _ = c.shape
        r, s = self.out_shape
        return np.einsum("pqi,iab->paqb", c, self.images).reshape(m * r, n * s)

    def compose_left(self, M):
        return LinMap(self.domain, np.einsum("ab,ibc->iac", M, self.images))

    def to_json(self):
        return {
            "domain": self.domain.to_json(),
            "out_shape": list(self.out_shape),
            "action": mc.matrix_to_json(self.action),
        }


def linmap_from_json(obj):
    dom = space_from_json(obj["domain"])
    r, c = obj["out_shape"]
    act = mc.matrix_from_json(obj["action"])
    return LinMap(dom, act.T.reshape(dom.dim, r, c))


def identity_map(E):
    return LinMap(E, E.basis.copy())


def zero_map(E, out_shape):
    return LinMap(E, np.zeros((E.dim,) + tuple(out_shape), dtype=complex))


def map_from_callable(E, f):
    return LinMap(E, np.array([np.asarray(f(b), dtype=complex) for b in E.basis]))


@dataclass(eq=False)
class LevelFunctional:
    """Linear functional ``s`` on ``M_n(X)``: ``s(x) = sum weights[p,q,i] x[p,q,i]``."""

    space: ConcreteOpSpace
    weights: np.ndarray

    @property
    def n(self):
        return self.weights.shape[0]

    def __call__(self, x):
        c = x.coeffs if isinstance(x, LevelElement) else np.asarray(x, dtype=complex)
        return complex(np.sum(self.weights * c))


def functional_of_map(phi):
    """The functional ``s_phi(x) = <phi^{(n)}(x) e, e>`` with ``e = sum_j e_j ⊗ e_j``.

    Written out, ``s_phi((x_pq)) = sum_pq phi(x_pq)[p, q]``.
    """
    r, c = phi.out_shape
    if r != c:
        raise ShapeMismatch("functional_of_map needs a map into M_n")
    return LevelFunctional(phi.domain, np.transpose(phi.images, (1, 2, 0)).copy())


def map_of_functional(s):
    """The map ``phi_s`` with ``phi_s(x)[i, j] = s(x ⊗ E_ij)``."""
    return LinMap(s.space, np.transpose(s.weights, (2, 0, 1)).copy())


# --- complete positivity -------------------------------------------------------

def _is_full_algebra(E):
    return E.h == E.k and E.dim == E.k * E.k


def _is_full_rect(E):
    return E.dim == E.k * E.h


def matrix_unit_images(phi):
    """``phi(E_ab)`` for all matrix units of the ambient space (domain must be full)."""
    E = phi.domain
    if not _is_full_rect(E):
        raise UnsupportedDomain("domain is not a full matrix space")
    k, h = E.k, E.h
    units = np.zeros((k, h, k, h), dtype=complex)
    for a in range(k):
        for b in range(h):
            units[a, b, a, b] = 1
    coords = E.coords(units)
    return np.einsum("abi,iuv->abuv", coords, phi.images)


def choi_matrix(phi):
    """``sum_ab E_ab ⊗ phi(E_ab)`` for a map on a full matrix algebra."""
    imgs = matrix_unit_images(phi)
    k, h, r, c = imgs.shape
    return np.transpose(imgs, (0, 2, 1, 3)).reshape(k * r, h * c)


def _sphi_minimum(phi, solver=None):
    """Minimise ``s_phi`` over ``{x in M_n(S)^+, tr x = 1}`` by semidefinite programming."""
    import cvxpy as cp

    S = phi.domain
    n = phi.out_shape[0]
    k = S.k
    N = n * k
    # orthonormal basis of M_n(S) inside C^{N x N}, via QR of the vectorised basis
    gens = []
    for p in range(n):
        for q in range(n):
            for i in range(S.dim):
                G = np.zeros((N, N), dtype=complex)
                G[p * k:(p + 1) * k, q * k:(q + 1) * k] = S.basis[i]
                gens.append(G.reshape(-1))
    Q, _ = np.linalg.qr(np.array(gens).T)
    comp = np.eye(N * N) - Q @ mc.adjoint(Q)
    X = cp.Variable((N, N), hermitian=True)
    w = np.zeros((N, N), dtype=complex)
    for p in range(n):
        for q in range(n):
            # coefficient i of block (p, q) is pinv[i] . vec(block)
            wp = np.tensordot(phi.images[:, p, q], S._pinv, axes=(0, 0))
            w[p * k:(p + 1) * k, q * k:(q + 1) * k] = wp.reshape(k, k)
    vecX = cp.vec(X, order="C")
    constraints = [X >> 0, cp.real(cp.trace(X)) == 1, comp @ vecX == 0]
    objective = cp.Minimize(cp.real(cp.sum(cp.multiply(w, X))))
    prob = cp.Problem(objective, constraints)
    prob.solve(solver=solver or "CLARABEL")
    return float(prob.value), np.asarray(X.value)


def is_completely_positive(phi, route="auto", tol=1e-9):
    """Decide complete positivity.

    ``route="choi"`` (full matrix algebra domains) tests the Choi matrix;
    ``route="sphi"`` minimises ``s_phi`` over the trace-normalised positive part
    of ``M_n(S)`` for an operator-system domain ``S`` (n-positivity with ``n`` the
    output size is equivalent to complete positivity).

    :return: ``(verdict, witness)``; the witness is a negative eigenvector (Choi
        route) or the minimising positive element (s_phi route), else ``None``
    :raises UnsupportedDomain: when neither route applies
    """
    E = phi.domain
    if route == "auto":
        route = "choi" if _is_full_algebra(E) else "sphi"
    if route == "choi":
        if not _is_full_algebra(E):
            raise UnsupportedDomain("Choi route needs a full matrix algebra domain")
        C = choi_matrix(phi)
        w, V = mc.eigh(C)
        herm_defect = mc.op_norm(C - mc.adjoint(C))
        scale = max(1.0, mc.op_norm(C))
        if herm_defect > tol * scale or w[0] < -tol * scale:
            return False, V[:, 0]
        return True, None
    if route == "sphi":
        if not E.is_system or phi.out_shape[0] != phi.out_shape[1]:
            raise UnsupportedDomain("s_phi route needs an operator-system domain and a map into M_n")
        if not _is_hermitian_preserving(phi):
            return False, None
        val, X = _sphi_minimum(phi)
        scale = max(1.0, float(np.max(np.abs(phi.images))))
        if val < -1e-7 * scale:
            return False, X
        return True, None
    raise UnsupportedDomain("unknown route %r" % route)


def _is_hermitian_preserving(phi, tol=1e-9):
    E = phi.domain
    try:
        Q = E.adjoint_coeff_matrix()
    except Exception:
        return False
    # phi(b_j^*) = sum_j' Q[j', j] phi(b_j') must equal phi(b_j)^*
    lhs = np.einsum("kj,kab->jab", Q, phi.images)
    rhs = np.conj(np.swapaxes(phi.images, 1, 2))
    return np.max(np.abs(lhs - rhs), initial=0.0) <= tol * max(1.0, np.max(np.abs(phi.images), initial=0.0))


def sphi_on_positive(phi, x):
    """``s_phi(x)`` for a level element ``x`` (used by sampling checks)."""
    return functional_of_map(phi)(x)


# --- cb norm -------------------------------------------------------------------

def wittstock_factors(phi):
    """Factors ``(A, B, T)`` with ``phi(x) = A^* (x ⊗ I_T) B`` for a full-space domain.

    Built from the SVD of the Choi-type matrix ``J[(a,u),(b,v)] = phi(E_ab)[u,v]``
    with singular values split evenly between the two factors.
    """
    imgs = matrix_unit_images(phi)
    k, h, r, c = imgs.shape
    J = np.transpose(imgs, (0, 2, 1, 3)).reshape(k * r, h * c)
    U, s, Vh = np.linalg.svd(J, full_matrices=False)
    keep = s > 1e-14 * max(s.max(initial=0.0), 1e-300)
    U, s, Vh = U[:, keep], s[keep], Vh[keep]
    T = len(s)
    if T == 0:
        return np.zeros((k, r), dtype=complex), np.zeros((h, c), dtype=complex), 1
    rs = np.sqrt(s)
    At = U.reshape(k, r, T) * rs  # A_t[a,u]
    Bt = Vh.T.reshape(h, c, T) * rs  # B_t[b,v]
    # phi(x) = sum_t A_t^T x B_t ;  A[(a,t),u] = conj(A_t[a,u])
    A = np.conj(np.transpose(At, (0, 2, 1))).reshape(k * T, r)
    B = np.transpose(Bt, (0, 2, 1)).reshape(h * T, c)
    return A, B, T


def cb_upper_full(phi):
    """Certified upper bound ``||A|| ||B||`` from :func:`wittstock_factors`."""
    A, B, _ = wittstock_factors(phi)
    return mc.op_norm(A) * mc.op_norm(B)


def _riesz_solver(E):
    gram = np.einsum("iab,jab->ij", np.conj(E.basis), E.basis)
    return np.linalg.inv(gram.T)


def cb_ascent(phi, level=None, restarts=8, seed=0, iters=300, tol=1e-12, starts=()):
    """Multistart alternating ascent of ``||phi^{(m)}(X)|| / ||X||`` over ``M_m(E)``.

    Alternates between the top singular pair of ``phi^{(m)}(X)`` and the
    contraction maximising the resulting linear functional (polar part of its
    Riesz representer, projected back onto ``M_m(E)`` and renormalised).

    :return: ``(best value, best X coefficients)``
    """
    E = phi.domain
    r, c = phi.out_shape
    m = level or max(r, c)
    d = E.dim
    if d == 0 or not np.any(phi.images):
        return 0.0, np.zeros((m, m, d), dtype=complex)
    Rinv = _riesz_solver(E)
    best_val, best_X = -1.0, None

    def value(X):
        conc = _assemble(E, X)
        nx = mc.op_norm(conc)
        if nx == 0:
            return 0.0
        return mc.op_norm(phi.amplify(X)) / nx

    seeds = list(starts)
    for t in range(restarts):
        rng = np.random.default_rng([seed, t])
        seeds.append(mc.random_complex(rng, m, m, d))
    for X in seeds:
        X = np.asarray(X, dtype=complex)
        X = X / max(mc.op_norm(_assemble(E, X)), 1e-300)
        val = value(X)
        for _ in range(iters):
            F = phi.amplify(X)
            U, s, Vh = np.linalg.svd(F)
            eta = U[:, 0].reshape(m, r)
            xi = np.conj(Vh[0]).reshape(m, c)
            g = np.einsum("pa,iab,qb->pqi", np.conj(eta), phi.images, xi)
            G = np.conj(np.einsum("ij,pqj->pqi", Rinv, g))
            W = mc.polar_isometry(_assemble(E, G))
            Xn, _ = _project_level(E, W, m)
            nx = mc.op_norm(_assemble(E, Xn))
            if nx == 0:
                break
            Xn = Xn / nx
            vn = value(Xn)
            if vn <= val * (1 + tol):
                if vn > val:
                    X, val = Xn, vn
                break
            X, val = Xn, vn
        if val > best_val:
            best_val, best_X = val, X
    return float(best_val), best_X


def _assemble(E, X):
    m, n, _ = X.shape
    return np.einsum("pqi,iab->paqb", X, E.basis).reshape(m * E.k, n * E.h)


def _project_level(E, W, m):
    blocks = W.reshape(m, E.k, m, E.h).transpose(0, 2, 1, 3)
    return E.coords(blocks), None


def cb_norm(phi, restarts=8, seed=0, level=None, eps_report=1e-6):
    """Norm interval for ``||phi||_cb`` (maps into ``M_{r,c}``, level ``max(r,c)``).

    The lower end is the ascent value (a witness ``X`` is attached).  For full
    matrix-space domains the upper end is the certified Wittstock bound;
    otherwise it is the stabilisation estimate ``lower * (1 + eps_report)``
    flagged as heuristic.
    """
    val, X = cb_ascent(phi, level=level, restarts=restarts, seed=seed)
    if val <= 0:
        return NormInterval(0.0, 0.0, True, lower_witness=None)
    if phi.dilation is not None:
        Z2, Z1, _ = phi.dilation
        up = mc.op_norm(Z2) * mc.op_norm(Z1)
        if up <= val * (1 + eps_report):
            return NormInterval(val, max(up, val), True, estimate=val, info={"X": X})
    if _is_full_rect(phi.domain):
        up = cb_upper_full(phi)
        return NormInterval(val, max(up, val), True, estimate=val, info={"X": X})
    return NormInterval(val, val * (1 + eps_report), False, estimate=val, info={"X": X})


# --- samplers -----------------------------------------------------------------

def sample_cc_map(E, out_shape, m, rng, Z1=None, Z2=None):
    """Random complete contraction ``phi(x) = Z2^* (x ⊗ I_m) Z1``.

    ``Z1`` is ``(h m) x c`` and ``Z2`` is ``(k m) x r``; both are Gaussian
    matrices scaled into the unit ball unless given.
    """
    r, c = out_shape
    if m < 1:
        raise ValueError("multiplicity must be at least 1")
    if Z1 is None:
        Z1 = mc.random_contraction(rng, E.h * m, c)
    if Z2 is None:
        Z2 = mc.random_contraction(rng, E.k * m, r)
    Z1 = np.asarray(Z1, dtype=complex)
    Z2 = np.asarray(Z2, dtype=complex)
    I = np.eye(m)
    imgs = np.array([mc.adjoint(Z2) @ np.kron(b, I) @ Z1 for b in E.basis])
    return LinMap(E, imgs, dilation=(Z2, Z1, m))


@dataclass(eq=False)
class StinespringUCP:
    """Unital completely positive map ``s -> V^* (s ⊗ I_r) V`` on an operator system."""

    domain: ConcreteOpSpace
    V: np.ndarray
    r: int

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=complex)
        if self.V.shape[0] != self.domain.k * self.r:
            raise ShapeMismatch("V must have k*r rows")
        if mc.op_norm(mc.adjoint(self.V) @ self.V - np.eye(self.V.shape[1])) > 1e-10:
            raise ValueError("V is not an isometry")

    @property
    def out_dim(self):
        return self.V.shape[1]

    def as_linmap(self):
        I = np.eye(self.r)
        imgs = np.array([mc.adjoint(self.V) @ np.kron(b, I) @ self.V for b in self.domain.basis])
        return LinMap(self.domain, imgs)

    def __call__(self, s):
        return mc.adjoint(self.V) @ np.kron(np.asarray(s, dtype=complex), np.eye(self.r)) @ self.V


def sample_ucp(S, out_dim, r, rng):
    """Random u.c.p. map in Stinespring form (needs ``S.k * r >= out_dim``)."""
    V = mc.random_isometry(rng, S.k * r, out_dim)
    return StinespringUCP(S, V, r)


def random_linmap(E, out_shape, rng):
    return LinMap(E, mc.random_complex(rng, E.dim, *out_shape))


def random_cp_map(n_in, n_out, rng, kraus=2):
    E = full_algebra(n_in)
    Ks = [mc.random_complex(rng, n_out, n_in) for _ in range(kraus)]
    return map_from_callable(E, lambda x: sum(K @ x @ mc.adjoint(K) for K in Ks))
