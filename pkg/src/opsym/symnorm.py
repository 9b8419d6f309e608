"""Symmetrisation and Haagerup norms of elements of ``M_n(E* ⊙ S ⊙ E)``.

Storage convention.  With bases ``b_i`` of ``E ⊆ B(C^h, C^k)`` and ``c_j`` of
the operator system ``S ⊆ M_{kS}``, an element ``u`` of level ``n`` is the
coefficient array ``coeffs[p, q, i, j, l]`` so that block ``(p, q)`` of ``u`` is
``sum coeffs[p,q,i,j,l] b_i^* ⊗ c_j ⊗ b_l``.  A block product ``y^* ⊙ s ⊙ x``
with ``y, x`` in ``M_{K,n}(E)`` and ``s`` in ``M_K(S)`` expands to
``einsum('api,abj,bql->pqijl', conj(Y), S, X)``.

Admissible pairs are stored by their images (``phi(b_i)`` and ``psi(c_j)``)
together with the dilation data that certifies ``||phi||_cb <= 1`` and
``psi`` unital completely positive.
"""
from dataclasses import dataclass, field

import numpy as np

from . import matcore as mc
from .certificates import NormInterval
from .errors import (InconsistentElement, NotHermitian, ParseError, PreconditionError,
                     ShapeMismatch, UnsupportedSpace, WitnessUnavailable)
from .opspace import ConcreteOpSpace, LevelElement, scalars, space_from_json


# --- tensor elements -------------------------------------------------------------

@dataclass(eq=False)
class TensorElement:
    """Element of ``M_n(E* ⊙ S ⊙ E)`` in canonical coefficient form.

    :param blocks: optional list of ``(Y, Sc, X)`` coefficient arrays the element
        was built from; used to seed Haagerup factorisations
    """

    E: ConcreteOpSpace
    S: ConcreteOpSpace
    coeffs: np.ndarray
    blocks: list = field(default=None, repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 5 or c.shape[0] != c.shape[1] or c.shape[2:] != (self.E.dim, self.S.dim, self.E.dim):
            raise ShapeMismatch("coefficients must have shape (n, n, dim E, dim S, dim E)")
        self.coeffs = c
        if self.blocks is not None:
            built = expand_blocks(self.blocks, c.shape[0], self.E, self.S)
            if np.max(np.abs(built - c), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(c), initial=0.0)):
                raise InconsistentElement("blocks do not expand to the coefficients")

    @property
    def n(self):
        return self.coeffs.shape[0]

    def __add__(self, other):
        _check_same(self, other)
        blocks = None
        if self.blocks is not None and other.blocks is not None:
            blocks = list(self.blocks) + list(other.blocks)
        return TensorElement(self.E, self.S, self.coeffs + other.coeffs, blocks)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, a):
        blocks = None
        if self.blocks is not None:
            if isinstance(a, (int, float)) and a >= 0:
                r = np.sqrt(a)
                blocks = [(Y * r, Sc, X * r) for Y, Sc, X in self.blocks]
            else:
                blocks = [(Y, Sc * a, X) for Y, Sc, X in self.blocks]
        return TensorElement(self.E, self.S, self.coeffs * a, blocks)

    __rmul__ = scale

    def __mul__(self, a):
        return self.scale(a)

    def conjugate_by(self, alpha, beta=None):
        """``alpha u beta`` for scalar matrices ``alpha`` (m x n) and ``beta`` (n x m').

        With ``beta`` omitted, ``beta = alpha^*`` (congruence).
        """
        alpha = np.asarray(alpha, dtype=complex)
        beta = mc.adjoint(alpha) if beta is None else np.asarray(beta, dtype=complex)
        if alpha.shape[1] != self.n or beta.shape[0] != self.n:
            raise ShapeMismatch("scalar matrices do not fit level %d" % self.n)
        c = np.einsum("ap,pqijl,qb->abijl", alpha, self.coeffs, beta)
        blocks = None
        if self.blocks is not None and np.allclose(beta, mc.adjoint(alpha)):
            # (x alpha*)... y -> y alpha^*, x -> x beta
            blocks = [(np.einsum("kpi,ap->kai", Y, np.conj(alpha)), Sc, np.einsum("kqi,qb->kbi", X, beta))
                      for Y, Sc, X in self.blocks]
        return TensorElement(self.E, self.S, c, blocks)

    def star(self):
        """Involution ``(y^* ⊙ s ⊙ x)^* = x^* ⊙ s^* ⊙ y`` (needs ``S`` adjoint-closed)."""
        A = _adjoint_matrix(self.S)
        c = np.conj(np.transpose(self.coeffs, (1, 0, 4, 3, 2)))
        c = np.einsum("Jj,pqijl->pqiJl", A, c)
        blocks = None
        if self.blocks is not None:
            blocks = [(X, np.einsum("Jj,baj->abJ", A, np.conj(Sc)), Y) for Y, Sc, X in self.blocks]
        return TensorElement(self.E, self.S, c, blocks)

    def hermitian_defect(self):
        return float(np.max(np.abs(self.coeffs - self.star().coeffs), initial=0.0))

    def is_hermitian(self, tol=1e-9):
        return self.hermitian_defect() <= tol

    def mult(self):
        """``sum y^* s x`` as a concrete ``(n h) x (n h)`` matrix (needs ``S`` acting on ``C^k``)."""
        if self.S.k != self.E.k:
            raise UnsupportedSpace("S must act on the range space of E")
        blocks = np.einsum("pqijl,iba,jbc,lcd->paqd", self.coeffs, np.conj(self.E.basis),
                           self.S.basis, self.E.basis)
        n, h = self.n, self.E.h
        return blocks.reshape(n * h, n * h)

    def canonical_middle(self):
        """Coefficients ``T[(i,p), (l,q), j]`` of the middle factor in ``u = X_can^* ⊙ T ⊙ X_can``.

        ``X_can`` is the column in ``M_{dim E * n, n}(E)`` whose entry ``((i,a), p)`` is
        ``delta_{ap} b_i``.
        """
        n, dE = self.n, self.E.dim
        T = np.transpose(self.coeffs, (2, 0, 4, 1, 3)).reshape(dE * n, dE * n, self.S.dim)
        return T

    def canonical_middle_matrix(self):
        """Concrete matrix of :meth:`canonical_middle` in ``M_{dim E * n}(M_{kS})``."""
        T = self.canonical_middle()
        N = T.shape[0]
        kS = self.S.k
        return np.einsum("abj,juv->aubv", T, self.S.basis).reshape(N * kS, N * kS)

    def to_json(self):
        out = {"E": self.E.to_json(), "S": self.S.to_json(), "n": self.n}
        if self.blocks is not None:
            out["blocks"] = [{"y": _arr_json(Y), "s": _arr_json(Sc), "x": _arr_json(X)} for Y, Sc, X in self.blocks]
        else:
            out["coeffs"] = _arr_json(self.coeffs)
        return out


def _arr_json(a):
    a = np.asarray(a, dtype=complex)
    return {"shape": list(a.shape), "re": a.real.reshape(-1).tolist(), "im": a.imag.reshape(-1).tolist()}


def _arr_from_json(obj):
    return (np.asarray(obj["re"], float) + 1j * np.asarray(obj["im"], float)).reshape(obj["shape"])


def tensor_from_json(obj):
    try:
        E = space_from_json(obj["E"])
        S = space_from_json(obj["S"])
        n = int(obj["n"])
        if "blocks" in obj:
            blocks = [(_arr_from_json(b["y"]), _arr_from_json(b["s"]), _arr_from_json(b["x"])) for b in obj["blocks"]]
            return from_blocks(E, S, blocks, n)
        return TensorElement(E, S, _arr_from_json(obj["coeffs"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError("malformed tensor JSON: %s" % exc) from exc


def _check_same(u, v):
    if u.E is not v.E or u.S is not v.S or u.n != v.n:
        if u.n != v.n or u.E.basis.shape != v.E.basis.shape or not np.allclose(u.E.basis, v.E.basis) \
                or u.S.basis.shape != v.S.basis.shape or not np.allclose(u.S.basis, v.S.basis):
            raise ShapeMismatch("tensor elements live in different spaces")


_ADJ_CACHE = {}


def _adjoint_matrix(S):
    hit = _ADJ_CACHE.get(id(S))
    if hit is not None and hit[0] is S:
        return hit[1]
    A = S.adjoint_coeff_matrix()
    _ADJ_CACHE[id(S)] = (S, A)
    return A


def expand_blocks(blocks, n, E, S):
    c = np.zeros((n, n, E.dim, S.dim, E.dim), dtype=complex)
    for Y, Sc, X in blocks:
        c += np.einsum("api,abj,bql->pqijl", np.conj(Y), Sc, X)
    return c


def _coeff_block(v, space, kind):
    if isinstance(v, LevelElement):
        return v.coeffs
    v = np.asarray(v, dtype=complex)
    if v.ndim == 3 and v.shape[2] == space.dim:
        return v
    if v.ndim == 2 and v.shape == (space.k, space.h):
        return space.coords(v)[None, None]
    if v.ndim == 1 and v.shape[0] == space.dim:
        return v[None, None]
    raise ShapeMismatch("cannot interpret %s as %s" % (v.shape, kind))


def from_blocks(E, S, blocks, n=None):
    """Tensor element ``sum y^* ⊙ s ⊙ x`` from blocks.

    Each block is ``(y, s, x)`` with ``y, x`` in ``M_{K,n}(E)`` and ``s`` in
    ``M_K(S)``, given as coefficient arrays ``(K, n, dim)``, as
    :class:`LevelElement`, or (for ``K = n = 1``) as concrete matrices.
    """
    cb = []
    for y, s, x in blocks:
        Y = _coeff_block(y, E, "y")
        X = _coeff_block(x, E, "x")
        Sc = _coeff_block(s, S, "s")
        if Y.shape[0] != Sc.shape[0] or X.shape[0] != Sc.shape[1] or Y.shape[1] != X.shape[1]:
            raise ShapeMismatch("block shapes do not chain")
        cb.append((Y, Sc, X))
    if n is None:
        n = cb[0][0].shape[1]
    return TensorElement(E, S, expand_blocks(cb, n, E, S), cb)


def elementary(E, S, y, s, x):
    """The level-one element ``y^* ⊗ s ⊗ x`` from concrete matrices."""
    return from_blocks(E, S, [(y, s, x)], 1)


def elementary_es(E, y, x):
    """``y^* ⊗ x`` in ``E* ⊙ E`` (the case ``S = C``)."""
    return elementary(E, scalars(), y, np.ones((1, 1)), x)


def zero_tensor(E, S, n=1):
    return TensorElement(E, S, np.zeros((n, n, E.dim, S.dim, E.dim), dtype=complex))


def tensor_from_middle(E, S, T, n):
    """Inverse of :meth:`TensorElement.canonical_middle`."""
    dE = E.dim
    c = np.asarray(T, dtype=complex).reshape(dE, n, dE, n, S.dim)
    return TensorElement(E, S, np.transpose(c, (1, 3, 0, 4, 2)))


def random_tensor(E, S, n, rng, terms=2, K=1):
    blocks = [(mc.random_complex(rng, K, n, E.dim), mc.random_complex(rng, K, K, S.dim),
               mc.random_complex(rng, K, n, E.dim)) for _ in range(terms)]
    return from_blocks(E, S, blocks, n)


def offdiag(u):
    """The hermitian element ``[[0, u], [u^*, 0]]`` at level ``2n``."""
    n = u.n
    c = np.zeros((2 * n, 2 * n) + u.coeffs.shape[2:], dtype=complex)
    c[:n, n:] = u.coeffs
    c[n:, :n] = u.star().coeffs
    return TensorElement(u.E, u.S, c)


# --- admissible pairs ------------------------------------------------------------

@dataclass(eq=False)
class AdmissiblePair:
    """A c.c. map ``phi: E -> B(C^{H'}, C^{K'})`` and a u.c.p. map ``psi: S -> M_{K'}``.

    ``phi_images[i] = phi(b_i)`` and ``psi_images[j] = psi(c_j)``.  ``cert`` holds
    the dilation data certifying the two properties (see :func:`verify_pair`).
    """

    E: ConcreteOpSpace
    S: ConcreteOpSpace
    phi_images: np.ndarray
    psi_images: np.ndarray
    cert: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.phi_images = np.asarray(self.phi_images, dtype=complex)
        self.psi_images = np.asarray(self.psi_images, dtype=complex)
        if self.phi_images.shape[0] != self.E.dim or self.psi_images.shape[0] != self.S.dim:
            raise ShapeMismatch("image stacks do not match the bases")
        Kp = self.phi_images.shape[1]
        if self.psi_images.shape[1:] != (Kp, Kp):
            raise ShapeMismatch("psi must act on the range space of phi")

    @property
    def K(self):
        return self.phi_images.shape[1]

    @property
    def H(self):
        return self.phi_images.shape[2]

    def psi_unit(self):
        return np.tensordot(self.S.unit, self.psi_images, axes=(0, 0))

    def to_json(self):
        out = {
            "phi_images": [mc.matrix_to_json(a) for a in self.phi_images],
            "psi_images": [mc.matrix_to_json(a) for a in self.psi_images],
        }
        if self.cert:
            out["cert"] = {k: (mc.matrix_to_json(v) if isinstance(v, np.ndarray) and v.ndim == 2 else
                               (v if isinstance(v, (int, float, str)) else None))
                           for k, v in self.cert.items()}
        return out


def pair_from_json(obj, E, S):
    phi = np.array([mc.matrix_from_json(a) for a in obj["phi_images"]])
    psi = np.array([mc.matrix_from_json(a) for a in obj["psi_images"]])
    cert = {}
    for k, v in (obj.get("cert") or {}).items():
        if isinstance(v, dict):
            cert[k] = mc.matrix_from_json(v)
        elif v is not None:
            cert[k] = v
    return AdmissiblePair(E, S, phi, psi, cert)


def dilation_pair(E, S, L, R, m, V, r):
    """Pair with ``phi(x) = L (x ⊗ I_m) R`` and ``psi(s) = V^* (s ⊗ I_r) V``."""
    L = np.asarray(L, dtype=complex)
    R = np.asarray(R, dtype=complex)
    V = np.asarray(V, dtype=complex)
    Im, Ir = np.eye(m), np.eye(r)
    phi = np.array([L @ np.kron(b, Im) @ R for b in E.basis])
    psi = np.array([mc.adjoint(V) @ np.kron(c, Ir) @ V for c in S.basis])
    return AdmissiblePair(E, S, phi, psi, {"L": L, "R": R, "m": int(m), "V": V, "r": int(r)})


def verify_pair(pair, tol=1e-9):
    """Check the stored certificate: contractions ``L, R``, isometry ``V`` and that
    the images agree with the dilation formulas; also that ``psi`` is unital."""
    c = pair.cert
    if not all(key in c for key in ("L", "R", "m", "V", "r")):
        return False
    if mc.op_norm(c["L"]) > 1 + tol or mc.op_norm(c["R"]) > 1 + tol:
        return False
    V = c["V"]
    if mc.op_norm(mc.adjoint(V) @ V - np.eye(V.shape[1])) > 1e-9:
        return False
    ref = dilation_pair(pair.E, pair.S, c["L"], c["R"], c["m"], V, c["r"])
    if np.max(np.abs(ref.phi_images - pair.phi_images), initial=0) > 1e-9:
        return False
    if np.max(np.abs(ref.psi_images - pair.psi_images), initial=0) > 1e-9:
        return False
    if pair.S.unit is not None and mc.op_norm(pair.psi_unit() - np.eye(pair.K)) > 1e-10:
        return False
    return True


def identity_pair(E, S):
    """``phi = id_E``, ``psi = id_S`` (needs ``S`` acting on the range of ``E``)."""
    if S.k != E.k:
        raise UnsupportedSpace("identity pair needs S acting on C^k")
    return dilation_pair(E, S, np.eye(E.k), np.eye(E.h), 1, np.eye(S.k), 1)


def state_pair(E, S, L, R, m, omega):
    """``phi(x) = L (x ⊗ I_m) R`` with ``psi = <. omega, omega> I``."""
    omega = np.asarray(omega, dtype=complex).reshape(-1, 1)
    Kp = np.asarray(L).shape[0]
    V = np.kron(omega, np.eye(Kp))
    return dilation_pair(E, S, L, R, m, V, Kp)


def pair_from_contraction(E, S, Z, m, r):
    """Pair realising ``(y^* ⊗ I) Z^* (s ⊗ I_r) Z (x ⊗ I)`` for a contraction ``Z``.

    ``Z`` maps ``C^k ⊗ C^m`` into ``C^{kS} ⊗ C^r``; with the SVD ``Z = W Σ Q^*``
    the pair is ``phi(x) = |Z| (x ⊗ I_m)`` and ``psi(s) = V^* (s ⊗ I_r) V`` where
    ``V = W[:, :km] Q^*`` is an isometry with ``V |Z| = Z``.
    """
    Z = np.asarray(Z, dtype=complex)
    km = E.k * m
    if Z.shape != (S.k * r, km):
        raise ShapeMismatch("Z must be (kS r) x (k m)")
    if Z.shape[0] < km:
        raise ShapeMismatch("need kS * r >= k * m to dilate")
    W, s, Qh = np.linalg.svd(Z, full_matrices=True)
    s = np.minimum(s, 1.0)
    Q = mc.adjoint(Qh)
    P = (Q * s) @ Qh
    V = W[:, :km] @ Qh
    return dilation_pair(E, S, P, np.eye(E.h * m), m, V, r)


def eval_pair(pair, u):
    """``(phi^* · psi · phi)^{(n)}(u)`` as an ``(n H') x (n H')`` matrix."""
    if pair.E.dim != u.E.dim or pair.S.dim != u.S.dim:
        raise ShapeMismatch("pair and tensor live over different spaces")
    P, Q = pair.phi_images, pair.psi_images
    QP = np.einsum("jbc,lcd->jlbd", Q, P)
    G = np.einsum("iba,jlbd->ijlad", np.conj(P), QP)
    n, H = u.n, pair.H
    return _contract_blocks(u.coeffs, G, n, H)


def _contract_blocks(coeffs, G, n, H):
    """``sum coeffs[p,q,i,j,l] G[i,j,l]`` placed in block ``(p, q)``."""
    c = coeffs.reshape(n * n, -1)
    blocks = (c @ G.reshape(c.shape[1], H * H)).reshape(n, n, H, H)
    return blocks.transpose(0, 2, 1, 3).reshape(n * H, n * H)


# --- the Z-parameterised objective ---------------------------------------------------

class _ZObjective:
    """``F(Z) = sum coeffs E_pq ⊗ (B_i ⊗ I_m)^* Z^* (C_j ⊗ I_r) Z (B_l ⊗ I_m)``."""

    def __init__(self, u, m, r):
        self.u = u
        self.m, self.r = m, r
        E, S = u.E, u.S
        Im, Ir = np.eye(m), np.eye(r)
        self.Bm = np.array([np.kron(b, Im) for b in E.basis])  # (dE, km, hm)
        self.Cr = np.array([np.kron(c, Ir) for c in S.basis])  # (dS, kS r, kS r)
        self.n = u.n
        self.hm = E.h * m

    def F(self, Z):
        ZB = np.einsum("ab,lbc->lac", Z, self.Bm)  # (dE, kSr, hm)
        CZB = np.einsum("jab,lbc->jlac", self.Cr, ZB)
        G = np.einsum("iba,jlbc->ijlac", np.conj(ZB), CZB)  # (dE,dS,dE,hm,hm)
        return _contract_blocks(self.u.coeffs, G, self.n, self.hm)

    def ascent_direction(self, Z, eta, xi):
        """Direction ``D`` with ``d/dt Re<F(Z + tD) xi, eta> = ||D||_F^2`` at ``t = 0``."""
        n, hm = self.n, self.hm
        xi = xi.reshape(n, hm)
        eta = eta.reshape(n, hm)
        a = np.einsum("lkc,qc->lqk", self.Bm, xi)  # a[l,q] = Bm_l xi_q
        b = np.einsum("ikc,pc->ipk", self.Bm, eta)
        # M_j = sum_{pqil} C[p,q,i,j,l] a_{lq} b_{ip}^*
        ab = np.einsum("lqa,ipb->pqilab", a, np.conj(b))
        Mj = np.einsum("pqijl,pqilab->jab", self.u.coeffs, ab)
        D = np.einsum("jab,bc,jcd->ad", self.Cr, Z, Mj) + \
            np.einsum("jba,bc,jdc->ad", np.conj(self.Cr), Z, np.conj(Mj))
        return D


def _top_pair(F):
    U, s, Vh = np.linalg.svd(F)
    return s[0], U[:, 0], np.conj(Vh[0])


def z_ascent(u, m, r, Z0, iters=150, tol=1e-11):
    """Projected gradient ascent of ``||F(Z)||`` over contractions ``Z``."""
    obj = _ZObjective(u, m, r)
    Z = mc.clip_singular_values(Z0)
    val, eta, xi = _top_pair(obj.F(Z))
    step = 1.0
    for _ in range(iters):
        D = obj.ascent_direction(Z, eta, xi)
        nd = np.linalg.norm(D)
        if nd < 1e-14:
            break
        improved = False
        t = step
        for _ in range(20):
            Zn = mc.clip_singular_values(Z + (t / nd) * D)
            vn, en, xn = _top_pair(obj.F(Zn))
            if vn > val * (1 + 1e-10) + 1e-15:
                improved = True
                break
            t /= 2
        if not improved:
            break
        Z, val, eta, xi = Zn, vn, en, xn
        step = min(4 * t, 4.0)
    return val, Z


def z_descent_min_eig(u, m, r, Z0, iters=150):
    """Projected gradient descent of the smallest eigenvalue of ``F(Z)`` (hermitian ``u``)."""
    obj = _ZObjective(u, m, r)

    def lam(Z):
        w, V = mc.eigh(obj.F(Z))
        return w[0], V[:, 0]

    Z = mc.clip_singular_values(Z0)
    val, v = lam(Z)
    scale = max(1.0, float(np.max(np.abs(u.coeffs), initial=0.0)))
    step = 1.0
    for _ in range(iters):
        D = -obj.ascent_direction(Z, v, v)
        nd = np.linalg.norm(D)
        if nd < 1e-14:
            break
        t = step
        improved = False
        for _ in range(20):
            Zn = mc.clip_singular_values(Z + (t / nd) * D)
            vn, wn = lam(Zn)
            if vn < val - 1e-10 * scale:
                improved = True
                break
            t /= 2
        if not improved:
            break
        Z, val, v = Zn, vn, wn
        step = min(4 * t, 4.0)
    return val, Z


# --- plus-norm ascent (S = C or a state on S) -------------------------------------

def state_reduce(u, omega):
    """Coefficients ``K[p,q,i,l] = sum_j <c_j omega, omega> coeffs[p,q,i,j,l]``."""
    omega = np.asarray(omega, dtype=complex)
    tau = np.einsum("a,jab,b->j", np.conj(omega), u.S.basis, omega)
    return np.einsum("pqijl,j->pqil", u.coeffs, tau)


class _PlusObjective:
    """``F(T) = sum K[p,q,i,l] E_pq ⊗ (B_i ⊗ I_m)^* T (B_l ⊗ I_m)`` for ``0 <= T <= I``."""

    def __init__(self, K, E, m):
        self.K = np.asarray(K, dtype=complex)
        self.n = self.K.shape[0]
        self.m = m
        self.Bm = np.array([np.kron(b, np.eye(m)) for b in E.basis])
        self.hm = E.h * m
        self.km = E.k * m

    def F(self, T):
        TB = np.einsum("ab,lbc->lac", T, self.Bm)
        G = np.einsum("iba,lbc->ilac", np.conj(self.Bm), TB)
        return _contract_blocks(self.K, G, self.n, self.hm)

    def linear_part(self, eta, xi):
        n, hm = self.n, self.hm
        a = np.einsum("lkc,qc->lqk", self.Bm, xi.reshape(n, hm))
        b = np.einsum("ikc,pc->ipk", self.Bm, eta.reshape(n, hm))
        ab = np.einsum("lqa,ipb->pqilab", a, np.conj(b))
        return np.tensordot(self.K, ab, axes=([0, 1, 2, 3], [0, 1, 2, 3]))


def plus_ascent(K, E, m, restarts=8, seed=0, iters=200, extra_starts=()):
    """Alternating maximisation of ``||F(T)||`` over ``0 <= T <= I``.

    The T-step is exact (:func:`matcore.psd_linear_max`), the vector step takes
    the top singular pair, so the value never decreases.

    :return: ``(value, T)``
    """
    obj = _PlusObjective(K, E, m)
    km = obj.km
    starts = [np.eye(km, dtype=complex)] + list(extra_starts)
    for t in range(restarts):
        rng = np.random.default_rng([seed, m, t])
        G = mc.random_complex(rng, km, km)
        if t % 2 == 0:
            v = mc.random_complex(rng, km, 1)
            starts.append(v @ mc.adjoint(v) / np.vdot(v, v).real)
        else:
            P = G @ mc.adjoint(G)
            starts.append(P / mc.op_norm(P))
    best, bestT = -1.0, None
    for T in starts:
        val, eta, xi = _top_pair(obj.F(T))
        for _ in range(iters):
            M = obj.linear_part(eta, xi)
            _, Tn = mc.psd_linear_max(M)
            vn, en, xn = _top_pair(obj.F(Tn))
            if vn <= val * (1 + 1e-13) + 1e-16:
                if vn > val:
                    T, val = Tn, vn
                break
            T, val, eta, xi = Tn, vn, en, xn
        if val > best:
            best, bestT = val, T
    return float(best), bestT


def plus_pair(E, S, T, m, omega=None):
    """Admissible pair realising the plus-objective at ``T`` (``psi`` a vector state)."""
    Z = mc.psd_sqrt(T)
    if omega is None:
        omega = np.zeros(S.k, dtype=complex)
        omega[0] = 1
        if S.unit is not None and S.k == 1:
            omega[0] = 1
    omega = np.asarray(omega, dtype=complex).reshape(-1, 1)
    Zfull = np.kron(omega, Z)
    return pair_from_contraction(E, S, Zfull, m, Z.shape[0])


def plus_norm(rep_pairs, truncation=4, restarts=8, seed=0):
    """Estimate ``sup_{0 <= T <= I} ||sum_i (a_i^* ⊗ I_k) T (b_i ⊗ I_k)||`` for ``k = 1..truncation``.

    :param rep_pairs: list of ``(a_i, b_i)`` matrices of a common shape
    :return: :class:`NormInterval`; ``info["per_k"]`` lists the lower bound at each k
    """
    a = np.array([np.asarray(p[0], dtype=complex) for p in rep_pairs])
    b = np.array([np.asarray(p[1], dtype=complex) for p in rep_pairs])
    from .opspace import ConcreteOpSpace

    # work in the span of all a_i, b_i so the plus objective applies
    mats = np.concatenate([a, b])
    flat = mats.reshape(len(mats), -1)
    U, s, Vh = np.linalg.svd(flat, full_matrices=False)
    keep = s > 1e-12 * max(s.max(initial=0), 1e-300)
    E = ConcreteOpSpace(Vh[keep].reshape((-1,) + mats.shape[1:]))
    ca = E.coords(a)
    cbb = E.coords(b)
    K = np.einsum("ri,rl->il", np.conj(ca), cbb)[None, None]
    per_k = []
    best_val, best_T, best_m = 0.0, None, 1
    for m in range(1, truncation + 1):
        val, T = plus_ascent(K, E, m, restarts=restarts, seed=seed)
        per_k.append(val)
        if val > best_val:
            best_val, best_T, best_m = val, T, m
    up = _plus_upper(a, b)
    up_cert = True
    if up < best_val - 1e-9:
        up = best_val
    info = {"per_k": per_k, "best_k": best_m}
    return NormInterval(best_val, up, up_cert, estimate=best_val, lower_witness=None,
                        info=info)


def _plus_upper(a, b):
    """Certified upper bounds for the plus-norm of ``sum a_i^* T b_i``."""
    row = np.concatenate(list(a), axis=0)  # (sum_i a_i^* a_i) norm via stacking
    col = np.concatenate(list(b), axis=0)
    hb = mc.op_norm(row) * mc.op_norm(col)
    if len(a) == 1:
        A, B = a[0], b[0]
        rb = (mc.op_norm(A) * mc.op_norm(B) + mc.op_norm(mc.adjoint(A) @ B)) / 2
        return min(hb, rb)
    return hb


# --- Haagerup upper bounds ------------------------------------------------------

@dataclass
class Factorisation:
    """``u = Y^* ⊙ T ⊙ X`` with coefficient arrays ``Y, X (K, n, dE)`` and ``T (K, K, dS)``."""

    Y: np.ndarray
    T: np.ndarray
    X: np.ndarray
    value: float

    def to_json(self):
        return {"Y": _arr_json(self.Y), "T": _arr_json(self.T), "X": _arr_json(self.X), "value": self.value}


def _level_conc(space, c):
    K, n, _ = c.shape
    return np.einsum("pqi,iab->paqb", c, space.basis).reshape(K * space.k, n * space.h)


def factorisation_cost(E, S, Y, T, X):
    return mc.op_norm(_level_conc(E, Y)) * mc.op_norm(_level_conc(S, T)) * mc.op_norm(_level_conc(E, X))


def canonical_column(E, n):
    """``X_can`` in ``M_{dim E * n, n}(E)``: entry ``((i, a), p) = delta_{ap} b_i``."""
    dE = E.dim
    X = np.zeros((dE, n, n, dE), dtype=complex)
    for i in range(dE):
        for a in range(n):
            X[i, a, a, i] = 1
    return X.reshape(dE * n, n, dE)


def _diag_balance(E, S, Y, T, X, rounds=3):
    """Improve ``||Y|| ||T|| ||X||`` by positive diagonal rescaling of the K index."""
    from scipy.optimize import minimize

    K = T.shape[0]
    if K <= 1:
        return Y, T, X
    Yc = _level_conc(E, Y)
    Xc = _level_conc(E, X)

    def unpack(z):
        dy = np.exp(z[:K])
        dx = np.exp(z[K:])
        return dy, dx

    def cost(z):
        dy, dx = unpack(z)
        Y2 = Y * dy[:, None, None]
        X2 = X * dx[:, None, None]
        T2 = T / dy[:, None, None] / dx[None, :, None]
        return np.log(max(factorisation_cost(E, S, Y2, T2, X2), 1e-300))

    z0 = np.zeros(2 * K)
    best = (cost(z0), z0)
    res = minimize(cost, z0, method="Powell", options={"maxfev": 60 * K, "xtol": 1e-6, "ftol": 1e-10})
    if res.fun < best[0]:
        best = (res.fun, res.x)
    dy, dx = unpack(best[1])
    return Y * dy[:, None, None], T / dy[:, None, None] / dx[None, :, None], X * dx[:, None, None]


def haagerup_upper(u, balance=True):
    """Smallest ``||Y|| ||T|| ||X||`` over tried factorisations ``u = Y^* ⊙ T ⊙ X``.

    Seeds: the stored blocks (stacked into one column), the canonical column
    factorisation with middle ``T_u``, and for ``S = C`` an SVD-compressed
    factorisation; each is improved by diagonal rescaling.

    :return: :class:`Factorisation` (its ``value`` is the bound)
    """
    E, S, n = u.E, u.S, u.n
    if not np.any(u.coeffs):
        return Factorisation(np.zeros((1, n, E.dim)), np.zeros((1, 1, S.dim)), np.zeros((1, n, E.dim)), 0.0)
    seeds = []
    if u.blocks:
        Ys = np.concatenate([b[0] for b in u.blocks], axis=0)
        Xs = np.concatenate([b[2] for b in u.blocks], axis=0)
        Ktot = Ys.shape[0]
        Ts = np.zeros((Ktot, Ktot, S.dim), dtype=complex)
        off = 0
        for Y, Sc, X in u.blocks:
            k = Y.shape[0]
            Ts[off:off + k, off:off + k] = Sc
            off += k
        seeds.append((Ys, Ts, Xs))
    Xc = canonical_column(E, n)
    Tc = u.canonical_middle()
    seeds.append((Xc, Tc, Xc))
    if S.dim == 1:
        # T_u = U diag(sig) V^*  ->  u = (sqrt(sig) U^* X)^* ⊙ 1 ⊙ (sqrt(sig) V^* X)
        M = Tc[:, :, 0] * S.basis[0, 0, 0]
        Uu, sig, Vh = np.linalg.svd(M)
        keep = sig > 1e-13 * sig[0]
        Uu, sig, Vh = Uu[:, keep], sig[keep], Vh[keep]
        r = np.sqrt(sig)
        Yn = np.einsum("ak,anl->knl", np.conj(Uu) * r, Xc)
        Xn = np.einsum("ka,anl->knl", Vh * r[:, None], Xc)
        Tn = np.zeros((len(sig), len(sig), 1), dtype=complex)
        Tn[:, :, 0] = np.eye(len(sig)) / S.basis[0, 0, 0]
        seeds.append((Yn, Tn, Xn))
    best = None
    for Y, T, X in seeds:
        if balance:
            Y, T, X = _diag_balance(E, S, Y, T, X)
        val = factorisation_cost(E, S, Y, T, X)
        if best is None or val < best.value:
            best = Factorisation(Y, T, X, val)
    return best


def verify_factorisation(u, f, tol=1e-9):
    built = expand_blocks([(f.Y, f.T, f.X)], u.n, u.E, u.S)
    return np.max(np.abs(built - u.coeffs), initial=0.0) <= tol * max(1.0, np.max(np.abs(u.coeffs)))


def split_upper(u):
    """Certified bound ``max(h(u_+), h(u_-))`` from splitting the canonical middle.

    Applies to hermitian ``u`` directly and to ``[[0,u],[u^*,0]]`` otherwise.
    Returns ``inf`` when the positive/negative parts leave ``M_N(S)``.
    """
    try:
        v = u if u.is_hermitian(1e-12) else offdiag(u)
    except UnsupportedSpace:
        return np.inf
    E, S = v.E, v.S
    Tm = v.canonical_middle_matrix()
    w, V = mc.eigh(Tm)
    N = Tm.shape[0] // S.k
    bounds = []
    Xc = canonical_column(E, v.n)
    for sign in (1, -1):
        sel = sign * w > 0
        if not np.any(sel):
            bounds.append(0.0)
            continue
        P = (V[:, sel] * (sign * w[sel])) @ mc.adjoint(V[:, sel])
        blocks = P.reshape(N, S.k, N, S.k).transpose(0, 2, 1, 3)
        c, res = S.project_onto(blocks)
        if res > 1e-9 * max(1.0, mc.op_norm(P)):
            return np.inf
        if S.dim == 1:
            # positive part = x^* x with x = sqrt(P) X_can, exact norm ||x||^2
            R = mc.psd_sqrt(P / S.basis[0, 0, 0].real)
            xr = np.einsum("ka,anl->knl", R, Xc)
            bounds.append(mc.op_norm(_level_conc(E, xr)) ** 2)
        else:
            bounds.append(mc.op_norm(_level_conc(E, Xc)) ** 2 * mc.op_norm(P))
    return max(bounds)


def rank_one_upper(u):
    """``(||y|| ||x|| + ||y^* x||)/2 * |lambda|`` for ``u = y^* ⊗ (lambda 1) ⊗ x`` at level one."""
    if u.n != 1 or not u.blocks or len(u.blocks) != 1:
        return np.inf
    Y, Sc, X = u.blocks[0]
    if Y.shape[0] != 1:
        return np.inf
    s = u.S.element(Sc[0, 0])
    lam = s[0, 0]
    if mc.op_norm(s - lam * np.eye(u.S.k)) > 1e-12:
        return np.inf
    y = u.E.element(Y[0, 0])
    x = u.E.element(X[0, 0])
    return abs(lam) * (mc.op_norm(y) * mc.op_norm(x) + mc.op_norm(mc.adjoint(y) @ x)) / 2


# --- polarised witnesses ------------------------------------------------------------

@dataclass
class VectorFunctional:
    """``f(z) = omega^* z zeta``; contractive when ``||omega|| ||zeta|| <= 1``."""

    omega: np.ndarray
    zeta: np.ndarray

    def __call__(self, z):
        return complex(np.conj(self.omega) @ np.asarray(z) @ self.zeta)

    @property
    def norm_bound(self):
        return float(np.linalg.norm(self.omega) * np.linalg.norm(self.zeta))


def coordinate_functional(k, h, a, b):
    om = np.zeros(k, dtype=complex)
    ze = np.zeros(h, dtype=complex)
    om[a] = 1
    ze[b] = 1
    return VectorFunctional(om, ze)


def polarised_witness(E, S, f, g, x, y, tol=1e-9, state=None):
    """The pair ``phi = (f + i^m g)/2`` with ``psi`` a vector state on ``S``.

    When ``f(y) = g(x) = 0`` the evaluation on ``y^* ⊗ s ⊗ x`` has modulus
    ``|f(x)| |g(y)| |tau(s)| / 4``.  The best ``m`` in ``0..3`` is chosen by
    direct evaluation.  ``phi`` is certified through
    ``phi(z) = L (z ⊗ I_2) R`` with ``L = [omega_f^*, i^m omega_g^*]/sqrt 2`` and
    ``R = [zeta_f; zeta_g]/sqrt 2``.

    :raises PreconditionError: when a functional is not contractive or the
        supports are not disjoint
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    for fun in (f, g):
        if fun.norm_bound > 1 + tol:
            raise PreconditionError("functional is not contractive")
    same = f is g or (np.allclose(f.omega, g.omega) and np.allclose(f.zeta, g.zeta))
    if same and np.allclose(x, y):
        return _functional_pair(E, S, [f], [1.0], state)
    if abs(f(y)) > tol or abs(g(x)) > tol:
        raise PreconditionError("functionals do not separate x and y")
    best = None
    u = elementary(E, S, y, np.eye(S.k) if S.unit is not None else S.basis[0], x)
    for m in range(4):
        pair = _functional_pair(E, S, [f, g], [0.5, 0.5 * 1j ** m], state)
        val = abs(eval_pair(pair, u)[0, 0])
        if best is None or val > best[0] + 1e-15:
            best = (val, pair)
    return best[1]


def _functional_pair(E, S, funcs, weights, state=None):
    k, h = E.k, E.h
    t = len(funcs)
    # L (z ⊗ I_t) R = sum_s w_s f_s(z) with |L| |R| <= 1
    L = np.zeros((1, k * t), dtype=complex)
    R = np.zeros((h * t, 1), dtype=complex)
    scale = np.sqrt(np.sum(np.abs(weights)))
    for s, (fun, w) in enumerate(zip(funcs, weights)):
        aw = abs(w)
        ph = w / aw if aw > 0 else 1
        L[0, s::t] = np.conj(fun.omega) * np.sqrt(aw) * ph / 1.0
        R[s::t, 0] = fun.zeta * np.sqrt(aw)
    if scale > 1 + 1e-12:
        L /= scale
        R /= scale
    omega = np.zeros(S.k, dtype=complex)
    omega[0] = 1
    if state is not None:
        omega = np.asarray(state, dtype=complex)
    return state_pair(E, S, L, R, t, omega)


def find_polarised_witness(E, S, x, y, tol=1e-9, state=None):
    """Search coordinate and singular-vector functionals separating ``x`` and ``y``.

    :return: ``(pair, value)`` with value ``|f(x)| |g(y)| / 4`` (times ``|tau(s)|`` later)
    :raises WitnessUnavailable: when no separating pair of functionals is found
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    k, h = x.shape
    fcands, gcands = [], []
    for a in range(k):
        for b in range(h):
            f = coordinate_functional(k, h, a, b)
            if abs(y[a, b]) <= tol and abs(x[a, b]) > tol:
                fcands.append(f)
            if abs(x[a, b]) <= tol and abs(y[a, b]) > tol:
                gcands.append(f)
    for src, other, bucket in ((x, y, fcands), (y, x, gcands)):
        U, s, Vh = np.linalg.svd(src)
        for t in range(min(len(s), 2)):
            zeta = np.conj(Vh[t])
            w = other @ zeta
            v = src @ zeta
            nw = np.linalg.norm(w)
            if nw > tol:
                v = v - w * (np.vdot(w, v) / nw ** 2)
            nv = np.linalg.norm(v)
            if nv > tol:
                bucket.append(VectorFunctional(v / nv, zeta))
    best = None
    for f in fcands:
        for g in gcands:
            if abs(f(y)) > tol or abs(g(x)) > tol:
                continue
            val = abs(f(x)) * abs(g(y)) / 4
            if best is None or val > best[0]:
                best = (val, f, g)
    if best is None:
        raise WitnessUnavailable("no separating functionals found")
    return polarised_witness(E, S, best[1], best[2], x, y, tol, state), best[0]


# --- the symmetrisation norm --------------------------------------------------------

def _states(S, count, seed):
    states = []
    for a in range(S.k):
        e = np.zeros(S.k, dtype=complex)
        e[a] = 1
        states.append(e)
    rng = np.random.default_rng([seed, 7])
    for _ in range(count):
        v = mc.random_complex(rng, S.k)
        states.append(v / np.linalg.norm(v))
    return states


def sym_norm(u, restarts=8, truncation=4, seed=0, z_restarts=None, states=2, iters=200):
    """Interval for ``||u||_s``.

    Lower candidates (each with a replayable pair): the identity pair when ``S``
    acts on the range of ``E``; plus-norm ascent for vector states of ``S`` at
    multiplicities ``m = 1..truncation`` (early stop when two consecutive ``m``
    agree to 1e-8); projected-gradient ascent over contractions ``Z`` seeded by
    the best state solutions; and a polarised witness for elementary inputs.
    Upper: the minimum of :func:`haagerup_upper`, :func:`split_upper` and
    :func:`rank_one_upper`, all certified.
    """
    E, S = u.E, u.S
    if not np.any(u.coeffs):
        return NormInterval(0.0, 0.0, True, lower_witness=None, upper_witness=None)
    cands = []
    if S.k == E.k and S.unit is not None:
        p = identity_pair(E, S)
        cands.append((mc.op_norm(eval_pair(p, u)), p))
    best_state = None
    per_k = {}
    for omega in (_states(S, states, seed) if S.dim > 1 else [np.ones(1)]):
        K = state_reduce(u, omega)
        prev = None
        for m in range(1, truncation + 1):
            val, T = plus_ascent(K, E, m, restarts=restarts, seed=seed, iters=iters)
            per_k.setdefault(m, 0.0)
            per_k[m] = max(per_k[m], val)
            if best_state is None or val > best_state[0]:
                best_state = (val, T, m, omega)
            if prev is not None and abs(val - prev) <= 1e-8:
                break
            prev = val
    if best_state is not None:
        val, T, m, omega = best_state
        pair = plus_pair(E, S, T, m, omega)
        cands.append((mc.op_norm(eval_pair(pair, u)), pair))
    if S.dim > 1:
        nz = restarts if z_restarts is None else z_restarts
        m = min(2, truncation)
        r = max(1, -(-E.k * m // S.k))
        starts = []
        if best_state is not None and best_state[2] == m:
            starts.append(np.kron(best_state[3].reshape(-1, 1), mc.psd_sqrt(best_state[1])))
        if S.k == E.k:
            Z0 = np.zeros((S.k * r, E.k * m), dtype=complex)
            Z0[:E.k * m, :] = np.eye(E.k * m)
            # reorder so that Z0 = I ⊗ [I_m; 0] in the (s-index, r-index) ordering
            Z0 = np.kron(np.eye(E.k), np.eye(r, m))
            starts.append(Z0)
        for t in range(nz):
            rng = np.random.default_rng([seed, 11, t])
            starts.append(mc.random_contraction(rng, S.k * r, E.k * m))
        for Z0 in starts:
            if Z0.shape != (S.k * r, E.k * m):
                continue
            val, Z = z_ascent(u, m, r, Z0, iters=iters)
            pair = pair_from_contraction(E, S, Z, m, r)
            cands.append((mc.op_norm(eval_pair(pair, u)), pair))
    if u.n == 1 and u.blocks and len(u.blocks) == 1 and u.blocks[0][0].shape[0] == 1:
        Y, Sc, X = u.blocks[0]
        try:
            pair, _ = find_polarised_witness(E, S, E.element(X[0, 0]), E.element(Y[0, 0]))
            cands.append((mc.op_norm(eval_pair(pair, u)), pair))
        except WitnessUnavailable:
            pass
    lower, witness = max(cands, key=lambda c: c[0])
    fac = haagerup_upper(u)
    ups = [(fac.value, fac), (split_upper(u), "hermitian-split"), (rank_one_upper(u), "rank-one")]
    upper, upw = min(ups, key=lambda c: c[0])
    info = {"per_k": [per_k[m] for m in sorted(per_k)], "haagerup": fac.value}
    return NormInterval(lower, max(upper, lower) if upper >= lower - 1e-9 else upper, True,
                        estimate=lower, lower_witness=witness, upper_witness=upw if upw is fac else None,
                        info=info)
