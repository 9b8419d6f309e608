"""Trilinear maps ``theta: E* x S x E -> M_r`` and their factorisation.

A form is stored by ``tensor[i, j, l] = theta(b_i^*, c_j, b_l)`` (an ``r x r``
matrix) for bases ``b`` of ``E`` and ``c`` of ``S``.  The slot map
``Lambda(s)[i, l] = theta(b_i^*, s, b_l)`` sends ``S`` into ``M_{dim E * r}``;
``theta`` is completely positive exactly when ``Lambda`` is.
"""
from dataclasses import dataclass, field

import numpy as np

from . import matcore as mc
from .certificates import NormInterval
from .cpmaps import LinMap, is_completely_positive, wittstock_factors, matrix_unit_images
from .errors import NotPositive, ParseError, ShapeMismatch, UnsupportedSpace
from .opspace import ConcreteOpSpace, LevelElement, full_algebra, space_from_json


@dataclass(eq=False)
class TrilinearForm:
    E: ConcreteOpSpace
    S: ConcreteOpSpace
    tensor: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tensor, dtype=complex)
        if t.ndim != 5 or t.shape[:3] != (self.E.dim, self.S.dim, self.E.dim) or t.shape[3] != t.shape[4]:
            raise ShapeMismatch("tensor must have shape (dim E, dim S, dim E, r, r)")
        self.tensor = t

    @property
    def r(self):
        return self.tensor.shape[3]

    def __call__(self, y, s, x):
        """Level-one value ``theta(y^*, s, x)`` for concrete ``y, x`` in ``E`` and ``s`` in ``S``."""
        cy = self.E.coords(np.asarray(y, dtype=complex))
        cs = self.S.coords(np.asarray(s, dtype=complex))
        cx = self.E.coords(np.asarray(x, dtype=complex))
        return np.einsum("i,j,l,ijlab->ab", np.conj(cy), cs, cx, self.tensor)

    def slot_images(self):
        """``Lambda(c_j)`` as a stack of ``(dim E * r) x (dim E * r)`` matrices."""
        d, dS, r = self.E.dim, self.S.dim, self.r
        return np.transpose(self.tensor, (1, 0, 3, 2, 4)).reshape(dS, d * r, d * r)

    def slot_map(self):
        return LinMap(self.S, self.slot_images())

    def gram(self):
        """The form ``<x ⊗ xi, y ⊗ eta> = <theta(y^*, 1, x) xi, eta>`` on ``E ⊗ C^r``."""
        if self.S.unit is None:
            raise UnsupportedSpace("S has no unit")
        return np.tensordot(self.S.unit, self.slot_images(), axes=(0, 0))

    def __add__(self, other):
        return TrilinearForm(self.E, self.S, self.tensor + other.tensor)

    def scale(self, a):
        return TrilinearForm(self.E, self.S, self.tensor * a)

    def adjoint_defect(self):
        """``max |theta(y^*, s, x)^* - theta(x^*, s^*, y)|`` over basis triples."""
        Q = self.S.adjoint_coeff_matrix()
        lhs = np.conj(np.transpose(self.tensor, (2, 1, 0, 4, 3)))  # theta(b_l^*, c_j, b_i)^* at [i,j,l]
        # theta(b_i^*, c_j^*, b_l) = sum_j' Q[j', j] tensor[i, j', l]
        rhs = np.einsum("kj,iklab->ijlab", Q, self.tensor)
        return float(np.max(np.abs(lhs - rhs), initial=0.0))

    def to_json(self):
        d, dS = self.E.dim, self.S.dim
        return {
            "E": self.E.to_json(),
            "S": self.S.to_json(),
            "r": self.r,
            "tensor": [[[mc.matrix_to_json(self.tensor[i, j, l]) for l in range(d)] for j in range(dS)]
                       for i in range(d)],
        }


def form_from_json(obj):
    try:
        E = space_from_json(obj["E"])
        S = space_from_json(obj["S"])
        r = int(obj["r"])
        t = np.array([[[mc.matrix_from_json(m) for m in row] for row in plane] for plane in obj["tensor"]],
                     dtype=complex)
        if t.size == 0:
            t = np.zeros((E.dim, S.dim, E.dim, r, r), dtype=complex)
        return TrilinearForm(E, S, t.reshape(E.dim, S.dim, E.dim, r, r))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError("malformed trilinear form JSON: %s" % exc) from exc


def form_from_callable(E, S, fn):
    """Tabulate ``fn(y, s, x) -> M_r`` (meaning ``theta(y^*, s, x)``) on basis triples."""
    vals = [[[np.asarray(fn(bi, cj, bl), dtype=complex) for bl in E.basis] for cj in S.basis] for bi in E.basis]
    return TrilinearForm(E, S, np.array(vals))


def multiplication_form(E, S=None):
    """``theta(y^*, s, x) = y^* s x`` (needs ``S`` acting on the range of ``E``)."""
    S = S if S is not None else full_algebra(E.k)
    return form_from_callable(E, S, lambda y, s, x: mc.adjoint(y) @ s @ x)


def form_from_pair(E, S, phi_images, psi_images):
    """``theta = phi^* . psi . phi`` from image stacks ``phi(b_i)`` and ``psi(c_j)``."""
    t = np.einsum("iba,jbc,lcd->ijlad", np.conj(phi_images), psi_images, phi_images)
    return TrilinearForm(E, S, t)


def zero_form(E, S, r):
    return TrilinearForm(E, S, np.zeros((E.dim, S.dim, E.dim, r, r), dtype=complex))


def _coeffs(v, space):
    if isinstance(v, LevelElement):
        return v.coeffs
    v = np.asarray(v, dtype=complex)
    if v.ndim == 2 and v.shape == (space.k, space.h):
        return space.coords(v)[None, None]
    if v.ndim == 3 and v.shape[2] == space.dim:
        return v
    raise ShapeMismatch("cannot read %s as an element of the space" % (v.shape,))


def amplify(theta, y, s, x):
    """``theta^{(n)}(y^*, s, x)`` for ``y, x`` in ``M_{m,n}(E)`` and ``s`` in ``M_m(S)``.

    Entry ``(p, q)`` is ``sum_{a,b} theta(y_{ap}^*, s_{ab}, x_{bq})``; the result is
    an ``(n r) x (n r)`` matrix.
    """
    Y, Sc, X = _coeffs(y, theta.E), _coeffs(s, theta.S), _coeffs(x, theta.E)
    if Y.shape[0] != Sc.shape[0] or X.shape[0] != Sc.shape[1] or Y.shape[1] != X.shape[1]:
        raise ShapeMismatch("level shapes do not chain")
    n, r = Y.shape[1], theta.r
    out = np.einsum("api,abj,bql,ijluv->puqv", np.conj(Y), Sc, X, theta.tensor, optimize=True)
    return out.reshape(n * r, n * r)


# --- polarisation -------------------------------------------------------------

POLAR_SHIFTS = (1, -1, -1j, 1j)
POLAR_WEIGHTS = (1, -1, 1j, -1j)


@dataclass
class Polarisation:
    """Four diagonal evaluations whose weighted sum is ``4 theta(v1^*, s, v2)``."""

    terms: list
    weights: tuple = POLAR_WEIGHTS
    shifts: tuple = POLAR_SHIFTS

    def combine(self):
        return sum(w * t for w, t in zip(self.weights, self.terms)) / 4


def polarise(theta, s, v1, v2, tol=1e-9):
    """Evaluate ``theta((v1 + c v2)^*, s, v1 + c v2)`` for ``c`` in ``(1, -1, -i, i)``.

    :param s: hermitian element of ``M_m(S)`` (level element, coefficients or matrix)
    :raises NotHermitian: when ``s`` is not hermitian
    """
    from .errors import NotHermitian

    Sc = _coeffs(s, theta.S)
    conc = np.einsum("abj,juv->aubv", Sc, theta.S.basis).reshape(Sc.shape[0] * theta.S.k, -1)
    if mc.op_norm(conc - mc.adjoint(conc)) > tol * max(1.0, mc.op_norm(conc)):
        raise NotHermitian("the middle argument must be hermitian")
    V1, V2 = _coeffs(v1, theta.E), _coeffs(v2, theta.E)
    terms = [amplify(theta, V1 + c * V2, Sc, V1 + c * V2) for c in POLAR_SHIFTS]
    return Polarisation(terms)


# --- positivity ------------------------------------------------------------

def is_completely_positive_form(theta, route="auto"):
    """Exact test: ``theta`` is c.p. iff ``Lambda: S -> M_{dim E * r}`` is c.p.

    :return: ``(bool, witness)`` as in :func:`cpmaps.is_completely_positive`
    """
    return is_completely_positive(theta.slot_map(), route=route)


def _random_positive(S, m, rng):
    """A positive element of ``M_m(S)`` as coefficients ``(m, m, dim S)``."""
    if S.unit is None:
        raise UnsupportedSpace("positivity sampling needs a unital S")
    Q = S.adjoint_coeff_matrix()
    H = mc.random_complex(rng, m, m, S.dim)
    # hermitian part inside M_m(S): (H + H^*)/2 with H^*_{ab} = (H_{ba})^*
    Hs = np.einsum("kj,baj->abk", Q, np.conj(H))
    H = (H + Hs) / 2
    conc = np.einsum("abj,juv->aubv", H, S.basis).reshape(m * S.k, m * S.k)
    lam = mc.min_eig(conc)
    shift = max(0.0, -lam) + abs(rng.standard_normal()) * 0.1
    out = H.copy()
    for a in range(m):
        out[a, a] += shift * S.unit
    return out


def sample_positivity(theta, samples=50, max_level=3, seed=0):
    """Smallest normalised eigenvalue of ``theta^{(n)}(x^*, s, x)`` over random samples."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(samples):
        m = int(rng.integers(1, max_level + 1))
        n = int(rng.integers(1, max_level + 1))
        X = mc.random_complex(rng, m, n, theta.E.dim)
        Sp = _random_positive(theta.S, m, rng)
        M = amplify(theta, X, Sp, X)
        scale = max(1.0, mc.op_norm(M))
        worst = min(worst, mc.min_eig(M) / scale)
    return float(worst)


# --- cb norm of a trilinear form -------------------------------------------------

def _ball_argmax(space, g, m):
    """Approximate maximiser of ``Re sum g[p,q,i] X[p,q,i]`` over the unit ball of ``M_m(space)``."""
    gram = np.einsum("iab,jab->ij", np.conj(space.basis), space.basis)
    G = np.conj(np.einsum("ij,pqj->pqi", np.linalg.inv(gram.T), g))
    conc = np.einsum("pqi,iab->paqb", G, space.basis).reshape(m * space.k, m * space.h)
    W = mc.polar_isometry(conc)
    blocks = W.reshape(m, space.k, m, space.h).transpose(0, 2, 1, 3)
    X = space.coords(blocks)
    nx = mc.op_norm(np.einsum("pqi,iab->paqb", X, space.basis).reshape(m * space.k, m * space.h))
    return X / nx if nx > 0 else X


def _level_norm(space, X):
    m, n, _ = X.shape
    return mc.op_norm(np.einsum("pqi,iab->paqb", X, space.basis).reshape(m * space.k, n * space.h))


def cb_interval(theta, level=None, restarts=6, seed=0, iters=200, eps_report=1e-6):
    """Lower bound for ``||theta||_cb`` by block-coordinate ascent of ``||theta^{(m)}(y^*, s, x)||``.

    Each coordinate step fixes two arguments and maximises the resulting linear
    functional over the unit ball of the third.  Starts include ``s = 1``,
    ``y = x``.  The upper end is the stabilisation estimate (heuristic).
    """
    E, S, r = theta.E, theta.S, theta.r
    if not np.any(theta.tensor):
        return NormInterval(0.0, 0.0, True)
    m = level or r
    best = 0.0
    unit = None
    if S.unit is not None:
        unit = np.zeros((m, m, S.dim), dtype=complex)
        for a in range(m):
            unit[a, a] = S.unit
    for t in range(restarts):
        rng = np.random.default_rng([seed, 3, t])
        X = mc.random_complex(rng, m, m, E.dim)
        X = X / _level_norm(E, X)
        Y = X.copy() if t % 2 == 0 else mc.random_complex(rng, m, m, E.dim)
        Y = Y / _level_norm(E, Y)
        if unit is not None and t % 3 != 2:
            Sc = unit / _level_norm(S, unit)
        else:
            Sc = mc.random_complex(rng, m, m, S.dim)
            Sc = Sc / _level_norm(S, Sc)
        val = mc.op_norm(amplify(theta, Y, Sc, X))
        for _ in range(iters):
            M = amplify(theta, Y, Sc, X)
            U, sv, Vh = np.linalg.svd(M)
            eta = U[:, 0].reshape(m, r)
            xi = np.conj(Vh[0]).reshape(m, r)
            # <M xi, eta> = sum conj(Y[a,p,i]) S[a,b,j] X[b,q,l] eta_p^* T_ijl xi_q
            w = np.einsum("pu,ijluv,qv->pqijl", np.conj(eta), theta.tensor, xi, optimize=True)
            gx = np.einsum("api,abj,pqijl->bql", np.conj(Y), Sc, w, optimize=True)
            X = _ball_argmax(E, gx, m)
            gs = np.einsum("api,bql,pqijl->abj", np.conj(Y), X, w, optimize=True)
            Sc = _ball_argmax(S, gs, m)
            gy = np.conj(np.einsum("abj,bql,pqijl->api", Sc, X, w, optimize=True))
            Y = _ball_argmax(E, gy, m)
            vn = mc.op_norm(amplify(theta, Y, Sc, X))
            if vn <= val * (1 + 1e-12):
                val = max(val, vn)
                break
            val = vn
        best = max(best, val)
    return NormInterval(best, best * (1 + eps_report), False, estimate=best)


# --- GNS factorisation ---------------------------------------------------------------

@dataclass(eq=False)
class GnsFactorisation:
    """``theta(y^*, s, x) = phi(y)^* psi(s) phi(x)`` on ``K = C^{K_dim}``.

    ``phi`` maps ``E`` into ``B(C^r, C^K)``; ``psi`` is unital and completely
    positive on ``S`` with values in ``M_K``.
    """

    theta: TrilinearForm
    phi: LinMap
    psi: LinMap
    gram: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def K_dim(self):
        return self.phi.out_shape[0]

    def reconstruct(self):
        return form_from_pair(self.theta.E, self.theta.S, self.phi.images, self.psi.images)

    def residual(self):
        if self.K_dim == 0:
            return float(np.max(np.abs(self.theta.tensor), initial=0.0))
        return float(np.max(np.abs(self.reconstruct().tensor - self.theta.tensor), initial=0.0))

    def unit_defect(self):
        S = self.theta.S
        if self.K_dim == 0:
            return 0.0
        U = np.tensordot(S.unit, self.psi.images, axes=(0, 0))
        return mc.op_norm(U - np.eye(self.K_dim))

    def psi_min_choi_eig(self):
        """Smallest eigenvalue of the Choi-type matrix of ``psi`` (full ``S``) or of
        ``psi`` on the trace-normalised positive part (general ``S``, via SDP)."""
        if self.K_dim == 0:
            return 0.0
        S = self.theta.S
        from .cpmaps import _is_full_algebra, choi_matrix, _sphi_minimum
        if _is_full_algebra(S):
            return mc.min_eig(choi_matrix(self.psi))
        val, _ = _sphi_minimum(self.psi)
        return float(val)

    def stinespring(self):
        """Isometry ``V`` and multiplicity with ``psi(s) = V^* (s ⊗ I) V`` (full-algebra ``S``)."""
        from .cpmaps import _is_full_algebra

        S = self.theta.S
        if not _is_full_algebra(S):
            raise UnsupportedSpace("Stinespring form is only assembled for full-algebra S")
        return _choi_kraus(self.psi)

    def check_balanced(self, A_space, tol=1e-10):
        """Largest defect of ``psi(s a) phi(x) = psi(s) phi(a x)`` on basis triples."""
        E, S = self.theta.E, self.theta.S
        worst = 0.0
        for a in A_space.basis:
            for j, c in enumerate(S.basis):
                ps_a = np.tensordot(S.coords(c @ a), self.psi.images, axes=(0, 0))
                for l, b in enumerate(E.basis):
                    phi_ab = np.tensordot(E.coords(a @ b), self.phi.images, axes=(0, 0))
                    lhs = ps_a @ self.phi.images[l]
                    rhs = self.psi.images[j] @ phi_ab
                    worst = max(worst, mc.op_norm(lhs - rhs))
        return worst

    def to_json(self):
        return {
            "K_dim": self.K_dim,
            "phi": self.phi.to_json(),
            "psi": self.psi.to_json(),
            "gram": mc.matrix_to_json(self.gram),
            "residual": self.residual(),
            "unit_defect": self.unit_defect(),
        }


def _choi_kraus(psi):
    """Kraus-type isometry for a u.c.p. map on a full matrix algebra."""
    from .cpmaps import StinespringUCP

    imgs = matrix_unit_images(psi)  # (k, k, K, K)
    k = imgs.shape[0]
    K = imgs.shape[2]
    C = np.transpose(imgs, (0, 2, 1, 3)).reshape(k * K, k * K)
    w, V = mc.eigh(C)
    keep = w > 1e-12 * max(w.max(initial=0), 1e-300)
    vecs = V[:, keep] * np.sqrt(w[keep])
    T = vecs.shape[1]
    L = np.conj(vecs.reshape(k, K, T))
    Vm = np.transpose(L, (0, 2, 1)).reshape(k * T, K)
    return StinespringUCP(psi.domain, Vm, T)


def gns_factorise(theta, rank_tol=1e-10, psd_tol=1e-9, check_cp=True):
    """Construct ``(phi, psi)`` with ``theta = phi^* . psi . phi``.

    The Gram form ``G`` on ``E ⊗ C^r`` is diagonalised as ``G = U D U^*`` keeping
    eigenvalues above ``rank_tol * ||G||``.  With ``J = D^{1/2} U^*``,
    ``phi(b_l) = J[:, block l]`` and ``psi(c_j) = D^{-1/2} U^* Lambda(c_j) U D^{-1/2}``.

    :raises NotPositive: when the Gram form or ``Lambda`` fails positivity
    """
    E, S, r = theta.E, theta.S, theta.r
    G = theta.gram()
    scale = max(1.0, mc.op_norm(G))
    if mc.op_norm(G - mc.adjoint(G)) > psd_tol * scale:
        raise NotPositive("Gram form is not hermitian")
    w, U = mc.eigh(G)
    if w[0] < -psd_tol * scale:
        raise NotPositive("Gram form has eigenvalue %.3g" % w[0])
    if check_cp:
        ok, _ = is_completely_positive_form(theta)
        if not ok:
            raise NotPositive("the slot map is not completely positive")
    gmax = max(w.max(initial=0.0), 0.0)
    keep = w > rank_tol * gmax if gmax > 0 else np.zeros_like(w, dtype=bool)
    Kd = int(np.sum(keep))
    if Kd == 0:
        phi = LinMap(E, np.zeros((E.dim, 0, r), dtype=complex))
        psi = LinMap(S, np.zeros((S.dim, 0, 0), dtype=complex))
        return GnsFactorisation(theta, phi, psi, G, {"rank": 0})
    D = w[keep]
    Uk = U[:, keep]
    J = np.sqrt(D)[:, None] * mc.adjoint(Uk)  # (K, dE r)
    phi_imgs = np.array([J[:, l * r:(l + 1) * r] for l in range(E.dim)])
    P = Uk / np.sqrt(D)
    psi_imgs = np.array([mc.adjoint(P) @ Lj @ P for Lj in theta.slot_images()])
    fac = GnsFactorisation(theta, LinMap(E, phi_imgs), LinMap(S, psi_imgs), G, {"rank": Kd})
    return fac


# --- decomposition of completely contractive forms ------------------------------------

@dataclass(eq=False)
class CcDecomposition:
    """``theta = sum_m weights[m] * parts[m]`` with each part completely positive."""

    parts: list
    weights: tuple
    phi1: LinMap
    phi2: LinMap
    rho_mult: int

    def reconstruct(self):
        total = self.parts[0].scale(self.weights[0])
        for w, p in zip(self.weights[1:], self.parts[1:]):
            total = total + p.scale(w)
        return total


def cc_decompose(theta):
    """Split ``theta`` into four completely positive forms.

    ``Lambda`` is extended by zero from ``S`` to the full algebra ``M_{kS}`` and
    factored as ``Lambda(s) = A^* (s ⊗ I_T) B``.  With ``phi1(b_i) = A[:, block i]``
    and ``phi2(b_l) = B[:, block l]`` (rescaled to equal norms) one has
    ``theta(y^*, s, x) = phi1(y)^* (s ⊗ I) phi2(x)``, and
    ``theta = sum_m i^{-m} theta_m`` with
    ``theta_m = 1/4 (phi1 + i^m phi2)^* (s ⊗ I) (phi1 + i^m phi2)``.
    """
    E, S, r = theta.E, theta.S, theta.r
    kS = S.k
    full = full_algebra(kS)
    weights = tuple(1j ** (-m) for m in range(4))
    dE = E.dim
    if not np.any(theta.tensor):
        zero = zero_form(E, S, r)
        z = LinMap(E, np.zeros((dE, 1, r), dtype=complex))
        return CcDecomposition([zero] * 4, weights, z, z, 1)
    # Lambda on the full algebra: orthogonal projection onto S, then Lambda
    coords = S.coords(full.basis)  # (kS^2, dS): projection coefficients
    Lam = np.einsum("fj,jab->fab", coords, theta.slot_images())
    A, B, T = wittstock_factors(LinMap(full, Lam))
    na, nb = mc.op_norm(A), mc.op_norm(B)
    if na > 0 and nb > 0:
        lam = np.sqrt(nb / na)
        A, B = A * lam, B / lam
    phi1 = np.array([A[:, i * r:(i + 1) * r] for i in range(dE)])
    phi2 = np.array([B[:, i * r:(i + 1) * r] for i in range(dE)])
    rho = np.array([np.kron(c, np.eye(T)) for c in S.basis])
    parts = []
    for m in range(4):
        F = phi1 + (1j ** m) * phi2
        parts.append(form_from_pair(E, S, F, rho).scale(0.25))
    return CcDecomposition(parts, weights, LinMap(E, phi1), LinMap(E, phi2), T)
