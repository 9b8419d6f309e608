"""Finite-dimensional duals and the pairing ``iota: E^{d*} ⊗_s E^d -> (E* ⊗_s E)^d``.

An element ``Phi`` of ``M_n(E^d)`` is stored by its weights
``W[p, q, i] = Phi_pq(b_i)``; its norm is ``||F_Phi||_cb`` for the map
``F_Phi: E -> M_n``, ``F_Phi(x) = (Phi_pq(x))``.
"""
from dataclasses import dataclass

import numpy as np

from . import matcore as mc
from .certificates import NormInterval
from .cpmaps import LinMap, cb_norm
from .errors import ShapeMismatch, UnsupportedSpace
from .opspace import ConcreteOpSpace, adjoint_space, column_space, scalars
from .symnorm import TensorElement, sym_norm


@dataclass(eq=False)
class DualSpace:
    """``E^d`` with the dual basis ``f_i(b_j) = delta_ij``.

    ``functionals[i]`` is the coefficient row of ``f_i`` against vectorised
    matrices, so ``f_i(x) = functionals[i] @ vec(x)``.
    """

    base: ConcreteOpSpace
    functionals: np.ndarray

    @property
    def dim(self):
        return self.base.dim

    def pairing_matrix(self):
        """``P[i, j] = f_i(b_j)``."""
        return self.functionals @ self.base.basis.reshape(self.dim, -1).T

    def as_map(self, W):
        """``F_Phi`` for weights ``W (n, n, dim)``."""
        W = np.asarray(W, dtype=complex)
        if W.ndim == 1:
            W = W[None, None]
        return LinMap(self.base, np.transpose(W, (2, 0, 1)))

    def evaluate(self, W, x):
        """``(Phi_pq(x))`` for a concrete ``x`` in ``E``."""
        c = self.base.coords(np.asarray(x, dtype=complex))
        return np.tensordot(np.asarray(W, dtype=complex), c, axes=(2, 0))

    def norm(self, W, restarts=8, seed=0):
        """``||Phi||_n = ||F_Phi||_cb`` as an interval."""
        return cb_norm(self.as_map(W), restarts=restarts, seed=seed)


def dual_space(E):
    flat = E.basis.reshape(E.dim, -1)
    gram = np.conj(flat) @ flat.T
    # f_i(x) = sum_j G^{-1}[i, j] <x, b_j>  so that f_i(b_l) = delta_il
    funcs = np.linalg.inv(gram.T) @ np.conj(flat)
    return DualSpace(E, funcs)


@dataclass(eq=False)
class DStarMap:
    """``(E^d)^* -> (E^*)^d``, ``Phi^* -> (x^* -> conj(Phi(x)))``, on weights."""

    E: ConcreteOpSpace
    Estar: ConcreteOpSpace

    def __call__(self, W):
        """Weights of ``Phi^*`` (adjoint matrix of functionals) read on the basis ``b_i^*``."""
        W = np.asarray(W, dtype=complex)
        return np.conj(np.transpose(W, (1, 0, 2)))

    def inverse(self, V):
        V = np.asarray(V, dtype=complex)
        return np.conj(np.transpose(V, (1, 0, 2)))


def dstar_identify(E):
    return DStarMap(E, adjoint_space(E))


def iota_values(Psi, Phi, E):
    """Block values of ``iota(Psi^* ⊙ Phi)`` on the basis: ``F_Psi(b_i)^* F_Phi(b_l)``.

    :param Psi, Phi: weights ``(k, k, dim E)``
    :return: array ``(dim E, dim E, k, k)``
    """
    Psi = np.asarray(Psi, dtype=complex)
    Phi = np.asarray(Phi, dtype=complex)
    if Psi.shape != Phi.shape or Psi.shape[2] != E.dim:
        raise ShapeMismatch("functionals must have matching level and dimension")
    # F(b_i) = W[:, :, i]
    return np.einsum("rpi,rql->ilpq", np.conj(Psi), Phi)


def iota_apply(Psi, Phi, u):
    """``iota(Psi^* ⊙ Phi)^{(n)}(u)`` for ``u`` in ``M_n(E* ⊙ E)`` (``S = C``)."""
    if u.S.dim != 1:
        raise UnsupportedSpace("the pairing acts on E* ⊙ E")
    vals = iota_values(Psi, Phi, u.E) * u.S.basis[0, 0, 0]
    k = vals.shape[2]
    n = u.n
    blocks = np.einsum("pqil,ilab->paqb", u.coeffs[:, :, :, 0, :], vals)
    return blocks.reshape(n * k, n * k)


def pairing_matrix(E):
    """Matrix of ``f_i^* ⊗ f_l -> iota(f_i^* ⊗ f_l)`` against the basis ``b_a^* ⊗ b_b``."""
    D = dual_space(E)
    d = E.dim
    P = D.pairing_matrix()  # f_i(b_a)
    # iota(f_i^* ⊗ f_l)(b_a^* ⊗ b_b) = conj(f_i(b_a)) f_l(b_b)
    return np.einsum("ia,lb->ilab", np.conj(P), P).reshape(d * d, d * d)


def positivity_transfer(E, samples=100, seed=0, k_max=2, n_max=2):
    """Smallest normalised eigenvalue of ``iota(Phi^* ⊙ Phi)^{(n)}(u)`` over planted positives.

    ``Phi`` is a random element of ``M_k(E^d)`` and ``u = x^* ⊙ s ⊙ x`` with
    ``s >= 0`` scalar, a planted positive of ``M_n(E* ⊙ E)``.
    """
    from .symnorm import from_blocks

    rng = np.random.default_rng(seed)
    C = scalars()
    worst = np.inf
    for t in range(samples):
        k = 1 + t % k_max
        n = 1 + (t // k_max) % n_max
        K = int(rng.integers(1, 4))
        Phi = mc.random_complex(rng, k, k, E.dim)
        X = mc.random_complex(rng, K, n, E.dim)
        G = mc.random_complex(rng, K, K)
        s = (G @ mc.adjoint(G))[:, :, None]
        u = from_blocks(E, C, [(X, s, X)], n)
        M = iota_apply(Phi, Phi, u)
        worst = min(worst, mc.min_eig(M) / max(1.0, mc.op_norm(M)))
    return float(worst)


# --- non-isometry of iota ------------------------------------------------------------

@dataclass
class IotaGap:
    coefficients: np.ndarray
    sym_interval: NormInterval
    iota_norm: float

    @property
    def gap(self):
        return self.iota_norm - self.sym_interval.upper

    def to_json(self):
        return {"coefficients": mc.matrix_to_json(self.coefficients), "sym": self.sym_interval.to_json(),
                "iota_norm": self.iota_norm, "gap": self.gap}


def _row_dual_realisation(E):
    """Concrete ``E^d`` for a row space ``E ⊆ M_{1,n}`` (it is the column space ``C_n``)."""
    if E.k != 1:
        raise UnsupportedSpace("gap search is implemented for row spaces (E ⊆ M_{1,n})")
    return column_space(E.h)


def iota_norm(E, Wc):
    """``||iota(w)||`` for ``w = sum Wc[i, l] f_i^* ⊗ f_l`` and a row space ``E = R_n``.

    ``E* ⊗_s E = M_n`` through ``y^* ⊗ x -> y^* x``, so the dual norm is the trace
    norm of the density ``Wc``.
    """
    if E.k != 1 or E.dim != E.h:
        raise UnsupportedSpace("exact dual norm needs the full row space")
    return mc.trace_norm(np.asarray(Wc, dtype=complex))


def iota_gap_search(E, samples=20, seed=0, restarts=8):
    """Look for ``w`` in ``E^{d*} ⊗_s E^d`` with ``||w||_s < ||iota(w)||``.

    Candidates: ``diag(1, -1, ...)`` and random hermitian coefficient matrices.
    ``||w||_s`` is bracketed in the concrete realisation ``E^d = C_n``.

    :return: the candidate with the largest certified gap
    """
    D = _row_dual_realisation(E)
    C = scalars()
    n = E.h
    rng = np.random.default_rng(seed)
    cands = [np.diag([1.0 if i % 2 == 0 else -1.0 for i in range(n)]).astype(complex)]
    for _ in range(samples):
        cands.append(mc.random_hermitian(rng, n))
    best = None
    for Wc in cands:
        Wc = Wc / mc.op_norm(Wc)
        # w = sum Wc[i,l] d_i^* ⊗ d_l with d_i the dual basis realised in C_n
        u = TensorElement(D, C, np.asarray(Wc, dtype=complex)[None, None, :, None, :])
        iv = sym_norm(u, restarts=restarts)
        g = IotaGap(Wc, iv, iota_norm(E, Wc))
        if best is None or g.gap > best.gap:
            best = g
    return best
