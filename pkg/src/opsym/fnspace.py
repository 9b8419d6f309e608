"""Function-space symmetrisation over a finite set ``Omega``.

``C(Omega)`` is realised as the diagonal algebra ``D_|Omega|``; an element of
``M_n(C(Omega)* ⊗_s C(Omega))`` is the same thing as a kernel
``u: Omega x Omega -> M_n``, and it is positive exactly when the block matrix
``(u(x, y))_{x, y}`` is positive semi-definite.
"""
from dataclasses import dataclass

import numpy as np

from . import matcore as mc
from .errors import EmptySupport, KernelIsPositive, NotHermitian, ParseError, UnsupportedSpace
from .opspace import diagonal_space, scalars
from .symnorm import TensorElement, dilation_pair


@dataclass(eq=False)
class KernelFunction:
    """Values ``values[x, y] = u(x, y)`` in ``M_n``; array shape ``(|Omega|, |Omega|, n, n)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 2:
            v = v[:, :, None, None]
        if v.ndim != 4 or v.shape[0] != v.shape[1] or v.shape[2] != v.shape[3]:
            raise ValueError("kernel values must have shape (|Omega|, |Omega|, n, n)")
        self.values = v

    @property
    def omega_size(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[2]

    def star(self):
        """``u^*(x, y) = u(y, x)^*``."""
        return KernelFunction(np.conj(np.transpose(self.values, (1, 0, 3, 2))))

    def hermitian_defect(self):
        return float(np.max(np.abs(self.values - self.star().values), initial=0.0))

    @property
    def is_hermitian(self):
        return self.hermitian_defect() <= 1e-10

    def block_matrix(self, points=None):
        """``(u(x_p, x_q))_{p, q}`` as an ``(N n) x (N n)`` matrix."""
        pts = list(range(self.omega_size)) if points is None else list(points)
        sub = self.values[np.ix_(pts, pts)]
        N, n = len(pts), self.n
        return np.transpose(sub, (0, 2, 1, 3)).reshape(N * n, N * n)

    def to_json(self):
        return {"omega": self.omega_size, "n": self.n,
                "blocks": [[mc.matrix_to_json(self.values[x, y]) for y in range(self.omega_size)]
                           for x in range(self.omega_size)]}


def kernel_from_json(obj):
    try:
        w = int(obj["omega"])
        n = int(obj["n"])
        blocks = obj["blocks"]
        if len(blocks) != w or any(len(row) != w for row in blocks):
            raise ValueError("blocks must be an omega x omega array")
        vals = np.array([[mc.matrix_from_json(b) for b in row] for row in blocks])
        return KernelFunction(vals.reshape(w, w, n, n))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError("malformed kernel JSON: %s" % exc) from exc


@dataclass
class DiscreteMeasure:
    support: list
    weights: np.ndarray

    def __post_init__(self):
        self.support = [int(s) for s in self.support]
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.support) != len(self.weights):
            raise ValueError("support and weights differ in length")
        if len(self.support) == 0:
            raise EmptySupport("measure has empty support")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support points must be distinct")

    @property
    def is_probability(self):
        return abs(float(np.sum(self.weights)) - 1) <= 1e-12

    def to_json(self):
        return {"support": list(self.support), "weights": [float(w) for w in self.weights]}


def measure_from_json(obj):
    try:
        return DiscreteMeasure(obj["support"], obj["weights"])
    except (KeyError, TypeError) as exc:
        raise ParseError("malformed measure JSON: %s" % exc) from exc


def uniform_measure(points):
    points = list(points)
    if not points:
        raise EmptySupport("measure has empty support")
    return DiscreteMeasure(points, np.full(len(points), 1.0 / len(points)))


def dirac(x):
    return DiscreteMeasure([x], [1.0])


# --- tensors <-> kernels --------------------------------------------------------

def _diagonal_values(E):
    """``vals[i, x] = b_i(x)`` for a space of diagonal matrices."""
    if E.k != E.h:
        raise UnsupportedSpace("expected a space of diagonal matrices")
    off = E.basis - np.einsum("ixx->ix", E.basis)[:, :, None] * np.eye(E.k)[None]
    if np.max(np.abs(off), initial=0.0) > 1e-12:
        raise UnsupportedSpace("expected a space of diagonal matrices")
    return np.einsum("ixx->ix", E.basis)


def kernel_of_tensor(u):
    """``u(x, y) = sum coeffs[p,q,i,0,l] conj(b_i(x)) b_l(y) c_0`` for ``E ⊆ D_|Omega|``, ``S = C``."""
    if u.S.dim != 1 or u.S.k != 1:
        raise UnsupportedSpace("the middle space must be the scalars")
    f = _diagonal_values(u.E)
    c0 = u.S.basis[0, 0, 0]
    vals = np.einsum("pqil,ix,ly->xypq", u.coeffs[:, :, :, 0, :], np.conj(f), f) * c0
    return KernelFunction(vals)


def tensor_of_kernel(K, E=None):
    """The element of ``M_n(D* ⊙ D)`` with kernel ``K`` (``E = D_|Omega|`` by default)."""
    w, n = K.omega_size, K.n
    if E is None:
        E = diagonal_space(w)
    f = _diagonal_values(E)
    if f.shape[1] != w:
        raise UnsupportedSpace("space and kernel disagree on |Omega|")
    # solve conj(f)^T A f = K(x, y) for coefficients A[i, l]
    finv = np.linalg.pinv(f)  # (w, d): f @ finv = I on range
    c = np.einsum("xi,yl,xypq->pqil", np.conj(finv), finv, K.values)
    u = TensorElement(E, scalars(), c[:, :, :, None, :])
    back = kernel_of_tensor(u)
    if np.max(np.abs(back.values - K.values), initial=0.0) > 1e-9:
        raise UnsupportedSpace("kernel is not in the range of the given space")
    return u


def gram_kernel(fs):
    """``u = sum_r f_r^* ⊗ f_r`` for functions ``f_r: Omega -> M_{1,n}``... as a kernel.

    :param fs: array ``(R, |Omega|, n)``; ``u(x, y)[p, q] = sum_r conj(f_r(x)_p) f_r(y)_q``
    """
    fs = np.asarray(fs, dtype=complex)
    if fs.ndim == 2:
        fs = fs[:, :, None]
    return KernelFunction(np.einsum("rxp,ryq->xypq", np.conj(fs), fs))


def diagonal_unit_kernel(omega, n=1):
    vals = np.zeros((omega, omega, n, n), dtype=complex)
    for x in range(omega):
        vals[x, x] = np.eye(n)
    return KernelFunction(vals)


# --- positivity --------------------------------------------------------------------

@dataclass
class KernelVerdict:
    positive: bool
    min_eig: float
    vector: np.ndarray = None

    def to_json(self):
        out = {"positive": self.positive, "min_eig": self.min_eig}
        if self.vector is not None:
            out["vector"] = {"re": self.vector.real.tolist(), "im": self.vector.imag.tolist()}
        return out


def is_positive_kernel(K, tol=mc.PSD_TOL):
    """Exact PSD decision for the full block matrix over ``Omega`` (Jacobi eigensolver).

    :raises NotHermitian: when ``K`` is not hermitian
    """
    if K.hermitian_defect() > 1e-9 * max(1.0, float(np.max(np.abs(K.values), initial=0.0))):
        raise NotHermitian("kernel is not hermitian")
    B = mc.hermitian_part(K.block_matrix())
    eig = mc.herm_eig(B)
    lam = float(eig.values[0])
    ok = lam >= -tol * max(1.0, mc.op_norm(B))
    return KernelVerdict(ok, lam, None if ok else eig.vectors[:, 0])


def integral_operator(K, mu):
    """Matrix of ``(T eta)(x) = sum_y u(x, y) eta(y) mu(y)`` in the weighted ``l^2(mu)`` picture.

    The returned matrix is ``D^{1/2} (u(x_p, x_q)) D^{1/2}`` with ``D`` the weights
    (unitarily equivalent to ``T`` on ``l^2(mu) ⊗ C^n``).

    :raises EmptySupport: for an empty support
    """
    if not mu.support:
        raise EmptySupport("measure has empty support")
    if max(mu.support) >= K.omega_size or min(mu.support) < 0:
        raise ValueError("support outside Omega")
    B = K.block_matrix(mu.support)
    d = np.repeat(np.sqrt(mu.weights), K.n)
    return d[:, None] * B * d[None, :]


def refutation_pair_from_kernel(K, tol=mc.PSD_TOL):
    """Admissible pair evaluating ``tensor_of_kernel(K)`` to a non-PSD matrix.

    ``mu`` is uniform on the points where the negative eigenvector lives and
    ``phi(delta_x) = sqrt(mu_x) e_x^T``, i.e. ``phi(z) = L z R`` with ``L`` the row
    of square-root weights and ``R`` the selection of the support.  Then
    ``eval(u) = D^{1/2} (u(x_p, x_q)) D^{1/2}``, which has the negative eigenvector.

    :return: ``(pair, measure, eigenvalue)``
    :raises KernelIsPositive: when ``K`` is positive
    """
    v = is_positive_kernel(K, tol)
    if v.positive:
        raise KernelIsPositive("kernel is positive semi-definite")
    w, n = K.omega_size, K.n
    vec = v.vector.reshape(w, n)
    mass = np.linalg.norm(vec, axis=1)
    pts = [x for x in range(w) if mass[x] > 1e-12 * mass.max()]
    mu = uniform_measure(pts)
    E = diagonal_space(w)
    L = np.zeros((1, w), dtype=complex)
    R = np.zeros((w, len(pts)), dtype=complex)
    for t, x in enumerate(pts):
        L[0, x] = np.sqrt(mu.weights[t])
        R[x, t] = 1
    pair = dilation_pair(E, scalars(), L, R, 1, np.eye(1), 1)
    lam = mc.min_eig(integral_operator(K, mu))
    return pair, mu, lam


def random_hermitian_kernel(rng, omega, n, positive=None):
    """Random hermitian kernel; ``positive=True`` gives a Gram kernel."""
    if positive:
        R = int(rng.integers(1, omega * n + 1))
        return gram_kernel(mc.random_complex(rng, R, omega, n))
    B = mc.random_hermitian(rng, omega * n)
    vals = B.reshape(omega, n, omega, n).transpose(0, 2, 1, 3)
    return KernelFunction(vals)
