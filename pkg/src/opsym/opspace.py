"""Concrete operator spaces ``E ⊆ B(C^h, C^k)`` and their matrix levels.

A space is a list of linearly independent ``k x h`` basis matrices.  An
element of ``M_{m,n}(E)`` is stored twice: as an ``(m, n, dim E)`` array of
basis coefficients (used for equality and tensor bookkeeping) and as the
concrete ``(m k) x (n h)`` matrix (used for norms).
"""
from dataclasses import dataclass, field

import numpy as np

from . import matcore as mc
from .errors import InconsistentElement, ParseError, ShapeMismatch, UnsupportedSpace


@dataclass(eq=False)
class ConcreteOpSpace:
    """Subspace of ``B(C^h, C^k)`` spanned by ``basis`` (array ``(d, k, h)``).

    :param unit: basis coefficients of the identity when the space is an operator system
    """

    basis: np.ndarray
    name: str = ""
    unit: np.ndarray = None
    is_subalgebra: bool = False
    is_tro: bool = False
    _pinv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=complex)
        if B.ndim == 2:
            B = B[None]
        if B.ndim != 3:
            raise ShapeMismatch("basis must be a list of matrices")
        self.basis = B
        d = B.shape[0]
        vecs = B.reshape(d, -1).T
        if d and mc.rank(vecs, 1e-10) < d:
            raise ValueError("basis of %s is linearly dependent" % (self.name or "space"))
        self._pinv = np.linalg.pinv(vecs) if d else np.zeros((0, vecs.shape[0]))
        if self.unit is not None:
            self.unit = np.asarray(self.unit, dtype=complex)
            if self.h != self.k:
                raise ValueError("an operator system must act on a single space")
            if mc.op_norm(self.element(self.unit) - np.eye(self.k)) > 1e-10:
                raise ValueError("unit coefficients do not reproduce the identity")

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def k(self):
        return self.basis.shape[1]

    @property
    def h(self):
        return self.basis.shape[2]

    @property
    def is_system(self):
        return self.unit is not None

    def element(self, coeffs):
        """Concrete matrix ``sum_i coeffs[i] basis[i]``."""
        return np.tensordot(np.asarray(coeffs, dtype=complex), self.basis, axes=(-1, 0))

    def coords(self, A):
        """Least-squares basis coefficients of a matrix (or a stack of matrices)."""
        A = np.asarray(A, dtype=complex)
        if A.shape[-2:] != (self.k, self.h):
            raise ShapeMismatch("expected %dx%d matrices, got %s" % (self.k, self.h, A.shape))
        flat = A.reshape(A.shape[:-2] + (-1,))
        return flat @ self._pinv.T

    def project_onto(self, A):
        """Return ``(coeffs, residual)`` with ``residual = ||A - P_E A||_F``."""
        A = np.asarray(A, dtype=complex)
        c = self.coords(A)
        res = float(np.linalg.norm(A - self.element(c)))
        return c, res

    def contains(self, A, tol=1e-9):
        return self.project_onto(A)[1] <= tol * max(1.0, np.linalg.norm(A))

    def adjoint_coeff_matrix(self):
        """Matrix ``Q`` with ``basis[j]^* = sum_j' Q[j', j] basis[j']`` (requires adjoint-closure)."""
        adj = np.conj(np.swapaxes(self.basis, 1, 2))
        c = self.coords(adj)
        if np.linalg.norm(adj - self.element(c.T)) > 1e-9:
            raise UnsupportedSpace("space is not closed under adjoints")
        return c.T

    def is_selfadjoint(self):
        if self.h != self.k:
            return False
        adj = np.conj(np.swapaxes(self.basis, 1, 2))
        return all(self.contains(a, 1e-10) for a in adj)

    def unit_matrix(self):
        if self.unit is None:
            raise UnsupportedSpace("space has no unit")
        return self.element(self.unit)

    def level(self, coeffs):
        return LevelElement(self, np.asarray(coeffs, dtype=complex))

    def level_from_blocks(self, blocks):
        """Build a :class:`LevelElement` from an ``m x n`` nested list of concrete blocks."""
        arr = np.asarray(blocks, dtype=complex)
        if arr.ndim == 2:
            arr = arr[None, None]
        c, res = self.project_onto(arr)
        if res > 1e-9 * max(1.0, np.linalg.norm(arr)):
            raise InconsistentElement("blocks do not lie in the space (residual %.3g)" % res)
        return LevelElement(self, c)

    def random_element(self, rng, m=1, n=1):
        return LevelElement(self, mc.random_complex(rng, m, n, self.dim))

    def to_json(self):
        return {
            "h": self.h,
            "k": self.k,
            "name": self.name,
            "basis": [mc.matrix_to_json(b) for b in self.basis],
            "tags": {
                "unit": None if self.unit is None else [[float(z.real), float(z.imag)] for z in self.unit],
                "is_subalgebra": bool(self.is_subalgebra),
                "is_tro": bool(self.is_tro),
            },
        }

    def __repr__(self):
        return "ConcreteOpSpace(%s, dim=%d, %dx%d)" % (self.name or "?", self.dim, self.k, self.h)


def space_from_json(obj):
    try:
        basis = np.array([mc.matrix_from_json(b) for b in obj["basis"]])
        tags = obj.get("tags", {}) or {}
        unit = tags.get("unit")
        if unit is not None:
            unit = np.array([complex(a, b) for a, b in unit])
        if basis.shape[1:] != (int(obj["k"]), int(obj["h"])):
            raise ParseError("basis shape does not match h, k")
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError("malformed space JSON: %s" % exc) from exc
    return ConcreteOpSpace(basis, name=obj.get("name", ""), unit=unit,
                           is_subalgebra=bool(tags.get("is_subalgebra", False)),
                           is_tro=bool(tags.get("is_tro", False)))


@dataclass(eq=False)
class LevelElement:
    """Element of ``M_{m,n}(E)``: ``coeffs[p, q, i]`` is the coefficient of ``basis[i]`` in block ``(p, q)``."""

    space: ConcreteOpSpace
    coeffs: np.ndarray
    concrete: np.ndarray = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == 1:
            c = c[None, None]
        if c.ndim != 3 or c.shape[2] != self.space.dim:
            raise ShapeMismatch("coefficients must have shape (m, n, dim E)")
        self.coeffs = c
        built = assemble(self.space, c)
        if self.concrete is None:
            self.concrete = built
        else:
            self.concrete = np.asarray(self.concrete, dtype=complex)
            if self.concrete.shape != built.shape or mc.op_norm(self.concrete - built) > 1e-10 * max(1.0, mc.op_norm(built)):
                raise InconsistentElement("concrete matrix does not match coefficients")

    @property
    def m(self):
        return self.coeffs.shape[0]

    @property
    def n(self):
        return self.coeffs.shape[1]

    def block(self, p, q):
        return self.space.element(self.coeffs[p, q])

    def star(self):
        """Adjoint, an element of ``M_{n,m}(E*)``."""
        adj = adjoint_space(self.space)
        return LevelElement(adj, np.conj(np.swapaxes(self.coeffs, 0, 1)))


def assemble(space, coeffs):
    """Concrete ``(m k) x (n h)`` matrix of a coefficient array ``(m, n, d)``."""
    m, n, _ = coeffs.shape
    blocks = np.einsum("pqi,iab->paqb", coeffs, space.basis)
    return blocks.reshape(m * space.k, n * space.h)


def level_norm(x):
    """Operator norm of the concrete matrix of ``x``."""
    if mc.op_norm(x.concrete - assemble(x.space, x.coeffs)) > 1e-10 * max(1.0, mc.op_norm(x.concrete)):
        raise InconsistentElement("element is inconsistent")
    return mc.op_norm(x.concrete)


def project_onto(E, A):
    return E.project_onto(A)


_ADJOINT_CACHE = {}


def adjoint_space(E):
    """The space ``E* = {x^* : x in E}`` with basis ``basis[i]^*``."""
    key = id(E)
    cached = _ADJOINT_CACHE.get(key)
    if cached is not None and cached[0] is E:
        return cached[1]
    name = E.name[:-1] if E.name.endswith("*") else (E.name + "*" if E.name else "")
    unit = None
    if E.unit is not None:
        unit = np.conj(E.unit)
    adj = ConcreteOpSpace(np.conj(np.swapaxes(E.basis, 1, 2)), name=name, unit=unit,
                          is_subalgebra=E.is_subalgebra, is_tro=E.is_tro)
    _ADJOINT_CACHE[key] = (E, adj)
    return adj


# --- standard constructors ---------------------------------------------------

def _units(k, h, pairs):
    out = []
    for a, b in pairs:
        E = np.zeros((k, h), dtype=complex)
        E[a, b] = 1
        out.append(E)
    return np.array(out)


def row_space(n):
    """``R_n ⊆ B(C^n, C)``, basis ``e_j^T``."""
    return ConcreteOpSpace(_units(1, n, [(0, j) for j in range(n)]), name="R%d" % n, is_tro=True)


def column_space(n):
    """``C_n ⊆ B(C, C^n)``, basis ``e_j``."""
    return ConcreteOpSpace(_units(n, 1, [(j, 0) for j in range(n)]), name="C%d" % n, is_tro=True)


def diagonal_space(n):
    """``D_n ⊆ M_n``, basis ``E_jj``; an operator system and a C*-algebra."""
    return ConcreteOpSpace(_units(n, n, [(j, j) for j in range(n)]), name="D%d" % n,
                           unit=np.ones(n), is_subalgebra=True, is_tro=True)


def rect_space(k, h):
    """``M_{k,h} = B(C^h, C^k)`` with matrix-unit basis."""
    return ConcreteOpSpace(_units(k, h, [(a, b) for a in range(k) for b in range(h)]),
                           name="M%dx%d" % (k, h), is_tro=True)


def full_algebra(n):
    """``M_n`` as an operator system with matrix-unit basis (row-major)."""
    unit = np.eye(n).reshape(-1).astype(complex)
    return ConcreteOpSpace(_units(n, n, [(a, b) for a in range(n) for b in range(n)]),
                           name="M%d" % n, unit=unit, is_subalgebra=True, is_tro=True)


def scalars():
    """``C = B(C)``."""
    return ConcreteOpSpace(np.ones((1, 1, 1)), name="C", unit=np.ones(1), is_subalgebra=True, is_tro=True)


def span(matrices, name="", system=False):
    """Space spanned by the given matrices (taken as basis; must be independent).

    :param system: when true, locate the identity in the span and record it as unit
    """
    B = np.asarray(matrices, dtype=complex)
    E = ConcreteOpSpace(B, name=name)
    if system:
        if E.h != E.k:
            raise UnsupportedSpace("an operator system must be square")
        c, res = E.project_onto(np.eye(E.k))
        if res > 1e-10:
            raise UnsupportedSpace("identity is not in the span")
        if not E.is_selfadjoint():
            raise UnsupportedSpace("span is not closed under adjoints")
        E.unit = c
    return E


def direct_sum_algebra(*sizes):
    """Block-diagonal algebra ``M_{n1} ⊕ ... ⊕ M_{nr}`` as an operator system."""
    N = sum(sizes)
    pairs = []
    off = 0
    for s in sizes:
        pairs += [(off + a, off + b) for a in range(s) for b in range(s)]
        off += s
    B = _units(N, N, pairs)
    E = ConcreteOpSpace(B, name="+".join("M%d" % s for s in sizes), is_subalgebra=True, is_tro=True)
    E.unit = E.coords(np.eye(N))
    return E


def builtin_space(name):
    """Look up ``R<n>``, ``C<n>``, ``D<n>``, ``M<n>``, ``M<k>x<h>`` or ``C``."""
    import re

    if name in ("C", "scalars"):
        return scalars()
    m = re.fullmatch(r"([RCDM])(\d+)(?:x(\d+))?", name)
    if not m:
        raise ParseError("unknown builtin space %r" % name)
    kind, a, b = m.group(1), int(m.group(2)), m.group(3)
    if b is not None:
        if kind != "M":
            raise ParseError("only M<k>x<h> takes two sizes")
        return rect_space(a, int(b))
    return {"R": row_space, "C": column_space, "D": diagonal_space, "M": full_algebra}[kind](a)
