"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  The Hermitian
eigensolver :func:`herm_eig` runs cyclic complex Jacobi sweeps with a fixed
sweep order; :func:`eigh` is the LAPACK fast path used inside optimisation
loops.
"""
from dataclasses import dataclass

import numpy as np

from .errors import NotHermitian, ParseError

RANK_TOL = 1e-12
PSD_TOL = 1e-9


def as_cmatrix(A):
    A = np.asarray(A, dtype=complex)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    elif A.ndim == 1:
        A = A.reshape(1, -1)
    return A


def adjoint(A):
    return np.conj(np.asarray(A)).T


def hermitian_part(M):
    M = np.asarray(M, dtype=complex)
    return (M + adjoint(M)) / 2


@dataclass
class HermEig:
    """Eigendecomposition ``A = V diag(values) V*`` with ascending values."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self):
        return (self.vectors * self.values) @ adjoint(self.vectors)


def _check_hermitian(A, tol=1e-9):
    A = as_cmatrix(A)
    if A.shape[0] != A.shape[1]:
        raise NotHermitian("matrix is not square: %s" % (A.shape,))
    scale = max(1.0, op_norm(A)) if A.size else 1.0
    if A.size and op_norm(A - adjoint(A)) > tol * scale:
        raise NotHermitian("matrix is not Hermitian (defect %.3g)" % op_norm(A - adjoint(A)))
    return A


def jacobi_eigh(A, tol=1e-12, max_sweeps=60):
    """Cyclic complex Jacobi eigensolver for a Hermitian matrix.

    Each rotation first removes the phase of the pivot ``a_pq`` and then applies
    the classical real Jacobi rotation, so the pivot is annihilated exactly.
    Sweeps visit pivots in row-major order until the off-diagonal Frobenius norm
    drops below ``tol * max(1, ||A||_F)``.

    :param A: Hermitian matrix
    :param tol: relative off-diagonal stopping threshold
    :param max_sweeps: hard cap on the number of sweeps
    :return: (values ascending, unitary eigenvector matrix)
    """
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    if n == 0:
        return np.zeros(0), V
    A = (A + adjoint(A)) / 2
    scale = max(1.0, np.linalg.norm(A))
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                g = abs(apq)
                if g <= 1e-300:
                    continue
                e = apq / g
                tau = (A[q, q].real - A[p, p].real) / (2 * g)
                if tau == 0:
                    t = 1.0
                else:
                    t = np.sign(tau) / (abs(tau) + np.sqrt(1 + tau * tau))
                c = 1 / np.sqrt(1 + t * t)
                s = t * c
                # J = diag(1, conj(e)) @ [[c, s], [-s, c]]
                j00, j01 = c, s
                j10, j11 = -np.conj(e) * s, np.conj(e) * c
                colp = A[:, p].copy()
                colq = A[:, q].copy()
                A[:, p] = colp * j00 + colq * j10
                A[:, q] = colp * j01 + colq * j11
                rowp = A[p, :].copy()
                rowq = A[q, :].copy()
                A[p, :] = np.conj(j00) * rowp + np.conj(j10) * rowq
                A[q, :] = np.conj(j01) * rowp + np.conj(j11) * rowq
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = vp * j00 + vq * j10
                V[:, q] = vp * j01 + vq * j11
    values = np.diag(A).real.copy()
    order = np.argsort(values, kind="stable")
    return values[order], V[:, order]


def herm_eig(A, method="jacobi"):
    """Eigendecomposition of a Hermitian matrix.

    :param A: Hermitian matrix; ``||A - A*|| <= 1e-9 max(1, ||A||)`` is required
    :param method: ``"jacobi"`` (default) or ``"lapack"``
    :raises NotHermitian: when the precondition fails
    """
    A = _check_hermitian(A)
    if method == "jacobi":
        values, vectors = jacobi_eigh(A)
    elif method == "lapack":
        values, vectors = eigh(A)
    else:
        raise ValueError("unknown method %r" % method)
    return HermEig(values=values, vectors=vectors)


def eigh(A):
    """LAPACK Hermitian eigendecomposition of the Hermitian part of ``A``."""
    return np.linalg.eigh(hermitian_part(A))


def eigvalsh(A):
    return np.linalg.eigvalsh(hermitian_part(A))


def svd(A, full_matrices=False):
    return np.linalg.svd(as_cmatrix(A), full_matrices=full_matrices)


def op_norm(A):
    A = np.asarray(A, dtype=complex)
    if A.size == 0:
        return 0.0
    if A.ndim < 2:
        A = as_cmatrix(A)
    return float(np.linalg.norm(A, 2))


def trace_norm(A):
    A = as_cmatrix(A)
    if A.size == 0:
        return 0.0
    return float(np.sum(np.linalg.svd(A, compute_uv=False)))


def rank(A, tol=RANK_TOL):
    A = as_cmatrix(A)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def min_eig(A):
    A = as_cmatrix(A)
    if A.size == 0:
        return 0.0
    return float(eigvalsh(A)[0])


def is_psd(A, tol=PSD_TOL):
    """PSD membership with the threshold ``min eig >= -tol * max(1, ||A||)``."""
    A = as_cmatrix(A)
    if A.size == 0:
        return True
    return min_eig(A) >= -tol * max(1.0, op_norm(A))


def psd_sqrt(P):
    """Square root of the PSD part of a Hermitian matrix (negative eigenvalues clipped)."""
    w, V = eigh(P)
    w = np.clip(w, 0, None)
    return (V * np.sqrt(w)) @ adjoint(V)


def psd_pinv_sqrt(P, tol=1e-10):
    """Moore-Penrose inverse square root of a PSD matrix on its numerical range."""
    w, V = eigh(P)
    cut = tol * max(w.max(initial=0.0), 0.0)
    inv = np.zeros_like(w)
    keep = w > cut
    inv[keep] = 1 / np.sqrt(w[keep])
    return (V * inv) @ adjoint(V)


def psd_clip(A):
    """Nearest PSD matrix in Frobenius norm (eigenvalue clipping at 0)."""
    w, V = eigh(A)
    return (V * np.clip(w, 0, None)) @ adjoint(V)


def psd_linear_max(M):
    """Maximise ``Re tr(T M)`` over ``0 <= T <= I``.

    The maximum is the sum of the positive eigenvalues of ``(M + M*)/2`` and is
    attained at the spectral projection onto the positive eigenspace.

    :return: (value, T)
    """
    M = as_cmatrix(M)
    w, V = eigh(M)
    pos = w > 0
    T = V[:, pos] @ adjoint(V[:, pos])
    return float(np.sum(w[pos])), T


def contract(A):
    """Scale ``A`` into the unit ball of the operator norm if needed."""
    nrm = op_norm(A)
    return A / nrm if nrm > 1 else A


def clip_singular_values(A, cap=1.0):
    """Project onto the operator-norm ball ``{||A|| <= cap}`` (Frobenius-nearest)."""
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    return (U * np.minimum(s, cap)) @ Vh


def polar_isometry(A):
    """Isometric/unitary factor ``U V*`` of the SVD of ``A``."""
    U, _, Vh = np.linalg.svd(as_cmatrix(A), full_matrices=False)
    return U @ Vh


def random_complex(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_contraction(rng, rows, cols):
    """Complex Gaussian matrix scaled into the unit ball when its norm exceeds one."""
    return contract(random_complex(rng, rows, cols))


def random_isometry(rng, rows, cols):
    """Random isometry ``rows x cols`` (``rows >= cols``) via QR of a Gaussian matrix."""
    if rows < cols:
        raise ValueError("isometry needs rows >= cols")
    Q, R = np.linalg.qr(random_complex(rng, rows, cols))
    d = np.diag(R)
    phases = np.where(np.abs(d) > 0, d / np.abs(d), 1)
    return Q * phases


def random_hermitian(rng, n):
    G = random_complex(rng, n, n)
    return (G + adjoint(G)) / 2


def random_unitary(rng, n):
    return random_isometry(rng, n, n)


def matrix_unit(n, i, j, m=None):
    E = np.zeros((n, n if m is None else m), dtype=complex)
    E[i, j] = 1
    return E


def block(blocks):
    """Assemble a block matrix from a nested list of equally shaped blocks."""
    return np.block([[np.asarray(b, dtype=complex) for b in row] for row in blocks])


# --- JSON -----------------------------------------------------------------

def matrix_to_json(A):
    """Encode as ``{"rows", "cols", "re", "im"}``; Python float repr is round-trip exact."""
    A = as_cmatrix(A)
    return {
        "rows": int(A.shape[0]),
        "cols": int(A.shape[1]),
        "re": [[float(v) for v in row] for row in A.real],
        "im": [[float(v) for v in row] for row in A.imag],
    }


def matrix_from_json(obj):
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        re = np.asarray(obj["re"], dtype=float).reshape(rows, cols)
        im = np.asarray(obj.get("im", np.zeros((rows, cols))), dtype=float).reshape(rows, cols)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError("malformed matrix JSON: %s" % exc) from exc
    return re + 1j * im
