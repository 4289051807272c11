"""Dense complex linear algebra for bipartite operators.

Every composite index follows the A-major convention (a, b) -> a * d_b + b,
which is the ordering numpy.kron produces. Matrices are plain complex
numpy arrays; the only wrapped type is `BipartiteUnitary`, which pins the
local dimensions next to the matrix.
"""

import logging
from typing import List, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from ._types import Side
from .exceptions import NonCommutingFamilyError, ValidationError

logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int], np.random.Generator, None]

CLUSTER_TOL = 1e-8


def default_rng(seed: SeedLike = None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def unitarity_deviation(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=complex)
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[1]))))


def hermiticity_deviation(h: np.ndarray) -> float:
    h = np.asarray(h, dtype=complex)
    return float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0


def hs_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, "fro"))


class BipartiteUnitary:
    """A unitary on C^d_a (x) C^d_b together with its local dimensions."""

    d_a: int
    d_b: int
    matrix: np.ndarray

    def __init__(self, matrix: np.ndarray, d_a: int, d_b: int, tol_unitary: float = 1e-10):
        if d_a < 1 or d_b < 1:
            raise ValidationError(f"local dimensions must be positive, got ({d_a}, {d_b})")

        m = np.array(matrix, dtype=complex)
        dim = d_a * d_b
        if m.shape != (dim, dim):
            raise ValidationError(
                f"expected a {dim}x{dim} matrix for d_a={d_a}, d_b={d_b}",
                err={"shape": list(m.shape)},
            )
        if not np.all(np.isfinite(m)):
            raise ValidationError("matrix entries must be finite")

        deviation = unitarity_deviation(m)
        if deviation > tol_unitary:
            raise ValidationError(
                f"matrix is not unitary: max |U^dag U - I| = {deviation:.3e}",
                err={"deviation": deviation, "tol_unitary": tol_unitary},
            )

        m.setflags(write=False)
        self.matrix = m
        self.d_a = d_a
        self.d_b = d_b

    @property
    def dim(self) -> int:
        return self.d_a * self.d_b

    def local_dim(self, side: Side) -> int:
        return self.d_a if side == "A" else self.d_b

    def swapped(self) -> "BipartiteUnitary":
        """The same operator seen from H_B (x) H_A."""
        s = swap_operator(self.d_a, self.d_b)
        return BipartiteUnitary(s @ self.matrix @ s.T, self.d_b, self.d_a, tol_unitary=1e-8)

    def sandwich(
        self, a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray
    ) -> "BipartiteUnitary":
        """(a (x) b) U (c (x) d)."""
        m = kron(a, b) @ self.matrix @ kron(c, d)
        return BipartiteUnitary(m, self.d_a, self.d_b, tol_unitary=1e-8)

    def __repr__(self) -> str:
        return f"BipartiteUnitary(d_a={self.d_a}, d_b={self.d_b})"


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(A (x) B)[(i,k),(j,l)] = A[i,j] * B[k,l]."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def swap_operator(d_a: int, d_b: int) -> np.ndarray:
    """Permutation |a, b> -> |b, a> from H_A (x) H_B to H_B (x) H_A."""
    s = np.zeros((d_a * d_b, d_a * d_b))
    for a in range(d_a):
        for b in range(d_b):
            s[b * d_a + a, a * d_b + b] = 1.0
    return s


def partial_trace(rho: np.ndarray, d_a: int, d_b: int, side: Side) -> np.ndarray:
    """Trace out subsystem `side` of an operator on H_A (x) H_B."""
    rho = np.asarray(rho, dtype=complex)
    dim = d_a * d_b
    if rho.shape != (dim, dim):
        raise ValidationError(
            f"expected a {dim}x{dim} operator for d_a={d_a}, d_b={d_b}",
            err={"shape": list(rho.shape)},
        )
    r = rho.reshape(d_a, d_b, d_a, d_b)
    if side == "B":
        return np.einsum("ibjb->ij", r)
    return np.einsum("aiaj->ij", r)


def reshuffle(u: BipartiteUnitary) -> np.ndarray:
    """Realignment R[(a, a'), (b, b')] = U[(a, b), (a', b')].

    R has shape d_a^2 x d_b^2 and its singular value decomposition is the
    operator Schmidt decomposition of U.
    """
    d_a, d_b = u.d_a, u.d_b
    return u.matrix.reshape(d_a, d_b, d_a, d_b).transpose(0, 2, 1, 3).reshape(d_a**2, d_b**2)


def unshuffle(r: np.ndarray, d_a: int, d_b: int) -> np.ndarray:
    r = np.asarray(r, dtype=complex)
    if r.shape != (d_a**2, d_b**2):
        raise ValidationError(f"expected a {d_a**2}x{d_b**2} realigned matrix")
    return r.reshape(d_a, d_a, d_b, d_b).transpose(0, 2, 1, 3).reshape(d_a * d_b, d_a * d_b)


def hermitian_eig(h: np.ndarray, tol: float = 1e-10) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in ascending order and the matching orthonormal eigenvectors (columns).

    Raises:
        ValidationError: If `h` is not Hermitian within `tol` (relative to its largest entry)
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError("hermitian_eig expects a square matrix", err={"shape": list(h.shape)})

    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    deviation = hermiticity_deviation(h)
    if deviation > tol * scale:
        raise ValidationError(
            f"matrix is not Hermitian: max |H - H^dag| = {deviation:.3e}",
            err={"deviation": deviation},
        )
    return np.linalg.eigh((h + h.conj().T) / 2)


def svd(m: np.ndarray, full_matrices: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (u, s, v) with M = sum_k s_k u_k v_k^dag and s descending.

    Tries the divide-and-conquer driver first, falling back to the more
    stable gesvd driver.
    """
    m = np.asarray(m, dtype=complex)
    try:
        u, s, vh = scipy.linalg.svd(m, full_matrices=full_matrices, lapack_driver="gesdd")
    except np.linalg.LinAlgError as e:
        logger.warning("gesdd failed (%s), falling back to gesvd driver", e)
        u, s, vh = scipy.linalg.svd(m, full_matrices=full_matrices, lapack_driver="gesvd")
    return u, s, vh.conj().T


def expm_hermitian(h: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(i t H) for Hermitian H."""
    w, v = hermitian_eig(h)
    return (v * np.exp(1j * t * w)) @ v.conj().T


def random_unitary(d: int, seed: SeedLike = None) -> np.ndarray:
    """Haar-random d x d unitary: QR of a complex Ginibre matrix with the phase fix."""
    if d < 1:
        raise ValidationError(f"dimension must be positive, got {d}")
    rng = default_rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def random_state(d: int, seed: SeedLike = None) -> np.ndarray:
    """Haar-random unit vector in C^d."""
    rng = default_rng(seed)
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _cluster(values: np.ndarray, threshold: float) -> List[np.ndarray]:
    """Group ascending eigenvalues separated by gaps no larger than `threshold`."""
    clusters = [[0]]
    for i in range(1, len(values)):
        if values[i] - values[i - 1] > threshold:
            clusters.append([i])
        else:
            clusters[-1].append(i)
    return [np.asarray(c) for c in clusters]


def _is_scalar(h: np.ndarray, tol: float) -> bool:
    diag = np.real(np.diag(h))
    off = h - np.diag(np.diag(h))
    spread = float(np.max(np.abs(diag - diag.mean()))) if diag.size else 0.0
    return spread <= tol and (off.size == 0 or float(np.max(np.abs(off))) <= tol)


def _split(
    q: np.ndarray,
    family: List[np.ndarray],
    rng: np.random.Generator,
    tol: float,
    depth: int,
) -> np.ndarray:
    if q.shape[1] == 1:
        return q

    restricted = [q.conj().T @ h @ q for h in family]
    if all(_is_scalar(r, tol) for r in restricted) or depth > q.shape[0] + 2:
        return q

    for _ in range(3):
        weights = rng.standard_normal(len(restricted))
        combo = sum(w * r for w, r in zip(weights, restricted))
        combo = (combo + combo.conj().T) / 2
        values, vectors = np.linalg.eigh(combo)
        threshold = CLUSTER_TOL * max(np.linalg.norm(combo, 2), np.finfo(float).tiny)
        clusters = _cluster(values, threshold)
        if len(clusters) > 1:
            break
    else:
        # every combination stays degenerate: leave the block to the final sweep
        return q

    return np.hstack(
        [_split(q @ vectors[:, idx], family, rng, tol, depth + 1) for idx in clusters]
    )


def joint_diagonalize(
    family: Sequence[np.ndarray], tol_commute: float = 1e-8, seed: SeedLike = None
) -> np.ndarray:
    """Common orthonormal eigenbasis (columns) of a commuting Hermitian family.

    Recursive eigenspace splitting: diagonalize a random real combination,
    split by eigenvalue gaps, and recurse inside degenerate clusters with fresh
    weights until every member is scalar on every block. A verification sweep
    checks the off-diagonal mass of every member in the returned basis.

    Raises:
        ValidationError: If the family is empty, ragged or not Hermitian
        NonCommutingFamilyError: If two members do not commute, or the sweep fails
    """
    members = [np.asarray(h, dtype=complex) for h in family]
    if not members:
        raise ValidationError("joint_diagonalize needs at least one matrix")
    n = members[0].shape[0]
    for h in members:
        if h.shape != (n, n):
            raise ValidationError("family members must be square and of equal size")

    scale = max(1.0, max(float(np.linalg.norm(h, 2)) for h in members))
    for idx, h in enumerate(members):
        deviation = hermiticity_deviation(h)
        if deviation > tol_commute * scale:
            raise ValidationError(
                f"family member {idx} is not Hermitian", err={"deviation": deviation}
            )

    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            c = members[i] @ members[j] - members[j] @ members[i]
            norm = float(np.max(np.abs(c)))
            if norm > tol_commute * scale**2:
                raise NonCommutingFamilyError(
                    f"members {i} and {j} do not commute: max |[H_i, H_j]| = {norm:.3e}",
                    err={"pair": [i, j], "commutator": norm},
                )

    rng = default_rng(seed)
    basis = _split(np.eye(n, dtype=complex), members, rng, tol_commute * scale, depth=0)

    for idx, h in enumerate(members):
        d = basis.conj().T @ h @ basis
        off = float(np.max(np.abs(d - np.diag(np.diag(d))))) if n > 1 else 0.0
        if off > 10 * tol_commute * scale:
            raise NonCommutingFamilyError(
                f"verification sweep failed for member {idx}: off-diagonal {off:.3e}",
                err={"member": idx, "offdiag": off},
            )
    return basis
