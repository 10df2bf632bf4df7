"""Dense linear algebra on multipartite Hermitian operators.

The array-level helpers (``ptrace``, ``ptranspose``, ``permute_systems``...)
work on plain ``numpy`` matrices plus a list of subsystem dimensions and are
what the SDP builders use internally.  :class:`HermOp` wraps a matrix together
with its :class:`TensorSpace` and validates Hermiticity on construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_ATOL = 1e-12


class InvalidArgument(ValueError):
    """Raised for malformed operators, subsystem indices or dimensions."""


@dataclass(frozen=True)
class TensorSpace:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise InvalidArgument("a tensor space needs at least one subsystem")
        if any(d < 1 for d in dims):
            raise InvalidArgument(f"subsystem dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self) -> int:
        return len(self.dims)


@dataclass(frozen=True, eq=False)
class HermOp:
    """Complex Hermitian operator on a tensor-product space."""

    space: TensorSpace
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        space = self.space if isinstance(self.space, TensorSpace) else TensorSpace(tuple(self.space))
        mat = np.array(self.entries, dtype=complex)
        d = space.total_dim
        if mat.shape != (d, d):
            raise InvalidArgument(f"entries have shape {mat.shape}, space needs {(d, d)}")
        if np.max(np.abs(mat - mat.conj().T), initial=0.0) > HERMITIAN_ATOL:
            raise InvalidArgument("operator is not Hermitian within 1e-12")
        mat.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "entries", mat)

    @classmethod
    def from_matrix(cls, mat, dims: Sequence[int] | None = None) -> "HermOp":
        """Build from a numerically Hermitian matrix, averaging away round-off."""
        mat = np.asarray(mat, dtype=complex)
        if dims is None:
            dims = (mat.shape[0],)
        return cls(TensorSpace(tuple(dims)), 0.5 * (mat + mat.conj().T))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.space.dims

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def expect(self, op) -> float:
        """``Tr(op @ self)`` for a Hermitian ``op`` (HermOp or array)."""
        other = op.entries if isinstance(op, HermOp) else np.asarray(op)
        return float(np.real(np.vdot(other.conj().T, self.entries)))

    def __eq__(self, other):
        if not isinstance(other, HermOp):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash((self.space, self.entries.tobytes()))


@dataclass(frozen=True, eq=False)
class RealEmbedding:
    """Real symmetric matrix ``[[Re H, -Im H], [Im H, Re H]]`` of a Hermitian ``H``."""

    source_dim: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        n = int(self.source_dim)
        if mat.shape != (2 * n, 2 * n):
            raise InvalidArgument(f"embedding has shape {mat.shape}, expected {(2 * n, 2 * n)}")
        mat.setflags(write=False)
        object.__setattr__(self, "source_dim", n)
        object.__setattr__(self, "matrix", mat)


# --------------------------------------------------------------------------
# array-level helpers


def _check_dims(mat: np.ndarray, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    d = int(np.prod(dims))
    if mat.shape != (d, d):
        raise InvalidArgument(f"matrix shape {mat.shape} does not match dims {dims}")
    return dims


def ptrace(mat: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Partial trace keeping the subsystems in ``keep`` (in their original order)."""
    dims = _check_dims(mat, dims)
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise InvalidArgument("keep must name at least one subsystem")
    if keep[0] < 0 or keep[-1] >= len(dims):
        raise InvalidArgument(f"subsystem index out of range for dims {dims}")
    n = len(dims)
    t = mat.reshape(dims + dims)
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    res = np.einsum(t, row + col, out)
    dk = int(np.prod([dims[i] for i in keep]))
    return res.reshape(dk, dk)


def ptranspose(mat: np.ndarray, dims: Sequence[int], sys: int) -> np.ndarray:
    """Transpose with respect to subsystem ``sys``."""
    dims = _check_dims(mat, dims)
    n = len(dims)
    if not 0 <= sys < n:
        raise InvalidArgument(f"subsystem {sys} out of range for dims {dims}")
    t = mat.reshape(dims + dims)
    axes = list(range(2 * n))
    axes[sys], axes[n + sys] = axes[n + sys], axes[sys]
    return t.transpose(axes).reshape(mat.shape)


def permute_systems(mat: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder subsystems: output subsystem ``i`` is input subsystem ``perm[i]``."""
    dims = _check_dims(mat, dims)
    n = len(dims)
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(n)):
        raise InvalidArgument(f"{perm} is not a permutation of {n} subsystems")
    t = mat.reshape(dims + dims)
    t = t.transpose(perm + [n + p for p in perm])
    return t.reshape(mat.shape)


def swap_operator(dims: Sequence[int], sys1: int, sys2: int) -> np.ndarray:
    """Permutation unitary exchanging two equal-dimension subsystems."""
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    if not (0 <= sys1 < n and 0 <= sys2 < n):
        raise InvalidArgument(f"subsystem index out of range for dims {dims}")
    if dims[sys1] != dims[sys2]:
        raise InvalidArgument(f"cannot swap subsystems of dimension {dims[sys1]} and {dims[sys2]}")
    d = int(np.prod(dims))
    perm = list(range(n))
    perm[sys1], perm[sys2] = sys2, sys1
    idx = np.arange(d).reshape(dims).transpose(perm).ravel()
    p = np.zeros((d, d))
    p[np.arange(d), idx] = 1.0
    return p


def hermitian_basis(d: int, real: bool = False) -> np.ndarray:
    """Orthonormal (Hilbert-Schmidt) basis of d x d Hermitian matrices.

    Returns an array of shape ``(k, d, d)`` with ``k = d*d`` (or ``d(d+1)/2``
    real symmetric elements when ``real`` is set).
    """
    out = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1.0
        out.append(e)
    s = 1 / np.sqrt(2)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = e[j, i] = s
            out.append(e)
            if not real:
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = -1j * s
                e[j, i] = 1j * s
                out.append(e)
    return np.array(out)


def embed_matrix(mat: np.ndarray) -> np.ndarray:
    re, im = mat.real, mat.imag
    return np.block([[re, -im], [im, re]])


def symmetrize_embedding(z: np.ndarray) -> np.ndarray:
    """Project a real symmetric 2n x 2n matrix onto the complex-embedding form."""
    n = z.shape[0] // 2
    a, b, c, d = z[:n, :n], z[:n, n:], z[n:, :n], z[n:, n:]
    x = 0.5 * (a + d)
    y = 0.5 * (c - b)
    x = 0.5 * (x + x.T)
    y = 0.5 * (y - y.T)
    return np.block([[x, -y], [y, x]])


def extract_matrix(z: np.ndarray) -> np.ndarray:
    n = z.shape[0] // 2
    return z[:n, :n] + 1j * z[n:, :n]


def symmetric_isometries(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Isometries onto the symmetric and antisymmetric subspaces of ``C^d (x) C^d``.

    Returns ``(V_sym, V_anti)`` of shapes ``(d*d, d(d+1)/2)`` and ``(d*d, d(d-1)/2)``.
    """
    sym, anti = [], []
    s = 1 / np.sqrt(2)
    for i in range(d):
        for j in range(i, d):
            v = np.zeros(d * d)
            if i == j:
                v[i * d + i] = 1.0
                sym.append(v)
                continue
            v[i * d + j] = v[j * d + i] = s
            sym.append(v)
            w = np.zeros(d * d)
            w[i * d + j], w[j * d + i] = s, -s
            anti.append(w)
    vs = np.array(sym).T
    va = np.array(anti).T if anti else np.zeros((d * d, 0))
    return vs, va


# --------------------------------------------------------------------------
# HermOp-level operations


def identity(dims: Sequence[int]) -> HermOp:
    space = TensorSpace(tuple(dims))
    return HermOp(space, np.eye(space.total_dim))


def kron(a: HermOp, b: HermOp) -> HermOp:
    return HermOp(TensorSpace(a.dims + b.dims), np.kron(a.entries, b.entries))


def partial_trace(x: HermOp, keep: Iterable[int]) -> HermOp:
    keep = sorted(set(int(k) for k in keep))
    res = ptrace(x.entries, x.dims, keep)
    return HermOp.from_matrix(res, [x.dims[k] for k in keep])


def partial_transpose(x: HermOp, subsystem: int) -> HermOp:
    return HermOp(x.space, ptranspose(x.entries, x.dims, subsystem))


def swap_extension(x: HermOp, sys1: int, sys2: int) -> HermOp:
    """Return ``P x P`` with ``P`` exchanging subsystems ``sys1`` and ``sys2``."""
    n = len(x.dims)
    if not (0 <= sys1 < n and 0 <= sys2 < n):
        raise InvalidArgument(f"subsystem index out of range for dims {x.dims}")
    if x.dims[sys1] != x.dims[sys2]:
        raise InvalidArgument(
            f"cannot swap subsystems of dimension {x.dims[sys1]} and {x.dims[sys2]}"
        )
    perm = list(range(n))
    perm[sys1], perm[sys2] = sys2, sys1
    return HermOp(x.space, permute_systems(x.entries, x.dims, perm))


_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def pauli_tomography_basis(space: TensorSpace | Sequence[int] = (4,)) -> list[HermOp]:
    """The 16 two-qubit Pauli products on a 4-dimensional space, identity first.

    Satisfies ``Tr(C_i) = 4 delta_{i1}`` and ``Tr(C_i C_j) = 4 delta_{ij}``.
    """
    if not isinstance(space, TensorSpace):
        space = TensorSpace(tuple(space))
    if space.total_dim != 4:
        raise InvalidArgument(f"tomographic basis needs a 4-dimensional space, got {space.dims}")
    return [HermOp(space, np.kron(a, b)) for a in _PAULI for b in _PAULI]


def real_embed(x: HermOp) -> RealEmbedding:
    return RealEmbedding(x.space.total_dim, embed_matrix(x.entries))


def real_extract(e: RealEmbedding, dims: Sequence[int] | None = None) -> HermOp:
    n = e.source_dim
    z = e.matrix
    x, y = z[:n, :n], z[n:, :n]
    tol = HERMITIAN_ATOL * max(1.0, np.max(np.abs(z), initial=0.0))
    ok = (
        np.allclose(z[n:, n:], x, rtol=0, atol=tol)
        and np.allclose(z[:n, n:], -y, rtol=0, atol=tol)
        and np.allclose(x, x.T, rtol=0, atol=tol)
        and np.allclose(y, -y.T, rtol=0, atol=tol)
    )
    if not ok:
        raise InvalidArgument("matrix is not of the form [[X, -Y], [Y, X]] with X = X^T, Y = -Y^T")
    dims = (n,) if dims is None else tuple(dims)
    return HermOp.from_matrix(x + 1j * y, dims)
