"""Symmetric d x d tensor algebra with a deviatoric/trace split, d in {1,2,3}.

Only the d(d+1)/2 independent components are stored: diagonal entries first,
then the upper-triangle off-diagonals in row-major order.  The off-diagonal
entries carry pairing weight 2 inside the Frobenius contraction; nothing else
in the package needs to know about the packed layout.
"""

from __future__ import annotations

import numpy as np

# upper-triangle index pairs per dimension, in storage order
_OFFDIAG = {1: [], 2: [(0, 1)], 3: [(0, 1), (0, 2), (1, 2)]}


def ncomp(dim: int) -> int:
    """Number of independent components of a symmetric dim x dim tensor."""
    return dim * (dim + 1) // 2


class SymTensor:
    """A symmetric tensor in packed component storage.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1, 2 or 3.
    entries : array_like, shape (dim*(dim+1)/2,)
        Diagonal components first, then upper-triangle off-diagonals.
    """

    __slots__ = ("dim", "entries")

    def __init__(self, dim, entries):
        if dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {dim!r}")
        entries = np.asarray(entries, dtype=float)
        if entries.shape != (ncomp(dim),):
            raise ValueError(
                f"expected {ncomp(dim)} components for dim={dim}, "
                f"got shape {entries.shape}"
            )
        self.dim = dim
        self.entries = entries

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_matrix(cls, mat) -> "SymTensor":
        """Pack a dense symmetric matrix; symmetry is enforced, not assumed."""
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"need a square matrix, got shape {mat.shape}")
        d = mat.shape[0]
        sym = 0.5 * (mat + mat.T)
        comps = [sym[i, i] for i in range(d)]
        comps += [sym[i, j] for (i, j) in _OFFDIAG[d]]
        return cls(d, comps)

    @classmethod
    def zero(cls, dim: int) -> "SymTensor":
        return cls(dim, np.zeros(ncomp(dim)))

    @classmethod
    def identity(cls, dim: int) -> "SymTensor":
        e = np.zeros(ncomp(dim))
        e[:dim] = 1.0
        return cls(dim, e)

    def to_matrix(self) -> np.ndarray:
        d = self.dim
        mat = np.zeros((d, d))
        for i in range(d):
            mat[i, i] = self.entries[i]
        for k, (i, j) in enumerate(_OFFDIAG[d]):
            mat[i, j] = mat[j, i] = self.entries[d + k]
        return mat

    # -- algebra ---------------------------------------------------------------

    def __add__(self, other: "SymTensor") -> "SymTensor":
        self._check_peer(other)
        return SymTensor(self.dim, self.entries + other.entries)

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        self._check_peer(other)
        return SymTensor(self.dim, self.entries - other.entries)

    def __mul__(self, scalar: float) -> "SymTensor":
        return SymTensor(self.dim, self.entries * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SymTensor":
        return SymTensor(self.dim, -self.entries)

    def _check_peer(self, other):
        if not isinstance(other, SymTensor) or other.dim != self.dim:
            raise ValueError("dimension mismatch between symmetric tensors")

    def __repr__(self):
        return f"SymTensor(dim={self.dim}, entries={self.entries!r})"

    # -- invariants ------------------------------------------------------------

    def trace(self) -> float:
        return float(self.entries[: self.dim].sum())

    def norm(self) -> float:
        """Frobenius norm, off-diagonals weighted twice under the hood."""
        return float(np.sqrt(contract(self, self)))


def contract(a: SymTensor, b: SymTensor) -> float:
    """Frobenius double contraction a : b = sum_ij a_ij b_ij.

    >>> a = SymTensor.from_matrix([[1.0, 2.0], [2.0, 0.0]])
    >>> b = SymTensor.from_matrix([[0.0, 1.0], [1.0, 3.0]])
    >>> contract(a, b)
    4.0
    """
    a._check_peer(b)
    d = a.dim
    diag = float(np.dot(a.entries[:d], b.entries[:d]))
    off = float(np.dot(a.entries[d:], b.entries[d:]))
    return diag + 2.0 * off


def deviatoric_split(t: SymTensor):
    """Split t into (deviator, trace) with deviator = t - (tr t / d) * I.

    The deviator is trace-free to roundoff and orthogonal to the identity
    under :func:`contract`.
    """
    tau = t.trace()
    dev = t.entries.copy()
    dev[: t.dim] -= tau / t.dim
    return SymTensor(t.dim, dev), tau


# ---------------------------------------------------------------------------
# packed-field helpers
#
# Solver hot paths carry fields of symmetric tensors as arrays of shape
# (..., ncomp).  These mirror the scalar operations above without the
# object-per-point cost.


def field_trace(entries: np.ndarray, dim: int) -> np.ndarray:
    return entries[..., :dim].sum(axis=-1)


def field_deviator(entries: np.ndarray, dim: int) -> np.ndarray:
    out = np.array(entries, dtype=float, copy=True)
    out[..., :dim] -= (field_trace(entries, dim) / dim)[..., None]
    return out


def field_contract(a: np.ndarray, b: np.ndarray, dim: int) -> np.ndarray:
    diag = (a[..., :dim] * b[..., :dim]).sum(axis=-1)
    off = (a[..., dim:] * b[..., dim:]).sum(axis=-1)
    return diag + 2.0 * off


def field_norm(entries: np.ndarray, dim: int) -> np.ndarray:
    return np.sqrt(field_contract(entries, entries, dim))
