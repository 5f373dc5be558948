"""Dense complex tensor helpers.

Tensors are plain ``numpy`` arrays. Qubit 0 is always the most significant
bit of a computational-basis index, and amplitudes are stored row-major.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

ComplexArray = NDArray[np.complex128]

DEFAULT_REL_CUTOFF = 1e-12


@dataclass(frozen=True)
class SvdResult:
    """Factors of a (possibly truncated) SVD split.

    ``left`` has shape ``left_shape + (k,)`` and ``right`` has shape
    ``(k,) + right_shape`` so that contracting ``left * s`` with ``right``
    over the new axis reproduces the input up to the discarded weight.
    """

    left: ComplexArray
    singular_values: NDArray[np.float64]
    right: ComplexArray
    discarded_weight: float

    @property
    def rank(self) -> int:
        return int(self.singular_values.shape[0])

    def reconstruct(self) -> ComplexArray:
        scaled = self.left * self.singular_values
        return np.tensordot(scaled, self.right, axes=([scaled.ndim - 1], [0]))


def as_tensor(data) -> ComplexArray:
    t = np.asarray(data, dtype=np.complex128)
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor contains NaN or Inf amplitudes")
    return t


def contract(a, b, axis_pairs: Sequence[tuple[int, int]]) -> ComplexArray:
    """Sum over paired axes of ``a`` and ``b``.

    The result carries the free axes of ``a`` followed by the free axes of
    ``b``, each in their original order. An empty pairing is the outer
    product.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = [p[0] for p in axis_pairs]
    axes_b = [p[1] for p in axis_pairs]
    for ia, ib in zip(axes_a, axes_b):
        if a.shape[ia] != b.shape[ib]:
            raise ValueError(
                f"extent mismatch: axis {ia} of a has {a.shape[ia]}, "
                f"axis {ib} of b has {b.shape[ib]}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def svd_split(
    t,
    left_axes: Sequence[int],
    max_kept: int | None = None,
    rel_cutoff: float | None = None,
) -> SvdResult:
    """Split ``t`` into ``left_axes | rest`` with a truncated SVD.

    Kept rank is ``min(max_kept, #{s_i / s_0 > rel_cutoff})``. When only
    ``max_kept`` is given the cutoff defaults to 1e-12 so exact low-rank
    structure is detected; with neither given nothing is dropped.
    """
    t = np.asarray(t, dtype=np.complex128)
    left_axes = [ax % t.ndim for ax in left_axes]
    if not left_axes:
        raise ValueError("left_axes must be non-empty")
    if len(set(left_axes)) != len(left_axes):
        raise ValueError("left_axes contains duplicates")
    right_axes = [ax for ax in range(t.ndim) if ax not in left_axes]
    if not right_axes:
        raise ValueError("left_axes must be a proper subset of the tensor axes")
    if rel_cutoff is None:
        rel_cutoff = DEFAULT_REL_CUTOFF if max_kept is not None else 0.0
    if rel_cutoff < 0:
        raise ValueError("rel_cutoff must be >= 0")
    if max_kept is not None and max_kept < 1:
        raise ValueError("max_kept must be positive")

    left_shape = tuple(t.shape[ax] for ax in left_axes)
    right_shape = tuple(t.shape[ax] for ax in right_axes)
    mat = np.transpose(t, left_axes + right_axes).reshape(
        int(np.prod(left_shape)), int(np.prod(right_shape))
    )
    u, s, vh = np.linalg.svd(mat, full_matrices=False)

    total = float(np.sum(s**2))
    if total == 0.0:
        keep = 1
    else:
        keep = int(np.count_nonzero(s / s[0] > rel_cutoff)) if rel_cutoff > 0 else len(s)
        keep = max(keep, 1)
    if max_kept is not None:
        keep = min(keep, max_kept)
    dropped = float(np.sum(s[keep:] ** 2))
    discarded = dropped / total if total > 0 else 0.0

    return SvdResult(
        left=u[:, :keep].reshape(left_shape + (keep,)),
        singular_values=s[:keep].copy(),
        right=vh[:keep, :].reshape((keep,) + right_shape),
        discarded_weight=discarded,
    )


def polar_unitary(m, rank_tol: float = 1e-12) -> ComplexArray:
    """Unitary factor of the polar decomposition ``m = U P``.

    This is the unitary closest to ``m`` in Frobenius norm. A numerically
    rank-deficient input has no unique polar factor and is rejected.
    """
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"polar_unitary needs a square matrix, got shape {m.shape}")
    w, s, vh = np.linalg.svd(m)
    if s[0] == 0.0:
        raise ValueError(f"matrix is zero (rank 0 of {m.shape[0]}); polar factor not unique")
    rank = int(np.count_nonzero(s / s[0] > rank_tol))
    if rank < m.shape[0]:
        raise ValueError(
            f"matrix is rank deficient (rank {rank} of {m.shape[0]}); polar factor not unique"
        )
    return w @ vh


def is_isometry(t, domain_axes: Sequence[int], tol: float = 1e-10) -> tuple[bool, float]:
    """Check ``M^dagger M = I`` for ``t`` viewed as a map from ``domain_axes``.

    Returns the verdict together with the largest absolute entry deviation.
    """
    t = np.asarray(t, dtype=np.complex128)
    domain_axes = [ax % t.ndim for ax in domain_axes]
    codomain_axes = [ax for ax in range(t.ndim) if ax not in domain_axes]
    dom = int(np.prod([t.shape[ax] for ax in domain_axes])) if domain_axes else 1
    cod = int(np.prod([t.shape[ax] for ax in codomain_axes])) if codomain_axes else 1
    if dom > cod:
        return False, float("inf")
    mat = np.transpose(t, codomain_axes + domain_axes).reshape(cod, dom)
    dev = float(np.max(np.abs(mat.conj().T @ mat - np.eye(dom))))
    return dev <= tol, dev


def is_unitary(m, tol: float = 1e-10) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return is_isometry(m, [1], tol)[0]


def complete_unitary(columns: ComplexArray) -> ComplexArray:
    """Extend orthonormal columns to a full unitary, keeping them first."""
    columns = np.asarray(columns, dtype=np.complex128)
    d, k = columns.shape
    if k == d:
        return columns.copy()
    u_full = np.linalg.svd(columns, full_matrices=True)[0]
    return np.concatenate([columns, u_full[:, k:]], axis=1)
