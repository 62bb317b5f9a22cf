"""Incremental weighted least squares with a block prior precision.

GramState maintains

    V = V0 + sum_n w_n phi_n phi_n'        (penalized Gram)
    b = sum_n w_n y_n phi_n                (weighted target vector)

together with an explicitly maintained dense inverse of V, updated by
the Sherman-Morrison identity. Regression features phi are sparse
(a handful of d-blocks out of the full layout), and the update cost is
dominated by one rank-one BLAS pass over the inverse.

Selector describes which d-blocks of the coefficient vector a decision
unit reads (the matrix C with C theta = sum of selected blocks), and
block_quantities produces the projected covariance, its PSD square
root, the penalty-induced covariance floor, and their log-determinant
gap - the inputs of the randomized selection rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg.blas import dsymv, dsyr

from .graphs import PenaltyMatrix

# Eigenvalues of a projected covariance less negative than this are
# treated as exact zeros when taking the PSD square root.
PSD_CLIP_TOL = 1e-12
# Log-determinant gaps inside [-LOGDET_CLIP_TOL, 0) clip to zero.
LOGDET_CLIP_TOL = 1e-9


@dataclass(frozen=True)
class SparseVec:
    """Sparse feature vector: values at strictly increasing indices."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    @classmethod
    def from_dense(cls, vec: np.ndarray) -> "SparseVec":
        vec = np.asarray(vec, dtype=float)
        idx = np.flatnonzero(vec)
        return cls(idx.astype(np.intp), vec[idx].copy(), vec.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class Selector:
    """Reader of a sum of d-blocks out of a dim-long coefficient vector."""

    offsets: tuple[int, ...]
    d: int
    dim: int

    def __post_init__(self):
        if not self.offsets:
            raise ValueError("selector needs at least one block")
        for off in self.offsets:
            if off < 0 or off + self.d > self.dim:
                raise ValueError(f"block offset {off} out of range for dim {self.dim}")

    def indices(self) -> np.ndarray:
        return np.concatenate([np.arange(off, off + self.d) for off in self.offsets])

    def project(self, vec: np.ndarray) -> np.ndarray:
        """C @ vec: the sum of the selected d-blocks."""
        out = np.zeros(self.d)
        for off in self.offsets:
            out += vec[off : off + self.d]
        return out

    def embed(self, x: np.ndarray) -> SparseVec:
        """C' @ x: place x into every selected block."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"x must have shape ({self.d},), got {x.shape}")
        idx = self.indices()
        vals = np.tile(x, len(self.offsets))
        return SparseVec(idx, vals, self.dim)


@dataclass(frozen=True)
class BlockCovariance:
    """Projected posterior geometry for one decision unit.

    cov          C V^{-1} C'            (d x d, positive definite)
    cov_sqrt     PSD square root of cov
    penalty_cov  C V^{-1} V0 V^{-1} C'  (the data-free floor of cov)
    logdet_ratio log det(cov) - log det(penalty_cov), >= 0
    """

    cov: np.ndarray
    cov_sqrt: np.ndarray
    penalty_cov: np.ndarray
    logdet_ratio: float


class GramState:
    """Penalized weighted-least-squares state with an incremental inverse.

    The inverse is maintained by Sherman-Morrison rank-one downdates
    through a symmetric BLAS update (dsyr) that stores only the lower
    triangle, so the maintained inverse is symmetric by construction
    rather than by per-step re-symmetrization. An exact dense recompute
    runs every `refresh_every` updates to stop round-off drift. Reads
    must therefore go through `gram_inv`, `columns`, or the solve
    helpers, never the raw storage.
    """

    def __init__(self, penalty: PenaltyMatrix, refresh_every: int = 5000):
        if refresh_every < 1:
            raise ValueError("refresh_every must be positive")
        self.penalty = penalty
        self.dim = penalty.dim
        self.v0 = penalty.matrix()
        self.gram = penalty.matrix().toarray()
        self._tri = np.asfortranarray(penalty.inverse_dense())
        self.b = np.zeros(self.dim)
        self.update_count = 0
        self.refresh_every = refresh_every

    @property
    def gram_inv(self) -> np.ndarray:
        """Full symmetric inverse, materialized from the triangular storage."""
        return np.tril(self._tri) + np.tril(self._tri, -1).T

    def columns(self, idx: np.ndarray) -> np.ndarray:
        """Selected columns of the inverse, assembled from the lower triangle."""
        out = np.empty((self.dim, len(idx)), order="F")
        for k, j in enumerate(idx):
            out[:j, k] = self._tri[j, :j]
            out[j:, k] = self._tri[j:, j]
        return out

    def update(self, phi: SparseVec | np.ndarray, weight: float, target: float) -> None:
        """Fold in one observation with regression weight `weight` and value `target`."""
        if weight <= 0:
            raise ValueError(f"weight must be positive, got {weight}")
        if not isinstance(phi, SparseVec):
            phi = SparseVec.from_dense(phi)
        if phi.dim != self.dim:
            raise ValueError(f"phi has dim {phi.dim}, state has dim {self.dim}")
        idx, vals = phi.indices, phi.values

        self.gram[np.ix_(idx, idx)] += weight * np.outer(vals, vals)
        self.b[idx] += (weight * target) * vals

        w = self.columns(idx) @ vals
        denom = 1.0 + weight * float(vals @ w[idx])
        self._tri = dsyr(-weight / denom, w, a=self._tri, lower=1, overwrite_a=1)

        self.update_count += 1
        if self.update_count % self.refresh_every == 0:
            self.refresh()

    def refresh(self) -> None:
        """Exact dense recompute of the inverse from the accumulated Gram."""
        chol, lower = scipy.linalg.cho_factor(self.gram, lower=True)
        inv = scipy.linalg.cho_solve((chol, lower), np.eye(self.dim))
        self._tri = np.asfortranarray(0.5 * (inv + inv.T))

    def solve_theta(self) -> np.ndarray:
        """Current coefficient estimate V^{-1} b."""
        return dsymv(1.0, self._tri, self.b, lower=1)

    def project_theta(self, selector: Selector) -> np.ndarray:
        """C V^{-1} b without forming the full coefficient vector."""
        idx = selector.indices()
        rows = self.columns(idx).T @ self.b
        return rows.reshape(len(selector.offsets), selector.d).sum(axis=0)

    def consistency_error(self) -> float:
        """max |V V^{-1} - I|, an on-demand drift diagnostic."""
        resid = self.gram @ self.gram_inv
        resid[np.diag_indices(self.dim)] -= 1.0
        return float(np.abs(resid).max())


def block_quantities(state: GramState, selector: Selector) -> BlockCovariance:
    """Projected covariance, PSD square root, penalty floor, and log-det gap.

    Raises ValueError when the floor matrix is numerically singular
    (its smallest eigenvalue is not positive) or when the log-det gap
    is negative beyond round-off.
    """
    if selector.dim != state.dim:
        raise ValueError(f"selector dim {selector.dim} != state dim {state.dim}")
    idx = selector.indices()
    d, nblocks = selector.d, len(selector.offsets)

    cols = state.columns(idx)
    proj = cols.reshape(state.dim, nblocks, d).sum(axis=1)
    cov = proj[idx].reshape(nblocks, d, d).sum(axis=0)
    cov = 0.5 * (cov + cov.T)
    penalty_cov = proj.T @ (state.v0 @ proj)
    penalty_cov = 0.5 * (penalty_cov + penalty_cov.T)

    cov_eigs, cov_vecs = np.linalg.eigh(cov)
    pen_eigs = np.linalg.eigvalsh(penalty_cov)
    if pen_eigs[0] <= 0:
        cond = np.inf if pen_eigs[0] <= 0 else pen_eigs[-1] / pen_eigs[0]
        raise ValueError(
            "penalty covariance floor is numerically singular "
            f"(eigenvalue range [{pen_eigs[0]:.3e}, {pen_eigs[-1]:.3e}], condition {cond})"
        )
    if cov_eigs[0] <= 0:
        raise ValueError(
            "projected covariance is numerically singular "
            f"(min eigenvalue {cov_eigs[0]:.3e}); the log-determinant is undefined"
        )

    logdet_ratio = float(np.log(cov_eigs).sum() - np.log(pen_eigs).sum())
    if logdet_ratio < 0:
        if logdet_ratio < -LOGDET_CLIP_TOL:
            raise ValueError(
                f"log-determinant gap {logdet_ratio:.3e} is negative beyond round-off"
            )
        logdet_ratio = 0.0

    # All eigenvalues are positive past the check above; the clip only
    # guards the square root against -0.0 round-off.
    cov_sqrt = (cov_vecs * np.sqrt(np.maximum(cov_eigs, 0.0))) @ cov_vecs.T

    return BlockCovariance(cov=cov, cov_sqrt=cov_sqrt, penalty_cov=penalty_cov, logdet_ratio=logdet_ratio)
