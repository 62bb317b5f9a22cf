"""Coefficient layouts for pooled differential-reward models.

A layout stacks, in order: an optional baseline-feature block (raw
outcome models only), an optional shared differential block, one
differential block per user, and one per time point. Each differential
block has width d. A decision unit (user i at time t) reads the sum of
its active differential blocks, so its regression feature has at most
baseline_dim + 3d nonzeros regardless of how many users the layout
pools over.

Users and time points are 1-based to match the staged schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import Selector, SparseVec


@dataclass(frozen=True)
class BlockLayout:
    d: int
    num_users: int = 0
    num_times: int = 0
    has_shared: bool = True
    baseline_dim: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.num_users < 0 or self.num_times < 0 or self.baseline_dim < 0:
            raise ValueError("block counts must be nonnegative")
        if not (self.has_shared or self.num_users or self.num_times):
            raise ValueError("layout has no differential blocks")

    @classmethod
    def triangular(cls, num_stages: int, d: int) -> "BlockLayout":
        """Full pooled layout for a K-stage triangular study: shared + K users + K times."""
        if num_stages < 1:
            raise ValueError("num_stages must be at least 1")
        return cls(d=d, num_users=num_stages, num_times=num_stages)

    @property
    def dim(self) -> int:
        blocks = int(self.has_shared) + self.num_users + self.num_times
        return self.baseline_dim + blocks * self.d

    @property
    def shared_offset(self) -> int:
        if not self.has_shared:
            raise ValueError("layout has no shared block")
        return self.baseline_dim

    def user_offset(self, i: int) -> int:
        if not 1 <= i <= self.num_users:
            raise ValueError(f"user index {i} out of range 1..{self.num_users}")
        return self.baseline_dim + (int(self.has_shared) + (i - 1)) * self.d

    def time_offset(self, t: int) -> int:
        if not 1 <= t <= self.num_times:
            raise ValueError(f"time index {t} out of range 1..{self.num_times}")
        return self.baseline_dim + (int(self.has_shared) + self.num_users + (t - 1)) * self.d

    def selector(self, i: int | None = None, t: int | None = None) -> Selector:
        """Active differential blocks for unit (i, t); inactive axes are ignored."""
        offsets = []
        if self.has_shared:
            offsets.append(self.shared_offset)
        if self.num_users:
            if i is None:
                raise ValueError("layout has user blocks but no user index was given")
            offsets.append(self.user_offset(i))
        if self.num_times:
            if t is None:
                raise ValueError("layout has time blocks but no time index was given")
            offsets.append(self.time_offset(t))
        return Selector(offsets=tuple(offsets), d=self.d, dim=self.dim)

    def embed(
        self,
        x: np.ndarray | None,
        i: int | None = None,
        t: int | None = None,
        baseline: np.ndarray | None = None,
    ) -> SparseVec:
        """Regression feature: baseline features plus x at each active block.

        `x=None` (or the zero vector) with a baseline block present is
        the no-treatment row of a raw-outcome model.
        """
        indices: list[np.ndarray] = []
        values: list[np.ndarray] = []
        if self.baseline_dim:
            baseline = np.asarray(baseline, dtype=float)
            if baseline.shape != (self.baseline_dim,):
                raise ValueError(
                    f"baseline features must have shape ({self.baseline_dim},)"
                )
            indices.append(np.arange(self.baseline_dim))
            values.append(baseline)
        elif baseline is not None:
            raise ValueError("layout has no baseline block")
        if x is not None:
            sel = self.selector(i, t)
            emb = sel.embed(np.asarray(x, dtype=float))
            indices.append(emb.indices)
            values.append(emb.values)
        if not indices:
            raise ValueError("nothing to embed")
        return SparseVec(np.concatenate(indices), np.concatenate(values), self.dim)
