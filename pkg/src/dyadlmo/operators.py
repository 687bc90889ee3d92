"""Matrix-free linear operators on flattened coefficient vectors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class OperatorHandle:
    apply: Callable[[np.ndarray], np.ndarray]
    adjoint_apply: Callable[[np.ndarray], np.ndarray]
    domain_dim: int
    range_dim: int

    @classmethod
    def from_matrix(cls, A: np.ndarray) -> OperatorHandle:
        A = np.asarray(A, dtype=float)
        return cls(lambda x: A @ x, lambda y: A.T @ y, A.shape[1], A.shape[0])

    def dense(self) -> np.ndarray:
        return np.column_stack([self.apply(e) for e in np.eye(self.domain_dim)]) \
            if self.domain_dim else np.zeros((self.range_dim, 0))

    @property
    def T(self) -> OperatorHandle:
        return OperatorHandle(self.adjoint_apply, self.apply, self.range_dim, self.domain_dim)

    def __matmul__(self, other: OperatorHandle) -> OperatorHandle:
        if self.domain_dim != other.range_dim:
            raise ValueError("dimension mismatch in operator composition")
        return OperatorHandle(lambda x: self.apply(other.apply(x)),
                              lambda y: other.adjoint_apply(self.adjoint_apply(y)),
                              other.domain_dim, self.range_dim)
