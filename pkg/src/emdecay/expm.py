"""Matrix exponentials for small dense generators, single and batched.

Eigendecomposition is used while the eigenvector matrix is well conditioned;
otherwise we fall back to scaling-and-squaring with a degree-13 Pade
approximant (``scipy.linalg.expm``).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

COND_LIMIT = 1e8


def expm(M: np.ndarray, cond_limit: float = COND_LIMIT) -> np.ndarray:
    """exp(M) for a single square matrix."""
    M = np.asarray(M)
    w, V = np.linalg.eig(M)
    if np.linalg.cond(V) < cond_limit:
        return (V * np.exp(w)) @ np.linalg.inv(V)
    return scipy.linalg.expm(M)


class BatchedExp:
    """Reusable exp(-t M_k) for a stack of generators M_k.

    The eigendecomposition is computed once; ``__call__(t)`` then costs one
    batched matrix product per time. Generators whose eigenvector matrix is
    ill conditioned are recomputed with Pade at every call.
    """

    def __init__(self, M: np.ndarray, cond_limit: float = COND_LIMIT):
        M = np.asarray(M, dtype=complex)
        if M.ndim != 3 or M.shape[1] != M.shape[2]:
            raise ValueError(f"expected a (K, m, m) stack, got {M.shape}")
        self.M = M
        self.eigvals, self.V = np.linalg.eig(M)
        cond = np.linalg.cond(self.V)
        self.fallback = np.flatnonzero(~(cond < cond_limit))
        if self.fallback.size:
            self.V[self.fallback] = np.eye(M.shape[1])
        self.Vinv = np.linalg.inv(self.V)

    def __len__(self) -> int:
        return self.M.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be nonnegative")
        E = (self.V * np.exp(-t * self.eigvals)[:, None, :]) @ self.Vinv
        for k in self.fallback:
            E[k] = scipy.linalg.expm(-t * self.M[k])
        return E

    def apply(self, t: float, z: np.ndarray) -> np.ndarray:
        """exp(-t M_k) z_k for a (K, m) or (K, m, r) stack of vectors."""
        vec = z.ndim == 2
        zz = z[..., None] if vec else z
        c = self.Vinv @ zz
        out = self.V @ (np.exp(-t * self.eigvals)[:, :, None] * c)
        for k in self.fallback:
            out[k] = scipy.linalg.expm(-t * self.M[k]) @ zz[k]
        return out[..., 0] if vec else out
