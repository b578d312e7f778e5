"""Label propagation over the symmetric-normalized adjacency.

Spreads observed one-hot labels with the damped fixed-point iteration
Y <- lam * S @ Y + (1 - lam) * Y0, whose limit solves
(I - lam * S) Y* = (1 - lam) * Y0.  The dense solve doubles as the test
oracle for the iterative path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, RunError
from .graph import NormalizedAdjacency, spmm

_DENSE_SOLVE_LIMIT = 2000


@dataclass(frozen=True)
class LpaConfig:
    lam: float = 0.9
    max_iters: int = 1000
    tol: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ConfigError("lambda must be in (0, 1)")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")


def lpa_iterate(
    s: NormalizedAdjacency, y0: np.ndarray, cfg: LpaConfig
) -> tuple[np.ndarray, int]:
    """Fixed-point iteration until the max-abs change drops below tol.

    ``y0`` carries training labels with zero rows for everything else.
    Converges geometrically since the spectral radius of S is at most 1.
    """
    y0 = np.asarray(y0, dtype=np.float64)
    if y0.shape[0] != s.num_nodes:
        raise InputError("y0 row count must equal num_nodes")
    y = y0.copy()
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        y_next = cfg.lam * spmm(s, y) + (1.0 - cfg.lam) * y0
        if not np.all(np.isfinite(y_next)):
            raise RunError(f"label propagation diverged at iteration {iters}")
        delta = np.abs(y_next - y).max() if y.size else 0.0
        y = y_next
        if delta < cfg.tol:
            break
    return y, iters


def lpa_closed_form(
    s: NormalizedAdjacency, y0: np.ndarray, lam: float
) -> np.ndarray:
    """Dense solve of (I - lam * S) Y = (1 - lam) * Y0; small graphs only."""
    if not 0.0 < lam < 1.0:
        raise ConfigError("lambda must be in (0, 1)")
    y0 = np.asarray(y0, dtype=np.float64)
    n = s.num_nodes
    if n > _DENSE_SOLVE_LIMIT:
        raise InputError(
            f"closed-form solve limited to {_DENSE_SOLVE_LIMIT} nodes, got {n}"
        )
    if y0.shape[0] != n:
        raise InputError("y0 row count must equal num_nodes")
    a = np.eye(n) - lam * s.to_dense()
    return np.linalg.solve(a, (1.0 - lam) * y0)


def lpa_predict(y: np.ndarray) -> np.ndarray:
    """Class per node: argmax over the propagated rows, ties to the lowest index."""
    return np.argmax(y, axis=1)
