"""Shared result types for the integrators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class IntegrationError(RuntimeError):
    """Integration produced a non-finite state or an unsolvable stage system."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass
class SimStats:
    newton_iters_total: int = 0
    last_residual: float = 0.0
    factorizations: int = 0
    converged: bool = True


@dataclass
class SimOutput:
    """Result of one integrator call; optional fields mirror the requested modes."""

    x_next: np.ndarray
    z_out: np.ndarray
    S_forw: Optional[np.ndarray] = None  # nx x (nx+nu)
    grad_adj: Optional[np.ndarray] = None  # (nx+nu,) row of seed^T dPhi
    hess: Optional[np.ndarray] = None  # (nx+nu) x (nx+nu), symmetric
    stats: SimStats = field(default_factory=SimStats)
