"""Equality-constrained SQP with a dense KKT solve.

Full Newton steps on the KKT conditions; the Hessian block is either the
(exact, constant) quadratic-cost Hessian (Gauss-Newton mode) or the exact
Lagrangian Hessian including integrator curvature. Wrong inertia triggers a
Levenberg shift escalated by factors of 10. No globalization: benchmarks
start near feasibility, divergence is reported rather than repaired.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = ["SqpOpts", "SqpStatus", "SqpResult", "solve"]


class SqpStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    LINALG_FAILURE = "linalg_failure"


@dataclass(frozen=True)
class SqpOpts:
    hessian_mode: str = "gn"  # "gn" | "exact"
    max_iters: int = 50
    kkt_tol: float = 1e-8
    regularization: float = 0.0  # base Levenberg shift on the Hessian block

    def __post_init__(self):
        if self.hessian_mode not in ("gn", "exact"):
            raise ValueError("hessian_mode must be 'gn' or 'exact'")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.kkt_tol > 0:
            raise ValueError("kkt_tol must be > 0")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")


@dataclass
class SqpResult:
    v: np.ndarray
    nu: np.ndarray
    iters: int
    kkt_history: list
    status: SqpStatus
    timings: dict = field(default_factory=dict)


def _kkt_inertia_ok(K, n, m):
    """LDL^T inertia check: a regular KKT matrix has n positive, m negative eigenvalues."""
    try:
        _, d, _ = scipy.linalg.ldl(K, lower=True)
    except Exception:
        return False
    n_pos = n_neg = 0
    i = 0
    size = K.shape[0]
    while i < size:
        if i + 1 < size and d[i + 1, i] != 0.0:
            ev = np.linalg.eigvalsh(d[i : i + 2, i : i + 2])
            for e in ev:
                if e > 0:
                    n_pos += 1
                elif e < 0:
                    n_neg += 1
            i += 2
        else:
            e = d[i, i]
            if e > 0:
                n_pos += 1
            elif e < 0:
                n_neg += 1
            i += 1
    return n_pos == n and n_neg == m


def solve(nlp, opts: SqpOpts) -> SqpResult:
    """Full-step SQP on an equality-constrained NLP."""
    n, m = nlp.n_vars, nlp.n_eq
    v = np.asarray(nlp.v0, float).copy()
    nu = np.zeros(m)
    history = []
    timings = {"nlp_function_eval": 0.0, "step_computation": 0.0}
    status = SqpStatus.MAX_ITERS
    iters = 0

    for it in range(opts.max_iters + 1):
        t0 = time.perf_counter()
        grad = nlp.grad_f(v)
        g = nlp.g(v)
        J = nlp.jac_g(v)
        timings["nlp_function_eval"] += time.perf_counter() - t0

        kkt = max(
            float(np.max(np.abs(grad + J.T @ nu))),
            float(np.max(np.abs(g))) if m else 0.0,
        )
        history.append(kkt)
        if kkt <= opts.kkt_tol:
            status = SqpStatus.CONVERGED
            break
        if it == opts.max_iters:
            status = SqpStatus.MAX_ITERS
            break

        t0 = time.perf_counter()
        if opts.hessian_mode == "gn":
            H = nlp.cost_hess(v)
        else:
            H = nlp.lag_hess(v, nu)
        timings["nlp_function_eval"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        rhs = np.concatenate([-grad, -g])
        delta = opts.regularization
        sol = None
        for _ in range(11):
            K = np.zeros((n + m, n + m))
            K[:n, :n] = H
            if delta > 0.0:
                K[:n, :n] += delta * np.eye(n)
            K[:n, n:] = J.T
            K[n:, :n] = J
            if _kkt_inertia_ok(K, n, m):
                try:
                    cand = scipy.linalg.lu_solve(
                        scipy.linalg.lu_factor(K, check_finite=False), rhs, check_finite=False
                    )
                except scipy.linalg.LinAlgError:
                    cand = None
                if cand is not None and np.all(np.isfinite(cand)):
                    sol = cand
                    break
            delta = 10.0 * delta if delta > 0.0 else 1e-8
        timings["step_computation"] += time.perf_counter() - t0
        if sol is None:
            status = SqpStatus.LINALG_FAILURE
            break
        v = v + sol[:n]
        nu = sol[n:]
        iters += 1

    return SqpResult(v=v, nu=nu, iters=iters, kkt_history=history, status=status, timings=timings)
