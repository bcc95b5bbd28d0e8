"""OCP transcription: direct multiple shooting and direct collocation.

Both transcriptions produce the same dense NLP carrier (quadratic tracking
cost, equality constraints, first and second derivatives), so the SQP
solver and the benchmark driver are agnostic to the discretization.
Multiple shooting keeps the stage variables inside per-interval
integrators; collocation exposes them as NLP unknowns with the stage
equations as constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ad
from .butcher import ButcherTableau
from .erk import Erk
from .irk import Irk, NewtonOpts
from .models import DynamicsModel

__all__ = ["OcpSpec", "Nlp", "transcribe_multiple_shooting", "transcribe_collocation"]


def _default_newton():
    # tolerance-based termination keeps shooting derivatives consistent with
    # the nominal map; per-step refactorization makes the IFT solves exact
    return NewtonOpts(max_iters=30, tol=1e-10, freeze_jacobian=False)


@dataclass
class OcpSpec:
    """Quadratic-tracking OCP over a fixed horizon with equality dynamics."""

    model: DynamicsModel
    N: int
    T: float
    Q: np.ndarray
    R: np.ndarray
    Q_N: np.ndarray
    x_ref: np.ndarray
    u_ref: np.ndarray
    x0_bar: np.ndarray
    tableau: ButcherTableau = None
    n_steps: int = 1
    newton: NewtonOpts = field(default_factory=_default_newton)
    reset_each_eval: bool = False  # strict determinism: reset warm starts per evaluation

    def __post_init__(self):
        nx, nu = self.model.nx, self.model.nu
        for name, arr, shape in (
            ("Q", self.Q, (nx, nx)),
            ("R", self.R, (nu, nu)),
            ("Q_N", self.Q_N, (nx, nx)),
            ("x_ref", self.x_ref, (nx,)),
            ("u_ref", self.u_ref, (nu,)),
            ("x0_bar", self.x0_bar, (nx,)),
        ):
            arr = np.asarray(arr, float)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            setattr(self, name, arr)
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be > 0")


@dataclass
class Nlp:
    """Dense equality-constrained NLP with separate evaluator entry points."""

    n_vars: int
    n_eq: int
    f: Callable
    grad_f: Callable
    g: Callable
    jac_g: Callable
    lag_hess: Callable  # (v, nu) -> exact Hessian of f + nu.g
    cost_hess: Callable  # (v,) -> Hessian of f alone (Gauss-Newton block)
    v0: np.ndarray
    layout: list
    eq_layout: list


class _QuadCost:
    """Stage-wise quadratic tracking cost over the (x_k, u_k, x_N) blocks."""

    def __init__(self, spec, x_slices, u_slices, n_vars):
        self.spec = spec
        self.x_slices = x_slices
        self.u_slices = u_slices
        self.n_vars = n_vars
        H = np.zeros((n_vars, n_vars))
        for k, sl in enumerate(x_slices):
            W = spec.Q_N if k == len(x_slices) - 1 else spec.Q
            H[sl, sl] = W
        for sl in u_slices:
            H[sl, sl] = spec.R
        self._H = H

    def f(self, v):
        spec = self.spec
        total = 0.0
        for k, sl in enumerate(self.x_slices):
            W = spec.Q_N if k == len(self.x_slices) - 1 else spec.Q
            d = v[sl] - spec.x_ref
            total += 0.5 * d @ W @ d
        for sl in self.u_slices:
            d = v[sl] - spec.u_ref
            total += 0.5 * d @ spec.R @ d
        return total

    def grad(self, v):
        spec = self.spec
        out = np.zeros(self.n_vars)
        for k, sl in enumerate(self.x_slices):
            W = spec.Q_N if k == len(self.x_slices) - 1 else spec.Q
            out[sl] = W @ (v[sl] - spec.x_ref)
        for sl in self.u_slices:
            out[sl] = spec.R @ (v[sl] - spec.u_ref)
        return out

    def hess(self, v):
        return self._H.copy()


def _self_check(nlp):
    J = nlp.jac_g(nlp.v0)
    Jfd = ad.fd_jacobian(nlp.g, nlp.v0)
    scale = max(1.0, np.max(np.abs(Jfd)))
    err = np.max(np.abs(J - Jfd)) / scale
    if err > 1e-6:
        raise AssertionError(f"constraint Jacobian self-check failed: rel err {err:g}")


def transcribe_multiple_shooting(spec: OcpSpec, check_jacobian=False) -> Nlp:
    """Shooting NLP: v = (x_0, u_0, ..., u_{N-1}, x_N), gaps Phi_k(x_k,u_k) - x_{k+1}.

    The evaluators expose separate nominal / Jacobian / Hessian entry
    points; the per-interval integrators keep their warm-started stage
    variables between calls, which amortizes the repeated Newton solves.
    """
    model, N = spec.model, spec.N
    nx, nu = model.nx, model.nu
    h_T = spec.T / N
    n_vars = (N + 1) * nx + N * nu
    n_eq = (N + 1) * nx

    x_slices = [slice(k * (nx + nu), k * (nx + nu) + nx) for k in range(N + 1)]
    u_slices = [slice(k * (nx + nu) + nx, (k + 1) * (nx + nu)) for k in range(N)]
    gap_rows = [slice(nx + k * nx, nx + (k + 1) * nx) for k in range(N)]

    if spec.tableau.is_implicit:
        sims = [
            Irk(model, spec.tableau, spec.n_steps, opts=spec.newton) for _ in range(N)
        ]
    else:
        sims = [Erk(model, spec.tableau, spec.n_steps) for _ in range(N)]

    def _phi(k, xk, uk, mode, seed=None):
        sim = sims[k]
        if spec.reset_each_eval and isinstance(sim, Irk):
            sim.reset_stage_guess()
        if mode == "sim":
            return sim.simulate(xk, uk, h_T)
        if mode == "fwd":
            return sim.forward(xk, uk, h_T)
        return sim.hessian(xk, uk, h_T, seed)

    cost = _QuadCost(spec, x_slices, u_slices, n_vars)

    def g(v):
        out = np.empty(n_eq)
        out[:nx] = v[x_slices[0]] - spec.x0_bar
        for k in range(N):
            out[gap_rows[k]] = _phi(k, v[x_slices[k]], v[u_slices[k]], "sim").x_next - v[x_slices[k + 1]]
        return out

    def jac_g(v):
        J = np.zeros((n_eq, n_vars))
        J[:nx, x_slices[0]] = np.eye(nx)
        for k in range(N):
            S = _phi(k, v[x_slices[k]], v[u_slices[k]], "fwd").S_forw
            J[gap_rows[k], x_slices[k]] = S[:, :nx]
            J[gap_rows[k], u_slices[k]] = S[:, nx:]
            J[gap_rows[k], x_slices[k + 1]] = -np.eye(nx)
        return J

    def lag_hess(v, nu_mult):
        H = cost.hess(v)
        for k in range(N):
            seed = nu_mult[gap_rows[k]]
            blk = _phi(k, v[x_slices[k]], v[u_slices[k]], "hess", seed=seed).hess
            sl = slice(x_slices[k].start, u_slices[k].stop)
            H[sl, sl] += blk
        return H

    v0 = np.empty(n_vars)
    for sl in x_slices:
        v0[sl] = spec.x0_bar
    for sl in u_slices:
        v0[sl] = spec.u_ref

    layout = [(f"x{k}", sl.start, sl.stop) for k, sl in enumerate(x_slices)]
    layout += [(f"u{k}", sl.start, sl.stop) for k, sl in enumerate(u_slices)]
    eq_layout = [("x0_fix", 0, nx)] + [
        (f"gap{k}", sl.start, sl.stop) for k, sl in enumerate(gap_rows)
    ]
    nlp = Nlp(
        n_vars=n_vars,
        n_eq=n_eq,
        f=cost.f,
        grad_f=cost.grad,
        g=g,
        jac_g=jac_g,
        lag_hess=lag_hess,
        cost_hess=cost.hess,
        v0=v0,
        layout=sorted(layout, key=lambda t: t[1]),
        eq_layout=eq_layout,
    )
    if check_jacobian:
        _self_check(nlp)
    return nlp


def transcribe_collocation(spec: OcpSpec, stage_guess="consistent", check_jacobian=False) -> Nlp:
    """Collocation NLP: stage variables join the decision vector.

    v interleaves (x_k, u_k, W_k) per interval with W_k holding the
    (k_i, z_i) stage unknowns of every sub-step, then x_N. Constraints are
    the initial condition, all stage residuals, and per-interval continuity
    chaining the sub-step updates to x_{k+1}. Derivatives are assembled
    directly from the residual sweeps; no integrator runs inside.
    """
    model, N = spec.model, spec.N
    if not spec.tableau.is_implicit:
        raise ValueError("collocation requires an implicit tableau")
    nx, nu, nz = model.nx, model.nu, model.nz
    s = spec.tableau.s
    A, b = spec.tableau.A, spec.tableau.b
    n_steps = spec.n_steps
    h = spec.T / (N * n_steps)
    nw = s * (nx + nz)
    blk = nx + nu + n_steps * nw  # per-interval variable block
    n_vars = N * blk + nx
    n_stage = n_steps * nw
    n_eq = nx + N * (n_stage + nx)

    x_slices = [slice(k * blk, k * blk + nx) for k in range(N)] + [slice(N * blk, N * blk + nx)]
    u_slices = [slice(k * blk + nx, k * blk + nx + nu) for k in range(N)]
    w_slices = [slice(k * blk + nx + nu, (k + 1) * blk) for k in range(N)]
    stage_rows = [slice(nx + k * (n_stage + nx), nx + k * (n_stage + nx) + n_stage) for k in range(N)]
    cont_rows = [
        slice(nx + k * (n_stage + nx) + n_stage, nx + (k + 1) * (n_stage + nx)) for k in range(N)
    ]

    def interval_residuals(xk, uk, Wk):
        """Stage residuals of all sub-steps, chaining the step states internally."""
        xs = xk
        parts = []
        for mstep in range(n_steps):
            wm = Wk[mstep * nw : (mstep + 1) * nw]
            km = wm[: s * nx].reshape((s, nx))
            zm = wm[s * nx :].reshape((s, nz))
            for i in range(s):
                xi = xs
                for j in range(s):
                    if A[i, j] != 0.0:
                        xi = xi + (h * A[i, j]) * km[j]
                parts.append(model.residual(km[i], xi, uk, zm[i]))
            incr = None
            for j in range(s):
                if b[j] != 0.0:
                    term = b[j] * km[j]
                    incr = term if incr is None else incr + term
            xs = xs + h * incr
        return ad.stack(parts)

    # continuity is affine: x_{k+1} = x_k + h * sum_steps sum_j b_j k_{step,j}
    k_weight = np.zeros((nx, n_steps * nw))
    for mstep in range(n_steps):
        for j in range(s):
            c0 = mstep * nw + j * nx
            k_weight[:, c0 : c0 + nx] += (h * b[j]) * np.eye(nx)

    cost = _QuadCost(spec, x_slices, u_slices, n_vars)

    def g(v):
        out = np.empty(n_eq)
        out[:nx] = v[x_slices[0]] - spec.x0_bar
        for k in range(N):
            xk, uk, Wk = v[x_slices[k]], v[u_slices[k]], v[w_slices[k]]
            out[stage_rows[k]] = interval_residuals(xk, uk, Wk)
            out[cont_rows[k]] = xk + k_weight @ Wk - v[x_slices[k + 1]]
        return out

    def jac_g(v):
        J = np.zeros((n_eq, n_vars))
        J[:nx, x_slices[0]] = np.eye(nx)
        for k in range(N):
            xk, uk, Wk = v[x_slices[k]], v[u_slices[k]], v[w_slices[k]]
            Jx, Ju, Jw = ad.jacobian_args(interval_residuals, (xk, uk, Wk), wrt=(0, 1, 2))
            J[stage_rows[k], x_slices[k]] = Jx
            J[stage_rows[k], u_slices[k]] = Ju
            J[stage_rows[k], w_slices[k]] = Jw
            J[cont_rows[k], x_slices[k]] = np.eye(nx)
            J[cont_rows[k], w_slices[k]] = k_weight
            J[cont_rows[k], x_slices[k + 1]] = -np.eye(nx)
        return J

    def lag_hess(v, nu_mult):
        H = cost.hess(v)
        for k in range(N):
            xk, uk, Wk = v[x_slices[k]], v[u_slices[k]], v[w_slices[k]]
            seed = nu_mult[stage_rows[k]]

            def fun(vk):
                return interval_residuals(vk[:nx], vk[nx : nx + nu], vk[nx + nu :])

            Hk = ad.hessian_vec(fun, np.concatenate([xk, uk, Wk]), seed)
            sl = slice(x_slices[k].start, w_slices[k].stop)
            H[sl, sl] += Hk
        return H

    v0 = np.empty(n_vars)
    if stage_guess == "consistent" and model.is_explicit_capable:
        k_guess = np.asarray(model.explicit_rhs(spec.x0_bar, spec.u_ref), float)
    elif stage_guess in ("consistent", "zero"):
        k_guess = np.zeros(nx)
    else:
        raise ValueError(f"unknown stage_guess {stage_guess!r}")
    w_guess = np.concatenate([np.tile(k_guess, s), np.zeros(s * nz)])
    for k in range(N):
        v0[x_slices[k]] = spec.x0_bar
        v0[u_slices[k]] = spec.u_ref
        v0[w_slices[k]] = np.tile(w_guess, n_steps)
    v0[x_slices[N]] = spec.x0_bar

    layout = [(f"x{k}", sl.start, sl.stop) for k, sl in enumerate(x_slices)]
    layout += [(f"u{k}", sl.start, sl.stop) for k, sl in enumerate(u_slices)]
    layout += [(f"w{k}", sl.start, sl.stop) for k, sl in enumerate(w_slices)]
    eq_layout = [("x0_fix", 0, nx)]
    eq_layout += [(f"stage{k}", sl.start, sl.stop) for k, sl in enumerate(stage_rows)]
    eq_layout += [(f"cont{k}", sl.start, sl.stop) for k, sl in enumerate(cont_rows)]
    nlp = Nlp(
        n_vars=n_vars,
        n_eq=n_eq,
        f=cost.f,
        grad_f=cost.grad,
        g=g,
        jac_g=jac_g,
        lag_hess=lag_hess,
        cost_hess=cost.hess,
        v0=v0,
        layout=sorted(layout, key=lambda t: t[1]),
        eq_layout=sorted(eq_layout, key=lambda t: t[1]),
    )
    if check_jacobian:
        _self_check(nlp)
    return nlp
