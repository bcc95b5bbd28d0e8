"""Explicit Runge-Kutta integration with exact discrete sensitivities.

The nominal recursion is written once, generically over the scalar type:
running it on plain arrays gives the simulation, on first-order duals the
variational (forward) sensitivities, on second-order duals the exact
Hessian of a seeded output. The adjoint is a reverse sweep through stored
stage values. Because all modes share the same code path, the nominal
value is bitwise identical whichever mode is requested.
"""

from __future__ import annotations

import numpy as np

from . import ad
from .butcher import ButcherTableau
from .simout import IntegrationError, SimOutput

__all__ = ["Erk", "erk_simulate", "erk_forward", "erk_adjoint", "erk_hessian"]


class Erk:
    """Fixed-step ERK integrator bound to one (model, tableau, n_steps).

    The stage-history buffers consumed by the adjoint sweep are sized once
    here and reused across calls.
    """

    def __init__(self, model, tableau: ButcherTableau, n_steps):
        if tableau.is_implicit:
            raise ValueError("Erk requires an explicit tableau")
        if not model.is_explicit_capable:
            raise ValueError(f"model {model.name} is not explicit-capable")
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        self.model = model
        self.tableau = tableau
        self.n_steps = int(n_steps)
        s, nx = tableau.s, model.nx
        # stage history, filled by nominal passes and consumed by the adjoint
        self._stage_x = np.empty((self.n_steps, s, nx))
        self._stage_k = np.empty((self.n_steps, s, nx))

    # -- generic core --------------------------------------------------------

    def _integrate(self, x, u, h, record=False):
        f = self.model.explicit_rhs
        A, b = self.tableau.A, self.tableau.b
        s = self.tableau.s
        for step in range(self.n_steps):
            ks = []
            for i in range(s):
                xi = x
                for j in range(i):
                    aij = A[i, j]
                    if aij != 0.0:
                        xi = xi + (h * aij) * ks[j]
                k = f(xi, u)
                if record:
                    self._stage_x[step, i] = ad.value(xi)
                    self._stage_k[step, i] = ad.value(k)
                ks.append(k)
            incr = None
            for j in range(s):
                if b[j] != 0.0:
                    term = b[j] * ks[j]
                    incr = term if incr is None else incr + term
            x = x + h * incr
            if not np.all(np.isfinite(ad.value(x))):
                raise IntegrationError(f"non-finite state after step {step}", step=step)
        return x

    def _input_dirs(self):
        nx, nu = self.model.nx, self.model.nu
        dx = np.zeros((nx, nx + nu))
        dx[:, :nx] = np.eye(nx)
        du = np.zeros((nu, nx + nu))
        du[:, nx:] = np.eye(nu)
        return dx, du

    # -- entry points ----------------------------------------------------------

    def simulate(self, x0, u0, T_sim):
        x0 = np.asarray(x0, float)
        u0 = np.asarray(u0, float)
        if T_sim == 0.0:
            return SimOutput(x_next=x0.copy(), z_out=np.zeros(0))
        x = self._integrate(x0, u0, T_sim / self.n_steps)
        return SimOutput(x_next=x, z_out=np.zeros(0))

    def forward(self, x0, u0, T_sim):
        x0 = np.asarray(x0, float)
        u0 = np.asarray(u0, float)
        nx, nu = self.model.nx, self.model.nu
        if T_sim == 0.0:
            S = np.hstack([np.eye(nx), np.zeros((nx, nu))])
            return SimOutput(x_next=x0.copy(), z_out=np.zeros(0), S_forw=S)
        dx, du = self._input_dirs()
        y = self._integrate(ad.Dual1(x0, dx), ad.Dual1(u0, du), T_sim / self.n_steps)
        return SimOutput(x_next=y.val.copy(), z_out=np.zeros(0), S_forw=y.dot.copy())

    def adjoint(self, x0, u0, T_sim, seed):
        x0 = np.asarray(x0, float)
        u0 = np.asarray(u0, float)
        seed = np.asarray(seed, float)
        nx, nu = self.model.nx, self.model.nu
        if T_sim == 0.0:
            return SimOutput(
                x_next=x0.copy(), z_out=np.zeros(0), grad_adj=np.concatenate([seed, np.zeros(nu)])
            )
        h = T_sim / self.n_steps
        x_next = self._integrate(x0, u0, h, record=True)

        A, b = self.tableau.A, self.tableau.b
        s = self.tableau.s
        f = self.model.explicit_rhs
        lam = seed.copy()
        gu = np.zeros(nu)
        for step in reversed(range(self.n_steps)):
            kbar = [h * b[i] * lam for i in range(s)]
            for i in reversed(range(s)):
                Jx, Ju = ad.jacobian_args(f, (self._stage_x[step, i], u0), wrt=(0, 1))
                xbar = Jx.T @ kbar[i]
                gu += Ju.T @ kbar[i]
                lam = lam + xbar
                for j in range(i):
                    if A[i, j] != 0.0:
                        kbar[j] = kbar[j] + (h * A[i, j]) * xbar
        return SimOutput(
            x_next=x_next, z_out=np.zeros(0), grad_adj=np.concatenate([lam, gu])
        )

    def hessian(self, x0, u0, T_sim, seed):
        x0 = np.asarray(x0, float)
        u0 = np.asarray(u0, float)
        seed = np.asarray(seed, float)
        nx, nu = self.model.nx, self.model.nu
        m = nx + nu
        if T_sim == 0.0:
            return SimOutput(
                x_next=x0.copy(),
                z_out=np.zeros(0),
                grad_adj=np.concatenate([seed, np.zeros(nu)]),
                hess=np.zeros((m, m)),
            )
        dx, du = self._input_dirs()
        xd = ad.Dual2(x0, dx, dx, np.zeros((nx, m, m)))
        ud = ad.Dual2(u0, du, du, np.zeros((nu, m, m)))
        y = self._integrate(xd, ud, T_sim / self.n_steps)
        grad = seed @ y.da
        H = np.einsum("k,kij->ij", seed, y.dab)
        return SimOutput(
            x_next=y.val.copy(),
            z_out=np.zeros(0),
            grad_adj=grad,
            hess=0.5 * (H + H.T),
        )


def erk_simulate(model, tableau, x0, u0, T_sim, n_steps):
    return Erk(model, tableau, n_steps).simulate(x0, u0, T_sim)


def erk_forward(model, tableau, x0, u0, T_sim, n_steps):
    return Erk(model, tableau, n_steps).forward(x0, u0, T_sim)


def erk_adjoint(model, tableau, x0, u0, T_sim, n_steps, seed):
    return Erk(model, tableau, n_steps).adjoint(x0, u0, T_sim, seed)


def erk_hessian(model, tableau, x0, u0, T_sim, n_steps, seed):
    return Erk(model, tableau, n_steps).hessian(x0, u0, T_sim, seed)
