"""Implicit Runge-Kutta integration for index-1 DAEs.

Per step, the stacked stage system

    r_i(w) = f(k_i, x0 + h * sum_j a_ij k_j, u0, z_i) = 0,   w = (k_1..k_s, z_1..z_s)

is solved by Newton iterations with a dense LU of the iteration matrix.
Stage variables warm-start from the previous call and persist until
``reset_stage_guess``. First-order forward sensitivities come from the
implicit function theorem at the converged stages, the adjoint from one
transposed solve per step, and the Hessian from second-order sweeps of the
stage residual contracted against the adjoint multipliers. All sensitivities
are derivatives of the converged discrete map, not of the truncated Newton
iteration; use a residual tolerance (and ``freeze_jacobian=False``) when
they must agree with finite differences of the nominal output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import ad
from .butcher import ButcherTableau
from .models import ConvergenceError
from .simout import IntegrationError, SimOutput, SimStats

__all__ = [
    "NewtonOpts",
    "Irk",
    "irk_simulate",
    "irk_forward",
    "irk_adjoint",
    "irk_hessian",
]

_MODES = ("forward", "adjoint", "hessian")


@dataclass(frozen=True)
class NewtonOpts:
    """Termination and linear-algebra controls for the stage Newton solve.

    ``tol = 0`` disables the residual test (pure fixed-iteration mode);
    ``max_iters`` always bounds the loop. With ``freeze_jacobian`` the
    iteration matrix is factorized once per step, at the incoming stage
    guess, and reused — including for the forward sensitivity solve, so
    exact IFT sensitivities at warm-started points need
    ``freeze_jacobian=False``.
    """

    max_iters: int = 3
    tol: float = 0.0
    freeze_jacobian: bool = True
    strict: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0.0:
            raise ValueError("tol must be >= 0")


class Irk:
    """Fixed-step IRK integrator bound to one (model, tableau, n_steps).

    ``sens`` names the sensitivity modes covered by the construction-time
    allocation; ``set_sens_options`` can only toggle within that set. All
    workspace and history buffers are sized here once.
    """

    def __init__(self, model, tableau: ButcherTableau, n_steps, opts=None, sens=_MODES):
        if not tableau.is_implicit:
            raise ValueError("Irk requires an implicit tableau")
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        unknown = set(sens) - set(_MODES)
        if unknown:
            raise ValueError(f"unknown sensitivity modes {sorted(unknown)}")
        self.model = model
        self.tableau = tableau
        self.n_steps = int(n_steps)
        self.opts = opts if opts is not None else NewtonOpts()

        s, nx, nz, nu = tableau.s, model.nx, model.nz, model.nu
        self._nw = s * (nx + nz)
        self.w = np.zeros(self._nw)  # persistent warm start
        self._lu = None  # factorization of the current step's iteration matrix
        self._allocated = frozenset(sens)
        self._enabled = set(sens)
        if {"adjoint", "hessian"} & self._allocated:
            self._hist_w = np.empty((self.n_steps, self._nw))
            self._hist_x = np.empty((self.n_steps + 1, nx))
        if "hessian" in self._allocated:
            self._hist_S = np.empty((self.n_steps, nx, nx + nu))

    # -- options -----------------------------------------------------------

    def set_sens_options(self, forward=None, adjoint=None, hessian=None):
        """Enable/disable sensitivity modes within the allocated set."""
        for mode, flag in (("forward", forward), ("adjoint", adjoint), ("hessian", hessian)):
            if flag is None:
                continue
            if flag:
                if mode not in self._allocated:
                    raise ValueError(f"mode {mode!r} was not allocated at construction")
                self._enabled.add(mode)
            else:
                self._enabled.discard(mode)

    def reset_stage_guess(self):
        """Zero the warm-start copy; the next step starts Newton from w = 0."""
        self.w[:] = 0.0
        self._lu = None

    # -- stage system --------------------------------------------------------

    def _split(self, w):
        s, nx, nz = self.tableau.s, self.model.nx, self.model.nz
        return w[: s * nx].reshape(s, nx), w[s * nx :].reshape(s, nz)

    def _residual(self, w, x0, u0, h):
        s = self.tableau.s
        k, z = self._split(w)
        X = x0 + h * (self.tableau.A @ k)
        return np.concatenate([self.model.residual(k[i], X[i], u0, z[i]) for i in range(s)])

    def _partials(self, w, x0, u0, h, with_u):
        """Per-stage Jacobian blocks (d/dxdot, d/dx, d/du, d/dz) of the residual."""
        s = self.tableau.s
        k, z = self._split(w)
        X = x0 + h * (self.tableau.A @ k)
        wrt = (0, 1, 2, 3) if with_u else (0, 1, 3)
        out = []
        for i in range(s):
            blocks = ad.jacobian_args(self.model.residual, (k[i], X[i], u0, z[i]), wrt=wrt)
            if with_u:
                out.append(tuple(blocks))
            else:
                out.append((blocks[0], blocks[1], None, blocks[2]))
        return out

    def _iteration_matrix(self, partials, h):
        s, nx, nz = self.tableau.s, self.model.nx, self.model.nz
        A = self.tableau.A
        nr = nx + nz
        M = np.zeros((self._nw, self._nw))
        for i in range(s):
            jxd, jx, _, jz = partials[i]
            r0 = i * nr
            for j in range(s):
                blk = (h * A[i, j]) * jx
                if i == j:
                    blk = blk + jxd
                M[r0 : r0 + nr, j * nx : (j + 1) * nx] = blk
            if nz:
                M[r0 : r0 + nr, s * nx + i * nz : s * nx + (i + 1) * nz] = jz
        return M

    def _factorize(self, M, stats):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(M, check_finite=False)
        if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) == 0.0:
            raise IntegrationError("singular iteration matrix (index violation or bad state)")
        stats.factorizations += 1
        return lu

    def _stage_rhs_blocks(self, partials):
        """B = dr/d(x_in, u) stacked over stages."""
        s, nx, nz, nu = self.tableau.s, self.model.nx, self.model.nz, self.model.nu
        nr = nx + nz
        B = np.empty((self._nw, nx + nu))
        for i in range(s):
            _, jx, ju, _ = partials[i]
            B[i * nr : (i + 1) * nr, :nx] = jx
            B[i * nr : (i + 1) * nr, nx:] = ju
        return B

    # -- Newton solve of one step -----------------------------------------------

    def _newton(self, x0, u0, h, stats):
        opts = self.opts
        self._lu = None  # one factorization scope per step
        converged = opts.tol <= 0.0
        iters = 0
        while True:
            r = self._residual(self.w, x0, u0, h)
            if not np.all(np.isfinite(r)):
                raise IntegrationError(f"non-finite stage residual at Newton iteration {iters}")
            stats.last_residual = float(np.max(np.abs(r)))
            if opts.tol > 0.0 and stats.last_residual < opts.tol:
                converged = True
                break
            if iters >= opts.max_iters:
                break
            if self._lu is None or not opts.freeze_jacobian:
                M = self._iteration_matrix(self._partials(self.w, x0, u0, h, with_u=False), h)
                self._lu = self._factorize(M, stats)
            self.w -= scipy.linalg.lu_solve(self._lu, r, check_finite=False)
            iters += 1
            stats.newton_iters_total += 1
        if not converged:
            stats.converged = False
            if opts.strict:
                raise ConvergenceError(
                    f"stage Newton did not reach tol={opts.tol:g} within "
                    f"{opts.max_iters} iterations (residual {stats.last_residual:g})"
                )
        return converged

    def step(self, x0, u0, h):
        """One warm-started IRK step; returns (x_plus, z_stages, converged)."""
        x0 = np.asarray(x0, float)
        u0 = np.asarray(u0, float)
        stats = SimStats()
        converged = self._newton(x0, u0, h, stats)
        k, z = self._split(self.w)
        return x0 + h * (self.tableau.b @ k), z.copy(), converged

    # -- full runs ------------------------------------------------------------

    def _sens_lu(self, partials, h, stats):
        """LU used for the IFT solves of the current step.

        Frozen mode reuses the Newton factorization as-is; otherwise the
        matrix is rebuilt and factorized exactly once at the converged point.
        """
        if self.opts.freeze_jacobian and self._lu is not None:
            return self._lu
        return self._factorize(self._iteration_matrix(partials, h), stats)

    def _run(self, x0, u0, T_sim, seed=None, want_f=False, want_a=False, want_h=False):
        x0 = np.asarray(x0, float)
        u0 = np.asarray(u0, float)
        nx, nu, nz = self.model.nx, self.model.nu, self.model.nz
        s = self.tableau.s
        b = self.tableau.b
        stats = SimStats()
        out = SimOutput(x_next=x0.copy(), z_out=np.zeros(nz), stats=stats)
        if want_a or want_h:
            seed = np.asarray(seed, float)
            if seed.shape != (nx,):
                raise ValueError(f"seed must have shape ({nx},)")
        if T_sim == 0.0:
            if want_f:
                out.S_forw = np.hstack([np.eye(nx), np.zeros((nx, nu))])
            if want_a or want_h:
                out.grad_adj = np.concatenate([seed, np.zeros(nu)])
            if want_h:
                out.hess = np.zeros((nx + nu, nx + nu))
            return out

        h = T_sim / self.n_steps
        need_S = want_f or want_h
        need_hist = want_a or want_h
        E_u = np.hstack([np.zeros((nu, nx)), np.eye(nu)])
        S = np.hstack([np.eye(nx), np.zeros((nx, nu))]) if need_S else None
        x = x0.copy()
        for step in range(self.n_steps):
            if need_hist:
                self._hist_x[step] = x
            if want_h:
                self._hist_S[step] = S
            self._newton(x, u0, h, stats)
            if need_hist:
                self._hist_w[step] = self.w
            if need_S:
                partials = self._partials(self.w, x, u0, h, with_u=True)
                lu = self._sens_lu(partials, h, stats)
                B = self._stage_rhs_blocks(partials)
                W = scipy.linalg.lu_solve(
                    lu, -(B[:, :nx] @ S + B[:, nx:] @ E_u), check_finite=False
                )
                S = S + h * np.einsum("j,jnm->nm", b, W[: s * nx].reshape(s, nx, nx + nu))
            k, _ = self._split(self.w)
            x = x + h * (b @ k)
            if not np.all(np.isfinite(x)):
                raise IntegrationError(f"non-finite state after step {step}", step=step)
        if need_hist:
            self._hist_x[self.n_steps] = x
        _, z = self._split(self.w)
        out.x_next = x
        out.z_out = z[-1].copy()
        if want_f:
            out.S_forw = S

        if need_hist:
            lam = seed.copy()
            gu = np.zeros(nu)
            H = np.zeros((nx + nu, nx + nu)) if want_h else None
            for step in reversed(range(self.n_steps)):
                g_x, g_u, H_loc = self._reverse_step(step, u0, h, lam, stats, want_h)
                if want_h:
                    T = np.vstack([self._hist_S[step], E_u])
                    H += T.T @ H_loc @ T
                lam = g_x
                gu += g_u
            out.grad_adj = np.concatenate([lam, gu])
            if want_h:
                out.hess = 0.5 * (H + H.T)
        return out

    def _reverse_step(self, step, u0, h, lam, stats, want_local_hess):
        """Transposed IFT solve at the stored converged stages of one step.

        Returns (g_x, g_u, H_loc) with d(lam.x_out) = g_x.dx_in + g_u.du and,
        when requested, the local Hessian of lam.x_out over (x_in, u).
        """
        s, nx, nu = self.tableau.s, self.model.nx, self.model.nu
        w_step = self._hist_w[step]
        x_in = self._hist_x[step]
        partials = self._partials(w_step, x_in, u0, h, with_u=True)
        lu = self._factorize(self._iteration_matrix(partials, h), stats)
        c = np.zeros(self._nw)
        for j in range(s):
            c[j * nx : (j + 1) * nx] = (h * self.tableau.b[j]) * lam
        mu = scipy.linalg.lu_solve(lu, -c, trans=1, check_finite=False)
        B = self._stage_rhs_blocks(partials)
        g = B.T @ mu
        if not want_local_hess:
            return lam + g[:nx], g[nx:], None
        W = scipy.linalg.lu_solve(lu, -B, check_finite=False)
        dirs = np.vstack([W, np.eye(nx + nu)])
        H_loc = self._contracted_stage_hessian(w_step, x_in, u0, h, mu, dirs)
        return lam + g[:nx], g[nx:], H_loc

    def _contracted_stage_hessian(self, w_step, x_in, u0, h, mu, dirs):
        """Directional Hessian of mu . r over v = (w, x_in, u) along ``dirs``."""
        s, nx, nz, nu = self.tableau.s, self.model.nx, self.model.nz, self.model.nu
        nw = self._nw
        m = dirs.shape[1]
        A = self.tableau.A
        wd = ad.Dual2(w_step, dirs[:nw], dirs[:nw], np.zeros((nw, m, m)))
        xd = ad.Dual2(x_in, dirs[nw : nw + nx], dirs[nw : nw + nx], np.zeros((nx, m, m)))
        ud = ad.Dual2(u0, dirs[nw + nx :], dirs[nw + nx :], np.zeros((nu, m, m)))
        k = wd[: s * nx].reshape((s, nx))
        z = wd[s * nx :].reshape((s, nz))
        nr = nx + nz
        H = np.zeros((m, m))
        for i in range(s):
            xi = xd
            for j in range(s):
                if A[i, j] != 0.0:
                    xi = xi + (h * A[i, j]) * k[j]
            ri = self.model.residual(k[i], xi, ud, z[i])
            if isinstance(ri, ad.Dual2):
                H += np.einsum("k,kij->ij", mu[i * nr : (i + 1) * nr], ri.dab.reshape(nr, m, m))
        return H

    # -- public entry points -------------------------------------------------

    def simulate(self, x0, u0, T_sim):
        return self._run(x0, u0, T_sim)

    def forward(self, x0, u0, T_sim):
        self._require("forward")
        return self._run(x0, u0, T_sim, want_f=True)

    def adjoint(self, x0, u0, T_sim, seed):
        self._require("adjoint")
        return self._run(x0, u0, T_sim, seed=seed, want_a=True)

    def hessian(self, x0, u0, T_sim, seed):
        self._require("hessian")
        return self._run(x0, u0, T_sim, seed=seed, want_h=True)

    def run(self, x0, u0, T_sim, seed=None):
        """Single call computing exactly the currently enabled modes."""
        want_f = "forward" in self._enabled
        want_a = "adjoint" in self._enabled
        want_h = "hessian" in self._enabled
        if (want_a or want_h) and seed is None:
            raise ValueError("adjoint/hessian modes need a seed vector")
        return self._run(x0, u0, T_sim, seed=seed, want_f=want_f, want_a=want_a, want_h=want_h)

    def _require(self, mode):
        if mode not in self._enabled:
            raise ValueError(
                f"sensitivity mode {mode!r} is disabled (allocated: {sorted(self._allocated)})"
            )


def irk_simulate(model, tableau, x0, u0, T_sim, n_steps, opts=None):
    return Irk(model, tableau, n_steps, opts=opts, sens=()).simulate(x0, u0, T_sim)


def irk_forward(model, tableau, x0, u0, T_sim, n_steps, opts=None):
    return Irk(model, tableau, n_steps, opts=opts).forward(x0, u0, T_sim)


def irk_adjoint(model, tableau, x0, u0, T_sim, n_steps, seed, opts=None):
    return Irk(model, tableau, n_steps, opts=opts).adjoint(x0, u0, T_sim, seed)


def irk_hessian(model, tableau, x0, u0, T_sim, n_steps, seed, opts=None):
    return Irk(model, tableau, n_steps, opts=opts).hessian(x0, u0, T_sim, seed)
