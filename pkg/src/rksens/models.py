"""Dynamics models: implicit DAE residuals plus the shipped test systems.

A model supplies one residual ``f(xdot, x, u, z) -> R^(nx+nz)`` written
against the generic array operations from :mod:`rksens.ad`, so the same
definition serves nominal evaluation and first/second-order sweeps without
hand-coded Jacobians. Explicit-capable ODE models additionally expose
``f_expl(x, u)`` and derive their residual as ``xdot - f_expl(x, u)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import ad

__all__ = [
    "DynamicsModel",
    "ConvergenceError",
    "make_linear_test",
    "make_algebraic_test",
    "make_algebraic_reduced",
    "make_chain",
    "steady_state",
    "chain_energy",
    "linear_exact",
    "get_model",
    "registry_names",
]


class ConvergenceError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""


@dataclass(frozen=True)
class DynamicsModel:
    """Implicit index-1 DAE ``f(xdot, x, u, z) = 0`` with optional explicit form."""

    name: str
    nx: int
    nu: int
    nz: int
    residual: Callable
    explicit_rhs: Optional[Callable] = None
    params: dict = field(default_factory=dict)
    ref_state: np.ndarray = None
    ref_u: np.ndarray = None

    def __post_init__(self):
        ref_x = np.zeros(self.nx) if self.ref_state is None else np.asarray(self.ref_state, float)
        ref_u = np.zeros(self.nu) if self.ref_u is None else np.asarray(self.ref_u, float)
        object.__setattr__(self, "ref_state", ref_x)
        object.__setattr__(self, "ref_u", ref_u)
        _validate_model(self)

    @property
    def is_explicit_capable(self):
        return self.explicit_rhs is not None and self.nz == 0


def _validate_model(model):
    xdot0 = np.zeros(model.nx)
    z0 = np.zeros(model.nz)
    r = np.asarray(model.residual(xdot0, model.ref_state, model.ref_u, z0), float)
    if r.shape != (model.nx + model.nz,):
        raise ValueError(
            f"model {model.name}: residual returns shape {r.shape}, expected ({model.nx + model.nz},)"
        )
    if model.explicit_rhs is not None:
        if model.nz != 0:
            raise ValueError(f"model {model.name}: explicit form requires nz = 0")
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = model.ref_state + rng.standard_normal(model.nx)
            u = rng.standard_normal(model.nu)
            xd = rng.standard_normal(model.nx)
            lhs = np.asarray(model.residual(xd, x, u, z0), float)
            rhs = xd - np.asarray(model.explicit_rhs(x, u), float)
            if np.max(np.abs(lhs - rhs)) > 1e-12:
                raise ValueError(f"model {model.name}: residual inconsistent with explicit_rhs")
    # index-1: d f / d(xdot, z) invertible at the reference point
    jx, jz = ad.jacobian_args(
        model.residual, (xdot0, model.ref_state, model.ref_u, z0), wrt=(0, 3)
    )
    J = np.hstack([jx, jz])
    if not np.isfinite(J).all() or np.linalg.cond(J) > 1e12:
        raise ValueError(f"model {model.name}: residual is not index-1 at the reference state")


def _explicit_residual(f_expl):
    def residual(xdot, x, u, z):
        return xdot - f_expl(x, u)

    return residual


def make_linear_test(lam=-1.0):
    """Scalar linear ODE xdot = lam*x + u with a closed-form solution."""

    def f_expl(x, u):
        return x * lam + u

    return DynamicsModel(
        name="linear",
        nx=1,
        nu=1,
        nz=0,
        residual=_explicit_residual(f_expl),
        explicit_rhs=f_expl,
        params={"lam": lam},
        ref_state=np.array([1.0]),
        ref_u=np.array([0.0]),
    )


def linear_exact(lam, x0, u, t):
    """Closed-form solution of xdot = lam*x + u from x0 after time t."""
    if lam == 0.0:
        return x0 + u * t
    e = np.exp(lam * t)
    return e * x0 + (e - 1.0) * u / lam


def make_algebraic_test():
    """Index-1 DAE [xdot + x - z - u; z - x^2] = 0, reducible to xdot = -x + x^2 + u."""

    def residual(xdot, x, u, z):
        r0 = xdot[0] + x[0] - z[0] - u[0]
        r1 = z[0] - x[0] * x[0]
        return ad.stack([r0, r1])

    return DynamicsModel(
        name="dae-test",
        nx=1,
        nu=1,
        nz=1,
        residual=residual,
        params={},
        ref_state=np.array([0.5]),
        ref_u=np.array([0.0]),
    )


def make_algebraic_reduced():
    """The ODE obtained from the dae-test model by eliminating z = x^2."""

    def f_expl(x, u):
        return x * x - x + u

    return DynamicsModel(
        name="dae-test-reduced",
        nx=1,
        nu=1,
        nz=0,
        residual=_explicit_residual(f_expl),
        explicit_rhs=f_expl,
        ref_state=np.array([0.5]),
        ref_u=np.array([0.0]),
    )


# hanging chain defaults; configuration values, not fitted to anything
_CHAIN_PARAMS = {"m": 0.033, "D": 1.0, "L": 0.033, "g": (0.0, 0.0, -9.81)}


def make_chain(n_mass, params=None):
    """Hanging chain of ``n_mass`` point masses connected by linear springs.

    The first mass is anchored at the origin; the last mass is velocity
    actuated (pdot_end = u). State layout: positions of the n_mass-2 free
    masses (3 each), their velocities (3 each), then the end position;
    nx = 6*(n_mass-2) + 3, nu = 3.
    """
    if n_mass < 3:
        raise ValueError(f"chain needs n_mass >= 3, got {n_mass}")
    p = dict(_CHAIN_PARAMS)
    if params:
        p.update(params)
    nf = n_mass - 2
    nx = 6 * nf + 3
    m, D, L = p["m"], p["D"], p["L"]
    g = np.asarray(p["g"], float)

    def f_expl(x, u):
        pos = x[0 : 3 * nf].reshape((nf, 3))
        vel = x[3 * nf : 6 * nf]
        p_end = x[6 * nf : 6 * nf + 3]
        # spring vectors: anchor->1, i->i+1, nf->end  (n_mass-1 springs)
        segs = ad.stack(
            [pos[0], (pos[1:] - pos[:-1]).reshape(3 * (nf - 1)), p_end - pos[nf - 1]]
        ).reshape((nf + 1, 3))
        dist = ad.sqrt((segs * segs).sum(axis=1))
        coef = (1.0 - L / dist) * D
        force = coef[:, None] * segs
        acc = ((force[1:] - force[:-1]) * (1.0 / m) + g).reshape(3 * nf)
        return ad.stack([vel, acc, u])

    return DynamicsModel(
        name=f"chain-{n_mass}",
        nx=nx,
        nu=3,
        nz=0,
        residual=_explicit_residual(f_expl),
        explicit_rhs=f_expl,
        params={**p, "n_mass": n_mass},
        ref_state=chain_line_state(n_mass),
        ref_u=np.zeros(3),
    )


def chain_line_state(n_mass, x_end=None, sag=None):
    """Straight-line chain configuration with a parabolic vertical sag.

    Deterministic initial guess for equilibria and simulations.
    """
    nf = n_mass - 2
    p = _CHAIN_PARAMS
    if x_end is None:
        x_end = np.array([2.0 * p["L"] * (n_mass - 1), 0.0, 0.0])
    else:
        x_end = np.asarray(x_end, float)
    if sag is None:
        sag = 0.2 * (n_mass - 1)
    x = np.zeros(6 * nf + 3)
    for j in range(1, nf + 1):
        t = j / (n_mass - 1.0)
        x[3 * (j - 1) : 3 * j] = t * x_end
        x[3 * (j - 1) + 2] -= 4.0 * sag * t * (1.0 - t)
    x[6 * nf : 6 * nf + 3] = x_end
    return x


def chain_energy(model, x):
    """Kinetic + spring + gravitational energy of a chain state (free masses only)."""
    p = model.params
    nf = p["n_mass"] - 2
    m, D, L = p["m"], p["D"], p["L"]
    g = np.asarray(p["g"], float)
    pos = x[0 : 3 * nf].reshape(nf, 3)
    vel = x[3 * nf : 6 * nf].reshape(nf, 3)
    p_end = x[6 * nf : 6 * nf + 3]
    nodes = np.vstack([np.zeros(3), pos, p_end])
    stretch = np.linalg.norm(np.diff(nodes, axis=0), axis=1) - L
    kinetic = 0.5 * m * np.sum(vel**2)
    spring = 0.5 * D * np.sum(stretch**2)
    grav = -m * np.sum(pos @ g)
    return kinetic + spring + grav


def steady_state(model, u, guess, tol=1e-10, max_iters=200):
    """Equilibrium of an explicit-capable model via damped least-squares Newton.

    Uses ``lstsq`` steps so models with a neutral direction (the actuated
    chain end) still converge to a consistent equilibrium.
    """
    if not model.is_explicit_capable:
        raise ValueError(f"model {model.name} is not explicit-capable")
    u = np.asarray(u, float)
    x = np.asarray(guess, float).copy()

    def f(xx):
        return np.asarray(model.explicit_rhs(xx, u), float)

    r = f(x)
    res = np.max(np.abs(r))
    for _ in range(max_iters):
        if res < tol:
            return x
        J = ad.jacobian(lambda xx: model.explicit_rhs(xx, u), x)
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        alpha = 1.0
        while alpha > 1e-14:
            x_try = x + alpha * step
            r_try = f(x_try)
            if np.all(np.isfinite(r_try)) and np.max(np.abs(r_try)) < (1.0 - 1e-4 * alpha) * res:
                x, r = x_try, r_try
                res = np.max(np.abs(r))
                break
            alpha *= 0.5
    raise ConvergenceError(f"steady_state: no convergence in {max_iters} iterations, residual {res:g}")


def consistent_algebraic(model, x, u, tol=1e-12, max_iters=50):
    """Solve f(xdot, x, u, z) = 0 for (xdot, z) at fixed (x, u).

    Index-1 consistent initialization; returns (xdot, z).
    """
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    xdot = np.zeros(model.nx)
    z = np.zeros(model.nz)
    for _ in range(max_iters):
        r = np.asarray(model.residual(xdot, x, u, z), float)
        if np.max(np.abs(r)) < tol:
            return xdot, z
        jxd, jz = ad.jacobian_args(model.residual, (xdot, x, u, z), wrt=(0, 3))
        step = np.linalg.solve(np.hstack([jxd, jz]), -r)
        xdot = xdot + step[: model.nx]
        z = z + step[model.nx :]
    raise ConvergenceError(f"consistent initialization failed (residual {np.max(np.abs(r)):g})")


def get_model(name, **hyper):
    """Look up a model by registry name: linear | dae-test | chain-<n_mass>."""
    if name == "linear":
        return make_linear_test(hyper.get("lam", -1.0))
    if name == "dae-test":
        return make_algebraic_test()
    if name == "dae-test-reduced":
        return make_algebraic_reduced()
    if name.startswith("chain-"):
        try:
            n_mass = int(name.split("-", 1)[1])
        except ValueError:
            raise ValueError(f"bad chain model name {name!r}, expected chain-<n_mass>") from None
        return make_chain(n_mass, params=hyper.get("params"))
    raise ValueError(f"unknown model {name!r}; known: linear, dae-test, chain-<n_mass>")


def registry_names():
    return ["linear", "dae-test", "dae-test-reduced", "chain-<n_mass>"]
