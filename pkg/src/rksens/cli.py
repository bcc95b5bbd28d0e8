"""Command-line driver: simulate | sens-check | order-study | solve-ocp | bench.

Emits machine-readable CSV/JSON. Timing fields are medians over ``--reps``
repetitions; everything else is deterministic for a fixed configuration.
Config precedence: command-line flags override the JSON config file, which
overrides built-in defaults.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from . import ad
from . import ocp as ocp_mod
from . import sqp as sqp_mod
from .butcher import SchemeFamily, make_tableau
from .erk import Erk
from .irk import Irk, NewtonOpts
from .models import ConvergenceError, consistent_algebraic, get_model, steady_state
from .simout import IntegrationError

_FAMILY_ALIASES = {
    "gauss-legendre": SchemeFamily.GAUSS_LEGENDRE,
    "gl": SchemeFamily.GAUSS_LEGENDRE,
    "radau-iia": SchemeFamily.RADAU_IIA,
    "radau": SchemeFamily.RADAU_IIA,
    "rk4": SchemeFamily.RK4,
    "euler": SchemeFamily.EULER,
    "heun": SchemeFamily.HEUN,
}

# documented thresholds of the sens-check command
SENS_THRESHOLDS = {
    "max_rel_err_forward": 1e-6,
    "adj_consistency": 1e-12,
    "hess_fd_err": 1e-5,
    "hess_asym": 0.0,
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str = ""
    model: str = "chain-3"
    family: str = "gauss-legendre"
    s: int = 2
    n_steps: int = 1
    T: float = None  # T_sim (simulate/sens-check/order-study) or horizon (solve-ocp/bench)
    newton_iters: int = None
    newton_tol: float = None
    freeze_jac: bool = None
    transcription: str = "shooting"  # shooting | collocation
    N: int = 20
    hessian: str = "gn"  # gn | exact
    out: str = None
    reps: int = 1
    points: int = 5  # sens-check evaluation points
    base_steps: int = None  # order-study coarsest n_steps
    sweep: list = None  # bench n_mass values
    sqp_max_iters: int = 30
    kkt_tol: float = 1e-7

    def tableau(self):
        fam = _FAMILY_ALIASES.get(self.family)
        if fam is None:
            raise ConfigError(f"unknown family {self.family!r}; known: {sorted(_FAMILY_ALIASES)}")
        try:
            return make_tableau(fam, self.s if fam.is_implicit else None)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def newton(self, default_iters, default_tol, default_freeze):
        return NewtonOpts(
            max_iters=self.newton_iters if self.newton_iters is not None else default_iters,
            tol=self.newton_tol if self.newton_tol is not None else default_tol,
            freeze_jacobian=self.freeze_jac if self.freeze_jac is not None else default_freeze,
        )


_CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"command"}


def _fmt(x):
    return f"{float(x):.17g}"


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _write_json(path, payload):
    text = json.dumps(payload, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# shared scenario setup


def _study_scenario(model):
    """Deterministic non-equilibrium start for convergence studies."""
    if model.name.startswith("chain"):
        x_eq = steady_state(model, np.zeros(model.nu), model.ref_state)
        x0 = x_eq + 0.01 * np.cos(3.0 * np.arange(model.nx))
        u0 = np.array([0.05, -0.03, 0.02])
        return x0, u0, 0.4, 8
    if model.name == "linear":
        return np.array([1.0]), np.array([0.5]), 1.0, 4
    return model.ref_state.copy(), 0.2 * np.ones(model.nu), 0.5, 2


def _sim_scenario(model):
    """Autonomous (u = 0) start for the simulate command."""
    if model.name.startswith("chain"):
        x_eq = steady_state(model, np.zeros(model.nu), model.ref_state)
        return x_eq, np.zeros(model.nu)
    return model.ref_state.copy(), np.zeros(model.nu)


def _sens_points(model, count):
    """Deterministic evaluation points around the model's reference state."""
    rng = np.random.default_rng(0)
    if model.name.startswith("chain"):
        base = steady_state(model, np.zeros(model.nu), model.ref_state)
        scale = 0.05
    else:
        base = model.ref_state
        scale = 0.3
    pts = []
    for _ in range(count):
        x0 = base + scale * rng.standard_normal(model.nx)
        u0 = scale * rng.standard_normal(model.nu)
        seed = rng.standard_normal(model.nx)
        pts.append((x0, u0, seed))
    return pts


def _ocp_scenario(model, cfg, tableau, newton):
    """Built-in tracking scenario: steer a perturbed state back to a reference."""
    T = cfg.T if cfg.T is not None else 2.0
    nx, nu = model.nx, model.nu
    if model.name.startswith("chain"):
        x_eq = steady_state(model, np.zeros(nu), model.ref_state)
        x0 = x_eq.copy()
        x0[-3:] += np.array([0.02, 0.02, -0.03])
        q = np.ones(nx)
        q[: 3 * (model.params["n_mass"] - 2)] = 10.0
        q[-3:] = 10.0
        Q = np.diag(q)
        return ocp_mod.OcpSpec(
            model=model, N=cfg.N, T=T, Q=Q, R=0.1 * np.eye(nu), Q_N=10.0 * Q,
            x_ref=x_eq, u_ref=np.zeros(nu), x0_bar=x0,
            tableau=tableau, n_steps=cfg.n_steps, newton=newton,
        )
    x_ref = np.zeros(nx)
    x0 = model.ref_state.copy()
    if np.allclose(x0, 0.0):
        x0 = np.ones(nx)
    return ocp_mod.OcpSpec(
        model=model, N=cfg.N, T=T, Q=np.eye(nx), R=np.eye(nu), Q_N=np.eye(nx),
        x_ref=x_ref, u_ref=np.zeros(nu), x0_bar=x0,
        tableau=tableau, n_steps=cfg.n_steps, newton=newton,
    )


# ---------------------------------------------------------------------------
# commands


def simulate_trajectory(model, tableau, x0, u0, T_sim, n_steps, opts):
    """States (and algebraic values) at the n_steps+1 step boundaries."""
    x0 = np.asarray(x0, float)
    u0 = np.asarray(u0, float)
    rows = []
    if model.nz:
        _, z0 = consistent_algebraic(model, x0, u0)
    else:
        z0 = np.zeros(0)
    rows.append((0.0, x0.copy(), z0))
    if T_sim == 0.0:
        return rows
    h = T_sim / n_steps
    x = x0
    if tableau.is_implicit:
        solver = Irk(model, tableau, 1, opts=opts, sens=())
        for i in range(n_steps):
            x, z_stages, _ = solver.step(x, u0, h)
            if not np.all(np.isfinite(x)):
                raise IntegrationError(f"non-finite state after step {i}", step=i)
            rows.append(((i + 1) * h, x.copy(), z_stages[-1].copy()))
    else:
        solver = Erk(model, tableau, 1)
        for i in range(n_steps):
            x = solver.simulate(x, u0, h).x_next
            rows.append(((i + 1) * h, x.copy(), np.zeros(0)))
    return rows


def cmd_simulate(cfg):
    model = get_model(cfg.model)
    tableau = cfg.tableau()
    T_sim = cfg.T if cfg.T is not None else 0.5
    opts = cfg.newton(3, 0.0, True)
    x0, u0 = _sim_scenario(model)
    rows = simulate_trajectory(model, tableau, x0, u0, T_sim, cfg.n_steps, opts)
    header = ["t"] + [f"x{i}" for i in range(model.nx)] + [f"z{i}" for i in range(model.nz)]
    _write_csv(cfg.out, header, [(t, *x, *z) for t, x, z in rows])
    return 0


def sens_check(model, tableau, n_steps, T_sim, opts, points):
    """Forward-vs-FD, adjoint-vs-forward, Hessian-vs-FD and symmetry probes."""
    report = {k: 0.0 for k in SENS_THRESHOLDS}
    for x0, u0, seed in points:
        solver = Irk(model, tableau, n_steps, opts=opts)
        S = solver.forward(x0, u0, T_sim).S_forw
        grad = solver.adjoint(x0, u0, T_sim, seed).grad_adj
        hout = solver.hessian(x0, u0, T_sim, seed)

        def nominal(v):
            return Irk(model, tableau, n_steps, opts=opts, sens=()).simulate(
                v[: model.nx], v[model.nx :], T_sim
            ).x_next

        v0 = np.concatenate([x0, u0])
        S_fd = ad.fd_jacobian(nominal, v0)
        denom = np.maximum(np.abs(S_fd), 1e-9 / 1e-6)  # relative with absolute floor 1e-9
        report["max_rel_err_forward"] = max(
            report["max_rel_err_forward"], float(np.max(np.abs(S - S_fd) / denom))
        )
        ref = seed @ S
        report["adj_consistency"] = max(
            report["adj_consistency"],
            float(np.max(np.abs(grad - ref)) / (1.0 + np.max(np.abs(ref)))),
        )

        def gradfun(v):
            return Irk(model, tableau, n_steps, opts=opts).adjoint(
                v[: model.nx], v[model.nx :], T_sim, seed
            ).grad_adj

        H_fd = ad.fd_jacobian(gradfun, v0, step=ad.FD_STEP_HESS)
        scale = max(np.max(np.abs(H_fd)), 1e-9)
        report["hess_fd_err"] = max(
            report["hess_fd_err"], float(np.max(np.abs(hout.hess - H_fd)) / scale)
        )
        report["hess_asym"] = max(
            report["hess_asym"], float(np.max(np.abs(hout.hess - hout.hess.T)))
        )
    return report


def cmd_sens_check(cfg):
    model = get_model(cfg.model)
    tableau = cfg.tableau()
    if not tableau.is_implicit:
        raise ConfigError("sens-check exercises the implicit integrator; pick an implicit family")
    T_sim = cfg.T if cfg.T is not None else 0.2
    opts = cfg.newton(50, 1e-12, False)
    points = _sens_points(model, cfg.points)
    report = sens_check(model, tableau, cfg.n_steps, T_sim, opts, points)
    payload = {
        "model": model.name,
        "family": tableau.family.value,
        "s": tableau.s,
        "checks": {
            k: {"value": report[k], "threshold": SENS_THRESHOLDS[k], "pass": report[k] <= SENS_THRESHOLDS[k]}
            for k in report
        },
    }
    ok = all(c["pass"] for c in payload["checks"].values())
    payload["pass"] = ok
    _write_json(cfg.out, payload)
    return 0 if ok else 1


def order_study(model, tableau, T_sim, base_steps, x0, u0):
    """Richardson step-halving against a tight reference; returns rows + estimate.

    Rows are (h, error, estimated_order) with the order estimate
    log2(e(h)/e(h/2)) attached to the coarser row (nan on the last row).
    """
    tight = NewtonOpts(max_iters=50, tol=1e-13, freeze_jacobian=False)
    ref_tab = make_tableau(SchemeFamily.GAUSS_LEGENDRE, 4)
    x_ref = Irk(model, ref_tab, 512, opts=tight, sens=()).simulate(x0, u0, T_sim).x_next
    errs = []
    hs = []
    for mult in (1, 2, 4, 8):
        n = base_steps * mult
        if tableau.is_implicit:
            x = Irk(model, tableau, n, opts=tight, sens=()).simulate(x0, u0, T_sim).x_next
        else:
            x = Erk(model, tableau, n).simulate(x0, u0, T_sim).x_next
        errs.append(float(np.max(np.abs(x - x_ref))))
        hs.append(T_sim / n)
    ests = [np.log2(errs[i] / errs[i + 1]) for i in range(3)]
    rows = [(hs[i], errs[i], ests[i] if i < 3 else float("nan")) for i in range(4)]
    return rows, float(np.median(ests))


def cmd_order_study(cfg):
    model = get_model(cfg.model)
    tableau = cfg.tableau()
    x0, u0, T_def, base_def = _study_scenario(model)
    T_sim = cfg.T if cfg.T is not None else T_def
    base = cfg.base_steps if cfg.base_steps is not None else base_def
    rows, est = order_study(model, tableau, T_sim, base, x0, u0)
    _write_csv(cfg.out, ["h", "error", "estimated_order"], rows)
    sys.stderr.write(f"median estimated order: {est:.3f} (theory {tableau.order})\n")
    return 0


def solve_ocp_once(cfg, timing=True):
    model = get_model(cfg.model)
    tableau = cfg.tableau()
    newton = cfg.newton(30, 1e-10, False)
    spec = _ocp_scenario(model, cfg, tableau, newton)
    if cfg.transcription == "shooting":
        transcribe = ocp_mod.transcribe_multiple_shooting
    elif cfg.transcription == "collocation":
        transcribe = ocp_mod.transcribe_collocation
    else:
        raise ConfigError(f"unknown transcription {cfg.transcription!r}")
    opts = sqp_mod.SqpOpts(hessian_mode=cfg.hessian, max_iters=cfg.sqp_max_iters, kkt_tol=cfg.kkt_tol)

    results = []
    totals = []
    for _ in range(max(1, cfg.reps)):
        nlp = transcribe(spec)  # fresh transcription per rep: identical iterates
        t0 = time.perf_counter()
        res = sqp_mod.solve(nlp, opts)
        totals.append(time.perf_counter() - t0)
        results.append(res)
    res = results[0]
    timings = {
        "total": float(np.median(totals)),
        "nlp_function_eval": float(np.median([r.timings["nlp_function_eval"] for r in results])),
        "step_computation": float(np.median([r.timings["step_computation"] for r in results])),
    }
    return spec, nlp, res, timings


def cmd_solve_ocp(cfg):
    spec, nlp, res, timings = solve_ocp_once(cfg)
    payload = {
        "status": res.status.value,
        "iters": res.iters,
        "kkt_history": res.kkt_history,
        "n_vars": nlp.n_vars,
        "n_eq": nlp.n_eq,
        "transcription": cfg.transcription,
        "hessian": cfg.hessian,
        "reps": cfg.reps,
        "timings": timings,
    }
    _write_json(cfg.out, payload)
    # trajectory CSV next to the JSON
    if cfg.out is not None:
        nx, nu, N = spec.model.nx, spec.model.nu, spec.N
        xs = {name: res.v[a:b] for name, a, b in nlp.layout if name.startswith("x")}
        us = {name: res.v[a:b] for name, a, b in nlp.layout if name.startswith("u")}
        h = spec.T / N
        rows = []
        for k in range(N + 1):
            u = us.get(f"u{k}", np.full(nu, np.nan))
            rows.append((k * h, *xs[f"x{k}"], *u))
        header = ["t"] + [f"x{i}" for i in range(nx)] + [f"u{i}" for i in range(nu)]
        _write_csv(cfg.out + ".traj.csv", header, rows)
    return 0 if res.status is sqp_mod.SqpStatus.CONVERGED else 1


def cmd_bench(cfg):
    if not cfg.sweep:
        raise ConfigError("bench needs a non-empty sweep of n_mass values (--sweep 3,4,5)")
    tableau = cfg.tableau()
    tab_name = f"{tableau.family.value}-{tableau.s}"
    rows = []
    failures = 0
    for n_mass in cfg.sweep:
        sub = RunConfig(**{**cfg.__dict__, "model": f"chain-{int(n_mass)}"})
        try:
            _, _, res, timings = solve_ocp_once(sub)
            iters = max(res.iters, 1)
            rows.append(
                (int(n_mass), cfg.transcription, tab_name, timings["total"] / iters, res.iters, res.status.value)
            )
        except Exception as e:  # per-point failures are recorded, the sweep continues
            failures += 1
            rows.append((int(n_mass), cfg.transcription, tab_name, float("nan"), 0, f"error: {e}"))
    header = ["n_mass", "transcription", "tableau", "time_per_iter_s", "iters", "status"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(
            ",".join([str(r[0]), r[1], r[2], _fmt(r[3]), str(r[4]), r[5]])
        )
    text = "\n".join(lines) + "\n"
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# argument handling


def _build_parser():
    p = argparse.ArgumentParser(
        prog="rksens",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)
    specs = {
        "simulate": "integrate one trajectory; CSV columns: t, x0..x{nx-1}, z0..z{nz-1}",
        "sens-check": "verify forward/adjoint/Hessian consistency; JSON report "
        "{checks: {max_rel_err_forward, adj_consistency, hess_fd_err, hess_asym}, pass}",
        "order-study": "empirical convergence order via step halving; CSV columns: h, error, estimated_order",
        "solve-ocp": "transcribe and solve the built-in tracking OCP; JSON "
        "{status, iters, kkt_history, n_vars, n_eq, timings} plus <out>.traj.csv (t, x..., u...)",
        "bench": "sweep chain sizes; CSV columns: n_mass, transcription, tableau, "
        "time_per_iter_s, iters, status",
    }
    for name, help_text in specs.items():
        q = sub.add_parser(name, help=help_text)
        q.add_argument("--model", help="linear | dae-test | chain-<n_mass>")
        q.add_argument("--family", help="gauss-legendre | radau-iia | rk4 | euler | heun")
        q.add_argument("--s", type=int, help="stage count (implicit families)")
        q.add_argument("--n-steps", type=int, dest="n_steps", help="integration sub-steps")
        q.add_argument("--T", type=float, help="simulation time or OCP horizon [s]")
        q.add_argument("--newton-iters", type=int, dest="newton_iters")
        q.add_argument("--newton-tol", type=float, dest="newton_tol")
        q.add_argument(
            "--freeze-jac", dest="freeze_jac", action="store_true", default=None,
            help="factorize the iteration matrix once per step",
        )
        q.add_argument(
            "--no-freeze-jac", dest="freeze_jac", action="store_false", default=None,
            help="refactorize every Newton iteration (exact IFT sensitivities)",
        )
        q.add_argument("--transcription", choices=["shooting", "collocation"])
        q.add_argument("--N", type=int, help="shooting intervals")
        q.add_argument("--hessian", choices=["gn", "exact"])
        q.add_argument("--config", help="JSON config file (flags override it)")
        q.add_argument("--out", help="output path (default: stdout)")
        q.add_argument("--reps", type=int, help="timing repetitions (median reported)")
        q.add_argument("--sweep", help="comma-separated n_mass values for bench")
    return p


def _merge_config(args):
    cfg = RunConfig(command=args.command)
    if args.config is not None:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config!r}: {e}") from None
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}; known: {sorted(_CONFIG_KEYS)}")
        for key, val in data.items():
            setattr(cfg, key, val)
    for key in (
        "model", "family", "s", "n_steps", "T", "newton_iters", "newton_tol",
        "freeze_jac", "transcription", "N", "hessian", "out", "reps",
    ):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "sweep", None) is not None:
        try:
            cfg.sweep = [int(tok) for tok in args.sweep.split(",") if tok.strip()]
        except ValueError:
            raise ConfigError(f"bad --sweep value {args.sweep!r}") from None
    if cfg.reps < 1:
        raise ConfigError("reps must be >= 1")
    if cfg.n_steps < 1:
        raise ConfigError("n_steps must be >= 1")
    return cfg


_COMMANDS = {
    "simulate": cmd_simulate,
    "sens-check": cmd_sens_check,
    "order-study": cmd_order_study,
    "solve-ocp": cmd_solve_ocp,
    "bench": cmd_bench,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return 2
    except (ValueError, KeyError) as e:
        sys.stderr.write(f"config error: {e}\n")
        return 2
    except (IntegrationError, ConvergenceError, ad.NonFiniteError) as e:
        sys.stderr.write(f"numerical failure: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
