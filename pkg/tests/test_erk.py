import numpy as np
import pytest

from rksens import ad
from rksens.butcher import make_tableau
from rksens.erk import Erk, erk_adjoint, erk_forward, erk_hessian, erk_simulate
from rksens.models import DynamicsModel
from rksens.simout import IntegrationError

RK4_POLY = 1.0 - 0.1 + 0.005 - 1.0 / 6000.0 + 1.0 / 240000.0  # 1+z+z^2/2+z^3/6+z^4/24 at z=-0.1


def test_rk4_linear_one_step(linear, rk4):
    out = erk_simulate(linear, rk4, [1.0], [0.0], 0.1, 1)
    assert out.x_next[0] == pytest.approx(RK4_POLY, abs=1e-15)


def test_zero_horizon_is_identity(chain3, rk4):
    x0 = chain3.ref_state + 0.1
    out = erk_simulate(chain3, rk4, x0, np.zeros(3), 0.0, 4)
    assert np.array_equal(out.x_next, x0)


def test_explicit_euler_linear(linear):
    out = erk_simulate(linear, make_tableau("euler"), [1.0], [0.0], 0.1, 1)
    assert out.x_next[0] == pytest.approx(0.9, abs=1e-16)


def test_requires_explicit_tableau(linear, gl1):
    with pytest.raises(ValueError):
        Erk(linear, gl1, 1)


def test_requires_explicit_model(dae, rk4):
    with pytest.raises(ValueError):
        Erk(dae, rk4, 1)


def test_forward_linear_amplification(linear, rk4):
    out = erk_forward(linear, rk4, [1.0], [0.0], 0.1, 1)
    assert out.S_forw[0, 0] == pytest.approx(RK4_POLY, abs=1e-15)


def test_forward_zero_horizon(linear, rk4):
    out = erk_forward(linear, rk4, [1.0], [0.0], 0.0, 1)
    assert np.array_equal(out.S_forw, np.array([[1.0, 0.0]]))


def test_forward_matches_fd_on_chain(chain3, rk4):
    rng = np.random.default_rng(0)
    x0 = chain3.ref_state + 0.05 * rng.standard_normal(chain3.nx)
    u0 = 0.1 * rng.standard_normal(3)
    S = erk_forward(chain3, rk4, x0, u0, 0.1, 2).S_forw

    def fmap(v):
        return erk_simulate(chain3, rk4, v[: chain3.nx], v[chain3.nx :], 0.1, 2).x_next

    Sfd = ad.fd_jacobian(fmap, np.concatenate([x0, u0]))
    denom = np.maximum(np.abs(Sfd), 1e-3)
    assert np.max(np.abs(S - Sfd) / denom) < 1e-6


def test_nominal_bitwise_identical_across_modes(chain3, rk4):
    x0 = chain3.ref_state + 0.01
    u0 = np.array([0.1, -0.2, 0.05])
    a = erk_simulate(chain3, rk4, x0, u0, 0.2, 3).x_next
    b = erk_forward(chain3, rk4, x0, u0, 0.2, 3).x_next
    c = erk_adjoint(chain3, rk4, x0, u0, 0.2, 3, np.ones(chain3.nx)).x_next
    d = erk_hessian(chain3, rk4, x0, u0, 0.2, 3, np.ones(chain3.nx)).x_next
    assert np.array_equal(a, b) and np.array_equal(a, c) and np.array_equal(a, d)


def test_adjoint_zero_seed(chain3, rk4):
    out = erk_adjoint(chain3, rk4, chain3.ref_state, np.zeros(3), 0.1, 2, np.zeros(chain3.nx))
    assert np.all(out.grad_adj == 0.0)


def test_adjoint_linear(linear, rk4):
    out = erk_adjoint(linear, rk4, [1.0], [0.0], 0.1, 1, [1.0])
    assert out.grad_adj[0] == pytest.approx(RK4_POLY, abs=1e-15)


@pytest.mark.parametrize("tab_name", ["rk4", "heun", "euler"])
def test_adjoint_forward_duality(chain3, tab_name):
    tab = make_tableau(tab_name)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x0 = chain3.ref_state + 0.05 * rng.standard_normal(chain3.nx)
        u0 = 0.1 * rng.standard_normal(3)
        seed = rng.standard_normal(chain3.nx)
        S = erk_forward(chain3, tab, x0, u0, 0.1, 2).S_forw
        grad = erk_adjoint(chain3, tab, x0, u0, 0.1, 2, seed).grad_adj
        ref = seed @ S
        assert np.max(np.abs(grad - ref)) < 1e-13 * (1.0 + np.max(np.abs(grad)))


def test_hessian_linear_model_zero(linear, rk4):
    out = erk_hessian(linear, rk4, [1.0], [0.3], 0.1, 2, [1.7])
    assert np.all(out.hess == 0.0)


def test_hessian_zero_seed(chain3, rk4):
    out = erk_hessian(chain3, rk4, chain3.ref_state, np.zeros(3), 0.1, 1, np.zeros(chain3.nx))
    assert np.all(out.hess == 0.0)


def test_hessian_matches_fd_of_adjoint(chain3, rk4):
    rng = np.random.default_rng(2)
    x0 = chain3.ref_state + 0.02 * rng.standard_normal(chain3.nx)
    u0 = 0.1 * rng.standard_normal(3)
    seed = rng.standard_normal(chain3.nx)
    out = erk_hessian(chain3, rk4, x0, u0, 0.1, 2, seed)
    assert np.max(np.abs(out.hess - out.hess.T)) == 0.0

    def grad(v):
        return erk_adjoint(chain3, rk4, v[: chain3.nx], v[chain3.nx :], 0.1, 2, seed).grad_adj

    Hfd = ad.fd_jacobian(grad, np.concatenate([x0, u0]), step=1e-4)
    scale = max(np.max(np.abs(Hfd)), 1e-9)
    assert np.max(np.abs(out.hess - Hfd)) / scale < 1e-5


def test_nonfinite_state_reports_step():
    def f_expl(x, u):
        return x * x  # blows up in finite time

    model = DynamicsModel(
        name="quad", nx=1, nu=1, nz=0,
        residual=lambda xd, x, u, z: xd - f_expl(x, u),
        explicit_rhs=f_expl, ref_state=np.array([1.0]),
    )
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(IntegrationError) as err:
            erk_simulate(model, make_tableau("rk4"), [1e160], [0.0], 2.0, 4)
    assert err.value.step is not None


@pytest.mark.parametrize("model_key", ["linear", "chain3"])
def test_heun_empirical_order_two(model_key, linear, chain3):
    from rksens.cli import _study_scenario, order_study

    model = {"linear": linear, "chain3": chain3}[model_key]
    x0, u0, T, _ = _study_scenario(model)
    rows, est = order_study(model, make_tableau("heun"), T, 8, x0, u0)
    assert abs(est - 2.0) <= 0.2


def test_stage_buffers_allocated_once(chain3, rk4):
    solver = Erk(chain3, rk4, 3)
    buf_x, buf_k = solver._stage_x, solver._stage_k
    solver.adjoint(chain3.ref_state, np.zeros(3), 0.1, np.ones(chain3.nx))
    solver.adjoint(chain3.ref_state + 0.01, np.zeros(3), 0.1, np.ones(chain3.nx))
    assert solver._stage_x is buf_x and solver._stage_k is buf_k
