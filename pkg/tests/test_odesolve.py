import time

import numpy as np
import pytest
from scipy.linalg import expm

from npfx.numerics import Tensor, grad_check, precision
from npfx.odesolve import SolverConfig, SolverError, SolveTelemetry, ode_solve, solve_at_times


def decay(h, t):
    return h * -1.0


def _linear(A):
    # row-vector state: dh/dt = h @ A.T
    At = Tensor(A)
    return lambda h, t: (At * h).sum(axis=1).reshape(h.shape)


def _final_error(method, step):
    with precision(np.float64):
        h, _ = ode_solve(decay, Tensor([1.0]), 0.0, 1.0, SolverConfig(method, step=step))
    return abs(h.item() - np.exp(-1.0))


@pytest.mark.parametrize("method,order,slack", [("euler", 1.0, 0.2), ("rk4", 4.0, 0.5)])
def test_convergence_order_on_decay(method, order, slack):
    started = time.perf_counter()
    steps = [0.1, 0.05, 0.025, 0.0125]
    errs = [_final_error(method, s) for s in steps]
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert abs(slope - order) <= slack
    assert time.perf_counter() - started < 10


def test_single_euler_step_is_exact_formula():
    with precision(np.float64):
        h, tel = ode_solve(decay, Tensor([2.0]), 0.0, 0.5, SolverConfig("euler", step=0.5))
    assert h.item() == 1.0 and tel.nfev == 1


@pytest.mark.parametrize("seed", range(5))
def test_adaptive_matches_matrix_exponential(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4)) * 0.5 - np.eye(4)
    h0 = rng.normal(size=(1, 4))
    with precision(np.float64):
        h, _ = ode_solve(_linear(A), Tensor(h0), 0.0, 2.0, SolverConfig(rtol=1e-8, atol=1e-8))
    expect = h0 @ expm(2.0 * A).T
    assert np.max(np.abs(h.data - expect)) <= 1e-6


@pytest.mark.parametrize("method", ["euler", "rk4", "adaptive"])
def test_zero_span_is_a_no_op(method):
    h0 = Tensor([1.0, 2.0])
    h, tel = ode_solve(decay, h0, 0.3, 0.3, SolverConfig(method))
    assert h is h0 and tel.nfev == 0


@pytest.mark.parametrize("tol", [1e-4, 1e-6])
def test_backward_solve_recovers_initial_state(tol):
    rng = np.random.default_rng(0)
    A = rng.normal(size=(3, 3)) * 0.3
    h0 = rng.normal(size=(1, 3))
    cfg = SolverConfig(rtol=tol, atol=tol)
    with precision(np.float64):
        h1, _ = ode_solve(_linear(A), Tensor(h0), 0.0, 1.5, cfg)
        back, _ = ode_solve(_linear(A), h1, 1.5, 0.0, cfg)
    assert np.max(np.abs(back.data - h0)) <= 10 * tol


def test_backward_matches_exponential_decay_growth():
    with precision(np.float64):
        h, _ = ode_solve(decay, Tensor([1.0]), 1.0, 0.0, SolverConfig(rtol=1e-9, atol=1e-9))
    assert h.item() == pytest.approx(np.e, abs=1e-7)


def test_evaluations_nonincreasing_as_tolerance_loosens():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(6, 6)) * 0.8
    h0 = Tensor(rng.normal(size=(1, 6)))
    counts = []
    with precision(np.float64):
        for tol in (1e-8, 1e-5, 1e-3, 1e-1):
            _, tel = ode_solve(_linear(A), h0, 0.0, 3.0, SolverConfig(rtol=tol, atol=tol))
            counts.append(tel.nfev)
    assert counts == sorted(counts, reverse=True)
    assert counts[0] > counts[-1]


def test_evaluation_budget_raises_with_telemetry():
    with pytest.raises(SolverError) as info:
        ode_solve(decay, Tensor([1.0]), 0.0, 50.0, SolverConfig(rtol=1e-10, atol=1e-10, max_evals=20))
    assert info.value.telemetry.nfev > 20


def test_fixed_step_counts_and_telemetry():
    _, tel = ode_solve(decay, Tensor([1.0]), 0.0, 1.0, SolverConfig("rk4", step=0.25))
    assert (tel.nfev, tel.accepted, tel.rejected) == (16, 4, 0)


def test_telemetry_accumulates():
    a = SolveTelemetry(3, 2, 1)
    a += SolveTelemetry(1, 1, 0)
    assert a.to_dict() == {"nfev": 4, "accepted": 3, "rejected": 1}


def test_solve_at_times_chains_segments():
    tel = SolveTelemetry()
    with precision(np.float64):
        out = solve_at_times(decay, Tensor([1.0]), 0.0, [0.5, 1.0, 2.0],
                             SolverConfig(rtol=1e-9, atol=1e-9), telemetry=tel)
    assert [o.item() for o in out] == pytest.approx(np.exp([-0.5, -1.0, -2.0]), abs=1e-7)
    assert tel.nfev > 0


def test_solve_at_times_rejects_non_monotone_targets():
    with pytest.raises(ValueError, match="monotone"):
        solve_at_times(decay, Tensor([1.0]), 0.0, [0.5, 0.2, 1.0])


@pytest.mark.parametrize("kwargs", [{"method": "midpoint"}, {"step": 0.0}, {"rtol": -1.0},
                                    {"max_evals": 0}])
def test_invalid_config_rejected(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_with_tolerance_switches_to_adaptive():
    cfg = SolverConfig("rk4", step=0.2).with_tolerance(1e-3)
    assert (cfg.method, cfg.rtol, cfg.atol, cfg.step) == ("adaptive", 1e-3, 1e-3, 0.2)


@pytest.mark.parametrize("method", ["euler", "rk4", "adaptive"])
@pytest.mark.parametrize("seed", range(3))
def test_gradients_through_solver(method, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3)) * 0.4
    w = rng.normal(size=(1, 3))
    cfg = SolverConfig(method, step=0.25, rtol=1e-6, atol=1e-6)

    def loss(h0):
        h, _ = ode_solve(_linear(A), h0, 0.0, 1.0, cfg)
        return (h * w).sum()

    assert grad_check(loss, rng.normal(size=(1, 3))) <= 1e-4


def test_gradient_wrt_dynamics_parameter_matches_closed_form():
    # h(1) = h0 * exp(k); d/dk = h0 * exp(k)
    k0 = np.array([-0.7])

    def loss(k):
        h, _ = ode_solve(lambda h, t: h * k, Tensor([1.5]), 0.0, 1.0,
                         SolverConfig("rk4", step=0.01))
        return h.sum()

    assert grad_check(loss, k0) <= 1e-6
