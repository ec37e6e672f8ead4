import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import MODEL_COEFFS, TRUE_PARAMS, X0, demo_design
from esmrac.controller import (
    ClosedLoopState,
    ControllerDesign,
    ESLoop,
    PlantSpec,
    SingularPlantError,
    auxiliary_signal,
    closed_loop_derivs,
    commensurate_base,
    control_input,
    cost,
    demodulation,
    es_loop_output,
    perturbed_estimates,
    regression_vector,
    tracking_error,
)
from esmrac.lti import ReferenceModelSpec
from esmrac.sim import SimConfig, rk4_step, run_closed_loop

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_tracking_error_examples():
    assert np.all(tracking_error(ClosedLoopState([0.3, 0.1], [0.3, 0.1], np.zeros(3))) == 0)
    np.testing.assert_allclose(tracking_error(ClosedLoopState([-0.1, 0.2], [0.0, 0.0], np.zeros(3))), [-0.1, 0.2])
    np.testing.assert_allclose(tracking_error(ClosedLoopState([1.0, 0.0], [0.5, -0.5], np.zeros(3))), [0.5, 0.5])


def test_cost_examples():
    assert cost([3.0, -2.0], [0.0, 0.0]) == 0.0
    assert cost([1.0, 1.0], X0) == pytest.approx(0.005, abs=1e-15)
    assert cost([1.0, -1.0], [0.3, 0.3]) == 0.0
    with pytest.raises(ValueError):
        cost([1.0], [1.0, 2.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=3, max_size=3), st.lists(finite, min_size=3, max_size=3))
def test_cost_even_and_nonnegative(q, x):
    x = np.array(x)
    assert cost(q, x) >= 0
    assert cost(q, -x) == cost(q, x)


def test_auxiliary_signal_examples():
    assert auxiliary_signal(0.7, [0.0, 0.0], [9, 3]) == 0.7
    assert auxiliary_signal(1.0, X0, [9, 3]) == pytest.approx(1.3, abs=1e-14)
    assert auxiliary_signal(0.7, [5.0, -2.0], [0, 0]) == 0.7


def test_perturbed_estimates_examples():
    loops = demo_design().loops
    a_hat = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(perturbed_estimates(a_hat, loops, 0.0), a_hat)
    t = np.pi / 2 / 5.0
    assert perturbed_estimates(a_hat, loops, t)[0] == pytest.approx(1.3, abs=1e-14)
    np.testing.assert_allclose(
        perturbed_estimates(np.zeros(3), loops, 0.1),
        [0.3 * np.sin(0.5), 0.2 * np.sin(0.8), 0.2 * np.sin(1.4)],
        rtol=1e-14,
    )


def test_control_input_examples():
    v = regression_vector([-0.1, 0.2], 1.3)
    np.testing.assert_array_equal(v, [-0.1, 0.2, 1.3])
    assert control_input(np.zeros(3), v) == 0.0
    assert control_input(TRUE_PARAMS, v) == pytest.approx(1.275, abs=1e-14)
    assert control_input(TRUE_PARAMS, np.zeros(3)) == 0.0
    with pytest.raises(ValueError):
        control_input([1.0, 2.0], v)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(finite, min_size=3, max_size=3),
    st.lists(finite, min_size=3, max_size=3),
    st.lists(finite, min_size=3, max_size=3),
    st.floats(-10, 10),
)
def test_control_input_bilinear(a1, a2, v, s):
    a1, a2, v = map(np.array, (a1, a2, v))
    scale = 1 + np.abs(a1).sum() * np.abs(v).sum() + np.abs(a2).sum() * np.abs(v).sum()
    assert control_input(a1 + s * a2, v) == pytest.approx(control_input(a1, v) + s * control_input(a2, v), abs=1e-9 * scale * (1 + abs(s)))
    assert control_input(v, a1 + s * a2) == pytest.approx(control_input(v, a1) + s * control_input(v, a2), abs=1e-9 * scale * (1 + abs(s)))


def test_demodulation_in_phase_with_dither():
    loops = demo_design().loops
    for t in np.linspace(0.0, 2.0, 9):
        np.testing.assert_allclose(demodulation(loops, t, 2.0), 2.0 * np.sin(np.array([5.0, 8.0, 14.0]) * t))
    shifted = demo_design(phi=0.4).loops
    np.testing.assert_allclose(demodulation(shifted, 0.3, 1.0), np.sin(np.array([5.0, 8.0, 14.0]) * 0.3 - 0.4))


def test_es_loop_output_examples():
    loop = ESLoop(c=0.2, omega=5.0, g=40.0, d=0.1)
    # both encodings of the initial estimate give the same value
    assert es_loop_output(loop, 0.0, 0.0, offset=2.5) == 2.5
    assert es_loop_output(loop, -2.5 / 40.0, 0.0) == pytest.approx(2.5)
    # constant input from rest gives a ramp
    mbar = 0.3
    t = np.linspace(0, 2, 5)
    np.testing.assert_allclose(es_loop_output(loop, mbar * t, mbar), -40.0 * (0.1 * mbar + mbar * t))
    pure = ESLoop(c=0.2, omega=5.0, g=1.0, d=0.0)
    assert es_loop_output(pure, 0.7, 123.0) == -0.7


@pytest.mark.parametrize("probe", [0.5, 3.0, 20.0])
def test_es_loop_frequency_response(probe):
    """Simulated compensator output vs the transfer function -g(d + 1/s) at s = j*probe."""
    g, d = 7.0, 0.15
    loop = ESLoop(c=0.1, omega=1.0, g=g, d=d)
    period = 2 * np.pi / probe
    h = period / 400
    ts = np.arange(0, 3 * period, h)
    xi = -1.0 / probe  # start on the periodic orbit of xi' = sin(probe t)
    out = []
    for t in ts:
        out.append(es_loop_output(loop, xi, np.sin(probe * t)))
        xi = rk4_step(lambda tt, s: np.array([np.sin(probe * tt)]), np.array([xi]), t, h)[0]
    basis = np.column_stack([np.sin(probe * ts), np.cos(probe * ts)])
    (bs, bc), *_ = np.linalg.lstsq(basis, np.array(out), rcond=None)
    gain = -g * (d - 1j / probe)
    assert bs == pytest.approx(gain.real, rel=1e-8)
    assert bc == pytest.approx(gain.imag, rel=1e-8)


def test_commensurate_base():
    assert commensurate_base([5, 8, 14]) == (1.0, [5, 8, 14])
    assert commensurate_base([20.0, 40.0, 60.0]) == (20.0, [1, 2, 3])
    base, harm = commensurate_base([0.5, 1.5, 0.75])
    assert base == 0.25 and harm == [2, 6, 3]
    with pytest.raises(ValueError):
        commensurate_base([1.0, np.pi])
    with pytest.raises(ValueError):
        commensurate_base([2.0, 2.0, 3.0])


def test_design_invariants():
    with pytest.raises(ValueError):
        ESLoop(c=0.1, omega=0.0)
    with pytest.raises(ValueError):
        ESLoop(c=-0.1, omega=1.0)
    loops = demo_design().loops
    with pytest.raises(ValueError):
        ControllerDesign([9, 3], [1, 0], loops)
    with pytest.raises(ValueError):
        ControllerDesign([9, 3], [1, 1], loops[:2])
    with pytest.raises(SingularPlantError):
        PlantSpec((6.25, 3.0, 0.0))


def test_with_omega_base_doubles_frequencies():
    d = demo_design()
    d2 = d.with_omega_base(2.0)
    np.testing.assert_array_equal(d2.omegas, 2 * d.omegas)
    assert d2.harmonics == d.harmonics
    np.testing.assert_array_equal(d2.g, d.g)


def test_closed_loop_equilibrium(plant, ref_model):
    design = demo_design(c=(0.0, 0.0, 0.0), a_hat0=TRUE_PARAMS)
    state = np.zeros(7)
    assert np.all(closed_loop_derivs(plant, ref_model, design, 0.37, state, 0.0) == 0)


def test_closed_loop_perfect_parameters_zero_error(plant, ref_model):
    design = demo_design(c=(0.0, 0.0, 0.0), a_hat0=TRUE_PARAMS)
    ym = np.array([0.2, -0.4])
    state = np.concatenate([ym, ym, np.zeros(3)])
    d = closed_loop_derivs(plant, ref_model, design, 1.0, state, 1.0)
    np.testing.assert_allclose(d[:2], d[2:4], atol=1e-14)


def test_closed_loop_initial_derivative(plant, ref_model, design):
    state = np.concatenate([X0, [0.0, 0.0], np.zeros(3)])
    d = closed_loop_derivs(plant, ref_model, design, 0.0, state, 1.0)
    assert np.all(np.isfinite(d))
    assert abs(d[1]) < 10
    # u = 0 at t=0 since the estimates start at zero and the dither vanishes
    assert d[1] == pytest.approx(-(6.25 * -0.1 + 3.0 * 0.2))


def test_closed_loop_singular_plant(ref_model, design):
    plant = PlantSpec.__new__(PlantSpec)
    object.__setattr__(plant, "coeffs", (1.0, 1.0, 0.0))
    with pytest.raises(SingularPlantError):
        closed_loop_derivs(plant, ref_model, design, 0.0, np.zeros(7), 1.0)


def test_frozen_true_parameters_reduce_to_linear_error(plant, ref_model):
    loops = [ESLoop(c=0.0, omega=w, g=0.0, d=0.0) for w in (5.0, 8.0, 14.0)]
    design = ControllerDesign([9.0, 3.0], [1.0, 1.0], loops, a_hat0=TRUE_PARAMS)
    simcfg = SimConfig.for_design(design, t_end=5.0)
    traj = run_closed_loop(plant, ref_model, design, simcfg, y0=X0, check_design=False)
    A = np.array([[0.0, 1.0], [-9.0, -3.0]])
    exact = np.array([scipy.linalg.expm(A * t) @ X0 for t in traj.t])
    assert traj.t[-1] == pytest.approx(5.0, abs=simcfg.h)
    assert np.max(np.abs(traj.x - exact)) < 1e-6
    np.testing.assert_array_equal(traj.a_hat, np.tile(TRUE_PARAMS, (len(traj), 1)))
