"""Tests for the closed-loop simulator"""
import numpy as np
import pytest

from app.exceptions import DegenerateConfig, NotProper
from app.services.delay_line import DelayLine
from app.services.qp_algebra import RationalTF
from app.services.simulator import (
    A_KEYS,
    CSV_COLUMNS,
    LAYER1_COLUMNS,
    PlantConfig,
    SimScenario,
    UNFORCED_MODEL_TIME_CONSTANTS,
    YTilde,
    envelope_rate,
    integrate_closed_loop,
    layer1_voltages,
    layer2_command,
    layer3_command,
    measurement_map,
    realize_G,
    unforced_scenario,
    ytilde_from_psi,
)
from app.services.stability import crossing_point, stability_verdict
from app.services.synthesis import (
    ChiParams,
    ModelSpec,
    assemble_pa,
    build_precompensator,
    compute_tau_max,
    validate_chi,
)
from config import Config

DESIGN_CHI = ChiParams(chi1=1.42662, chi2=217.2061, chi3=676.2171, k2=0.1)
DESIGN_MODEL = ModelSpec.from_time_constants(0.04, 0.05, 0.06)
LAYER1_A = {'a11': 4.0, 'a12': 0.0, 'a13': 0.0, 'a14': 0.0, 'a15': 12.0,
            'a21': 5.0, 'a22': 0.0, 'a23': 0.0, 'a24': 0.0, 'a25': 0.0, 'a26': 80.0}


def short_scenario(**kwargs):
    params = dict(tau=0.1, h=1e-3, horizon=0.6)
    params.update(kwargs)
    return SimScenario.build(DESIGN_CHI, DESIGN_MODEL, **params)


@pytest.fixture(scope='module')
def step_run():
    sc = SimScenario.build(DESIGN_CHI, DESIGN_MODEL, tau=0.1, h=1e-4, horizon=1.5)
    return sc, integrate_closed_loop(sc)


def test_layer3_command():
    assert layer3_command(0.142662, 0.1, 1.0, 1.0, 0.1) == pytest.approx(0.342662, rel=1e-12)


def test_layer2_command_cancels_at_matched_gains(design_gains):
    assert layer2_command(design_gains, design_gains.kappa, 0.1, 0.1, 0.0) == 0.0


def test_layer1_voltages_structure(design_gains):
    cfg = PlantConfig(r_w=0.05, b_w=0.15, a=LAYER1_A)
    still = YTilde(0.0, 0.0, 0.0, 0.0)
    u1, u2 = layer1_voltages(cfg, design_gains, 1.0, 0.0, still)
    assert u1 == u2 == pytest.approx(design_gains.lambda01 / (2 * 12.0))
    u1, u2 = layer1_voltages(cfg, design_gains, 0.0, 1.0, still)
    assert u1 == pytest.approx(design_gains.lambda02 / (2 * 80.0))
    assert u2 == pytest.approx(-design_gains.lambda02 / (2 * 80.0))


def test_layer1_voltages_degenerate(design_gains):
    still = YTilde(0.0, 0.0, 0.0, 0.0)
    with pytest.raises(DegenerateConfig):
        layer1_voltages(PlantConfig(r_w=0.05, b_w=0.15), design_gains, 1.0, 0.0, still)
    with pytest.raises(DegenerateConfig):
        layer1_voltages(PlantConfig(r_w=0.05, b_w=0.15, a=dict(LAYER1_A, a26=0.0)),
                        design_gains, 1.0, 0.0, still)


def test_plant_config_validation():
    with pytest.raises(DegenerateConfig):
        PlantConfig(r_w=0.0, b_w=0.15)
    with pytest.raises(DegenerateConfig):
        PlantConfig(r_w=0.05, b_w=0.15, a={k: 1.0 for k in A_KEYS[:-1]})


def test_measurement_map_and_wheel_reconstruction():
    phi = DelayLine(0.1, 32)
    phi_dot = DelayLine(0.1, 32)
    for k in range(20):
        phi.push(0.1 * k)
        phi_dot.push(1.0)
    history = {'phi': phi, 'phi_dot': phi_dot}

    psi = measurement_map(history, 0.5, 1.5)
    assert psi.psi5 == pytest.approx(1.0)
    assert psi.psi6 == pytest.approx(1.0)
    assert psi.psi1 is None

    plant = PlantConfig(r_w=0.05, b_w=0.15)
    psi = measurement_map(history, 0.5, 1.5, plant, y1=0.4, y1dot=0.2, y2dot=0.3, y2ddot=-0.1)
    yt = ytilde_from_psi(psi, plant)
    assert (yt.y1, yt.y1dot, yt.y2dot, yt.y2ddot) == pytest.approx((0.4, 0.2, 0.3, -0.1))
    assert psi.psi1 == pytest.approx((0.4 - 0.15 * 0.3) / 0.05)


def test_realization_matches_symbolic_precompensator():
    G = build_precompensator(DESIGN_CHI, DESIGN_MODEL)
    realization = realize_G(DESIGN_CHI, DESIGN_MODEL)
    for tau in (0.0, 0.2, 0.4):
        for omega in np.logspace(-2, 3, 50):
            s = 1j * omega
            assert realization.frequency_response(s, tau) == pytest.approx(
                G.evaluate(s, tau), rel=1e-8)


def test_realize_G_needs_proper_precompensator():
    model = ModelSpec.from_tf(RationalTF.from_s_coeffs([1.0], [1.0, 3.0, 2.0]))
    with pytest.raises(NotProper):
        realize_G(DESIGN_CHI, model)


def test_step_experiment_model_matching(step_run):
    sc, traj = step_run
    assert traj.completed
    assert traj.column_names == CSV_COLUMNS
    step = sc.r_final - sc.r_initial
    assert np.max(np.abs(traj['err'])) <= 1e-3 * abs(step)
    assert traj['y2'][-1] == pytest.approx(1.2 * sc.ybar2, rel=1e-3)
    assert traj['y1'][-1] == pytest.approx(1.1 * sc.ybar1, rel=1e-3)
    assert traj['t'][0] == 0.0
    assert traj['t'][-1] == pytest.approx(1.5)


def test_step_experiment_signals_start_at_equilibrium(step_run):
    sc, traj = step_run
    assert traj['y2'][0] == sc.ybar2
    assert traj['psi5'][0] == pytest.approx(sc.ybar2)
    assert traj['w_tilde2'][-1] == pytest.approx(1.2 * sc.ybar2, rel=1e-3)


def test_decoupled_channels_are_bit_identical():
    base = integrate_closed_loop(short_scenario())
    other_r = integrate_closed_loop(short_scenario(r_step=-0.3))
    other_w1 = integrate_closed_loop(short_scenario(w1_step=0.4))
    assert np.array_equal(base['y1'], other_r['y1'])
    assert not np.array_equal(base['y2'], other_r['y2'])
    assert np.array_equal(base['y2'], other_w1['y2'])


def test_deterministic():
    a = integrate_closed_loop(short_scenario())
    b = integrate_closed_loop(short_scenario())
    for name in a.column_names:
        assert np.array_equal(a[name], b[name])


def test_zero_amplitude_steps_stay_flat():
    traj = integrate_closed_loop(short_scenario(w1_step=0.0, r_step=0.0))
    np.testing.assert_allclose(traj['y1'], 0.5, atol=1e-12)
    np.testing.assert_allclose(traj['y2'], 0.5, atol=1e-12)


def test_layer1_columns_when_plant_configured():
    plant = PlantConfig(r_w=0.05, b_w=0.15, a=LAYER1_A)
    traj = integrate_closed_loop(short_scenario(plant=plant))
    assert traj.column_names == CSV_COLUMNS + LAYER1_COLUMNS
    assert np.all(np.isfinite(traj['u1']))
    np.testing.assert_allclose(traj['omega_wl'] * 0.05 + 0.15 * traj['y2dot'], traj['y1'],
                               atol=1e-12)


def test_guard_truncates_trajectory(monkeypatch):
    monkeypatch.setattr(Config, 'STATE_GUARD', 0.55)
    sc = short_scenario()
    traj = integrate_closed_loop(sc)
    assert not traj.completed
    assert traj.overflow_time is not None
    assert len(traj) < sc.n_steps + 1
    assert traj['t'][-1] < traj.overflow_time


@pytest.mark.parametrize('kwargs', [
    dict(h=0.02),                   # above tau/10
    dict(horizon=0.3),              # below 10 x slowest time constant
    dict(tau=-0.1),
    dict(h=0.0),
])
def test_scenario_validation(kwargs):
    with pytest.raises(ValueError):
        short_scenario(**kwargs)


def test_envelope_rate():
    t = np.linspace(0.0, 10.0, 2001)
    decaying = envelope_rate(t, np.exp(-0.5 * t) * np.sin(5.0 * t))
    growing = envelope_rate(t, np.exp(0.3 * t) * np.sin(5.0 * t))
    assert decaying.decaying and decaying.rate < 0
    assert not growing.decaying and growing.rate > 0


@pytest.mark.parametrize('factor, stable', [(0.8, True), (1.2, False)])
def test_unforced_bracketing_step_experiment(factor, stable):
    tau = factor * crossing_point(DESIGN_CHI.chi2, DESIGN_CHI.chi3).tau_cross
    traj = integrate_closed_loop(unforced_scenario(DESIGN_CHI, tau, perturbation=0.1))
    if not traj.completed:
        assert not stable
        return
    assert envelope_rate(traj['t'], traj['y2']).decaying is stable


@pytest.mark.slow
def test_verdicts_match_simulation_random(rng):
    slow_model = ModelSpec.from_time_constants(*UNFORCED_MODEL_TIME_CONSTANTS)
    checked = 0
    while checked < 30:
        chi2 = rng.uniform(20.0, 40.0)
        p = ChiParams(
            chi1=rng.uniform(1.0, 2.0),
            chi2=chi2,
            chi3=rng.uniform(0.01, 0.99) * chi2 ** 2 / 4.0,
            k2=rng.uniform(-0.2, 0.2),
        )
        if not validate_chi(p).passed:
            continue
        tau_cross = crossing_point(p.chi2, p.chi3).tau_cross
        for factor in (0.8, 1.2):
            tau = factor * tau_cross
            predicted = stability_verdict(assemble_pa(p), tau).stable
            traj = integrate_closed_loop(unforced_scenario(p, tau, model=slow_model))
            observed = traj.completed and envelope_rate(traj['t'], traj['y2']).decaying
            assert observed is predicted, (p, tau)
        checked += 1


def test_measurement_map_pure_rotation():
    history = {'phi': DelayLine(0.1, 16), 'phi_dot': DelayLine(0.1, 16)}
    for k in range(12):
        history['phi'].push(0.1 * k)
        history['phi_dot'].push(1.0)
    plant = PlantConfig(r_w=0.05, b_w=0.15)
    psi = measurement_map(history, 0.3, 1.0, plant, y1=0.0, y2dot=2.0)
    assert psi.psi1 == pytest.approx(-0.15 * 2.0 / 0.05)
    assert psi.psi2 == pytest.approx(0.15 * 2.0 / 0.05)
    assert psi.psi5 == pytest.approx(0.7)
    assert psi.psi6 == pytest.approx(1.0)


def test_measurement_map_zero_state():
    history = {'phi': DelayLine(0.1, 16), 'phi_dot': DelayLine(0.1, 16)}
    for _ in range(12):
        history['phi'].push(0.0)
        history['phi_dot'].push(0.0)
    psi = measurement_map(history, 0.3, 1.0, PlantConfig(r_w=0.05, b_w=0.15))
    assert (psi.psi1, psi.psi2, psi.psi3, psi.psi4, psi.psi5, psi.psi6) == (0.0,) * 6


def test_realization_steady_state_output():
    realization = realize_G(DESIGN_CHI, DESIGN_MODEL)
    x = realization.steady_state(1.0)
    q = realization.derivatives(x, 1.0)[0]
    assert q == pytest.approx(1.0, rel=1e-12)
    g_inf = realization.output(x, 1.0, q, 0.0)
    assert g_inf == pytest.approx(1.0 - DESIGN_CHI.k2 * DESIGN_CHI.chi1, rel=1e-12)
    assert g_inf == pytest.approx(0.857338, abs=1e-12)


@pytest.mark.parametrize('T', [2.0, 5.0])
def test_realization_initial_value_for_cascade(T):
    realization = realize_G(DESIGN_CHI, ModelSpec.from_time_constants(T, T, T))
    x = realization.steady_state(0.0)
    g0 = realization.output(x, 1.0, 0.0, 0.0)
    scale = (1.0 - DESIGN_CHI.k2 * DESIGN_CHI.chi1) / (DESIGN_CHI.chi1 * DESIGN_CHI.chi3)
    assert g0 == pytest.approx(scale / T ** 3, rel=1e-12)


@pytest.mark.slow
@pytest.mark.parametrize('fraction', [0.0, 0.4, 0.9])
def test_model_matching_across_delay_range(fraction):
    tau = fraction * compute_tau_max(DESIGN_CHI).tau_max
    sc = SimScenario.build(DESIGN_CHI, DESIGN_MODEL, tau=tau, h=1e-4, horizon=1.5)
    traj = integrate_closed_loop(sc)
    assert traj.completed
    assert np.max(np.abs(traj['err'])) <= 1e-3 * abs(sc.r_final - sc.r_initial)


@pytest.mark.slow
def test_halving_step_changes_little(step_run):
    _, coarse = step_run
    fine = integrate_closed_loop(SimScenario.build(DESIGN_CHI, DESIGN_MODEL, tau=0.1, h=5e-5, horizon=1.5))
    np.testing.assert_allclose(fine['t'][::2], coarse['t'], rtol=0, atol=1e-12)
    for name in ('y1', 'y2', 'g_out'):
        np.testing.assert_allclose(fine[name][::2], coarse[name], rtol=0, atol=1e-6)


def test_unforced_horizon_spans_the_delay():
    slow = ChiParams(chi1=1.8736, chi2=26.0033, chi3=2.1266, k2=0.1)
    tau = 0.8 * crossing_point(slow.chi2, slow.chi3).tau_cross
    sc = unforced_scenario(slow, tau)
    assert sc.horizon >= 20.0 * tau
    assert sc.h <= tau / 10.0
    assert sc.n_steps * sc.h == pytest.approx(sc.horizon)


@pytest.mark.slow
def test_unforced_long_delay_design_decays_below_crossing():
    slow = ChiParams(chi1=1.8736, chi2=26.0033, chi3=2.1266, k2=0.1)
    tau = 0.8 * crossing_point(slow.chi2, slow.chi3).tau_cross
    assert stability_verdict(assemble_pa(slow), tau).stable
    traj = integrate_closed_loop(unforced_scenario(slow, tau))
    assert traj.completed
    assert envelope_rate(traj['t'], traj['y2']).decaying
