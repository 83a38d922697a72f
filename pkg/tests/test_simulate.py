import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fdsynth.errors import ImproperTransferFunction
from fdsynth.lti import CompensatorChain, TFMatrix, eval_tf, tf
from fdsynth.simulate import (DelayLine, Identity, Saturation, SectorTable, SinusoidalGain,
                              Trajectory, min_distance, realize, simulate_closed_loop,
                              simulate_mimo_closed_loop, step_metrics)

ZERO = tf([0], [1])
REGRESSION_PLANTS = [
    tf([1], [1, 1]),
    tf([1], [0, 0, 0, 1]),
    tf([1], [0, 0, 1], 0.2),
    tf([2, -1, 0.5], [3, 1, 4, 2]),
    tf([0.05, 1], [1.272, 1]),
    tf([1, 2, 1], [1, 3, 3, 1]),
    tf([3], [1]),
]


def first_order_oracle(t):
    return 0.5 * (1 - np.exp(-2 * t))


# -- realization ------------------------------------------------------------------------

def test_realize_first_order():
    m = realize(tf([1], [1, 1]))
    np.testing.assert_array_equal(m.A, [[-1]])
    np.testing.assert_array_equal(m.B, [[1]])
    np.testing.assert_array_equal(m.C, [[1]])
    assert m.D == 0


def test_realize_constant():
    m = realize(tf([1], [1]))
    assert m.order == 0 and m.D == 1


def test_realize_cube_companion():
    m = realize(tf([1], [0, 0, 0, 1]))
    assert m.order == 3
    np.testing.assert_array_equal(m.A[-1], [0, 0, 0])
    np.testing.assert_array_equal(m.A[:-1, 1:], np.eye(2))


def test_realize_rejects_improper():
    with pytest.raises(ImproperTransferFunction):
        realize(tf([0, 0, 1], [1, 1]))


@pytest.mark.parametrize("plant", REGRESSION_PLANTS)
def test_realize_frequency_equivalence(plant):
    m = realize(plant)
    rational = tf(plant.num.coeffs, plant.den.coeffs)
    rng = np.random.default_rng(3)
    for w in 10 ** rng.uniform(-2, 2, 16):
        g = eval_tf(rational, w)
        assert abs(m.freqresp(w) - g) <= 1e-8 * abs(g)


# -- delay line -------------------------------------------------------------------------

def test_delay_zero_is_pass_through():
    d = DelayLine(0.0, 1e-3)
    assert d.length == 0 and d.output() is None
    assert [d.push(x) for x in (1.0, 2.0, 3.0)] == [1.0, 2.0, 3.0]


def test_delay_line_shifts():
    d = DelayLine(0.003, 1e-3)
    assert d.length == 3
    assert [d.push(x) for x in range(1, 7)] == [0.0, 0.0, 0.0, 1, 2, 3]


def test_delay_mismatch_warns():
    with pytest.warns(UserWarning):
        DelayLine(0.00125, 1e-3)


# -- nonlinearities ---------------------------------------------------------------------

def test_sinusoid_in_sector():
    x = np.linspace(-10, 10, 200_001)
    x = x[x != 0]
    ratio = SinusoidalGain()(x) / x
    assert ratio.min() >= 0.5 and ratio.max() <= 1.0


def test_saturation_and_table():
    sat = Saturation()
    assert sat(5.0) == 0.2 and sat(-5.0) == -0.2 and sat(0.1) == 0.1
    with pytest.raises(ValueError):
        Saturation(1, 1)
    tab = SectorTable((-1, 0, 1), (-0.5, 0, 1))
    assert tab(0.5) == 0.5 and tab(-0.5) == -0.25 and tab(3.0) == 3.0 and tab(-3.0) == -1.5
    with pytest.raises(ValueError):
        SectorTable((-1, 1), (0, 1))
    assert Identity()(1.7) == 1.7


# -- closed loop --------------------------------------------------------------------------

def test_first_order_analytic():
    tr = simulate_closed_loop(tf([1], [1, 1]), CompensatorChain(), horizon=5.0, h=1e-3)
    assert np.max(np.abs(tr.y[:, 0] - first_order_oracle(tr.t))) < 1e-4


def test_first_order_analytic_nonlinear_path():
    # a sector table equal to the identity forces the explicit RK4 stage path
    ident = SectorTable((-1, 1), (-1, 1))
    tr = simulate_closed_loop(tf([1], [1, 1]), CompensatorChain(), ident, horizon=5.0, h=1e-3)
    assert np.max(np.abs(tr.y[:, 0] - first_order_oracle(tr.t))) < 1e-4


@pytest.mark.parametrize("nl", [Identity(), SectorTable((-1, 1), (-1, 1))])
def test_rk4_fourth_order(nl):
    errs = []
    for h in (0.1, 0.05):
        tr = simulate_closed_loop(tf([1], [1, 1]), CompensatorChain(), nl, horizon=5.0, h=h)
        errs.append(np.max(np.abs(tr.y[:, 0] - first_order_oracle(tr.t))))
    assert errs[0] / errs[1] >= 8


def test_zero_reference_stays_zero():
    tr = simulate_closed_loop(tf([1], [0, 0, 1], 0.2), CompensatorChain.from_params([1, 2]),
                              reference=0.0, horizon=2.0)
    assert not tr.y.any()


def test_saturation_bounds_plant_input():
    tr = simulate_closed_loop(tf([1], [0, 0, 1], 0.2), CompensatorChain.from_params([1, 2]),
                              Saturation(), reference=1e3, horizon=5.0)
    assert np.nanmax(np.abs(tr.v)) <= 0.2


def test_delay_shifts_open_response():
    # with a pure delay in a stable loop the output stays at zero until T
    tr = simulate_closed_loop(tf([1], [1, 1], 0.5), CompensatorChain(), horizon=2.0, h=1e-3)
    assert np.all(tr.y[tr.t < 0.5 - 1e-9, 0] == 0)
    assert tr.y[-1, 0] != 0


def test_unstable_initial_design_blows_up():
    tr = simulate_closed_loop(tf([1], [0, 0, 0, 1]), CompensatorChain.from_params([0.45, 0.55]))
    assert not tr.bounded
    m = step_metrics(tr, 1.0)
    assert not m.bounded and not m.settled and math.isinf(m.overshoot)


def test_reference_two_section_design_settles():
    chain = CompensatorChain.from_params([0.0, 1.27, 0.0, 1.29])
    tr = simulate_closed_loop(tf([1], [0, 0, 0, 1]), chain)
    # two zeros at the origin cancel two integrators: L = 1/(s (s+1.27)(s+1.29)),
    # whose closed loop s^3 + 2.56 s^2 + 1.6383 s + 1 is Routh-stable
    m = step_metrics(tr, 1.0)
    assert m.bounded and m.settled


def test_feedthrough_algebraic_loop_singular():
    # Gc = 1 (z = p) and plant D = -1 make 1 + D_c D_p = 0
    with pytest.raises(ValueError):
        simulate_closed_loop(tf([-1], [1]), CompensatorChain.from_params([1, 1]), horizon=0.01)


def test_csv_export():
    tr = simulate_closed_loop(tf([1], [1, 1]), CompensatorChain(), horizon=0.003, h=1e-3)
    text = tr.to_csv()
    lines = text.split("\n")
    assert lines[0] == "t,y,u" and text.endswith("\n") and "\r" not in text
    assert len(lines) == 1 + 4 + 1      # header, four samples, trailing newline
    G = TFMatrix([[tf([1], [1, 1]), ZERO], [ZERO, tf([1], [1, 2])]])
    tr = simulate_mimo_closed_loop(G, [CompensatorChain()] * 2, [1, 1], horizon=0.002)
    assert tr.to_csv().split("\n")[0] == "t,y1,y2,u1,u2"


# -- MIMO ----------------------------------------------------------------------------------

def test_mimo_diagonal_matches_siso():
    g1, g2 = tf([1], [0, 0, 1], 0.2), tf([1], [1, 1])
    c1 = CompensatorChain.from_params([0.3, 2.0, 0.5, 4.0])
    c2 = CompensatorChain.from_params([1.0, 2.0])
    nl1, nl2 = SinusoidalGain(), Saturation()
    G = TFMatrix([[g1, ZERO], [ZERO, g2]])
    mimo = simulate_mimo_closed_loop(G, [c1, c2], [1.0, -0.5], horizon=8.0,
                                     nonlinearities=[nl1, nl2])
    s1 = simulate_closed_loop(g1, c1, nl1, 1.0, horizon=8.0)
    s2 = simulate_closed_loop(g2, c2, nl2, -0.5, horizon=8.0)
    assert np.max(np.abs(mimo.y[:, 0] - s1.y[:, 0])) <= 1e-12
    assert np.max(np.abs(mimo.y[:, 1] - s2.y[:, 0])) <= 1e-12


def test_mimo_zero_reference():
    G = TFMatrix([[tf([1], [0, 0, 0, 1]), tf([1], [0, 0, 1])],
                  [tf([1], [0, 1]), tf([1], [0, 0, 1], 0.2)]])
    tr = simulate_mimo_closed_loop(G, [CompensatorChain.from_params([1, 2])] * 2, [0, 0],
                                   horizon=1.0)
    assert not tr.y.any()


def test_reference_coupled_design_settles_slowly():
    G = TFMatrix([[tf([1], [0, 0, 0, 1]), tf([1], [0, 0, 1])],
                  [tf([1], [0, 1]), tf([1], [0, 0, 1], 0.2)]])
    c1 = CompensatorChain.from_params([0.05, 1.272, 0.05, 1.302])
    c2 = CompensatorChain.from_params([0.05, 1.34, 0.05, 1.35])
    tr = simulate_mimo_closed_loop(G, [c1, c2], [1.0, 1.0], horizon=300.0, h=2e-3)
    metrics = [step_metrics(tr, 1.0, channel=i) for i in range(2)]
    assert all(m.bounded and m.settled for m in metrics)
    # output 2 carries a slow mode: it settles after roughly 150 s, not within 60 s
    assert metrics[1].settling_time > 60


# -- metrics --------------------------------------------------------------------------------

def _traj(t, y, bounded=True):
    y = np.asarray(y, dtype=float)[:, None]
    return Trajectory(t, y, y, y, bounded, float(t[-1]))


def test_metrics_first_order():
    t = np.linspace(0, 20, 20_001)
    m = step_metrics(_traj(t, first_order_oracle(t)), 1.0)
    assert m.overshoot == 0
    assert m.steady_state_error == pytest.approx(0.5)
    assert m.settled and m.settling_time == pytest.approx(np.log(50) / 2, abs=1e-2)


def test_metrics_constant():
    t = np.linspace(0, 10, 101)
    m = step_metrics(_traj(t, np.ones_like(t)), 1.0)
    assert m.overshoot == 0 and m.settling_time == 0 and m.steady_state_error == 0


def test_metrics_diverging():
    t = np.linspace(0, 10, 101)
    m = step_metrics(_traj(t, np.exp(t), bounded=False), 1.0)
    assert not m.bounded and not m.settled and m.settling_time is None


def test_metrics_overshoot():
    t = np.linspace(0, 30, 30_001)
    y = 1 - np.exp(-0.5 * t) * np.cos(2 * t)
    m = step_metrics(_traj(t, y), 1.0)
    assert m.overshoot == pytest.approx(np.max(y) - 1, rel=1e-6)


@given(st.lists(st.complex_numbers(max_magnitude=10), min_size=1, max_size=20),
       st.complex_numbers(max_magnitude=10))
def test_min_distance(samples, point):
    d = min_distance(samples, point)
    assert d == pytest.approx(min(abs(s - point) for s in samples))


def test_min_distance_examples():
    assert min_distance([0, 0, 0], -1) == 1.0
    assert min_distance([-1], -1) == 0
    with pytest.raises(ValueError):
        min_distance([], 0)
