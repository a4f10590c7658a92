import numpy as np
import pytest

from krasovskii_kit.histories import (CantorApproxHistory, ConstantDelay,
                                      ConstantHistory, DelaySignal,
                                      NotInWError,
                                      PiecewiseLinearHistory,
                                      PiecewiseLinearPeriodicDelay,
                                      PowerComparison, SawtoothDelay,
                                      SinusoidDelay, make_rough_history,
                                      make_triangle_history,
                                      random_piecewise_linear,
                                      resample_piecewise_linear, shift_delay,
                                      uniform_norm, w_norm)

E1 = np.array([1.0])


def test_uniform_norm_constant():
    phi = ConstantHistory([3.0, 4.0], h_M=1.0)
    assert uniform_norm(phi) == pytest.approx(5.0, abs=1e-14)


def test_uniform_norm_piecewise_linear_nodes():
    phi = PiecewiseLinearHistory([-1.0, -0.5, 0.0], [0.0, 2.0, 0.0])
    assert uniform_norm(phi) == pytest.approx(2.0, abs=1e-14)


def test_w_norm_constant():
    phi = ConstantHistory([3.0, 4.0], h_M=2.0)
    assert w_norm(phi) == pytest.approx(5.0, abs=1e-14)


def test_w_norm_linear_ramp():
    phi = PiecewiseLinearHistory([-1.0, 0.0], [[-1.0], [0.0]])
    assert w_norm(phi) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("m,h_M,expected", [
    (1, 1.0, 2.0),
    (10, 1.0, 20.0),
    (1, 4.0, 1.0),
])
def test_triangle_history_w_norm(m, h_M, expected):
    phi = make_triangle_history(m, h_M, E1)
    assert uniform_norm(phi) == pytest.approx(1.0, abs=0.0)
    assert w_norm(phi) == pytest.approx(expected, rel=1e-12)


def test_triangle_history_closed_form_family():
    for h_M in (0.25, 1.0, 4.0):
        for m in range(1, 65):
            phi = make_triangle_history(m, h_M, E1)
            ratio = w_norm(phi) / uniform_norm(phi)
            assert abs(ratio - 2.0 * m / np.sqrt(h_M)) < 1e-9


def test_triangle_rejects_non_unit_direction():
    with pytest.raises(ValueError, match="unit"):
        make_triangle_history(1, 1.0, np.array([2.0]))


def test_sqrt_kink_endpoint_values():
    phi = make_rough_history("sqrt-kink", 1.0, E1)
    assert phi.value(-1.0)[0] == pytest.approx(1.0, abs=1e-14)
    assert phi.value(0.0)[0] == pytest.approx(0.0, abs=1e-14)
    # continuity near the kink
    taus = np.linspace(-1e-3, 0.0, 50)
    vals = phi.values(taus)[:, 0]
    assert np.max(np.abs(np.diff(vals))) < 1e-1


def test_cantor_approx_not_in_w():
    phi = make_rough_history("cantor-approx", 1.0, E1, levels=6)
    assert isinstance(phi, CantorApproxHistory)
    with pytest.raises(NotInWError, match="not in W"):
        w_norm(phi)
    # explicit conversion exposes the interpolant's own (finite) W-norm
    assert w_norm(phi.as_piecewise_linear()) > 0.0


def test_unknown_rough_kind():
    with pytest.raises(ValueError, match="unknown"):
        make_rough_history("weierstrass", 1.0, E1)


def test_sqrt_kink_interpolant_w_norm_diverges():
    phi = make_rough_history("sqrt-kink", 1.0, E1)
    norms = [w_norm(resample_piecewise_linear(phi, 2 ** k + 1))
             for k in range(4, 13)]
    assert all(b > a for a, b in zip(norms, norms[1:]))


def test_t_sin_inv_t_continuous_at_zero():
    phi = make_rough_history("t-sin-inv-t", 1.0, E1)
    assert phi.value(0.0)[0] == 0.0
    assert abs(phi.value(-1e-9)[0]) <= 1e-9
    with pytest.raises(NotInWError):
        w_norm(phi)


def test_history_domain_error():
    phi = ConstantHistory([1.0], h_M=1.0)
    with pytest.raises(ValueError, match="outside"):
        phi.value(-1.5)
    with pytest.raises(ValueError, match="outside"):
        phi.value(0.5)


def test_embedding_inequality_random_piecewise_linear():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        h_M = float(rng.uniform(0.2, 3.0))
        dim = int(rng.integers(1, 4))
        phi = random_piecewise_linear(h_M, dim, rng,
                                      n_nodes=int(rng.integers(2, 12)),
                                      amplitude=float(rng.uniform(0.1, 5.0)))
        assert uniform_norm(phi) <= (1.0 + np.sqrt(h_M)) * w_norm(phi) + 1e-12


def test_shift_constant_delay():
    zeta = DelaySignal(1.0, [ConstantDelay(0.7)])
    shifted = shift_delay(zeta, 12.3)
    ts = np.linspace(0.0, 10.0, 20)
    assert np.allclose(shifted.component_values(0, ts), 0.7)


def test_shift_sinusoid_phase_update():
    zeta = DelaySignal(1.0, [SinusoidDelay(0.5, 0.3, 2.0, 0.0)])
    a = np.pi
    shifted = shift_delay(zeta, a)
    assert shifted.components[0].phase == pytest.approx(2.0 * np.pi)
    ts = np.linspace(0.0, 20.0, 100)
    assert np.max(np.abs(shifted.component_values(0, ts)
                         - zeta.component_values(0, ts + a))) < 1e-12


def test_shift_sawtooth_by_period_is_identity():
    saw = SawtoothDelay(0.1, 0.9, period=2.0)
    zeta = DelaySignal(1.0, [saw])
    shifted = shift_delay(zeta, 2.0)
    ts = np.linspace(0.0, 10.0, 200)
    assert np.max(np.abs(shifted.component_values(0, ts)
                         - zeta.component_values(0, ts))) < 1e-12


def test_shift_composition():
    rng = np.random.default_rng(9)
    comps = [SinusoidDelay(0.4, 0.2, 1.7, 0.3),
             SawtoothDelay(0.0, 0.8, 1.3, 0.2),
             PiecewiseLinearPeriodicDelay([0.0, 0.5, 1.0], [0.2, 0.6, 0.2])]
    zeta = DelaySignal(1.0, comps)
    for _ in range(20):
        a, b = rng.uniform(0.0, 5.0, size=2)
        once = shift_delay(shift_delay(zeta, a), b)
        both = shift_delay(zeta, a + b)
        ts = rng.uniform(0.0, 30.0, size=50)
        for i in range(zeta.arity):
            assert np.max(np.abs(once.component_values(i, ts)
                                 - both.component_values(i, ts))) < 1e-12


def test_delay_range_invariant_sampled():
    rng = np.random.default_rng(31)
    h_M = 1.5
    presets = [
        ConstantDelay(0.3),
        SinusoidDelay(0.7, 0.69, 3.0, 1.0),
        SawtoothDelay(0.0, 1.5, 0.7),
        PiecewiseLinearPeriodicDelay([0.0, 1.0, 2.0, 3.0],
                                     [0.1, 1.4, 0.5, 0.1]),
    ]
    zeta = DelaySignal(h_M, presets)
    ts = rng.uniform(0.0, 100.0, size=10_000)
    for i in range(zeta.arity):
        vals = zeta.component_values(i, ts)
        assert np.all(vals >= 0.0) and np.all(vals <= h_M)


def test_delay_range_rejected_at_construction():
    with pytest.raises(ValueError, match="range"):
        DelaySignal(1.0, [SinusoidDelay(0.9, 0.2, 1.0)])
    with pytest.raises(ValueError, match="range"):
        DelaySignal(1.0, [ConstantDelay(1.2)])


def test_power_comparison_validation():
    w = PowerComparison(2.0, 2.0)
    assert w(3.0) == pytest.approx(18.0)
    with pytest.raises(ValueError):
        PowerComparison(-1.0, 2.0)
