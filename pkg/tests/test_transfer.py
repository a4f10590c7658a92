import numpy as np
import pytest

from krasovskii_kit.histories import (ConstantDelay, ConstantHistory,
                                      DelaySignal, SinusoidDelay,
                                      make_rough_history,
                                      make_triangle_history,
                                      random_piecewise_linear, shift_delay,
                                      uniform_norm)
from krasovskii_kit.solver import (ConstantKernel, CubicNonlinearity,
                                   GrowthCertificate, SystemModel, integrate)
from krasovskii_kit.transfer import (empirical_kl, envelope_to_csv,
                                     gronwall_check, lipschitz_bound,
                                     shift_consistency, smoothing_check)

E1 = np.array([1.0])


def scalar_model():
    return SystemModel(a=[[0.0]], pointwise=[([[-1.0]], 0)])


def test_lipschitz_examples():
    assert lipschitz_bound(scalar_model()) == pytest.approx(1.0, abs=1e-12)
    assert lipschitz_bound(SystemModel(a=[[0.0]])) == 0.0
    distributed = SystemModel(a=[[0.0]],
                              distributed=[(ConstantKernel([[1.0]]), 0)],
                              window=1.0)
    assert lipschitz_bound(distributed) == pytest.approx(1.0, rel=1e-12)


def test_lipschitz_rejects_unbounded_nonlinearity():
    model = SystemModel(a=[[0.0]], nonlinearity=CubicNonlinearity(1.0),
                        growth=GrowthCertificate(1.0, 1.0, 2.0))
    with pytest.raises(ValueError, match="no global Lipschitz bound"):
        lipschitz_bound(model)


def test_lipschitz_cubic_sampled_estimate():
    # Jacobian bound of x ||x||^2 on the ball of radius H is 3 H^2; the
    # sampled estimate with its 1.5 safety factor must land near it
    model = SystemModel(a=[[0.0]], nonlinearity=CubicNonlinearity(1.0),
                        growth=GrowthCertificate(2.0, 1.0, 2.0))
    est = lipschitz_bound(model, H=2.0)
    assert 0.9 * 3.0 * 4.0 <= est / 1.5 <= 1.01 * 3.0 * 4.0


def test_smoothing_zero_history():
    model = scalar_model()
    zeta = DelaySignal(1.0, [ConstantDelay(0.5)])
    rep = smoothing_check(model, zeta, ConstantHistory([0.0], 1.0), dt=1e-3)
    assert rep.passed and rep.observed_w_norm == 0.0 and rep.bound == 0.0


def test_smoothing_zero_model_factor_two():
    model = SystemModel(a=[[0.0]])
    zeta = DelaySignal(1.0, [ConstantDelay(0.5)])
    x0 = make_triangle_history(3, 1.0, E1)
    rep = smoothing_check(model, zeta, x0, dt=1e-3)
    assert rep.lipschitz == 0.0
    assert rep.gronwall_factor == pytest.approx(2.0)
    assert rep.smoothing_factor == pytest.approx(2.0)
    assert rep.bound == pytest.approx(2.0 * uniform_norm(x0))
    assert rep.observed_w_norm <= rep.bound
    assert rep.passed


def test_smoothing_report_factor_identities():
    model = scalar_model()
    zeta = DelaySignal(0.7, [SinusoidDelay(0.35, 0.3, 2.0, 0.0)])
    x0 = make_rough_history("sqrt-kink", 0.7, E1)
    rep = smoothing_check(model, zeta, x0, dt=1e-3)
    lip = rep.lipschitz
    assert rep.gronwall_factor == pytest.approx(1.0 + np.exp(lip * 0.7),
                                                rel=1e-12)
    assert rep.smoothing_factor == pytest.approx(
        rep.gronwall_factor * np.sqrt(1.0 + 0.7 * lip * lip), rel=1e-12)
    assert rep.bound == pytest.approx(rep.smoothing_factor * rep.sup_x0,
                                      rel=1e-12)
    assert rep.passed


@pytest.mark.parametrize("kind,levels", [("sqrt-kink", 0),
                                         ("cantor-approx", 8),
                                         ("t-sin-inv-t", 0)])
def test_smoothing_rough_initial_conditions(kind, levels):
    model = scalar_model()
    zeta = DelaySignal(1.0, [ConstantDelay(1.0)])
    x0 = make_rough_history(kind, 1.0, E1, levels=levels or 8)
    rep = smoothing_check(model, zeta, x0, dt=1e-3)
    assert rep.passed


def test_smoothing_radius_precondition():
    model = SystemModel(a=[[0.0]], pointwise=[([[-1.0]], 0)],
                        nonlinearity=CubicNonlinearity(1.0),
                        growth=GrowthCertificate(0.5, 1.0, 2.0))
    zeta = DelaySignal(1.0, [ConstantDelay(0.5)])
    big = ConstantHistory([0.45], 1.0)
    with pytest.raises(ValueError, match="must stay below"):
        smoothing_check(model, zeta, big, dt=1e-3)


def test_gronwall_zero_model():
    model = SystemModel(a=[[0.0]])
    zeta = DelaySignal(1.0, [ConstantDelay(0.5)])
    rep = gronwall_check(model, zeta, ConstantHistory([2.0], 1.0), dt=1e-3)
    assert rep.observed_factor == pytest.approx(1.0, rel=1e-12)
    assert rep.bound_factor == pytest.approx(2.0)
    assert rep.passed


def test_gronwall_decaying_and_growing_directions():
    zeta = DelaySignal(1.0, [ConstantDelay(1.0)])
    x0 = ConstantHistory([1.0], 1.0)
    stable = gronwall_check(scalar_model(), zeta, x0, dt=1e-3)
    assert stable.observed_factor == pytest.approx(1.0, abs=1e-9)
    unstable = SystemModel(a=[[0.0]], pointwise=[([[1.0]], 0)])
    rep = gronwall_check(unstable, zeta, x0, dt=1e-3)
    # x(t) = 1 + t on [0, 1]: the a-priori envelope is direction-agnostic
    assert rep.observed_factor == pytest.approx(2.0, rel=1e-6)
    assert rep.passed


def test_gronwall_zero_history_convention():
    rep = gronwall_check(scalar_model(),
                         DelaySignal(1.0, [ConstantDelay(1.0)]),
                         ConstantHistory([0.0], 1.0), dt=1e-3)
    assert rep.passed and rep.observed_factor == 0.0


def test_shift_consistency_zero_history():
    model = scalar_model()
    zeta = DelaySignal(1.0, [ConstantDelay(1.0)])
    dev = shift_consistency(model, zeta, ConstantHistory([0.0], 1.0),
                            T=3.0, dt=0.01)
    assert dev == 0.0


def test_shift_consistency_constant_delay():
    model = scalar_model()
    zeta = DelaySignal(1.0, [ConstantDelay(1.0)])
    dev = shift_consistency(model, zeta, ConstantHistory([1.0], 1.0),
                            T=3.0, dt=1e-3)
    assert dev <= 1e-6


def test_shift_consistency_time_varying_converges():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(2, 2))
    a -= (np.abs(np.linalg.eigvals(a)).max() + 0.3) * np.eye(2)
    b = rng.normal(size=(2, 2)) * 0.3
    model = SystemModel(a=a, pointwise=[(b, 0)])
    zeta = DelaySignal(0.5, [SinusoidDelay(0.25, 0.2, 2.0, 0.1)])
    x0 = random_piecewise_linear(0.5, 2, rng)
    # a burned-in window is a compatible initial condition, so the restart
    # deviation measures pure discretization error at clean fourth order
    burn = integrate(model, zeta, x0, T=1.25, dt=5e-4)
    ic = burn.window(1.25)
    zs = shift_delay(zeta, 1.25)
    devs = [shift_consistency(model, zs, ic, T=3.0, dt=dt)
            for dt in (0.015, 0.0075)]
    rich = np.abs(
        integrate(model, zs, ic, T=3.0, dt=0.015).states(
            np.linspace(0, 3, 100))
        - integrate(model, zs, ic, T=3.0, dt=0.0075).states(
            np.linspace(0, 3, 100))).max()
    assert devs[0] <= 10.0 * max(rich, 1e-12)
    assert devs[0] / devs[1] >= 8.0


def test_empirical_kl_zero_model_flat():
    model = SystemModel(a=[[0.0]])
    delays = [DelaySignal(1.0, [ConstantDelay(0.5)])]
    ics = [ConstantHistory([1.0], 1.0), ConstantHistory([0.4], 1.0)]
    env = empirical_kl(model, delays, ics, T=10.0, dt=0.01)
    assert env.verdict == "flat"
    assert abs(env.kappa) <= 1e-3


def test_empirical_kl_certified_decaying():
    model = scalar_model()
    rng = np.random.default_rng(3)
    h = 0.8
    delays = [DelaySignal(h, [SinusoidDelay(0.4 * h, 0.3 * h,
                                            float(rng.uniform(0.5, 3.0)),
                                            float(rng.uniform(0.0, 6.0)))])
              for _ in range(5)]
    ics = [random_piecewise_linear(h, 1, rng) for _ in range(8)]
    ics += [make_rough_history("sqrt-kink", h, E1),
            make_rough_history("cantor-approx", h, E1, levels=6)]
    env = empirical_kl(model, delays, ics, T=40.0, dt=0.01)
    assert env.verdict == "decaying"
    assert env.kappa > 0
    assert len(env.excluded_zero) == 0


def test_empirical_kl_growing_blowup():
    model = SystemModel(a=[[1.0]])
    delays = [DelaySignal(1.0, [ConstantDelay(0.5)])]
    ics = [ConstantHistory([1.0], 1.0)]
    env = empirical_kl(model, delays, ics, T=50.0, dt=0.01)
    assert env.verdict == "growing"
    assert env.blowups and env.blowups[0][1] < 50.0


def test_empirical_kl_excludes_zero_members():
    model = SystemModel(a=[[0.0]])
    delays = [DelaySignal(1.0, [ConstantDelay(0.5)])]
    ics = [ConstantHistory([0.0], 1.0), ConstantHistory([1.0], 1.0)]
    env = empirical_kl(model, delays, ics, T=5.0, dt=0.01)
    assert env.excluded_zero == (0,)


def test_envelope_csv(tmp_path):
    model = SystemModel(a=[[0.0]])
    delays = [DelaySignal(1.0, [ConstantDelay(0.5)])]
    env = empirical_kl(model, delays, [ConstantHistory([1.0], 1.0)],
                       T=2.0, dt=0.01, samples=10)
    text = envelope_to_csv(env, tmp_path / "env.csv")
    lines = text.strip().split("\n")
    assert lines[0] == "t,envelope,fit"
    assert len(lines) == 11
