import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdelim.errors import InvalidSpectrumError, RegimeWarning
from qdelim.linalg import SX, SY, SZ, build_dissipator
from qdelim.tls import (
    N_TH_THRESHOLD,
    BathSpec,
    QddStrongParams,
    QddUltraParams,
    Shape,
    TargetOps,
    ThermalParams,
    bath_dissipators_flat,
    bath_dissipators_ultrastrong,
    decoupling_average,
    drive_hamiltonian,
    drive_propagator,
    detuning_bound,
    first_order_frequency_strong,
    ksz_closed_form,
    ksz_local_maxima,
    ksz_omega2_zero,
    om2_zero_rates,
    omega_sz2_exact,
    reduction_rates,
    reference_drive,
    rwa_averaged_dissipator,
    sigma_a_ladder,
    sigma_ax,
    steady_state_matrix,
    steady_state_strong,
    strong_env_liouvillian,
    strong_rates_asymptotic,
    strong_rates_exact,
    strong_reduction,
    thm3_classify,
    ultra_rates_asymptotic,
    ultra_reduction,
)
from qdelim.linalg import vec

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_strong(rng, g=1.0):
    tp = ThermalParams(rng.uniform(0.1, 10) / (1 + 2 * 1.0), rng.uniform(0, 2))
    return QddStrongParams(g, rng.uniform(0.5, 3), rng.uniform(0, 100), rng.uniform(-5, 5), tp.kappa_minus, tp.kappa_plus)


# propagator ----------------------------------------------------------------


def test_propagator_identity_and_unitary():
    p = QddStrongParams(1.0, 1.3, 4.0, 0.7, 1.0, 0.2)
    assert np.allclose(drive_propagator(p, 0.0), np.eye(2))
    U = drive_propagator(p, 2.345)
    assert np.max(np.abs(U.conj().T @ U - np.eye(2))) < 1e-12


def test_propagator_spin_pi():
    p = QddStrongParams(1.0, 1.3, 4.0, 0.0, 1.0, 0.2)
    t = 2 * np.pi / p.Lam
    expected = -np.diag(np.exp(-1j * p.w1 * np.pi / p.Lam * np.array([1, -1])))
    assert np.allclose(drive_propagator(p, t), expected, atol=1e-12)


def test_propagator_solves_schroedinger():
    rng = np.random.default_rng(0)
    p = QddStrongParams(1.0, 1.3, 4.0, 0.7, 1.0, 0.2)
    h = 1e-6 / p.Lam
    for t in rng.uniform(0, 20, 50):
        dU = (drive_propagator(p, t + h) - drive_propagator(p, t - h)) / (2 * h)
        assert np.max(np.abs(dU + 1j * drive_hamiltonian(p, t) @ drive_propagator(p, t))) < 1e-6


# decoupling averages -------------------------------------------------------


@pytest.mark.parametrize("a", ["x", "y", "z"])
def test_reference_drive_decouples(a):
    avg = decoupling_average(reference_drive(3.0), a, n_periods=2)
    assert np.linalg.norm(avg, 2) < 1e-8


def test_zero_detuning_z_average_vanishes():
    avg = decoupling_average(QddStrongParams(1.0, 1.0, 7.3, 0.0, 1.0, 0.0), "z", n_periods=4)
    assert np.linalg.norm(avg, 2) < 1e-2


def test_detuned_z_average_leading_term():
    res = []
    for w2 in (20.0, 80.0, 320.0):
        p = QddStrongParams(1.0, 1.0, w2, 0.1 * w2, 1.0, 0.0)
        avg = decoupling_average(p, "z")
        r = np.linalg.norm(avg - p.sin_alpha * sigma_ax(p.sin_alpha, p.cos_alpha), 2)
        assert r < p.w1 / p.Lam
        res.append(r)
    assert res[-1] < res[0]


def test_decoupling_average_validation():
    with pytest.raises(ValueError):
        decoupling_average(reference_drive(1.0), "z", n_periods=0)


# exact rates ---------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_closed_form_matches_linear_solve(seed):
    p = random_strong(np.random.default_rng(seed))
    exact = strong_rates_exact(p)["kappa_sz"]
    assert ksz_closed_form(p) == pytest.approx(exact, rel=1e-10)


def test_closed_form_nonnegative():
    rng = np.random.default_rng(1)
    vals = [ksz_closed_form(random_strong(rng)) for _ in range(10_000)]
    assert min(vals) >= 0


@pytest.mark.parametrize("n_th", [0.0, 0.05, 0.3, 1.7])
def test_omega2_zero_value(n_th):
    tp = ThermalParams(0.9, n_th)
    p = QddStrongParams(0.3, 1.0, 0.0, 0.4, tp.kappa_minus, tp.kappa_plus)
    assert ksz_closed_form(p) == pytest.approx(ksz_omega2_zero(tp, p.g), rel=1e-10, abs=1e-300)
    assert strong_rates_exact(p)["kappa_sz"] == pytest.approx(ksz_omega2_zero(tp, p.g), rel=1e-10, abs=1e-15)


def test_omega2_zero_transverse_rates():
    p = QddStrongParams(0.3, 1.2, 0.0, 0.4, 0.8, 0.3)
    exact = strong_rates_exact(p)
    ref = om2_zero_rates(p)
    for k in ("kappa_s_minus", "kappa_s_plus"):
        assert exact[k] == pytest.approx(ref[k], rel=1e-10)
    assert om2_zero_rates(QddStrongParams(0.3, 1.2, 0.0, 0.4, 0.8, 0.0))["kappa_s_plus"] == 0


def test_transverse_rates_peak_on_resonance():
    w1s = np.linspace(0.1, 3.0, 291)
    vals = [om2_zero_rates(QddStrongParams(0.3, w, 0.0, -1.5, 0.8, 0.3))["kappa_s_minus"] for w in w1s]
    assert w1s[int(np.argmax(vals))] == pytest.approx(1.5)


def test_pipeline_matches_exact_rates():
    p = QddStrongParams(0.01, 1.0, 3.0, 0.7, 0.8, 0.2)
    fr = reduction_rates(strong_reduction(p)).rates
    ex = strong_rates_exact(p)
    assert fr["z"] == pytest.approx(ex["kappa_sz"], rel=1e-10)
    assert fr["-"] == pytest.approx(ex["kappa_s_minus"], rel=1e-10)
    assert fr["+"] == pytest.approx(ex["kappa_s_plus"], rel=1e-10)


def test_hamiltonian_terms():
    p = QddStrongParams(0.01, 1.0, 3.0, 0.7, 0.8, 0.2)
    rep = reduction_rates(strong_reduction(p), hamiltonian=True)
    assert rep.hamiltonian_first["z1"] == pytest.approx(first_order_frequency_strong(p), rel=1e-10)


def test_second_order_hamiltonian_large_drive():
    # spin-1: T_+T_- + T_-T_+ = 2(j(j+1) - T_z^2), so the fitted T_z^2 coefficient is w_z2 - 2 w_a
    p = QddStrongParams(1e-3, 1.0, 300.0, 0.7, 0.8, 0.2)
    ks, kd, D, g, w1, w2 = p.k_sum, p.k_diff, p.delta, p.g, p.w1, p.w2
    w_a = -kd * w1 * (4 * D * w1 + ks**2) * g**2 / (2 * ks * w2**2 * (ks**2 + 4 * w1**2))
    w_c = -g**2 * w1 / (ks**2 + 4 * w1**2)
    spin = TargetOps.spin(1.0)
    h = reduction_rates(strong_reduction(p, spin), spin, hamiltonian=True).hamiltonian_second
    assert h["z2"] == pytest.approx(omega_sz2_exact(p) - 2 * w_a, rel=1e-3)
    # qubit: [T_+, T_-] = 2 T_z
    hq = reduction_rates(strong_reduction(p), hamiltonian=True).hamiltonian_second
    assert hq["z1"] == pytest.approx(2 * w_c, rel=1e-4)


def test_hot_bath_has_no_hamiltonian_terms():
    p = QddStrongParams(0.01, 1.0, 3.0, 0.7, 0.5, 0.5)
    assert first_order_frequency_strong(p) == 0
    assert omega_sz2_exact(p) == 0


def test_steady_state_closed_form():
    p = QddStrongParams(0.0, 1.0, 3.0, 0.7, 0.8, 0.2)
    rho = steady_state_matrix(*steady_state_strong(p))
    assert np.max(np.abs(strong_env_liouvillian(p) @ vec(rho))) < 1e-14


# asymptotics ---------------------------------------------------------------


def test_large_drive_within_one_percent():
    ks = 1.0
    p = QddStrongParams(0.01, ks, 1e3 * ks, ks, 0.7, 0.3)
    ex, asym = strong_rates_exact(p), strong_rates_asymptotic(p)
    assert ex["kappa_sz"] / asym["kappa_sz"] == pytest.approx(1, abs=1e-2)
    assert ex["kappa_s_minus"] / asym["kappa_s_pm"] == pytest.approx(1, abs=1e-2)
    assert ex["kappa_s_plus"] / asym["kappa_s_pm"] == pytest.approx(1, abs=1e-2)


def test_large_drive_defect_decreases():
    defects = []
    for r in (1e2, 1e3, 1e4):
        p = QddStrongParams(0.01, 1.0, r, 1.0, 0.7, 0.3)
        defects.append(abs(ksz_closed_form(p) / strong_rates_asymptotic(p)["kappa_sz"] - 1))
    assert defects[0] > defects[1] > defects[2]


def test_large_drive_zero_detuning_and_fast_drive():
    p = QddStrongParams(0.1, 1.0, 50.0, 0.0, 0.7, 0.3)
    assert strong_rates_asymptotic(p)["kappa_sz"] == pytest.approx(p.k_sum * p.g**2 / p.w2**2)
    a = strong_rates_asymptotic(QddStrongParams(0.1, 10.0, 500.0, 0.0, 0.7, 0.3))["kappa_s_pm"]
    b = strong_rates_asymptotic(QddStrongParams(0.1, 20.0, 500.0, 0.0, 0.7, 0.3))["kappa_s_pm"]
    assert a / b == pytest.approx(4, rel=1e-2)


def test_asymptotic_regime_warning():
    with pytest.warns(RegimeWarning):
        strong_rates_asymptotic(QddStrongParams(0.1, 1.0, 0.5, 0.0, 0.7, 0.3))


def test_ultra_polarized_terms_vanish():
    p = QddUltraParams(0.01, 1.0, 1e3, 0.5, 0.2, 1.0, 0.0)
    asym = ultra_rates_asymptotic(p)
    assert asym["kappa_sz"] == pytest.approx((p.k_sum + 4 * p.kappa_ax) * p.g**2 / p.w2**2)
    assert asym["kappa_s_pm"] == pytest.approx(p.g**2 * (4 * p.kappa_ax + p.k_sum) / (4 * p.w2**2))


def test_ultra_vs_strong_structure():
    g, ks, D, w2 = 0.01, 1.0, 1.0, 1e3
    u = ultra_rates_asymptotic(QddUltraParams(g, 1.0, w2, D, 0.0, 0.5, 0.5))
    s = strong_rates_asymptotic(QddStrongParams(g, 1.0, w2, D, 0.5, 0.5))
    assert u["kappa_sz"] == pytest.approx(ks * g**2 / w2**2 + 2 * D**2 / w2**2 * g**2 / ks)
    assert s["kappa_sz"] == pytest.approx(ks * g**2 / w2**2 + 4 * D**2 / w2**2 * g**2 / ks)


@pytest.mark.parametrize("kx,am,ap", [(0.1, 0.6, 0.2), (0.0, 0.5, 0.5), (0.2, 0.8, 0.1)])
def test_ultra_matches_pipeline(kx, am, ap):
    ks = am + ap
    p = QddUltraParams(1e-3 * ks, ks, 1e3 * ks, ks, kx, am, ap)
    fr = reduction_rates(ultra_reduction(p)).rates
    asym = ultra_rates_asymptotic(p)
    assert fr["z"] == pytest.approx(asym["kappa_sz"], rel=2e-2)
    assert fr["-"] == pytest.approx(asym["kappa_s_pm"], rel=2e-2)
    assert fr["+"] == pytest.approx(asym["kappa_s_pm"], rel=2e-2)


# bath-derived rates --------------------------------------------------------


def test_flat_bath():
    r = bath_dissipators_flat(BathSpec(0.3, 5.0, lambda nu: 0.7), 1.0)
    assert r["kappa_minus"] == pytest.approx(2 * 0.09 * 0.7)
    assert r["kappa_plus"] == pytest.approx(2 * 0.09 * 0.7)
    r = bath_dissipators_flat(BathSpec(0.3, 5.0, lambda nu: float(nu > 0) * nu), 1.0)
    assert r["kappa_plus"] == 0
    lor = BathSpec(0.3, 5.0, lambda nu: 1 / (1 + (nu - 5.0) ** 2))
    assert bath_dissipators_flat(lor, 1.0)["kappa_minus"] == pytest.approx(2 * 0.09 * 0.5)


def test_negative_spectrum_rejected():
    with pytest.raises(InvalidSpectrumError):
        bath_dissipators_flat(BathSpec(0.3, 5.0, lambda nu: -1.0), 1.0)


def test_ultrastrong_bath_limits():
    b = BathSpec(0.3, 5.0, lambda nu: 0.7)
    r = bath_dissipators_ultrastrong(b, QddStrongParams(0.1, 1.0, 4.0, 0.0, 1.0, 0.0))
    c = 0.09 * 0.7
    assert r["kappa_ax"] == pytest.approx(c)
    assert r["kappa_am"] == pytest.approx(c)
    assert r["kappa_ap"] == pytest.approx(c)
    r = bath_dissipators_ultrastrong(b, QddStrongParams(0.1, 1.0, 0.0, 3.0, 1.0, 0.0))
    assert r["kappa_ax"] == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("w2,delta", [(4.0, 0.0), (4.0, 1.5), (1.0, -3.0)])
def test_rwa_average_reproduces_bath_rates(w2, delta):
    gamma, c = 0.3, 0.7
    p = QddStrongParams(0.1, 1.0, w2, delta, 1.0, 0.0)
    km = kp = 2 * gamma**2 * c
    avg = rwa_averaged_dissipator(km, kp, p.sin_alpha, p.cos_alpha, p.Lam)
    r = bath_dissipators_ultrastrong(BathSpec(gamma, 5.0, lambda nu: c), p)
    am, ap = sigma_a_ladder(p.sin_alpha, p.cos_alpha)
    sa = sigma_ax(p.sin_alpha, p.cos_alpha)
    direct = r["kappa_ax"] * build_dissipator(sa) + r["kappa_am"] * build_dissipator(am) + r["kappa_ap"] * build_dissipator(ap)
    assert np.max(np.abs(avg - direct)) < 1e-8


def test_sigma_a_ladder_convention():
    s, c = 0.6, 0.8
    am, ap = sigma_a_ladder(s, c)
    sa = sigma_ax(s, c)
    assert np.allclose(ap @ am - am @ ap, sa)
    assert np.allclose(sa @ ap - ap @ sa, 2 * ap)


# optimization shape --------------------------------------------------------


def test_threshold_value():
    assert N_TH_THRESHOLD == pytest.approx(0.0773502691896258)
    assert detuning_bound(0.05) == np.inf


@pytest.mark.parametrize("delta", [0.0, 2.0, 1e3])
def test_cold_bath_has_maximum(delta):
    assert thm3_classify(ThermalParams(1.0, 0.0), delta).shape is Shape.LOCAL_MAX


def test_hot_bath_large_detuning_monotone():
    res = thm3_classify(ThermalParams(1.0, 0.2), 1e3)
    assert res.shape is Shape.MONOTONE_DECREASING
    assert res.w2_max is None


@pytest.mark.parametrize("n_th", [0.05, 0.077, 0.1])
def test_classification_matches_dense_scan(n_th):
    tp = ThermalParams(1.0, n_th)
    base = QddStrongParams(1.0, 1.0, 0.0, 2.0, tp.kappa_minus, tp.kappa_plus)
    grid = np.linspace(0, 50, 2000)
    maxima = ksz_local_maxima(base, grid)
    res = thm3_classify(tp, 2.0)
    assert (len(maxima) == 1) == (res.shape is Shape.LOCAL_MAX)
    if maxima:
        assert maxima[0][1] == pytest.approx(res.w2_max, rel=1e-10)
        assert res.kappa_max >= max(ksz_closed_form(QddStrongParams(1.0, 1.0, w, 2.0, tp.kappa_minus, tp.kappa_plus)) for w in grid)


def test_target_ops():
    q = TargetOps.qubit()
    assert np.allclose(q.Tp, np.array([[0, 1], [0, 0]]))
    s = TargetOps.spin(1.0)
    assert np.allclose(s.Tx @ s.Ty - s.Ty @ s.Tx, 1j * s.Tz)
    assert np.allclose(s.Tx @ s.Tx + s.Ty @ s.Ty + s.Tz @ s.Tz, 2 * np.eye(3))


def test_ultra_params_validation():
    with pytest.raises(ValueError):
        QddUltraParams(0.1, 1.0, 1.0, 0.0, 0.1, 0.0, 0.0)
    with pytest.raises(ValueError):
        QddStrongParams(0.1, 0.0, 1.0, 0.0, 0.1, 0.0)
