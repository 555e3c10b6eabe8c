import numpy as np
import pytest

from wavescatter.fourier import (
    GridFunction,
    abs_freq,
    apply_multiplier,
    l2_norm,
    spatial_derivative,
    sup_norm,
)
from wavescatter.dno import (
    SolverDivergence,
    SurfaceState,
    dno_elliptic,
    dno_from_strip,
    dno_quadratic,
    good_unknown,
    slope_gate_value,
    solve_strip,
    traces_BV,
)

L = 2 * np.pi
N = 256


def grid_arrays(n=N, length=L):
    x = -length / 2 + np.arange(n) * length / n
    return x


def zero(n=N, length=L):
    return GridFunction.from_samples(np.zeros(n, dtype=complex), length)


def small_state(eps, n=N, length=L):
    x = grid_arrays(n, length)
    eta = GridFunction.from_samples(eps * np.exp(-x ** 2 / 1.5) * np.cos(2 * x) + 0j, length)
    psi = GridFunction.from_samples(eps * np.exp(-x ** 2 / 1.5) * np.sin(2 * x) + 0j, length)
    return SurfaceState(eta, psi)


def test_state_validation():
    x = grid_arrays()
    with pytest.raises(ValueError):
        SurfaceState(
            GridFunction.from_samples(1j * np.cos(x), L),
            zero(),
        )


def test_flat_surface_is_half_laplacian():
    x = grid_arrays()
    for k in (1, 3, 6):
        psi = GridFunction.from_samples(np.cos(k * x) + 0j, L)
        g = dno_elliptic(SurfaceState(zero(), psi), depth=8.0, tol=1e-11,
                         n_layers=64)
        exact = apply_multiplier(psi, abs_freq(1.0))
        assert l2_norm(g - exact) <= 1e-10 * l2_norm(psi)


def test_manufactured_harmonic_solution():
    x = grid_arrays()
    k = 3
    eta_s = 0.015 * np.cos(2 * x)
    eta = GridFunction.from_samples(eta_s + 0j, L)
    psi = GridFunction.from_samples(np.exp(1j * k * x) * np.exp(k * eta_s), L)
    etap = np.fft.ifft(1j * eta.xi * np.fft.fft(eta_s)).real
    target = (k - 1j * k * etap) * psi.samples
    sol = solve_strip(eta, psi, depth=8.0, tol=1e-11, n_layers=64)
    g = dno_from_strip(eta, psi, sol)
    assert np.abs(g.samples - target).max() <= 1e-6 * np.abs(target).max()


def test_manufactured_traces():
    # traces of the harmonic field phi = e^{ikx} e^{ky}: B = k psi, V = ik psi,
    # checked on the real part (all trace operations are real-linear in psi)
    x = grid_arrays()
    k = 2
    eta_s = 0.02 * np.cos(x)
    eta = GridFunction.from_samples(eta_s + 0j, L)
    psi_c = np.exp(1j * k * x) * np.exp(k * eta_s)
    psi = GridFunction.from_samples(psi_c.real + 0j, L)
    st = SurfaceState(eta, psi)
    g = dno_elliptic(st, depth=8.0, tol=1e-11, n_layers=64, slope_threshold=0.5)
    B, V = traces_BV(st, g)
    expectB = (k * psi_c).real
    expectV = (1j * k * psi_c).real
    assert np.abs(B.samples.real - expectB).max() <= 1e-5 * np.abs(expectB).max()
    assert np.abs(V.samples.real - expectV).max() <= 1e-5 * np.abs(expectV).max()


def test_traces_flat_and_reality(band_fn):
    psi = band_fn(kmax=12).real_part()
    st = SurfaceState(zero(), psi)
    g = dno_elliptic(st, depth=8.0, tol=1e-11, n_layers=48)
    B, V = traces_BV(st, g)
    scale = l2_norm(apply_multiplier(psi, abs_freq(1.0)))
    assert l2_norm(B - apply_multiplier(psi, abs_freq(1.0))) <= 1e-9 * scale
    assert l2_norm(V - apply_multiplier(psi, spatial_derivative(1))) <= 1e-9 * scale
    st2 = small_state(0.02)
    g2 = dno_elliptic(st2, depth=8.0, tol=1e-11, n_layers=64,
                      slope_threshold=0.5)
    B2, V2 = traces_BV(st2, g2)
    for f in (B2, V2):
        assert np.abs(f.samples.imag).max() <= 1e-12 * max(sup_norm(f), 1.0)


def test_good_unknown_flat_and_bounded():
    st = small_state(0.0)
    B = zero()
    assert sup_norm(good_unknown(st, B) - st.psi) == 0.0
    st2 = small_state(0.03)
    g = dno_elliptic(st2, depth=8.0, tol=1e-11, n_layers=64,
                     slope_threshold=0.5)
    B2, _ = traces_BV(st2, g)
    omega = good_unknown(st2, B2)
    # || omega - psi || <= C ||B||_inf ||eta||_L2 with a modest constant
    assert l2_norm(omega - st2.psi) <= 4.0 * sup_norm(B2) * l2_norm(st2.eta)


def test_good_unknown_refinement_consistency():
    vals = {}
    for n in (256, 512):
        st = small_state(0.02, n=n)
        g = dno_elliptic(st, depth=8.0, tol=1e-12, n_layers=96,
                         slope_threshold=0.5)
        B, _ = traces_BV(st, g)
        omega = good_unknown(st, B)
        vals[n] = omega
    coarse = vals[256].samples
    fine = vals[512].samples[::2]
    assert np.abs(coarse - fine).max() <= 1e-8


def test_taylor_expansion_slope():
    eps_list = [0.04, 0.02, 0.01, 0.005]
    errs = []
    for eps in eps_list:
        st = small_state(eps)
        ge = dno_elliptic(st, depth=8.0, tol=1e-12, n_layers=96,
                          slope_threshold=0.5)
        errs.append(l2_norm(ge - dno_quadratic(st)))
    slope = np.polyfit(np.log(eps_list), np.log(errs), 1)[0]
    assert abs(slope - 3.0) <= 0.2


def test_quadratic_expansion_flat_and_single_modes():
    x = grid_arrays()
    psi = GridFunction.from_samples(np.cos(4 * x) + 0j, L)
    st = SurfaceState(zero(), psi)
    assert l2_norm(dno_quadratic(st) - apply_multiplier(psi, abs_freq(1.0))) < 1e-12
    # bilinear action on pure modes: for eta = cos(mx), psi = e^{ikx} the
    # output modes are k +/- m with coefficients (k k' - |k||k'|)/2, which
    # vanish when k and k' share a sign
    m, k = 7, 5
    eta = GridFunction.from_samples(np.cos(m * x) + 0j, L)
    psik = GridFunction.from_samples(np.exp(1j * k * x), L)
    st2 = object.__new__(SurfaceState)
    object.__setattr__(st2, "eta", eta)
    object.__setattr__(st2, "psi", psik)
    bil = dno_quadratic(st2) - apply_multiplier(psik, abs_freq(1.0))
    c = bil.coefficients
    kk = np.rint(np.fft.fftfreq(N) * N).astype(int)
    pop = np.abs(c) > 1e-12 * max(np.abs(c).max(), 1e-30)
    kp, km = k + m, k - m
    assert set(kk[pop]) <= {kp, km}
    for kprime in (kp, km):
        expect = 0.5 * (k * kprime - abs(k) * abs(kprime))
        assert abs(c[kprime % N] - expect) < 1e-12 * max(abs(expect), 1.0)
    # same-sign interaction (k - m > 0) must cancel exactly
    assert abs(c[(k + m) % N]) < 1e-12 * max(np.abs(c).max(), 1e-30) or k + m < 0


def test_bilinear_form_symmetry_and_positivity():
    x = grid_arrays()
    eta = GridFunction.from_samples(0.02 * np.exp(-x ** 2 / 1.5) * np.cos(2 * x) + 0j, L)
    p1 = GridFunction.from_samples(np.cos(2 * x) + 0.3 * np.sin(5 * x) + 0j, L)
    p2 = GridFunction.from_samples(np.sin(3 * x) - 0.2 * np.cos(x) + 0j, L)
    tol = 1e-9
    opts = dict(depth=8.0, tol=tol, n_layers=128, slope_threshold=0.5)
    g1 = dno_elliptic(SurfaceState(eta, p1), **opts)
    g2 = dno_elliptic(SurfaceState(eta, p2), **opts)
    dx = L / N
    b12 = dx * np.sum(p1.samples.real * g2.samples.real)
    b21 = dx * np.sum(p2.samples.real * g1.samples.real)
    assert abs(b12 - b21) <= 10.0 * tol * max(abs(b12), 1.0)
    assert dx * np.sum(p1.samples.real * g1.samples.real) >= -10.0 * tol


def test_flux_mean_zero():
    st = small_state(0.03)
    g = dno_elliptic(st, depth=8.0, tol=1e-12, n_layers=96,
                     slope_threshold=0.5)
    assert abs(np.mean(g.samples.real)) <= 1e-8


def test_slope_gate_trips():
    x = grid_arrays()
    eta = GridFunction.from_samples(0.4 * np.cos(3 * x) + 0j, L)
    psi = GridFunction.from_samples(np.cos(x) + 0j, L)
    assert slope_gate_value(SurfaceState(eta, psi)) > 0.1
    with pytest.raises(ValueError):
        dno_elliptic(SurfaceState(eta, psi), depth=8.0)


def test_solver_divergence_reports_history():
    # steep surface with the gate disabled: the undamped iteration blows up
    x = grid_arrays()
    eta = GridFunction.from_samples(0.9 * np.cos(3 * x) + 0j, L)
    psi = GridFunction.from_samples(np.cos(2 * x) + 0j, L)
    with pytest.raises(SolverDivergence) as err:
        solve_strip(eta, psi, depth=8.0, tol=1e-12, n_layers=48,
                    check_gate=False, damping=1.0, max_iter=60)
    assert len(err.value.residual_history) >= 2
