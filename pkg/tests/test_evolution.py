import numpy as np
import pytest

from wavescatter.fourier import (
    GridFunction,
    abs_freq,
    apply_multiplier,
    l2_norm,
    sup_norm,
)
from wavescatter.dno import SurfaceState
from wavescatter.evolution import (
    BlowUpError,
    Trajectory,
    bump_state,
    bump_u,
    cubic_part,
    gaussian_bump,
    hamiltonian,
    linear_propagate,
    packet_u,
    quadratic_part,
    rhs_cubic,
    rhs_full,
    scale_solution,
    state_from_u,
    step_integrate,
    u_from_state,
    wrap_monitor_value,
    z_field_diagnostics,
)

L = 2 * np.pi
N = 256

DNO_OPTS = dict(depth=8.0, tol=1e-12, n_layers=96, slope_threshold=1.0)


def zero_grid(n=N, length=L):
    return GridFunction.from_samples(np.zeros(n, dtype=complex), length)


def test_rest_state():
    st = SurfaceState(zero_grid(), zero_grid())
    de, dp = rhs_full(st, "elliptic", DNO_OPTS)
    assert sup_norm(de) == 0.0 and sup_norm(dp) <= 1e-15


def test_u_state_roundtrip():
    st = bump_state(zero_grid(), 0.05, width=1.2, xi0=2.0)
    u = u_from_state(st)
    st2 = state_from_u(u)
    assert sup_norm(st2.eta - st.eta) <= 1e-12
    assert sup_norm(st2.psi - st.psi) <= 1e-12


def test_linearization_slope():
    base = bump_state(zero_grid(), 1.0, width=1.2, xi0=2.0)
    errs = []
    eps_list = [0.04, 0.02, 0.01]
    for eps in eps_list:
        st = SurfaceState(eps * base.eta, eps * base.psi)
        de, dp = rhs_full(st, "elliptic", DNO_OPTS)
        lin_de = apply_multiplier(st.psi, abs_freq(1.0))
        lin_dp = -1.0 * st.eta
        r = l2_norm(de - lin_de) + l2_norm(dp - lin_dp)
        errs.append(r / eps)
    slope = np.polyfit(np.log(eps_list), np.log(errs), 1)[0]
    assert abs(slope - 1.0) <= 0.1


def test_epsilon_expansion_ladder():
    base = bump_state(zero_grid(), 1.0, width=1.2, xi0=2.0)
    eps_list = [0.04, 0.02, 0.01, 0.005]
    r1, r2, r3 = [], [], []
    for eps in eps_list:
        st = SurfaceState(eps * base.eta, eps * base.psi)
        de, dp = rhs_full(st, "elliptic", DNO_OPTS)
        du = apply_multiplier(dp, abs_freq(0.5)) + 1j * de
        u = u_from_state(st)
        lin = 1j * apply_multiplier(u, abs_freq(0.5))
        res1 = du - lin
        res2 = res1 - 1j * quadratic_part(u)
        res3 = res2 - 1j * cubic_part(u)
        r1.append(l2_norm(res1))
        r2.append(l2_norm(res2))
        r3.append(l2_norm(res3))
    le = np.log(eps_list)
    assert abs(np.polyfit(le, np.log(r1), 1)[0] - 2.0) <= 0.3
    assert abs(np.polyfit(le, np.log(r2), 1)[0] - 3.0) <= 0.3
    assert abs(np.polyfit(le, np.log(r3), 1)[0] - 4.0) <= 0.3


def test_quadratic_mode_support():
    x = zero_grid().x
    u = GridFunction.from_samples(0.01 * np.exp(1j * 5 * x), L)
    q = quadratic_part(u)
    k = np.rint(np.fft.fftfreq(N) * N).astype(int)
    pop = np.abs(q.coefficients) > 1e-14 * max(np.abs(q.coefficients).max(), 1e-300)
    assert set(k[pop]) <= {0, 10, -10}


def test_rhs_cubic_zero():
    assert sup_norm(rhs_cubic(zero_grid())) == 0.0


def test_linear_propagator_exact():
    grid = zero_grid(512, 64 * np.pi)
    u0 = bump_u(grid, 0.05, width=4.0, xi0=1.0)
    traj = Trajectory(np.array([1.0]), [u0], "cubic", 0.05)
    out = step_integrate(traj, 5.0, 0.5, "if_rk4", nonlinearity=False,
                         wrap_threshold=None)
    exact = linear_propagate(u0, 4.0)
    assert l2_norm(out.states[-1] - exact) <= 1e-12


def test_integrator_fourth_order():
    grid = zero_grid(512, 64 * np.pi)
    u0 = bump_u(grid, 0.08, width=4.0, xi0=1.0)
    traj = Trajectory(np.array([1.0]), [u0], "cubic", 0.08)
    sol = {}
    for dt in (0.2, 0.1, 0.05):
        sol[dt] = step_integrate(traj, 3.0, dt, "if_rk4",
                                 wrap_threshold=None).states[-1]
    e1 = l2_norm(sol[0.2] - sol[0.05])
    e2 = l2_norm(sol[0.1] - sol[0.05])
    # (16 a - a) / (16 a/16 ... ) the two-level ratio for order 4 is ~ 17
    assert 10.0 <= e1 / e2 <= 26.0


def test_full_quartic_remainder_slope():
    # full-system RHS mapped to u minus the cubic model decays like eps^4
    base = bump_state(zero_grid(), 1.0, width=1.2, xi0=2.0)
    eps_list = [0.04, 0.02, 0.01]
    errs = []
    for eps in eps_list:
        st = SurfaceState(eps * base.eta, eps * base.psi)
        de, dp = rhs_full(st, "elliptic", DNO_OPTS)
        du = apply_multiplier(dp, abs_freq(0.5)) + 1j * de
        u = u_from_state(st)
        errs.append(l2_norm(du - rhs_cubic(u)))
    slope = np.polyfit(np.log(eps_list), np.log(errs), 1)[0]
    assert abs(slope - 4.0) <= 0.3


def test_hamiltonian_values():
    st = SurfaceState(zero_grid(), zero_grid())
    assert hamiltonian(st, "elliptic", DNO_OPTS) == 0.0
    k = 3
    x = zero_grid().x
    psi = GridFunction.from_samples(np.cos(k * x) + 0j, L)
    h = hamiltonian(SurfaceState(zero_grid(), psi), "elliptic", DNO_OPTS)
    assert abs(h - 0.25 * k * L) <= 1e-9 * abs(0.25 * k * L)


def test_blowup_guard():
    grid = zero_grid(512, 64 * np.pi)
    u0 = bump_u(grid, 0.05, width=4.0, xi0=1.0)
    traj = Trajectory(np.array([1.0]), [u0], "cubic", 0.05)
    with pytest.raises(BlowUpError) as err:
        step_integrate(traj, 2.0, 0.5, "if_rk4", guard=1e-9,
                       wrap_threshold=None)
    assert err.value.last_valid_time <= 2.0


def test_wrap_monitor_value():
    grid = zero_grid(2048, 256 * np.pi)
    u = packet_u(grid, 0.05)
    assert wrap_monitor_value(u) < 1e-9
    flat = GridFunction.from_samples(np.ones(2048, dtype=complex), 256 * np.pi)
    assert wrap_monitor_value(flat) == 1.0


def test_scaling_identity_and_equivariance():
    n, length = 256, 16 * np.pi
    grid = zero_grid(n, length)
    st = bump_state(grid, 0.04, width=2.0, xi0=1.5)
    traj = Trajectory(np.array([1.0]), [st], "full", 0.04)
    lam = 1.0
    scaled = scale_solution(traj, lam)
    assert sup_norm(scaled.states[0].eta - st.eta) <= 1e-12
    # RHS equivariance: d_t eta_l (x) = l^{-1} (d_t eta)(l^2 x)
    lam = 1.07
    scaled = scale_solution(traj, lam)
    opts = dict(depth=16.0, tol=1e-12, n_layers=96, slope_threshold=1.0)
    de, dp = rhs_full(st, "elliptic", opts)
    de_s, dp_s = rhs_full(scaled.states[0], "elliptic", opts)
    from wavescatter.fourier import spectral_interpolate

    target_de = spectral_interpolate(de, lam ** 2 * grid.x) / lam ** 3
    target_dp = spectral_interpolate(dp, lam ** 2 * grid.x) / lam ** 4
    scale_ref = max(sup_norm(de), sup_norm(dp))
    assert np.abs(de_s.samples - target_de).max() <= 1e-6 * scale_ref
    assert np.abs(dp_s.samples - target_dp).max() <= 1e-6 * scale_ref


def test_scaled_trajectory_defect():
    n, length = 256, 16 * np.pi
    grid = zero_grid(n, length)
    st = bump_state(grid, 0.04, width=2.0, xi0=1.5)
    opts = dict(depth=16.0, tol=1e-11, n_layers=64, check_gate=False)
    traj = Trajectory(np.array([1.0]), [st], "full", 0.04)
    traj = step_integrate(traj, 1.3, 2e-3, "rk4", store_times=[1.25, 1.3],
                          dno_mode="elliptic", dno_opts=opts,
                          wrap_threshold=None)

    def one_step_defect(tr):
        t0, t1 = tr.times[-2], tr.times[-1]
        stepped = step_integrate(
            Trajectory(np.array([t0]), [tr.states[-2]], "full", tr.epsilon),
            t1, 2e-3, "rk4", dno_mode="elliptic", dno_opts=opts,
            wrap_threshold=None)
        return (l2_norm(stepped.states[-1].eta - tr.states[-1].eta)
                + l2_norm(stepped.states[-1].psi - tr.states[-1].psi))

    base = one_step_defect(traj)
    scaled = scale_solution(traj, 1.05)
    defect = one_step_defect(scaled)
    assert defect <= 10.0 * max(base, 1e-12)


def test_z_diagnostics_p0_and_commutation():
    # p = 0 entries equal plain norms; Z kills the linear phase so Z u stays O(eps)
    n, length = 512, 128 * np.pi
    grid = zero_grid(n, length)
    u0 = packet_u(grid, 0.03, band=(0.7, 1.8), flat=(1.0, 1.5))
    traj = Trajectory(np.array([10.0]), [u0], "linear", 0.03)
    stores = [10.5 + 0.25 * m for m in range(5)] + [30.0 + 0.25 * m for m in range(5)]
    traj = step_integrate(traj, stores[-1], 0.25, "linear",
                          store_times=stores, wrap_threshold=None)
    table = z_field_diagnostics(traj, k_max=1, s=2.0, rho=1.5,
                                dno_mode="quadratic")
    from wavescatter.fourier import holder_norm, sobolev_norm
    from wavescatter.dno import dno_quadratic, good_unknown, traces_BV

    i = 0
    t0 = table["t"][i]
    idx = int(np.argmin(np.abs(traj.times - t0)))
    st = state_from_u(traj.states[idx])
    g = dno_quadratic(st)
    B, _ = traces_BV(st, g)
    omega = good_unknown(st, B)
    m0 = sobolev_norm(st.eta, 2.0) + sobolev_norm(
        apply_multiplier(omega, abs_freq(0.5)), 2.0)
    assert abs(table["M"][0][i] - m0) <= 1e-9 * m0
    # Z-commutation: ||Z u|| stays of the data size for the free flow
    eps = 0.03
    assert table["M"][1][i] <= 60.0 * table["M"][0][i]
