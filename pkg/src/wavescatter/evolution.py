"""Time integration of the water-wave system and of its cubic model.

Two dynamical models share one trajectory container:

* ``full``  -- the surface system in (eta, psi), with the Dirichlet-Neumann
  operator evaluated either by the elliptic solve or by its quadratic
  expansion;
* ``cubic`` -- the complex unknown u = |D_x|^{1/2} psi + i eta evolved by
  d_t u = i(|D_x|^{1/2} u + Q2(u, conj u) + C3(u, conj u)), the exact
  quadratic and cubic parts of the full nonlinearity with the quartic
  remainder dropped;
* ``linear`` -- the free flow exp(i t |D_x|^{1/2}), evaluated exactly.

Conservation, scaling-invariance, and vector-field diagnostics live here as
well.  The vector field Z = t d_t + 2 x d_x is realized with centered time
stencils on snapshot clusters and spectral x-derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fourier import (
    GridFunction,
    MultiplierSymbol,
    abs_freq,
    apply_multiplier,
    dealiased_product,
    freq_power,
    holder_norm,
    l2_norm,
    mask_spectral_floor,
    signed_freq_sqrt,
    sobolev_norm,
    spatial_derivative,
    spectral_interpolate,
    sup_norm,
)
from .dno import (
    SurfaceState,
    StripSolution,
    dno_elliptic,
    dno_from_strip,
    dno_quadratic,
    good_unknown,
    solve_strip,
    traces_BV,
)
from .stencils import centered_time_weights

__all__ = [
    "Trajectory",
    "BlowUpError",
    "WrapAroundError",
    "u_from_state",
    "state_from_u",
    "rhs_full",
    "quadratic_part",
    "cubic_part",
    "rhs_cubic",
    "linear_propagate",
    "step_integrate",
    "hamiltonian",
    "scale_solution",
    "z_field_diagnostics",
    "gaussian_bump",
    "bump_state",
    "bump_u",
    "packet_u",
    "wrap_monitor_value",
]


class BlowUpError(RuntimeError):
    def __init__(self, message, last_valid_time):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class WrapAroundError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Stored snapshots of a run; states match `model_tag`."""

    times: np.ndarray
    states: list
    model_tag: str  # "full" | "cubic" | "linear"
    epsilon: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size != len(self.states):
            raise ValueError("times and states must match")
        if t.size and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def uniform(self) -> bool:
        if self.times.size < 3:
            return True
        d = np.diff(self.times)
        return bool(np.all(np.abs(d - d[0]) <= 1e-12 * max(1.0, abs(d[0]))))

    def state_at(self, t: float):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot stored at t={t}")
        return self.states[i]

    def extended(self, new_times, new_states) -> "Trajectory":
        return Trajectory(
            np.concatenate([self.times, np.asarray(new_times, dtype=float)]),
            list(self.states) + list(new_states),
            self.model_tag,
            self.epsilon,
        )


# ---------------------------------------------------------------------------
# Change of unknown.
# ---------------------------------------------------------------------------


_inv_half_wave = MultiplierSymbol(lambda xi: np.abs(xi) ** (-0.5), 0.0, -0.5)


def u_from_state(state: SurfaceState) -> GridFunction:
    """u = |D_x|^{1/2} psi + i eta."""
    return apply_multiplier(state.psi, abs_freq(0.5)) + 1j * state.eta


def state_from_u(u: GridFunction) -> SurfaceState:
    """Invert u = |D_x|^{1/2} psi + i eta for real eta, mean-free psi."""
    eta = u.imag_part()
    psi = apply_multiplier(u.real_part(), _inv_half_wave)
    return SurfaceState(eta, psi)


# ---------------------------------------------------------------------------
# Right-hand sides.
# ---------------------------------------------------------------------------


def rhs_full(state: SurfaceState, dno_mode: str = "elliptic",
             dno_opts: dict | None = None, cache: dict | None = None):
    """(d_t eta, d_t psi) for the surface system.

    d_t eta = G(eta) psi,
    d_t psi = -eta - (1/2)(psi_x)^2 + (G(eta)psi + eta_x psi_x)^2 / (2(1+eta_x^2)).
    """
    opts = dict(dno_opts or {})
    if dno_mode == "elliptic":
        if cache is not None:
            prev, last = cache.get("prev"), cache.get("last")
            guess = None
            if last is not None:
                guess = 2.0 * last.chi - prev.chi if prev is not None else last.chi
            sol = solve_strip(state.eta, state.psi, initial=guess, **opts)
            cache["prev"], cache["last"] = last, sol
            stencil = opts.get("stencil", 7)
            g = dno_from_strip(state.eta, state.psi, sol, stencil=stencil)
            g = g.real_part()
        else:
            g = dno_elliptic(state, **opts)
    elif dno_mode == "quadratic":
        g = dno_quadratic(state)
    else:
        raise ValueError(f"unknown dno_mode {dno_mode!r}")
    eta_x = apply_multiplier(state.eta, spatial_derivative(1))
    psi_x = apply_multiplier(state.psi, spatial_derivative(1))
    num = g + dealiased_product(eta_x, psi_x)
    num2 = dealiased_product(num, num)
    psix2 = dealiased_product(psi_x, psi_x)
    denom = 2.0 * (1.0 + eta_x.samples.real ** 2)
    dpsi = (-state.eta.samples - 0.5 * psix2.samples + num2.samples / denom)
    return g, GridFunction.from_samples(dpsi, state.grid.domain_length)


def _nl_tools(n: int, length: float):
    """Padded-transform helpers shared by the nonlinear terms.

    On the doubled grid, products of two or three band-limited factors are
    alias-free for the retained modes, so all products are formed in padded
    physical space with one transform per distinct factor/result.
    """
    from .fourier import _grid_arrays

    m = 2 * n
    half = n // 2
    _, xi, sign_n = _grid_arrays(n, length)
    _, _, sign_m = _grid_arrays(m, length)

    def pad(c):
        big = np.zeros(m, dtype=complex)
        big[:half] = c[:half]
        big[m - half:] = c[half:]
        return np.fft.ifft(sign_m * big * m)

    def unpad(phys):
        c = sign_m * np.fft.fft(phys) / m
        return np.concatenate([c[:half], c[m - half:]])

    return xi, pad, unpad


def _cubic_nonlinearity(c: np.ndarray, n: int, length: float,
                        want=("q", "c"), xi_override=None) -> dict:
    """Quadratic and cubic parts of the model nonlinearity, on coefficients.

    With `xi_override` the multipliers are evaluated at the given frequencies
    instead of the grid's own (used for the semiclassical form, where every
    multiplier acts at h xi).
    """
    xi, pad, unpad = _nl_tools(n, length)
    if xi_override is not None:
        xi = np.asarray(xi_override)
    else:
        xi = xi.copy()
        xi[n // 2] = 0.0  # unpaired Nyquist: drop from odd multipliers
    absxi = np.abs(xi)
    rhalf = np.sqrt(absxi)
    with np.errstate(divide="ignore", invalid="ignore"):
        srt = np.where(xi != 0.0, np.sign(xi) * rhalf, 0.0)
    cbar = np.conj(c[np.concatenate([[0], np.arange(n - 1, 0, -1)])])
    A = c + cbar
    B = c - cbar
    hA_p = pad(rhalf * A)
    B_p = pad(B)
    out: dict[str, np.ndarray] = {}
    if "q" in want:
        sA_p = pad(srt * A)
        t1 = rhalf * unpad(sA_p * sA_p + hA_p * hA_p)
        t2 = absxi * unpad(B_p * hA_p)
        t3 = xi * unpad(B_p * sA_p)
        out["q"] = (-1j / 8.0) * t1 + (1j / 4.0) * t2 - (1j / 4.0) * t3
    if "c" in want:
        thA_p = pad(absxi * rhalf * A)
        inner_p = pad(absxi * unpad(B_p * hA_p))
        t1 = rhalf * unpad(hA_p * inner_p)
        t2 = rhalf * unpad(hA_p * B_p * thA_p)
        t3 = absxi * unpad(B_p * inner_p)
        t4 = absxi * unpad(B_p * B_p * thA_p)
        t5 = absxi ** 2 * unpad(B_p * B_p * hA_p)
        out["c"] = (1.0 / 8.0) * (t1 - t2 - t3) + (1.0 / 16.0) * (t4 + t5)
    return out


def quadratic_part(u: GridFunction) -> GridFunction:
    """Quadratic nonlinearity Q2(u, conj u) of the cubic model."""
    q = _cubic_nonlinearity(u.coefficients, u.n_points, u.domain_length, ("q",))
    return u.with_coefficients(q["q"])


def cubic_part(u: GridFunction) -> GridFunction:
    """Cubic nonlinearity C3(u, conj u) of the cubic model."""
    q = _cubic_nonlinearity(u.coefficients, u.n_points, u.domain_length, ("c",))
    return u.with_coefficients(q["c"])


def rhs_cubic(u: GridFunction, nonlinearity: bool = True) -> GridFunction:
    """d_t u for the cubic model (quartic remainder dropped)."""
    lin = np.sqrt(np.abs(u.xi)) * u.coefficients
    if not nonlinearity:
        return u.with_coefficients(1j * lin)
    parts = _cubic_nonlinearity(u.coefficients, u.n_points, u.domain_length)
    return u.with_coefficients(1j * (lin + parts["q"] + parts["c"]))


def linear_propagate(u0: GridFunction, dt: float) -> GridFunction:
    """Exact free flow exp(i dt |D_x|^{1/2}) u0."""
    phase = np.exp(1j * dt * np.sqrt(np.abs(u0.xi)))
    return u0.with_coefficients(phase * u0.coefficients)


# ---------------------------------------------------------------------------
# Integrators.
# ---------------------------------------------------------------------------


def _rk4_full(state: SurfaceState, dt: float, dno_mode, dno_opts, cache):
    stage = [0]

    def f(s):
        # one warm-start slot per RK stage: successive steps see nearby states
        sub = cache.setdefault(stage[0], {}) if cache is not None else None
        stage[0] += 1
        de, dp = rhs_full(s, dno_mode, dno_opts, sub)
        return de.samples.real, dp.samples.real

    L = state.grid.domain_length
    e0, p0 = state.eta.samples.real, state.psi.samples.real

    def mk(e, p):
        return SurfaceState(
            GridFunction.from_samples(e.astype(complex), L),
            GridFunction.from_samples(p.astype(complex), L),
        )

    k1e, k1p = f(state)
    k2e, k2p = f(mk(e0 + 0.5 * dt * k1e, p0 + 0.5 * dt * k1p))
    k3e, k3p = f(mk(e0 + 0.5 * dt * k2e, p0 + 0.5 * dt * k2p))
    k4e, k4p = f(mk(e0 + dt * k3e, p0 + dt * k3p))
    e1 = e0 + (dt / 6.0) * (k1e + 2 * k2e + 2 * k3e + k4e)
    p1 = p0 + (dt / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
    return mk(e1, p1)


def _ifrk4_cubic(u: GridFunction, dt: float, nonlinearity: bool) -> GridFunction:
    """Integrating-factor RK4: exact half-wave propagator, RK4 nonlinearity."""
    if not nonlinearity:
        return linear_propagate(u, dt)
    n, L = u.n_points, u.domain_length
    Lhalf = np.exp(1j * (dt / 2.0) * np.sqrt(np.abs(u.xi)))
    Lfull = Lhalf * Lhalf

    def N(c):
        parts = _cubic_nonlinearity(c, n, L)
        return 1j * (parts["q"] + parts["c"])

    c0 = u.coefficients
    k1 = N(c0)
    k2 = N(Lhalf * (c0 + 0.5 * dt * k1))
    k3 = N(Lhalf * c0 + 0.5 * dt * k2)
    k4 = N(Lfull * c0 + dt * Lhalf * k3)
    c1 = Lfull * c0 + (dt / 6.0) * (Lfull * k1 + 2.0 * Lhalf * (k2 + k3) + k4)
    return u.with_coefficients(c1)


def wrap_monitor_value(f: GridFunction, zone: float = 0.03) -> float:
    """Boundary-zone amplitude relative to the global peak."""
    n = f.n_points
    w = max(2, int(zone * n))
    edge = max(np.abs(f.samples[:w]).max(), np.abs(f.samples[-w:]).max())
    peak = np.abs(f.samples).max()
    return edge / peak if peak > 0 else 0.0


def _check_guards(state_or_u, t, guard, wrap_threshold):
    if isinstance(state_or_u, SurfaceState):
        fields = [state_or_u.eta, state_or_u.psi]
    else:
        fields = [state_or_u]
    for f in fields:
        if sup_norm(f) > guard:
            raise BlowUpError(f"norm exceeded {guard:.1e}", t)
        if wrap_threshold is not None and wrap_monitor_value(f) > wrap_threshold:
            raise WrapAroundError(
                f"wrap-around monitor tripped at t={t:.3f} "
                f"(boundary ratio {wrap_monitor_value(f):.2e})"
            )


def step_integrate(traj: Trajectory, t_end: float, dt: float,
                   scheme: str = "rk4", store_times=None,
                   nonlinearity: bool = True,
                   dno_mode: str = "elliptic", dno_opts: dict | None = None,
                   guard: float = 1e6,
                   wrap_threshold: float | None = 1e-10) -> Trajectory:
    """Extend a trajectory to t_end, storing the requested times.

    `rk4` integrates the full system, `if_rk4` the cubic model with the exact
    linear propagator; `linear` jumps between store times exactly.  The CFL
    guard for the half-wave dispersion is checked against the grid.
    """
    t = float(traj.times[-1])
    state = traj.states[-1]
    grid = state.grid if isinstance(state, SurfaceState) else state
    if scheme in ("rk4", "if_rk4"):
        ximax = float(np.abs(grid.xi).max())
        if scheme == "rk4" and dt * np.sqrt(ximax) > 2.6:
            raise ValueError("dt exceeds the dispersion stability bound")
    stores = sorted(set(list(store_times or [])) | {float(t_end)})
    stores = [s for s in stores if s > t + 1e-12]
    cache: dict = {}
    new_times, new_states = [], []
    for target in stores:
        if scheme == "linear":
            state = linear_propagate(state, target - t)
            t = target
        else:
            while t < target - 1e-12:
                step = min(dt, target - t)
                if scheme == "rk4":
                    state = _rk4_full(state, step, dno_mode, dno_opts, cache)
                elif scheme == "if_rk4":
                    state = _ifrk4_cubic(state, step, nonlinearity)
                else:
                    raise ValueError(f"unknown scheme {scheme!r}")
                t += step
        _check_guards(state, t, guard, wrap_threshold)
        new_times.append(t)
        new_states.append(state)
    return traj.extended(new_times, new_states)


# ---------------------------------------------------------------------------
# Conserved quantities and scaling.
# ---------------------------------------------------------------------------


def hamiltonian(state: SurfaceState, dno_mode: str = "elliptic",
                dno_opts: dict | None = None) -> float:
    """(1/2) int eta^2 + (1/2) int psi G(eta) psi, by spectral quadrature."""
    if dno_mode == "elliptic":
        g = dno_elliptic(state, **(dno_opts or {}))
    else:
        g = dno_quadratic(state)
    dx = state.grid.domain_length / state.grid.n_points
    kinetic = 0.5 * dx * np.sum(state.psi.samples.real * g.samples.real)
    potential = 0.5 * dx * np.sum(state.eta.samples.real ** 2)
    return float(kinetic + potential)


def _resample(f: GridFunction, scale: float) -> GridFunction:
    vals = spectral_interpolate(f, scale * f.x)
    return GridFunction.from_samples(vals, f.domain_length)


def scale_solution(traj: Trajectory, lam: float) -> Trajectory:
    """The rescaled solution family.

    (eta_l, psi_l)(t, x) = (l^-2 eta(l t, l^2 x), l^-3 psi(l t, l^2 x));
    snapshots are taken at t/l so the originals are used exactly in time and
    only x needs spectral resampling.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if traj.model_tag != "full":
        raise ValueError("scaling acts on full-system trajectories")
    new_times = traj.times / lam
    new_states = []
    for s in traj.states:
        eta = _resample(s.eta, lam ** 2) * (lam ** -2)
        psi = _resample(s.psi, lam ** 2) * (lam ** -3)
        new_states.append(SurfaceState(eta.real_part(), psi.real_part()))
    return Trajectory(new_times, new_states, traj.model_tag, traj.epsilon)


# ---------------------------------------------------------------------------
# Vector-field diagnostics: Z = t d_t + 2 x d_x.
# ---------------------------------------------------------------------------


def _z_apply(fields: list[GridFunction], times: np.ndarray) -> list[GridFunction]:
    """One application of Z on a time-cluster of fields; shrinks the cluster."""
    out = []
    for i in range(1, len(fields) - 1):
        w = centered_time_weights(times[i - 1:i + 2], times[i], 1)
        dt_f = sum(float(wj) * fields[i + j - 1].samples
                   for j, wj in enumerate(w))
        g = fields[i]
        xdx = g.x * apply_multiplier(g, spatial_derivative(1)).samples
        out.append(GridFunction.from_samples(
            times[i] * dt_f + 2.0 * xdx, g.domain_length))
    return out


def _surface_fields(traj: Trajectory, idx: int, dno_mode: str):
    s = traj.states[idx]
    if traj.model_tag == "cubic":
        s = state_from_u(s)
    g = dno_quadratic(s) if dno_mode == "quadratic" else dno_elliptic(s)
    B, _ = traces_BV(s, g)
    omega = good_unknown(s, B)
    return s.eta, s.psi, omega


def z_field_diagnostics(traj: Trajectory, k_max: int, s: float, rho: float,
                        dno_mode: str = "quadratic") -> dict:
    """Weighted energies M_s^(k) and decay functionals N_rho^(k).

    M_s^(k)(t) = sum_{p<=k} ||Z^p eta||_{H^{s-p}} + || |D|^{1/2} Z^p omega||_{H^{s-p}},
    N_rho^(k)(t) = sum_{p<=k} ||Z^p eta||_{C^{rho-p}} + || |D|^{1/2} Z^p psi||_{C^{rho-p}},
    with Z^p built from centered second-order time stencils on uniform
    snapshot clusters of width 2 k_max + 1.
    """
    times = traj.times
    n = times.size
    w = 2 * k_max + 1
    if n < w:
        raise ValueError("not enough snapshots for the requested k_max")
    half = abs_freq(0.5)
    centers, tables_M, tables_N = [], {k: [] for k in range(k_max + 1)}, \
        {k: [] for k in range(k_max + 1)}
    i = k_max
    while i + k_max < n:
        cl = slice(i - k_max, i + k_max + 1)
        tcl = times[cl]
        d = np.diff(tcl)
        if k_max > 0 and np.abs(d - d[0]).max() > 1e-9 * max(1.0, d[0]):
            i += 1
            continue
        etas, psis, omegas = [], [], []
        for j in range(*cl.indices(n)):
            e, p, o = _surface_fields(traj, j, dno_mode)
            etas.append(e)
            psis.append(p)
            omegas.append(o)
        centers.append(times[i])
        lv_eta, lv_psi, lv_om, lv_t = etas, psis, omegas, tcl
        acc_M = 0.0
        acc_N = 0.0
        for p in range(0, k_max + 1):
            mid = len(lv_eta) // 2
            acc_M += sobolev_norm(lv_eta[mid], s - p) + sobolev_norm(
                apply_multiplier(lv_om[mid], half), s - p)
            acc_N += holder_norm(lv_eta[mid], max(rho - p, 0.0)) + holder_norm(
                apply_multiplier(lv_psi[mid], half), max(rho - p, 0.0))
            tables_M[p].append(acc_M)
            tables_N[p].append(acc_N)
            if p < k_max:
                lv_eta = _z_apply(lv_eta, lv_t)
                lv_psi = _z_apply(lv_psi, lv_t)
                lv_om = _z_apply(lv_om, lv_t)
                lv_t = lv_t[1:-1]
        i += 1
    return {
        "t": np.array(centers),
        "M": {k: np.array(v) for k, v in tables_M.items()},
        "N": {k: np.array(v) for k, v in tables_N.items()},
    }


# ---------------------------------------------------------------------------
# Initial data: truncated gaussian bumps with spectral floor masking.
# ---------------------------------------------------------------------------


def gaussian_bump(grid: GridFunction, width: float, center: float = 0.0) -> np.ndarray:
    return np.exp(-((grid.x - center) / width) ** 2)


def bump_state(grid: GridFunction, epsilon: float, width: float = 2.0,
               xi0: float = 2.0) -> SurfaceState:
    """Small localized surface data; psi is exactly mean-free."""
    g = gaussian_bump(grid, width)
    eta = GridFunction.from_samples(epsilon * g * np.cos(xi0 * grid.x) + 0j,
                                    grid.domain_length)
    psi = GridFunction.from_samples(epsilon * g * np.sin(xi0 * grid.x) + 0j,
                                    grid.domain_length)
    c = psi.coefficients.copy()
    c[0] = 0.0
    psi = psi.with_coefficients(c)
    return SurfaceState(mask_spectral_floor(eta), mask_spectral_floor(psi))


def bump_u(grid: GridFunction, epsilon: float, width: float = 8.0,
           xi0: float = 1.0, onesided: bool = True) -> GridFunction:
    """Localized complex data for the cubic model, spectrally masked, mean-free."""
    g = gaussian_bump(grid, width)
    if onesided:
        samples = epsilon * g * np.exp(1j * xi0 * grid.x)
    else:
        samples = epsilon * g * np.cos(xi0 * grid.x) * (1.0 + 0j)
    u = GridFunction.from_samples(samples, grid.domain_length)
    u = mask_spectral_floor(u)
    c = u.coefficients.copy()
    c[0] = 0.0
    return u.with_coefficients(c)


def packet_u(grid: GridFunction, epsilon: float,
             band: tuple[float, float] = (0.7, 1.8),
             flat: tuple[float, float] = (1.0, 1.5),
             bell_width: float | None = None,
             bell_center: float | None = None) -> GridFunction:
    """Hard band-limited wave packet for long runs.

    The spectrum is a gaussian bell under a smooth window supported exactly in
    `band` (identically one on `flat`), so every populated group velocity is
    known and the packet front stays inside the torus for a predictable time.
    Peak amplitude epsilon.
    """
    from .fourier import smooth_step

    xi = grid.xi
    lo, hi = band
    flo, fhi = flat
    if bell_center is None:
        bell_center = 0.5 * (lo + hi)
    if bell_width is None:
        bell_width = (hi - lo) / 2.5
    bell = np.exp(-(((xi - bell_center) / bell_width) ** 2))
    window = smooth_step((xi - lo) / (flo - lo)) * smooth_step(
        (hi - xi) / (hi - fhi))
    c = bell * window
    u = GridFunction.from_coefficients(c.astype(complex), grid.domain_length)
    peak = sup_norm(u)
    return u * (epsilon / peak)
