"""Semiclassical analysis of rescaled profiles.

With h = 1/t and the profile convention u(t, x) = t^{-1/2} v(t, x/t), this
module provides

* the quantization Op_h(a) f = (2 pi)^{-1} int e^{i x xi} a(x, h xi) fhat d xi,
  with a composition-calculus checker against the asymptotic product symbol;
* the rescaled-variable transport: profiles on a common X-grid from stored
  trajectories, and the residual of the profile equation
  (D_t - Op_h(x xi + |xi|^{1/2})) v = sqrt(h) Q0(V) + h[-(i/2) v + C0(V)] + rem;
* the two-Planck-constant dyadic machinery: corridor blocks h_j = h 2^{-j/2},
  rescaled block functions, Lagrangian-class defect measurements;
* microlocal cutoffs near the dilates of the graph Lambda = {xi = domega(X)},
  domega(X) = -sign(X)/(4 X^2), and extraction of the quadratic harmonics
  with their explicit (1 +/- sqrt 2)/4 coefficients;
* the dyadic weighted functionals E_k / F_k used as run diagnostics.

Everything is pure; block functions live on relabeled grids so the dyadic
rescalings are exact (no resampling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fourier import (
    GridFunction,
    abs_freq,
    apply_multiplier,
    l2_norm,
    lp_bump_symbol,
    lp_low_symbol,
    smooth_bump,
    smooth_step,
    sup_norm,
    spectral_interpolate,
)
from .stencils import centered_time_weights

__all__ = [
    "Symbol2D",
    "SemiclassicalFamily",
    "symbol_from_function",
    "multiplier_symbol2d",
    "x_xi_symbol",
    "transport_symbol",
    "lambda_graph",
    "lambda_equation_symbol",
    "lagrangian_cutoff",
    "lagrangian_cutoff_pair",
    "op_h_quantize",
    "compose_symbols",
    "compose_residual",
    "to_profile",
    "from_profile",
    "profile_cluster",
    "equation_residual",
    "corridor_J",
    "dyadic_decompose",
    "DyadicDecomposition",
    "class_defect",
    "microlocal_cutoff",
    "cutoff_idempotence",
    "harmonic_extract",
    "functionals_EF",
    "local_frequency",
    "fit_loglog_slope",
]


# ---------------------------------------------------------------------------
# Symbols.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Symbol2D:
    """A phase-space symbol a(x, xi), optionally with analytic partials.

    `partials[(i, j)]` evaluates d_x^i d_xi^j a; missing entries fall back to
    fourth-order finite differences, which is plenty for slope diagnostics on
    smooth symbols.
    """

    evaluator: callable
    partials: dict = field(default_factory=dict)
    x_independent: bool = False
    support_meta: str = ""
    order_meta: tuple | None = None

    def __call__(self, x, xi):
        return self.evaluator(x, xi)

    def derivative(self, i: int, j: int) -> "Symbol2D":
        if (i, j) == (0, 0):
            return self
        if (i, j) in self.partials:
            return Symbol2D(self.partials[(i, j)],
                            x_independent=self.x_independent and i == 0)
        # peel one derivative at a time, preferring analytic pieces
        if i > 0:
            base = self.derivative(i - 1, j)
            return Symbol2D(_fd_partial(base.evaluator, 0),
                            x_independent=False)
        base = self.derivative(i, j - 1)
        return Symbol2D(_fd_partial(base.evaluator, 1),
                        x_independent=self.x_independent)


def _fd_partial(f, axis: int, step: float = 1e-4):
    """Fourth-order central difference in x (axis 0) or xi (axis 1)."""

    def df(x, xi):
        def at(s):
            return f(x + s, xi) if axis == 0 else f(x, xi + s)

        return (at(-2 * step) - 8 * at(-step) + 8 * at(step)
                - at(2 * step)) / (12 * step)

    return df


def symbol_from_function(fn, **meta) -> Symbol2D:
    return Symbol2D(fn, **meta)


def multiplier_symbol2d(m, dm=None) -> Symbol2D:
    """An x-independent symbol a(x, xi) = m(xi)."""
    partials = {}
    if dm is not None:
        partials[(0, 1)] = lambda x, xi: dm(xi)
    return Symbol2D(lambda x, xi: m(xi), partials, x_independent=True)


def x_xi_symbol() -> Symbol2D:
    return Symbol2D(
        lambda x, xi: x * xi,
        {(1, 0): lambda x, xi: xi * np.ones_like(x * xi),
         (0, 1): lambda x, xi: x * np.ones_like(x * xi),
         (1, 1): lambda x, xi: np.ones_like(x * xi),
         (2, 0): lambda x, xi: np.zeros_like(x * xi),
         (0, 2): lambda x, xi: np.zeros_like(x * xi)},
    )


def transport_symbol() -> Symbol2D:
    """a(x, xi) = x xi + |xi|^{1/2}, the profile-equation Hamiltonian."""
    return Symbol2D(
        lambda x, xi: x * xi + np.sqrt(np.abs(xi)),
        {(1, 0): lambda x, xi: xi * np.ones_like(x * xi),
         (0, 1): lambda x, xi: (x + 0.5 * np.sign(xi)
                                / np.sqrt(np.maximum(np.abs(xi), 1e-300)))},
    )


def lambda_graph(x):
    """domega(x) = -sign(x) / (4 x^2), the stationary-phase frequency."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.sign(x) / (4.0 * x ** 2)


def _x_window(x, lo: float, hi: float):
    """Smooth spatial plateau: 1 for lo <= |x| <= hi, 0 near 0 and at 2 hi."""
    a = np.abs(np.asarray(x, dtype=float))
    return smooth_step(2.0 * (a - lo / 2.0) / lo) * smooth_step((2.0 * hi - a) / hi)


def lambda_equation_symbol(ell: int = 1, x_range=(0.2, 6.0)) -> Symbol2D:
    """e_ell(x, xi) = xi - ell * domega(x), windowed away from the puncture.

    The graph blows up at x = 0, so the symbol carries a smooth spatial
    plateau equal to one on lo <= |x| <= hi (quantization of unbounded
    symbols is only ever used cut off near a compact region).
    """
    lo, hi = x_range

    def ev(x, xi):
        x = np.asarray(x, dtype=float)
        safe = np.maximum(np.abs(x), 1e-12)
        dom = -np.sign(x) / (4.0 * safe ** 2)
        return _x_window(x, lo, hi) * (xi - ell * dom) * np.ones_like(x * xi)

    return Symbol2D(ev, support_meta=f"equation of {ell}*Lambda on |x| in {x_range}")


def _freq_window(xi, c0: float = 8.0):
    """Phi(xi): 1 on 1/c0 <= |xi| <= c0, supported in [1/(2 c0), 2 c0]."""
    a = np.abs(np.asarray(xi, dtype=float))
    lo = smooth_step((a - 0.5 / c0) / (0.5 / c0))
    hi = smooth_step((2.0 * c0 - a) / c0)
    return lo * hi


def lagrangian_cutoff(ell: int, width: float = 0.2, c0: float = 8.0) -> Symbol2D:
    """gamma supported near the ell-th dilate of Lambda: Phi(xi) Gamma(e_ell).

    The relative width tracks the graph itself, so the cutoff stays
    meaningful on every dyadic block.
    """

    def ev(x, xi):
        x = np.asarray(x, dtype=float)
        safe = np.maximum(np.abs(x), 1e-12)
        dom = -np.sign(x) / (4.0 * safe ** 2)
        e = (xi - ell * dom) / np.maximum(np.abs(dom), 1e-300)
        return _freq_window(xi, c0) * smooth_bump(e / (abs(ell) * width), 0.5, 1.0)

    return Symbol2D(ev, support_meta=f"near {ell}*Lambda, width {width}")


def lagrangian_cutoff_pair(width: float = 0.2, c0: float = 8.0):
    """(gamma, gamma^c) built on the transport equation 2 x xi + |xi|^{1/2}.

    gamma + gamma^c = Phi(xi) pointwise by construction.
    """

    def base(x, xi):
        return 2.0 * x * xi + np.sqrt(np.abs(xi))

    def ev(x, xi):
        return _freq_window(xi, c0) * smooth_bump(base(x, xi) / width, 0.5, 1.0)

    def ev_c(x, xi):
        g = smooth_bump(base(x, xi) / width, 0.5, 1.0)
        return _freq_window(xi, c0) * (1.0 - g)

    return (Symbol2D(ev, support_meta="near Lambda"),
            Symbol2D(ev_c, support_meta="away from Lambda"))


# ---------------------------------------------------------------------------
# Quantization and symbolic calculus.
# ---------------------------------------------------------------------------


def op_h_quantize(a: Symbol2D, f: GridFunction, h: float,
                  rel_floor: float = 1e-14, chunk: int = 2048) -> GridFunction:
    """Op_h(a) f, by direct per-point quadrature over populated modes."""
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    if a.x_independent:
        vals = a.evaluator(None, h * f.xi)
        return f.with_coefficients(np.asarray(vals) * f.coefficients)
    c = f.coefficients
    mx = np.abs(c).max()
    if mx == 0.0:
        return f
    keep = np.abs(c) > rel_floor * mx
    xi = f.xi[keep]
    ck = c[keep]
    x = f.x
    out = np.empty(f.n_points, dtype=complex)
    for lo in range(0, f.n_points, chunk):
        sl = slice(lo, min(lo + chunk, f.n_points))
        sym = a.evaluator(x[sl][:, None], h * xi[None, :])
        phase = np.exp(1j * np.outer(x[sl], xi))
        out[sl] = (np.asarray(sym) * phase) @ ck
    return f.with_samples(out)


def compose_symbols(a1: Symbol2D, a2: Symbol2D, N: int, h: float) -> Symbol2D:
    """Truncated product symbol sum_{j<=N} (1/j!) (h/i)^j d_xi^j a1 d_x^j a2."""
    terms = [(a1.derivative(0, j), a2.derivative(j, 0),
              (h / 1j) ** j / math.factorial(j)) for j in range(N + 1)]

    def ev(x, xi):
        acc = 0.0
        for d1, d2, cj in terms:
            acc = acc + cj * d1.evaluator(x, xi) * d2.evaluator(x, xi)
        return acc

    return Symbol2D(ev, x_independent=a1.x_independent and a2.x_independent)


def fit_loglog_slope(xs, ys) -> float:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    good = ys > 0
    if good.sum() < 3:
        raise ValueError("degenerate fit: fewer than 3 usable points")
    return float(np.polyfit(np.log(xs[good]), np.log(ys[good]), 1)[0])


def compose_residual(a1: Symbol2D, a2: Symbol2D, N: int, h_values,
                     test_family) -> dict:
    """Sup-norm defect of Op(a1)Op(a2) against the order-N product symbol.

    `test_family` maps h to the test function (typically an h-oscillatory
    coherent family so that h-derivatives are order one).
    Returns the per-h residuals and the fitted log-log slope.
    """
    h_values = list(h_values)
    if len(h_values) < 3:
        raise ValueError("need at least 3 values of h")
    res = []
    scale = 0.0
    for h in h_values:
        f = test_family(h)
        inner = op_h_quantize(a2, f, h)
        lhs = op_h_quantize(a1, inner, h)
        rhs = op_h_quantize(compose_symbols(a1, a2, N, h), f, h)
        res.append(sup_norm(lhs - rhs))
        scale = max(scale, sup_norm(lhs), sup_norm(f))
    res = np.array(res)
    if np.all(res < 1e-10 * max(scale, 1.0)):
        slope = float("inf")  # exact composition (e.g. two multipliers)
    else:
        slope = fit_loglog_slope(h_values, res)
    return {"h": np.array(h_values), "residual": res, "slope": slope,
            "order": N}


# ---------------------------------------------------------------------------
# Profile transport.
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SemiclassicalFamily:
    """Profiles indexed by decreasing Planck parameters on a shared grid."""

    h_values: np.ndarray
    members: list
    convention_tag: str = "v(t, X) = sqrt(t) u(t, t X), h = 1/t"
    hbar_values: np.ndarray | None = None

    def __post_init__(self):
        hv = np.asarray(self.h_values, dtype=float)
        if np.any(hv <= 0) or np.any(hv > 1):
            raise ValueError("h values must lie in (0, 1]")
        if np.any(np.diff(hv) >= 0):
            raise ValueError("h values must be strictly decreasing")
        if len(self.members) != hv.size:
            raise ValueError("members must match h_values")
        g0 = self.members[0]
        for g in self.members[1:]:
            if not g0.same_grid(g):
                raise ValueError("members must share grid geometry")
        object.__setattr__(self, "h_values", hv)


def to_profile(u: GridFunction, t: float, x_grid: GridFunction | None = None,
               tail_tol: float = 1e-8) -> GridFunction:
    """v(X) = sqrt(t) u(t X).

    With no target grid the torus is relabeled exactly (X = x/t maps the grid
    onto itself), which is lossless.  With a target X-grid the
    band-limited interpolant is evaluated there; content outside the
    window trips the wrap-around check.
    """
    if t < 1:
        raise ValueError("profile convention requires t >= 1")
    if x_grid is None:
        return GridFunction.from_samples(np.sqrt(t) * u.samples,
                                         u.domain_length / t)
    window = t * x_grid.domain_length / 2.0
    mask = np.abs(u.x) > min(window, u.domain_length / 2.0 - 1e-9)
    if mask.any():
        peak = np.abs(u.samples).max()
        outside = np.abs(u.samples[mask]).max() if peak > 0 else 0.0
        if peak > 0 and outside > tail_tol * peak:
            raise ValueError(
                f"rescaled grid cannot hold the support "
                f"(outside fraction {outside / peak:.2e})"
            )
    vals = np.sqrt(t) * spectral_interpolate(u, t * x_grid.x)
    return GridFunction.from_samples(vals, x_grid.domain_length)


def from_profile(v: GridFunction, t: float,
                 x_grid: GridFunction | None = None) -> GridFunction:
    """u(x) = t^{-1/2} v(x / t); exact relabeling when no grid is given."""
    if x_grid is None:
        return GridFunction.from_samples(v.samples / np.sqrt(t),
                                         v.domain_length * t)
    vals = spectral_interpolate(v, x_grid.x / t) / np.sqrt(t)
    return GridFunction.from_samples(vals, x_grid.domain_length)


def profile_cluster(traj, t: float, x_grid: GridFunction | None = None,
                    points: int = 5):
    """Profiles at the `points` stored times nearest t, on a common X-grid.

    The common grid is the exact relabeling of the torus at the central
    time; neighbors are evaluated spectrally onto it (their domains differ
    by the tiny factor t_m / t_center).
    """
    times = traj.times
    i = int(np.argmin(np.abs(times - t)))
    half = points // 2
    lo = min(max(i - half, 0), times.size - points)
    tcl = times[lo:lo + points]
    d = np.diff(tcl)
    if np.abs(d - d[0]).max() > 1e-9 * max(d[0], 1e-9):
        raise ValueError("stored times near t are not uniformly spaced")
    if x_grid is None:
        x_grid = to_profile(traj.states[lo + half], tcl[half])
    profiles = []
    for m in range(points):
        if x_grid.domain_length == traj.states[lo + m].domain_length / tcl[m]:
            profiles.append(to_profile(traj.states[lo + m], tcl[m]))
        else:
            vals = np.sqrt(tcl[m]) * spectral_interpolate(
                traj.states[lo + m], tcl[m] * x_grid.x)
            profiles.append(GridFunction.from_samples(
                vals, x_grid.domain_length))
    return tcl, profiles


def _op_h_xxi(v: GridFunction, h: float) -> GridFunction:
    """Op_h(x xi) v = x * (h D_x v), exact on the grid."""
    dv = v.with_coefficients(v.xi * v.coefficients)  # D_x v
    return GridFunction.from_samples(h * v.x * dv.samples, v.domain_length)


def equation_residual(traj, t: float, x_grid: GridFunction | None = None,
                      points: int = 5) -> dict:
    """Defect of the profile equation at time t from stored snapshots.

    D_t v is formed by a centered stencil on a snapshot cluster; the linear
    term and the quadratic/cubic forms are evaluated spectrally on the X-grid
    with all multipliers taken at h xi.  The returned defect is the quartic
    remainder plus stencil error.
    """
    from .evolution import _cubic_nonlinearity

    tcl, profiles = profile_cluster(traj, t, x_grid, points)
    mid = points // 2
    t0 = tcl[mid]
    h = 1.0 / t0
    w = centered_time_weights(tcl, t0, 1)
    dtv = sum(float(wm) * p.samples for wm, p in zip(w, profiles))
    v = profiles[mid]
    d_t_v = dtv / 1j

    half_wave = v.with_coefficients(np.sqrt(np.abs(h * v.xi)) * v.coefficients)
    lin = _op_h_xxi(v, h) + half_wave
    parts = _cubic_nonlinearity(v.coefficients, v.n_points, v.domain_length,
                                xi_override=h * v.xi)
    q0 = v.with_coefficients(parts["q"])
    c0 = v.with_coefficients(parts["c"])
    rhs = (np.sqrt(h) * q0.samples
           + h * (-0.5j * v.samples + c0.samples))
    defect = d_t_v - lin.samples - rhs
    gf = GridFunction.from_samples(defect, v.domain_length)
    return {
        "t": t0,
        "h": h,
        "defect_sup": sup_norm(gf),
        "defect_l2": l2_norm(gf),
        "profile_sup": sup_norm(v),
        "defect": gf,
        "profile": v,
    }


# ---------------------------------------------------------------------------
# Dyadic machinery: corridor blocks on relabeled grids.
# ---------------------------------------------------------------------------


def corridor_J(h: float, C: float = 4.0, sigma: float = 0.3,
               beta: float = 0.05) -> list[int]:
    """The dyadic corridor {j : h^{2(1-sigma)}/C <= 2^j <= C h^{-2 beta}}."""
    lo = h ** (2.0 * (1.0 - sigma)) / C
    hi = C * h ** (-2.0 * beta)
    jmin = int(math.ceil(math.log2(lo)))
    jmax = int(math.floor(math.log2(hi)))
    if jmin > jmax:
        raise ValueError("empty corridor: h too close to 1")
    return list(range(jmin, jmax + 1))


def block_rescale(f: GridFunction, j: int, base_length: float) -> GridFunction:
    """Theta*_{-j} as an exact relabeling onto a dilated grid."""
    return GridFunction.from_coefficients(
        f.coefficients, base_length * 2.0 ** (j / 2.0))


def block_unrescale(block: GridFunction, base_length: float) -> GridFunction:
    """Theta*_j back onto the base grid (coefficients are shared exactly)."""
    return GridFunction.from_coefficients(block.coefficients, base_length)


@dataclass(frozen=True, eq=False)
class DyadicDecomposition:
    v_low: GridFunction
    v_high: GridFunction
    blocks: dict  # j -> rescaled block on its own grid, Planck constant h_j
    h: float
    base_length: float

    def h_j(self, j: int) -> float:
        return self.h * 2.0 ** (-j / 2.0)

    def reassemble(self) -> GridFunction:
        acc = self.v_low.coefficients + self.v_high.coefficients
        for blk in self.blocks.values():
            acc = acc + blk.coefficients
        return GridFunction.from_coefficients(acc, self.base_length)


def dyadic_decompose(v: GridFunction, h: float, C: float = 4.0,
                     sigma: float = 0.3, beta: float = 0.05,
                     keep_floor: float = 1e-14) -> DyadicDecomposition:
    """Low/high cut plus rescaled corridor blocks of the middle part.

    v_low carries h|xi| below h^{2(1-sigma)}, v_high above h^{-2 beta}; the
    remainder is split into blocks with h|xi| ~ 2^j, each relabeled onto its
    dilated grid where its own Planck constant is h_j = h 2^{-j/2}.
    """
    js = corridor_J(h, C, sigma, beta)
    hxi = h * v.xi
    low_mask = lp_low_symbol(hxi * h ** (-2.0 * (1.0 - sigma)))
    high_mask = 1.0 - lp_low_symbol(hxi * h ** (2.0 * beta))
    v_low = v.with_coefficients(v.coefficients * low_mask)
    v_high = v.with_coefficients(v.coefficients * high_mask)
    w_c = v.coefficients * (1.0 - low_mask - high_mask)
    blocks = {}
    mx = np.abs(w_c).max()
    for j in js:
        cj = w_c * lp_bump_symbol(hxi * 2.0 ** (-j))
        if mx == 0.0 or np.abs(cj).max() <= keep_floor * mx:
            continue
        blocks[j] = block_rescale(
            GridFunction.from_coefficients(cj, v.domain_length), j,
            v.domain_length)
    return DyadicDecomposition(v_low, v_high, blocks, h, v.domain_length)


def microlocal_cutoff(w_j: GridFunction, h_j: float, ell: int,
                      width: float = 0.2, c0: float = 8.0) -> GridFunction:
    """Op_{h_j}(gamma_{ell Lambda}) applied to one rescaled block."""
    if not -3 <= ell <= 3 or ell == 0:
        raise ValueError("ell must be a nonzero integer in [-3, 3]")
    return op_h_quantize(lagrangian_cutoff(ell, width, c0), w_j, h_j)


def cutoff_idempotence(w_j: GridFunction, h_j: float, ell: int,
                       width: float = 0.2) -> float:
    """Constant C in ||(Op^2 - Op) w|| <= C h_j ||w||."""
    once = microlocal_cutoff(w_j, h_j, ell, width)
    twice = microlocal_cutoff(once, h_j, ell, width)
    denom = h_j * sup_norm(w_j)
    return sup_norm(twice - once) / denom if denom > 0 else 0.0


def class_defect(family: SemiclassicalFamily, e: Symbol2D, mu: float,
                 gamma: float, p, nu: float = 0.0) -> dict:
    """Empirical Lagrangian-class data across (h, hbar) pairs.

    Measures the best constant in the weighted size bound and the defect
    ||Op_hbar(e) v|| with the same weight removed, then fits the defect's
    decay in hbar.  Slope ~ 1 is the strong (J) gain, slope ~ 1/2 the (I)
    gain h^{1/2} + hbar, slope ~ 0 no gain at all.
    """
    if family.hbar_values is None:
        raise ValueError("family must carry hbar values")
    norm = sup_norm if p in ("inf", np.inf) else l2_norm
    sizes, defects = [], []
    for h, hb, vh in zip(family.h_values, family.hbar_values, family.members):
        weight = h ** nu * (hb / h) ** (mu + (0.0 if p in ("inf", np.inf)
                                              else 1.0 / p))
        weight *= (1.0 + h / hb) ** (-2.0 * gamma)
        sizes.append(norm(vh) / weight)
        defects.append(norm(op_h_quantize(e, vh, hb)) / weight)
    defects = np.array(defects)
    hbars = np.asarray(family.hbar_values, dtype=float)
    slope = fit_loglog_slope(hbars, defects)
    if slope >= 0.8:
        label = "J"
    elif slope >= 0.4:
        label = "I"
    else:
        label = "none"
    return {
        "size_constant": float(np.max(sizes)),
        "defect": defects,
        "hbar": hbars,
        "slope": slope,
        "class": label,
    }


# ---------------------------------------------------------------------------
# Harmonic extraction.
# ---------------------------------------------------------------------------


def _assemble_cutoff(dec: DyadicDecomposition, ell: int, width: float,
                     c0: float = 8.0) -> GridFunction:
    """Sum over blocks of the rescaled cutoff near ell*Lambda, reassembled."""
    acc = np.zeros(dec.v_low.n_points, dtype=complex)
    for j, blk in dec.blocks.items():
        cut = microlocal_cutoff(blk, dec.h_j(j), ell, width, c0)
        acc = acc + cut.coefficients
    return GridFunction.from_coefficients(acc, dec.base_length)


def harmonic_extract(traj, t: float, x_grid: GridFunction | None = None,
                     width: float = 0.2, window=(0.3, 1.6),
                     sigma: float = 0.3, beta: float = 0.05,
                     C: float = 4.0, amp_floor: float = 0.25) -> dict:
    """Second-harmonic content against its quadratic prediction.

    Extracts the fundamental piece near Lambda, forms the predictions
        -i (1+sqrt2)/4 |domega| w^2        (near 2*Lambda)
        -i (1-sqrt2)/4 |domega| conj(w)^2  (near -2*Lambda)
    and compares them with the sqrt(h)-normalized microlocal content of the
    profile near the dilated graphs, on the ray window where the fundamental
    is active.
    """
    v = to_profile(traj.state_at(t), t, x_grid)
    h = 1.0 / t
    dec = dyadic_decompose(v, h, C=C, sigma=sigma, beta=beta)
    w_l = _assemble_cutoff(dec, 1, width)
    m2 = _assemble_cutoff(dec, 2, width) * (1.0 / np.sqrt(h))
    m2m = _assemble_cutoff(dec, -2, width) * (1.0 / np.sqrt(h))
    X = v.x
    absd = 1.0 / (4.0 * X ** 2 + 1e-300)
    p2 = -1j * (1.0 + np.sqrt(2.0)) / 4.0 * absd * w_l.samples ** 2
    p2m = -1j * (1.0 - np.sqrt(2.0)) / 4.0 * absd * np.conj(w_l.samples) ** 2
    sel = (np.abs(X) >= window[0]) & (np.abs(X) <= window[1])
    amp = np.abs(w_l.samples)
    sel &= amp >= amp_floor * amp[sel].max() if sel.any() else sel
    if not sel.any():
        raise ValueError("no active rays in the requested window")
    num2 = np.abs(m2.samples[sel])
    num2m = np.abs(m2m.samples[sel])
    ratio = float(np.sum(num2) / max(np.sum(num2m), 1e-300))
    mis2 = float(np.max(np.abs(m2.samples[sel] - p2[sel]))
                 / max(np.max(np.abs(p2[sel])), 1e-300))
    mis2m = float(np.max(np.abs(m2m.samples[sel] - p2m[sel]))
                  / max(np.max(np.abs(p2m[sel])), 1e-300))
    return {
        "t": t,
        "h": h,
        "ratio": ratio,
        "ratio_predicted": (1.0 + np.sqrt(2.0)) ** 2,
        "mismatch_2": mis2,
        "mismatch_minus2": mis2m,
        "fundamental": w_l,
        "content_2": m2,
        "content_minus2": m2m,
        "window_mask": sel,
    }


# ---------------------------------------------------------------------------
# Weighted dyadic functionals.
# ---------------------------------------------------------------------------


def _zed_profiles(profiles, times):
    """One application of Z = t d_t + X d_X on a profile cluster."""
    out = []
    for i in range(1, len(profiles) - 1):
        w = centered_time_weights(times[i - 1:i + 2], times[i], 1)
        dt_f = sum(float(wm) * profiles[i + m - 1].samples
                   for m, wm in enumerate(w))
        g = profiles[i]
        dx = g.with_coefficients(1j * g.xi * g.coefficients)
        out.append(GridFunction.from_samples(
            times[i] * dt_f + g.x * dx.samples, g.domain_length))
    return out


def _ef_single(v: GridFunction, h: float, b_or_a: float, sigma: float,
               C: float, which: str) -> float:
    hxi = h * v.xi
    low = v.with_coefficients(
        v.coefficients * lp_low_symbol(hxi * h ** (-2.0 * (1.0 - sigma))))
    norm = sup_norm if which == "E" else l2_norm
    best = norm(low)
    j0 = int(math.ceil(math.log2(h ** (2.0 * (1.0 - sigma)) / C))) - 1
    ximax = np.abs(hxi).max()
    jtop = int(math.ceil(math.log2(ximax))) + 1 if ximax > 0 else j0 + 1
    for j in range(j0, jtop + 1):
        blk = v.with_coefficients(v.coefficients * lp_bump_symbol(hxi * 2.0 ** (-j)))
        val = 2.0 ** (max(j, 0) * b_or_a) * norm(blk)
        best = max(best, val)
    return best


def functionals_EF(traj, k_max: int, a: float, b: float,
                   x_grid: GridFunction | None = None, sigma: float = 0.3,
                   beta: float = 0.05, C: float = 4.0,
                   eval_times=None) -> dict:
    """Dyadic sup functionals E_k (L-inf) and F_k (L2) along a trajectory.

    Each Z power is built from centered stencils on snapshot clusters; the
    h d_x member of the vector-field family is spectral.
    """
    times = traj.times
    w = 2 * k_max + 1
    if eval_times is None:
        eval_times = times[k_max:times.size - k_max]
    E = {k: [] for k in range(k_max + 1)}
    F = {k: [] for k in range(k_max + 1)}
    centers = []
    for t in eval_times:
        tcl, profiles = profile_cluster(traj, t, x_grid, w)
        mid = w // 2
        t0 = tcl[mid]
        h = 1.0 / t0
        centers.append(t0)
        levels = {(0, 0): (profiles, tcl)}

        def get_level(k1, k2):
            if (k1, k2) not in levels:
                if k2 > 0:
                    base, tb = get_level(k1, k2 - 1)
                    lifted = [
                        g.with_coefficients(1j * h * g.xi * g.coefficients)
                        for g in base
                    ]
                    levels[(k1, k2)] = (lifted, tb)
                else:
                    base, tb = get_level(k1 - 1, k2)
                    levels[(k1, k2)] = (_zed_profiles(base, tb),
                                        tb[1:-1])
            return levels[(k1, k2)]

        sum_E = 0.0
        sum_F = 0.0
        for k in range(0, k_max + 1):
            lvl_E = 0.0
            lvl_F = 0.0
            for k1 in range(k + 1):
                k2 = k - k1
                flds, _ = get_level(k1, k2)
                g = flds[len(flds) // 2]
                lvl_E = max(lvl_E, _ef_single(g, h, b, sigma, C, "E"))
                lvl_F = max(lvl_F, _ef_single(g, h, a, sigma, C, "F"))
            sum_E += lvl_E
            sum_F += lvl_F
            E[k].append(sum_E)
            F[k].append(sum_F)
    return {
        "t": np.array(centers),
        "E": {k: np.array(v) for k, v in E.items()},
        "F": {k: np.array(v) for k, v in F.items()},
    }


def local_frequency(u: GridFunction, x0: float, window: float) -> float:
    """Dominant local frequency near x0, from a Gabor window."""
    g = np.exp(-(((u.x - x0) / window) ** 2))
    f = GridFunction.from_samples(u.samples * g, u.domain_length)
    i = int(np.argmax(np.abs(f.coefficients)))
    return float(f.xi[i])
