"""Experiment orchestration: configured runs, checks, machine-readable reports.

A config names a model (full surface system, cubic model, free flow, or the
reduced ray flow), a grid, data, a time window, and a set of enabled checks.
Running it writes a snapshot store (one CSV per saved time plus a JSON
manifest), an analysis report with one {check_name, metric, value,
tolerance, pass} record per enabled check, and plot-data CSVs.  Reports are
byte-stable across reruns of the same config.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dno import SurfaceState, dno_elliptic, dno_quadratic, solve_strip, dno_from_strip
from .evolution import (
    Trajectory,
    bump_state,
    hamiltonian,
    packet_u,
    rhs_cubic,
    step_integrate,
    u_from_state,
)
from .fitting import fit_log_phase, fit_log_phase_reduced, fit_power_law, ray_samples
from .fourier import GridFunction, abs_freq, apply_multiplier, l2_norm, write_csv, write_manifest
from .normalform import (
    CoefficientSet,
    NFParams,
    ProfileField,
    cancellation_residual,
    extract_alpha,
    integrate_reduced,
    integrate_w,
    quadratic_cancellation,
    transformed_cubic_coefficients,
)
from .semiclassical import (
    SemiclassicalFamily,
    class_defect,
    compose_residual,
    harmonic_extract,
    lambda_equation_symbol,
    multiplier_symbol2d,
    symbol_from_function,
    x_xi_symbol,
)

__all__ = [
    "ExperimentConfig",
    "CheckResult",
    "run_experiment",
    "emit_report",
    "dno_verify_checks",
    "symbol_checks",
    "class_checks",
    "nf_checks",
    "harmonics_checks",
    "scatter_fit_checks",
]


@dataclass(frozen=True)
class CheckResult:
    check_name: str
    metric: str
    value: float
    tolerance: float
    passed: bool

    def as_record(self) -> dict:
        return {
            "check_name": self.check_name,
            "metric": self.metric,
            "value": self.value,
            "tolerance": self.tolerance,
            "pass": bool(self.passed),
        }


@dataclass
class ExperimentConfig:
    model: str = "cubic"
    n_points: int = 1024
    domain_length: float = 256.0 * np.pi
    epsilon: float = 0.05
    data: dict = field(default_factory=dict)
    t0: float = 20.0
    t_end: float = 200.0
    dt: float = 0.2
    snapshots: int = 24
    analysis: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        return cls(**doc)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def grid(self) -> GridFunction:
        return GridFunction.from_samples(
            np.zeros(self.n_points, dtype=complex), self.domain_length)


def thread_count() -> int:
    return max(1, int(os.environ.get("WAVESCATTER_THREADS", "1")))


def _store_times(cfg: ExperimentConfig) -> list[float]:
    return list(np.geomspace(cfg.t0 * 1.05, cfg.t_end, cfg.snapshots))


def _initial_u(cfg: ExperimentConfig) -> GridFunction:
    band = tuple(cfg.data.get("band", (0.7, 1.8)))
    flat = tuple(cfg.data.get("flat", (1.0, 1.5)))
    return packet_u(cfg.grid(), cfg.epsilon, band, flat)


def run_model(cfg: ExperimentConfig):
    """Integrate the configured model; returns a trajectory or ray flow."""
    np.random.seed(cfg.seed)
    if cfg.model in ("cubic", "linear"):
        u0 = _initial_u(cfg)
        traj = Trajectory(np.array([cfg.t0]), [u0], cfg.model, cfg.epsilon)
        scheme = "if_rk4" if cfg.model == "cubic" else "linear"
        return step_integrate(traj, cfg.t_end, cfg.dt, scheme,
                              store_times=_store_times(cfg),
                              wrap_threshold=cfg.analysis.get(
                                  "wrap_threshold", 1e-5))
    if cfg.model == "full":
        st = bump_state(cfg.grid(), cfg.epsilon,
                        width=cfg.data.get("width", 3.0),
                        xi0=cfg.data.get("xi0", 1.2))
        traj = Trajectory(np.array([cfg.t0]), [st], "full", cfg.epsilon)
        dno_opts = dict(cfg.analysis.get("dno_opts", {}))
        return step_integrate(traj, cfg.t_end, cfg.dt, "rk4",
                              store_times=_store_times(cfg),
                              dno_mode="elliptic", dno_opts=dno_opts,
                              wrap_threshold=None)
    if cfg.model == "reduced_ode":
        prm = NFParams(t0=cfg.t0, **cfg.data.get("nf_params", {}))
        Xs = cfg.data.get("rays")
        if Xs is None:
            Xs = np.concatenate([np.linspace(-2.0, -0.3, 48),
                                 np.linspace(0.3, 2.0, 48)])
        else:
            Xs = np.asarray(Xs, dtype=float)
        f0 = ProfileField(Xs, cfg.epsilon * np.exp(1j * 0.3 * Xs), cfg.t0,
                          0, prm)
        return integrate_reduced(f0, cfg.t_end, min(cfg.dt, 0.1),
                                 CoefficientSet(params=prm),
                                 store_times=_store_times(cfg))
    raise ValueError(f"unknown model {cfg.model!r}")


def _write_snapshots(traj, outdir: Path, cfg: ExperimentConfig) -> None:
    snapdir = outdir / "snapshots"
    snapdir.mkdir(parents=True, exist_ok=True)
    times = []
    if isinstance(traj, list):  # reduced flow
        for i, fld in enumerate(traj):
            path = snapdir / f"state_{i:04d}.csv"
            with path.open("w") as fh:
                fh.write("x,re,im\n")
                for xv, sv in zip(fld.x, fld.values):
                    fh.write(f"{float(xv)!r},{float(sv.real)!r},{float(sv.imag)!r}\n")
            times.append(fld.t)
    else:
        for i, (t, s) in enumerate(zip(traj.times, traj.states)):
            path = snapdir / f"state_{i:04d}.csv"
            f = s if isinstance(s, GridFunction) else u_from_state(s)
            write_csv(f, path)
            times.append(float(t))
    manifest = {
        "model": cfg.model,
        "epsilon": cfg.epsilon,
        "n_points": cfg.n_points,
        "domain_length": cfg.domain_length,
        "dt": cfg.dt,
        "scheme": {"cubic": "if_rk4", "linear": "linear",
                   "full": "rk4", "reduced_ode": "reduced"}[cfg.model],
        "times": times,
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def emit_report(results: list[CheckResult], outdir) -> tuple[Path, bool]:
    """Write report.json with stable ordering; returns (path, all_passed)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    records = [r.as_record() for r in results]
    doc = {"checks": records, "all_pass": bool(all(r.passed for r in results))}
    path = outdir / "report.json"
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path, doc["all_pass"]


def _write_series_csv(path: Path, header: str, columns) -> None:
    with Path(path).open("w") as fh:
        fh.write(header + "\n")
        for row in zip(*columns):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Check suites (also used directly by the CLI subcommands).
# ---------------------------------------------------------------------------


def dno_verify_checks(n_points: int = 256, outdir: Path | None = None) -> list[CheckResult]:
    """Flat identity, manufactured harmonic, and expansion-slope tests."""
    L = 2.0 * np.pi
    grid = GridFunction.from_samples(np.zeros(n_points, dtype=complex), L)
    x = grid.x
    zero = grid
    results = []
    worst = 0.0
    for k in (1, 2, 3, 5, 7):
        psi = GridFunction.from_samples(np.cos(k * x) + 0j, L)
        g = dno_elliptic(SurfaceState(zero, psi), depth=8.0, tol=1e-11,
                         n_layers=64)
        exact = apply_multiplier(psi, abs_freq(1.0))
        worst = max(worst, l2_norm(g - exact) / l2_norm(psi))
    results.append(CheckResult("dno_flat", "max_rel_error", worst, 1e-8,
                               worst <= 1e-8))
    k = 3
    eta_s = 0.015 * np.cos(2 * x)
    eta = GridFunction.from_samples(eta_s + 0j, L)
    psi_m = GridFunction.from_samples(np.exp(1j * k * x) * np.exp(k * eta_s), L)
    etap = np.fft.ifft(1j * grid.xi * np.fft.fft(eta_s)).real
    target = (k - 1j * k * etap) * psi_m.samples
    sol = solve_strip(eta, psi_m, depth=8.0, tol=1e-11, n_layers=64)
    g2 = dno_from_strip(eta, psi_m, sol)
    manu = float(np.abs(g2.samples - target).max() / np.abs(target).max())
    results.append(CheckResult("dno_manufactured", "rel_error", manu, 1e-6,
                               manu <= 1e-6))
    eta0 = np.exp(-x ** 2 / 1.5) * np.cos(2 * x)
    psi0 = np.exp(-x ** 2 / 1.5) * np.sin(2 * x)
    eps_list = [0.04, 0.02, 0.01, 0.005]
    errs = []
    for eps in eps_list:
        st = SurfaceState(
            GridFunction.from_samples(eps * eta0 + 0j, L),
            GridFunction.from_samples(eps * psi0 + 0j, L))
        ge = dno_elliptic(st, depth=8.0, tol=1e-12, n_layers=96,
                          slope_threshold=0.5)
        errs.append(l2_norm(ge - dno_quadratic(st)))
    slope = float(np.polyfit(np.log(eps_list), np.log(errs), 1)[0])
    results.append(CheckResult("dno_taylor_slope", "slope", slope, 0.2,
                               abs(slope - 3.0) <= 0.2))
    if outdir is not None:
        _write_series_csv(Path(outdir) / "dno_taylor.csv", "epsilon,residual",
                          (eps_list, errs))
    return results


def symbol_checks(outdir: Path | None = None) -> list[CheckResult]:
    """Composition-calculus residual slopes for N = 0, 1, 2."""
    from .fourier import smooth_bump

    L = 32.0 * np.pi
    n = 4096
    grid = GridFunction.from_samples(np.zeros(n, dtype=complex), L)
    x = grid.x

    def fam(h):
        theta = np.exp(-((x + 2.0) / 3.0) ** 2)
        return GridFunction.from_samples(theta * np.exp(1j * x / h), L)

    def mk(cx, cxi, sx, sxi):
        def ev(xv, xiv):
            return (np.exp(-((xv - cx) / sx) ** 2)
                    * smooth_bump((xv - cx) / (3 * sx), 0.5, 1.0)
                    * np.exp(-((xiv - cxi) / sxi) ** 2)
                    * smooth_bump((xiv - cxi) / (3 * sxi), 0.5, 1.0))
        return symbol_from_function(ev)

    b1 = mk(-3.5, 0.55, 4.0, 0.8)
    b2 = mk(-0.5, 1.45, 4.0, 0.9)
    hs = np.geomspace(0.16, 0.02, 6)
    results = []
    for N in (0, 1, 2):
        rep = compose_residual(b1, b2, N, hs, fam)
        results.append(CheckResult(
            f"composition_order_{N}", "slope", rep["slope"], N + 0.8,
            rep["slope"] >= N + 0.8))
        if outdir is not None:
            _write_series_csv(Path(outdir) / f"composition_N{N}.csv",
                              "h,residual", (rep["h"], rep["residual"]))
    return results


def class_checks(outdir: Path | None = None) -> list[CheckResult]:
    """Lagrangian-class gains: oscillatory profile vs wrong graph."""
    from .fourier import smooth_bump

    L = 16.0
    n = 4096
    grid = GridFunction.from_samples(np.zeros(n, dtype=complex), L)
    X = grid.x
    with np.errstate(divide="ignore"):
        omega = np.where(np.abs(X) > 1e-12, 1.0 / (4.0 * np.abs(X)), 0.0)
    theta = smooth_bump((np.abs(X) - 1.05) / 0.55, 0.5, 1.0)
    hbars = np.geomspace(0.04, 0.004, 7)
    hs = hbars ** 0.8
    e1 = lambda_equation_symbol(1, x_range=(0.5, 2.0))
    right = SemiclassicalFamily(
        hs, [GridFunction.from_samples(theta * np.exp(1j * omega / hb), L)
             for hb in hbars], hbar_values=hbars)
    wrong = SemiclassicalFamily(
        hs, [GridFunction.from_samples(theta * np.exp(2j * omega / hb), L)
             for hb in hbars], hbar_values=hbars)
    rep1 = class_defect(right, e1, 0.0, 0.0, "inf")
    rep2 = class_defect(wrong, e1, 0.0, 0.0, "inf")
    out = [
        CheckResult("class_oscillatory", "slope", rep1["slope"], 0.1,
                    abs(rep1["slope"] - 1.0) <= 0.1),
        CheckResult("class_wrong_lagrangian", "slope", rep2["slope"], 0.2,
                    rep2["slope"] <= 0.2),
    ]
    if outdir is not None:
        _write_series_csv(Path(outdir) / "class_defect.csv",
                          "hbar,defect_right,defect_wrong",
                          (rep1["hbar"], rep1["defect"], rep2["defect"]))
    return out


def nf_checks(outdir: Path | None = None) -> list[CheckResult]:
    """Quadratic/cubic cancellation and the reduced-flow phase law."""
    prm = NFParams(ell=0, beta=0.5, chi_plateau=0.1, x_floor=0.05, t0=50.0)
    co = CoefficientSet(params=prm)
    X = np.concatenate([np.linspace(-1.8, -0.35, 40),
                        np.linspace(0.35, 1.8, 40)])
    q2, qm2 = quadratic_cancellation(co, X, 80.0)
    qmax = float(max(np.abs(q2).max(), np.abs(qm2).max()))
    tc = transformed_cubic_coefficients(co, X, 80.0)
    cmax = float(max(np.abs(tc["f3"]).max(), np.abs(tc["fm1"]).max(),
                     np.abs(tc["fm3"]).max()))
    w0 = ProfileField(X, 0.1 * np.exp(1j * 0.3 * X)
                      * np.exp(-0.5 * (np.abs(X) - 1.0) ** 2), 50.0, 0, prm)
    flow = integrate_w(w0, 2000.0, 0.05, co,
                       store_times=list(np.geomspace(60, 2000, 20)))
    rep = cancellation_residual(flow, co)
    results = [
        CheckResult("nf_quadratic_cancellation", "max_coefficient", qmax,
                    1e-14, qmax <= 1e-14),
        CheckResult("nf_cubic_cancellation", "max_coefficient", cmax,
                    1e-14, cmax <= 1e-14),
        CheckResult("nf_residual_decay", "rate", rep["decay_rate"], 1.25,
                    rep["decay_rate"] >= 1.25),
    ]
    if outdir is not None:
        _write_series_csv(Path(outdir) / "nf_residual.csv", "t,defect",
                          (rep["t"], rep["defect"]))
    return results


def harmonics_checks(cfg: ExperimentConfig, traj=None,
                     outdir: Path | None = None) -> list[CheckResult]:
    """Second-harmonic magnitude ratio on a cubic-model run."""
    if traj is None:
        traj = run_model(cfg)
    t_list = cfg.analysis.get("harmonic_times")
    if t_list is None:
        t_list = [float(t) for t in traj.times if t >= 0.4 * cfg.t_end][:3]
    ratios = []
    for t in t_list:
        rep = harmonic_extract(traj, t, window=tuple(
            cfg.analysis.get("harmonic_window", (0.3, 1.2))))
        ratios.append(rep["ratio"])
    ratio = float(np.median(ratios))
    target = (1.0 + np.sqrt(2.0)) ** 2
    rel = abs(ratio - target) / target
    out = [CheckResult("harmonic_ratio", "relative_error", rel, 0.25,
                       rel <= 0.25)]
    if outdir is not None:
        _write_series_csv(Path(outdir) / "harmonic_ratio.csv", "t,ratio",
                          (t_list, ratios))
    return out


def scatter_fit_checks(cfg: ExperimentConfig, traj=None,
                       outdir: Path | None = None) -> list[CheckResult]:
    """Decay/plateau/log-phase checks appropriate to the configured model."""
    if traj is None:
        traj = run_model(cfg)
    results = []
    if cfg.model == "reduced_ode":
        Xs = cfg.analysis.get("fit_rays", [-1.0, -0.7, 0.7, 1.0])
        fit = fit_log_phase_reduced(traj, Xs, cfg.epsilon)
        worst = float(np.abs(fit.ratios - 1.0).max())
        results.append(CheckResult("log_phase_reduced", "max_ratio_error",
                                   worst, 1e-3, worst <= 1e-3))
        rep = extract_alpha(traj)
        results.append(CheckResult("alpha_residual", "sup", rep["last_decade_sup"],
                                   1e-6, rep["last_decade_sup"] <= 1e-6))
    else:
        Xs = cfg.analysis.get("fit_rays", [-0.55, -0.5, -0.45, -0.4])
        tol = cfg.analysis.get("log_phase_tolerance", 0.25)
        fit = fit_log_phase(traj, Xs, cfg.epsilon)
        med = float(np.median(fit.ratios))
        results.append(CheckResult("log_phase_pde", "median_ratio_error",
                                   abs(med - 1.0), tol, abs(med - 1.0) <= tol))
        spread = float(max(r.plateau_spread for r in fit.rays))
        results.append(CheckResult("modulus_plateau", "spread", spread, 0.10,
                                   spread <= 0.10))
        if cfg.model == "linear":
            results.append(CheckResult(
                "linear_decay", "exponent_error",
                abs(fit.decay_exponent + 0.5), 0.02,
                abs(fit.decay_exponent + 0.5) <= 0.02))
        if outdir is not None:
            _write_series_csv(Path(outdir) / "ray_ratios.csv",
                              "X,log_coefficient,predicted",
                              ([r.X for r in fit.rays],
                               [r.log_coefficient for r in fit.rays],
                               [r.predicted_coefficient for r in fit.rays]))
    return results


def run_experiment(cfg: ExperimentConfig) -> tuple[Path, bool]:
    """Run the configured model, store snapshots, run enabled checks."""
    outdir = Path(cfg.out or "experiment_out")
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.json").write_text(cfg.to_json() + "\n")
    traj = run_model(cfg)
    _write_snapshots(traj, outdir, cfg)
    results: list[CheckResult] = []
    enabled = cfg.analysis.get("checks", [])
    if "conservation" in enabled:
        dno_opts = dict(cfg.analysis.get("dno_opts", {}))
        h0 = hamiltonian(traj.states[0], "elliptic", dno_opts)
        h1 = hamiltonian(traj.states[-1], "elliptic", dno_opts)
        drift = abs(h1 - h0) / abs(h0)
        results.append(CheckResult("hamiltonian_drift", "relative", drift,
                                   1e-6, drift <= 1e-6))
    if "scatter" in enabled or "decay" in enabled:
        results.extend(scatter_fit_checks(cfg, traj, outdir))
    if "harmonics" in enabled:
        results.extend(harmonics_checks(cfg, traj, outdir))
    path, ok = emit_report(results, outdir)
    return path, ok
