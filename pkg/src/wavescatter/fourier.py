"""Periodic spectral core.

Complex-valued functions sampled on a uniform grid over a torus centered at
the origin, with Fourier multipliers, Littlewood-Paley blocks, Sobolev and
Hoelder norms, smooth paraproducts, and dealiased pointwise products.  Every
other module builds on this one.

Conventions: the grid is x_j = -L/2 + j*L/n, frequencies are
xi_k = 2*pi*k/L in FFT ordering, and expansion coefficients satisfy
f(x) = sum_k c_k exp(i xi_k x), so a pure mode exp(i k x) has c_k = 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "GridFunction",
    "MultiplierSymbol",
    "abs_freq",
    "signed_freq_sqrt",
    "freq_power",
    "freq_bracket",
    "spatial_derivative",
    "apply_multiplier",
    "smooth_step",
    "smooth_bump",
    "lp_low_symbol",
    "lp_bump_symbol",
    "lp_block",
    "low_pass",
    "lp_low_block",
    "lp_band_range",
    "l2_norm",
    "sup_norm",
    "sobolev_norm",
    "holder_norm",
    "paraproduct",
    "dealiased_product",
    "spectral_interpolate",
    "mask_spectral_floor",
    "write_csv",
    "read_csv",
    "write_manifest",
]

_POPULATED_REL = 1e-13

_grid_cache: dict[tuple[int, float], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _grid_arrays(n: int, length: float):
    """Cached (x, xi, parity sign) arrays for an n-point torus of given length."""
    key = (n, float(length))
    hit = _grid_cache.get(key)
    if hit is None:
        x = -length / 2.0 + np.arange(n) * (length / n)
        xi = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
        kint = np.rint(np.fft.fftfreq(n) * n).astype(int)
        sign = np.where(kint % 2 == 0, 1.0, -1.0)
        for a in (x, xi, sign):
            a.setflags(write=False)
        hit = (x, xi, sign)
        _grid_cache[key] = hit
    return hit


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A complex function on a uniform periodic grid with spectral coefficients.

    `samples` and `coefficients` are kept consistent; construct through
    :meth:`from_samples` or :meth:`from_coefficients`.
    """

    n_points: int
    domain_length: float
    samples: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        n = self.n_points
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError("n_points must be a power of two and >= 16")
        if not self.domain_length > 0:
            raise ValueError("domain_length must be positive")
        if self.samples.shape != (n,) or self.coefficients.shape != (n,):
            raise ValueError("sample/coefficient arrays must have length n_points")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")
        self.samples.setflags(write=False)
        self.coefficients.setflags(write=False)

    @classmethod
    def from_samples(cls, samples, domain_length: float) -> "GridFunction":
        samples = np.ascontiguousarray(samples, dtype=complex)
        n = samples.size
        _, _, sign = _grid_arrays(n, domain_length)
        coeff = sign * np.fft.fft(samples) / n
        return cls(n, float(domain_length), samples, coeff)

    @classmethod
    def from_coefficients(cls, coefficients, domain_length: float) -> "GridFunction":
        coefficients = np.ascontiguousarray(coefficients, dtype=complex)
        n = coefficients.size
        _, _, sign = _grid_arrays(n, domain_length)
        samples = np.fft.ifft(sign * coefficients * n)
        return cls(n, float(domain_length), samples, coefficients)

    @property
    def x(self) -> np.ndarray:
        return _grid_arrays(self.n_points, self.domain_length)[0]

    @property
    def xi(self) -> np.ndarray:
        return _grid_arrays(self.n_points, self.domain_length)[1]

    def with_samples(self, samples) -> "GridFunction":
        return GridFunction.from_samples(samples, self.domain_length)

    def with_coefficients(self, coefficients) -> "GridFunction":
        return GridFunction.from_coefficients(coefficients, self.domain_length)

    def same_grid(self, other: "GridFunction") -> bool:
        return (
            self.n_points == other.n_points
            and self.domain_length == other.domain_length
        )

    def conj(self) -> "GridFunction":
        return GridFunction.from_samples(np.conj(self.samples), self.domain_length)

    def real_part(self) -> "GridFunction":
        return GridFunction.from_samples(
            self.samples.real.astype(complex), self.domain_length
        )

    def imag_part(self) -> "GridFunction":
        return GridFunction.from_samples(
            self.samples.imag.astype(complex), self.domain_length
        )

    def populated(self, rel: float = _POPULATED_REL) -> np.ndarray:
        """Boolean mask of spectrally populated modes (relative magnitude)."""
        mx = np.abs(self.coefficients).max()
        if mx == 0.0:
            return np.zeros(self.n_points, dtype=bool)
        return np.abs(self.coefficients) > rel * mx

    def __add__(self, other):
        if isinstance(other, GridFunction):
            if not self.same_grid(other):
                raise ValueError("grid mismatch")
            return GridFunction.from_coefficients(
                self.coefficients + other.coefficients, self.domain_length
            )
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            if not self.same_grid(other):
                raise ValueError("grid mismatch")
            return GridFunction.from_coefficients(
                self.coefficients - other.coefficients, self.domain_length
            )
        return NotImplemented

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return GridFunction.from_coefficients(
                self.coefficients * scalar, self.domain_length
            )
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)


def zeros_like(f: GridFunction) -> GridFunction:
    return GridFunction.from_coefficients(
        np.zeros(f.n_points, dtype=complex), f.domain_length
    )


@dataclass(frozen=True)
class MultiplierSymbol:
    """A Fourier multiplier m(xi) with an explicit zero-mode convention.

    `evaluator` is only consulted at nonzero frequencies; the zero mode is set
    from `value_at_zero` (multipliers of negative homogeneity keep the default
    0 and expect mean-free inputs).
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    value_at_zero: complex = 0.0
    homogeneity_degree: float | None = None

    def on_grid(self, xi: np.ndarray) -> np.ndarray:
        vals = np.empty(xi.shape, dtype=complex)
        nz = xi != 0.0
        vals[nz] = self.evaluator(xi[nz])
        vals[~nz] = self.value_at_zero
        # the unpaired Nyquist mode takes the even part of the symbol, so odd
        # multipliers (derivatives) keep real data real
        n = xi.size
        if n % 2 == 0 and xi[n // 2] != 0.0:
            vals[n // 2] = 0.5 * (
                self.evaluator(np.array([xi[n // 2]]))[0]
                + self.evaluator(np.array([-xi[n // 2]]))[0]
            )
        return vals


def abs_freq(s: float = 1.0) -> MultiplierSymbol:
    """|xi|^s (|D_x|^s as an operator)."""
    zero = 1.0 if s == 0 else 0.0
    return MultiplierSymbol(lambda xi: np.abs(xi) ** s, zero, s)


def signed_freq_sqrt() -> MultiplierSymbol:
    """xi |xi|^{-1/2} (the operator D_x |D_x|^{-1/2})."""
    return MultiplierSymbol(lambda xi: np.sign(xi) * np.sqrt(np.abs(xi)), 0.0, 0.5)


def freq_power(p: int) -> MultiplierSymbol:
    """xi^p (the operator D_x^p)."""
    return MultiplierSymbol(lambda xi: xi ** p, 1.0 if p == 0 else 0.0, float(p))


def freq_bracket(s: float) -> MultiplierSymbol:
    """<xi>^s = (1 + xi^2)^{s/2}."""
    return MultiplierSymbol(lambda xi: (1.0 + xi ** 2) ** (s / 2.0), 1.0, None)


def spatial_derivative(order: int = 1) -> MultiplierSymbol:
    """(i xi)^order (the operator d^order/dx^order)."""
    return MultiplierSymbol(lambda xi: (1j * xi) ** order, 1.0 if order == 0 else 0.0,
                            float(order))


def apply_multiplier(f: GridFunction, m: MultiplierSymbol) -> GridFunction:
    """Apply a Fourier multiplier; rejects non-finite values on populated modes."""
    vals = m.on_grid(f.xi)
    bad = ~np.isfinite(vals)
    if bad.any():
        if (bad & f.populated()).any():
            raise ValueError("multiplier is not finite on a populated mode")
        vals = np.where(bad, 0.0, vals)
    return f.with_coefficients(vals * f.coefficients)


# ---------------------------------------------------------------------------
# Littlewood-Paley machinery.
#
# The dyadic bump phi is built from the exponential cutoff q(t) = exp(-1/t):
# smooth_step rises from 0 to 1 on [0, 1], the low symbol psi(xi) equals 1 for
# |xi| <= 1 and 0 for |xi| >= 2, and phi(xi) = psi(xi) - psi(2 xi) is an even
# C^inf bump supported in 1/2 <= |xi| <= 2 with sum_j phi(2^-j xi) = 1 for
# xi != 0 by telescoping.
# ---------------------------------------------------------------------------


def smooth_step(t) -> np.ndarray:
    """C^inf step: 0 for t <= 0, 1 for t >= 1, strictly increasing between."""
    t = np.asarray(t, dtype=float)
    def q(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out
    a = q(t)
    b = q(1.0 - t)
    return a / (a + b)


def smooth_bump(t, inner: float = 1.0, outer: float = 2.0) -> np.ndarray:
    """Even C^inf bump: 1 for |t| <= inner, 0 for |t| >= outer."""
    t = np.abs(np.asarray(t, dtype=float))
    return smooth_step((outer - t) / (outer - inner))


def lp_low_symbol(xi) -> np.ndarray:
    """psi(xi): 1 on |xi| <= 1, 0 on |xi| >= 2."""
    return smooth_bump(xi, 1.0, 2.0)


def lp_bump_symbol(xi) -> np.ndarray:
    """phi(xi) = psi(xi) - psi(2 xi), supported in 1/2 <= |xi| <= 2."""
    xi = np.asarray(xi, dtype=float)
    return lp_low_symbol(xi) - lp_low_symbol(2.0 * xi)


def lp_block(f: GridFunction, j: int) -> GridFunction:
    """Dyadic block Delta_j f with spectrum in 2^{j-1} <= |xi| <= 2^{j+1}."""
    mask = lp_bump_symbol(f.xi * 2.0 ** (-j))
    return f.with_coefficients(f.coefficients * mask)


def low_pass(f: GridFunction, m: int) -> GridFunction:
    """Smooth low-pass S_m f below frequency 2^m (psi(2^-m xi) cutoff)."""
    return f.with_coefficients(f.coefficients * lp_low_symbol(f.xi * 2.0 ** (-m)))


def lp_low_block(f: GridFunction) -> GridFunction:
    """The inhomogeneous low block (frequencies |xi| <= 2, smooth cutoff)."""
    return low_pass(f, 0)


def lp_band_range(f: GridFunction) -> tuple[int, int]:
    """Smallest j-range such that low block + sum of Delta_j recovers f."""
    ximax = np.abs(f.xi).max()
    jmax = int(math.ceil(math.log2(ximax))) + 1 if ximax > 0 else 1
    return 1, jmax


# ---------------------------------------------------------------------------
# Norms.
# ---------------------------------------------------------------------------


def l2_norm(f: GridFunction) -> float:
    """Sample-side L2 norm, sqrt(dx * sum |f_j|^2)."""
    dx = f.domain_length / f.n_points
    return float(np.sqrt(dx * np.sum(np.abs(f.samples) ** 2)))


def sup_norm(f: GridFunction) -> float:
    return float(np.abs(f.samples).max())


def sobolev_norm(f: GridFunction, s: float) -> float:
    """<xi>^s weighted spectral l2 norm (equals l2_norm at s = 0)."""
    w = (1.0 + f.xi ** 2) ** s
    return float(
        np.sqrt(f.domain_length * np.sum(w * np.abs(f.coefficients) ** 2))
    )


def holder_norm(f: GridFunction, rho: float) -> float:
    """Dyadic C^rho norm: ||low block||_inf + sup_j 2^{j rho} ||Delta_j f||_inf."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    total = sup_norm(lp_low_block(f))
    j0, j1 = lp_band_range(f)
    best = 0.0
    for j in range(j0, j1 + 1):
        b = lp_block(f, j)
        val = 2.0 ** (j * rho) * sup_norm(b)
        best = max(best, val)
    return total + best


# ---------------------------------------------------------------------------
# Products and paraproducts.
# ---------------------------------------------------------------------------


def dealiased_product(f: GridFunction, g: GridFunction) -> GridFunction:
    """Pointwise product via zero-padded transforms (alias-free for pairs)."""
    if not f.same_grid(g):
        raise ValueError("grid mismatch")
    n = f.n_points
    m = 2 * n
    _, _, sign_n = _grid_arrays(n, f.domain_length)
    _, _, sign_m = _grid_arrays(m, f.domain_length)

    def pad(c):
        big = np.zeros(m, dtype=complex)
        half = n // 2
        big[:half] = c[:half]
        big[m - half:] = c[half:]
        return big

    fa = np.fft.ifft(sign_m * pad(f.coefficients) * m)
    ga = np.fft.ifft(sign_m * pad(g.coefficients) * m)
    prod = sign_m * np.fft.fft(fa * ga) / m
    half = n // 2
    out = np.concatenate([prod[:half], prod[m - half:]])
    return GridFunction.from_coefficients(out, f.domain_length)


def paraproduct(a: GridFunction, f: GridFunction, gap: int = 2) -> GridFunction:
    """Low-high paraproduct T_a f = sum_j S_{j-gap}(a) * Delta_j f.

    Only the inhomogeneous blocks j >= 1 of f enter; the low block of f
    contributes nothing by convention.
    """
    if not a.same_grid(f):
        raise ValueError("grid mismatch")
    j0, j1 = lp_band_range(f)
    acc = np.zeros(f.n_points, dtype=complex)
    for j in range(j0, j1 + 1):
        block = lp_block(f, j)
        if np.abs(block.coefficients).max() == 0.0:
            continue
        term = dealiased_product(low_pass(a, j - gap), block)
        acc = acc + term.coefficients
    return f.with_coefficients(acc)


def spectral_interpolate(f: GridFunction, points, rel_floor: float = 1e-15,
                         chunk: int = 1024) -> np.ndarray:
    """Evaluate the trigonometric interpolant at arbitrary points.

    Uses only spectrally populated modes; exact (to rounding) for
    band-limited data.  Points may lie anywhere; the interpolant is periodic.
    """
    points = np.asarray(points, dtype=float)
    c = f.coefficients
    mx = np.abs(c).max()
    if mx == 0.0:
        return np.zeros(points.shape, dtype=complex)
    keep = np.abs(c) > rel_floor * mx
    xi = f.xi[keep]
    ck = c[keep]
    flat = points.ravel()
    out = np.empty(flat.size, dtype=complex)
    for lo in range(0, flat.size, chunk):
        sl = slice(lo, min(lo + chunk, flat.size))
        out[sl] = np.exp(1j * np.outer(flat[sl], xi)) @ ck
    return out.reshape(points.shape)


def mask_spectral_floor(f: GridFunction, rel: float = 1e-14) -> GridFunction:
    """Zero all coefficients below `rel` times the spectral peak."""
    c = f.coefficients.copy()
    mx = np.abs(c).max()
    if mx > 0.0:
        c[np.abs(c) < rel * mx] = 0.0
    return f.with_coefficients(c)


# ---------------------------------------------------------------------------
# Serialization: CSV samples plus a JSON manifest.
# ---------------------------------------------------------------------------


def write_csv(f: GridFunction, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("x,re,im\n")
        for xv, sv in zip(f.x, f.samples):
            fh.write(f"{float(xv)!r},{float(sv.real)!r},{float(sv.imag)!r}\n")


def read_csv(path, domain_length: float) -> GridFunction:
    path = Path(path)
    rows = path.read_text().strip().splitlines()
    if rows[0] != "x,re,im":
        raise ValueError("unexpected CSV header")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    return GridFunction.from_samples(data[:, 1] + 1j * data[:, 2], domain_length)


def write_manifest(f: GridFunction, path, extra: dict | None = None) -> None:
    doc = {"n_points": f.n_points, "domain_length": f.domain_length}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
