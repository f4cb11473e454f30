"""Characteristic functions, quadrature marginals, Wigner functions and
bootstrap error bars for sampled readout records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .oscillator import (
    Conventions,
    TruncationError,
    _displacement_factors,
    char_value,
    check_displacement,
)

RIPPLE_THRESHOLD = -1e-3


def char_function(rho: np.ndarray, alpha: complex) -> complex:
    """chi(alpha) = Tr(rho D(alpha))."""
    rho = np.asarray(rho, dtype=complex)
    check_displacement(alpha, Conventions(rho.shape[0]))
    return char_value(rho, alpha)


@dataclass(frozen=True)
class CharScan:
    """chi(t * axis) sampled on a real grid of t."""

    axis: complex
    t_values: np.ndarray
    values: np.ndarray
    shots: np.ndarray | None = None


def scan_char(rho: np.ndarray, axis: complex, t_values) -> CharScan:
    t = np.asarray(t_values, dtype=float)
    vals = np.array([char_function(rho, ti * axis) for ti in t])
    return CharScan(complex(axis), t, vals)


@dataclass(frozen=True)
class Marginal:
    coordinate: str
    grid: np.ndarray
    density: np.ndarray
    integral: float
    flags: tuple = field(default_factory=tuple)

    def variance(self) -> float:
        mean = np.trapezoid(self.grid * self.density, self.grid) / self.integral
        return float(np.trapezoid((self.grid - mean) ** 2 * self.density, self.grid) / self.integral)


def marginal_from_scan(scan: CharScan, target: str | None = None, pad: int = 8) -> Marginal:
    """Quadrature marginal by zero-padded DFT of a characteristic-function scan.

    A scan along the real axis yields P(p), along the imaginary axis P(q):
    chi(s) = <exp(-2 i s p)> and chi(i s) = <exp(2 i s q)>.
    """
    axis = scan.axis
    if abs(axis.imag) < 1e-12 * abs(axis):
        coord, sign = "p", 1.0
        scale = axis.real
    elif abs(axis.real) < 1e-12 * abs(axis):
        coord, sign = "q", -1.0
        scale = axis.imag
    else:
        raise ValueError("scan axis must be purely real (P(p)) or imaginary (P(q))")
    if target is not None and target != coord:
        raise ValueError(f"a scan along {axis} gives P({coord}), not P({target})")
    t = np.asarray(scan.t_values, dtype=float)
    dt = np.diff(t)
    if len(t) < 2 or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("marginal_from_scan needs a uniform t grid")
    s = t * scale * sign  # chi = <exp(-2 i s X)>, X = p or q
    if s[1] < s[0]:
        s, vals = s[::-1], np.asarray(scan.values)[::-1]
    else:
        vals = np.asarray(scan.values)
    step = s[1] - s[0]
    m = pad * len(s)
    padded = np.zeros(m, dtype=complex)
    padded[: len(s)] = vals
    spectrum = np.fft.ifft(padded) * m
    parseval = _parseval_residual(padded, spectrum)
    k = np.fft.fftfreq(m) * m
    x = math.pi * k / (m * step)
    dens = (step / math.pi) * np.exp(2j * s[0] * x) * spectrum
    order = np.argsort(x)
    x, dens = x[order], dens[order].real
    integral = float(np.trapezoid(dens, x))
    flags = []
    if dens.min() < RIPPLE_THRESHOLD * max(dens.max(), 1e-300):
        flags.append("negative-ripple")
    if not 0.98 <= integral <= 1.02:
        flags.append("normalization")
    if parseval > 1e-8:
        flags.append("parseval")
    return Marginal(coord, x, dens, integral, tuple(flags))


def _parseval_residual(samples: np.ndarray, transformed: np.ndarray) -> float:
    """Relative mismatch of sum |x|^2 and sum |X|^2 / M for an unnormalized DFT."""
    power = float(np.sum(np.abs(samples) ** 2))
    back = float(np.sum(np.abs(transformed) ** 2)) / len(samples)
    return abs(power - back) / max(power, 1e-300)


def parseval_residual(values, pad: int = 8) -> float:
    """Parseval check of the zero-padded transform used by marginal_from_scan."""
    values = np.asarray(values, dtype=complex)
    padded = np.zeros(pad * len(values), dtype=complex)
    padded[: len(values)] = values
    return _parseval_residual(padded, np.fft.ifft(padded) * len(padded))


def hermite_functions(nmax: int, x: np.ndarray) -> np.ndarray:
    """psi_n(x) for n < nmax in standard units ([x, p] = i), by recurrence."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((nmax, x.size))
    out[0] = math.pi**-0.25 * np.exp(-(x**2) / 2)
    if nmax > 1:
        out[1] = math.sqrt(2) * x * out[0]
    for n in range(1, nmax - 1):
        out[n + 1] = math.sqrt(2 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def quadrature_density(rho: np.ndarray, grid, coordinate: str = "q") -> np.ndarray:
    """<x|rho|x> from the quadrature wavefunctions <q|n>, <p|n> = (-i)^n <q=p|n>."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    dim = rho.shape[0]
    grid = np.asarray(grid, dtype=float)
    phi = hermite_functions(dim, math.sqrt(2) * grid).astype(complex)
    if coordinate == "p":
        phi *= ((-1j) ** np.arange(dim))[:, None]
    elif coordinate != "q":
        raise ValueError("coordinate must be 'q' or 'p'")
    dens = np.einsum("nx,nm,mx->x", phi, rho, phi.conj()).real
    return math.sqrt(2) * dens


def wigner(rho: np.ndarray, q_grid, p_grid, batch: int = 2048) -> np.ndarray:
    """W(q, p) = (2/pi) Tr(rho D(alpha) P D(-alpha)), alpha = q + ip, P = parity.

    Returns an array indexed ``[i_q, i_p]``.
    """
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    q = np.asarray(q_grid, dtype=float)
    p = np.asarray(p_grid, dtype=float)
    reach = max(abs(q).max(), 1e-300) ** 2 + max(abs(p).max(), 1e-300) ** 2
    if reach > dim / 8:
        raise TruncationError(f"grid reaches |alpha|^2 = {reach:.2f} > N/8 = {dim / 8}")
    if rho.ndim == 1:
        comps = [(1.0, rho)]
    else:
        w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
        comps = [(wi, v[:, i]) for i, wi in enumerate(w) if abs(wi) > 1e-14]
    alphas = (q[:, None] + 1j * p[None, :]).reshape(-1)
    parity = (-1.0) ** np.arange(dim)
    _, vecs, _ = _displacement_factors(1.0, dim)
    from .oscillator import _quadrature_spectrum

    vals, _ = _quadrature_spectrum(dim)
    n = np.arange(dim)
    out = np.zeros(alphas.size)
    for start in range(0, alphas.size, batch):
        beta = -alphas[start:start + batch]  # D(-alpha) psi
        theta = np.angle(beta) + math.pi / 2
        for wi, psi in comps:
            x = np.exp(-1j * np.outer(n, theta)) * psi[:, None]
            x = vecs.T @ x
            x *= np.exp(-1j * np.outer(vals, np.abs(beta)))
            x = vecs @ x
            out[start:start + batch] += wi * (parity @ (np.abs(x) ** 2))
    return (2 / math.pi) * out.reshape(q.size, p.size)


def wigner_marginal(W: np.ndarray, q_grid, p_grid, coordinate: str = "q") -> np.ndarray:
    """Integrate W over the other quadrature (trapezoid)."""
    if coordinate == "q":
        return np.trapezoid(W, np.asarray(p_grid), axis=1)
    return np.trapezoid(W, np.asarray(q_grid), axis=0)


def bootstrap_errors(records, resamples: int = 1000, rng=None) -> np.ndarray:
    """Bootstrap standard error of the dark fraction at each scan point.

    ``records`` is a sequence of per-point outcome records: either 0/1 arrays
    of individual shots or ``(dark_count, shots)`` pairs. Resampling n shots
    with replacement from a record with dark fraction f is a Binomial(n, f)
    draw, which is what is sampled here.
    """
    if resamples < 100:
        raise ValueError("resamples must be >= 100")
    rng = np.random.default_rng(rng)
    errs = []
    for rec in records:
        if isinstance(rec, tuple) and len(rec) == 2:
            k, n = rec
        else:
            arr = np.asarray(rec)
            k, n = int(arr.sum()), arr.size
        if n == 0:
            errs.append(np.nan)
            continue
        draws = rng.binomial(n, k / n, size=resamples) / n
        errs.append(draws.std(ddof=1))
    return np.array(errs)
