"""Exogenous drift and chemical concentration field.

The cell density rho feeds a chemical concentration c through the damped heat
equation dc/dt = (1/2) c_xx - lambda c + rho, c(0) = c0.  Its Duhamel solution

    c_t = e^{-lambda t} g(t,.) * c0 + int_0^t e^{-lambda s} (rho_{t-s} * g(s,.)) ds

is evaluated spectrally, with the s -> 0 endpoint (where g(s,.) tends to the
identity) assigned its limit value rho_t, and exact exp(-lambda s) subinterval
weights so only the smooth factor is discretized (trapezoid, second order).

Two routes to the chemical gradient exist on purpose:

* :func:`chemical_gradient` assembles d/dx c directly from the density
  history with the same product-integration weights the memory drift uses,
  so that the structural identity  chi * d/dx c = b + B  holds on the shared
  discretization (heat-normalized kernel);
* central differencing of :func:`chemical_concentration` gives an
  independent cross-check at O(h^2) + O(dt^2) accuracy.

The exogenous drift is b(t, x) = chi e^{-lambda t} E[c0'(x + W_t)], bounded
by chi ||c0'||_inf for all times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import Grid1D, DensityField, heat_kernel
from .kernel import KernelSpec

__all__ = [
    "InitialChemical",
    "ChemicalField",
    "drift_b",
    "chemical_concentration",
    "chemical_gradient",
    "ks_residual",
]


@dataclass
class InitialChemical:
    """Initial chemical concentration c0 with its derivative, sampled on a grid.

    closed_form_tag enables analytic drift oracles:
      "sine":          c0 = amp * sin(freq x)
      "gaussian_bump": c0 = amp * exp(-x^2 / (2 width^2))
      "custom":        samples only
    """

    grid: Grid1D
    c0: np.ndarray
    c0_prime: np.ndarray
    closed_form_tag: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c0 = np.asarray(self.c0, dtype=float)
        self.c0_prime = np.asarray(self.c0_prime, dtype=float)
        for arr in (self.c0, self.c0_prime):
            if arr.shape != (self.grid.n,):
                raise ValueError(f"chemical samples must have shape ({self.grid.n},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError("chemical initial data must be bounded")

    @classmethod
    def sine(cls, grid: Grid1D, amp: float = 1.0, freq: float = 1.0) -> "InitialChemical":
        """Sinusoidal chemical.  freq is snapped to the nearest nonzero grid
        harmonic (multiple of pi / half_width) so the profile is exactly
        periodic on the box; the snapped value is stored in params."""
        fund = math.pi / grid.half_width
        freq_eff = max(1, round(freq / fund)) * fund
        x = grid.x
        return cls(grid, amp * np.sin(freq_eff * x), amp * freq_eff * np.cos(freq_eff * x),
                   "sine", {"amp": amp, "freq": freq_eff})

    @classmethod
    def gaussian_bump(cls, grid: Grid1D, amp: float = 1.0, width: float = 1.0) -> "InitialChemical":
        x = grid.x
        c0 = amp * np.exp(-x * x / (2.0 * width ** 2))
        return cls(grid, c0, -x / width ** 2 * c0, "gaussian_bump",
                   {"amp": amp, "width": width})

    @classmethod
    def from_samples(cls, grid: Grid1D, c0: np.ndarray,
                     c0_prime: Optional[np.ndarray] = None) -> "InitialChemical":
        c0 = np.asarray(c0, dtype=float)
        if c0_prime is None:
            c0_prime = (np.roll(c0, -1) - np.roll(c0, 1)) / (2.0 * grid.h)
        return cls(grid, c0, c0_prime, "custom")

    def derivative_residual(self) -> float:
        """Max deviation of c0_prime from the periodic central difference of c0.

        O(h^2 ||c0'''||) for smooth closed forms; a large value signals
        inconsistent user samples.
        """
        cd = (np.roll(self.c0, -1) - np.roll(self.c0, 1)) / (2.0 * self.grid.h)
        return float(np.max(np.abs(cd - self.c0_prime)))


@dataclass
class ChemicalField:
    """Concentration and its spatial gradient at one time."""

    grid: Grid1D
    values: np.ndarray
    gradient: np.ndarray
    time_tag: float = 0.0

    def gradient_vs_central_difference(self) -> float:
        """Sup distance between the stored gradient and the central difference
        of the stored values (cross-method agreement, O(h^2))."""
        cd = (np.roll(self.values, -1) - np.roll(self.values, 1)) / (2.0 * self.grid.h)
        return float(np.max(np.abs(cd - self.gradient)))


def drift_b(spec: KernelSpec, chem: Optional[InitialChemical], t: float, x=None) -> np.ndarray:
    """Exogenous drift b(t, .) = chi e^{-lambda t} (c0' * g(t, .)).

    With x=None returns the drift on the chemical's grid (spectral
    evaluation); with an array x, closed-form tags are evaluated exactly and
    sampled chemicals are linearly interpolated from the grid.
    At t = 0 the convolution is the identity, so b(0, .) = chi c0'.
    """
    if chem is None:
        if x is None:
            raise ValueError("need a grid or evaluation points when chem is None")
        return np.zeros_like(np.asarray(x, dtype=float))
    if t < 0:
        raise ValueError(f"need t >= 0, got {t}")
    pref = spec.chi * math.exp(-spec.lam * t)
    if x is not None:
        x = np.asarray(x, dtype=float)
        if chem.closed_form_tag == "sine":
            a, w = chem.params["amp"], chem.params["freq"]
            return pref * a * w * math.exp(-w * w * t / 2.0) * np.cos(w * x)
        if chem.closed_form_tag == "gaussian_bump":
            a, wd = chem.params["amp"], chem.params["width"]
            v = wd * wd + t
            return pref * (-a * wd * x / v ** 1.5) * np.exp(-x * x / (2.0 * v))
        on_grid = drift_b(spec, chem, t)
        return _periodic_interp(chem.grid, on_grid, x)
    if t == 0.0:
        return pref * chem.c0_prime.copy()
    xi = chem.grid.wavenumbers
    smoothed = np.fft.irfft(np.fft.rfft(chem.c0_prime) * np.exp(-xi * xi * t / 2.0), chem.grid.n)
    return pref * smoothed


def _periodic_interp(grid: Grid1D, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    span = 2.0 * grid.half_width
    xm = np.mod(x + grid.half_width, span) - grid.half_width
    xp = np.append(grid.x, grid.half_width)
    vp = np.append(values, values[0])
    return np.interp(xm, xp, vp)


def _duhamel_symbol_sum(history, lam: float, k: int) -> np.ndarray:
    """rfft of int_0^{t_k} e^{-lam s} (rho_{t_k - s} * g(s, .)) ds.

    Trapezoid in the smooth factor rho_{t-s} * g(s); exact subinterval
    integrals of e^{-lam s}; F(0) takes its identity-limit value rho_{t_k}.
    """
    grid, mesh = history.grid, history.mesh
    xi = grid.wavenumbers
    t = mesh.nodes
    spectra = history.spectra()
    # F_hat[j] = rfft(rho_{t_{k-j}}) * g_hat(t_j), j = 0..k
    decay = np.exp(-np.outer(t[: k + 1], xi * xi / 2.0))
    F = spectra[k::-1] * decay
    if lam == 0.0:
        w = np.full(k, mesh.dt)
    else:
        e = np.exp(-lam * t[: k + 1])
        w = (e[:-1] - e[1:]) / lam
    return 0.5 * np.sum(w[:, None] * (F[:-1] + F[1:]), axis=0)


def chemical_concentration(history, chem: InitialChemical, lam: float, k: int) -> ChemicalField:
    """Concentration c at mesh node k from the density history, with gradient.

    The returned gradient comes from spectral differentiation of c;
    gradient_vs_central_difference() bounds its distance to a plain finite
    difference, and the tests compare it with the independent drift-identity
    assembly of :func:`chemical_gradient`.
    """
    grid, mesh = history.grid, history.mesh
    history.require_rows(k)
    tk = mesh.nodes[k]
    xi = grid.wavenumbers
    c0_hat = np.fft.rfft(chem.c0)
    if k == 0:
        return ChemicalField(grid, chem.c0.copy(), chem.c0_prime.copy(), 0.0)
    c_hat = math.exp(-lam * tk) * c0_hat * np.exp(-xi * xi * tk / 2.0)
    c_hat = c_hat + _duhamel_symbol_sum(history, lam, k)
    values = np.fft.irfft(c_hat, grid.n)
    grad = chemical_gradient(history, chem, KernelSpec(chi=1.0, lam=lam), k)
    return ChemicalField(grid, values, grad, tk)


def chemical_gradient(history, chem: InitialChemical, spec: KernelSpec, k: int) -> np.ndarray:
    """d/dx c at mesh node k, assembled directly from the density history.

    Uses the decomposition d/dx c = e^{-lam t} (c0' * g(t)) + (1/chi) B-type
    sum, sharing the memory drift's product-integration weights, so that
    chi * (d/dx c) - [b + B] vanishes on the shared discretization for the
    heat-normalized kernel.  Kernel-free: only spec.lam enters.
    """
    from .mild import memory_drift  # local import, mild depends on this module

    history.require_rows(k)
    tk = history.mesh.nodes[k]
    unit = KernelSpec(chi=1.0, lam=spec.lam, normalization="heat")
    part_c0 = math.exp(-spec.lam * tk) * _smooth_on_grid(chem, tk)
    if k == 0:
        return part_c0
    return part_c0 + memory_drift(history, unit, k).values


def _smooth_on_grid(chem: InitialChemical, t: float) -> np.ndarray:
    if t == 0.0:
        return chem.c0_prime.copy()
    xi = chem.grid.wavenumbers
    return np.fft.irfft(np.fft.rfft(chem.c0_prime) * np.exp(-xi * xi * t / 2.0), chem.grid.n)


def ks_residual(history, chem: InitialChemical, lam: float,
                sample_ks: Optional[np.ndarray] = None) -> np.ndarray:
    """Finite-difference residual of dc/dt - (1/2) c_xx + lambda c - rho.

    Central differences in both time (mesh neighbours) and space; returns the
    spatial L^2 norm of the residual at each sampled interior node.  The
    residual measures the consistency of the computed (rho, c) pair and
    shrinks under (h, dt) refinement.
    """
    grid, mesh = history.grid, history.mesh
    if sample_ks is None:
        sample_ks = np.arange(2, mesh.steps - 1, max(1, mesh.steps // 16))
    h, dt = grid.h, mesh.dt
    c_cache = {}

    def c_at(k):
        if k not in c_cache:
            c_cache[k] = chemical_concentration(history, chem, lam, k).values
        return c_cache[k]

    out = np.empty(len(sample_ks))
    for i, k in enumerate(sample_ks):
        k = int(k)
        c_prev, c_mid, c_next = c_at(k - 1), c_at(k), c_at(k + 1)
        dcdt = (c_next - c_prev) / (2.0 * dt)
        cxx = (np.roll(c_mid, -1) - 2.0 * c_mid + np.roll(c_mid, 1)) / h ** 2
        res = dcdt - 0.5 * cxx + lam * c_mid - history.densities[k]
        out[i] = math.sqrt(grid.integrate(res * res))
    return out
