"""Brute-force reference: build the postselected pointer wavefunction on a grid and integrate.

Nothing here calls into :mod:`ppsmeter.core` beyond its data types; the
point of this module is to be an independent second route to the same
numbers.  Position moments come from trapezoid quadrature on a uniform
grid, momentum moments from Fourier-space differentiation.  For the smooth,
rapidly decaying integrands involved both are spectrally accurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GaussianPointer, Observable, PPSPair, Readout
from .errors import GridTooCoarse, NumericalFailure, VanishingPostselection

_FLOOR = 1e-14
_VAR_CLAMP = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Uniform position grid on ``[-L*Delta, L*Delta]``.

    ``points`` must be odd so that q = 0 is a node.
    """

    half_width_sigmas: float = 12.0
    points: int = 32769

    def __post_init__(self):
        if self.points < 1025 or self.points % 2 == 0:
            raise ValueError(f"grid needs an odd number of points >= 1025, got {self.points}")
        if not self.half_width_sigmas >= 8:
            raise ValueError(f"grid half width must be at least 8 sigma, got {self.half_width_sigmas}")

    def nodes(self, delta: float) -> np.ndarray:
        half = self.half_width_sigmas * delta
        return np.linspace(-half, half, self.points)

    def max_wavenumber(self, delta: float) -> float:
        """Largest phase rate g*|a| the grid is trusted to resolve."""
        return 0.25 * math.pi * self.points / (2.0 * self.half_width_sigmas * delta)


def postselected_wavefunction(
    obs: Observable, pps: PPSPair, pointer: GaussianPointer, g: float, grid: GridSpec = GridSpec()
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(q, Phi'(q))`` for the unnormalized postselected pointer state."""
    a = obs.eigenvalues
    if a.size != pps.alpha.size:
        raise ValueError(f"observable has dimension {a.size}, states have {pps.alpha.size}")
    delta = pointer.delta
    if abs(g) * np.abs(a).max() >= grid.max_wavenumber(delta):
        raise GridTooCoarse(
            f"phase rate {abs(g) * np.abs(a).max():.4g} exceeds the grid limit "
            f"{grid.max_wavenumber(delta):.4g}; add points"
        )
    q = grid.nodes(delta)
    gaussian = (2.0 * math.pi * delta**2) ** -0.25 * np.exp(-(q**2) / (4.0 * delta**2))
    weights = pps.alpha * np.conj(pps.beta)
    phases = np.exp(1j * g * np.outer(a, q))
    return q, (weights @ phases) * gaussian


def _spectral_derivative(psi: np.ndarray, step: float) -> np.ndarray:
    k = 2.0 * math.pi * np.fft.fftfreq(psi.size, d=step)
    return np.fft.ifft(1j * k * np.fft.fft(psi))


def _integrate(values: np.ndarray, step: float) -> complex:
    return complex(np.trapezoid(values, dx=step))


def _sd(var: float, label: str) -> float:
    if var < 0:
        if var < -_VAR_CLAMP:
            raise NumericalFailure(f"negative {label} variance {var!r} from quadrature")
        return 0.0
    return math.sqrt(var)


def oracle_readout(
    obs: Observable, pps: PPSPair, pointer: GaussianPointer, g: float, grid: GridSpec = GridSpec()
) -> Readout:
    """Readout obtained by direct numerical integration of the pointer wavefunction."""
    q, psi = postselected_wavefunction(obs, pps, pointer, g, grid)
    step = q[1] - q[0]
    density = np.abs(psi) ** 2
    prob = _integrate(density, step).real
    if not math.isfinite(prob):
        raise NumericalFailure("non-finite norm from quadrature")
    if prob <= _FLOOR:
        raise VanishingPostselection(f"postselection probability {prob:.3e} is below the floor")
    mean_q = _integrate(q * density, step).real / prob
    mean_q2 = _integrate(q * q * density, step).real / prob
    dpsi = _spectral_derivative(psi, step)
    # p = -i d/dq, so <p> = Im <psi|d psi> and <p^2> = <d psi|d psi>
    mean_p = _integrate(np.conj(psi) * dpsi, step).imag / prob
    mean_p2 = _integrate(np.abs(dpsi) ** 2, step).real / prob
    return Readout(
        probability=min(prob, 1.0),
        dp=mean_p,
        dq=mean_q,
        sd_p=_sd(mean_p2 - mean_p**2, "momentum"),
        sd_q=_sd(mean_q2 - mean_q**2, "position"),
    )


def momentum_space_norm(psi: np.ndarray, step: float) -> float:
    """Norm of ``psi`` computed from its discrete Fourier transform (Parseval)."""
    spectrum = np.fft.fft(psi)
    return float((np.abs(spectrum) ** 2).sum() * step / psi.size)


def oracle_g_derivative(
    obs: Observable, pps: PPSPair, pointer: GaussianPointer, g: float, grid: GridSpec = GridSpec()
) -> tuple[float, float]:
    """``(d dp/dg, d dq/dg)`` by finite differences of :func:`oracle_readout`.

    Central differences with step ``h = max(1e-6, 1e-4 g)`` and one Richardson
    step.  When ``g < h`` a forward difference is used instead, accurate to O(h).
    """
    h = max(1e-6, 1e-4 * abs(g))

    def shifts(x):
        r = oracle_readout(obs, pps, pointer, x, grid)
        return np.array([r.dp, r.dq])

    if g < h:
        d = (shifts(g + h) - shifts(g)) / h
    else:
        coarse = (shifts(g + h) - shifts(g - h)) / (2 * h)
        fine = (shifts(g + h / 2) - shifts(g - h / 2)) / h
        d = (4 * fine - coarse) / 3
    return float(d[0]), float(d[1])
