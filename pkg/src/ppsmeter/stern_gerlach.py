"""Stern-Gerlach configuration: spin-1/2 along n(theta, phi), sigma_z coupled to z, postselected on +x.

This is the qubit case with ``a = (1, -1)``, preselection ``(theta, phi)`` and
postselection fixed at ``(pi/2, 0)``.  The transverse beam profile factors
out of every z-moment and is ignored.

The ``sg_*_arrays`` kernels broadcast over numpy arrays of angles and mark
points with a vanishing postselection probability as NaN; the scalar
functions wrap them and raise instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import PROBABILITY_FLOOR, VARIANCE_CLAMP
from .errors import NumericalFailure, VanishingPostselection


@dataclass(frozen=True)
class SGConfig:
    """Preselection angles, pointer spread ``delta`` (z) and coupling ``g = mu dB_z/dz``.

    ``g = 0`` is accepted so that the no-coupling limit can be evaluated.
    """

    theta: float
    phi: float
    delta: float
    g: float

    def __post_init__(self):
        for name in ("theta", "phi", "delta", "g"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta={self.theta!r} outside [0, pi]")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.g < 0:
            raise ValueError("g must be non-negative")


class SGReadout(NamedTuple):
    dp_z: float
    dz: float
    P: float
    sd_pz: float
    sd_z: float


@dataclass(frozen=True)
class SGMax:
    """Closed-form maxima of both shifts, the angles attaining the one requested, and their probability."""

    dp_max: float
    dz_max: float
    theta_opt: float
    phi_opt: float
    p_max: float


def overlap_factor(delta, g):
    """``exp(-2 Delta^2 g^2)``."""
    return np.exp(-2.0 * (delta * g) ** 2)


def k_factor(theta, phi, delta, g):
    """``K = 1 + sin(theta) cos(phi) exp(-2 Delta^2 g^2)``; the probability is K/2."""
    return 1.0 + np.sin(theta) * np.cos(phi) * overlap_factor(delta, g)


def _clamped_sqrt(var):
    var = np.asarray(var, dtype=float)
    bad = var < -VARIANCE_CLAMP
    if np.any(bad):
        raise NumericalFailure("negative variance beyond rounding in Stern-Gerlach spread")
    return np.sqrt(np.where(var < 0, 0.0, var))


def sg_readout_arrays(theta, phi, delta: float, g: float) -> dict[str, np.ndarray]:
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    e = overlap_factor(delta, g)
    s, c = np.sin(theta), np.cos(theta)
    k = 1.0 + s * np.cos(phi) * e
    ok = k > PROBABILITY_FLOOR
    k = np.where(ok, k, np.nan)
    var_p = 0.25 / delta**2 + g**2 * (s * s + s * np.cos(phi) * e) / k**2
    var_z = delta**2 - 4 * g**2 * delta**4 * (s * np.cos(phi) + s * s * e) * e / k**2
    with np.errstate(invalid="ignore"):
        return {
            "dp": g * c / k,
            "dz": 2 * g * delta**2 * s * np.sin(phi) * e / k,
            "P": k / 2,
            "sd_p": _clamped_sqrt(np.where(ok, var_p, 0.0)) + np.where(ok, 0.0, np.nan),
            "sd_z": _clamped_sqrt(np.where(ok, var_z, 0.0)) + np.where(ok, 0.0, np.nan),
        }


def require_postselection(cfg: SGConfig) -> float:
    k = float(k_factor(cfg.theta, cfg.phi, cfg.delta, cfg.g))
    if k <= PROBABILITY_FLOOR:
        raise VanishingPostselection(f"K = {k:.3e}: postselection probability vanishes")
    return k


def sg_readout(cfg: SGConfig) -> SGReadout:
    require_postselection(cfg)
    out = sg_readout_arrays(cfg.theta, cfg.phi, cfg.delta, cfg.g)
    return SGReadout(*(float(out[key]) for key in ("dp", "dz", "P", "sd_p", "sd_z")))


def sg_shift_derivatives(cfg: SGConfig) -> tuple[float, float]:
    """Analytic ``(d dp_z/dg, d dz/dg)`` at fixed angles."""
    k = require_postselection(cfg)
    e = float(overlap_factor(cfg.delta, cfg.g))
    c4 = 4.0 * (cfg.delta * cfg.g) ** 2
    dpdg = math.cos(cfg.theta) / k * (1.0 + c4 - c4 / k)
    dzdg = 2 * cfg.delta**2 * math.sin(cfg.theta) * math.sin(cfg.phi) * e / k * (1.0 - c4 / k)
    return dpdg, dzdg


def sg_max_probability(delta: float, g: float) -> float:
    """``(1 - exp(-4 Delta^2 g^2)) / 2``, the probability at either optimum."""
    return -0.5 * math.expm1(-4.0 * (delta * g) ** 2)


def _max_shifts(delta: float, g: float) -> tuple[float, float, float]:
    if not (delta > 0 and g > 0):
        raise ValueError("maximal shifts need delta > 0 and g > 0")
    root = math.sqrt(-math.expm1(-4.0 * (delta * g) ** 2))
    e = math.exp(-2.0 * (delta * g) ** 2)
    return g / root, 2 * g * delta**2 * e / root, e


def sg_momentum_max(delta: float, g: float) -> SGMax:
    """Largest momentum shift; attained at ``theta = arcsin exp(-2 Delta^2 g^2)``, ``phi = pi``."""
    dp_max, dz_max, e = _max_shifts(delta, g)
    return SGMax(dp_max, dz_max, math.asin(e), math.pi, sg_max_probability(delta, g))


def sg_position_max(delta: float, g: float) -> SGMax:
    """Largest position shift; attained at ``theta = pi/2``, ``phi = pi - arccos exp(-2 Delta^2 g^2)``."""
    dp_max, dz_max, e = _max_shifts(delta, g)
    return SGMax(dp_max, dz_max, math.pi / 2, math.pi - math.acos(e), sg_max_probability(delta, g))
