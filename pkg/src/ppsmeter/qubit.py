"""Two-level systems: closed-form readout in Bloch angles and the extremal pointer shifts.

States are parameterized as ``cos(theta/2)|0> + sin(theta/2) exp(i phi)|1>``
with ``|0>``, ``|1>`` the eigenvectors for eigenvalues ``a1`` and ``a2``.
Only the relative phase ``phi1 - phi2`` of the pre/postselected pair enters
any observable quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (
    PROBABILITY_FLOOR,
    GaussianPointer,
    Observable,
    PPSPair,
    Readout,
    postselect_readout,
)
from .errors import DegenerateObservable, VanishingPostselection

TWO_PI = 2.0 * math.pi
_ANGLE_SLACK = 1e-12


@dataclass(frozen=True)
class BlochAngles:
    """Polar angle ``theta`` in [0, pi] and azimuth ``phi``, reduced to [0, 2 pi)."""

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValueError("Bloch angles must be finite")
        if not -_ANGLE_SLACK <= self.theta <= math.pi + _ANGLE_SLACK:
            raise ValueError(f"theta={self.theta!r} outside [0, pi]")
        object.__setattr__(self, "theta", min(max(float(self.theta), 0.0), math.pi))
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)

    def amplitudes(self) -> np.ndarray:
        return np.array(
            [math.cos(self.theta / 2), math.sin(self.theta / 2) * np.exp(1j * self.phi)],
            dtype=complex,
        )


def pps_from_angles(pre: BlochAngles, post: BlochAngles) -> PPSPair:
    return PPSPair(pre.amplitudes(), post.amplitudes())


def _overlap_factor(a1: float, a2: float, delta: float, g: float) -> float:
    """``exp(-g^2 Delta^2 (a1 - a2)^2 / 2)``, the pointer overlap between the two branches."""
    return math.exp(-0.5 * (g * delta * (a1 - a2)) ** 2)


def qubit_norm_factor(a1: float, a2: float, pre: BlochAngles, post: BlochAngles, delta: float, g: float) -> float:
    """``N = 1 + cos t1 cos t2 + sin t1 sin t2 cos(phi1 - phi2) E``; the probability is N/2."""
    e = _overlap_factor(a1, a2, delta, g)
    return (
        1.0
        + math.cos(pre.theta) * math.cos(post.theta)
        + math.sin(pre.theta) * math.sin(post.theta) * math.cos(pre.phi - post.phi) * e
    )


def qubit_readout(
    a1: float, a2: float, pre: BlochAngles, post: BlochAngles, delta: float, g: float
) -> Readout:
    """Closed-form postselected readout for a qubit.

    The shift formulas are symmetric under relabelling the eigenvalues, so
    ``a1 < a2`` is accepted as is.  Spreads come from the general double sums.
    """
    pointer = GaussianPointer(delta)
    e = _overlap_factor(a1, a2, delta, g)
    n = qubit_norm_factor(a1, a2, pre, post, delta, g)
    if n / 2 <= PROBABILITY_FLOOR:
        raise VanishingPostselection(f"postselection probability {n / 2:.3e} is below the floor")
    dp = 0.5 * (a1 + a2) * g + g * (a1 - a2) * (math.cos(pre.theta) + math.cos(post.theta)) / (2 * n)
    dq = (
        g * delta**2 * (a1 - a2) * math.sin(pre.theta) * math.sin(post.theta)
        * math.sin(pre.phi - post.phi) * e / n
    )
    full = postselect_readout(Observable([a1, a2]), pps_from_angles(pre, post), pointer, g)
    return Readout(probability=min(n / 2, 1.0), dp=dp, dq=dq, sd_p=full.sd_p, sd_q=full.sd_q)


@dataclass(frozen=True)
class QubitExtremes:
    """Extremal pointer shifts over all pre/postselected pairs, with the optimal parameters.

    ``t`` denotes ``cos((theta1 + theta2)/2) / cos((theta1 - theta2)/2)``.
    """

    dp_min: float
    dp_max: float
    dq_min: float
    dq_max: float
    t_opt_min: float
    t_opt_max: float
    phi0_for_p: float
    phi0_for_q_min: float
    phi0_for_q_max: float
    M: float
    W: float


class ShiftExtremes(NamedTuple):
    """Minimum and maximum of one shift, with a (pre, post) pair attaining each."""

    min: float
    max: float
    argmin: tuple[BlochAngles, BlochAngles]
    argmax: tuple[BlochAngles, BlochAngles]


def _check_extreme_args(a1: float, a2: float, delta: float, g: float) -> None:
    if a1 == a2:
        raise DegenerateObservable("a1 == a2: the shift is a1*g for every state pair")
    if a1 < a2:
        raise ValueError("order the eigenvalues so that a1 > a2")
    if not (g > 0 and delta > 0):
        raise ValueError("extremes need g > 0 and delta > 0")


def qubit_extremes(a1: float, a2: float, delta: float, g: float) -> QubitExtremes:
    _check_extreme_args(a1, a2, delta, g)
    x = (g * delta * (a1 - a2)) ** 2
    e = math.exp(-x / 2)
    w = -math.expm1(-x / 2)
    m = 1.0 + e
    root = math.sqrt(-math.expm1(-x))  # sqrt(1 - e^2)
    mid = 0.5 * (a1 + a2) * g
    half = 0.5 * (a1 - a2) * g / root
    dq = g * delta**2 * (a1 - a2) * e / root
    t = math.sqrt(w / m)
    return QubitExtremes(
        dp_min=mid - half,
        dp_max=mid + half,
        dq_min=-dq,
        dq_max=dq,
        t_opt_min=-t,
        t_opt_max=t,
        phi0_for_p=math.pi,
        phi0_for_q_min=math.pi + math.acos(e),
        phi0_for_q_max=math.pi - math.acos(e),
        M=m,
        W=w,
    )


def momentum_shift_extremes(a1: float, a2: float, delta: float, g: float) -> ShiftExtremes:
    """Smallest and largest momentum shift over all state pairs.

    Both are reached at a relative phase of pi with ``t = -/+ sqrt(W/M)``;
    the returned pairs take ``theta1 = theta2 = arccos t``.
    """
    ext = qubit_extremes(a1, a2, delta, g)

    def pair(t):
        theta = math.acos(t)
        return BlochAngles(theta, ext.phi0_for_p), BlochAngles(theta, 0.0)

    return ShiftExtremes(ext.dp_min, ext.dp_max, pair(ext.t_opt_min), pair(ext.t_opt_max))


def position_shift_extremes(a1: float, a2: float, delta: float, g: float) -> ShiftExtremes:
    """Smallest and largest position shift over all state pairs.

    Any ``theta1 + theta2 = pi`` works; the returned pairs use pi/2 for both.
    """
    ext = qubit_extremes(a1, a2, delta, g)
    half_pi = math.pi / 2

    def pair(phi0):
        return BlochAngles(half_pi, phi0), BlochAngles(half_pi, 0.0)

    return ShiftExtremes(ext.dq_min, ext.dq_max, pair(ext.phi0_for_q_min), pair(ext.phi0_for_q_max))


def qubit_readout_arrays(a1, a2, theta1, phi1, theta2, phi2, delta: float, g: float) -> dict[str, np.ndarray]:
    """Readout fields for a qubit on broadcast arrays of Bloch angles.

    Written out from the d = 2 double sums with ``gamma_1 = c1 c2`` and
    ``gamma_2 = s1 s2 exp(i (phi1 - phi2))`` (half-angle cosines/sines).
    Points whose probability is at or below the floor are NaN.
    """
    theta1, phi1, theta2, phi2 = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (theta1, phi1, theta2, phi2))
    )
    e = _overlap_factor(a1, a2, delta, g)
    w1 = (np.cos(theta1 / 2) * np.cos(theta2 / 2)) ** 2
    w2 = (np.sin(theta1 / 2) * np.sin(theta2 / 2)) ** 2
    cross = 0.25 * np.sin(theta1) * np.sin(theta2)  # |gamma_1 gamma_2|
    phi0 = phi1 - phi2
    re_x = cross * np.cos(phi0) * e
    im_x = cross * np.sin(phi0) * e
    prob = w1 + w2 + 2 * re_x
    ok = prob > PROBABILITY_FLOOR
    prob = np.where(ok, prob, np.nan)
    dp = 0.5 * g * (2 * a1 * w1 + 2 * a2 * w2 + 2 * re_x * (a1 + a2)) / prob
    dq = g * delta**2 * (a1 - a2) * 2 * im_x / prob
    p2 = 0.25 * g**2 * (4 * a1**2 * w1 + 4 * a2**2 * w2 + 2 * re_x * (a1 + a2) ** 2) / prob + 0.25 / delta**2
    q2 = -(g**2) * delta**4 * 2 * re_x * (a1 - a2) ** 2 / prob + delta**2
    with np.errstate(invalid="ignore"):
        var_p = np.maximum(p2 - dp**2, 0.0)
        var_q = np.maximum(q2 - dq**2, 0.0)
    return {"P": prob, "dp": dp, "dq": dq, "sd_p": np.sqrt(var_p), "sd_q": np.sqrt(var_q)}
