"""Exact pointer statistics for a pre/postselected measurement with a Gaussian pointer.

The system observable ``A`` (eigenvalues ``a_m``) couples impulsively to the
pointer position ``q`` with strength ``g``.  After postselection the pointer
is left in the unnormalized state ``sum_m gamma_m exp(i g a_m q) Phi(q)`` with
``gamma_m = alpha_m * conj(beta_m)``.  Every conditional moment of ``p`` and
``q`` reduces to a double sum over ``(m, n)`` weighted by the Gaussian overlap
``exp(-Delta^2 g^2 (a_m - a_n)^2 / 2)``; this module evaluates those sums
without any weak- or strong-coupling approximation, and also offers the
weak-limit and strong-limit shifts for comparison.

Units: hbar = 1, ``Delta`` is a length, momenta are inverse lengths and
``g`` carries momentum units once the observable is normalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DegenerateObservable,
    NumericalFailure,
    OrthogonalPPS,
    VanishingPostselection,
)

#: Conditional moments are only reported when the postselection probability exceeds this.
PROBABILITY_FLOOR = 1e-14
#: Eigenvalues closer than this belong to the same degenerate class.
DEGENERACY_TOL = 1e-12
#: Variances in [-VARIANCE_CLAMP, 0) are rounding noise and are clamped to zero.
VARIANCE_CLAMP = 1e-12
NORM_TOL = 1e-12
# above this dimension the d*d double sums use compensated accumulation
_COMPENSATED_DIM = 32


@dataclass(frozen=True, eq=False)
class Observable:
    """Real spectrum of the measured observable, in its own eigenbasis.

    Repeated values denote degeneracy.  Use :func:`normalize_observable`
    to rescale a raw spectrum to unit norm.
    """

    eigenvalues: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.eigenvalues, dtype=float).reshape(-1)
        if a.size == 0:
            raise ValueError("observable needs at least one eigenvalue")
        if not np.all(np.isfinite(a)):
            raise ValueError("eigenvalues must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "eigenvalues", a)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def a_min(self) -> float:
        return float(self.eigenvalues.min())

    @property
    def a_max(self) -> float:
        return float(self.eigenvalues.max())

    @property
    def a_maxabs(self) -> float:
        """Eigenvalue of largest magnitude; ties go to the positive value."""
        a = self.eigenvalues
        m = np.abs(a).max()
        return float(m) if np.any(a == m) else float(-m)

    def is_normalized(self) -> bool:
        return abs(np.abs(self.eigenvalues).max() - 1.0) <= 1e-15

    def classes(self, tol: float = DEGENERACY_TOL) -> list[np.ndarray]:
        """Index groups of (numerically) equal eigenvalues, in ascending order of value."""
        order = np.argsort(self.eigenvalues, kind="stable")
        groups = [[order[0]]]
        for prev, idx in zip(order[:-1], order[1:]):
            if self.eigenvalues[idx] - self.eigenvalues[prev] <= tol:
                groups[-1].append(idx)
            else:
                groups.append([idx])
        return [np.array(g, dtype=int) for g in groups]

    def negated(self) -> "Observable":
        return Observable(-self.eigenvalues)


def _as_state(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=complex).reshape(-1)
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be a nonempty finite vector")
    norm = float(np.vdot(arr, arr).real)
    if abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"{name} is not normalized (|{name}|^2 = {norm!r})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PPSPair:
    """Pre- and postselected amplitudes ``alpha_m``, ``beta_m`` in the observable eigenbasis."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = _as_state(self.alpha, "alpha")
        beta = _as_state(self.beta, "beta")
        if alpha.size != beta.size:
            raise ValueError(f"alpha has {alpha.size} components, beta has {beta.size}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def dim(self) -> int:
        return self.alpha.size

    @property
    def overlap(self) -> complex:
        """<psi_f|psi_i>."""
        return complex(np.vdot(self.beta, self.alpha))

    def swapped(self) -> "PPSPair":
        return PPSPair(self.beta, self.alpha)


@dataclass(frozen=True)
class GaussianPointer:
    """Gaussian pointer centred at q = p = 0 with position spread ``delta``."""

    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"pointer spread must be positive and finite, got {self.delta!r}")

    @property
    def sd_q(self) -> float:
        return float(self.delta)

    @property
    def sd_p(self) -> float:
        return 0.5 / self.delta


@dataclass(frozen=True)
class Readout:
    """Postselection probability and conditional pointer statistics."""

    probability: float
    dp: float
    dq: float
    sd_p: float
    sd_q: float

    def as_dict(self) -> dict[str, float]:
        return {
            "P": self.probability,
            "dp": self.dp,
            "dq": self.dq,
            "sd_p": self.sd_p,
            "sd_q": self.sd_q,
        }


class MomentSums(NamedTuple):
    """Raw complex double sums behind every readout field.

    ``norm``   = sum gamma_m gamma_n* E_mn                  (= P)
    ``p1``     = sum gamma_m gamma_n* (a_m + a_n) E_mn
    ``q1``     = sum gamma_m gamma_n* (a_m - a_n) E_mn      (purely imaginary)
    ``p2``     = sum gamma_m gamma_n* (a_m + a_n)^2 E_mn
    ``q2``     = sum gamma_m gamma_n* (a_m - a_n)^2 E_mn
    """

    norm: complex
    p1: complex
    q1: complex
    p2: complex
    q2: complex


def normalize_observable(raw_eigenvalues: Sequence[float], g_raw: float) -> tuple[Observable, float]:
    """Rescale a spectrum to unit norm, moving the scale into ``g``.

    The products ``a_m * g`` are unchanged.
    """
    raw = np.asarray(raw_eigenvalues, dtype=float).reshape(-1)
    if raw.size == 0 or not np.all(np.isfinite(raw)):
        raise ValueError("raw eigenvalues must be a nonempty finite list")
    if not math.isfinite(g_raw):
        raise ValueError("g must be finite")
    scale = float(np.abs(raw).max())
    if scale == 0.0:
        raise DegenerateObservable("all eigenvalues are zero; the coupling has no effect")
    return Observable(raw / scale), float(g_raw) * scale


def gamma_weights(pps: PPSPair) -> np.ndarray:
    """Componentwise ``alpha_m * conj(beta_m)``; these sum to <psi_f|psi_i>."""
    return pps.alpha * np.conj(pps.beta)


def _check_dims(obs: Observable, pps: PPSPair) -> None:
    if obs.dim != pps.dim:
        raise ValueError(f"observable has dimension {obs.dim}, states have {pps.dim}")


def _total(terms: np.ndarray) -> complex:
    if terms.size <= _COMPENSATED_DIM**2:
        return complex(terms.sum())
    flat = terms.ravel()
    return complex(math.fsum(flat.real), math.fsum(flat.imag))


def _single_total(terms: np.ndarray) -> complex:
    # correctly rounded, so an exactly cancelling sum comes out as zero
    return complex(math.fsum(terms.real), math.fsum(terms.imag))


def _canonical(obs: Observable, g: float) -> tuple[Observable, float]:
    if not math.isfinite(g):
        raise ValueError("g must be finite")
    if g < 0:
        return obs.negated(), -g
    return obs, float(g)


def moment_sums(obs: Observable, pps: PPSPair, pointer: GaussianPointer, g: float) -> MomentSums:
    """Evaluate the five double sums over (m, n).

    The Gaussian overlap is split as ``1 + expm1(...)``.  The g = 0 part of
    each sum factorizes into products of ``G_k = sum_m gamma_m a_m^k``, so it
    is formed from those single sums; near-orthogonal pairs then keep their
    precision instead of cancelling O(|gamma|^2) terms.  The remainder keeps
    full relative precision at weak coupling.
    """
    _check_dims(obs, pps)
    obs, g = _canonical(obs, g)
    a = obs.eigenvalues
    gamma = gamma_weights(pps)
    g0, g1, g2 = (_single_total(gamma * a**k) for k in range(3))
    w = gamma[:, None] * np.conj(gamma)[None, :]
    diff = a[:, None] - a[None, :]
    plus = a[:, None] + a[None, :]
    em1 = np.expm1(-0.5 * (pointer.delta * g * diff) ** 2)

    def rest(f):
        wf = w * em1
        return _total(wf if f is None else wf * f)

    c0, c1, c2 = g0.conjugate(), g1.conjugate(), g2.conjugate()
    cross = 2.0 * (g1 * c1).real
    return MomentSums(
        complex((g0 * c0).real) + rest(None),
        g1 * c0 + g0 * c1 + rest(plus),
        g1 * c0 - g0 * c1 + rest(diff),
        g2 * c0 + g0 * c2 + cross + rest(plus**2),
        g2 * c0 + g0 * c2 - cross + rest(diff**2),
    )


def _spread(variance: float, label: str) -> float:
    if not math.isfinite(variance):
        raise NumericalFailure(f"non-finite {label} variance")
    if variance < 0:
        if variance < -VARIANCE_CLAMP:
            raise NumericalFailure(f"{label} variance {variance!r} is negative beyond rounding")
        return 0.0
    return math.sqrt(variance)


def postselect_readout(obs: Observable, pps: PPSPair, pointer: GaussianPointer, g: float) -> Readout:
    """Exact postselected readout for any coupling strength.

    Raises
    ------
    VanishingPostselection
        If the postselection probability is at or below ``PROBABILITY_FLOOR``.
    NumericalFailure
        If an intermediate is non-finite or a variance is materially negative.
    """
    s = moment_sums(obs, pps, pointer, g)
    # a negative g was absorbed into the sums by negating the spectrum
    g = abs(g)
    delta = pointer.delta
    prob = s.norm.real
    if not math.isfinite(prob):
        raise NumericalFailure("non-finite postselection probability")
    prob = min(max(prob, 0.0), 1.0)
    if prob <= PROBABILITY_FLOOR:
        raise VanishingPostselection(f"postselection probability {prob:.3e} is below the floor")
    dp = 0.5 * g * s.p1.real / prob
    dq = -g * delta**2 * s.q1.imag / prob
    mean_p2 = 0.25 * g**2 * s.p2.real / prob + 0.25 / delta**2
    mean_q2 = -(g**2) * delta**4 * s.q2.real / prob + delta**2
    values = (dp, dq, mean_p2, mean_q2)
    if not all(math.isfinite(v) for v in values):
        raise NumericalFailure("non-finite pointer moment")
    return Readout(
        probability=prob,
        dp=dp,
        dq=dq,
        sd_p=_spread(mean_p2 - dp * dp, "momentum"),
        sd_q=_spread(mean_q2 - dq * dq, "position"),
    )


def weak_value(obs: Observable, pps: PPSPair) -> complex:
    """``<psi_f|A|psi_i> / <psi_f|psi_i>``."""
    _check_dims(obs, pps)
    gamma = gamma_weights(pps)
    denom = complex(gamma.sum())
    if abs(denom) <= PROBABILITY_FLOOR:
        raise OrthogonalPPS("pre- and postselected states are orthogonal")
    return complex((gamma * obs.eigenvalues).sum()) / denom


def weak_limit_readout(obs: Observable, pps: PPSPair, pointer: GaussianPointer, g: float) -> tuple[float, float]:
    """First-order (weak value) momentum and position shifts."""
    aw = weak_value(obs, pps)
    return g * aw.real, -2.0 * g * pointer.delta**2 * aw.imag


def weak_validity_margin(
    obs: Observable, pps: PPSPair, pointer: GaussianPointer, g: float, n_max: int
) -> list[float]:
    """Size of the order-n terms dropped by the weak-value expansion, n = 2..n_max.

    Each margin is ``|(g q)^n <psi_f|A^n|psi_i>| / |<psi_f|psi_i>|`` with the
    pointer length scale fixed at ``q = Delta``.  Margins far below one mean
    the weak-value prediction can be trusted.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    _check_dims(obs, pps)
    gamma = gamma_weights(pps)
    denom = abs(complex(gamma.sum()))
    if denom <= PROBABILITY_FLOOR:
        raise OrthogonalPPS("pre- and postselected states are orthogonal")
    scale = abs(g) * pointer.delta
    a = obs.eigenvalues
    return [scale**n * abs(complex((gamma * a**n).sum())) / denom for n in range(2, n_max + 1)]


def strong_limit_shift(obs: Observable, pps: PPSPair, g: float) -> float:
    """Momentum shift when every distinct pair of eigenvalues is fully resolved.

    Amplitudes within a degenerate class add coherently, distinct classes
    add incoherently, so the result is a weighted mean of ``a_s * g`` and
    lies between ``a_min * g`` and ``a_max * g``.
    """
    _check_dims(obs, pps)
    gamma = gamma_weights(pps)
    weights, values = [], []
    for idx in obs.classes():
        weights.append(abs(complex(gamma[idx].sum())) ** 2)
        values.append(float(obs.eigenvalues[idx].mean()))
    weights = np.array(weights)
    total = weights.sum()
    if total <= PROBABILITY_FLOOR:
        raise VanishingPostselection("every eigenvalue class has vanishing weight")
    return float(g * (weights * np.array(values)).sum() / total)


def no_postselect_shift(obs: Observable, psi_i, g: float) -> float:
    """Momentum shift of the pointer when no postselection is performed."""
    alpha = _as_state(psi_i, "psi_i")
    if alpha.size != obs.dim:
        raise ValueError(f"observable has dimension {obs.dim}, state has {alpha.size}")
    return float(g * (np.abs(alpha) ** 2 * obs.eigenvalues).sum())
