"""Signal-to-noise improvements and measurement-sensitivity enhancements from postselection.

Type-I figures charge postselection for the discarded runs (the repetition
count drops from N to N*P); type-II figures do not, which models
experiments limited by detector saturation rather than by source intensity.
Consequently ``type_I = sqrt(P) * type_II`` for both families.

The reference for every ratio is the best no-postselection experiment:
the eigenstate of the largest-magnitude eigenvalue ``a_max``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .core import (
    PROBABILITY_FLOOR,
    GaussianPointer,
    Observable,
    PPSPair,
    no_postselect_shift,
    postselect_readout,
)
from .errors import DegenerateSpread, InsensitivePointer, OutOfRegime
from .stern_gerlach import SGConfig, require_postselection, overlap_factor

TYPE_II_REGIME = 0.05  # largest g*Delta for the small-coupling type-II maximum


@dataclass(frozen=True)
class SNRReport:
    r0: float
    r0_max: float
    rp: float
    rq: float
    ip_1: float
    iq_1: float
    ip_2: float
    iq_2: float
    n: int


@dataclass(frozen=True)
class MSReport:
    dg_opt: float
    dg_p: float
    dg_q: float
    ep_1: float
    eq_1: float
    ep_2: float
    eq_2: float
    n: int


def _check_n(n: int) -> None:
    if int(n) != n or n < 1:
        raise ValueError(f"repetition count must be a positive integer, got {n!r}")


def snr_report(obs: Observable, pps: PPSPair, pointer: GaussianPointer, g: float, n: int = 1) -> SNRReport:
    """SNR with and without postselection and the resulting improvement ratios."""
    _check_n(n)
    if not g > 0:
        raise ValueError("g must be positive")
    r = postselect_readout(obs, pps, pointer, g)
    if r.sd_q <= 0.0:
        raise DegenerateSpread("position spread vanished; position SNR is undefined")
    ref_sd = pointer.sd_p
    signal_max = abs(obs.a_maxabs * g)
    root_n = math.sqrt(n)
    root_np = math.sqrt(n * r.probability)
    r0 = root_n * abs(no_postselect_shift(obs, pps.alpha, g)) / ref_sd
    r0_max = root_n * signal_max / ref_sd
    rp = root_np * abs(r.dp) / r.sd_p
    rq = root_np * abs(r.dq) / r.sd_q
    return SNRReport(
        r0=r0,
        r0_max=r0_max,
        rp=rp,
        rq=rq,
        ip_1=rp / r0_max,
        iq_1=rq / r0_max,
        ip_2=ref_sd * abs(r.dp) / (r.sd_p * signal_max),
        iq_2=ref_sd * abs(r.dq) / (r.sd_q * signal_max),
        n=n,
    )


def shift_g_derivative(obs: Observable, pps: PPSPair, pointer: GaussianPointer, g: float) -> tuple[float, float]:
    """``(d dp/dg, d dq/dg)`` of the exact readout by Richardson-extrapolated central differences."""
    h = max(1e-6, 1e-4 * abs(g))

    def shifts(x):
        r = postselect_readout(obs, pps, pointer, x)
        return np.array([r.dp, r.dq])

    if g < h:
        d = (shifts(g + h) - shifts(g)) / h
    else:
        coarse = (shifts(g + h) - shifts(g - h)) / (2 * h)
        fine = (shifts(g + h / 2) - shifts(g - h / 2)) / h
        d = (4 * fine - coarse) / 3
    return float(d[0]), float(d[1])


def ms_report(
    obs: Observable,
    pps: PPSPair,
    pointer: GaussianPointer,
    g: float,
    n: int = 1,
    dshift_dg: tuple[float, float] | None = None,
) -> MSReport:
    """Estimation error on g from each pointer channel, and the enhancement ratios.

    ``dshift_dg`` is ``(d dp/dg, d dq/dg)``; numerical derivatives of the
    exact readout are used when it is omitted.  A channel whose shift does
    not respond to g gets an infinite error and zero enhancement; if neither
    channel responds :class:`InsensitivePointer` is raised.
    """
    _check_n(n)
    r = postselect_readout(obs, pps, pointer, g)
    if dshift_dg is None:
        dshift_dg = shift_g_derivative(obs, pps, pointer, g)
    dpdg, dqdg = (abs(float(v)) for v in dshift_dg)
    if dpdg == 0.0 and dqdg == 0.0:
        raise InsensitivePointer("neither pointer shift depends on g")
    a_max = abs(obs.a_maxabs)
    ref_sd = pointer.sd_p
    dg_opt = ref_sd / (a_max * math.sqrt(n))
    root_np = math.sqrt(n * r.probability)

    def channel(slope, spread):
        if slope == 0.0:
            return math.inf, 0.0, 0.0
        if spread <= 0.0:
            raise DegenerateSpread("pointer spread vanished; sensitivity is undefined")
        dg = spread / (slope * root_np)
        return dg, dg_opt / dg, ref_sd * slope / (a_max * spread)

    dg_p, ep_1, ep_2 = channel(dpdg, r.sd_p)
    dg_q, eq_1, eq_2 = channel(dqdg, r.sd_q)
    return MSReport(dg_opt=dg_opt, dg_p=dg_p, dg_q=dg_q, ep_1=ep_1, eq_1=eq_1, ep_2=ep_2, eq_2=eq_2, n=n)


def sg_metric_arrays(theta, phi, delta: float, g: float) -> dict[str, np.ndarray]:
    """All eight Stern-Gerlach SNR and MS ratios on broadcast angle arrays (NaN where K vanishes)."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    e = overlap_factor(delta, g)
    s, c = np.sin(theta), np.cos(theta)
    cphi = np.cos(phi)
    k = 1.0 + s * cphi * e
    k = np.where(k > PROBABILITY_FLOOR, k, np.nan)
    c4 = 4.0 * (delta * g) ** 2
    p_den = k**2 + c4 * (s * s + s * cphi * e)
    z_den = k**2 - c4 * (s * cphi * e + s * s * e * e)
    with np.errstate(invalid="ignore"):
        ip_2 = np.abs(c) / np.sqrt(p_den)
        iz_2 = np.abs(s * np.sin(phi) * e) / np.sqrt(z_den)
        ip_1 = np.abs(c) * np.sqrt(k) / np.sqrt(2 * k**2 + 2 * c4 * (s * s + s * cphi * e))
        iz_1 = np.abs(s * np.sin(phi) * e) * np.sqrt(k) / np.sqrt(2 * k**2 - 2 * c4 * (s * cphi * e + s * s * e * e))
        fp = np.abs(1.0 + c4 - c4 / k)
        fz = np.abs(1.0 - c4 / k)
    return {
        "ip_1": ip_1,
        "iz_1": iz_1,
        "ip_2": ip_2,
        "iz_2": iz_2,
        "ep_1": fp * ip_1,
        "ez_1": fz * iz_1,
        "ep_2": fp * ip_2,
        "ez_2": fz * iz_2,
        "prefactor_p": fp,
        "prefactor_z": fz,
    }


def _sg_scalar(cfg: SGConfig, keys) -> tuple[float, ...]:
    require_postselection(cfg)
    out = sg_metric_arrays(cfg.theta, cfg.phi, cfg.delta, cfg.g)
    return tuple(float(out[key]) for key in keys)


def sg_snr_improvements(cfg: SGConfig) -> tuple[float, float, float, float]:
    """``(ip_1, iz_1, ip_2, iz_2)`` for the Stern-Gerlach configuration."""
    return _sg_scalar(cfg, ("ip_1", "iz_1", "ip_2", "iz_2"))


def sg_ms_enhancements(cfg: SGConfig) -> tuple[float, float, float, float]:
    """``(ep_1, ez_1, ep_2, ez_2)`` for the Stern-Gerlach configuration."""
    return _sg_scalar(cfg, ("ep_1", "ez_1", "ep_2", "ez_2"))


class TypeIIMax(NamedTuple):
    i_max: float
    theta_star: float
    phi_star: float
    scan_max: float
    scan_theta: float
    scan_phi: float


def sg_snr_typeII_max(delta: float, g: float) -> TypeIIMax:
    """Small-coupling maximum of the type-II momentum SNR improvement.

    Returns the leading-order prediction ``sqrt(sqrt(3)/6) / (g Delta)`` at
    ``sin(theta) = 1 - 2 sqrt(3) Delta^2 g^2``, ``phi = pi``, next to the
    maximum of the exact expression found numerically.
    """
    if not (delta > 0 and g > 0):
        raise ValueError("delta and g must be positive")
    gd = g * delta
    if gd > TYPE_II_REGIME:
        raise OutOfRegime(f"g*Delta = {gd:.3g} exceeds {TYPE_II_REGIME}; the expansion does not apply")
    i_max = math.sqrt(math.sqrt(3) / 6) / gd
    theta_star = math.asin(1.0 - 2.0 * math.sqrt(3) * gd**2)

    def neg(x):
        return -float(sg_metric_arrays(x[0], x[1], delta, g)["ip_2"])

    thetas = np.linspace(0.0, math.pi / 2, 20001)
    seed = thetas[np.nanargmax(sg_metric_arrays(thetas, math.pi, delta, g)["ip_2"])]
    res = optimize.minimize(
        neg, [seed, math.pi], method="Nelder-Mead",
        bounds=[(0.0, math.pi), (0.0, 2 * math.pi)],
        options={"xatol": 1e-12, "fatol": 1e-14, "maxfev": 20000},
    )
    return TypeIIMax(i_max, theta_star, math.pi, -float(res.fun), float(res.x[0]), float(res.x[1]))


def relative_system_error(shift: float, delta_sys: float) -> float:
    """Systematic error relative to the measured pointer shift."""
    if shift == 0:
        raise InsensitivePointer("zero shift: the relative systematic error is unbounded")
    return delta_sys / abs(shift)
