"""
Stability service - Delay-dependent stability of the p_a quasi-polynomial

Only the second-order factor s^2 + chi2 s + z chi3 carries the delay, so the
first imaginary-axis crossing of that factor decides stability. The
crossing is computed in closed form; a dense grid sweep confirms it.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from app.exceptions import ShapeError
from app.services.qp_algebra import QuasiPoly, qp_eval

logger = logging.getLogger(__name__)

PA_MONOMIALS = {(3, 0), (2, 0), (1, 0), (1, 1), (0, 1)}
# Relative tolerance when checking that p_a factors as (s + chi1)(...)
SHAPE_RTOL = 1e-9


@dataclass(frozen=True)
class CrossingPoint:
    omega_c: float    # rad/s
    tau_cross: float  # s


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    margin_metric: float  # tau_cross - tau, s
    tau_cross: float


@dataclass(frozen=True)
class SweepResult:
    tau_cross: float
    omega_c: float
    residual: float  # min |p_c2| / chi3 at the located point


def crossing_point(chi2, chi3):
    """
    First imaginary-axis crossing of s^2 + chi2 s + chi3 exp(-s tau)

    Args:
        chi2: 1/s, positive
        chi3: 1/s^2, positive

    Returns:
        CrossingPoint
    """
    if not (chi2 > 0 and chi3 > 0):
        raise ValueError(f"crossing_point needs chi2, chi3 > 0, got {chi2}, {chi3}")
    # omega^2 = (-chi2^2 + sqrt(chi2^4 + 4 chi3^2)) / 2, rationalised to avoid cancellation
    omega_sq = 2.0 * chi3 ** 2 / (chi2 ** 2 + math.sqrt(chi2 ** 4 + 4.0 * chi3 ** 2))
    omega_c = math.sqrt(omega_sq)
    tau_cross = math.atan2(chi2 * omega_c, omega_sq) / omega_c
    return CrossingPoint(omega_c=omega_c, tau_cross=tau_cross)


def routh_cubic(coeffs):
    """Routh-Hurwitz test for a3 s^3 + a2 s^2 + a1 s + a0 (highest power first)"""
    a3, a2, a1, a0 = (float(c) for c in coeffs)
    if a3 < 0:
        a3, a2, a1, a0 = -a3, -a2, -a1, -a0
    return a3 > 0 and a2 > 0 and a1 > 0 and a0 > 0 and a2 * a1 > a3 * a0


def routh_determinant(coeffs):
    a3, a2, a1, a0 = (float(c) for c in coeffs)
    return a2 * a1 - a3 * a0


def rekasius_cubic(chi2, chi3, T):
    """
    Delay-free cubic from s^2 + chi2 s + z chi3 with z -> (1 - sT)/(1 + sT)

    Exact on the imaginary axis; its Routh determinant vanishes at the
    T of the first crossing.
    """
    return np.array([T, 1.0 + T * chi2, chi2 - chi3 * T, chi3])


def pa_chi(pa):
    """
    Recover (chi1, chi2, chi3) from a quasi-polynomial shaped like p_a

    Raises:
        ShapeError: if pa is not c (s + chi1)(s^2 + chi2 s + z chi3)
    """
    if not isinstance(pa, QuasiPoly):
        raise ShapeError(f"Expected a QuasiPoly, got {type(pa).__name__}")
    if pa.deg_s != 3 or pa.deg_z > 1 or not set(pa.coeffs) <= PA_MONOMIALS:
        raise ShapeError(f"Not shaped like p_a: {pa}")
    lead = pa.coefficient(3, 0)
    b1 = pa.coefficient(1, 1) / lead
    b0 = pa.coefficient(0, 1) / lead
    if b1 == 0:
        raise ShapeError('p_a must carry a z*s term')
    chi3 = b1
    chi1 = b0 / b1
    chi2 = pa.coefficient(2, 0) / lead - chi1
    a1 = pa.coefficient(1, 0) / lead
    if not math.isclose(a1, chi1 * chi2, rel_tol=SHAPE_RTOL, abs_tol=SHAPE_RTOL * abs(chi3)):
        raise ShapeError(f"s coefficient {a1!r} is not chi1*chi2 = {chi1 * chi2!r}")
    return chi1, chi2, chi3


def stability_verdict(pa, tau):
    """
    Stability of p_a at a given delay

    Stable at tau = 0 by Routh, then stable exactly while tau is below the
    first crossing of the delayed quadratic. tau == tau_cross counts as
    unstable (marginal).

    Args:
        pa: QuasiPoly shaped like p_a
        tau: Delay in s

    Returns:
        StabilityVerdict
    """
    if tau < 0:
        raise ValueError(f"Delay must be non-negative, got {tau}")
    chi1, chi2, chi3 = pa_chi(pa)
    delay_free = pa.at_z(1.0) / pa.coefficient(3, 0)
    if not routh_cubic(delay_free):
        logger.warning(f"⚠ p_a is unstable already at tau=0")
        return StabilityVerdict(stable=False, margin_metric=-math.inf, tau_cross=0.0)
    crossing = crossing_point(chi2, chi3)
    return StabilityVerdict(
        stable=tau < crossing.tau_cross,
        margin_metric=crossing.tau_cross - tau,
        tau_cross=crossing.tau_cross,
    )


def sweep_crossing(chi2, chi3, omega_points=10_000, tau_steps=1000, tau_span=(0.5, 1.5), chunk=64):
    """
    Locate the first crossing by brute force over an (omega, tau) grid

    omega is log-spaced on [1e-3, 10 chi2]; tau is stepped by tau_cross/tau_steps
    over tau_span times the closed-form estimate. At each tau the minimum of
    |p_c2(j omega, exp(-j omega tau))| over omega is taken; the tau with the
    smallest minimum is the located crossing.

    Returns:
        SweepResult
    """
    estimate = crossing_point(chi2, chi3).tau_cross
    omegas = np.logspace(-3.0, math.log10(10.0 * chi2), omega_points)
    s = 1j * omegas
    p_c2 = QuasiPoly({(2, 0): 1.0, (1, 0): chi2, (0, 1): chi3})
    step = estimate / tau_steps
    n_tau = int(round((tau_span[1] - tau_span[0]) * tau_steps)) + 1
    taus = tau_span[0] * estimate + step * np.arange(n_tau)

    poly_part = s ** 2 + chi2 * s
    best = (math.inf, math.nan, math.nan)
    for start in range(0, n_tau, chunk):
        block = taus[start:start + chunk, None]
        magnitude = np.abs(poly_part[None, :] + chi3 * np.exp(-s[None, :] * block))
        row_min = magnitude.min(axis=1)
        k = int(np.argmin(row_min))
        if row_min[k] < best[0]:
            best = (float(row_min[k]), float(block[k, 0]),
                    float(omegas[int(np.argmin(magnitude[k]))]))

    _, tau_cross, omega_c = best
    logger.debug(f"Grid crossing tau={tau_cross:.6g} s, omega={omega_c:.6g} rad/s")
    residual = abs(qp_eval(p_c2, 1j * omega_c, tau_cross)) / chi3
    return SweepResult(tau_cross=tau_cross, omega_c=omega_c, residual=float(residual))
