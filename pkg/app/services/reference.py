"""
Analytic step-response references for the model-matching checks
"""
import logging
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.signal import residue

from app.exceptions import DegenerateTimeConstants

logger = logging.getLogger(__name__)

# Time constants closer than this (relative) take the repeated-root branch
DISTINCT_RTOL = 1e-6
# Poles grouped as one repeated pole when this close (relative)
POLE_GROUP_RTOL = 1e-6


def _distinct_coefficients(time_constants):
    """Partial-fraction weights c_i = T_i^(m-1) / prod_{j != i}(T_i - T_j)"""
    m = len(time_constants)
    weights = []
    for i, Ti in enumerate(time_constants):
        denominator = 1.0
        for j, Tj in enumerate(time_constants):
            if j == i:
                continue
            if abs(Ti - Tj) <= DISTINCT_RTOL * max(Ti, Tj):
                raise DegenerateTimeConstants(f"Time constants {Ti} and {Tj} coincide")
            denominator *= Ti - Tj
        weights.append(Ti ** (m - 1) / denominator)
    return weights


def step_by_residues(num, den, amplitude, t):
    """
    Step response of num(s)/den(s) from its partial-fraction expansion

    Handles repeated poles: a pole of multiplicity m contributes
    r_k t^(k-1)/(k-1)! e^(p t) for k = 1..m.
    """
    t = np.asarray(t, dtype=float)
    r, p, k = residue(np.atleast_1d(num), np.polymul(np.atleast_1d(den), [1.0, 0.0]))
    if len(k) and np.any(np.abs(k) > 0):
        raise ValueError('Step response needs a strictly proper model')

    response = np.zeros(t.shape, dtype=complex)
    power = 0
    for idx in range(len(p)):
        if idx and np.isclose(p[idx], p[idx - 1], rtol=POLE_GROUP_RTOL, atol=1e-12):
            power += 1
        else:
            power = 0
        response += r[idx] * t ** power / math.factorial(power) * np.exp(p[idx] * t)
    values = amplitude * response.real
    return values[()] if values.ndim == 0 else values


def analytic_reference(model, amplitude, t):
    """
    Closed-form step response of the model H_m

    For distinct time constants: y/A = 1 - sum_i c_i exp(-t/T_i). Coinciding
    time constants and explicit transfer functions use the residue route.

    Args:
        model: ModelSpec
        amplitude: Step size
        t: Time (scalar or array), seconds since the step

    Returns:
        Step response, same shape as t
    """
    t_arr = np.asarray(t, dtype=float)
    if model.time_constants is not None:
        try:
            weights = _distinct_coefficients(model.time_constants)
        except DegenerateTimeConstants as e:
            logger.debug(f"Repeated-root branch: {e}")
        else:
            decay = sum(c * np.exp(-t_arr / T) for c, T in zip(weights, model.time_constants))
            values = amplitude * (1.0 - decay)
            return values[()] if np.ndim(values) == 0 else values
    return step_by_residues(model.num_coeffs, model.den_coeffs, amplitude, t_arr)


def second_order_reference(lambda01, lambda11, amplitude, t):
    """Step response of lambda01 / (s^2 + lambda11 s + lambda01), the linear-velocity channel"""
    return step_by_residues([lambda01], [1.0, lambda11, lambda01], amplitude, t)


def step_response_ode(model, amplitude, t_eval):
    """
    Step response by high-accuracy integration of the model's canonical form

    Independent of the partial-fraction route; used to cross-check it.
    """
    den = np.trim_zeros(np.asarray(model.den_coeffs, dtype=float), 'f')
    num = np.asarray(model.num_coeffs, dtype=float)
    den_monic = den / den[0]
    num_monic = num / den[0]
    n = len(den_monic) - 1
    padded = np.zeros(n)
    padded[n - len(num_monic):] = num_monic

    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -den_monic[1:][::-1]
    B = np.zeros(n)
    B[-1] = amplitude
    C = padded[::-1]

    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    sol = solve_ivp(lambda _, x: A @ x + B, (0.0, float(t_eval[-1])), np.zeros(n),
                    method='DOP853', t_eval=t_eval, rtol=1e-12, atol=1e-14)
    return C @ sol.y
