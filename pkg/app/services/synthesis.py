"""
Synthesis service - Third-layer model-matching controller design

Maps the free parameters (chi1, chi2, chi3, k2) to every gain of the
preinstalled controller and the third layer, checks the stability
constraints, builds the characteristic quasi-polynomial, the delay bound
and the exact-model-matching precompensator G(s, z).
"""
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from config import Config
from app.exceptions import (
    ConstraintViolation,
    DegenerateConfig,
    GainInconsistency,
    NotProper,
    UnstableModel,
)
from app.services.qp_algebra import QuasiPoly, RationalTF, qp_mul, tf_properness

logger = logging.getLogger(__name__)

# Relative tolerance for the chi1 root-exclusion constraint
ROOT_EXCLUSION_RTOL = 1e-9
# Model poles must sit left of this abscissa
MODEL_STABILITY_MARGIN = -1e-9
# Two-route inner-loop coefficient comparison, in units in the last place
INNER_TF_ULPS = 2


@dataclass(frozen=True)
class ChiParams:
    """Free design parameters: chi1 [1/s], chi2 [1/s], chi3 [1/s^2], k2 [s]"""
    chi1: float
    chi2: float
    chi3: float
    k2: float


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    passed: bool
    margin: float
    detail: str


@dataclass(frozen=True)
class ConstraintReport:
    checks: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    def as_dict(self):
        return {
            'passed': self.passed,
            'checks': [asdict(c) for c in self.checks],
        }


@dataclass(frozen=True)
class GainSet:
    """All gains of the two preinstalled layers and the static third layer"""
    mu0: float       # 1/s
    eta0: float      # 1/s^2
    eta1: float      # 1/s
    kappa: float
    k1: float
    k2: float        # s
    lambda02: float  # 1/s^2
    lambda12: float  # 1/s
    rho0: float
    rho1: float      # s
    lambda01: float  # 1/s^2
    lambda11: float  # 1/s

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DelayMargin:
    T_c: float      # s
    tau_max: float  # s


class ModelSpec:
    """
    Desired closed-loop model H_m(s)

    Either an all-pole cascade of first-order lags with unity DC gain, or an
    explicit s-only transfer function.
    """

    __slots__ = ('time_constants', 'tf')

    def __init__(self, time_constants=None, tf=None):
        if (time_constants is None) == (tf is None):
            raise ValueError('ModelSpec needs either time constants or a transfer function')
        if time_constants is not None:
            time_constants = tuple(float(T) for T in time_constants)
            if not time_constants:
                raise ValueError('At least one time constant is required')
            bad = [T for T in time_constants if not T > 0]
            if bad:
                raise ValueError(f"Time constants must be positive, got {bad}")
            den = np.array([1.0])
            for T in time_constants:
                den = np.polymul(den, [T, 1.0])
            tf = RationalTF.from_s_coeffs([1.0], den)
        elif not tf.is_delay_free:
            raise ValueError('Model transfer function must not depend on z')
        object.__setattr__(self, 'time_constants', time_constants)
        object.__setattr__(self, 'tf', tf)

    def __setattr__(self, name, value):
        raise AttributeError('ModelSpec is immutable')

    @classmethod
    def from_time_constants(cls, *time_constants):
        return cls(time_constants=time_constants)

    @classmethod
    def from_tf(cls, tf):
        return cls(tf=tf)

    @property
    def num_coeffs(self):
        return self.tf.num.z_slice(0)

    @property
    def den_coeffs(self):
        return self.tf.den.z_slice(0)

    @property
    def dc_gain(self):
        return self.tf.num.coefficient(0) / self.tf.den.coefficient(0)

    def poles(self):
        return np.roots(np.trim_zeros(self.den_coeffs, 'f'))

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return self.time_constants == other.time_constants and self.tf == other.tf

    def __hash__(self):
        return hash((self.time_constants, self.tf))

    def __reduce__(self):
        if self.time_constants is not None:
            return (ModelSpec, (self.time_constants,))
        return (ModelSpec, (None, self.tf))

    def __repr__(self):
        if self.time_constants is not None:
            return f"ModelSpec(time_constants={self.time_constants})"
        return f"ModelSpec(tf={self.tf!r})"


def validate_chi(p):
    """
    Evaluate every design constraint and report margins

    Args:
        p: ChiParams

    Returns:
        ConstraintReport; failures are reported, never raised
    """
    checks = [
        ConstraintCheck('chi1_positive', p.chi1 > 0, p.chi1, 'chi1 > 0'),
        ConstraintCheck('chi2_positive', p.chi2 > 0, p.chi2, 'chi2 > 0'),
        ConstraintCheck('chi3_positive', p.chi3 > 0, p.chi3, 'chi3 > 0'),
    ]

    quarter = p.chi2 ** 2 / 4.0
    checks.append(ConstraintCheck(
        'chi3_below_quarter_chi2_squared', p.chi3 < quarter, quarter - p.chi3,
        'chi3 < chi2^2/4'))

    disc = p.chi2 ** 2 - 4.0 * p.chi3
    if disc >= 0:
        root = math.sqrt(disc)
        roots = ((p.chi2 + root) / 2.0, (p.chi2 - root) / 2.0)
        margin = min(abs(p.chi1 - r) / max(abs(r), abs(p.chi1), 1e-300) for r in roots)
        passed = margin > ROOT_EXCLUSION_RTOL
    else:
        # Complex roots can never equal a real chi1
        margin = math.inf
        passed = True
    checks.append(ConstraintCheck(
        'chi1_not_quadratic_root', passed, margin,
        'chi1 != (chi2 +/- sqrt(chi2^2 - 4 chi3))/2'))

    k2_margin = abs(1.0 - p.k2 * p.chi1)
    checks.append(ConstraintCheck('k2_chi1_not_one', k2_margin > 0, k2_margin, 'k2*chi1 != 1'))

    report = ConstraintReport(tuple(checks))
    if not report.passed:
        logger.warning(f"⚠ Constraint check failed: {[c.name for c in report.failures]}")
    return report


def _require_valid(p):
    report = validate_chi(p)
    if not report.passed:
        raise ConstraintViolation(report)
    return report


def derive_gains(p, lambda01=None, lambda11=None):
    """
    Derive every controller gain from the design parameters

    Args:
        p: ChiParams (must pass validate_chi)
        lambda01: Linear-velocity channel gain [1/s^2], Config default if None
        lambda11: Linear-velocity channel gain [1/s], Config default if None

    Returns:
        GainSet
    """
    _require_valid(p)
    lambda01 = Config.DEFAULT_LAMBDA01 if lambda01 is None else float(lambda01)
    lambda11 = Config.DEFAULT_LAMBDA11 if lambda11 is None else float(lambda11)
    if not (lambda01 > 0 and lambda11 > 0):
        raise DegenerateConfig(
            f"lambda01 and lambda11 must be positive, got {lambda01}, {lambda11}")

    mu0 = p.chi1
    eta0 = p.chi3 / (1.0 - p.k2 * p.chi1)
    eta1 = p.chi2
    return GainSet(
        mu0=mu0,
        eta0=eta0,
        eta1=eta1,
        kappa=eta0 / eta1,
        k1=p.k2 * mu0,
        k2=p.k2,
        lambda02=eta1 * mu0,
        lambda12=eta1 + mu0,
        rho0=eta0 / eta1,
        rho1=eta0 / (eta1 * mu0),
        lambda01=lambda01,
        lambda11=lambda11,
    )


def assemble_pa(p):
    """Characteristic quasi-polynomial p_a = (s + chi1)(s^2 + chi2 s + z chi3)"""
    _require_valid(p)
    first = QuasiPoly({(1, 0): 1.0, (0, 0): p.chi1})
    second = QuasiPoly({(2, 0): 1.0, (1, 0): p.chi2, (0, 1): p.chi3})
    return qp_mul(first, second)


def pa_from_gains(g):
    """
    Characteristic quasi-polynomial for static k1, k2 before the chi map

    s^3 + (eta1 + mu0) s^2 + [eta1 mu0 + z eta0 (1 - k2 mu0)] s + z (1 - k1) eta0 mu0
    """
    return QuasiPoly({
        (3, 0): 1.0,
        (2, 0): g.eta1 + g.mu0,
        (1, 0): g.eta1 * g.mu0,
        (1, 1): g.eta0 * (1.0 - g.k2 * g.mu0),
        (0, 1): (1.0 - g.k1) * g.eta0 * g.mu0,
    })


def compute_tau_max(p):
    """
    Delay bound below which p_a is stable

    Returns:
        DelayMargin with T_c and tau_max in seconds
    """
    _require_valid(p)
    chi2, chi3 = p.chi2, p.chi3
    T_c = (-1.0 / chi2 + 0.5 * chi2 / chi3
           + 0.5 * math.sqrt(4.0 / chi2 ** 2 + chi2 ** 2 / chi3 ** 2))
    omega = math.sqrt(chi3 / (1.0 + T_c * chi2))
    tau_max = 2.0 * math.atan(T_c * omega) / omega
    logger.debug(f"Delay margin T_c={T_c:.6g} s, tau_max={tau_max:.6g} s")
    return DelayMargin(T_c=T_c, tau_max=tau_max)


def check_model_stable(model):
    """Raise UnstableModel unless every pole of H_m is strictly in the left half-plane"""
    poles = model.poles()
    unstable = [complex(pole) for pole in poles if pole.real >= MODEL_STABILITY_MARGIN]
    if unstable:
        raise UnstableModel(f"Model has poles in the closed right half-plane: {unstable}")
    return poles


def build_precompensator(p, model):
    """
    Exact-model-matching precompensator G(s, z) = (1 - k2 chi1)/(chi1 chi3) p_a H_m

    Args:
        p: ChiParams
        model: ModelSpec

    Returns:
        RationalTF G
    """
    _require_valid(p)
    properness = tf_properness(model.tf)
    if not properness.precompensator_ok:
        raise NotProper(
            f"Model needs n_d >= n_n + 3 for a proper precompensator "
            f"(n_n={properness.n_n}, n_d={properness.n_d})")
    check_model_stable(model)

    scale = (1.0 - p.k2 * p.chi1) / (p.chi1 * p.chi3)
    pa = assemble_pa(p)
    return RationalTF(qp_mul(pa, model.tf.num).scale(scale), model.tf.den)


def closed_loop_tf(G, g):
    """Closed loop H_c = G eta0 mu0 / p_a, kept unreduced"""
    return RationalTF(G.num.scale(g.eta0 * g.mu0), qp_mul(G.den, pa_from_gains(g)))


def matching_error(G, g, model, omegas, taus):
    """
    Largest relative gap |H_c - H_m| / |H_m| on the imaginary axis

    Args:
        G: Precompensator
        g: GainSet
        model: ModelSpec
        omegas: Frequencies in rad/s
        taus: Delays in s

    Returns:
        Maximum relative error over the grid
    """
    H_c = closed_loop_tf(G, g)
    s = 1j * np.asarray(omegas, dtype=float)
    worst = 0.0
    for tau in taus:
        h_c = H_c.evaluate(s, tau)
        h_m = model.tf.evaluate(s)
        worst = max(worst, float(np.max(np.abs(h_c - h_m) / np.abs(h_m))))
    return worst


def build_inner_tf(g):
    """
    Inner transfer function H_y2 = 1/(p_c1 p_c2) of the orientation channel

    The factored denominator (s + mu0)(s^2 + eta1 s + eta0 z) is compared
    coefficient by coefficient with the y2 equation of the decoupled loop,
    s^3 + lambda12 s^2 + lambda02 s + lambda02 rho1 z s + lambda02 rho0 z.
    """
    factored = qp_mul(
        QuasiPoly({(1, 0): 1.0, (0, 0): g.mu0}),
        QuasiPoly({(2, 0): 1.0, (1, 0): g.eta1, (0, 1): g.eta0}),
    )
    loop = QuasiPoly({
        (3, 0): 1.0,
        (2, 0): g.lambda12,
        (1, 0): g.lambda02,
        (1, 1): g.lambda02 * g.rho1,
        (0, 1): g.lambda02 * g.rho0,
    })

    if set(factored.coeffs) != set(loop.coeffs):
        raise GainInconsistency(
            f"Inner loop monomials differ: {sorted(factored.coeffs)} vs {sorted(loop.coeffs)}")
    for key, a in factored.coeffs.items():
        b = loop.coefficient(*key)
        if abs(a - b) > INNER_TF_ULPS * math.ulp(max(abs(a), abs(b))):
            raise GainInconsistency(
                f"Inner loop coefficient {key} differs between routes: {a!r} vs {b!r}")
    return RationalTF(1.0, factored)
