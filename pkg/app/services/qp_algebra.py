"""
Quasi-polynomial algebra - polynomials in s and the delay operator z = exp(-s*tau)

A QuasiPoly is a sparse map (s power, z power) -> real coefficient, kept in
canonical form (true zeros stripped). RationalTF pairs two of them. Nothing
here divides or cancels symbolically; claims about cancellation are checked
by evaluating both sides pointwise.
"""
import math
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

# Only true zeros are stripped from the canonical form
ZERO_THRESHOLD = 1e-300


class QuasiPoly:
    """Bivariate polynomial in s and z with real coefficients"""

    __slots__ = ('_coeffs', '_hash')

    def __init__(self, coeffs=None):
        clean = {}
        for key, value in (coeffs or {}).items():
            i, j = key
            if int(i) != i or int(j) != j or i < 0 or j < 0:
                raise ValueError(f"Powers must be non-negative integers, got {key}")
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"Coefficient of {key} is not finite")
            if abs(value) >= ZERO_THRESHOLD:
                clean[(int(i), int(j))] = value
        self._coeffs = MappingProxyType(dict(sorted(clean.items())))
        self._hash = None

    # Construction helpers

    @classmethod
    def constant(cls, value):
        return cls({(0, 0): value})

    @classmethod
    def z(cls):
        return cls({(0, 1): 1.0})

    @classmethod
    def from_s_coeffs(cls, coeffs, z_power=0):
        """
        Build from s-polynomial coefficients, highest power first (numpy order)

        Args:
            coeffs: Sequence of real coefficients
            z_power: z power attached to every term
        """
        coeffs = list(coeffs)
        degree = len(coeffs) - 1
        return cls({(degree - k, z_power): c for k, c in enumerate(coeffs)})

    # Structure

    @property
    def coeffs(self):
        return self._coeffs

    @property
    def is_zero(self):
        return not self._coeffs

    @property
    def deg_s(self):
        """Degree in s; the zero polynomial reports 0"""
        return max((i for i, _ in self._coeffs), default=0)

    @property
    def deg_z(self):
        return max((j for _, j in self._coeffs), default=0)

    def coefficient(self, i, j=0):
        return self._coeffs.get((i, j), 0.0)

    def z_slice(self, j):
        """Coefficients of the z**j component as an s-polynomial, highest power first"""
        degree = self.deg_s
        return np.array([self.coefficient(i, j) for i in range(degree, -1, -1)])

    def at_z(self, z_value):
        """Substitute a numeric z and return s-coefficients, highest power first"""
        degree = self.deg_s
        out = np.zeros(degree + 1, dtype=complex if isinstance(z_value, complex) else float)
        for (i, j), c in self._coeffs.items():
            out[degree - i] += c * z_value ** j
        return out

    # Arithmetic

    def scale(self, factor):
        return QuasiPoly({key: factor * c for key, c in self._coeffs.items()})

    def __add__(self, other):
        return qp_add(self, _as_qp(other))

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return qp_add(self, -_as_qp(other))

    def __mul__(self, other):
        return qp_mul(self, _as_qp(other))

    __rmul__ = __mul__

    def __call__(self, s, tau=0.0):
        return qp_eval(self, s, tau)

    def __eq__(self, other):
        if not isinstance(other, QuasiPoly):
            return NotImplemented
        return dict(self._coeffs) == dict(other._coeffs)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._coeffs.items()))
        return self._hash

    def __reduce__(self):
        return (QuasiPoly, (dict(self._coeffs),))

    def __repr__(self):
        return f"QuasiPoly({dict(self._coeffs)!r})"

    def __str__(self):
        if self.is_zero:
            return '0'
        terms = []
        for (i, j), c in sorted(self._coeffs.items(), key=lambda kv: (-kv[0][0], -kv[0][1])):
            factors = []
            if i:
                factors.append('s' if i == 1 else f's^{i}')
            if j:
                factors.append('z' if j == 1 else f'z^{j}')
            monomial = '*'.join(factors)
            if not monomial:
                terms.append(f'{c:.10g}')
            elif c == 1.0:
                terms.append(monomial)
            else:
                terms.append(f'{c:.10g}*{monomial}')
        return ' + '.join(terms).replace('+ -', '- ')


def _as_qp(value):
    if isinstance(value, QuasiPoly):
        return value
    return QuasiPoly.constant(value)


def qp_add(a, b):
    keys = set(a.coeffs) | set(b.coeffs)
    return QuasiPoly({k: a.coefficient(*k) + b.coefficient(*k) for k in keys})


def qp_mul(a, b):
    """
    Product of two quasi-polynomials

    Each output coefficient is the correctly rounded sum (math.fsum) of its
    partial products, so the result does not depend on operand order.
    """
    partials = {}
    for (i1, j1), c1 in a.coeffs.items():
        for (i2, j2), c2 in b.coeffs.items():
            partials.setdefault((i1 + i2, j1 + j2), []).append(c1 * c2)
    return QuasiPoly({key: math.fsum(terms) for key, terms in partials.items()})


def qp_eval(p, s, tau=0.0):
    """
    Evaluate p(s, exp(-s*tau))

    Args:
        p: QuasiPoly
        s: Complex frequency (scalar or numpy array) in 1/s
        tau: Delay in s, must be >= 0

    Returns:
        Complex value (or array) of the quasi-polynomial
    """
    if tau < 0:
        raise ValueError(f"Delay must be non-negative, got {tau}")
    s = np.asarray(s, dtype=complex)
    z = np.exp(-s * tau)
    total = np.zeros_like(s)
    for (i, j), c in p.coeffs.items():
        total = total + c * s ** i * z ** j
    return total[()] if total.ndim == 0 else total


@dataclass(frozen=True)
class ProperReport:
    n_n: int
    n_d: int
    precompensator_ok: bool


class RationalTF:
    """Ratio of two quasi-polynomials; degrees always read from the coefficients"""

    __slots__ = ('num', 'den')

    def __init__(self, num, den=None):
        num = _as_qp(num)
        den = _as_qp(1.0 if den is None else den)
        if den.is_zero:
            raise ValueError('Transfer function denominator is the zero polynomial')
        object.__setattr__(self, 'num', num)
        object.__setattr__(self, 'den', den)

    def __setattr__(self, name, value):
        raise AttributeError('RationalTF is immutable')

    @classmethod
    def from_s_coeffs(cls, num, den):
        return cls(QuasiPoly.from_s_coeffs(num), QuasiPoly.from_s_coeffs(den))

    @property
    def n_n(self):
        return self.num.deg_s

    @property
    def n_d(self):
        return self.den.deg_s

    @property
    def is_delay_free(self):
        return self.num.deg_z == 0 and self.den.deg_z == 0

    def evaluate(self, s, tau=0.0):
        return qp_eval(self.num, s, tau) / qp_eval(self.den, s, tau)

    __call__ = evaluate

    def __mul__(self, other):
        return tf_mul(self, other)

    def __eq__(self, other):
        if not isinstance(other, RationalTF):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash((self.num, self.den))

    def __reduce__(self):
        return (RationalTF, (self.num, self.den))

    def __repr__(self):
        return f"RationalTF(num={self.num}, den={self.den})"


def tf_mul(a, b):
    """Multiply numerators and denominators; no pole-zero cancellation"""
    return RationalTF(qp_mul(a.num, b.num), qp_mul(a.den, b.den))


def tf_properness(tf):
    """Degree report; the precompensator needs n_d >= n_n + 3"""
    return ProperReport(n_n=tf.n_n, n_d=tf.n_d, precompensator_ok=tf.n_d >= tf.n_n + 3)
