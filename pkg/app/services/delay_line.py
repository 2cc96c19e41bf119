"""
Delay line - bounded history of a uniformly sampled signal

Realizes the delay operator f(t - tau) by cubic Lagrange interpolation over
the retained samples. Queries before the first sample fall back to the
pre-history function.
"""
import math

from app.exceptions import QueryOutOfRange

INTERPOLATION_ORDER = 3


class DelayLine:
    """Ring buffer of samples taken every h seconds starting at t0"""

    def __init__(self, h, capacity, prehistory=0.0, t0=0.0):
        if not h > 0:
            raise ValueError(f"Sample step must be positive, got {h}")
        if capacity < INTERPOLATION_ORDER + 1:
            raise ValueError(f"Capacity must be at least {INTERPOLATION_ORDER + 1}")
        self.h = float(h)
        self.t0 = float(t0)
        self.capacity = int(capacity)
        self._values = [0.0] * self.capacity
        self._count = 0
        if callable(prehistory):
            self._prehistory = prehistory
        else:
            constant = float(prehistory)
            self._prehistory = lambda t: constant

    @classmethod
    def for_delay(cls, h, max_delay, prehistory=0.0, t0=0.0):
        """Size the buffer for queries up to max_delay seconds back"""
        capacity = int(math.ceil(max_delay / h)) + INTERPOLATION_ORDER + 2
        return cls(h, max(capacity, 2 * (INTERPOLATION_ORDER + 1)), prehistory, t0)

    def __len__(self):
        return min(self._count, self.capacity)

    @property
    def newest_time(self):
        if not self._count:
            return None
        return self.t0 + (self._count - 1) * self.h

    @property
    def oldest_index(self):
        return max(0, self._count - self.capacity)

    def push(self, value):
        """Append the sample for time t0 + n*h"""
        self._values[self._count % self.capacity] = float(value)
        self._count += 1

    def _at(self, k):
        return self._values[k % self.capacity]

    def sample(self, t, tau):
        """
        Value of the stored signal at t - tau

        tau may change from call to call, so a time-varying delay only needs
        a different tau per query.
        """
        query = t - tau
        if query < self.t0:
            return self._prehistory(query)
        if not self._count:
            raise QueryOutOfRange(f"No samples stored yet for query at t={query:.6g}")

        x = (query - self.t0) / self.h
        newest = self._count - 1
        oldest = self.oldest_index
        # allow rounding noise right at the newest sample
        if x > newest + 1e-9:
            raise QueryOutOfRange(
                f"Query at t={query:.6g} is ahead of the newest sample t={self.newest_time:.6g}")
        if x < oldest - 1e-9:
            raise QueryOutOfRange(
                f"Query at t={query:.6g} predates retained history "
                f"(oldest t={self.t0 + oldest * self.h:.6g})")

        points = min(INTERPOLATION_ORDER + 1, newest - oldest + 1)
        start = int(math.floor(x)) - 1
        start = max(oldest, min(start, newest - points + 1))
        u = x - start

        if points == 1:
            return self._at(start)
        if points == 2:
            return self._at(start) * (1.0 - u) + self._at(start + 1) * u
        if points == 3:
            return (self._at(start) * (u - 1.0) * (u - 2.0) / 2.0
                    - self._at(start + 1) * u * (u - 2.0)
                    + self._at(start + 2) * u * (u - 1.0) / 2.0)

        f0, f1, f2, f3 = (self._at(start + k) for k in range(4))
        u1, u2, u3 = u - 1.0, u - 2.0, u - 3.0
        return (-f0 * u1 * u2 * u3 / 6.0
                + f1 * u * u2 * u3 / 2.0
                - f2 * u * u1 * u3 / 2.0
                + f3 * u * u1 * u2 / 6.0)


def delay_sample(d, t, tau):
    """Functional form of DelayLine.sample"""
    return d.sample(t, tau)
