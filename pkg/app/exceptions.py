"""
Error taxonomy for the delay lab

User-input problems subclass ValueError so the API layer can answer them
with 400 the same way it answers any other bad request.
"""


class DelayLabError(Exception):
    """Base class for all library errors"""


class ConstraintViolation(DelayLabError, ValueError):
    """Design parameters fail one or more stability constraints"""

    def __init__(self, report):
        self.report = report
        failed = ', '.join(c.name for c in report.failures) or 'unknown'
        super().__init__(f"Design constraints violated: {failed}")


class NotProper(DelayLabError, ValueError):
    """Model relative degree too small for a proper precompensator"""


class UnstableModel(DelayLabError, ValueError):
    """Model transfer function has a pole in the closed right half-plane"""


class GainInconsistency(DelayLabError):
    """Inner-loop coefficients do not factor as expected"""


class ShapeError(DelayLabError, ValueError):
    """Quasi-polynomial does not have the expected p_a structure"""


class QueryOutOfRange(DelayLabError):
    """Delay line queried before its retained history"""


class NonFiniteState(DelayLabError):
    """Simulation state left the finite guard band"""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"State left the finite guard band at t={t:.6g} s")


class DegenerateConfig(DelayLabError, ValueError):
    """Plant configuration has a vanishing divisor"""


class DegenerateTimeConstants(DelayLabError):
    """Model time constants coincide (repeated poles)"""


class ScenarioError(DelayLabError, ValueError):
    """Scenario file could not be parsed or validated"""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        location = ''
        if line is not None:
            location = f" (line {line})"
        super().__init__(f"{message}{location}")
