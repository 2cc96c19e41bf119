"""
Simulator service - Time-domain simulation of the networked closed loop

The plant is the decoupled inner loop left by the two preinstalled layers:
a second-order linear-velocity channel and a third-order orientation
channel with delayed angle feedback. The third layer closes the loop
through delayed measurements and a state realization of G(s, z).
"""
import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from config import Config
from app.exceptions import DegenerateConfig, NonFiniteState
from app.services.delay_line import DelayLine
from app.services.reference import analytic_reference
from app.services.synthesis import (
    ModelSpec,
    assemble_pa,
    build_inner_tf,
    build_precompensator,
    derive_gains,
)

logger = logging.getLogger(__name__)

A_KEYS = ('a11', 'a12', 'a13', 'a14', 'a15', 'a21', 'a22', 'a23', 'a24', 'a25', 'a26')

CSV_COLUMNS = (
    't', 'r', 'w1', 'w_tilde2', 'w2', 'y1', 'y2', 'y2dot',
    'psi5', 'psi6', 'g_out', 'y2_ref', 'err',
)
LAYER1_COLUMNS = ('u1', 'u2', 'omega_wl', 'omega_wr')

# Slow model used when only the unforced orientation dynamics matter
UNFORCED_MODEL_TIME_CONSTANTS = (0.2, 0.25, 0.3)
# Unforced runs last at least this many delays
UNFORCED_DELAY_SPAN = 20.0


@dataclass(frozen=True)
class PlantConfig:
    """
    Geometry and layer-1 coefficients of the robot

    r_w: wheel radius [m]; b_w: half track [m]; a: coefficients a11..a26 of
    the preinstalled voltage law, or None when layer 1 is not configured.
    """
    r_w: float
    b_w: float
    a: MappingProxyType = None

    def __post_init__(self):
        if not (self.r_w > 0 and self.b_w > 0):
            raise DegenerateConfig(f"r_w and b_w must be positive, got {self.r_w}, {self.b_w}")
        if self.a is not None:
            missing = [k for k in A_KEYS if k not in self.a]
            if missing:
                raise DegenerateConfig(f"Layer-1 coefficients missing: {missing}")
            object.__setattr__(self, 'a', MappingProxyType({k: float(self.a[k]) for k in A_KEYS}))

    def __reduce__(self):
        return (PlantConfig, (self.r_w, self.b_w, None if self.a is None else dict(self.a)))

    @property
    def layer1_configured(self):
        return self.a is not None


@dataclass(frozen=True)
class Psi:
    """Measurement vector; wheel entries are None without plant geometry"""
    psi1: float
    psi2: float
    psi3: float
    psi4: float
    psi5: float
    psi6: float


@dataclass(frozen=True)
class YTilde:
    y1: float
    y1dot: float
    y2dot: float
    y2ddot: float


def measurement_map(history, tau, t, plant=None, y1=0.0, y1dot=0.0, y2dot=0.0, y2ddot=0.0):
    """
    Measurement vector psi at time t

    psi5, psi6 are the angle and angular rate delayed by tau. The wheel
    channel psi1..psi4 is undelayed and reconstructed from y1, y2 rates
    through the wheel geometry, omega_{l,r} = (y1 -/+ b_w y2dot)/r_w.

    Args:
        history: Mapping with DelayLines under 'phi' and 'phi_dot'
        tau: Transmission delay [s]
        t: Current time [s]
        plant: PlantConfig, or None to leave psi1..psi4 unset
    """
    psi5 = history['phi'].sample(t, tau)
    psi6 = history['phi_dot'].sample(t, tau)
    if plant is None:
        return Psi(None, None, None, None, psi5, psi6)
    r_w, b_w = plant.r_w, plant.b_w
    return Psi(
        psi1=(y1 - b_w * y2dot) / r_w,
        psi2=(y1 + b_w * y2dot) / r_w,
        psi3=(y1dot - b_w * y2ddot) / r_w,
        psi4=(y1dot + b_w * y2ddot) / r_w,
        psi5=psi5,
        psi6=psi6,
    )


def ytilde_from_psi(psi, plant):
    """Performance-variable estimates from the wheel measurements"""
    r_w, b_w = plant.r_w, plant.b_w
    return YTilde(
        y1=r_w * (psi.psi1 + psi.psi2) / 2.0,
        y1dot=r_w * (psi.psi3 + psi.psi4) / 2.0,
        y2dot=r_w * (psi.psi2 - psi.psi1) / (2.0 * b_w),
        y2ddot=r_w * (psi.psi4 - psi.psi3) / (2.0 * b_w),
    )


def layer3_command(k1, k2, psi5, psi6, g_out):
    """Third layer: w_tilde2 = k1 psi5 + k2 psi6 + g"""
    return k1 * psi5 + k2 * psi6 + g_out


def layer2_command(g, kappa, w_tilde2, y2_delayed, y2dot_delayed):
    """Second layer with the nominal-measurement terms at zero (deviation form)"""
    return -g.rho1 * y2dot_delayed - g.rho0 * y2_delayed + kappa * w_tilde2


def layer1_voltages(cfg, g, w1, w2, yt):
    """
    Preinstalled voltage law of the first layer

    Args:
        cfg: PlantConfig with layer-1 coefficients
        g: GainSet
        w1, w2: Layer-1 commands
        yt: YTilde signals

    Returns:
        (u1, u2) motor voltages [V]
    """
    if not cfg.layer1_configured:
        raise DegenerateConfig('Layer-1 coefficients are not configured')
    a = cfg.a
    if a['a15'] == 0 or a['a26'] == 0:
        raise DegenerateConfig('a15 and a26 must be non-zero')
    d1 = 2.0 * a['a15']
    d2 = 2.0 * a['a26']
    y1, y1d, y2d, y2dd = yt.y1, yt.y1dot, yt.y2dot, yt.y2ddot

    u1 = (g.lambda01 / d1 * w1 + g.lambda02 / d2 * w2
          + a['a25'] / d2 * y1d * y2d + a['a23'] / d2 * y1 * y2dd
          + a['a13'] / d1 * y2d * y2dd + (a['a21'] - g.lambda12) / d2 * y2dd
          + (a['a11'] - g.lambda11) / d1 * y1d + a['a14'] / d1 * y2d ** 2
          + a['a24'] / d2 * y1 * y2d + (a['a22'] - g.lambda02) / d2 * y2d
          + (a['a12'] - g.lambda01) / d1 * y1)
    u2 = (g.lambda01 / d1 * w1 - g.lambda02 / d2 * w2
          - a['a25'] / d2 * y1d * y2d - a['a23'] / d2 * y1 * y2dd
          + a['a13'] / d1 * y2d * y2dd + (a['a11'] - g.lambda11) / d1 * y1d
          + a['a14'] / d1 * y2d ** 2 - a['a24'] / d2 * y1 * y2d
          + (g.lambda02 - a['a22']) / d2 * y2d + (a['a12'] - g.lambda01) / d1 * y1)
    return u1, u2


class GRealization:
    """
    State realization of the precompensator G(s, z)

    A controllable-canonical realization of H_m is driven by r, exposing
    q = H_m r and q', q'', q''' (the relative degree is at least 3). The
    output combines them with the expanded p_a coefficients, the z terms
    using q and q' delayed by tau.
    """

    def __init__(self, p, model):
        den = np.trim_zeros(np.asarray(model.den_coeffs, dtype=float), 'f')
        lead = den[0]
        monic = den / lead
        num = np.asarray(model.num_coeffs, dtype=float) / lead

        self.n = len(monic) - 1
        n = self.n
        self.d_low = [float(monic[n - k]) for k in range(n)]
        num_low = [float(num[len(num) - 1 - k]) for k in range(len(num))]

        self.rows = []
        self.feedthrough = []
        for m in range(4):
            row = [0.0] * n
            direct = 0.0
            for k, coeff in enumerate(num_low):
                idx = k + m
                if idx < n:
                    row[idx] += coeff
                else:
                    direct += coeff
                    for j in range(n):
                        row[j] -= coeff * self.d_low[j]
            self.rows.append(row)
            self.feedthrough.append(direct)

        pa = assemble_pa(p)
        self.scale = (1.0 - p.k2 * p.chi1) / (p.chi1 * p.chi3)
        self.a2 = pa.coefficient(2, 0)
        self.a1 = pa.coefficient(1, 0)
        self.b1 = pa.coefficient(1, 1)
        self.b0 = pa.coefficient(0, 1)

    def steady_state(self, r0):
        return [r0 / self.d_low[0]] + [0.0] * (self.n - 1)

    def state_derivative(self, x, r):
        return x[1:] + [r - sum(d * xi for d, xi in zip(self.d_low, x))]

    def derivatives(self, x, r):
        """q, q', q'', q''' for state x and input r"""
        return tuple(
            sum(c * xi for c, xi in zip(row, x)) + direct * r
            for row, direct in zip(self.rows, self.feedthrough)
        )

    def output(self, x, r, q_delayed, q1_delayed):
        q, q1, q2, q3 = self.derivatives(x, r)
        return self.scale * (q3 + self.a2 * q2 + self.a1 * q1
                             + self.b1 * q1_delayed + self.b0 * q_delayed)

    def frequency_response(self, s, tau=0.0):
        """Transfer from r to the output, evaluated through the realization matrices"""
        n = self.n
        A = np.zeros((n, n), dtype=complex)
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = [-d for d in self.d_low]
        B = np.zeros(n, dtype=complex)
        B[-1] = 1.0
        X = np.linalg.solve(s * np.eye(n) - A, B)
        q, q1, q2, q3 = (np.dot(row, X) + direct for row, direct in zip(self.rows, self.feedthrough))
        z = np.exp(-s * tau)
        return self.scale * (q3 + self.a2 * q2 + self.a1 * q1 + z * (self.b1 * q1 + self.b0 * q))


def realize_G(p, model):
    """State realization of G(s, z); raises like build_precompensator"""
    build_precompensator(p, model)
    return GRealization(p, model)


class MethodOfStepsRK4:
    """
    Fixed-step classical RK4 for retarded delay equations

    rhs(t, x, d) receives the observed signals delayed by tau. Each observed
    signal has its own DelayLine fed after every step; with tau = 0 the
    current stage values are used instead.
    """

    def __init__(self, rhs, observe, tau, h, prehistory, guard=None):
        self.rhs = rhs
        self.observe = observe
        self.tau = float(tau)
        self.h = float(h)
        self.guard = Config.STATE_GUARD if guard is None else guard
        self.lines = [DelayLine.for_delay(self.h, self.tau, prehistory=v) for v in prehistory]

    def delayed(self, t, x):
        if self.tau == 0:
            return list(self.observe(x))
        return [line.sample(t, self.tau) for line in self.lines]

    def run(self, x0, n_steps, record=None):
        """
        Integrate n_steps from t = 0

        Args:
            x0: Initial state (list of floats)
            n_steps: Number of steps
            record: Optional callback record(t, x, d) at every grid point

        Raises:
            NonFiniteState: when the state leaves the guard band
        """
        h = self.h
        half = h / 2.0
        sixth = h / 6.0
        rhs = self.rhs
        x = [float(v) for v in x0]
        for line, value in zip(self.lines, self.observe(x)):
            line.push(value)

        for k in range(n_steps):
            t = k * h
            d1 = self.delayed(t, x)
            if record is not None:
                record(t, x, d1)
            k1 = rhs(t, x, d1)
            x2 = [xi + half * ki for xi, ki in zip(x, k1)]
            k2 = rhs(t + half, x2, self.delayed(t + half, x2))
            x3 = [xi + half * ki for xi, ki in zip(x, k2)]
            k3 = rhs(t + half, x3, self.delayed(t + half, x3))
            x4 = [xi + h * ki for xi, ki in zip(x, k3)]
            k4 = rhs(t + h, x4, self.delayed(t + h, x4))
            x = [xi + sixth * (a + 2.0 * b + 2.0 * c + e)
                 for xi, a, b, c, e in zip(x, k1, k2, k3, k4)]
            if not all(abs(v) <= self.guard for v in x):
                raise NonFiniteState((k + 1) * h)
            for line, value in zip(self.lines, self.observe(x)):
                line.push(value)

        if record is not None:
            t = n_steps * h
            record(t, x, self.delayed(t, x))
        return x


def run_calibration(h=1e-3, horizon=3.0):
    """
    Scalar calibration problem y'(t) = -y(t - 1), y = 1 on [-1, 0]

    Returns:
        (t, y) arrays on the integration grid
    """
    times, values = [], []

    def record(t, x, d):
        times.append(t)
        values.append(x[0])

    solver = MethodOfStepsRK4(
        rhs=lambda t, x, d: [-d[0]],
        observe=lambda x: (x[0],),
        tau=1.0, h=h, prehistory=(1.0,),
    )
    solver.run([1.0], int(round(horizon / h)), record=record)
    return np.array(times), np.array(values)


def calibration_reference(t):
    """Method-of-steps closed form of the calibration problem on [0, 3]"""
    t = np.asarray(t, dtype=float)
    y = 1.0 - t
    y = np.where(t > 1.0, y + (t - 1.0) ** 2 / 2.0, y)
    y = np.where(t > 2.0, y - (t - 2.0) ** 3 / 6.0, y)
    return y


def _model_time_scales(model):
    """(fastest, slowest) time constants of the model in seconds"""
    if model.time_constants is not None:
        return min(model.time_constants), max(model.time_constants)
    rates = np.abs(model.poles().real)
    return 1.0 / float(np.max(rates)), 1.0 / float(np.min(rates))


@dataclass(frozen=True)
class SimScenario:
    """
    One closed-loop run

    Commands are w1(t) = ybar1 (1 + w1_step u_s(t)) and
    r(t) = ybar2 (1 + r_step u_s(t)); all signals sit at their initial
    values for t < 0 and integration starts at the step instant.
    """
    chi: object
    gains: object
    model: ModelSpec
    tau: float           # s
    h: float             # s
    horizon: float       # s
    ybar1: float = 0.5   # m/s
    ybar2: float = 0.5   # rad
    w1_step: float = 0.1
    r_step: float = 0.2
    y2_perturbation: float = 0.0  # rad, added to the initial angle
    plant: PlantConfig = None
    allow_slow_horizon: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"Integration step must be positive, got {self.h}")
        if self.tau < 0:
            raise ValueError(f"Delay must be non-negative, got {self.tau}")
        if self.tau > 0 and self.h > self.tau / 10.0 * (1 + 1e-12):
            raise ValueError(f"Integration step {self.h} exceeds tau/10 = {self.tau / 10.0}")
        fastest, slowest = _model_time_scales(self.model)
        if self.h > fastest / 20.0 * (1 + 1e-12):
            raise ValueError(f"Integration step {self.h} exceeds T_min/20 = {fastest / 20.0}")
        if self.horizon < 10.0 * slowest and not self.allow_slow_horizon:
            raise ValueError(f"Horizon {self.horizon} s is shorter than 10 x {slowest} s")

    @classmethod
    def build(cls, chi, model, tau, h, horizon, lambda01=None, lambda11=None, **kwargs):
        return cls(chi=chi, gains=derive_gains(chi, lambda01, lambda11), model=model,
                   tau=tau, h=h, horizon=horizon, **kwargs)

    @property
    def k1(self):
        return self.gains.k1

    @property
    def k2(self):
        return self.gains.k2

    @property
    def n_steps(self):
        return int(round(self.horizon / self.h))

    @property
    def r_initial(self):
        return self.ybar2

    @property
    def r_final(self):
        return self.ybar2 * (1.0 + self.r_step)

    @property
    def w1_final(self):
        return self.ybar1 * (1.0 + self.w1_step)


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed records of the loop signals on a uniform grid"""
    columns: dict
    completed: bool = True
    overflow_time: float = None

    def __getitem__(self, name):
        return self.columns[name]

    def __len__(self):
        return len(self.columns['t'])

    @property
    def column_names(self):
        return tuple(self.columns)


def integrate_closed_loop(sc):
    """
    Simulate the networked closed loop for one scenario

    State: y1, y1', y2, y2', y2'' and the G realization states. The delayed
    signals are y2, y2' (measurements) and q, q' (precompensator z terms).
    A state leaving the guard band truncates the run; the trajectory is
    returned with completed=False.

    Returns:
        Trajectory
    """
    g = sc.gains
    build_inner_tf(g)
    G = realize_G(sc.chi, sc.model)
    plant = sc.plant
    r_now = sc.r_final
    w1_now = sc.w1_final
    lam01, lam11, lam02, lam12 = g.lambda01, g.lambda11, g.lambda02, g.lambda12
    k1, k2, kappa = g.k1, g.k2, g.kappa
    rho0, rho1 = g.rho0, g.rho1

    x0 = [sc.ybar1, 0.0, sc.ybar2 + sc.y2_perturbation, 0.0, 0.0] + G.steady_state(sc.r_initial)
    q0, q10 = G.derivatives(x0[5:], sc.r_initial)[:2]

    def observe(x):
        q, q1 = G.derivatives(x[5:], r_now)[:2]
        return (x[2], x[3], q, q1)

    def rhs(t, x, d):
        y1, y1d, y2, y2d, y2dd = x[:5]
        xg = x[5:]
        y2_del, y2d_del, q_del, q1_del = d
        g_out = G.output(xg, r_now, q_del, q1_del)
        w_tilde2 = k1 * y2_del + k2 * y2d_del + g_out
        w2 = -rho1 * y2d_del - rho0 * y2_del + kappa * w_tilde2
        return [
            y1d,
            lam01 * w1_now - lam11 * y1d - lam01 * y1,
            y2d,
            y2dd,
            lam02 * w2 - lam12 * y2dd - lam02 * y2d,
        ] + G.state_derivative(xg, r_now)

    solver = MethodOfStepsRK4(rhs, observe, sc.tau, sc.h,
                              prehistory=(x0[2], x0[3], q0, q10))
    history = {'phi': solver.lines[0], 'phi_dot': solver.lines[1]}

    names = CSV_COLUMNS[:-2] + (LAYER1_COLUMNS if plant is not None and plant.layer1_configured else ())
    rows = {name: [] for name in names}

    def record(t, x, d):
        y1, y1d, y2, y2d, y2dd = x[:5]
        xg = x[5:]
        psi = measurement_map(history, sc.tau, t, plant, y1=y1, y1dot=y1d, y2dot=y2d, y2ddot=y2dd)
        g_out = G.output(xg, r_now, d[2], d[3])
        w_tilde2 = layer3_command(k1, k2, psi.psi5, psi.psi6, g_out)
        w2 = layer2_command(g, kappa, w_tilde2, psi.psi5, psi.psi6)
        values = {
            't': t, 'r': r_now, 'w1': w1_now, 'w_tilde2': w_tilde2, 'w2': w2,
            'y1': y1, 'y2': y2, 'y2dot': y2d, 'psi5': psi.psi5, 'psi6': psi.psi6,
            'g_out': g_out,
        }
        if 'u1' in rows:
            u1, u2 = layer1_voltages(plant, g, w1_now, w2, ytilde_from_psi(psi, plant))
            values.update(u1=u1, u2=u2, omega_wl=psi.psi1, omega_wr=psi.psi2)
        for name in names:
            rows[name].append(values[name])

    completed = True
    overflow_time = None
    try:
        solver.run(x0, sc.n_steps, record=record)
    except NonFiniteState as e:
        completed = False
        overflow_time = e.t
        logger.warning(f"⚠ Simulation left the guard band at t={e.t:.6g} s (tau={sc.tau} s)")

    columns = {name: np.array(values, dtype=float) for name, values in rows.items()}
    t = columns['t']
    y2_ref = (sc.model.dc_gain * sc.r_initial
              + analytic_reference(sc.model, sc.r_final - sc.r_initial, t))
    ordered = {}
    for name in CSV_COLUMNS[:-2]:
        ordered[name] = columns[name]
    ordered['y2_ref'] = np.asarray(y2_ref, dtype=float).reshape(t.shape)
    ordered['err'] = columns['y2'] - ordered['y2_ref']
    for name in LAYER1_COLUMNS:
        if name in columns:
            ordered[name] = columns[name]
    return Trajectory(columns=ordered, completed=completed, overflow_time=overflow_time)


@dataclass(frozen=True)
class EnvelopeResult:
    rate: float       # 1/s, positive means growth
    earlier: float    # peak |signal| over the window before the last one
    last: float       # peak |signal| over the last window
    decaying: bool


def envelope_rate(t, signal, fraction=0.2):
    """
    Compare the peak magnitude of the last window with the window before it

    Args:
        t: Uniform time grid
        signal: Signal values (deviation from equilibrium)
        fraction: Window length as a fraction of the horizon
    """
    t = np.asarray(t, dtype=float)
    signal = np.abs(np.asarray(signal, dtype=float))
    span = t[-1] - t[0]
    window = fraction * span
    last_start = t[-1] - window
    earlier_start = last_start - window
    last = float(np.max(signal[t >= last_start]))
    earlier = float(np.max(signal[(t >= earlier_start) & (t < last_start)]))
    rate = math.log((last + 1e-300) / (earlier + 1e-300)) / window
    return EnvelopeResult(rate=rate, earlier=earlier, last=last, decaying=last < earlier)


def unforced_scenario(chi, tau, perturbation=0.1, model=None, lambda01=None, lambda11=None):
    """
    Unforced orientation dynamics from a perturbed angle

    Horizon max(30/chi1, 10 slowest model time constant, 20 tau); the step is the
    smallest of tau/10, 0.25/(chi1 + chi2) and T_min/20, shrunk so it
    divides the horizon evenly.
    """
    model = model or ModelSpec.from_time_constants(*UNFORCED_MODEL_TIME_CONSTANTS)
    fastest, slowest = _model_time_scales(model)
    horizon = max(30.0 / chi.chi1, 10.0 * slowest, UNFORCED_DELAY_SPAN * tau)
    limits = [0.25 / (chi.chi1 + chi.chi2), fastest / 20.0]
    if tau > 0:
        limits.append(tau / 10.0)
    n_steps = int(math.ceil(horizon / min(limits)))
    return SimScenario.build(
        chi, model, tau=tau, h=horizon / n_steps, horizon=horizon,
        lambda01=lambda01, lambda11=lambda11,
        ybar1=0.0, ybar2=0.0, w1_step=0.0, r_step=0.0, y2_perturbation=perturbation,
    )
