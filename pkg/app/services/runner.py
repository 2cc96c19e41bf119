"""
Runner service - Business logic behind the synth, simulate and sweep commands

Builds a RunReport from a validated ScenarioFile. Every number placed in a
report is the value returned by the library call, never re-rounded.
"""
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from config import Config
from app.exceptions import ScenarioError
from app.services.reference import second_order_reference
from app.services.simulator import LAYER1_COLUMNS, envelope_rate, integrate_closed_loop
from app.services.stability import crossing_point, stability_verdict
from app.services.synthesis import (
    assemble_pa,
    build_inner_tf,
    build_precompensator,
    compute_tau_max,
    derive_gains,
    validate_chi,
)
from app.utils.trajectory_csv import write_table, write_trajectory

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_CONSTRAINT = 2
EXIT_NONFINITE = 3

SETTLING_BAND = 0.02

SWEEP_COLUMNS = (
    'tau', 'stable', 'margin_metric', 'completed', 'overflow_time',
    'envelope_rate', 'growing', 'max_matching_error', 'error',
)


def _jsonable(value):
    """Non-finite floats become strings so the report stays valid JSON"""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    return value


@dataclass(frozen=True)
class RunReport:
    name: str
    constraints: object
    gains: object = None
    T_c: float = None
    tau_max: float = None
    tau_cross: float = None
    omega_c: float = None
    precompensator: dict = None
    verdicts: tuple = ()
    trajectory: dict = None
    sweep: tuple = ()
    outputs: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK
    message: str = ''

    def as_dict(self):
        return _jsonable({
            'name': self.name,
            'exit_code': self.exit_code,
            'message': self.message,
            'constraints': self.constraints.as_dict(),
            'gains': self.gains.as_dict() if self.gains is not None else None,
            'T_c': self.T_c,
            'tau_max': self.tau_max,
            'tau_cross': self.tau_cross,
            'omega_c': self.omega_c,
            'precompensator': self.precompensator,
            'verdicts': list(self.verdicts),
            'trajectory': self.trajectory,
            'sweep': list(self.sweep),
            'outputs': self.outputs,
        })


def settling_time(t, y, initial, final, band=SETTLING_BAND):
    """
    First time after which y stays within band*|final - initial| of final

    Returns:
        Time in s, 0.0 for a zero-amplitude step, None if never settled
    """
    amplitude = abs(final - initial)
    if amplitude == 0 or len(t) == 0:
        return 0.0
    outside = np.nonzero(np.abs(np.asarray(y) - final) > band * amplitude)[0]
    if len(outside) == 0:
        return float(t[0])
    last = int(outside[-1])
    if last == len(t) - 1:
        return None
    return float(t[last + 1])


def summarize_trajectory(sc, trajectory):
    """Final values, matching error, settling times and internal-signal peaks"""
    t = trajectory['t']
    y1 = trajectory['y1']
    y2 = trajectory['y2']
    target_y1 = sc.w1_final
    target_y2 = sc.model.dc_gain * sc.r_final
    step = sc.r_final - sc.r_initial
    max_err = float(np.max(np.abs(trajectory['err']))) if len(t) else None
    max_err_y1 = None
    if len(t):
        g = sc.gains
        y1_ref = sc.ybar1 + second_order_reference(g.lambda01, g.lambda11, target_y1 - sc.ybar1, t)
        max_err_y1 = float(np.max(np.abs(y1 - y1_ref)))

    summary = {
        'completed': trajectory.completed,
        'overflow_time': trajectory.overflow_time,
        'samples': len(trajectory),
        'final_y1': float(y1[-1]) if len(t) else None,
        'final_y2': float(y2[-1]) if len(t) else None,
        'target_y1': target_y1,
        'target_y2': target_y2,
        'final_error_y1': float(y1[-1] - target_y1) if len(t) else None,
        'final_error_y2': float(y2[-1] - target_y2) if len(t) else None,
        'max_matching_error': max_err,
        'max_matching_error_y1': max_err_y1,
        'relative_matching_error': max_err / abs(step) if step and max_err is not None else None,
        'settling_time_y1': settling_time(t, y1, sc.ybar1, target_y1),
        'settling_time_y2': settling_time(t, y2, sc.ybar2, target_y2),
    }
    if 'u1' in trajectory.columns:
        summary['peaks'] = {name: float(np.max(np.abs(trajectory[name]))) for name in LAYER1_COLUMNS}
    if len(t) > 10:
        envelope = envelope_rate(t, y2 - target_y2)
        summary['envelope_rate'] = envelope.rate
        summary['growing'] = not envelope.decaying
    return summary


def _sweep_row(job):
    """One sweep row; failures are recorded in the row, never raised"""
    scenario, tau = job
    row = dict.fromkeys(SWEEP_COLUMNS)
    row['tau'] = tau
    try:
        gains = derive_gains(scenario.chi, scenario.lambda01, scenario.lambda11)
        verdict = stability_verdict(assemble_pa(scenario.chi), tau)
        row['stable'] = verdict.stable
        row['margin_metric'] = verdict.margin_metric
        sc = scenario.sim_scenario(gains, tau=tau)
        trajectory = integrate_closed_loop(sc)
        summary = summarize_trajectory(sc, trajectory)
        row['completed'] = summary['completed']
        row['overflow_time'] = summary['overflow_time']
        row['envelope_rate'] = summary.get('envelope_rate')
        row['growing'] = summary.get('growing')
        row['max_matching_error'] = summary['max_matching_error']
    except Exception as e:
        logger.warning(f"⚠ Sweep row tau={tau} failed: {e}")
        row['error'] = str(e)
    return row


class RunnerService:
    """Service for producing run reports from scenarios"""

    @staticmethod
    def synthesize(scenario, taus=None):
        """
        Synthesis and stability report without simulation

        Args:
            scenario: ScenarioFile
            taus: Delays to give verdicts for; defaults to the scenario's list

        Returns:
            RunReport; exit_code 2 when a design constraint fails
        """
        constraints = validate_chi(scenario.chi)
        if not constraints.passed:
            names = ', '.join(c.name for c in constraints.failures)
            return RunReport(name=scenario.name, constraints=constraints,
                             exit_code=EXIT_CONSTRAINT,
                             message=f"Design constraints violated: {names}")

        chi = scenario.chi
        gains = derive_gains(chi, scenario.lambda01, scenario.lambda11)
        build_inner_tf(gains)
        margin = compute_tau_max(chi)
        crossing = crossing_point(chi.chi2, chi.chi3)
        G = build_precompensator(chi, scenario.model)
        pa = assemble_pa(chi)

        if taus is None:
            taus = scenario.taus or (scenario.tau,)
        verdicts = []
        for tau in taus:
            v = stability_verdict(pa, tau)
            verdicts.append({'tau': tau, 'stable': v.stable, 'margin_metric': v.margin_metric})

        logger.info(f"✓ Synthesis '{scenario.name}': tau_max={margin.tau_max:.6g} s")
        return RunReport(
            name=scenario.name,
            constraints=constraints,
            gains=gains,
            T_c=margin.T_c,
            tau_max=margin.tau_max,
            tau_cross=crossing.tau_cross,
            omega_c=crossing.omega_c,
            precompensator={'n_n': G.n_n, 'n_d': G.n_d},
            verdicts=tuple(verdicts),
        )

    @staticmethod
    def simulate(scenario, allow_unstable=False, write=True):
        """
        Synthesis plus one closed-loop simulation at the scenario delay

        Writes the trajectory CSV and report JSON into the output directory
        when write is set.

        Returns:
            RunReport; exit_code 3 when the run left the guard band
        """
        report = RunnerService.synthesize(scenario, taus=(scenario.tau,))
        if report.exit_code:
            return report
        if scenario.tau >= report.tau_max and not allow_unstable:
            return replace(report, exit_code=EXIT_CONSTRAINT, message=(
                f"tau={scenario.tau} s is not below tau_max={report.tau_max} s; "
                f"pass --allow-unstable to simulate anyway"))

        sc = scenario.sim_scenario(report.gains)
        trajectory = integrate_closed_loop(sc)
        summary = summarize_trajectory(sc, trajectory)

        outputs = {}
        if write:
            csv_path = os.path.join(scenario.output_dir, scenario.csv_name)
            outputs['csv'] = write_trajectory(csv_path, trajectory)
            outputs['report'] = os.path.join(scenario.output_dir, scenario.report_name)

        exit_code = EXIT_OK if trajectory.completed else EXIT_NONFINITE
        message = '' if trajectory.completed else \
            f"Simulation left the guard band at t={trajectory.overflow_time} s"
        report = replace(report, trajectory=summary, outputs=outputs,
                         exit_code=exit_code, message=message)
        if write:
            RunnerService.write_report(report, outputs['report'])
        return report

    @staticmethod
    def sweep(scenario, taus=None, workers=None, write=True):
        """
        One simulation per delay, rows in input order

        Args:
            scenario: ScenarioFile
            taus: Delays [s]; defaults to the scenario's list
            workers: Process count; rows run concurrently when above 1

        Raises:
            ScenarioError: when the delay list is empty
        """
        taus = tuple(scenario.taus if taus is None else taus)
        if not taus:
            raise ScenarioError('Sweep needs at least one delay', key='scenario.taus')
        workers = Config.SWEEP_WORKERS if workers is None else int(workers)

        report = RunnerService.synthesize(scenario, taus=taus)
        if report.exit_code:
            return report

        jobs = [(scenario, tau) for tau in taus]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_sweep_row, jobs))
        else:
            rows = [_sweep_row(job) for job in jobs]

        failed = [row['tau'] for row in rows if row['error']]
        outputs = {}
        if write:
            outputs['table'] = write_table(
                os.path.join(scenario.output_dir, 'sweep.csv'), SWEEP_COLUMNS,
                [[row[c] for c in SWEEP_COLUMNS] for row in rows])
            outputs['report'] = os.path.join(scenario.output_dir, scenario.report_name)
        report = replace(report, sweep=tuple(rows), outputs=outputs,
                         message=f"{len(failed)} row(s) failed: {failed}" if failed else '')
        if write:
            RunnerService.write_report(report, outputs['report'])
        return report

    @staticmethod
    def write_report(report, path):
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(report.as_dict(), f, indent=2)
        return path
