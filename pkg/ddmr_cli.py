#!/usr/bin/env python3
"""
DDMR Delay Lab command-line tool

Synthesizes the third-layer model-matching controller for a scenario,
reports the delay margin, simulates the networked closed loop and sweeps
the transmission delay.

Usage:
    python ddmr_cli.py synth --config scenarios/step_experiment.toml
    python ddmr_cli.py simulate --config scenarios/step_experiment.toml --tau 0.1 --out out/
    python ddmr_cli.py sweep --config scenarios/step_experiment.toml --tau 0:0.6:0.1

Exit codes: 0 success, 1 parse or usage error, 2 design constraint
failure, 3 simulation left the finite guard band.
"""

import argparse
import logging
import sys

from app.exceptions import (
    ConstraintViolation,
    DegenerateConfig,
    GainInconsistency,
    NonFiniteState,
    NotProper,
    ScenarioError,
    UnstableModel,
)
from app.extensions import init_logging
from app.services.runner import EXIT_CONSTRAINT, EXIT_NONFINITE, EXIT_PARSE, RunnerService
from app.utils.scenario_file import load_scenario

logger = logging.getLogger('ddmr_cli')

DESIGN_ERRORS = (ConstraintViolation, NotProper, UnstableModel, DegenerateConfig, GainInconsistency)


class UsageParser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this tool reserves 2 for constraint failures"""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"✗ {self.prog}: {message}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def parse_tau_list(text):
    """
    Delays from '0.1', '0,0.1,0.2' or an inclusive range 'start:stop:step'

    Raises:
        ScenarioError: on malformed input or an empty list
    """
    text = (text or '').strip()
    try:
        if ':' in text:
            start, stop, step = (float(v) for v in text.split(':'))
            if not step > 0 or stop < start:
                raise ScenarioError(f"Invalid tau range {text!r}", key='tau')
            count = int(round((stop - start) / step)) + 1
            taus = [round(start + k * step, 12) for k in range(count)]
        else:
            taus = [float(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError(f"Invalid tau list {text!r}: {e}", key='tau') from e
    if not taus:
        raise ScenarioError('Empty tau list', key='tau')
    return taus


class DelayLabCli:
    """Runs one subcommand and prints its report"""

    def __init__(self, args):
        self.args = args

    def load(self):
        scenario = load_scenario(self.args.config)
        tau = None
        if self.args.command == 'simulate' and self.args.tau is not None:
            tau = float(self.args.tau)
        return scenario.with_overrides(tau=tau, step=self.args.step, output_dir=self.args.out)

    def synth(self):
        taus = parse_tau_list(self.args.tau) if self.args.tau is not None else None
        report = RunnerService.synthesize(self.load(), taus=taus)
        self.print_report(report)
        return report.exit_code

    def simulate(self):
        report = RunnerService.simulate(self.load(), allow_unstable=self.args.allow_unstable)
        self.print_report(report)
        return report.exit_code

    def sweep(self):
        scenario = self.load()
        taus = parse_tau_list(self.args.tau) if self.args.tau is not None else None
        report = RunnerService.sweep(scenario, taus=taus, workers=self.args.workers)
        self.print_report(report)
        return report.exit_code

    def run(self):
        """Dispatch the subcommand and map library errors to exit codes"""
        try:
            return getattr(self, self.args.command)()
        except ScenarioError as e:
            print(f"✗ {e}", file=sys.stderr)
            return EXIT_PARSE
        except DESIGN_ERRORS as e:
            print(f"✗ {type(e).__name__}: {e}", file=sys.stderr)
            return EXIT_CONSTRAINT
        except NonFiniteState as e:
            print(f"✗ {e}", file=sys.stderr)
            return EXIT_NONFINITE
        except ValueError as e:
            print(f"✗ {e}", file=sys.stderr)
            return EXIT_PARSE

    def print_report(self, report):
        """Human-readable report; numbers printed with repr so nothing is re-rounded"""
        print(f"\n{'='*60}")
        print(f"DDMR Delay Lab - {self.args.command}: {report.name}")
        print(f"{'='*60}")

        print('\nConstraints:')
        for check in report.constraints.checks:
            mark = '✓' if check.passed else '✗'
            print(f"   {mark} {check.name:<34} margin={check.margin!r}")

        if report.gains is not None:
            print('\nGains:')
            for name, value in report.gains.as_dict().items():
                print(f"   {name:<10} = {value!r}")
            print(f"\nT_c       = {report.T_c!r} s")
            print(f"tau_max   = {report.tau_max!r} s")
            print(f"tau_cross = {report.tau_cross!r} s")
            print(f"omega_c   = {report.omega_c!r} rad/s")
            print(f"Precompensator degrees: n_n={report.precompensator['n_n']}, "
                  f"n_d={report.precompensator['n_d']}")

        if report.verdicts and not report.sweep:
            print('\nVerdicts:')
            for v in report.verdicts:
                mark = '✓ stable  ' if v['stable'] else '⚠ unstable'
                print(f"   tau={v['tau']!r} s  {mark}  margin={v['margin_metric']!r} s")

        if report.trajectory is not None:
            print('\nTrajectory:')
            for name, value in report.trajectory.items():
                print(f"   {name:<24} {value!r}")

        if report.sweep:
            print('\nSweep:')
            print(f"   {'tau':>8}  {'verdict':<10} {'envelope_rate':>14}  {'max_matching_error':>20}")
            for row in report.sweep:
                if row['error']:
                    print(f"   {row['tau']!r:>8}  ⚠ failed: {row['error']}")
                    continue
                verdict = 'stable' if row['stable'] else 'unstable'
                print(f"   {row['tau']!r:>8}  {verdict:<10} {row['envelope_rate']!r:>14}  "
                      f"{row['max_matching_error']!r:>20}")

        for kind, path in report.outputs.items():
            print(f"\nWrote {kind}: {path}")

        print(f"\n{'='*60}")
        if report.exit_code == 0:
            print('✓ Completed')
        else:
            print(f"⚠ Exit {report.exit_code}: {report.message}")
        print(f"{'='*60}\n")


def build_parser():
    parser = UsageParser(
        description='Delay-dependent model-matching controller synthesis for a differential-drive robot',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s synth --config scenarios/step_experiment.toml
  %(prog)s simulate --config scenarios/step_experiment.toml --tau 0.1 --out out/
  %(prog)s simulate --config scenarios/step_experiment.toml --tau 0.55 --allow-unstable
  %(prog)s sweep --config scenarios/step_experiment.toml --tau 0:0.6:0.1 --workers 4
        """
    )
    parser.add_argument('--log-level', default=None, help='Logging level (default: LOG_LEVEL or INFO)')
    subparsers = parser.add_subparsers(dest='command', required=True, parser_class=UsageParser)

    for name, help_text in (
        ('synth', 'Gains, constraints and delay margin'),
        ('simulate', 'Closed-loop step-response simulation'),
        ('sweep', 'Simulate a list or range of delays'),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument('--config', required=True, help='Scenario TOML file')
        sub.add_argument('--tau', default=None,
                         help='Delay in seconds (sweep: list a,b,c or range start:stop:step)')
        sub.add_argument('--step', type=float, default=None, help='Integration step in seconds')
        sub.add_argument('--out', default=None, help='Output directory')
        sub.add_argument('--allow-unstable', action='store_true',
                         help='Simulate even when tau is not below tau_max')
        sub.add_argument('--workers', type=int, default=None, help='Sweep worker processes')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    init_logging(args.log_level)
    if args.command == 'simulate' and args.tau is not None:
        try:
            float(args.tau)
        except ValueError:
            print(f"✗ Invalid --tau value {args.tau!r}", file=sys.stderr)
            return EXIT_PARSE
    return DelayLabCli(args).run()


if __name__ == '__main__':
    sys.exit(main())
