"""
Simulation routes - API endpoints for closed-loop runs and delay sweeps
"""
from flask import Blueprint, jsonify, request

from app.exceptions import ScenarioError
from app.routes.synthesis import scenario_from_request
from app.services import RunnerService
from app.utils import json_errors

simulation_bp = Blueprint('simulation', __name__)


def _flag(name):
    return request.args.get(name, 'false').lower() in ('1', 'true', 'yes')


@simulation_bp.route('/simulate', methods=['POST'])
@json_errors
def simulate():
    """Run one simulation; nothing is written to disk"""
    scenario = scenario_from_request()
    report = RunnerService.simulate(scenario, allow_unstable=_flag('allow_unstable'), write=False)
    return jsonify(report.as_dict()), 200


@simulation_bp.route('/sweep', methods=['POST'])
@json_errors
def sweep():
    """Simulate every delay in ?taus=0,0.1,... (or the scenario's list)"""
    scenario = scenario_from_request()
    taus = None
    raw = request.args.get('taus')
    if raw is not None:
        try:
            taus = [float(v) for v in raw.split(',') if v.strip()]
        except ValueError:
            raise ScenarioError(f"Invalid taus list: {raw!r}", key='taus')
    report = RunnerService.sweep(scenario, taus=taus, workers=1, write=False)
    return jsonify(report.as_dict()), 200
