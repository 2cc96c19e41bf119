"""
Synthesis routes - API endpoint for controller synthesis reports
"""
from flask import Blueprint, jsonify, request

from app.exceptions import ScenarioError
from app.services import RunnerService
from app.utils import get_cached_or_compute, json_errors
from app.utils.scenario_file import parse_scenario, scenario_from_mapping

synthesis_bp = Blueprint('synthesis', __name__)


def scenario_from_request():
    """
    Scenario from the request body: a JSON object of sections or TOML text

    Query arguments tau and step override the body like the CLI flags do.
    """
    if request.is_json:
        data = request.get_json(silent=True)
        if data is None:
            raise ScenarioError('Request body is not valid JSON')
        scenario = scenario_from_mapping(data, source='request')
    else:
        text = request.get_data(as_text=True)
        if not text.strip():
            raise ScenarioError('Request body is empty')
        scenario = parse_scenario(text, source='request')
    return scenario.with_overrides(
        tau=request.args.get('tau', type=float),
        step=request.args.get('step', type=float),
    )


@synthesis_bp.route('/synth', methods=['POST'])
@json_errors
def synth():
    """Gains, constraints, delay margin and precompensator degrees"""
    scenario = scenario_from_request()
    report = get_cached_or_compute(
        f"synth:{scenario.fingerprint}",
        lambda: RunnerService.synthesize(scenario).as_dict())
    return jsonify(report), 200
