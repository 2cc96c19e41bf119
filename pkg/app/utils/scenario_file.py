"""
Scenario file loading and validation

Scenarios are TOML documents with the sections [chi], [model], [scenario]
and the optional [plant] and [output]. The same sections may arrive as a
JSON object through the report API.
"""
import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from config import Config
from app.exceptions import ScenarioError
from app.services.qp_algebra import RationalTF
from app.services.simulator import A_KEYS, PlantConfig, SimScenario
from app.services.synthesis import ChiParams, ModelSpec

logger = logging.getLogger(__name__)

SECTIONS = {
    'chi': {'required': ('chi1', 'chi2', 'chi3', 'k2'), 'optional': ('chi4',)},
    'model': {'required': (), 'optional': ('time_constants', 'num', 'den')},
    'scenario': {
        'required': ('tau',),
        'optional': ('name', 'step', 'horizon', 'ybar1', 'ybar2', 'w1_step', 'r_step',
                     'y2_perturbation', 'lambda01', 'lambda11', 'taus'),
    },
    'plant': {'required': ('r_w', 'b_w'), 'optional': ('a',)},
    'output': {'required': (), 'optional': ('dir', 'csv', 'report')},
}
REQUIRED_SECTIONS = ('chi', 'model', 'scenario')


@dataclass(frozen=True)
class ScenarioFile:
    """Validated scenario, ready for synthesis and simulation"""
    name: str
    chi: ChiParams
    model: ModelSpec
    tau: float                  # s
    step: float                 # s
    horizon: float              # s
    ybar1: float = 0.5          # m/s
    ybar2: float = 0.5          # rad
    w1_step: float = 0.1
    r_step: float = 0.2
    y2_perturbation: float = 0.0
    lambda01: float = None      # 1/s^2
    lambda11: float = None      # 1/s
    taus: tuple = ()            # s
    plant: PlantConfig = None
    output_dir: str = 'out'
    csv_name: str = 'trajectory.csv'
    report_name: str = 'report.json'
    fingerprint: str = field(default='', compare=False)

    def with_overrides(self, tau=None, step=None, output_dir=None):
        """Command-line values win over the file"""
        changes = {}
        if tau is not None:
            changes['tau'] = float(tau)
        if step is not None:
            changes['step'] = float(step)
        if output_dir is not None:
            changes['output_dir'] = output_dir
        if not changes:
            return self
        digest = hashlib.sha256(
            (self.fingerprint + json.dumps(changes, sort_keys=True)).encode()).hexdigest()
        return replace(self, fingerprint=digest, **changes)

    def sim_scenario(self, gains, tau=None):
        return SimScenario(
            chi=self.chi, gains=gains, model=self.model,
            tau=self.tau if tau is None else tau,
            h=self.step, horizon=self.horizon,
            ybar1=self.ybar1, ybar2=self.ybar2,
            w1_step=self.w1_step, r_step=self.r_step,
            y2_perturbation=self.y2_perturbation, plant=self.plant,
        )


def _section_line(text, section):
    if not text:
        return None
    pattern = re.compile(rf"^\s*\[\s*{re.escape(section)}\s*\]")
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return number
    return None


def _number(value, key, line):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"Key '{key}' must be a number, got {value!r}", key=key, line=line)
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError(f"Key '{key}' must be finite, got {value!r}", key=key, line=line)
    return value


def _numbers(value, key, line):
    if not isinstance(value, (list, tuple)):
        raise ScenarioError(f"Key '{key}' must be a list of numbers", key=key, line=line)
    return tuple(_number(v, key, line) for v in value)


def _check_keys(data, text):
    unknown_sections = sorted(set(data) - set(SECTIONS))
    if unknown_sections:
        raise ScenarioError(f"Unknown section(s): {unknown_sections}", key=unknown_sections[0])
    for section in REQUIRED_SECTIONS:
        if section not in data:
            raise ScenarioError(f"Missing section [{section}]", key=section)

    for section, table in data.items():
        line = _section_line(text, section)
        if not isinstance(table, dict):
            raise ScenarioError(f"[{section}] must be a table", key=section, line=line)
        spec = SECTIONS[section]
        allowed = set(spec['required']) | set(spec['optional'])
        unknown = sorted(set(table) - allowed)
        if unknown:
            raise ScenarioError(f"Unknown key(s) in [{section}]: {unknown}",
                                key=f"{section}.{unknown[0]}", line=line)
        for key in spec['required']:
            if key not in table:
                raise ScenarioError(f"Missing required key '{section}.{key}'",
                                    key=f"{section}.{key}", line=line)


def _parse_model(table, line):
    has_tc = 'time_constants' in table
    has_tf = 'num' in table or 'den' in table
    if has_tc == has_tf:
        raise ScenarioError('[model] needs either time_constants or num and den',
                            key='model', line=line)
    try:
        if has_tc:
            return ModelSpec.from_time_constants(
                *_numbers(table['time_constants'], 'model.time_constants', line))
        if 'num' not in table or 'den' not in table:
            missing = 'model.num' if 'num' not in table else 'model.den'
            raise ScenarioError(f"Missing required key '{missing}'", key=missing, line=line)
        tf = RationalTF.from_s_coeffs(_numbers(table['num'], 'model.num', line),
                                      _numbers(table['den'], 'model.den', line))
        return ModelSpec.from_tf(tf)
    except ScenarioError:
        raise
    except ValueError as e:
        raise ScenarioError(f"Invalid [model]: {e}", key='model', line=line) from e


def _parse_plant(table, line):
    a = table.get('a')
    if a is not None:
        if not isinstance(a, dict):
            raise ScenarioError('[plant.a] must be a table', key='plant.a', line=line)
        unknown = sorted(set(a) - set(A_KEYS))
        if unknown:
            raise ScenarioError(f"Unknown key(s) in [plant.a]: {unknown}",
                                key=f"plant.a.{unknown[0]}", line=line)
        missing = [k for k in A_KEYS if k not in a]
        if missing:
            raise ScenarioError(f"Missing required key 'plant.a.{missing[0]}'",
                                key=f"plant.a.{missing[0]}", line=line)
        a = {k: _number(a[k], f"plant.a.{k}", line) for k in A_KEYS}
    try:
        return PlantConfig(r_w=_number(table['r_w'], 'plant.r_w', line),
                           b_w=_number(table['b_w'], 'plant.b_w', line), a=a)
    except ValueError as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError(f"Invalid [plant]: {e}", key='plant', line=line) from e


def scenario_from_mapping(data, text=None, source='<mapping>'):
    """
    Validate parsed sections into a ScenarioFile

    Args:
        data: Mapping of section name to table
        text: Original TOML text, used to locate section lines
        source: Name used for the default scenario name

    Raises:
        ScenarioError: on unknown or missing keys and bad values
    """
    if not isinstance(data, dict):
        raise ScenarioError('Scenario must be a mapping of sections')
    _check_keys(data, text)

    chi_line = _section_line(text, 'chi')
    chi_table = data['chi']
    chi = ChiParams(**{k: _number(chi_table[k], f"chi.{k}", chi_line)
                       for k in ('chi1', 'chi2', 'chi3', 'k2')})
    if 'chi4' in chi_table:
        _number(chi_table['chi4'], 'chi.chi4', chi_line)
        logger.info('chi4 does not enter the third-layer design; ignored')

    model = _parse_model(data['model'], _section_line(text, 'model'))

    sc_line = _section_line(text, 'scenario')
    sc = data['scenario']

    def opt(key, default):
        if key not in sc:
            return default
        return _number(sc[key], f"scenario.{key}", sc_line)

    name = sc.get('name', source)
    if not isinstance(name, str):
        raise ScenarioError("Key 'scenario.name' must be a string", key='scenario.name', line=sc_line)

    plant = None
    if 'plant' in data:
        plant = _parse_plant(data['plant'], _section_line(text, 'plant'))

    output = data.get('output', {})
    for key in ('dir', 'csv', 'report'):
        if key in output and not isinstance(output[key], str):
            raise ScenarioError(f"Key 'output.{key}' must be a string",
                                key=f"output.{key}", line=_section_line(text, 'output'))

    fingerprint = hashlib.sha256(
        json.dumps(data, sort_keys=True, default=str).encode()).hexdigest()

    return ScenarioFile(
        name=name,
        chi=chi,
        model=model,
        tau=_number(sc['tau'], 'scenario.tau', sc_line),
        step=opt('step', Config.DEFAULT_STEP),
        horizon=opt('horizon', Config.DEFAULT_HORIZON),
        ybar1=opt('ybar1', Config.DEFAULT_YBAR1),
        ybar2=opt('ybar2', Config.DEFAULT_YBAR2),
        w1_step=opt('w1_step', 0.1),
        r_step=opt('r_step', 0.2),
        y2_perturbation=opt('y2_perturbation', 0.0),
        lambda01=opt('lambda01', None),
        lambda11=opt('lambda11', None),
        taus=_numbers(sc['taus'], 'scenario.taus', sc_line) if 'taus' in sc else (),
        plant=plant,
        output_dir=output.get('dir', Config.OUTPUT_DIR),
        csv_name=output.get('csv', 'trajectory.csv'),
        report_name=output.get('report', 'report.json'),
        fingerprint=fingerprint,
    )


def parse_scenario(text, source='<string>'):
    """Parse TOML text into a ScenarioFile"""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"Invalid TOML in {source}: {e}") from e
    return scenario_from_mapping(data, text=text, source=source)


def load_scenario(path):
    """Read and validate a scenario file from disk"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ScenarioError(f"Cannot read scenario file {path}: {e}") from e
    stem = re.sub(r'\.toml$', '', str(path).replace('\\', '/').rsplit('/', 1)[-1])
    scenario = parse_scenario(text, source=stem)
    logger.debug(f"Loaded scenario '{scenario.name}' from {path}")
    return scenario
