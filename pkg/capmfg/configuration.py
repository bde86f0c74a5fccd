"""
[API] Provides interface (and built-in implementations)
of scenario configuration: model parameters plus numerical parameters of a run.

Scenario files are UTF-8, one `key = value` per line, `#` starts a comment. Keys mirror the parameter
fields; descriptor parameters are flattened (`kernel1.kind`, `kernel1.theta`, `production.beta`, ...),
numerical parameters carry the `numerics.` prefix and `horizon_fraction` sets the horizon to that
fraction of the admissible horizon of the scenario's initial law.
"""

import hashlib
import logging
from abc import ABCMeta, abstractmethod
from typing import Dict, List, Tuple

from capmfg.exceptions import NotConfiguredScenarioException, ScenarioFileException
from capmfg.params import (DESCRIPTOR_KINDS, ModelParams, NumericsParams, admissible_horizon, build_descriptor,
                           default_scenario)

logger = logging.getLogger(__name__)

# scenario-file prefix -> (ModelParams field, descriptor family)
DESCRIPTOR_FIELDS = {
    'kernel1': ('kernel1', 'kernel'),
    'kernel2': ('kernel2', 'kernel'),
    'production': ('f_spec', 'production'),
    'amenity': ('A_spec', 'amenity'),
    'cost': ('cost_spec', 'cost'),
    'initial_law': ('initial_law', 'initial_law'),
}
SCALAR_FIELDS = ('rho', 'zeta', 'chi', 'eps', 'gamma', 'sigma', 'theta_lo', 'theta_hi', 'horizon')
INTEGER_NUMERICS = ('n_particles', 'n_time', 'n_x', 'n_y', 'max_iter', 'seed', 'mc_paths', 'ot_cap', 'threads')


class ScenarioConfiguration(metaclass=ABCMeta):
    """ Provides the parameters of a run. """

    @abstractmethod
    def configured(self) -> bool:
        """ Solvers refuse (NotConfiguredScenarioException) configurations that return false. """
        raise NotImplementedError()

    @abstractmethod
    def model_params(self) -> ModelParams:
        raise NotImplementedError()

    @abstractmethod
    def numerics_params(self) -> NumericsParams:
        raise NotImplementedError()

    def resolve(self) -> Tuple[ModelParams, NumericsParams]:
        if not self.configured():
            raise NotConfiguredScenarioException('scenario {} is not configured'.format(self))
        return self.model_params(), self.numerics_params()

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[configured={configured}, model_params={model}, numerics_params={numerics}]" \
            .format(name=self.__class__.__name__, configured=self.configured(), model=self.model_params(),
                    numerics=self.numerics_params())


class MutableScenarioConfiguration(ScenarioConfiguration):
    """ Mutable configuration which can be changed at runtime.
    May be also used to customize existing configuration (for example a default one, which is immutable)."""

    def __init__(self, configured: bool, model_params: ModelParams, numerics_params: NumericsParams) -> None:
        self.__configured = configured
        self.__model_params = model_params
        self.__numerics_params = numerics_params

    @staticmethod
    def initialized_with(configuration: ScenarioConfiguration) -> 'MutableScenarioConfiguration':
        return MutableScenarioConfiguration(
            configured=configuration.configured(),
            model_params=configuration.model_params(),
            numerics_params=configuration.numerics_params(),
        )

    def configured(self) -> bool:
        return self.__configured

    def model_params(self) -> ModelParams:
        return self.__model_params

    def numerics_params(self) -> NumericsParams:
        return self.__numerics_params

    def set_configured(self, value: bool) -> 'MutableScenarioConfiguration':
        self.__configured = value
        return self

    def set_model_params(self, value: ModelParams) -> 'MutableScenarioConfiguration':
        self.__model_params = value
        return self

    def set_numerics_params(self, value: NumericsParams) -> 'MutableScenarioConfiguration':
        self.__numerics_params = value
        return self


class DefaultScenarioConfiguration(ScenarioConfiguration):
    """ The canonical baseline scenario. """

    def __init__(self) -> None:
        self.__model_params, self.__numerics_params = default_scenario()

    def configured(self) -> bool:
        return True

    def model_params(self) -> ModelParams:
        return self.__model_params

    def numerics_params(self) -> NumericsParams:
        return self.__numerics_params


def parse_lines(text: str, source: str = '<scenario>') -> Dict[str, str]:
    entries = {}  # type: Dict[str, str]
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ScenarioFileException('{}:{}: expected key = value'.format(source, number))
        key, value = (part.strip() for part in line.split('=', 1))
        if not key or not value:
            raise ScenarioFileException('{}:{}: empty key or value'.format(source, number))
        if key in entries:
            raise ScenarioFileException('{}:{}: duplicate key {}'.format(source, number, key))
        entries[key] = value
    return entries


def _number(key: str, value: str, integer: bool = False):
    try:
        return int(value) if integer else float(value)
    except ValueError as e:
        raise ScenarioFileException('{}: not a number: {!r}'.format(key, value)) from e


def apply_entries(entries: Dict[str, str], params: ModelParams,
                  numerics: NumericsParams) -> Tuple[ModelParams, NumericsParams]:
    """Overlays parsed entries on base parameters; unknown keys are errors."""
    model_changes = {}  # type: Dict[str, object]
    numerics_changes = {}  # type: Dict[str, object]
    descriptor_changes = {}  # type: Dict[str, Dict[str, str]]
    horizon_fraction = None
    v_lo, v_hi = params.control_box
    unknown = []  # type: List[str]
    for key, value in entries.items():
        prefix, _, name = key.partition('.')
        if key in SCALAR_FIELDS:
            model_changes[key] = _number(key, value)
        elif key == 'horizon_fraction':
            horizon_fraction = _number(key, value)
        elif key == 'control_box.v_lo':
            v_lo = _number(key, value)
        elif key == 'control_box.v_hi':
            v_hi = _number(key, value)
        elif prefix == 'numerics' and name in NumericsParams.__dataclass_fields__:
            numerics_changes[name] = _number(key, value, name in INTEGER_NUMERICS)
        elif prefix in DESCRIPTOR_FIELDS and name:
            descriptor_changes.setdefault(prefix, {})[name] = value
        else:
            unknown.append(key)
    if unknown:
        raise ScenarioFileException('unknown keys: {}'.format(', '.join(sorted(unknown))))
    model_changes['control_box'] = (v_lo, v_hi)
    for prefix, changes in descriptor_changes.items():
        field, family = DESCRIPTOR_FIELDS[prefix]
        current = getattr(params, field)
        kind = changes.pop('kind', current.kind)
        base = current.fields() if kind == current.kind else {}
        fields = dict(base)
        for name, value in changes.items():
            fields[name] = _number('{}.{}'.format(prefix, name), value, name == 'half_degree')
        try:
            model_changes[field] = build_descriptor(family, kind, fields)
        except (TypeError, ValueError) as e:
            raise ScenarioFileException('{}: {} (kinds: {})'.format(prefix, e, sorted(DESCRIPTOR_KINDS[family]))) \
                from e
    params = params.replace(**model_changes)
    numerics = numerics.replace(**numerics_changes)
    if horizon_fraction is not None:
        if 'horizon' in entries:
            raise ScenarioFileException('horizon and horizon_fraction are mutually exclusive')
        params = params.replace(horizon=horizon_fraction * admissible_horizon(params, numerics))
    return params, numerics


class FileScenarioConfiguration(ScenarioConfiguration):
    """ Scenario file parsed over the default scenario. """

    def __init__(self, path: str, base: ScenarioConfiguration = None) -> None:
        self.__path = path
        try:
            with open(path, 'rb') as source:
                data = source.read()
        except OSError as e:
            raise ScenarioFileException('cannot read scenario {}: {}'.format(path, e)) from e
        try:
            text = data.decode('utf-8')
        except UnicodeDecodeError as e:
            raise ScenarioFileException('{}: not UTF-8'.format(path)) from e
        self.__digest = hashlib.sha256(data).hexdigest()
        base = base or DefaultScenarioConfiguration()
        self.__model_params, self.__numerics_params = apply_entries(parse_lines(text, path), base.model_params(),
                                                                     base.numerics_params())
        logger.debug('scenario %s parsed: %s', path, self.__model_params)

    @property
    def path(self) -> str:
        return self.__path

    @property
    def digest(self) -> str:
        return self.__digest

    def configured(self) -> bool:
        return True

    def model_params(self) -> ModelParams:
        return self.__model_params

    def numerics_params(self) -> NumericsParams:
        return self.__numerics_params


def scenario_text(params: ModelParams, numerics: NumericsParams) -> str:
    """Scenario-file rendering that `FileScenarioConfiguration` reads back to equal parameters."""
    lines = ['{} = {!r}'.format(name, float(getattr(params, name))) for name in SCALAR_FIELDS]
    lines.append('control_box.v_lo = {!r}'.format(float(params.control_box[0])))
    lines.append('control_box.v_hi = {!r}'.format(float(params.control_box[1])))
    for prefix, (field, _) in DESCRIPTOR_FIELDS.items():
        descriptor = getattr(params, field)
        lines.append('{}.kind = {}'.format(prefix, descriptor.kind))
        lines.extend('{}.{} = {!r}'.format(prefix, k, v) for k, v in sorted(descriptor.fields().items()))
    for name in sorted(NumericsParams.__dataclass_fields__):
        lines.append('numerics.{} = {!r}'.format(name, getattr(numerics, name)))
    return '\n'.join(lines) + '\n'
