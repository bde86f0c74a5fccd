"""
[API] Provides interface (and built-in implementations)
of SerDe used to write measures, value-field slices and reports, plus directory layouts for flows and value fields.
"""

import codecs
import csv
import io
import math
import os

try:
    import ujson as json
except ImportError:
    # ignoring type error as mypy falsely reports json is already imported
    import json  # type: ignore
from abc import ABCMeta, abstractmethod
from typing import Any, Callable, Dict, Iterable, List, Sequence, TextIO, Tuple

import numpy as np

from capmfg.exceptions import ScenarioFileException
from capmfg.measures import EmpiricalMeasure, MeasureFlow

INDEX_FILE = 'index.csv'
METADATA_FILE = 'metadata.json'


def format_float(value: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return '{:.17g}'.format(float(value))


class SerDe(metaclass=ABCMeta):
    """Responsible for (de)serialization of the artifacts a run writes."""

    @abstractmethod
    def serialize(self, value: Any) -> bytes:
        raise NotImplementedError()

    @abstractmethod
    def deserialize(self, data: bytes) -> Any:
        raise NotImplementedError()


def _rows(text: str, expected_header: Sequence[str], source: str) -> List[List[float]]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ScenarioFileException('{}: empty file'.format(source))
    if [column.strip() for column in header] != list(expected_header):
        raise ScenarioFileException('{}: expected header {}, got {}'.format(source, ','.join(expected_header),
                                                                            ','.join(header)))
    rows = []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(expected_header):
            raise ScenarioFileException('{}:{}: expected {} columns'.format(source, line, len(expected_header)))
        try:
            rows.append([float(cell) for cell in row])
        except ValueError as e:
            raise ScenarioFileException('{}:{}: {}'.format(source, line, e)) from e
    return rows


def _csv_bytes(header: Sequence[str], columns: Sequence[np.ndarray], encoding: str) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([format_float(v) for v in row])
    return codecs.encode(out.getvalue(), encoding)


class MeasureCsvSerDe(SerDe):
    """`x,h,w` rows, one per atom."""

    HEADER = ('x', 'h', 'w')

    def __init__(self, string_encoding: str = 'utf-8') -> None:
        self.__string_encoding = string_encoding

    def serialize(self, value: EmpiricalMeasure) -> bytes:
        return _csv_bytes(self.HEADER, (value.x, value.h, value.w), self.__string_encoding)

    def deserialize(self, data: bytes, source: str = '<measure>') -> EmpiricalMeasure:
        rows = _rows(codecs.decode(data, self.__string_encoding), self.HEADER, source)
        if not rows:
            raise ScenarioFileException('{}: no atoms'.format(source))
        array = np.array(rows)
        return EmpiricalMeasure.normalized(array[:, 0], array[:, 1], array[:, 2])


class ValueSlice:
    """One time slice of a value field: node coordinates with w and its difference quotients."""

    def __init__(self, x_nodes: np.ndarray, y_nodes: np.ndarray, w: np.ndarray, dx_w: np.ndarray,
                 dy_w: np.ndarray) -> None:
        self.x_nodes = x_nodes
        self.y_nodes = y_nodes
        self.w = w
        self.dx_w = dx_w
        self.dy_w = dy_w


class ValueSliceCsvSerDe(SerDe):
    """`x,y,w,dx_w,dy_w` rows on the (x, y) grid, x-major."""

    HEADER = ('x', 'y', 'w', 'dx_w', 'dy_w')

    def __init__(self, string_encoding: str = 'utf-8') -> None:
        self.__string_encoding = string_encoding

    def serialize(self, value: ValueSlice) -> bytes:
        xx, yy = np.meshgrid(value.x_nodes, value.y_nodes, indexing='ij')
        columns = (xx.ravel(), yy.ravel(), value.w.ravel(), value.dx_w.ravel(), value.dy_w.ravel())
        return _csv_bytes(self.HEADER, columns, self.__string_encoding)

    def deserialize(self, data: bytes, source: str = '<value slice>') -> ValueSlice:
        array = np.array(_rows(codecs.decode(data, self.__string_encoding), self.HEADER, source))
        if array.size == 0:
            raise ScenarioFileException('{}: no nodes'.format(source))
        x_nodes = np.unique(array[:, 0])
        y_nodes = np.unique(array[:, 1])
        shape = (len(x_nodes), len(y_nodes))
        if len(array) != shape[0] * shape[1]:
            raise ScenarioFileException('{}: nodes do not form a grid'.format(source))
        return ValueSlice(x_nodes, y_nodes, array[:, 2].reshape(shape), array[:, 3].reshape(shape),
                          array[:, 4].reshape(shape))


JsonReversibleObject = Any


def sanitize(value: Any) -> JsonReversibleObject:
    """Non-finite floats become the strings 'nan', 'inf' and '-inf'; arrays and tuples become lists."""
    if isinstance(value, dict):
        return {str(k): sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return sanitize(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    return value


class JsonSerDe(SerDe):
    """Uses encoded json string (sorted keys) as binary representation.
    One may provide (by constructor) functions converting values to/from a json-reversible representation."""

    def __init__(self, string_encoding: str = 'utf-8',
                 value_to_reversible_repr: Callable[[Any], JsonReversibleObject] = lambda x: x,
                 reversible_repr_to_value: Callable[[JsonReversibleObject], Any] = lambda x: x) -> None:
        self.__string_encoding = string_encoding
        self.__reversible_repr_to_value = reversible_repr_to_value
        self.__value_to_reversible_repr = value_to_reversible_repr

    def deserialize(self, data: bytes) -> Any:
        return self.__reversible_repr_to_value(json.loads(codecs.decode(data, self.__string_encoding)))

    def serialize(self, value: Any) -> bytes:
        reversible = sanitize(self.__value_to_reversible_repr(value))
        return codecs.encode(json.dumps(reversible, sort_keys=True, indent=2), self.__string_encoding)


def write_bytes(path: str, data: bytes) -> None:
    try:
        with open(path, 'wb') as out:
            out.write(data)
    except OSError as e:
        raise ScenarioFileException('cannot write {}: {}'.format(path, e)) from e


def read_bytes(path: str) -> bytes:
    try:
        with open(path, 'rb') as source:
            return source.read()
    except OSError as e:
        raise ScenarioFileException('cannot read {}: {}'.format(path, e)) from e


def write_csv(stream: TextIO, header: Sequence[str], rows: Iterable[Sequence[float]]) -> None:
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_index(directory: str, times: np.ndarray, files: List[str]) -> None:
    out = io.StringIO()
    write_csv(out, ('index', 't', 'file'), [(i, float(t), name) for i, (t, name) in enumerate(zip(times, files))])
    write_bytes(os.path.join(directory, INDEX_FILE), out.getvalue().encode('utf-8'))


def _read_index(directory: str) -> List[Tuple[float, str]]:
    path = os.path.join(directory, INDEX_FILE)
    reader = csv.reader(io.StringIO(read_bytes(path).decode('utf-8')))
    header = next(reader, None)
    if header != ['index', 't', 'file']:
        raise ScenarioFileException('{}: expected header index,t,file'.format(path))
    try:
        return [(float(row[1]), row[2]) for row in reader if row]
    except (IndexError, ValueError) as e:
        raise ScenarioFileException('{}: {}'.format(path, e)) from e


def write_flow(directory: str, flow: MeasureFlow, serde: MeasureCsvSerDe = MeasureCsvSerDe()) -> List[str]:
    """index.csv plus one measure CSV per grid time."""
    os.makedirs(directory, exist_ok=True)
    files = ['mu_{:04d}.csv'.format(i) for i in range(len(flow))]
    for name, mu in zip(files, flow.measures):
        write_bytes(os.path.join(directory, name), serde.serialize(mu))
    _write_index(directory, flow.times, files)
    return [os.path.join(directory, name) for name in files]


def read_flow(directory: str, serde: MeasureCsvSerDe = MeasureCsvSerDe()) -> MeasureFlow:
    entries = _read_index(directory)
    measures = [serde.deserialize(read_bytes(os.path.join(directory, name)), name) for _, name in entries]
    return MeasureFlow([t for t, _ in entries], measures)


def write_value(directory: str, field, serde: ValueSliceCsvSerDe = ValueSliceCsvSerDe()) -> List[str]:
    """index.csv, metadata.json and one slice CSV per grid time."""
    os.makedirs(directory, exist_ok=True)
    files = ['w_{:04d}.csv'.format(i) for i in range(len(field.times))]
    for i, name in enumerate(files):
        piece = ValueSlice(field.x_nodes, field.y_nodes, field.w[i], field.dx_w[i], field.dy_w[i])
        write_bytes(os.path.join(directory, name), serde.serialize(piece))
    _write_index(directory, field.times, files)
    write_bytes(os.path.join(directory, METADATA_FILE), JsonSerDe().serialize(field.metadata))
    return [os.path.join(directory, name) for name in files]


def read_value(directory: str, serde: ValueSliceCsvSerDe = ValueSliceCsvSerDe()):
    from capmfg.hjb import ValueField

    entries = _read_index(directory)
    slices = [serde.deserialize(read_bytes(os.path.join(directory, name)), name) for _, name in entries]
    if not slices:
        raise ScenarioFileException('{}: empty value field'.format(directory))
    metadata_path = os.path.join(directory, METADATA_FILE)
    metadata = JsonSerDe().deserialize(read_bytes(metadata_path)) if os.path.exists(metadata_path) else {}
    return ValueField(np.array([t for t, _ in entries]), slices[0].x_nodes, slices[0].y_nodes,
                      np.stack([s.w for s in slices]), metadata, np.stack([s.dx_w for s in slices]),
                      np.stack([s.dy_w for s in slices]))


def read_measure(path: str, serde: MeasureCsvSerDe = MeasureCsvSerDe()) -> EmpiricalMeasure:
    return serde.deserialize(read_bytes(path), path)


def report_serde() -> JsonSerDe:
    return JsonSerDe()


def dump_json(path: str, value: Dict[str, Any]) -> None:
    write_bytes(path, JsonSerDe().serialize(value))
