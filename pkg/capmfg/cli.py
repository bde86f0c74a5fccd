"""
[API] Command-line front end: scenario files in, reproducible run directories and CSV out.

Exit codes are stable: 0 ok, 1 I/O, 2 validation, 3 non-convergence, 4 horizon guard.
"""

import argparse
import datetime
import hashlib
import io
import logging
import os
import sys
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

import capmfg
from capmfg.configuration import DefaultScenarioConfiguration, FileScenarioConfiguration, scenario_text
from capmfg.dynamics import horizon_constants
from capmfg.exceptions import (CapMfgException, CflViolationException, HorizonViolationException,
                               ParamsValidationException, ScenarioFileException, SupportSizeExceededException)
from capmfg.hamiltonian import h1_breakdown
from capmfg.hjb import solve_hjb
from capmfg.interaction import F
from capmfg.measures import flow_moments, moment_M, wasserstein1, wasserstein2
from capmfg.mfg import solve_mfg
from capmfg.mfg_configuration import log_level
from capmfg.params import sample_initial_measure, validate, validate_numerics
from capmfg.serde import (JsonSerDe, dump_json, format_float, read_flow, read_measure, read_value, write_bytes,
                          write_csv, write_flow, write_value)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_HORIZON = 4

MANIFEST_FILE = 'run_manifest.json'


class RunManifest:
    """Semantic inputs of a run (hashed) plus provenance."""

    def __init__(self, command: Sequence[str], config_text: str, seed: int) -> None:
        self.command = list(command)
        self.config_hash = hashlib.sha256(config_text.encode('utf-8')).hexdigest()
        self.seed = seed
        self.started = datetime.datetime.now(datetime.timezone.utc).isoformat()
        self.finished = None  # type: Optional[str]
        self.outputs = []  # type: List[str]

    def finish(self, outputs: Sequence[str]) -> None:
        self.outputs = sorted(outputs)
        self.finished = datetime.datetime.now(datetime.timezone.utc).isoformat()

    def as_dict(self) -> Dict[str, object]:
        import ot
        import scipy
        return {'command': self.command, 'config_hash': self.config_hash, 'seed': self.seed,
                'versions': {'capmfg': capmfg.__version__, 'numpy': np.__version__, 'scipy': scipy.__version__,
                             'pot': ot.__version__, 'python': sys.version.split()[0]},
                'started': self.started, 'finished': self.finished, 'outputs': self.outputs}

    def write(self, directory: str) -> str:
        path = os.path.join(directory, MANIFEST_FILE)
        dump_json(path, self.as_dict())
        return path


def _configuration(path: Optional[str]):
    return FileScenarioConfiguration(path) if path else DefaultScenarioConfiguration()


def _resolved(args):
    params, numerics = _configuration(args.config).resolve()
    if getattr(args, 'threads', None) is not None:
        numerics = numerics.replace(threads=args.threads)
    return validate(params), validate_numerics(numerics)


def _emit(args, header: Sequence[str], rows) -> None:
    out = io.StringIO()
    write_csv(out, header, rows)
    if getattr(args, 'out', None):
        write_bytes(args.out, out.getvalue().encode('utf-8'))
    else:
        sys.stdout.write(out.getvalue())


def cmd_validate(args) -> int:
    """0 when the scenario satisfies every standing assumption, 2 with the violations listed otherwise."""
    _resolved(args)
    print('ok')
    return EXIT_OK


def cmd_horizon(args) -> int:
    params, numerics = _resolved(args)
    constants = horizon_constants(sample_initial_measure(params, numerics), params)
    sys.stdout.write(dump_text(constants.as_dict()))
    return EXIT_OK


def dump_text(value: Dict[str, object]) -> str:
    return JsonSerDe().serialize(value).decode('utf-8') + '\n'


def cmd_solve_mfg(args) -> int:
    """Run directory: flow/, value/, report.json, diagnostics.csv, moments.csv and run_manifest.json."""
    params, numerics = _resolved(args)
    if args.seed is not None:
        numerics = numerics.replace(seed=args.seed)
    manifest = RunManifest(args.argv, scenario_text(params, numerics), numerics.seed)
    mu0 = sample_initial_measure(params, numerics)
    try:
        flow, value, report = solve_mfg(mu0, params, numerics, with_exploitability=not args.skip_exploitability)
    except HorizonViolationException as e:
        print('horizon violation: T={} exceeds T_max={}'.format(e.horizon, e.t_max), file=sys.stderr)
        return EXIT_HORIZON
    os.makedirs(args.out, exist_ok=True)
    outputs = write_flow(os.path.join(args.out, 'flow'), flow)
    outputs += write_value(os.path.join(args.out, 'value'), value)
    report_path = os.path.join(args.out, 'report.json')
    dump_json(report_path, report.as_dict())
    diagnostics_path = os.path.join(args.out, 'diagnostics.csv')
    with io.StringIO() as out:
        write_csv(out, ('iteration', 'gap', 'member', 'gradient_bound'),
                  [(k + 1, float(gap), int(bool(m['p2_ok'] and m['holder_ok'] and m['initial_ok'])), float(bound))
                   for k, (gap, m, bound) in enumerate(zip(report.gaps, report.membership, report.gradient_bounds))])
        write_bytes(diagnostics_path, out.getvalue().encode('utf-8'))
    moments_path = os.path.join(args.out, 'moments.csv')
    traces = flow_moments(flow)
    with io.StringIO() as out:
        write_csv(out, ('t', 'M', 'M2', 'P2', 'min_h_unmasked'),
                  zip(*(traces[k].tolist() for k in ('t', 'M', 'M2', 'P2', 'min_h_unmasked'))))
        write_bytes(moments_path, out.getvalue().encode('utf-8'))
    manifest.finish(outputs + [report_path, diagnostics_path, moments_path])
    manifest.write(args.out)
    print('{} after {} iterations'.format(report.verdict, report.iterations))
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_solve_hjb(args) -> int:
    params, numerics = _resolved(args)
    flow = read_flow(args.mu_flow_dir)
    manifest = RunManifest(args.argv, scenario_text(params, numerics), numerics.seed)
    field = solve_hjb(flow, params, numerics)
    os.makedirs(args.out, exist_ok=True)
    manifest.finish(write_value(os.path.join(args.out, 'value'), field))
    manifest.write(args.out)
    return EXIT_OK


def cmd_hamiltonian_probe(args) -> int:
    """Columns: p, p0, s_bar, H1, dpH1, dppH1 at (x, h) against the scenario's initial law or --measure."""
    params, numerics = _resolved(args)
    mu = read_measure(args.measure) if args.measure else sample_initial_measure(params, numerics)
    rows = []
    for p in np.linspace(args.p_min, args.p_max, args.n):
        terms = h1_breakdown(args.x, args.h, mu, float(p), params)
        rows.append((float(p), terms.p0, terms.s_bar, terms.value, terms.dp, terms.dpp))
    _emit(args, ('p', 'p0', 's_bar', 'H1', 'dpH1', 'dppH1'), rows)
    return EXIT_OK


def cmd_interaction_sweep(args) -> int:
    """Columns: x, F, lower, upper with the bounds (theta/Theta) M and (Theta/theta) M."""
    params, numerics = _resolved(args)
    mu = read_measure(args.measure) if args.measure else sample_initial_measure(params, numerics)
    xs = np.linspace(args.x_min, args.x_max, args.n)
    values = F(xs, mu, params)
    m = moment_M(mu)
    lower = params.theta_lo / params.theta_hi * m
    upper = params.theta_hi / params.theta_lo * m
    _emit(args, ('x', 'F', 'lower', 'upper'), [(float(x), float(v), lower, upper) for x, v in zip(xs, values)])
    return EXIT_OK


def cmd_wasserstein(args) -> int:
    """Prints W_p between two measure CSV files (p in {1, 2})."""
    a = read_measure(args.a)
    b = read_measure(args.b)
    distance = wasserstein2(a, b, args.cap) if args.order == 2 else wasserstein1(a, b, args.cap)
    print(format_float(distance))
    return EXIT_OK


def cmd_hjb_slice(args) -> int:
    """Columns: x, y, w, dx_w, dy_w at the grid time nearest to --t."""
    field = read_value(args.value_dir)
    index = int(np.argmin(np.abs(field.times - args.t)))
    xx, yy = np.meshgrid(field.x_nodes, field.y_nodes, indexing='ij')
    columns = (xx.ravel(), yy.ravel(), field.w[index].ravel(), field.dx_w[index].ravel(),
               field.dy_w[index].ravel())
    _emit(args, ('x', 'y', 'w', 'dx_w', 'dy_w'), [tuple(float(c) for c in row) for row in zip(*columns)])
    return EXIT_OK


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError('expected a positive integer, got {}'.format(text))
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='capmfg', description='Spatial capital-accumulation mean field game solver')
    parser.add_argument('--log-level', choices=('error', 'info', 'debug'), default=None,
                        help='overrides MFG_LOG (default error)')
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    def command(name: str, handler: Callable, help_text: str, config: bool = True) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text, description=help_text)
        if config:
            sub.add_argument('--config', help='scenario file (default scenario when omitted)')
            sub.add_argument('--threads', type=_positive_int, default=None, help='overrides numerics.threads')
        sub.set_defaults(handler=handler)
        return sub

    validate_cmd = command('validate', cmd_validate, 'check a scenario against the standing assumptions', False)
    validate_cmd.add_argument('config', help='scenario file')

    command('horizon', cmd_horizon, 'print K1, K2, T_max and the moment constants of the scenario')

    solve = command('solve-mfg', cmd_solve_mfg, 'solve the equilibrium and write a run directory')
    solve.add_argument('--out', required=True, help='run directory')
    solve.add_argument('--seed', type=int, default=None, help='overrides numerics.seed')
    solve.add_argument('--skip-exploitability', action='store_true', help='skip the challenger suite')

    hjb = command('solve-hjb', cmd_solve_hjb, 'solve the HJB equation along a stored measure flow')
    hjb.add_argument('--mu-flow-dir', required=True, help='flow directory (index.csv + measure CSVs)')
    hjb.add_argument('--out', required=True, help='output directory')

    probe = command('hamiltonian-probe', cmd_hamiltonian_probe,
                    'CSV columns p,p0,s_bar,H1,dpH1,dppH1 over a p-range at fixed (x, h)')
    probe.add_argument('--x', type=float, default=0.0)
    probe.add_argument('--h', type=float, default=1.0)
    probe.add_argument('--p-min', type=float, default=0.0)
    probe.add_argument('--p-max', type=float, default=5.0)
    probe.add_argument('--n', type=int, default=101)
    probe.add_argument('--measure', help='measure CSV (x,h,w); scenario initial law when omitted')
    probe.add_argument('--out', help='CSV file (stdout when omitted)')

    sweep = command('interaction-sweep', cmd_interaction_sweep, 'CSV columns x,F,lower,upper over an x-range')
    sweep.add_argument('--x-min', type=float, default=-4.0)
    sweep.add_argument('--x-max', type=float, default=4.0)
    sweep.add_argument('--n', type=int, default=161)
    sweep.add_argument('--measure', help='measure CSV (x,h,w); scenario initial law when omitted')
    sweep.add_argument('--out', help='CSV file (stdout when omitted)')

    distance = command('wasserstein', cmd_wasserstein, 'print the exact Wasserstein distance of two measure CSVs',
                       False)
    distance.add_argument('a')
    distance.add_argument('b')
    distance.add_argument('--order', type=int, choices=(1, 2), default=2)
    distance.add_argument('--cap', type=int, default=512)

    value_slice = command('hjb-slice', cmd_hjb_slice, 'CSV columns x,y,w,dx_w,dy_w of a stored value field', False)
    value_slice.add_argument('--value-dir', required=True)
    value_slice.add_argument('--t', type=float, default=0.0)
    value_slice.add_argument('--out', help='CSV file (stdout when omitted)')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_VALIDATION if e.code else EXIT_OK
    args.argv = ['capmfg'] + argv
    logging.basicConfig(level=log_level(args.log_level), format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return args.handler(args)
    except ScenarioFileException as e:
        print('error: {}'.format(e), file=sys.stderr)
        return EXIT_IO
    except ParamsValidationException as e:
        print('invalid scenario:', file=sys.stderr)
        for error in e.errors:
            print('  {}'.format(error), file=sys.stderr)
        return EXIT_VALIDATION
    except HorizonViolationException as e:
        print('horizon violation: T={} exceeds T_max={}'.format(e.horizon, e.t_max), file=sys.stderr)
        return EXIT_HORIZON
    except (CflViolationException, SupportSizeExceededException, ValueError) as e:
        print('error: {}'.format(e), file=sys.stderr)
        return EXIT_VALIDATION
    except CapMfgException as e:
        print('error: {}'.format(e), file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print('error: {}'.format(e), file=sys.stderr)
        return EXIT_IO
