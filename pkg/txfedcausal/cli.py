"""Command line entry point.

    fedcausal simulate --scenario c1 --reps 10 --seed 7 --out runs/c1
    fedcausal estimate site1.csv site2.csv --config estimate.json --out out
    fedcausal report runs/c1/replications.csv

Exit codes: 0 ok, 2 input error, 3 degraded run, 4 data semantics error.
"""

from __future__ import print_function

import argparse
import os
import sys

import numpy as np
import pandas as pd
from twisted.internet import defer, task

import fedcausal
from fedcausal import simulation
from fedcausal.pipeline import canonical_method
from fedcausal.resource import (CandidateSpec, FedObjectEncoder,
                                ProtocolConfig)
from fedcausal.site_estimator import SiteFrame
from txfedcausal import error, runtime, simbench, util


EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGRADED = 3
EXIT_DATA = 4

METHOD_ORDER = ('target', 'ss', 'ivw', 'aipw_l1', 'mr_l1')
REPORT_ROWS = (('MAE', 'mae'), ('RMSE', 'rmse'), ('Cov.', 'coverage'),
               ('Len.', 'length'))


class InputError(Exception):

    def __init__(self, message, code=EXIT_INPUT):
        super(InputError, self).__init__(message)
        self.code = code


def _float_list(text):
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma separated numbers')


def _method_list(text):
    methods = [m.strip() for m in text.split(',') if m.strip()]
    unknown = [m for m in methods if m not in METHOD_ORDER and
               m != 'target_only']
    if unknown:
        raise argparse.ArgumentTypeError(
            'unknown methods: %s' % ', '.join(unknown))
    return ['target' if m == 'target_only' else m for m in methods]


def build_parser():
    parser = argparse.ArgumentParser(
        prog='fedcausal',
        description='Federated target average treatment effect estimation')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + fedcausal.VERSION)
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--out', required=True, help='output directory')
    common.add_argument('--alpha', type=float, default=None)
    common.add_argument('--lambda-grid', type=_float_list, default=None,
                        dest='lambda_grid')
    common.add_argument('--basis', choices=('linear', 'linear_plus_squares'),
                        default='linear')

    simulate = sub.add_parser('simulate', parents=[common],
                              help='run a Monte Carlo scenario')
    simulate.add_argument('--scenario', required=True,
                          help='preset name (%s) or JSON path' % (
                              ', '.join(simulation.PRESETS)))
    simulate.add_argument('--methods', type=_method_list,
                          default=list(METHOD_ORDER))
    simulate.add_argument('--reps', type=int, default=None)
    simulate.add_argument('--seed', type=int, default=None)
    simulate.add_argument('--threads', type=int, default=None)

    estimate = sub.add_parser('estimate', parents=[common],
                              help='estimate from site CSV files')
    estimate.add_argument('sites', nargs='+', help='one CSV per site')
    estimate.add_argument('--config', required=True)
    estimate.add_argument('--seed', type=int, default=None)

    report = sub.add_parser('report', help='print a metrics table')
    report.add_argument('replications')
    return parser


def _load_json(path):
    try:
        with open(path) as fp:
            return util.json.load(fp)
    except IOError as err:
        raise InputError('cannot read %s: %s' % (path, err.strerror))
    except ValueError as err:
        raise InputError('%s: invalid JSON at line %s column %s: %s' % (
            path, getattr(err, 'lineno', '?'), getattr(err, 'colno', '?'),
            getattr(err, 'msg', err)))


def _load_scenario(name_or_path):
    if name_or_path in simulation.PRESETS:
        path = simulation.preset_path(name_or_path)
    else:
        path = name_or_path
    try:
        return simulation.ScenarioSpec.from_json(_load_json(path))
    except error.FedCausalError as err:
        raise InputError('%s: %s' % (path, err))


def _prepare_out(path):
    try:
        if not os.path.isdir(path):
            os.makedirs(path)
    except OSError as err:
        raise InputError('cannot create %s: %s' % (path, err.strerror))
    return path


def _write_json(path, obj):
    with open(path, 'w') as fp:
        fp.write(util.json.dumps(obj, sort_keys=True, indent=2,
                                 cls=FedObjectEncoder))
        fp.write('\n')


@defer.inlineCallbacks
def cmd_simulate(args, reactor=None):
    spec = _load_scenario(args.scenario)
    changes = {}
    if args.reps is not None:
        changes['replications'] = args.reps
    if args.seed is not None:
        changes['seed'] = args.seed
    try:
        spec = spec.replace(**changes)
    except error.FedCausalError as err:
        raise InputError(str(err))
    out = _prepare_out(args.out)

    try:
        table = yield simbench.run_scenario(
            spec, args.methods, threads=args.threads, reactor=reactor,
            basis=args.basis, alpha=args.alpha, lambda_grid=args.lambda_grid)
    except error.ReplicationFailure as err:
        print('fedcausal: %s' % err, file=sys.stderr)
        return EXIT_DEGRADED

    table.metrics.to_csv(os.path.join(out, 'metrics.csv'))
    table.replications.to_csv(os.path.join(out, 'replications.csv'),
                              index=False)
    simbench.summarize_sites(table.sites).to_csv(
        os.path.join(out, 'sites.csv'), index=False)
    with open(os.path.join(out, 'ledger.jsonl'), 'w') as fp:
        for method, records in table.ledger:
            runtime.dump_ledger(records, fp, method=method,
                                replication=table.ledger_replication)
    _write_json(os.path.join(out, 'manifest.json'), {
        'command': 'simulate',
        'scenario': spec.name,
        'methods': args.methods,
        'replications': spec.replications,
        'seed': spec.seed,
        'alpha': fedcausal.alpha if args.alpha is None else args.alpha,
        'lambda_grid': list(fedcausal.lambda_grid
                            if args.lambda_grid is None
                            else args.lambda_grid),
        'basis': args.basis,
        'failed_replications': table.failures,
        'version': fedcausal.VERSION,
        'outputs': ['metrics.csv', 'replications.csv', 'sites.csv',
                    'ledger.jsonl', 'manifest.json'],
    })
    print(format_report(table.metrics))
    return EXIT_OK


def read_site_csv(path):
    """Read ``y,a,x1..xp`` into arrays; returns (y, a, X, covariate names)."""
    if not os.path.exists(path):
        raise InputError('%s: no such file' % path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise InputError('%s: empty CSV' % path)
    if not len(frame):
        raise InputError('%s: empty CSV' % path)
    missing = [c for c in ('y', 'a') if c not in frame.columns]
    covariates = [c for c in frame.columns if c not in ('y', 'a')]
    if missing or not covariates:
        raise InputError('%s: header must be y,a,x1..xp' % path)

    values = {}
    for column in frame.columns:
        numeric = pd.to_numeric(frame[column], errors='coerce')
        bad = np.flatnonzero(numeric.isna().to_numpy())
        if bad.size:
            # header is line 1
            raise InputError('%s: non-numeric value %r in column %s at '
                             'row %d' % (path, frame[column].iloc[bad[0]],
                                         column, bad[0] + 2))
        values[column] = numeric.to_numpy(dtype=float)

    a = values['a']
    if not np.all(np.isin(a, (0.0, 1.0))):
        row = int(np.flatnonzero(~np.isin(a, (0.0, 1.0)))[0]) + 2
        raise InputError('%s: treatment must be 0 or 1 (row %d)' % (
            path, row), code=EXIT_DATA)
    exact = pd.read_csv(path, float_precision='round_trip')
    X = exact[covariates].to_numpy(dtype=float)
    return exact['y'].to_numpy(dtype=float), a, X, covariates


def load_frames(paths, target_name, shared_names):
    frames = []
    for path in paths:
        y, a, X, names = read_site_csv(path)
        site_id = os.path.splitext(os.path.basename(path))[0]
        is_target = os.path.basename(path) == os.path.basename(target_name)
        missing = [n for n in shared_names if n not in names]
        if missing:
            raise InputError('%s: missing shared columns %s' % (
                path, ', '.join(missing)))
        shared = [names.index(n) for n in shared_names]
        if is_target:
            X = X[:, shared]
            shared = list(range(len(shared_names)))
        frames.append(SiteFrame(site_id, 'target' if is_target else 'source',
                                y, a, X, shared))
    if not any(f.role == 'target' for f in frames):
        raise InputError('target file %s not among the inputs' % (
            target_name,))
    return frames


def _default_candidates():
    return {
        'target': [CandidateSpec.build('x_pi', 'treatment'),
                   CandidateSpec.build('x_m', 'outcome')],
        'source': [CandidateSpec.build('x_pi', 'treatment'),
                   CandidateSpec.build('x_m', 'outcome')],
    }


@defer.inlineCallbacks
def cmd_estimate(args, reactor=None):
    settings = _load_json(args.config)
    for key in ('target', 'shared_columns'):
        if key not in settings:
            raise InputError('%s: missing %r' % (args.config, key))
    base = os.path.dirname(os.path.abspath(args.config))
    target_path = os.path.join(base, settings['target'])
    paths = list(args.sites)
    if not os.path.exists(target_path) and \
            not any(os.path.basename(p) == os.path.basename(target_path)
                    for p in paths):
        raise InputError('target file %s does not exist' % target_path)

    frames = load_frames(paths, settings['target'],
                         settings['shared_columns'])
    try:
        config = ProtocolConfig.build(
            settings.get('candidates') or _default_candidates(),
            method=canonical_method(settings.get('method', 'mr_l1')),
            basis=args.basis if args.basis != 'linear'
            else settings.get('basis', 'linear'),
            q=len(settings['shared_columns']),
            alpha=args.alpha if args.alpha is not None
            else settings.get('alpha'),
            lambda_grid=args.lambda_grid or settings.get('lambda_grid'),
            seed=args.seed if args.seed is not None
            else settings.get('seed', 0))
    except error.FedCausalError as err:
        raise InputError('%s: %s' % (args.config, err))

    out = _prepare_out(args.out)
    report = yield runtime.run_round(frames, config, reactor=reactor)
    audit = runtime.audit_ledger(report)
    report['audit'] = audit
    _write_json(os.path.join(out, 'report.json'), report)
    with open(os.path.join(out, 'ledger.jsonl'), 'w') as fp:
        runtime.dump_ledger(report['privacy_ledger'], fp)

    print('delta_hat=%.6f se=%.6f ci=[%.6f, %.6f]' % (
        report['delta_hat'], report['se'], report['ci'][0],
        report['ci'][1]))
    if report['excluded']:
        return EXIT_DEGRADED
    return EXIT_OK


def format_report(metrics):
    """Aligned table: one row per metric, one column per method."""
    methods = [m for m in METHOD_ORDER if m in metrics.index] + \
        [m for m in metrics.index if m not in METHOD_ORDER]
    table = pd.DataFrame(
        [[metrics.loc[m, key] for m in methods] for _, key in REPORT_ROWS],
        index=[label for label, _ in REPORT_ROWS], columns=methods)
    return table.to_string(float_format=lambda v: '%.3f' % v)


def cmd_report(args, reactor=None):
    path = args.replications
    if not os.path.exists(path):
        raise InputError('%s: no such file' % path)
    try:
        replications = pd.read_csv(path, float_precision='round_trip')
    except pd.errors.EmptyDataError:
        raise InputError('%s: empty CSV' % path)
    required = ['method', 'delta_hat', 'ci_lo', 'ci_hi', 'covered']
    missing = [c for c in required if c not in replications.columns]
    if missing:
        raise InputError('%s: missing columns %s' % (
            path, ', '.join(missing)))
    if not len(replications):
        raise InputError('%s: no replications' % path)
    truth = float(replications['truth'].iloc[0]) \
        if 'truth' in replications.columns else 0.0
    print(format_report(simbench.summarize(replications, truth)))
    return EXIT_OK


COMMANDS = {
    'simulate': cmd_simulate,
    'estimate': cmd_estimate,
    'report': cmd_report,
}


def main(argv=None, reactor=None):
    """Parse ``argv`` and run a command; fires with the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return defer.succeed(err.code or EXIT_OK)

    if getattr(args, 'threads', None) is not None and args.threads < 1:
        print('fedcausal: --threads must be at least 1', file=sys.stderr)
        return defer.succeed(EXIT_INPUT)

    d = defer.maybeDeferred(COMMANDS[args.command], args, reactor)

    def failed(failure):
        if failure.check(InputError):
            print('fedcausal: %s' % failure.value, file=sys.stderr)
            return failure.value.code
        if failure.check(error.DataError):
            print('fedcausal: %s' % failure.value, file=sys.stderr)
            return EXIT_DATA
        if failure.check(error.FedCausalError):
            print('fedcausal: %s' % failure.value, file=sys.stderr)
            return EXIT_INPUT
        return failure
    return d.addErrback(failed)


def _react(reactor, argv):
    d = main(argv, reactor)

    def done(code):
        if code:
            raise SystemExit(code)
    return d.addCallback(done)


def run():
    task.react(_react, [sys.argv[1:]])
