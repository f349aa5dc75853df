"""Monte Carlo harness over simulated federations.

Each replication generates every site from its own RNG substream, runs one
federation round per method and records the estimate. Replications may
overlap on the reactor while their site computations share a thread pool;
records are sorted before aggregation, so results do not depend on the
number of threads.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from twisted.internet import defer
from twisted.python.threadpool import ThreadPool

import fedcausal
from fedcausal import simulation
from fedcausal.pipeline import canonical_method
from fedcausal.resource import ProtocolConfig
from txfedcausal import error, runtime, util


REPLICATION_COLUMNS = [
    'replication', 'method', 'delta_hat', 'se', 'ci_lo', 'ci_hi', 'covered',
    'eta_a1', 'eta_a0', 'lambda_a1', 'lambda_a0', 'failed_sites',
]

SITE_COLUMNS = ['replication', 'method', 'site_id', 'delta']

MAX_FAILURE_RATE = 0.01


@dataclass(eq=False)
class MetricsTable(object):
    metrics: pd.DataFrame
    replications: pd.DataFrame
    sites: pd.DataFrame
    ledger: list = field(default_factory=list)
    failures: int = 0
    ledger_replication: int = None

    @property
    def n_replications(self):
        return int(self.replications['replication'].nunique()) \
            if len(self.replications) else 0

    def for_method(self, method):
        return self.metrics.loc[method]


def summarize(replications, truth=0.0, methods=None):
    """MAE, RMSE, coverage and mean CI length per method."""
    rows = []
    order = methods or list(dict.fromkeys(replications['method']))
    for method in order:
        group = replications[replications['method'] == method]
        if not len(group):
            continue
        error_ = group['delta_hat'].to_numpy(dtype=float) - truth
        rows.append({
            'method': method,
            'mae': float(np.mean(np.abs(error_))),
            'rmse': float(np.sqrt(np.mean(error_ ** 2))),
            'bias': float(np.mean(error_)),
            'coverage': float(np.mean(group['covered'].astype(float))),
            'length': float(np.mean(group['ci_hi'] - group['ci_lo'])),
            'replications': int(len(group)),
        })
    columns = ['method', 'mae', 'rmse', 'bias', 'coverage', 'length',
               'replications']
    return pd.DataFrame(rows, columns=columns).set_index('method')


def summarize_sites(sites):
    if not len(sites):
        return pd.DataFrame(columns=['method', 'site_id', 'mean', 'sd',
                                     'replications'])
    grouped = sites.groupby(['method', 'site_id'], sort=True)['delta']
    table = grouped.agg(['mean', 'std', 'count']).reset_index()
    return table.rename(columns={'std': 'sd', 'count': 'replications'})


def method_config(spec, method, replication, basis='linear', alpha=None,
                  lambda_grid=None):
    return ProtocolConfig.build(
        simulation.method_candidates(spec, method),
        method=canonical_method(method),
        basis=basis,
        q=len(spec.shared_cols),
        alpha=alpha,
        lambda_grid=lambda_grid,
        seed=util.derive_seed(spec.seed, 'replication', replication))


def _record(replication, method, report, truth):
    lo, hi = report['ci']
    eta = report['eta']
    lam = report['lam']
    return {
        'replication': replication,
        'method': method,
        'delta_hat': report['delta_hat'],
        'se': report['se'],
        'ci_lo': lo,
        'ci_hi': hi,
        'covered': int(lo <= truth <= hi),
        'eta_a1': ';'.join(repr(w) for w in eta['1']),
        'eta_a0': ';'.join(repr(w) for w in eta['0']),
        'lambda_a1': lam['1'],
        'lambda_a0': lam['0'],
        'failed_sites': ';'.join(e['site_id'] for e in report['excluded']),
    }


@defer.inlineCallbacks
def run_replication(spec, replication, methods, pool=None, reactor=None,
                    basis='linear', alpha=None, lambda_grid=None):
    frames = simulation.generate_sites(spec, replication)
    records, sites, ledgers = [], [], []
    for method in methods:
        config = method_config(spec, method, replication, basis, alpha,
                               lambda_grid)
        report = yield runtime.run_round(frames, config, pool, reactor)
        runtime.audit_ledger(report)
        records.append(_record(replication, method, report,
                               spec.true_effect))
        for site in report['per_site']:
            sites.append({'replication': replication, 'method': method,
                          'site_id': site['site_id'],
                          'delta': site['delta']})
        ledgers.append((method, report['privacy_ledger']))
    return replication, records, sites, ledgers


@defer.inlineCallbacks
def run_scenario(spec, methods=None, threads=None, reactor=None,
                 basis='linear', alpha=None, lambda_grid=None):
    """Run every replication of a scenario; fires with a MetricsTable."""
    methods = list(methods or simulation.METHODS)
    threads = fedcausal.threads if threads is None else threads
    pool = None
    if threads > 1:
        if reactor is None:
            from twisted.internet import reactor
        pool = ThreadPool(minthreads=0, maxthreads=threads,
                          name='fedcausal-sites')
        pool.start()
    semaphore = defer.DeferredSemaphore(max(1, threads))

    def attempt(replication):
        d = semaphore.run(run_replication, spec, replication, methods, pool,
                          reactor, basis, alpha, lambda_grid)

        def failed(failure):
            failure.trap(error.FedCausalError)
            util.log_warning('Replication failed', replication=replication,
                             reason=str(failure.value))
            return replication, None, None, None
        return d.addErrback(failed)

    try:
        results = yield defer.gatherResults(
            [attempt(r) for r in range(spec.replications)],
            consumeErrors=True)
    finally:
        if pool is not None:
            pool.stop()

    results.sort(key=lambda result: result[0])
    failed = [r for r, records, _, _ in results if records is None]
    if len(failed) > MAX_FAILURE_RATE * spec.replications:
        raise error.ReplicationFailure(
            '%d of %d replications failed' % (
                len(failed), spec.replications),
            failed=len(failed), total=spec.replications,
            details={'replications': failed})

    records = [row for _, rows, _, _ in results if rows for row in rows]
    site_rows = [row for _, _, rows, _ in results if rows for row in rows]
    ledger, ledger_replication = [], None
    for replication, rows, _, ledgers in results:
        if rows:
            ledger, ledger_replication = ledgers, replication
            break

    replications = pd.DataFrame(records, columns=REPLICATION_COLUMNS)
    sites = pd.DataFrame(site_rows, columns=SITE_COLUMNS)
    metrics = summarize(replications, spec.true_effect, methods)
    util.log_info('Scenario finished', scenario=spec.name,
                  replications=spec.replications, failed=len(failed))
    return MetricsTable(metrics, replications, sites, ledger, len(failed),
                        ledger_replication)
