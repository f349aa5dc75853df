"""Direct composition of the estimation steps.

The federation runtime calls :func:`local_estimate` on each site and
:func:`finalize` on the coordinator, so composing them here in-process
gives the same floating point results as a federated round.
"""

import warnings

from fedcausal import density_ratio, error, federation, nuisance, util
from fedcausal import site_estimator
from fedcausal.error import AllSourcesFailed
from fedcausal.resource import BasisSpec


METHOD_ALIASES = {'target': 'target_only'}


def canonical_method(name):
    return METHOD_ALIASES.get(name, name)


def find_target(frames):
    targets = [f for f in frames if f.role == 'target']
    if len(targets) != 1:
        raise error.MissingTarget(
            'Expected exactly one target site, got %d' % len(targets))
    return targets[0]


def site_basis(config):
    return BasisSpec.construct_from(dict(config['basis']))


def target_summary(target_frame, config):
    return density_ratio.target_moments(
        target_frame.V, site_basis(config), site_id=target_frame.site_id)


def local_estimate(frame, config, summary=None):
    """Everything one site computes from its own rows.

    Sources also need the target's moment summary.
    """
    specs = config.candidates_for(frame.site_id, frame.role)
    fit = nuisance.fit_nuisance(
        frame, specs, seed=int(config['seed']),
        fraction=config.get_option('train_fraction'))
    if frame.role == 'target':
        return site_estimator.estimate_target(frame, fit)

    if summary is None:
        raise error.ProtocolError('Source needs the target moment summary',
                                  site_id=frame.site_id)
    tilt = density_ratio.solve_tilt(frame.V, summary, site_basis(config))
    return site_estimator.estimate_source_local(frame, summary, fit, tilt)


def ensemble(estimates, config, method=None):
    method = canonical_method(method or config['method'])
    if method in federation.FIXED_SCHEMES:
        return federation.combine_fixed(estimates, method)
    return federation.adaptive_weights(
        estimates, grid=config['lambda_grid'],
        n_splits=config.get_option('cv_splits'),
        weight_by=config.get_option('weight_by'),
        seed=util.derive_seed(int(config['seed']), 'ensemble'))


def finalize(estimates, target_frame, config, excluded=(), site_order=None):
    """Coordinator step: attach target parts, ensemble and report.

    Excluded sites stay in the reported site list at weight zero, in
    ``site_order`` when given.
    """
    method = canonical_method(config['method'])
    excluded = list(excluded)
    target, sources = federation.split_estimates(estimates)
    sources = [site_estimator.attach_target_part(s, target_frame.V)
               for s in sources]

    if excluded and not sources and method != 'target_only':
        warnings.warn(
            'All source sites failed; falling back to the target estimate',
            AllSourcesFailed, stacklevel=2)
        util.log_warning('All sources failed', method=method,
                         excluded=len(excluded))
        method = 'target_only'

    if site_order is None:
        site_order = [s['site_id'] for s in sources] + \
            [e['site_id'] for e in excluded]
    site_ids = [target['site_id']] + [
        s for s in site_order if s != target['site_id']]

    estimates = [target] + sources
    solution = ensemble(estimates, config, method)
    report = federation.global_estimate(
        estimates, solution, alpha=float(config['alpha']), method=method,
        site_ids=site_ids)
    report['requested_method'] = canonical_method(config['method'])
    report['excluded'] = excluded
    util.log_info('Global estimate', method=method,
                  delta_hat=report['delta_hat'], se=report['se'],
                  excluded=len(excluded))
    return report


def exclusion(frame, err):
    util.log_warning('Excluding site', site_id=frame.site_id,
                     reason=str(err), error=type(err).__name__)
    return {'site_id': frame.site_id, 'reason': str(err),
            'error': type(err).__name__}


def run_direct(frames, config):
    target = find_target(frames)
    summary = target_summary(target, config)
    estimates = [local_estimate(target, config)]
    excluded = []
    for frame in frames:
        if frame is target:
            continue
        try:
            estimates.append(local_estimate(frame, config, summary))
        except error.FedCausalError as err:
            excluded.append(exclusion(frame, err))
    return finalize(estimates, target, config, excluded,
                    [f.site_id for f in frames])
