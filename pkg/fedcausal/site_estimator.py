"""Site-level AIPW estimates and their influence values.

The target site uses a standard AIPW estimator. A source site transports
its estimate to the target population with density ratio weights and a
projection of its outcome model onto the shared covariates, so the only
target information it needs is the target's basis means.
"""

import warnings
from dataclasses import dataclass

import numpy as np

import fedcausal
from fedcausal import density_ratio, error, numkit, util
from fedcausal.error import ExtremeWeights, PositivityWarning
from fedcausal.nuisance import (clipped_count, predict_outcome,
                                predict_propensity)
from fedcausal.resource import SiteEstimate


ROLES = ('target', 'source')


@dataclass(frozen=True, eq=False)
class SiteFrame(object):
    site_id: str
    role: str
    y: np.ndarray
    a: np.ndarray
    X: np.ndarray
    shared_cols: tuple

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        a = np.asarray(self.a, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'shared_cols',
                           tuple(int(c) for c in self.shared_cols))

        if self.role not in ROLES:
            raise error.DataError('Unknown site role %r' % (self.role,),
                                  site_id=self.site_id)
        if y.shape[0] == 0:
            raise error.EmptySample('Site has no units',
                                    site_id=self.site_id)
        if a.shape[0] != y.shape[0] or X.shape[0] != y.shape[0]:
            raise error.DimensionMismatch(
                'y, a and X have lengths %d, %d, %d' % (
                    y.shape[0], a.shape[0], X.shape[0]),
                site_id=self.site_id)
        if not self.shared_cols:
            raise error.DataError('No shared covariates',
                                  site_id=self.site_id)
        if max(self.shared_cols) >= X.shape[1]:
            raise error.DimensionMismatch(
                'Shared column %d out of range' % max(self.shared_cols),
                site_id=self.site_id)
        if not np.all(np.isin(a, (0.0, 1.0))):
            raise error.DataError('Treatment must be binary',
                                  site_id=self.site_id)
        if self.role == 'target' and \
                self.shared_cols != tuple(range(X.shape[1])):
            raise error.DataError(
                'Target covariates must be exactly the shared columns',
                site_id=self.site_id)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def V(self):
        return self.X[:, list(self.shared_cols)]


@dataclass(frozen=True, eq=False)
class TauModel(object):
    coefficients: dict

    def predict(self, V, arm):
        V = np.asarray(V, dtype=float)
        design = np.column_stack([np.ones(V.shape[0]), V])
        return design @ self.coefficients[arm]

    def as_list(self):
        return [self.coefficients[0], self.coefficients[1]]


def _propensity(frame, fit, X, arm):
    p = predict_propensity(fit, X, arm)
    clipped = clipped_count(fit, X)
    if clipped:
        warnings.warn(
            '%d propensities clipped to [%g, %g] at site %s' % (
                clipped, fit.clip[0], fit.clip[1], frame.site_id),
            PositivityWarning, stacklevel=3)
        util.log_info('Propensity clipping active', site_id=frame.site_id,
                      count=clipped, lo=fit.clip[0], hi=fit.clip[1])
    return p, clipped


def estimate_target(frame, fit):
    if frame.role != 'target':
        raise error.DataError('estimate_target needs the target frame',
                              site_id=frame.site_id)
    mu, xi = {}, {}
    clipped = 0
    for arm in (0, 1):
        pi, clipped = _propensity(frame, fit, frame.X, arm)
        m = predict_outcome(fit, frame.X, arm)
        phi = (frame.a == arm) / pi * (frame.y - m) + m
        mu[arm] = util.fsum_mean(phi)
        xi[arm] = phi - mu[arm]

    return SiteEstimate(
        site_id=frame.site_id, role='target', mu0=mu[0], mu1=mu[1],
        n_k=frame.n, n_T=frame.n, xi_own=[xi[0], xi[1]], xi_on_target=[],
        tau=None, diagnostics={'clipped': clipped})


def fit_tau(frame, fit, arm=None):
    """Project the outcome model of each arm onto (1, V) by least squares."""
    arms = (0, 1) if arm is None else (arm,)
    design = np.column_stack([np.ones(frame.n), frame.V])
    coefficients = {}
    for a in arms:
        try:
            coefficients[a] = numkit.fit_ols(
                design, predict_outcome(fit, frame.X, a)).coefficients
        except error.RankDeficient as err:
            raise error.RankDeficient(
                'Projection onto shared covariates failed: %s' % err,
                site_id=frame.site_id)
    return TauModel(coefficients)


def _ratio(source, summary, tilt, weights):
    if weights is None:
        if tilt is None:
            tilt = density_ratio.solve_tilt(source.V, summary)
        weights = density_ratio.ratio_weights(tilt, source.V)
    weights = np.asarray(weights, dtype=float)
    if weights.shape[0] != source.n:
        raise error.DimensionMismatch('One ratio weight per unit expected',
                                      site_id=source.site_id)

    capped, cap = density_ratio.cap_weights(weights)
    util.log_debug('Density ratio cap', site_id=source.site_id, cap=cap,
                   capped=int(np.sum(weights > cap)))
    spread = float(capped.max() / capped.mean())
    if spread > fedcausal.extreme_ratio_threshold:
        warnings.warn(
            'Ratio weights at site %s have max/mean %.1f' % (
                source.site_id, spread),
            ExtremeWeights, stacklevel=3)
        util.log_warning('Extreme ratio weights', site_id=source.site_id,
                         max_over_mean=spread)
    return capped, cap, spread


def estimate_source_local(source, summary, fit, tilt=None, weights=None,
                          tau=None):
    """Source estimate from source data and the target's moment summary.

    ``tau`` replaces the projection of the outcome model when given. The
    target part of the influence values is left empty; see
    :func:`attach_target_part`.
    """
    if source.role != 'source':
        raise error.DataError('estimate_source needs a source frame',
                              site_id=source.site_id)
    zeta, cap, spread = _ratio(source, summary, tilt, weights)
    if tau is None:
        tau = fit_tau(source, fit)
    q = len(source.shared_cols)
    target_design = np.concatenate([[1.0], summary.means[1:1 + q]])

    mu, xi = {}, {}
    clipped = 0
    for arm in (0, 1):
        pi, clipped = _propensity(source, fit, source.X, arm)
        m = predict_outcome(fit, source.X, arm)
        t = tau.predict(source.V, arm)
        local = (source.a == arm) / pi * zeta * (source.y - m) + \
            zeta * (m - t)
        local_mean = util.fsum_mean(local)
        mu[arm] = local_mean + float(target_design @ tau.coefficients[arm])
        xi[arm] = local - local_mean

    return SiteEstimate(
        site_id=source.site_id, role='source', mu0=mu[0], mu1=mu[1],
        n_k=source.n, n_T=int(summary['n']), xi_own=[xi[0], xi[1]],
        xi_on_target=[], tau=tau.as_list(),
        diagnostics={'clipped': clipped, 'ratio_cap': cap,
                     'ratio_max_over_mean': spread})


def attach_target_part(estimate, target_V):
    """Evaluate the projection part of a source estimate on target units."""
    if estimate.is_target:
        return estimate
    target_V = np.asarray(target_V, dtype=float)
    parts = []
    for arm in (0, 1):
        coefficients = estimate.tau(arm)
        design = np.column_stack([np.ones(target_V.shape[0]), target_V])
        if design.shape[1] != coefficients.shape[0]:
            raise error.DimensionMismatch(
                'Projection has %d terms, target design %d' % (
                    coefficients.shape[0], design.shape[1]),
                site_id=estimate['site_id'])
        t = design @ coefficients
        parts.append(t - util.fsum_mean(t))
    attached = SiteEstimate.construct_from(dict(estimate))
    attached['xi_on_target'] = parts
    attached['n_T'] = target_V.shape[0]
    return attached


def estimate_source(source, target, fit, tilt=None, weights=None,
                    basis=None, tau=None):
    if basis is None:
        basis = tilt.basis if tilt is not None else \
            density_ratio.BasisSpec.build('linear', target.V.shape[1])
    summary = density_ratio.target_moments(target.V, basis,
                                           site_id=target.site_id)
    local = estimate_source_local(source, summary, fit, tilt, weights, tau)
    return attach_target_part(local, target.V)


def influence_values(estimate, arm, n_total=None):
    """Influence values scaled by N / n_k and N / n_T.

    Returns ``(own, on_target)``; ``on_target`` is empty for the target.
    """
    n_k = int(estimate['n_k'])
    own = estimate.own(arm)
    on_target = estimate.on_target(arm)
    if n_total is None:
        n_total = n_k if estimate.is_target else n_k + int(estimate['n_T'])
    if on_target.size:
        return own * (n_total / n_k), \
            on_target * (n_total / int(estimate['n_T']))
    return own * (n_total / n_k), on_target
