"""Exponential tilt density ratios between a target and a source site.

The source only ever sees the target's :class:`MomentSummary`, the mean of
the basis expansion over target units.
"""

from dataclasses import dataclass

import numpy as np

import fedcausal
from fedcausal import error, numkit, util
from fedcausal.resource import BasisSpec, MomentSummary


@dataclass(frozen=True, eq=False)
class TiltCoefficients(object):
    gamma: np.ndarray
    basis: BasisSpec
    residual_norm: float


def expand_basis(V, basis):
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.shape[1] != basis.q:
        raise error.DimensionMismatch(
            'Basis expects %d shared columns, got %d' % (
                basis.q, V.shape[1]))
    blocks = [np.ones((V.shape[0], 1)), V]
    if basis['kind'] == 'linear_plus_squares':
        blocks.append(V ** 2)
    return np.hstack(blocks)


def target_moments(V_target, basis, site_id=None):
    psi = expand_basis(V_target, basis)
    n = psi.shape[0]
    if n < 1:
        raise error.EmptySample('Target sample is empty', site_id=site_id)
    mean_basis = [util.fsum_mean(psi[:, j]) for j in range(psi.shape[1])]
    return MomentSummary(site_id=site_id, n=n, basis=basis,
                         mean_basis=mean_basis)


def _check_summary(summary, basis):
    if not BasisSpec.construct_from(dict(summary['basis'])).same_as(basis):
        raise error.DimensionMismatch(
            'Moment summary basis %s/%s does not match %s/%s' % (
                summary['basis']['kind'], summary['basis']['d'],
                basis['kind'], basis['d']))
    means = summary.means
    if means.shape[0] != int(basis['d']):
        raise error.DimensionMismatch('Moment summary has wrong length')
    return means


def solve_tilt(source_V, target_summary, basis=None, tol=None):
    """Solve the moment matching equation for the tilt coefficients.

    Newton iterations start from gamma = 0, the no-shift solution.
    """
    if basis is None:
        basis = BasisSpec.construct_from(dict(target_summary['basis']))
    tol = fedcausal.tilt_tol if tol is None else tol
    target_mean = _check_summary(target_summary, basis)
    psi = expand_basis(source_V, basis)
    n = psi.shape[0]
    if n < int(basis['d']):
        raise error.TooFewUnits(
            'Source has %d units for a %d-term basis' % (n, basis['d']))

    def residual(gamma):
        with np.errstate(over='ignore'):
            w = np.exp(-psi @ gamma)
        return target_mean - psi.T @ w / n

    def jacobian(gamma):
        with np.errstate(over='ignore'):
            w = np.exp(-psi @ gamma)
        return (psi * w[:, None]).T @ psi / n

    gamma = numkit.newton_solve(residual, jacobian,
                                np.zeros(psi.shape[1]), tol)
    norm = float(np.max(np.abs(residual(gamma))))
    util.log_debug('Solved density ratio tilt', d=basis['d'],
                   residual_norm=norm)
    return TiltCoefficients(gamma, basis, norm)


def ratio_weights(coeffs, source_V):
    psi = expand_basis(source_V, coeffs.basis)
    if psi.shape[1] != coeffs.gamma.shape[0]:
        raise error.DimensionMismatch('Tilt coefficients do not fit basis')
    return np.exp(-psi @ coeffs.gamma)


def cap_weights(weights, quantile=None, multiplier=None):
    """Truncate ratio weights at a multiple of a high quantile."""
    quantile = fedcausal.ratio_cap_quantile if quantile is None \
        else quantile
    multiplier = fedcausal.ratio_cap_multiplier if multiplier is None \
        else multiplier
    weights = np.asarray(weights, dtype=float)
    cap = float(np.quantile(weights, quantile) * multiplier)
    capped = np.minimum(weights, cap)
    return capped, cap


def ipsw_weights(source_V, target_V, basis):
    """Inverse probability of selection weights for source units.

    A logistic site membership model on the pooled sample gives
    P(source | V); the returned weights are (1 - p) / p on source units.
    """
    source_psi = expand_basis(source_V, basis)
    target_psi = expand_basis(target_V, basis)
    design = np.vstack([source_psi, target_psi])
    membership = np.concatenate([np.ones(source_psi.shape[0]),
                                 np.zeros(target_psi.shape[0])])
    fit = numkit.fit_logistic(design, membership)
    if not fit.converged:
        util.log_warning('Selection model did not converge',
                         iterations=fit.iterations)
    # (1 - p) / p on the logit scale
    return np.exp(-(source_psi @ fit.coefficients))
