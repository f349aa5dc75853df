"""Multiply robust nuisance models by risk-weighted model mixing.

Each candidate is fit on a training split and scored unit by unit on the
validation split. A candidate's weight at validation unit i is the softmax
of its cumulative score over the validation units before i; the final
weight is the average over units. Candidates are then refit on the whole
site sample and the frozen weights are reused for prediction.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

import fedcausal
from fedcausal import error, numkit, util
from fedcausal.error import CandidateFailed
from fedcausal.features import design_matrix


@dataclass(frozen=True, eq=False)
class MixedModel(object):
    kind: str
    specs: tuple
    fits: tuple
    weights: np.ndarray
    split_seed: int
    train_fraction: float

    def predictions(self, X):
        """Per-candidate predictions on the response scale, one row each."""
        rows = []
        for spec, fit in zip(self.specs, self.fits):
            if fit is None:
                rows.append(np.zeros(np.asarray(X).shape[0]))
                continue
            linear = design_matrix(spec['feature_map'], X) @ \
                fit.coefficients
            if self.kind == 'treatment':
                linear = special.expit(linear)
            rows.append(linear)
        return np.vstack(rows)

    def predict(self, X):
        predictions = self.predictions(X)
        used = self.weights > 0
        return self.weights[used] @ predictions[used]


@dataclass(frozen=True, eq=False)
class NuisanceFit(object):
    pi: MixedModel
    m1: MixedModel
    m0: MixedModel
    clip: tuple

    def outcome_model(self, arm):
        return self.m1 if arm == 1 else self.m0


def split_data(frame, fraction=None, seed=0):
    """Seeded train/validation split.

    The validation indices come back in shuffled order; that order is the
    one used for the cumulative mixing scores.
    """
    fraction = fedcausal.train_fraction if fraction is None else fraction
    if not 0 < fraction < 1:
        raise error.DataError('Train fraction must lie in (0, 1)')
    n = frame if isinstance(frame, int) else frame.n
    n_train = int(math.floor(fraction * n))
    if n_train < 1 or n - n_train < 1:
        raise error.TooFewUnits(
            'Cannot split %d units with fraction %g' % (n, fraction),
            site_id=getattr(frame, 'site_id', None))
    order = np.random.default_rng(seed).permutation(n)
    return np.sort(order[:n_train]), order[n_train:]


def cumulative_mixing_weights(scores):
    """Average of per-unit softmax weights over exclusive cumulative scores.

    ``scores`` has one row per candidate and one column per validation
    unit, on the log scale.
    """
    scores = np.asarray(scores, dtype=float)
    prefix = np.zeros_like(scores)
    if scores.shape[1] > 1:
        prefix[:, 1:] = np.cumsum(scores, axis=1)[:, :-1]
    per_unit = special.softmax(prefix, axis=0)
    weights = per_unit.mean(axis=1)
    return weights / weights.sum()


def _fit_candidate(spec, kind, X, y):
    design = design_matrix(spec['feature_map'], X)
    if kind == 'treatment':
        fit = numkit.fit_logistic(design, y)
        if not fit.converged:
            util.log_debug('Treatment candidate hit the iteration cap',
                           candidate=spec['id'], iterations=fit.iterations)
        return fit
    return numkit.fit_ols(design, y)


def _score(spec, kind, fit, X, y, kappa):
    linear = design_matrix(spec['feature_map'], X) @ fit.coefficients
    if kind == 'treatment':
        return y * special.log_expit(linear) + \
            (1.0 - y) * special.log_expit(-linear)
    return -kappa * (y - linear) ** 2


def _failed(spec, err, site_id, stage):
    warnings.warn(
        'Candidate %s failed during %s: %s' % (spec['id'], stage, err),
        CandidateFailed, stacklevel=3)
    util.log_warning('Candidate model failed', candidate=spec['id'],
                     site_id=site_id, stage=stage, reason=str(err))


def _mix(frame, specs, kind, units, y, fraction, seed, kappa):
    specs = tuple(specs)
    if not specs:
        raise error.SchemaError('No %s candidates supplied' % kind,
                                site_id=frame.site_id)
    n_splits = int(fedcausal.mixing_splits or 1)
    X = frame.X[units]
    accumulated = np.zeros(len(specs))

    for split in range(n_splits):
        split_seed = seed if split == 0 else util.derive_seed(seed, split)
        train, val = split_data(len(units), fraction, split_seed)
        if val.shape[0] < 2:
            raise error.TooFewUnits('Validation split has fewer than 2 '
                                    'units', site_id=frame.site_id)
        scores, ok = [], []
        for spec in specs:
            try:
                fit = _fit_candidate(spec, kind, X[train], y[train])
                scores.append(_score(spec, kind, fit, X[val], y[val],
                                     kappa))
                ok.append(True)
            except error.FedCausalError as err:
                _failed(spec, err, frame.site_id, 'mixing')
                scores.append(None)
                ok.append(False)
        if not any(ok):
            raise error.FedCausalError(
                'Every %s candidate failed' % kind, site_id=frame.site_id)
        ok = np.array(ok)
        weights = np.zeros(len(specs))
        weights[ok] = cumulative_mixing_weights(
            [s for s in scores if s is not None])
        accumulated += weights

    weights = accumulated / n_splits

    fits = []
    for j, spec in enumerate(specs):
        if weights[j] == 0:
            fits.append(None)
            continue
        try:
            fits.append(_fit_candidate(spec, kind, X, y))
        except error.FedCausalError as err:
            _failed(spec, err, frame.site_id, 'refit')
            fits.append(None)
            weights[j] = 0.0
    if weights.sum() == 0:
        raise error.FedCausalError(
            'Every %s candidate failed on the full sample' % kind,
            site_id=frame.site_id)
    weights = weights / weights.sum()

    util.log_debug('Mixed candidate models', site_id=frame.site_id,
                   kind=kind, weights=','.join('%.4f' % w for w in weights))
    return MixedModel(kind, specs, tuple(fits), weights, seed,
                      fedcausal.train_fraction if fraction is None
                      else fraction)


def mix_propensity(frame, specs, fraction=None, seed=0):
    units = np.arange(frame.n)
    return _mix(frame, specs, 'treatment', units, frame.a.astype(float),
                fraction, seed, None)


def default_kappa(n_candidates):
    return max(1, int(math.floor(math.log(n_candidates))))


def mix_outcome(frame, arm, specs, fraction=None, seed=0, kappa=None):
    """Outcome model mixture for one arm, fit on units with A = arm."""
    specs = tuple(specs)
    kappa = default_kappa(len(specs)) if kappa is None else kappa
    units = np.flatnonzero(frame.a == arm)
    if units.shape[0] < 4:
        raise error.TooFewUnits(
            'Arm %d has %d units' % (arm, units.shape[0]),
            site_id=frame.site_id)
    return _mix(frame, specs, 'outcome', units, frame.y[units], fraction,
                seed, kappa)


def fit_nuisance(frame, specs, seed=0, fraction=None, kappa=None,
                 clip=None):
    clip = tuple(fedcausal.propensity_clip if clip is None else clip)
    treatment = [s for s in specs if s['target'] == 'treatment']
    outcome = [s for s in specs if s['target'] == 'outcome']
    pi = mix_propensity(
        frame, treatment, fraction,
        util.derive_seed(seed, frame.site_id, 'treatment'))
    m1 = mix_outcome(
        frame, 1, outcome, fraction,
        util.derive_seed(seed, frame.site_id, 'outcome', 1), kappa)
    m0 = mix_outcome(
        frame, 0, outcome, fraction,
        util.derive_seed(seed, frame.site_id, 'outcome', 0), kappa)
    return NuisanceFit(pi, m1, m0, clip)


def predict_propensity(fit, X, arm, clip=True):
    p1 = fit.pi.predict(X)
    p = p1 if arm == 1 else 1.0 - p1
    if clip:
        p = np.clip(p, fit.clip[0], fit.clip[1])
    return p


def clipped_count(fit, X):
    p1 = fit.pi.predict(X)
    return int(np.sum((p1 < fit.clip[0]) | (p1 > fit.clip[1]) |
                      (1.0 - p1 < fit.clip[0]) | (1.0 - p1 > fit.clip[1])))


def predict_outcome(fit, X, arm):
    return fit.outcome_model(arm).predict(X)
