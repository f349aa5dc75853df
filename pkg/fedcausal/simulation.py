"""Simulated multi-site data and per-method candidate model sets.

Covariates are skew normal per site and covariate. Outcome and treatment
models use either the raw covariates X or the standardized Kang-Schafer
transforms Z, never both. The treatment does not enter the outcome, so
the true effect is zero.
"""

import os
import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import special

from fedcausal import error, util
from fedcausal.features import kang_schafer
from fedcausal.resource import CandidateSpec
from fedcausal.site_estimator import SiteFrame


PRESET_DIR = os.path.join(os.path.dirname(__file__), 'presets')
PRESETS = ('c0', 'c05', 'c1', 'mismatch')

METHODS = ('target', 'ss', 'ivw', 'aipw_l1', 'mr_l1')

OUTCOME_INTERCEPT = 210.0


@dataclass(frozen=True)
class ScenarioSpec(object):
    name: str
    K: int
    n: tuple
    skew: tuple
    dgp_assignment: tuple
    mismatch: bool
    beta_x: tuple
    beta_z: tuple
    alpha_x: tuple
    alpha_z: tuple
    z_center: tuple
    z_scale: tuple
    target_beta_x: tuple = None
    target_alpha_x: tuple = None
    shared_covariates: int = 2
    replications: int = 500
    seed: int = 0
    true_effect: float = 0.0

    def __post_init__(self):
        if len(self.n) != self.K or len(self.dgp_assignment) != self.K or \
                len(self.skew) != self.K:
            raise error.SchemaError(
                'Scenario %s: n, skew and dgp_assignment need %d entries' % (
                    self.name, self.K))
        if any(kind not in ('X', 'Z') for kind in self.dgp_assignment):
            raise error.SchemaError('dgp_assignment entries must be X or Z')
        if self.dgp_assignment[0] != 'X':
            raise error.SchemaError('The target site must use X')
        if self.replications < 1:
            raise error.SchemaError('replications must be at least 1')
        for row in self.skew:
            for triple in row:
                if len(triple) != 3 or triple[1] <= 0:
                    raise error.SchemaError(
                        'Skew entries are (location, scale > 0, shape)')

    @classmethod
    def from_json(cls, values):
        values = dict(values)
        values.pop('object', None)
        tuples = ('n', 'dgp_assignment', 'beta_x', 'beta_z', 'alpha_x',
                  'alpha_z', 'z_center', 'z_scale', 'target_beta_x',
                  'target_alpha_x')
        for key in tuples:
            if values.get(key) is not None:
                values[key] = tuple(values[key])
        if 'skew' in values:
            values['skew'] = tuple(
                tuple(tuple(float(v) for v in triple) for triple in row)
                for row in values['skew'])
        try:
            return cls(**values)
        except TypeError as err:
            raise error.SchemaError('Invalid scenario: %s' % err)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def site_ids(self):
        return tuple('site%d' % (k + 1) for k in range(self.K))

    @property
    def shared_cols(self):
        if self.mismatch:
            return tuple(range(self.shared_covariates))
        return tuple(range(len(self.beta_x)))


def preset_path(name):
    return os.path.join(PRESET_DIR, '%s.json' % name)


def load_scenario(name_or_path):
    """Load a bundled preset by name or a scenario JSON file by path."""
    path = name_or_path
    if name_or_path in PRESETS:
        path = preset_path(name_or_path)
    with open(path) as fp:
        values = util.json.load(fp)
    return ScenarioSpec.from_json(values)


def sample_skew_normal(xi, omega, a, n, rng):
    """Skew normal draws through the two-normal representation."""
    if omega <= 0:
        raise error.DataError('Skew normal scale must be positive')
    delta = a / np.sqrt(1.0 + a * a)
    u0 = rng.standard_normal(n)
    u1 = rng.standard_normal(n)
    return xi + omega * (delta * np.abs(u0) + np.sqrt(1.0 - delta ** 2) * u1)


def site_rng(seed, replication, site):
    sequence = np.random.SeedSequence([int(seed), int(replication),
                                       int(site)])
    return np.random.Generator(np.random.Philox(sequence))


def standardized_z(spec, X):
    return (kang_schafer(X) - np.asarray(spec.z_center)) / \
        np.asarray(spec.z_scale)


def generate_site(spec, k, rng):
    if not 0 <= k < spec.K:
        raise error.DataError('Site index %d out of range' % k)
    n = spec.n[k]
    X = np.column_stack([
        sample_skew_normal(xi, omega, shape, n, rng)
        for xi, omega, shape in spec.skew[k]])
    noise = rng.standard_normal(n)

    beta_x, alpha_x = spec.beta_x, spec.alpha_x
    if k == 0 and spec.mismatch:
        beta_x = spec.target_beta_x or beta_x
        alpha_x = spec.target_alpha_x or alpha_x

    if spec.dgp_assignment[k] == 'X':
        features, beta, alpha = X, beta_x, alpha_x
    else:
        features, beta, alpha = standardized_z(spec, X), spec.beta_z, \
            spec.alpha_z

    # Y(1) = Y(0): the treatment has no effect
    y = OUTCOME_INTERCEPT + features @ np.asarray(beta) + noise
    p = special.expit(features @ np.asarray(alpha))
    a = (rng.random(n) < p).astype(float)

    if k == 0:
        X = X[:, list(spec.shared_cols)]
        shared = tuple(range(X.shape[1]))
        role = 'target'
    else:
        shared = spec.shared_cols
        role = 'source'
    return SiteFrame(spec.site_ids[k], role, y, a, X, shared)


def generate_sites(spec, replication, seed=None):
    seed = spec.seed if seed is None else seed
    return [generate_site(spec, k, site_rng(seed, replication, k))
            for k in range(spec.K)]


def _specs(prefix, kind, columns=None):
    return [CandidateSpec.build('%s_pi' % prefix, 'treatment', kind,
                                columns),
            CandidateSpec.build('%s_m' % prefix, 'outcome', kind, columns)]


def method_candidates(spec, method):
    """Candidate models per role for one estimation method.

    Every method fits the target on its own covariates. Sources use
    X-only models, restricted to the shared covariates for AIPW-L1 under
    mismatch; MR-L1 mixes an X model and a Kang-Schafer model.
    """
    n_target_cols = len(spec.shared_cols)
    target = _specs('x', 'raw')
    source = _specs('x', 'raw')
    if method == 'aipw_l1' and spec.mismatch:
        source = _specs('v', 'subset', list(spec.shared_cols))
    elif method == 'mr_l1':
        source = _specs('x', 'raw') + _specs('z', 'kangschafer')
        if n_target_cols == 4:
            target = _specs('x', 'raw') + _specs('z', 'kangschafer')
    elif method not in METHODS:
        raise error.SchemaError('Unknown method %r' % (method,))
    return {'target': target, 'source': source}
