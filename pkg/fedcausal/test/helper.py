import os

import numpy as np
from scipy import special
from twisted.trial import unittest

import fedcausal
from fedcausal import pipeline, simulation, util
from fedcausal.numkit import LinearFit
from fedcausal.nuisance import MixedModel, NuisanceFit
from fedcausal.resource import CandidateSpec, ProtocolConfig, SiteEstimate
from fedcausal.site_estimator import SiteFrame


ACCEPTANCE_SKIP = None if os.environ.get('FEDCAUSAL_ACCEPTANCE') else \
    'Set FEDCAUSAL_ACCEPTANCE=1 to run the Monte Carlo checks'


def raw_specs(prefix='x'):
    return [CandidateSpec.build('%s_pi' % prefix, 'treatment'),
            CandidateSpec.build('%s_m' % prefix, 'outcome')]


def make_config(method='mr_l1', q=2, seed=7, **options):
    candidates = {'target': raw_specs(), 'source': raw_specs()}
    return ProtocolConfig.build(candidates, method=method, q=q, seed=seed,
                                **options)


def synthetic_site(site_id, role, n, seed, shift=0.0, effect=1.0,
                   extra_columns=0):
    """Two shared Gaussian covariates, a logistic treatment and a linear
    outcome with a constant treatment effect."""
    rng = np.random.default_rng(seed)
    V = rng.normal(shift, 1.0, size=(n, 2))
    X = np.hstack([V, rng.normal(size=(n, extra_columns))]) \
        if extra_columns else V
    p = special.expit(0.3 * V[:, 0] - 0.2 * V[:, 1])
    a = (rng.random(n) < p).astype(float)
    y = 1.0 + V @ np.array([1.0, 0.5]) + effect * a + rng.normal(size=n)
    shared = (0, 1) if role == 'source' else tuple(range(X.shape[1]))
    return SiteFrame(site_id, role, y, a, X, shared)


def synthetic_federation(n_sources=2, n=400, seed=11, shift=0.3):
    frames = [synthetic_site('target', 'target', n, seed)]
    for k in range(n_sources):
        frames.append(synthetic_site('source%d' % (k + 1), 'source', n,
                                     seed + k + 1, shift=shift))
    return frames


def constant_model(kind, coefficients):
    """A one-candidate mixture with fixed coefficients on raw features."""
    spec_target = 'treatment' if kind == 'treatment' else 'outcome'
    spec = CandidateSpec.build('fixed', spec_target)
    return MixedModel(kind, (spec,),
                      (LinearFit(np.asarray(coefficients, dtype=float)),),
                      np.array([1.0]), 0, 0.5)


def fixed_nuisance(n_columns, m0=0.0, m1=0.0, clip=(0.01, 0.99)):
    """Propensity 1/2 everywhere and constant outcome models."""
    zeros = np.zeros(n_columns)
    return NuisanceFit(
        constant_model('treatment', np.concatenate([[0.0], zeros])),
        constant_model('outcome', np.concatenate([[m1], zeros])),
        constant_model('outcome', np.concatenate([[m0], zeros])),
        clip)


def make_estimate(site_id, role, mu0, mu1, own0, own1, on_target=None,
                  n_T=None):
    own0 = np.asarray(own0, dtype=float)
    own1 = np.asarray(own1, dtype=float)
    if role == 'source' and on_target is None:
        on_target = [np.zeros(n_T), np.zeros(n_T)]
    return SiteEstimate(
        site_id=site_id, role=role, mu0=mu0, mu1=mu1, n_k=own0.shape[0],
        n_T=n_T if n_T is not None else own0.shape[0],
        xi_own=[own0, own1], xi_on_target=on_target or [],
        tau=[[0.0, 0.0], [0.0, 0.0]] if role == 'source' else None)


class FedCausalTestCase(unittest.SynchronousTestCase):
    RESTORE_ATTRIBUTES = ('log', 'propensity_clip', 'train_fraction',
                          'mixing_splits', 'lambda_grid', 'cv_splits',
                          'alpha', 'threads', 'weight_by')

    def setUp(self):
        super(FedCausalTestCase, self).setUp()

        self._fedcausal_original_attributes = {}

        for attr in self.RESTORE_ATTRIBUTES:
            self._fedcausal_original_attributes[attr] = getattr(fedcausal,
                                                                attr)

    def tearDown(self):
        super(FedCausalTestCase, self).tearDown()

        for attr in self.RESTORE_ATTRIBUTES:
            setattr(fedcausal, attr,
                    self._fedcausal_original_attributes[attr])

    def assertArrayAlmostEqual(self, first, second, tol=1e-8):
        first = np.asarray(first, dtype=float)
        second = np.asarray(second, dtype=float)
        self.assertEqual(first.shape, second.shape)
        gap = float(np.max(np.abs(first - second))) if first.size else 0.0
        if gap > tol:
            raise self.failureException(
                'Arrays differ by %g (> %g):\n%r\n%r' % (gap, tol, first,
                                                         second))

    def warningsOf(self, category):
        return [w for w in self.flushWarnings()
                if issubclass(w['category'], category)]


def scenario_config(spec, method, replication):
    """Protocol config for one simulated replication of ``spec``."""
    return ProtocolConfig.build(
        simulation.method_candidates(spec, method),
        method=pipeline.canonical_method(method),
        q=len(spec.shared_cols),
        seed=util.derive_seed(spec.seed, 'replication', replication))
