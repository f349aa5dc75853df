import numpy as np
from scipy import special

import fedcausal
from fedcausal import error, nuisance
from fedcausal.error import CandidateFailed
from fedcausal.numkit import LinearFit
from fedcausal.resource import CandidateSpec
from fedcausal.site_estimator import SiteFrame
from fedcausal.test.helper import (ACCEPTANCE_SKIP, FedCausalTestCase,
                                   fixed_nuisance, raw_specs, synthetic_site)


def two_column_site(n, seed, treatment_slope=1.5, outcome_slope=3.0):
    """Column 0 drives treatment and outcome, column 1 is noise."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    a = (rng.random(n) < special.expit(treatment_slope * X[:, 0])) \
        .astype(float)
    y = 2.0 + outcome_slope * X[:, 0] + rng.normal(size=n)
    return SiteFrame('site', 'target', y, a, X, (0, 1))


class SplitDataTests(FedCausalTestCase):

    def test_even_split(self):
        train, val = nuisance.split_data(10, 0.5, seed=1)
        self.assertEqual(len(train), 5)
        self.assertEqual(len(val), 5)
        self.assertEqual(sorted(np.concatenate([train, val])),
                         list(range(10)))

    def test_odd_split_rounds_down(self):
        train, val = nuisance.split_data(7, 0.5, seed=1)
        self.assertEqual((len(train), len(val)), (3, 4))

    def test_same_seed_same_split(self):
        first = nuisance.split_data(50, 0.5, seed=99)
        second = nuisance.split_data(50, 0.5, seed=99)
        self.assertEqual(list(first[0]), list(second[0]))
        self.assertEqual(list(first[1]), list(second[1]))

    def test_single_unit(self):
        self.assertRaises(error.TooFewUnits, nuisance.split_data, 1, 0.5)

    def test_bad_fraction(self):
        self.assertRaises(error.DataError, nuisance.split_data, 10, 1.0)


class MixingWeightsTests(FedCausalTestCase):

    def test_identical_scores_split_evenly(self):
        scores = np.tile(np.linspace(-2.0, -0.1, 20), (2, 1))
        weights = nuisance.cumulative_mixing_weights(scores)
        self.assertEqual(list(weights), [0.5, 0.5])

    def test_single_candidate(self):
        weights = nuisance.cumulative_mixing_weights([[-1.0, -3.0, -0.5]])
        self.assertEqual(list(weights), [1.0])

    def test_candidate_order_does_not_matter(self):
        rng = np.random.default_rng(14)
        scores = -rng.random((3, 40))
        weights = nuisance.cumulative_mixing_weights(scores)
        permuted = nuisance.cumulative_mixing_weights(scores[[2, 0, 1]])
        self.assertArrayAlmostEqual(permuted, weights[[2, 0, 1]], 1e-15)

    def test_first_unit_is_uniform(self):
        scores = np.array([[-100.0], [0.0]])
        weights = nuisance.cumulative_mixing_weights(scores)
        self.assertArrayAlmostEqual(weights, [0.5, 0.5], 0.0)

    def test_large_scores_stay_finite(self):
        scores = np.vstack([np.full(100000, -1000.0),
                            np.full(100000, -1001.0)])
        weights = nuisance.cumulative_mixing_weights(scores)
        self.assertTrue(np.all(np.isfinite(weights)))
        self.assertTrue(weights[0] > 0.99)


class MixPropensityTests(FedCausalTestCase):

    def test_single_candidate_gets_full_weight(self):
        frame = two_column_site(300, 15)
        model = nuisance.mix_propensity(frame, raw_specs()[:1], seed=3)
        self.assertEqual(list(model.weights), [1.0])

    def test_duplicate_candidates_split_evenly(self):
        frame = two_column_site(300, 16)
        specs = [CandidateSpec.build('first', 'treatment'),
                 CandidateSpec.build('second', 'treatment')]
        model = nuisance.mix_propensity(frame, specs, seed=3)
        self.assertEqual(list(model.weights), [0.5, 0.5])

    def test_true_model_dominates_noise(self):
        frame = two_column_site(2000, 17)
        specs = [CandidateSpec.build('true', 'treatment', 'subset', [0]),
                 CandidateSpec.build('noise', 'treatment', 'subset', [1])]
        model = nuisance.mix_propensity(frame, specs, seed=4)
        self.assertTrue(model.weights[0] > 0.9, model.weights)

    def test_failed_candidate_gets_zero_weight(self):
        frame = two_column_site(200, 18)
        specs = [CandidateSpec.build('raw', 'treatment'),
                 CandidateSpec.build('ks', 'treatment', 'kangschafer')]
        model = nuisance.mix_propensity(frame, specs, seed=5)
        self.assertEqual(list(model.weights), [1.0, 0.0])
        self.assertTrue(self.warningsOf(CandidateFailed))

    def test_every_candidate_failed(self):
        frame = two_column_site(200, 19)
        specs = [CandidateSpec.build('ks', 'treatment', 'kangschafer')]
        self.assertRaises(error.FedCausalError, nuisance.mix_propensity,
                          frame, specs)
        self.flushWarnings()

    def test_repeated_splits_average(self):
        fedcausal.mixing_splits = 3
        frame = two_column_site(400, 20)
        specs = [CandidateSpec.build('true', 'treatment', 'subset', [0]),
                 CandidateSpec.build('noise', 'treatment', 'subset', [1])]
        model = nuisance.mix_propensity(frame, specs, seed=6)
        self.assertAlmostEqual(model.weights.sum(), 1.0, places=12)
        self.assertTrue(model.weights[0] > 0.5)


class MixOutcomeTests(FedCausalTestCase):

    def test_true_model_dominates(self):
        frame = two_column_site(2000, 21)
        specs = [CandidateSpec.build('true', 'outcome', 'subset', [0]),
                 CandidateSpec.build('wrong', 'outcome', 'subset', [1])]
        model = nuisance.mix_outcome(frame, 1, specs, seed=7, kappa=1)
        self.assertTrue(model.weights[0] > 0.9, model.weights)

    def test_too_few_arm_units(self):
        frame = SiteFrame('s', 'target', np.arange(6.0),
                          [1, 1, 1, 0, 0, 0], np.arange(6.0)[:, None],
                          (0,))
        err = self.assertRaises(error.TooFewUnits, nuisance.mix_outcome,
                                frame, 1, raw_specs()[1:])
        self.assertEqual(err.site_id, 's')

    def test_default_kappa(self):
        self.assertEqual(nuisance.default_kappa(1), 1)
        self.assertEqual(nuisance.default_kappa(2), 1)
        self.assertEqual(nuisance.default_kappa(8), 2)


class RiskDominationTests(FedCausalTestCase):

    skip = ACCEPTANCE_SKIP

    def test_mixture_is_close_to_best_candidate(self):
        specs = [CandidateSpec.build('true', 'outcome', 'subset', [0]),
                 CandidateSpec.build('wrong', 'outcome', 'subset', [1])]
        X = np.random.default_rng(22).normal(size=(2000, 2))
        truth = 2.0 + 3.0 * X[:, 0]
        errors = {'mixture': [], 'true': [], 'wrong': []}
        for replication in range(100):
            frame = two_column_site(1000, 300 + replication)
            models = {'mixture': nuisance.mix_outcome(frame, 1, specs,
                                                      seed=replication)}
            for spec in specs:
                models[spec['id']] = nuisance.mix_outcome(
                    frame, 1, [spec], seed=replication)
            for name, model in models.items():
                errors[name].append(np.mean((model.predict(X) - truth) ** 2))
        best = min(np.mean(errors['true']), np.mean(errors['wrong']))
        self.assertTrue(np.mean(errors['mixture']) <= 1.1 * best,
                        (np.mean(errors['mixture']), best))


class PredictionTests(FedCausalTestCase):

    def test_zero_coefficients_give_one_half(self):
        fit = fixed_nuisance(2)
        X = np.random.default_rng(22).normal(size=(5, 2))
        self.assertArrayAlmostEqual(
            nuisance.predict_propensity(fit, X, 1), np.full(5, 0.5), 0.0)

    def test_arms_complement(self):
        frame = synthetic_site('t', 'target', 300, 23)
        fit = nuisance.fit_nuisance(frame, raw_specs(), seed=1)
        p1 = nuisance.predict_propensity(fit, frame.X, 1, clip=False)
        p0 = nuisance.predict_propensity(fit, frame.X, 0, clip=False)
        self.assertArrayAlmostEqual(p1 + p0, np.ones(300), 1e-15)

    def test_clipping_bounds(self):
        frame = synthetic_site('t', 'target', 300, 24)
        fit = nuisance.fit_nuisance(frame, raw_specs(), seed=1,
                                    clip=(0.45, 0.55))
        for arm in (0, 1):
            p = nuisance.predict_propensity(fit, frame.X, arm)
            self.assertTrue(p.min() >= 0.45 and p.max() <= 0.55)
        self.assertTrue(nuisance.clipped_count(fit, frame.X) > 0)

    def test_constant_outcome_model(self):
        fit = fixed_nuisance(2, m0=3.5, m1=-1.0)
        X = np.ones((4, 2))
        self.assertArrayAlmostEqual(nuisance.predict_outcome(fit, X, 0),
                                    np.full(4, 3.5), 0.0)
        self.assertArrayAlmostEqual(nuisance.predict_outcome(fit, X, 1),
                                    np.full(4, -1.0), 0.0)

    def test_mixture_is_weighted_average(self):
        specs = (CandidateSpec.build('one', 'outcome'),
                 CandidateSpec.build('two', 'outcome'))
        fits = (LinearFit(np.array([1.0, 2.0])),
                LinearFit(np.array([-1.0, 0.5])))
        X = np.array([[0.0], [1.0], [2.0]])
        mixed = nuisance.MixedModel('outcome', specs, fits,
                                    np.array([0.3, 0.7]), 0, 0.5)
        expected = 0.3 * (1.0 + 2.0 * X[:, 0]) + \
            0.7 * (-1.0 + 0.5 * X[:, 0])
        self.assertArrayAlmostEqual(mixed.predict(X), expected, 1e-14)

        alone = nuisance.MixedModel('outcome', specs, fits,
                                    np.array([1.0, 0.0]), 0, 0.5)
        self.assertArrayAlmostEqual(alone.predict(X), 1.0 + 2.0 * X[:, 0],
                                    0.0)

    def test_fit_nuisance_is_reproducible(self):
        frame = synthetic_site('t', 'target', 300, 25)
        first = nuisance.fit_nuisance(frame, raw_specs(), seed=42)
        second = nuisance.fit_nuisance(frame, raw_specs(), seed=42)
        self.assertArrayAlmostEqual(first.m1.predict(frame.X),
                                    second.m1.predict(frame.X), 0.0)
