import mock
import numpy as np
from scipy import special

from fedcausal import error, numkit
from fedcausal.test.helper import FedCausalTestCase


def projected_gradient(G, r, penalties, iterations=50000):
    """Slow reference minimizer for the penalized nonnegative problem."""
    Q = G.T @ G
    c = G.T @ r
    step = 1.0 / (2.0 * np.linalg.eigvalsh(Q).max())
    eta = np.zeros(G.shape[1])
    for _ in range(iterations):
        gradient = 2.0 * (Q @ eta - c) + penalties
        eta = np.maximum(0.0, eta - step * gradient)
    return eta


class OLSTests(FedCausalTestCase):

    def test_constant_design(self):
        fit = numkit.fit_ols(np.ones((3, 1)), [2.0, 2.0, 2.0])
        self.assertAlmostEqual(fit.coefficients[0], 2.0, places=12)

    def test_exact_interpolation(self):
        fit = numkit.fit_ols([[1.0, 0.0], [1.0, 1.0]], [0.0, 1.0])
        self.assertArrayAlmostEqual(fit.coefficients, [0.0, 1.0], 1e-12)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(3)
        X = np.column_stack([np.ones(50), rng.normal(size=(50, 2))])
        y = rng.normal(size=50)
        fit = numkit.fit_ols(X, y)
        expected = np.linalg.solve(X.T @ X, X.T @ y)
        self.assertArrayAlmostEqual(fit.coefficients, expected, 1e-8)

    def test_residuals_orthogonal_to_columns(self):
        rng = np.random.default_rng(4)
        X = np.column_stack([np.ones(80), rng.normal(size=(80, 3))])
        y = rng.normal(size=80)
        fit = numkit.fit_ols(X, y)
        residual = y - fit.predict(X)
        self.assertArrayAlmostEqual(X.T @ residual, np.zeros(4), 1e-8)

    def test_duplicate_column_is_rank_deficient(self):
        x = np.arange(10.0)
        X = np.column_stack([np.ones(10), x, x])
        self.assertRaises(error.RankDeficient, numkit.fit_ols, X,
                          np.arange(10.0))

    def test_fewer_rows_than_columns(self):
        self.assertRaises(error.RankDeficient, numkit.fit_ols,
                          np.ones((1, 2)), [1.0])

    def test_response_length_mismatch(self):
        self.assertRaises(error.DimensionMismatch, numkit.fit_ols,
                          np.ones((3, 1)), [1.0, 2.0])


class LogisticTests(FedCausalTestCase):

    def test_recovers_coefficients(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=20000)
        X = np.column_stack([np.ones_like(x), x])
        y = (rng.random(x.shape[0]) <
             special.expit(0.5 - 1.0 * x)).astype(float)
        fit = numkit.fit_logistic(X, y)
        self.assertTrue(fit.converged)
        self.assertArrayAlmostEqual(fit.coefficients, [0.5, -1.0], 0.1)

    def test_intercept_matches_mean_response(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=500)
        X = np.column_stack([np.ones_like(x), x])
        y = (rng.random(500) < special.expit(x)).astype(float)
        fit = numkit.fit_logistic(X, y)
        fitted = special.expit(X @ fit.coefficients)
        self.assertApproximates(fitted.mean(), y.mean(), 1e-8)

    def test_single_class(self):
        X = np.column_stack([np.ones(5), np.arange(5.0)])
        self.assertRaises(error.MissingClass, numkit.fit_logistic, X,
                          np.ones(5))

    def test_non_binary_response(self):
        X = np.column_stack([np.ones(3), np.arange(3.0)])
        self.assertRaises(error.DataError, numkit.fit_logistic, X,
                          [0.0, 1.0, 2.0])

    def test_failed_halving_reports_separation(self):
        X = np.column_stack([np.ones(4), [-2.0, -1.0, 1.0, 2.0]])
        y = np.array([0.0, 1.0, 0.0, 1.0])
        halvings = numkit.fedcausal.max_step_halvings
        with mock.patch.object(numkit, '_bernoulli_loglik',
                               side_effect=[-1.0] +
                               [float('nan')] * halvings):
            self.assertRaises(error.Separated, numkit.fit_logistic, X, y)

    def test_iteration_cap(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=200)
        X = np.column_stack([np.ones_like(x), x])
        y = (rng.random(200) < special.expit(x)).astype(float)
        fit = numkit.fit_logistic(X, y, max_iter=1)
        self.assertFalse(fit.converged)
        self.assertEqual(fit.iterations, 1)


class NewtonTests(FedCausalTestCase):

    def test_linear_root(self):
        root = numkit.newton_solve(lambda x: x - 3.0,
                                   lambda x: np.eye(1), [0.0], 1e-12)
        self.assertAlmostEqual(root[0], 3.0, places=12)

    def test_square_root_of_two(self):
        root = numkit.newton_solve(lambda x: x ** 2 - 2.0,
                                   lambda x: np.diag(2.0 * x), [1.0], 1e-12)
        self.assertAlmostEqual(root[0], np.sqrt(2.0), places=10)

    def test_start_at_root(self):
        root = numkit.newton_solve(lambda x: x - 1.0,
                                   lambda x: np.eye(1), [1.0], 1e-12)
        self.assertEqual(root[0], 1.0)

    def test_singular_jacobian(self):
        err = self.assertRaises(
            error.SingularJacobian, numkit.newton_solve,
            lambda x: x ** 2 + 1.0, lambda x: np.diag(2.0 * x), [1.0],
            1e-12)
        self.assertEqual(err.details['iteration'], 1)

    def test_iteration_cap(self):
        err = self.assertRaises(
            error.NoConvergence, numkit.newton_solve,
            lambda x: x ** 2 - 2.0, lambda x: np.diag(2.0 * x), [100.0],
            1e-12, max_iter=2)
        self.assertEqual(err.iterations, 2)
        self.assertTrue(err.residual_norm > 1e-12)

    def test_tilt_root_does_not_depend_on_start(self):
        rng = np.random.default_rng(17)
        psi = np.column_stack([np.ones(500), rng.normal(size=(500, 2))])
        target_mean = np.array([1.0, 0.3, -0.2])

        def residual(gamma):
            return target_mean - psi.T @ np.exp(-psi @ gamma) / 500

        def jacobian(gamma):
            w = np.exp(-psi @ gamma)
            return (psi * w[:, None]).T @ psi / 500

        tol = 1e-10
        roots = [numkit.newton_solve(residual, jacobian, start, tol)
                 for start in ([0.0, 0.0, 0.0], [0.2, -0.3, 0.1])]
        self.assertArrayAlmostEqual(roots[0], roots[1], 10 * tol)


class NNLSTests(FedCausalTestCase):

    def test_orthogonal_columns_clip_ols(self):
        G = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        r = np.array([2.0, -1.0, 5.0])
        eta = numkit.nnls_coordinate_descent(G, r, [0.0, 0.0])
        self.assertArrayAlmostEqual(eta, [2.0, 0.0], 1e-12)

    def test_infinite_penalty_holds_zero(self):
        G = np.array([[1.0, 0.0], [0.0, 1.0]])
        eta = numkit.nnls_coordinate_descent(G, [1.0, 1.0],
                                             [np.inf, 0.0])
        self.assertArrayAlmostEqual(eta, [0.0, 1.0], 1e-12)

    def test_zero_column_holds_zero(self):
        G = np.array([[0.0, 1.0], [0.0, 2.0]])
        eta = numkit.nnls_coordinate_descent(G, [1.0, 2.0], [0.0, 0.0])
        self.assertArrayAlmostEqual(eta, [0.0, 1.0], 1e-10)

    def test_matches_projected_gradient(self):
        rng = np.random.default_rng(9)
        G = rng.normal(size=(30, 3))
        r = G @ np.array([0.7, -0.4, 0.2]) + 0.1 * rng.normal(size=30)
        penalties = np.array([0.5, 0.0, 1.5])
        eta = numkit.nnls_coordinate_descent(G, r, penalties)
        reference = projected_gradient(G, r, penalties)
        self.assertApproximates(
            numkit.nnls_objective(G, r, penalties, eta),
            numkit.nnls_objective(G, r, penalties, reference), 1e-6)
        self.assertTrue(np.all(eta >= 0))

    def test_kkt_conditions(self):
        rng = np.random.default_rng(10)
        G = rng.normal(size=(40, 4))
        r = rng.normal(size=40)
        penalties = np.array([0.1, 0.2, 0.0, 3.0])
        eta = numkit.nnls_coordinate_descent(G, r, penalties)
        gradient = 2.0 * (G.T @ (G @ eta - r)) + penalties
        for k in range(4):
            if eta[k] > 0:
                self.assertApproximates(gradient[k], 0.0, 1e-6)
            else:
                self.assertTrue(gradient[k] > -1e-6)

    def test_penalty_count_mismatch(self):
        self.assertRaises(error.DimensionMismatch,
                          numkit.nnls_coordinate_descent, np.eye(2),
                          [1.0, 1.0], [0.0])

    def test_negative_penalty(self):
        self.assertRaises(error.DataError,
                          numkit.nnls_coordinate_descent, np.eye(2),
                          [1.0, 1.0], [0.0, -1.0])
