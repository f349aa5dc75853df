"""Numerical primitives shared by the estimators.

Every routine here is a pure function of its inputs. Tolerances default to
the configuration variables in :mod:`fedcausal` and are read at call time.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import special

import fedcausal
from fedcausal import error


@dataclass(frozen=True, eq=False)
class LinearFit(object):
    coefficients: np.ndarray
    converged: bool = True
    iterations: int = 0

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.coefficients


def _as_design(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise error.DimensionMismatch('Design matrix must be 2-D')
    if y is not None:
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != X.shape[0]:
            raise error.DimensionMismatch(
                'Design has %d rows but response has %d' % (
                    X.shape[0], y.shape[0]))
    if not np.all(np.isfinite(X)):
        raise error.DataError('Design matrix has non-finite entries')
    return X, y


def fit_ols(X, y, rank_tol=None):
    """Least squares through a thin QR factorization."""
    X, y = _as_design(X, y)
    rank_tol = fedcausal.ols_rank_tol if rank_tol is None else rank_tol
    n, p = X.shape
    if n < p:
        raise error.RankDeficient(
            'Need at least %d rows, got %d' % (p, n))

    q, r = np.linalg.qr(X)
    pivots = np.abs(np.diag(r))
    if pivots.max() == 0 or pivots.min() < rank_tol * pivots.max():
        raise error.RankDeficient(
            'Design is rank deficient (pivot ratio %.3g)' % (
                pivots.min() / pivots.max() if pivots.max() else 0.0))

    coefficients = scipy.linalg.solve_triangular(r, q.T @ y)
    return LinearFit(coefficients, True, 1)


def _bernoulli_loglik(X, y, beta):
    eta = X @ beta
    return float(np.sum(y * special.log_expit(eta) +
                        (1.0 - y) * special.log_expit(-eta)))


def fit_logistic(X, y, max_iter=None, grad_tol=None, max_halvings=None):
    """Maximum likelihood logistic regression by IRLS with step halving.

    Starts from zero coefficients. Returns ``converged=False`` when the
    iteration cap is reached before the gradient is small enough.
    """
    X, y = _as_design(X, y)
    max_iter = fedcausal.logistic_max_iter if max_iter is None else max_iter
    grad_tol = fedcausal.logistic_grad_tol if grad_tol is None else grad_tol
    max_halvings = (fedcausal.max_step_halvings
                    if max_halvings is None else max_halvings)

    classes = np.unique(y)
    if not np.all(np.isin(classes, (0.0, 1.0))):
        raise error.DataError('Logistic response must be binary')
    if classes.size < 2:
        raise error.MissingClass(
            'Logistic response has a single class (%g)' % classes[0])

    beta = np.zeros(X.shape[1])
    ll = _bernoulli_loglik(X, y, beta)

    for iteration in range(max_iter):
        p = special.expit(X @ beta)
        gradient = X.T @ (y - p)
        if np.max(np.abs(gradient)) <= grad_tol:
            return LinearFit(beta, True, iteration)

        w = p * (1.0 - p)
        if np.any(w == 0.0):
            raise error.Separated(
                'Fitted probabilities saturated at 0 or 1',
                details={'iteration': iteration})
        hessian = X.T @ (w[:, None] * X)
        step = np.linalg.lstsq(hessian, gradient, rcond=None)[0]

        t = 1.0
        for _ in range(max_halvings):
            candidate = beta + t * step
            new_ll = _bernoulli_loglik(X, y, candidate)
            if np.isfinite(new_ll) and new_ll >= ll - 1e-12 * max(1.0,
                                                                abs(ll)):
                break
            t /= 2.0
        else:
            raise error.Separated(
                'Step halving failed %d consecutive times' % max_halvings,
                details={'iteration': iteration})

        beta, ll = candidate, new_ll

    p = special.expit(X @ beta)
    gradient = X.T @ (y - p)
    converged = bool(np.max(np.abs(gradient)) <= grad_tol)
    return LinearFit(beta, converged, max_iter)


def _residual_norm(r):
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        return np.inf
    return float(np.max(np.abs(r))) if r.size else 0.0


def newton_solve(residual, jacobian, x0, tol, max_iter=None,
                 max_halvings=None):
    """Damped Newton root finding.

    Each accepted step strictly decreases the infinity norm of the
    residual; a step is halved up to ``max_halvings`` times to get there.
    """
    max_iter = fedcausal.newton_max_iter if max_iter is None else max_iter
    max_halvings = (fedcausal.max_step_halvings
                    if max_halvings is None else max_halvings)

    x = np.array(x0, dtype=float, ndmin=1)
    r = np.asarray(residual(x), dtype=float)
    norm = _residual_norm(r)
    if not np.isfinite(norm):
        raise error.DataError('Residual is not finite at the start point')

    for iteration in range(max_iter):
        if norm <= tol:
            return x

        J = np.atleast_2d(np.asarray(jacobian(x), dtype=float))
        try:
            step = scipy.linalg.solve(J, -r)
        except (np.linalg.LinAlgError, ValueError) as err:
            raise error.SingularJacobian(
                'Jacobian solve failed: %s' % err,
                details={'iteration': iteration})
        if not np.all(np.isfinite(step)):
            raise error.SingularJacobian(
                'Jacobian solve produced non-finite step',
                details={'iteration': iteration})

        t = 1.0
        for _ in range(max_halvings):
            candidate = x + t * step
            with np.errstate(over='ignore', invalid='ignore'):
                candidate_r = np.asarray(residual(candidate), dtype=float)
            candidate_norm = _residual_norm(candidate_r)
            if candidate_norm < norm:
                break
            t /= 2.0
        else:
            raise error.NoConvergence(
                'Damped step could not reduce the residual',
                iterations=iteration, residual_norm=norm)

        x, r, norm = candidate, candidate_r, candidate_norm

    if norm <= tol:
        return x
    raise error.NoConvergence(
        'Newton solve did not converge in %d iterations' % max_iter,
        iterations=max_iter, residual_norm=norm)


def nnls_coordinate_descent(G, r, penalties, tol=None, max_sweeps=None):
    """Minimize ||r - G eta||^2 + sum_k penalties_k eta_k over eta >= 0.

    Works on the Gram form Q = G'G, c = G'r. A coordinate with a zero
    column or an infinite penalty is held at zero.
    """
    G, r = _as_design(G, r)
    tol = fedcausal.nnls_tol if tol is None else tol
    max_sweeps = fedcausal.nnls_max_sweeps if max_sweeps is None \
        else max_sweeps
    penalties = np.asarray(penalties, dtype=float).ravel()
    p = G.shape[1]
    if penalties.shape[0] != p:
        raise error.DimensionMismatch(
            'Expected %d penalties, got %d' % (p, penalties.shape[0]))
    if np.any(penalties < 0) or np.any(np.isnan(penalties)):
        raise error.DataError('Penalties must be nonnegative')

    Q = G.T @ G
    c = G.T @ r
    eta = np.zeros(p)
    active = np.array([Q[k, k] > 0 and np.isfinite(penalties[k])
                       for k in range(p)])

    for sweep in range(max_sweeps):
        max_change = 0.0
        for k in range(p):
            if not active[k]:
                continue
            gradient = Q[k] @ eta - c[k]
            updated = max(0.0, eta[k] - (gradient + penalties[k] / 2.0) /
                          Q[k, k])
            change = abs(updated - eta[k])
            if change > max_change:
                max_change = change
            eta[k] = updated
        if max_change < tol:
            return eta

    raise error.NoConvergence(
        'Coordinate descent did not settle in %d sweeps' % max_sweeps,
        iterations=max_sweeps)


def nnls_objective(G, r, penalties, eta):
    residual = np.asarray(r, dtype=float) - np.asarray(G, dtype=float) @ eta
    penalties = np.asarray(penalties, dtype=float)
    penalty = float(np.sum(np.where(eta > 0, penalties * eta, 0.0)))
    return float(residual @ residual) + penalty
