"""Ensemble weights over site estimates and the global estimator.

The adaptive weights regress the target influence values on the
differences between target and source influence values, penalizing each
source by its squared estimated bias. Influence values live on different
samples, so the regression is stacked over every unit of every included
site:

  * target rows carry the target influence as response and
    ``xi_T - xi_k`` (on-target part of source k) in column k;
  * rows of source k carry a zero response and ``-xi_k`` (own part) in
    column k;
  * ``-sqrt(N) * delta_k`` is added to column k on every row.

With centered influence values the residual sum of squares over any
``n`` of the rows is about ``n * N * (var + (sum eta_k delta_k)^2)``, the
estimated mean squared error of the combination. Weights are solved once
on the treatment effect contrast and shared by both arms unless
``weight_by`` is ``'arm'``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

import fedcausal
from fedcausal import error, numkit, site_estimator, util
from fedcausal.resource import GlobalReport


FIXED_SCHEMES = ('target_only', 'ss', 'ivw')

CONTRAST = 'contrast'
WEIGHT_BY = (CONTRAST, 'arm')


@dataclass(frozen=True, eq=False)
class EnsembleSolution(object):
    site_ids: tuple
    eta: dict
    lam: dict = field(default_factory=dict)
    cv_trace: dict = field(default_factory=dict)
    delta: dict = field(default_factory=dict)
    scheme: str = None

    def weights(self, arm):
        return self.eta[arm]

    def merge(self, other):
        """Combine two single-arm solutions over the same sites."""
        if tuple(self.site_ids) != tuple(other.site_ids):
            raise error.DimensionMismatch('Solutions cover different sites')
        return EnsembleSolution(
            self.site_ids,
            {**self.eta, **other.eta},
            {**self.lam, **other.lam},
            {**self.cv_trace, **other.cv_trace},
            {**self.delta, **other.delta},
            self.scheme or other.scheme)

    def for_both_arms(self, key=CONTRAST):
        """Share the solution stored under ``key`` between arms 0 and 1."""
        return EnsembleSolution(
            self.site_ids,
            {arm: self.eta[key].copy() for arm in (0, 1)},
            {arm: self.lam.get(key) for arm in (0, 1)},
            {arm: list(self.cv_trace.get(key, [])) for arm in (0, 1)},
            {arm: self.delta.get(key) for arm in (0, 1)},
            self.scheme)

    def with_sites(self, site_ids):
        """Widen to ``site_ids`` with zero weight on the sites not solved."""
        index = {site_id: k for k, site_id in enumerate(self.site_ids)}
        missing = [s for s in self.site_ids if s not in site_ids]
        if missing:
            raise error.DimensionMismatch(
                'Solved sites missing from the report: %s' % ', '.join(
                    missing))
        eta = {}
        for arm, weights in self.eta.items():
            widened = np.zeros(len(site_ids))
            for k, site_id in enumerate(site_ids):
                if site_id in index:
                    widened[k] = weights[index[site_id]]
            eta[arm] = widened
        return EnsembleSolution(tuple(site_ids), eta, dict(self.lam),
                                dict(self.cv_trace), dict(self.delta),
                                self.scheme)


def split_estimates(estimates):
    targets = [e for e in estimates if e.is_target]
    if len(targets) != 1:
        raise error.MissingTarget(
            'Expected exactly one target estimate, got %d' % len(targets))
    return targets[0], [e for e in estimates if not e.is_target]


def _ordered(estimates):
    target, sources = split_estimates(estimates)
    return [target] + sources


def site_delta_variance(estimate):
    """Variance of a site's treatment effect estimate from its influence."""
    own = estimate.own(1) - estimate.own(0)
    variance = float(own @ own) / float(estimate['n_k']) ** 2
    if not estimate.is_target:
        on_target = estimate.on_target(1) - estimate.on_target(0)
        variance += float(on_target @ on_target) / \
            float(estimate['n_T']) ** 2
    return variance


def combine_fixed(estimates, scheme):
    estimates = _ordered(estimates)
    site_ids = tuple(e['site_id'] for e in estimates)
    if scheme == 'target_only':
        eta = np.zeros(len(estimates))
        eta[0] = 1.0
    elif scheme == 'ss':
        n = np.array([float(e['n_k']) for e in estimates])
        eta = n / n.sum()
    elif scheme == 'ivw':
        variances = np.array([site_delta_variance(e) for e in estimates])
        if np.any(variances <= 0):
            zero = [s for s, v in zip(site_ids, variances) if v <= 0]
            raise error.ZeroVariance(
                'Sites with zero variance: %s' % ', '.join(zero),
                details={'sites': zero})
        precision = 1.0 / variances
        eta = precision / precision.sum()
    else:
        raise error.SchemaError('Unknown fixed scheme %r' % (scheme,))
    return EnsembleSolution(site_ids, {0: eta, 1: eta.copy()},
                            scheme=scheme)


@dataclass(frozen=True, eq=False)
class StackedDesign(object):
    G: np.ndarray
    r: np.ndarray
    delta: np.ndarray
    site_ids: tuple
    n_total: int

    @property
    def n_rows(self):
        return self.r.shape[0]

    def rows(self, index):
        return StackedDesign(self.G[index], self.r[index], self.delta,
                             self.site_ids, self.n_total)


def _influence(estimate, arm, n_total):
    if arm == CONTRAST:
        own1, on_target1 = site_estimator.influence_values(estimate, 1,
                                                           n_total)
        own0, on_target0 = site_estimator.influence_values(estimate, 0,
                                                           n_total)
        return own1 - own0, on_target1 - on_target0
    return site_estimator.influence_values(estimate, arm, n_total)


def _point(estimate, arm):
    return estimate.delta if arm == CONTRAST else estimate.mu(arm)


def stacked_design(estimates, arm):
    """Stacked regression for one arm, or for ``CONTRAST``."""
    target, sources = split_estimates(estimates)
    n_T = int(target['n_k'])
    N = n_T + sum(int(s['n_k']) for s in sources)
    xi_T, _ = _influence(target, arm, N)
    delta = np.array([_point(s, arm) - _point(target, arm) for s in sources])

    target_block = np.empty((n_T, len(sources)))
    own_blocks = []
    for k, source in enumerate(sources):
        own, on_target = _influence(source, arm, N)
        if on_target.shape[0] != n_T:
            raise error.DimensionMismatch(
                'On-target influence has %d values, target has %d' % (
                    on_target.shape[0], n_T),
                site_id=source['site_id'])
        target_block[:, k] = xi_T - on_target
        block = np.zeros((own.shape[0], len(sources)))
        block[:, k] = -own
        own_blocks.append(block)

    G = np.vstack([target_block] + own_blocks) - \
        math.sqrt(N) * delta[None, :]
    r = np.concatenate([xi_T, np.zeros(N - n_T)])
    return StackedDesign(G, r, delta, tuple(s['site_id'] for s in sources),
                         N)


def _l1_penalties(design, lam):
    # rows * N matches the scale of the residual sum of squares
    scale = 2.0 * design.n_rows * design.n_total * lam
    penalties = np.zeros(design.delta.shape[0])
    nonzero = design.delta != 0
    penalties[nonzero] = scale * design.delta[nonzero] ** 2
    return penalties


def _to_simplex(source_eta):
    source_eta = np.asarray(source_eta, dtype=float)
    total = float(source_eta.sum())
    if total > 1.0:
        return np.concatenate([[0.0], source_eta / total])
    return np.concatenate([[1.0 - total], source_eta])


def _fit_stacked(design, lam):
    if not design.delta.shape[0]:
        return np.array([1.0])
    source_eta = numkit.nnls_coordinate_descent(
        design.G, design.r, _l1_penalties(design, lam))
    return _to_simplex(source_eta)


def estimated_risk(design, eta):
    """Half the estimated variance plus squared bias of a weighting."""
    residual = design.r - design.G @ eta[1:]
    return float(residual @ residual) / (
        2.0 * design.n_rows * design.n_total)


def l1_objective(design, eta, lam):
    """The penalized objective the stacked fit minimizes."""
    return estimated_risk(design, eta) + lam * float(
        np.sum(np.abs(eta[1:]) * design.delta ** 2))


def solve_l1_weights(estimates, arm, lam):
    """Adaptive weights at a fixed penalty, target first.

    ``arm`` is 0, 1 or ``CONTRAST``.
    """
    if lam < 0:
        raise error.DataError('Penalty must be nonnegative')
    return _fit_stacked(stacked_design(estimates, arm), lam)


def cross_validate_lambda(estimates, arm, grid=None, n_splits=None, seed=0):
    grid = fedcausal.lambda_grid if grid is None else grid
    n_splits = fedcausal.cv_splits if n_splits is None else n_splits
    grid = sorted(float(lam) for lam in grid)
    if not grid:
        raise error.DataError('Empty lambda grid')

    design = stacked_design(estimates, arm)
    site_ids = (_ordered(estimates)[0]['site_id'],) + design.site_ids
    if not design.site_ids:
        return EnsembleSolution(site_ids, {arm: np.array([1.0])},
                                {arm: None}, {arm: []},
                                {arm: design.delta}, 'l1')

    errors = np.zeros(len(grid))
    for split in range(n_splits):
        rng = np.random.default_rng(util.derive_seed(seed, 'cv', arm, split))
        order = rng.permutation(design.n_rows)
        half = design.n_rows // 2
        train = design.rows(np.sort(order[:half]))
        validation = design.rows(np.sort(order[half:]))
        for i, lam in enumerate(grid):
            eta = _fit_stacked(train, lam)
            errors[i] += estimated_risk(validation, eta)
    errors /= n_splits

    # ties go to the larger penalty
    best = 0
    for i in range(1, len(grid)):
        if errors[i] <= errors[best]:
            best = i
    lam = grid[best]
    eta = _fit_stacked(design, lam)
    util.log_info('Selected ensemble penalty', arm=arm, lam=lam,
                  eta=','.join('%.4f' % w for w in eta))
    return EnsembleSolution(
        site_ids, {arm: eta}, {arm: lam},
        {arm: [(lam_i, float(err)) for lam_i, err in zip(grid, errors)]},
        {arm: design.delta}, 'l1')


def adaptive_weights(estimates, grid=None, n_splits=None, seed=0,
                     weight_by=None):
    weight_by = fedcausal.weight_by if weight_by is None else weight_by
    if weight_by == CONTRAST:
        return cross_validate_lambda(estimates, CONTRAST, grid, n_splits,
                                     seed).for_both_arms()
    if weight_by != 'arm':
        raise error.SchemaError('Unknown weighting %r' % (weight_by,))
    solution = cross_validate_lambda(estimates, 0, grid, n_splits, seed)
    return solution.merge(
        cross_validate_lambda(estimates, 1, grid, n_splits, seed))


def _combined_influence(estimates, solution):
    """Per-block influence of the global treatment effect, unscaled."""
    target, sources = split_estimates(estimates)
    eta = {arm: solution.weights(arm) for arm in (0, 1)}
    target_part = np.zeros(int(target['n_k']))
    for arm, sign in ((1, 1.0), (0, -1.0)):
        part = eta[arm][0] * target.own(arm)
        for k, source in enumerate(sources):
            if eta[arm][k + 1]:
                part = part + eta[arm][k + 1] * source.on_target(arm)
        target_part += sign * part
    blocks = [(target_part, int(target['n_k']))]
    for k, source in enumerate(sources):
        part = eta[1][k + 1] * source.own(1) - eta[0][k + 1] * source.own(0)
        blocks.append((part, int(source['n_k'])))
    return blocks


def global_estimate(estimates, solution, alpha=None, method=None,
                    site_ids=None):
    """Combine the site estimates under ``solution``.

    ``site_ids`` widens the reported weights to sites that took no part,
    each at weight zero.
    """
    alpha = fedcausal.alpha if alpha is None else alpha
    if not 0 < alpha < 1:
        raise error.DataError('alpha must lie in (0, 1)')
    estimates = _ordered(estimates)
    target, sources = estimates[0], estimates[1:]
    if len(solution.site_ids) != len(estimates):
        raise error.DimensionMismatch(
            'Solution has %d weights for %d sites' % (
                len(solution.site_ids), len(estimates)))

    mu = {}
    for arm in (0, 1):
        eta = solution.weights(arm)
        mu_T = target.mu(arm)
        mu[arm] = mu_T + math.fsum(
            eta[k + 1] * (s.mu(arm) - mu_T) for k, s in enumerate(sources))
    delta_hat = mu[1] - mu[0]

    variance = math.fsum(float(part @ part) / float(n) ** 2
                         for part, n in _combined_influence(estimates,
                                                            solution))
    se = math.sqrt(variance)
    z = float(stats.norm.ppf(1.0 - alpha / 2.0))
    ci = [delta_hat - z * se, delta_hat + z * se]

    per_site = []
    for k, estimate in enumerate(estimates):
        summary = estimate.summary()
        summary['eta_a0'] = float(solution.weights(0)[k])
        summary['eta_a1'] = float(solution.weights(1)[k])
        per_site.append(summary)

    shown = solution if site_ids is None else solution.with_sites(site_ids)
    n_total = sum(int(e['n_k']) for e in estimates)
    return GlobalReport(
        method=method or solution.scheme,
        delta_hat=delta_hat,
        mu=[mu[0], mu[1]],
        variance=variance,
        se=se,
        ci=ci,
        alpha=alpha,
        n_total=n_total,
        site_ids=list(shown.site_ids),
        eta={str(arm): [float(w) for w in shown.weights(arm)]
             for arm in (0, 1)},
        lam={str(arm): solution.lam.get(arm) for arm in (0, 1)},
        cv_trace={str(arm): [list(pair)
                             for pair in solution.cv_trace.get(arm, [])]
                  for arm in (0, 1)},
        per_site=per_site,
        excluded=[],
        privacy_ledger=[])
