"""Covariate feature maps used by candidate nuisance models."""

import numpy as np

from fedcausal import error


def kang_schafer(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 4:
        raise error.DimensionMismatch(
            'Kang-Schafer transform needs 4 covariate columns, got %s' % (
                X.shape[1] if X.ndim == 2 else X.ndim,))
    x1, x2, x3, x4 = X.T
    return np.column_stack([
        np.exp(x1 / 2.0),
        x2 / (1.0 + np.exp(x1)) + 10.0,
        (x1 * x3 / 25.0 + 0.6) ** 3,
        (x2 + x4 + 20.0) ** 2,
    ])


def apply_feature_map(feature_map, X):
    """Columns for a candidate model, without the intercept."""
    X = np.asarray(X, dtype=float)
    kind = feature_map['kind']
    columns = feature_map.get('columns')
    if columns is not None:
        columns = [int(c) for c in columns]
        if columns and max(columns) >= X.shape[1]:
            raise error.DimensionMismatch(
                'Feature map selects column %d of %d' % (
                    max(columns), X.shape[1]))

    if kind == 'raw':
        return X if columns is None else X[:, columns]
    elif kind == 'subset':
        return X[:, columns]
    elif kind == 'kangschafer':
        return kang_schafer(X if columns is None else X[:, columns])
    raise error.SchemaError('Unknown feature map %r' % (kind,))


def design_matrix(feature_map, X):
    features = apply_feature_map(feature_map, X)
    return np.column_stack([np.ones(features.shape[0]), features])
