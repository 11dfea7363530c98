"""scikit-learn style wrapper around the throughput complex."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .stationary import throughput_complex


class PhaseDiagram(BaseEstimator, TransformerMixin):
    """Rows of X are marking vectors over ``params``.

    fit computes the cells of the throughput complex (X is ignored apart
    from its width); predict returns a cell index per row (-1 outside every
    cell); transform returns the throughputs of ``transitions``.
    """

    def __init__(self, net=None, params=("NA", "NP"), transitions=None, method=None):
        self.net = net
        self.params = params
        self.transitions = transitions
        self.method = method

    def fit(self, X=None, y=None):
        if self.net is None:
            raise ValueError("PhaseDiagram needs a net")
        if X is not None:
            X = check_array(X)
            if X.shape[1] != len(self.params):
                raise ValueError(f"expected {len(self.params)} columns, got {X.shape[1]}")
        self.cells_ = throughput_complex(self.net, list(self.params), method=self.method)
        self.labels_ = [c.label for c in self.cells_]
        self.transitions_ = list(self.transitions or self.net.transitions)
        self.n_features_in_ = len(self.params)
        return self

    def _locate(self, row):
        for k, cell in enumerate(self.cells_):
            if cell.contains(row):
                return k
        return -1

    def predict(self, X):
        check_is_fitted(self, "cells_")
        X = check_array(X)
        return np.array([self._locate(row) for row in X])

    def transform(self, X):
        check_is_fitted(self, "cells_")
        X = check_array(X)
        out = np.full((X.shape[0], len(self.transitions_)), np.nan)
        for i, row in enumerate(X):
            k = self._locate(row)
            if k < 0:
                continue
            vals = self.cells_[k].evaluate(row)
            out[i] = [float(vals[q]) for q in self.transitions_]
        return out
