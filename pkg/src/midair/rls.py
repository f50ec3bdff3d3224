"""Numerically safeguarded recursive least squares.

The recursion runs on pre-scaled regressors/outputs (so it stays healthy at
single precision), decreases the gain whenever the covariance downdate would
push a diagonal entry negative, and limits covariance entries to 1e10 to
survive long stretches of poor excitation under exponential forgetting.

A shared-regressor variant updates several parameter vectors that observe
the same regressor, computing the gain and covariance once; its results are
bit-identical to running independent filters on the same stream.
"""

import math

import numpy as np

COV_LIMIT = 1.0e10
ERROR_MEMORY = 0.2  # s; innovations decay by 63% over this horizon
_MAX_GAIN_HALVINGS = 20


def forgetting_factor(sample_period, memory_time=ERROR_MEMORY):
    """lambda = exp(-Ps / memory_time): 63% innovation decay per memory_time."""
    if not sample_period > 0.0:
        raise ValueError("sample period must be positive")
    return math.exp(-sample_period / memory_time)


def _update_gain_cov(P, xs, lam, dtype):
    """One covariance recursion step; returns (gain, new P).

    The gain is halved (up to 2^-20) if the downdate would make a diagonal
    entry non-positive; the new covariance is symmetrized and entry-limited.
    """
    px = P @ xs
    denom = lam + xs @ px
    k = px / denom
    new_p = (P - np.outer(k, px)) / lam
    for _ in range(_MAX_GAIN_HALVINGS):
        if np.all(np.diagonal(new_p) > 0.0):
            break
        k = k * dtype(0.5)
        new_p = (P - np.outer(k, px)) / lam
    new_p = (new_p + new_p.T) * dtype(0.5)
    np.clip(new_p, -dtype(COV_LIMIT), dtype(COV_LIMIT), out=new_p)
    return k, new_p


class RlsState:
    """Single-output RLS filter state.

    theta is the estimate in the scaled domain; `params` converts back to
    physical units via theta * y_scale / scale.
    """

    def __init__(self, n, p0=100.0, lam=1.0, scale=None, y_scale=1.0,
                 dtype=np.float64):
        if n < 1:
            raise ValueError("parameter dimension must be >= 1")
        if not p0 > 0.0:
            raise ValueError("initial covariance must be positive")
        self.dtype = np.dtype(dtype).type
        self.theta = np.zeros(n, dtype=dtype)
        self.cov = np.eye(n, dtype=dtype) * self.dtype(p0)
        self.lam = self.dtype(lam)
        self.scale = (np.ones(n, dtype=dtype) if scale is None
                      else np.asarray(scale, dtype=dtype))
        self.y_scale = self.dtype(y_scale)

    @property
    def n(self):
        return self.theta.shape[0]

    @property
    def params(self):
        """Estimate in physical units (undoes the pre-scaling)."""
        return np.asarray(self.theta * self.y_scale / self.scale, dtype=np.float64)

    def update(self, x, y):
        return rls_update(self, x, y)


def rls_init(n, p0=100.0, **kwargs):
    """Fresh filter: theta = 0, P = p0 * I (default p0 = 100)."""
    return RlsState(n, p0=p0, **kwargs)


def rls_update(state, x, y):
    """One recursion step; mutates state and returns the innovation.

    Inputs are divided by state.scale / state.y_scale before entering the
    recursion.  Non-finite inputs are rejected without touching the state
    (the returned innovation is NaN).
    """
    x = np.asarray(x, dtype=state.dtype)
    if not (np.all(np.isfinite(x)) and math.isfinite(y)):
        return math.nan
    xs = x / state.scale
    e = state.dtype(y) / state.y_scale - xs @ state.theta
    k, state.cov = _update_gain_cov(state.cov, xs, state.lam, state.dtype)
    state.theta = state.theta + k * e
    return float(e)


class SharedRlsState:
    """m parameter vectors sharing one regressor, covariance, and scale set.

    thetas has shape (m, n), one contiguous row per output, so each output's
    arithmetic is the exact sequence an independent filter would execute.
    y_scale may be scalar or per-output.
    """

    def __init__(self, n, m, p0=100.0, lam=1.0, scale=None, y_scale=1.0,
                 dtype=np.float64):
        if n < 1 or m < 1:
            raise ValueError("dimensions must be >= 1")
        self.dtype = np.dtype(dtype).type
        self.m = m
        self.thetas = np.zeros((m, n), dtype=dtype)
        self.cov = np.eye(n, dtype=dtype) * self.dtype(p0)
        self.lam = self.dtype(lam)
        self.scale = (np.ones(n, dtype=dtype) if scale is None
                      else np.asarray(scale, dtype=dtype))
        self.y_scale = np.broadcast_to(
            np.asarray(y_scale, dtype=dtype), (m,)).copy()

    @property
    def n(self):
        return self.thetas.shape[1]

    @property
    def params(self):
        """(m, n) estimates in physical units, one row per output."""
        out = self.thetas * (self.y_scale[:, np.newaxis] / self.scale[np.newaxis, :])
        return np.asarray(out, dtype=np.float64)

    def update(self, x, ys):
        return shared_rls_update(self, x, ys)


def shared_rls_update(state, x, ys):
    """Update all outputs with one gain/covariance computation.

    Returns the m innovations; rejects non-finite input without state
    change (all-NaN innovations).
    """
    x = np.asarray(x, dtype=state.dtype)
    ys = np.asarray(ys, dtype=state.dtype)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(ys))):
        return np.full(state.m, np.nan)
    xs = x / state.scale
    es = [ys[j] / state.y_scale[j] - xs @ state.thetas[j] for j in range(state.m)]
    k, state.cov = _update_gain_cov(state.cov, xs, state.lam, state.dtype)
    for j in range(state.m):
        state.thetas[j] = state.thetas[j] + k * es[j]
    return np.array(es, dtype=np.float64)
