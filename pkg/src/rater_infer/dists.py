"""Random variates and log-density kernels.

Parameterization conventions used throughout the package:

* ``Ga(shape, rate)`` for every gamma quantity, so ``Ga(g, g / b)`` has mean ``b``.
* ``IGa(shape, scale)`` for inverse-gamma quantities.
* Normal kernels take a *variance*, never a standard deviation.

Every sampler takes an explicit :class:`numpy.random.Generator` and accepts
broadcastable array parameters, which is how the Gibbs blocks call them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import BadParameter

_LOG_2PI = np.log(2.0 * np.pi)
_TAIL_CUTOFF = 6.0


@dataclass(frozen=True)
class GammaSR:
    """Gamma law in shape-rate form."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise BadParameter(f"gamma needs shape>0 and rate>0, got {self.shape}, {self.rate}")

    @property
    def mean(self):
        return self.shape / self.rate

    @property
    def variance(self):
        return self.shape / self.rate**2


@dataclass(frozen=True)
class InvGammaSR:
    """Inverse-gamma law in shape-scale form."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise BadParameter(f"inverse gamma needs shape>0 and scale>0, got {self.shape}, {self.scale}")

    @property
    def mean(self):
        if self.shape <= 1:
            raise BadParameter("inverse-gamma mean needs shape > 1")
        return self.scale / (self.shape - 1.0)


def _positive(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(arr > 0):
        raise BadParameter(f"{name} must be strictly positive, got {value!r}")
    return arr


def sample_normal(mean, variance, rng, size=None):
    variance = _positive("variance", variance)
    return rng.normal(mean, np.sqrt(variance), size=size)


def sample_gamma(shape, rate, rng, size=None):
    shape = _positive("shape", shape)
    rate = _positive("rate", rate)
    return rng.gamma(shape, 1.0 / rate, size=size)


def sample_inv_gamma(shape, scale, rng, size=None):
    """Draw from ``IGa(shape, scale)`` as the reciprocal of a ``Ga(shape, scale)`` draw."""
    return 1.0 / sample_gamma(shape, scale, rng, size=size)


def sample_beta(a, b, rng, size=None):
    a = _positive("a", a)
    b = _positive("b", b)
    return rng.beta(a, b, size=size)


def sample_categorical(weights, rng):
    """Draw an index with probability proportional to ``weights``.

    A 2-d ``weights`` array is treated as one distribution per row and returns
    one index per row.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise BadParameter("categorical weights must be finite and nonnegative")
    squeeze = w.ndim == 1
    w = np.atleast_2d(w)
    total = w.sum(axis=1)
    if np.any(total <= 0):
        raise BadParameter("categorical weights must contain a positive entry")
    cum = np.cumsum(w, axis=1)
    u = rng.random(w.shape[0]) * total
    idx = (cum <= u[:, None]).sum(axis=1)
    # guard against u landing on the final cumulative sum through rounding
    idx = np.minimum(idx, w.shape[1] - 1)
    # never return a zero-weight slot
    bad = w[np.arange(w.shape[0]), idx] == 0
    if np.any(bad):
        for r in np.flatnonzero(bad):
            nz = np.flatnonzero(w[r] > 0)
            idx[r] = nz[np.searchsorted(nz, idx[r]) - 1] if idx[r] > nz[0] else nz[0]
    return int(idx[0]) if squeeze else idx


def sample_categorical_log(log_weights, rng):
    """Row-wise categorical draw from unnormalized log weights."""
    lw = np.atleast_2d(np.asarray(log_weights, dtype=float))
    m = lw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise BadParameter("each row needs at least one finite log weight")
    return sample_categorical(np.exp(lw - m), rng)


def _tail_draw(a, b, rng):
    """Standard normal truncated to ``(a, b]`` with ``a`` far in the upper tail.

    Exponential proposal on ``(a, b]`` with rate ``(a + sqrt(a^2 + 4)) / 2``,
    accepted with probability ``exp(-(x - rate)^2 / 2)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty(a.shape)
    pending = np.ones(a.shape, dtype=bool)
    lam = 0.5 * (a + np.sqrt(a * a + 4.0))
    width = b - a
    # mass of the proposal inside the window, 1 when b is infinite
    frac = -np.expm1(-lam * np.where(np.isfinite(width), width, np.inf))
    while pending.any():
        idx = np.flatnonzero(pending)
        u = rng.random(idx.size)
        e = -np.log1p(-u * frac[idx]) / lam[idx]
        x = a[idx] + e
        x = np.minimum(x, b[idx])
        accept = rng.random(idx.size) <= np.exp(-0.5 * (x - lam[idx]) ** 2)
        out[idx[accept]] = x[accept]
        pending[idx[accept]] = False
    return out


def _std_truncated(a, b, rng):
    """Standard normal draws truncated to ``(a, b]`` (vectorized)."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    a = a.copy()
    b = b.copy()
    out = np.empty(a.shape)
    upper = a > _TAIL_CUTOFF
    lower = b < -_TAIL_CUTOFF
    if upper.any():
        out[upper] = _tail_draw(a[upper], b[upper], rng)
    if lower.any():
        out[lower] = -_tail_draw(-b[lower], -a[lower], rng)
    mid = ~(upper | lower)
    if mid.any():
        am, bm = a[mid], b[mid]
        # u in (0, 1] keeps the open lower bound unreachable
        u = 1.0 - rng.random(am.shape)
        # work in whichever tail keeps the CDF differences well conditioned
        pos = am > 0
        x = np.empty(am.shape)
        sa = special.ndtr(-am[pos])
        sb = special.ndtr(-bm[pos])
        x[pos] = -special.ndtri(sa - u[pos] * (sa - sb))
        fa = special.ndtr(am[~pos])
        fb = special.ndtr(bm[~pos])
        x[~pos] = special.ndtri(fa + u[~pos] * (fb - fa))
        out[mid] = np.clip(x, am, bm)
    return out


def sample_truncated_normal(mean, variance, lo, hi, rng, size=None):
    """Draw from ``N(mean, variance)`` restricted to ``(lo, hi]``.

    ``lo`` and ``hi`` may be infinite. Standardized bounds beyond 6 use an
    exponential rejection sampler; everything else uses the inverse CDF.
    """
    variance = _positive("variance", variance)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo >= hi):
        raise BadParameter("truncation bounds need lo < hi")
    shape = np.broadcast_shapes(np.shape(mean), variance.shape, lo.shape, hi.shape)
    if size is not None:
        shape = np.broadcast_shapes(shape, tuple(np.atleast_1d(size)))
    mean = np.broadcast_to(np.asarray(mean, dtype=float), shape)
    sd = np.broadcast_to(np.sqrt(variance), shape)
    a = (np.broadcast_to(lo, shape) - mean) / sd
    b = (np.broadcast_to(hi, shape) - mean) / sd
    z = _std_truncated(a, b, rng)
    x = mean + sd * z
    x = np.clip(x, np.nextafter(np.broadcast_to(lo, shape), np.inf), np.broadcast_to(hi, shape))
    return x if x.ndim else float(x)


def log_density(kind, params, x):
    """Exact log density of one of the package's kernels.

    Parameters
    ----------
    kind : {"normal", "gamma", "inv_gamma", "beta"}
    params : tuple
        ``(mean, variance)``, ``(shape, rate)``, ``(shape, scale)`` or ``(a, b)``.
    x : float or array
        Evaluation point(s); points outside the support give ``-inf``.
    """
    x = np.asarray(x, dtype=float)
    if kind == "normal":
        mean, var = params
        var = _positive("variance", var)
        out = -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)
    elif kind == "gamma":
        shape, rate = (_positive("shape", params[0]), _positive("rate", params[1]))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = shape * np.log(rate) - special.gammaln(shape) + (shape - 1) * np.log(x) - rate * x
        out = np.where(x > 0, out, -np.inf)
    elif kind == "inv_gamma":
        shape, scale = (_positive("shape", params[0]), _positive("scale", params[1]))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = shape * np.log(scale) - special.gammaln(shape) - (shape + 1) * np.log(x) - scale / x
        out = np.where(x > 0, out, -np.inf)
    elif kind == "beta":
        a, b = (_positive("a", params[0]), _positive("b", params[1]))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - special.betaln(a, b)
        out = np.where((x > 0) & (x < 1), out, -np.inf)
    else:
        raise BadParameter(f"unknown density kind {kind!r}")
    return float(out) if out.ndim == 0 else out


def normal_logpdf(x, mean, variance):
    """Unchecked normal log density for hot loops."""
    return -0.5 * (_LOG_2PI + np.log(variance) + (x - mean) ** 2 / variance)


def gamma_logpdf(x, shape, rate):
    """Unchecked gamma log density for hot loops (``x > 0`` assumed)."""
    return shape * np.log(rate) - special.gammaln(shape) + (shape - 1) * np.log(x) - rate * x


def _check_digamma_arg(x):
    x = np.asarray(x, dtype=float)
    if not np.all(x > 0):
        raise BadParameter("digamma/trigamma need x > 0")
    return x


def digamma(x):
    """Digamma function, restricted to positive arguments."""
    out = special.psi(_check_digamma_arg(x))
    return float(out) if np.ndim(out) == 0 else out


def trigamma(x):
    """Trigamma function, restricted to positive arguments."""
    out = special.polygamma(1, _check_digamma_arg(x))
    return float(out) if np.ndim(out) == 0 else out
