"""Derivatives-matching gamma approximations for gamma-shape full conditionals.

Each routine iterates ``a <- A / B`` where ``Ga(A, B)`` matches the first and
second derivatives of the target log density at ``a``. All routines broadcast
over arrays, so every cluster of a sweep is handled in one call; scalar inputs
give scalar outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .dists import digamma, trigamma
from .errors import BadParameter, NumericalFailure

GAMMA_FLOOR = 1e-8
GAMMA_CEIL = 1e6


@dataclass(frozen=True)
class DMInputs:
    """Sufficient statistics for the shape ``gamma`` of a reliability cluster.

    Members satisfy ``x_j ~ Ga(1 + gamma, (1 + gamma) / beta)``, with
    ``X1 = sum(log x_j)`` and ``X2 = sum(x_j)``. The prior is
    ``Ga(prior_shape, prior_rate)``.
    """

    X1: float
    X2: float
    N: float
    beta: float
    prior_shape: float
    prior_rate: float
    eps0: float = 1e-8
    max_iter: int = 10

    def __post_init__(self):
        if np.any(np.asarray(self.N) < 0):
            raise BadParameter("N must be nonnegative")
        if np.any(~(np.asarray(self.beta) > 0)):
            raise BadParameter("beta must be strictly positive")
        if np.any(~(np.asarray(self.prior_shape) > 0)) or np.any(~(np.asarray(self.prior_rate) > 0)):
            raise BadParameter("prior shape and rate must be strictly positive")
        if not self.eps0 > 0 or self.max_iter < 1:
            raise BadParameter("need eps0 > 0 and max_iter >= 1")

    @property
    def T(self):
        N = np.asarray(self.N, dtype=float)
        return self.X2 / self.beta - self.X1 + N * np.log(self.beta) - N


@dataclass(frozen=True)
class DMOutputs:
    U1: float
    U2: float
    iterations_used: int
    converged: bool


def _finish(U1, U2, iters, conv, scalar):
    if scalar:
        return DMOutputs(float(U1), float(U2), int(iters), bool(conv))
    return DMOutputs(U1, U2, iters, conv)


def _iterate(init, update, prior_shape, prior_rate, no_data, eps0, max_iter):
    """Shared fixed-point loop.

    ``update(a)`` returns the matched ``(A, B)`` at shape ``a``. Elements freeze
    once converged; elements whose ``(A, B)`` turn nonpositive or non-finite fall
    back to the prior with ``converged=False``.
    """
    A, B = init
    shape = np.broadcast_shapes(np.shape(A), np.shape(B), np.shape(prior_shape), np.shape(prior_rate))
    scalar = shape == ()
    A = np.array(np.broadcast_to(A, shape), dtype=float)
    B = np.array(np.broadcast_to(B, shape), dtype=float)
    p_shape = np.broadcast_to(np.asarray(prior_shape, dtype=float), shape)
    p_rate = np.broadcast_to(np.asarray(prior_rate, dtype=float), shape)
    no_data = np.broadcast_to(no_data, shape)
    iters = np.zeros(shape, dtype=int)
    conv = np.zeros(shape, dtype=bool)
    failed = np.zeros(shape, dtype=bool)

    # no data: the conditional is the prior itself
    A[no_data] = p_shape[no_data]
    B[no_data] = p_rate[no_data]
    conv[no_data] = True
    failed |= ~no_data & ~((A > 0) & (B > 0) & np.isfinite(A) & np.isfinite(B))
    active = ~(conv | failed)

    for _ in range(max_iter):
        if not active.any():
            break
        a_raw = A[active] / B[active]
        a = np.clip(a_raw, GAMMA_FLOOR, GAMMA_CEIL)
        clipped = a != a_raw
        A_new, B_new = update(a, active)
        ok = (A_new > 0) & (B_new > 0) & np.isfinite(A_new) & np.isfinite(B_new)
        idx = np.flatnonzero(active.ravel())
        iters.ravel()[idx] += 1
        A.ravel()[idx[ok]] = A_new[ok]
        B.ravel()[idx[ok]] = B_new[ok]
        # |a / (A/B) - 1| < eps0 without dividing, since A/B can underflow
        with np.errstate(invalid="ignore", over="ignore"):
            done = ok & ~clipped & (np.abs(a * B_new - A_new) < eps0 * A_new)
        conv.ravel()[idx[done]] = True
        failed.ravel()[idx[~ok | clipped]] = True
        active = ~(conv | failed)

    A[failed] = p_shape[failed]
    B[failed] = p_rate[failed]
    return _finish(A, B, iters, conv, scalar)


def dm_gamma_shape_shifted(inputs):
    """Gamma approximation ``Ga(U1, U2)`` of ``p(gamma | x_1..x_N)`` for reliability clusters."""
    T = np.asarray(inputs.T, dtype=float)
    if not np.all(np.isfinite(T)):
        raise NumericalFailure("non-finite sufficient statistic T in shape update")
    N = np.asarray(inputs.N, dtype=float)
    b0 = np.asarray(inputs.prior_shape, dtype=float)
    Bp = np.asarray(inputs.prior_rate, dtype=float)
    shape = np.broadcast_shapes(T.shape, N.shape, b0.shape, Bp.shape)
    Tb, Nb, b0b, Bb = (np.broadcast_to(v, shape) for v in (T, N, b0, Bp))

    def update(g, active):
        n, t, s0, r0 = Nb[active], Tb[active], b0b[active], Bb[active]
        g1 = 1.0 + g
        U1 = s0 + n * g * g * trigamma(g1) - n * g * g / g1
        U2 = r0 + (U1 - s0) / g - n * np.log(g1) + n * digamma(g1) + t
        return np.asarray(U1, dtype=float), np.asarray(U2, dtype=float)

    init = (b0b + 0.5 * Nb, Bb + Tb)
    return _iterate(init, update, b0b, Bb, Nb == 0, inputs.eps0, inputs.max_iter)


def dm_gamma_shape_plain(sum_log_x, sum_x, N, mean_param, prior_shape, prior_rate, eps0=1e-8, max_iter=10):
    """Gamma approximation for the shape ``a`` of ``x_n ~ Ga(a, a / mean_param)``.

    Parameters
    ----------
    sum_log_x, sum_x : float or array
        ``sum(log x_n)`` and ``sum(x_n)``.
    N : float or array
        Number of terms.
    mean_param : float or array
        The known mean of each ``x_n``.
    prior_shape, prior_rate : float or array
        Gamma prior on ``a``.
    """
    N = np.asarray(N, dtype=float)
    if np.any(N < 0) or np.any(~(np.asarray(mean_param) > 0)):
        raise BadParameter("need N >= 0 and mean_param > 0")
    if not eps0 > 0 or max_iter < 1:
        raise BadParameter("need eps0 > 0 and max_iter >= 1")
    T = np.asarray(sum_x / mean_param - sum_log_x + N * np.log(mean_param) - N, dtype=float)
    if not np.all(np.isfinite(T)):
        raise NumericalFailure("non-finite sufficient statistic T in shape update")
    a0 = np.asarray(prior_shape, dtype=float)
    b0 = np.asarray(prior_rate, dtype=float)
    shape = np.broadcast_shapes(T.shape, N.shape, a0.shape, b0.shape)
    Tb, Nb, a0b, b0b = (np.broadcast_to(v, shape) for v in (T, N, a0, b0))

    def update(a, active):
        n, t, s0, r0 = Nb[active], Tb[active], a0b[active], b0b[active]
        A = s0 - n * a + n * a * a * trigamma(a)
        B = r0 + (A - s0) / a - n * np.log(a) + n * digamma(a) + t
        return np.asarray(A, dtype=float), np.asarray(B, dtype=float)

    init = (a0b + 0.5 * Nb, b0b + Tb)
    return _iterate(init, update, a0b, b0b, Nb == 0, eps0, max_iter)


def inverse_digamma(y, n_newton=6):
    """Solve ``digamma(x) = y`` for ``x > 0`` by Newton's method."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        x = np.where(y >= -2.22, np.exp(y) + 0.5, -1.0 / (y - digamma(1.0)))
    for _ in range(n_newton):
        x = x - (digamma(x) - y) / trigamma(x)
        x = np.maximum(x, GAMMA_FLOOR)
    return x


def dm_gamma_shape_known_rate(sum_log_x, N, rate, prior_shape, prior_rate, eps0=1e-8, max_iter=10):
    """Gamma approximation for the shape ``a`` of ``x_n ~ Ga(a, rate)`` with a known rate.

    Far from the mode the matched rate can be negative, so the iteration starts
    at the likelihood root ``digamma(a) = log(rate) + mean(log x)``.
    """
    N = np.asarray(N, dtype=float)
    if np.any(N < 0) or np.any(~(np.asarray(rate) > 0)):
        raise BadParameter("need N >= 0 and rate > 0")
    q = np.asarray(prior_shape, dtype=float)
    Q = np.asarray(prior_rate, dtype=float)
    # the linear coefficient of a in the log target, prior rate included
    lin = np.asarray(Q - N * np.log(rate) - sum_log_x, dtype=float)
    if not np.all(np.isfinite(lin)):
        raise NumericalFailure("non-finite sufficient statistic in shape update")
    shape = np.broadcast_shapes(lin.shape, N.shape, q.shape, Q.shape)
    Lb, Nb, qb, Qb = (np.broadcast_to(v, shape) for v in (lin, N, q, Q))

    def update(a, active):
        n, s0, c = Nb[active], qb[active], Lb[active]
        A = s0 + n * a * a * trigamma(a)
        B = (A - s0) / a + n * digamma(a) + c
        return np.asarray(A, dtype=float), np.asarray(B, dtype=float)

    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.log(rate) + np.asarray(sum_log_x, dtype=float) / N
    a_init = np.broadcast_to(inverse_digamma(np.where(N > 0, root, 0.0)), shape)
    return _iterate((a_init, np.ones(shape)), update, qb, Qb, Nb == 0, eps0, max_iter)


def true_conditional_logpdf_gamma_shape(gamma, inputs):
    """Unnormalized log full conditional of a reliability-cluster shape ``gamma``."""
    g = np.asarray(gamma, dtype=float)
    N = float(inputs.N)
    T = float(inputs.T)
    b0, B = float(inputs.prior_shape), float(inputs.prior_rate)
    with np.errstate(divide="ignore", invalid="ignore"):
        g1 = 1.0 + g
        out = N * g1 * np.log(g1) - N * special.gammaln(g1) - (T + N) * g1 + (b0 - 1.0) * np.log(g) - B * g
    out = np.where(g > 0, out, -np.inf)
    return float(out) if out.ndim == 0 else out


def gamma_shape_derivatives(gamma, inputs):
    """Analytic first and second derivatives of :func:`true_conditional_logpdf_gamma_shape`."""
    g = np.asarray(gamma, dtype=float)
    N = float(inputs.N)
    b0, B = float(inputs.prior_shape), float(inputs.prior_rate)
    g1 = 1.0 + g
    d1 = N * np.log(g1) - N * digamma(g1) - float(inputs.T) + (b0 - 1.0) / g - B
    d2 = N / g1 - N * trigamma(g1) - (b0 - 1.0) / g**2
    return d1, d2


def plain_conditional_logpdf(a, sum_log_x, sum_x, N, mean_param, prior_shape, prior_rate):
    """Unnormalized log full conditional of ``a`` for ``x_n ~ Ga(a, a / mean_param)``."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            N * a * np.log(a / mean_param)
            - N * special.gammaln(a)
            + a * sum_log_x
            - a * sum_x / mean_param
            + (prior_shape - 1.0) * np.log(a)
            - prior_rate * a
        )
    out = np.where(a > 0, out, -np.inf)
    return float(out) if out.ndim == 0 else out


def known_rate_conditional_logpdf(a, sum_log_x, N, rate, prior_shape, prior_rate):
    """Unnormalized log full conditional of ``a`` for ``x_n ~ Ga(a, rate)``."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            N * a * np.log(rate)
            - N * special.gammaln(a)
            + a * sum_log_x
            + (prior_shape - 1.0) * np.log(a)
            - prior_rate * a
        )
    out = np.where(a > 0, out, -np.inf)
    return float(out) if out.ndim == 0 else out
