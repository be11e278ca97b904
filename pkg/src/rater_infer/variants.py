"""Alternative sampling loops: the one-way reduced model and the ordinal probit extension.

Both reuse the subject-side blocks of :mod:`rater_infer.sampler`. The one-way
model replaces raters by a per-observation error mixture; the ordinal model
augments every categorical rating with a latent normal score.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtr

from . import mixture
from .core import ChainState
from .dists import sample_categorical_log, sample_truncated_normal
from .dm import dm_gamma_shape_known_rate
from .errors import BadParameter, NumericalFailure
from .sampler import (
    TINY,
    V_MAX,
    Design,
    DrawRecorder,
    SweepPlan,
    _alloc_logw,
    _cluster_stats,
    _component_weights,
    _draw_shape,
    _floor_var,
    _gamma,
    gibbs_sweep,
    init_state,
    is_retained,
    make_rng,
    two_way_record,
    update_alpha,
    update_G0_hyper,
    update_subject_alloc,
    update_subject_atoms,
    update_V1,
    update_V2,
)

_LOG_2PI = np.log(2.0 * np.pi)

# ======================================================================= one-way


@dataclass
class OneWayState:
    """Chain state of the one-way model.

    The subject side matches :class:`ChainState`. Each observation ``o`` has
    its own error allocation ``c2[o]`` into atoms ``(eta_k, phi2_k)``.
    """

    theta: np.ndarray
    mu: np.ndarray
    omega2: np.ndarray
    V1: np.ndarray
    pi1: np.ndarray
    c1: np.ndarray
    eta: np.ndarray
    phi2: np.ndarray
    V2: np.ndarray
    pi2: np.ndarray
    c2: np.ndarray
    alpha1: float
    alpha2: float
    mu0: float
    S0: float
    w0: float
    W0: float
    eta0: float
    D0: float
    a0: float
    A0: float
    extras: dict = field(default_factory=dict)

    def copy(self):
        return copy.deepcopy(self)


ONEWAY_SCALARS = (
    "mu_G",
    "omega2_G",
    "eta_H",
    "phi2_H",
    "icc_oneway",
    "alpha1",
    "alpha2",
    "mu0",
    "S0",
    "w0",
    "W0",
    "eta0",
    "D0",
    "a0",
    "A0",
    "n_occupied1",
    "n_occupied2",
)


def _sticks(R, rng):
    V = np.ones(R)
    if R > 1:
        V[:-1] = np.clip(rng.beta(1.0, 1.0, R - 1), TINY, V_MAX)
    return V


def init_oneway_state(data, cfg, rng):
    d = Design(data)
    R = int(cfg.R)
    floor = _floor_var(d.y)
    theta = d.by_subject(d.y) / d.n_i
    e = d.y - theta[d.subject]
    var_theta = max(float(np.var(theta)), floor)
    var_e = max(float(np.mean(e * e)), floor)
    V1, V2 = _sticks(R, rng), _sticks(R, rng)
    mu0, S0, w0, W0 = float(np.mean(theta)), var_theta, 2.0, 1.0 / var_theta
    eta0, D0, a0, A0 = 0.0, var_e, 2.0, 2.0 * var_e
    return OneWayState(
        theta=theta,
        mu=mu0 + np.sqrt(S0) * rng.standard_normal(R),
        omega2=1.0 / _gamma(rng, np.full(R, w0), w0 / W0),
        V1=V1,
        pi1=mixture.stick_weights(V1),
        c1=rng.integers(0, R, d.I),
        eta=eta0 + np.sqrt(D0) * rng.standard_normal(R),
        phi2=1.0 / _gamma(rng, np.full(R, a0), A0),
        V2=V2,
        pi2=mixture.stick_weights(V2),
        c2=rng.integers(0, R, d.y.size),
        alpha1=1.0,
        alpha2=1.0,
        mu0=mu0,
        S0=S0,
        w0=w0,
        W0=W0,
        eta0=eta0,
        D0=D0,
        a0=a0,
        A0=A0,
        extras={"warnings": {}},
    )


def update_oneway_theta(state, design, rng):
    d = design
    w = 1.0 / state.phi2[state.c2]
    inv_om = 1.0 / state.omega2[state.c1]
    prec = inv_om + d.by_subject(w)
    num = state.mu[state.c1] * inv_om + d.by_subject((d.y - state.eta[state.c2]) * w)
    state.theta = num / prec + rng.standard_normal(d.I) / np.sqrt(prec)
    return state


def update_oneway_error_atoms(state, design, rng):
    """``eta_k`` then ``phi2_k ~ IGa(a0 + N_k/2, A0 + SS_k/2)``."""
    e = design.y - state.theta[design.subject]
    R = state.eta.size
    N, s = _cluster_stats(e, state.c2, R)
    prec = 1.0 / state.D0 + N / state.phi2
    mean = (state.eta0 / state.D0 + s / state.phi2) / prec
    state.eta = mean + rng.standard_normal(R) / np.sqrt(prec)
    ss = np.bincount(state.c2, weights=(e - state.eta[state.c2]) ** 2, minlength=R)
    state.phi2 = 1.0 / _gamma(rng, state.a0 + 0.5 * N, state.A0 + 0.5 * ss)
    return state


def update_oneway_alloc(state, design, rng):
    e = design.y - state.theta[design.subject]
    state.c2 = sample_categorical_log(_alloc_logw(state.pi2, e, state.eta, state.phi2), rng)
    return state


def update_oneway_H0(state, cfg, rng):
    """``eta0``, ``D0``, the rate ``A0`` (gamma prior) and the shape ``a0``."""
    R = state.eta.size
    prec = 1.0 / cfg.kappa2_eta0 + R / state.D0
    mean = (cfg.lam_eta0 / cfg.kappa2_eta0 + state.eta.sum() / state.D0) / prec
    state.eta0 = float(mean + rng.standard_normal() / np.sqrt(prec))
    ss = ((state.eta - state.eta0) ** 2).sum()
    state.D0 = float(1.0 / _gamma(rng, cfg.q_D0 + 0.5 * R, cfg.Q_D0 + 0.5 * ss))
    x = 1.0 / state.phi2
    state.A0 = float(_gamma(rng, cfg.q_A0 + R * state.a0, cfg.Q_A0 + x.sum()))
    out = dm_gamma_shape_known_rate(
        np.log(x).sum(), R, state.A0, cfg.q_a0, cfg.Q_a0, cfg.dm_eps0, cfg.dm_max_iter
    )
    state.a0 = float(_draw_shape(state, "a0", out, state.a0, rng))
    return state


def oneway_functionals(state, over="occupied"):
    w1, k1 = _component_weights(state.pi1, state.c1, over)
    w2, k2 = _component_weights(state.pi2, state.c2, over)
    ms = mixture.subject_moments(w1, np.column_stack((state.mu[k1], state.omega2[k1])))
    eta, phi2 = state.eta[k2], state.phi2[k2]
    eta_H = float(w2 @ eta)
    phi2_H = float(w2 @ (phi2 + (eta - eta_H) ** 2))
    return {
        "mu_G": ms.mu_G,
        "omega2_G": ms.omega2_G,
        "eta_H": eta_H,
        "phi2_H": phi2_H,
        "icc_oneway": mixture.icc_oneway(ms.omega2_G, phi2_H),
    }


def _oneway_record(state, over):
    vals = oneway_functionals(state, over)
    for name in ("alpha1", "alpha2", "mu0", "S0", "w0", "W0", "eta0", "D0", "a0", "A0"):
        vals[name] = getattr(state, name)
    c1 = np.bincount(state.c1, minlength=state.mu.size)
    c2 = np.bincount(state.c2, minlength=state.eta.size)
    vals["n_occupied1"] = np.count_nonzero(c1)
    vals["n_occupied2"] = np.count_nonzero(c2)
    atoms = {n: getattr(state, n) for n in ("mu", "omega2", "pi1", "eta", "phi2", "pi2")}
    atoms.update(counts1=c1, counts2=c2)
    return dict(entities={"theta": state.theta}, scalars={n: vals[n] for n in ONEWAY_SCALARS}, atoms=atoms)


_ONEWAY_CHECKED = ("theta", "mu", "omega2", "eta", "phi2", "mu0", "S0", "w0", "W0", "eta0", "D0", "a0", "A0")


def oneway_sweep(state, design, cfg, rng, it=0):
    """One sweep: subject side as in the two-way sampler, then the error mixture."""
    mixed = int(cfg.R) > 1
    update_oneway_theta(state, design, rng)
    update_subject_atoms(state, None, rng)
    if mixed:
        update_subject_alloc(state, rng)
        update_V1(state, rng)
        state.alpha1 = update_alpha(state.V1, cfg.a_1, cfg.A_1, rng)
    update_G0_hyper(state, cfg, rng)
    update_oneway_error_atoms(state, design, rng)
    if mixed:
        update_oneway_alloc(state, design, rng)
        update_V2(state, rng)
        state.alpha2 = update_alpha(state.V2, cfg.a_2, cfg.A_2, rng)
    update_oneway_H0(state, cfg, rng)
    for name in _ONEWAY_CHECKED:
        if not np.all(np.isfinite(getattr(state, name))):
            raise NumericalFailure(f"non-finite {name} at iteration {it}")
    return state


def run_oneway_chain(data, cfg, rng=None, callback=None):
    """Run the one-way model where rater identities are ignored.

    ``Y = theta_i + eps`` with ``eps ~ N(eta, phi2)`` and ``(eta, phi2)``
    drawn per observation from a truncated DP. ``cfg.R = 1`` gives the
    parametric one-way random-effects model. Rater ids in ``data`` are unused.
    The per-draw ICC is recorded under ``icc_oneway``; centre the location
    afterwards with :func:`rater_infer.post.sc_center_draws`.
    """
    cfg = cfg.resolved(data)
    rng = make_rng(cfg.seed) if rng is None else rng
    design = Design(data)
    state = init_oneway_state(data, cfg, rng)
    rec = DrawRecorder(cfg.n_retained)
    for it in range(cfg.iters):
        oneway_sweep(state, design, cfg, rng, it)
        if callback is not None:
            callback(it, state)
        if is_retained(it, cfg):
            rec.record(**_oneway_record(state, cfg.moments_over))
    draws = rec.finish(cfg, state, design.I, 0, seed=cfg.seed)
    draws.model_kind = "OneWay"
    return draws


def oneway_pointwise_loglik(draws, data):
    """``log sum_k pi_k N(Y - theta_i | eta_k, phi2_k)`` per draw and observation."""
    e = np.asarray(data.score, dtype=float)[None, :] - draws.theta[:, data.subject]
    a = draws.atoms
    var = a["phi2"][:, None, :]
    with np.errstate(divide="ignore"):
        lw = np.log(a["pi2"])[:, None, :]
    lp = lw - 0.5 * (_LOG_2PI + np.log(var) + (e[:, :, None] - a["eta"][:, None, :]) ** 2 / var)
    return logsumexp(lp, axis=2)


# ======================================================================= ordinal


@dataclass
class OrdinalState(ChainState):
    """Two-way chain state plus latent scores ``ystar`` and thresholds.

    ``delta`` has ``K + 1`` entries with ``delta[0] = -inf`` and
    ``delta[K] = +inf``; category ``k`` holds ``delta[k-1] < Y* <= delta[k]``.
    """

    ystar: np.ndarray = None
    delta: np.ndarray = None
    K: int = 0


def ordinal_category_prob(theta, tau, sigma2, delta_k, delta_k1):
    """``Phi((delta_k1 - theta - tau)/sigma) - Phi((delta_k - theta - tau)/sigma)``.

    Examples
    --------
    >>> round(ordinal_category_prob(0.0, 0.0, 1.0, -1.0, 1.0), 6)
    0.682689
    """
    lo = np.asarray(delta_k, dtype=float)
    hi = np.asarray(delta_k1, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    if np.any(~(lo < hi)):
        raise BadParameter("thresholds must be strictly increasing")
    if np.any(~(s2 > 0)):
        raise BadParameter("sigma2 must be strictly positive")
    m = np.add(theta, tau)
    sd = np.sqrt(s2)
    a = (lo - m) / sd
    b = (hi - m) / sd
    # upper-tail intervals use survival functions to keep precision
    upper = a > 0
    out = np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
    return float(out) if np.ndim(out) == 0 else out


def default_thresholds(K, fixed=None):
    """Initial cut points: the two fixed values with free ones evenly spaced between."""
    K = int(K)
    if K < 2:
        raise BadParameter("need at least two categories")
    lo, hi = (0.0, float(K - 2)) if fixed is None else (float(fixed[0]), float(fixed[1]))
    if K == 2:
        if lo != hi:
            raise BadParameter("with two categories the single threshold is fixed; give equal values")
    elif not lo < hi:
        raise BadParameter("fixed thresholds must satisfy delta_1 < delta_(K-1)")
    inner = np.linspace(lo, hi, K - 1) if K > 2 else np.array([lo])
    return np.concatenate(([-np.inf], inner, [np.inf]))


def update_latent_Y(state, data, rng):
    """``Y* ~ N(theta_i + tau_j, sigma2_j)`` truncated to the observed category."""
    y = np.asarray(data.score).astype(np.int64)
    mean = state.theta[data.subject] + state.tau[data.rater]
    var = 1.0 / state.inv_sigma2[data.rater]
    state.ystar = sample_truncated_normal(mean, var, state.delta[y - 1], state.delta[y], rng)
    return state


def update_thresholds(state, data, rng):
    """Draw each free threshold uniformly on the interval allowed by ``Y*`` and its neighbours.

    Thresholds ``2 .. K-2`` are free and updated in order. An empty
    interval (only reachable through rounding) keeps the current value.
    """
    K = state.K
    if K < 4:
        return state
    y = np.asarray(data.score).astype(np.int64)
    ys = state.ystar
    top = np.full(K + 2, -np.inf)
    bottom = np.full(K + 2, np.inf)
    np.maximum.at(top, y, ys)
    np.minimum.at(bottom, y, ys)
    for k in range(2, K - 1):
        lo = max(top[k], state.delta[k - 1])
        hi = min(bottom[k + 1], state.delta[k + 1])
        if lo < hi:
            state.delta[k] = lo + (hi - lo) * rng.random()
        else:
            _warn_state(state, "empty_threshold_interval")
    return state


def _warn_state(state, key):
    w = state.extras.setdefault("warnings", {})
    w[key] = w.get(key, 0) + 1


def _ordinal_setup(data, cfg):
    K = cfg.n_categories if cfg.n_categories is not None else int(data.scale_max)
    K = int(K)
    y = np.asarray(data.score, dtype=float)
    if np.any(y != np.round(y)) or y.min() < 1 or y.max() > K:
        raise BadParameter(f"ordinal ratings must be integers in 1..{K}")
    fix_sigma = cfg.fix_sigma
    if K == 2:
        if fix_sigma is False:
            raise BadParameter("with two categories the residual variances are not identified; they stay fixed at 1")
        fix_sigma = True
    fix_sigma = bool(fix_sigma)
    delta = default_thresholds(K, cfg.fixed_thresholds)
    if cfg.lam_mu0 is None:
        cfg = cfg.replace(lam_mu0=0.5 * (delta[1] + delta[K - 1]))
    return K, delta, fix_sigma, cfg


def init_ordinal_state(data, cfg, rng):
    """Start from latent scores at category midpoints and the default thresholds."""
    K, delta, fix_sigma, cfg = _ordinal_setup(data, cfg)
    y = np.asarray(data.score).astype(np.int64)
    lo, hi = delta[y - 1], delta[y]
    width = 0.5 if K == 2 else (delta[K - 1] - delta[1]) / (K - 2) / 2
    mid = np.where(np.isinf(lo), hi - width, np.where(np.isinf(hi), lo + width, 0.5 * (lo + hi)))
    base = init_state(data.with_scores(mid), cfg, rng)
    fields = {f: getattr(base, f) for f in base.__dataclass_fields__}
    state = OrdinalState(**fields, ystar=mid, delta=delta.copy(), K=K)
    if fix_sigma:
        state.inv_sigma2 = np.ones(data.num_raters)
    return state, cfg, fix_sigma


def ordinal_sweep(state, data, design, cfg, plan, rng, it=0):
    update_latent_Y(state, data, rng)
    update_thresholds(state, data, rng)
    design.y = state.ystar
    gibbs_sweep(state, design, cfg, plan, rng, it)
    return state


def run_ordinal_chain(data, cfg, rng=None, callback=None):
    """Run the ordinal probit version of the two-way model.

    Ratings are integer categories ``1..K`` (``K`` from ``cfg.n_categories``
    or the scale maximum). The thresholds ``delta_1`` and ``delta_(K-1)``
    are fixed (default ``0`` and ``K - 2``). With ``K = 2`` every residual
    variance is fixed at one. The mixture structure follows ``cfg.R`` and
    ``cfg.model_kind`` is reported as ``"Ordinal"``; finite thresholds are
    stored per draw in ``draws.extras["delta"]``.
    """
    rng = make_rng(cfg.seed) if rng is None else rng
    state, cfg, fix_sigma = init_ordinal_state(data, cfg, rng)
    design = Design(data)
    plan = SweepPlan.for_config(cfg)
    if fix_sigma:
        plan.flags["inv_sigma2"] = False
    rec = DrawRecorder(cfg.n_retained)
    for it in range(cfg.iters):
        ordinal_sweep(state, data, design, cfg, plan, rng, it)
        if callback is not None:
            callback(it, state)
        if is_retained(it, cfg):
            rec.record(**two_way_record(state, cfg.moments_over), extras={"delta": state.delta[1:-1]})
    draws = rec.finish(cfg, state, design.I, design.J, seed=cfg.seed)
    draws.model_kind = "Ordinal"
    draws.extras["K"] = state.K
    draws.extras["fix_sigma"] = fix_sigma
    return draws


def ordinal_pointwise_loglik(draws, data):
    """Log category probabilities per draw and observation."""
    y = np.asarray(data.score).astype(np.int64)
    n = draws.n_draws
    delta = np.hstack((np.full((n, 1), -np.inf), draws.extras["delta"], np.full((n, 1), np.inf)))
    p = ordinal_category_prob(
        draws.theta[:, data.subject],
        draws.tau[:, data.rater],
        1.0 / draws.inv_sigma2[:, data.rater],
        delta[:, y - 1],
        delta[:, y],
    )
    with np.errstate(divide="ignore"):
        return np.log(p)


def ordinal_postprocess(draws):
    """Double-centre ordinal draws.

    Per draw ``theta* = theta - mu_G + eta_H`` and ``tau* = tau - eta_H + mu_G``,
    so ``theta* + tau*`` is unchanged. ``mu0``, ``mu_G`` and the subject atoms
    get the same shift as ``theta``; ``eta0``, ``eta_H`` and the rater atoms
    the same shift as ``tau``. The transform is not idempotent, so applying
    it to already-centred draws raises.
    """
    if draws.centered or draws.extras.get("double_centered"):
        raise BadParameter("draws are already centered")
    out = draws.copy()
    shift = draws.scalars["eta_H"] - draws.scalars["mu_G"]
    col = shift[:, None]
    out.theta = draws.theta + col
    out.tau = draws.tau - col
    for name in ("mu0", "mu_G"):
        out.scalars[name] = draws.scalars[name] + shift
    for name in ("eta0", "eta_H"):
        out.scalars[name] = draws.scalars[name] - shift
    out.atoms["mu"] = draws.atoms["mu"] + col
    out.atoms["eta"] = draws.atoms["eta"] - col
    out.extras["center_shift"] = shift
    out.extras["double_centered"] = True
    out.centered = True
    return out
