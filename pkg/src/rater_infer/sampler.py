"""Truncated blocked Gibbs sampler for the two-way DPM rating model.

Each block is a function ``update_*(state, ...)`` that mutates ``state`` in
place and returns it. Random numbers are consumed in a fixed order, so a
chain is reproducible from its seed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import mixture
from .core import ChainState, census, validate_state
from .dists import sample_categorical_log
from .dm import DMInputs, dm_gamma_shape_plain, dm_gamma_shape_shifted
from .errors import BadParameter, NumericalFailure

TINY = np.finfo(float).tiny
HUGE = np.finfo(float).max
V_MAX = np.nextafter(1.0, 0.0)
_LOG_2PI = np.log(2.0 * np.pi)

BLOCKS = (
    "theta",
    "subject_atoms",
    "subject_alloc",
    "V1",
    "alpha1",
    "G0_hyper",
    "tau",
    "inv_sigma2",
    "rater_atoms",
    "rater_alloc",
    "V2",
    "alpha2",
    "H0_hyper",
)

SCALAR_TRACES = (
    "mu_G",
    "omega2_G",
    "eta_H",
    "phi2_H",
    "beta_H",
    "psi2_H",
    "sigma_tilde_H",
    "icc_A",
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
    "b0",
    "B0",
    "m0",
    "M0",
    "n_occupied1",
    "n_occupied2",
)


@dataclass(frozen=True)
class SweepPlan:
    """Which Gibbs blocks run in a sweep."""

    model_kind: str
    flags: dict

    @classmethod
    def for_config(cls, cfg):
        flags = {b: True for b in BLOCKS}
        if cfg.R_subject == 1:
            flags.update(subject_alloc=False, V1=False, alpha1=False)
        if cfg.R_rater == 1:
            flags.update(rater_alloc=False, V2=False, alpha2=False)
        return cls(model_kind=cfg.model_kind, flags=flags)

    def enabled(self, block):
        return self.flags[block]


class Design:
    """Precomputed index structures of a dataset used by the vectorized blocks."""

    def __init__(self, data):
        self.data = data
        self.subject = data.subject
        self.rater = data.rater
        self.y = np.asarray(data.score, dtype=float)
        self.I = data.num_subjects
        self.J = data.num_raters
        self.n_i = data.ratings_per_subject.astype(float)
        self.n_j = data.ratings_per_rater.astype(float)

    def by_subject(self, w):
        return np.bincount(self.subject, weights=w, minlength=self.I)

    def by_rater(self, w):
        return np.bincount(self.rater, weights=w, minlength=self.J)


def _design(data):
    return data if isinstance(data, Design) else Design(data)


def _gamma(rng, shape, rate):
    """Gamma draw clipped to the positive finite doubles."""
    with np.errstate(divide="ignore", over="ignore"):
        scale = 1.0 / np.asarray(rate, dtype=float)
    return np.clip(rng.gamma(shape, np.minimum(scale, HUGE)), TINY, HUGE)


def _warn(state, key, n=1):
    w = state.extras.setdefault("warnings", {})
    w[key] = w.get(key, 0) + int(n)


# ---------------------------------------------------------------- subject side


def update_theta(state, data, rng):
    """Conjugate normal update of every true score."""
    d = _design(data)
    w = state.inv_sigma2[d.rater]
    inv_om = 1.0 / state.omega2[state.c1]
    prec = inv_om + d.by_subject(w)
    num = state.mu[state.c1] * inv_om + d.by_subject((d.y - state.tau[d.rater]) * w)
    state.theta = num / prec + rng.standard_normal(d.I) / np.sqrt(prec)
    return state


def _cluster_stats(values, alloc, R):
    N = np.bincount(alloc, minlength=R).astype(float)
    s = np.bincount(alloc, weights=values, minlength=R)
    return N, s


def update_subject_atoms(state, census_, rng):
    """``mu_n`` then ``1/omega2_n``; empty clusters receive prior draws from G0."""
    R = state.mu.size
    N, s = _cluster_stats(state.theta, state.c1, R)
    prec = 1.0 / state.S0 + N / state.omega2
    mean = (state.mu0 / state.S0 + s / state.omega2) / prec
    state.mu = mean + rng.standard_normal(R) / np.sqrt(prec)
    ss = np.bincount(state.c1, weights=(state.theta - state.mu[state.c1]) ** 2, minlength=R)
    state.omega2 = 1.0 / _gamma(rng, state.w0 + 0.5 * N, state.w0 / state.W0 + 0.5 * ss)
    return state


def _alloc_logw(pi, x, loc, var):
    with np.errstate(divide="ignore"):
        lp = np.log(pi)
    return lp - 0.5 * (_LOG_2PI + np.log(var) + (x[:, None] - loc) ** 2 / var)


def update_subject_alloc(state, rng):
    logw = _alloc_logw(state.pi1, state.theta, state.mu, state.omega2)
    state.c1 = sample_categorical_log(logw, rng)
    return state


def draw_sticks(counts, alpha, rng):
    """``V_n ~ Be(1 + N_n, alpha + sum_{l>n} N_l)`` with ``V_R = 1``."""
    counts = np.asarray(counts, dtype=float)
    tail = np.concatenate((np.cumsum(counts[::-1])[::-1][1:], [0.0]))
    V = np.ones(counts.size)
    if counts.size > 1:
        V[:-1] = rng.beta(1.0 + counts[:-1], alpha + tail[:-1])
        V[:-1] = np.clip(V[:-1], TINY, V_MAX)
    return V


def update_V1(state, rng):
    state.V1 = draw_sticks(np.bincount(state.c1, minlength=state.mu.size), state.alpha1, rng)
    state.pi1 = mixture.stick_weights(state.V1)
    return state


def alpha_posterior(V, a, A):
    """Shape and rate of the concentration full conditional (last stick excluded)."""
    V = np.asarray(V, dtype=float)
    R = V.size
    return R - 1 + a, A - np.log1p(-V[:-1]).sum()


def update_alpha(V, a, A, rng):
    shape, rate = alpha_posterior(V, a, A)
    return float(_gamma(rng, shape, rate))


def _draw_shape(state, key, out, current, rng):
    """Draw from the D-M gamma; keep the current value if the approximation failed."""
    if not np.all(out.converged):
        _warn(state, f"dm_nonconverged_{key}", np.size(out.converged) - np.count_nonzero(out.converged))
    draw = _gamma(rng, out.U1, out.U2)
    bad = ~np.isfinite(draw)
    if np.any(bad):
        _warn(state, f"dm_fallback_{key}", np.count_nonzero(bad))
        draw = np.where(bad, current, draw)
    return draw


def update_G0_hyper(state, cfg, rng):
    """``mu0``, ``S0``, ``W0`` conjugately and ``w0`` by derivatives matching."""
    R = state.mu.size
    prec = 1.0 / cfg.kappa2_mu0 + R / state.S0
    mean = (cfg.lam_mu0 / cfg.kappa2_mu0 + state.mu.sum() / state.S0) / prec
    state.mu0 = float(mean + rng.standard_normal() / np.sqrt(prec))
    ss = ((state.mu - state.mu0) ** 2).sum()
    state.S0 = float(1.0 / _gamma(rng, cfg.q_S0 + 0.5 * R, cfg.Q_S0 + 0.5 * ss))
    prec_w = 1.0 / state.omega2
    state.W0 = float(1.0 / _gamma(rng, cfg.q_W0 + R * state.w0, cfg.Q_W0 + state.w0 * prec_w.sum()))
    out = dm_gamma_shape_plain(
        np.log(prec_w).sum(), prec_w.sum(), R, state.W0, cfg.q_w0, cfg.Q_w0, cfg.dm_eps0, cfg.dm_max_iter
    )
    state.w0 = float(_draw_shape(state, "w0", out, state.w0, rng))
    return state


# ------------------------------------------------------------------ rater side


def update_tau(state, data, rng):
    d = _design(data)
    inv_phi = 1.0 / state.phi2[state.c2]
    prec = inv_phi + d.n_j * state.inv_sigma2
    num = state.eta[state.c2] * inv_phi + state.inv_sigma2 * d.by_rater(d.y - state.theta[d.subject])
    state.tau = num / prec + rng.standard_normal(d.J) / np.sqrt(prec)
    return state


def update_inv_sigma2(state, data, rng):
    d = _design(data)
    g1 = 1.0 + state.gam[state.c2]
    ssr = d.by_rater((d.y - state.theta[d.subject] - state.tau[d.rater]) ** 2)
    state.inv_sigma2 = _gamma(rng, g1 + 0.5 * d.n_j, g1 / state.beta[state.c2] + 0.5 * ssr)
    return state


def update_rater_atoms(state, census_, cfg, rng):
    """``eta_k``, ``1/phi2_k``, ``1/beta_k`` then ``gamma_k``; empty clusters draw from H0."""
    R = state.eta.size
    N, s = _cluster_stats(state.tau, state.c2, R)
    prec = 1.0 / state.D0 + N / state.phi2
    mean = (state.eta0 / state.D0 + s / state.phi2) / prec
    state.eta = mean + rng.standard_normal(R) / np.sqrt(prec)
    ss = np.bincount(state.c2, weights=(state.tau - state.eta[state.c2]) ** 2, minlength=R)
    state.phi2 = 1.0 / _gamma(rng, state.a0 + 0.5 * N, state.a0 / state.A0 + 0.5 * ss)
    X2 = np.bincount(state.c2, weights=state.inv_sigma2, minlength=R)
    X1 = np.bincount(state.c2, weights=np.log(state.inv_sigma2), minlength=R)
    g1 = 1.0 + state.gam
    state.beta = 1.0 / _gamma(rng, state.m0 + N * g1, state.m0 / state.M0 + X2 * g1)
    try:
        out = dm_gamma_shape_shifted(
            DMInputs(X1, X2, N, state.beta, state.b0, state.b0 / state.B0, cfg.dm_eps0, cfg.dm_max_iter)
        )
    except NumericalFailure:
        _warn(state, "dm_fallback_gamma", R)
        out = dm_gamma_shape_shifted(
            DMInputs(0.0, 0.0, np.zeros(R), state.beta, state.b0, state.b0 / state.B0, cfg.dm_eps0, cfg.dm_max_iter)
        )
    state.gam = _draw_shape(state, "gamma", out, state.gam, rng)
    return state


def rater_alloc_logweights(state, include_reliability=False):
    logw = _alloc_logw(state.pi2, state.tau, state.eta, state.phi2)
    if include_reliability:
        g1 = 1.0 + state.gam
        rate = g1 / state.beta
        x = state.inv_sigma2[:, None]
        logw = logw + g1 * np.log(rate) - gammaln(g1) + state.gam * np.log(x) - rate * x
    return logw


def update_rater_alloc(state, cfg, rng):
    logw = rater_alloc_logweights(state, cfg.alloc_includes_reliability)
    state.c2 = sample_categorical_log(logw, rng)
    return state


def update_V2(state, rng):
    state.V2 = draw_sticks(np.bincount(state.c2, minlength=state.eta.size), state.alpha2, rng)
    state.pi2 = mixture.stick_weights(state.V2)
    return state


def update_H0_hyper(state, cfg, rng):
    """``eta0``, ``D0``, then the mean parameters ``(A0, B0, M0)``, then the shapes ``(a0, b0, m0)``.

    The three (mean, shape) pairs are conditionally independent given the
    atoms, so their shapes share one vectorized derivatives-matching call.
    """
    R = state.eta.size
    prec = 1.0 / cfg.kappa2_eta0 + R / state.D0
    mean = (cfg.lam_eta0 / cfg.kappa2_eta0 + state.eta.sum() / state.D0) / prec
    state.eta0 = float(mean + rng.standard_normal() / np.sqrt(prec))
    ss = ((state.eta - state.eta0) ** 2).sum()
    state.D0 = float(1.0 / _gamma(rng, cfg.q_D0 + 0.5 * R, cfg.Q_D0 + 0.5 * ss))

    x = np.vstack((1.0 / state.phi2, state.gam, 1.0 / state.beta))
    shapes = np.array([state.a0, state.b0, state.m0])
    sum_x = x.sum(axis=1)
    q_mean = np.array([cfg.q_A0, cfg.q_B0, cfg.q_M0])
    Q_mean = np.array([cfg.Q_A0, cfg.Q_B0, cfg.Q_M0])
    means = 1.0 / _gamma(rng, q_mean + R * shapes, Q_mean + shapes * sum_x)
    state.A0, state.B0, state.M0 = (float(v) for v in means)
    out = dm_gamma_shape_plain(
        np.log(x).sum(axis=1),
        sum_x,
        R,
        means,
        np.array([cfg.q_a0, cfg.q_b0, cfg.q_m0]),
        np.array([cfg.Q_a0, cfg.Q_b0, cfg.Q_m0]),
        cfg.dm_eps0,
        cfg.dm_max_iter,
    )
    new = _draw_shape(state, "H0_shape", out, shapes, rng)
    state.a0, state.b0, state.m0 = (float(v) for v in new)
    return state


# --------------------------------------------------------------- orchestration


def _floor_var(scores):
    spread = float(np.ptp(scores)) if scores.size > 1 else 0.0
    return 1e-6 * max(spread, 1.0) ** 2


def init_state(data, cfg, rng):
    """Data-driven starting point.

    True scores start at subject mean ratings, biases at rater mean residuals
    and reliabilities at the pooled residual precision; atoms come from the
    base measures and allocations are uniform.
    """
    cfg = cfg.resolved(data)
    d = _design(data)
    floor = _floor_var(d.y)
    theta = d.by_subject(d.y) / d.n_i
    tau = d.by_rater(d.y - theta[d.subject]) / d.n_j
    resid = d.y - theta[d.subject] - tau[d.rater]
    pooled = max(float(np.mean(resid**2)), floor)
    inv_sigma2 = np.full(d.J, 1.0 / pooled)

    var_theta = max(float(np.var(theta)), floor)
    var_tau = max(float(np.var(tau)), floor)
    R1, R2 = cfg.R_subject, cfg.R_rater
    hyper = dict(
        mu0=float(np.mean(theta)),
        S0=var_theta,
        w0=2.0,
        W0=1.0 / var_theta,
        eta0=0.0,
        D0=var_tau,
        a0=2.0,
        A0=1.0 / var_tau,
        b0=2.0,
        B0=10.0,
        m0=2.0,
        M0=1.0 / pooled,
    )
    alpha1 = alpha2 = 1.0

    def sticks(R):
        V = np.ones(R)
        if R > 1:
            V[:-1] = np.clip(rng.beta(1.0, 1.0, R - 1), TINY, V_MAX)
        return V

    mu = hyper["mu0"] + np.sqrt(hyper["S0"]) * rng.standard_normal(R1)
    omega2 = 1.0 / _gamma(rng, hyper["w0"] * np.ones(R1), hyper["w0"] / hyper["W0"])
    eta = hyper["eta0"] + np.sqrt(hyper["D0"]) * rng.standard_normal(R2)
    phi2 = 1.0 / _gamma(rng, hyper["a0"] * np.ones(R2), hyper["a0"] / hyper["A0"])
    gam = _gamma(rng, hyper["b0"] * np.ones(R2), hyper["b0"] / hyper["B0"])
    beta = 1.0 / _gamma(rng, hyper["m0"] * np.ones(R2), hyper["m0"] / hyper["M0"])
    c1 = rng.integers(0, R1, d.I)
    c2 = rng.integers(0, R2, d.J)
    V1, V2 = sticks(R1), sticks(R2)
    return ChainState(
        theta=theta,
        mu=mu,
        omega2=omega2,
        V1=V1,
        pi1=mixture.stick_weights(V1),
        c1=c1,
        eta=eta,
        phi2=phi2,
        gam=gam,
        beta=beta,
        V2=V2,
        pi2=mixture.stick_weights(V2),
        c2=c2,
        tau=tau,
        inv_sigma2=inv_sigma2,
        alpha1=alpha1,
        alpha2=alpha2,
        extras={"warnings": {}},
        **hyper,
    )


_CHECKED = {
    "theta": ("theta",),
    "subject_atoms": ("mu", "omega2"),
    "subject_alloc": (),
    "V1": ("pi1",),
    "alpha1": ("alpha1",),
    "G0_hyper": ("mu0", "S0", "W0", "w0"),
    "tau": ("tau",),
    "inv_sigma2": ("inv_sigma2",),
    "rater_atoms": ("eta", "phi2", "beta", "gam"),
    "rater_alloc": (),
    "V2": ("pi2",),
    "alpha2": ("alpha2",),
    "H0_hyper": ("eta0", "D0", "A0", "a0", "B0", "b0", "M0", "m0"),
}


def _check_finite(state, block, it):
    for name in _CHECKED[block]:
        if not np.all(np.isfinite(getattr(state, name))):
            raise NumericalFailure(f"non-finite {name} after block {block!r} at iteration {it}")


def gibbs_sweep(state, design, cfg, plan, rng, it=0):
    """One full sweep in the fixed block order (subject side, then rater side)."""
    steps = (
        ("theta", lambda: update_theta(state, design, rng)),
        ("subject_atoms", lambda: update_subject_atoms(state, None, rng)),
        ("subject_alloc", lambda: update_subject_alloc(state, rng)),
        ("V1", lambda: update_V1(state, rng)),
        ("alpha1", lambda: setattr(state, "alpha1", update_alpha(state.V1, cfg.a_1, cfg.A_1, rng))),
        ("G0_hyper", lambda: update_G0_hyper(state, cfg, rng)),
        ("tau", lambda: update_tau(state, design, rng)),
        ("inv_sigma2", lambda: update_inv_sigma2(state, design, rng)),
        ("rater_atoms", lambda: update_rater_atoms(state, None, cfg, rng)),
        ("rater_alloc", lambda: update_rater_alloc(state, cfg, rng)),
        ("V2", lambda: update_V2(state, rng)),
        ("alpha2", lambda: setattr(state, "alpha2", update_alpha(state.V2, cfg.a_2, cfg.A_2, rng))),
        ("H0_hyper", lambda: update_H0_hyper(state, cfg, rng)),
    )
    for block, step in steps:
        if plan.enabled(block):
            step()
            _check_finite(state, block, it)
    return state


# ----------------------------------------------------------------- draw storage


def _component_weights(pi, alloc, over):
    if over == "all":
        return pi, slice(None)
    keep = np.bincount(alloc, minlength=pi.size) > 0
    w = pi[keep]
    return w / w.sum(), keep


def derived_functionals(state, over="occupied"):
    """Mixture moments and ``ICC_A`` of one state.

    With ``over="occupied"`` only components holding at least one subject
    (rater) enter, with renormalized weights; ``"all"`` uses every truncated
    component. Empty components are prior draws whose residual variance
    ``(1 + gamma) / (beta * gamma)`` is unbounded as ``gamma -> 0``, so under
    vague hyperpriors the ``"all"`` version has very heavy-tailed traces.
    """
    w1, k1 = _component_weights(state.pi1, state.c1, over)
    w2, k2 = _component_weights(state.pi2, state.c2, over)
    ms = mixture.subject_moments(w1, np.column_stack((state.mu[k1], state.omega2[k1])))
    mr = mixture.rater_moments(
        w2, np.column_stack((state.eta[k2], state.phi2[k2], state.gam[k2], state.beta[k2]))
    )
    return {
        "mu_G": ms.mu_G,
        "omega2_G": ms.omega2_G,
        "eta_H": mr.eta_H,
        "phi2_H": mr.phi2_H,
        "beta_H": mr.beta_H,
        "psi2_H": mr.psi2_H,
        "sigma_tilde_H": mr.sigma_tilde_H,
        "icc_A": mixture.icc_A(ms, mr),
    }


ATOM_FIELDS = ("mu", "omega2", "pi1", "eta", "phi2", "gam", "beta", "pi2")


@dataclass
class ChainDraws:
    """Thinned draws of one chain.

    ``scalars`` maps trace names to arrays of length ``n_draws``; entity and
    atom traces are ``(n_draws, size)`` arrays.
    """

    theta: np.ndarray
    tau: np.ndarray
    inv_sigma2: np.ndarray
    scalars: dict
    atoms: dict
    counts1: np.ndarray
    counts2: np.ndarray
    burn_in: int
    thin: int
    model_kind: str
    cfg: object = None
    warnings: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    centered: bool = False
    seed: int | None = None

    @property
    def n_draws(self):
        return self.theta.shape[0]

    def copy(self):
        return dataclasses.replace(
            self,
            theta=self.theta.copy(),
            tau=self.tau.copy(),
            inv_sigma2=self.inv_sigma2.copy(),
            scalars={k: v.copy() for k, v in self.scalars.items()},
            atoms={k: v.copy() for k, v in self.atoms.items()},
            counts1=self.counts1.copy(),
            counts2=self.counts2.copy(),
            warnings=dict(self.warnings),
            extras={k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.extras.items()},
        )


class DrawRecorder:
    """Trace storage filled one retained state at a time.

    Arrays are allocated on the first :meth:`record` call from the shapes of
    the recorded values.
    """

    GROUPS = ("entities", "scalars", "atoms", "extras")

    def __init__(self, n):
        self.n = n
        self.k = 0
        self.store = {g: {} for g in self.GROUPS}

    def record(self, **groups):
        k = self.k
        for g, values in groups.items():
            slot = self.store[g]
            for name, value in values.items():
                value = np.asarray(value)
                if name not in slot:
                    dtype = np.int64 if value.dtype.kind in "iub" else float
                    slot[name] = np.empty((self.n,) + value.shape, dtype=dtype)
                slot[name][k] = value
        self.k += 1

    def finish(self, cfg, state, I, J, seed=None):
        ent = self.store["entities"]
        atoms = dict(self.store["atoms"])
        empty = np.empty((self.n, 0))
        return ChainDraws(
            theta=ent.get("theta", np.empty((self.n, I))),
            tau=ent.get("tau", empty),
            inv_sigma2=ent.get("inv_sigma2", empty),
            scalars=self.store["scalars"],
            atoms=atoms,
            counts1=atoms.pop("counts1", np.empty((self.n, 0), dtype=np.int64)),
            counts2=atoms.pop("counts2", np.empty((self.n, 0), dtype=np.int64)),
            burn_in=cfg.burn_in,
            thin=cfg.thin,
            model_kind=cfg.model_kind,
            cfg=cfg,
            warnings=dict(state.extras.get("warnings", {})),
            extras=self.store["extras"],
            seed=seed,
        )


BASE_SCALARS = ("alpha1", "alpha2", "mu0", "S0", "w0", "W0", "eta0", "D0", "a0", "A0", "b0", "B0", "m0", "M0")


def two_way_record(state, over="occupied"):
    """Everything stored for one retained two-way state."""
    vals = derived_functionals(state, over)
    for name in BASE_SCALARS:
        vals[name] = getattr(state, name)
    c1 = np.bincount(state.c1, minlength=state.mu.size)
    c2 = np.bincount(state.c2, minlength=state.eta.size)
    vals["n_occupied1"] = np.count_nonzero(c1)
    vals["n_occupied2"] = np.count_nonzero(c2)
    atoms = {name: getattr(state, name) for name in ATOM_FIELDS}
    atoms.update(counts1=c1, counts2=c2)
    return dict(
        entities={"theta": state.theta, "tau": state.tau, "inv_sigma2": state.inv_sigma2},
        scalars={name: vals[name] for name in SCALAR_TRACES},
        atoms=atoms,
    )


def is_retained(it, cfg):
    return it >= cfg.burn_in and (it - cfg.burn_in + 1) % cfg.thin == 0


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def run_chain(data, cfg, rng=None, debug=False, callback=None):
    """Run one chain and return its thinned draws.

    Parameters
    ----------
    data : RatingDataset
    cfg : HyperConfig
        Two-way kinds only (``BNP``, ``BSP``, ``BP``).
    rng : numpy.random.Generator, optional
        Defaults to a PCG64 stream seeded with ``cfg.seed``.
    debug : bool
        Validate the state invariants after every sweep.
    callback : callable, optional
        Called as ``callback(it, state)`` after every sweep.
    """
    if cfg.model_kind not in ("BNP", "BSP", "BP"):
        raise BadParameter(f"run_chain handles two-way models, not {cfg.model_kind!r}")
    cfg = cfg.resolved(data)
    rng = make_rng(cfg.seed) if rng is None else rng
    design = Design(data)
    plan = SweepPlan.for_config(cfg)
    state = init_state(data, cfg, rng)
    rec = DrawRecorder(cfg.n_retained)
    for it in range(cfg.iters):
        gibbs_sweep(state, design, cfg, plan, rng, it)
        if debug:
            problems = validate_state(state, census(state))
            if problems:
                raise NumericalFailure(f"invalid state at iteration {it}: {problems}")
        if callback is not None:
            callback(it, state)
        if is_retained(it, cfg):
            rec.record(**two_way_record(state, cfg.moments_over))
    return rec.finish(cfg, state, design.I, design.J, seed=cfg.seed)


# ------------------------------------------------------------ prior simulation


def sample_prior_state(data, cfg, rng):
    """Draw a complete state from the prior (hyperparameters included)."""
    cfg = cfg.resolved(data)
    d = _design(data)
    R1, R2 = cfg.R_subject, cfg.R_rater

    def sticks(R, alpha):
        V = np.ones(R)
        if R > 1:
            V[:-1] = np.clip(rng.beta(1.0, alpha, R - 1), TINY, V_MAX)
        return V

    hyper = dict(
        mu0=float(cfg.lam_mu0 + np.sqrt(cfg.kappa2_mu0) * rng.standard_normal()),
        S0=float(1.0 / _gamma(rng, cfg.q_S0, cfg.Q_S0)),
        w0=float(_gamma(rng, cfg.q_w0, cfg.Q_w0)),
        W0=float(1.0 / _gamma(rng, cfg.q_W0, cfg.Q_W0)),
        eta0=float(cfg.lam_eta0 + np.sqrt(cfg.kappa2_eta0) * rng.standard_normal()),
        D0=float(1.0 / _gamma(rng, cfg.q_D0, cfg.Q_D0)),
        a0=float(_gamma(rng, cfg.q_a0, cfg.Q_a0)),
        A0=float(1.0 / _gamma(rng, cfg.q_A0, cfg.Q_A0)),
        b0=float(_gamma(rng, cfg.q_b0, cfg.Q_b0)),
        B0=float(1.0 / _gamma(rng, cfg.q_B0, cfg.Q_B0)),
        m0=float(_gamma(rng, cfg.q_m0, cfg.Q_m0)),
        M0=float(1.0 / _gamma(rng, cfg.q_M0, cfg.Q_M0)),
    )
    alpha1 = float(_gamma(rng, cfg.a_1, cfg.A_1)) if R1 > 1 else 1.0
    alpha2 = float(_gamma(rng, cfg.a_2, cfg.A_2)) if R2 > 1 else 1.0
    V1, V2 = sticks(R1, alpha1), sticks(R2, alpha2)
    pi1, pi2 = mixture.stick_weights(V1), mixture.stick_weights(V2)
    mu = hyper["mu0"] + np.sqrt(hyper["S0"]) * rng.standard_normal(R1)
    omega2 = 1.0 / _gamma(rng, np.full(R1, hyper["w0"]), hyper["w0"] / hyper["W0"])
    eta = hyper["eta0"] + np.sqrt(hyper["D0"]) * rng.standard_normal(R2)
    phi2 = 1.0 / _gamma(rng, np.full(R2, hyper["a0"]), hyper["a0"] / hyper["A0"])
    gam = _gamma(rng, np.full(R2, hyper["b0"]), hyper["b0"] / hyper["B0"])
    beta = 1.0 / _gamma(rng, np.full(R2, hyper["m0"]), hyper["m0"] / hyper["M0"])
    c1 = sample_categorical_log(np.broadcast_to(np.log(np.maximum(pi1, TINY)), (d.I, R1)), rng)
    c2 = sample_categorical_log(np.broadcast_to(np.log(np.maximum(pi2, TINY)), (d.J, R2)), rng)
    theta = mu[c1] + np.sqrt(omega2[c1]) * rng.standard_normal(d.I)
    tau = eta[c2] + np.sqrt(phi2[c2]) * rng.standard_normal(d.J)
    g1 = 1.0 + gam[c2]
    with np.errstate(over="ignore"):
        rate = g1 / beta[c2]
    inv_sigma2 = _gamma(rng, g1, rate)
    return ChainState(
        theta=theta,
        mu=mu,
        omega2=omega2,
        V1=V1,
        pi1=pi1,
        c1=c1,
        eta=eta,
        phi2=phi2,
        gam=gam,
        beta=beta,
        V2=V2,
        pi2=pi2,
        c2=c2,
        tau=tau,
        inv_sigma2=inv_sigma2,
        alpha1=alpha1,
        alpha2=alpha2,
        extras={"warnings": {}},
        **hyper,
    )


def simulate_scores(state, data, rng):
    """Draw ``Y_ij ~ N(theta_i + tau_j, sigma2_j)`` on the design of ``data``."""
    d = _design(data)
    sd = 1.0 / np.sqrt(state.inv_sigma2[d.rater])
    return state.theta[d.subject] + state.tau[d.rater] + sd * rng.standard_normal(d.y.size)
