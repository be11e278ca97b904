"""Post-processing of chain draws: centering, density grids, summaries and WAIC."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy import stats
from scipy.special import logsumexp

from .errors import BadParameter, NumericalFailure

QUANTILES = (0.025, 0.975)
_LOG_2PI = np.log(2.0 * np.pi)
_MIN_WEIGHT = 1e-12


# ------------------------------------------------------------------ centering


def sc_center_draws(draws):
    """Move the rater-bias mixture mean into the subject side, draw by draw.

    Returns a centered copy where ``theta``, ``mu_G``, ``mu0`` and the subject
    atoms gain ``eta_H`` while ``tau``, ``eta0`` and the rater atoms lose it.
    Every rating's ``theta + tau`` and all variance functionals are unchanged.
    """
    if draws.centered:
        raise BadParameter("draws are already centered")
    out = draws.copy()
    shift = draws.scalars["eta_H"].copy()
    col = shift[:, None]
    out.theta = draws.theta + col
    if out.tau.shape[1]:
        out.tau = draws.tau - col
    out.scalars["mu_G"] = draws.scalars["mu_G"] + shift
    out.scalars["mu0"] = draws.scalars["mu0"] + shift
    out.scalars["eta0"] = draws.scalars["eta0"] - shift
    out.scalars["eta_H"] = np.zeros_like(shift)
    out.atoms["mu"] = draws.atoms["mu"] + col
    out.atoms["eta"] = draws.atoms["eta"] - col
    out.extras["center_shift"] = shift
    out.centered = True
    return out


# --------------------------------------------------------------- density grids


@dataclass
class DensityGrid:
    points: np.ndarray
    values: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    which: str = ""

    def local_maxima(self):
        """Grid points where the posterior-mean density has a strict local maximum."""
        m = self.mean
        idx = np.flatnonzero((m[1:-1] > m[:-2]) & (m[1:-1] > m[2:])) + 1
        return self.points[idx]

    def integral(self):
        """Trapezoid integral of every per-draw density."""
        return trapezoid(self.values, self.points, axis=1)


def _normal_mixture(x, w, loc, var):
    """Rows of ``sum_k w_k N(x | loc_k, var_k)`` for stacked per-draw mixtures."""
    z = x[None, :, None] - loc[:, None, :]
    dens = np.exp(-0.5 * z * z / var[:, None, :]) / np.sqrt(2.0 * np.pi * var[:, None, :])
    return (dens * w[:, None, :]).sum(axis=2)


def gamma_mixed_normal_pdf(x, shape, rate):
    """Density of ``N(0, 1/lam)`` with ``lam ~ Ga(shape, rate)``.

    The precision mixture is a Student t with ``2 * shape`` degrees of
    freedom and scale ``sqrt(rate / shape)``, so it is evaluated in closed form.
    """
    return stats.t.pdf(np.asarray(x, dtype=float), df=2.0 * shape, scale=np.sqrt(rate / shape))


def _as_grid(rng_, n_points):
    lo, hi = rng_
    if n_points < 2 or not hi > lo:
        raise BadParameter("density grid needs n_points >= 2 and a nonempty range")
    return np.linspace(lo, hi, int(n_points))


def eval_density_grid(draws, which, range_, n_points=201):
    """Per-draw mixture densities of ``theta``, ``tau`` or ``epsilon`` on a grid.

    ``theta`` and ``tau`` use the draws as given, so center them first for the
    identified scale. The ``epsilon`` density is the reliability-mixed normal
    ``sum_k pi_2k int N(x | 0, s2) dGa(1/s2 | 1 + gamma_k, (1 + gamma_k)/beta_k)``.
    """
    x = _as_grid(range_, n_points)
    a = draws.atoms
    if which == "theta":
        vals = _normal_mixture(x, a["pi1"], a["mu"], a["omega2"])
    elif which == "tau":
        vals = _normal_mixture(x, a["pi2"], a["eta"], a["phi2"])
    elif which == "epsilon":
        if "gam" not in a:
            raise BadParameter("epsilon density needs reliability atoms")
        vals = np.zeros((draws.n_draws, x.size))
        for s in range(draws.n_draws):
            for k in np.flatnonzero(a["pi2"][s] > _MIN_WEIGHT):
                g1 = 1.0 + a["gam"][s, k]
                vals[s] += a["pi2"][s, k] * gamma_mixed_normal_pdf(x, g1, g1 / a["beta"][s, k])
    else:
        raise BadParameter(f"unknown density {which!r}; use theta, tau or epsilon")
    lo, hi = np.quantile(vals, QUANTILES, axis=0)
    return DensityGrid(points=x, values=vals, mean=vals.mean(axis=0), lo=lo, hi=hi, which=which)


# ------------------------------------------------------------------- summaries


def autocorrelation(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    # rescale so squaring cannot overflow for heavy-tailed traces
    xc = xc / np.max(np.abs(xc))
    f = np.fft.rfft(xc, 2 * n)
    ac = np.fft.irfft(f * np.conj(f))[:n]
    return ac / ac[0]


def effective_sample_size(x):
    """Geyer initial-positive-sequence ESS of a single trace (NaN if it has non-finite values)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if not np.all(np.isfinite(x)):
        return float("nan")
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    total = 0.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        total += pair
    tau = max(-1.0 + 2.0 * total, 1.0 / n)
    return float(n / tau)


def summarize_trace(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        lo, hi = np.quantile(x, QUANTILES)
    return {"mean": float(x.mean()), "lo": float(lo), "hi": float(hi), "ess": effective_sample_size(x)}


def _entity_summary(arr):
    if arr.shape[1] == 0:
        return {"mean": [], "lo": [], "hi": []}
    lo, hi = np.quantile(arr, QUANTILES, axis=0)
    return {"mean": arr.mean(axis=0).tolist(), "lo": lo.tolist(), "hi": hi.tolist()}


@dataclass
class FitReport:
    """Posterior summaries ready for JSON emission."""

    model_kind: str
    n_draws: int
    scalars: dict
    theta: dict
    tau: dict
    inv_sigma2: dict
    icc: dict
    waic: dict | None = None
    diagnostics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "model_kind": self.model_kind,
            "n_draws": self.n_draws,
            "scalars": self.scalars,
            "icc": self.icc,
            "theta": self.theta,
            "tau": self.tau,
            "inv_sigma2": self.inv_sigma2,
            "waic": self.waic,
            "diagnostics": self.diagnostics,
            "notes": self.notes,
            "extras": self.extras,
        }


def summarize(draws, data=None, icc_key="icc_A", loglik=None):
    """Posterior means, 95% type-7 quantile intervals and ESS for every trace.

    If ``data`` (or a precomputed ``loglik`` matrix) is given, WAIC is added.
    """
    if draws.n_draws < 1:
        raise BadParameter("need at least one retained draw")
    scalars = {name: summarize_trace(v) for name, v in draws.scalars.items()}
    notes = []
    if draws.model_kind == "BP":
        notes.append("single-cluster reduction: both mixtures hold one component")
    elif draws.model_kind == "BSP":
        notes.append("rater mixture reduced to one component")
    notes.append("effective sample sizes are computed on the thinned chain")
    report = FitReport(
        model_kind=draws.model_kind,
        n_draws=draws.n_draws,
        scalars=scalars,
        theta=_entity_summary(draws.theta),
        tau=_entity_summary(draws.tau),
        inv_sigma2=_entity_summary(draws.inv_sigma2),
        icc=scalars.get(icc_key, {}),
        diagnostics={
            "ess": {name: s["ess"] for name, s in scalars.items()},
            "warnings": dict(sorted(draws.warnings.items())),
            "dm_fallbacks": int(sum(v for k, v in draws.warnings.items() if k.startswith("dm_fallback"))),
        },
        notes=notes,
        extras={"centered": bool(draws.centered)},
    )
    if loglik is None and data is not None:
        loglik = pointwise_loglik(draws, data)
    if loglik is not None:
        w, lppd, p = waic(loglik)
        report.waic = {"waic": w, "lppd": lppd, "p_waic": p}
    return report


# ------------------------------------------------------------------------ WAIC


def pointwise_loglik(draws, data):
    """``log N(Y_ij | theta_i + tau_j, sigma2_j)`` for every draw and observation."""
    s, r = data.subject, data.rater
    y = np.asarray(data.score, dtype=float)
    prec = draws.inv_sigma2[:, r]
    resid = y[None, :] - draws.theta[:, s] - draws.tau[:, r]
    return -0.5 * (_LOG_2PI - np.log(prec) + resid * resid * prec)


def waic(pointwise_loglik):
    """WAIC from a ``draws x observations`` log-likelihood matrix.

    Returns ``(waic, lppd, p_waic)`` with ``p_waic`` the summed sample
    variance (``ddof=1``) of the pointwise log-likelihoods.
    """
    ll = np.atleast_2d(np.asarray(pointwise_loglik, dtype=float))
    if not np.all(np.isfinite(ll)):
        raise NumericalFailure("non-finite pointwise log-likelihood")
    S = ll.shape[0]
    lppd = float((logsumexp(ll, axis=0) - np.log(S)).sum())
    # deviations from the first draw keep constant columns at exactly zero variance
    p_waic = float((ll - ll[0]).var(axis=0, ddof=1).sum()) if S > 1 else 0.0
    return -2.0 * (lppd - p_waic), lppd, p_waic


def potential_scale_reduction(traces):
    """Gelman-Rubin ``R-hat`` of one scalar across equal-length chains."""
    x = np.asarray(traces, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise BadParameter("need at least two chains of two draws")
    n = x.shape[1]
    W = x.var(axis=1, ddof=1).mean()
    B = n * x.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))
