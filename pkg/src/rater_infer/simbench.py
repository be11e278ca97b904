"""Simulation scenarios and parameter-recovery metrics.

Three generative scenarios on a 1-100 rating scale:

``UU``
    ``theta ~ N(50, 50)``; ``tau ~ N(0, 25)`` with ``1/sigma2 ~ Ga(11, 11/0.15)`` (``gamma = 10``).
``BU``
    ``theta ~ 0.5 N(35, 10) + 0.5 N(65, 10)``; raters as in ``UU``.
``BB``
    subjects as in ``BU``; raters from ``0.5 N(-10, 5) Ga(11, 11/0.1) + 0.5 N(10, 5) Ga(11, 11/0.2)``.

The second argument of ``N`` is a variance. Bias locations of ``BB`` can be
changed with ``ScenarioSpec.bias_means``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mixture
from .core import RatingDataset
from .errors import BadParameter

SCENARIOS = ("UU", "BU", "BB")
SCALE = (1.0, 100.0)
SCALE_CENTER = 50.0
MEAN_RELIABILITY = 0.15
_MAX_ASSIGN_TRIES = 100


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str = "UU"
    I: int = 500
    J: int = 100
    ratings_per_subject: int = 2
    seed: int = 0
    bias_means: tuple | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise BadParameter(f"unknown scenario {self.scenario!r}; valid: {', '.join(SCENARIOS)}")
        if self.I < 1 or self.J < 1:
            raise BadParameter("I and J must be positive")
        if not 1 <= self.ratings_per_subject <= self.J:
            raise BadParameter("ratings_per_subject must lie in 1..J")
        if self.I * self.ratings_per_subject < self.J:
            raise BadParameter("too few ratings for every rater to rate at least one subject")
        if self.bias_means is not None and len(self.bias_means) != 2:
            raise BadParameter("bias_means needs two values")


@dataclass(frozen=True)
class _Population:
    """Exact mixture description of a scenario."""

    subj_w: np.ndarray
    subj_atoms: np.ndarray  # (mean, variance)
    rater_w: np.ndarray
    rater_atoms: np.ndarray  # (eta, phi2, gamma, beta)


def _population(spec):
    half = np.array([0.5, 0.5])
    if spec.scenario == "UU":
        sw, sa = np.array([1.0]), np.array([[50.0, 50.0]])
    else:
        sw, sa = half, np.array([[35.0, 10.0], [65.0, 10.0]])
    if spec.scenario == "BB":
        lo, hi = (-10.0, 10.0) if spec.bias_means is None else map(float, spec.bias_means)
        rw, ra = half, np.array([[lo, 5.0, 10.0, 0.1], [hi, 5.0, 10.0, 0.2]])
    else:
        rw, ra = np.array([1.0]), np.array([[0.0, 25.0, 10.0, MEAN_RELIABILITY]])
    return _Population(sw, sa, rw, ra)


def population_moments(spec):
    """Population mixture moments and ``ICC_A`` of a scenario."""
    pop = _population(spec)
    ms = mixture.subject_moments(pop.subj_w, pop.subj_atoms)
    mr = mixture.rater_moments(pop.rater_w, pop.rater_atoms)
    return {
        "mu_G": ms.mu_G,
        "omega2_G": ms.omega2_G,
        "eta_H": mr.eta_H,
        "phi2_H": mr.phi2_H,
        "beta_H": mr.beta_H,
        "sigma_tilde_H": mr.sigma_tilde_H,
        "icc_A": mixture.icc_A(ms, mr),
    }


def true_icc_A(spec):
    """``ICC_A`` of the scenario's population mixtures.

    Examples
    --------
    >>> round(true_icc_A(ScenarioSpec("UU")), 5)
    0.60729
    """
    return population_moments(spec)["icc_A"]


@dataclass
class GroundTruth:
    """Generated values plus population functionals.

    ``theta_true`` and ``tau_true`` are on the identified scale used by
    centered fits: the population bias mean ``eta_H`` is moved from the
    raters to the subjects. ``theta_raw`` and ``tau_raw`` are the draws
    as generated. ``realized`` holds the same functionals computed from the
    finite sample of subjects and raters.
    """

    theta_true: np.ndarray
    tau_true: np.ndarray
    inv_sigma2_true: np.ndarray
    theta_raw: np.ndarray
    tau_raw: np.ndarray
    subject_cluster: np.ndarray
    rater_cluster: np.ndarray
    population: dict
    realized: dict = field(default_factory=dict)
    spec: ScenarioSpec | None = None

    def to_dict(self):
        return {
            "spec": None if self.spec is None else {
                "scenario": self.spec.scenario,
                "I": self.spec.I,
                "J": self.spec.J,
                "ratings_per_subject": self.spec.ratings_per_subject,
                "seed": self.spec.seed,
                "bias_means": None if self.spec.bias_means is None else list(self.spec.bias_means),
            },
            "population": self.population,
            "realized": self.realized,
            "theta_true": self.theta_true.tolist(),
            "tau_true": self.tau_true.tolist(),
            "inv_sigma2_true": self.inv_sigma2_true.tolist(),
            "theta_raw": self.theta_raw.tolist(),
            "tau_raw": self.tau_raw.tolist(),
            "subject_cluster": self.subject_cluster.tolist(),
            "rater_cluster": self.rater_cluster.tolist(),
        }


def _assign_raters(I, J, n, rng):
    """Each subject gets ``n`` distinct raters; redraw until every rater is used."""
    for _ in range(_MAX_ASSIGN_TRIES):
        raters = np.stack([rng.choice(J, n, replace=False) for _ in range(I)])
        if np.unique(raters).size == J:
            return raters
    raise BadParameter("could not give every rater at least one subject; increase I or ratings")


def generate(spec):
    """Draw one dataset and its ground truth from a scenario.

    Draw order is subjects, raters, assignments, then residuals, all from
    one PCG64 stream seeded with ``spec.seed``. Ratings are not clipped to
    the nominal scale; the dataset's scale is widened symmetrically around
    its centre when needed.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    pop = _population(spec)
    I, J, n = spec.I, spec.J, spec.ratings_per_subject

    c1 = rng.choice(pop.subj_w.size, I, p=pop.subj_w)
    m, v = pop.subj_atoms[c1].T
    theta = m + np.sqrt(v) * rng.standard_normal(I)

    c2 = rng.choice(pop.rater_w.size, J, p=pop.rater_w)
    eta, phi2, gam, beta = pop.rater_atoms[c2].T
    tau = eta + np.sqrt(phi2) * rng.standard_normal(J)
    shape = 1.0 + gam
    inv_sigma2 = rng.gamma(shape, beta / shape)

    raters = _assign_raters(I, J, n, rng)
    subject = np.repeat(np.arange(I), n)
    rater = raters.ravel()
    score = theta[subject] + tau[rater] + rng.standard_normal(subject.size) / np.sqrt(inv_sigma2[rater])

    centre = 0.5 * (SCALE[0] + SCALE[1])
    half = max(0.5 * (SCALE[1] - SCALE[0]), float(np.ceil(np.max(np.abs(score - centre)))))
    data = RatingDataset(
        subject=subject,
        rater=rater,
        score=score,
        num_subjects=I,
        num_raters=J,
        scale_min=centre - half,
        scale_max=centre + half,
    )

    popm = population_moments(spec)
    shift = popm["eta_H"]
    sig2 = 1.0 / inv_sigma2
    realized = {
        "mu_G": float(theta.mean() + tau.mean()),
        "omega2_G": float(theta.var()),
        "phi2_H": float(tau.var()),
        "sigma_tilde_H": float(sig2.mean()),
    }
    realized["icc_A"] = mixture.icc_parametric(realized["omega2_G"], realized["phi2_H"], realized["sigma_tilde_H"])
    population = dict(popm)
    # identified scale: subjects carry the bias mean
    population["mu_G"] = popm["mu_G"] + shift
    population["eta_H"] = 0.0
    truth = GroundTruth(
        theta_true=theta + shift,
        tau_true=tau - shift,
        inv_sigma2_true=inv_sigma2,
        theta_raw=theta,
        tau_raw=tau,
        subject_cluster=c1,
        rater_cluster=c2,
        population=population,
        realized=realized,
        spec=spec,
    )
    return data, truth


# -------------------------------------------------------------------- metrics

ENTITY_FAMILIES = ("theta", "tau", "inv_sigma2")
SCALAR_FAMILIES = ("mu_G", "omega2_G", "phi2_H", "sigma_tilde_H", "icc_A")


def _estimates(draws):
    from .post import sc_center_draws

    d = draws if draws.centered else sc_center_draws(draws)
    est = {
        "theta": d.theta.mean(axis=0),
        "tau": d.tau.mean(axis=0),
        "inv_sigma2": d.inv_sigma2.mean(axis=0),
    }
    for name in SCALAR_FAMILIES:
        est[name] = np.array([d.scalars[name].mean()])
    return est


def _standardizer(name, truth, scale_center):
    if name in ("theta", "tau", "mu_G"):
        return scale_center
    if name == "inv_sigma2":
        return MEAN_RELIABILITY
    return truth.population[name]


def recovery_errors(draws, truth, scale_center=SCALE_CENTER):
    """Standardized errors of posterior means, one array per parameter family."""
    est = _estimates(draws)
    target = {
        "theta": truth.theta_true,
        "tau": truth.tau_true,
        "inv_sigma2": truth.inv_sigma2_true,
    }
    for name in SCALAR_FAMILIES:
        target[name] = np.array([truth.population[name]])
    out = {}
    for name, e in est.items():
        t = np.asarray(target[name], dtype=float)
        if e.shape != t.shape:
            raise BadParameter(f"{name}: {e.shape[0]} estimates but {t.shape[0]} true values")
        out[name] = (e - t) / _standardizer(name, truth, scale_center)
    return out


def recovery_metrics(fits, truths, scale_center=SCALE_CENTER):
    """S-RMSE and S-MAE per parameter family, pooled over entities and datasets.

    Parameters
    ----------
    fits : ChainDraws or list of ChainDraws
        Draws from each replicate; centered automatically when needed.
    truths : GroundTruth or list of GroundTruth
        Matching ground truth.

    Returns
    -------
    dict
        ``{family: {"s_rmse": ..., "s_mae": ...}}``.
    """
    if not isinstance(fits, (list, tuple)):
        fits, truths = [fits], [truths]
    if len(fits) != len(truths):
        raise BadParameter("need one ground truth per fit")
    pooled = {}
    for f, t in zip(fits, truths):
        for name, err in recovery_errors(f, t, scale_center).items():
            pooled.setdefault(name, []).append(err)
    out = {}
    for name, parts in pooled.items():
        err = np.concatenate(parts)
        out[name] = {"s_rmse": float(np.sqrt(np.mean(err * err))), "s_mae": float(np.mean(np.abs(err)))}
    return out


# Shape hyperpriors Ga(10, 2) (mean 5) keep the base-measure shapes above one.
# Below one the gamma priors on precisions and reliabilities have a pole at
# zero and atoms of singleton rater clusters can drift off to infinity.
BENCH_PRIORS = {
    "q_w0": 10.0,
    "Q_w0": 2.0,
    "q_a0": 10.0,
    "Q_a0": 2.0,
    "q_b0": 10.0,
    "Q_b0": 2.0,
    "q_m0": 10.0,
    "Q_m0": 2.0,
}
