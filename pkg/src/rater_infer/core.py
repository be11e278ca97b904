"""Data model: rating datasets, hyperparameter configuration and chain state."""

from __future__ import annotations

import copy
import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadParameter, DuplicateObservation, EmptyDataset, OutOfScale

MODEL_KINDS = ("BNP", "BSP", "BP", "OneWay", "Ordinal")
CSV_HEADER = ("subject_id", "rater_id", "score")


@dataclass(frozen=True, eq=False)
class RatingDataset:
    """Sparse two-way design: one row per (subject, rater, score) observation.

    ``subject`` and ``rater`` hold dense 0-based ids; the original labels read
    from file are kept in ``subject_labels`` / ``rater_labels``.
    """

    subject: np.ndarray
    rater: np.ndarray
    score: np.ndarray
    num_subjects: int
    num_raters: int
    scale_min: float
    scale_max: float
    subject_labels: tuple = ()
    rater_labels: tuple = ()

    def __post_init__(self):
        subject = np.asarray(self.subject, dtype=np.int64)
        rater = np.asarray(self.rater, dtype=np.int64)
        score = np.asarray(self.score, dtype=np.float64)
        if not (subject.shape == rater.shape == score.shape) or subject.ndim != 1:
            raise BadParameter("subject, rater and score must be 1-d arrays of equal length")
        if subject.size == 0:
            raise EmptyDataset("dataset has no observations")
        I, J = int(self.num_subjects), int(self.num_raters)
        if subject.min() < 0 or subject.max() >= I or rater.min() < 0 or rater.max() >= J:
            raise BadParameter("subject/rater ids out of range")
        if np.bincount(subject, minlength=I).min() == 0:
            raise BadParameter("every subject needs at least one rating")
        if np.bincount(rater, minlength=J).min() == 0:
            raise BadParameter("every rater needs at least one rating")
        pair = subject * J + rater
        if np.unique(pair).size != pair.size:
            raise DuplicateObservation("a (subject, rater) pair appears more than once")
        if not self.scale_min < self.scale_max:
            raise BadParameter("scale_min must be below scale_max")
        if np.any(score < self.scale_min) or np.any(score > self.scale_max):
            raise OutOfScale(f"scores must lie in [{self.scale_min}, {self.scale_max}]")
        for name, value in (("subject", subject), ("rater", rater), ("score", score)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "num_subjects", I)
        object.__setattr__(self, "num_raters", J)
        if not self.subject_labels:
            object.__setattr__(self, "subject_labels", tuple(str(i) for i in range(I)))
        if not self.rater_labels:
            object.__setattr__(self, "rater_labels", tuple(str(j) for j in range(J)))

    @property
    def n_obs(self):
        return self.score.size

    @property
    def scale_center(self):
        return 0.5 * (self.scale_min + self.scale_max)

    @property
    def observations(self):
        return list(zip(self.subject.tolist(), self.rater.tolist(), self.score.tolist()))

    @property
    def ratings_per_subject(self):
        """``|R_i|`` for every subject."""
        return np.bincount(self.subject, minlength=self.num_subjects)

    @property
    def ratings_per_rater(self):
        """``|S_j|`` for every rater."""
        return np.bincount(self.rater, minlength=self.num_raters)

    def raters_of(self, i):
        """Index set ``R_i``: the raters who scored subject ``i``."""
        return np.sort(self.rater[self.subject == i])

    def subjects_of(self, j):
        """Index set ``S_j``: the subjects scored by rater ``j``."""
        return np.sort(self.subject[self.rater == j])

    def with_scores(self, score):
        """Copy of the design with a new score vector (no scale check)."""
        out = object.__new__(RatingDataset)
        for f in dataclasses.fields(self):
            object.__setattr__(out, f.name, getattr(self, f.name))
        score = np.array(score, dtype=np.float64)
        score.setflags(write=False)
        object.__setattr__(out, "score", score)
        object.__setattr__(out, "scale_min", -np.inf)
        object.__setattr__(out, "scale_max", np.inf)
        return out

    def equals(self, other):
        return (
            isinstance(other, RatingDataset)
            and self.num_subjects == other.num_subjects
            and self.num_raters == other.num_raters
            and self.scale_min == other.scale_min
            and self.scale_max == other.scale_max
            and np.array_equal(self.subject, other.subject)
            and np.array_equal(self.rater, other.rater)
            and np.array_equal(self.score, other.score)
        )


def _encode(labels):
    """Dictionary-encode labels to dense ints in order of first appearance."""
    mapping = {}
    codes = np.empty(len(labels), dtype=np.int64)
    for n, lab in enumerate(labels):
        codes[n] = mapping.setdefault(lab, len(mapping))
    return codes, tuple(mapping)


def ingest_csv(path, scale_min, scale_max):
    """Read a ``subject_id,rater_id,score`` CSV into a :class:`RatingDataset`.

    Ids may be arbitrary strings; they are mapped to dense integers in order
    of first appearance.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDataset(f"{path} is empty")
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise BadParameter(f"{path}: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")
        subjects, raters, scores = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise BadParameter(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            subjects.append(row[0].strip())
            raters.append(row[1].strip())
            try:
                scores.append(float(row[2]))
            except ValueError:
                raise BadParameter(f"{path}:{lineno}: score {row[2]!r} is not a number") from None
    if not scores:
        raise EmptyDataset(f"{path} has no observations")
    s_codes, s_labels = _encode(subjects)
    r_codes, r_labels = _encode(raters)
    pair = s_codes * len(r_labels) + r_codes
    uniq, counts = np.unique(pair, return_counts=True)
    if np.any(counts > 1):
        dup = uniq[counts > 1][0]
        raise DuplicateObservation(
            f"pair (subject={s_labels[dup // len(r_labels)]}, rater={r_labels[dup % len(r_labels)]}) repeated"
        )
    return RatingDataset(
        subject=s_codes,
        rater=r_codes,
        score=np.array(scores),
        num_subjects=len(s_labels),
        num_raters=len(r_labels),
        scale_min=float(scale_min),
        scale_max=float(scale_max),
        subject_labels=s_labels,
        rater_labels=r_labels,
    )


def emit_csv(data, path, use_labels=False):
    """Write a dataset back out in the ingest format (dense ids by default)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s, r, y in zip(data.subject.tolist(), data.rater.tolist(), data.score.tolist()):
            if use_labels:
                s, r = data.subject_labels[s], data.rater_labels[r]
            w.writerow((s, r, repr(y)))


def emit_id_map(labels, path):
    """Two-column ``original_id,dense_id`` mapping file."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("original_id", "dense_id"))
        for dense, lab in enumerate(labels):
            w.writerow((lab, dense))


@dataclass(frozen=True)
class HyperConfig:
    """Fixed hyperparameters, truncation level and MCMC schedule.

    Gamma hyperpriors on base-measure shapes (``q_w0``, ``Q_w0`` ...) are
    shape-rate; inverse-gamma ones (``q_S0``, ``Q_S0`` ...) are shape-scale.
    ``lam_mu0=None`` means "centre of the dataset's rating scale".
    """

    R: int = 25
    iters: int = 50_000
    burn_in: int = 10_000
    thin: int = 40
    seed: int = 0
    model_kind: str = "BNP"
    # subject base measure G0 = N(mu0, S0) x Ga(w0, w0 / W0)
    lam_mu0: float | None = None
    kappa2_mu0: float = 100.0
    q_S0: float = 0.005
    Q_S0: float = 0.005
    q_w0: float = 0.005
    Q_w0: float = 0.005
    q_W0: float = 0.005
    Q_W0: float = 0.005
    # rater base measure H0 = N(eta0, D0) x Ga(a0, a0/A0) x Ga(b0, b0/B0) x Ga(m0, m0/M0)
    lam_eta0: float = 0.0
    kappa2_eta0: float = 100.0
    q_D0: float = 0.005
    Q_D0: float = 0.005
    q_a0: float = 0.005
    Q_a0: float = 0.005
    q_A0: float = 0.005
    Q_A0: float = 0.005
    q_b0: float = 0.005
    Q_b0: float = 0.005
    q_B0: float = 0.005
    Q_B0: float = 0.005
    q_m0: float = 0.005
    Q_m0: float = 0.005
    q_M0: float = 0.005
    Q_M0: float = 0.005
    # concentration priors alpha ~ Ga(a, A)
    a_1: float = 1.0
    A_1: float = 1.0
    a_2: float = 1.0
    A_2: float = 1.0
    alloc_includes_reliability: bool = True
    # mixture functionals over "occupied" components (renormalized) or "all" R
    moments_over: str = "occupied"
    dm_eps0: float = 1e-8
    dm_max_iter: int = 10
    # ordinal variant
    n_categories: int | None = None
    fixed_thresholds: tuple | None = None
    fix_sigma: bool | None = None

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise BadParameter(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.moments_over not in ("occupied", "all"):
            raise BadParameter("moments_over must be 'occupied' or 'all'")
        if int(self.R) < 1:
            raise BadParameter("truncation level R must be >= 1")
        if self.thin < 1:
            raise BadParameter("thin must be >= 1")
        if not 0 <= self.burn_in < self.iters:
            raise BadParameter("need 0 <= burn_in < iters")
        for f in dataclasses.fields(self):
            if f.name.startswith(("q_", "Q_", "kappa2_")) or f.name in ("a_1", "A_1", "a_2", "A_2", "dm_eps0"):
                if not getattr(self, f.name) > 0:
                    raise BadParameter(f"{f.name} must be strictly positive")
        if self.dm_max_iter < 1:
            raise BadParameter("dm_max_iter must be >= 1")

    @property
    def R_subject(self):
        return 1 if self.model_kind == "BP" else int(self.R)

    @property
    def R_rater(self):
        return 1 if self.model_kind in ("BP", "BSP") else int(self.R)

    @property
    def n_retained(self):
        return (self.iters - self.burn_in) // self.thin

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def resolved(self, data):
        """Fill data-dependent defaults (currently the prior centre of ``mu0``)."""
        if self.lam_mu0 is None:
            return self.replace(lam_mu0=float(data.scale_center))
        return self

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class ChainState:
    """Complete latent state of one Gibbs iteration.

    Subject atoms are ``(mu, omega2)``; rater atoms are
    ``(eta, phi2, gam, beta)`` where ``beta`` is the component's mean
    reliability and ``gam`` its shape in ``1/sigma2 ~ Ga(1+gam, (1+gam)/beta)``.
    """

    theta: np.ndarray
    mu: np.ndarray
    omega2: np.ndarray
    V1: np.ndarray
    pi1: np.ndarray
    c1: np.ndarray
    eta: np.ndarray
    phi2: np.ndarray
    gam: np.ndarray
    beta: np.ndarray
    V2: np.ndarray
    pi2: np.ndarray
    c2: np.ndarray
    tau: np.ndarray
    inv_sigma2: np.ndarray
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
    b0: float
    B0: float
    m0: float
    M0: float
    extras: dict = field(default_factory=dict)

    def copy(self):
        return copy.deepcopy(self)


POSITIVE_ARRAYS = ("omega2", "phi2", "gam", "beta", "inv_sigma2")
POSITIVE_SCALARS = ("S0", "W0", "D0", "A0", "B0", "M0", "a0", "b0", "m0", "w0", "alpha1", "alpha2")


@dataclass
class ClusterCensus:
    """Occupancy counts and membership lists of both mixtures."""

    N1: np.ndarray
    N2: np.ndarray
    members1: list
    members2: list


def census(state):
    R1, R2 = state.mu.size, state.eta.size
    c1 = np.asarray(state.c1)
    c2 = np.asarray(state.c2)
    return ClusterCensus(
        N1=np.bincount(c1, minlength=R1),
        N2=np.bincount(c2, minlength=R2),
        members1=[np.flatnonzero(c1 == n) for n in range(R1)],
        members2=[np.flatnonzero(c2 == k) for k in range(R2)],
    )


def _check_stick(tag, V, pi, out):
    V = np.asarray(V, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if V.shape != pi.shape:
        out.append(f"{tag}: V and pi lengths differ")
        return
    if abs(pi.sum() - 1.0) > 1e-12:
        out.append(f"{tag}: weights sum to {pi.sum():.15g}, not 1")
    if np.any(pi < 0):
        out.append(f"{tag}: negative weight")
    if V[-1] != 1.0:
        out.append(f"{tag}: last stick V[R-1]={V[-1]!r} is not 1")
    if np.any(V <= 0) or np.any(V > 1):
        out.append(f"{tag}: stick proportions outside (0, 1]")
    remain = np.concatenate(([1.0], np.cumprod(1.0 - V[:-1])))
    if not np.allclose(pi, V * remain, rtol=1e-9, atol=1e-12):
        out.append(f"{tag}: weights are not the stick-breaking transform of V")


def validate_state(state, census_=None):
    """List every violated state invariant; an empty list means the state is valid."""
    out = []
    _check_stick("pi1", state.V1, state.pi1, out)
    _check_stick("pi2", state.V2, state.pi2, out)
    for name in POSITIVE_ARRAYS:
        arr = np.asarray(getattr(state, name), dtype=float)
        for k in np.flatnonzero(~(arr > 0) | ~np.isfinite(arr)):
            out.append(f"{name}[{k}] = {arr[k]!r} is not strictly positive and finite")
    for name in POSITIVE_SCALARS:
        val = getattr(state, name)
        if not (val > 0 and np.isfinite(val)):
            out.append(f"{name} = {val!r} is not strictly positive and finite")
    for name in ("theta", "tau", "mu", "eta"):
        if not np.all(np.isfinite(getattr(state, name))):
            out.append(f"{name} has non-finite entries")
    for name in ("mu0", "eta0"):
        if not np.isfinite(getattr(state, name)):
            out.append(f"{name} is not finite")
    R1, R2 = state.mu.size, state.eta.size
    if state.omega2.size != R1 or state.pi1.size != R1:
        out.append("subject atom arrays have inconsistent lengths")
    if not (state.phi2.size == state.gam.size == state.beta.size == state.pi2.size == R2):
        out.append("rater atom arrays have inconsistent lengths")
    c1 = np.asarray(state.c1)
    c2 = np.asarray(state.c2)
    if c1.size and (c1.min() < 0 or c1.max() >= R1):
        out.append("c1 has allocations outside [0, R)")
    if c2.size and (c2.min() < 0 or c2.max() >= R2):
        out.append("c2 has allocations outside [0, R)")
    if census_ is not None:
        if census_.N1.sum() != c1.size:
            out.append("census N1 does not sum to the number of subjects")
        if census_.N2.sum() != c2.size:
            out.append("census N2 does not sum to the number of raters")
        for n, members in enumerate(census_.members1):
            if not np.array_equal(np.sort(members), np.flatnonzero(c1 == n)) or len(members) != census_.N1[n]:
                out.append(f"census membership of subject cluster {n} disagrees with c1")
        for k, members in enumerate(census_.members2):
            if not np.array_equal(np.sort(members), np.flatnonzero(c2 == k)) or len(members) != census_.N2[k]:
                out.append(f"census membership of rater cluster {k} disagrees with c2")
    return out
