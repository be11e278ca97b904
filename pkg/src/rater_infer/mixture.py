"""Stick-breaking weights, truncated-mixture moments and intraclass correlations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadParameter

STICK_TOL = 1e-12


@dataclass(frozen=True)
class StickWeights:
    V: np.ndarray
    pi: np.ndarray


@dataclass(frozen=True)
class SubjectMixtureMoments:
    mu_G: float
    omega2_G: float


@dataclass(frozen=True)
class RaterMixtureMoments:
    """Moments of the rater mixture.

    ``psi2_H = sum pi_k (beta_k^2 + beta_k^2 / gamma_k) - beta_H^2`` is the
    reliability dispersion with per-component term ``beta_k^2 / gamma_k``. The
    exact variance of ``1/sigma2`` within a component is
    ``beta_k^2 / (1 + gamma_k)``, slightly smaller.
    """

    eta_H: float
    phi2_H: float
    beta_H: float
    psi2_H: float
    sigma_tilde_H: float


def stick_weights(V):
    """Vectorized stick-breaking transform without validation (hot path)."""
    V = np.asarray(V, dtype=float)
    remain = np.cumprod(np.concatenate((np.ones(V.shape[:-1] + (1,)), 1.0 - V[..., :-1])), axis=-1)
    return V * remain


def stick_break(V):
    """Map stick proportions ``V`` (last entry 1) to mixture weights.

    Examples
    --------
    >>> stick_break([0.5, 0.5, 1.0]).pi
    array([0.5 , 0.25, 0.25])
    """
    V = np.array(V, dtype=float, ndmin=1)
    if V.ndim != 1 or V.size == 0:
        raise BadParameter("V must be a non-empty 1-d sequence")
    if np.any(~(V > 0)) or np.any(V > 1):
        raise BadParameter("stick proportions must lie in (0, 1]")
    if V[-1] != 1.0:
        raise BadParameter("the last stick proportion must equal 1")
    pi = stick_weights(V)
    if abs(pi.sum() - 1.0) > STICK_TOL:
        # rounding in the cumulative product; renormalize the tail weight
        pi[-1] = max(0.0, 1.0 - pi[:-1].sum())
    return StickWeights(V=V, pi=pi)


def _weights(weights):
    pi = weights.pi if isinstance(weights, StickWeights) else weights
    return np.asarray(pi, dtype=float)


def subject_moments(weights, atoms):
    """Mean and variance of the subject mixture ``sum_n pi_n N(mu_n, omega2_n)``.

    ``atoms`` is a sequence of ``(mu, omega2)`` pairs or an ``(R, 2)`` array.
    """
    pi = _weights(weights)
    atoms = np.asarray(atoms, dtype=float).reshape(-1, 2)
    if atoms.shape[0] != pi.size:
        raise BadParameter(f"{pi.size} weights but {atoms.shape[0]} atoms")
    mu, om2 = atoms[:, 0], atoms[:, 1]
    if np.any(om2 < 0):
        raise BadParameter("atom variances must be nonnegative")
    mu_G = float(pi @ mu)
    # central form avoids cancellation when the mean is large
    omega2_G = float(pi @ (om2 + (mu - mu_G) ** 2))
    return SubjectMixtureMoments(mu_G=mu_G, omega2_G=omega2_G)


def expected_residual_variance(gamma, beta):
    """``E[sigma2]`` when ``1/sigma2 ~ Ga(1 + gamma, (1 + gamma) / beta)``.

    Equals ``(1 + gamma) / (beta * gamma)``; always finite because the shape
    exceeds one.
    """
    g = np.asarray(gamma, dtype=float)
    b = np.asarray(beta, dtype=float)
    if np.any(~(g > 0)) or np.any(~(b > 0)):
        raise BadParameter("gamma and beta must be strictly positive")
    out = (1.0 + 1.0 / g) / b
    return float(out) if out.ndim == 0 else out


def rater_moments(weights, atoms):
    """Moments of the rater mixture with atoms ``(eta, phi2, gamma, beta)``."""
    pi = _weights(weights)
    atoms = np.asarray(atoms, dtype=float).reshape(-1, 4)
    if atoms.shape[0] != pi.size:
        raise BadParameter(f"{pi.size} weights but {atoms.shape[0]} atoms")
    eta, phi2, gam, beta = atoms.T
    if np.any(phi2 < 0):
        raise BadParameter("phi2 atoms must be nonnegative")
    sig = expected_residual_variance(gam, beta)
    eta_H = float(pi @ eta)
    phi2_H = float(pi @ (phi2 + (eta - eta_H) ** 2))
    beta_H = float(pi @ beta)
    psi2_H = float(pi @ (beta * beta / gam + (beta - beta_H) ** 2))
    return RaterMixtureMoments(
        eta_H=eta_H,
        phi2_H=phi2_H,
        beta_H=beta_H,
        psi2_H=psi2_H,
        sigma_tilde_H=float(pi @ np.atleast_1d(sig)),
    )


def sub_mixture(weights, atoms, components):
    """Restrict a mixture to ``components`` and renormalize the weights.

    Used for cluster-conditional ICCs.
    """
    pi = _weights(weights)
    idx = np.asarray(components, dtype=int)
    w = pi[idx]
    if w.sum() <= 0:
        raise BadParameter("selected components carry zero weight")
    return w / w.sum(), np.asarray(atoms, dtype=float)[idx]


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    if np.any(~(den > 0)):
        raise BadParameter("ICC denominator must be strictly positive")
    out = num / den
    return float(out) if out.ndim == 0 else out


def _nonneg(*values):
    for v in values:
        if np.any(np.asarray(v, dtype=float) < 0):
            raise BadParameter("variance components must be nonnegative")


def icc_parametric(omega2, phi2, sigma2):
    """Share of rating variance due to subjects: ``omega2 / (omega2 + phi2 + sigma2)``."""
    _nonneg(omega2, phi2, sigma2)
    return _ratio(omega2, np.add(np.add(omega2, phi2), sigma2))


def icc_pairwise(omega2_G, phi2_H, sigma2_j, sigma2_jprime):
    """Correlation of two ratings of one subject by raters with the given residual variances."""
    _nonneg(omega2_G, phi2_H, sigma2_j, sigma2_jprime)
    base = np.add(omega2_G, phi2_H)
    return _ratio(omega2_G, np.sqrt(np.add(base, sigma2_j) * np.add(base, sigma2_jprime)))


def icc_A(moments_s, moments_r):
    """ICC at the mean residual variance; a lower bound on the expected pairwise ICC."""
    return icc_parametric(moments_s.omega2_G, moments_r.phi2_H, moments_r.sigma_tilde_H)


def icc_oneway(omega2_G, phi2_H):
    """ICC of the reduced one-way model."""
    _nonneg(omega2_G, phi2_H)
    return _ratio(omega2_G, np.add(omega2_G, phi2_H))
