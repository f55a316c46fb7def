"""Particle representation of the joint (window field, coupling) posterior.

The pair weights ``rho`` form an (N_L, N_G) array over the outer product of
local field particles and global coupling particles.  Probability tables have
the same shape (one per candidate control) or a leading candidate axis.
Likelihood updates run in log space with max-subtraction, since products of
10^4-shot binomials underflow in linear space.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import xlogy

from .nv import Control, Phase

NORM_TOL = 1e-9


class DegeneracyError(RuntimeError):
    """The posterior lost all mass (zero normaliser)."""


@dataclass(frozen=True)
class ParticleSet:
    """Weighted particles; ``particles`` has shape (N,) or (N, M)."""

    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.shape[0] != np.shape(self.particles)[0]:
            raise ValueError("weights must be one per particle")
        if np.any(w < 0) or abs(w.sum() - 1.0) > NORM_TOL:
            raise ValueError("weights must be non-negative and sum to one")

    @classmethod
    def uniform(cls, particles: np.ndarray) -> "ParticleSet":
        n = np.shape(particles)[0]
        return cls(np.asarray(particles, dtype=float), np.full(n, 1.0 / n))

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def ess(self) -> float:
        return 1.0 / float(np.sum(self.weights ** 2))

    def mean(self) -> np.ndarray:
        return np.tensordot(self.weights, self.particles, axes=1)

    def std(self) -> np.ndarray:
        d = self.particles - self.mean()
        return np.sqrt(np.maximum(np.tensordot(self.weights, d * d, axes=1), 0.0))


LocalParticleSet = ParticleSet
GlobalParticleSet = ParticleSet


@dataclass(frozen=True)
class ScoreParams:
    alpha_B: float = 1.0
    beta_B: float = 0.1
    beta_BJ: float = 0.05
    lambda_B: float = 10.0
    alpha_J: float = 1.0
    beta_JJ: float = 0.2
    eta_BJ: float = 0.05
    lambda_J: float = 10.0
    epsilon: float = 1e-12
    k_top: int = 5

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.k_top < 1:
            raise ValueError("k_top must be >= 1")


def _check_pair(rho: np.ndarray, P: np.ndarray) -> None:
    if P.shape[-2:] != rho.shape:
        raise ValueError(f"probability table shape {P.shape} does not match weights {rho.shape}")


def joint_prior(local: ParticleSet, glob: ParticleSet) -> np.ndarray:
    return np.outer(local.weights, glob.weights)


def mixture_probability(rho: np.ndarray, P: np.ndarray) -> np.ndarray | float:
    """Posterior-averaged success probability; vectorised over leading axes of P."""
    rho = np.asarray(rho)
    P = np.asarray(P)
    _check_pair(rho, P)
    val = np.einsum("...ij,ij->...", P, rho)
    return float(val) if val.ndim == 0 else val


def entropy(rho: np.ndarray) -> float:
    return float(-np.sum(xlogy(rho, rho)))


def expected_information_gain(rho: np.ndarray, P: np.ndarray) -> np.ndarray | float:
    """Single-shot Bernoulli EIG (nats) of each table in ``P``.

    Uses the identity EIG = H(rho) - sum_o p_o H(rho_o), written in terms of
    the unnormalised outcome posteriors so no table needs renormalising.
    """
    rho = np.asarray(rho)
    P = np.asarray(P)
    _check_pair(rho, P)
    h0 = entropy(rho)
    a = rho * P
    b = rho * (1.0 - P)
    pa = a.sum(axis=(-2, -1))
    pb = b.sum(axis=(-2, -1))
    # sum_o p_o H(a/p_o) = -sum xlogy(a, a) + p_o log p_o
    cond = (-xlogy(a, a).sum(axis=(-2, -1)) + xlogy(pa, pa)
            - xlogy(b, b).sum(axis=(-2, -1)) + xlogy(pb, pb))
    eig = np.maximum(h0 - cond, 0.0)
    return float(eig) if np.ndim(eig) == 0 else eig


def expected_information_gain_binomial(rho: np.ndarray, P: np.ndarray, n_shots: int) -> float:
    """EIG of the full n-shot binomial experiment (sum over all counts)."""
    from scipy.stats import binom

    rho = np.asarray(rho)
    P = np.asarray(P)
    _check_pair(rho, P)
    z = np.arange(n_shots + 1)
    like = binom.pmf(z[:, None, None], n_shots, P[None])
    joint = rho[None] * like
    pz = joint.sum(axis=(1, 2))
    h_cond = -xlogy(joint, joint).sum() + xlogy(pz, pz).sum()
    return max(0.0, entropy(rho) - float(h_cond))


def update_pair_weights(rho: np.ndarray, P: np.ndarray, z: int, n_shots: int) -> np.ndarray:
    """Binomial Bayes update of the pair weights for count ``z`` of ``n_shots``."""
    if not 0 <= z <= n_shots:
        raise ValueError(f"count {z} outside 0..{n_shots}")
    rho = np.asarray(rho, dtype=float)
    P = np.asarray(P, dtype=float)
    _check_pair(rho, P)
    # extended precision: z * log(p) with z ~ 1e4 would otherwise cost
    # about four digits of relative accuracy in the small weights
    Pl = P.astype(np.longdouble)
    with np.errstate(divide="ignore"):
        logpost = np.log(rho.astype(np.longdouble))
        if z:
            logpost = logpost + z * np.log(Pl)
        if n_shots - z:
            logpost = logpost + (n_shots - z) * np.log1p(-Pl)
    top = np.max(logpost)
    if not np.isfinite(top):
        raise DegeneracyError("posterior has no finite mass")
    post = np.exp(logpost - top)
    total = post.sum()
    if not total > 0:
        raise DegeneracyError("zero normaliser in pair-weight update")
    return (post / total).astype(float)


def marginals(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rho = np.asarray(rho)
    w = rho.sum(axis=1)
    v = rho.sum(axis=0)
    return w / w.sum(), v / v.sum()


def posterior_means(local: ParticleSet, glob: ParticleSet) -> tuple[np.ndarray, float]:
    return local.mean(), float(glob.mean())


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = weights.shape[0]
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right")


def resample_if_degenerate(pset: ParticleSet, threshold_frac: float,
                           rng: np.random.Generator) -> tuple[ParticleSet, bool]:
    """Systematic resampling when ESS < threshold_frac * N.

    Returns the (possibly unchanged) set and whether resampling happened.
    """
    n = len(pset)
    if pset.ess >= threshold_frac * n:
        return pset, False
    idx = systematic_resample(pset.weights, rng)
    return ParticleSet(pset.particles[idx].copy(), np.full(n, 1.0 / n)), True


def jitter(pset: ParticleSet, sigma: float, lo: float, hi: float,
           rng: np.random.Generator) -> ParticleSet:
    """Gaussian jitter followed by projection onto [lo, hi]; weights kept."""
    if sigma == 0:
        return pset
    moved = pset.particles + sigma * rng.standard_normal(pset.particles.shape)
    return replace(pset, particles=np.clip(moved, lo, hi))


def mix_in(pset: ParticleSet, fresh: np.ndarray, fraction: float,
           rng: np.random.Generator) -> ParticleSet:
    """Defensive mixture: overwrite len(fresh) random particles with ``fresh``
    and give them total weight ``fraction``; the rest keep their relative
    weights.  Lets a collapsed set recover support it has lost."""
    n, k = len(pset), len(fresh)
    if k == 0 or fraction <= 0:
        return pset
    if k >= n:
        return ParticleSet.uniform(fresh)
    idx = rng.choice(n, size=k, replace=False)
    parts = np.array(pset.particles, copy=True)
    parts[idx] = fresh
    w = np.array(pset.weights, copy=True)
    w[idx] = 0.0
    tot = w.sum()
    w = w * ((1.0 - fraction) / tot) if tot > 0 else np.full(n, (1.0 - fraction) / (n - k))
    w[idx] = 0.0
    w[idx] += fraction / k
    return ParticleSet(parts, w / w.sum())


def rejuvenate(local: ParticleSet, sigma_local: float, glob: ParticleSet, sigma_J: float,
               rng: np.random.Generator, b_box: tuple[float, float],
               j_range: tuple[float, float]) -> tuple[ParticleSet, ParticleSet]:
    return (jitter(local, sigma_local, *b_box, rng), jitter(glob, sigma_J, *j_range, rng))


def phase_score(eig: float, fd, phase: Phase, params: ScoreParams) -> float:
    """Metrology-aware control score for the B- or J-sensitive phase."""
    eps = params.epsilon
    if Phase(phase) is Phase.B:
        return (params.alpha_B * eig
                + params.beta_B * float(np.sum(np.log(np.asarray(fd.F_B_diag) + eps)))
                + params.beta_BJ * np.log(fd.F_J + eps)
                - params.lambda_B * fd.leakage)
    return (params.alpha_J * eig
            + params.beta_JJ * np.log(fd.F_J + eps)
            + params.eta_BJ * float(np.sum(np.log(np.abs(np.asarray(fd.F_BJ_cross)) + eps)))
            - params.lambda_J * fd.leakage)


def top_by_eig(eigs: Sequence[float], k: int) -> list[int]:
    """Indices of the ``k`` largest EIGs; ties keep candidate order."""
    order = np.argsort(-np.asarray(eigs, dtype=float), kind="stable")
    return [int(i) for i in order[:k]]


def select_control(candidates: Sequence[tuple[Control, np.ndarray]], rho: np.ndarray,
                   phase: Phase, params: ScoreParams, diagnostics,
                   eigs: np.ndarray | None = None) -> tuple[int, np.ndarray, list]:
    """Pick a control: EIG pre-screen, then the phase score on the survivors.

    ``diagnostics(indices)`` returns Fisher diagnostics for the given
    candidate indices (evaluated at the current posterior mean by the
    caller).  ``eigs`` may carry precomputed EIGs (e.g. the exact binomial
    variant).  Returns (chosen index, all EIGs, diagnostics of the chosen
    control).
    """
    if not candidates:
        raise ValueError("no candidate controls for this phase")
    if eigs is None:
        P = np.stack([tab for _, tab in candidates])
        eigs = np.atleast_1d(expected_information_gain(rho, P))
    eigs = np.asarray(eigs, dtype=float)
    if len(candidates) == 1:
        return 0, eigs, diagnostics([0])
    top = top_by_eig(eigs, params.k_top)
    fds = diagnostics(top)
    scores = [phase_score(float(eigs[i]), fd, phase, params) for i, fd in zip(top, fds)]
    best = int(np.argmax(scores))  # first maximum wins
    return top[best], eigs, [fds[best]]
