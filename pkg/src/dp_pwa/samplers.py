"""Random primitives: Gamma magnitudes, isotropic directions, vector Laplace
noise, the discrete exponential mechanism and Metropolis sampling on a box.

All functions draw from an explicit :class:`RandomSource`; there is no global
random state.
"""
from __future__ import annotations

import dataclasses
import logging
from collections.abc import Callable, Sequence

import numpy as np

from .core import Box, InputError, PrivacyBudget, as_budget

logger = logging.getLogger(__name__)


class RandomSource:
    """Seeded generator with reproducible child streams.

    ``derive_child(i)`` always returns the same stream for the same parent seed
    and index, independent of how much the parent has been consumed.
    """

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._spawn_key = tuple(_spawn_key)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=self._spawn_key)
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    def derive_child(self, index: int) -> RandomSource:
        return RandomSource(self.seed, self._spawn_key + (int(index),))

    def spawn(self, n: int) -> list[RandomSource]:
        return [self.derive_child(i) for i in range(n)]

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, key={self._spawn_key})"


def sample_gamma_magnitude(shape_d: int, rate: float, rng: RandomSource, size=None):
    """Sum of ``shape_d`` i.i.d. exponentials of rate ``rate``, i.e. Gamma(shape_d, rate)."""
    if shape_d < 1:
        raise InputError("shape_d must be at least 1")
    if not rate > 0:
        raise InputError("rate must be positive")
    n = 1 if size is None else int(size)
    draws = rng.gen.exponential(1.0 / rate, size=(n, shape_d)).sum(axis=1)
    return float(draws[0]) if size is None else draws


def sample_unit_vector(d: int, rng: RandomSource, size=None) -> np.ndarray:
    """Uniform direction on the unit sphere via a normalized Gaussian draw."""
    if d < 1:
        raise InputError("d must be at least 1")
    n = 1 if size is None else int(size)
    z = rng.gen.standard_normal((n, d))
    norms = np.linalg.norm(z, axis=1)
    bad = norms == 0.0
    while np.any(bad):  # probability zero, but keep the contract
        z[bad] = rng.gen.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(z, axis=1)
        bad = norms == 0.0
    u = z / norms[:, None]
    return u[0] if size is None else u


def sample_vector_laplace(
    d: int, l2_sensitivity: float, eps, rng: RandomSource, size=None
) -> np.ndarray:
    """Noise with density proportional to ``exp(-eps ||w||_2 / l2_sensitivity)``."""
    eps = as_budget(eps)
    if not l2_sensitivity > 0:
        raise InputError("l2_sensitivity must be positive")
    n = 1 if size is None else int(size)
    rate = eps.epsilon / l2_sensitivity
    radius = sample_gamma_magnitude(d, rate, rng, size=n)
    w = radius[:, None] * sample_unit_vector(d, rng, size=n)
    return w[0] if size is None else w


def exponential_mechanism_probs(scores, sensitivity: float, eps) -> np.ndarray:
    """Row-wise ``softmax(eps * scores / (2 * sensitivity))`` with max subtraction."""
    eps = as_budget(eps)
    logits = np.asarray(scores, dtype=float) * (eps.epsilon / (2.0 * sensitivity))
    logits = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def exponential_mechanism_indices(scores, sensitivity: float, eps, u) -> np.ndarray:
    """Inverse-CDF selection for each row of ``scores`` given uniforms ``u``.

    ``scores`` has shape ``(n, m)`` and ``u`` shape ``(n,)``.
    """
    probs = exponential_mechanism_probs(scores, sensitivity, eps)
    cdf = np.cumsum(probs, axis=-1)
    idx = (cdf < np.asarray(u)[:, None]).sum(axis=-1)
    # guards against u landing above a cdf total that rounded below 1
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_discrete_exponential(
    scores, sensitivity: float, eps, rng: RandomSource, size=None
):
    """Index ``i`` with probability proportional to ``exp(eps * scores_i / (2 * sensitivity))``."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size == 0:
        raise InputError("scores must be a nonempty vector")
    if not np.all(np.isfinite(scores)):
        raise InputError("scores must be finite")
    if not sensitivity > 0:
        raise InputError("sensitivity must be positive")
    n = 1 if size is None else int(size)
    u = rng.gen.random(n)
    idx = exponential_mechanism_indices(np.broadcast_to(scores, (n, scores.size)), sensitivity, eps, u)
    return int(idx[0]) if size is None else idx


@dataclasses.dataclass(frozen=True)
class McmcConfig:
    """Metropolis settings.

    Proposals are ``N(0, proposal_scale * I)``: ``proposal_scale`` is the
    per-coordinate proposal *variance*, ``eta * c`` for a cube of half-width ``c``.
    """

    steps: int = 5000
    proposal_scale: float = 0.1

    def __post_init__(self):
        if self.steps < 1:
            raise InputError("steps must be at least 1")
        if not self.proposal_scale > 0:
            raise InputError("proposal_scale must be positive")

    @classmethod
    def for_box(cls, box: Box, eta: float = 0.1, steps: int = 5000) -> McmcConfig:
        return cls(steps=steps, proposal_scale=eta * box.half_width)


# Chains draw their randomness in blocks of this many steps, so a chain's
# stream does not depend on how many chains share a batch.
MCMC_BLOCK = 1000
MCMC_MEMORY = 64 * 2**20  # bytes of pre-drawn randomness per group of chains


def metropolis_sample_batch(
    log_density: Callable[[np.ndarray], np.ndarray],
    box: Box,
    cfg: McmcConfig,
    rngs: Sequence[RandomSource],
    return_acceptance: bool = False,
):
    """Run one independent chain per source, vectorized across chains.

    ``log_density`` maps an ``(n, d)`` array of points to ``n`` log-densities.
    Each chain starts at the box center; proposals leaving the box are
    rejected.  Chain ``j`` only consumes randomness from ``rngs[j]``.

    Returns the final states, shape ``(n, d)``, and optionally the fraction of
    in-box proposals that were accepted per chain.
    """
    d = box.d
    block = min(MCMC_BLOCK, cfg.steps)
    group = max(1, MCMC_MEMORY // (8 * block * (d + 1)))
    states, rates = [], []
    for i in range(0, len(rngs), group):
        x, rate = _metropolis_group(log_density, box, cfg, rngs[i : i + group], block)
        states.append(x)
        rates.append(rate)
    x = np.concatenate(states) if states else np.empty((0, d))
    rate = np.concatenate(rates) if rates else np.empty(0)
    if rate.size:
        logger.debug("metropolis: %d chains, mean in-box acceptance %.3f", rate.size, rate.mean())
    return (x, rate) if return_acceptance else x


def _metropolis_group(log_density, box: Box, cfg: McmcConfig, rngs, block: int):
    n, d = len(rngs), box.d
    sd = np.sqrt(cfg.proposal_scale)
    x = np.broadcast_to(box.center, (n, d)).copy()
    logp = np.asarray(log_density(x), dtype=float)
    inside_count = np.zeros(n)
    accept_count = np.zeros(n)
    for start in range(0, cfg.steps, block):
        length = min(block, cfg.steps - start)
        steps = np.empty((n, length, d))
        log_u = np.empty((n, length))
        for j, r in enumerate(rngs):
            steps[j] = r.gen.standard_normal((length, d))
            log_u[j] = np.log(r.gen.random(length))
        steps *= sd
        for t in range(length):
            prop = x + steps[:, t]
            inside = box.contains(prop)
            logp_prop = np.where(inside, log_density(np.where(inside[:, None], prop, x)), -np.inf)
            accept = inside & (log_u[:, t] < logp_prop - logp)
            x[accept] = prop[accept]
            logp = np.where(accept, logp_prop, logp)
            inside_count += inside
            accept_count += accept
    return x, accept_count / np.maximum(inside_count, 1)


def metropolis_sample(
    log_density: Callable[[np.ndarray], float],
    box: Box,
    cfg: McmcConfig,
    rng: RandomSource,
) -> np.ndarray:
    """Final state of a single Metropolis chain; ``log_density`` takes one point."""

    def batched(X):
        return np.array([log_density(x) for x in X])

    return metropolis_sample_batch(batched, box, cfg, [rng])[0]


__all__ = [
    "McmcConfig",
    "PrivacyBudget",
    "RandomSource",
    "exponential_mechanism_indices",
    "exponential_mechanism_probs",
    "metropolis_sample",
    "metropolis_sample_batch",
    "sample_discrete_exponential",
    "sample_gamma_magnitude",
    "sample_unit_vector",
    "sample_vector_laplace",
]
