"""Combining Gaussian votes into a latent code.

Every vote is a diagonal Gaussian over the latent space. Their product is again
a diagonal Gaussian whose mode is the precision-weighted mean of the vote
means; that mode is the latent the decoders consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from .encoder import VoteDistribution


class VotingError(ValueError):
    pass


@dataclass
class LatentPosterior:
    votes: list[VoteDistribution]

    def __post_init__(self):
        if not self.votes:
            raise VotingError("a posterior needs at least one vote")
        dims = {len(v.mean) for v in self.votes}
        if len(dims) != 1:
            raise VotingError(f"votes disagree on latent dimension: {sorted(dims)}")
        if any(np.any(np.asarray(v.variance) <= 0) for v in self.votes):
            raise VotingError("vote variances must be positive")

    @classmethod
    def from_arrays(cls, means, variances) -> "LatentPosterior":
        return cls([VoteDistribution(m, v) for m, v in zip(np.asarray(means), np.asarray(variances))])

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        mu = np.stack([np.asarray(v.mean, dtype=np.float64) for v in self.votes])
        var = np.stack([np.asarray(v.variance, dtype=np.float64) for v in self.votes])
        return mu, var

    @property
    def latent_dim(self) -> int:
        return len(self.votes[0].mean)


def precision_weighted_mean(
    mu: torch.Tensor, var: torch.Tensor, mask: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """Mode of the product of diagonal Gaussians stacked on axis -2.

    ``mu`` and ``var`` are [..., n_votes, D]; ``mask`` ([..., n_votes]) keeps
    only the selected votes. Differentiable in both inputs.
    """
    prec = 1.0 / var
    if mask is not None:
        prec = prec * mask.unsqueeze(-1).to(prec.dtype)
    return (prec * mu).sum(-2) / prec.sum(-2)


def optimal_latent(posterior: LatentPosterior) -> np.ndarray:
    mu, var = posterior.arrays()
    prec = 1.0 / var
    return (prec * mu).sum(0) / prec.sum(0)


def product_variance(posterior: LatentPosterior) -> np.ndarray:
    _, var = posterior.arrays()
    return 1.0 / (1.0 / var).sum(0)


def log_product_density(posterior: LatentPosterior, z) -> float:
    mu, var = posterior.arrays()
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (posterior.latent_dim,):
        raise VotingError(f"z has shape {z.shape}, expected ({posterior.latent_dim},)")
    terms = -0.5 * np.log(2 * np.pi * var) - (z - mu) ** 2 / (2 * var)
    return float(terms.sum())


def select_training_votes(votes: Sequence, max_votes: int, rng: np.random.Generator) -> list:
    """Random vote dropping: keep k ~ U{1..min(max_votes, n)} votes without replacement."""
    idx = selection_indices(len(votes), max_votes, rng)
    return [votes[i] for i in idx]


def selection_indices(n_votes: int, max_votes: int, rng: np.random.Generator) -> np.ndarray:
    if n_votes < 1:
        raise VotingError("cannot select from an empty vote list")
    if max_votes < 1:
        raise VotingError("max_votes must be >= 1")
    k = int(rng.integers(1, min(max_votes, n_votes) + 1))
    return np.sort(rng.choice(n_votes, size=k, replace=False))


def aggregate_baseline(features, mode: str = "max"):
    """Symmetric pooling of per-vote features along axis -2 (or axis 0 for a list)."""
    if isinstance(features, torch.Tensor):
        if mode == "max":
            return features.max(dim=-2).values
        if mode == "mean":
            return features.mean(dim=-2)
    else:
        f = np.asarray(features, dtype=np.float64)
        if len(f) == 0:
            raise VotingError("cannot pool an empty feature list")
        if mode == "max":
            return f.max(axis=0)
        if mode == "mean":
            return f.mean(axis=0)
    raise VotingError(f"unknown aggregation {mode!r}")


def interpolated_latents(posterior: LatentPosterior, vote_index: int, steps: int) -> list[np.ndarray]:
    """Latents on the segment from the all-vote optimum to one vote's optimum."""
    if not 0 <= vote_index < len(posterior.votes):
        raise VotingError(f"vote index {vote_index} out of range")
    if steps < 2:
        raise VotingError("need at least two interpolation steps")
    z_all = optimal_latent(posterior)
    z_one = np.asarray(posterior.votes[vote_index].mean, dtype=np.float64)
    return [(1 - t) * z_all + t * z_one for t in np.linspace(0.0, 1.0, steps)]


def sample_product(posterior: LatentPosterior, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw latents directly from the product Gaussian."""
    z = optimal_latent(posterior)
    sd = np.sqrt(product_variance(posterior))
    return z + sd * rng.standard_normal((n, len(z)))
