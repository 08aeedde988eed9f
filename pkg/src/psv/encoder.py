"""Shared-weight local set encoder emitting one Gaussian vote per point set."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn as tnn
import torch.nn.functional as F

from . import geometry
from .nn import MLP, max_pool_set

VARIANCE_FLOOR = 1e-6


@dataclass
class VoteDistribution:
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.variance = np.asarray(self.variance, dtype=np.float64).reshape(-1)
        if self.mean.shape != self.variance.shape:
            raise ValueError("mean and variance must have the same length")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.variance))):
            raise ValueError("vote contains non-finite values")
        if np.any(self.variance <= 0):
            raise ValueError("vote variances must be strictly positive")


@dataclass
class EncoderConfig:
    latent_dim: int = 1024
    point_widths: Sequence[int] = (64, 128, 256)
    head_widths: Sequence[int] = (512,)
    radius: float = 0.2
    n_sets: int = 64
    max_points_per_set: int = 64
    batch_norm: bool = True

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if not self.point_widths or not self.head_widths:
            raise ValueError("encoder widths must be non-empty")
        self.point_widths = tuple(int(w) for w in self.point_widths)
        self.head_widths = tuple(int(w) for w in self.head_widths)


def pack_sets(sets: list[geometry.LocalPointSet], max_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack sets into [S, max_points, 3] relative coords and [S, 3] centroids.

    Short sets are padded by repeating their nearest member, which leaves the
    max-pooled feature unchanged.
    """
    rel = np.empty((len(sets), max_points, 3))
    for i, s in enumerate(sets):
        pts = s.relative_points[:max_points]
        rel[i, : len(pts)] = pts
        rel[i, len(pts) :] = pts[0]
    cen = np.stack([s.centroid for s in sets])
    return rel, cen


class VoteEncoder(tnn.Module):
    """Maps packed local sets to per-set Gaussian votes.

    Input ``rel`` is [..., S, P, 3] centroid-relative points and ``centroids``
    is [..., S, 3]; outputs are mean and variance, each [..., S, D].
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.point_mlp = MLP(
            (3, *cfg.point_widths), batch_norm=cfg.batch_norm, final_activation=True
        )
        feat = cfg.point_widths[-1]
        self.vote_mlp = MLP(
            (feat + 3, *cfg.head_widths, 2 * cfg.latent_dim), batch_norm=cfg.batch_norm
        )

    def features(self, rel: torch.Tensor) -> torch.Tensor:
        return max_pool_set(self.point_mlp(rel))

    def forward(self, rel: torch.Tensor, centroids: torch.Tensor):
        h = torch.cat([self.features(rel), centroids], dim=-1)
        out = self.vote_mlp(h)
        d = self.cfg.latent_dim
        mean, raw = out[..., :d], out[..., d:]
        return mean, F.softplus(raw) + VARIANCE_FLOOR

    def _param(self):
        return next(self.parameters())

    def encode_set(self, s: geometry.LocalPointSet) -> np.ndarray:
        p = self._param()
        rel = torch.as_tensor(s.relative_points, dtype=p.dtype)
        with torch.no_grad():
            return self.features(rel).cpu().numpy().astype(np.float64)

    def vote_from_set(self, s: geometry.LocalPointSet) -> VoteDistribution:
        p = self._param()
        rel = torch.as_tensor(s.relative_points, dtype=p.dtype).unsqueeze(0)
        cen = torch.as_tensor(s.centroid, dtype=p.dtype).unsqueeze(0)
        with torch.no_grad():
            mean, var = self(rel, cen)
        return VoteDistribution(mean[0].numpy(), var[0].numpy())

    def encode_cloud(self, cloud: geometry.PointCloud, seed: int = 0, n_sets: int | None = None):
        n_sets = min(n_sets or self.cfg.n_sets, len(cloud))
        sets = geometry.build_partition(
            cloud, n_sets, self.cfg.radius, seed, self.cfg.max_points_per_set
        )
        rel, cen = pack_sets(sets, self.cfg.max_points_per_set)
        p = self._param()
        with torch.no_grad():
            mean, var = self(torch.as_tensor(rel, dtype=p.dtype), torch.as_tensor(cen, dtype=p.dtype))
        return [VoteDistribution(m, v) for m, v in zip(mean.numpy(), var.numpy())]


def encode_cloud(encoder: VoteEncoder, cloud: geometry.PointCloud, seed: int = 0) -> list[VoteDistribution]:
    return encoder.encode_cloud(cloud, seed)
