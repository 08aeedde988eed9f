"""Task decoders acting on a latent code: classification, part segmentation, folding."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import torch
import torch.nn as tnn

from .nn import MLP

TASKS = ("classify", "segment", "complete")


@dataclass
class HeadConfig:
    task: str = "classify"
    n_classes: int = 40
    n_parts: int = 50
    n_output_points: int = 2048
    classify_widths: Sequence[int] = (512, 256)
    segment_widths: Sequence[int] = (512, 256)
    fold_widths: Sequence[int] = (512, 512)
    use_category: bool = True
    dropout: float = 0.5
    batch_norm: bool = True

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        for name in ("n_classes", "n_parts", "n_output_points"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("classify_widths", "segment_widths", "fold_widths"):
            setattr(self, name, tuple(int(w) for w in getattr(self, name)))


def folding_grid(n_points: int) -> torch.Tensor:
    """Square grid on [-0.5, 0.5]^2 with the smallest side covering ``n_points``, truncated row-major."""
    side = math.isqrt(n_points - 1) + 1
    ticks = torch.linspace(-0.5, 0.5, side, dtype=torch.float64)
    gu, gv = torch.meshgrid(ticks, ticks, indexing="ij")
    return torch.stack([gu.reshape(-1), gv.reshape(-1)], dim=-1)[:n_points]


class ClassifyHead(tnn.Module):
    def __init__(self, latent_dim: int, cfg: HeadConfig):
        super().__init__()
        self.mlp = MLP(
            (latent_dim, *cfg.classify_widths, cfg.n_classes),
            batch_norm=cfg.batch_norm, dropout_p=cfg.dropout,
        )

    def forward(self, z):
        return self.mlp(z)


class SegmentHead(tnn.Module):
    """Per-point part logits from (latent, point coordinates, category one-hot)."""

    def __init__(self, latent_dim: int, cfg: HeadConfig):
        super().__init__()
        self.n_categories = cfg.n_classes if cfg.use_category else 0
        self.mlp = MLP(
            (latent_dim + 3 + self.n_categories, *cfg.segment_widths, cfg.n_parts),
            batch_norm=cfg.batch_norm, dropout_p=cfg.dropout,
        )

    def forward(self, z, points, category_onehot=None):
        n = points.shape[-2]
        parts = [z.unsqueeze(-2).expand(*z.shape[:-1], n, z.shape[-1]), points]
        if self.n_categories:
            if category_onehot is None:
                raise ValueError("segment head configured with categories needs a one-hot")
            oh = category_onehot.to(z.dtype)
            parts.append(oh.unsqueeze(-2).expand(*oh.shape[:-1], n, oh.shape[-1]))
        return self.mlp(torch.cat(parts, dim=-1))


class FoldHead(tnn.Module):
    """Two-stage folding of a fixed 2D grid into a 3D cloud."""

    def __init__(self, latent_dim: int, cfg: HeadConfig):
        super().__init__()
        self.register_buffer("grid", folding_grid(cfg.n_output_points).float())
        # folding stages deform coordinates; batchnorm over grid nodes hurts them
        self.fold1 = MLP((latent_dim + 2, *cfg.fold_widths, 3), batch_norm=False)
        self.fold2 = MLP((latent_dim + 3, *cfg.fold_widths, 3), batch_norm=False)

    def forward(self, z):
        m = self.grid.shape[0]
        zz = z.unsqueeze(-2).expand(*z.shape[:-1], m, z.shape[-1])
        grid = self.grid.to(z.dtype).expand(*z.shape[:-1], m, 2)
        coarse = self.fold1(torch.cat([zz, grid], dim=-1))
        return self.fold2(torch.cat([zz, coarse], dim=-1))


def build_head(latent_dim: int, cfg: HeadConfig) -> tnn.Module:
    return {"classify": ClassifyHead, "segment": SegmentHead, "complete": FoldHead}[cfg.task](
        latent_dim, cfg
    )
