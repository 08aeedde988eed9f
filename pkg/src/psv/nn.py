"""Differentiable building blocks on top of torch, plus the binary checkpoint container."""

from __future__ import annotations

import math
import struct
from typing import BinaryIO, Iterable, Sequence

import numpy as np
import torch
import torch.nn as tnn
import torch.nn.functional as F


class ShapeError(ValueError):
    pass


class GradientError(RuntimeError):
    pass


# ------------------------------------------------------------------ functional


def dense(x: torch.Tensor, weights: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Affine map ``x @ weights + bias`` with weights stored as [in, out]."""
    if x.shape[-1] != weights.shape[0] or weights.shape[1] != bias.shape[0]:
        raise ShapeError(
            f"dense: input {tuple(x.shape)}, weights {tuple(weights.shape)}, bias {tuple(bias.shape)}"
        )
    return x @ weights + bias


def relu(x: torch.Tensor) -> torch.Tensor:
    return torch.relu(x)


def batchnorm(
    x: torch.Tensor,
    scale: torch.Tensor,
    shift: torch.Tensor,
    running_mean: torch.Tensor,
    running_var: torch.Tensor,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> torch.Tensor:
    if train and x.shape[0] < 2:
        raise ShapeError("batchnorm in train mode needs a batch of at least 2")
    return F.batch_norm(x, running_mean, running_var, scale, shift, train, momentum, eps)


def dropout(x: torch.Tensor, p: float, train: bool) -> torch.Tensor:
    return F.dropout(x, p, train)


def max_pool_set(x: torch.Tensor) -> torch.Tensor:
    """Max over the set axis of a [..., N, F] tensor.

    Gradients go to the first maximal element along N.
    """
    if x.shape[-2] < 1:
        raise ShapeError("max_pool_set needs at least one element")
    return x.max(dim=-2).values


def softmax_cross_entropy(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    targets = torch.as_tensor(targets, dtype=torch.long)
    k = logits.shape[-1]
    if targets.numel() and (targets.min() < 0 or targets.max() >= k):
        raise ShapeError(f"target out of range [0, {k})")
    shifted = logits - logits.max(dim=-1, keepdim=True).values.detach()
    logp = shifted - torch.logsumexp(shifted, dim=-1, keepdim=True)
    return -logp.gather(-1, targets.unsqueeze(-1)).mean()


def backward(loss: torch.Tensor) -> None:
    """Reverse-mode pass from a scalar loss; a graph can be consumed only once."""
    if loss.numel() != 1:
        raise GradientError("backward needs a scalar loss")
    if getattr(loss, "_psv_consumed", False):
        raise GradientError("backward called twice on the same forward pass")
    loss.backward()
    loss._psv_consumed = True


# ------------------------------------------------------------------ layers


class Dense(tnn.Module):
    def __init__(self, n_in: int, n_out: int):
        super().__init__()
        bound = math.sqrt(6.0 / (n_in + n_out))
        self.weight = tnn.Parameter(torch.empty(n_in, n_out).uniform_(-bound, bound))
        self.bias = tnn.Parameter(torch.zeros(n_out))

    def forward(self, x):
        return dense(x, self.weight, self.bias)


class BatchNorm(tnn.Module):
    """Per-feature batch normalization over all leading axes."""

    def __init__(self, n: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.scale = tnn.Parameter(torch.ones(n))
        self.shift = tnn.Parameter(torch.zeros(n))
        self.register_buffer("running_mean", torch.zeros(n))
        self.register_buffer("running_var", torch.ones(n))
        self.momentum, self.eps = momentum, eps

    def forward(self, x):
        shape = x.shape
        y = batchnorm(
            x.reshape(-1, shape[-1]), self.scale, self.shift,
            self.running_mean, self.running_var, self.training, self.momentum, self.eps,
        )
        return y.reshape(shape)


class MLP(tnn.Module):
    """Stack of dense layers acting on the last axis.

    Hidden layers get relu, optional batchnorm and optional dropout; the final
    layer is a plain affine map.
    """

    def __init__(
        self,
        widths: Sequence[int],
        batch_norm: bool = True,
        dropout_p: float = 0.0,
        final_activation: bool = False,
    ):
        super().__init__()
        layers = []
        n = len(widths) - 1
        for i in range(n):
            layers.append(Dense(widths[i], widths[i + 1]))
            if i < n - 1 or final_activation:
                if batch_norm:
                    layers.append(BatchNorm(widths[i + 1]))
                layers.append(tnn.ReLU())
                if dropout_p > 0 and i < n - 1:
                    layers.append(tnn.Dropout(dropout_p))
        self.layers = tnn.Sequential(*layers)

    def forward(self, x):
        return self.layers(x)


# ------------------------------------------------------------------ optimizer


class Optimizer:
    """Adam with a step learning-rate decay applied per epoch."""

    def __init__(
        self,
        params: Iterable[tnn.Parameter],
        lr: float = 1e-3,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
        decay_every: int = 50,
        decay_factor: float = 0.5,
    ):
        self.params = list(params)
        self.opt = torch.optim.Adam(self.params, lr=lr, betas=betas, eps=eps)
        self.sched = torch.optim.lr_scheduler.StepLR(self.opt, decay_every, decay_factor)

    def zero_grad(self):
        self.opt.zero_grad(set_to_none=True)

    def step(self):
        optimizer_step(self)

    def end_epoch(self):
        self.sched.step()

    @property
    def lr(self) -> float:
        return self.opt.param_groups[0]["lr"]

    def state_tensors(self, names: dict) -> dict[str, torch.Tensor]:
        """Flatten moments and step counts into named tensors for the checkpoint."""
        out = {}
        for p in self.params:
            st = self.opt.state.get(p)
            if not st:
                continue
            name = names[p]
            out[f"optim/{name}/m"] = st["exp_avg"]
            out[f"optim/{name}/v"] = st["exp_avg_sq"]
            out[f"optim/{name}/step"] = torch.as_tensor(st["step"], dtype=torch.float32).reshape(1)
        out["optim/sched/epoch"] = torch.tensor([float(self.sched.last_epoch)])
        return out

    def load_state_tensors(self, tensors: dict, names: dict) -> None:
        for p in self.params:
            name = names[p]
            if f"optim/{name}/m" not in tensors:
                continue
            self.opt.state[p] = {
                "step": torch.tensor(float(tensors[f"optim/{name}/step"][0])),
                "exp_avg": tensors[f"optim/{name}/m"].to(p.dtype).clone(),
                "exp_avg_sq": tensors[f"optim/{name}/v"].to(p.dtype).clone(),
            }
        if "optim/sched/epoch" in tensors:
            epoch = int(tensors["optim/sched/epoch"][0])
            self.sched.last_epoch = epoch
            for group, base in zip(self.opt.param_groups, self.sched.base_lrs):
                group["lr"] = base * self.sched.gamma ** (epoch // self.sched.step_size)


def optimizer_step(optimizer: Optimizer) -> None:
    missing = [i for i, p in enumerate(optimizer.params) if p.requires_grad and p.grad is None]
    if len(missing) == len(optimizer.params):
        raise GradientError("optimizer step without gradients; call backward first")
    optimizer.opt.step()


# ------------------------------------------------------------------ checkpoint container

MAGIC = b"PSVCKPT\x00"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def write_tensors(fh: BinaryIO, tensors: dict[str, torch.Tensor], metadata: bytes = b"") -> None:
    """Write named tensors as little-endian float32, followed by a metadata blob."""
    fh.write(MAGIC)
    fh.write(struct.pack("<II", FORMAT_VERSION, len(tensors)))
    for name, t in tensors.items():
        raw = name.encode()
        arr = t.detach().cpu().numpy().astype("<f4")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes(order="C"))
    fh.write(struct.pack("<I", len(metadata)))
    fh.write(metadata)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint")
    return buf


def read_tensors(fh: BinaryIO) -> tuple[dict[str, torch.Tensor], bytes]:
    if _read_exact(fh, len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, count = struct.unpack("<II", _read_exact(fh, 8))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(count):
        (n,) = struct.unpack("<I", _read_exact(fh, 4))
        name = _read_exact(fh, n).decode()
        (rank,) = struct.unpack("<I", _read_exact(fh, 4))
        dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank)) if rank else ()
        size = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(_read_exact(fh, 4 * size), dtype="<f4").reshape(dims)
        tensors[name] = torch.from_numpy(arr.astype(np.float32))
    (m,) = struct.unpack("<I", _read_exact(fh, 4))
    return tensors, _read_exact(fh, m)
