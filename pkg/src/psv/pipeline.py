"""Training with random vote dropping, evaluation protocols, vote-count sweeps, checkpoints."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn as tnn

from . import geometry, nn, voting
from .data import Dataset, Sample
from .encoder import EncoderConfig, VoteEncoder
from .heads import TASKS, HeadConfig, build_head

log = logging.getLogger(__name__)

AGGREGATIONS = ("voting", "max", "mean")


class TaskMismatch(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    task: str = "classify"
    n_sets: int = 64
    radius: float = 0.2
    latent_dim: int = 1024
    max_votes_train: int = 10
    votes_test: int = 0  # 0 means every partition set votes
    max_points_per_set: int = 64
    batch_size: int = 16
    epochs: int = 200
    lr: float = 1e-3
    lr_decay_every: int = 50
    lr_decay: float = 0.5
    seed: int = 0
    point_widths: tuple = (64, 128, 256)
    vote_widths: tuple = (512,)
    classify_widths: tuple = (512, 256)
    segment_widths: tuple = (512, 256)
    fold_widths: tuple = (512, 512)
    batch_norm: bool = True
    dropout: float = 0.5
    n_output_points: int = 2048
    use_category: bool = True
    aggregation: str = "voting"
    repartition: bool = True
    n_classes: int = 0
    n_parts: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        for name in ("n_sets", "latent_dim", "max_votes_train", "max_points_per_set",
                     "batch_size", "epochs", "lr_decay_every", "n_output_points"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.votes_test < 0:
            raise ValueError("votes_test must be >= 0")
        for name in ("point_widths", "vote_widths", "classify_widths", "segment_widths", "fold_widths"):
            setattr(self, name, tuple(int(w) for w in getattr(self, name)))

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            latent_dim=self.latent_dim, point_widths=self.point_widths, head_widths=self.vote_widths,
            radius=self.radius, n_sets=self.n_sets, max_points_per_set=self.max_points_per_set,
            batch_norm=self.batch_norm,
        )

    def head_config(self) -> HeadConfig:
        return HeadConfig(
            task=self.task, n_classes=max(self.n_classes, 1), n_parts=max(self.n_parts, 1),
            n_output_points=self.n_output_points, classify_widths=self.classify_widths,
            segment_widths=self.segment_widths, fold_widths=self.fold_widths,
            use_category=self.use_category, dropout=self.dropout, batch_norm=self.batch_norm,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class PointSetVotingModel(tnn.Module):
    def __init__(self, cfg: TrainConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = VoteEncoder(cfg.encoder_config())
        self.head = build_head(cfg.latent_dim, cfg.head_config())

    @property
    def dtype(self):
        return next(self.parameters()).dtype

    def latent(self, mean, var, mask=None, aggregation: Optional[str] = None):
        """Combine [B, S, D] votes into [B, D] latents."""
        aggregation = aggregation or self.cfg.aggregation
        if aggregation == "voting":
            return voting.precision_weighted_mean(mean, var, mask)
        if mask is None:
            return voting.aggregate_baseline(mean, aggregation)
        m = mask.unsqueeze(-1).to(mean.dtype)
        if aggregation == "mean":
            return (mean * m).sum(-2) / m.sum(-2)
        return mean.masked_fill(m == 0, float("-inf")).max(dim=-2).values

    def decode(self, z, points=None, category=None):
        task = self.cfg.task
        if task == "classify":
            return self.head(z)
        if task == "segment":
            onehot = None
            if self.head.n_categories:
                onehot = tnn.functional.one_hot(category, self.head.n_categories)
            return self.head(z, points, onehot)
        return self.head(z)

    def forward(self, rel, cen, mask=None, points=None, category=None, aggregation=None):
        mean, var = self.encoder(rel, cen)
        z = self.latent(mean, var, mask, aggregation)
        return self.decode(z, points, category)


# ------------------------------------------------------------------ batching


def partition_arrays(cloud: geometry.PointCloud, n_sets: int, cfg: TrainConfig, seed: int):
    """Packed [S, P, 3] centroid-relative points and [S, 3] centroids for one cloud."""
    n_sets = min(n_sets, len(cloud))
    order, centers, _ = geometry.ball_query(cloud, n_sets, cfg.radius, seed, cfg.max_points_per_set)
    cen = cloud.points[centers]
    return cloud.points[order] - cen[:, None, :], cen


def torch_chamfer(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-example squared Chamfer distance between [B, N, 3] and [B, M, 3]."""
    d = ((a.unsqueeze(-2) - b.unsqueeze(-3)) ** 2).sum(-1)
    return d.min(-1).values.mean(-1) + d.min(-2).values.mean(-1)


def task_loss(model: PointSetVotingModel, out, batch: list[Sample]) -> torch.Tensor:
    task = model.cfg.task
    dt = model.dtype
    if task == "classify":
        return nn.softmax_cross_entropy(out, torch.tensor([s.label for s in batch]))
    if task == "segment":
        targets = torch.as_tensor(np.stack([s.cloud.labels for s in batch]))
        return nn.softmax_cross_entropy(out.reshape(-1, out.shape[-1]), targets.reshape(-1))
    target = torch.as_tensor(np.stack([_target(s).points for s in batch]), dtype=dt)
    return torch_chamfer(out, target).mean()


def _target(s: Sample) -> geometry.PointCloud:
    return s.complete if s.complete is not None else s.cloud


def _uniform_size(batch: list[Sample], task: str) -> bool:
    # completion partials may differ in size; training only sees their targets
    if task == "segment" and len({len(s.cloud) for s in batch}) != 1:
        return False
    return len({len(_target(s)) for s in batch}) == 1


def training_step_loss(
    model: PointSetVotingModel, batch: list[Sample], rng: np.random.Generator, part_seeds: Sequence[int]
) -> torch.Tensor:
    """Loss for one batch: partition, vote, drop votes, combine to a single latent, decode."""
    cfg = model.cfg
    dt = model.dtype
    packed = [partition_arrays(_target(s), cfg.n_sets, cfg, ps) for s, ps in zip(batch, part_seeds)]
    if len({p[0].shape[0] for p in packed}) != 1 or not _uniform_size(batch, cfg.task):
        raise ValueError("training batches need clouds of equal size")
    rel = torch.as_tensor(np.stack([p[0] for p in packed]), dtype=dt)
    cen = torch.as_tensor(np.stack([p[1] for p in packed]), dtype=dt)
    n_votes = rel.shape[1]
    mask = torch.zeros(len(batch), n_votes, dtype=dt)
    for i in range(len(batch)):
        mask[i, voting.selection_indices(n_votes, cfg.max_votes_train, rng)] = 1
    mean, var = model.encoder(rel, cen)
    z = model.latent(mean, var, mask)  # one latent per example
    points = category = None
    if cfg.task == "segment":
        points = torch.as_tensor(np.stack([s.cloud.points for s in batch]), dtype=dt)
        category = torch.tensor([s.label for s in batch])
    out = model.decode(z, points, category)
    return task_loss(model, out, batch)


def build_model(cfg: TrainConfig, dtype=torch.float32) -> PointSetVotingModel:
    torch.manual_seed(cfg.seed)
    return PointSetVotingModel(cfg).to(dtype)


def _task_ok(task: str, samples: list[Sample]):
    if task == "complete" and any(s.complete is None and s.cloud is None for s in samples):
        raise TaskMismatch("completion training needs complete clouds")
    if task == "segment" and any(s.cloud.labels is None for s in samples):
        raise TaskMismatch("segmentation needs per-point part labels")


def train(
    cfg: TrainConfig,
    dataset: Dataset,
    out_dir=None,
    progress: Optional[Callable[[int, float], None]] = None,
) -> "Checkpoint":
    """Fit encoder and head on complete clouds with random vote dropping."""
    samples = dataset.samples
    _task_ok(cfg.task, samples)
    if not cfg.n_classes:
        cfg.n_classes = len(dataset.class_names)
    if cfg.task == "segment" and not cfg.n_parts:
        cfg.n_parts = dataset.n_parts or int(max(s.cloud.labels.max() for s in samples)) + 1
    model = build_model(cfg)
    opt = nn.Optimizer(model.parameters(), lr=cfg.lr, decay_every=cfg.lr_decay_every, decay_factor=cfg.lr_decay)
    rng = np.random.default_rng(cfg.seed)
    curve = []
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(samples))
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2 and cfg.batch_norm:
                continue
            batch = [samples[i] for i in idx]
            seeds = [
                int(cfg.seed * 7919 + epoch * 104729 + i) if cfg.repartition else int(cfg.seed + i)
                for i in idx
            ]
            loss = training_step_loss(model, batch, rng, seeds)
            if not torch.isfinite(loss):
                _dump_and_raise(model, cfg, epoch, start, loss, out_dir)
            opt.zero_grad()
            nn.backward(loss)
            opt.step()
            total += loss.item() * len(batch)
            count += len(batch)
        opt.end_epoch()
        curve.append(total / max(count, 1))
        log.info("epoch %d loss %.6f lr %.2e", epoch + 1, curve[-1], opt.lr)
        if progress:
            progress(epoch + 1, curve[-1])
    model.eval()
    ckpt = Checkpoint(model, cfg, epoch=cfg.epochs, loss_curve=curve,
                      class_names=list(dataset.class_names), optimizer=opt)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt.save(out / "model.ckpt")
        write_loss_curve(out / "loss.csv", curve)
    return ckpt


def _dump_and_raise(model, cfg, epoch, start, loss, out_dir):
    msg = f"non-finite loss {loss.item()} at epoch {epoch + 1}, batch offset {start}"
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        dump = Path(out_dir) / "nan_dump.ckpt"
        Checkpoint(model, cfg, epoch=epoch).save(dump)
        msg += f"; state dumped to {dump}"
    raise NumericalError(msg)


# ------------------------------------------------------------------ checkpoint


@dataclass
class Checkpoint:
    model: PointSetVotingModel
    config: TrainConfig
    epoch: int = 0
    metrics: dict = field(default_factory=dict)
    loss_curve: list = field(default_factory=list)
    class_names: list = field(default_factory=list)
    optimizer: Optional[nn.Optimizer] = None

    def save(self, path) -> None:
        tensors = dict(self.model.state_dict())
        if self.optimizer is not None:
            names = {p: n for n, p in self.model.named_parameters()}
            tensors.update(self.optimizer.state_tensors(names))
        meta = {
            "config": asdict(self.config),
            "epoch": self.epoch,
            "metrics": self.metrics,
            "loss_curve": self.loss_curve,
            "class_names": self.class_names,
        }
        with open(path, "wb") as fh:
            nn.write_tensors(fh, tensors, json.dumps(meta).encode())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            tensors, raw = nn.read_tensors(fh)
        meta = json.loads(raw.decode())
        cfg = TrainConfig.from_dict(meta["config"])
        model = PointSetVotingModel(cfg)
        state = {k: v for k, v in tensors.items() if not k.startswith("optim/")}
        model.load_state_dict(state)
        model.eval()
        opt = nn.Optimizer(model.parameters(), lr=cfg.lr, decay_every=cfg.lr_decay_every, decay_factor=cfg.lr_decay)
        opt.load_state_tensors(tensors, {p: n for n, p in model.named_parameters()})
        return cls(model, cfg, meta["epoch"], meta["metrics"], meta["loss_curve"], meta["class_names"], opt)


def _as_model(model_or_ckpt) -> PointSetVotingModel:
    return model_or_ckpt.model if isinstance(model_or_ckpt, Checkpoint) else model_or_ckpt


def _require_task(model: PointSetVotingModel, task: str):
    if model.cfg.task != task:
        raise TaskMismatch(f"checkpoint was trained for {model.cfg.task!r}, not {task!r}")


# ------------------------------------------------------------------ inference


def cloud_votes(model: PointSetVotingModel, cloud: geometry.PointCloud, n_votes: int = 0, seed: int = 0):
    """Eval-mode votes for one cloud from its first ``n_votes`` FPS centroids (all partition sets if 0)."""
    rel, cen = partition_arrays(cloud, n_votes or model.cfg.n_sets, model.cfg, seed)
    dt = model.dtype
    with torch.no_grad():
        return model.encoder(torch.as_tensor(rel, dtype=dt), torch.as_tensor(cen, dtype=dt))


def infer_latent(model, cloud, n_votes: int = 0, seed: int = 0, aggregation: Optional[str] = None) -> torch.Tensor:
    model = _as_model(model)
    mean, var = cloud_votes(model, cloud, n_votes, seed)
    with torch.no_grad():
        return model.latent(mean.unsqueeze(0), var.unsqueeze(0), None, aggregation)


def posterior_of(model, cloud, n_votes: int = 0, seed: int = 0) -> voting.LatentPosterior:
    mean, var = cloud_votes(_as_model(model), cloud, n_votes, seed)
    return voting.LatentPosterior.from_arrays(mean.double().numpy(), var.double().numpy())


def decode_latent(model, z: torch.Tensor, cloud=None, category: int = 0):
    model = _as_model(model)
    dt = model.dtype
    z = torch.as_tensor(z, dtype=dt).reshape(1, -1)
    with torch.no_grad():
        points = None
        if model.cfg.task == "segment":
            points = torch.as_tensor(cloud.points, dtype=dt).unsqueeze(0)
        out = model.decode(z, points, torch.tensor([category]))
    return out[0]


def complete_cloud(model, cloud, seed: int = 0, n_votes: int = 0) -> np.ndarray:
    model = _as_model(model)
    _require_task(model, "complete")
    model.eval()
    return decode_latent(model, infer_latent(model, cloud, n_votes, seed)).double().numpy()


def diverse_completions(model, cloud, vote_index: int, steps: int, seed: int = 0) -> list[tuple[float, np.ndarray]]:
    model = _as_model(model)
    _require_task(model, "complete")
    model.eval()
    post = posterior_of(model, cloud, seed=seed)
    zs = voting.interpolated_latents(post, vote_index, steps)
    # t = 0 reuses the in-model latent so it matches the deterministic completion bit for bit
    zs[0] = infer_latent(model, cloud, 0, seed)[0]
    ts = np.linspace(0.0, 1.0, steps)
    return [(float(t), decode_latent(model, z).double().numpy()) for t, z in zip(ts, zs)]


# ------------------------------------------------------------------ metrics


@dataclass
class Metrics:
    task: str
    accuracy: Optional[float] = None
    per_class: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    miou: Optional[float] = None
    chamfer: Optional[float] = None
    baseline_chamfer: Optional[float] = None
    per_class_baseline: dict = field(default_factory=dict)
    loss_curve: list = field(default_factory=list)

    @property
    def value(self) -> float:
        return {"classify": self.accuracy, "segment": self.miou, "complete": self.chamfer}[self.task]

    def metric_name(self) -> str:
        return {"classify": "accuracy", "segment": "miou", "complete": "chamfer_x1e4"}[self.task]

    def rows(self) -> list[list]:
        rows = []
        for name, v in self.per_class.items():
            row = [name, self.counts.get(name, 0), f"{v:.10g}"]
            if self.task == "complete":
                row.append(f"{self.per_class_baseline.get(name, float('nan')):.10g}")
            rows.append(row)
        overall = ["overall", sum(self.counts.values()), f"{self.value:.10g}"]
        if self.task == "complete":
            overall.append(f"{self.baseline_chamfer:.10g}")
        rows.append(overall)
        return rows

    def header(self) -> list[str]:
        h = ["class", "count", self.metric_name()]
        if self.task == "complete":
            h.append("baseline_chamfer_x1e4")
        return h

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        w.writerows(self.rows())
        return buf.getvalue()

    def report(self) -> str:
        lines = [f"task: {self.task}", f"{self.metric_name()}: {self.value:.6f}"]
        if self.baseline_chamfer is not None:
            lines.append(f"baseline_chamfer_x1e4: {self.baseline_chamfer:.6f}")
        for name, v in self.per_class.items():
            lines.append(f"  {name}: {v:.6f} (n={self.counts.get(name, 0)})")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "loss_curve"}


def _names(class_names, k):
    return class_names[k] if k < len(class_names) else str(k)


def classification_metrics(pred: Sequence[int], labels: Sequence[int], class_names: Sequence[str]) -> Metrics:
    pred, labels = np.asarray(pred), np.asarray(labels)
    m = Metrics("classify", accuracy=float(np.mean(pred == labels)) if len(labels) else 0.0)
    for k in sorted(set(labels.tolist())):
        sel = labels == k
        m.per_class[_names(class_names, k)] = float(np.mean(pred[sel] == k))
        m.counts[_names(class_names, k)] = int(sel.sum())
    return m


def shape_iou(pred: np.ndarray, truth: np.ndarray, parts: Sequence[int]) -> float:
    """Mean part IoU for one shape; a part absent from both counts as 1."""
    ious = []
    for p in parts:
        inter = np.sum((pred == p) & (truth == p))
        union = np.sum((pred == p) | (truth == p))
        ious.append(1.0 if union == 0 else inter / union)
    return float(np.mean(ious))


def segmentation_metrics(
    preds: Sequence[np.ndarray],
    truths: Sequence[np.ndarray],
    categories: Sequence[int],
    class_names: Sequence[str],
    category_parts: Optional[dict] = None,
) -> Metrics:
    """Per-class IoU averages per-shape IoUs; mIoU averages the classes.

    ``category_parts`` maps category -> part ids scored for that category;
    by default the union of ground-truth labels seen for the category.
    """
    categories = np.asarray(categories)
    if category_parts is None:
        category_parts = {}
        for t, c in zip(truths, categories):
            category_parts.setdefault(int(c), set()).update(np.unique(t).tolist())
    per_shape = np.array(
        [shape_iou(p, t, sorted(category_parts[int(c)])) for p, t, c in zip(preds, truths, categories)]
    )
    m = Metrics("segment")
    correct = sum(int(np.sum(p == t)) for p, t in zip(preds, truths))
    total = sum(len(t) for t in truths)
    m.accuracy = correct / total if total else 0.0
    for k in sorted(set(categories.tolist())):
        sel = categories == k
        m.per_class[_names(class_names, k)] = float(per_shape[sel].mean())
        m.counts[_names(class_names, k)] = int(sel.sum())
    m.miou = float(np.mean(list(m.per_class.values()))) if m.per_class else 0.0
    return m


def completion_metrics(outputs, samples: Sequence[Sample], class_names) -> Metrics:
    m = Metrics("complete")
    cd = np.array([geometry.chamfer_distance(o, s.complete) for o, s in zip(outputs, samples)]) * 1e4
    base = np.array([geometry.chamfer_distance(s.cloud, s.complete) for s in samples]) * 1e4
    labels = np.array([s.label for s in samples])
    for k in sorted(set(labels.tolist())):
        sel = labels == k
        name = _names(class_names, k)
        m.per_class[name] = float(cd[sel].mean())
        m.per_class_baseline[name] = float(base[sel].mean())
        m.counts[name] = int(sel.sum())
    m.chamfer = float(cd.mean())
    m.baseline_chamfer = float(base.mean())
    return m


# ------------------------------------------------------------------ evaluation


def _eval_cloud(s: Sample, i: int, partial: bool, seed: int) -> geometry.PointCloud:
    # the cut happens before partitioning, so dropped points never reach the encoder
    if partial:
        cut, _ = geometry.simulate_plane_cut(s.cloud, seed=seed * 100003 + i)
        return cut
    return s.cloud


def evaluate_classification(
    model, dataset: Dataset, votes_test: Optional[int] = None, partial: bool = False,
    seed: int = 0, aggregation: Optional[str] = None,
) -> Metrics:
    model = _as_model(model)
    _require_task(model, "classify")
    model.eval()
    n_votes = model.cfg.votes_test if votes_test is None else votes_test
    preds = []
    for i, s in enumerate(dataset.samples):
        cloud = _eval_cloud(s, i, partial, seed)
        z = infer_latent(model, cloud, n_votes, seed + i, aggregation)
        preds.append(int(torch.argmax(decode_latent(model, z))))
    return classification_metrics(preds, [s.label for s in dataset.samples], dataset.class_names)


def evaluate_segmentation(
    model, dataset: Dataset, votes_test: Optional[int] = None, partial: bool = False,
    seed: int = 0, aggregation: Optional[str] = None,
) -> Metrics:
    model = _as_model(model)
    _require_task(model, "segment")
    model.eval()
    n_votes = model.cfg.votes_test if votes_test is None else votes_test
    preds, truths = [], []
    for i, s in enumerate(dataset.samples):
        cloud = _eval_cloud(s, i, partial, seed)
        z = infer_latent(model, cloud, n_votes, seed + i, aggregation)
        logits = decode_latent(model, z, cloud, s.label)
        preds.append(torch.argmax(logits, dim=-1).numpy())
        truths.append(cloud.labels)
    return segmentation_metrics(preds, truths, [s.label for s in dataset.samples], dataset.class_names)


def evaluate_completion(
    model, dataset: Dataset, votes_test: Optional[int] = None, seed: int = 0,
    aggregation: Optional[str] = None,
) -> Metrics:
    model = _as_model(model)
    _require_task(model, "complete")
    model.eval()
    if any(s.complete is None for s in dataset.samples):
        raise ValueError("completion evaluation needs partial/complete pairs")
    n_votes = model.cfg.votes_test if votes_test is None else votes_test
    outputs = []
    for i, s in enumerate(dataset.samples):
        z = infer_latent(model, s.cloud, n_votes, seed + i, aggregation)
        outputs.append(decode_latent(model, z).double().numpy())
    return completion_metrics(outputs, dataset.samples, dataset.class_names)


def evaluate(model, dataset: Dataset, **kw) -> Metrics:
    task = _as_model(model).cfg.task
    if task == "classify":
        return evaluate_classification(model, dataset, **kw)
    if task == "segment":
        return evaluate_segmentation(model, dataset, **kw)
    kw.pop("partial", None)
    return evaluate_completion(model, dataset, **kw)


def sweep_votes(
    model, dataset: Dataset, vote_counts: Sequence[int], aggregations: Sequence[str] = AGGREGATIONS,
    partial: bool = True, seed: int = 0,
) -> list[dict]:
    """One metric per (aggregation, vote count) cell."""
    rows = []
    for agg in aggregations:
        if agg not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {agg!r}")
        for k in vote_counts:
            m = evaluate(model, dataset, votes_test=int(k), partial=partial, seed=seed, aggregation=agg)
            rows.append({"aggregation": agg, "votes": int(k), m.metric_name(): m.value})
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def write_loss_curve(path, curve: Sequence[float]) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss\n")
        for i, v in enumerate(curve, 1):
            fh.write(f"{i},{v:.10g}\n")
