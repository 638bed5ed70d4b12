"""Deterministic single-process training.

All randomness flows from the config seed.  Sample order for any global
step is a pure function of (seed, step), so resuming from a checkpoint
replays the exact same stream and continues the loss curve bitwise.
"""

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .model import ModelConfig, PearModel
from .optim import AdamW
from .state import NormStats


@dataclass
class TrainConfig:
    steps: int
    lr: float = 5e-4
    weight_decay: float = 3e-6
    surface_loss_weight: float = 0.25
    batch_size: int = 1
    grad_accum: int = 1
    seed: int = 0
    precision: str = "f32"
    checkpoint_every: int = 500
    cosine_schedule: bool = False

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1 or self.grad_accum < 1:
            raise ValueError("steps, batch_size and grad_accum must be >= 1")
        if self.lr <= 0.0:
            raise ValueError("learning rate must be positive")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"precision must be f32 or f64, got {self.precision!r}")


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)
    step: int = 0
    checkpoint_path: str | None = None
    norm: NormStats | None = None
    aborted: bool = False


def forecast_loss(pred_surface, pred_upper, tgt_surface, tgt_upper, surface_weight=0.25):
    """Weighted L1: surface errors count a quarter of upper errors."""
    if pred_surface.shape != tgt_surface.shape or pred_upper.shape != tgt_upper.shape:
        raise ValueError("prediction and target shapes differ")
    surf = ad.scale(ad.l1(pred_surface, tgt_surface), surface_weight)
    return ad.add(surf, ad.l1(pred_upper, tgt_upper))


def _sample_index(seed, n_samples, position):
    """Dataset index for the position-th draw of the run's shuffle stream."""
    epoch, slot = divmod(position, n_samples)
    perm = np.random.default_rng([seed, epoch]).permutation(n_samples)
    return int(perm[slot])


def _config_arrays(config: ModelConfig) -> dict:
    values = {
        "cfg/n_side": config.n_side,
        "cfg/embed_dim": config.embed_dim,
        "cfg/bottleneck_dim": config.bottleneck_dim,
        "cfg/depths": config.depths,
        "cfg/heads": config.heads,
        "cfg/w_hp": config.w_hp,
        "cfg/w_d": config.w_d,
        "cfg/patch_hp": config.patch_hp,
        "cfg/patch_d": config.patch_d,
        "cfg/use_shift": int(config.use_shift),
    }
    return {k: np.asarray(v, dtype=np.float32) for k, v in values.items()}


def model_config_from_arrays(arrays: dict) -> ModelConfig:
    def scalar(key):
        return int(arrays[key])

    return ModelConfig(
        n_side=scalar("cfg/n_side"),
        embed_dim=scalar("cfg/embed_dim"),
        bottleneck_dim=scalar("cfg/bottleneck_dim"),
        depths=tuple(int(d) for d in arrays["cfg/depths"]),
        heads=tuple(int(h) for h in arrays["cfg/heads"]),
        w_hp=scalar("cfg/w_hp"),
        w_d=scalar("cfg/w_d"),
        patch_hp=scalar("cfg/patch_hp"),
        patch_d=scalar("cfg/patch_d"),
        use_shift=bool(scalar("cfg/use_shift")),
    )


def checkpoint_arrays(model: PearModel, optimizer: AdamW, norm: NormStats, step: int) -> dict:
    arrays = dict(model.state_arrays())
    arrays.update(optimizer.state_dict())
    arrays.update(norm.to_arrays())
    arrays.update(_config_arrays(model.config))
    arrays["train/step"] = np.asarray(float(step), dtype=np.float32)
    return arrays


def load_model_from_checkpoint(path):
    """Rebuild the model a checkpoint was saved from; returns (model, norm, step)."""
    arrays = load_checkpoint(path)
    config = model_config_from_arrays(arrays)
    model = PearModel(config, np.random.default_rng(0))
    model.load_state_arrays(
        {k: v for k, v in arrays.items()
         if not k.startswith(("opt/", "norm/", "cfg/", "train/"))}
    )
    return model, NormStats.from_arrays(arrays), int(arrays["train/step"])


def _write_loss_log(run_dir, losses, start_step):
    path = os.path.join(run_dir, "train_log.csv")
    fresh = not os.path.exists(path) or start_step == 0
    with open(path, "w" if fresh else "a", newline="") as f:
        writer = csv.writer(f)
        if fresh:
            writer.writerow(["step", "loss"])
        for i, loss in enumerate(losses):
            writer.writerow([start_step + i + 1, repr(loss)])


def train(model: PearModel, dataset, config: TrainConfig, run_dir=None,
          resume_from=None) -> TrainResult:
    """Optimize on (input, target) state pairs; returns the loss history.

    A non-finite loss or gradient aborts the run with the parameters
    still at their last good values, which are saved when run_dir is set.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if run_dir:
        os.makedirs(run_dir, exist_ok=True)

    optimizer = AdamW(model.parameters(), lr=config.lr,
                      weight_decay=config.weight_decay)
    if resume_from:
        arrays = load_checkpoint(resume_from)
        model.load_state_arrays(
            {k: v for k, v in arrays.items()
             if not k.startswith(("opt/", "norm/", "cfg/", "train/"))}
        )
        optimizer.load_state_dict(arrays)
        norm = NormStats.from_arrays(arrays)
        start_step = int(arrays["train/step"])
    else:
        norm = NormStats.from_states(
            [s for pair in dataset for s in pair]
        )
        start_step = 0

    dt = np.float64 if config.precision == "f64" else np.float32
    if config.precision == "f64":
        for p in model.params.values():
            p.data = p.data.astype(np.float64)

    prepared = []
    for state_in, state_out in dataset:
        a, b = norm.normalize(state_in), norm.normalize(state_out)
        prepared.append(
            (a.surface.astype(dt), a.upper.astype(dt),
             b.surface.astype(dt), b.upper.astype(dt))
        )

    result = TrainResult(norm=norm)
    micro_per_step = config.batch_size * config.grad_accum
    consumed = start_step * micro_per_step

    def save(step, tag=None):
        name = tag or f"ckpt_step{step:06d}.ckpt"
        path = os.path.join(run_dir, name)
        save_checkpoint(path, checkpoint_arrays(model, optimizer, norm, step))
        return path

    for step in range(start_step + 1, config.steps + 1):
        if config.cosine_schedule:
            optimizer.lr = config.lr * 0.5 * (
                1.0 + math.cos(math.pi * (step - 1) / config.steps)
            )
        optimizer.zero_grad()
        step_loss = 0.0
        for _ in range(micro_per_step):
            idx = _sample_index(config.seed, len(prepared), consumed)
            consumed += 1
            surf_in, up_in, surf_tgt, up_tgt = prepared[idx]
            pred_s, pred_u = model.forward_tensors(
                Tensor(surf_in, dtype=dt), Tensor(up_in, dtype=dt)
            )
            loss = ad.scale(
                forecast_loss(pred_s, pred_u, Tensor(surf_tgt, dtype=dt),
                              Tensor(up_tgt, dtype=dt), config.surface_loss_weight),
                1.0 / micro_per_step,
            )
            step_loss += loss.item()
            loss.backward()

        abort_reason = None
        if not math.isfinite(step_loss):
            abort_reason = f"non-finite loss at step {step}"
        else:
            try:
                optimizer.step()
            except ValueError as err:
                abort_reason = f"{err} at step {step}"
        if abort_reason:
            result.aborted = True
            result.step = step - 1
            if run_dir:
                result.checkpoint_path = save(step - 1, tag="ckpt_last_good.ckpt")
                _write_loss_log(run_dir, result.losses, start_step)
            raise RuntimeError(
                f"training aborted: {abort_reason}; parameters remain at "
                f"step {step - 1}"
            )

        result.losses.append(step_loss)
        result.step = step
        if run_dir and (step % config.checkpoint_every == 0 or step == config.steps):
            result.checkpoint_path = save(step)

    if run_dir:
        _write_loss_log(run_dir, result.losses, start_step)
        with open(os.path.join(run_dir, "train_config.json"), "w") as f:
            json.dump(asdict(config), f, indent=2, sort_keys=True)
            f.write("\n")
    return result


def evaluate_loss(model: PearModel, dataset, norm: NormStats,
                  surface_weight=0.25) -> float:
    """Mean forecast loss over a dataset, no gradient bookkeeping."""
    total = 0.0
    with ad.no_grad():
        for state_in, state_out in dataset:
            a, b = norm.normalize(state_in), norm.normalize(state_out)
            pred_s, pred_u = model.forward_tensors(Tensor(a.surface), Tensor(a.upper))
            total += forecast_loss(
                pred_s, pred_u, Tensor(b.surface), Tensor(b.upper), surface_weight
            ).item()
    return total / len(dataset)
