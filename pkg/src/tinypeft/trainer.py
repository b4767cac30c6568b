"""Training loop: warmup+cosine scheduling, gradient accumulation, clipping,
checkpoint cadence, metrics logging, optional paged optimizer state, and
grid/random hyperparameter search.

Everything is a pure function of (seed, config, dataset): the data order of
epoch e is recomputed from the seed, and the dropout stream lives in the
serialized trainer state, so a stopped and resumed run is bitwise equal to
one that never stopped.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .corpus import TrainingExample
from .errors import ConfigError, DataError, StateError
from .model import CausalLM
from .optim import AdamW, clip_global_norm
from .rng import RngState
from .store import load_archive, save_archive
from .tensor import backward

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    output_dir: str = "runs/default"
    per_device_train_batch_size: int = 2
    gradient_accumulation_steps: int = 2
    optim: str = "adamw_32bit"  # adamw_32bit | paged_adamw_32bit
    save_strategy: str = "steps"
    save_steps: int = 10
    logging_steps: int = 10
    learning_rate: float = 2e-4
    max_grad_norm: float = 0.3
    max_steps: int = 60
    warmup_ratio: float = 0.03
    lr_scheduler_type: str = "cosine"  # cosine | constant
    seed: int = 42
    epochs: int | None = None  # alternative stop criterion
    weight_decay: float = 0.0
    paging_budget: int = 8  # resident pages when optim is paged

    def __post_init__(self):
        if self.max_steps < 1 and not (self.epochs and self.epochs >= 1):
            raise ConfigError("need max_steps >= 1 or epochs >= 1")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ConfigError(f"warmup_ratio must be in [0,1), got {self.warmup_ratio}")
        if self.optim not in ("adamw_32bit", "paged_adamw_32bit"):
            raise ConfigError(f"unknown optim {self.optim!r}")
        if self.lr_scheduler_type not in ("cosine", "constant"):
            raise ConfigError(f"unknown scheduler {self.lr_scheduler_type!r}")
        if self.save_strategy != "steps":
            raise ConfigError(f"only save_strategy='steps' is supported")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class MetricsRecord:
    step: int
    training_loss: float
    learning_rate: float
    wall_ms: int

    def to_json(self) -> str:
        return json.dumps({
            "step": self.step,
            "training_loss": self.training_loss,
            "learning_rate": self.learning_rate,
            "wall_ms": self.wall_ms,
        })


def lr_at_step(config: TrainConfig, s: int, total_steps: int | None = None) -> float:
    """Linear warmup to learning_rate, then cosine decay to 0 (or constant).

    Warmup length is ceil(warmup_ratio * total); the first applied lr is
    learning_rate * 1/w, the closed left end of "from 0 to learning_rate".
    """
    total = total_steps if total_steps is not None else config.max_steps
    if s < 0 or s > total:
        raise ConfigError(f"step {s} outside [0, {total}]")
    w = math.ceil(config.warmup_ratio * total)
    if s < w:
        return config.learning_rate * (s + 1) / w
    if config.lr_scheduler_type == "constant":
        return config.learning_rate
    denom = max(1, total - w)
    return config.learning_rate * 0.5 * (1.0 + math.cos(math.pi * (s - w) / denom))


def _epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    # recomputable from (seed, epoch) alone, so the data cursor stays tiny
    return RngState((seed * 1_000_003 + epoch) & 0x7FFFFFFFFFFFFFFF).permutation(n)


def collate(examples: list[TrainingExample], pad_id: int, ignore: int = -1):
    """Right-pad a micro-batch to its longest sequence."""
    width = max(e.length for e in examples)
    ids = np.full((len(examples), width), pad_id, dtype=np.int64)
    labels = np.full((len(examples), width), ignore, dtype=np.int64)
    for i, e in enumerate(examples):
        ids[i, : e.length] = e.input_ids
        labels[i, : e.length] = e.labels
    return ids, labels


class Trainer:
    """Owns one model + optimizer + data cursor for the duration of a run."""

    def __init__(self, model: CausalLM, dataset: list[TrainingExample],
                 config: TrainConfig, pad_id: int):
        if not dataset:
            raise DataError("dataset is empty")
        if not model.trainable_parameters():
            raise ConfigError("model has no trainable parameters")
        try:
            os.makedirs(config.output_dir, exist_ok=True)
            probe = os.path.join(config.output_dir, ".write_probe")
            with open(probe, "w") as f:
                f.write("")
            os.unlink(probe)
        except OSError as e:
            raise DataError(f"output_dir {config.output_dir!r} is not writable: {e}")

        self.model = model
        self.dataset = dataset
        self.config = config
        self.pad_id = pad_id
        self.rng = RngState(config.seed)
        self.global_step = 0
        self.epoch = 0
        self.offset = 0
        self.metrics: list[MetricsRecord] = []
        self.step_losses: list[float] = []
        self.optimizer = AdamW(
            model.trainable_parameters(), weight_decay=config.weight_decay
        )
        if config.optim == "paged_adamw_32bit":
            self.optimizer.enable_paging(
                os.path.join(config.output_dir, ".paging"), config.paging_budget
            )
        self.total_steps = self._total_steps()
        self._frozen_snapshot = {
            p.name: p.data.copy() for p in model.parameters() if not p.trainable
        }
        self._perm = _epoch_permutation(config.seed, 0, len(dataset))

    def _total_steps(self) -> int:
        cfg = self.config
        if cfg.epochs:
            per_epoch = len(self.dataset) // cfg.per_device_train_batch_size
            per_epoch = max(1, per_epoch // cfg.gradient_accumulation_steps)
            return per_epoch * cfg.epochs
        return cfg.max_steps

    # -- data ----------------------------------------------------------------

    def _next_micro_batch(self) -> list[TrainingExample]:
        bs = self.config.per_device_train_batch_size
        if self.offset + bs > len(self.dataset):
            self.epoch += 1
            self.offset = 0
            self._perm = _epoch_permutation(self.config.seed, self.epoch, len(self.dataset))
        picks = self._perm[self.offset : self.offset + bs]
        self.offset += bs
        return [self.dataset[int(i)] for i in picks]

    # -- stepping ------------------------------------------------------------

    def train_step(self) -> float:
        cfg = self.config
        acc = cfg.gradient_accumulation_steps
        inv = np.float32(1.0 / acc)
        loss_total = 0.0
        for _ in range(acc):
            batch = self._next_micro_batch()
            ids, labels = collate(batch, self.pad_id)
            loss = self.model.lm_loss(ids, labels, training=True, rng=self.rng)
            scaled = loss * float(inv)
            backward(scaled)
            loss_total += scaled.item()
        clip_global_norm(self.model.trainable_parameters(), cfg.max_grad_norm)
        lr = lr_at_step(cfg, self.global_step, self.total_steps)
        self.optimizer.step(lr)
        self.optimizer.zero_grad()
        self.global_step += 1
        self.step_losses.append(loss_total)
        return loss_total

    def train(self, stop_after: int | None = None) -> dict:
        """Run to the step budget; returns a summary dict.

        ``stop_after`` interrupts the run once that global step is reached
        without touching the schedule, so a later ``resume`` continues the
        same trajectory.
        """
        cfg = self.config
        limit = self.total_steps if stop_after is None else min(stop_after, self.total_steps)
        if self.global_step >= limit:
            log.warning("already at step %d of %d, nothing to do",
                        self.global_step, limit)
            return self.summary()
        t0 = time.monotonic()
        window: list[float] = []
        while self.global_step < limit:
            loss = self.train_step()
            window.append(loss)
            s = self.global_step
            if s % cfg.logging_steps == 0 or s == self.total_steps:
                rec = MetricsRecord(
                    step=s,
                    # mean loss since the previous record, not a single-step sample
                    training_loss=float(np.mean(window)),
                    learning_rate=lr_at_step(cfg, s - 1, self.total_steps),
                    wall_ms=int((time.monotonic() - t0) * 1000),
                )
                window = []
                if not self.metrics or self.metrics[-1].step != s:
                    self.metrics.append(rec)
                    with open(os.path.join(cfg.output_dir, "metrics.jsonl"), "a") as f:
                        f.write(rec.to_json() + "\n")
            if cfg.save_strategy == "steps" and s % cfg.save_steps == 0:
                self.save_checkpoint()
        self.audit_frozen()
        return self.summary()

    def summary(self) -> dict:
        mean = float(np.mean(self.step_losses)) if self.step_losses else float("nan")
        return {
            "global_step": self.global_step,
            "training_loss": mean,
            "epoch": round(self.epoch + self.offset / max(1, len(self.dataset)), 2),
        }

    def audit_frozen(self):
        """Assert no frozen parameter byte changed since the run began."""
        for name, snap in self._frozen_snapshot.items():
            cur = self.model.params[name].data
            if cur.tobytes() != snap.tobytes():
                raise StateError(f"frozen parameter {name!r} changed during training")

    # -- checkpointing -------------------------------------------------------

    def save_checkpoint(self, path: str | None = None):
        path = path or os.path.join(
            self.config.output_dir, f"checkpoint-{self.global_step}", "state.pfwa"
        )
        tensors = {f"model.{n}": p.data for n, p in self.model.params.items()}
        tensors.update(self.optimizer.state_tensors())
        meta = {
            "kind": "checkpoint",
            "global_step": self.global_step,
            "epoch": self.epoch,
            "offset": self.offset,
            "optimizer_step_count": self.optimizer.step_count,
            "rng_state": self.rng.get_state(),
            "train_config": self.config.to_dict(),
        }
        save_archive(path, tensors, meta)

    def resume(self, path: str):
        """Restore weights, moments, scheduler position, cursor and PRNG.

        The model must already carry the same adapter structure the
        checkpoint was saved with.
        """
        tensors, meta = load_archive(path)
        if meta.get("kind") != "checkpoint":
            raise DataError(f"{path}: not a checkpoint (kind={meta.get('kind')!r})")
        for field_name in ("global_step", "epoch", "offset", "rng_state",
                          "optimizer_step_count"):
            if field_name not in meta:
                raise DataError(f"{path}: checkpoint missing field {field_name!r}")
        for name, p in self.model.params.items():
            key = f"model.{name}"
            if key not in tensors:
                raise DataError(f"{path}: checkpoint missing tensor {key!r}")
            p.data = tensors[key].astype(np.float32).copy()
        self.optimizer.load_state_tensors(
            {k: v for k, v in tensors.items() if k.startswith("optim.")},
            meta["optimizer_step_count"],
        )
        self.rng.set_state(meta["rng_state"])
        self.global_step = int(meta["global_step"])
        self.epoch = int(meta["epoch"])
        self.offset = int(meta["offset"])
        self._perm = _epoch_permutation(self.config.seed, self.epoch, len(self.dataset))
        self._frozen_snapshot = {
            p.name: p.data.copy() for p in self.model.parameters() if not p.trainable
        }
        if self.global_step >= self.total_steps:
            log.warning("resumed at step %d with budget %d: nothing to train",
                        self.global_step, self.total_steps)
        return self


# -- hyperparameter search ---------------------------------------------------


@dataclass
class Trial:
    index: int
    overrides: dict
    objective: float


def hyperparameter_search(
    space: dict[str, list],
    run_trial,
    strategy: str = "grid",
    budget: int | None = None,
    seed: int = 0,
) -> list[Trial]:
    """Grid or seeded random search; run_trial(overrides) -> objective.

    Grid walks the full cartesian product in sorted key order. Random draws
    ``budget`` configs with a seeded PRNG. Trials come back sorted by
    objective ascending, ties broken by trial index.
    """
    if not space or any(not v for v in space.values()):
        raise ConfigError("search space is empty")
    keys = sorted(space)
    configs: list[dict] = []
    if strategy == "grid":
        for combo in itertools.product(*(space[k] for k in keys)):
            configs.append(dict(zip(keys, combo)))
    elif strategy == "random":
        if not budget or budget < 1:
            raise ConfigError("random search needs a positive budget")
        rng = RngState(seed)
        for _ in range(budget):
            configs.append({k: space[k][rng.randint(0, len(space[k]))] for k in keys})
    else:
        raise ConfigError(f"unknown search strategy {strategy!r}")

    trials = [Trial(i, cfg, float(run_trial(cfg))) for i, cfg in enumerate(configs)]
    return sorted(trials, key=lambda t: (t.objective, t.index))
