"""AdamW with decoupled weight decay, global-norm clipping, and an optional
paged backing store for the moment buffers.

Moments are f32 ("32-bit optimizer state"); the update order is fixed so a
run is bitwise reproducible, paged or not.
"""

from __future__ import annotations

import os
from collections import OrderedDict

import numpy as np

from .errors import ConfigError, StateError
from .tensor import Parameter


def clip_global_norm(params: list[Parameter], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the factor applied. Norms already within f32 rounding of the
    threshold are left untouched, which makes clipping idempotent.
    """
    if max_norm <= 0:
        raise ConfigError(f"max_norm must be > 0, got {max_norm}")
    total = 0.0
    grads = [p.grad for p in params if p.grad is not None]
    for g in grads:
        total += float(np.square(g.astype(np.float64)).sum())
    norm = total**0.5
    if norm <= max_norm * (1.0 + 1e-6):
        return 1.0
    factor = np.float32(max_norm / norm)
    for g in grads:
        g *= factor
    return float(factor)


class PageTable:
    """LRU paging of per-parameter moment buffers to a scratch directory.

    One page holds one parameter's (m, v) pair. At most ``budget`` pages stay
    resident; the rest live on disk byte-exactly, so paging never changes
    numerics.
    """

    def __init__(self, scratch_dir: str, budget: int):
        if budget < 1:
            raise ConfigError(f"paging budget must be >= 1 page, got {budget}")
        self.scratch_dir = scratch_dir
        self.budget = budget
        self.resident: OrderedDict[str, tuple[np.ndarray, np.ndarray]] = OrderedDict()
        self.evictions = 0
        os.makedirs(scratch_dir, exist_ok=True)

    def _path(self, name: str) -> str:
        return os.path.join(self.scratch_dir, name.replace("/", "_") + ".npz")

    def put(self, name: str, m: np.ndarray, v: np.ndarray):
        self.resident[name] = (m, v)
        self.resident.move_to_end(name)
        self._evict_over_budget()

    def get(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name in self.resident:
            self.resident.move_to_end(name)
            return self.resident[name]
        path = self._path(name)
        with np.load(path) as z:
            m, v = z["m"], z["v"]
        self.resident[name] = (m, v)
        self.resident.move_to_end(name)
        self._evict_over_budget()
        return m, v

    def _evict_over_budget(self):
        while len(self.resident) > self.budget:
            victim, (m, v) = self.resident.popitem(last=False)
            np.savez(self._path(victim), m=m, v=v)
            self.evictions += 1

    def flush(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Materialize every page (used for checkpointing)."""
        out = {}
        for name in list(self.resident):
            out[name] = self.resident[name]
        for fn in os.listdir(self.scratch_dir):
            name = fn[: -len(".npz")]
            if name not in out:
                with np.load(os.path.join(self.scratch_dir, fn)) as z:
                    out[name] = (z["m"], z["v"])
        return out


class AdamW:
    """Decoupled-weight-decay Adam over the trainable parameters of a model."""

    def __init__(
        self,
        params: list[Parameter],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = [p for p in params if p.trainable]
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate parameter names in optimizer")
        self.beta1 = np.float32(beta1)
        self.beta2 = np.float32(beta2)
        self.eps = np.float32(eps)
        self.weight_decay = np.float32(weight_decay)
        self.step_count = 0
        self._moments: dict[str, tuple[np.ndarray, np.ndarray]] = {
            p.name: (np.zeros_like(p.data), np.zeros_like(p.data)) for p in self.params
        }
        self._pages: PageTable | None = None

    def enable_paging(self, scratch_dir: str, budget: int):
        """Move moment storage behind an LRU page table."""
        self._pages = PageTable(scratch_dir, budget)
        for name, (m, v) in self._moments.items():
            self._pages.put(name, m, v)
        self._moments = {}

    @property
    def evictions(self) -> int:
        return self._pages.evictions if self._pages else 0

    def _get_moments(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if self._pages is not None:
            return self._pages.get(name)
        return self._moments[name]

    def _put_moments(self, name: str, m: np.ndarray, v: np.ndarray):
        if self._pages is not None:
            self._pages.put(name, m, v)
        else:
            self._moments[name] = (m, v)

    def step(self, lr: float):
        """One AdamW update with bias correction. Grads are left untouched."""
        if lr < 0:
            raise ConfigError(f"lr must be >= 0, got {lr}")
        self.step_count += 1
        t = self.step_count
        lr = np.float32(lr)
        bc1 = np.float32(1.0 - float(self.beta1) ** t)
        bc2 = np.float32(1.0 - float(self.beta2) ** t)
        for p in self.params:
            if p.grad is None:
                raise StateError(f"parameter {p.name!r} has no gradient before step")
            g = p.grad
            m, v = self._get_moments(p.name)
            m = self.beta1 * m + (np.float32(1.0) - self.beta1) * g
            v = self.beta2 * v + (np.float32(1.0) - self.beta2) * (g * g)
            mhat = m / bc1
            vhat = v / bc2
            p.data -= lr * (mhat / (np.sqrt(vhat) + self.eps))
            if self.weight_decay > 0:
                p.data -= lr * self.weight_decay * p.data
            self._put_moments(p.name, m, v)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    # -- serialization -------------------------------------------------------

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of all moments, for checkpointing."""
        moments = self._pages.flush() if self._pages else self._moments
        out: dict[str, np.ndarray] = {}
        for name, (m, v) in sorted(moments.items()):
            out[f"optim.m.{name}"] = m
            out[f"optim.v.{name}"] = v
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray], step_count: int):
        self.step_count = int(step_count)
        for p in self.params:
            m = tensors[f"optim.m.{p.name}"].astype(np.float32)
            v = tensors[f"optim.v.{p.name}"].astype(np.float32)
            self._put_moments(p.name, m, v)
