"""Micro decoder-only causal language model.

Pre-norm transformer blocks with a fused query_key_value projection, an
attention output "dense", and a 4x MLP ("dense_h_to_4h" / "dense_4h_to_h"),
so per-block linear names line up with the usual PEFT target-module lists.
Positions are learned absolute embeddings; the output head is tied to the
token embedding.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import IGNORE_LABEL
from .errors import ConfigError, DataError, ShapeError
from .rng import RngState
from .tensor import Parameter, Tensor

INIT_STD = 0.02


@dataclass
class CausalLMConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    seq_len: int = 128
    mlp_ratio: int = 4
    layer_norm_eps: float = 1e-5
    positional: str = "learned_absolute"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.seq_len < 2:
            raise ConfigError(f"seq_len must be >= 2, got {self.seq_len}")
        if self.mlp_ratio != 4:
            raise ConfigError(f"mlp_ratio is fixed at 4, got {self.mlp_ratio}")
        if self.positional != "learned_absolute":
            raise ConfigError(f"unsupported positional mode {self.positional!r}")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_layers": self.n_layers,
            "seq_len": self.seq_len,
            "mlp_ratio": self.mlp_ratio,
            "layer_norm_eps": self.layer_norm_eps,
            "positional": self.positional,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CausalLMConfig":
        return cls(**d)


class Linear:
    """y = x @ W (+ b). Carries optional LoRA adapter and quantized storage."""

    def __init__(self, name: str, weight: Parameter, bias: Parameter | None):
        self.name = name
        self.weight = weight
        self.bias = bias
        self.adapter = None  # set by peft.attach_lora
        self.qweight = None  # set by quant integration (peft.quantize_base)

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor, training: bool = False, rng: RngState | None = None) -> Tensor:
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = T.add(y, self.bias)
        if self.adapter is not None:
            y = T.add(y, self.adapter.delta(x, training=training, rng=rng))
        return y


class LayerNorm:
    def __init__(self, name: str, gain: Parameter, bias: Parameter, eps: float):
        self.name = name
        self.gain = gain
        self.bias = bias
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class Block:
    def __init__(self, ln1, attn_qkv, attn_dense, ln2, mlp_up, mlp_down):
        self.ln1: LayerNorm = ln1
        self.attn_qkv: Linear = attn_qkv
        self.attn_dense: Linear = attn_dense
        self.ln2: LayerNorm = ln2
        self.mlp_up: Linear = mlp_up
        self.mlp_down: Linear = mlp_down
        self.attn_adapter = None  # bottleneck adapters, set by peft
        self.mlp_adapter = None


class CausalLM:
    """The micro PLM: token/position embeddings, blocks, tied output head."""

    def __init__(self, config: CausalLMConfig, params: dict[str, Parameter],
                 blocks: list[Block], ln_f: LayerNorm):
        self.config = config
        self.params = params  # name -> Parameter, insertion-ordered
        self.blocks = blocks
        self.ln_f = ln_f
        self.lora_set = None  # peft.AdapterSet once attached

    # -- parameter access ----------------------------------------------------

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.params.values() if p.trainable]

    def add_parameter(self, p: Parameter):
        if p.name in self.params:
            raise ConfigError(f"duplicate parameter name {p.name!r}")
        self.params[p.name] = p

    def modules(self) -> dict[str, object]:
        out: dict[str, object] = {
            "tok_embeddings": self.params["tok_embeddings.weight"],
            "pos_embeddings": self.params["pos_embeddings.weight"],
            "ln_f": self.ln_f,
        }
        for i, b in enumerate(self.blocks):
            out[f"blocks.{i}.ln1"] = b.ln1
            out[f"blocks.{i}.attn.query_key_value"] = b.attn_qkv
            out[f"blocks.{i}.attn.dense"] = b.attn_dense
            out[f"blocks.{i}.ln2"] = b.ln2
            out[f"blocks.{i}.mlp.dense_h_to_4h"] = b.mlp_up
            out[f"blocks.{i}.mlp.dense_4h_to_h"] = b.mlp_down
        return out

    def module_by_name(self, name: str):
        mods = self.modules()
        if name not in mods:
            raise ConfigError(f"no module named {name!r}")
        return mods[name]

    def linears(self) -> list[Linear]:
        return [m for m in self.modules().values() if isinstance(m, Linear)]

    def freeze_all(self):
        for p in self.params.values():
            p.freeze()

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def clone(self) -> "CausalLM":
        return copy.deepcopy(self)

    def state_tensors(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in sorted(self.params.items())}

    def load_state_tensors(self, tensors: dict[str, np.ndarray]):
        for name, p in self.params.items():
            if name not in tensors:
                raise DataError(f"missing tensor {name!r} in archive")
            if tensors[name].shape != p.data.shape:
                raise DataError(
                    f"tensor {name!r}: shape {tensors[name].shape} != {p.data.shape}"
                )
            p.data = tensors[name].astype(np.float32).copy()

    # -- forward -------------------------------------------------------------

    def forward_logits(self, input_ids: np.ndarray, training: bool = False,
                       rng: RngState | None = None) -> Tensor:
        """input_ids (B, T) -> logits (B, T, vocab); causal by construction."""
        ids = np.asarray(input_ids)
        if ids.ndim == 1:
            ids = ids[None, :]
        B, S = ids.shape
        cfg = self.config
        if S > cfg.seq_len:
            raise DataError(f"sequence length {S} exceeds model seq_len {cfg.seq_len}")
        if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
            bad = int(np.argmax((ids < 0) | (ids >= cfg.vocab_size)))
            raise DataError(f"token id out of range at flat position {bad}")

        tok = self.params["tok_embeddings.weight"]
        pos = self.params["pos_embeddings.weight"]
        x = T.add(T.embedding(tok, ids), T.embedding(pos, np.arange(S)))

        H, hd = cfg.n_heads, cfg.d_model // cfg.n_heads
        scale = Tensor(np.float32(1.0 / math.sqrt(hd)))
        for b in self.blocks:
            h = b.ln1(x)
            qkv = b.attn_qkv(h, training, rng)  # (B, S, 3d)
            qkv = T.reshape(qkv, (B, S, 3, H, hd))
            qkv = T.transpose(qkv, 1, 3)  # (B, H, 3, S, hd)
            q = T.reshape(T.narrow(qkv, 2, 0, 1), (B, H, S, hd))
            k = T.reshape(T.narrow(qkv, 2, 1, 1), (B, H, S, hd))
            v = T.reshape(T.narrow(qkv, 2, 2, 1), (B, H, S, hd))
            scores = T.mul(T.matmul(q, T.transpose(k)), scale)
            attn = T.softmax(T.causal_mask(scores))
            ctx = T.matmul(attn, v)  # (B, H, S, hd)
            ctx = T.reshape(T.transpose(ctx, 1, 2), (B, S, cfg.d_model))
            a_out = b.attn_dense(ctx, training, rng)
            if b.attn_adapter is not None:
                a_out = b.attn_adapter(a_out)
            x = T.add(x, a_out)

            h = b.ln2(x)
            m_out = b.mlp_down(T.gelu(b.mlp_up(h, training, rng)), training, rng)
            if b.mlp_adapter is not None:
                m_out = b.mlp_adapter(m_out)
            x = T.add(x, m_out)

        x = self.ln_f(x)
        logits = T.matmul(x, T.transpose(tok, 0, 1))  # tied head
        return logits

    def lm_loss(self, input_ids: np.ndarray, labels: np.ndarray,
                training: bool = False, rng: RngState | None = None) -> Tensor:
        """Mean next-token cross-entropy over unmasked label positions."""
        ids = np.atleast_2d(np.asarray(input_ids))
        lab = np.atleast_2d(np.asarray(labels))
        if ids.shape != lab.shape:
            raise ShapeError(f"lm_loss: ids {ids.shape} vs labels {lab.shape}")
        logits = self.forward_logits(ids, training=training, rng=rng)
        B, S, V = logits.shape
        pred = T.reshape(T.narrow(logits, 1, 0, S - 1), (B * (S - 1), V))
        targets = lab[:, 1:].reshape(-1)
        return T.cross_entropy(pred, targets, ignore_index=IGNORE_LABEL)

    # -- generation ----------------------------------------------------------

    def generate(
        self,
        prompt_ids: list[int],
        max_new_tokens: int,
        mode: str = "greedy",
        temperature: float = 1.0,
        top_k: int = 0,
        rng: RngState | None = None,
        eos_id: int | None = None,
    ) -> list[int]:
        """Autoregressive decoding; greedy ties resolve to the lowest id.

        The context slides to the most recent seq_len - 1 tokens when the
        running sequence outgrows the window.
        """
        if not prompt_ids:
            raise DataError("empty prompt")
        if mode not in ("greedy", "temperature"):
            raise ConfigError(f"unknown decode mode {mode!r}")
        if mode == "temperature" and temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {temperature}")
        out = list(prompt_ids)
        window = self.config.seq_len - 1
        for _ in range(max_new_tokens):
            ctx = out[-window:]
            with T.no_grad():
                logits = self.forward_logits(np.asarray([ctx]))
            row = logits.data[0, -1].astype(np.float64)
            if mode == "greedy":
                nxt = int(row.argmax())
            else:
                z = row / temperature
                if top_k and top_k < len(z):
                    cutoff = np.sort(z)[-top_k]
                    z = np.where(z >= cutoff, z, -np.inf)
                z -= z.max()
                probs = np.exp(z)
                probs /= probs.sum()
                nxt = rng.choice_weighted(probs.astype(np.float32))
            out.append(nxt)
            if eos_id is not None and nxt == eos_id:
                break
        return out


def init_model(config: CausalLMConfig, rng: RngState) -> CausalLM:
    """Fresh model: weights N(0, 0.02^2), biases 0, norm gain 1."""
    cfg = config
    params: dict[str, Parameter] = {}

    def weight(name: str, shape) -> Parameter:
        p = Parameter(rng.gaussian(0.0, INIT_STD, shape), name)
        params[name] = p
        return p

    def zeros(name: str, shape) -> Parameter:
        p = Parameter(np.zeros(shape, dtype=np.float32), name)
        params[name] = p
        return p

    def ones(name: str, shape) -> Parameter:
        p = Parameter(np.ones(shape, dtype=np.float32), name)
        params[name] = p
        return p

    weight("tok_embeddings.weight", (cfg.vocab_size, cfg.d_model))
    weight("pos_embeddings.weight", (cfg.seq_len, cfg.d_model))

    blocks = []
    d, dh = cfg.d_model, cfg.mlp_ratio * cfg.d_model
    for i in range(cfg.n_layers):
        pre = f"blocks.{i}"
        ln1 = LayerNorm(f"{pre}.ln1", ones(f"{pre}.ln1.gain", (d,)),
                        zeros(f"{pre}.ln1.bias", (d,)), cfg.layer_norm_eps)
        qkv = Linear(f"{pre}.attn.query_key_value",
                     weight(f"{pre}.attn.query_key_value.weight", (d, 3 * d)),
                     zeros(f"{pre}.attn.query_key_value.bias", (3 * d,)))
        dense = Linear(f"{pre}.attn.dense",
                       weight(f"{pre}.attn.dense.weight", (d, d)),
                       zeros(f"{pre}.attn.dense.bias", (d,)))
        ln2 = LayerNorm(f"{pre}.ln2", ones(f"{pre}.ln2.gain", (d,)),
                        zeros(f"{pre}.ln2.bias", (d,)), cfg.layer_norm_eps)
        up = Linear(f"{pre}.mlp.dense_h_to_4h",
                    weight(f"{pre}.mlp.dense_h_to_4h.weight", (d, dh)),
                    zeros(f"{pre}.mlp.dense_h_to_4h.bias", (dh,)))
        down = Linear(f"{pre}.mlp.dense_4h_to_h",
                      weight(f"{pre}.mlp.dense_4h_to_h.weight", (dh, d)),
                      zeros(f"{pre}.mlp.dense_4h_to_h.bias", (d,)))
        blocks.append(Block(ln1, qkv, dense, ln2, up, down))

    ln_f = LayerNorm("ln_f", ones("ln_f.gain", (d,)), zeros("ln_f.bias", (d,)),
                     cfg.layer_norm_eps)
    return CausalLM(cfg, params, blocks, ln_f)


def parameter_count(config: CausalLMConfig) -> int:
    """Closed-form total parameter count (tied head counted once)."""
    d, dh = config.d_model, config.mlp_ratio * config.d_model
    per_block = (
        2 * d  # ln1
        + d * 3 * d + 3 * d  # qkv
        + d * d + d  # attn dense
        + 2 * d  # ln2
        + d * dh + dh  # mlp up
        + dh * d + d  # mlp down
    )
    return (
        config.vocab_size * d
        + config.seq_len * d
        + config.n_layers * per_block
        + 2 * d  # ln_f
    )
