"""Compact causal Transformer over non-overlapping temporal patches.

Patch embedding is LayerNorm -> Linear -> LayerNorm; each block is pre-norm
self-attention with a learned relative-position bias and a causal mask,
followed by a pre-norm FFN (Linear, GeLU, Dropout, Linear, Dropout) with
residual connections. A final LayerNorm feeds the linear output head.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .optim import ParameterGroup
from .tensor import Tensor, ShapeError

__all__ = [
    "ModelConfig", "DecoderModel", "patchify", "CheckpointError",
    "save_checkpoint", "load_checkpoint",
]

_MAGIC = b"SDECCKPT"
_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    patch_bins: int = 5          # time bins per patch (100 ms at 50 Hz)
    channels: int = 256
    model_dim: int = 384
    n_layers: int = 7
    n_heads: int = 6
    head_dim: int = 64
    ffn_mult: int = 4
    vocab_size: int = 41         # 39 phonemes + SIL + blank
    dropout: float = 0.35
    input_dropout: float = 0.2
    max_patches: int = 120
    max_rel_dist: int | None = None  # clamp for relative offsets; default max_patches-1

    @property
    def patch_dim(self):
        return self.channels * self.patch_bins

    @property
    def attn_dim(self):
        return self.n_heads * self.head_dim

    @property
    def rel_dist(self):
        return self.max_patches - 1 if self.max_rel_dist is None else self.max_rel_dist


def patchify(features, patch_bins):
    """Split a [T x C] feature matrix into [L x (C*patch_bins)] patches.

    L = floor(T / patch_bins); trailing remainder bins are dropped. Each patch
    is the [patch_bins x C] slab flattened in time-major order.
    """
    x = np.asarray(features, dtype=np.float64)
    T_, C = x.shape
    if T_ < patch_bins:
        raise ShapeError(
            f"patchify: {T_} bins is fewer than patch size {patch_bins}")
    L = T_ // patch_bins
    return x[: L * patch_bins].reshape(L, patch_bins * C)


class DecoderModel:
    """Owns all learnable parameters, partitioned into named groups:
    "embedding" (mask token + patch embedding), "backbone" (blocks + final
    norm), "head" (output linear)."""

    def __init__(self, config: ModelConfig, rng=None):
        self.config = config
        self.params = {}
        cfg = config
        init = (lambda *s: np.zeros(s)) if rng is None else \
            (lambda *s: rng.normal(0.0, 0.02, size=s))

        def lin(name, din, dout):
            self._add(f"{name}.w", init(din, dout))
            self._add(f"{name}.b", np.zeros(dout))

        def ln(name, d):
            self._add(f"{name}.g", np.ones(d))
            self._add(f"{name}.b", np.zeros(d))

        self._add("mask_token", np.zeros(cfg.patch_dim))
        ln("embed.norm0", cfg.patch_dim)
        lin("embed.linear", cfg.patch_dim, cfg.model_dim)
        ln("embed.norm1", cfg.model_dim)
        for i in range(cfg.n_layers):
            p = f"blocks.{i}"
            ln(f"{p}.attn.norm", cfg.model_dim)
            lin(f"{p}.attn.wq", cfg.model_dim, cfg.attn_dim)
            lin(f"{p}.attn.wk", cfg.model_dim, cfg.attn_dim)
            lin(f"{p}.attn.wv", cfg.model_dim, cfg.attn_dim)
            lin(f"{p}.attn.wo", cfg.attn_dim, cfg.model_dim)
            self._add(f"{p}.attn.rel_bias",
                      np.zeros((cfg.n_heads, 2 * cfg.rel_dist + 1)))
            ln(f"{p}.ffn.norm", cfg.model_dim)
            lin(f"{p}.ffn.linear1", cfg.model_dim, cfg.ffn_mult * cfg.model_dim)
            lin(f"{p}.ffn.linear2", cfg.ffn_mult * cfg.model_dim, cfg.model_dim)
        ln("final_norm", cfg.model_dim)
        lin("head", cfg.model_dim, cfg.vocab_size)
        self._mask_cache = {}

    def _add(self, name, value):
        self.params[name] = Tensor(value, requires_grad=True)

    # ------------------------------------------------------------------
    def parameter_groups(self):
        emb, backbone, head = [], [], []
        for name, p in self.params.items():
            if name == "mask_token" or name.startswith("embed."):
                emb.append((name, p))
            elif name.startswith("head"):
                head.append((name, p))
            else:
                backbone.append((name, p))
        return [ParameterGroup("embedding", emb),
                ParameterGroup("backbone", backbone),
                ParameterGroup("head", head)]

    def group_of(self, name):
        if name == "mask_token" or name.startswith("embed."):
            return "embedding"
        return "head" if name.startswith("head") else "backbone"

    @property
    def mask_token(self):
        return self.params["mask_token"]

    def n_parameters(self):
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def copy_state(self):
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state(self, state):
        for k, p in self.params.items():
            p.data = state[k].copy()

    # ------------------------------------------------------------------
    def _lin(self, x, name):
        return T.matmul(x, self.params[f"{name}.w"]) + self.params[f"{name}.b"]

    def _ln(self, x, name):
        return T.layer_norm(x, self.params[f"{name}.g"], self.params[f"{name}.b"])

    def _masks(self, L):
        cached = self._mask_cache.get(L)
        if cached is None:
            i = np.arange(L)[:, None]
            j = np.arange(L)[None, :]
            rel = np.clip(i - j, -self.config.rel_dist, self.config.rel_dist)
            idx = rel + self.config.rel_dist
            causal = np.where(j <= i, 0.0, -np.inf)
            cached = (idx, causal)
            self._mask_cache[L] = cached
        return cached

    def attention(self, x, layer, L):
        cfg = self.config
        B = x.shape[0]
        p = f"blocks.{layer}.attn"
        idx, causal = self._masks(L)

        def heads(t):
            t = T.reshape(t, (B, L, cfg.n_heads, cfg.head_dim))
            return T.transpose(t, (0, 2, 1, 3))

        q = heads(self._lin(x, f"{p}.wq"))
        k = heads(self._lin(x, f"{p}.wk"))
        v = heads(self._lin(x, f"{p}.wv"))
        scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))),
                         1.0 / np.sqrt(cfg.head_dim))
        bias = T.take_last(self.params[f"{p}.rel_bias"], idx)  # [H, L, L]
        scores = scores + bias + T.constant(causal)
        att = T.softmax(scores)
        out = T.matmul(att, v)                       # [B, H, L, hd]
        out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (B, L, cfg.attn_dim))
        return self._lin(out, f"{p}.wo")

    def forward(self, patches, train=False, rng=None):
        """patches: Tensor or array, [L x patch_dim] or [B x L x patch_dim].

        Returns logits with matching leading shape, last axis vocab_size.
        Causal by construction: logits at patch t depend only on patches <= t.
        """
        x = patches if isinstance(patches, Tensor) else T.constant(patches)
        squeeze = x.data.ndim == 2
        if squeeze:
            x = T.reshape(x, (1,) + x.shape)
        B, L, P = x.shape
        cfg = self.config
        if P != cfg.patch_dim:
            raise ShapeError(f"forward: patch dim {P} != configured {cfg.patch_dim}")
        if L > cfg.max_patches:
            raise ShapeError(f"forward: {L} patches exceeds max_patches {cfg.max_patches}")
        if train and rng is None:
            raise ValueError("forward: train=True requires an rng for dropout")

        h = self._ln(x, "embed.norm0")
        h = self._lin(h, "embed.linear")
        h = self._ln(h, "embed.norm1")
        h = T.dropout(h, cfg.input_dropout, train, rng)
        for i in range(cfg.n_layers):
            h = h + self.attention(self._ln(h, f"blocks.{i}.attn.norm"), i, L)
            f = self._ln(h, f"blocks.{i}.ffn.norm")
            f = self._lin(f, f"blocks.{i}.ffn.linear1")
            f = T.gelu(f)
            f = T.dropout(f, cfg.dropout, train, rng)
            f = self._lin(f, f"blocks.{i}.ffn.linear2")
            f = T.dropout(f, cfg.dropout, train, rng)
            h = h + f
        h = self._ln(h, "final_norm")
        logits = self._lin(h, "head")
        return T.reshape(logits, (L, cfg.vocab_size)) if squeeze else logits


# checkpoint io --------------------------------------------------------------

def save_checkpoint(model, epoch=0, rng_state=None, extra=None):
    """Serialize model (config + parameters + group tags) to bytes.

    Little-endian float64 blobs after a JSON header; round trip is
    bit-identical.
    """
    names = sorted(model.params)
    header = {
        "version": _VERSION,
        "config": asdict(model.config),
        "epoch": int(epoch),
        "rng_state": rng_state,
        "extra": extra or {},
        "params": [
            {"name": n, "shape": list(model.params[n].data.shape),
             "group": model.group_of(n)}
            for n in names
        ],
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", len(hbytes)))
    buf.write(hbytes)
    for n in names:
        arr = np.ascontiguousarray(model.params[n].data, dtype="<f8")
        buf.write(arr.tobytes())
    return buf.getvalue()


def load_checkpoint(blob, expect_config=None):
    """Rebuild a model from bytes. Returns (model, header).

    Truncated or malformed blobs raise CheckpointError; if ``expect_config``
    is given, any field mismatch is rejected.
    """
    if len(blob) < len(_MAGIC) + 4 or blob[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError("not a decoder checkpoint (bad magic)")
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    if len(blob) < off + hlen:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(blob[off:off + hlen].decode())
    except ValueError as e:
        raise CheckpointError(f"malformed checkpoint header: {e}")
    off += hlen
    if header.get("version") != _VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    config = ModelConfig(**header["config"])
    if expect_config is not None and asdict(expect_config) != asdict(config):
        raise CheckpointError("checkpoint config does not match expected config")
    model = DecoderModel(config)
    for rec in header["params"]:
        shape = tuple(rec["shape"])
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = n * 8
        if len(blob) < off + nbytes:
            raise CheckpointError(f"truncated checkpoint data at '{rec['name']}'")
        if rec["name"] not in model.params or model.params[rec["name"]].data.shape != shape:
            raise CheckpointError(f"unexpected parameter '{rec['name']}' {shape}")
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape)
        model.params[rec["name"]].data = arr.astype(np.float64).copy()
        off += nbytes
    if off != len(blob):
        raise CheckpointError("trailing bytes after checkpoint data")
    return model, header
