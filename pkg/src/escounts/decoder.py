"""Counting decoder: exemplar cross-attention, windowed self-attention, density head.

The decoder consumes a positional-encoded token sequence [M, C] plus a set
of exemplar latents. Each of the L fusion blocks runs self-attention over
the video tokens, then cross-attention with the video as queries and each
exemplar as keys/values (outputs averaged over exemplars, weights shared),
then an MLP, all pre-norm residual. When no exemplar is given the learned
latent z0 stands in, which is the zero-shot path used at inference. L'
window self-attention blocks follow, restricted to local (t, h, w) windows;
the first layer is unshifted and later layers cyclically shift the grid by
half a window per axis so neighborhoods mix. A per-token linear head plus
softplus and a spatial sum produce the per-temporal-bin density whose sum
is the predicted count.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nm
from .features import ExemplarLatent, FeatureSequence
from .numerics import Tensor

__all__ = [
    "DecoderConfig",
    "CheckpointError",
    "CheckpointMismatchError",
    "init_params",
    "ca_block",
    "wsa_block",
    "density_head",
    "forward",
    "save_checkpoint",
    "load_checkpoint",
]

_NEG_INF = -1e9


class CheckpointError(Exception):
    """Checkpoint file is malformed."""


class CheckpointMismatchError(CheckpointError):
    """Checkpoint was written under a different decoder configuration."""


@dataclass(frozen=True)
class DecoderConfig:
    """Architecture hyperparameters.

    ``window_grid`` is the per-encoder-window token grid (T'_w, H', W');
    ``m_e`` must equal its product, the token count of one exemplar.
    ``window`` is the (t, h, w) extent of a self-attention window.
    """

    l_ca: int = 2
    l_wsa: int = 3
    channels: int = 32
    heads: int = 4
    window: tuple[int, int, int] = (2, 2, 2)
    window_grid: tuple[int, int, int] = (4, 2, 2)
    m_e: int = 16
    mlp_ratio: int = 4
    head_agg: str = "sum"
    head_softplus: bool = True
    pe_mode: str = "flat"

    def __post_init__(self):
        if self.channels % self.heads != 0:
            raise ValueError(
                f"channels {self.channels} not divisible by {self.heads} heads"
            )
        if min(self.l_ca, self.l_wsa) < 0:
            raise ValueError("block counts must be non-negative")
        t, h, w = self.window
        tg, hg, wg = self.window_grid
        if t > tg or h > hg or w > wg:
            raise ValueError(
                f"window {self.window} exceeds per-window grid {self.window_grid}"
            )
        if self.m_e != tg * hg * wg:
            raise ValueError(
                f"m_e {self.m_e} != product of window grid {self.window_grid}"
            )
        if self.head_agg not in ("sum", "mean"):
            raise ValueError("head_agg must be 'sum' or 'mean'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["window_grid"] = list(self.window_grid)
        return d

    @staticmethod
    def from_dict(d: dict) -> "DecoderConfig":
        d = dict(d)
        d["window"] = tuple(d["window"])
        d["window_grid"] = tuple(d["window_grid"])
        return DecoderConfig(**d)


def _attn_names(prefix: str) -> list[str]:
    return [prefix + n for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")]


def param_names(cfg: DecoderConfig) -> list[str]:
    names = ["z0"]
    for i in range(cfg.l_ca):
        p = f"ca{i}."
        names += [p + "ln1.gain", p + "ln1.bias"]
        names += _attn_names(p + "sa.")
        names += [p + "ln2.gain", p + "ln2.bias"]
        names += _attn_names(p + "ca.")
        names += [p + "ln3.gain", p + "ln3.bias"]
        names += [p + "mlp.w1", p + "mlp.b1", p + "mlp.w2", p + "mlp.b2"]
    for j in range(cfg.l_wsa):
        p = f"wsa{j}."
        names += [p + "ln1.gain", p + "ln1.bias"]
        names += _attn_names(p + "attn.")
        names += [p + "ln2.gain", p + "ln2.bias"]
        names += [p + "mlp.w1", p + "mlp.b1", p + "mlp.w2", p + "mlp.b2"]
    names += ["final.gain", "final.bias", "head.w", "head.b"]
    return names


def init_params(cfg: DecoderConfig, seed: int = 0) -> dict[str, Tensor]:
    """Fresh trainable parameters: N(0, 0.02^2) weights, zero biases, unit gains."""
    rng = np.random.default_rng(seed)
    c, hid = cfg.channels, cfg.channels * cfg.mlp_ratio

    def w(*shape):
        return Tensor(rng.normal(0.0, 0.02, shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape, dtype=np.float32), requires_grad=True)

    params: dict[str, Tensor] = {}
    for name in param_names(cfg):
        leaf = name.split(".")[-1]
        if name == "z0":
            params[name] = w(cfg.m_e, c)
        elif leaf == "gain":
            params[name] = ones(c)
        elif leaf == "bias":
            params[name] = zeros(c)
        elif leaf in ("wq", "wk", "wv", "wo"):
            params[name] = w(c, c)
        elif leaf in ("bq", "bk", "bv", "bo"):
            params[name] = zeros(c)
        elif leaf == "w1":
            params[name] = w(c, hid)
        elif leaf == "b1":
            params[name] = zeros(hid)
        elif leaf == "w2":
            params[name] = w(hid, c)
        elif leaf == "b2":
            params[name] = zeros(c)
        elif name == "head.w":
            params[name] = w(c, 1)
        elif name == "head.b":
            # start the density near zero: the quiet-bin floor decays only as
            # fast as its own value, so a high floor never unlearns and every
            # extra temporal token inflates the count
            params[name] = Tensor(np.full(1, -4.0, dtype=np.float32), requires_grad=True)
        else:
            raise AssertionError(f"unhandled parameter {name}")
    return params


def _project(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Linear layer on the last axis of a [*, N, C] tensor."""
    lead = x.shape[:-1]
    flat = nm.reshape(x, (int(np.prod(lead)), x.shape[-1]))
    return nm.reshape(nm.add(nm.matmul(flat, w), b), lead + (w.shape[-1],))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, c = x.shape
    return nm.permute(nm.reshape(x, (b, n, heads, c // heads)), (0, 2, 1, 3))


def _mha(
    q_in: Tensor,
    kv_in: Tensor,
    params: dict[str, Tensor],
    prefix: str,
    heads: int,
    mask: Tensor | None = None,
) -> Tensor:
    """Multi-head attention, queries [B, Nq, C] against keys/values [B, Nk, C].

    ``mask`` is additive on the pre-softmax scores, broadcastable to
    [B, heads, Nq, Nk]; use large negative values to forbid positions.
    """
    b, nq, c = q_in.shape
    dh = c // heads
    q = _split_heads(_project(q_in, params[prefix + "wq"], params[prefix + "bq"]), heads)
    k = _split_heads(_project(kv_in, params[prefix + "wk"], params[prefix + "bk"]), heads)
    v = _split_heads(_project(kv_in, params[prefix + "wv"], params[prefix + "bv"]), heads)
    scores = nm.mul(nm.matmul(q, nm.transpose_last2(k)), 1.0 / np.sqrt(dh))
    if mask is not None:
        scores = nm.add(scores, mask)
    attn = nm.softmax_lastdim(scores)
    out = nm.permute(nm.matmul(attn, v), (0, 2, 1, 3))
    return _project(nm.reshape(out, (b, nq, c)), params[prefix + "wo"], params[prefix + "bo"])


def _mlp(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    h = nm.gelu(nm.add(nm.matmul(x, params[prefix + "w1"]), params[prefix + "b1"]))
    return nm.add(nm.matmul(h, params[prefix + "w2"]), params[prefix + "b2"])


def ca_block(
    params: dict[str, Tensor],
    block: int,
    z: Tensor,
    exemplars: list[Tensor],
    heads: int,
) -> Tensor:
    """One fusion block: self-attention, exemplar cross-attention, MLP.

    Cross-attention runs once per exemplar with the same weights and the
    outputs are averaged, so the result is invariant to exemplar order and
    duplicating an exemplar changes nothing.
    """
    if not exemplars:
        raise ValueError("ca_block needs at least one exemplar (z0 substitutes upstream)")
    m, c = z.shape
    for ex in exemplars:
        if ex.shape[-1] != c:
            raise ValueError(f"exemplar channels {ex.shape[-1]} != video channels {c}")
    p = f"ca{block}."

    h = nm.reshape(nm.layer_norm(z, params[p + "ln1.gain"], params[p + "ln1.bias"]), (1, m, c))
    z = nm.add(z, nm.reshape(_mha(h, h, params, p + "sa.", heads), (m, c)))

    hq = nm.reshape(nm.layer_norm(z, params[p + "ln2.gain"], params[p + "ln2.bias"]), (1, m, c))
    fused = None
    for ex in exemplars:
        kv = nm.reshape(ex, (1,) + ex.shape)
        o = _mha(hq, kv, params, p + "ca.", heads)
        fused = o if fused is None else nm.add(fused, o)
    fused = nm.mul(fused, 1.0 / len(exemplars))
    z = nm.add(z, nm.reshape(fused, (m, c)))

    h = nm.layer_norm(z, params[p + "ln3.gain"], params[p + "ln3.bias"])
    return nm.add(z, _mlp(h, params, p + "mlp."))


def _window_geometry(
    grid: tuple[int, int, int], window: tuple[int, int, int], layer_index: int
):
    eff = tuple(min(w, g) for w, g in zip(window, grid))
    shift = tuple(e // 2 for e in eff) if layer_index > 0 else (0, 0, 0)
    pad = tuple((-g) % e for g, e in zip(grid, eff))
    return eff, shift, pad


def _pad_mask(grid, eff, pad) -> np.ndarray | None:
    """Additive key mask [NW, 1, 1, WS] hiding zero-pad tokens, or None."""
    if not any(pad):
        return None
    t, h, w = grid
    real = np.zeros((t + pad[0], h + pad[1], w + pad[2]), dtype=np.float32)
    real[t:, :, :] = _NEG_INF
    real[:, h:, :] = _NEG_INF
    real[:, :, w:] = _NEG_INF
    nt, nh, nw = [s // e for s, e in zip(real.shape, eff)]
    part = real.reshape(nt, eff[0], nh, eff[1], nw, eff[2])
    part = part.transpose(0, 2, 4, 1, 3, 5).reshape(nt * nh * nw, 1, 1, -1)
    return part


def wsa_block(
    params: dict[str, Tensor],
    block: int,
    z: Tensor,
    grid: tuple[int, int, int],
    window: tuple[int, int, int],
    heads: int,
    layer_index: int,
) -> Tensor:
    """Window self-attention plus MLP, both pre-norm residual.

    Tokens attend only within their (t, h, w) window. Layers after the
    first roll the grid by half a window per axis before attending and roll
    back after, so stacked layers connect adjacent windows. Grids that do
    not divide evenly are zero-padded and the pad keys are masked out.
    """
    t, h, w = grid
    m, c = z.shape
    if m != t * h * w:
        raise ValueError(f"{m} tokens do not fill grid {grid}")
    eff, shift, pad = _window_geometry(grid, window, layer_index)
    p = f"wsa{block}."

    x = nm.layer_norm(z, params[p + "ln1.gain"], params[p + "ln1.bias"])
    x = nm.reshape(x, (t, h, w, c))
    if any(shift):
        x = nm.roll(x, tuple(-s for s in shift), (0, 1, 2))
    if any(pad):
        x = nm.pad(x, ((0, pad[0]), (0, pad[1]), (0, pad[2]), (0, 0)))
    tp, hp, wp = t + pad[0], h + pad[1], w + pad[2]
    nt, nh, nw = tp // eff[0], hp // eff[1], wp // eff[2]
    ws = eff[0] * eff[1] * eff[2]

    x = nm.reshape(x, (nt, eff[0], nh, eff[1], nw, eff[2], c))
    x = nm.permute(x, (0, 2, 4, 1, 3, 5, 6))
    x = nm.reshape(x, (nt * nh * nw, ws, c))

    mask_arr = _pad_mask(grid, eff, pad)
    mask = Tensor(mask_arr) if mask_arr is not None else None
    x = _mha(x, x, params, p + "attn.", heads, mask=mask)

    x = nm.reshape(x, (nt, nh, nw, eff[0], eff[1], eff[2], c))
    x = nm.permute(x, (0, 3, 1, 4, 2, 5, 6))
    x = nm.reshape(x, (tp, hp, wp, c))
    if any(pad):
        x = nm.crop(x, ((0, t), (0, h), (0, w), (0, c)))
    if any(shift):
        x = nm.roll(x, shift, (0, 1, 2))
    z = nm.add(z, nm.reshape(x, (m, c)))

    x = nm.layer_norm(z, params[p + "ln2.gain"], params[p + "ln2.bias"])
    return nm.add(z, _mlp(x, params, p + "mlp."))


def density_head(
    params: dict[str, Tensor],
    z: Tensor,
    grid: tuple[int, int, int],
    agg: str = "sum",
    softplus: bool = True,
) -> Tensor:
    """Project tokens to per-bin density: linear C->1, softplus, spatial sum.

    With zero weights and bias the output sits at softplus(0) * H'W' =
    0.693 * H'W' per bin, the untrained baseline. ``agg='mean'`` divides by
    the spatial cell count instead of summing; ``softplus=False`` leaves the
    projection raw (density may then go negative).
    """
    t, h, w = grid
    m, _ = z.shape
    if m != t * h * w:
        raise ValueError(f"{m} tokens do not fill grid {grid}")
    y = nm.add(nm.matmul(z, params["head.w"]), params["head.b"])
    if softplus:
        y = nm.softplus(y)
    y = nm.reshape(y, (t, h * w))
    y = nm.tsum(y, axis=1)
    if agg == "mean":
        y = nm.mul(y, 1.0 / (h * w))
    return y


def forward(
    params: dict[str, Tensor],
    cfg: DecoderConfig,
    seq: FeatureSequence,
    exemplars: tuple[ExemplarLatent, ...] = (),
) -> Tensor:
    """Full decoder pass; returns the differentiable length-T' density vector.

    ``seq`` must already be positional-encoded. An empty exemplar tuple
    selects the learned zero-shot latent z0.
    """
    if seq.channels != cfg.channels:
        raise ValueError(f"sequence has {seq.channels} channels, model {cfg.channels}")
    if exemplars:
        ex = [e.tokens for e in exemplars]
    else:
        ex = [params["z0"]]
    z = seq.tokens
    for i in range(cfg.l_ca):
        z = ca_block(params, i, z, ex, cfg.heads)
    for j in range(cfg.l_wsa):
        z = wsa_block(params, j, z, seq.grid, cfg.window, cfg.heads, layer_index=j)
    # final norm keeps the head input at unit scale: without it the residual
    # stream can grow until softplus saturates at zero and gradients vanish
    z = nm.layer_norm(z, params["final.gain"], params["final.bias"])
    return density_head(params, z, seq.grid, agg=cfg.head_agg, softplus=cfg.head_softplus)


ESCK_MAGIC = b"ESCK"
ESCK_VERSION = 1


def save_checkpoint(
    path,
    cfg: DecoderConfig,
    params: dict[str, Tensor],
    meta: dict | None = None,
    extra_blobs: dict[str, np.ndarray] | None = None,
) -> None:
    """Write a versioned checkpoint: JSON header plus named f32 blobs.

    ``meta`` holds resumable training state (epoch, optimizer step, rng
    state); ``extra_blobs`` holds optimizer moment arrays keyed by name.
    """
    blobs: list[tuple[str, np.ndarray]] = [(k, v.data) for k, v in sorted(params.items())]
    for k, v in sorted((extra_blobs or {}).items()):
        blobs.append(("extra." + k, np.asarray(v, dtype=np.float32)))
    header = {
        "config": cfg.to_dict(),
        "meta": meta or {},
        "blobs": [{"name": k, "shape": list(v.shape)} for k, v in blobs],
    }
    hbytes = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(ESCK_MAGIC)
        f.write(struct.pack("<II", ESCK_VERSION, len(hbytes)))
        f.write(hbytes)
        for _, v in blobs:
            f.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_checkpoint(
    path, expect_cfg: DecoderConfig | None = None
) -> tuple[DecoderConfig, dict[str, Tensor], dict, dict[str, np.ndarray]]:
    """Read a checkpoint; returns (config, params, meta, extra_blobs).

    When ``expect_cfg`` is given, any config difference is rejected rather
    than silently reinterpreting weights.
    """
    from pathlib import Path

    raw = Path(path).read_bytes()
    if raw[:4] != ESCK_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != ESCK_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version} unsupported")
    header = json.loads(raw[12 : 12 + hlen].decode())
    cfg = DecoderConfig.from_dict(header["config"])
    if expect_cfg is not None and cfg != expect_cfg:
        raise CheckpointMismatchError(
            f"{path}: checkpoint config {cfg} does not match expected {expect_cfg}"
        )
    params: dict[str, Tensor] = {}
    extras: dict[str, np.ndarray] = {}
    offset = 12 + hlen
    for spec in header["blobs"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(shape)
        offset += 4 * n
        name = spec["name"]
        if name.startswith("extra."):
            extras[name[len("extra.") :]] = arr.copy()
        else:
            params[name] = Tensor(arr, requires_grad=True)
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} unread trailing bytes")
    return cfg, params, header.get("meta", {}), extras
