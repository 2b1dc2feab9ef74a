"""Cross-view token encoders and attention fusion.

Each view runs through its own transformer encoder that compresses the
volume into a small view token; the concatenated tokens serve as keys and
values when enhancing every view's features ("all-for-one"). Two
alternative fusion schemes used by the ablation harness are implemented
alongside: attention keyed on the concatenated feature maps themselves,
and a single self-attention pass over all views producing one fused map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .layers import EncoderLayer, Linear, attention_backward, attention_forward
from .rng import SplitMix64
from .synthesis import FeatureVolume
from .tensor import Tensor

FUSION_SCHEMES = ("all", "all-for-one-features", "all-for-one-tokens")


@dataclass(eq=False)
class ViewTokenSet:
    tokens: list[Tensor]          # R tensors of shape (M, C)
    concatenated: Tensor          # (M * R, C)


class ViewEncoder:
    """Compresses one synthetic-view map into an (M, C) view token.

    Pipeline: pointwise-project and flatten the volume, prepend the
    learnable view embedding, add the learnable position embedding, run
    the encoder layers, keep the first M rows.
    """

    def __init__(self, spatial_shape, channels: int, token_size: int,
                 rng: SplitMix64, depth: int = 1, heads: int = 1,
                 scale: bool = True):
        n_voxels = int(np.prod(spatial_shape))
        if token_size >= n_voxels:
            raise ParameterError(
                f"token size {token_size} must be smaller than {n_voxels} voxels"
            )
        self.spatial_shape = tuple(spatial_shape)
        self.channels = channels
        self.token_size = token_size
        self.view_embed = Tensor(rng.fork("view_embed").normal(
            size=(token_size, channels), scale=0.02))
        self.pos_embed = Tensor(rng.fork("pos_embed").normal(
            size=(token_size + n_voxels, channels), scale=0.02))
        self.input_proj = Linear(channels, channels, rng.fork("input_proj"))
        self.blocks = [
            EncoderLayer(channels, heads, rng.fork(f"block{i}"), scale=scale)
            for i in range(depth)
        ]

    def forward(self, vol: np.ndarray) -> np.ndarray:
        if vol.shape != self.spatial_shape + (self.channels,):
            raise DimensionError(
                f"encoder input {vol.shape} != expected "
                f"{self.spatial_shape + (self.channels,)}"
            )
        flat = vol.reshape(-1, self.channels)
        projected = self.input_proj.forward(flat)
        seq = np.concatenate([self.view_embed.data, projected], axis=0) + self.pos_embed.data
        for block in self.blocks:
            seq = block.forward(seq)
        return seq[: self.token_size]

    def backward(self, dtoken: np.ndarray) -> np.ndarray:
        m = self.token_size
        dseq = np.zeros((m + int(np.prod(self.spatial_shape)), self.channels))
        dseq[:m] = dtoken
        for block in reversed(self.blocks):
            dseq = block.backward(dseq)
        self.pos_embed.add_grad(dseq)
        self.view_embed.add_grad(dseq[:m])
        dflat = self.input_proj.backward(dseq[m:])
        return dflat.reshape(self.spatial_shape + (self.channels,))

    def params(self):
        out = [("view_embed", self.view_embed), ("pos_embed", self.pos_embed)]
        out += [(f"input_proj.{n}", t) for n, t in self.input_proj.params()]
        for i, block in enumerate(self.blocks):
            out += [(f"block{i}.{n}", t) for n, t in block.params()]
        return out


class FusionBlock:
    """Residual cross-attention: queries from one view's features, keys and
    values from a shared context sequence.

    The output projection starts at zero, so a freshly built block is the
    identity on its feature input.
    """

    def __init__(self, channels: int, rng: SplitMix64, heads: int = 1,
                 scale: bool = True):
        self.heads = heads
        self.scale = scale
        self.query_proj = Linear(channels, channels, rng.fork("query"))
        # key bias cancels in the softmax; see EncoderLayer
        self.key_proj = Linear(channels, channels, rng.fork("key"), bias=False)
        self.value_proj = Linear(channels, channels, rng.fork("value"))
        self.out_proj = Linear(channels, channels, zero_init=True)

    def forward(self, feats: np.ndarray, context: np.ndarray) -> np.ndarray:
        if feats.shape[-1] != context.shape[-1]:
            raise DimensionError(
                f"feature channels {feats.shape[-1]} != context channels {context.shape[-1]}"
            )
        q = self.query_proj.forward(feats)
        k = self.key_proj.forward(context)
        v = self.value_proj.forward(context)
        attended, self._cache = attention_forward(q, k, v, self.heads, self.scale)
        return feats + self.out_proj.forward(attended)

    def backward(self, dout: np.ndarray):
        dattended = self.out_proj.backward(dout)
        dq, dk, dv = attention_backward(self._cache, dattended)
        dfeats = dout + self.query_proj.backward(dq)
        dcontext = self.key_proj.backward(dk) + self.value_proj.backward(dv)
        return dfeats, dcontext

    def params(self):
        out = []
        for name, sub in (("query", self.query_proj), ("key", self.key_proj),
                          ("value", self.value_proj), ("out", self.out_proj)):
            out += [(f"{name}.{n}", t) for n, t in sub.params()]
        return out


class CrossViewTransformer:
    """Token encoders plus per-view fusion over all views' context."""

    def __init__(self, num_views: int, spatial_shape, channels: int,
                 token_size: int, rng: SplitMix64, scheme: str = "all-for-one-tokens",
                 depth: int = 1, heads: int = 1, scale: bool = True):
        if scheme not in FUSION_SCHEMES:
            raise ParameterError(f"unknown fusion scheme {scheme!r}")
        self.scheme = scheme
        self.num_views = num_views
        self.spatial_shape = tuple(spatial_shape)
        self.channels = channels
        self.encoders: list[ViewEncoder] = []
        self.fusions: list[FusionBlock] = []
        if scheme == "all-for-one-tokens":
            self.encoders = [
                ViewEncoder(spatial_shape, channels, token_size,
                            rng.fork(f"encoder{r}"), depth=depth, heads=heads,
                            scale=scale)
                for r in range(num_views)
            ]
        if scheme in ("all-for-one-tokens", "all-for-one-features"):
            self.fusions = [
                FusionBlock(channels, rng.fork(f"fusion{r}"), heads=heads, scale=scale)
                for r in range(num_views)
            ]
        else:  # "all": one self-attention over every view jointly
            self.fusions = [FusionBlock(channels, rng.fork("fusion"), heads=heads,
                                        scale=scale)]

    @property
    def num_outputs(self) -> int:
        return 1 if self.scheme == "all" else self.num_views

    # -- forward/backward on raw (H, W, D, C) arrays ------------------------

    def forward(self, views: list[np.ndarray]) -> list[np.ndarray]:
        if len(views) != self.num_views:
            raise DimensionError(f"expected {self.num_views} views, got {len(views)}")
        shape = views[0].shape
        n = int(np.prod(self.spatial_shape))
        flats = [v.reshape(n, self.channels) for v in views]
        if self.scheme == "all-for-one-tokens":
            self._token_list = [enc.forward(v) for enc, v in zip(self.encoders, views)]
            context = np.concatenate(self._token_list, axis=0)
            self._context = context
            return [
                fusion.forward(flat, context).reshape(shape)
                for fusion, flat in zip(self.fusions, flats)
            ]
        if self.scheme == "all-for-one-features":
            context = np.concatenate(flats, axis=0)
            self._context = context
            return [
                fusion.forward(flat, context).reshape(shape)
                for fusion, flat in zip(self.fusions, flats)
            ]
        # "all": joint self-attention, averaged back into a single map
        seq = np.concatenate(flats, axis=0)
        fused = self.fusions[0].forward(seq, seq)
        return [fused.reshape((self.num_views, n, self.channels)).mean(axis=0).reshape(shape)]

    def backward(self, dviews: list[np.ndarray]) -> list[np.ndarray]:
        n = int(np.prod(self.spatial_shape))
        shape = self.spatial_shape + (self.channels,)
        if self.scheme == "all":
            dfused = (dviews[0].reshape(n, self.channels) / self.num_views)
            dseq_out = np.tile(dfused, (self.num_views, 1))
            dseq, dctx = self.fusions[0].backward(dseq_out)
            dseq = dseq + dctx
            return [dseq[r * n:(r + 1) * n].reshape(shape) for r in range(self.num_views)]

        dflats = []
        dcontext = np.zeros_like(self._context)
        for fusion, dv in zip(self.fusions, dviews):
            dflat, dctx = fusion.backward(dv.reshape(n, self.channels))
            dflats.append(dflat)
            dcontext += dctx
        if self.scheme == "all-for-one-features":
            for r in range(self.num_views):
                dflats[r] = dflats[r] + dcontext[r * n:(r + 1) * n]
            return [d.reshape(shape) for d in dflats]
        # tokens: route context gradient back through each encoder
        m = self.encoders[0].token_size
        outs = []
        for r, (enc, dflat) in enumerate(zip(self.encoders, dflats)):
            dtoken = dcontext[r * m:(r + 1) * m]
            outs.append(dflat.reshape(shape) + enc.backward(dtoken))
        return outs

    def params(self):
        out = []
        for r, enc in enumerate(self.encoders):
            out += [(f"encoder{r}.{n}", t) for n, t in enc.params()]
        for r, fusion in enumerate(self.fusions):
            out += [(f"fusion{r}.{n}", t) for n, t in fusion.params()]
        return out


# -- public ops on FeatureVolume/Tensor --------------------------------------

def encode_view(volume: FeatureVolume, encoder: ViewEncoder) -> Tensor:
    """View token for one synthetic-view map."""
    token = encoder.forward(volume.tensor.data)
    out = Tensor(token, check=False)

    def vjp(dout: np.ndarray) -> None:
        volume.tensor.add_grad(encoder.backward(dout))

    out.vjp = vjp
    return out


def make_token_set(tokens: list[Tensor]) -> ViewTokenSet:
    concat = Tensor(np.concatenate([t.data for t in tokens], axis=0), check=False)
    return ViewTokenSet(tokens=tokens, concatenated=concat)


def cross_view_fusion(volume: FeatureVolume, context: Tensor,
                      block: FusionBlock) -> FeatureVolume:
    """Enhance one view's features by attending into the shared context."""
    shape = volume.tensor.shape
    n = int(np.prod(shape[:3]))
    fused = block.forward(volume.tensor.data.reshape(n, shape[3]), context.data)
    out = FeatureVolume(Tensor(fused.reshape(shape), check=False), role="augmented")

    def vjp(dout: np.ndarray) -> None:
        dfeats, dcontext = block.backward(dout.reshape(n, shape[3]))
        volume.tensor.add_grad(dfeats.reshape(shape))
        context.add_grad(dcontext)

    out.tensor.vjp = vjp
    return out


def cvtr_forward(views: list[FeatureVolume], cvtr: CrossViewTransformer) -> list[FeatureVolume]:
    """Run the full cross-view stage on a list of synthetic-view maps."""
    outs = cvtr.forward([v.tensor.data for v in views])
    wrapped = []
    for i, arr in enumerate(outs):
        fv = FeatureVolume(Tensor(arr, check=False), role="augmented")

        def vjp(dout: np.ndarray, _index=i) -> None:
            douts = [np.zeros_like(o) for o in outs]
            douts[_index] = dout
            dins = cvtr.backward(douts)
            for v, d in zip(views, dins):
                v.tensor.add_grad(d)

        fv.tensor.vjp = vjp
        wrapped.append(fv)
    return wrapped
