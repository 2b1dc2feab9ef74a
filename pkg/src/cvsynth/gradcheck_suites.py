"""Curated gradient-check batteries for the CLI and the test suite."""

from __future__ import annotations

import numpy as np

from .config import ModelConfig
from .errors import ParameterError
from .fusion import FusionBlock, ViewEncoder, cross_view_fusion, encode_view
from .gradcheck import GradCheckReport, grad_check
from .ops import cross_entropy, matmul, softmax
from .pipeline import CompletionModel
from .rng import SplitMix64
from .scenes import generate_scene
from .synthesis import FeatureVolume, SynthesisLayer, interpolate, synth_view_conv
from .geometry import rotated_kernels
from .tensor import Tensor

MODULES = ("all", "tensor", "mvfs", "cvtr", "pipeline")

# Finite differences at epsilon=1e-5 are invalid where a relu input sits
# within the perturbation's reach of zero: the quotient averages both
# slopes. A single +-1e-5 entry perturbation moves any pre-activation by
# at most a few 1e-5 (input magnitudes are O(1)), so clearing kinks to
# 3e-4, with 1e-4 as the accepted minimum, keeps every probe one-sided.
# The suites nudge relu biases until pre-activations clear that margin.
_KINK_MARGIN = 3e-4


def _encoder_relu_sites(encoder):
    return [(block._pre_act, block.ff1.bias) for block in encoder.blocks]


def _model_relu_sites(model: CompletionModel):
    sites = [(block._pre, block.conv.bias) for block in model.down + model.up]
    if model.cvtr is not None:
        for enc in model.cvtr.encoders:
            sites += _encoder_relu_sites(enc)
    return sites


def _gap_shift(values: np.ndarray, margin: float) -> tuple[float, float]:
    """Bias shift that centers the channel's zero in the widest empty gap
    of its pre-activation values, and the clearance that shift achieves."""
    window = 8.0 * margin
    near = np.unique(values[(values > -window) & (values < window)])
    points = np.concatenate([[-window], near, [window]])
    gaps = np.diff(points)
    i = int(np.argmax(gaps))
    center = 0.5 * (points[i] + points[i + 1])
    return -center, 0.5 * float(gaps[i])


def clear_relu_kinks(forward, sites, margin: float = _KINK_MARGIN,
                     rounds: int = 30) -> None:
    """Shift relu biases until no cached pre-activation lies within
    ``margin`` of zero. ``forward`` refreshes the caches; ``sites`` maps
    each cached pre-activation array to the bias that shifts it.

    Scenes have large constant regions, so pre-activations repeat; the
    shift therefore targets the widest gap between distinct values rather
    than stepping blindly. A channel whose best achievable clearance is
    below margin/4 (values denser than finite differences can tolerate)
    raises."""
    floor = margin / 4.0
    for _ in range(rounds):
        forward()
        moved = False
        for pre_act, bias in sites():
            flat = pre_act.reshape(-1, pre_act.shape[-1])
            for channel in range(flat.shape[1]):
                values = flat[:, channel]
                if np.min(np.abs(values)) >= margin:
                    continue
                shift, clearance = _gap_shift(values, margin)
                if clearance < floor:
                    raise ParameterError(
                        "relu pre-activations too dense near zero for a "
                        f"reliable finite-difference probe (clearance {clearance:.1e})"
                    )
                bias.data[channel] += shift
                moved = True
        if not moved:
            return
    raise ParameterError("could not move relu pre-activations off their kinks")


def _tensor_suite(seed: int) -> list[GradCheckReport]:
    rng = SplitMix64(seed).fork("tensor-suite")
    a = Tensor(rng.normal(size=(3, 3)))
    b = Tensor(rng.normal(size=(3, 3)))
    x = Tensor(rng.normal(size=(5,)))
    logits = Tensor(rng.normal(size=(6, 4)))
    labels = rng.integers(0, 4, size=6)
    return [
        grad_check("matmul", lambda: matmul(a, b), [a, b], seed=seed),
        grad_check("softmax", lambda: softmax(x, axis=0), [x], seed=seed, tolerance=1e-6),
        grad_check("cross_entropy", lambda: cross_entropy(logits, labels),
                   [logits], seed=seed),
    ]


def _mvfs_suite(seed: int) -> list[GradCheckReport]:
    rng = SplitMix64(seed).fork("mvfs-suite")
    vol = FeatureVolume(Tensor(rng.normal(size=(3, 3, 3, 2))))
    reports = [
        grad_check("interpolate",
                   lambda: interpolate(vol, (0.25, 0.5, 0.75)),
                   [vol.tensor], seed=seed),
    ]
    kernels = rotated_kernels(3, [(45.0, 0.0, 0.0)])
    weights = [Tensor(rng.normal(size=(27, 2, 2), scale=0.3))]
    layer = SynthesisLayer(kernels=kernels, weights=weights)
    vol2 = FeatureVolume(Tensor(rng.normal(size=(4, 4, 4, 2))))
    reports.append(grad_check(
        "synth_view_conv/features",
        lambda: synth_view_conv(vol2, layer, 0).tensor,
        [vol2.tensor], seed=seed,
    ))
    reports.append(grad_check(
        "synth_view_conv/weights",
        lambda: synth_view_conv(vol2, layer, 0).tensor,
        [layer.weights[0]], seed=seed,
    ))
    return reports


def _cvtr_suite(seed: int) -> list[GradCheckReport]:
    rng = SplitMix64(seed).fork("cvtr-suite")
    shape = (2, 1, 2)
    channels = 3
    encoder = ViewEncoder(shape, channels, token_size=2, rng=rng.fork("enc"))
    vol = FeatureVolume(Tensor(rng.normal(size=shape + (channels,))))
    clear_relu_kinks(lambda: encoder.forward(vol.tensor.data),
                     lambda: _encoder_relu_sites(encoder))
    enc_inputs = [vol.tensor] + [t for _, t in encoder.params()]
    reports = [grad_check(
        "encode_view",
        lambda: encode_view(vol, encoder),
        enc_inputs, seed=seed,
    )]
    block = FusionBlock(channels, rng.fork("fusion"))
    # randomize the zero-initialized output projection so its grads are exercised
    block.out_proj.weight.data[...] = rng.normal(size=(channels, channels), scale=0.3)
    context = Tensor(rng.normal(size=(4, channels)))
    vol2 = FeatureVolume(Tensor(rng.normal(size=shape + (channels,))))
    fus_inputs = [vol2.tensor, context] + [t for _, t in block.params()]
    reports.append(grad_check(
        "cross_view_fusion",
        lambda: cross_view_fusion(vol2, context, block).tensor,
        fus_inputs, seed=seed,
    ))
    return reports


def _pipeline_suite(seed: int, config: ModelConfig | None) -> list[GradCheckReport]:
    if config is None:
        config = ModelConfig()
    cfg = ModelConfig.from_dict(dict(config.to_dict(), seed=seed, channels=min(config.channels, 8)))
    model = CompletionModel(cfg)
    # unsaturated signed distances keep voxel inputs distinct, so relu
    # pre-activations spread out and the kink-clearing shifts have room
    sample = generate_scene(seed, cfg.volume_shape, num_classes=cfg.num_classes,
                            box_count=2, truncation=float(max(cfg.volume_shape)))
    clear_relu_kinks(lambda: model.forward_logits(sample),
                     lambda: _model_relu_sites(model))
    inputs = [sample.semantics, sample.geometry] + [t for _, t in model.params()]
    report = grad_check(
        "model_forward",
        lambda: model.loss(sample),
        inputs, seed=seed, max_entries_per_input=6,
    )
    return [report]


def run(config: ModelConfig | None, module: str, seed: int) -> list[GradCheckReport]:
    if module not in MODULES:
        raise ParameterError(f"unknown gradcheck module {module!r}")
    reports: list[GradCheckReport] = []
    if module in ("all", "tensor"):
        reports += _tensor_suite(seed)
    if module in ("all", "mvfs"):
        reports += _mvfs_suite(seed)
    if module in ("all", "cvtr"):
        reports += _cvtr_suite(seed)
    if module in ("all", "pipeline"):
        reports += _pipeline_suite(seed, config)
    return reports
