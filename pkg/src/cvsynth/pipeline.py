"""End-to-end voxel completion model, SGD trainer, and ablation harness.

Semantic and geometric inputs are projected to a shared width and added,
downsampled by stride-2 residual blocks to the feature resolution,
expanded into rotated-view maps, optionally fused across views, then
decoded back to per-voxel class logits by mirrored transposed blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig
from .errors import DimensionError, ParameterError, TrainingError
from .fusion import CrossViewTransformer
from .layers import DownBlock, Linear, UpBlock
from .metrics import MetricReport, pooled_report
from .ops import cross_entropy
from .rng import SplitMix64
from .scenes import IGNORE_LABEL, SceneSample
from .synthesis import SynthesisLayer, make_synthesis_layer, view_conv_raw
from .tensor import Tensor


class CompletionModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = SplitMix64(config.seed).fork("model")
        c = config.channels

        self.sem_proj = Linear(config.num_classes, c, rng.fork("sem_proj"))
        self.geo_proj = Linear(1, c, rng.fork("geo_proj"))

        shapes = [config.volume_shape]
        for _ in range(config.downsample_stages):
            shapes.append(tuple(e // 2 for e in shapes[-1]))
        if shapes[-1] != config.feature_shape:
            raise DimensionError(
                f"stride-2 stages reach {shapes[-1]}, config wants {config.feature_shape}"
            )
        self.down = [
            DownBlock(c, c, shapes[i], rng.fork(f"down{i}"))
            for i in range(config.downsample_stages)
        ]

        self.synth: SynthesisLayer = make_synthesis_layer(
            config.kernel_size, config.rotations, c, c, rng.fork("synthesis")
        )

        self.cvtr: CrossViewTransformer | None = None
        n_maps = config.num_views
        if config.use_cvtr:
            self.cvtr = CrossViewTransformer(
                config.num_views, config.feature_shape, c, config.token_size,
                rng.fork("cvtr"), scheme=config.fusion,
                depth=config.encoder_depth, heads=config.attention_heads,
                scale=config.attn_scale,
            )
            n_maps = self.cvtr.num_outputs
        self._n_maps = n_maps

        dec_in = n_maps * c if config.aggregate == "concat" else c
        self.up = []
        widths = [dec_in] + [c] * config.downsample_stages
        for i in range(config.downsample_stages):
            target = shapes[config.downsample_stages - 1 - i]
            self.up.append(UpBlock(widths[i], c, target, rng.fork(f"up{i}")))
        head_in = dec_in if not self.up else c
        self.head = Linear(head_in, config.num_classes, rng.fork("head"))

    # -- forward -------------------------------------------------------------

    def forward_logits(self, sample: SceneSample) -> np.ndarray:
        cfg = self.config
        if sample.volume_shape != cfg.volume_shape:
            raise DimensionError(
                f"sample shape {sample.volume_shape} != config {cfg.volume_shape}"
            )
        if sample.num_classes != cfg.num_classes:
            raise DimensionError(
                f"sample classes {sample.num_classes} != config {cfg.num_classes}"
            )
        x = self.sem_proj.forward(sample.semantics.data) + \
            self.geo_proj.forward(sample.geometry.data)
        for block in self.down:
            x = block.forward(x)

        views = []
        self._view_backwards = []
        for r in range(self.synth.num_views):
            out, back = view_conv_raw(x, self.synth, r)
            views.append(out)
            self._view_backwards.append(back)

        if self.cvtr is not None:
            views = self.cvtr.forward(views)

        if cfg.aggregate == "concat":
            agg = np.concatenate(views, axis=-1)
        else:
            agg = views[0].copy()
            for v in views[1:]:
                agg += v

        y = agg
        for block in self.up:
            y = block.forward(y)
        return self.head.forward(y)

    def backward_from_logits(self, dlogits: np.ndarray, sample: SceneSample) -> None:
        cfg = self.config
        d = self.head.backward(dlogits)
        for block in reversed(self.up):
            d = block.backward(d)

        if cfg.aggregate == "concat":
            c = cfg.channels
            dmaps = [d[..., i * c:(i + 1) * c] for i in range(self._n_maps)]
        else:
            dmaps = [d] * self._n_maps

        if self.cvtr is not None:
            dviews = self.cvtr.backward(dmaps)
        else:
            dviews = dmaps

        dx = None
        for back, dv in zip(self._view_backwards, dviews):
            contrib = back(dv)
            dx = contrib if dx is None else dx + contrib

        for block in reversed(self.down):
            dx = block.backward(dx)
        sample.semantics.add_grad(self.sem_proj.backward(dx))
        sample.geometry.add_grad(self.geo_proj.backward(dx))

    def loss(self, sample: SceneSample) -> Tensor:
        logits = self.forward_logits(sample)
        flat = Tensor(logits.reshape(-1, self.config.num_classes), check=False)
        ce = cross_entropy(flat, sample.loss_labels(), ignore=IGNORE_LABEL)
        out = Tensor(ce.data, check=False)

        def vjp(dout: np.ndarray) -> None:
            flat.zero_grad()
            ce.vjp(dout)
            self.backward_from_logits(flat.grad.reshape(logits.shape), sample)

        out.vjp = vjp
        return out

    def predict(self, sample: SceneSample) -> np.ndarray:
        return np.argmax(self.forward_logits(sample), axis=-1)

    def params(self) -> list[tuple[str, Tensor]]:
        out = [(f"sem_proj.{n}", t) for n, t in self.sem_proj.params()]
        out += [(f"geo_proj.{n}", t) for n, t in self.geo_proj.params()]
        for i, block in enumerate(self.down):
            out += [(f"down{i}.{n}", t) for n, t in block.params()]
        out += [(f"synthesis.{n}", t) for n, t in self.synth.params()]
        if self.cvtr is not None:
            out += [(f"cvtr.{n}", t) for n, t in self.cvtr.params()]
        for i, block in enumerate(self.up):
            out += [(f"up{i}.{n}", t) for n, t in block.params()]
        out += [(f"head.{n}", t) for n, t in self.head.params()]
        return out


class Sgd:
    """SGD with classical momentum and optional weight decay."""

    def __init__(self, params: list[tuple[str, Tensor]], lr: float,
                 momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity = [np.zeros_like(t.data) for _, t in params]

    def zero_grad(self) -> None:
        for _, t in self.params:
            t.zero_grad()

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        for (_, t), vel in zip(self.params, self._velocity):
            grad = t.grad if t.grad is not None else 0.0
            if self.weight_decay:
                grad = grad + self.weight_decay * t.data
            vel *= self.momentum
            vel += grad
            t.data -= lr * vel


@dataclass
class TrainResult:
    log: list[dict] = field(default_factory=list)
    final_loss: float = float("nan")
    report: MetricReport | None = None
    model: CompletionModel | None = None


def train_toy(dataset: list[SceneSample], config: ModelConfig, steps: int,
              lr: float, momentum: float = 0.9, weight_decay: float = 0.0,
              poly_power: float = 0.0) -> TrainResult:
    """Plain SGD on voxel-wise cross-entropy; deterministic given the seed.

    ``poly_power > 0`` enables a polynomial decay of the learning rate.
    """
    if not dataset:
        raise TrainingError("empty dataset")
    model = CompletionModel(config)
    opt = Sgd(model.params(), lr, momentum=momentum, weight_decay=weight_decay)
    result = TrainResult(model=model)
    one = np.asarray(1.0)
    for step in range(steps):
        sample = dataset[step % len(dataset)]
        opt.zero_grad()
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                loss = model.loss(sample)
                value = float(loss.data)
        except ParameterError as exc:
            raise TrainingError(f"non-finite loss at step {step}") from exc
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss at step {step}")
        loss.vjp(one)
        cur_lr = lr * (1.0 - step / steps) ** poly_power if poly_power > 0 else lr
        opt.step(cur_lr)
        result.log.append({"step": step, "loss": value, "lr": cur_lr})
    result.final_loss = result.log[-1]["loss"] if result.log else float("nan")
    result.report = evaluate(model, dataset)
    return result


def evaluate(model: CompletionModel, samples: list[SceneSample]) -> MetricReport:
    return pooled_report([(model.predict(s), s) for s in samples], model.config.num_classes)


# -- ablation grids ----------------------------------------------------------

def _component_variants(config: ModelConfig) -> list[tuple[str, ModelConfig]]:
    d = config.to_dict()
    baseline = dict(d, rotations=[list(config.rotations[0])], use_cvtr=False,
                    aggregate="sum")
    mvfs_only = dict(d, use_cvtr=False, aggregate="concat")
    full = dict(d, use_cvtr=True)
    return [
        ("components/baseline", ModelConfig.from_dict(baseline)),
        ("components/mvfs", ModelConfig.from_dict(mvfs_only)),
        ("components/mvfs+cvtr", ModelConfig.from_dict(full)),
    ]


def _view_variants(config: ModelConfig) -> list[tuple[str, ModelConfig]]:
    out = []
    for count in range(1, config.num_views + 1):
        subset = [list(r) for r in config.rotations[:count]]
        label = "+".join(f"{r[0]:g}" for r in subset)
        cfg = ModelConfig.from_dict(dict(config.to_dict(), rotations=subset))
        out.append((f"views/{label}", cfg))
    return out


def _fusion_variants(config: ModelConfig) -> list[tuple[str, ModelConfig]]:
    out = []
    for scheme in ("all", "all-for-one-features", "all-for-one-tokens"):
        cfg = ModelConfig.from_dict(dict(config.to_dict(), fusion=scheme, use_cvtr=True))
        out.append((f"fusion/{scheme}", cfg))
    return out


@dataclass
class AblationRow:
    variant: str
    report: MetricReport
    final_loss: float
    predictions: list[np.ndarray] = field(default_factory=list)


def ablate(config: ModelConfig, train_scenes: list[SceneSample],
           eval_scenes: list[SceneSample], steps: int = 150, lr: float = 0.05,
           momentum: float = 0.9, grids: tuple[str, ...] = ("components", "views", "fusion"),
           keep_predictions: bool = False) -> list[AblationRow]:
    """Train and score every variant in the requested grids. Scores are
    reported on the held-out scenes; no ordering among variants is implied."""
    variants: list[tuple[str, ModelConfig]] = []
    if "components" in grids:
        variants += _component_variants(config)
    if "views" in grids:
        variants += _view_variants(config)
    if "fusion" in grids:
        variants += _fusion_variants(config)
    rows = []
    for name, cfg in variants:
        trained = train_toy(train_scenes, cfg, steps=steps, lr=lr, momentum=momentum)
        report = evaluate(trained.model, eval_scenes)
        preds = [trained.model.predict(s) for s in eval_scenes] if keep_predictions else []
        rows.append(AblationRow(variant=name, report=report,
                                final_loss=trained.final_loss, predictions=preds))
    return rows
