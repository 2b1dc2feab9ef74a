"""Rotated-kernel multi-view feature synthesis with cross-view attention
fusion for voxel scene completion, built on hand-written gradients."""

from . import _accel
from .config import ModelConfig, load_config, save_config
from .errors import (
    ConfigError,
    CvsynthError,
    DegenerateBatchError,
    DegenerateEvaluationError,
    DeterminismError,
    DimensionError,
    GenerationError,
    ParameterError,
    TrainingError,
)
from .fusion import (
    CrossViewTransformer,
    FusionBlock,
    ViewEncoder,
    ViewTokenSet,
    cross_view_fusion,
    cvtr_forward,
    encode_view,
    make_token_set,
)
from .geometry import (
    KernelLattice,
    RotatedKernel,
    RotationSpec,
    build_lattice,
    build_rotation,
    rotate_kernel,
    rotated_kernels,
)
from .gradcheck import GradCheckReport, grad_check
from .metrics import MetricReport, evaluate_labels, sc_metrics, ssc_metrics
from .ops import cross_entropy, matmul, softmax
from .pipeline import CompletionModel, Sgd, TrainResult, ablate, evaluate, train_toy
from .rng import SplitMix64
from .scenes import SceneSample, generate_scene, load_scene, save_scene
from .synthesis import (
    FeatureVolume,
    InterpolationPlan,
    SynthesisLayer,
    build_plan,
    interpolate,
    make_synthesis_layer,
    neighbor_positions,
    synth_forward,
    synth_view_conv,
)
from .tensor import Tensor
from .tensorfile import load_tensor, save_tensor

__version__ = "0.1.0"

backend_name = _accel.backend_name
