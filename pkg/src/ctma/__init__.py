"""Bi-temporal change detection with pseudo-video temporal modeling and
coarse-mask-guided spatial encoding."""

__version__ = "0.1.0"

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, parse_config, parse_config_text, snapshot
from .data import DatasetLayout, augment_sample, load_dataset, write_pair
from .errors import (
    BadFrameCountError,
    BadShapeError,
    BadThresholdError,
    CheckpointVersionError,
    ConfigError,
    CorruptImageError,
    CoverageGapError,
    CTMAError,
    DataError,
    EmptyHistoryError,
    LayoutError,
    MissingFileError,
    NonBinaryError,
    NonFiniteLossError,
    ShapeMismatchError,
    TooSmallError,
    ValueRangeError,
)
from .losses import LossConfig, total_loss, weighted_bce, weighted_bce_from_logits
from .metrics import ConfusionCounts, MetricsReport, accumulate_confusion, compute_metrics
from .model import STANDARD_ABLATION_ROWS, AblationFlags, CTMANet, ModelOutput
from .pseudo_video import (
    BiTemporalPair,
    PseudoVideo,
    interpolate_batch,
    interpolate_pair,
    validate_pair,
)
from .spatial_encoder import (
    Backbone,
    FusionConfig,
    GlobalDecoder,
    GlobalLocalEncoder,
    MaskBranch,
    MotionInjection,
    SEConfig,
    binarize,
    fuse_probability,
    residual_difference,
)
from .synthetic import SynthParams, generate_synthetic
from .temporal_encoder import TEConfig, TemporalAttention, TemporalEncoder, threshold_mask
from .tiling import TileIndex, TileSpec, stitch_predictions, tile_image
from .train import (
    AblationResult,
    EpochRecord,
    RunHistory,
    ScheduleConfig,
    evaluate,
    format_ablation_table,
    lr_at,
    predict_probability,
    run_ablation,
    select_best,
    train_loop,
)
