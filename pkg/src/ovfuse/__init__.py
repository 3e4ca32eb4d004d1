"""ovfuse: training-free fusion of multi-head segmentation outputs.

The engine consumes serialized per-prompt head outputs (SOV3 bundles),
runs instance aggregation, dual-head max fusion, presence gating, and
threshold-guarded argmax labeling, and scales to gigapixel rasters via
tiled processing. A brute-force reference pipeline and a synthetic
fixture generator back every numeric path with an independent oracle.
"""

from .errors import EngineError, FormatError, TruncatedError, ValidationError
from .fusion import (
    FusionConfig,
    aggregate_instances,
    apply_presence,
    category_maps,
    filter_instances,
    fuse_dual_head,
    label_argmax,
    reduce_prompts,
    run_pipeline,
)
from .interchange import (
    IGNORE_INDEX,
    CategoryRecord,
    ClassTable,
    HeadBundle,
    InstanceRecord,
    LabelMap,
    PromptRecord,
    read_bundle,
    read_bundle_file,
    read_label_map,
    read_label_map_file,
    write_bundle,
    write_bundle_file,
    write_label_map,
    write_label_map_file,
)
from .metrics import ConfusionMatrix, accumulate, iou_per_class, miou
from .tiling import TileGrid, TileManifest, plan_tiles, stitch_labels, stitch_probs

__version__ = "0.1.0"

__all__ = [
    "EngineError",
    "FormatError",
    "TruncatedError",
    "ValidationError",
    "FusionConfig",
    "aggregate_instances",
    "apply_presence",
    "category_maps",
    "filter_instances",
    "fuse_dual_head",
    "label_argmax",
    "reduce_prompts",
    "run_pipeline",
    "IGNORE_INDEX",
    "CategoryRecord",
    "ClassTable",
    "HeadBundle",
    "InstanceRecord",
    "LabelMap",
    "PromptRecord",
    "read_bundle",
    "read_bundle_file",
    "read_label_map",
    "read_label_map_file",
    "write_bundle",
    "write_bundle_file",
    "write_label_map",
    "write_label_map_file",
    "ConfusionMatrix",
    "accumulate",
    "iou_per_class",
    "miou",
    "TileGrid",
    "TileManifest",
    "plan_tiles",
    "stitch_labels",
    "stitch_probs",
    "__version__",
]
