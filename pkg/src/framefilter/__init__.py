"""framefilter: multi-tenant video frame filtering for bandwidth-limited links.

One shared feature-extraction network runs per frame; many lightweight
binary classifiers tap its intermediate activations (optionally cropped),
their per-frame verdicts are vote-smoothed into events, and only matched
frames count against the uplink.  The package also carries the multiply-add
cost model, the event-level accuracy metrics, and a benchmark harness for
the shared-vs-discrete break-even analysis.
"""

from .base import BaseNetwork, FeatureMapSet, build_base, extract, rescale_crop, suggest_tap
from .errors import FrameFilterError, ValidationError
from .events import EventSegment, FrameMetadata, VotingPolicy, k_vote_smooth, segment_events
from .mc import (
    FrameVerdict,
    MicroclassifierSpec,
    evaluate_all,
    forward_ffod,
    forward_lbc,
    make_spec,
    validate_spec,
    wlbc_flush,
    wlbc_push,
)
from .metrics import (
    BitrateModel,
    RecallWeights,
    bandwidth_report,
    break_even,
    event_f1,
    event_recall,
    frame_precision,
    model_cost,
    multiply_adds,
)
from .tensor import (
    ConvParams,
    CropRect,
    FcParams,
    activation,
    conv2d,
    crop,
    depth_concat,
    fully_connected,
    separable_conv2d,
)
from .train import TrainConfig, loss_and_gradients, sgd_update, train

__version__ = "0.1.0"
