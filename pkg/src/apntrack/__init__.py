"""apntrack: a two-stage anchor-proposal tracker built from scratch.

Adaptive anchors are regressed per feature-map point from a mid-level
correlation map, fused with a deep correlation map, then classified and
refined by dedicated heads. Includes its own reverse-mode autodiff,
a synthetic-scene trainer, an online tracker, and a one-pass-evaluation
harness.
"""

__version__ = "0.1.0"

from .autograd import Tensor
from .config import ModelConfig, RunConfig, load_config
from .geometry import CenterBox, CornerBox, GridGeometry
from .network import TrackNet
from .tracker import Tracker
from .train import Trainer

__all__ = [
    "Tensor", "ModelConfig", "RunConfig", "load_config",
    "CenterBox", "CornerBox", "GridGeometry",
    "TrackNet", "Tracker", "Trainer", "__version__",
]
