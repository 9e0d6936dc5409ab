"""querytrack: joint detection-and-tracking with two query sets.

Detection boxes come from learned object queries, tracking boxes from
propagated object features (track queries) or baseline motion models;
IoU/KM box association carries identities forward, with track rebirth for
short occlusions. Ships with CLEAR-MOT/IDF1 evaluation, MOTChallenge I/O,
and a deterministic synthetic-scenario generator.
"""

__version__ = "0.1.0"

from .geometry import Box, CenterBox, giou, iou

__all__ = ["Box", "CenterBox", "iou", "giou", "__version__"]
