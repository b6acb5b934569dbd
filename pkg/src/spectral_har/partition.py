"""Body-part partition: whole body, four median quadrants, lower body.

Part ids:

* 0 whole body (all points)
* 1 lower-left   (lateral <  median, vertical <  median)
* 2 lower-right  (lateral >= median, vertical <  median)
* 3 upper-left   (lateral <  median, vertical >= median)
* 4 upper-right  (lateral >= median, vertical >= median)
* 5 lower body   (vertical < median)

Medians are the standard midpoint median of the frame's lateral and
vertical coordinates (average of the two middle values for even counts);
coordinates equal to a median go to the >= side. Parts 1-4 are disjoint
and cover the frame; parts may be empty.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyFrameError
from .ingest import FrameCloud

PART_IDS = (0, 1, 2, 3, 4, 5)
PART_WHOLE_BODY = 0
PART_LOWER_BODY = 5
QUADRANT_PARTS = (1, 2, 3, 4)


@dataclass
class PartSet:
    """Map part id -> FrameCloud subset of one frame."""

    parts: dict[int, FrameCloud]

    def __getitem__(self, part_id: int) -> FrameCloud:
        return self.parts[part_id]


def partition_frame(frame: FrameCloud) -> PartSet:
    """Split a frame into the six body parts."""
    pts = frame.points
    if pts.shape[0] == 0:
        raise EmptyFrameError(
            f"frame {frame.frame_index} is empty; cannot partition"
        )
    lat = pts[:, 0]
    vert = pts[:, 1]
    m_lat = float(np.median(lat))
    m_vert = float(np.median(vert))
    left = lat < m_lat
    low = vert < m_vert
    masks = {
        1: left & low,
        2: ~left & low,
        3: left & ~low,
        4: ~left & ~low,
        5: low,
    }
    parts = {0: replace(frame, points=pts.copy())}
    for pid, mask in masks.items():
        parts[pid] = replace(frame, points=pts[mask])
    return PartSet(parts=parts)
