"""Box geometry and the shared detection / ground-truth value types.

Coordinates are continuous 64-bit reals in pixel units, origin top-left,
x to the right, y down.  The max corner is exclusive for area purposes
(width = x_max - x_min).  All types here are immutable values and all
operations are pure functions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .taxonomy import ClassCode

PROB_SUM_SLACK = 1e-9

ClassDistribution = dict[ClassCode, float]


class Source(enum.Enum):
    """How a per-frame box came to exist."""

    DETECTED = "detected"
    INTERPOLATED = "interpolated"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle in pixel coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"box min corner must not exceed max corner, got {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))


def area(box: BoundingBox) -> float:
    """Rectangle area in square pixels (zero for degenerate boxes)."""
    return box.width * box.height


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union in [0, 1]; 0 when the union has no area."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def lerp_box(a: BoundingBox, b: BoundingBox, t: float) -> BoundingBox:
    """Coordinate-wise linear interpolation between two boxes, t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation parameter must be in [0, 1], got {t}")
    s = 1.0 - t
    return BoundingBox(
        s * a.x_min + t * b.x_min,
        s * a.y_min + t * b.y_min,
        s * a.x_max + t * b.x_max,
        s * a.y_max + t * b.y_max,
    )


def _validate_distribution(dist: ClassDistribution) -> None:
    if not dist:
        raise ValueError("class distribution must not be empty")
    total = 0.0
    for code, prob in dist.items():
        if not isinstance(code, ClassCode):
            raise TypeError(f"distribution keys must be ClassCode, got {code!r}")
        if not 0.0 <= prob <= 1.0:
            raise ValueError(f"probability for {code} out of [0, 1]: {prob}")
        total += prob
    if total > 1.0 + PROB_SUM_SLACK:
        raise ValueError(f"distribution probabilities sum to {total} > 1")


def best_class(dist: ClassDistribution) -> tuple[ClassCode, float]:
    """Argmax of a class distribution; ties go to the canonically smaller code."""
    return min(dist.items(), key=lambda item: (-item[1], item[0].segments))


@dataclass(frozen=True)
class Detection:
    """A detector (or interpolator) output box on one frame.

    ``confidence`` is derived from the distribution when omitted and must
    equal its maximum probability when supplied.
    """

    frame_index: int
    box: BoundingBox
    class_distribution: ClassDistribution
    confidence: float | None = None
    associated_data: str | None = None
    temporary: bool | None = None
    source: Source = Source.DETECTED

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise ValueError(f"frame index must be non-negative, got {self.frame_index}")
        _validate_distribution(self.class_distribution)
        top = max(self.class_distribution.values())
        if self.confidence is None:
            object.__setattr__(self, "confidence", top)
        elif not math.isclose(self.confidence, top, rel_tol=0.0, abs_tol=PROB_SUM_SLACK):
            raise ValueError(
                f"confidence {self.confidence} != max distribution probability {top}"
            )

    @property
    def code(self) -> ClassCode:
        """The predicted class: argmax of the distribution."""
        return best_class(self.class_distribution)[0]


@dataclass(frozen=True)
class GroundTruthSign:
    """An annotated sign instance on one frame."""

    frame_index: int
    box: BoundingBox
    code: ClassCode
    associated_data: str | None = None
    temporary: bool = False

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise ValueError(f"frame index must be non-negative, got {self.frame_index}")


@dataclass(frozen=True)
class FrameAnnotations:
    """Ground truth for a single frame.

    ``annotated=True`` with no signs means the frame was inspected and is
    genuinely empty; this differs from a frame that was never annotated.
    """

    frame_index: int
    signs: tuple[GroundTruthSign, ...] = field(default_factory=tuple)
    annotated: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "signs", tuple(self.signs))
        for sign in self.signs:
            if sign.frame_index != self.frame_index:
                raise ValueError(
                    f"sign on frame {sign.frame_index} in annotations for frame {self.frame_index}"
                )
