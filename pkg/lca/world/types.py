from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import FrozenSet, Iterator, Optional, Tuple, Union


class ObjectId(str, Enum):
    RED = "red"
    GREEN = "green"
    BLUE = "blue"

    @property
    def index(self) -> int:
        return _OBJECT_INDEX[self]

    @classmethod
    def from_color(cls, color: str) -> "ObjectId":
        return cls(color.strip().lower())


OBJECTS: Tuple[ObjectId, ...] = (ObjectId.RED, ObjectId.GREEN, ObjectId.BLUE)
_OBJECT_INDEX = {obj: i for i, obj in enumerate(OBJECTS)}

Point = Tuple[float, float]


class WorkspaceError(ValueError):
    """Raised when an action targets a point outside the workspace."""


@dataclass(frozen=True)
class WorldConfig:
    workspace: float = 20.0  # cm, square side
    footprint: float = 4.0  # cm, minimum Chebyshev separation of base objects
    tolerance: float = 2.0  # cm, pick radius and snap radius onto a floor-level object (Chebyshev)
    fine_tolerance: float = 0.05  # cm, snap radius onto a two-high tower
    cell: float = 2.0  # cm, action grid pitch; resets put objects at cell centres
    max_tower: int = 3

    def cell_centers(self) -> Tuple[float, ...]:
        count = int(round(self.workspace / self.cell))
        return tuple((i + 0.5) * self.cell for i in range(count))


DEFAULT_WORLD = WorldConfig()


def chebyshev(a: Point, b: Point) -> float:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


@dataclass(frozen=True, slots=True)
class Action:
    target: Point

    @property
    def x(self) -> float:
        return self.target[0]

    @property
    def y(self) -> float:
        return self.target[1]


@dataclass(frozen=True, slots=True)
class WorldState:
    """Immutable symbolic simulator state.

    Per-object tuples are indexed by ``ObjectId.index``. ``above[i]`` names the
    object directly underneath object ``i`` (None at floor level or when held).
    A held object's position tracks the effector.
    """

    positions: Tuple[Point, Point, Point]
    above: Tuple[Optional[ObjectId], Optional[ObjectId], Optional[ObjectId]]
    holding: Optional[ObjectId] = None
    effector: Point = (10.0, 10.0)
    step_count: int = 0

    def position(self, obj: ObjectId) -> Point:
        return self.positions[obj.index]

    def beneath(self, obj: ObjectId) -> Optional[ObjectId]:
        return self.above[obj.index]

    def covering(self, obj: ObjectId) -> Optional[ObjectId]:
        for other in OBJECTS:
            if self.above[other.index] is obj:
                return other
        return None

    def level(self, obj: ObjectId) -> int:
        depth = 0
        below = self.above[obj.index]
        while below is not None:
            depth += 1
            below = self.above[below.index]
        return depth

    def tower_height(self, obj: ObjectId) -> int:
        height = self.level(obj) + 1
        top = self.covering(obj)
        while top is not None:
            height += 1
            top = self.covering(top)
        return height

    def stack_tops(self) -> Iterator[ObjectId]:
        for obj in OBJECTS:
            if obj is not self.holding and self.covering(obj) is None:
                yield obj

    def base_objects(self) -> Iterator[ObjectId]:
        for obj in OBJECTS:
            if obj is not self.holding and self.above[obj.index] is None:
                yield obj

    def structure_key(self) -> tuple:
        return (self.positions, self.above, self.holding)


@dataclass(frozen=True, slots=True)
class SceneSnapshot:
    """Symbolic stand-in for a camera observation.

    ``frame_key`` identifies the state the snapshot was taken from; it feeds the
    oracle's noise model only and is ignored by equality.
    """

    grasping: Optional[ObjectId] = None
    on_top: FrozenSet[Tuple[ObjectId, ObjectId]] = frozenset()
    frame_key: int = field(default=0, compare=False, hash=False)

    def predicate_key(self) -> str:
        grasp = self.grasping.value if self.grasping is not None else "-"
        pairs = ",".join(sorted(f"{t.value}/{b.value}" for t, b in self.on_top))
        return f"{grasp}|{pairs}"


# --- tasks ---------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Grasp:
    obj: ObjectId

    @property
    def text(self) -> str:
        return f"Grasp the {self.obj.value} object"


@dataclass(frozen=True, slots=True)
class PairStack:
    top: ObjectId
    bottom: ObjectId

    def __post_init__(self) -> None:
        if self.top is self.bottom:
            raise ValueError(f"PairStack needs two distinct objects, got {self.top.value} twice")

    @property
    def text(self) -> str:
        return f"Stack the {self.top.value} object on top of the {self.bottom.value} object"


@dataclass(frozen=True, slots=True)
class TripleStack:
    @property
    def text(self) -> str:
        return "Stack all three objects"


Task = Union[Grasp, PairStack, TripleStack]

ALL_TASKS: Tuple[Task, ...] = (
    tuple(Grasp(obj) for obj in OBJECTS)
    + tuple(PairStack(top, bottom) for top in OBJECTS for bottom in OBJECTS if top is not bottom)
    + (TripleStack(),)
)


@dataclass(frozen=True)
class Layout:
    """A reachable predicate configuration: held object plus towers listed bottom to top."""

    holding: Optional[ObjectId]
    towers: Tuple[Tuple[ObjectId, ...], ...]
