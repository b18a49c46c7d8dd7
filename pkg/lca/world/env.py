from __future__ import annotations

import hashlib
import itertools
import logging
from collections import deque
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from lca.world.types import (
    DEFAULT_WORLD,
    OBJECTS,
    Action,
    Grasp,
    Layout,
    ObjectId,
    PairStack,
    Point,
    SceneSnapshot,
    Task,
    TripleStack,
    WorkspaceError,
    WorldConfig,
    WorldState,
    chebyshev,
)


logger = logging.getLogger(__name__)


def _separated(points: Sequence[Point], min_gap: float) -> bool:
    for a, b in itertools.combinations(points, 2):
        if chebyshev(a, b) < min_gap:
            return False
    return True


def _sample_bases(rng: np.random.Generator, count: int, config: WorldConfig) -> List[Point]:
    # Rejection sampling over cell centres; about four draws in five are accepted.
    centers = config.cell_centers()
    while True:
        draws = rng.integers(len(centers), size=(count, 2))
        points = [(centers[i], centers[j]) for i, j in draws.tolist()]
        if _separated(points, config.footprint):
            return points


def reset(seed: int, config: WorldConfig = DEFAULT_WORLD) -> WorldState:
    rng = np.random.default_rng(seed)
    points = _sample_bases(rng, len(OBJECTS), config)
    center = config.workspace / 2.0
    return WorldState(
        positions=(points[0], points[1], points[2]),
        above=(None, None, None),
        holding=None,
        effector=(center, center),
        step_count=0,
    )


def in_workspace(target: Point, config: WorldConfig = DEFAULT_WORLD) -> bool:
    x, y = target
    return 0.0 <= x < config.workspace and 0.0 <= y < config.workspace


def snap_radius(state: WorldState, support: ObjectId, config: WorldConfig = DEFAULT_WORLD) -> float:
    """How close a place target must be to ``support`` for the held object to land on it."""
    return config.tolerance if state.level(support) == 0 else config.fine_tolerance


def _nearest_top(
    state: WorldState,
    target: Point,
    config: WorldConfig,
    *,
    exclude: Optional[ObjectId] = None,
    snapping: bool = False,
) -> Optional[ObjectId]:
    best: Optional[ObjectId] = None
    best_dist = config.tolerance
    for obj in state.stack_tops():
        if obj is exclude:
            continue
        radius = config.tolerance
        if snapping:
            if state.tower_height(obj) >= config.max_tower:
                continue
            radius = snap_radius(state, obj, config)
        dist = chebyshev(target, state.positions[obj.index])
        # strict comparison keeps the lowest object index on ties
        if dist <= radius and (best is None or dist < best_dist):
            best, best_dist = obj, dist
    return best


def step(state: WorldState, action: Action, config: WorldConfig = DEFAULT_WORLD) -> WorldState:
    """Apply one pick-or-place action; a pure function of (state, action).

    Snapping onto a floor-level object tolerates ``tolerance``; snapping onto a
    two-high tower needs ``fine_tolerance``. A target aligned with the tower meets
    it, a uniform random target almost never does.
    """
    if not in_workspace(action.target, config):
        raise WorkspaceError(
            f"action target {action.target} outside the {config.workspace:g}x{config.workspace:g} cm workspace"
        )
    target = (float(action.target[0]), float(action.target[1]))
    positions = list(state.positions)
    above = list(state.above)
    holding = state.holding

    if holding is None:
        picked = _nearest_top(state, target, config)
        if picked is not None:
            above[picked.index] = None
            positions[picked.index] = target
            holding = picked
    else:
        held = holding.index
        support = _nearest_top(state, target, config, exclude=holding, snapping=True)
        if support is not None:
            above[held] = support
            positions[held] = state.positions[support.index]
            holding = None
        elif all(
            chebyshev(target, state.positions[base.index]) >= config.footprint
            for base in state.base_objects()
        ):
            positions[held] = target
            holding = None
        else:
            # conflicting placement: the object stays in the gripper
            positions[held] = target

    return WorldState(
        positions=(positions[0], positions[1], positions[2]),
        above=(above[0], above[1], above[2]),
        holding=holding,
        effector=target,
        step_count=state.step_count + 1,
    )


def _frame_key(state: WorldState) -> int:
    digest = hashlib.blake2b(
        repr((state.positions, [o and o.value for o in state.above], state.holding and state.holding.value, state.effector)).encode(),
        digest_size=8,
    ).digest()
    return int.from_bytes(digest, "little")


def snapshot(state: WorldState) -> SceneSnapshot:
    pairs = frozenset(
        (obj, below) for obj, below in zip(OBJECTS, state.above) if below is not None
    )
    return SceneSnapshot(grasping=state.holding, on_top=pairs, frame_key=_frame_key(state))


def task_success(state: WorldState, task: Task) -> bool:
    if isinstance(task, Grasp):
        return state.holding is task.obj
    if isinstance(task, PairStack):
        return state.above[task.top.index] is task.bottom
    if isinstance(task, TripleStack):
        return any(state.level(obj) == 2 for obj in OBJECTS)
    raise TypeError(f"unknown task {task!r}")


def random_action(rng: np.random.Generator, config: WorldConfig = DEFAULT_WORLD) -> Action:
    x, y = rng.random(2) * config.workspace
    return Action(target=(float(x), float(y)))


# --- scripted expert -----------------------------------------------------


def _preference(task: Task) -> Tuple[ObjectId, ...]:
    if isinstance(task, Grasp):
        mentioned: Tuple[ObjectId, ...] = (task.obj,)
    elif isinstance(task, PairStack):
        mentioned = (task.top, task.bottom)
    else:
        # canonical tower: red on blue, then green on red
        mentioned = (ObjectId.RED, ObjectId.BLUE, ObjectId.GREEN)
    return mentioned + tuple(obj for obj in OBJECTS if obj not in mentioned)


def free_spot(state: WorldState, config: WorldConfig = DEFAULT_WORLD) -> Optional[Point]:
    """First grid-cell center where the held object could be put down on the floor."""
    centers = config.cell_centers()
    bases = [state.positions[b.index] for b in state.base_objects()]
    for y in centers:
        for x in centers:
            point = (x, y)
            if all(chebyshev(point, b) >= config.footprint for b in bases):
                return point
    return None


def _candidates(state: WorldState, order: Tuple[ObjectId, ...], config: WorldConfig) -> List[Action]:
    actions: List[Action] = []
    seen = set()
    for obj in order:
        if obj is state.holding:
            continue
        target = state.positions[obj.index]
        if target not in seen:
            seen.add(target)
            actions.append(Action(target=target))
    if state.holding is not None:
        spot = free_spot(state, config)
        if spot is not None and spot not in seen:
            actions.append(Action(target=spot))
    return actions


def scripted_expert(
    task: Task,
    state: WorldState,
    config: WorldConfig = DEFAULT_WORLD,
    max_depth: int = 8,
) -> List[Action]:
    """Shortest action sequence solving ``task`` from ``state``.

    Breadth-first over object-targeted actions. Candidates are expanded in the
    order the task mentions objects, so among equally short plans the one that
    follows the canonical decomposition is returned.
    """
    if task_success(state, task):
        return []
    order = _preference(task)
    frontier = deque([(state, ())])
    seen = {state.structure_key()}
    while frontier:
        current, plan = frontier.popleft()
        if len(plan) >= max_depth:
            continue
        for action in _candidates(current, order, config):
            nxt = step(current, action, config)
            key = nxt.structure_key()
            if key in seen:
                continue
            seen.add(key)
            if task_success(nxt, task):
                return [*plan, action]
            frontier.append((nxt, (*plan, action)))
    raise RuntimeError(f"no plan of at most {max_depth} actions solves {task.text!r}")


# --- reachable configurations ---------------------------------------------


def _tower_arrangements(objs: Tuple[ObjectId, ...]) -> List[Tuple[Tuple[ObjectId, ...], ...]]:
    if not objs:
        return [()]
    first, rest = objs[0], objs[1:]
    arrangements = []
    for sub in _tower_arrangements(rest):
        # first object alone, or inserted at any height of an existing tower
        arrangements.append(((first,),) + sub)
        for i, tower in enumerate(sub):
            for pos in range(len(tower) + 1):
                grown = tower[:pos] + (first,) + tower[pos:]
                arrangements.append(sub[:i] + (grown,) + sub[i + 1:])
    return arrangements


@lru_cache(maxsize=None)
def reachable_layouts() -> Tuple[Layout, ...]:
    layouts = []
    for holding in (None, *OBJECTS):
        free = tuple(obj for obj in OBJECTS if obj is not holding)
        for towers in _tower_arrangements(free):
            canonical = tuple(sorted(towers, key=lambda t: [o.index for o in t]))
            layouts.append(Layout(holding=holding, towers=canonical))
    return tuple(dict.fromkeys(layouts))


def realize_layout(layout: Layout, rng: np.random.Generator, config: WorldConfig = DEFAULT_WORLD) -> WorldState:
    bases = _sample_bases(rng, len(layout.towers), config)
    positions: dict = {}
    above: dict = {}
    for base, tower in zip(bases, layout.towers):
        below = None
        for obj in tower:
            positions[obj] = base
            above[obj] = below
            below = obj
    effector = tuple(float(v) for v in rng.uniform(0.0, config.workspace, size=2))
    if layout.holding is not None:
        positions[layout.holding] = effector
        above[layout.holding] = None
    return WorldState(
        positions=tuple(positions[o] for o in OBJECTS),
        above=tuple(above[o] for o in OBJECTS),
        holding=layout.holding,
        effector=effector,
        step_count=0,
    )


def random_reachable_state(rng: np.random.Generator, config: WorldConfig = DEFAULT_WORLD) -> WorldState:
    layouts = reachable_layouts()
    layout = layouts[int(rng.integers(len(layouts)))]
    return realize_layout(layout, rng, config)
