"""Goal-conditioned feed-forward policy over a 10x10 grid of pick/place targets.

Input is the state features concatenated with a D-dimensional goal embedding;
two tanh hidden layers feed a head of 10 column scores and 10 row scores, and a
cell's logit is its row score plus its column score. The 100 cell logits
therefore define a softmax that factors into independent row and column choices,
so every demonstration trains a whole row and a whole column. Trained by plain
SGD on mean cross-entropy against demonstrated cells.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from lca.world.types import DEFAULT_WORLD, OBJECTS, Action, Point, WorldConfig, WorldState


logger = logging.getLogger(__name__)

GRID = 10
N_CELLS = GRID * GRID
HEAD_DIM = 2 * GRID
BASE_FEATURES = 2 * len(OBJECTS) + len(OBJECTS) + (len(OBJECTS) + 1) + 2
FEATURE_DIM = BASE_FEATURES + 2 * GRID * len(OBJECTS)

Mode = Literal["greedy", "sample"]


class DimensionError(ValueError):
    """Policy input does not match the parameter shapes."""


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(0.1, gt=0.0)
    batch_size: int = Field(256, gt=0)
    gradient_steps_per_round: int = Field(100, gt=0)
    init_seed: int = 0
    hidden: int = Field(128, gt=0)


# --- state and action encoding --------------------------------------------


def features(state: WorldState, config: WorldConfig = DEFAULT_WORLD) -> Tuple[float, ...]:
    """Normalised positions, levels, held object and effector, then a coarse code of each position.

    The coarse code is one Gaussian bump per grid column and per grid row, one
    cell wide, so nearby positions share features and a cell can be read off linearly.
    """
    w = config.workspace
    levels = config.max_tower - 1
    out = []
    for x, y in state.positions:
        out.append(x / w)
        out.append(y / w)
    for obj in OBJECTS:
        out.append(state.level(obj) / levels)
    out.append(1.0 if state.holding is None else 0.0)
    for obj in OBJECTS:
        out.append(1.0 if state.holding is obj else 0.0)
    out.append(state.effector[0] / w)
    out.append(state.effector[1] / w)
    size = w / GRID
    centers = (np.arange(GRID) + 0.5) * size
    for x, y in state.positions:
        out.extend(np.exp(-0.5 * ((x - centers) / size) ** 2).tolist())
        out.extend(np.exp(-0.5 * ((y - centers) / size) ** 2).tolist())
    return tuple(out)


def cell_of(point: Point, config: WorldConfig = DEFAULT_WORLD) -> int:
    size = config.workspace / GRID
    col = min(max(int(point[0] // size), 0), GRID - 1)
    row = min(max(int(point[1] // size), 0), GRID - 1)
    return row * GRID + col


def cell_center(cell: int, config: WorldConfig = DEFAULT_WORLD) -> Action:
    if not 0 <= cell < N_CELLS:
        raise ValueError(f"cell index {cell} outside 0..{N_CELLS - 1}")
    size = config.workspace / GRID
    row, col = divmod(cell, GRID)
    return Action(target=((col + 0.5) * size, (row + 0.5) * size))


def action_cell(before: WorldState, action: Action, after: WorldState, config: WorldConfig = DEFAULT_WORLD) -> int:
    """Grid cell whose center reproduces the effect of an executed action.

    A pick is recorded at the picked object's cell and a snap at the support's
    cell, so that replaying the cell center lands within the pick tolerance.
    """
    if before.holding is None and after.holding is not None:
        return cell_of(before.positions[after.holding.index], config)
    if before.holding is not None and after.holding is None:
        return cell_of(after.positions[before.holding.index], config)
    return cell_of(action.target, config)


# --- parameters ------------------------------------------------------------


@dataclass
class PolicyParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray  # (HEAD_DIM, hidden): column scores, then row scores
    b3: np.ndarray
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def head_dim(self) -> int:
        return self.w3.shape[0]

    @property
    def n_cells(self) -> int:
        return (self.head_dim // 2) ** 2

    @property
    def goal_dim(self) -> int:
        return self.input_dim - FEATURE_DIM

    def arrays(self) -> Tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_params(seed: int, goal_dim: int = 128, hidden: int = 128) -> PolicyParams:
    rng = np.random.default_rng(seed)
    input_dim = FEATURE_DIM + goal_dim

    def layer(fan_out: int, fan_in: int, scale: float = 1.0) -> np.ndarray:
        return rng.normal(0.0, scale / np.sqrt(fan_in), size=(fan_out, fan_in))

    return PolicyParams(
        w1=layer(hidden, input_dim),
        b1=np.zeros(hidden),
        w2=layer(hidden, hidden),
        b2=np.zeros(hidden),
        w3=layer(HEAD_DIM, hidden, scale=0.1),
        b3=np.zeros(HEAD_DIM),
        seed=seed,
    )


def clone_params(params: PolicyParams) -> PolicyParams:
    return PolicyParams(*(a.copy() for a in params.arrays()), seed=params.seed)


# --- forward / backward ----------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def cell_logits(head: np.ndarray) -> np.ndarray:
    """Expand (..., 2*GRID) column and row scores into (..., GRID*GRID) cell logits, row-major."""
    cols, rows = head[..., :GRID], head[..., GRID:]
    grid = rows[..., :, None] + cols[..., None, :]
    return grid.reshape(*head.shape[:-1], GRID * GRID)


def _forward(params: PolicyParams, x: np.ndarray):
    z1 = x @ params.w1.T + params.b1
    a1 = np.tanh(z1)
    z2 = a1 @ params.w2.T + params.b2
    a2 = np.tanh(z2)
    head = a2 @ params.w3.T + params.b3
    return (x, a1, a2), cell_logits(head)


def _inputs(params: PolicyParams, feats: np.ndarray, goals: np.ndarray) -> np.ndarray:
    if feats.shape[-1] != FEATURE_DIM or goals.shape[-1] != params.goal_dim:
        raise DimensionError(
            f"expected {FEATURE_DIM} features and a {params.goal_dim}-dim goal, "
            f"got {feats.shape[-1]} and {goals.shape[-1]}"
        )
    return np.concatenate([feats, goals], axis=-1)


def policy_logits(params: PolicyParams, feats, goal: np.ndarray) -> np.ndarray:
    x = _inputs(params, np.asarray(feats, dtype=float), np.asarray(goal, dtype=float))
    return _forward(params, x)[1]


def select_cell(
    params: PolicyParams,
    feats,
    goal: np.ndarray,
    mode: Mode = "greedy",
    rng: Optional[np.random.Generator] = None,
) -> int:
    logits = policy_logits(params, feats, goal)
    if mode == "greedy":
        return int(np.argmax(logits))  # first maximum, i.e. lowest cell index
    if rng is None:
        raise ValueError("sampling mode needs a generator")
    cdf = np.cumsum(softmax(logits))
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)


def act(
    params: PolicyParams,
    feats,
    goal: np.ndarray,
    mode: Mode = "greedy",
    rng: Optional[np.random.Generator] = None,
    config: WorldConfig = DEFAULT_WORLD,
) -> Action:
    return cell_center(select_cell(params, feats, goal, mode, rng), config)


def random_cell_action(rng: np.random.Generator, config: WorldConfig = DEFAULT_WORLD) -> Action:
    """Centre of a uniformly drawn grid cell: a random action in the policy's own action space."""
    return cell_center(int(rng.integers(N_CELLS)), config)


@dataclass
class Batch:
    features: np.ndarray  # (B, FEATURE_DIM)
    goals: np.ndarray  # (B, D)
    cells: np.ndarray  # (B,) int

    def __len__(self) -> int:
        return len(self.cells)


def loss_and_grads(params: PolicyParams, batch: Batch) -> Tuple[float, Tuple[np.ndarray, ...]]:
    x = _inputs(params, batch.features, batch.goals)
    (x, a1, a2), logits = _forward(params, x)
    n = len(batch)
    probs = softmax(logits)
    picked = probs[np.arange(n), batch.cells]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))

    dlogits = probs.copy()
    dlogits[np.arange(n), batch.cells] -= 1.0
    dlogits /= n
    # each cell logit is row score + column score
    dgrid = dlogits.reshape(n, GRID, GRID)
    dhead = np.concatenate([dgrid.sum(axis=1), dgrid.sum(axis=2)], axis=1)
    dw3 = dhead.T @ a2
    db3 = dhead.sum(axis=0)
    dz2 = (dhead @ params.w3) * (1.0 - a2 * a2)
    dw2 = dz2.T @ a1
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ params.w2) * (1.0 - a1 * a1)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    return loss, (dw1, db1, dw2, db2, dw3, db3)


def bc_update(params: PolicyParams, batch: Batch, config: TrainConfig) -> Tuple[PolicyParams, float]:
    """One SGD step on mean cross-entropy; returns the new params and the pre-step loss."""
    if len(batch) == 0:
        raise ValueError("bc_update needs a non-empty batch")
    loss, grads = loss_and_grads(params, batch)
    lr = config.learning_rate
    updated = PolicyParams(*(p - lr * g for p, g in zip(params.arrays(), grads)), seed=params.seed)
    if not updated.is_finite():
        raise FloatingPointError(f"non-finite parameters after update (loss {loss:.4g}, lr {lr:g})")
    return updated, loss
