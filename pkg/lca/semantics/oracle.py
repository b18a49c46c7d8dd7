"""Caption-scoring oracle.

Captions and task labels are embedded as columns of a seeded orthonormal basis;
a scene embeds as the unnormalised sum of its true captions, so a caption's
dot product with a scene is ~1 when it holds and ~0 otherwise. Precision and
recall of the thresholded verdict are emulated by deterministic, hash-seeded
flips so that they can be dialled in directly.
"""
from __future__ import annotations

import hashlib
import logging
from functools import lru_cache
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from lca.semantics.captions import ALL_CAPTIONS, Caption, holds
from lca.world.env import random_reachable_state, reachable_layouts, realize_layout, snapshot
from lca.world.types import ALL_TASKS, SceneSnapshot


logger = logging.getLogger(__name__)


class OracleConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma: float = Field(0.8, gt=0.0, lt=1.0, description="Dot-product acceptance threshold")
    target_precision: float = Field(1.0, gt=0.0, le=1.0)
    target_recall: float = Field(1.0, gt=0.0, le=1.0)
    noise_seed: int = 0
    dimension: int = Field(128, ge=32, description="Embedding dimension D")
    embedding_seed: int = 0

    @property
    def noise_free(self) -> bool:
        return self.target_precision >= 1.0 and self.target_recall >= 1.0


DEFAULT_ORACLE = OracleConfig()

_BASIS_LABELS: Tuple[str, ...] = tuple(c.text for c in ALL_CAPTIONS) + tuple(t.text for t in ALL_TASKS)


@lru_cache(maxsize=8)
def _basis(dimension: int, seed: int) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dimension, len(_BASIS_LABELS))))
    q = q * np.sign(np.diag(r))
    vectors = {}
    for i, label in enumerate(_BASIS_LABELS):
        vec = np.ascontiguousarray(q[:, i])
        vec.flags.writeable = False
        vectors[label] = vec
    return vectors


@lru_cache(maxsize=8)
def _gram(dimension: int, seed: int) -> np.ndarray:
    basis = _basis(dimension, seed)
    mat = np.stack([basis[c.text] for c in ALL_CAPTIONS])
    return mat @ mat.T


_CAPTION_INDEX = {c: i for i, c in enumerate(ALL_CAPTIONS)}


def embed_text(caption: Caption, config: OracleConfig = DEFAULT_ORACLE) -> np.ndarray:
    return _basis(config.dimension, config.embedding_seed)[caption.text]


@lru_cache(maxsize=4096)
def _hashed_unit_vector(text: str, dimension: int, seed: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}|{text}".encode(), digest_size=16).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    vec = rng.standard_normal(dimension)
    vec /= np.linalg.norm(vec)
    vec.flags.writeable = False
    return vec


def embed_label(text: str, config: OracleConfig = DEFAULT_ORACLE) -> np.ndarray:
    """Embedding of any goal label: captions and task texts share the orthonormal basis."""
    basis = _basis(config.dimension, config.embedding_seed)
    vec = basis.get(text)
    if vec is not None:
        return vec
    return _hashed_unit_vector(text, config.dimension, config.embedding_seed)


def embed_scene(snapshot: SceneSnapshot, config: OracleConfig = DEFAULT_ORACLE) -> np.ndarray:
    vec = np.zeros(config.dimension)
    for caption in ALL_CAPTIONS:
        if holds(caption, snapshot):
            vec += embed_text(caption, config)
    return vec


def score(caption: Caption, snapshot: SceneSnapshot, config: OracleConfig = DEFAULT_ORACLE) -> float:
    gram = _gram(config.dimension, config.embedding_seed)
    row = gram[_CAPTION_INDEX[caption]]
    return float(sum(row[i] for i, c in enumerate(ALL_CAPTIONS) if holds(c, snapshot)))


@lru_cache(maxsize=1)
def caption_base_rate() -> float:
    """Fraction of (layout, caption) pairs that are true over all reachable layouts."""
    rng = np.random.default_rng(0)
    layouts = reachable_layouts()
    positives = 0
    for layout in layouts:
        snap = snapshot(realize_layout(layout, rng))
        positives += sum(holds(c, snap) for c in ALL_CAPTIONS)
    return positives / (len(layouts) * len(ALL_CAPTIONS))


@lru_cache(maxsize=64)
def false_positive_rate(target_precision: float, target_recall: float) -> float:
    # Approximation: assumes states are uniform over reachable layouts.
    base = caption_base_rate()
    rate = base * target_recall * (1.0 - target_precision) / (target_precision * (1.0 - base))
    if rate > 1.0:
        logger.warning(
            "precision %.3f unreachable at recall %.3f; clipping false-positive rate to 1",
            target_precision, target_recall,
        )
        rate = 1.0
    return rate


def _flip_draw(caption: Caption, snapshot: SceneSnapshot, noise_seed: int) -> float:
    key = f"{noise_seed}|{caption.text}|{snapshot.predicate_key()}|{snapshot.frame_key}"
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2.0**64


def verdict(caption: Caption, snapshot: SceneSnapshot, config: OracleConfig = DEFAULT_ORACLE) -> bool:
    positive = score(caption, snapshot, config) > config.gamma
    if config.noise_free:
        return positive
    draw = _flip_draw(caption, snapshot, config.noise_seed)
    if positive:
        return draw >= 1.0 - config.target_recall
    return draw < false_positive_rate(config.target_precision, config.target_recall)


def detect_achieved(
    snapshots: Sequence[SceneSnapshot],
    subgoals: Iterable[Caption],
    config: OracleConfig = DEFAULT_ORACLE,
) -> List[Tuple[int, Caption]]:
    """Earliest positive timestep for each subgoal, sorted by timestep."""
    if not snapshots:
        raise ValueError("detect_achieved needs at least one snapshot")
    found: List[Tuple[int, int, Caption]] = []
    for order, caption in enumerate(dict.fromkeys(subgoals)):
        for t, snap in enumerate(snapshots):
            if verdict(caption, snap, config):
                found.append((t, order, caption))
                break
    found.sort(key=lambda item: (item[0], item[1]))
    return [(t, caption) for t, _, caption in found]


class PrecisionRecall(BaseModel):
    precision: float
    recall: float
    true_positives: int
    false_positives: int
    false_negatives: int


def measure_precision_recall(config: OracleConfig, n_states: int, seed: int) -> PrecisionRecall:
    if n_states < 1:
        raise ValueError(f"n_states must be >= 1, got {n_states}")
    rng = np.random.default_rng(seed)
    tp = fp = fn = 0
    for _ in range(n_states):
        snap = snapshot(random_reachable_state(rng))
        for caption in ALL_CAPTIONS:
            truth = holds(caption, snap)
            said = verdict(caption, snap, config)
            if said and truth:
                tp += 1
            elif said:
                fp += 1
            elif truth:
                fn += 1
    result = PrecisionRecall(
        precision=tp / (tp + fp) if tp + fp else 1.0,
        recall=tp / (tp + fn) if tp + fn else 1.0,
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
    )
    logger.info(
        "oracle calibration over %d states: precision=%.3f recall=%.3f",
        n_states, result.precision, result.recall,
    )
    return result
