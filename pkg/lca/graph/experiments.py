"""Multi-round experiments built on ``run_round``."""
from __future__ import annotations

import logging
from typing import List, Optional, Sequence

from pydantic import BaseModel

from lca.buffers.harvest import relabel_offline
from lca.buffers.records import LifelongBuffer, TaskBuffer
from lca.config import EndpointConfig, load_endpoint_config
from lca.graph.artifacts import ArtifactWriter
from lca.graph.rollout import Controller
from lca.graph.trainer import Buffers, LearningCurve, RoundMetrics, RunConfig, conditioning_curriculum, run_round
from lca.llm.decomposer import resolve_curriculum
from lca.llm.schemas import Curriculum
from lca.policy.network import PolicyParams, init_params
from lca.world.sparseness import SparsenessEstimate, estimate_sparseness
from lca.world.types import Grasp, ObjectId, PairStack, Task, TripleStack


logger = logging.getLogger(__name__)

TRANSFER_TASKS: Sequence[Task] = (
    PairStack(ObjectId.RED, ObjectId.BLUE),
    PairStack(ObjectId.BLUE, ObjectId.GREEN),
    PairStack(ObjectId.GREEN, ObjectId.RED),
)
SCALING_TASKS: Sequence[Task] = (Grasp(ObjectId.RED), PairStack(ObjectId.RED, ObjectId.BLUE), TripleStack())


class TrainingSession:
    """Params, buffers and curve for one task, advanced a round at a time."""

    def __init__(
        self,
        task: Task,
        config: RunConfig,
        *,
        curriculum: Optional[Curriculum] = None,
        buffers: Optional[Buffers] = None,
        params: Optional[PolicyParams] = None,
        stage: int = 0,
        controller: Optional[Controller] = None,
        writer: Optional[ArtifactWriter] = None,
        endpoint: Optional[EndpointConfig] = None,
    ) -> None:
        self.task = task
        self.config = config
        self.curriculum = curriculum or resolve_curriculum(
            task, config.curriculum_source, endpoint or load_endpoint_config()
        )
        self.buffers = buffers or Buffers()
        self.params = params or init_params(config.train.init_seed, config.oracle.dimension, config.train.hidden)
        self.stage = stage
        self.controller = controller
        self.writer = writer
        self.curve = LearningCurve(task=task.text)
        self._sink = (
            writer.episode_sink(conditioning_curriculum(self.curriculum, config.use_subgoals))
            if writer is not None
            else None
        )

    @property
    def last(self) -> Optional[RoundMetrics]:
        return self.curve.rounds[-1] if self.curve.rounds else None

    def converged(self) -> bool:
        window = self.curve.rounds[-self.config.converge_rounds:]
        return len(window) == self.config.converge_rounds and all(
            m.eval_success >= self.config.converge_threshold for m in window
        )

    def run_round(self) -> RoundMetrics:
        round_index = len(self.curve.rounds)
        self.params, metrics = run_round(
            self.params, self.task, self.curriculum, self.buffers, self.config, round_index,
            previous=self.last, stage=self.stage, controller=self.controller, sink=self._sink,
        )
        self.curve.rounds.append(metrics)
        every = self.config.checkpoint_every
        if self.writer is not None and every and (round_index + 1) % every == 0:
            self.writer.save_checkpoint(self.params, f"policy_round{round_index:04d}.bin")
        return metrics


def run_curriculum_experiment(
    task: Task,
    config: RunConfig,
    use_subgoals: Optional[bool] = None,
    *,
    session: Optional[TrainingSession] = None,
    writer: Optional[ArtifactWriter] = None,
) -> LearningCurve:
    """Train until success holds for ``converge_rounds`` rounds or the round budget runs out."""
    if use_subgoals is not None and use_subgoals != config.use_subgoals:
        config = config.model_copy(update={"use_subgoals": use_subgoals})
    if session is None:
        session = TrainingSession(task, config, writer=writer)
    logger.info(
        "training %r with curriculum %s (subgoals %s)",
        task.text, session.curriculum.texts(), "on" if session.config.use_subgoals else "off",
    )
    budget = session.config.rounds_for(task)
    while len(session.curve.rounds) < budget:
        session.run_round()
        if session.converged():
            session.curve.converged = True
            break
    if not session.curve.converged:
        logger.warning("%r did not converge within %d rounds", task.text, budget)
    if session.writer is not None:
        session.writer.write_metrics(session.curve.rounds)
        session.writer.save_checkpoint(session.params)
    return session.curve


def steps_to_success_rate(curve: LearningCurve, threshold: float) -> Optional[int]:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    for m in curve.rounds:
        if m.eval_success >= threshold:
            return m.cum_steps
    return None


class TransferResult(BaseModel):
    task: str
    steps_to_50: Optional[int]
    initial_buffer: int
    lifelong_episodes: int
    curve: LearningCurve


def run_transfer_experiment(
    tasks: Sequence[Task],
    config: RunConfig,
    *,
    writer: Optional[ArtifactWriter] = None,
    endpoint: Optional[EndpointConfig] = None,
) -> List[TransferResult]:
    """Learn tasks in sequence; each starts from fresh weights and a buffer relabeled from all prior experience."""
    if len(tasks) < 2:
        raise ValueError("a transfer experiment needs at least two tasks")
    lifelong = LifelongBuffer()
    results = []
    for stage, task in enumerate(tasks):
        curriculum = resolve_curriculum(task, config.curriculum_source, endpoint or load_endpoint_config())
        seeded: TaskBuffer = relabel_offline(lifelong, curriculum, config.oracle)
        initial = len(seeded)
        session = TrainingSession(
            task, config,
            curriculum=curriculum,
            buffers=Buffers(lifelong=lifelong, task=seeded),
            stage=stage,
            writer=writer.scoped(f"task{stage}") if writer is not None else None,
        )
        curve = run_curriculum_experiment(task, config, session=session)
        steps = steps_to_success_rate(curve, 0.5)
        logger.info(
            "transfer %d/%d %r: started with %d trajectories, steps to 50%% = %s",
            stage + 1, len(tasks), task.text, initial, steps,
        )
        results.append(
            TransferResult(
                task=task.text,
                steps_to_50=steps,
                initial_buffer=initial,
                lifelong_episodes=len(lifelong),
                curve=curve,
            )
        )
    if writer is not None:
        writer.write_csv("transfer.csv", ["task", "steps_to_50"], ([r.task, _blank(r.steps_to_50)] for r in results))
    return results


class ScalingRow(BaseModel):
    task: str
    sparseness: SparsenessEstimate
    steps_to_50: Optional[int]

    @property
    def ratio(self) -> Optional[float]:
        if self.steps_to_50 is None:
            return None
        # censored trials count at the cap
        return self.steps_to_50 / self.sparseness.restricted_mean


def run_sparseness_scaling(
    config: RunConfig,
    *,
    tasks: Sequence[Task] = SCALING_TASKS,
    max_steps: int = 1_000_000,
    trials: int = 200,
    writer: Optional[ArtifactWriter] = None,
) -> List[ScalingRow]:
    rows = []
    for stage, task in enumerate(tasks):
        estimate = estimate_sparseness(task, max_steps, trials, config.master_seed)
        session = TrainingSession(
            task, config,
            stage=stage,
            writer=writer.scoped(f"task{stage}") if writer is not None else None,
        )
        curve = run_curriculum_experiment(task, config, session=session)
        rows.append(ScalingRow(task=task.text, sparseness=estimate, steps_to_50=steps_to_success_rate(curve, 0.5)))
    rows.sort(key=lambda r: r.sparseness.restricted_mean)
    for row in rows:
        logger.info(
            "%r: sparseness %.4g, steps to 50%% %s", row.task, row.sparseness.restricted_mean, row.steps_to_50
        )
    if writer is not None:
        writer.write_csv(
            "scaling.csv",
            ["task", "sparseness", "restricted_mean", "censored_fraction", "steps_to_50"],
            (
                [
                    r.task,
                    repr(r.sparseness.mean),
                    repr(r.sparseness.restricted_mean),
                    repr(r.sparseness.censored_fraction),
                    _blank(r.steps_to_50),
                ]
                for r in rows
            ),
        )
    return rows


def _blank(value: Optional[int]) -> str:
    return "" if value is None else str(value)
