"""Collect-and-infer training round as a LangGraph state machine.

One round: ``collect`` runs n_actors episodes from a frozen clone of the
policy, ``infer`` stores them and harvests goal-labeled prefixes, ``train``
takes the behavioral-cloning steps and ``evaluate`` measures greedy success
on fresh resets that never enter a buffer.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from langgraph.graph import END, StateGraph
from pydantic import BaseModel, ConfigDict, Field, model_validator

from lca.buffers.harvest import harvest_episode, sample_batch
from lca.buffers.records import EpisodeRecord, LifelongBuffer, TaskBuffer
from lca.graph.rollout import COLLECT_STREAM, EVAL_STREAM, TRAIN_STREAM, Controller, episode_streams, run_episode
from lca.llm.schemas import Curriculum
from lca.policy.network import PolicyParams, TrainConfig, bc_update, clone_params
from lca.semantics.oracle import DEFAULT_ORACLE, OracleConfig
from lca.world.types import Task, TripleStack


logger = logging.getLogger(__name__)

EpisodeSink = Callable[[EpisodeRecord], None]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_actors: int = Field(32, gt=0)
    episode_cap: Optional[int] = Field(None, gt=0, description="Defaults to 40 for the triple stack, 20 otherwise")
    rounds: int = Field(200, gt=0, description="Round budget per task")
    triple_rounds: Optional[int] = Field(None, gt=0, description="Round budget for the triple stack; defaults to rounds")
    eval_episodes: int = Field(50, gt=0)
    eval_greedy: bool = True
    epsilon: float = Field(0.1, ge=0.0, le=1.0)
    explore: Literal["grid", "uniform"] = "grid"
    master_seed: int = 0
    oracle: OracleConfig = DEFAULT_ORACLE
    train: TrainConfig = Field(default_factory=TrainConfig)
    curriculum_source: Literal["rule", "external"] = "rule"
    use_subgoals: bool = True
    workers: int = Field(1, gt=0, description="Collection threads")
    checkpoint_every: int = Field(0, ge=0, description="Rounds between checkpoints; 0 disables")
    converge_threshold: float = Field(0.95, gt=0.0, le=1.0)
    converge_rounds: int = Field(3, gt=0)

    def cap_for(self, task: Task) -> int:
        if self.episode_cap is not None:
            return self.episode_cap
        return 40 if isinstance(task, TripleStack) else 20

    def rounds_for(self, task: Task) -> int:
        if isinstance(task, TripleStack) and self.triple_rounds is not None:
            return self.triple_rounds
        return self.rounds


class RoundMetrics(BaseModel):
    round: int
    cum_steps: int
    cum_episodes: int
    eval_success: float
    buffer_size: int
    bc_loss: Optional[float] = None

    def csv_row(self) -> List[str]:
        loss = "" if self.bc_loss is None else repr(self.bc_loss)
        return [str(self.round), str(self.cum_steps), str(self.cum_episodes), repr(self.eval_success), str(self.buffer_size), loss]


METRICS_HEADER = ["round", "cum_steps", "cum_episodes", "eval_success", "buffer_size", "bc_loss"]


class LearningCurve(BaseModel):
    task: str
    rounds: List[RoundMetrics] = Field(default_factory=list)
    converged: bool = False

    @model_validator(mode="after")
    def _contiguous(self) -> "LearningCurve":
        for i, m in enumerate(self.rounds):
            if m.round != i:
                raise ValueError(f"round indices must run 0..n-1, found {m.round} at position {i}")
        return self

    @property
    def total_steps(self) -> int:
        return self.rounds[-1].cum_steps if self.rounds else 0


@dataclass
class Buffers:
    lifelong: LifelongBuffer = field(default_factory=LifelongBuffer)
    task: TaskBuffer = field(default_factory=TaskBuffer)


class RoundState(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    round_index: int
    params: Any
    episodes: List[Any] = Field(default_factory=list)
    steps: int = 0
    new_trajectories: int = 0
    bc_loss: Optional[float] = None
    eval_success: float = 0.0


def conditioning_curriculum(curriculum: Curriculum, use_subgoals: bool) -> Curriculum:
    """Goals the actors condition on; without subgoals only the final caption is used."""
    return curriculum if use_subgoals else Curriculum((curriculum.final,))


def _map(fn, items, workers: int) -> list:
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))  # map keeps submission order


def build_round_graph(
    task: Task,
    curriculum: Curriculum,
    buffers: Buffers,
    config: RunConfig,
    *,
    stage: int = 0,
    controller: Optional[Controller] = None,
    sink: Optional[EpisodeSink] = None,
) -> Any:
    goals = conditioning_curriculum(curriculum, config.use_subgoals)
    cap = config.cap_for(task)

    def seeds(stream: int, round_index: int, index: int) -> Tuple[int, np.random.Generator]:
        return episode_streams(config.master_seed, stage, stream, round_index, index)

    graph = StateGraph(RoundState)

    def node_collect(state: RoundState) -> Dict[str, Any]:
        frozen = clone_params(state.params)

        def actor(index: int) -> EpisodeRecord:
            reset_seed, rng = seeds(COLLECT_STREAM, state.round_index, index)
            return run_episode(
                frozen, task, goals,
                reset_seed=reset_seed, rng=rng, cap=cap, epsilon=config.epsilon, explore=config.explore,
                mode="greedy", oracle=config.oracle, controller=controller,
            )

        episodes = _map(actor, range(config.n_actors), config.workers)
        steps = sum(len(ep) for ep in episodes)
        logger.debug(
            "round %d collected %d episodes, %d steps, %d rewarded",
            state.round_index, len(episodes), steps, sum(ep.external_reward for ep in episodes),
        )
        return {"episodes": episodes, "steps": steps}

    def node_infer(state: RoundState) -> Dict[str, Any]:
        added = 0
        for ep in state.episodes:
            buffers.lifelong.append(ep)
            harvested = harvest_episode(ep, goals, config.oracle, detect_subgoals=config.use_subgoals)
            buffers.task.add(harvested)
            added += len(harvested)
            if sink is not None:
                sink(ep)
        return {"new_trajectories": added}

    def node_train(state: RoundState) -> Dict[str, Any]:
        if buffers.task.trainable_count == 0:
            logger.debug("round %d: no progress steps buffered, no behavioral cloning", state.round_index)
            return {"bc_loss": None}
        _, rng = seeds(TRAIN_STREAM, state.round_index, 0)
        params: PolicyParams = state.params
        losses = []
        for _ in range(config.train.gradient_steps_per_round):
            batch = sample_batch(buffers.task, config.train.batch_size, rng, config.oracle)
            params, loss = bc_update(params, batch, config.train)
            losses.append(loss)
        return {"params": params, "bc_loss": float(np.mean(losses))}

    def node_evaluate(state: RoundState) -> Dict[str, Any]:
        mode = "greedy" if config.eval_greedy else "sample"

        def trial(index: int) -> int:
            reset_seed, rng = seeds(EVAL_STREAM, state.round_index, index)
            ep = run_episode(
                state.params, task, goals,
                reset_seed=reset_seed, rng=rng, cap=cap, epsilon=0.0, mode=mode, oracle=config.oracle,
            )
            return ep.external_reward

        rewards = _map(trial, range(config.eval_episodes), config.workers)
        return {"eval_success": sum(rewards) / len(rewards)}

    graph.add_node("collect", node_collect)
    graph.add_node("infer", node_infer)
    graph.add_node("train", node_train)
    graph.add_node("evaluate", node_evaluate)

    graph.set_entry_point("collect")
    graph.add_edge("collect", "infer")
    graph.add_edge("infer", "train")
    graph.add_edge("train", "evaluate")
    graph.add_edge("evaluate", END)

    return graph.compile()


def _field(out: Any, name: str) -> Any:
    if isinstance(out, dict):
        return out.get(name)
    return getattr(out, name, None)


def run_round(
    params: PolicyParams,
    task: Task,
    curriculum: Curriculum,
    buffers: Buffers,
    config: RunConfig,
    round_index: int,
    *,
    previous: Optional[RoundMetrics] = None,
    stage: int = 0,
    controller: Optional[Controller] = None,
    sink: Optional[EpisodeSink] = None,
) -> Tuple[PolicyParams, RoundMetrics]:
    graph = build_round_graph(task, curriculum, buffers, config, stage=stage, controller=controller, sink=sink)
    out = graph.invoke(RoundState(round_index=round_index, params=params))

    new_params = _field(out, "params")
    metrics = RoundMetrics(
        round=round_index,
        cum_steps=(previous.cum_steps if previous else 0) + int(_field(out, "steps") or 0),
        cum_episodes=(previous.cum_episodes if previous else 0) + config.n_actors,
        eval_success=float(_field(out, "eval_success") or 0.0),
        buffer_size=len(buffers.task),
        bc_loss=_field(out, "bc_loss"),
    )
    logger.info(
        "round %d: steps=%d success=%.2f buffer=%d loss=%s",
        metrics.round, metrics.cum_steps, metrics.eval_success, metrics.buffer_size,
        "-" if metrics.bc_loss is None else f"{metrics.bc_loss:.4f}",
    )
    return new_params, metrics
