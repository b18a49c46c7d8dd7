"""Test-time behaviors: run learned skills against an instruction, or against
the subgoals read off a demonstration."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from lca.executive.demos import DemoFrame
from lca.llm.decomposer import decompose_instruction, parse_instruction
from lca.llm.schemas import Curriculum
from lca.policy.checkpoint import load_params
from lca.policy.network import PolicyParams, act, features
from lca.semantics.captions import ALL_CAPTIONS, Caption, holds, parse_caption
from lca.semantics.oracle import DEFAULT_ORACLE, OracleConfig, embed_label, verdict
from lca.world.env import reset, snapshot, step, task_success
from lca.world.types import DEFAULT_WORLD, SceneSnapshot, WorldConfig, WorldState


logger = logging.getLogger(__name__)


class SkillLibraryError(ValueError):
    """A curriculum asks for a skill the library does not have."""


class EmptyCurriculumError(ValueError):
    """No library caption was ever confirmed in a demonstration."""


class ExecutiveConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    skill_budget: int = Field(10, gt=0, description="Steps allowed per subgoal")
    oracle: OracleConfig = DEFAULT_ORACLE


class SkillLibrary:
    """Captions a goal-conditioned policy has been trained to achieve."""

    def __init__(self, captions: Sequence[Caption], params: PolicyParams) -> None:
        unique = tuple(dict.fromkeys(captions))
        if not unique:
            raise SkillLibraryError("a skill library needs at least one caption")
        self.captions: Tuple[Caption, ...] = unique
        self.params = params

    def __contains__(self, caption: object) -> bool:
        return caption in self.captions

    def __len__(self) -> int:
        return len(self.captions)

    def require(self, curriculum: Curriculum) -> None:
        missing = [c.text for c in curriculum if c not in self]
        if missing:
            raise SkillLibraryError(f"no trained skill for {missing}; library has {[c.text for c in self.captions]}")


class SkillManifest(BaseModel):
    captions: List[str]
    checkpoint: str = "policy.bin"


def load_library(path: Union[str, Path]) -> SkillLibrary:
    """Read ``skills.json`` and the checkpoint it names (relative to the manifest)."""
    path = Path(path)
    manifest = SkillManifest.model_validate_json(path.read_bytes())
    params = load_params(path.parent / manifest.checkpoint)
    return SkillLibrary([parse_caption(c) for c in manifest.captions], params)


class SkillOutcome(BaseModel):
    subgoal: str
    steps: int
    achieved: bool


class ExecutionTrace(BaseModel):
    instruction: str
    skills: List[SkillOutcome] = Field(default_factory=list)
    task_success: bool = False
    aborted: bool = False
    final_frame: DemoFrame = Field(default_factory=DemoFrame)

    @property
    def total_steps(self) -> int:
        return sum(s.steps for s in self.skills)


def _run_skills(
    curriculum: Curriculum,
    library: SkillLibrary,
    state: WorldState,
    config: ExecutiveConfig,
    world: WorldConfig,
) -> Tuple[List[SkillOutcome], WorldState, bool]:
    outcomes = []
    for caption in curriculum:
        goal = embed_label(caption.text, config.oracle)
        steps = 0
        # confirm before acting, so an already satisfied subgoal costs nothing
        while not verdict(caption, snapshot(state), config.oracle):
            if steps >= config.skill_budget:
                outcomes.append(SkillOutcome(subgoal=caption.text, steps=steps, achieved=False))
                logger.info("skill %r exhausted its %d-step budget; aborting", caption.text, config.skill_budget)
                return outcomes, state, True
            action = act(library.params, features(state, world), goal, "greedy", config=world)
            state = step(state, action, world)
            steps += 1
        outcomes.append(SkillOutcome(subgoal=caption.text, steps=steps, achieved=True))
        logger.debug("skill %r confirmed after %d steps", caption.text, steps)
    return outcomes, state, False


def schedule(
    instruction: Union[str, Curriculum],
    library: SkillLibrary,
    config: ExecutiveConfig = ExecutiveConfig(),
    *,
    reset_seed: int = 0,
    initial_state: Optional[WorldState] = None,
    world: WorldConfig = DEFAULT_WORLD,
) -> ExecutionTrace:
    """Execute each subgoal's skill until the oracle confirms it, then move on."""
    if isinstance(instruction, Curriculum):
        curriculum, tasks, text = instruction, [], instruction.render()
    else:
        tasks = parse_instruction(instruction)
        curriculum, text = decompose_instruction(instruction), instruction
    library.require(curriculum)

    state = initial_state if initial_state is not None else reset(reset_seed, world)
    outcomes, state, aborted = _run_skills(curriculum, library, state, config, world)
    final = snapshot(state)
    if aborted:
        success = False
    elif tasks:
        success = task_success(state, tasks[-1])
    else:
        success = holds(curriculum.final, final)
    trace = ExecutionTrace(
        instruction=text,
        skills=outcomes,
        task_success=success,
        aborted=aborted,
        final_frame=DemoFrame.from_snapshot(final),
    )
    logger.info("schedule %r: success=%s steps=%d", text, success, trace.total_steps)
    return trace


def infer_subgoal_events(
    frames: Sequence[SceneSnapshot],
    library: SkillLibrary,
    config: OracleConfig = DEFAULT_ORACLE,
) -> List[Tuple[int, Caption]]:
    """Every (frame, caption) where a library caption turns from unconfirmed to confirmed."""
    if not frames:
        raise ValueError("a demonstration needs at least one frame")
    previous: Dict[Caption, bool] = {c: False for c in library.captions}
    events = []
    for t, frame in enumerate(frames):
        for caption in library.captions:
            now = verdict(caption, frame, config)
            if now and not previous[caption]:
                events.append((t, caption))
            previous[caption] = now
    return events


def infer_subgoals(
    frames: Sequence[SceneSnapshot],
    library: SkillLibrary,
    config: OracleConfig = DEFAULT_ORACLE,
) -> Curriculum:
    events = infer_subgoal_events(frames, library, config)
    if not events:
        raise EmptyCurriculumError(f"no library caption confirmed in any of {len(frames)} frames")
    return Curriculum.collapsed([caption for _, caption in events])


def imitate(
    frames: Sequence[SceneSnapshot],
    library: SkillLibrary,
    config: ExecutiveConfig = ExecutiveConfig(),
    *,
    reset_seed: int = 0,
    initial_state: Optional[WorldState] = None,
    world: WorldConfig = DEFAULT_WORLD,
) -> ExecutionTrace:
    """Replay a demonstration by scheduling the subgoals it shows.

    Success means every caption true in the demonstration's last frame also holds
    when execution ends.
    """
    curriculum = infer_subgoals(frames, library, config.oracle)
    logger.info("inferred subgoals %s from %d frames", curriculum.texts(), len(frames))
    trace = schedule(curriculum, library, config, reset_seed=reset_seed, initial_state=initial_state, world=world)
    if not trace.aborted:
        final = trace.final_frame.to_snapshot()
        wanted = [c for c in ALL_CAPTIONS if holds(c, frames[-1])]
        trace.task_success = all(holds(c, final) for c in wanted)
    return trace
