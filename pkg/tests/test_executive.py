from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from lca.executive.demos import dump_demo, load_demo, parse_demo, record_demo, save_demo
from lca.executive.skills import (
    EmptyCurriculumError,
    ExecutiveConfig,
    SkillLibrary,
    SkillLibraryError,
    SkillManifest,
    imitate,
    infer_subgoal_events,
    infer_subgoals,
    load_library,
    schedule,
)
from lca.llm.decomposer import decompose
from lca.policy.checkpoint import save_params
from lca.policy.network import init_params
from lca.semantics.captions import ALL_CAPTIONS, Grasping, OnTop
from lca.world.env import reset, step
from lca.world.types import Action, Grasp, ObjectId, PairStack, SceneSnapshot, TripleStack


RED, GREEN, BLUE = ObjectId.RED, ObjectId.GREEN, ObjectId.BLUE
PAIR = PairStack(RED, BLUE)


@pytest.fixture(scope="module")
def untrained() -> SkillLibrary:
    return SkillLibrary(ALL_CAPTIONS, init_params(0))


@pytest.fixture(scope="module")
def trained(trained_pair) -> SkillLibrary:
    return SkillLibrary(trained_pair.curriculum.captions, trained_pair.params)


@pytest.mark.parametrize("task", [Grasp(RED), PAIR, TripleStack()], ids=lambda t: t.text)
def test_infer_subgoals_recovers_decomposition(task, untrained) -> None:
    expected = decompose(task)
    for seed in range(50):
        assert infer_subgoals(record_demo(task, seed), untrained) == expected


def test_subgoal_events_follow_frame_order(untrained) -> None:
    events = infer_subgoal_events(record_demo(TripleStack(), 3), untrained)
    frames = [t for t, _ in events]
    assert frames == sorted(frames)
    assert frames == [1, 2, 3, 4]


def test_infer_subgoals_rejects_empty_input(untrained) -> None:
    with pytest.raises(ValueError):
        infer_subgoals([], untrained)
    with pytest.raises(EmptyCurriculumError):
        infer_subgoals([SceneSnapshot()] * 3, untrained)


def test_library_checks_skills() -> None:
    with pytest.raises(SkillLibraryError):
        SkillLibrary([], init_params(0))
    library = SkillLibrary([Grasping(RED)], init_params(0))
    assert Grasping(RED) in library and OnTop(RED, BLUE) not in library
    with pytest.raises(SkillLibraryError):
        schedule("Stack all three objects", library)


def test_satisfied_subgoal_costs_no_steps() -> None:
    library = SkillLibrary([Grasping(RED)], init_params(0))
    state = reset(0)
    holding = step(state, Action(state.position(RED)))
    trace = schedule("Grasp the red object", library, initial_state=holding)
    assert trace.task_success
    assert not trace.aborted
    assert trace.total_steps == 0
    assert trace.skills[0].achieved and trace.skills[0].steps == 0
    assert trace.final_frame.grasping is RED


def test_schedule_is_bounded(untrained) -> None:
    config = ExecutiveConfig(skill_budget=3)
    for seed in range(5):
        trace = schedule("Stack all three objects", untrained, config, reset_seed=seed)
        assert trace.total_steps <= 4 * config.skill_budget
        if trace.aborted:
            assert not trace.task_success
            assert trace.skills[-1].steps == config.skill_budget
            assert not trace.skills[-1].achieved


def test_demo_file_round_trip(tmp_path) -> None:
    frames = record_demo(TripleStack(), 2)
    assert parse_demo(dump_demo(frames)) == frames
    path = save_demo(tmp_path / "demo.json", frames)
    assert load_demo(path) == frames


@pytest.mark.parametrize(
    "text",
    [
        "[]",
        "not json",
        '[{"grasping": "purple", "on_top": []}]',
        '[{"grasping": null, "on_top": [["red", "red"]]}]',
        '[{"grasping": null, "on_top": [["red"]]}]',
    ],
)
def test_malformed_demo_rejected(text: str) -> None:
    with pytest.raises(ValueError):
        parse_demo(text)


def test_load_library(tmp_path) -> None:
    params = init_params(4)
    save_params(params, tmp_path / "policy.bin")
    manifest = SkillManifest(captions=[c.text for c in decompose(PAIR)])
    (tmp_path / "skills.json").write_text(manifest.model_dump_json(), encoding="utf-8")
    library = load_library(tmp_path / "skills.json")
    assert library.captions == decompose(PAIR).captions
    np.testing.assert_array_equal(library.params.w1, params.w1)
    with pytest.raises(ValidationError):
        SkillManifest.model_validate_json('{"checkpoint": "policy.bin"}')


@pytest.mark.slow
def test_trained_skills_schedule_instruction(trained) -> None:
    wins = sum(
        schedule(PAIR.text, trained, reset_seed=seed).task_success for seed in range(1000, 1010)
    )
    assert wins >= 9


@pytest.mark.slow
def test_trained_skills_imitate_demonstration(trained) -> None:
    wins = 0
    for seed in range(2000, 2010):
        trace = imitate(record_demo(PAIR, seed), trained, reset_seed=seed + 1)
        wins += trace.task_success
    assert wins >= 9
