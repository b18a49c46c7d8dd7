from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from lca.buffers.episode_log import append_entries, entry_from_episode, read_entries, replay_log
from lca.buffers.harvest import harvest_episode, relabel_offline, sample_batch
from lca.buffers.records import (
    EmptyBufferError,
    EpisodeRecord,
    LifelongBuffer,
    TaskBuffer,
    TimestepRecord,
    Trajectory,
    progress_steps,
)
from lca.graph.rollout import run_episode
from lca.llm.decomposer import decompose
from lca.policy.network import FEATURE_DIM, init_params
from lca.semantics.captions import Grasping, OnTop, holds, parse_caption
from lca.semantics.oracle import detect_achieved, embed_label
from lca.world.env import free_spot, scripted_expert
from lca.world.types import Action, Grasp, ObjectId, PairStack, SceneSnapshot, TripleStack


RED, GREEN, BLUE = ObjectId.RED, ObjectId.GREEN, ObjectId.BLUE


def _expert(task):
    return lambda state, goal, rng: scripted_expert(task, state)[0]


def _idle(state, goal, rng):
    return Action(free_spot(state))


def _grasp_red_late(state, goal, rng):
    if state.step_count < 4:
        return Action(free_spot(state))
    return Action(state.position(RED))


def _episode(task, controller, seed: int = 0, cap: int = 20) -> EpisodeRecord:
    return run_episode(
        None,
        task,
        decompose(task),
        reset_seed=seed,
        rng=np.random.default_rng(seed),
        cap=cap,
        controller=controller,
    )


# distinct observations along a triple stack
PATH = (
    SceneSnapshot(),
    SceneSnapshot(grasping=RED),
    SceneSnapshot(on_top=frozenset({(RED, BLUE)})),
    SceneSnapshot(grasping=GREEN, on_top=frozenset({(RED, BLUE)})),
    SceneSnapshot(on_top=frozenset({(RED, BLUE), (GREEN, RED)})),
)


def _record(cell: int, label: str = "g", snapshot: SceneSnapshot = PATH[0]) -> TimestepRecord:
    return TimestepRecord(features=(0.0,) * FEATURE_DIM, snapshot=snapshot, action_cell=cell, goal_label=label)


def _hand_buffer() -> TaskBuffer:
    cells = iter(range(10))
    buffer = TaskBuffer()
    for length, label in zip((1, 2, 3, 4), ("a", "b", "c", "d")):
        records = tuple(_record(next(cells), label, PATH[k]) for k in range(length))
        buffer.add([Trajectory(records=records, label=label, final_snapshot=PATH[length])])
    return buffer


def test_expert_pair_episode_yields_three_trajectories() -> None:
    task = PairStack(RED, BLUE)
    ep = _episode(task, _expert(task))
    assert ep.external_reward == 1
    assert len(ep) == 2
    found = harvest_episode(ep, decompose(task))
    assert [(t.label, len(t)) for t in found] == [
        (Grasping(RED).text, 1),
        (task.text, 2),
        (OnTop(RED, BLUE).text, 2),
    ]


def test_reward_arm_alone_without_detection() -> None:
    task = PairStack(RED, BLUE)
    ep = _episode(task, _expert(task))
    found = harvest_episode(ep, decompose(task), detect_subgoals=False)
    assert [t.label for t in found] == [task.text, OnTop(RED, BLUE).text]


def test_idle_episode_yields_nothing() -> None:
    ep = _episode(PairStack(RED, BLUE), _idle, cap=5)
    assert ep.external_reward == 0
    assert len(ep) == 5
    assert harvest_episode(ep, decompose(PairStack(RED, BLUE))) == []


def test_late_grasp_yields_one_full_prefix() -> None:
    ep = _episode(PairStack(RED, BLUE), _grasp_red_late, cap=5)
    found = harvest_episode(ep, decompose(PairStack(RED, BLUE)))
    assert len(found) == 1
    assert found[0].label == Grasping(RED).text
    assert len(found[0]) == 5
    assert found[0].final_snapshot.grasping is RED
    # the four missed picks are no-ops
    assert found[0].training_steps == (4,)


def test_harvested_labels_hold_at_prefix_end() -> None:
    rng = np.random.default_rng(0)
    params = init_params(0)
    task = PairStack(BLUE, GREEN)
    curriculum = decompose(task)
    for seed in range(30):
        ep = run_episode(params, task, curriculum, reset_seed=seed, rng=rng, cap=20, epsilon=1.0)
        for traj in harvest_episode(ep, curriculum):
            caption = curriculum.final if traj.label == task.text else parse_caption(traj.label)
            assert holds(caption, traj.final_snapshot)
            assert traj.final_snapshot == ep.frames()[len(traj)]


def test_relabel_offline_empty_and_idempotent() -> None:
    assert len(relabel_offline(LifelongBuffer(), decompose(TripleStack()))) == 0

    lifelong = LifelongBuffer(_episode(PairStack(RED, BLUE), _expert(PairStack(RED, BLUE)), seed=s) for s in range(4))
    curriculum = decompose(TripleStack())
    first = relabel_offline(lifelong, curriculum)
    assert len(first) == 8
    assert set(first.labels()) == {Grasping(RED).text, OnTop(RED, BLUE).text}
    assert first.trajectories == relabel_offline(lifelong, curriculum).trajectories


def test_relabel_offline_ignores_unrelated_episodes() -> None:
    lifelong = LifelongBuffer(_episode(Grasp(GREEN), _expert(Grasp(GREEN)), seed=s) for s in range(4))
    assert len(relabel_offline(lifelong, decompose(PairStack(RED, BLUE)))) == 0


def test_lifelong_appends_never_rewrite_history() -> None:
    lifelong = LifelongBuffer()
    fingerprints = []
    for seed in range(5):
        lifelong.append(_episode(Grasp(RED), _expert(Grasp(RED)), seed=seed))
        fingerprints.append(lifelong.fingerprint())
        for k, earlier in enumerate(fingerprints):
            assert lifelong.fingerprint(upto=k + 1) == earlier
    assert len(set(fingerprints)) == 5
    assert len(lifelong) == 5


def test_sample_batch_rejects_empty_buffer() -> None:
    with pytest.raises(EmptyBufferError):
        sample_batch(TaskBuffer(), 4, np.random.default_rng(0))
    empty_traj = TaskBuffer([Trajectory(records=(), label="x", final_snapshot=SceneSnapshot())])
    with pytest.raises(EmptyBufferError):
        sample_batch(empty_traj, 4, np.random.default_rng(0))


def test_progress_steps_cut_loops() -> None:
    a, b, c, d = PATH[:4]
    assert progress_steps([a]) == ()
    assert progress_steps([a, b]) == (0,)
    assert progress_steps([a, a, a, b]) == (2,)
    assert progress_steps([a, b, a, c]) == (2,)
    assert progress_steps([a, b, c, b, d]) == (0, 3)
    assert progress_steps([a, b, c, a]) == ()
    # frame keys do not make two observations different
    assert progress_steps([SceneSnapshot(frame_key=1), SceneSnapshot(frame_key=2)]) == ()


def _regrasp_then_stack(state, goal, rng):
    if state.step_count in (0, 2):
        return Action(state.position(RED))
    if state.step_count == 1:
        return Action(free_spot(state))
    return Action(state.position(BLUE))


def test_dropped_grasp_is_not_cloned() -> None:
    task = PairStack(RED, BLUE)
    ep = _episode(task, _regrasp_then_stack, cap=6)
    assert ep.external_reward == 1
    assert [f.grasping for f in ep.frames()] == [None, RED, None, RED, None]
    full = [t for t in harvest_episode(ep, decompose(task)) if t.label == task.text][0]
    assert len(full) == 4
    assert full.training_steps == (2, 3)

    buffer = TaskBuffer([full])
    assert buffer.timestep_count == 4
    assert buffer.trainable_count == 2
    batch = sample_batch(buffer, 200, np.random.default_rng(0))
    assert set(batch.cells.tolist()) == {full.records[2].action_cell, full.records[3].action_cell}


def test_sample_batch_rejects_no_op_trajectories() -> None:
    idle = Trajectory(records=(_record(3), _record(4)), label="x", final_snapshot=PATH[0])
    assert idle.training_steps == ()
    with pytest.raises(EmptyBufferError):
        sample_batch(TaskBuffer([idle]), 4, np.random.default_rng(0))


def test_sample_batch_single_timestep() -> None:
    buffer = TaskBuffer([Trajectory(records=(_record(17, "only"),), label="only", final_snapshot=PATH[1])])
    batch = sample_batch(buffer, 8, np.random.default_rng(0))
    assert len(batch) == 8
    assert set(batch.cells.tolist()) == {17}
    np.testing.assert_array_equal(batch.goals, np.tile(embed_label("only"), (8, 1)))


def test_sample_batch_is_reproducible() -> None:
    buffer = _hand_buffer()
    a = sample_batch(buffer, 64, np.random.default_rng(3))
    b = sample_batch(buffer, 64, np.random.default_rng(3))
    np.testing.assert_array_equal(a.cells, b.cells)
    np.testing.assert_array_equal(a.goals, b.goals)


def test_sample_batch_is_uniform_over_progress_steps() -> None:
    buffer = _hand_buffer()
    batch = sample_batch(buffer, 20_000, np.random.default_rng(0))
    counts = np.bincount(batch.cells, minlength=10)
    _, p_value = stats.chisquare(counts)
    assert p_value > 0.01
    # each row carries its own trajectory's goal
    labels = {cell: label for label, cells in (("a", [0]), ("b", [1, 2]), ("c", [3, 4, 5]), ("d", [6, 7, 8, 9])) for cell in cells}
    for cell, goal in zip(batch.cells[:50], batch.goals[:50]):
        np.testing.assert_array_equal(goal, embed_label(labels[int(cell)]))


def test_episode_log_replays_exactly(tmp_path) -> None:
    params = init_params(1)
    task = PairStack(GREEN, RED)
    curriculum = decompose(task)
    episodes = [
        run_episode(params, task, curriculum, reset_seed=seed, rng=np.random.default_rng(seed), cap=20, epsilon=0.5)
        for seed in range(3)
    ]
    path = tmp_path / "episodes.jsonl"
    entries = [entry_from_episode(ep, detect_achieved(ep.frames(), curriculum)) for ep in episodes]
    assert append_entries(path, entries) == 3
    assert read_entries(path) == entries
    for original, replayed in zip(episodes, replay_log(path)):
        assert replayed == original
        assert [r.features for r in replayed.records] == [r.features for r in original.records]


def test_entry_needs_targets() -> None:
    ep = EpisodeRecord(records=(_record(0),), final_snapshot=SceneSnapshot(), task=Grasp(RED), external_reward=0, episode_seed=0)
    with pytest.raises(ValueError):
        entry_from_episode(ep)
