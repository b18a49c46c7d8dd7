from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from lca.policy.checkpoint import decode_params, encode_params, load_params, save_params
from lca.policy.network import (
    FEATURE_DIM,
    GRID,
    HEAD_DIM,
    N_CELLS,
    Batch,
    DimensionError,
    TrainConfig,
    act,
    action_cell,
    bc_update,
    cell_center,
    cell_logits,
    cell_of,
    clone_params,
    features,
    init_params,
    loss_and_grads,
    policy_logits,
    select_cell,
    softmax,
)
from lca.semantics.captions import Grasping, OnTop
from lca.semantics.oracle import embed_label
from lca.world.env import random_reachable_state, reset, step
from lca.world.types import Action, ObjectId


RED, BLUE = ObjectId.RED, ObjectId.BLUE


def _random_batch(rng: np.random.Generator, n: int, goal_dim: int) -> Batch:
    return Batch(
        features=rng.random((n, FEATURE_DIM)),
        goals=rng.standard_normal((n, goal_dim)),
        cells=rng.integers(N_CELLS, size=n),
    )


def _repeat(feats, goal: np.ndarray, cell: int, n: int = 8) -> Batch:
    return Batch(
        features=np.tile(np.asarray(feats, dtype=float), (n, 1)),
        goals=np.tile(goal, (n, 1)),
        cells=np.full(n, cell),
    )


def _numeric_grads(params, batch, eps: float = 1e-4):
    grads = []
    for array in params.arrays():
        grad = np.zeros_like(array)
        flat, gflat = array.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up, _ = loss_and_grads(params, batch)
            flat[i] = keep - eps
            down, _ = loss_and_grads(params, batch)
            flat[i] = keep
            gflat[i] = (up - down) / (2 * eps)
        grads.append(grad)
    return grads


def test_features_layout_and_range() -> None:
    rng = np.random.default_rng(0)
    for _ in range(200):
        feats = features(random_reachable_state(rng))
        assert len(feats) == FEATURE_DIM == 75
        assert all(0.0 <= v <= 1.0 for v in feats)
        assert sum(feats[9:13]) == 1.0


def test_coarse_code_peaks_at_object_cell() -> None:
    state = reset(3)
    codes = np.asarray(features(state)[15:]).reshape(3, 2, GRID)
    for (x, y), (cols, rows) in zip(state.positions, codes):
        col, row = int(x // 2), int(y // 2)
        assert int(np.argmax(cols)) == col and int(np.argmax(rows)) == row
        assert cols[col] == pytest.approx(1.0) and rows[row] == pytest.approx(1.0)


def test_cell_grid_round_trip() -> None:
    for cell in range(N_CELLS):
        assert cell_of(cell_center(cell).target) == cell
    assert cell_center(0).target == (1.0, 1.0)
    assert cell_center(99).target == (19.0, 19.0)
    with pytest.raises(ValueError):
        cell_center(100)


def test_action_cell_records_the_picked_object() -> None:
    state = reset(0)
    red = state.position(RED)
    target = (min(red[0] + 1.5, 19.9), red[1])
    after = step(state, Action(target))
    assert after.holding is RED
    assert action_cell(state, Action(target), after) == cell_of(red)
    # replaying the recorded cell reproduces the pick
    assert step(state, cell_center(cell_of(red))).holding is RED


def test_head_scores_rows_and_columns() -> None:
    params = init_params(0, goal_dim=32, hidden=8)
    assert params.w3.shape == (HEAD_DIM, 8) and params.b3.shape == (HEAD_DIM,)
    assert params.n_cells == N_CELLS
    head = np.arange(HEAD_DIM, dtype=float)
    logits = cell_logits(head)
    assert logits.shape == (N_CELLS,)
    for cell in (0, 9, 10, 42, 99):
        row, col = divmod(cell, GRID)
        assert logits[cell] == head[col] + head[GRID + row]
    assert cell_logits(np.zeros((4, HEAD_DIM))).shape == (4, N_CELLS)


def test_init_params_seeded() -> None:
    a, b, c = init_params(3), init_params(3), init_params(4)
    for x, y in zip(a.arrays(), b.arrays()):
        np.testing.assert_array_equal(x, y)
    assert not np.array_equal(a.w1, c.w1)
    logits = policy_logits(a, np.random.default_rng(0).random(FEATURE_DIM), embed_label(Grasping(RED).text))
    assert logits.shape == (N_CELLS,)
    assert np.all(np.isfinite(logits))


def test_softmax_normalised() -> None:
    rng = np.random.default_rng(1)
    probs = softmax(rng.standard_normal((64, N_CELLS)) * 30.0)
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-6)
    assert np.all(probs >= 0.0)


def test_act_checks_dimensions() -> None:
    params = init_params(0)
    feats = features(reset(0))
    with pytest.raises(DimensionError):
        act(params, feats, np.zeros(64))
    with pytest.raises(DimensionError):
        act(params, feats[:-1], np.zeros(128))


def test_greedy_is_deterministic_and_breaks_ties_low() -> None:
    params = init_params(0)
    feats, goal = features(reset(0)), embed_label(OnTop(RED, BLUE).text)
    assert act(params, feats, goal) == act(params, feats, goal)
    params.w3[:] = 0.0
    params.b3[:] = 0.0
    assert select_cell(params, feats, goal) == 0


def test_sampling_matches_softmax() -> None:
    params = init_params(2)
    feats, goal = features(reset(2)), embed_label(Grasping(RED).text)
    probs = softmax(policy_logits(params, feats, goal))
    rng = np.random.default_rng(7)
    draws = [select_cell(params, feats, goal, "sample", rng) for _ in range(10_000)]
    counts = np.bincount(draws, minlength=N_CELLS)
    _, p_value = stats.chisquare(counts, probs * len(draws))
    assert p_value > 0.01


def test_analytic_gradients_match_finite_differences() -> None:
    rng = np.random.default_rng(0)
    params = init_params(5, goal_dim=32, hidden=8)
    batch = _random_batch(rng, 5, 32)
    _, analytic = loss_and_grads(params, batch)
    numeric = _numeric_grads(params, batch)
    for a, n in zip(analytic, numeric):
        rel = np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
        assert rel < 1e-3


def test_memorisation() -> None:
    params = init_params(0)
    feats, goal = features(reset(0)), embed_label(Grasping(RED).text)
    batch = _repeat(feats, goal, 42)
    cfg = TrainConfig(learning_rate=0.25)
    for _ in range(200):
        params, _ = bc_update(params, batch, cfg)
    loss, _ = loss_and_grads(params, batch)
    assert loss < 0.01
    assert select_cell(params, feats, goal) == 42
    assert params.is_finite()


def test_loss_mostly_decreases_on_fixed_batch() -> None:
    rng = np.random.default_rng(3)
    params = init_params(1)
    batch = _random_batch(rng, 32, 128)
    cfg = TrainConfig(learning_rate=0.02)
    losses = []
    for _ in range(51):
        params, loss = bc_update(params, batch, cfg)
        losses.append(loss)
    decreasing = sum(b <= a for a, b in zip(losses, losses[1:]))
    assert decreasing >= 45


def test_goal_conditioning_separates_actions() -> None:
    params = init_params(0)
    feats = features(reset(0))
    goal_a, goal_b = embed_label(Grasping(RED).text), embed_label(OnTop(RED, BLUE).text)
    a, b = _repeat(feats, goal_a, 10, 4), _repeat(feats, goal_b, 77, 4)
    batch = Batch(
        features=np.vstack([a.features, b.features]),
        goals=np.vstack([a.goals, b.goals]),
        cells=np.concatenate([a.cells, b.cells]),
    )
    cfg = TrainConfig(learning_rate=0.1)
    for _ in range(300):
        params, _ = bc_update(params, batch, cfg)
    assert select_cell(params, feats, goal_a) == 10
    assert select_cell(params, feats, goal_b) == 77


def test_clone_is_independent() -> None:
    params = init_params(0)
    clone = clone_params(params)
    feats, goal = features(reset(1)), embed_label(Grasping(RED).text)
    assert act(clone, feats, goal) == act(params, feats, goal)
    snapshot = [a.copy() for a in clone.arrays()]
    updated, _ = bc_update(params, _repeat(feats, goal, 5), TrainConfig())
    params.w1 += 1.0
    for before, after in zip(snapshot, clone.arrays()):
        np.testing.assert_array_equal(before, after)
    assert not np.array_equal(updated.w3, clone.w3)


def test_bc_update_rejects_empty_batch() -> None:
    params = init_params(0)
    empty = Batch(features=np.zeros((0, FEATURE_DIM)), goals=np.zeros((0, 128)), cells=np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        bc_update(params, empty, TrainConfig())


def test_checkpoint_round_trip(tmp_path) -> None:
    params = init_params(9, goal_dim=64, hidden=16)
    path = save_params(params, tmp_path / "ckpt" / "policy.bin")
    loaded = load_params(path)
    assert loaded.seed == 9
    assert loaded.goal_dim == 64 and loaded.hidden == 16
    for x, y in zip(params.arrays(), loaded.arrays()):
        assert x.tobytes() == y.tobytes()
    assert encode_params(loaded) == path.read_bytes()


def test_checkpoint_rejects_corrupt_files() -> None:
    blob = encode_params(init_params(0, goal_dim=32, hidden=4))
    with pytest.raises(ValueError):
        decode_params(b"XXXXXXXX" + blob[8:])
    with pytest.raises(ValueError):
        decode_params(blob[:-8])
    with pytest.raises(ValueError):
        decode_params(blob + b"\x00" * 8)
