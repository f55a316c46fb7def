from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvqhl.nv import Control, InitialState, NvModel, NvWindowConfig, ObservableSpec
from nvqhl.world import (TruthSequence, WindowIndex, evolve_truth, extract_window,
                         generate_maze_field, generate_truth, maze_mask, measure)


def flood(mask, start):
    seen = np.zeros_like(mask)
    seen[start] = True
    todo = deque([start])
    while todo:
        r, c = todo.popleft()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < mask.shape[0] and 0 <= cc < mask.shape[1] and mask[rr, cc] and not seen[rr, cc]:
                seen[rr, cc] = True
                todo.append((rr, cc))
    return seen


def test_maze_deterministic_and_two_levels():
    a = generate_maze_field(60, 60, 50e-6, 5e-6, 7)
    b = generate_maze_field(60, 60, 50e-6, 5e-6, 7)
    assert np.array_equal(a, b)
    assert set(np.unique(a)) == {50e-6, 55e-6}


@given(st.integers(8, 40), st.integers(8, 40), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_maze_corridors_connected(H, W, seed):
    mask = maze_mask(H, W, np.random.default_rng(seed))
    assert mask.shape == (H, W) and mask.any()
    start = tuple(np.argwhere(mask)[0])
    assert np.array_equal(flood(mask, start), mask)


def test_maze_too_small():
    with pytest.raises(ValueError):
        maze_mask(6, 20, np.random.default_rng(0))


def test_evolve_truth_statistics():
    B = generate_maze_field(60, 60, 50e-6, 5e-6, 1)
    same, inc = evolve_truth(B, 0.0, np.random.default_rng(0))
    assert np.array_equal(same, B) and not inc.any()
    nxt, inc = evolve_truth(B, 50e-9, np.random.default_rng(0))
    assert abs(inc.std() - 50e-9) <= 0.1 * 50e-9
    assert np.allclose(nxt - B, inc)


def test_support_stable_under_drift():
    seq = generate_truth(60, 60, 16, 50e-6, 5e-6, 5e3, 50e-9, 3,
                         np.random.default_rng(3), np.random.default_rng(4))
    support = seq.frames[0] > 52.5e-6
    for f in seq.frames[1:]:
        assert np.array_equal(f > 52.5e-6, support)
    assert len(seq.increments) == 15 and seq.shape == (60, 60)
    assert seq.metadata()["frames"] == 16


def test_window_index_and_extract():
    B = np.arange(36, dtype=float).reshape(6, 6)
    h = WindowIndex.horizontal(2, 1, 3)
    v = WindowIndex.vertical(2, 0, 4)
    assert np.array_equal(extract_window(B, h), B[2, 1:4])
    assert np.array_equal(extract_window(B, v), B[0:4, 2])
    # the crossing site (2, 2) agrees
    assert extract_window(B, h)[1] == extract_window(B, v)[2]
    assert np.array_equal(extract_window(np.full((6, 6), 3.0), h), [3.0, 3.0, 3.0])
    with pytest.raises(ValueError):
        extract_window(B, WindowIndex.horizontal(0, 4, 3))
    with pytest.raises(ValueError):
        WindowIndex(((0, 0), (1, 1)))
    with pytest.raises(ValueError):
        WindowIndex(())


def _truth(value, frames=1):
    B = np.full((8, 8), value)
    return TruthSequence([B] * frames, 0.0, 0, 0.0)


def test_measure_extremes_and_concentration():
    model = NvModel(NvWindowConfig(M=1))
    w = WindowIndex.horizontal(0, 0, 1)
    rng = np.random.default_rng(0)
    at_ref = _truth(50e-6)
    u0 = Control(0.0, 0.0, ObservableSpec.single(1), 500)
    assert all(measure(at_ref, 0, w, u0, InitialState.PRODUCT_RAMSEY, model, rng) == 500 for _ in range(20))
    T = 4e-6
    dark = _truth(50e-6 + 0.5 / (28.025e9 * T))  # phase pi
    u = Control(T, 0.0, ObservableSpec.single(1), 500)
    assert all(measure(dark, 0, w, u, InitialState.PRODUCT_RAMSEY, model, rng) == 0 for _ in range(20))
    mid = _truth(50e-6 + 0.25 / (28.025e9 * T))  # phase pi/2, p = 1/2
    u1 = Control(T, 0.0, ObservableSpec.single(1), 1)
    zs = [measure(mid, 0, w, u1, InitialState.PRODUCT_RAMSEY, model, rng) for _ in range(10_000)]
    assert abs(np.mean(zs) - 0.5) <= 4 * np.sqrt(0.25 / 1e4)
