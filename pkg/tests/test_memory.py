import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from onlinevos.errors import DimensionError
from onlinevos.memory import AUGMENTED, FRAME, ORIGINAL, SampleMemory

FEAT = np.zeros((2, 1, 1))
LAB = np.zeros((16, 16))


def initial(n=20, **kw):
    return SampleMemory.init_from_initial_set([(FEAT, LAB)] * n, 0, **kw)


def test_initial_weights_two_to_one():
    mem = initial()
    w = mem.weights
    assert len(mem) == 20
    assert w[0] == pytest.approx(2 / 21, abs=1e-15)
    assert all(abs(x - 1 / 21) < 1e-15 for x in w[1:])
    assert mem[0].kind == ORIGINAL and mem[1].kind == AUGMENTED


def test_first_frame_raw_weight_continues_recursion():
    mem = initial(eta=0.1)
    mem.append(FEAT, LAB)
    assert mem[20].kind == FRAME
    group = math.fsum(mem.raw_weights[:20])
    assert group == pytest.approx(0.1, rel=1e-15)
    assert mem.raw_weights[20] == pytest.approx(0.1 / 0.9, rel=1e-15)


def test_capacity_and_eviction_of_smallest():
    mem = initial(capacity=22)
    mem.append(FEAT, LAB)
    mem.append(FEAT, LAB)
    evicted = mem.append(FEAT, LAB)
    # an augmented sample has the smallest raw weight; the oldest of them goes first
    assert evicted.kind == AUGMENTED and evicted.serial == 1
    assert len(mem) == 22


@given(ops=st.integers(1, 300), eta=st.floats(0.01, 0.9), cap=st.integers(20, 90))
def test_random_append_sequences(ops, eta, cap):
    mem = initial(capacity=cap, eta=eta)
    prev = None
    for _ in range(ops):
        before = mem.raw_weights
        evicted = mem.append(FEAT, LAB)
        if evicted is not None:
            assert evicted.raw_weight == min(before)
        newest = mem[len(mem) - 1]
        # compare within the current memory: a power-of-two rescale may have touched every sample
        kept = [s for s in mem if prev is not None and s.serial == prev.serial]
        if kept:
            assert newest.raw_weight / kept[0].raw_weight == pytest.approx(1 / (1 - eta), rel=1e-14)
        prev = newest
        assert len(mem) <= cap
        assert abs(math.fsum(mem.weights) - 1) <= 1e-12


def test_long_runs_stay_finite():
    mem = initial(eta=0.5, capacity=25)
    for _ in range(3000):
        mem.append(FEAT, LAB)
    assert all(np.isfinite(mem.raw_weights)) and abs(math.fsum(mem.weights) - 1) < 1e-12


def test_snapshot_is_immutable_view():
    mem = initial()
    snap = mem.snapshot()
    mem.append(FEAT, LAB)
    assert len(snap) == 20 and len(mem) == 21
    with pytest.raises(AttributeError):
        snap[0].weight = 1.0


def test_append_validation():
    mem = initial()
    with pytest.raises(DimensionError):
        mem.append(np.zeros((3, 1, 1)), LAB)
    with pytest.raises(DimensionError):
        mem.append(FEAT, np.zeros((8, 8)))
    with pytest.raises(ValueError):
        mem.append(FEAT, LAB + 2.0)


def test_constructor_validation():
    with pytest.raises(ValueError):
        SampleMemory(capacity=0)
    with pytest.raises(ValueError):
        SampleMemory(eta=1.0)
    with pytest.raises(ValueError):
        SampleMemory.init_from_initial_set([], 0)
    with pytest.raises(ValueError):
        SampleMemory.init_from_initial_set([(FEAT, LAB)] * 5, 0, capacity=4)
