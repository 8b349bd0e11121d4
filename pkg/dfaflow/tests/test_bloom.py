"""
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ..bloom import CountingBloom, PartitionedBloom, make_hash_indices


def test_hash_indices_are_deterministic_and_in_range():
    hash_indices = make_hash_indices(4, 1000)
    idx = hash_indices(b"flow")
    assert idx == hash_indices(b"flow")
    assert len(idx) == 4
    assert all(0 <= i < 1000 for i in idx)


def test_partitioned_bloom_membership():
    bloom = PartitionedBloom(4, 2 ** 10)
    assert b"a" not in bloom
    bloom.add(b"a")
    assert b"a" in bloom
    assert bloom.bits.sum() <= 4
    bloom.reset()
    assert b"a" not in bloom
    assert bloom.fill_ratio() == 0.0


def test_partitioned_bloom_rejects_empty_geometry():
    with pytest.raises(ValueError):
        PartitionedBloom(0, 16)


@settings(max_examples=100)
@given(st.lists(st.binary(min_size=1, max_size=17), max_size=300))
def test_bloom_has_no_false_negatives(keys):
    bloom = PartitionedBloom(4, 2 ** 8)
    for i, key in enumerate(keys):
        bloom.add(key)
        assert all(k in bloom for k in keys[: i + 1])


def test_counting_bloom_remove_and_rebuild():
    counting = CountingBloom(4, 2 ** 12)
    target = PartitionedBloom(4, 2 ** 12)
    counting.add(b"x")
    counting.add(b"x")
    counting.add(b"y")
    assert counting.remove(b"x")
    assert b"x" in counting
    assert counting.remove(b"x")
    assert b"y" in counting
    assert not CountingBloom(4, 2 ** 12).remove(b"z")
    counting.rebuild(target)
    assert b"y" in target
    assert np.array_equal(target.bits, counting.counts > 0)


def test_counting_bloom_rebuild_rejects_other_geometry():
    with pytest.raises(ValueError):
        CountingBloom(4, 16).rebuild(PartitionedBloom(2, 16))
