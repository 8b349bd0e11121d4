"""Partitioned bloom filters suppressing repeated new-flow digests.

The data plane holds a PartitionedBloom: p partitions of m bits, one
MurmurHash3 seed per partition. The control plane mirrors it with a
CountingBloom of identical geometry, so a removed flow can be taken out again
and the data-plane bits rebuilt from the counters.

"""
import mmh3
import numpy as np

DEFAULT_PARTITIONS = 4
DEFAULT_PARTITION_BITS = 2 ** 16


def make_hash_indices(num_partitions, num_bits):
    """Return a function mapping a bytes key to one bit index per partition."""
    seeds = list(range(1, num_partitions + 1))

    def _hash_indices(key):
        return [mmh3.hash(key, seed, signed=False) % num_bits for seed in seeds]

    return _hash_indices


class PartitionedBloom:
    """Membership filter with one hash function per partition.

    Parameters
    ----------
    num_partitions : int, optional
        Default is 4

    num_bits : int, optional
        Bits per partition. Default is 2^16.

    """

    def __init__(
        self, num_partitions=DEFAULT_PARTITIONS, num_bits=DEFAULT_PARTITION_BITS
    ):
        if num_partitions < 1 or num_bits < 1:
            msg = "Bloom geometry must be positive, got {0} partitions of {1} bits"
            raise ValueError(msg.format(num_partitions, num_bits))
        self.num_partitions = num_partitions
        self.num_bits = num_bits
        self.bits = np.zeros((num_partitions, num_bits), dtype=bool)
        self._rows = np.arange(num_partitions)
        self._hash_indices = make_hash_indices(num_partitions, num_bits)

    def indices(self, key):
        return self._hash_indices(bytes(key))

    def add(self, key):
        self.bits[self._rows, self.indices(key)] = True

    def __contains__(self, key):
        return bool(np.all(self.bits[self._rows, self.indices(key)]))

    def reset(self):
        self.bits[:] = False

    def fill_ratio(self):
        return float(self.bits.mean())


class CountingBloom(PartitionedBloom):
    """Control-plane twin of PartitionedBloom supporting removal."""

    def __init__(
        self, num_partitions=DEFAULT_PARTITIONS, num_bits=DEFAULT_PARTITION_BITS
    ):
        super().__init__(num_partitions, num_bits)
        self.counts = np.zeros((num_partitions, num_bits), dtype=np.uint32)

    def add(self, key):
        idx = self.indices(key)
        self.counts[self._rows, idx] += 1
        self.bits[self._rows, idx] = True

    def remove(self, key):
        """Decrement the counters of key. Keys never added are left alone."""
        if key not in self:
            return False
        idx = self.indices(key)
        self.counts[self._rows, idx] -= 1
        self.bits[self._rows, idx] = self.counts[self._rows, idx] > 0
        return True

    def reset(self):
        super().reset()
        self.counts[:] = 0

    def rebuild(self, target):
        """Overwrite the bits of a data-plane PartitionedBloom from the counters."""
        if (target.num_partitions, target.num_bits) != self.counts.shape:
            raise ValueError("Bloom geometries differ, cannot rebuild")
        target.bits[:] = self.counts > 0
