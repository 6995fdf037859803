"""Keyed, counter-based random streams.

Every random draw in a protocol run is addressed by a key path such as
``(master_seed, trial, client, "flip")`` plus a counter.  The draw is a pure
function of that address, so a client drawing its own noise one value at a
time and the vectorised harness drawing the noise of ten thousand clients in
one numpy call see bit-identical numbers.

The mixing function is the SplitMix64 finaliser; consecutive counters under a
fixed key reproduce the SplitMix64 sequence for that key.
"""
from __future__ import annotations

import zlib
from typing import Union

import numpy as np

Component = Union[int, str]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
# String tags live above every legal integer component.
_TAG_OFFSET = 1 << 32
_TWO_POW_53 = float(1 << 53)

PURPOSES = ("flip", "localSum-noise", "localP-noise", "shuffle")


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MUL1
        z = (z ^ (z >> np.uint64(27))) * _MUL2
    return z ^ (z >> np.uint64(31))


def _component_value(component: Component) -> int:
    if isinstance(component, str):
        return _TAG_OFFSET + zlib.crc32(component.encode("utf-8"))
    if isinstance(component, (bool, np.bool_)):
        raise TypeError("boolean stream components are ambiguous")
    value = int(component)
    if not 0 <= value < _TAG_OFFSET:
        raise ValueError(f"integer stream component out of range: {value}")
    return value


def derive_keys(parent, components) -> np.ndarray:
    """Derives child keys; broadcasts over parent keys and integer components."""
    parent = np.asarray(parent, dtype=np.uint64)
    if isinstance(components, (str, int, np.integer)):
        values = np.uint64(_component_value(components))
    else:
        values = np.asarray(components)
        if values.size and (values.min() < 0 or values.max() >= _TAG_OFFSET):
            raise ValueError("integer stream component out of range")
        values = values.astype(np.uint64)
    with np.errstate(over="ignore"):
        return _mix(parent ^ _mix(values + _GOLDEN))


def raw_bits(keys, counters) -> np.ndarray:
    """64-bit outputs at ``counters`` under ``keys`` (broadcast together)."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(keys + (counters + np.uint64(1)) * _GOLDEN)


def uniforms_at(keys, counters) -> np.ndarray:
    """Uniform doubles on the open interval (0, 1)."""
    bits = raw_bits(keys, counters) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) / _TWO_POW_53


class RngStream:
    """A substream addressed by a key path.

    ``RngStream(seed).child(trial).child(client).child("flip")`` names the
    flip draws of one client in one trial.  Streams with equal paths produce
    equal draws; a stream advances an internal counter as it is consumed, so
    one stream must not be shared between concurrent consumers.
    """

    __slots__ = ("key", "_counter")

    def __init__(self, seed: int = 0, *, key: int | None = None):
        if key is None:
            root = np.uint64(int(seed) & _MASK64)
            with np.errstate(over="ignore"):
                key = int(_mix(np.atleast_1d(root + _GOLDEN))[0])
        self.key = int(key)
        self._counter = 0

    def __repr__(self) -> str:
        return f"RngStream(key=0x{self.key:016x}, counter={self._counter})"

    def child(self, *components: Component) -> "RngStream":
        key = np.uint64(self.key)
        for component in components:
            key = derive_keys(key, component)
        return RngStream(key=int(key))

    def child_keys(self, components) -> np.ndarray:
        """Keys of ``self.child(c)`` for every integer ``c``, vectorised."""
        return derive_keys(np.uint64(self.key), np.asarray(components))

    def bits(self, size: int) -> np.ndarray:
        counters = np.arange(self._counter, self._counter + size, dtype=np.uint64)
        self._counter += size
        return raw_bits(np.uint64(self.key), counters)

    def uniform(self, size: int | None = None):
        """Open-interval uniforms; a float when ``size`` is None."""
        n = 1 if size is None else int(size)
        counters = np.arange(self._counter, self._counter + n, dtype=np.uint64)
        self._counter += n
        u = uniforms_at(np.uint64(self.key), counters)
        return float(u[0]) if size is None else u

    def permutation(self, n: int) -> np.ndarray:
        """A uniformly random permutation of ``range(n)``."""
        return np.argsort(self.bits(n), kind="stable")
