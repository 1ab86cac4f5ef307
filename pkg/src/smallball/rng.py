"""Deterministic, splittable random streams.

Every stochastic object in the package (a simulated path, a Monte Carlo
replica, a coupling coin sequence) owns a private stream derived from a
master seed and an index path:

    stream(master_seed, i, j, ...) = Philox(SeedSequence(master_seed,
                                                         spawn_key=(i, j, ...)))

``SeedSequence`` spawning is numpy's documented recipe for independent
parallel streams and Philox is counter based, so replica ``i`` of a run
produces the same bits no matter how work is sharded across workers or
batches.  That property is what makes the estimator's results byte-identical
across worker counts.

Fair coins are extracted from the raw 64-bit Philox output, one bit per
coin, little-endian within each word.  ``coin_bits`` and ``coin_bit_matrix``
share that extraction, so a single simulated path and row ``i`` of a batched
Monte Carlo run see identical coins for identical seeds.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "seed_sequence",
    "generator",
    "coin_bits",
    "coin_bit_matrix",
    "uniform_ints",
    "uniform_int_matrix",
]


def seed_sequence(seed, *path: int) -> np.random.SeedSequence:
    """SeedSequence for `seed`, descended through `path` via spawn keys."""
    if isinstance(seed, np.random.SeedSequence):
        if not path:
            return seed
        return np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(path)
        )
    if path:
        return np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    return np.random.SeedSequence(entropy=seed)


def generator(seed, *path: int) -> np.random.Generator:
    """Philox generator on the stream addressed by (seed, *path)."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *path)))


def _raw_words(n_bits: int) -> int:
    return (n_bits + 63) // 64


def _bits_from_words(words: np.ndarray, n_bits: int) -> np.ndarray:
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")
    return bits[:n_bits]


def coin_bits(seed, n: int) -> np.ndarray:
    """n fair coin bits (uint8 0/1) from the stream owned by `seed`."""
    if n == 0:
        return np.zeros(0, dtype=np.uint8)
    bitgen = np.random.Philox(seed_sequence(seed))
    words = bitgen.random_raw(_raw_words(n))
    return _bits_from_words(np.asarray(words, dtype=np.uint64), n)


def coin_bit_matrix(master_seed, first_replica: int, count: int, n: int) -> np.ndarray:
    """Coin bits for replicas [first, first+count), shape (count, n).

    Row i equals coin_bits(seed_sequence(master_seed, first_replica + i), n).
    """
    words = _raw_words(max(n, 1))
    buf = np.empty((count, words), dtype=np.uint64)
    if isinstance(master_seed, np.random.SeedSequence):
        entropy, base_key = master_seed.entropy, tuple(master_seed.spawn_key)
    else:
        entropy, base_key = master_seed, ()
    for i in range(count):
        ss = np.random.SeedSequence(
            entropy=entropy, spawn_key=base_key + (first_replica + i,)
        )
        buf[i] = np.random.Philox(ss).random_raw(words)
    bits = np.unpackbits(buf.view(np.uint8), axis=1, bitorder="little")
    return bits[:, :n]


def uniform_ints(seed, n: int, high: int) -> np.ndarray:
    """n draws uniform on {0, ..., high-1} from the stream owned by `seed`."""
    return generator(seed).integers(0, high, size=n, dtype=np.int64)


def uniform_int_matrix(
    master_seed, first_replica: int, count: int, n: int, high: int
) -> np.ndarray:
    """Per-replica uniform integer draws, shape (count, n).

    Row i equals uniform_ints(seed_sequence(master_seed, first_replica + i)).
    """
    out = np.empty((count, n), dtype=np.int64)
    if isinstance(master_seed, np.random.SeedSequence):
        entropy, base_key = master_seed.entropy, tuple(master_seed.spawn_key)
    else:
        entropy, base_key = master_seed, ()
    for i in range(count):
        ss = np.random.SeedSequence(
            entropy=entropy, spawn_key=base_key + (first_replica + i,)
        )
        gen = np.random.Generator(np.random.Philox(ss))
        out[i] = gen.integers(0, high, size=n, dtype=np.int64)
    return out
