"""Per-run random streams.

Each run owns a xoshiro256+ stream whose 256-bit state is expanded from the
run seed by :class:`numpy.random.SeedSequence`.  The generator is written as
numba-inlinable code so the simulation kernels can interleave many runs
without calling back into numpy for every draw.
"""

import numpy as np
from numba import njit, uint64

_TWO_NEG_53 = 1.0 / 9007199254740992.0


def derive_seed(master_seed: int, run_index: int) -> int:
    """Seed of run ``run_index`` in a batch started from ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(run_index),))
    return int(ss.generate_state(1, np.uint64)[0])


def stream_state(seed: int) -> np.ndarray:
    """Expand ``seed`` into a xoshiro256+ state vector of four uint64 words."""
    state = np.random.SeedSequence(int(seed)).generate_state(4, np.uint64)
    if not state.any():  # pragma: no cover - probability 2**-256
        state[0] = 1
    return state


@njit(inline="always")
def next_double(state, k):
    """Advance lane ``k`` of ``state`` (shape (K, 4)) and return a double in [0, 1)."""
    s0 = state[k, 0]
    s1 = state[k, 1]
    s2 = state[k, 2]
    s3 = state[k, 3]
    result = s0 + s3
    t = s1 << uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = (s3 << uint64(45)) | (s3 >> uint64(19))
    state[k, 0] = s0
    state[k, 1] = s1
    state[k, 2] = s2
    state[k, 3] = s3
    return (result >> uint64(11)) * _TWO_NEG_53


@njit(nogil=True, cache=True)
def _fill_uniforms(state, out):
    for i in range(out.shape[0]):
        out[i] = next_double(state, 0)


def uniforms(seed: int, n: int) -> np.ndarray:
    """First ``n`` uniforms of the stream for ``seed``.

    Identical to the draws a single-run simulation with the same seed consumes,
    in the same order.
    """
    state = stream_state(seed).reshape(1, 4).copy()
    out = np.empty(int(n), dtype=np.float64)
    _fill_uniforms(state, out)
    return out
