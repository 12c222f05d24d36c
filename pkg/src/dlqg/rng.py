"""Counter-based normal streams for the Monte Carlo engine.

Each path owns a Philox stream keyed by ``(seed, path)``; step ``k`` of a
path always consumes the same counters, so a path can be regenerated on its
own and results do not depend on how paths are chunked or ordered.
"""

import numpy as np

_MASK = (1 << 64) - 1

# Top counter word separating the stream of initial-state draws from the
# stream of Wiener increments.
STREAM_INCREMENTS = 0
STREAM_INITIAL = 1


def path_generator(seed, path, stream=STREAM_INCREMENTS):
    key = np.array([int(seed) & _MASK, int(path) & _MASK], dtype=np.uint64)
    counter = np.array([0, 0, 0, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def path_normals(seed, path, n_steps, n_w, stream=STREAM_INCREMENTS):
    """Standard normals of shape ``(n_steps, n_w)`` for one path."""
    return path_generator(seed, path, stream).standard_normal((n_steps, n_w))


def block_normals(seed, paths, n_steps, n_w, stream=STREAM_INCREMENTS):
    """Stack of :func:`path_normals` for the given path indices, shape ``(len(paths), n_steps, n_w)``."""
    out = np.empty((len(paths), n_steps, n_w))
    for i, p in enumerate(paths):
        out[i] = path_normals(seed, p, n_steps, n_w, stream)
    return out
