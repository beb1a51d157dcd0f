"""Counter-based random streams keyed by ``(seed, chain_id, step)``.

Each step gets its own Philox generator whose key comes from
``SeedSequence([seed, chain_id])`` and whose counter starts at
``[0, step, 0, 0]``. Streams for different steps are disjoint and any step
can be replayed on its own.
"""

import numpy as np

from .errors import InvalidInputError

U64 = 2**64


class ChainRNG:
    def __init__(self, seed, chain_id=0):
        if int(seed) != seed or not 0 <= seed < U64:
            raise InvalidInputError(f"seed must be an unsigned 64-bit integer, got {seed}")
        if int(chain_id) != chain_id or chain_id < 0:
            raise InvalidInputError("chain_id must be a non-negative integer")
        self.seed = int(seed)
        self.chain_id = int(chain_id)
        self._key = np.random.SeedSequence([self.seed, self.chain_id]).generate_state(2, dtype=np.uint64)

    def step(self, index):
        """Generator for step ``index``; draws are consumed momenta first, then uniforms."""
        if index < 0 or index >= U64:
            raise InvalidInputError("step index out of range")
        counter = np.array([0, int(index), 0, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(counter=counter, key=self._key))
