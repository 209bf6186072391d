"""Reproducible random streams on top of the Philox counter-based generator.

Everything stochastic in this package draws from Philox-4x64 substreams so
that results are bit-identical across platforms for a given numpy version.
A substream is addressed by (seed, domain, step):

* the 128-bit Philox key is ``(domain << 64) | seed``;
* the 256-bit counter starts at ``step << 128``.

Distinct (domain, step) pairs can never collide: a stream would have to
consume 2**128 blocks to run into its neighbour. Draw order within each
consumer is documented at the call site and is part of the output contract.
"""

from __future__ import annotations

import numpy as np

# Domain tags. Never renumber; output reproducibility depends on them.
DOMAIN_TRAJECTORY = 1
DOMAIN_PF_INIT = 2
DOMAIN_PF_STEP = 3
DOMAIN_SCENARIO = 4

_U64 = 2**64


def substream(seed: int, domain: int, step: int = 0) -> np.random.Generator:
    """Return the Generator for substream (seed, domain, step)."""
    if not 0 <= seed < _U64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if step < 0:
        raise ValueError(f"step must be nonnegative, got {step}")
    key = (int(domain) << 64) | int(seed)
    return np.random.Generator(np.random.Philox(counter=int(step) << 128, key=key))


def inverse_cdf_draw(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniforms in [0,1) to indices distributed as ``weights``.

    ``weights`` must be a probability vector; ties at cumulative boundaries
    resolve to the lower index, matching searchsorted 'right' semantics.
    """
    cdf = np.cumsum(weights)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(weights) - 1)
