"""Deterministic named random streams derived from one master seed.

Every stochastic task derives its generator from (seed, tag, indices...),
so results are identical under any execution order or worker count.
"""

import numpy as np

MC_DRAWS = 1  # conditional resampling draws, keyed by hypothesis
CRT = 2  # randomization-test draws, keyed by hypothesis
BOOTSTRAP = 3  # bootstrap replicates, keyed by replicate
SCENARIO = 4  # scenario generation, keyed by replicate
FOLDS = 5  # cross-validation fold assignment
CALIBRATE = 6  # signal-strength calibration probes


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream named by ``key`` under ``seed``."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    )
