"""Deterministic RNG stream derivation.

Every random draw in an experiment comes from a child generator keyed by
(purpose, indices...) under one base seed, so any worker can recreate any
stream without coordination and no two purposes ever share one.

Purpose codes: 0 testing path (h), 1 weekly training batch (h, w),
2 daily training batch (h, w, t), 3 plan rounding (h, m, w),
4 deployment rounding (h, m, w, t).  Retrospective robust-parameter replays
deliberately reuse codes 3/4 so the incumbent candidate reproduces the
recorded week exactly.
"""

from __future__ import annotations

import numpy as np

TESTING_PATH = 0
WEEKLY_TRAINING = 1
DAILY_TRAINING = 2
PLAN_ROUNDING = 3
DEPLOY_ROUNDING = 4


def child_rng(base_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one (purpose, indices...) stream."""
    return np.random.default_rng(np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in key)))
