"""Python access to the refsteer core: horizons, masks, blending, metrics and rollouts."""

import json

import numpy as np

from . import _core
from ._core import (
    RefsteerError,
    anchor_indices,
    blendable_range,
    make_horizon,
    mean_step_length,
    min_distance,
    nearest_anchor_slot,
    ood_offsets,
    smoothness_score,
    solve_blend_pieces,
    task_horizon,
    tasks,
)

__all__ = [
    "Policy",
    "RefsteerError",
    "anchor_indices",
    "blendable_range",
    "evaluate",
    "expert_demo",
    "gdh_pattern",
    "gdh_referring_pattern",
    "ldh_pattern",
    "make_horizon",
    "mean_step_length",
    "min_distance",
    "nearest_anchor_slot",
    "ood_offsets",
    "smoothness_score",
    "solve_blend_pieces",
    "task_horizon",
    "tasks",
]


def gdh_pattern(i, n1):
    return np.asarray(_core.gdh_pattern(i, n1), dtype=bool)


def gdh_referring_pattern(i, k, n1):
    return np.asarray(_core.gdh_referring_pattern(i, k, n1), dtype=bool)


def ldh_pattern(n2):
    return np.asarray(_core.ldh_pattern(n2), dtype=bool)


def expert_demo(task, seed):
    """Scripted demonstration: (actions (N x 8), observations (N x obs_dim))."""
    return _core.expert_demo(task, seed)


def evaluate(records, eps=0.05, lam=0.01):
    """Metric reports for rollout records given as dicts."""
    return json.loads(_core.evaluate_json([json.dumps(r) for r in records], eps, lam))


class Policy:
    """A trained checkpoint directory."""

    def __init__(self, directory):
        self._p = _core.Policy.load(str(directory))

    @property
    def task(self):
        return self._p.task

    @property
    def horizon(self):
        return self._p.horizon

    def rollout(self, seeds, mode="via", fixed=None, method="rev", jobs=1):
        out = self._p.rollout_json(list(seeds), mode, fixed, method, jobs)
        return [json.loads(s) for s in out]
