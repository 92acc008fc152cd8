"""POMDP checking by enumeration of memoryless observation-based policies.

Each policy fixes one action per observation class; the induced chain is a
dtmc and is checked with the dtmc kernels.  The result is exact within the
class of deterministic memoryless observation-based policies, which can be
worse than what belief-based (memoryful) strategies achieve.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ..errors import EngineError
from . import dtmc
from .mdp import Choices

DEFAULT_POLICY_CAP = 10 ** 6


def _action_keys(m, s):
    """Per choice of state s, a key (label, occurrence) distinguishing equal labels."""
    seen = {}
    keys = []
    for ch in m.choices[s]:
        k = seen.get(ch.action, 0)
        seen[ch.action] = k + 1
        keys.append((ch.action, k))
    return keys


def observation_actions(m):
    """Per observation class, the ordered action keys available there."""
    out = {}
    for s in range(m.n):
        o = m.observations[s]
        if o not in out:
            out[o] = _action_keys(m, s)
    return [out[o] for o in range(len(m.observation_values))]


def policy_space_size(m):
    return math.prod(len(a) for a in observation_actions(m))


def check_query(m, q, cap=DEFAULT_POLICY_CAP):
    if m.observations is None:
        raise EngineError("pomdp model has no observation classes")
    M, offsets = m.choice_matrix()
    C = Choices(M, offsets)
    how = q.opt or ("min" if q.comparison in (">", ">=") else "max")
    acts = observation_actions(m)
    size = math.prod(len(a) for a in acts)
    if size > cap:
        raise EngineError(
            f"policy space has {size} observation-based policies (cap {cap}); "
            f"reduce the number of actions or observable values")
    obs = np.asarray(m.observations)
    # row index of each (state, action key)
    row_of = []
    for s in range(m.n):
        keys = _action_keys(m, s)
        row_of.append({k: offsets[s] + i for i, k in enumerate(keys)})
    free = [o for o, a in enumerate(acts) if len(a) > 1]
    base = [0] * len(acts)
    best = None
    for combo in itertools.product(*(range(len(acts[o])) for o in free)):
        choice = list(base)
        for o, i in zip(free, combo):
            choice[o] = i
        rows = np.array([row_of[s][acts[obs[s]][choice[obs[s]]]] for s in range(m.n)])
        P = C.induced(rows)
        vec, _ = dtmc.check_query(m, q, P=P, rows=rows)
        v = vec[m.initial]
        better = best is None or (v > best[0] + 1e-12 if how == "max" else v < best[0] - 1e-12)
        if better:
            best = (v, vec, rows, tuple(choice))
    _, vec, rows, choice = best
    policy = {o: acts[o][i][0] for o, i in enumerate(choice)}
    return vec, rows, {"policies_enumerated": size, "observation_policy": policy}
